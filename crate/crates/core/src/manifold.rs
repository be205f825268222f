//! The pseudo-hyperboloid `Q_β^{s,t}`.
//!
//! Points live in the ambient space `R^{s,t+1}`: the first `t + 1` coordinates
//! form the time block, the remaining `s` the space block. The scalar product is
//!
//! ```text
//! <x, y>_t = -Σ_{i<=t} x_i y_i + Σ_{j>t} x_j y_j
//! ```
//!
//! and the manifold is the level set `<x, x>_t = β` with `β < 0`. Its reported
//! dimension is `s + t`; the ambient dimension is `s + t + 1`.

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{GeomError, GeomResult};

/// Membership tolerance, scaled by `max(1, ‖x‖²)` for large coordinates.
pub const TOL_MANIFOLD: f64 = 1e-9;
/// Tangency tolerance, scaled like [`TOL_MANIFOLD`].
pub const TOL_TANGENT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Signature {
    pub s: usize,
    pub t: usize,
    pub beta: f64,
}

impl Signature {
    pub fn new(s: usize, t: usize, beta: f64) -> GeomResult<Self> {
        if s + t == 0 {
            return Err(GeomError::InvalidSignature { s, t });
        }
        if !(beta < 0.0) || !beta.is_finite() {
            return Err(GeomError::InvalidCurvature(beta));
        }
        Ok(Signature { s, t, beta })
    }

    /// Number of time coordinates, `t + 1`.
    pub fn time_dims(&self) -> usize {
        self.t + 1
    }

    pub fn ambient_dim(&self) -> usize {
        self.s + self.t + 1
    }

    /// Intrinsic dimension `s + t`.
    pub fn dim(&self) -> usize {
        self.s + self.t
    }

    /// `√|β|`, the radius of the spherical factor.
    pub fn radius(&self) -> f64 {
        (-self.beta).sqrt()
    }

    pub fn with_beta(&self, beta: f64) -> GeomResult<Self> {
        Signature::new(self.s, self.t, beta)
    }

    /// The reference point `o = (√|β|, 0, …, 0)`.
    pub fn south_pole(&self) -> PseudoPoint {
        let mut coords = vec![0.0; self.ambient_dim()];
        coords[0] = self.radius();
        PseudoPoint { coords, sig: *self }
    }

    pub fn same_manifold(&self, other: &Signature) -> bool {
        self.s == other.s && self.t == other.t && self.beta == other.beta
    }

    fn check_len(&self, len: usize) -> GeomResult<()> {
        if len != self.ambient_dim() {
            return Err(GeomError::DimensionMismatch {
                expected: self.ambient_dim(),
                got: len,
            });
        }
        Ok(())
    }
}

/// A point on `Q_β^{s,t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoPoint {
    coords: Vec<f64>,
    sig: Signature,
}

impl PseudoPoint {
    /// Validates length, a nonzero time block and membership.
    pub fn new(coords: Vec<f64>, sig: Signature) -> GeomResult<Self> {
        sig.check_len(coords.len())?;
        if coords[..sig.time_dims()].iter().all(|&c| c == 0.0) {
            return Err(GeomError::DegenerateTimeBlock);
        }
        let residual = (inner(&coords, &coords, sig.time_dims()) - sig.beta).abs();
        if residual > TOL_MANIFOLD * euclid_sq(&coords).max(1.0) {
            return Err(GeomError::NotOnManifold { residual });
        }
        Ok(PseudoPoint { coords, sig })
    }

    /// Wraps coordinates produced by a closed-form map that lands on the manifold.
    pub(crate) fn from_parts(coords: Vec<f64>, sig: Signature) -> Self {
        debug_assert_eq!(coords.len(), sig.ambient_dim());
        PseudoPoint { coords, sig }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn signature(&self) -> Signature {
        self.sig
    }

    pub fn time_block(&self) -> &[f64] {
        &self.coords[..self.sig.time_dims()]
    }

    pub fn space_block(&self) -> &[f64] {
        &self.coords[self.sig.time_dims()..]
    }

    /// `|<x,x>_t - β|`.
    pub fn membership_residual(&self) -> f64 {
        (inner(&self.coords, &self.coords, self.sig.time_dims()) - self.sig.beta).abs()
    }
}

/// A tangent vector together with its base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVec {
    coords: Vec<f64>,
    base: PseudoPoint,
}

impl TangentVec {
    /// Validates length and tangency `<base, ξ>_t = 0`.
    pub fn new(coords: Vec<f64>, base: PseudoPoint) -> GeomResult<Self> {
        base.sig.check_len(coords.len())?;
        let residual = inner(&base.coords, &coords, base.sig.time_dims()).abs();
        let scale = (euclid_sq(&base.coords) * euclid_sq(&coords)).sqrt().max(1.0);
        if residual > TOL_TANGENT * scale {
            return Err(GeomError::NotTangent { residual });
        }
        Ok(TangentVec { coords, base })
    }

    pub(crate) fn from_parts(coords: Vec<f64>, base: PseudoPoint) -> Self {
        TangentVec { coords, base }
    }

    pub fn zero(base: PseudoPoint) -> Self {
        let n = base.coords.len();
        TangentVec {
            coords: vec![0.0; n],
            base,
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn base(&self) -> &PseudoPoint {
        &self.base
    }

    /// `<ξ, ξ>_t`.
    pub fn sq_norm(&self) -> f64 {
        inner(&self.coords, &self.coords, self.base.sig.time_dims())
    }

    /// `|<base, ξ>_t|`.
    pub fn tangency_residual(&self) -> f64 {
        inner(&self.base.coords, &self.coords, self.base.sig.time_dims()).abs()
    }
}

pub(crate) fn euclid_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Generic scalar product with `time_dims` negative-sign coordinates.
#[inline]
pub fn inner<T: Real>(x: &[T], y: &[T], time_dims: usize) -> T {
    debug_assert_eq!(x.len(), y.len());
    let mut time = T::zero();
    for i in 0..time_dims {
        time += x[i] * y[i];
    }
    let mut space = T::zero();
    for j in time_dims..x.len() {
        space += x[j] * y[j];
    }
    space - time
}

/// Compensated evaluation of `<x, y>_t` on plain values (error-free products
/// via fused multiply-add, error-free sums).
pub fn inner_f64_compensated(x: &[f64], y: &[f64], time_dims: usize) -> f64 {
    compensated(x.iter().copied().zip(y.iter().copied()), time_dims)
}

fn compensated(pairs: impl Iterator<Item = (f64, f64)>, time_dims: usize) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for (i, (a, b)) in pairs.enumerate() {
        let a = if i < time_dims { -a } else { a };
        let p = a * b;
        let pe = a.mul_add(b, -p);
        let t = s + p;
        let z = t - s;
        let se = (s - (t - z)) + (p - z);
        s = t;
        c += pe + se;
    }
    s + c
}

/// [`inner`] whose value is corrected to the compensated result; derivatives
/// are those of the plain expression.
#[inline]
pub fn inner_accurate<T: Real>(x: &[T], y: &[T], time_dims: usize) -> T {
    let plain = inner(x, y, time_dims);
    let exact = compensated(x.iter().zip(y).map(|(a, b)| (a.value(), b.value())), time_dims);
    let corr = exact - plain.value();
    if corr == 0.0 {
        plain
    } else {
        plain + corr
    }
}

/// Euclidean double projection `ψ⁻¹∘ψ` onto the level set of `beta`:
/// the time block is rescaled to norm `√(|β| + ‖s‖²)`, the space block kept.
/// Returns `None` for a zero time block.
pub fn project_point<T: Real>(x: &[T], time_dims: usize, beta: T) -> Option<Vec<T>> {
    let (tb, sb) = x.split_at(time_dims);
    let t_sq = crate::autodiff::dot(tb, tb);
    if t_sq.value() == 0.0 || !t_sq.value().is_finite() {
        return None;
    }
    let s_sq = crate::autodiff::dot(sb, sb);
    let scale = ((s_sq - beta) / t_sq).sqrt();
    let mut out = Vec::with_capacity(x.len());
    out.extend(tb.iter().map(|&c| c * scale));
    out.extend_from_slice(sb);
    Some(out)
}

/// `Π_x(z) = z - (<z,x>_t / <x,x>_t) x`.
pub fn project_tangent_raw<T: Real>(x: &[T], z: &[T], time_dims: usize) -> Vec<T> {
    let coef = inner(z, x, time_dims) / inner(x, x, time_dims);
    z.iter().zip(x).map(|(&zi, &xi)| zi - coef * xi).collect()
}

/// `<x, y>_t` after checking both lengths against `sig`.
pub fn time_product(x: &[f64], y: &[f64], sig: &Signature) -> GeomResult<f64> {
    sig.check_len(x.len())?;
    sig.check_len(y.len())?;
    Ok(inner(x, y, sig.time_dims()))
}

/// Projects an ambient vector onto the manifold via `ψ⁻¹∘ψ`.
pub fn project_to_manifold(x: &[f64], sig: &Signature) -> GeomResult<PseudoPoint> {
    sig.check_len(x.len())?;
    let coords = project_point(x, sig.time_dims(), sig.beta).ok_or(GeomError::DegenerateTimeBlock)?;
    Ok(PseudoPoint::from_parts(coords, *sig))
}

/// Orthogonal projection of `z` onto the tangent space at `x`.
pub fn project_to_tangent(x: &PseudoPoint, z: &[f64]) -> GeomResult<TangentVec> {
    x.sig.check_len(z.len())?;
    let coords = project_tangent_raw(&x.coords, z, x.sig.time_dims());
    Ok(TangentVec::from_parts(coords, x.clone()))
}

/// Whether `y` is in the normal neighbourhood of `x`: `<x, y>_t < |β|`.
pub fn is_g_connected(x: &PseudoPoint, y: &PseudoPoint) -> GeomResult<bool> {
    if !x.sig.same_manifold(&y.sig) {
        return Err(GeomError::SignatureMismatch);
    }
    Ok(inner(&x.coords, &y.coords, x.sig.time_dims()) < -x.sig.beta)
}

pub fn antipode(x: &PseudoPoint) -> PseudoPoint {
    PseudoPoint::from_parts(x.coords.iter().map(|c| -c).collect(), x.sig)
}

/// Maps `x ∈ Q_β` to `√(β'/β)·x ∈ Q_β'`.
pub fn rescale_curvature(x: &PseudoPoint, beta_new: f64) -> GeomResult<PseudoPoint> {
    let sig = x.sig.with_beta(beta_new)?;
    let factor = (beta_new / x.sig.beta).sqrt();
    Ok(PseudoPoint::from_parts(
        x.coords.iter().map(|c| c * factor).collect(),
        sig,
    ))
}
