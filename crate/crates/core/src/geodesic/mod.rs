//! Geodesics, exponential and logarithmic maps, parallel transport, the broken
//! geodesic distance and the sphere-times-Euclidean diffeomorphisms.

pub mod kernel;

use crate::error::{GeomError, GeomResult};
use crate::manifold::{inner, PseudoPoint, Signature, TangentVec, TOL_MANIFOLD};

/// Below this `|<ξ,ξ>_t|` a tangent vector is reported as null.
pub const TOL_NULL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeodesicClass {
    TimeLike,
    Null,
    SpaceLike,
}

impl GeodesicClass {
    pub fn of(xi: &TangentVec) -> Self {
        let q = xi.sq_norm();
        if q.abs() <= TOL_NULL {
            GeodesicClass::Null
        } else if q < 0.0 {
            GeodesicClass::TimeLike
        } else {
            GeodesicClass::SpaceLike
        }
    }
}

fn same(x: &PseudoPoint, y: &PseudoPoint) -> GeomResult<Signature> {
    let sig = x.signature();
    if !sig.same_manifold(&y.signature()) {
        return Err(GeomError::SignatureMismatch);
    }
    Ok(sig)
}

fn check_base(x: &PseudoPoint, xi: &TangentVec) -> GeomResult<Signature> {
    same(x, xi.base())
}

/// `γ_{x→ξ}(τ)`, projected back onto the manifold.
pub fn geodesic(x: &PseudoPoint, xi: &TangentVec, tau: f64) -> GeomResult<PseudoPoint> {
    let sig = check_base(x, xi)?;
    let g = kernel::geodesic(x.coords(), xi.coords(), tau, sig.time_dims(), sig.beta);
    Ok(PseudoPoint::from_parts(
        kernel::stabilize(g, sig.time_dims(), sig.beta),
        sig,
    ))
}

pub fn exp_map(x: &PseudoPoint, xi: &TangentVec) -> GeomResult<PseudoPoint> {
    let sig = check_base(x, xi)?;
    Ok(PseudoPoint::from_parts(
        kernel::exp(x.coords(), xi.coords(), sig.time_dims(), sig.beta),
        sig,
    ))
}

/// `log_x(y)`; fails with [`GeomError::Disconnected`] outside the normal neighbourhood.
pub fn log_map(x: &PseudoPoint, y: &PseudoPoint) -> GeomResult<TangentVec> {
    let sig = same(x, y)?;
    let v = kernel::log(x.coords(), y.coords(), sig.time_dims(), sig.beta)?;
    Ok(TangentVec::from_parts(v, x.clone()))
}

/// Result of [`parallel_transport`].
#[derive(Debug, Clone, PartialEq)]
pub struct Transported {
    pub vec: TangentVec,
    /// Set when `y` was not g-connected to `x` and the vector was carried to `-y` instead.
    pub antipodal: bool,
}

/// `P_{x→y}(ζ)`, falling back to `P_{x→-y}` for broken pairs.
pub fn parallel_transport(
    x: &PseudoPoint,
    y: &PseudoPoint,
    zeta: &TangentVec,
) -> GeomResult<Transported> {
    let sig = same(x, y)?;
    check_base(x, zeta)?;
    let td = sig.time_dims();
    let (target, antipodal) = if inner(x.coords(), y.coords(), td) < -sig.beta {
        (y.clone(), false)
    } else {
        (crate::manifold::antipode(y), true)
    };
    let v = kernel::transport(x.coords(), target.coords(), zeta.coords(), td, sig.beta)?;
    Ok(Transported {
        vec: TangentVec::from_parts(v, target),
        antipodal,
    })
}

/// Geodesic distance, with the broken-geodesic fallback `π√|β| + d(x, -y)`.
pub fn distance(x: &PseudoPoint, y: &PseudoPoint) -> GeomResult<f64> {
    let sig = same(x, y)?;
    Ok(kernel::distance(x.coords(), y.coords(), sig.time_dims(), sig.beta))
}

/// A point of `S^t_{-β} × R^s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductPoint {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Curvature; the sphere radius is `√|β|`.
    pub beta: f64,
}

impl ProductPoint {
    pub fn new(u: Vec<f64>, v: Vec<f64>, beta: f64) -> GeomResult<Self> {
        if !(beta < 0.0) || !beta.is_finite() {
            return Err(GeomError::InvalidCurvature(beta));
        }
        let radius = (-beta).sqrt();
        let norm = u.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - radius).abs() > TOL_MANIFOLD * radius.max(1.0) {
            return Err(GeomError::NotOnSphere { radius, norm });
        }
        Ok(ProductPoint { u, v, beta })
    }

    pub fn radius(&self) -> f64 {
        (-self.beta).sqrt()
    }
}

/// Tangent vector of the product manifold: spherical part, Euclidean part.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTangent {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// `ψ(x) = (√|β| t/‖t‖, s)`.
pub fn psi(x: &PseudoPoint) -> GeomResult<ProductPoint> {
    let sig = x.signature();
    let (u, v) =
        kernel::psi(x.coords(), sig.time_dims(), sig.beta).ok_or(GeomError::DegenerateTimeBlock)?;
    Ok(ProductPoint {
        u,
        v,
        beta: sig.beta,
    })
}

pub fn psi_inv(z: &ProductPoint) -> GeomResult<PseudoPoint> {
    let beta = z.beta;
    let sig = Signature::new(z.v.len(), z.u.len().saturating_sub(1), beta)?;
    if z.u.is_empty() {
        return Err(GeomError::InvalidSignature { s: z.v.len(), t: 0 });
    }
    Ok(PseudoPoint::from_parts(kernel::psi_inv(&z.u, &z.v, beta), sig))
}

/// Unit-sphere variant `(t/‖t‖, s/√|β|)`.
pub fn psi_unit(x: &PseudoPoint) -> GeomResult<ProductPoint> {
    let sig = x.signature();
    let (tb, sb) = (x.time_block(), x.space_block());
    let tn = tb.iter().map(|c| c * c).sum::<f64>().sqrt();
    if tn == 0.0 {
        return Err(GeomError::DegenerateTimeBlock);
    }
    let r = sig.radius();
    Ok(ProductPoint {
        u: tb.iter().map(|c| c / tn).collect(),
        v: sb.iter().map(|c| c / r).collect(),
        beta: -1.0,
    })
}

/// Inverse of [`psi_unit`], `√|β|·(√(1 + ‖v‖²) u, v)`, landing on `Q^{s,t}_β`.
pub fn psi_unit_inv(z: &ProductPoint, beta: f64) -> GeomResult<PseudoPoint> {
    if z.u.is_empty() {
        return Err(GeomError::InvalidSignature { s: z.v.len(), t: 0 });
    }
    let sig = Signature::new(z.v.len(), z.u.len() - 1, beta)?;
    let r = sig.radius();
    let k = (1.0 + z.v.iter().map(|c| c * c).sum::<f64>()).sqrt();
    let mut coords: Vec<f64> = z.u.iter().map(|c| r * k * c).collect();
    coords.extend(z.v.iter().map(|c| r * c));
    Ok(PseudoPoint::from_parts(coords, sig))
}

fn check_product(a: &ProductPoint, b: &ProductPoint) -> GeomResult<()> {
    if a.u.len() != b.u.len() || a.v.len() != b.v.len() || a.beta != b.beta {
        return Err(GeomError::SignatureMismatch);
    }
    Ok(())
}

/// Componentwise logarithm: round-sphere log on `u`, difference on `v`.
pub fn product_log(z: &ProductPoint, base: &ProductPoint) -> GeomResult<ProductTangent> {
    check_product(z, base)?;
    Ok(ProductTangent {
        u: kernel::sphere_log(&base.u, &z.u, base.radius())?,
        v: z.v.iter().zip(&base.v).map(|(a, b)| a - b).collect(),
    })
}

pub fn product_exp(xi: &ProductTangent, base: &ProductPoint) -> GeomResult<ProductPoint> {
    if xi.u.len() != base.u.len() || xi.v.len() != base.v.len() {
        return Err(GeomError::DimensionMismatch {
            expected: base.u.len() + base.v.len(),
            got: xi.u.len() + xi.v.len(),
        });
    }
    Ok(ProductPoint {
        u: kernel::sphere_exp(&base.u, &xi.u, base.radius()),
        v: xi.v.iter().zip(&base.v).map(|(a, b)| a + b).collect(),
        beta: base.beta,
    })
}

/// Diffeomorphic logarithm at `reference` (zero space block required).
/// Defined on the whole manifold except the slice whose spherical part is antipodal
/// to the reference.
pub fn diff_log(x: &PseudoPoint, reference: &PseudoPoint) -> GeomResult<TangentVec> {
    let sig = same(x, reference)?;
    let v = kernel::diff_log(x.coords(), reference.coords(), sig.time_dims(), sig.beta)?;
    Ok(TangentVec::from_parts(v, reference.clone()))
}

pub fn diff_exp(xi: &TangentVec) -> GeomResult<PseudoPoint> {
    let reference = xi.base();
    let sig = reference.signature();
    let v = kernel::diff_exp(xi.coords(), reference.coords(), sig.time_dims(), sig.beta)?;
    Ok(PseudoPoint::from_parts(v, sig))
}

pub fn diff_log_o(x: &PseudoPoint) -> GeomResult<TangentVec> {
    diff_log(x, &x.signature().south_pole())
}

pub fn diff_exp_o(xi: &[f64], sig: Signature) -> GeomResult<PseudoPoint> {
    if xi.len() != sig.ambient_dim() {
        return Err(GeomError::DimensionMismatch {
            expected: sig.ambient_dim(),
            got: xi.len(),
        });
    }
    diff_exp(&TangentVec::from_parts(xi.to_vec(), sig.south_pole()))
}

/// `f^⊗ = diff_exp ∘ f ∘ diff_log`, from tangent coordinates at `reference_in`
/// to tangent coordinates at `reference_out`. The output of `f` is projected onto
/// the tangent space at `reference_out`.
pub fn tangential_lift<F>(
    f: F,
    reference_in: PseudoPoint,
    reference_out: PseudoPoint,
) -> impl Fn(&PseudoPoint) -> GeomResult<PseudoPoint>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    move |x: &PseudoPoint| {
        let xi = diff_log(x, &reference_in)?;
        let out = f(xi.coords());
        let sig_out = reference_out.signature();
        if out.len() != sig_out.ambient_dim() {
            return Err(GeomError::DimensionMismatch {
                expected: sig_out.ambient_dim(),
                got: out.len(),
            });
        }
        let t = crate::manifold::project_to_tangent(&reference_out, &out)?;
        diff_exp(&t)
    }
}
