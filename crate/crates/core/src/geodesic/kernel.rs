//! Closed-form geodesic kernels, generic over [`Real`].
//!
//! The three geodesic families (space-like / null / time-like tangent vectors)
//! are written in terms of the signed quantity `w = τ²<ξ,ξ>_t / |β|`:
//!
//! ```text
//! γ(τ)  = C(w)·x + τ·S(w)·ξ
//! C(w)  = cosh √w      (cos √-w for w < 0)
//! S(w)  = sinh √w / √w (sin √-w / √-w for w < 0)
//! ```
//!
//! Inside `|w| < SERIES_BAND` the power series of `C` and `S` are used, so the
//! maps are smooth (and their gradients finite) across the null cone, and the
//! null branch `γ(τ) = x + τξ` is reproduced exactly at `w = 0`.

use crate::autodiff::{dot, Real};
use crate::error::{GeomError, GeomResult};
use crate::manifold::{inner, inner_accurate, project_point};

pub(crate) const SERIES_BAND: f64 = 1e-4;

/// `cosh √w`, continued to `cos √-w`.
pub fn cosh_sqrt<T: Real>(w: T) -> T {
    let wv = w.value();
    if wv > SERIES_BAND {
        w.sqrt().cosh()
    } else if wv < -SERIES_BAND {
        (-w).sqrt().cos()
    } else {
        let w2 = w * w;
        w * 0.5 + w2 / 24.0 + w2 * w / 720.0 + 1.0
    }
}

/// `sinh √w / √w`, continued to `sin √-w / √-w`.
pub fn sinhc_sqrt<T: Real>(w: T) -> T {
    let wv = w.value();
    if wv > SERIES_BAND {
        let r = w.sqrt();
        r.sinh() / r
    } else if wv < -SERIES_BAND {
        let r = (-w).sqrt();
        r.sin() / r
    } else {
        let w2 = w * w;
        w / 6.0 + w2 / 120.0 + w2 * w / 5040.0 + 1.0
    }
}

/// `2 (cosh √w - 1) / w`, continued to negative `w`.
pub fn coshm1c_sqrt<T: Real>(w: T) -> T {
    let wv = w.value();
    if wv > SERIES_BAND {
        let h = (w.sqrt() * 0.5).sinh();
        h * h * 4.0 / w
    } else if wv < -SERIES_BAND {
        let h = ((-w).sqrt() * 0.5).sin();
        h * h * 4.0 / (-w)
    } else {
        let w2 = w * w;
        w / 12.0 + w2 / 360.0 + w2 * w / 20160.0 + 1.0
    }
}

fn axpby<T: Real>(a: T, x: &[T], b: T, y: &[T]) -> Vec<T> {
    x.iter().zip(y).map(|(&xi, &yi)| a * xi + b * yi).collect()
}

/// Stability projection; leaves the input untouched if the time block vanished.
pub fn stabilize<T: Real>(x: Vec<T>, time_dims: usize, beta: T) -> Vec<T> {
    match project_point(&x, time_dims, beta) {
        Some(p) => p,
        None => x,
    }
}

/// `γ_{x→ξ}(τ)` without stability projection.
pub fn geodesic<T: Real>(x: &[T], xi: &[T], tau: f64, time_dims: usize, beta: T) -> Vec<T> {
    let q = inner_accurate(xi, xi, time_dims);
    let w = q * (tau * tau) / (-beta);
    let c = cosh_sqrt(w);
    let s = sinhc_sqrt(w) * tau;
    axpby(c, x, s, xi)
}

/// `exp_x(ξ) = γ_{x→ξ}(1)`, followed by the stability projection.
pub fn exp<T: Real>(x: &[T], xi: &[T], time_dims: usize, beta: T) -> Vec<T> {
    stabilize(geodesic(x, xi, 1.0, time_dims, beta), time_dims, beta)
}

/// Below this `|c|` the log coefficient uses its power series.
const LOG_SERIES_BAND: f64 = 1e-6;

/// `c = 1 - <x,y>_t/β`, computed from the difference vector so that it is
/// accurate for nearby points.
fn chord<T: Real>(x: &[T], y: &[T], time_dims: usize, beta: T) -> T {
    let d: Vec<T> = x.iter().zip(y).map(|(&a, &b)| a - b).collect();
    inner_accurate(&d, &d, time_dims) / (beta * 2.0)
}

/// Angle `θ` with `<x,y>_t/β = cos θ` (c > 0) or `cosh θ` (c < 0), from `c`.
fn chord_angle<T: Real>(c: T) -> T {
    let cv = c.value();
    if cv > 0.0 {
        ((c * 0.5).sqrt()).clamp(0.0, 1.0).asin() * 2.0
    } else if cv < 0.0 {
        ((-c) * 0.5).sqrt().asinh() * 2.0
    } else {
        T::zero()
    }
}

/// `log_x(y)` on the normal neighbourhood; `Err(Disconnected)` outside it.
pub fn log<T: Real>(x: &[T], y: &[T], time_dims: usize, beta: T) -> GeomResult<Vec<T>> {
    let ip = inner(x, y, time_dims);
    if !(ip.value() < -beta.value()) {
        return Err(GeomError::Disconnected { inner: ip.value() });
    }
    let c = chord(x, y, time_dims, beta);
    let cv = c.value();
    // f(c) = θ / sin θ (or θ / sinh θ), written in terms of c
    let f = if cv.abs() < LOG_SERIES_BAND {
        c / 3.0 + c * c * (2.0 / 15.0) + 1.0
    } else if cv > 0.0 {
        chord_angle(c) / (c * (-c + 2.0)).sqrt()
    } else {
        chord_angle(c) / ((-c) * (-c + 2.0)).sqrt()
    };
    // v = y - (1 - c) x
    Ok(x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| f * ((yi - xi) + c * xi))
        .collect())
}

/// Arc length of the geodesic between g-connected points, `√|β|·θ`.
fn connected_distance<T: Real>(x: &[T], y: &[T], time_dims: usize, beta: T) -> T {
    chord_angle(chord(x, y, time_dims, beta)) * (-beta).sqrt()
}

/// Broken-geodesic distance: the geodesic arc length on the normal
/// neighbourhood, `π√|β| + d(x, -y)` outside it.
pub fn distance<T: Real>(x: &[T], y: &[T], time_dims: usize, beta: T) -> T {
    let ip = inner(x, y, time_dims);
    if ip.value() < -beta.value() {
        connected_distance(x, y, time_dims, beta)
    } else {
        let neg_y: Vec<T> = y.iter().map(|&v| -v).collect();
        connected_distance(x, &neg_y, time_dims, beta) + (-beta).sqrt() * std::f64::consts::PI
    }
}

/// Parallel transport of `ζ` from `x` along the geodesic with initial velocity `ξ` for time `τ`.
pub fn transport_along<T: Real>(
    x: &[T],
    xi: &[T],
    zeta: &[T],
    tau: f64,
    time_dims: usize,
    beta: T,
) -> Vec<T> {
    let q = inner(xi, xi, time_dims);
    let abs_beta = -beta;
    let w = q * (tau * tau) / abs_beta;
    let zx = inner(zeta, xi, time_dims);
    let a = zx * sinhc_sqrt(w) * tau / abs_beta;
    let b = zx * coshm1c_sqrt(w) * (0.5 * tau * tau) / abs_beta;
    zeta.iter()
        .zip(x)
        .zip(xi)
        .map(|((&z, &xv), &s)| z + a * xv + b * s)
        .collect()
}

/// `P_{x→y}(ζ)` for g-connected `x`, `y`, along `ξ = log_x(y)`.
pub fn transport<T: Real>(
    x: &[T],
    y: &[T],
    zeta: &[T],
    time_dims: usize,
    beta: T,
) -> GeomResult<Vec<T>> {
    let xi = log(x, y, time_dims, beta)?;
    Ok(transport_along(x, &xi, zeta, 1.0, time_dims, beta))
}

/// Round-sphere logarithm at `base` (radius `r`) of a point `u` on the same sphere.
pub fn sphere_log<T: Real>(base: &[T], u: &[T], r: T) -> GeomResult<Vec<T>> {
    let r2 = r * r;
    let cos_r = dot(base, u) / r; // r·cos φ
    let k = cos_r / r;
    let mut p: Vec<T> = u.iter().zip(base).map(|(&ui, &bi)| ui - k * bi).collect();
    if base[1..].iter().all(|b| b.value() == 0.0) {
        // base on the first axis: the radial component is exactly the first coordinate
        p[0] = T::zero();
    }
    let p_sq = dot(&p, &p);
    let s2 = p_sq / r2; // sin² φ
    let s2v = s2.value();
    if cos_r.value() > 0.0 && s2v < 1e-8 {
        // φ / sin φ = asin(s)/s
        let f = s2 / 6.0 + s2 * s2 * (3.0 / 40.0) + 1.0;
        return Ok(p.into_iter().map(|v| v * f).collect());
    }
    if cos_r.value() <= 0.0 && s2v < 1e-24 {
        return Err(GeomError::Antipode);
    }
    let pn = p_sq.sqrt();
    let phi = pn.atan2(cos_r);
    let f = phi * r / pn;
    Ok(p.into_iter().map(|v| v * f).collect())
}

/// Round-sphere exponential at `base` (radius `r`).
pub fn sphere_exp<T: Real>(base: &[T], xi: &[T], r: T) -> Vec<T> {
    let w = -(dot(xi, xi) / (r * r));
    axpby(cosh_sqrt(w), base, sinhc_sqrt(w), xi)
}

/// `ψ(x) = (√|β| t/‖t‖, s)`; `None` for a zero time block.
pub fn psi<T: Real>(x: &[T], time_dims: usize, beta: T) -> Option<(Vec<T>, Vec<T>)> {
    let (tb, sb) = x.split_at(time_dims);
    let tn2 = dot(tb, tb);
    if tn2.value() == 0.0 {
        return None;
    }
    let k = (-beta).sqrt() / tn2.sqrt();
    Some((tb.iter().map(|&v| v * k).collect(), sb.to_vec()))
}

/// `ψ⁻¹(u, v) = (√(|β| + ‖v‖²)/√|β| · u, v)`.
pub fn psi_inv<T: Real>(u: &[T], v: &[T], beta: T) -> Vec<T> {
    let k = ((dot(v, v) - beta) / (-beta)).sqrt();
    let mut out: Vec<T> = u.iter().map(|&c| c * k).collect();
    out.extend_from_slice(v);
    out
}

/// Diffeomorphic logarithm at a reference whose space block is zero:
/// spherical log of the time block of `ψ(x)` concatenated with the space block.
pub fn diff_log<T: Real>(
    x: &[T],
    reference: &[T],
    time_dims: usize,
    beta: T,
) -> GeomResult<Vec<T>> {
    if reference[time_dims..].iter().any(|c| c.value() != 0.0) {
        return Err(GeomError::NonzeroSpaceReference);
    }
    let (u, v) = psi(x, time_dims, beta).ok_or(GeomError::DegenerateTimeBlock)?;
    let mut out = sphere_log(&reference[..time_dims], &u, (-beta).sqrt())?;
    out.extend(v);
    Ok(out)
}

/// Inverse of [`diff_log`]: spherical exp of the time block, identity on the
/// space block, then `ψ⁻¹`.
pub fn diff_exp<T: Real>(
    xi: &[T],
    reference: &[T],
    time_dims: usize,
    beta: T,
) -> GeomResult<Vec<T>> {
    if reference[time_dims..].iter().any(|c| c.value() != 0.0) {
        return Err(GeomError::NonzeroSpaceReference);
    }
    let r = (-beta).sqrt();
    let u = sphere_exp(&reference[..time_dims], &xi[..time_dims], r);
    Ok(stabilize(psi_inv(&u, &xi[time_dims..], beta), time_dims, beta))
}

/// South pole `(√|β|, 0, …, 0)` as a generic vector.
pub fn south_pole<T: Real>(dim: usize, beta: T) -> Vec<T> {
    let mut o = vec![T::zero(); dim];
    o[0] = (-beta).sqrt();
    o
}

/// [`diff_log`] at the south pole; the first coordinate of the result is exactly zero.
pub fn diff_log_o<T: Real>(x: &[T], time_dims: usize, beta: T) -> GeomResult<Vec<T>> {
    diff_log(x, &south_pole(x.len(), beta), time_dims, beta)
}

pub fn diff_exp_o<T: Real>(xi: &[T], time_dims: usize, beta: T) -> GeomResult<Vec<T>> {
    diff_exp(xi, &south_pole(xi.len(), beta), time_dims, beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_match_closed_forms_at_band_edges() {
        for &w in &[SERIES_BAND * 0.999, -SERIES_BAND * 0.999, SERIES_BAND * 1.001, -SERIES_BAND * 1.001] {
            let r = w.abs().sqrt();
            let (c, s, h) = if w > 0.0 {
                (r.cosh(), r.sinh() / r, 2.0 * (r.cosh() - 1.0) / w)
            } else {
                (r.cos(), r.sin() / r, 2.0 * (r.cos() - 1.0) / w)
            };
            assert!((cosh_sqrt(w) - c).abs() < 1e-15);
            assert!((sinhc_sqrt(w) - s).abs() < 1e-15);
            assert!((coshm1c_sqrt(w) - h).abs() < 1e-11);
        }
        assert_eq!(cosh_sqrt(0.0), 1.0);
        assert_eq!(sinhc_sqrt(0.0), 1.0);
        assert_eq!(coshm1c_sqrt(0.0), 1.0);
    }

    #[test]
    fn log_series_matches_closed_form() {
        // c just outside the series band, closed form vs series
        for &c in &[1.0001e-6f64, -1.0001e-6] {
            let series = 1.0 + c / 3.0 + c * c * 2.0 / 15.0;
            let closed = if c > 0.0 {
                2.0 * (c / 2.0).sqrt().asin() / (c * (2.0 - c)).sqrt()
            } else {
                2.0 * (-c / 2.0).sqrt().asinh() / (-c * (2.0 - c)).sqrt()
            };
            assert!((series - closed).abs() < 1e-12);
        }
    }
}
