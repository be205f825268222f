use proptest::prelude::*;

use qgcn_core::autodiff::{value_and_grad, Real, ScalarFn};
use qgcn_core::geodesic::{self, kernel};
use qgcn_core::manifold::{
    antipode, inner, is_g_connected, project_to_manifold, project_to_tangent, rescale_curvature,
};
use qgcn_core::{GeomError, PseudoPoint, Signature, TangentVec};

const SIGNATURES: [(usize, usize); 5] = [(2, 1), (1, 2), (5, 5), (3, 0), (0, 3)];

fn signature() -> impl Strategy<Value = Signature> {
    (0..SIGNATURES.len(), -4.0..-0.25f64).prop_map(|(i, beta)| {
        let (s, t) = SIGNATURES[i];
        Signature::new(s, t, beta).unwrap()
    })
}

fn raw(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, n)
}

/// A signature with one or more points projected from raw ambient vectors.
fn points(k: usize) -> impl Strategy<Value = (Signature, Vec<PseudoPoint>)> {
    signature().prop_flat_map(move |sig| {
        let n = sig.ambient_dim();
        (Just(sig), prop::collection::vec(raw(n), k)).prop_filter_map("zero time block", |(sig, rs)| {
            let pts: Option<Vec<PseudoPoint>> = rs.iter().map(|r| project_to_manifold(r, &sig).ok()).collect();
            pts.map(|p| (sig, p))
        })
    })
}

fn scale(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().max(1.0)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projection_lands_on_manifold_and_is_idempotent((sig, p) in points(1)) {
        let x = &p[0];
        let td = sig.time_dims();
        prop_assert!((inner(x.coords(), x.coords(), td) - sig.beta).abs() <= 1e-9 * scale(x.coords()));
        let again = project_to_manifold(x.coords(), &sig).unwrap();
        prop_assert!(max_diff(again.coords(), x.coords()) <= 1e-12 * scale(x.coords()));
    }

    #[test]
    fn tangent_projection_is_idempotent((sig, p) in points(1), z in raw(11)) {
        let x = &p[0];
        let z = &z[..sig.ambient_dim()];
        let xi = project_to_tangent(x, z).unwrap();
        let s = scale(x.coords()) * scale(z);
        prop_assert!(inner(x.coords(), xi.coords(), sig.time_dims()).abs() <= 1e-9 * s);
        let again = project_to_tangent(x, xi.coords()).unwrap();
        prop_assert!(max_diff(again.coords(), xi.coords()) <= 1e-9 * s);
    }

    #[test]
    fn antipode_covers_the_manifold((_sig, p) in points(2)) {
        let (x, y) = (&p[0], &p[1]);
        prop_assert!(is_g_connected(x, y).unwrap() || is_g_connected(&antipode(x), y).unwrap());
        prop_assert_eq!(antipode(&antipode(x)), x.clone());
    }

    #[test]
    fn exp_then_log_recovers_the_point((sig, p) in points(1), z in raw(11), len in 0.0..2.5f64) {
        let x = &p[0];
        let dir = project_to_tangent(x, &z[..sig.ambient_dim()]).unwrap();
        let n = dir.coords().iter().map(|c| c * c).sum::<f64>().sqrt();
        prop_assume!(n > 1e-3);
        let k = len * sig.radius() / n;
        let xi = TangentVec::new(dir.coords().iter().map(|c| c * k).collect(), x.clone()).unwrap();
        let y = geodesic::exp_map(x, &xi).unwrap();
        match geodesic::log_map(x, &y) {
            Ok(back) => {
                let y2 = geodesic::exp_map(x, &back).unwrap();
                prop_assert!(max_diff(y2.coords(), y.coords()) <= 1e-8 * scale(y.coords()));
            }
            // a long time-like step can wrap past the normal neighbourhood
            Err(GeomError::Disconnected { .. }) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn diff_maps_round_trip_globally((sig, p) in points(1)) {
        let y = &p[0];
        match geodesic::diff_log_o(y) {
            Ok(xi) => {
                prop_assert_eq!(xi.coords()[0], 0.0);
                let back = geodesic::diff_exp_o(xi.coords(), sig).unwrap();
                prop_assert!(max_diff(back.coords(), y.coords()) <= 1e-8 * scale(y.coords()));
            }
            Err(GeomError::Antipode) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn distance_is_symmetric_and_broken_branch_adds_pi((sig, p) in points(2)) {
        let (x, y) = (&p[0], &p[1]);
        let d = geodesic::distance(x, y).unwrap();
        let e = geodesic::distance(y, x).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!((d - e).abs() <= 1e-9 * d.max(1.0));
        prop_assert!(geodesic::distance(x, x).unwrap().abs() <= 1e-12);
        if !is_g_connected(x, y).unwrap() {
            let via = geodesic::distance(x, &antipode(y)).unwrap() + std::f64::consts::PI * sig.radius();
            prop_assert!((d - via).abs() <= 1e-12 * d.max(1.0));
        }
    }

    #[test]
    fn transport_preserves_the_norm((sig, p) in points(2), z in raw(11)) {
        let (x, y) = (&p[0], &p[1]);
        let zeta = project_to_tangent(x, &z[..sig.ambient_dim()]).unwrap();
        let moved = geodesic::parallel_transport(x, y, &zeta).unwrap();
        let td = sig.time_dims();
        let before = inner(zeta.coords(), zeta.coords(), td);
        let after = inner(moved.vec.coords(), moved.vec.coords(), td);
        let s = scale(zeta.coords()) * scale(x.coords()) * scale(y.coords());
        prop_assert!((before - after).abs() <= 1e-8 * s);
        let base = moved.vec.base();
        prop_assert!(inner(base.coords(), moved.vec.coords(), td).abs() <= 1e-8 * s);
        prop_assert_eq!(moved.antipodal, !is_g_connected(x, y).unwrap());
    }

    #[test]
    fn psi_round_trips((_sig, p) in points(1)) {
        let x = &p[0];
        let z = geodesic::psi(x).unwrap();
        let back = geodesic::psi_inv(&z).unwrap();
        prop_assert!(max_diff(back.coords(), x.coords()) <= 1e-9 * scale(x.coords()));
        let zu = geodesic::psi_unit(x).unwrap();
        let back = geodesic::psi_unit_inv(&zu, x.signature().beta).unwrap();
        prop_assert!(max_diff(back.coords(), x.coords()) <= 1e-9 * scale(x.coords()));
    }

    #[test]
    fn rescaling_scales_distance((_sig, p) in points(2), beta_new in -4.0..-0.25f64) {
        let (x, y) = (&p[0], &p[1]);
        let d = geodesic::distance(x, y).unwrap();
        let xs = rescale_curvature(x, beta_new).unwrap();
        let ys = rescale_curvature(y, beta_new).unwrap();
        let ds = geodesic::distance(&xs, &ys).unwrap();
        let k = (beta_new / x.signature().beta).sqrt();
        prop_assert!((ds - k * d).abs() <= 1e-8 * ds.max(1.0));
        prop_assert!((inner(xs.coords(), xs.coords(), xs.signature().time_dims()) - beta_new).abs()
            <= 1e-9 * scale(xs.coords()));
    }

    #[test]
    fn tape_is_deterministic((sig, p) in points(2)) {
        struct D(usize, f64);
        impl ScalarFn for D {
            fn eval<T: Real>(&self, x: &[T]) -> T {
                let n = x.len() / 2;
                kernel::distance(&x[..n], &x[n..], self.0, T::cst(self.1))
            }
        }
        let mut x = p[0].coords().to_vec();
        x.extend_from_slice(p[1].coords());
        let f = D(sig.time_dims(), sig.beta);
        let (v1, g1) = value_and_grad(&f, &x);
        let (v2, g2) = value_and_grad(&f, &x);
        prop_assert_eq!(v1.to_bits(), v2.to_bits());
        prop_assert_eq!(g1.iter().map(|g| g.to_bits()).collect::<Vec<_>>(), g2.iter().map(|g| g.to_bits()).collect::<Vec<_>>());
    }
}

#[test]
fn closed_form_hyperbolic_distance_on_the_slice() {
    // Q^{2,1}: time coordinates (x0, x1), with x1 = 0 giving the hyperboloid sheet
    let sig = Signature::new(2, 1, -2.0).unwrap();
    let lift = |a: f64, b: f64| {
        let t = (2.0 + a * a + b * b).sqrt();
        PseudoPoint::new(vec![t, 0.0, a, b], sig).unwrap()
    };
    let (x, y) = (lift(0.3, -1.2), lift(2.0, 0.5));
    let ip = -x.coords()[0] * y.coords()[0] + x.coords()[2] * y.coords()[2] + x.coords()[3] * y.coords()[3];
    let want = 2f64.sqrt() * (ip / -2.0).acosh();
    assert!((geodesic::distance(&x, &y).unwrap() - want).abs() < 1e-12);
}
