//! Randomised invariant checks for the geometry layer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::geodesic::kernel;
use crate::manifold::{inner, project_point, project_tangent_raw, Signature};

pub const MEMBERSHIP_TOL: f64 = 1e-9;
pub const ROUND_TRIP_TOL: f64 = 1e-8;
pub const DISTANCE_TOL: f64 = 1e-8;

/// Outcome of one check: the worst error seen against its tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub s: usize,
    pub t: usize,
    pub beta: f64,
    pub samples: usize,
    /// Samples outside the check's domain (e.g. disconnected pairs for exp/log).
    pub skipped: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn new(name: &str, sig: Signature, tol: f64) -> Self {
        CheckOutcome {
            name: name.to_string(),
            s: sig.s,
            t: sig.t,
            beta: sig.beta,
            samples: 0,
            skipped: 0,
            max_error: 0.0,
            tolerance: tol,
            passed: true,
        }
    }

    fn record(&mut self, err: f64) {
        self.samples += 1;
        if !(err <= self.max_error) {
            self.max_error = if err.is_nan() { f64::INFINITY } else { err };
        }
    }

    fn finish(mut self) -> Self {
        self.passed = self.max_error <= self.tolerance;
        self
    }
}

#[derive(Debug, Clone)]
pub struct GeomCheckConfig {
    pub signatures: Vec<(usize, usize)>,
    pub betas: Vec<f64>,
    pub samples: usize,
    pub coverage_pairs: usize,
    pub seed: u64,
}

impl Default for GeomCheckConfig {
    fn default() -> Self {
        GeomCheckConfig {
            signatures: vec![(2, 1), (1, 2), (5, 5), (3, 0), (0, 3)],
            betas: vec![-4.0, -1.0, -0.25],
            samples: 10_000,
            coverage_pairs: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GeomCheckReport {
    pub checks: Vec<CheckOutcome>,
    pub passed: bool,
}

impl GeomCheckReport {
    fn from_checks(checks: Vec<CheckOutcome>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        GeomCheckReport { checks, passed }
    }

    pub fn worst(&self, name: &str) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.name == name)
            .map(|c| c.max_error)
            .fold(0.0, f64::max)
    }
}

/// Uniform ambient vector in `[-spread·R, spread·R]^n`, projected onto the manifold.
pub fn sample_point<R: Rng>(sig: &Signature, spread: f64, rng: &mut R) -> Vec<f64> {
    let r = sig.radius();
    loop {
        let raw: Vec<f64> = (0..sig.ambient_dim())
            .map(|_| rng.gen_range(-spread..spread) * r)
            .collect();
        if let Some(p) = project_point(&raw, sig.time_dims(), sig.beta) {
            return p;
        }
    }
}

/// Random tangent vector at `x`: a uniform ambient vector projected onto `T_x`,
/// rescaled to a Euclidean norm drawn uniformly from `[0, max_norm·R)`.
pub fn sample_tangent<R: Rng>(x: &[f64], sig: &Signature, max_norm: f64, rng: &mut R) -> Vec<f64> {
    let r = sig.radius();
    loop {
        let z: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let xi = project_tangent_raw(x, &z, sig.time_dims());
        let n = xi.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 1e-6 {
            let k = rng.gen_range(0.0..max_norm) * r / n;
            return xi.into_iter().map(|c| c * k).collect();
        }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn membership(x: &[f64], sig: &Signature) -> f64 {
    (inner(x, x, sig.time_dims()) - sig.beta).abs()
}

/// Membership, exp/log and diff_exp/diff_log round trips, and antipodal coverage
/// on one signature.
pub fn check_signature(sig: Signature, samples: usize, coverage_pairs: usize, seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let td = sig.time_dims();
    let b = sig.beta;
    let mut member = CheckOutcome::new("membership", sig, MEMBERSHIP_TOL);
    let mut exp_log = CheckOutcome::new("exp_log_round_trip", sig, ROUND_TRIP_TOL);
    // independent ambient pairs; reaches arbitrarily close to the boundary of the
    // normal neighbourhood, where exp is ill-conditioned (informational only)
    let mut exp_log_ambient = CheckOutcome::new("exp_log_round_trip_ambient", sig, f64::INFINITY);
    let mut diff = CheckOutcome::new("diff_round_trip", sig, ROUND_TRIP_TOL);
    let mut diff_tangent = CheckOutcome::new("diff_log_tangency", sig, 0.0);
    let o = sig.south_pole().into_coords();

    for _ in 0..samples {
        let x = sample_point(&sig, 1.5, &mut rng);
        let y = sample_point(&sig, 1.5, &mut rng);
        member.record(membership(&x, &sig));
        // a point of the normal neighbourhood, reached along a random geodesic
        let target = kernel::exp(&x, &sample_tangent(&x, &sig, 3.0, &mut rng), td, b);
        member.record(membership(&target, &sig));
        match kernel::log(&x, &target, td, b) {
            Ok(xi) => {
                let back = kernel::exp(&x, &xi, td, b);
                member.record(membership(&back, &sig));
                exp_log.record(max_abs_diff(&back, &target));
            }
            Err(_) => exp_log.skipped += 1,
        }
        match kernel::log(&x, &y, td, b) {
            Ok(xi) => exp_log_ambient.record(max_abs_diff(&kernel::exp(&x, &xi, td, b), &y)),
            Err(_) => exp_log_ambient.skipped += 1,
        }
        match kernel::diff_log(&y, &o, td, b) {
            Ok(xi) => {
                diff_tangent.record(xi[0].abs());
                match kernel::diff_exp(&xi, &o, td, b) {
                    Ok(back) => {
                        member.record(membership(&back, &sig));
                        diff.record(max_abs_diff(&back, &y));
                    }
                    Err(_) => diff.record(f64::INFINITY),
                }
            }
            Err(_) => diff.skipped += 1,
        }
    }

    let mut coverage = CheckOutcome::new("antipodal_coverage", sig, 0.0);
    for _ in 0..coverage_pairs {
        let x = sample_point(&sig, 1.5, &mut rng);
        let y = sample_point(&sig, 1.5, &mut rng);
        let ip = inner(&x, &y, td);
        let neg_ip = -ip; // <-x, y>_t
        let covered = ip < -b || neg_ip < -b;
        coverage.record(if covered { 0.0 } else { 1.0 });
    }

    vec![
        member.finish(),
        exp_log.finish(),
        exp_log_ambient.finish(),
        diff.finish(),
        diff_tangent.finish(),
        coverage.finish(),
    ]
}

pub fn run_geomcheck(cfg: &GeomCheckConfig) -> GeomCheckReport {
    let mut checks = Vec::new();
    let mut k = 0u64;
    for &(s, t) in &cfg.signatures {
        for &beta in &cfg.betas {
            let sig = match Signature::new(s, t, beta) {
                Ok(sig) => sig,
                Err(_) => continue,
            };
            checks.extend(check_signature(
                sig,
                cfg.samples,
                cfg.coverage_pairs,
                cfg.seed.wrapping_mul(1_000_003).wrapping_add(k),
            ));
            k += 1;
        }
    }
    GeomCheckReport::from_checks(checks)
}

/// Distance on `Q^{s,1}_β` restricted to `{t_1 = 0, t_0 > 0}` against
/// `√|β| arcosh(<x,y>_t/β)`.
pub fn check_hyperbolic_slice(s: usize, beta: f64, samples: usize, seed: u64) -> CheckOutcome {
    let sig = Signature::new(s, 1, beta).expect("valid signature");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = CheckOutcome::new("hyperbolic_slice_distance", sig, DISTANCE_TOL);
    let slice_point = |rng: &mut ChaCha8Rng| {
        let v: Vec<f64> = (0..s).map(|_| rng.gen_range(-2.0..2.0) * sig.radius()).collect();
        let mut x = vec![(-beta + v.iter().map(|c| c * c).sum::<f64>()).sqrt(), 0.0];
        x.extend(v);
        x
    };
    for _ in 0..samples {
        let x = slice_point(&mut rng);
        let y = slice_point(&mut rng);
        let a = (inner(&x, &y, 2) / beta).max(1.0);
        let oracle = (-beta).sqrt() * a.acosh();
        out.record((kernel::distance(&x, &y, 2, beta) - oracle).abs());
    }
    out.finish()
}

/// Distance on `Q^{0,t}_β` against the great-circle distance of radius `√|β|`.
pub fn check_great_circle(t: usize, beta: f64, samples: usize, seed: u64) -> CheckOutcome {
    let sig = Signature::new(0, t, beta).expect("valid signature");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = CheckOutcome::new("great_circle_distance", sig, DISTANCE_TOL);
    let r2 = -beta;
    for _ in 0..samples {
        let x = sample_point(&sig, 1.0, &mut rng);
        let y = sample_point(&sig, 1.0, &mut rng);
        let cos: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / r2;
        let oracle = r2.sqrt() * cos.clamp(-1.0, 1.0).acos();
        out.record((kernel::distance(&x, &y, t + 1, beta) - oracle).abs());
    }
    out.finish()
}

/// `D_{β'}(φx, φy) = √(β'/β) D_β(x, y)` with a random target curvature per pair.
pub fn check_rescale(sig: Signature, samples: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = CheckOutcome::new("curvature_rescale_distance", sig, DISTANCE_TOL);
    let td = sig.time_dims();
    for _ in 0..samples {
        let x = sample_point(&sig, 1.5, &mut rng);
        let y = sample_point(&sig, 1.5, &mut rng);
        let beta_new = -rng.gen_range(0.25..4.0);
        let k = (beta_new / sig.beta).sqrt();
        let xs: Vec<f64> = x.iter().map(|c| c * k).collect();
        let ys: Vec<f64> = y.iter().map(|c| c * k).collect();
        let lhs = kernel::distance(&xs, &ys, td, beta_new);
        let rhs = k * kernel::distance(&x, &y, td, sig.beta);
        out.record((lhs - rhs).abs());
    }
    out.finish()
}

/// Degeneration and rescaling checks over a fixed grid.
pub fn run_distance_checks(samples: usize, seed: u64) -> GeomCheckReport {
    let mut checks = Vec::new();
    for (i, &beta) in [-4.0, -1.0, -0.25].iter().enumerate() {
        let k = seed.wrapping_mul(7919).wrapping_add(i as u64 * 16);
        for (j, &s) in [1usize, 2, 5].iter().enumerate() {
            checks.push(check_hyperbolic_slice(s, beta, samples, k + j as u64));
        }
        for (j, &t) in [1usize, 2, 5].iter().enumerate() {
            checks.push(check_great_circle(t, beta, samples, k + 4 + j as u64));
        }
        for (j, &(s, t)) in [(2usize, 1usize), (1, 2), (5, 5), (3, 0), (0, 3)].iter().enumerate() {
            let sig = Signature::new(s, t, beta).expect("valid signature");
            checks.push(check_rescale(sig, samples, k + 8 + j as u64));
        }
    }
    GeomCheckReport::from_checks(checks)
}
