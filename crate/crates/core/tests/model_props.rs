use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use qgcn_core::graph::{generators, Graph};
use qgcn_core::manifold::{inner, project_point};
use qgcn_core::qgcn::ops::{self, Activation, Aggregation, EuclideanMetric, LayerView};
use qgcn_core::qgcn::{Model, ModelConfig, NegativeSet};
use qgcn_core::seeded_rng;

fn raw_vec<R: Rng>(n: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn random_points<R: Rng>(n: usize, dim: usize, td: usize, beta: f64, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| loop {
            if let Some(p) = project_point(&raw_vec(dim, 1.0, rng), td, beta) {
                break p;
            }
        })
        .collect()
}

fn view<'a>(w: &'a [f64], b: &'a [f64], beta: (f64, f64), td: usize, d: usize, agg: Aggregation) -> LayerView<'a, f64> {
    LayerView {
        w,
        b,
        beta_in: beta.0,
        beta_out: beta.1,
        td_in: td,
        td_out: td,
        d_out: d,
        activation: Activation::Tanh,
        aggregation: agg,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn layer_forward_is_permutation_equivariant(seed in 0u64..10_000, n in 3usize..12, mean in any::<bool>()) {
        let mut rng = seeded_rng(seed);
        let (s, t, beta) = (3, 2, -1.3);
        let (d, td) = (s + t + 1, t + 1);
        let graph = generators::erdos_renyi(n, 0.4, &mut rng);
        let h = random_points(n, d, td, beta, &mut rng);
        let w = raw_vec(d * d, 0.5, &mut rng);
        let b = raw_vec(d - 1, 0.3, &mut rng);
        let agg = if mean { Aggregation::Mean } else { Aggregation::Sum };
        let layer = view(&w, &b, (beta, -0.7), td, d, agg);
        let out = ops::layer_forward(&h, &graph, &layer, None).unwrap();

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let pg = graph.permute(&perm);
        let mut ph = vec![Vec::new(); n];
        for (i, &p) in perm.iter().enumerate() {
            ph[p] = h[i].clone();
        }
        let pout = ops::layer_forward(&ph, &pg, &layer, None).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            for (a, b) in out[i].iter().zip(&pout[p]) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn forward_stays_on_the_manifold(seed in 0u64..10_000, s in 0usize..6, t in 0usize..6) {
        prop_assume!(s + t >= 1);
        let mut rng = seeded_rng(seed);
        let graph = generators::random_tree(9, &mut rng);
        let mut cfg = ModelConfig::uniform(s, t, 3, 9);
        cfg.init_beta = -rng.gen_range(0.25..4.0);
        let model = Model::new(cfg, 9, &mut rng).unwrap();
        let emb = model.embed(&graph).unwrap();
        for p in &emb.points {
            let norm: f64 = p.iter().map(|c| c * c).sum::<f64>().max(1.0);
            prop_assert!((inner(p, p, emb.time_dims) - emb.beta).abs() <= 1e-8 * norm);
        }
    }
}

// Round sphere of radius r, written out directly for the degeneration oracle.
fn sphere_log_at_pole(y: &[f64], r: f64) -> Vec<f64> {
    let cos = (y[0] / r).clamp(-1.0, 1.0);
    let phi = cos.acos();
    let mut p: Vec<f64> = y.to_vec();
    p[0] = 0.0;
    let pn = p.iter().map(|c| c * c).sum::<f64>().sqrt();
    if pn == 0.0 {
        return p;
    }
    p.iter().map(|c| c * r * phi / pn).collect()
}

fn sphere_exp_at_pole(xi: &[f64], r: f64) -> Vec<f64> {
    let n = xi.iter().map(|c| c * c).sum::<f64>().sqrt();
    let mut out = vec![0.0; xi.len()];
    out[0] = r * (n / r).cos();
    if n > 0.0 {
        for i in 1..xi.len() {
            out[i] = r * (n / r).sin() * xi[i] / n;
        }
    }
    out
}

#[test]
fn spherical_layer_matches_a_tangent_space_sphere_gcn() {
    for seed in 0..20 {
        let mut rng = seeded_rng(seed);
        let (t, beta_in, beta_out) = (4usize, -1.7, -0.6);
        let d = t + 1;
        let n = 7;
        let graph = generators::random_tree(n, &mut rng);
        // s = 0: every coordinate is a time coordinate and Q is a sphere
        let h = random_points(n, d, d, beta_in, &mut rng);
        let w = raw_vec(d * d, 0.3, &mut rng);
        let zero_b = vec![0.0; d - 1];
        let layer = view(&w, &zero_b, (beta_in, beta_out), d, d, Aggregation::Sum);
        let got = ops::layer_forward(&h, &graph, &layer, None).unwrap();

        let (r_in, r_out): (f64, f64) = ((-beta_in).sqrt(), (-beta_out).sqrt());
        let msgs: Vec<Vec<f64>> = h
            .iter()
            .map(|x| {
                let xi = sphere_log_at_pole(x, r_in);
                let mut y: Vec<f64> = (0..d).map(|i| (0..d).map(|k| w[i * d + k] * xi[k]).sum()).collect();
                y[0] = 0.0;
                sphere_log_at_pole(&sphere_exp_at_pole(&y, r_in), r_in)
            })
            .collect();
        for i in 0..n {
            let mut acc = msgs[i].clone();
            for &j in graph.neighbors(i) {
                for (a, m) in acc.iter_mut().zip(&msgs[j]) {
                    *a += m;
                }
            }
            let mut act: Vec<f64> = acc.iter().map(|a| a.tanh()).collect();
            act[0] = 0.0;
            let want = sphere_exp_at_pole(&act, r_out);
            for (a, b) in got[i].iter().zip(&want) {
                assert!((a - b).abs() < 1e-8, "seed {seed} node {i}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn reconstruction_loss_on_a_path_matches_hand_softmax() {
    // path 0-1-2-3 on a line; negatives of u are its non-neighbours
    let graph = generators::path(4);
    let pos = [0.0, 1.0, 2.5, 2.9];
    let emb: Vec<Vec<f64>> = pos.iter().map(|&p| vec![p]).collect();
    let loss = ops::reconstruction_loss(&emb, &graph, &NegativeSet::AllNonNeighbors, &EuclideanMetric).unwrap();
    let d = |a: usize, b: usize| (pos[a] - pos[b]).abs();
    let mut total = 0.0;
    let mut count = 0.0;
    for u in 0..4usize {
        for &v in graph.neighbors(u) {
            let mut denom = (-d(u, v)).exp();
            for w in (0..4).filter(|&w| w != u && !graph.has_edge(u, w)) {
                denom += (-d(u, w)).exp();
            }
            total += -((-d(u, v)).exp() / denom).ln();
            count += 1.0;
        }
    }
    assert!((loss - total / count).abs() < 1e-12, "{loss} vs {}", total / count);
}

#[test]
fn link_loss_is_binary_cross_entropy_of_fermi_dirac() {
    let emb: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 3.0]];
    let pos = [(0, 1)];
    let neg = [(1, 2), (0, 2)];
    let (r, temp) = (2.0, 1.0);
    let loss = ops::link_loss(&emb, &pos, &neg, &EuclideanMetric, r, temp);
    let p = |dist: f64| 1.0 / (((dist - r) / temp).exp() + 1.0);
    let want = (-(p(1.0)).ln() - (1.0 - p(10f64.sqrt())).ln() - (1.0 - p(3.0)).ln()) / 3.0;
    assert!((loss - want).abs() < 1e-12, "{loss} vs {want}");
}

#[test]
fn zero_bias_is_the_identity_translation() {
    let mut rng = seeded_rng(3);
    let (d, td, beta) = (6, 3, -2.0);
    for x in random_points(50, d, td, beta, &mut rng) {
        let y = ops::bias_translate(&x, &vec![0.0; d], td, beta).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
        }
    }
}

#[test]
fn isolated_nodes_keep_their_own_message() {
    let graph = Graph::from_edges(3, &[(0, 1)]).unwrap();
    let mut rng = seeded_rng(9);
    let (d, td, beta) = (4, 2, -1.0);
    let h = random_points(3, d, td, beta, &mut rng);
    let w = raw_vec(d * d, 0.5, &mut rng);
    let b = raw_vec(d - 1, 0.2, &mut rng);
    let layer = view(&w, &b, (beta, beta), td, d, Aggregation::Sum);
    let full = ops::layer_forward(&h, &graph, &layer, None).unwrap();
    let alone = ops::qnn_layer(&h[2], &layer).unwrap();
    assert_eq!(full[2], alone);
}
