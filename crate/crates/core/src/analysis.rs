//! Graph diagnostics: sampled sectional curvature and Gromov δ-hyperbolicity.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, UNREACHABLE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("sample count must be positive")]
    NoSamples,
    #[error("graph has no pair of nodes at even distance of at least 2")]
    NoTriangles,
    #[error("graph has fewer than four nodes")]
    TooSmall,
    #[error("exact mode is limited to {limit} nodes, graph has {n}")]
    TooLarge { n: usize, limit: usize },
}

pub type AnalysisResult<T> = Result<T, AnalysisError>;

/// Largest graph accepted by the exact δ enumerator.
pub const EXACT_DELTA_MAX_NODES: usize = 200;
pub const DELTA_BIN: f64 = 0.5;
pub const CURVATURE_BIN: f64 = 0.25;
pub const DEFAULT_SAMPLES: usize = 10_000;

/// Normalised histogram with fixed-width bins `[k w, (k+1) w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub width: f64,
    /// `(bin_left, bin_right, mass)` in increasing order; masses sum to 1.
    pub bins: Vec<(f64, f64, f64)>,
}

impl Histogram {
    /// Histogram of `(value, weight)` pairs.
    pub fn weighted(values: impl IntoIterator<Item = (f64, f64)>, width: f64) -> Histogram {
        let mut counts: BTreeMap<i64, f64> = BTreeMap::new();
        let mut total = 0.0;
        for (v, w) in values {
            // nudge exact bin edges that rounding pushed just below
            let k = (v / width + 1e-9).floor() as i64;
            *counts.entry(k).or_default() += w;
            total += w;
        }
        let bins = counts
            .into_iter()
            .map(|(k, c)| (k as f64 * width, (k + 1) as f64 * width, c / total))
            .collect();
        Histogram { width, bins }
    }

    pub fn from_values(values: &[f64], width: f64) -> Histogram {
        Histogram::weighted(values.iter().map(|&v| (v, 1.0)), width)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_left,bin_right,mass\n");
        for (l, r, m) in &self.bins {
            let _ = writeln!(s, "{l},{r},{m}");
        }
        s
    }
}

/// All-pairs hop distances, computed up front for small graphs and by BFS on
/// demand otherwise.
struct Distances<'a> {
    graph: &'a Graph,
    table: Option<Vec<u32>>,
}

const TABLE_MAX_NODES: usize = 4000;

impl<'a> Distances<'a> {
    fn new(graph: &'a Graph) -> Distances<'a> {
        let table = (graph.n_nodes() <= TABLE_MAX_NODES).then(|| graph.all_pairs_distances());
        Distances { graph, table }
    }

    fn row(&self, u: usize) -> std::borrow::Cow<'_, [u32]> {
        let n = self.graph.n_nodes();
        match &self.table {
            Some(t) => std::borrow::Cow::Borrowed(&t[u * n..(u + 1) * n]),
            None => std::borrow::Cow::Owned(self.graph.bfs(u)),
        }
    }
}

/// Restricts to the largest connected component.
fn connected(graph: &Graph) -> (Graph, Option<usize>) {
    if graph.is_connected() {
        (graph.clone(), None)
    } else {
        let (g, ids) = graph.largest_component();
        (g, Some(ids.len()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSample {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    /// Midpoint of a shortest `b`-`c` path.
    pub m: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub histogram: Histogram,
    /// Size of the component analysed when the input was disconnected.
    pub component: Option<usize>,
}

/// `(d(a,m)² + d(b,c)²/4 - (d(a,b)² + d(a,c)²)/2) / (2 d(a,m))`.
pub fn triangle_curvature(d_am: u32, d_bc: u32, d_ab: u32, d_ac: u32) -> f64 {
    let (am, bc, ab, ac) = (d_am as f64, d_bc as f64, d_ab as f64, d_ac as f64);
    (am * am + bc * bc / 4.0 - (ab * ab + ac * ac) / 2.0) / (2.0 * am)
}

/// Midpoint of `b` and `c` with the smallest id, when `d(b,c)` is even and at
/// least 2.
fn midpoint(row_b: &[u32], row_c: &[u32], d_bc: u32) -> Option<usize> {
    if d_bc < 2 || d_bc == UNREACHABLE || d_bc % 2 == 1 {
        return None;
    }
    let h = d_bc / 2;
    row_b.iter().zip(row_c).position(|(&x, &y)| x == h && y == h)
}

fn summarize(values: &[f64], component: Option<usize>) -> CurvatureReport {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    CurvatureReport {
        mean,
        stderr: (var / k).sqrt(),
        samples: values.len(),
        histogram: Histogram::from_values(values, CURVATURE_BIN),
        component,
    }
}

/// Monte-Carlo sectional curvature: `b`, `c` uniform among pairs at even
/// distance ≥ 2, `m` their midpoint, `a` uniform among nodes other than `m`.
pub fn sectional_curvature<R: Rng>(graph: &Graph, n_samples: usize, rng: &mut R) -> AnalysisResult<CurvatureReport> {
    Ok(sectional_curvature_samples(graph, n_samples, rng)?.0)
}

/// As [`sectional_curvature`], also returning the individual samples.
pub fn sectional_curvature_samples<R: Rng>(
    graph: &Graph,
    n_samples: usize,
    rng: &mut R,
) -> AnalysisResult<(CurvatureReport, Vec<CurvatureSample>)> {
    if n_samples == 0 {
        return Err(AnalysisError::NoSamples);
    }
    let (g, component) = connected(graph);
    let n = g.n_nodes();
    let dist = Distances::new(&g);
    // a connected graph that is not complete has a pair at distance exactly 2
    if n < 3 || is_complete(&g) {
        return Err(AnalysisError::NoTriangles);
    }
    let mut out = Vec::with_capacity(n_samples);
    while out.len() < n_samples {
        let b = rng.gen_range(0..n);
        let c = rng.gen_range(0..n);
        let rb = dist.row(b);
        let d_bc = rb[c];
        let rc = dist.row(c);
        let Some(m) = midpoint(&rb, &rc, d_bc) else { continue };
        let mut a = rng.gen_range(0..n - 1);
        if a >= m {
            a += 1;
        }
        let ra = dist.row(a);
        let value = triangle_curvature(ra[m], d_bc, ra[b], ra[c]);
        out.push(CurvatureSample { a, b, c, m, value });
    }
    let values: Vec<f64> = out.iter().map(|s| s.value).collect();
    Ok((summarize(&values, component), out))
}

fn is_complete(g: &Graph) -> bool {
    let n = g.n_nodes();
    g.n_edges() == n * (n - 1) / 2
}

/// Every admissible triple: unordered `{b, c}` at even distance ≥ 2 and every `a ≠ m`.
pub fn sectional_curvature_exact(graph: &Graph) -> AnalysisResult<CurvatureReport> {
    let (g, component) = connected(graph);
    let n = g.n_nodes();
    let dist = Distances::new(&g);
    let mut values = Vec::new();
    for b in 0..n {
        let rb = dist.row(b);
        for c in b + 1..n {
            let rc = dist.row(c);
            let Some(m) = midpoint(&rb, &rc, rb[c]) else { continue };
            for a in (0..n).filter(|&a| a != m) {
                let ra = dist.row(a);
                values.push(triangle_curvature(ra[m], rb[c], ra[b], ra[c]));
            }
        }
    }
    if values.is_empty() {
        return Err(AnalysisError::NoTriangles);
    }
    Ok(summarize(&values, component))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaMode {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityReport {
    pub max_delta: f64,
    pub mean_delta: f64,
    pub quadruples: u64,
    /// True when every quadruple was enumerated.
    pub exhaustive: bool,
    pub histogram: Histogram,
    pub component: Option<usize>,
}

/// Four-point δ: half the gap between the two largest of the three pair sums.
pub fn four_point_delta(dxy: u32, dzw: u32, dxz: u32, dyw: u32, dxw: u32, dyz: u32) -> f64 {
    let mut s = [dxy + dzw, dxz + dyw, dxw + dyz];
    s.sort_unstable();
    (s[2] - s[1]) as f64 / 2.0
}

fn binom4(n: usize) -> u128 {
    if n < 4 {
        return 0;
    }
    let n = n as u128;
    n * (n - 1) * (n - 2) * (n - 3) / 24
}

/// δ distribution over quadruples of distinct nodes. Exact mode enumerates all
/// of them (≤ [`EXACT_DELTA_MAX_NODES`] nodes); sampled mode draws
/// `n_quadruples` uniformly, or enumerates when that covers every quadruple.
pub fn delta_hyperbolicity<R: Rng>(
    graph: &Graph,
    mode: DeltaMode,
    n_quadruples: usize,
    rng: &mut R,
) -> AnalysisResult<HyperbolicityReport> {
    let (g, component) = connected(graph);
    let n = g.n_nodes();
    if n < 4 {
        return Err(AnalysisError::TooSmall);
    }
    let exhaustive = match mode {
        DeltaMode::Exact => {
            if n > EXACT_DELTA_MAX_NODES {
                return Err(AnalysisError::TooLarge {
                    n,
                    limit: EXACT_DELTA_MAX_NODES,
                });
            }
            true
        }
        DeltaMode::Sampled => {
            if n_quadruples == 0 {
                return Err(AnalysisError::NoSamples);
            }
            n_quadruples as u128 >= binom4(n)
        }
    };
    let dist = Distances::new(&g);
    // counts indexed by 2δ
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    let mut total = 0u64;
    if exhaustive {
        let rows: Vec<Vec<u32>> = (0..n).map(|u| dist.row(u).into_owned()).collect();
        for x in 0..n {
            for y in x + 1..n {
                let dxy = rows[x][y];
                for z in y + 1..n {
                    let (dxz, dyz) = (rows[x][z], rows[y][z]);
                    for w in z + 1..n {
                        let d = four_point_delta(dxy, rows[z][w], dxz, rows[y][w], rows[x][w], dyz);
                        *counts.entry((2.0 * d) as u32).or_default() += 1;
                        total += 1;
                    }
                }
            }
        }
    } else {
        for _ in 0..n_quadruples {
            let q = rand::seq::index::sample(rng, n, 4);
            let (x, y, z, w) = (q.index(0), q.index(1), q.index(2), q.index(3));
            let (rx, ry) = (dist.row(x), dist.row(y));
            let rz = dist.row(z);
            let d = four_point_delta(rx[y], rz[w], rx[z], ry[w], rx[w], ry[z]);
            *counts.entry((2.0 * d) as u32).or_default() += 1;
            total += 1;
        }
    }
    let max_delta = counts.keys().next_back().map_or(0.0, |&k| k as f64 / 2.0);
    let mean_delta = counts.iter().map(|(&k, &c)| k as f64 / 2.0 * c as f64).sum::<f64>() / total as f64;
    let histogram = Histogram::weighted(counts.iter().map(|(&k, &c)| (k as f64 / 2.0, c as f64)), DELTA_BIN);
    Ok(HyperbolicityReport {
        max_delta,
        mean_delta,
        quadruples: total,
        exhaustive,
        histogram,
        component,
    })
}

/// Published maximum δ of the link-prediction benchmarks, by lower-case name.
pub fn published_max_delta(dataset: &str) -> Option<f64> {
    match dataset.to_ascii_lowercase().as_str() {
        "airport" => Some(1.0),
        "pubmed" => Some(3.5),
        "citeseer" => Some(4.5),
        "cora" => Some(11.0),
        _ => None,
    }
}

/// Published mean sectional curvature of the reconstruction benchmarks.
pub fn published_curvature(dataset: &str) -> Option<f64> {
    match dataset.to_ascii_lowercase().as_str() {
        "web-edu" | "webedu" => Some(-0.6),
        "power" => Some(-0.3),
        "bio-worm" | "bioworm" => Some(0.0),
        "facebook" => Some(0.1),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generators;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trees_have_nonpositive_curvature() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for g in [generators::path(9), generators::balanced_binary_tree(15), generators::star(5)] {
            let exact = sectional_curvature_exact(&g).unwrap();
            assert!(exact.mean <= 0.0);
            assert!(exact.histogram.bins.iter().all(|&(l, _, _)| l < 0.0 + 1e-12));
            let (_, samples) = sectional_curvature_samples(&g, 500, &mut rng).unwrap();
            assert!(samples.iter().all(|s| s.value <= 1e-12));
        }
    }

    #[test]
    fn cycle_has_positive_curvature() {
        let exact = sectional_curvature_exact(&generators::cycle(8)).unwrap();
        assert!(exact.mean > 0.0, "{}", exact.mean);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sectional_curvature(&generators::cycle(8), 4000, &mut rng).unwrap();
        assert!((s.mean - exact.mean).abs() < 3.0 * s.stderr.max(1e-12));
    }

    #[test]
    fn curvature_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sectional_curvature(&generators::path(5), 0, &mut rng), Err(AnalysisError::NoSamples));
        assert_eq!(sectional_curvature_exact(&generators::complete(5)), Err(AnalysisError::NoTriangles));
        assert_eq!(sectional_curvature(&generators::complete(5), 10, &mut rng), Err(AnalysisError::NoTriangles));
    }

    #[test]
    fn four_point_examples() {
        // C_4: opposite pairs at distance 2, sides at 1
        assert_eq!(four_point_delta(1, 1, 2, 2, 1, 1), 1.0);
        assert_eq!(four_point_delta(1, 1, 1, 1, 1, 1), 0.0);
    }

    #[test]
    fn trees_are_zero_hyperbolic() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for g in [generators::star(4), generators::balanced_binary_tree(31), generators::path(12)] {
            let r = delta_hyperbolicity(&g, DeltaMode::Exact, 0, &mut rng).unwrap();
            assert_eq!(r.max_delta, 0.0);
            assert_eq!(r.histogram.bins, vec![(0.0, 0.5, 1.0)]);
        }
    }

    #[test]
    fn exhaustive_sampling_matches_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = generators::cycle(12);
        let exact = delta_hyperbolicity(&g, DeltaMode::Exact, 0, &mut rng).unwrap();
        let sampled = delta_hyperbolicity(&g, DeltaMode::Sampled, 495, &mut rng).unwrap();
        assert!(sampled.exhaustive);
        assert_eq!(exact, sampled);
        assert_eq!(exact.quadruples, 495);
        assert!(exact.max_delta > 0.0);
        let partial = delta_hyperbolicity(&g, DeltaMode::Sampled, 200, &mut rng).unwrap();
        assert!(!partial.exhaustive && partial.max_delta <= exact.max_delta);
    }

    #[test]
    fn histogram_masses_sum_to_one() {
        let h = Histogram::from_values(&[0.0, 0.5, 0.5, 1.0, -0.3], 0.5);
        let total: f64 = h.bins.iter().map(|b| b.2).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert_eq!(h.bins[0], (-0.5, 0.0, 0.2));
        assert!(h.to_csv().starts_with("bin_left,bin_right,mass\n-0.5,0,0.2\n"));
    }

    #[test]
    fn oversized_exact_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = generators::path(201);
        assert!(matches!(
            delta_hyperbolicity(&g, DeltaMode::Exact, 0, &mut rng),
            Err(AnalysisError::TooLarge { .. })
        ));
    }
}
