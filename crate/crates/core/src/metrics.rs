//! Evaluation metrics: reconstruction mAP, ROC-AUC, F1 and distortion.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesic::kernel;
use crate::graph::{Graph, UNREACHABLE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("ROC-AUC needs at least one positive and one negative")]
    SingleClass,
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("label {label} out of range for {classes} classes")]
    LabelRange { label: usize, classes: usize },
    #[error("graph is disconnected; distortion needs finite graph distances")]
    Disconnected,
    #[error("no nodes with neighbours to evaluate")]
    NoEvaluableNodes,
}

/// Symmetric `n × n` row-major distance matrix of embedded points.
pub fn embedding_distances(points: &[Vec<f64>], time_dims: usize, beta: f64) -> Vec<f64> {
    let n = points.len();
    let mut d = vec![0.0; n * n];
    for u in 0..n {
        for v in u + 1..n {
            let x = kernel::distance(&points[u], &points[v], time_dims, beta);
            d[u * n + v] = x;
            d[v * n + u] = x;
        }
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub map: f64,
    pub evaluated: usize,
    /// Isolated nodes, which have no neighbours to rank.
    pub skipped_isolated: usize,
}

/// Mean average precision of graph neighbours under distance ranking.
///
/// For node `u` and neighbour `v`, `R_{u,v}` is every node `w ≠ u` with
/// `d(u,w) ≤ d(u,v)`; tied non-neighbours therefore count against the neighbour.
/// `dist` is the row-major `n × n` distance matrix.
pub fn map_metric(dist: &[f64], graph: &Graph) -> Result<MapReport, MetricError> {
    let n = graph.n_nodes();
    if dist.len() != n * n {
        return Err(MetricError::Length(dist.len(), n * n));
    }
    let mut total = 0.0;
    let mut evaluated = 0usize;
    let mut skipped = 0usize;
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut within = vec![0usize; n];
    let mut neigh_within = vec![0usize; n];
    for u in 0..n {
        let nb = graph.neighbors(u);
        if nb.is_empty() {
            skipped += 1;
            continue;
        }
        let row = &dist[u * n..(u + 1) * n];
        order.clear();
        order.extend((0..n).filter(|&w| w != u));
        order.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
        // cumulative counts at the end of each tie group
        let mut i = 0;
        let mut seen = 0usize;
        let mut seen_nb = 0usize;
        while i < order.len() {
            let mut j = i;
            while j < order.len() && row[order[j]] == row[order[i]] {
                seen += 1;
                if graph.has_edge(u, order[j]) {
                    seen_nb += 1;
                }
                j += 1;
            }
            for &w in &order[i..j] {
                within[w] = seen;
                neigh_within[w] = seen_nb;
            }
            i = j;
        }
        let mut ap = 0.0;
        for &v in nb {
            ap += neigh_within[v] as f64 / within[v] as f64;
        }
        total += ap / nb.len() as f64;
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(MetricError::NoEvaluableNodes);
    }
    Ok(MapReport {
        map: total / evaluated as f64,
        evaluated,
        skipped_isolated: skipped,
    })
}

/// Area under the ROC curve as the Mann–Whitney statistic, ties earning half credit.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::Length(scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of (1-based, tie-averaged) ranks of the positives, doubled to stay integral
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        let pos_in_group = idx[i..j].iter().filter(|&&k| labels[k]).count() as u128;
        // average rank of the group is (i + 1 + j) / 2
        rank_sum2 += pos_in_group * (i as u128 + 1 + j as u128);
        i = j;
    }
    let np = n_pos as u128;
    let u2 = rank_sum2 - np * (np + 1);
    Ok(u2 as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub micro: f64,
    pub macro_: f64,
}

/// Micro (equal to accuracy for single-label data) and macro F1 over classes
/// `0..n_classes`; classes absent from both predictions and labels are skipped
/// in the macro average.
pub fn f1(pred: &[usize], labels: &[usize], n_classes: usize) -> Result<F1Scores, MetricError> {
    if pred.len() != labels.len() {
        return Err(MetricError::Length(pred.len(), labels.len()));
    }
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fn_ = vec![0usize; n_classes];
    for (&p, &l) in pred.iter().zip(labels) {
        for c in [p, l] {
            if c >= n_classes {
                return Err(MetricError::LabelRange {
                    label: c,
                    classes: n_classes,
                });
            }
        }
        if p == l {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[l] += 1;
        }
    }
    let (stp, sfp, sfn) = (
        tp.iter().sum::<usize>() as f64,
        fp.iter().sum::<usize>() as f64,
        fn_.iter().sum::<usize>() as f64,
    );
    let micro = if stp == 0.0 { 0.0 } else { 2.0 * stp / (2.0 * stp + sfp + sfn) };
    let mut sum = 0.0;
    let mut present = 0usize;
    for c in 0..n_classes {
        if tp[c] + fp[c] + fn_[c] == 0 {
            continue;
        }
        present += 1;
        sum += 2.0 * tp[c] as f64 / (2 * tp[c] + fp[c] + fn_[c]) as f64;
    }
    let macro_ = if present == 0 { 0.0 } else { sum / present as f64 };
    Ok(F1Scores { micro, macro_ })
}

fn pair_distortion(d: f64, dg: u32) -> f64 {
    let r = d / dg as f64;
    let e = r * r - 1.0;
    e * e
}

/// `(1/|V|²) Σ_{u≠v} ((d(u,v)/d_G(u,v))² - 1)²` over all ordered pairs.
pub fn distortion(dist: &[f64], graph: &Graph) -> Result<f64, MetricError> {
    let n = graph.n_nodes();
    if dist.len() != n * n {
        return Err(MetricError::Length(dist.len(), n * n));
    }
    let mut total = 0.0;
    for u in 0..n {
        let dg = graph.bfs(u);
        for v in 0..n {
            if v == u {
                continue;
            }
            if dg[v] == UNREACHABLE {
                return Err(MetricError::Disconnected);
            }
            total += pair_distortion(dist[u * n + v], dg[v]);
        }
    }
    Ok(total / (n * n) as f64)
}

/// Monte-Carlo estimate of [`distortion`] from `n_pairs` uniformly drawn ordered
/// pairs; returns `(estimate, standard error)`. `dist_fn` gives embedding distances.
pub fn distortion_sampled<R: Rng, F: Fn(usize, usize) -> f64>(
    dist_fn: F,
    graph: &Graph,
    n_pairs: usize,
    rng: &mut R,
) -> Result<(f64, f64), MetricError> {
    let n = graph.n_nodes();
    if n < 2 || n_pairs == 0 {
        return Err(MetricError::NoEvaluableNodes);
    }
    if !graph.is_connected() {
        return Err(MetricError::Disconnected);
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut cache: std::collections::HashMap<usize, Vec<u32>> = Default::default();
    for _ in 0..n_pairs {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        // the exact sum includes the zero diagonal only through the 1/|V|² factor
        let x = if u == v {
            0.0
        } else {
            let dg = cache.entry(u).or_insert_with(|| graph.bfs(u))[v];
            pair_distortion(dist_fn(u, v), dg)
        };
        sum += x;
        sum_sq += x * x;
    }
    let m = n_pairs as f64;
    let mean = sum / m;
    let var = (sum_sq / m - mean * mean).max(0.0);
    Ok((mean, (var / m).sqrt()))
}
