//! Layer building blocks, generic over [`Real`] so that one definition serves
//! both plain evaluation and taped differentiation.

use serde::{Deserialize, Serialize};

use crate::autodiff::{logsumexp, matvec, Real};
use crate::error::{GeomError, GeomResult};
use crate::geodesic::kernel;
use crate::graph::Graph;
use crate::manifold::{inner, project_point};

/// Tangential activation, applied coordinatewise to tangent coordinates at `o`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
    Elu,
}

impl Activation {
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.relu(),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => x.sigmoid(),
            Activation::Elu => x.elu(),
        }
    }

    pub fn parse(s: &str) -> Option<Activation> {
        Some(match s {
            "identity" | "none" | "linear" => Activation::Identity,
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            "elu" => Activation::Elu,
            _ => return None,
        })
    }
}

/// Neighbourhood reduction in the tangent space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Sum,
    Mean,
}

/// `-softplus(raw)`, always strictly negative.
pub fn curvature<T: Real>(raw: T) -> T {
    -raw.softplus()
}

/// `raw` such that [`curvature`] returns `beta`.
pub fn curvature_raw(beta: f64) -> f64 {
    let a = -beta;
    // softplus⁻¹(a) = ln(e^a - 1)
    if a > 30.0 {
        a + (-(-a).exp()).ln_1p()
    } else {
        a.exp_m1().ln()
    }
}

/// Perturbs every coordinate by `noise` and projects onto `Q_β` by `ψ⁻¹∘ψ`.
/// With a single time coordinate the upper sheet is chosen.
pub fn init_point<T: Real>(raw: &[T], noise: &[f64], time_dims: usize, beta: T) -> GeomResult<Vec<T>> {
    let mut x: Vec<T> = raw.iter().zip(noise).map(|(&r, &e)| r + e).collect();
    if time_dims == 1 && x[0].value() < 0.0 {
        x[0] = -x[0];
    }
    project_point(&x, time_dims, beta).ok_or(GeomError::DegenerateTimeBlock)
}

/// `W ⊗ h`: diff_log at the input south pole, multiply by the row-major
/// `d_out × d_in` matrix `w`, zero the first coordinate, diff_exp at the output
/// south pole. `dropout` scales the input tangent coordinates.
#[allow(clippy::too_many_arguments)]
pub fn transform<T: Real>(
    w: &[T],
    h: &[T],
    td_in: usize,
    td_out: usize,
    d_out: usize,
    beta_in: T,
    beta_out: T,
    dropout: Option<&[f64]>,
) -> GeomResult<Vec<T>> {
    let mut xi = kernel::diff_log_o(h, td_in, beta_in)?;
    if let Some(mask) = dropout {
        for (v, &m) in xi.iter_mut().zip(mask) {
            *v = *v * m;
        }
    }
    let mut y = matvec(w, d_out, h.len(), &xi);
    y[0] = T::zero();
    kernel::diff_exp_o(&y, td_out, beta_out)
}

/// `h ⊕ b`: parallel transport of `b ∈ T_o` to `h` followed by exp at `h`, with the
/// antipodal branch `-exp_{-h}(P_{o→-h}(b))` when `h` is not g-connected to `o`.
pub fn bias_translate<T: Real>(h: &[T], b: &[T], time_dims: usize, beta: T) -> GeomResult<Vec<T>> {
    let o = kernel::south_pole(h.len(), beta);
    let connected = inner(&o, h, time_dims).value() < -beta.value();
    if connected {
        let pb = kernel::transport(&o, h, b, time_dims, beta)?;
        Ok(kernel::exp(h, &pb, time_dims, beta))
    } else {
        let neg: Vec<T> = h.iter().map(|&c| -c).collect();
        let pb = kernel::transport(&o, &neg, b, time_dims, beta)?;
        Ok(kernel::exp(&neg, &pb, time_dims, beta)
            .into_iter()
            .map(|c| -c)
            .collect())
    }
}

/// Bias vector in ambient coordinates: the free coordinates `b_free` after a leading zero.
pub fn bias_vector<T: Real>(b_free: &[T]) -> Vec<T> {
    let mut b = Vec::with_capacity(b_free.len() + 1);
    b.push(T::zero());
    b.extend_from_slice(b_free);
    b
}

/// Layer parameters as slices into a parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct LayerView<'a, T> {
    /// Row-major `d_out × d_in`.
    pub w: &'a [T],
    /// Free bias coordinates, length `d_out - 1`.
    pub b: &'a [T],
    pub beta_in: T,
    pub beta_out: T,
    pub td_in: usize,
    pub td_out: usize,
    pub d_out: usize,
    pub activation: Activation,
    pub aggregation: Aggregation,
}

/// `z = (W ⊗ h) ⊕ b`, mapped to tangent coordinates at `o`; the per-node message.
fn message<T: Real>(layer: &LayerView<'_, T>, h: &[T], dropout: Option<&[f64]>) -> GeomResult<Vec<T>> {
    let t = transform(
        layer.w,
        h,
        layer.td_in,
        layer.td_out,
        layer.d_out,
        layer.beta_in,
        layer.beta_in,
        dropout,
    )?;
    let b = bias_vector(layer.b);
    let z = bias_translate(&t, &b, layer.td_out, layer.beta_in)?;
    kernel::diff_log_o(&z, layer.td_out, layer.beta_in)
}

/// `σ` in tangent coordinates with the first coordinate re-zeroed, then diff_exp
/// at the output curvature.
fn finish<T: Real>(layer: &LayerView<'_, T>, mut u: Vec<T>) -> GeomResult<Vec<T>> {
    for v in u.iter_mut() {
        *v = layer.activation.apply(*v);
    }
    u[0] = T::zero();
    kernel::diff_exp_o(&u, layer.td_out, layer.beta_out)
}

/// One graph convolution: per node `i`,
/// `h'_i = exp_o^{β'}(σ(Σ_{j ∈ N(i) ∪ {i}} log_o^β((W ⊗ h_j) ⊕ b)))`.
pub fn layer_forward<T: Real>(
    h: &[Vec<T>],
    graph: &Graph,
    layer: &LayerView<'_, T>,
    dropout: Option<&[Vec<f64>]>,
) -> GeomResult<Vec<Vec<T>>> {
    let msgs: Vec<Vec<T>> = h
        .iter()
        .enumerate()
        .map(|(j, hj)| message(layer, hj, dropout.map(|m| m[j].as_slice())))
        .collect::<GeomResult<_>>()?;
    (0..h.len())
        .map(|i| {
            let mut acc = msgs[i].clone();
            for &j in graph.neighbors(i) {
                for (a, &m) in acc.iter_mut().zip(&msgs[j]) {
                    *a += m;
                }
            }
            if layer.aggregation == Aggregation::Mean {
                let k = 1.0 / (graph.degree(i) + 1) as f64;
                for a in acc.iter_mut() {
                    *a = *a * k;
                }
            }
            finish(layer, acc)
        })
        .collect()
}

/// The self-only layer `σ^⊗(W ⊗ x ⊕ b)`.
pub fn qnn_layer<T: Real>(x: &[T], layer: &LayerView<'_, T>) -> GeomResult<Vec<T>> {
    finish(layer, message(layer, x, None)?)
}

/// Mean of the diff_log_o of each layer output (each at its own curvature),
/// mapped back at `beta_final`.
pub fn skip_combine<T: Real>(
    layers: &[Vec<Vec<T>>],
    betas: &[T],
    time_dims: usize,
    beta_final: T,
) -> GeomResult<Vec<Vec<T>>> {
    let first = layers.first().ok_or_else(|| GeomError::Invalid("no layers to combine".into()))?;
    let n = first.len();
    let dim = first.first().map_or(0, |p| p.len());
    if layers.iter().any(|l| l.len() != n || l.iter().any(|p| p.len() != dim)) {
        return Err(GeomError::Invalid("skip connection needs equal layer widths".into()));
    }
    let k = 1.0 / layers.len() as f64;
    (0..n)
        .map(|i| {
            let mut acc = vec![T::zero(); dim];
            for (l, &beta) in layers.iter().zip(betas) {
                let xi = kernel::diff_log_o(&l[i], time_dims, beta)?;
                for (a, v) in acc.iter_mut().zip(xi) {
                    *a += v;
                }
            }
            let mean: Vec<T> = acc.into_iter().map(|a| a * k).collect();
            kernel::diff_exp_o(&mean, time_dims, beta_final)
        })
        .collect()
}

/// `1 / (exp((d - r)/temp) + 1)`.
pub fn fermi_dirac<T: Real>(d: T, r: f64, temp: f64) -> T {
    ((-d + r) / temp).sigmoid()
}

/// Negatives used by the reconstruction loss.
#[derive(Debug, Clone, PartialEq)]
pub enum NegativeSet {
    /// Every non-neighbour of `u` for each positive `(u, v)`.
    AllNonNeighbors,
    /// Explicit `(u, v, negatives)` triples.
    Sampled(Vec<(usize, usize, Vec<usize>)>),
}

/// Distance function on embeddings, generic over the scalar type.
pub trait Metric<T: Real> {
    fn dist(&self, x: &[T], y: &[T]) -> T;
}

/// Broken-geodesic distance on `Q_β` with `time_dims` time coordinates.
pub struct PseudoMetric<T> {
    pub time_dims: usize,
    pub beta: T,
}

impl<T: Real> Metric<T> for PseudoMetric<T> {
    fn dist(&self, x: &[T], y: &[T]) -> T {
        kernel::distance(x, y, self.time_dims, self.beta)
    }
}

/// Euclidean distance, for the flat reference model.
pub struct EuclideanMetric;

impl<T: Real> Metric<T> for EuclideanMetric {
    fn dist(&self, x: &[T], y: &[T]) -> T {
        let mut acc = T::zero();
        for (&a, &b) in x.iter().zip(y) {
            let d = a - b;
            acc += d * d;
        }
        acc.sqrt()
    }
}

/// Negative log-likelihood of each positive pair under a softmax over
/// `{v} ∪ E(u)` of `-d(u, ·)`, averaged over directed positive pairs.
pub fn reconstruction_loss<T: Real, M: Metric<T>>(
    emb: &[Vec<T>],
    graph: &Graph,
    negatives: &NegativeSet,
    metric: &M,
) -> GeomResult<T> {
    match negatives {
        NegativeSet::AllNonNeighbors => {
            let n = emb.len();
            let mut d = vec![T::zero(); n * n];
            for u in 0..n {
                for w in u + 1..n {
                    let x = metric.dist(&emb[u], &emb[w]);
                    d[u * n + w] = x;
                    d[w * n + u] = x;
                }
            }
            let mut total = T::zero();
            let mut count = 0usize;
            let mut neg_scores = Vec::with_capacity(n);
            for u in 0..n {
                let nb = graph.neighbors(u);
                if nb.is_empty() {
                    continue;
                }
                neg_scores.clear();
                neg_scores.extend(
                    (0..n)
                        .filter(|&w| w != u && !graph.has_edge(u, w))
                        .map(|w| -d[u * n + w]),
                );
                if neg_scores.is_empty() {
                    return Err(GeomError::Invalid(format!("node {u} has no negative candidates")));
                }
                let neg_lse = logsumexp(&neg_scores);
                for &v in nb {
                    let dv = d[u * n + v];
                    total += logsumexp(&[-dv, neg_lse]) + dv;
                    count += 1;
                }
            }
            if count == 0 {
                return Err(GeomError::Invalid("graph has no edges".into()));
            }
            Ok(total / count as f64)
        }
        NegativeSet::Sampled(triples) => {
            if triples.is_empty() {
                return Err(GeomError::Invalid("no positive pairs".into()));
            }
            let mut total = T::zero();
            let mut scores = Vec::new();
            for (u, v, negs) in triples {
                if negs.is_empty() {
                    return Err(GeomError::Invalid(format!("node {u} has no negative candidates")));
                }
                let dv = metric.dist(&emb[*u], &emb[*v]);
                scores.clear();
                scores.push(-dv);
                scores.extend(negs.iter().map(|&w| -metric.dist(&emb[*u], &emb[w])));
                total += logsumexp(&scores) + dv;
            }
            Ok(total / triples.len() as f64)
        }
    }
}

/// Binary cross-entropy of the Fermi-Dirac edge probability on positive and
/// negative pairs, averaged over all pairs.
pub fn link_loss<T: Real, M: Metric<T>>(
    emb: &[Vec<T>],
    pos: &[(usize, usize)],
    neg: &[(usize, usize)],
    metric: &M,
    r: f64,
    temp: f64,
) -> T {
    let mut total = T::zero();
    // -log σ(z) = softplus(-z), -log(1 - σ(z)) = softplus(z), z = (r - d)/temp
    for &(u, v) in pos {
        let z = (-metric.dist(&emb[u], &emb[v]) + r) / temp;
        total += (-z).softplus();
    }
    for &(u, v) in neg {
        let z = (-metric.dist(&emb[u], &emb[v]) + r) / temp;
        total += z.softplus();
    }
    total / (pos.len() + neg.len()).max(1) as f64
}

/// Class logits `W ξ + b` of a tangent vector `ξ` (row-major `classes × dim`).
pub fn nc_logits<T: Real>(xi: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let mut l = matvec(w, b.len(), xi.len(), xi);
    for (v, &bias) in l.iter_mut().zip(b) {
        *v += bias;
    }
    l
}

/// Mean cross-entropy of `logits[i]` against `labels[i]` over `nodes`.
pub fn cross_entropy<T: Real>(logits: &[Vec<T>], labels: &[usize], nodes: &[usize]) -> GeomResult<T> {
    if nodes.is_empty() {
        return Err(GeomError::Invalid("no labelled nodes".into()));
    }
    let mut total = T::zero();
    for &i in nodes {
        let l = &logits[i];
        let y = labels[i];
        if y >= l.len() {
            return Err(GeomError::Invalid(format!(
                "label {y} out of range for {} classes",
                l.len()
            )));
        }
        total += logsumexp(l) - l[y];
    }
    Ok(total / nodes.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generators;

    #[test]
    fn curvature_parametrisation_round_trips() {
        for &b in &[-1.0, -0.25, -4.0, -40.0, -1e-3] {
            let c: f64 = curvature(curvature_raw(b));
            assert!((c - b).abs() <= 1e-12 * b.abs().max(1.0), "{b} {c}");
        }
        assert!(curvature(-50.0f64) < 0.0);
    }

    #[test]
    fn fermi_dirac_values() {
        assert_eq!(fermi_dirac(2.0, 2.0, 1.0), 0.5);
        let p0: f64 = fermi_dirac(0.0, 2.0, 1.0);
        assert!((p0 - 1.0 / ((-2f64).exp() + 1.0)).abs() < 1e-15);
        assert!(fermi_dirac(1e3, 2.0, 1.0) < 1e-300);
        assert!(fermi_dirac(1.0, 2.0, 1.0) > fermi_dirac(1.5, 2.0, 1.0));
    }

    #[test]
    fn reconstruction_loss_uniform_softmax() {
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        // all pairwise Euclidean distances 1
        let s = 0.5f64.sqrt();
        let emb = vec![vec![s, 0.0, 0.0], vec![0.0, s, 0.0], vec![0.0, 0.0, s]];
        let l = reconstruction_loss(&emb, &g, &NegativeSet::AllNonNeighbors, &EuclideanMetric).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        let far = vec![vec![0.0], vec![0.0], vec![1e3]];
        let l = reconstruction_loss(&far, &g, &NegativeSet::AllNonNeighbors, &EuclideanMetric).unwrap();
        assert!(l < 1e-300);
        assert!(reconstruction_loss(&emb, &generators::complete(3), &NegativeSet::AllNonNeighbors, &EuclideanMetric).is_err());
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let logits = vec![vec![0.3; 4]; 2];
        let l = cross_entropy(&logits, &[1, 3], &[0, 1]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-15);
        assert!(cross_entropy(&logits, &[4, 0], &[0]).is_err());
    }
}
