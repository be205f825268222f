//! Pseudo-Riemannian graph convolutional network and a flat reference model.

pub mod ops;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{GeomError, GeomResult};
use crate::geodesic::kernel;
use crate::graph::Graph;
use crate::manifold::{PseudoPoint, Signature};
pub use ops::{Activation, Aggregation, NegativeSet};
use ops::{curvature, curvature_raw, LayerView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    /// Q-GCN on pseudo-hyperboloids.
    Pseudo,
    /// Plain GCN in Euclidean space.
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub geometry: Geometry,
    /// `(s, t)` of the input manifold followed by one entry per layer output.
    pub signatures: Vec<(usize, usize)>,
    /// Initial value of every layer curvature.
    pub init_beta: f64,
    pub activation: Activation,
    /// Activation of the last layer.
    pub output_activation: Activation,
    pub aggregation: Aggregation,
    /// Decode from the mean of all layer outputs instead of the last one.
    pub skip: bool,
    /// Number of input features per node; with `one_hot` this is the node count.
    pub input_dim: usize,
    pub one_hot: bool,
    /// Classes of the node classification head, 0 for none.
    pub classes: usize,
    /// Uniform feature perturbation half-width.
    pub eps: f64,
    pub fd_r: f64,
    pub fd_temp: f64,
}

impl ModelConfig {
    /// `layers` layers of signature `(s, t)` on one-hot inputs for `n` nodes.
    pub fn uniform(s: usize, t: usize, layers: usize, n: usize) -> ModelConfig {
        ModelConfig {
            geometry: Geometry::Pseudo,
            signatures: vec![(s, t); layers + 1],
            init_beta: -1.0,
            activation: Activation::Tanh,
            output_activation: Activation::Tanh,
            aggregation: Aggregation::Sum,
            skip: true,
            input_dim: n,
            one_hot: true,
            classes: 0,
            eps: 0.02,
            fd_r: 2.0,
            fd_temp: 1.0,
        }
    }

    pub fn layers(&self) -> usize {
        self.signatures.len().saturating_sub(1)
    }

    pub fn dim(&self, l: usize) -> usize {
        let (s, t) = self.signatures[l];
        s + t + 1
    }

    pub fn time_dims(&self, l: usize) -> usize {
        self.signatures[l].1 + 1
    }

    pub fn validate(&self) -> GeomResult<()> {
        if self.signatures.len() < 2 {
            return Err(GeomError::Invalid("at least one layer is required".into()));
        }
        for &(s, t) in &self.signatures {
            Signature::new(s, t, -1.0)?;
        }
        if !(self.init_beta < 0.0) || !self.init_beta.is_finite() {
            return Err(GeomError::InvalidCurvature(self.init_beta));
        }
        if self.input_dim == 0 {
            return Err(GeomError::Invalid("input dimension must be positive".into()));
        }
        if self.skip && self.signatures[1..].iter().any(|&st| st != self.signatures[self.layers()]) {
            return Err(GeomError::Invalid("skip connection needs equal layer signatures".into()));
        }
        if !(self.fd_temp > 0.0) {
            return Err(GeomError::Invalid("Fermi-Dirac temperature must be positive".into()));
        }
        Ok(())
    }

    pub fn layer_activation(&self, l: usize) -> Activation {
        if l + 1 == self.layers() {
            self.output_activation
        } else {
            self.activation
        }
    }

    /// Whether raw features go through a learned projection.
    pub fn has_input_projection(&self) -> bool {
        self.one_hot || self.input_dim != self.dim(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Parameter layout. Curvature parameters come last so that they can be
/// optimised as a separate group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub specs: Vec<ParamSpec>,
    pub total: usize,
    /// Start of the curvature block.
    pub curvature_offset: usize,
}

impl Layout {
    fn new(cfg: &ModelConfig) -> Layout {
        let mut specs = Vec::new();
        let mut off = 0;
        fn add(name: String, shape: Vec<usize>, specs: &mut Vec<ParamSpec>, off: &mut usize) {
            let len: usize = shape.iter().product();
            specs.push(ParamSpec { name, shape, offset: *off });
            *off += len;
        }
        if cfg.has_input_projection() {
            add("input_proj".into(), vec![cfg.dim(0), cfg.input_dim], &mut specs, &mut off);
        }
        let flat = cfg.geometry == Geometry::Euclidean;
        for l in 0..cfg.layers() {
            let (din, dout) = (cfg.dim(l), cfg.dim(l + 1));
            add(format!("w{l}"), vec![dout, din], &mut specs, &mut off);
            add(format!("b{l}"), vec![if flat { dout } else { dout - 1 }], &mut specs, &mut off);
        }
        if cfg.classes > 0 {
            add("cls_w".into(), vec![cfg.classes, cfg.dim(cfg.layers())], &mut specs, &mut off);
            add("cls_b".into(), vec![cfg.classes], &mut specs, &mut off);
        }
        let curvature_offset = off;
        if !flat {
            add("beta_raw".into(), vec![cfg.layers() + 1], &mut specs, &mut off);
        }
        Layout {
            specs,
            total: off,
            curvature_offset,
        }
    }

    pub fn get(&self, name: &str) -> Option<&ParamSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    fn slice<'a, T>(&self, data: &'a [T], name: &str) -> &'a [T] {
        let spec = self.get(name).expect("parameter exists");
        &data[spec.range()]
    }
}

/// Output of a forward pass.
#[derive(Debug, Clone)]
pub struct Embedding<T> {
    pub points: Vec<Vec<T>>,
    /// Curvature of the decoder manifold (unused for the flat model).
    pub beta: T,
    pub time_dims: usize,
}

/// Per-node dropout multipliers on each layer's input tangent vector.
pub type DropoutMasks = Vec<Vec<Vec<f64>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub layout: Layout,
    pub params: Vec<f64>,
    /// Feature perturbation, drawn once at construction (`n × d_0`).
    pub noise: Vec<Vec<f64>>,
}

fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect()
}

impl Model {
    /// Random initialisation for a graph with `n_nodes` nodes.
    pub fn new<R: Rng>(config: ModelConfig, n_nodes: usize, rng: &mut R) -> GeomResult<Model> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        for spec in &layout.specs {
            let r = spec.range();
            if spec.name == "beta_raw" {
                params[r].fill(curvature_raw(config.init_beta));
            } else if spec.shape.len() == 2 {
                params[r].copy_from_slice(&glorot(spec.shape[0], spec.shape[1], rng));
            }
        }
        let d0 = config.dim(0);
        let noise = (0..n_nodes)
            .map(|_| {
                (0..d0)
                    .map(|_| if config.eps > 0.0 { rng.gen_range(-config.eps..=config.eps) } else { 0.0 })
                    .collect()
            })
            .collect();
        Ok(Model {
            config,
            layout,
            params,
            noise,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Current curvatures `β_0, …, β_L`.
    pub fn curvatures(&self) -> Vec<f64> {
        match self.layout.get("beta_raw") {
            Some(spec) => self.params[spec.range()].iter().map(|&r| curvature(r)).collect(),
            None => Vec::new(),
        }
    }

    /// Decoder signature (flat models report `β = -1` as a placeholder).
    pub fn output_signature(&self) -> GeomResult<Signature> {
        let (s, t) = self.config.signatures[self.config.layers()];
        let beta = self.curvatures().last().copied().unwrap_or(-1.0);
        Signature::new(s, t, beta)
    }

    /// Copies every parameter whose name and shape match `other`.
    pub fn warm_start_from(&mut self, other: &Model) -> usize {
        let mut copied = 0;
        for spec in &self.layout.specs {
            if let Some(o) = other.layout.get(&spec.name) {
                if o.shape == spec.shape {
                    self.params[spec.range()].copy_from_slice(&other.params[o.range()]);
                    copied += 1;
                }
            }
        }
        copied
    }

    /// Raw input vector of node `i` before perturbation.
    fn raw_input<T: Real>(&self, p: &[T], graph: &Graph, i: usize) -> GeomResult<Vec<T>> {
        let cfg = &self.config;
        let d0 = cfg.dim(0);
        if cfg.one_hot {
            let proj = self.layout.slice(p, "input_proj");
            return Ok((0..d0).map(|r| proj[r * cfg.input_dim + i]).collect());
        }
        let feats = graph
            .features()
            .ok_or_else(|| GeomError::Invalid("model expects node features".into()))?;
        let f = &feats[i];
        if f.len() != cfg.input_dim {
            return Err(GeomError::DimensionMismatch {
                expected: cfg.input_dim,
                got: f.len(),
            });
        }
        if cfg.has_input_projection() {
            let proj = self.layout.slice(p, "input_proj");
            Ok((0..d0)
                .map(|r| {
                    let row = &proj[r * cfg.input_dim..(r + 1) * cfg.input_dim];
                    let mut acc = T::zero();
                    for (&w, &x) in row.iter().zip(f) {
                        if x != 0.0 {
                            acc += w * x;
                        }
                    }
                    acc
                })
                .collect())
        } else {
            Ok(f.iter().map(|&x| T::cst(x)).collect())
        }
    }

    /// Initial node embeddings on the input manifold.
    pub fn input_points<T: Real>(&self, p: &[T], graph: &Graph) -> GeomResult<Vec<Vec<T>>> {
        let n = graph.n_nodes();
        if self.noise.len() != n {
            return Err(GeomError::Invalid(format!(
                "model was built for {} nodes, graph has {n}",
                self.noise.len()
            )));
        }
        let betas = self.betas(p);
        (0..n)
            .map(|i| {
                let raw = self.raw_input(p, graph, i)?;
                match self.config.geometry {
                    Geometry::Pseudo => ops::init_point(&raw, &self.noise[i], self.config.time_dims(0), betas[0]),
                    Geometry::Euclidean => Ok(raw
                        .into_iter()
                        .zip(&self.noise[i])
                        .map(|(r, &e)| r + e)
                        .collect()),
                }
            })
            .collect()
    }

    fn betas<T: Real>(&self, p: &[T]) -> Vec<T> {
        match self.layout.get("beta_raw") {
            Some(spec) => p[spec.range()].iter().map(|&r| curvature(r)).collect(),
            None => Vec::new(),
        }
    }

    fn layer_view<'a, T: Real>(&self, p: &'a [T], betas: &[T], l: usize) -> LayerView<'a, T> {
        let cfg = &self.config;
        LayerView {
            w: self.layout.slice(p, &format!("w{l}")),
            b: self.layout.slice(p, &format!("b{l}")),
            beta_in: betas[l],
            beta_out: betas[l + 1],
            td_in: cfg.time_dims(l),
            td_out: cfg.time_dims(l + 1),
            d_out: cfg.dim(l + 1),
            activation: cfg.layer_activation(l),
            aggregation: cfg.aggregation,
        }
    }

    /// Full forward pass with parameters `p` (plain or taped).
    pub fn forward<T: Real>(
        &self,
        p: &[T],
        graph: &Graph,
        dropout: Option<&DropoutMasks>,
    ) -> GeomResult<Embedding<T>> {
        if p.len() != self.layout.total {
            return Err(GeomError::DimensionMismatch {
                expected: self.layout.total,
                got: p.len(),
            });
        }
        let cfg = &self.config;
        let mut h = self.input_points(p, graph)?;
        let layers = cfg.layers();
        let td = cfg.time_dims(layers);
        match cfg.geometry {
            Geometry::Pseudo => {
                let betas = self.betas(p);
                let mut outputs = Vec::with_capacity(layers);
                for l in 0..layers {
                    let view = self.layer_view(p, &betas, l);
                    let masks = dropout.map(|m| m[l].as_slice());
                    h = ops::layer_forward(&h, graph, &view, masks)?;
                    if cfg.skip {
                        outputs.push(h.clone());
                    }
                }
                let beta = betas[layers];
                let points = if cfg.skip && layers > 1 {
                    ops::skip_combine(&outputs, &betas[1..], td, beta)?
                } else {
                    h
                };
                Ok(Embedding {
                    points,
                    beta,
                    time_dims: td,
                })
            }
            Geometry::Euclidean => {
                let mut outputs: Vec<Vec<Vec<T>>> = Vec::with_capacity(layers);
                for l in 0..layers {
                    let w = self.layout.slice(p, &format!("w{l}"));
                    let b = self.layout.slice(p, &format!("b{l}"));
                    let masks = dropout.map(|m| m[l].as_slice());
                    h = flat_layer(&h, graph, w, b, cfg, cfg.layer_activation(l), masks);
                    if cfg.skip {
                        outputs.push(h.clone());
                    }
                }
                let points = if cfg.skip && layers > 1 {
                    let k = 1.0 / layers as f64;
                    (0..h.len())
                        .map(|i| {
                            let mut acc = vec![T::zero(); h[i].len()];
                            for o in &outputs {
                                for (a, &v) in acc.iter_mut().zip(&o[i]) {
                                    *a += v;
                                }
                            }
                            acc.into_iter().map(|a| a * k).collect()
                        })
                        .collect()
                } else {
                    h
                };
                Ok(Embedding {
                    points,
                    beta: T::cst(-1.0),
                    time_dims: td,
                })
            }
        }
    }

    /// Decoder distance between two embedded points.
    pub fn distance<T: Real>(&self, emb: &Embedding<T>, x: &[T], y: &[T]) -> T {
        match self.config.geometry {
            Geometry::Pseudo => kernel::distance(x, y, emb.time_dims, emb.beta),
            Geometry::Euclidean => ops::Metric::dist(&ops::EuclideanMetric, x, y),
        }
    }

    /// Reconstruction loss on the embedding.
    pub fn reconstruction_loss<T: Real>(
        &self,
        emb: &Embedding<T>,
        graph: &Graph,
        negatives: &NegativeSet,
    ) -> GeomResult<T> {
        match self.config.geometry {
            Geometry::Pseudo => {
                let m = ops::PseudoMetric {
                    time_dims: emb.time_dims,
                    beta: emb.beta,
                };
                ops::reconstruction_loss(&emb.points, graph, negatives, &m)
            }
            Geometry::Euclidean => ops::reconstruction_loss(&emb.points, graph, negatives, &ops::EuclideanMetric),
        }
    }

    /// Fermi-Dirac link loss on the embedding.
    pub fn link_loss<T: Real>(&self, emb: &Embedding<T>, pos: &[(usize, usize)], neg: &[(usize, usize)]) -> T {
        let (r, temp) = (self.config.fd_r, self.config.fd_temp);
        match self.config.geometry {
            Geometry::Pseudo => {
                let m = ops::PseudoMetric {
                    time_dims: emb.time_dims,
                    beta: emb.beta,
                };
                ops::link_loss(&emb.points, pos, neg, &m, r, temp)
            }
            Geometry::Euclidean => ops::link_loss(&emb.points, pos, neg, &ops::EuclideanMetric, r, temp),
        }
    }

    /// Class logits for every node: a linear map of the tangent vector at `o`.
    pub fn logits<T: Real>(&self, p: &[T], emb: &Embedding<T>) -> GeomResult<Vec<Vec<T>>> {
        if self.config.classes == 0 {
            return Err(GeomError::Invalid("model has no classification head".into()));
        }
        let w = self.layout.slice(p, "cls_w");
        let b = self.layout.slice(p, "cls_b");
        emb.points
            .iter()
            .map(|x| {
                let xi = match self.config.geometry {
                    Geometry::Pseudo => kernel::diff_log_o(x, emb.time_dims, emb.beta)?,
                    Geometry::Euclidean => x.clone(),
                };
                Ok(ops::nc_logits(&xi, w, b))
            })
            .collect()
    }

    /// Plain evaluation of the embedding with the current parameters.
    pub fn embed(&self, graph: &Graph) -> GeomResult<Embedding<f64>> {
        self.forward(&self.params, graph, None)
    }

    /// Embedding as manifold points (pseudo geometry only).
    pub fn embed_points(&self, graph: &Graph) -> GeomResult<Vec<PseudoPoint>> {
        let sig = self.output_signature()?;
        let emb = self.embed(graph)?;
        emb.points
            .into_iter()
            .map(|c| crate::manifold::project_to_manifold(&c, &sig))
            .collect()
    }

    /// Row-major pairwise decoder distances of an embedding.
    pub fn distance_matrix(&self, emb: &Embedding<f64>) -> Vec<f64> {
        let n = emb.points.len();
        let mut d = vec![0.0; n * n];
        for u in 0..n {
            for v in u + 1..n {
                let x = self.distance(emb, &emb.points[u], &emb.points[v]);
                d[u * n + v] = x;
                d[v * n + u] = x;
            }
        }
        d
    }
}

/// Flat layer `h'_i = σ(Σ_{j ∈ N(i) ∪ {i}} (W h_j + b))`.
fn flat_layer<T: Real>(
    h: &[Vec<T>],
    graph: &Graph,
    w: &[T],
    b: &[T],
    cfg: &ModelConfig,
    activation: Activation,
    dropout: Option<&[Vec<f64>]>,
) -> Vec<Vec<T>> {
    let d_out = b.len();
    let msgs: Vec<Vec<T>> = h
        .iter()
        .enumerate()
        .map(|(j, x)| {
            let xin: Vec<T> = match dropout {
                Some(m) => x.iter().zip(&m[j]).map(|(&v, &k)| v * k).collect(),
                None => x.clone(),
            };
            let mut y = crate::autodiff::matvec(w, d_out, x.len(), &xin);
            for (v, &bb) in y.iter_mut().zip(b) {
                *v += bb;
            }
            y
        })
        .collect();
    (0..h.len())
        .map(|i| {
            let mut acc = msgs[i].clone();
            for &j in graph.neighbors(i) {
                for (a, &m) in acc.iter_mut().zip(&msgs[j]) {
                    *a += m;
                }
            }
            let k = if cfg.aggregation == Aggregation::Mean {
                1.0 / (graph.degree(i) + 1) as f64
            } else {
                1.0
            };
            acc.into_iter().map(|a| activation.apply(a * k)).collect()
        })
        .collect()
}

/// `init_features` on plain values: perturb `x_raw` by uniform noise in `[-eps, eps]`
/// and project onto the manifold, redrawing the noise if the time block vanishes.
pub fn init_features<R: Rng>(x_raw: &[f64], sig: Signature, eps: f64, rng: &mut R) -> GeomResult<PseudoPoint> {
    if x_raw.len() != sig.ambient_dim() {
        return Err(GeomError::DimensionMismatch {
            expected: sig.ambient_dim(),
            got: x_raw.len(),
        });
    }
    for _ in 0..64 {
        let noise: Vec<f64> = (0..x_raw.len())
            .map(|_| if eps > 0.0 { rng.gen_range(-eps..=eps) } else { 0.0 })
            .collect();
        match ops::init_point(x_raw, &noise, sig.time_dims(), sig.beta) {
            Ok(c) => return crate::manifold::project_to_manifold(&c, &sig),
            Err(GeomError::DegenerateTimeBlock) if eps > 0.0 => continue,
            Err(e) => return Err(e),
        }
    }
    Err(GeomError::DegenerateTimeBlock)
}

/// `W ⊗ h` on manifold points; `w` is row-major `out_sig.ambient_dim() × h.len()`.
pub fn tangential_transform(w: &[f64], h: &PseudoPoint, out_sig: Signature) -> GeomResult<PseudoPoint> {
    let sig = h.signature();
    let (din, dout) = (sig.ambient_dim(), out_sig.ambient_dim());
    if w.len() != din * dout {
        return Err(GeomError::DimensionMismatch {
            expected: din * dout,
            got: w.len(),
        });
    }
    let c = ops::transform(
        w,
        h.coords(),
        sig.time_dims(),
        out_sig.time_dims(),
        dout,
        sig.beta,
        out_sig.beta,
        None,
    )?;
    crate::manifold::project_to_manifold(&c, &out_sig)
}

/// `h ⊕ b` on manifold points; `b` holds ambient tangent coordinates at `o`.
pub fn bias_translate(h: &PseudoPoint, b: &[f64]) -> GeomResult<PseudoPoint> {
    let sig = h.signature();
    if b.len() != sig.ambient_dim() {
        return Err(GeomError::DimensionMismatch {
            expected: sig.ambient_dim(),
            got: b.len(),
        });
    }
    if b[0] != 0.0 {
        return Err(GeomError::NotTangent { residual: b[0].abs() * sig.radius() });
    }
    let c = ops::bias_translate(h.coords(), b, sig.time_dims(), sig.beta)?;
    crate::manifold::project_to_manifold(&c, &sig)
}
