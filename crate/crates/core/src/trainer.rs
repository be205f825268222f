//! Optimisation loops, data splits, negative sampling and checkpoints.

use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::autodiff::{Real, Tape};
use crate::error::GeomError;
use crate::graph::{Graph, GraphError};
use crate::metrics::{self, MetricError};
use crate::qgcn::{ops, DropoutMasks, Embedding, Geometry, Model, ModelConfig, NegativeSet};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("node {0} has no non-neighbours to sample")]
    NoNegatives(usize),
    #[error("loss diverged at epoch {epoch}: {loss} (curvatures {curvatures:?})")]
    Divergence { epoch: usize, loss: f64, curvatures: Vec<f64> },
    #[error("non-finite gradient at epoch {epoch} in parameter {param}")]
    BadGradient { epoch: usize, param: String },
    #[error("geometry: {0}")]
    Geom(#[from] GeomError),
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("metric: {0}")]
    Metric(#[from] MetricError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type TrainResult<T> = Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Reconstruct,
    LinkPred,
    NodeClass,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Reconstruct => "reconstruct",
            Task::LinkPred => "linkpred",
            Task::NodeClass => "nodeclass",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    pub epochs: usize,
    pub lr: f64,
    pub curvature_lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub seed: u64,
    /// Validation and test fractions; training gets the rest.
    pub val_frac: f64,
    pub test_frac: f64,
    /// Labelled training nodes per class for node classification (fractions otherwise).
    pub train_per_class: Option<usize>,
    pub patience: usize,
    /// Sampled negatives per positive when not every non-neighbour is used.
    pub negatives: usize,
    /// Graphs with more edges are trained in edge minibatches of this size.
    pub full_batch_max_edges: usize,
    /// Graphs with at most this many nodes use every non-neighbour as a negative.
    pub all_negatives_max_nodes: usize,
}

impl TrainConfig {
    pub fn new(task: Task) -> TrainConfig {
        let (val_frac, test_frac) = match task {
            Task::Reconstruct => (0.0, 0.0),
            Task::LinkPred => (0.05, 0.10),
            Task::NodeClass => (0.15, 0.15),
        };
        TrainConfig {
            task,
            epochs: 500,
            lr: 0.01,
            curvature_lr: 1e-4,
            weight_decay: 0.0,
            dropout: 0.0,
            seed: 0,
            val_frac,
            test_frac,
            train_per_class: None,
            patience: 100,
            negatives: 10,
            full_batch_max_edges: 5000,
            all_negatives_max_nodes: 2000,
        }
    }

    pub fn validate(&self) -> TrainResult<()> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if !(self.lr > 0.0) || !(self.curvature_lr >= 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.val_frac >= 0.0 && self.test_frac >= 0.0 && self.val_frac + self.test_frac < 1.0) {
            return bad("split fractions must be non-negative and leave a training share");
        }
        if self.negatives == 0 {
            return bad("negative sample count must be at least 1");
        }
        if self.full_batch_max_edges == 0 {
            return bad("batch size must be positive");
        }
        Ok(())
    }
}

/// Adam moments for one parameter group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> AdamState {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam step with bias correction. Weight decay is added to the gradient
/// as an L2 penalty.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64, weight_decay: f64) {
    assert_eq!(params.len(), grads.len(), "parameter and gradient lengths differ");
    assert_eq!(params.len(), state.m.len(), "optimizer state has the wrong length");
    state.t += 1;
    let c1 = 1.0 - state.beta1.powi(state.t as i32);
    let c2 = 1.0 - state.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i] + weight_decay * params[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params[i] -= lr * mh / (vh.sqrt() + state.eps);
    }
}

/// Up to `k` distinct non-neighbours of `u` other than `u`, sorted; all of them
/// when fewer than `k` exist.
pub fn negative_sample<R: Rng>(graph: &Graph, u: usize, k: usize, rng: &mut R) -> TrainResult<Vec<usize>> {
    if k == 0 {
        return Err(TrainError::Config("negative sample count must be at least 1".into()));
    }
    let pool: Vec<usize> = (0..graph.n_nodes())
        .filter(|&v| v != u && !graph.has_edge(u, v))
        .collect();
    if pool.is_empty() {
        return Err(TrainError::NoNegatives(u));
    }
    if pool.len() <= k {
        return Ok(pool);
    }
    let mut out: Vec<usize> = index::sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
    out.sort_unstable();
    Ok(out)
}

/// Held-out edges for link prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSplit {
    pub train: Vec<(usize, usize)>,
    pub val: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
    pub val_neg: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
}

fn ordered(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Draws `count` distinct non-edges avoiding `exclude`.
fn sample_non_edges<R: Rng>(
    graph: &Graph,
    count: usize,
    exclude: &HashSet<(usize, usize)>,
    rng: &mut R,
) -> TrainResult<Vec<(usize, usize)>> {
    let n = graph.n_nodes();
    let available = n * n.saturating_sub(1) / 2 - graph.n_edges();
    if available < count + exclude.len() {
        return Err(TrainError::Config("not enough non-edges for negative samples".into()));
    }
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u == v || graph.has_edge(u, v) {
            continue;
        }
        let e = ordered(u, v);
        if exclude.contains(&e) || !seen.insert(e) {
            continue;
        }
        out.push(e);
    }
    Ok(out)
}

/// Random edge split with as many negatives as positives in validation and test.
pub fn split_edges<R: Rng>(graph: &Graph, val_frac: f64, test_frac: f64, rng: &mut R) -> TrainResult<EdgeSplit> {
    let mut edges = graph.edges().to_vec();
    edges.shuffle(rng);
    let m = edges.len();
    let n_val = (val_frac * m as f64).round() as usize;
    let n_test = (test_frac * m as f64).round() as usize;
    if n_val + n_test >= m || (val_frac > 0.0 && n_val == 0) || (test_frac > 0.0 && n_test == 0) {
        return Err(TrainError::Config(format!("{m} edges are too few for the requested split")));
    }
    let test = edges[..n_test].to_vec();
    let val = edges[n_test..n_test + n_val].to_vec();
    let mut train = edges[n_test + n_val..].to_vec();
    train.sort_unstable();
    let none = HashSet::new();
    let test_neg = sample_non_edges(graph, n_test, &none, rng)?;
    let taken: HashSet<_> = test_neg.iter().copied().collect();
    let val_neg = sample_non_edges(graph, n_val, &taken, rng)?;
    Ok(EdgeSplit {
        train,
        val,
        test,
        val_neg,
        test_neg,
    })
}

/// Node masks for classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Random node split, by fractions or with `per_class` training nodes per class
/// and the remainder divided between validation and test in proportion.
pub fn split_nodes<R: Rng>(
    labels: &[usize],
    val_frac: f64,
    test_frac: f64,
    per_class: Option<usize>,
    rng: &mut R,
) -> TrainResult<NodeSplit> {
    let n = labels.len();
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let (mut train, rest): (Vec<usize>, Vec<usize>) = match per_class {
        Some(k) => {
            let classes = labels.iter().max().map_or(0, |&c| c + 1);
            let mut taken = vec![0usize; classes];
            ids.iter().partition(|&&i| {
                let c = labels[i];
                if taken[c] < k {
                    taken[c] += 1;
                    true
                } else {
                    false
                }
            })
        }
        None => {
            let n_train = n - (val_frac * n as f64).round() as usize - (test_frac * n as f64).round() as usize;
            (ids[..n_train].to_vec(), ids[n_train..].to_vec())
        }
    };
    let share = if val_frac + test_frac > 0.0 {
        val_frac / (val_frac + test_frac)
    } else {
        0.0
    };
    let n_val = (share * rest.len() as f64).round() as usize;
    let mut val = rest[..n_val].to_vec();
    let mut test = rest[n_val..].to_vec();
    if train.is_empty() || (val_frac > 0.0 && val.is_empty()) || (test_frac > 0.0 && test.is_empty()) {
        return Err(TrainError::Config(format!("{n} labelled nodes are too few for the requested split")));
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(NodeSplit { train, val, test })
}

/// How the reconstruction objective was batched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Batching {
    FullBatch,
    Minibatch { batch_edges: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    /// mAP for reconstruction, validation ROC-AUC for link prediction,
    /// validation micro-F1 for node classification.
    pub metric: f64,
    /// Decoder curvature (`-1` placeholder for the flat model).
    pub beta: f64,
}

/// Metrics of a model; fields that do not apply to the task are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: Option<f64>,
    pub map: Option<f64>,
    pub distortion: Option<f64>,
    /// Standard error when the distortion was estimated from sampled pairs.
    pub distortion_stderr: Option<f64>,
    pub val_roc_auc: Option<f64>,
    pub roc_auc: Option<f64>,
    pub val_micro_f1: Option<f64>,
    pub micro_f1: Option<f64>,
    pub macro_f1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation model.
    pub model: Model,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (`epochs_run` means after the last update).
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub initial: Evaluation,
    pub evaluation: Evaluation,
    pub batching: Batching,
    pub edge_split: Option<EdgeSplit>,
    pub node_split: Option<NodeSplit>,
    pub seconds: f64,
}

/// Independent random streams derived from one seed.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

const STREAM_INIT: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_SAMPLE: u64 = 3;
const STREAM_DROPOUT: u64 = 4;
const STREAM_EVAL: u64 = 5;

struct Context<'a> {
    graph: &'a Graph,
    /// Graph used for message passing (training edges only for link prediction).
    mp_graph: Graph,
    cfg: &'a TrainConfig,
    edge_split: Option<EdgeSplit>,
    node_split: Option<NodeSplit>,
    heldout_neg: HashSet<(usize, usize)>,
    batching: Batching,
}

fn values(emb: &Embedding<crate::autodiff::Var>) -> Embedding<f64> {
    Embedding {
        points: emb.points.iter().map(|p| p.iter().map(|v| v.value()).collect()).collect(),
        beta: emb.beta.value(),
        time_dims: emb.time_dims,
    }
}

fn link_scores(model: &Model, emb: &Embedding<f64>, pos: &[(usize, usize)], neg: &[(usize, usize)]) -> TrainResult<f64> {
    let mut scores = Vec::with_capacity(pos.len() + neg.len());
    let mut labels = Vec::with_capacity(pos.len() + neg.len());
    for (pairs, label) in [(pos, true), (neg, false)] {
        for &(u, v) in pairs {
            let d = model.distance(emb, &emb.points[u], &emb.points[v]);
            scores.push(ops::fermi_dirac(d, model.config.fd_r, model.config.fd_temp));
            labels.push(label);
        }
    }
    Ok(metrics::roc_auc(&scores, &labels)?)
}

fn predictions(logits: &[Vec<f64>]) -> Vec<usize> {
    logits
        .iter()
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

impl Context<'_> {
    /// Model-selection metric from a plain embedding.
    fn selection_metric(&self, model: &Model, params: &[f64], emb: &Embedding<f64>) -> TrainResult<f64> {
        match self.cfg.task {
            Task::Reconstruct => {
                let d = model.distance_matrix(emb);
                Ok(metrics::map_metric(&d, self.graph)?.map)
            }
            Task::LinkPred => {
                let s = self.edge_split.as_ref().expect("link split");
                link_scores(model, emb, &s.val, &s.val_neg)
            }
            Task::NodeClass => {
                let s = self.node_split.as_ref().expect("node split");
                let logits = model.logits(params, emb)?;
                let nodes = if s.val.is_empty() { &s.train } else { &s.val };
                let labels = self.graph.labels().expect("labels");
                let pred = predictions(&logits);
                let p: Vec<usize> = nodes.iter().map(|&i| pred[i]).collect();
                let l: Vec<usize> = nodes.iter().map(|&i| labels[i]).collect();
                Ok(metrics::f1(&p, &l, self.graph.n_classes())?.micro)
            }
        }
    }

    fn evaluate(&self, model: &Model) -> TrainResult<Evaluation> {
        let emb = model.forward(&model.params, &self.mp_graph, None)?;
        let mut ev = Evaluation::default();
        match self.cfg.task {
            Task::Reconstruct => {
                let negs = self.full_negatives(model)?;
                ev.loss = Some(model.reconstruction_loss(&emb, self.graph, &negs)?);
                let d = model.distance_matrix(&emb);
                ev.map = Some(metrics::map_metric(&d, self.graph)?.map);
                if self.graph.is_connected() {
                    if self.graph.n_nodes() <= self.cfg.all_negatives_max_nodes {
                        ev.distortion = Some(metrics::distortion(&d, self.graph)?);
                    } else {
                        let n = self.graph.n_nodes();
                        let mut rng = stream(self.cfg.seed, STREAM_EVAL);
                        let (m, se) = metrics::distortion_sampled(|u, v| d[u * n + v], self.graph, 10_000, &mut rng)?;
                        ev.distortion = Some(m);
                        ev.distortion_stderr = Some(se);
                    }
                }
            }
            Task::LinkPred => {
                let s = self.edge_split.as_ref().expect("link split");
                ev.val_roc_auc = Some(link_scores(model, &emb, &s.val, &s.val_neg)?);
                ev.roc_auc = Some(link_scores(model, &emb, &s.test, &s.test_neg)?);
            }
            Task::NodeClass => {
                let s = self.node_split.as_ref().expect("node split");
                let logits = model.logits(&model.params, &emb)?;
                let labels = self.graph.labels().expect("labels");
                ev.loss = Some(ops::cross_entropy(&logits, labels, &s.train)?);
                let pred = predictions(&logits);
                let pick = |nodes: &[usize]| -> (Vec<usize>, Vec<usize>) {
                    (nodes.iter().map(|&i| pred[i]).collect(), nodes.iter().map(|&i| labels[i]).collect())
                };
                if !s.val.is_empty() {
                    let (p, l) = pick(&s.val);
                    ev.val_micro_f1 = Some(metrics::f1(&p, &l, self.graph.n_classes())?.micro);
                }
                let nodes = if s.test.is_empty() { &s.train } else { &s.test };
                let (p, l) = pick(nodes);
                let f = metrics::f1(&p, &l, self.graph.n_classes())?;
                ev.micro_f1 = Some(f.micro);
                ev.macro_f1 = Some(f.macro_);
            }
        }
        Ok(ev)
    }

    /// Negatives for the full reconstruction objective.
    fn full_negatives(&self, _model: &Model) -> TrainResult<NegativeSet> {
        if self.graph.n_nodes() <= self.cfg.all_negatives_max_nodes {
            for u in 0..self.graph.n_nodes() {
                if self.graph.degree(u) > 0 && self.graph.degree(u) + 1 == self.graph.n_nodes() {
                    return Err(TrainError::NoNegatives(u));
                }
            }
            Ok(NegativeSet::AllNonNeighbors)
        } else {
            let mut rng = stream(self.cfg.seed, STREAM_EVAL);
            Ok(NegativeSet::Sampled(self.sampled_triples(&mut rng)?))
        }
    }

    /// `(u, v, negatives)` for every directed edge.
    fn sampled_triples<R: Rng>(&self, rng: &mut R) -> TrainResult<Vec<(usize, usize, Vec<usize>)>> {
        let g = self.graph;
        let all = g.n_nodes() <= self.cfg.all_negatives_max_nodes;
        let mut out = Vec::with_capacity(2 * g.n_edges());
        for u in 0..g.n_nodes() {
            if g.degree(u) == 0 {
                continue;
            }
            let all_negs: Option<Vec<usize>> = all.then(|| (0..g.n_nodes()).filter(|&w| w != u && !g.has_edge(u, w)).collect());
            for &v in g.neighbors(u) {
                let negs = match &all_negs {
                    Some(a) if !a.is_empty() => a.clone(),
                    Some(_) => return Err(TrainError::NoNegatives(u)),
                    None => negative_sample(g, u, self.cfg.negatives, rng)?,
                };
                out.push((u, v, negs));
            }
        }
        Ok(out)
    }

    /// Objective batches for one epoch.
    fn batches<R: Rng>(&self, model: &Model, rng: &mut R) -> TrainResult<Vec<Batch>> {
        match self.cfg.task {
            Task::Reconstruct => match self.batching {
                Batching::FullBatch => Ok(vec![Batch::Recon(self.full_negatives_epoch(model, rng)?)]),
                Batching::Minibatch { batch_edges } => {
                    let mut triples = self.sampled_triples(rng)?;
                    triples.shuffle(rng);
                    Ok(triples
                        .chunks(batch_edges)
                        .map(|c| Batch::Recon(NegativeSet::Sampled(c.to_vec())))
                        .collect())
                }
            },
            Task::LinkPred => {
                let s = self.edge_split.as_ref().expect("link split");
                let neg = sample_non_edges(self.graph, s.train.len(), &self.heldout_neg, rng)?;
                Ok(vec![Batch::Link(s.train.clone(), neg)])
            }
            Task::NodeClass => Ok(vec![Batch::Class]),
        }
    }

    fn full_negatives_epoch<R: Rng>(&self, model: &Model, rng: &mut R) -> TrainResult<NegativeSet> {
        if self.graph.n_nodes() <= self.cfg.all_negatives_max_nodes {
            self.full_negatives(model)
        } else {
            Ok(NegativeSet::Sampled(self.sampled_triples(rng)?))
        }
    }

    fn dropout_masks<R: Rng>(&self, model: &Model, rng: &mut R) -> Option<DropoutMasks> {
        let p = self.cfg.dropout;
        if p == 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - p);
        let n = self.graph.n_nodes();
        Some(
            (0..model.config.layers())
                .map(|l| {
                    let d = model.config.dim(l);
                    (0..n)
                        .map(|_| (0..d).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect())
                        .collect()
                })
                .collect(),
        )
    }
}

enum Batch {
    Recon(NegativeSet),
    Link(Vec<(usize, usize)>, Vec<(usize, usize)>),
    Class,
}

/// Trains a model with Adam, keeping the parameters with the best selection
/// metric. `warm_start` copies every parameter with a matching name and shape.
pub fn train(
    graph: &Graph,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    warm_start: Option<&Model>,
) -> TrainResult<TrainOutcome> {
    let start = Instant::now();
    cfg.validate()?;
    if graph.n_nodes() < 2 {
        return Err(TrainError::Config("graph needs at least two nodes".into()));
    }
    let mut model = Model::new(model_cfg.clone(), graph.n_nodes(), &mut stream(cfg.seed, STREAM_INIT))?;
    if let Some(w) = warm_start {
        model.warm_start_from(w);
    }
    let mut split_rng = stream(cfg.seed, STREAM_SPLIT);
    let (mut edge_split, mut node_split, mut mp_graph) = (None, None, graph.clone());
    let mut heldout_neg = HashSet::new();
    match cfg.task {
        Task::Reconstruct => {
            if graph.n_edges() == 0 {
                return Err(TrainError::Config("reconstruction needs at least one edge".into()));
            }
        }
        Task::LinkPred => {
            let s = split_edges(graph, cfg.val_frac, cfg.test_frac, &mut split_rng)?;
            mp_graph = graph.with_edges(&s.train)?;
            heldout_neg.extend(s.val_neg.iter().copied());
            heldout_neg.extend(s.test_neg.iter().copied());
            edge_split = Some(s);
        }
        Task::NodeClass => {
            let labels = graph
                .labels()
                .ok_or_else(|| TrainError::Config("node classification needs labels".into()))?;
            if model_cfg.classes < graph.n_classes() {
                return Err(TrainError::Config(format!(
                    "model has {} classes, labels use {}",
                    model_cfg.classes,
                    graph.n_classes()
                )));
            }
            node_split = Some(split_nodes(labels, cfg.val_frac, cfg.test_frac, cfg.train_per_class, &mut split_rng)?);
        }
    }
    let batching = if cfg.task == Task::Reconstruct && graph.n_edges() > cfg.full_batch_max_edges {
        Batching::Minibatch {
            batch_edges: cfg.full_batch_max_edges,
        }
    } else {
        Batching::FullBatch
    };
    log::info!("{} on {} nodes, {} edges: {:?}", cfg.task.name(), graph.n_nodes(), graph.n_edges(), batching);
    let ctx = Context {
        graph,
        mp_graph,
        cfg,
        edge_split,
        node_split,
        heldout_neg,
        batching,
    };

    let initial = ctx.evaluate(&model)?;
    let k = model.layout.curvature_offset;
    let mut main_state = AdamState::new(k);
    let mut curv_state = AdamState::new(model.params.len() - k);
    let mut sample_rng = stream(cfg.seed, STREAM_SAMPLE);
    let mut drop_rng = stream(cfg.seed, STREAM_DROPOUT);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut epochs_run = 0;

    for epoch in 0..cfg.epochs {
        let batches = ctx.batches(&model, &mut sample_rng)?;
        let n_batches = batches.len();
        let mut loss_sum = 0.0;
        let mut metric = f64::NAN;
        let mut beta = -1.0;
        for (bi, batch) in batches.into_iter().enumerate() {
            let masks = ctx.dropout_masks(&model, &mut drop_rng);
            let tape = Tape::new();
            let p = tape.vars(&model.params);
            let emb = model.forward(&p, &ctx.mp_graph, masks.as_ref())?;
            let loss = match &batch {
                Batch::Recon(negs) => model.reconstruction_loss(&emb, graph, negs)?,
                Batch::Link(pos, neg) => model.link_loss(&emb, pos, neg),
                Batch::Class => {
                    let logits = model.logits(&p, &emb)?;
                    let s = ctx.node_split.as_ref().expect("node split");
                    ops::cross_entropy(&logits, graph.labels().expect("labels"), &s.train)?
                }
            };
            let lv = loss.value();
            if !lv.is_finite() {
                return Err(TrainError::Divergence {
                    epoch,
                    loss: lv,
                    curvatures: model.curvatures(),
                });
            }
            let grads = tape.gradient(loss).wrt_slice(&p);
            // the selection metric is read off the forward pass when it saw
            // the whole objective without dropout
            if bi == 0 {
                beta = emb.beta.value();
                let plain = if masks.is_none() {
                    values(&emb)
                } else {
                    drop(emb);
                    model.forward(&model.params, &ctx.mp_graph, None)?
                };
                metric = ctx.selection_metric(&model, &model.params, &plain)?;
            }
            drop(tape);
            if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
                let param = model
                    .layout
                    .specs
                    .iter()
                    .find(|s| s.range().contains(&i))
                    .map_or_else(String::new, |s| s.name.clone());
                return Err(TrainError::BadGradient { epoch, param });
            }
            if bi == 0 && best.as_ref().is_none_or(|b| metric > b.0) {
                best = Some((metric, epoch, model.params.clone()));
            }
            let (main, curv) = model.params.split_at_mut(k);
            adam_step(main, &grads[..k], &mut main_state, cfg.lr, cfg.weight_decay);
            adam_step(curv, &grads[k..], &mut curv_state, cfg.curvature_lr, 0.0);
            loss_sum += lv;
        }
        history.push(EpochRecord {
            epoch,
            loss: loss_sum / n_batches as f64,
            metric,
            beta,
        });
        epochs_run = epoch + 1;
        if let Some((_, be, _)) = &best {
            if epoch - be >= cfg.patience {
                break;
            }
        }
    }

    // the parameters after the last update are a candidate too
    let last = model.forward(&model.params, &ctx.mp_graph, None)?;
    let last_metric = ctx.selection_metric(&model, &model.params, &last)?;
    let best_epoch = match best {
        Some((m, e, params)) if !(last_metric > m) => {
            model.params = params;
            e
        }
        _ => epochs_run,
    };
    let evaluation = ctx.evaluate(&model)?;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        epochs_run,
        initial,
        evaluation,
        batching,
        edge_split: ctx.edge_split,
        node_split: ctx.node_split,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Flat GCN of the same widths, trained with the same loop.
pub fn euclidean_gcn_baseline(graph: &Graph, model_cfg: &ModelConfig, cfg: &TrainConfig) -> TrainResult<TrainOutcome> {
    let flat = ModelConfig {
        geometry: Geometry::Euclidean,
        ..model_cfg.clone()
    };
    train(graph, &flat, cfg, None)
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// SHA-256 of the canonical JSON of the configuration pair.
pub fn config_hash(model_cfg: &ModelConfig, cfg: Option<&TrainConfig>) -> String {
    let json = serde_json::to_string(&(model_cfg, cfg)).expect("configs serialise");
    hex::encode(Sha256::digest(json.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub train_config: Option<TrainConfig>,
    pub model: Model,
}

impl Checkpoint {
    pub fn new(model: &Model, cfg: Option<&TrainConfig>) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config_hash: config_hash(&model.config, cfg),
            train_config: cfg.cloned(),
            model: model.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialises")
    }

    pub fn from_json(s: &str) -> TrainResult<Checkpoint> {
        let c: Checkpoint = serde_json::from_str(s).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        if c.version != CHECKPOINT_VERSION {
            return Err(TrainError::Checkpoint(format!("unsupported version {}", c.version)));
        }
        if c.config_hash != config_hash(&c.model.config, c.train_config.as_ref()) {
            return Err(TrainError::Checkpoint("config hash mismatch".into()));
        }
        if c.model.params.len() != c.model.layout.total {
            return Err(TrainError::Checkpoint("parameter count does not match the layout".into()));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> TrainResult<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> TrainResult<Checkpoint> {
        Checkpoint::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generators;

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = [1.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 0.1, 0.0);
        assert!((p[0] - 0.9).abs() < 1e-6);
        let mut q = [1.0, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut q, &[0.0, 0.0], &mut s, 0.1, 0.0);
        assert_eq!(q, [1.0, -2.0]);
    }

    #[test]
    fn negative_sampling_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let k4 = generators::complete(4);
        assert!(matches!(negative_sample(&k4, 0, 3, &mut rng), Err(TrainError::NoNegatives(0))));
        let empty = Graph::from_edges(5, &[]).unwrap();
        assert_eq!(negative_sample(&empty, 0, 4, &mut rng).unwrap(), vec![1, 2, 3, 4]);
        let star = generators::star(3);
        assert_eq!(negative_sample(&star, 1, 5, &mut rng).unwrap(), vec![2, 3]);
        let path = generators::path(30);
        let s = negative_sample(&path, 10, 5, &mut rng).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.iter().all(|&v| v != 10 && !path.has_edge(10, v)));
    }

    #[test]
    fn edge_split_is_disjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = generators::erdos_renyi(60, 0.1, &mut rng);
        let s = split_edges(&g, 0.05, 0.10, &mut rng).unwrap();
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), g.n_edges());
        let all: HashSet<_> = s.train.iter().chain(&s.val).chain(&s.test).collect();
        assert_eq!(all.len(), g.n_edges());
        for &(u, v) in s.test_neg.iter().chain(&s.val_neg) {
            assert!(u != v && !g.has_edge(u, v));
        }
        let negs: HashSet<_> = s.test_neg.iter().chain(&s.val_neg).collect();
        assert_eq!(negs.len(), s.test_neg.len() + s.val_neg.len());
    }

    #[test]
    fn zero_epochs_keeps_initialisation() {
        let g = generators::cycle(12);
        let mcfg = ModelConfig::uniform(2, 1, 2, 12);
        let mut cfg = TrainConfig::new(Task::Reconstruct);
        cfg.epochs = 0;
        let out = train(&g, &mcfg, &cfg, None).unwrap();
        assert!(out.history.is_empty());
        assert_eq!(out.initial, out.evaluation);
        let fresh = Model::new(mcfg, 12, &mut stream(0, STREAM_INIT)).unwrap();
        assert_eq!(out.model.params, fresh.params);
    }

    #[test]
    fn checkpoint_round_trips_exactly() {
        let g = generators::path(8);
        let mut cfg = TrainConfig::new(Task::Reconstruct);
        cfg.epochs = 3;
        let out = train(&g, &ModelConfig::uniform(2, 1, 1, 8), &cfg, None).unwrap();
        let c = Checkpoint::new(&out.model, Some(&cfg));
        let back = Checkpoint::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let mut tampered = c.clone();
        tampered.model.config.fd_r = 3.0;
        assert!(Checkpoint::from_json(&tampered.to_json()).is_err());
    }
}
