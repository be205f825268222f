//! Subcommand implementations. Every command writes `metrics.json` to the
//! output directory; training commands add `history.csv` and `checkpoint.json`.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use qgcn_core::analysis::{self, CurvatureReport, DeltaMode, HyperbolicityReport, EXACT_DELTA_MAX_NODES};
use qgcn_core::geomcheck::{self, CheckOutcome, GeomCheckConfig};
use qgcn_core::graph::Graph;
use qgcn_core::io::{self, fmt_f64, LoadReport};
use qgcn_core::qgcn::{Model, ModelConfig};
use qgcn_core::trainer::{self, Batching, Checkpoint, EpochRecord, Evaluation, Task, TrainConfig};
use qgcn_core::{seeded_rng, Signature};

use crate::settings::{DeltaChoice, Settings};
use crate::{CliError, RunArgs};

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).expect("records serialise");
    s.push('\n');
    Ok(io::write(&dir.join(name), &s)?)
}

fn create_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| {
        CliError::Io(io::IoError::Write {
            path: dir.to_path_buf(),
            source,
        })
    })
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,loss,metric,beta\n");
    for r in history {
        let _ = writeln!(s, "{},{},{},{}", r.epoch, fmt_f64(r.loss), fmt_f64(r.metric), fmt_f64(r.beta));
    }
    s
}

#[derive(Serialize)]
struct RunConfig<'a> {
    model: &'a ModelConfig,
    train: &'a TrainConfig,
}

#[derive(Serialize)]
struct TrainRecord<'a> {
    task: &'static str,
    seed: u64,
    config_hash: String,
    config: RunConfig<'a>,
    graph: &'a LoadReport,
    param_count: usize,
    batching: Batching,
    best_epoch: usize,
    epochs_run: usize,
    curvatures: Vec<f64>,
    initial: &'a Evaluation,
    #[serde(rename = "final")]
    final_: &'a Evaluation,
    history: &'a [EpochRecord],
    wall_clock_seconds: f64,
}

fn load(a: &RunArgs) -> Result<(Graph, LoadReport), CliError> {
    Ok(io::load_graph(a.edges()?, a.features.as_deref(), a.labels.as_deref())?)
}

pub fn train_command(a: &RunArgs, task: Task) -> Result<(), CliError> {
    let start = Instant::now();
    let st = a.settings(task)?;
    let (graph, report) = load(a)?;
    let classes = match task {
        Task::NodeClass => {
            if graph.labels().is_none() {
                return Err(CliError::Usage("--labels is required for nodeclass".into()));
            }
            graph.n_classes()
        }
        _ => 0,
    };
    let mcfg = st.model_config(graph.n_nodes(), graph.feature_dim(), classes);
    let warm = match (task, st.warm_start.as_ref().or(st.checkpoint.as_ref())) {
        (Task::NodeClass, Some(p)) => Some(Checkpoint::load(p)?.model),
        _ => None,
    };
    let out = trainer::train(&graph, &mcfg, &st.train, warm.as_ref())?;
    create_out(&a.out)?;
    io::write(&a.out.join("history.csv"), &history_csv(&out.history))?;
    Checkpoint::new(&out.model, Some(&st.train)).save(&a.out.join("checkpoint.json"))?;
    let record = TrainRecord {
        task: task.name(),
        seed: st.train.seed,
        config_hash: trainer::config_hash(&mcfg, Some(&st.train)),
        config: RunConfig {
            model: &mcfg,
            train: &st.train,
        },
        graph: &report,
        param_count: out.model.param_count(),
        batching: out.batching,
        best_epoch: out.best_epoch,
        epochs_run: out.epochs_run,
        curvatures: out.model.curvatures(),
        initial: &out.initial,
        final_: &out.evaluation,
        history: &out.history,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&a.out, "metrics.json", &record)?;
    println!("{}", summary(task, &out.evaluation));
    Ok(())
}

fn summary(task: Task, e: &Evaluation) -> String {
    let f = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    match task {
        Task::Reconstruct => format!("reconstruct: mAP {} distortion {}", f(e.map), f(e.distortion)),
        Task::LinkPred => format!("linkpred: test ROC-AUC {} (val {})", f(e.roc_auc), f(e.val_roc_auc)),
        Task::NodeClass => format!("nodeclass: test micro-F1 {} macro-F1 {}", f(e.micro_f1), f(e.macro_f1)),
    }
}

#[derive(Serialize)]
struct Published {
    dataset: Option<String>,
    max_delta: Option<f64>,
    mean_curvature: Option<f64>,
}

#[derive(Serialize)]
struct AnalyzeRecord<'a> {
    task: &'static str,
    seed: u64,
    graph: &'a LoadReport,
    curvature_samples: usize,
    curvature: Option<CurvatureReport>,
    curvature_error: Option<String>,
    delta_mode: DeltaMode,
    delta: &'a HyperbolicityReport,
    published: Published,
}

pub fn analyze(a: &RunArgs) -> Result<(), CliError> {
    let st = a.settings(Task::Reconstruct)?;
    let (graph, report) = io::load_graph(a.edges()?, None, None)?;
    let seed = st.train.seed;
    let mut rng = seeded_rng(seed);
    let samples = st.curvature_samples();
    let (curvature, curvature_error) = match analysis::sectional_curvature(&graph, samples, &mut rng) {
        Ok(c) => (Some(c), None),
        Err(e @ analysis::AnalysisError::NoTriangles) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let component = if graph.is_connected() {
        graph.n_nodes()
    } else {
        graph.largest_component().1.len()
    };
    let mode = match st.delta_mode {
        DeltaChoice::Exact => DeltaMode::Exact,
        DeltaChoice::Sampled => DeltaMode::Sampled,
        DeltaChoice::Auto if component <= EXACT_DELTA_MAX_NODES => DeltaMode::Exact,
        DeltaChoice::Auto => DeltaMode::Sampled,
    };
    let delta = analysis::delta_hyperbolicity(&graph, mode, st.quadruples, &mut rng)?;
    create_out(&a.out)?;
    if let Some(c) = &curvature {
        io::write(&a.out.join("curvature_histogram.csv"), &c.histogram.to_csv())?;
    }
    io::write(&a.out.join("delta_histogram.csv"), &delta.histogram.to_csv())?;
    let dataset = st.dataset.clone();
    let published = Published {
        max_delta: dataset.as_deref().and_then(analysis::published_max_delta),
        mean_curvature: dataset.as_deref().and_then(analysis::published_curvature),
        dataset,
    };
    let mut line = format!("analyze: max delta {} ({} quadruples", delta.max_delta, delta.quadruples);
    line += if delta.exhaustive { ", exhaustive)" } else { ", sampled)" };
    if let Some(p) = published.max_delta {
        let _ = write!(line, " published {p}");
    }
    match &curvature {
        Some(c) => {
            let _ = write!(line, "; mean curvature {:.4} ± {:.4}", c.mean, c.stderr);
        }
        None => line += "; curvature undefined",
    }
    if let Some(p) = published.mean_curvature {
        let _ = write!(line, " published {p}");
    }
    let record = AnalyzeRecord {
        task: "analyze",
        seed,
        graph: &report,
        curvature_samples: samples,
        curvature,
        curvature_error,
        delta_mode: mode,
        delta: &delta,
        published,
    };
    write_json(&a.out, "metrics.json", &record)?;
    println!("{line}");
    Ok(())
}

#[derive(Serialize)]
struct GeomRecord<'a> {
    task: &'static str,
    seed: u64,
    samples: usize,
    passed: bool,
    checks: &'a [CheckOutcome],
}

pub fn geomcheck(a: &RunArgs) -> Result<(), CliError> {
    let st = a.settings(Task::Reconstruct)?;
    let seed = st.train.seed;
    let samples = st.samples.unwrap_or(10_000);
    let explicit_beta = a.beta.is_some() || a.merged()?.contains_key("beta");
    let mut cfg = GeomCheckConfig {
        samples,
        coverage_pairs: samples * 10,
        seed,
        ..GeomCheckConfig::default()
    };
    if let Some(sig) = st.signature {
        cfg.signatures = vec![sig];
    }
    if explicit_beta {
        cfg.betas = vec![st.beta];
    }
    let mut checks = geomcheck::run_geomcheck(&cfg).checks;
    if st.signature.is_none() && !explicit_beta {
        checks.extend(geomcheck::run_distance_checks(samples, seed).checks);
    } else {
        for (i, &(s, t)) in cfg.signatures.iter().enumerate() {
            for (j, &beta) in cfg.betas.iter().enumerate() {
                let k = seed.wrapping_mul(7919).wrapping_add((i * 64 + j * 8) as u64);
                if s >= 1 {
                    checks.push(geomcheck::check_hyperbolic_slice(s, beta, samples, k));
                }
                if t >= 1 {
                    checks.push(geomcheck::check_great_circle(t, beta, samples, k + 1));
                }
                checks.push(geomcheck::check_rescale(Signature::new(s, t, beta)?, samples, k + 2));
            }
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    create_out(&a.out)?;
    write_json(
        &a.out,
        "metrics.json",
        &GeomRecord {
            task: "geomcheck",
            seed,
            samples,
            passed,
            checks: &checks,
        },
    )?;
    for c in &checks {
        println!(
            "{} {:<28} ({},{}) beta {:<5} max error {:.3e} tol {:.0e}",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.s,
            c.t,
            c.beta,
            c.max_error,
            c.tolerance
        );
    }
    if passed {
        Ok(())
    } else {
        let failed: Vec<String> = checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} ({},{}) beta {}", c.name, c.s, c.t, c.beta))
            .collect();
        Err(CliError::CheckFailed(format!("failed checks: {}", failed.join("; "))))
    }
}

#[derive(Serialize)]
struct ExportRecord {
    task: &'static str,
    nodes: usize,
    dim: usize,
    signature: (usize, usize),
    beta: Option<f64>,
    config_hash: String,
    source: &'static str,
}

pub fn export_embeddings(a: &RunArgs) -> Result<(), CliError> {
    let st: Settings = a.settings(Task::Reconstruct)?;
    let (graph, _) = load(a)?;
    let (model, source): (Model, _) = match &st.checkpoint {
        Some(p) => (Checkpoint::load(p)?.model, "checkpoint"),
        None => {
            let mcfg = st.model_config(graph.n_nodes(), graph.feature_dim(), 0);
            (trainer::train(&graph, &mcfg, &st.train, None)?.model, "reconstruct")
        }
    };
    let emb = model.embed(&graph)?;
    create_out(&a.out)?;
    io::write_embeddings(&a.out.join("embeddings.csv"), &emb.points)?;
    let signature = model.config.signatures[model.config.layers()];
    let record = ExportRecord {
        task: "export-embeddings",
        nodes: emb.points.len(),
        dim: emb.points.first().map_or(0, |p| p.len()),
        signature,
        beta: model.curvatures().last().copied(),
        config_hash: trainer::config_hash(&model.config, None),
        source,
    };
    write_json(&a.out, "metrics.json", &record)?;
    println!("export-embeddings: {} nodes written", record.nodes);
    Ok(())
}
