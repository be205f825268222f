//! Run settings merged from defaults, a `key=value` file, flags and the environment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use qgcn_core::analysis::DEFAULT_SAMPLES;
use qgcn_core::qgcn::{Activation, Aggregation, Geometry, ModelConfig};
use qgcn_core::trainer::{Task, TrainConfig};

use crate::CliError;

/// Environment variable that overrides `--seed`.
pub const SEED_ENV: &str = "QPSEUDO_SEED";

pub const KEYS: &[&str] = &[
    "signature",
    "beta",
    "layers",
    "epochs",
    "lr",
    "curvature_lr",
    "weight_decay",
    "dropout",
    "seed",
    "val_frac",
    "test_frac",
    "train_per_class",
    "patience",
    "negatives",
    "activation",
    "output_activation",
    "aggregation",
    "skip",
    "eps",
    "fd_r",
    "fd_temp",
    "geometry",
    "samples",
    "quadruples",
    "delta_mode",
    "dataset",
    "warm_start",
    "checkpoint",
];

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str, path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Config(format!("{}:{}: expected key=value", path.display(), i + 1)));
        };
        let k = k.trim().replace('-', "_");
        if !KEYS.contains(&k.as_str()) {
            return Err(CliError::Config(format!("{}:{}: unknown key {k:?}", path.display(), i + 1)));
        }
        out.insert(k, v.trim().to_string());
    }
    Ok(out)
}

pub fn parse_signature(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Config(format!("invalid signature {s:?}, expected s,t"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    let st = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if st.0 + st.1 == 0 {
        return Err(CliError::Config(format!("signature {s:?} has no dimensions")));
    }
    Ok(st)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaChoice {
    Auto,
    Exact,
    Sampled,
}

/// Typed settings for one command.
#[derive(Debug, Clone)]
pub struct Settings {
    pub signature: Option<(usize, usize)>,
    pub beta: f64,
    pub layers: usize,
    pub train: TrainConfig,
    pub activation: Activation,
    pub output_activation: Activation,
    pub aggregation: Aggregation,
    pub skip: bool,
    pub eps: f64,
    pub fd_r: f64,
    pub fd_temp: f64,
    pub geometry: Geometry,
    pub samples: Option<usize>,
    pub quadruples: usize,
    pub delta_mode: DeltaChoice,
    pub dataset: Option<String>,
    pub warm_start: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

fn num<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, CliError> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("invalid value {v:?} for {key}"))),
    }
}

fn boolean(map: &BTreeMap<String, String>, key: &str) -> Result<Option<bool>, CliError> {
    match map.get(key).map(|s| s.to_ascii_lowercase()) {
        None => Ok(None),
        Some(v) => match v.as_str() {
            "true" | "1" | "yes" | "on" => Ok(Some(true)),
            "false" | "0" | "no" | "off" => Ok(Some(false)),
            _ => Err(CliError::Config(format!("invalid value {v:?} for {key}"))),
        },
    }
}

fn activation(map: &BTreeMap<String, String>, key: &str) -> Result<Option<Activation>, CliError> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => Activation::parse(&v.to_ascii_lowercase())
            .map(Some)
            .ok_or_else(|| CliError::Config(format!("unknown activation {v:?}"))),
    }
}

impl Settings {
    /// Builds settings for `task` from merged key/value pairs.
    pub fn from_map(task: Task, map: &BTreeMap<String, String>) -> Result<Settings, CliError> {
        let mut train = TrainConfig::new(task);
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = num(map, stringify!($field))? {
                    train.$field = v;
                }
            };
        }
        set!(epochs);
        set!(lr);
        set!(curvature_lr);
        set!(weight_decay);
        set!(dropout);
        set!(seed);
        set!(val_frac);
        set!(test_frac);
        set!(patience);
        set!(negatives);
        train.train_per_class = num(map, "train_per_class")?;
        train.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let signature = map.get("signature").map(|s| parse_signature(s)).transpose()?;
        let beta = num(map, "beta")?.unwrap_or(-1.0);
        if !(beta < 0.0) || !f64::is_finite(beta) {
            return Err(CliError::Config(format!("curvature must be negative, got {beta}")));
        }
        let layers = num(map, "layers")?.unwrap_or(2);
        if layers == 0 {
            return Err(CliError::Config("at least one layer is required".into()));
        }
        let aggregation = match map.get("aggregation").map(|s| s.to_ascii_lowercase()) {
            None => Aggregation::Sum,
            Some(v) if v == "sum" => Aggregation::Sum,
            Some(v) if v == "mean" => Aggregation::Mean,
            Some(v) => return Err(CliError::Config(format!("unknown aggregation {v:?}"))),
        };
        let geometry = match map.get("geometry").map(|s| s.to_ascii_lowercase()) {
            None => Geometry::Pseudo,
            Some(v) if v == "pseudo" => Geometry::Pseudo,
            Some(v) if v == "euclidean" => Geometry::Euclidean,
            Some(v) => return Err(CliError::Config(format!("unknown geometry {v:?}"))),
        };
        let delta_mode = match map.get("delta_mode").map(|s| s.to_ascii_lowercase()) {
            None => DeltaChoice::Auto,
            Some(v) if v == "auto" => DeltaChoice::Auto,
            Some(v) if v == "exact" => DeltaChoice::Exact,
            Some(v) if v == "sampled" => DeltaChoice::Sampled,
            Some(v) => return Err(CliError::Config(format!("unknown delta mode {v:?}"))),
        };
        let samples: Option<usize> = num(map, "samples")?;
        let quadruples = num(map, "quadruples")?.unwrap_or(100_000);
        if samples == Some(0) || quadruples == 0 {
            return Err(CliError::Config("sample counts must be positive".into()));
        }
        let act = activation(map, "activation")?.unwrap_or(Activation::Tanh);
        Ok(Settings {
            signature,
            beta,
            layers,
            train,
            activation: act,
            output_activation: activation(map, "output_activation")?.unwrap_or(act),
            aggregation,
            skip: boolean(map, "skip")?.unwrap_or(true),
            eps: num(map, "eps")?.unwrap_or(0.02),
            fd_r: num(map, "fd_r")?.unwrap_or(2.0),
            fd_temp: num(map, "fd_temp")?.unwrap_or(1.0),
            geometry,
            samples,
            quadruples,
            delta_mode,
            dataset: map.get("dataset").cloned(),
            warm_start: map.get("warm_start").map(PathBuf::from),
            checkpoint: map.get("checkpoint").map(PathBuf::from),
        })
    }

    /// Model configuration for a graph with `n` nodes, optional feature width
    /// and `classes` output classes.
    pub fn model_config(&self, n: usize, feature_dim: Option<usize>, classes: usize) -> ModelConfig {
        let (s, t) = self.signature.unwrap_or((7, 3));
        ModelConfig {
            geometry: self.geometry,
            signatures: vec![(s, t); self.layers + 1],
            init_beta: self.beta,
            activation: self.activation,
            output_activation: self.output_activation,
            aggregation: self.aggregation,
            skip: self.skip,
            input_dim: feature_dim.unwrap_or(n),
            one_hot: feature_dim.is_none(),
            classes,
            eps: self.eps,
            fd_r: self.fd_r,
            fd_temp: self.fd_temp,
        }
    }

    pub fn curvature_samples(&self) -> usize {
        self.samples.unwrap_or(DEFAULT_SAMPLES)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parsing() {
        let m = parse_config("# run\nlr = 0.05\nepochs=3 # short\n\noutput-activation = identity\n", Path::new("c")).unwrap();
        assert_eq!(m["lr"], "0.05");
        assert_eq!(m["epochs"], "3");
        assert_eq!(m["output_activation"], "identity");
        assert!(parse_config("bogus=1", Path::new("c")).is_err());
        assert!(parse_config("lr", Path::new("c")).is_err());
    }

    #[test]
    fn signature_parsing() {
        assert_eq!(parse_signature("7,3").unwrap(), (7, 3));
        assert_eq!(parse_signature(" 0, 10").unwrap(), (0, 10));
        for bad in ["7", "a,b", "0,0", "-1,2"] {
            assert!(parse_signature(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn settings_validation() {
        let mut m = BTreeMap::new();
        m.insert("beta".to_string(), "1".to_string());
        assert!(Settings::from_map(Task::Reconstruct, &m).is_err());
        m.insert("beta".to_string(), "-2".to_string());
        m.insert("lr".to_string(), "0".to_string());
        assert!(Settings::from_map(Task::Reconstruct, &m).is_err());
        m.remove("lr");
        let s = Settings::from_map(Task::Reconstruct, &m).unwrap();
        assert_eq!(s.beta, -2.0);
        assert_eq!(s.train.lr, 0.01);
        assert_eq!(s.output_activation, Activation::Tanh);
    }
}
