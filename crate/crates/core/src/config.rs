//! Flat `key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Every key must belong to the schema below and may appear once. Absent
//! keys keep the desk defaults of [`RunConfig::default`]. [`to_config_text`]
//! writes every key that applies to a config, so its output parses back to
//! an equal value.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::learner::{Architecture, PartitionMode};
use crate::protocol::{Algorithm, DataSource, ProtocolError, RunConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid value for {field}: {reason}")]
    Validation { field: String, reason: String },
    #[error("{0}")]
    Io(String),
}

impl ConfigError {
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Validation { field, .. } => Some(field),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ConfigError>;

/// Every accepted key, in the order [`to_config_text`] writes them.
pub const KEYS: &[&str] = &[
    "algorithm",
    "seed",
    "n_total",
    "k_selected",
    "rounds",
    "local_epochs",
    "batch_size",
    "lr",
    "eval_every",
    "lambda",
    "ratio",
    "interval",
    "threshold_div_k",
    "dp.clip_c",
    "dp.sigma",
    "dp.delta",
    "dp.c1",
    "dp.c2",
    "model",
    "model.hidden",
    "model.bias",
    "data",
    "data.classes",
    "data.dim",
    "data.samples_per_class",
    "data.test_per_class",
    "data.spread",
    "data.latent_rank",
    "data.train",
    "data.test",
    "partition",
    "partition.shards",
    "partition.alpha",
];

/// Keys that pick a variant; they are applied before the keys that refine it.
const SELECTORS: &[&str] = &["model", "data", "partition"];

const DEFAULT_HIDDEN: usize = 32;

fn validation(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| validation(key, format!("{value:?}: {e}")))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(validation(key, format!("{value:?} is not true or false"))),
    }
}

fn default_blobs() -> DataSource {
    RunConfig::default().data
}

/// Assigns one key. Refining keys require the matching variant to be
/// selected already.
pub fn set_key(cfg: &mut RunConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "algorithm" => {
            cfg.algorithm = Algorithm::parse(value)
                .ok_or_else(|| validation(key, format!("{value:?} is not fedavg, ldp_fedavg or fedceo")))?
        }
        "seed" => cfg.seed = num(key, value)?,
        "n_total" => cfg.n_total = num(key, value)?,
        "k_selected" => {
            cfg.k_selected = num(key, value)?;
            cfg.dp.k_selected = cfg.k_selected;
        }
        "rounds" => cfg.rounds = num(key, value)?,
        "local_epochs" => cfg.local_epochs = num(key, value)?,
        "batch_size" => cfg.batch_size = num(key, value)?,
        "lr" => cfg.lr = num(key, value)?,
        "eval_every" => cfg.eval_every = num(key, value)?,
        "lambda" => cfg.lambda = num(key, value)?,
        "ratio" => cfg.ratio = num(key, value)?,
        "interval" => cfg.interval = num(key, value)?,
        "threshold_div_k" => cfg.threshold_div_k = boolean(key, value)?,
        "dp.clip_c" => cfg.dp.clip_c = num(key, value)?,
        "dp.sigma" => cfg.dp.sigma = num(key, value)?,
        "dp.delta" => cfg.dp.delta = num(key, value)?,
        "dp.c1" => cfg.dp.c1 = num(key, value)?,
        "dp.c2" => cfg.dp.c2 = num(key, value)?,
        "model" => {
            cfg.model = match (value, cfg.model) {
                ("logistic", _) => Architecture::Logistic,
                ("mlp", m @ Architecture::Mlp { .. }) => m,
                ("mlp", _) => Architecture::Mlp {
                    hidden: DEFAULT_HIDDEN,
                    bias: true,
                },
                _ => return Err(validation(key, format!("{value:?} is not logistic or mlp"))),
            }
        }
        "model.hidden" | "model.bias" => match &mut cfg.model {
            Architecture::Mlp { hidden, bias } => {
                if key == "model.hidden" {
                    *hidden = num(key, value)?;
                } else {
                    *bias = boolean(key, value)?;
                }
            }
            Architecture::Logistic => return Err(validation(key, "only applies to model = mlp")),
        },
        "data" => {
            cfg.data = match (value, &cfg.data) {
                ("blobs", d @ DataSource::Blobs { .. }) | ("files", d @ DataSource::Files { .. }) => d.clone(),
                ("blobs", _) => default_blobs(),
                ("files", _) => DataSource::Files {
                    train: PathBuf::new(),
                    test: PathBuf::new(),
                },
                _ => return Err(validation(key, format!("{value:?} is not blobs or files"))),
            }
        }
        "data.train" | "data.test" => match &mut cfg.data {
            DataSource::Files { train, test } => {
                let slot = if key == "data.train" { train } else { test };
                *slot = PathBuf::from(value);
            }
            DataSource::Blobs { .. } => return Err(validation(key, "only applies to data = files")),
        },
        "data.classes"
        | "data.dim"
        | "data.samples_per_class"
        | "data.test_per_class"
        | "data.spread"
        | "data.latent_rank" => match &mut cfg.data {
            DataSource::Blobs {
                num_classes,
                dim,
                samples_per_class,
                test_per_class,
                spread,
                latent_rank,
            } => match key {
                "data.classes" => *num_classes = num(key, value)?,
                "data.dim" => *dim = num(key, value)?,
                "data.samples_per_class" => *samples_per_class = num(key, value)?,
                "data.test_per_class" => *test_per_class = num(key, value)?,
                "data.spread" => *spread = num(key, value)?,
                _ => *latent_rank = if value == "none" { None } else { Some(num(key, value)?) },
            },
            DataSource::Files { .. } => return Err(validation(key, "only applies to data = blobs")),
        },
        "partition" => {
            cfg.partition = match (value, cfg.partition) {
                ("iid", _) => PartitionMode::Iid,
                ("label_shard", p @ PartitionMode::LabelShard { .. }) => p,
                ("label_shard", _) => PartitionMode::LabelShard { shards_per_client: 2 },
                ("dirichlet", p @ PartitionMode::Dirichlet { .. }) => p,
                ("dirichlet", _) => PartitionMode::Dirichlet { alpha: 0.5 },
                _ => {
                    return Err(validation(
                        key,
                        format!("{value:?} is not iid, label_shard or dirichlet"),
                    ))
                }
            }
        }
        "partition.shards" => match &mut cfg.partition {
            PartitionMode::LabelShard { shards_per_client } => *shards_per_client = num(key, value)?,
            _ => return Err(validation(key, "only applies to partition = label_shard")),
        },
        "partition.alpha" => match &mut cfg.partition {
            PartitionMode::Dirichlet { alpha } => *alpha = num(key, value)?,
            _ => return Err(validation(key, "only applies to partition = dirichlet")),
        },
        _ => return Err(validation(key, "unknown key")),
    }
    Ok(())
}

/// Maps a failed [`RunConfig::validate`] onto the key that caused it.
pub fn validate(cfg: &RunConfig) -> Result<()> {
    if let DataSource::Files { train, test } = &cfg.data {
        if train.as_os_str().is_empty() {
            return Err(validation("data.train", "required when data = files"));
        }
        if test.as_os_str().is_empty() {
            return Err(validation("data.test", "required when data = files"));
        }
    }
    cfg.validate().map_err(|e| match e {
        ProtocolError::InvalidConfig { field, reason } => validation(field, reason),
        other => validation("config", other.to_string()),
    })
}

/// Parses configuration text. Relative data paths are resolved against
/// `base_dir` when one is given.
pub fn parse_config_str(text: &str, base_dir: Option<&Path>) -> Result<RunConfig> {
    let mut entries: Vec<(usize, &str, &str)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Parse {
            line,
            message: format!("expected `key = value`, found {content:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Parse {
                line,
                message: "empty key or value".into(),
            });
        }
        if !KEYS.contains(&key) {
            return Err(ConfigError::Parse {
                line,
                message: format!("unknown key {key:?}"),
            });
        }
        if let Some((first, _, _)) = entries.iter().find(|(_, k, _)| *k == key) {
            return Err(ConfigError::Parse {
                line,
                message: format!("{key:?} already set on line {first}"),
            });
        }
        entries.push((line, key, value));
    }
    let mut cfg = RunConfig::default();
    let (selectors, rest): (Vec<_>, Vec<_>) = entries.iter().partition(|(_, k, _)| SELECTORS.contains(k));
    for (_, key, value) in selectors.into_iter().chain(rest) {
        set_key(&mut cfg, key, value)?;
    }
    if let (Some(dir), DataSource::Files { train, test }) = (base_dir, &mut cfg.data) {
        for p in [train, test] {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = dir.join(&*p);
            }
        }
    }
    validate(&cfg)?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_config_str(&text, path.parent())
}

/// Every key that applies to `cfg`, one per line, in [`KEYS`] order.
pub fn to_config_text(cfg: &RunConfig) -> String {
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        writeln!(out, "{k} = {v}").expect("writing to a String");
    };
    put("algorithm", cfg.algorithm.name().into());
    put("seed", cfg.seed.to_string());
    put("n_total", cfg.n_total.to_string());
    put("k_selected", cfg.k_selected.to_string());
    put("rounds", cfg.rounds.to_string());
    put("local_epochs", cfg.local_epochs.to_string());
    put("batch_size", cfg.batch_size.to_string());
    put("lr", cfg.lr.to_string());
    put("eval_every", cfg.eval_every.to_string());
    put("lambda", cfg.lambda.to_string());
    put("ratio", cfg.ratio.to_string());
    put("interval", cfg.interval.to_string());
    put("threshold_div_k", cfg.threshold_div_k.to_string());
    put("dp.clip_c", cfg.dp.clip_c.to_string());
    put("dp.sigma", cfg.dp.sigma.to_string());
    put("dp.delta", cfg.dp.delta.to_string());
    put("dp.c1", cfg.dp.c1.to_string());
    put("dp.c2", cfg.dp.c2.to_string());
    match cfg.model {
        Architecture::Logistic => put("model", "logistic".into()),
        Architecture::Mlp { hidden, bias } => {
            put("model", "mlp".into());
            put("model.hidden", hidden.to_string());
            put("model.bias", bias.to_string());
        }
    }
    match &cfg.data {
        DataSource::Blobs {
            num_classes,
            dim,
            samples_per_class,
            test_per_class,
            spread,
            latent_rank,
        } => {
            put("data", "blobs".into());
            put("data.classes", num_classes.to_string());
            put("data.dim", dim.to_string());
            put("data.samples_per_class", samples_per_class.to_string());
            put("data.test_per_class", test_per_class.to_string());
            put("data.spread", spread.to_string());
            put(
                "data.latent_rank",
                latent_rank.map_or_else(|| "none".to_string(), |r| r.to_string()),
            );
        }
        DataSource::Files { train, test } => {
            put("data", "files".into());
            put("data.train", train.display().to_string());
            put("data.test", test.display().to_string());
        }
    }
    match cfg.partition {
        PartitionMode::Iid => put("partition", "iid".into()),
        PartitionMode::LabelShard { shards_per_client } => {
            put("partition", "label_shard".into());
            put("partition.shards", shards_per_client.to_string());
        }
        PartitionMode::Dirichlet { alpha } => {
            put("partition", "dirichlet".into());
            put("partition.alpha", alpha.to_string());
        }
    }
    out
}
