//! JSON run configuration, dotted overrides and custom-distribution files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

use sepgd_core::experiments::{DistributionSpec, EtaSpec, SweepAxes, SweepConfig, TrialConfig};
use sepgd_core::optim::Algo;
use sepgd_core::{LossName, TailSpec};

use crate::CliError;

/// Everything a command needs, read from one JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub tail: TailSpec,
    pub loss: LossName,
    pub distribution: DistributionSpec,
    pub gamma: f64,
    #[serde(default)]
    pub eta: EtaSpec,
    #[serde(rename = "T")]
    pub steps: u64,
    pub n: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(rename = "K", default = "default_k")]
    pub k: f64,
    #[serde(default = "default_algo")]
    pub algo: Algo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_eps: Option<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub sweep: SweepSection,
}

/// Sweep axes; scalars are accepted where lists are expected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(rename = "T", default, deserialize_with = "one_or_many")]
    pub steps: Vec<u64>,
    #[serde(default, deserialize_with = "one_or_many")]
    pub n: Vec<usize>,
    #[serde(default, deserialize_with = "one_or_many")]
    pub gamma: Vec<f64>,
    /// Cells with fewer completed trials fail verification; defaults to `trials`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_trials: Option<usize>,
}

fn default_delta() -> f64 {
    0.1
}

fn default_k() -> f64 {
    sepgd_core::bounds::DEFAULT_K
}

fn default_algo() -> Algo {
    Algo::Gd
}

fn default_trials() -> usize {
    2000
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn one_or_many<'de, D, T>(d: D) -> Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    })
}

impl RunConfig {
    pub fn trial(&self) -> TrialConfig {
        TrialConfig {
            tail: self.tail.clone(),
            loss: self.loss,
            distribution: self.distribution.clone(),
            gamma: self.gamma,
            eta: self.eta,
            steps: self.steps,
            n: self.n,
            delta: self.delta,
            k: self.k,
            algo: self.algo,
            reference_eps: self.reference_eps,
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            base: self.trial(),
            axes: SweepAxes {
                steps: self.sweep.steps.clone(),
                n: self.sweep.n.clone(),
                gamma: self.sweep.gamma.clone(),
            },
            trials: self.trials,
            min_trials: self.sweep.min_trials.unwrap_or(self.trials),
            seed: self.seed,
        }
    }
}

/// Applies `path.to.field=value` to a JSON tree. The value is parsed as JSON
/// and falls back to a plain string.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects path=value, got `{spec}`")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Usage(format!("empty key in --set path `{path}`")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for (i, key) in keys.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("--set {path}: `{}` is not an object", keys[..i].join("."))))?;
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("split always yields at least one key")
}

/// Replaces `{"kind": "custom", "path": …}` with the referenced file's fields.
/// Fields given inline take precedence over the file.
fn resolve_distribution_path(root: &mut Value, base: &Path) -> Result<(), CliError> {
    let Some(dist) = root.get_mut("distribution").and_then(Value::as_object_mut) else {
        return Ok(());
    };
    let Some(path) = dist.remove("path") else {
        return Ok(());
    };
    let path = path
        .as_str()
        .ok_or_else(|| CliError::Usage("distribution.path: expected a string".into()))?;
    let full = base.join(path);
    let text = fs::read_to_string(&full)
        .map_err(|e| CliError::Usage(format!("distribution.path: cannot read {}: {e}", full.display())))?;
    let file: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("distribution.path: {}: {e}", full.display())))?;
    let Value::Object(fields) = file else {
        return Err(CliError::Usage(format!("{}: expected a JSON object", full.display())));
    };
    for (k, v) in fields {
        dist.entry(k).or_insert(v);
    }
    dist.entry("kind").or_insert_with(|| Value::String("custom".into()));
    Ok(())
}

/// Reads a config file, applies overrides and deserializes it, reporting the
/// offending field path on failure.
pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut root: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    for spec in overrides {
        apply_override(&mut root, spec)?;
    }
    resolve_distribution_path(&mut root, path.parent().unwrap_or(Path::new(".")))?;
    from_value(root).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Deserializes with the failing field path prefixed, e.g. `sweep.T[1]: …`.
pub fn from_value(root: Value) -> Result<RunConfig, String> {
    serde_path_to_error::deserialize(root).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            inner.to_string()
        } else {
            format!("{path}: {inner}")
        }
    })
}
