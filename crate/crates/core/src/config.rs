//! Run configuration: every module config plus paths, stored as a flat
//! `key = value` file with dotted keys (`walk.alpha = 0.6`).
//!
//! Lines starting with `#` and blank lines are ignored. Every key can also be
//! overridden one at a time with [`RunConfig::set`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::groundtruth::FailureSimConfig;
use crate::nn::EncoderConfig;
use crate::ranker::TrainConfig;
use crate::tripgraph::DEFAULT_DECAY_BASE;
use crate::walk::markov::DEFAULT_DENSE_CAP;
use crate::walk::WalkConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub decay_base: f64,
    /// also write every matrix as `row_id,col_id,value` CSV
    pub dump_matrices: bool,
    /// largest state space the dense Markov-chain checks accept
    pub dense_cap: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            decay_base: DEFAULT_DECAY_BASE,
            dump_matrices: false,
            dense_cap: DEFAULT_DENSE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// NDCG cutoff; `none` ranks the whole test list
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// directory holding `network.json`, `od.json`, `paths.json`
    pub data_dir: PathBuf,
    /// ground-truth CSV; `none` means `<out_dir>/ground_truth.csv`
    pub ground_truth: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub graph: GraphConfig,
    pub walk: WalkConfig,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub failure: FailureSimConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            ground_truth: None,
            out_dir: PathBuf::from("out"),
            graph: GraphConfig::default(),
            walk: WalkConfig::default(),
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            failure: FailureSimConfig::default(),
            eval: EvalConfig { k: None },
        }
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, child) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        Value::Null => out.push((prefix.to_string(), "none".into())),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Parses `raw` into the JSON type currently stored at the key.
fn parse_like(current: &Value, raw: &str, key: &str) -> Result<Value> {
    let bad = || Error::Config(format!("{key}: cannot parse {raw:?}"));
    if raw == "none" {
        return Ok(Value::Null);
    }
    Ok(match current {
        Value::Bool(_) => Value::Bool(raw.parse().map_err(|_| bad())?),
        Value::String(_) => Value::String(raw.to_string()),
        Value::Number(n) if n.is_u64() => match raw.parse::<u64>() {
            Ok(u) => Value::from(u),
            Err(_) => return Err(bad()),
        },
        Value::Number(_) => {
            let f: f64 = raw.parse().map_err(|_| bad())?;
            serde_json::Number::from_f64(f).map(Value::Number).ok_or_else(bad)?
        }
        // optional field currently unset: take a number if it is one
        Value::Null => match raw.parse::<u64>() {
            Ok(u) => Value::from(u),
            Err(_) => Value::String(raw.to_string()),
        },
        Value::Array(_) | Value::Object(_) => {
            return Err(Error::Config(format!("{key} is a section, not a value")))
        }
    })
}

impl RunConfig {
    /// Overrides one dotted key; unknown keys are rejected.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let mut root = serde_json::to_value(&*self).expect("config serializes");
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let map: &mut Map<String, Value> = node
                .as_object_mut()
                .ok_or_else(|| Error::Config(format!("unknown key {key}")))?;
            let child = map
                .get_mut(*part)
                .ok_or_else(|| Error::Config(format!("unknown key {key}")))?;
            if i + 1 == parts.len() {
                *child = parse_like(child, raw.trim(), key)?;
            }
            node = child;
        }
        *self = serde_json::from_value(root)
            .map_err(|e| Error::Config(format!("{key} = {raw}: {e}")))?;
        Ok(())
    }

    /// `key=value`, split at the first `=`.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got {assignment:?}")))?;
        self.set(k.trim(), v.trim())
    }

    /// All keys and values in file order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        flatten("", &serde_json::to_value(self).expect("config serializes"), &mut out);
        out
    }

    pub fn dump(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn parse(text: &str, file: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            cfg.set_assignment(line).map_err(|e| Error::Parse {
                file: file.to_path_buf(),
                line: i + 1,
                column: 1,
                message: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.dump()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.walk.validate()?;
        self.encoder.validate()?;
        self.train.validate()?;
        self.failure.validate()?;
        if !(self.graph.decay_base > 1.0 && self.graph.decay_base.is_finite()) {
            return Err(Error::Config(format!(
                "graph.decay_base must exceed 1, got {}",
                self.graph.decay_base
            )));
        }
        if self.eval.k == Some(0) {
            return Err(Error::Config("eval.k must be positive".into()));
        }
        Ok(())
    }

    pub fn ground_truth_path(&self) -> PathBuf {
        self.ground_truth
            .clone()
            .unwrap_or_else(|| self.out_dir.join("ground_truth.csv"))
    }
}
