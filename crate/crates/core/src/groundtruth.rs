//! Ground-truth importance from a deterministic cascade-failure surrogate.
//!
//! The seed segment is slowed to `speed_factor` of its limit. While it stays
//! failed, the flow of every path through a failed segment queues back onto
//! the nearest upstream segment of that path that is still running. A running
//! segment fails once that spilled-back demand plus its own assigned volume
//! exceeds `overload_ratio × capacity`. Failures are permanent.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::DatasetBundle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureSimConfig {
    /// remaining fraction of the seed's speed limit
    pub speed_factor: f64,
    /// a segment slower than this fraction of its limit counts as failed
    pub fail_threshold: f64,
    /// demand / capacity ratio above which a segment fails
    pub overload_ratio: f64,
    pub horizon_t: usize,
    pub gamma: f64,
}

impl Default for FailureSimConfig {
    fn default() -> Self {
        Self {
            speed_factor: 0.1,
            fail_threshold: 0.1,
            overload_ratio: 1.0,
            horizon_t: 10,
            gamma: 0.9,
        }
    }
}

impl FailureSimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.speed_factor > 0.0 && self.speed_factor < 1.0) {
            return bad(format!("speed_factor must lie in (0, 1), got {}", self.speed_factor));
        }
        if !(self.fail_threshold > 0.0 && self.fail_threshold < 1.0) {
            return bad(format!("fail_threshold must lie in (0, 1), got {}", self.fail_threshold));
        }
        if !(self.overload_ratio > 0.0 && self.overload_ratio.is_finite()) {
            return bad(format!("overload_ratio must be positive, got {}", self.overload_ratio));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if self.horizon_t < 1 {
            return bad("horizon_t must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeTrace {
    pub seed_segment: usize,
    /// `n_1..n_T`: newly failed segments per step
    pub failed_per_step: Vec<usize>,
    pub failed_set_per_step: Vec<Vec<usize>>,
}

/// Runs the surrogate from `seed` for `cfg.horizon_t` steps.
pub fn simulate_cascade(bundle: &DatasetBundle, seed: usize, cfg: &FailureSimConfig) -> CascadeTrace {
    let n = bundle.network.len();
    let t_max = cfg.horizon_t;
    let mut trace = CascadeTrace {
        seed_segment: seed,
        failed_per_step: vec![0; t_max],
        failed_set_per_step: vec![Vec::new(); t_max],
    };
    let assigned = bundle.assigned_volumes();
    let path_volume = bundle.path_volumes();
    let mut capacity: Vec<f64> = bundle.network.segments.iter().map(|s| s.capacity).collect();
    let mut failed = vec![false; n];

    // step 0: the seed itself
    if cfg.speed_factor <= cfg.fail_threshold {
        failed[seed] = true;
    } else {
        // slowed but above the threshold: only its throughput drops
        capacity[seed] *= cfg.speed_factor;
        if assigned[seed] > cfg.overload_ratio * capacity[seed] {
            failed[seed] = true;
        }
    }
    if !failed[seed] {
        return trace;
    }

    for t in 0..t_max {
        let mut spill = vec![0.0; n];
        for (p, path) in bundle.paths.iter().enumerate() {
            let mut receivers = BTreeSet::new();
            for (pos, &f) in path.segments.iter().enumerate() {
                if !failed[f] {
                    continue;
                }
                if let Some(&u) = path.segments[..pos].iter().rev().find(|&&u| !failed[u]) {
                    receivers.insert(u);
                }
            }
            for u in receivers {
                spill[u] += path_volume[p];
            }
        }
        let new: Vec<usize> = (0..n)
            .filter(|&u| !failed[u] && spill[u] > 0.0)
            .filter(|&u| spill[u] + assigned[u] > cfg.overload_ratio * capacity[u])
            .collect();
        if new.is_empty() {
            break;
        }
        for &u in &new {
            failed[u] = true;
        }
        trace.failed_per_step[t] = new.len();
        trace.failed_set_per_step[t] = new;
    }
    trace
}

/// `Σ_{t=1}^{T} γ^t n_t` over the first `t_max` steps of `n`.
pub fn importance_score(n: &[usize], gamma: f64, t_max: usize) -> f64 {
    n.iter()
        .take(t_max)
        .enumerate()
        .map(|(i, &c)| gamma.powi(i as i32 + 1) * c as f64)
        .sum()
}

/// IS of every segment, by segment index.
pub fn ground_truth_table(bundle: &DatasetBundle, cfg: &FailureSimConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    Ok((0..bundle.network.len())
        .into_par_iter()
        .map(|s| {
            let trace = simulate_cascade(bundle, s, cfg);
            importance_score(&trace.failed_per_step, cfg.gamma, cfg.horizon_t)
        })
        .collect())
}

pub const GROUND_TRUTH_HEADER: &str = "segment_id,IS";

/// Writes `segment_id,IS` rows in segment order and the config sidecar
/// `<path>.config.json`.
pub fn write_ground_truth(
    path: &Path,
    ids: &[String],
    scores: &[f64],
    cfg: &FailureSimConfig,
) -> Result<()> {
    let mut text = String::from(GROUND_TRUTH_HEADER);
    text.push('\n');
    for (id, s) in ids.iter().zip(scores) {
        text.push_str(&format!("{id},{s}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    let side = config_sidecar(path);
    let body = serde_json::to_string_pretty(cfg).expect("config serializes") + "\n";
    fs::write(&side, body).map_err(|e| Error::io(&side, e))
}

pub fn config_sidecar(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".config.json");
    path.with_file_name(name)
}

/// Reads a ground-truth CSV and orders it by `ids`; every id must be present once.
pub fn read_ground_truth(path: &Path, ids: &[String]) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse = |line: usize, msg: String| Error::Parse {
        file: path.to_path_buf(),
        line,
        column: 0,
        message: msg,
    };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(GROUND_TRUTH_HEADER) {
        return Err(parse(1, format!("expected header {GROUND_TRUTH_HEADER}")));
    }
    let index: std::collections::HashMap<&str, usize> =
        ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut out = vec![None; ids.len()];
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let (id, v) = line
            .split_once(',')
            .ok_or_else(|| parse(line_no, "expected two fields".into()))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|e| parse(line_no, format!("IS value: {e}")))?;
        if !v.is_finite() || v < 0.0 {
            return Err(parse(line_no, format!("IS must be finite and >= 0, got {v}")));
        }
        let &s = index
            .get(id.trim())
            .ok_or_else(|| Error::Referential(format!("ground truth names unknown segment {id}")))?;
        if out[s].replace(v).is_some() {
            return Err(parse(line_no, format!("segment {id} listed twice")));
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| Error::Referential(format!("ground truth lacks segment {}", ids[i]))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{example_network, generate_random_dataset};

    fn seg(b: &DatasetBundle, id: &str) -> usize {
        b.network.segment_index(id).unwrap()
    }

    #[test]
    fn hand_evaluated_score() {
        assert!((importance_score(&[2, 1], 0.9, 2) - 2.61).abs() < 1e-12);
        assert_eq!(importance_score(&[1, 1, 1], 1.0, 3), 3.0);
        assert_eq!(importance_score(&[0, 0, 0], 0.9, 3), 0.0);
    }

    #[test]
    fn congestion_moves_upstream_on_the_example() {
        let b = example_network();
        let trace = simulate_cascade(&b, seg(&b, "v11"), &FailureSimConfig::default());
        assert_eq!(trace.failed_set_per_step[0], vec![seg(&b, "v10")]);
        assert_eq!(trace.failed_set_per_step[1], vec![seg(&b, "v9")]);
        assert_eq!(trace.failed_set_per_step[2], vec![seg(&b, "v8")]);
        assert_eq!(&trace.failed_per_step[..4], &[1, 1, 1, 0]);
    }

    #[test]
    fn shared_segment_outranks_single_path_segment() {
        let b = example_network();
        let gt = ground_truth_table(&b, &FailureSimConfig::default()).unwrap();
        assert!(gt[seg(&b, "v9")] >= gt[seg(&b, "v2")]);
        assert_eq!(gt.len(), 11);
        assert!(gt.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn horizon_one_trace_has_one_entry() {
        let b = example_network();
        let cfg = FailureSimConfig {
            horizon_t: 1,
            ..FailureSimConfig::default()
        };
        assert_eq!(simulate_cascade(&b, 3, &cfg).failed_per_step.len(), 1);
    }

    #[test]
    fn segment_without_flow_scores_zero() {
        let b = generate_random_dataset(30, 2, 1, 4).unwrap();
        let on: BTreeSet<usize> = b.segments_on_paths();
        let off = (0..30).find(|s| !on.contains(s)).unwrap();
        let trace = simulate_cascade(&b, off, &FailureSimConfig::default());
        assert!(trace.failed_per_step.iter().all(|&n| n == 0));
    }

    #[test]
    fn failed_sets_are_disjoint() {
        let b = generate_random_dataset(60, 10, 3, 8).unwrap();
        let cfg = FailureSimConfig::default();
        for s in 0..60 {
            let t = simulate_cascade(&b, s, &cfg);
            let mut seen = BTreeSet::from([s]);
            for (set, &n) in t.failed_set_per_step.iter().zip(&t.failed_per_step) {
                assert_eq!(set.len(), n);
                for u in set {
                    assert!(seen.insert(*u));
                }
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let b = example_network();
        let cfg = FailureSimConfig::default();
        let gt = ground_truth_table(&b, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.csv");
        write_ground_truth(&p, &b.segment_ids(), &gt, &cfg).unwrap();
        assert_eq!(read_ground_truth(&p, &b.segment_ids()).unwrap(), gt);
        assert!(config_sidecar(&p).exists());
    }
}
