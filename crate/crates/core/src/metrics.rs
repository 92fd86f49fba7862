//! NDCG@K, EMD, Diff and Kendall's tau between a predicted and a
//! ground-truth ranking, plus quadratic reference implementations.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranker::standardize;

/// Two rankings of the same ids. Positions are 1-based, 1 = most important.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingPair {
    pub ids: Vec<String>,
    pub gt_positions: Vec<usize>,
    pub pred_positions: Vec<usize>,
    pub gt_scores: Vec<f64>,
    pub pred_scores: Vec<f64>,
}

/// 1-based positions by descending score, ties by ascending id.
pub fn positions_from_scores(ids: &[String], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| ids[a].cmp(&ids[b])));
    let mut pos = vec![0; ids.len()];
    for (rank, &i) in order.iter().enumerate() {
        pos[i] = rank + 1;
    }
    pos
}

impl RankingPair {
    pub fn from_scores(ids: Vec<String>, gt_scores: Vec<f64>, pred_scores: Vec<f64>) -> Result<Self> {
        if ids.len() != gt_scores.len() || ids.len() != pred_scores.len() {
            return Err(Error::Invariant("ids and score vectors differ in length".into()));
        }
        if gt_scores.iter().any(|v| v.is_nan()) || pred_scores.iter().any(|v| v.is_nan()) {
            return Err(Error::Invariant("NaN score in a ranking".into()));
        }
        Ok(Self {
            gt_positions: positions_from_scores(&ids, &gt_scores),
            pred_positions: positions_from_scores(&ids, &pred_scores),
            ids,
            gt_scores,
            pred_scores,
        })
    }

    /// Pair built from two orderings (most important first); scores are `n - position`.
    pub fn from_orders(gt: &[&str], pred: &[&str]) -> Result<Self> {
        let mut ids: Vec<String> = gt.iter().map(|s| s.to_string()).collect();
        ids.sort();
        let score_of = |order: &[&str]| -> Result<Vec<f64>> {
            ids.iter()
                .map(|id| {
                    order
                        .iter()
                        .position(|o| o == id)
                        .map(|p| (order.len() - p) as f64)
                        .ok_or_else(|| Error::Invariant(format!("{id} missing from an ordering")))
                })
                .collect()
        };
        if pred.len() != gt.len() {
            return Err(Error::Invariant("orderings differ in length".into()));
        }
        let g = score_of(gt)?;
        let p = score_of(pred)?;
        Self::from_scores(ids, g, p)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Relevance `n - gt_position`, gain `2^rel - 1`, discount `log2(j + 1)`.
///
/// Gains are computed scaled by `2^-(n-1)` so long lists do not overflow;
/// the scale cancels in the ratio.
pub fn ndcg_at_k(pair: &RankingPair, k: usize) -> f64 {
    let n = pair.len();
    assert!(k >= 1 && k <= n, "k = {k} outside 1..={n}");
    let shift = n as f64 - 1.0;
    let gain = |gt_pos: usize| {
        let rel = (n - gt_pos) as f64;
        (rel - shift).exp2() - (-shift).exp2()
    };
    let discount = |j: usize| 1.0 / ((j + 1) as f64).log2();
    let mut at_pred = vec![0; n];
    for (i, &p) in pair.pred_positions.iter().enumerate() {
        at_pred[p - 1] = i;
    }
    let dcg: f64 = (1..=k).map(|j| gain(pair.gt_positions[at_pred[j - 1]]) * discount(j)).sum();
    let idcg: f64 = (1..=k).map(|j| gain(j) * discount(j)).sum();
    if idcg == 0.0 {
        1.0
    } else {
        dcg / idcg
    }
}

/// `Σ|cdf_p - cdf_q|` over a shared ordered support.
pub fn emd_distributions(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    let mut cum = 0.0;
    let mut total = 0.0;
    for (a, b) in p.iter().zip(q) {
        cum += a - b;
        total += cum.abs();
    }
    total
}

fn finite_or_floor(v: &[f64]) -> Vec<f64> {
    let floor = v
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 0.0 };
    v.iter().map(|&x| if x.is_finite() { x } else { floor }).collect()
}

/// Softmax over standardized scores, support in ascending id order.
///
/// Non-finite predicted scores (unranked segments) are replaced by the lowest
/// finite score first.
pub fn emd(pair: &RankingPair) -> f64 {
    let mut order: Vec<usize> = (0..pair.len()).collect();
    order.sort_by(|&a, &b| pair.ids[a].cmp(&pair.ids[b]));
    let dist = |scores: &[f64]| {
        let s = standardize(&finite_or_floor(scores));
        let p = crate::nn::layers::softmax(&s);
        order.iter().map(|&i| p[i]).collect::<Vec<f64>>()
    };
    emd_distributions(&dist(&pair.gt_scores), &dist(&pair.pred_scores))
}

/// `Σ|gt_pos - pred_pos| / floor(n²/2)`.
pub fn diff(pair: &RankingPair) -> f64 {
    let n = pair.len();
    assert!(n >= 2, "diff needs n >= 2");
    let total: usize = pair
        .gt_positions
        .iter()
        .zip(&pair.pred_positions)
        .map(|(a, b)| a.abs_diff(*b))
        .sum();
    total as f64 / ((n * n) / 2) as f64
}

fn merge_count(v: &mut [usize], buf: &mut Vec<usize>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf.push(v[i]);
            i += 1;
        } else {
            buf.push(v[j]);
            inv += (mid - i) as u64;
            j += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    inv
}

fn pairs(n: usize) -> f64 {
    0.5 * n as f64 * (n as f64 - 1.0)
}

/// Kendall's tau by merge-sort inversion counting, `O(n log n)`.
pub fn kendall_tau(pair: &RankingPair) -> f64 {
    let n = pair.len();
    assert!(n >= 2, "kendall_tau needs n >= 2");
    let mut by_gt = vec![0; n];
    for (i, &g) in pair.gt_positions.iter().enumerate() {
        by_gt[g - 1] = pair.pred_positions[i];
    }
    let discordant = merge_count(&mut by_gt, &mut Vec::with_capacity(n)) as f64;
    let total = pairs(n);
    (total - 2.0 * discordant) / total
}

/// Kendall's tau by enumerating all pairs, `O(n²)`.
pub fn kendall_tau_naive(pair: &RankingPair) -> f64 {
    let n = pair.len();
    let (g, p) = (&pair.gt_positions, &pair.pred_positions);
    let mut c = 0i64;
    let mut d = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            match (g[i].cmp(&g[j]), p[i].cmp(&p[j])) {
                (a, b) if a == b && a != Ordering::Equal => c += 1,
                (Ordering::Equal, _) | (_, Ordering::Equal) => {}
                _ => d += 1,
            }
        }
    }
    (c - d) as f64 / pairs(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub ndcg_at_k: f64,
    pub emd: f64,
    pub diff: f64,
    pub kendall_tau: f64,
    pub n: usize,
    pub k: usize,
}

/// All four metrics; `k = None` means the full list.
pub fn evaluate(pair: &RankingPair, k: Option<usize>) -> Result<MetricsReport> {
    let n = pair.len();
    if n < 2 {
        return Err(Error::Invariant(format!("evaluation needs at least 2 segments, got {n}")));
    }
    let k = k.unwrap_or(n);
    if k == 0 || k > n {
        return Err(Error::Config(format!("k = {k} outside 1..={n}")));
    }
    Ok(MetricsReport {
        ndcg_at_k: ndcg_at_k(pair, k),
        emd: emd(pair),
        diff: diff(pair),
        kendall_tau: kendall_tau(pair),
        n,
        k,
    })
}
