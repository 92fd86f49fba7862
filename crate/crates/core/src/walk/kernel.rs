//! Analytic transition laws of the joint walk.
//!
//! These are the distributions the alias tables are built from, and the
//! reference the sampling and Markov-chain checks compare against.

use std::collections::BTreeMap;

use crate::tripgraph::{AttributeGuidedGraph, Graphs, NodeType};

/// A trip-graph move: to a global node, or back to the walk's OD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Move {
    To(usize),
    Restart,
}

/// One depth-first row `P̃[i]`, zero-probability outcomes omitted. Sums to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFirstRow {
    pub outcomes: Vec<Move>,
    pub probs: Vec<f64>,
}

/// Depth-first row of global node `node`; `None` when the row carries no mass.
///
/// * OD: the path shares.
/// * path: uniform over its segments.
/// * segment: `(1-ε)` over the paths through it (column-normalized
///   incidence) and `ε` over its downstream influence row. A block that is
///   empty for this segment (a path's last segment has no downstream row)
///   sends its weight to [`Move::Restart`].
pub fn depth_first_row(g: &Graphs, node: usize, epsilon: f64) -> Option<DepthFirstRow> {
    let tg = &g.trip;
    let k = &g.kernels;
    let mut outcomes = Vec::new();
    let mut probs = Vec::new();
    let (ty, i) = tg.local(node);
    match ty {
        NodeType::Od => {
            for (p, &w) in tg.m_op.row(i).iter().enumerate() {
                if w > 0.0 {
                    outcomes.push(Move::To(tg.global(NodeType::Path, p)));
                    probs.push(w);
                }
            }
        }
        NodeType::Path => {
            for (l, &w) in k.m_pl_row.row(i).iter().enumerate() {
                if w > 0.0 {
                    outcomes.push(Move::To(tg.global(NodeType::Segment, l)));
                    probs.push(w);
                }
            }
        }
        NodeType::Segment => {
            let mut restart = 0.0;
            let back = 1.0 - epsilon;
            let col = k.m_pl_col.column(i);
            let has_paths = col.iter().any(|&w| w > 0.0);
            if has_paths {
                if back > 0.0 {
                    for (p, &w) in col.iter().enumerate() {
                        if w > 0.0 {
                            outcomes.push(Move::To(tg.global(NodeType::Path, p)));
                            probs.push(back * w);
                        }
                    }
                }
            } else {
                restart += back;
            }
            let down = k.m_ll_row.row(i);
            let has_down = down.iter().any(|&w| w > 0.0);
            if has_down {
                if epsilon > 0.0 {
                    for (j, &w) in down.iter().enumerate() {
                        if w > 0.0 {
                            outcomes.push(Move::To(tg.global(NodeType::Segment, j)));
                            probs.push(epsilon * w);
                        }
                    }
                }
            } else {
                restart += epsilon;
            }
            if outcomes.is_empty() {
                return None;
            }
            if restart > 0.0 {
                outcomes.push(Move::Restart);
                probs.push(restart);
            }
        }
    }
    if outcomes.is_empty() {
        return None;
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Some(DepthFirstRow { outcomes, probs })
}

/// Distribution of one trip-graph step, `β·P̃[current] + (1-β)·P̃[predecessor]`.
///
/// Without a predecessor the current row is used alone. When exactly one of
/// the two rows is empty the other is used in full; when both are empty the
/// step restarts.
pub fn mixed_tg_distribution(
    g: &Graphs,
    current: usize,
    predecessor: Option<usize>,
    beta: f64,
    epsilon: f64,
) -> BTreeMap<Move, f64> {
    let cur = depth_first_row(g, current, epsilon);
    let pred = predecessor.and_then(|p| depth_first_row(g, p, epsilon));
    let mut out = BTreeMap::new();
    let mut add = |row: &DepthFirstRow, w: f64| {
        for (m, p) in row.outcomes.iter().zip(&row.probs) {
            *out.entry(*m).or_insert(0.0) += w * p;
        }
    };
    match (cur, pred) {
        (Some(c), Some(p)) => {
            add(&c, beta);
            add(&p, 1.0 - beta);
        }
        (Some(c), None) => add(&c, 1.0),
        (None, Some(p)) => add(&p, 1.0),
        (None, None) => {
            out.insert(Move::Restart, 1.0);
        }
    }
    out.retain(|_, p| *p > 0.0);
    out
}

/// `P(k | i)`: entity `i`'s normalized attribute values; uniform when all are zero.
pub fn attribute_distribution(ag: &AttributeGuidedGraph, i: usize) -> Vec<f64> {
    let col = ag.a_bar.column(i);
    let total: f64 = col.sum();
    if total > 0.0 {
        col.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / ag.n_attributes() as f64; ag.n_attributes()]
    }
}

/// Unnormalized similarity `1 - |ā_kj - ā_ki|` of every entity `j` to `i` under attribute `k`.
pub fn similarity_weights(ag: &AttributeGuidedGraph, k: usize, i: usize) -> Vec<f64> {
    let row = ag.a_bar.row(k);
    let anchor = row[i];
    row.iter().map(|v| 1.0 - (v - anchor).abs()).collect()
}

/// `P(j | k, i)` over all entities of the type, `i` itself included.
pub fn entity_distribution(ag: &AttributeGuidedGraph, k: usize, i: usize) -> Vec<f64> {
    let w = similarity_weights(ag, k, i);
    // the self term contributes 1, so the total is at least 1
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Entity → attribute → entity probabilities with both factors normalized.
pub fn ag_two_step_row(ag: &AttributeGuidedGraph, i: usize) -> Vec<f64> {
    let n = ag.n_entities();
    let mut out = vec![0.0; n];
    for (k, pk) in attribute_distribution(ag, i).into_iter().enumerate() {
        if pk == 0.0 {
            continue;
        }
        for (j, pj) in entity_distribution(ag, k, i).into_iter().enumerate() {
            out[j] += pk * pj;
        }
    }
    out
}

/// `ϑ_i(j) = Σ_k ā_ki (1 - |ā_kj - ā_ki|)`, unnormalized.
pub fn propagation_operator(ag: &AttributeGuidedGraph, i: usize) -> Vec<f64> {
    let mut out = vec![0.0; ag.n_entities()];
    for k in 0..ag.n_attributes() {
        let aki = ag.a_bar[[k, i]];
        for (j, s) in similarity_weights(ag, k, i).into_iter().enumerate() {
            out[j] += aki * s;
        }
    }
    out
}
