//! HetGWalk: joint heterogeneous walks over the trip graph and the
//! attribute-guided graphs.
//!
//! Each step flips a Bernoulli(α) coin. Heads takes one trip-graph step from
//! the depth/breadth mixture `β·P̃[current] + (1-β)·P̃[predecessor]`; tails
//! takes an entity → attribute → entity step inside the current entity's
//! attribute-guided graph and appends both tokens. The predecessor is always
//! the entity the step started from.
//!
//! Every walk owns a ChaCha stream keyed by `(seed, od, walk)`, so the corpus
//! does not depend on the order walks are generated in.

pub mod alias;
mod corpus;
pub mod kernel;
pub mod markov;
mod sampler;

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use corpus::{read_corpus, write_corpus, CorpusHeader, TokenRecord};
pub use sampler::{build_sampler, AliasSampler, TgRow};

use crate::error::{Error, Result};
use crate::tripgraph::{Graphs, NodeType};
use kernel::Move;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkConfig {
    /// probability of a trip-graph step
    pub alpha: f64,
    /// weight of the current node's row against the predecessor's
    pub beta: f64,
    /// segment → segment weight inside a segment's depth-first row
    pub epsilon: f64,
    /// walks per OD node
    pub num: usize,
    /// loop iterations per walk, the start token included
    pub len: usize,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            beta: 0.8,
            epsilon: 0.5,
            num: 25,
            len: 20,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon must lie in [0, 1], got {}", self.epsilon));
        }
        if self.num < 1 {
            return bad("num must be at least 1".into());
        }
        if self.len < 2 {
            return bad(format!("len must be at least 2, got {}", self.len));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Od,
    Path,
    Segment,
    Attribute,
}

/// One element of a walk. For attribute tokens `type_tag` is the owning
/// graph's type and `index` the attribute position; otherwise `index` is the
/// entity's position within its type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WalkToken {
    pub kind: TokenKind,
    pub type_tag: NodeType,
    pub index: usize,
}

impl WalkToken {
    pub fn entity(t: NodeType, index: usize) -> Self {
        let kind = match t {
            NodeType::Od => TokenKind::Od,
            NodeType::Path => TokenKind::Path,
            NodeType::Segment => TokenKind::Segment,
        };
        Self {
            kind,
            type_tag: t,
            index,
        }
    }

    pub fn attribute(t: NodeType, index: usize) -> Self {
        Self {
            kind: TokenKind::Attribute,
            type_tag: t,
            index,
        }
    }

    pub fn is_entity(&self) -> bool {
        self.kind != TokenKind::Attribute
    }
}

pub type WalkSequence = Vec<WalkToken>;

#[derive(Debug, Clone, PartialEq)]
pub struct WalkCorpus {
    pub sequences: Vec<WalkSequence>,
    pub config: WalkConfig,
    pub fingerprint: String,
}

impl WalkCorpus {
    /// Number of segment tokens across all sequences.
    pub fn segment_token_count(&self) -> usize {
        self.sequences
            .iter()
            .flatten()
            .filter(|t| t.kind == TokenKind::Segment)
            .count()
    }
}

/// How line 7 of the walk loop picks a branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BranchPolicy {
    /// Bernoulli(α) per step
    Mixed,
    /// every step on the trip graph (the α → 1 limit)
    TripGraphOnly,
    /// every step through the attribute graphs (the α → 0 limit)
    AttributeOnly,
}

/// Result of a trip-graph step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TgStep {
    Next(WalkToken),
    /// no mass left: go back to the walk's OD
    Restart,
}

fn global_of(s: &AliasSampler, t: WalkToken) -> usize {
    debug_assert!(t.is_entity());
    s.offset(t.type_tag) + t.index
}

fn token_of(s: &AliasSampler, g: usize) -> WalkToken {
    let (t, i) = s.local(g);
    WalkToken::entity(t, i)
}

/// One trip-graph step from `current`, mixing in `predecessor`'s row with weight `1-β`.
pub fn tg_step<R: Rng + ?Sized>(
    current: WalkToken,
    predecessor: Option<WalkToken>,
    sampler: &AliasSampler,
    beta: f64,
    rng: &mut R,
) -> TgStep {
    let cur = global_of(sampler, current);
    let pred = predecessor.map(|p| global_of(sampler, p));
    let cur_alive = sampler.tg_row(cur).is_some();
    let pred_alive = pred.is_some_and(|p| sampler.tg_row(p).is_some());
    let row = match (cur_alive, pred_alive) {
        (false, false) => return TgStep::Restart,
        (true, false) => cur,
        (false, true) => pred.unwrap(),
        (true, true) => {
            if rng.random::<f64>() < beta {
                cur
            } else {
                pred.unwrap()
            }
        }
    };
    match sampler.sample_tg(row, rng).expect("live row") {
        Move::To(g) => TgStep::Next(token_of(sampler, g)),
        Move::Restart => TgStep::Restart,
    }
}

/// Entity → attribute → entity step; returns `(attribute token, entity token)`.
pub fn ag_step<R: Rng + ?Sized>(
    current: WalkToken,
    sampler: &AliasSampler,
    rng: &mut R,
) -> (WalkToken, WalkToken) {
    let t = current.type_tag;
    let k = sampler.sample_attribute(t, current.index, rng);
    let j = sampler.sample_entity(t, k, current.index, rng);
    (WalkToken::attribute(t, k), WalkToken::entity(t, j))
}

/// Outcome of one iteration of the walk loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum JointStep {
    /// trip-graph move to this entity
    Tg(WalkToken),
    /// trip-graph restart at the walk's OD
    Restart,
    /// attribute token, then entity token
    Ag(WalkToken, WalkToken),
}

/// One loop iteration: a Bernoulli(α) branch, then a trip-graph or attribute step.
pub fn joint_step<R: Rng + ?Sized>(
    current: WalkToken,
    predecessor: Option<WalkToken>,
    sampler: &AliasSampler,
    cfg: &WalkConfig,
    policy: BranchPolicy,
    rng: &mut R,
) -> JointStep {
    let tg = match policy {
        BranchPolicy::Mixed => rng.random::<f64>() < cfg.alpha,
        BranchPolicy::TripGraphOnly => true,
        BranchPolicy::AttributeOnly => false,
    };
    if tg {
        match tg_step(current, predecessor, sampler, cfg.beta, rng) {
            TgStep::Next(next) => JointStep::Tg(next),
            TgStep::Restart => JointStep::Restart,
        }
    } else {
        let (attr, next) = ag_step(current, sampler, rng);
        JointStep::Ag(attr, next)
    }
}

/// Analytic law of [`joint_step`] under [`BranchPolicy::Mixed`], zero-probability outcomes omitted.
pub fn joint_step_law(
    g: &Graphs,
    current: WalkToken,
    predecessor: Option<WalkToken>,
    cfg: &WalkConfig,
) -> BTreeMap<JointStep, f64> {
    let tg = &g.trip;
    let global = |t: WalkToken| tg.global(t.type_tag, t.index);
    let mut out = BTreeMap::new();
    let mixed = kernel::mixed_tg_distribution(
        g,
        global(current),
        predecessor.map(global),
        cfg.beta,
        cfg.epsilon,
    );
    for (m, p) in mixed {
        let key = match m {
            Move::To(j) => {
                let (t, i) = tg.local(j);
                JointStep::Tg(WalkToken::entity(t, i))
            }
            Move::Restart => JointStep::Restart,
        };
        *out.entry(key).or_insert(0.0) += cfg.alpha * p;
    }
    let t = current.type_tag;
    let ag = g.attributes.get(t);
    for (k, pk) in kernel::attribute_distribution(ag, current.index).into_iter().enumerate() {
        for (j, pj) in kernel::entity_distribution(ag, k, current.index).into_iter().enumerate() {
            let w = (1.0 - cfg.alpha) * pk * pj;
            if w > 0.0 {
                out.insert(JointStep::Ag(WalkToken::attribute(t, k), WalkToken::entity(t, j)), w);
            }
        }
    }
    out
}

/// RNG stream of walk `walk` from OD `od`.
pub fn walk_rng(seed: u64, od: usize, walk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((od as u64) << 32) | walk as u64);
    rng
}

/// A single walk starting at OD `od`.
pub fn walk_from(
    sampler: &AliasSampler,
    cfg: &WalkConfig,
    od: usize,
    walk: usize,
    policy: BranchPolicy,
) -> WalkSequence {
    let mut rng = walk_rng(cfg.seed, od, walk);
    let start = WalkToken::entity(NodeType::Od, od);
    let mut seq = vec![start];
    let mut current = start;
    let mut predecessor = None;
    for _ in 2..=cfg.len {
        match joint_step(current, predecessor, sampler, cfg, policy, &mut rng) {
            JointStep::Tg(next) => {
                seq.push(next);
                predecessor = Some(current);
                current = next;
            }
            JointStep::Restart => {
                seq.push(start);
                predecessor = None;
                current = start;
            }
            JointStep::Ag(attr, next) => {
                seq.push(attr);
                seq.push(next);
                predecessor = Some(current);
                current = next;
            }
        }
    }
    seq
}

/// `num` walks from every OD node, OD-major order.
pub fn run_hetgwalk(sampler: &AliasSampler, cfg: &WalkConfig) -> Result<WalkCorpus> {
    cfg.validate()?;
    Ok(run_hetgwalk_with(sampler, cfg, BranchPolicy::Mixed))
}

/// [`run_hetgwalk`] with an explicit branch policy and no config validation.
pub fn run_hetgwalk_with(
    sampler: &AliasSampler,
    cfg: &WalkConfig,
    policy: BranchPolicy,
) -> WalkCorpus {
    let n_od = sampler.count(NodeType::Od);
    let sequences = (0..n_od * cfg.num)
        .into_par_iter()
        .map(|w| walk_from(sampler, cfg, w / cfg.num, w % cfg.num, policy))
        .collect();
    WalkCorpus {
        sequences,
        config: *cfg,
        fingerprint: sampler.fingerprint().to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::example_network;

    fn example() -> (Graphs, AliasSampler, WalkConfig) {
        let g = Graphs::build(&example_network(), 2.0).unwrap();
        let cfg = WalkConfig {
            num: 2,
            seed: 11,
            ..WalkConfig::default()
        };
        let s = build_sampler(&g, &cfg);
        (g, s, cfg)
    }

    #[test]
    fn config_bounds() {
        let ok = WalkConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            WalkConfig { alpha: 1.0, ..ok },
            WalkConfig { alpha: 0.0, ..ok },
            WalkConfig { beta: 1.5, ..ok },
            WalkConfig { epsilon: -0.1, ..ok },
            WalkConfig { num: 0, ..ok },
            WalkConfig { len: 1, ..ok },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn corpus_counts_and_start_tokens() {
        let (_, s, cfg) = example();
        let c = run_hetgwalk(&s, &cfg).unwrap();
        assert_eq!(c.sequences.len(), 4);
        for (w, seq) in c.sequences.iter().enumerate() {
            assert_eq!(seq[0], WalkToken::entity(NodeType::Od, w / 2));
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let (_, s, cfg) = example();
        assert_eq!(run_hetgwalk(&s, &cfg).unwrap(), run_hetgwalk(&s, &cfg).unwrap());
        let other = WalkConfig { seed: 12, ..cfg };
        assert_ne!(
            run_hetgwalk(&s, &cfg).unwrap().sequences,
            run_hetgwalk(&s, &other).unwrap().sequences
        );
    }

    #[test]
    fn trip_graph_only_walks_have_no_attribute_tokens() {
        let (_, s, cfg) = example();
        let c = run_hetgwalk_with(&s, &cfg, BranchPolicy::TripGraphOnly);
        assert!(c.sequences.iter().flatten().all(WalkToken::is_entity));
        for seq in &c.sequences {
            assert_eq!(seq.len(), cfg.len);
        }
    }

    #[test]
    fn attribute_tokens_sit_between_same_type_entities() {
        let (_, s, cfg) = example();
        let cfg = WalkConfig { num: 20, ..cfg };
        let c = run_hetgwalk(&s, &cfg).unwrap();
        let mut saw_attr = false;
        for seq in &c.sequences {
            assert!(seq.len() >= cfg.len && seq.len() <= 2 * cfg.len - 1);
            for (i, t) in seq.iter().enumerate() {
                if t.kind == TokenKind::Attribute {
                    saw_attr = true;
                    assert!(i > 0 && i + 1 < seq.len());
                    assert!(seq[i - 1].is_entity() && seq[i + 1].is_entity());
                    assert_eq!(seq[i - 1].type_tag, t.type_tag);
                    assert_eq!(seq[i + 1].type_tag, t.type_tag);
                }
            }
        }
        assert!(saw_attr);
    }

    #[test]
    fn single_path_od_steps_to_its_path() {
        let (_, s, _) = example();
        let mut rng = walk_rng(0, 0, 0);
        for _ in 0..100 {
            let next = tg_step(WalkToken::entity(NodeType::Od, 0), None, &s, 0.8, &mut rng);
            assert_eq!(next, TgStep::Next(WalkToken::entity(NodeType::Path, 0)));
        }
    }

    #[test]
    fn epsilon_extremes_fix_the_next_type() {
        let b = example_network();
        let g = Graphs::build(&b, 2.0).unwrap();
        let v9 = WalkToken::entity(NodeType::Segment, b.network.segment_index("v9").unwrap());
        let mut rng = walk_rng(1, 0, 0);
        for (eps, kind) in [(1.0, TokenKind::Segment), (0.0, TokenKind::Path)] {
            let cfg = WalkConfig {
                epsilon: eps,
                ..WalkConfig::default()
            };
            let s = build_sampler(&g, &cfg);
            for _ in 0..200 {
                match tg_step(v9, None, &s, cfg.beta, &mut rng) {
                    TgStep::Next(t) => assert_eq!(t.kind, kind),
                    TgStep::Restart => panic!("v9 is not a dead end"),
                }
            }
        }
    }

    #[test]
    fn dead_end_segment_restarts_the_walk() {
        let b = crate::network::generate_random_dataset(12, 1, 1, 5).unwrap();
        let g = Graphs::build(&b, 2.0).unwrap();
        let off = g.kernels.dead_ends.segments_off_path[0];
        let s = build_sampler(&g, &WalkConfig::default());
        let mut rng = walk_rng(0, 0, 0);
        let step = tg_step(WalkToken::entity(NodeType::Segment, off), None, &s, 0.8, &mut rng);
        assert_eq!(step, TgStep::Restart);
    }
}
