use std::collections::HashMap;

use rand::Rng;

use super::alias::AliasTable;
use super::kernel::{attribute_distribution, depth_first_row, entity_distribution, Move};
use super::WalkConfig;
use crate::tripgraph::{Graphs, NodeType};

#[derive(Debug, Clone)]
pub struct TgRow {
    pub table: AliasTable,
    pub outcomes: Vec<Move>,
    /// the distribution the table was built from
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone)]
struct AgTables {
    /// entity → attribute
    attribute: Vec<AliasTable>,
    /// `[entity][attribute]` → index into `pool`; entities sharing a value share a table
    target: Vec<Vec<usize>>,
    pool: Vec<(AliasTable, Vec<f64>)>,
}

/// Alias tables for every trip-graph row and every attribute-guided transition.
///
/// Immutable after construction; walkers only need a shared reference.
#[derive(Debug, Clone)]
pub struct AliasSampler {
    counts: [usize; 3],
    tg: Vec<Option<TgRow>>,
    ag: [AgTables; 3],
    epsilon: f64,
    fingerprint: String,
}

impl AliasSampler {
    pub fn count(&self, t: NodeType) -> usize {
        self.counts[t.slot()]
    }

    pub fn offset(&self, t: NodeType) -> usize {
        self.counts[..t.slot()].iter().sum()
    }

    pub fn n_nodes(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Fingerprint of the graphs the sampler was built from.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn local(&self, g: usize) -> (NodeType, usize) {
        let mut rest = g;
        for t in NodeType::ALL {
            if rest < self.counts[t.slot()] {
                return (t, rest);
            }
            rest -= self.counts[t.slot()];
        }
        panic!("global node {g} out of range");
    }

    pub fn tg_row(&self, global: usize) -> Option<&TgRow> {
        self.tg[global].as_ref()
    }

    /// Global nodes whose depth-first row is empty.
    pub fn dead_ends(&self) -> Vec<usize> {
        (0..self.tg.len()).filter(|&g| self.tg[g].is_none()).collect()
    }

    pub fn sample_tg<R: Rng + ?Sized>(&self, global: usize, rng: &mut R) -> Option<Move> {
        self.tg[global]
            .as_ref()
            .map(|row| row.outcomes[row.table.sample(rng)])
    }

    pub fn sample_attribute<R: Rng + ?Sized>(&self, t: NodeType, i: usize, rng: &mut R) -> usize {
        self.ag[t.slot()].attribute[i].sample(rng)
    }

    pub fn sample_entity<R: Rng + ?Sized>(
        &self,
        t: NodeType,
        k: usize,
        i: usize,
        rng: &mut R,
    ) -> usize {
        let ag = &self.ag[t.slot()];
        ag.pool[ag.target[i][k]].0.sample(rng)
    }

    /// Probabilities behind the entity → attribute table of `i`.
    pub fn attribute_probs(&self, t: NodeType, i: usize) -> Vec<f64> {
        self.ag[t.slot()].attribute[i].implied_distribution()
    }

    /// Probabilities behind the attribute → entity table for `(i, k)`.
    pub fn entity_probs(&self, t: NodeType, k: usize, i: usize) -> &[f64] {
        let ag = &self.ag[t.slot()];
        &ag.pool[ag.target[i][k]].1
    }
}

/// Builds one alias table per nonzero trip-graph row and per AG transition row.
pub fn build_sampler(g: &Graphs, cfg: &WalkConfig) -> AliasSampler {
    let tg = (0..g.trip.n_nodes())
        .map(|node| {
            depth_first_row(g, node, cfg.epsilon).map(|row| TgRow {
                table: AliasTable::new(&row.probs).expect("nonempty row"),
                outcomes: row.outcomes,
                probs: row.probs,
            })
        })
        .collect();
    let ag = NodeType::ALL.map(|t| {
        let ag = g.attributes.get(t);
        let attribute = (0..ag.n_entities())
            .map(|i| AliasTable::new(&attribute_distribution(ag, i)).expect("attribute row"))
            .collect();
        let mut pool = Vec::new();
        let mut seen: HashMap<(usize, u64), usize> = HashMap::new();
        let target = (0..ag.n_entities())
            .map(|i| {
                (0..ag.n_attributes())
                    .map(|k| {
                        *seen.entry((k, ag.a_bar[[k, i]].to_bits())).or_insert_with(|| {
                            let probs = entity_distribution(ag, k, i);
                            pool.push((AliasTable::new(&probs).expect("similarity row"), probs));
                            pool.len() - 1
                        })
                    })
                    .collect()
            })
            .collect();
        AgTables {
            attribute,
            target,
            pool,
        }
    });
    AliasSampler {
        counts: [g.trip.n_od(), g.trip.n_path(), g.trip.n_segment()],
        tg,
        ag,
        epsilon: cfg.epsilon,
        fingerprint: g.fingerprint(),
    }
}
