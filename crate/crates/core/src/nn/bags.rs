//! Where every segment occurs in the corpus, and its bag of context embeddings.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::walk::{TokenKind, WalkCorpus};

/// Occurrences `(sequence, position)` of each segment, by segment index.
#[derive(Debug, Clone, PartialEq)]
pub struct BagIndex {
    pub occurrences: Vec<Vec<(usize, usize)>>,
}

/// Segments that never occur in the corpus.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoverageReport {
    pub missing: Vec<usize>,
    pub covered: usize,
}

impl BagIndex {
    /// Positions at or beyond `max_tokens` are dropped, matching encoder truncation.
    pub fn build(corpus: &WalkCorpus, n_segments: usize, max_tokens: usize) -> Self {
        let mut occurrences = vec![Vec::new(); n_segments];
        for (s, seq) in corpus.sequences.iter().enumerate() {
            for (pos, t) in seq.iter().enumerate().take(max_tokens) {
                if t.kind == TokenKind::Segment {
                    occurrences[t.index].push((s, pos));
                }
            }
        }
        Self { occurrences }
    }

    pub fn bag_size(&self, segment: usize) -> usize {
        self.occurrences[segment].len()
    }

    pub fn total(&self) -> usize {
        self.occurrences.iter().map(Vec::len).sum()
    }

    pub fn coverage(&self) -> CoverageReport {
        let missing: Vec<usize> = (0..self.occurrences.len())
            .filter(|&l| self.occurrences[l].is_empty())
            .collect();
        CoverageReport {
            covered: self.occurrences.len() - missing.len(),
            missing,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextBag {
    pub segment: usize,
    /// one row per occurrence
    pub embeddings: Array2<f64>,
}

/// Stacks the encoder rows at `occurrences`; `output_of(s)` is sequence `s`'s output.
pub fn gather_rows<'a>(
    occurrences: &[(usize, usize)],
    output_of: impl Fn(usize) -> &'a Array2<f64>,
) -> Array2<f64> {
    let d = occurrences
        .first()
        .map(|&(s, _)| output_of(s).ncols())
        .unwrap_or(0);
    let mut out = Array2::zeros((occurrences.len(), d));
    for (row, &(s, pos)) in occurrences.iter().enumerate() {
        out.row_mut(row).assign(&output_of(s).row(pos));
    }
    out
}

/// One bag per covered segment from the encoded outputs of every sequence.
pub fn collect_bags(index: &BagIndex, outputs: &[Array2<f64>]) -> (BTreeMap<usize, ContextBag>, CoverageReport) {
    let bags = (0..index.occurrences.len())
        .filter(|&l| !index.occurrences[l].is_empty())
        .map(|l| {
            let embeddings = gather_rows(&index.occurrences[l], |s| &outputs[s]);
            (l, ContextBag { segment: l, embeddings })
        })
        .collect();
    (bags, index.coverage())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tripgraph::NodeType;
    use crate::walk::{WalkConfig, WalkToken};

    fn corpus() -> WalkCorpus {
        let seg = |i| WalkToken::entity(NodeType::Segment, i);
        let od = WalkToken::entity(NodeType::Od, 0);
        WalkCorpus {
            sequences: vec![
                vec![od, seg(0), seg(1), seg(0)],
                vec![od, WalkToken::attribute(NodeType::Od, 0), od, seg(0)],
            ],
            config: WalkConfig::default(),
            fingerprint: String::new(),
        }
    }

    #[test]
    fn bag_sizes_count_occurrences() {
        let idx = BagIndex::build(&corpus(), 3, 40);
        assert_eq!(idx.bag_size(0), 3);
        assert_eq!(idx.bag_size(1), 1);
        assert_eq!(idx.total(), 4);
        assert_eq!(idx.coverage().missing, vec![2]);
    }

    #[test]
    fn bag_mass_equals_segment_token_count() {
        let c = corpus();
        let idx = BagIndex::build(&c, 3, 40);
        let outputs: Vec<Array2<f64>> = c
            .sequences
            .iter()
            .map(|s| Array2::from_shape_fn((s.len(), 2), |(i, j)| (i * 2 + j) as f64))
            .collect();
        let (bags, cov) = collect_bags(&idx, &outputs);
        let mass: usize = bags.values().map(|b| b.embeddings.nrows()).sum();
        assert_eq!(mass, c.segment_token_count());
        assert_eq!(cov.covered, 2);
        assert_eq!(bags[&1].embeddings.row(0).to_vec(), vec![4.0, 5.0]);
    }

    #[test]
    fn truncation_limits_occurrences() {
        let idx = BagIndex::build(&corpus(), 3, 3);
        assert_eq!(idx.bag_size(0), 1);
    }
}
