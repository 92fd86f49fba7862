//! Line-delimited JSON walk corpus: one header line, then one sequence per line.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TokenKind, WalkConfig, WalkCorpus, WalkToken};
use crate::error::{Error, Result};
use crate::tripgraph::{Graphs, NodeType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusHeader {
    pub walk_config: WalkConfig,
    pub graph_fingerprint: String,
    pub sequences: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenRecord {
    pub kind: TokenKind,
    pub type_tag: NodeType,
    pub id: String,
}

fn name_of(g: &Graphs, t: &WalkToken) -> String {
    if t.kind == TokenKind::Attribute {
        g.attributes.get(t.type_tag).attribute_names[t.index].clone()
    } else {
        g.trip.ids(t.type_tag)[t.index].clone()
    }
}

pub fn write_corpus(corpus: &WalkCorpus, g: &Graphs, path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let header = CorpusHeader {
        walk_config: corpus.config,
        graph_fingerprint: corpus.fingerprint.clone(),
        sequences: corpus.sequences.len(),
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("header")).map_err(io)?;
    for seq in &corpus.sequences {
        let recs: Vec<TokenRecord> = seq
            .iter()
            .map(|t| TokenRecord {
                kind: t.kind,
                type_tag: t.type_tag,
                id: name_of(g, t),
            })
            .collect();
        writeln!(w, "{}", serde_json::to_string(&recs).expect("tokens")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a corpus and checks it was produced from `g`.
pub fn read_corpus(path: &Path, g: &Graphs) -> Result<WalkCorpus> {
    let io = |e| Error::io(path, e);
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut lines = reader.lines();
    let parse_err = |line: usize, msg: String| Error::Parse {
        file: path.to_path_buf(),
        line,
        column: 0,
        message: msg,
    };
    let first = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty corpus file".into()))?
        .map_err(io)?;
    let header: CorpusHeader =
        serde_json::from_str(&first).map_err(|e| parse_err(1, e.to_string()))?;
    let fp = g.fingerprint();
    if header.graph_fingerprint != fp {
        return Err(Error::Provenance(format!(
            "{}: corpus was sampled from graphs {}, current graphs are {}",
            path.display(),
            header.graph_fingerprint,
            fp
        )));
    }

    let mut lookup: HashMap<(TokenKind, NodeType, &str), usize> = HashMap::new();
    for t in NodeType::ALL {
        for (i, id) in g.trip.ids(t).iter().enumerate() {
            lookup.insert((WalkToken::entity(t, 0).kind, t, id.as_str()), i);
        }
        for (k, name) in g.attributes.get(t).attribute_names.iter().enumerate() {
            lookup.insert((TokenKind::Attribute, t, name.as_str()), k);
        }
    }

    let mut sequences = Vec::with_capacity(header.sequences);
    for (n, line) in lines.enumerate() {
        let line_no = n + 2;
        let line = line.map_err(io)?;
        let recs: Vec<TokenRecord> =
            serde_json::from_str(&line).map_err(|e| parse_err(line_no, e.to_string()))?;
        let seq = recs
            .into_iter()
            .map(|r| {
                lookup
                    .get(&(r.kind, r.type_tag, r.id.as_str()))
                    .map(|&index| WalkToken {
                        kind: r.kind,
                        type_tag: r.type_tag,
                        index,
                    })
                    .ok_or_else(|| parse_err(line_no, format!("unknown token {r:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if seq.first().is_none_or(|t| t.kind != TokenKind::Od) {
            return Err(parse_err(line_no, "sequence does not start with an od token".into()));
        }
        sequences.push(seq);
    }
    if sequences.len() != header.sequences {
        return Err(parse_err(
            sequences.len() + 1,
            format!(
                "header announces {} sequences, file holds {}",
                header.sequences,
                sequences.len()
            ),
        ));
    }
    Ok(WalkCorpus {
        sequences,
        config: header.walk_config,
        fingerprint: header.graph_fingerprint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::example_network;
    use crate::walk::{build_sampler, run_hetgwalk};

    #[test]
    fn corpus_file_round_trip() {
        let g = Graphs::build(&example_network(), 2.0).unwrap();
        let cfg = WalkConfig {
            num: 3,
            ..WalkConfig::default()
        };
        let corpus = run_hetgwalk(&build_sampler(&g, &cfg), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("walks.jsonl");
        write_corpus(&corpus, &g, &path).unwrap();
        assert_eq!(read_corpus(&path, &g).unwrap(), corpus);
    }

    #[test]
    fn truncated_corpus_is_rejected() {
        let g = Graphs::build(&example_network(), 2.0).unwrap();
        let cfg = WalkConfig::default();
        let corpus = run_hetgwalk(&build_sampler(&g, &cfg), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("walks.jsonl");
        write_corpus(&corpus, &g, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let cut: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        std::fs::write(&path, cut).unwrap();
        assert!(matches!(read_corpus(&path, &g), Err(Error::Parse { .. })));
    }

    #[test]
    fn foreign_graphs_are_rejected() {
        let g = Graphs::build(&example_network(), 2.0).unwrap();
        let other = Graphs::build(&example_network(), 3.0).unwrap();
        let cfg = WalkConfig::default();
        let corpus = run_hetgwalk(&build_sampler(&g, &cfg), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("walks.jsonl");
        write_corpus(&corpus, &g, &path).unwrap();
        assert!(matches!(read_corpus(&path, &other), Err(Error::Provenance(_))));
    }
}
