//! Sequence encoder, AMIL pooling and the ranking head, with hand-written
//! reverse-mode gradients.

pub mod adam;
pub mod amil;
pub mod bags;
pub mod checkpoint;
pub mod encoder;
pub mod head;
pub mod layers;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tripgraph::{Graphs, NodeType};
use crate::walk::{TokenKind, WalkToken};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub dropout_rate: f64,
    /// longer sequences are truncated
    pub max_seq_tokens: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_layers: 6,
            n_heads: 8,
            d_ff: 256,
            dropout_rate: 0.1,
            max_seq_tokens: 40,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return bad("d_model, n_heads and d_ff must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return bad(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate));
        }
        if self.max_seq_tokens == 0 {
            return bad("max_seq_tokens must be positive".into());
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Projection slot of a token: entity kinds first, then each type's attribute vocabulary.
pub fn projection_slot(t: &WalkToken) -> usize {
    match t.kind {
        TokenKind::Attribute => 3 + t.type_tag.slot(),
        _ => t.type_tag.slot(),
    }
}

pub const PROJECTION_NAMES: [&str; 6] = [
    "od",
    "path",
    "segment",
    "attr_od",
    "attr_path",
    "attr_segment",
];

/// Input width of every projection slot.
pub fn input_dims(g: &Graphs) -> [usize; 6] {
    let n = |t: NodeType| g.attributes.get(t).n_attributes();
    [
        n(NodeType::Od),
        n(NodeType::Path),
        n(NodeType::Segment),
        n(NodeType::Od),
        n(NodeType::Path),
        n(NodeType::Segment),
    ]
}

/// Entity tokens: the entity's normalized attribute column. Attribute tokens:
/// a one-hot over the owning type's attributes.
pub fn featurize_token(t: &WalkToken, g: &Graphs) -> Result<Vec<f64>> {
    let ag = g.attributes.get(t.type_tag);
    match t.kind {
        TokenKind::Attribute => {
            if t.index >= ag.n_attributes() {
                return Err(Error::Referential(format!(
                    "attribute {} of type {} does not exist",
                    t.index,
                    t.type_tag.tag()
                )));
            }
            let mut v = vec![0.0; ag.n_attributes()];
            v[t.index] = 1.0;
            Ok(v)
        }
        _ => {
            if t.index >= ag.n_entities() {
                return Err(Error::Referential(format!(
                    "entity {} of type {} does not exist",
                    t.index,
                    t.type_tag.tag()
                )));
            }
            Ok(ag.entity_features(t.index).to_vec())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array2<f64>,
}

impl Linear {
    fn init<R: Rng>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        Self {
            w: xavier(d_in, d_out, rng),
            b: Array2::zeros((1, d_out)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Norm {
    pub gamma: Array2<f64>,
    pub beta: Array2<f64>,
}

impl Norm {
    fn init(d: usize) -> Self {
        Self {
            gamma: Array2::ones((1, d)),
            beta: Array2::zeros((1, d)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub ln1: Norm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln2: Norm,
    pub ff1: Linear,
    pub ff2: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmilParams {
    /// `1 × d_attn`
    pub w_b1: Array2<f64>,
    /// `d_model × d_attn`
    pub w_b2: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub l1: Linear,
    pub l2: Linear,
}

/// Every trainable tensor of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub proj: [Linear; 6],
    pub blocks: Vec<Block>,
    pub final_ln: Norm,
    pub amil: AmilParams,
    pub head: HeadParams,
}

const BLOCK_TENSORS: [&str; 16] = [
    "ln1.gamma",
    "ln1.beta",
    "attn.q.w",
    "attn.q.b",
    "attn.k.w",
    "attn.k.b",
    "attn.v.w",
    "attn.v.b",
    "attn.o.w",
    "attn.o.b",
    "ln2.gamma",
    "ln2.beta",
    "ffn.w1",
    "ffn.b1",
    "ffn.w2",
    "ffn.b2",
];

const TAIL_TENSORS: [&str; 8] = [
    "final_ln.gamma",
    "final_ln.beta",
    "amil.w_b1",
    "amil.w_b2",
    "head.l1.w",
    "head.l1.b",
    "head.l2.w",
    "head.l2.b",
];

fn xavier<R: Rng>(d_in: usize, d_out: usize, rng: &mut R) -> Array2<f64> {
    let a = (6.0 / (d_in + d_out) as f64).sqrt();
    Array2::from_shape_fn((d_in, d_out), |_| rng.random_range(-a..a))
}

impl Params {
    pub fn init(cfg: &EncoderConfig, dims: [usize; 6], d_hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.d_model;
        let proj = dims.map(|d_in| Linear::init(d_in, d, &mut rng));
        let blocks = (0..cfg.n_layers)
            .map(|_| Block {
                ln1: Norm::init(d),
                q: Linear::init(d, d, &mut rng),
                k: Linear::init(d, d, &mut rng),
                v: Linear::init(d, d, &mut rng),
                o: Linear::init(d, d, &mut rng),
                ln2: Norm::init(d),
                ff1: Linear::init(d, cfg.d_ff, &mut rng),
                ff2: Linear::init(cfg.d_ff, d, &mut rng),
            })
            .collect();
        let amil = AmilParams {
            w_b1: xavier(1, d, &mut rng),
            w_b2: xavier(d, d, &mut rng),
        };
        let head = HeadParams {
            l1: Linear::init(d, d_hidden, &mut rng),
            l2: Linear::init(d_hidden, 1, &mut rng),
        };
        Self {
            proj,
            blocks,
            final_ln: Norm::init(d),
            amil,
            head,
        }
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    /// Stable tensor names, in checkpoint order.
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for n in PROJECTION_NAMES {
            out.push(format!("proj.{n}.w"));
            out.push(format!("proj.{n}.b"));
        }
        for l in 0..self.blocks.len() {
            for n in BLOCK_TENSORS {
                out.push(format!("block{l}.{n}"));
            }
        }
        for n in TAIL_TENSORS {
            out.push(n.to_string());
        }
        out
    }

    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut out = Vec::new();
        visit_refs(self, &mut out);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = Vec::new();
        visit_refs_mut(self, &mut out);
        out
    }

    /// `self += other * scale`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(scale, b);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn n_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

fn visit_refs<'a>(p: &'a Params, out: &mut Vec<&'a Array2<f64>>) {
    for l in &p.proj {
        out.push(&l.w);
        out.push(&l.b);
    }
    for b in &p.blocks {
        out.extend([
            &b.ln1.gamma, &b.ln1.beta, &b.q.w, &b.q.b, &b.k.w, &b.k.b, &b.v.w, &b.v.b, &b.o.w,
            &b.o.b, &b.ln2.gamma, &b.ln2.beta, &b.ff1.w, &b.ff1.b, &b.ff2.w, &b.ff2.b,
        ]);
    }
    out.extend([
        &p.final_ln.gamma,
        &p.final_ln.beta,
        &p.amil.w_b1,
        &p.amil.w_b2,
        &p.head.l1.w,
        &p.head.l1.b,
        &p.head.l2.w,
        &p.head.l2.b,
    ]);
}

fn visit_refs_mut<'a>(p: &'a mut Params, out: &mut Vec<&'a mut Array2<f64>>) {
    for l in &mut p.proj {
        out.push(&mut l.w);
        out.push(&mut l.b);
    }
    for b in &mut p.blocks {
        out.extend([
            &mut b.ln1.gamma,
            &mut b.ln1.beta,
            &mut b.q.w,
            &mut b.q.b,
            &mut b.k.w,
            &mut b.k.b,
            &mut b.v.w,
            &mut b.v.b,
            &mut b.o.w,
            &mut b.o.b,
            &mut b.ln2.gamma,
            &mut b.ln2.beta,
            &mut b.ff1.w,
            &mut b.ff1.b,
            &mut b.ff2.w,
            &mut b.ff2.b,
        ]);
    }
    out.extend([
        &mut p.final_ln.gamma,
        &mut p.final_ln.beta,
        &mut p.amil.w_b1,
        &mut p.amil.w_b2,
        &mut p.head.l1.w,
        &mut p.head.l1.b,
        &mut p.head.l2.w,
        &mut p.head.l2.b,
    ]);
}

/// Everything needed to score segments: architecture plus weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub encoder: EncoderConfig,
    pub input_dims: [usize; 6],
    pub d_hidden: usize,
    pub head_dropout: f64,
    pub params: Params,
}

impl Model {
    pub fn new(encoder: EncoderConfig, input_dims: [usize; 6], head_dropout: f64, seed: u64) -> Self {
        let d_hidden = encoder.d_model;
        Self {
            encoder,
            input_dims,
            d_hidden,
            head_dropout,
            params: Params::init(&encoder, input_dims, d_hidden, seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::example_network;

    #[test]
    fn names_and_tensors_line_up() {
        let cfg = EncoderConfig {
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            d_ff: 16,
            ..EncoderConfig::default()
        };
        let p = Params::init(&cfg, [3, 3, 5, 3, 3, 5], 8, 0);
        assert_eq!(p.names().len(), p.tensors().len());
        assert_eq!(p.names().len(), 12 + 2 * 16 + 8);
        assert_eq!(p.tensors()[0].dim(), (3, 8));
    }

    #[test]
    fn feature_shapes() {
        let g = Graphs::build(&example_network(), 2.0).unwrap();
        let seg = featurize_token(&WalkToken::entity(NodeType::Segment, 3), &g).unwrap();
        assert_eq!(seg.len(), 5);
        assert!(seg.iter().all(|v| (0.0..=1.0).contains(v)));
        let cap = featurize_token(&WalkToken::attribute(NodeType::Segment, 2), &g).unwrap();
        assert_eq!(cap, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(featurize_token(&WalkToken::entity(NodeType::Od, 0), &g).unwrap().len(), 3);
        assert!(featurize_token(&WalkToken::entity(NodeType::Od, 9), &g).is_err());
    }

    #[test]
    fn head_divisibility_is_checked() {
        let cfg = EncoderConfig {
            d_model: 10,
            n_heads: 4,
            ..EncoderConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
