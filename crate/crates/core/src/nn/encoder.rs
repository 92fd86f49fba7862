//! Pre-norm Transformer encoder over one walk sequence.

use ndarray::{s, Array2, Axis};
use rand_chacha::ChaCha8Rng;

use super::layers::{
    apply_mask, dropout_mask, layer_norm, layer_norm_backward, linear, linear_backward,
    positional_encoding, softmax_rows, softmax_rows_backward, LnCache,
};
use super::{featurize_token, projection_slot, Block, EncoderConfig, Model, Params};
use crate::error::Result;
use crate::tripgraph::Graphs;
use crate::walk::WalkToken;

/// Featurized tokens of one sequence, ready for projection.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceInput {
    pub slots: Vec<usize>,
    pub features: Vec<Vec<f64>>,
}

impl SequenceInput {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

/// Featurizes `seq`, truncating it to `max_tokens`.
pub fn featurize_sequence(seq: &[WalkToken], g: &Graphs, max_tokens: usize) -> Result<SequenceInput> {
    if seq.len() > max_tokens {
        log::warn!(
            "sequence of {} tokens truncated to {max_tokens}",
            seq.len()
        );
    }
    let seq = &seq[..seq.len().min(max_tokens)];
    Ok(SequenceInput {
        slots: seq.iter().map(projection_slot).collect(),
        features: seq
            .iter()
            .map(|t| featurize_token(t, g))
            .collect::<Result<_>>()?,
    })
}

#[derive(Debug, Clone)]
struct BlockCache {
    ln1: LnCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    o: Array2<f64>,
    drop1: Option<Array2<f64>>,
    ln2: LnCache,
    c: Array2<f64>,
    u: Array2<f64>,
    r: Array2<f64>,
    drop2: Option<Array2<f64>>,
}

/// Forward state kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    input: SequenceInput,
    drop0: Option<Array2<f64>>,
    blocks: Vec<BlockCache>,
    final_ln: LnCache,
}

#[derive(Debug, Clone)]
pub struct Encoded {
    /// `tokens × d_model`
    pub output: Array2<f64>,
    pub cache: EncoderCache,
}

fn block_forward(
    blk: &Block,
    cfg: &EncoderConfig,
    x: Array2<f64>,
    rng: &mut Option<&mut ChaCha8Rng>,
) -> (Array2<f64>, BlockCache) {
    let t = x.nrows();
    let d = cfg.d_model;
    let dh = cfg.d_head();
    let scale = 1.0 / (dh as f64).sqrt();
    let (a, ln1) = layer_norm(&x, &blk.ln1.gamma, &blk.ln1.beta);
    let q = linear(&a.view(), &blk.q.w, &blk.q.b);
    let k = linear(&a.view(), &blk.k.w, &blk.k.b);
    let v = linear(&a.view(), &blk.v.w, &blk.v.b);
    let mut o = Array2::zeros((t, d));
    let mut probs = Vec::with_capacity(cfg.n_heads);
    for h in 0..cfg.n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        let p = softmax_rows(&scores);
        o.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
        probs.push(p);
    }
    let attn = linear(&o.view(), &blk.o.w, &blk.o.b);
    let drop1 = dropout_mask((t, d), cfg.dropout_rate, rng.as_deref_mut());
    let x1 = &x + &apply_mask(attn, &drop1);
    let (c, ln2) = layer_norm(&x1, &blk.ln2.gamma, &blk.ln2.beta);
    let u = linear(&c.view(), &blk.ff1.w, &blk.ff1.b);
    let r = u.mapv(|z| z.max(0.0));
    let f = linear(&r.view(), &blk.ff2.w, &blk.ff2.b);
    let drop2 = dropout_mask((t, d), cfg.dropout_rate, rng.as_deref_mut());
    let x2 = &x1 + &apply_mask(f, &drop2);
    let cache = BlockCache {
        ln1,
        a,
        q,
        k,
        v,
        probs,
        o,
        drop1,
        ln2,
        c,
        u,
        r,
        drop2,
    };
    (x2, cache)
}

fn block_backward(
    blk: &Block,
    grad: &mut Block,
    cfg: &EncoderConfig,
    cache: &BlockCache,
    dx2: Array2<f64>,
) -> Array2<f64> {
    let dh = cfg.d_head();
    let scale = 1.0 / (dh as f64).sqrt();
    // feed-forward branch
    let df = apply_mask(dx2.clone(), &cache.drop2);
    let dr = linear_backward(&cache.r.view(), &blk.ff2.w, &df, &mut grad.ff2.w, &mut grad.ff2.b);
    let du = dr * &cache.u.mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
    let dc = linear_backward(&cache.c.view(), &blk.ff1.w, &du, &mut grad.ff1.w, &mut grad.ff1.b);
    let dx1 = dx2
        + layer_norm_backward(
            &dc,
            &cache.ln2,
            &blk.ln2.gamma,
            &mut grad.ln2.gamma,
            &mut grad.ln2.beta,
        );
    // attention branch
    let dattn = apply_mask(dx1.clone(), &cache.drop1);
    let d_o = linear_backward(&cache.o.view(), &blk.o.w, &dattn, &mut grad.o.w, &mut grad.o.b);
    let mut dq = Array2::zeros(cache.q.raw_dim());
    let mut dk = Array2::zeros(cache.k.raw_dim());
    let mut dv = Array2::zeros(cache.v.raw_dim());
    for (h, p) in cache.probs.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let doh = d_o.slice(cols);
        let dp = doh.dot(&cache.v.slice(cols).t());
        dv.slice_mut(cols).assign(&p.t().dot(&doh));
        let ds = softmax_rows_backward(p, &dp) * scale;
        dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
    }
    let a = cache.a.view();
    let da = linear_backward(&a, &blk.q.w, &dq, &mut grad.q.w, &mut grad.q.b)
        + linear_backward(&a, &blk.k.w, &dk, &mut grad.k.w, &mut grad.k.b)
        + linear_backward(&a, &blk.v.w, &dv, &mut grad.v.w, &mut grad.v.b);
    dx1 + layer_norm_backward(
        &da,
        &cache.ln1,
        &blk.ln1.gamma,
        &mut grad.ln1.gamma,
        &mut grad.ln1.beta,
    )
}

/// Encodes one sequence. Dropout is active iff `rng` is given.
pub fn encode_sequence(
    input: &SequenceInput,
    model: &Model,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Encoded {
    let cfg = &model.encoder;
    let p = &model.params;
    let t = input.len();
    let d = cfg.d_model;
    let mut x = positional_encoding(t, d);
    for (i, (slot, f)) in input.slots.iter().zip(&input.features).enumerate() {
        let proj = &p.proj[*slot];
        let mut row = x.row_mut(i);
        row += &proj.b.row(0);
        for (fi, w) in f.iter().zip(proj.w.rows()) {
            row.scaled_add(*fi, &w);
        }
    }
    let drop0 = dropout_mask((t, d), cfg.dropout_rate, rng.as_deref_mut());
    x = apply_mask(x, &drop0);
    let mut blocks = Vec::with_capacity(p.blocks.len());
    for blk in &p.blocks {
        let (next, cache) = block_forward(blk, cfg, x, &mut rng);
        blocks.push(cache);
        x = next;
    }
    let (output, final_ln) = layer_norm(&x, &p.final_ln.gamma, &p.final_ln.beta);
    Encoded {
        output,
        cache: EncoderCache {
            input: input.clone(),
            drop0,
            blocks,
            final_ln,
        },
    }
}

/// Accumulates encoder parameter gradients for upstream gradient `d_out`.
pub fn encode_backward(model: &Model, cache: &EncoderCache, d_out: &Array2<f64>, grad: &mut Params) {
    let p = &model.params;
    let mut dx = layer_norm_backward(
        d_out,
        &cache.final_ln,
        &p.final_ln.gamma,
        &mut grad.final_ln.gamma,
        &mut grad.final_ln.beta,
    );
    for (l, bc) in cache.blocks.iter().enumerate().rev() {
        dx = block_backward(&p.blocks[l], &mut grad.blocks[l], &model.encoder, bc, dx);
    }
    let dx0 = apply_mask(dx, &cache.drop0);
    for (i, (slot, f)) in cache.input.slots.iter().zip(&cache.input.features).enumerate() {
        let g = &mut grad.proj[*slot];
        let row = dx0.row(i);
        g.b.row_mut(0).scaled_add(1.0, &row);
        for (fi, mut w) in f.iter().zip(g.w.axis_iter_mut(Axis(0))) {
            w.scaled_add(*fi, &row);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::example_network;
    use crate::tripgraph::NodeType;
    use crate::nn::input_dims;
    use rand::SeedableRng;

    fn small(g: &Graphs) -> Model {
        let cfg = EncoderConfig {
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            d_ff: 16,
            dropout_rate: 0.1,
            max_seq_tokens: 40,
        };
        Model::new(cfg, input_dims(g), 0.5, 4)
    }

    fn seq() -> Vec<WalkToken> {
        vec![
            WalkToken::entity(NodeType::Od, 1),
            WalkToken::entity(NodeType::Path, 2),
            WalkToken::entity(NodeType::Segment, 7),
            WalkToken::attribute(NodeType::Segment, 1),
            WalkToken::entity(NodeType::Segment, 8),
        ]
    }

    #[test]
    fn eval_forward_is_bitwise_deterministic() {
        let g = Graphs::build(&example_network(), 2.0).unwrap();
        let m = small(&g);
        let x = featurize_sequence(&seq(), &g, 40).unwrap();
        let a = encode_sequence(&x, &m, None).output;
        let b = encode_sequence(&x, &m, None).output;
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()));
        assert_eq!(a.dim(), (5, 8));
    }

    #[test]
    fn dropout_changes_train_outputs_only() {
        let g = Graphs::build(&example_network(), 2.0).unwrap();
        let m = small(&g);
        let x = featurize_sequence(&seq(), &g, 40).unwrap();
        let eval = encode_sequence(&x, &m, None).output;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let train = encode_sequence(&x, &m, Some(&mut rng)).output;
        assert_ne!(eval, train);
    }

    #[test]
    fn single_token_attends_to_itself() {
        let g = Graphs::build(&example_network(), 2.0).unwrap();
        let m = small(&g);
        let x = featurize_sequence(&seq()[..1], &g, 40).unwrap();
        let enc = encode_sequence(&x, &m, None);
        for p in &enc.cache.blocks[0].probs {
            assert_eq!(p[[0, 0]], 1.0);
        }
    }

    #[test]
    fn long_sequences_are_truncated() {
        let g = Graphs::build(&example_network(), 2.0).unwrap();
        let x = featurize_sequence(&seq(), &g, 3).unwrap();
        assert_eq!(x.len(), 3);
    }
}
