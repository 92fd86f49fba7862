//! Listwise learning to rank over AMIL-pooled segment embeddings.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array1, Array2};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::adam::Adam;
use crate::nn::amil::{amil_aggregate, amil_backward, AmilCache};
use crate::nn::bags::{gather_rows, BagIndex};
use crate::nn::encoder::{encode_backward, encode_sequence, featurize_sequence, Encoded, SequenceInput};
use crate::nn::head::{score_rows, score_rows_backward};
use crate::nn::layers::softmax;
use crate::nn::{input_dims, EncoderConfig, HeadParams, Model, Params};
use crate::tripgraph::Graphs;
use crate::walk::WalkCorpus;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub k_list: usize,
    pub lists_per_epoch: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// dropout after the head's first layer
    pub dropout_rate: f64,
    pub seed: u64,
    pub train_fraction: f64,
    /// lists averaged into one optimizer step
    pub batch_lists: usize,
    /// occurrences sampled per segment bag during training; 0 keeps whole bags
    pub max_bag_train: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k_list: 5,
            lists_per_epoch: 32,
            epochs: 50,
            learning_rate: 0.001,
            dropout_rate: 0.5,
            seed: 0,
            train_fraction: 0.7,
            batch_lists: 1,
            max_bag_train: 16,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k_list < 2 {
            return bad(format!("k_list must be at least 2, got {}", self.k_list));
        }
        if self.lists_per_epoch == 0 || self.epochs == 0 || self.batch_lists == 0 {
            return bad("lists_per_epoch, epochs and batch_lists must be positive".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction));
        }
        Ok(())
    }
}

/// One list of `K ≥ 2` distinct segments with their ground-truth scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ListSample {
    pub segments: Vec<usize>,
    pub gt_scores: Vec<f64>,
}

impl ListSample {
    pub fn new(segments: Vec<usize>, gt_scores: Vec<f64>) -> Result<Self> {
        if segments.len() < 2 {
            return Err(Error::Invariant(format!("a list needs K >= 2, got {}", segments.len())));
        }
        if segments.len() != gt_scores.len() {
            return Err(Error::Invariant("list ids and scores differ in length".into()));
        }
        if segments.iter().collect::<BTreeSet<_>>().len() != segments.len() {
            return Err(Error::Invariant("list ids are not distinct".into()));
        }
        Ok(Self {
            segments,
            gt_scores,
        })
    }
}

/// Zero mean, unit variance; a constant list maps to zeros.
pub fn standardize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return vec![0.0; x.len()];
    }
    let sd = var.sqrt();
    x.iter().map(|v| (v - mean) / sd).collect()
}

/// Target distribution of a list: softmax of the standardized scores.
pub fn target_distribution(gt: &[f64]) -> Vec<f64> {
    softmax(&standardize(gt))
}

/// `KL(Y ‖ Ŷ)` with `Y = softmax(standardize(gt))`, `Ŷ = softmax(pred)`.
pub fn kl_list_loss(gt: &[f64], pred: &[f64]) -> f64 {
    kl_list_loss_grad(gt, pred).0
}

/// Loss and its gradient `Ŷ - Y` with respect to `pred`.
pub fn kl_list_loss_grad(gt: &[f64], pred: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(gt.len(), pred.len());
    let y = target_distribution(gt);
    let m = pred.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + pred.iter().map(|p| (p - m).exp()).sum::<f64>().ln();
    let log_q: Vec<f64> = pred.iter().map(|p| p - lse).collect();
    let loss = y
        .iter()
        .zip(&log_q)
        .filter(|(yj, _)| **yj > 0.0)
        .map(|(yj, lq)| yj * (yj.ln() - lq))
        .sum::<f64>()
        .max(0.0);
    let grad = log_q.iter().zip(&y).map(|(lq, yj)| lq.exp() - yj).collect();
    (loss, grad)
}

/// Scores the rows of `embeddings` with the head; dropout iff `rng` is given.
pub fn score_list(
    embeddings: &Array2<f64>,
    head: &HeadParams,
    dropout: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Vec<f64> {
    score_rows(embeddings, head, dropout, rng).0.to_vec()
}

/// Deterministic seed for a sub-stream labelled by `parts`.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    // splitmix64 over the parts
    let mut z = seed;
    for &p in parts {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(p);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

fn rng_for(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}

const TAG_SPLIT: u64 = 1;
const TAG_LISTS: u64 = 2;
const TAG_BAG: u64 = 3;
const TAG_SEQ_DROPOUT: u64 = 4;
const TAG_HEAD_DROPOUT: u64 = 5;
const TAG_INIT: u64 = 6;

/// Seeded split of `segments` into `(train, test)`, each sorted.
pub fn split_segments(segments: &[usize], train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order = segments.to_vec();
    order.shuffle(&mut rng_for(seed, &[TAG_SPLIT]));
    let n_train = ((segments.len() as f64) * train_fraction).round() as usize;
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// `count` lists of `k` distinct segments drawn uniformly from `train`.
pub fn build_training_lists(
    train: &[usize],
    gt: &[f64],
    k: usize,
    count: usize,
    epoch_seed: u64,
) -> Result<Vec<ListSample>> {
    if train.len() < k {
        return Err(Error::Infeasible(format!(
            "train split has {} segments, fewer than the list length {k}",
            train.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
    (0..count)
        .map(|_| {
            let ids: Vec<usize> = index::sample(&mut rng, train.len(), k)
                .into_iter()
                .map(|i| train[i])
                .collect();
            let scores = ids.iter().map(|&s| gt[s]).collect();
            ListSample::new(ids, scores)
        })
        .collect()
}

/// Featurized corpus plus the occurrence index the bags are drawn from.
#[derive(Debug, Clone)]
pub struct EncodedCorpus {
    pub inputs: Vec<SequenceInput>,
    pub bags: BagIndex,
}

impl EncodedCorpus {
    pub fn new(corpus: &WalkCorpus, g: &Graphs, max_tokens: usize) -> Result<Self> {
        let inputs = corpus
            .sequences
            .iter()
            .map(|s| featurize_sequence(s, g, max_tokens))
            .collect::<Result<_>>()?;
        Ok(Self {
            inputs,
            bags: BagIndex::build(corpus, g.trip.n_segment(), max_tokens),
        })
    }
}

/// How a batch is evaluated: dropout, bag subsampling and their seeds.
#[derive(Debug, Clone, Copy)]
pub struct BatchMode {
    pub train: bool,
    pub max_bag: usize,
    pub seed: u64,
    pub step: u64,
}

impl BatchMode {
    pub fn eval() -> Self {
        Self {
            train: false,
            max_bag: 0,
            seed: 0,
            step: 0,
        }
    }
}

/// Mean list loss of `lists` and its gradient with respect to every parameter.
///
/// Only the sequences holding an occurrence of a listed segment are encoded.
pub fn batch_loss_and_grad(
    model: &Model,
    data: &EncodedCorpus,
    lists: &[ListSample],
    mode: BatchMode,
) -> Result<(f64, Params)> {
    let segs: BTreeSet<usize> = lists.iter().flat_map(|l| l.segments.iter().copied()).collect();
    let mut occ: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for &s in &segs {
        let all = &data.bags.occurrences[s];
        if all.is_empty() {
            return Err(Error::Invariant(format!("segment {s} has an empty bag")));
        }
        let picked = if mode.max_bag > 0 && all.len() > mode.max_bag {
            let mut rng = rng_for(mode.seed, &[TAG_BAG, mode.step, s as u64]);
            let mut idx = index::sample(&mut rng, all.len(), mode.max_bag).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| all[i]).collect()
        } else {
            all.clone()
        };
        occ.insert(s, picked);
    }
    let seqs: Vec<usize> = occ
        .values()
        .flatten()
        .map(|&(s, _)| s)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let slot: BTreeMap<usize, usize> = seqs.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let encoded: Vec<Encoded> = seqs
        .par_iter()
        .map(|&s| {
            let mut rng = mode
                .train
                .then(|| rng_for(mode.seed, &[TAG_SEQ_DROPOUT, mode.step, s as u64]));
            encode_sequence(&data.inputs[s], model, rng.as_mut())
        })
        .collect();

    let mut pooled: BTreeMap<usize, (Array1<f64>, AmilCache)> = BTreeMap::new();
    for (&s, o) in &occ {
        let bag = gather_rows(o, |q| &encoded[slot[&q]].output);
        pooled.insert(s, amil_aggregate(&bag, &model.params.amil)?);
    }

    let mut grad = model.params.zeros_like();
    let d = model.encoder.d_model;
    let mut d_pooled: BTreeMap<usize, Array1<f64>> = segs.iter().map(|&s| (s, Array1::zeros(d))).collect();
    let mut total = 0.0;
    let scale = 1.0 / lists.len() as f64;
    for (li, list) in lists.iter().enumerate() {
        let mut x = Array2::zeros((list.segments.len(), d));
        for (r, s) in list.segments.iter().enumerate() {
            x.row_mut(r).assign(&pooled[s].0);
        }
        let mut rng = mode
            .train
            .then(|| rng_for(mode.seed, &[TAG_HEAD_DROPOUT, mode.step, li as u64]));
        let (scores, cache) = score_rows(&x, &model.params.head, model.head_dropout, rng.as_mut());
        let (loss, dscore) = kl_list_loss_grad(&list.gt_scores, &scores.to_vec());
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite loss on list {:?} with scores {:?}",
                list.segments, scores
            )));
        }
        total += loss;
        let dy = Array1::from(dscore) * scale;
        let dx = score_rows_backward(&cache, &model.params.head, &dy, &mut grad.head);
        for (r, s) in list.segments.iter().enumerate() {
            *d_pooled.get_mut(s).unwrap() += &dx.row(r);
        }
    }

    let mut d_out: Vec<Array2<f64>> = encoded.iter().map(|e| Array2::zeros(e.output.raw_dim())).collect();
    for (s, dh) in &d_pooled {
        let dbag = amil_backward(&pooled[s].1, &model.params.amil, dh, &mut grad.amil);
        for (row, &(q, pos)) in occ[s].iter().enumerate() {
            let mut target = d_out[slot[&q]].row_mut(pos);
            target += &dbag.row(row);
        }
    }
    let seq_grads: Vec<Params> = encoded
        .par_iter()
        .zip(d_out.par_iter())
        .map(|(e, dy)| {
            let mut g = grad.zeros_like();
            encode_backward(model, &e.cache, dy, &mut g);
            g
        })
        .collect();
    for g in &seq_grads {
        grad.add_scaled(g, 1.0);
    }
    Ok((total * scale, grad))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    /// mean list loss per epoch
    pub loss_curve: Vec<f64>,
}

/// End-to-end Adam training of encoder, AMIL and head on lists drawn from `train`.
///
/// Segments without a bag are left out of the lists.
pub fn train(
    data: &EncodedCorpus,
    g: &Graphs,
    gt: &[f64],
    train_segments: &[usize],
    enc: &EncoderConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    enc.validate()?;
    cfg.validate()?;
    let usable: Vec<usize> = train_segments
        .iter()
        .copied()
        .filter(|&s| data.bags.bag_size(s) > 0)
        .collect();
    let mut model = Model::new(
        *enc,
        input_dims(g),
        cfg.dropout_rate,
        derive_seed(cfg.seed, &[TAG_INIT]),
    );
    let mut opt = Adam::new(&model.params, cfg.learning_rate);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let lists = build_training_lists(
            &usable,
            gt,
            cfg.k_list,
            cfg.lists_per_epoch,
            derive_seed(cfg.seed, &[TAG_LISTS, epoch as u64]),
        )?;
        let mut epoch_loss = 0.0;
        for batch in lists.chunks(cfg.batch_lists) {
            let mode = BatchMode {
                train: true,
                max_bag: cfg.max_bag_train,
                seed: cfg.seed,
                step,
            };
            let (loss, grad) = batch_loss_and_grad(&model, data, batch, mode)?;
            if !grad.all_finite() {
                return Err(Error::Numerical(format!("non-finite gradient at epoch {epoch}")));
            }
            epoch_loss += loss * batch.len() as f64;
            opt.step(&mut model.params, &grad);
            step += 1;
        }
        let mean = epoch_loss / lists.len() as f64;
        log::info!("epoch {} mean loss {mean:.6}", epoch + 1);
        curve.push(mean);
    }
    Ok(TrainOutcome {
        model,
        loss_curve: curve,
    })
}

/// Eval-mode score of every segment with a bag; `None` for the rest.
pub fn score_all_segments(model: &Model, data: &EncodedCorpus) -> Result<Vec<Option<f64>>> {
    let outputs: Vec<Array2<f64>> = data
        .inputs
        .par_iter()
        .map(|x| encode_sequence(x, model, None).output)
        .collect();
    let n = data.bags.occurrences.len();
    let covered: Vec<usize> = (0..n).filter(|&s| data.bags.bag_size(s) > 0).collect();
    let mut x = Array2::zeros((covered.len(), model.encoder.d_model));
    for (r, &s) in covered.iter().enumerate() {
        let bag = gather_rows(&data.bags.occurrences[s], |q| &outputs[q]);
        x.row_mut(r).assign(&amil_aggregate(&bag, &model.params.amil)?.0);
    }
    let mut scores = vec![None; n];
    if !covered.is_empty() {
        let (y, _) = score_rows(&x, &model.params.head, 0.0, None);
        for (r, &s) in covered.iter().enumerate() {
            scores[s] = Some(y[r]);
        }
    }
    Ok(scores)
}

/// Descending by score, ties by ascending id; unscored entries last by id
/// with score `-inf`.
pub fn predict_full_ranking(ids: &[String], scores: &[Option<f64>]) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = ids
        .iter()
        .zip(scores)
        .map(|(id, s)| (id.clone(), s.unwrap_or(f64::NEG_INFINITY)))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_hand_case() {
        let l = kl_list_loss(&[0.0, 0.0], &[3f64.ln(), 0.0]);
        assert!((l - 0.5 * (4.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((l - 0.14384).abs() < 1e-5);
    }

    #[test]
    fn loss_vanishes_on_matching_standardized_scores() {
        let gt = [3.0, 1.0, 2.0];
        let pred = standardize(&gt);
        assert!(kl_list_loss(&gt, &pred).abs() < 1e-15);
    }

    #[test]
    fn loss_ignores_score_shifts() {
        let gt = [1.0, 4.0, 2.0, 0.5];
        let pred = [0.2, -1.0, 3.0, 0.0];
        let shifted: Vec<f64> = pred.iter().map(|p| p + 7.5).collect();
        assert!((kl_list_loss(&gt, &pred) - kl_list_loss(&gt, &shifted)).abs() < 1e-12);
    }

    #[test]
    fn target_is_affine_invariant() {
        let gt = [1.0, 4.0, 1.0, 2.0];
        // power-of-two scale and integer shift keep every step exact
        let exact: Vec<f64> = gt.iter().map(|v| 4.0 * v + 8.0).collect();
        assert_eq!(target_distribution(&gt), target_distribution(&exact));
        let scaled: Vec<f64> = gt.iter().map(|v| 3.0 * v + 10.0).collect();
        for (a, b) in target_distribution(&gt).iter().zip(target_distribution(&scaled)) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_gt_gives_uniform_target() {
        assert_eq!(target_distribution(&[2.0, 2.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn short_or_repeated_lists_are_rejected() {
        assert!(ListSample::new(vec![1], vec![0.0]).is_err());
        assert!(ListSample::new(vec![1, 1], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn lists_are_distinct_and_reproducible() {
        let train: Vec<usize> = (0..10).collect();
        let gt = vec![0.0; 10];
        let a = build_training_lists(&train, &gt, 5, 3, 42).unwrap();
        assert_eq!(a.len(), 3);
        for l in &a {
            assert_eq!(l.segments.iter().collect::<BTreeSet<_>>().len(), 5);
        }
        assert_eq!(a, build_training_lists(&train, &gt, 5, 3, 42).unwrap());
        assert!(build_training_lists(&train[..3], &gt, 5, 1, 0).is_err());
    }

    #[test]
    fn lists_cover_the_split() {
        let train: Vec<usize> = (0..10).collect();
        let gt = vec![0.0; 10];
        let lists = build_training_lists(&train, &gt, 5, 200, 7).unwrap();
        let seen: BTreeSet<usize> = lists.iter().flat_map(|l| l.segments.clone()).collect();
        assert_eq!(seen.len(), 10);
    }

    #[test]
    fn ranking_sorts_and_breaks_ties_by_id() {
        let ids: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let r = predict_full_ranking(&ids, &[Some(0.3), Some(0.9), Some(0.1)]);
        let order: Vec<&str> = r.iter().map(|x| x.0.as_str()).collect();
        assert_eq!(order, ["b", "a", "c"]);
        let ids: Vec<String> = ["s2", "s10", "s0"].map(String::from).to_vec();
        let r = predict_full_ranking(&ids, &[Some(1.0), Some(1.0), None]);
        let order: Vec<&str> = r.iter().map(|x| x.0.as_str()).collect();
        assert_eq!(order, ["s10", "s2", "s0"]);
        assert_eq!(r[2].1, f64::NEG_INFINITY);
    }

    #[test]
    fn split_is_seeded_and_complete() {
        let segs: Vec<usize> = (0..20).collect();
        let (a, b) = split_segments(&segs, 0.7, 3);
        assert_eq!(a.len(), 14);
        assert_eq!(b.len(), 6);
        assert_eq!(split_segments(&segs, 0.7, 3), (a.clone(), b));
        let mut all = a;
        all.extend(split_segments(&segs, 0.7, 3).1);
        all.sort_unstable();
        assert_eq!(all, segs);
    }
}
