#![allow(dead_code)]

use hetgl2r::network::example_network;
use hetgl2r::nn::{EncoderConfig, Model, input_dims};
use hetgl2r::ranker::{batch_loss_and_grad, BatchMode, EncodedCorpus, ListSample};
use hetgl2r::tripgraph::Graphs;
use hetgl2r::walk::{build_sampler, run_hetgwalk, WalkConfig};

/// Small model, corpus and lists over the 11-segment example network.
pub struct GradFixture {
    pub model: Model,
    pub data: EncodedCorpus,
    pub lists: Vec<ListSample>,
}

pub fn grad_fixture() -> GradFixture {
    let g = Graphs::build(&example_network(), 2.0).unwrap();
    let wc = WalkConfig {
        num: 2,
        len: 8,
        seed: 5,
        ..WalkConfig::default()
    };
    let corpus = run_hetgwalk(&build_sampler(&g, &wc), &wc).unwrap();
    let enc = EncoderConfig {
        d_model: 8,
        n_layers: 2,
        n_heads: 2,
        d_ff: 32,
        dropout_rate: 0.1,
        max_seq_tokens: 16,
    };
    let model = Model::new(enc, input_dims(&g), 0.5, 17);
    let data = EncodedCorpus::new(&corpus, &g, enc.max_seq_tokens).unwrap();
    let covered: Vec<usize> = (0..g.trip.n_segment())
        .filter(|&s| data.bags.bag_size(s) > 0)
        .collect();
    assert!(covered.len() >= 4, "fixture corpus covers too few segments");
    let gt: Vec<f64> = (0..g.trip.n_segment()).map(|s| ((s * 7) % 5) as f64).collect();
    let pick = |ids: &[usize]| {
        ListSample::new(ids.to_vec(), ids.iter().map(|&s| gt[s]).collect()).unwrap()
    };
    let lists = vec![
        pick(&covered[..3]),
        pick(&[covered[1], covered[covered.len() - 1], covered[2]]),
    ];
    GradFixture { model, data, lists }
}

/// Per tensor: `(name, ||g - fd|| / max(||g||, ||fd||, 1e-8))` with central
/// differences of step `h`, dropout off.
pub fn gradient_check(fx: &GradFixture, h: f64) -> Vec<(String, f64)> {
    let (_, grad) = batch_loss_and_grad(&fx.model, &fx.data, &fx.lists, BatchMode::eval()).unwrap();
    let names = fx.model.params.names();
    let analytic = grad.tensors();
    let mut model = fx.model.clone();
    let mut out = Vec::new();
    for (ti, name) in names.iter().enumerate() {
        let n = analytic[ti].len();
        let mut diff2 = 0.0;
        let mut g2 = 0.0;
        let mut fd2 = 0.0;
        for e in 0..n {
            let orig = model.params.tensors()[ti].as_slice().unwrap()[e];
            let mut loss_at = |v: f64| {
                model.params.tensors_mut()[ti].as_slice_mut().unwrap()[e] = v;
                batch_loss_and_grad(&model, &fx.data, &fx.lists, BatchMode::eval()).unwrap().0
            };
            let fd = (loss_at(orig + h) - loss_at(orig - h)) / (2.0 * h);
            model.params.tensors_mut()[ti].as_slice_mut().unwrap()[e] = orig;
            let a = analytic[ti].as_slice().unwrap()[e];
            diff2 += (a - fd).powi(2);
            g2 += a * a;
            fd2 += fd * fd;
        }
        let rel = diff2.sqrt() / g2.sqrt().max(fd2.sqrt()).max(1e-8);
        out.push((name.clone(), rel));
    }
    out
}

/// `m_ll` by enumerating every path and every ordered pair of positions on it.
pub fn m_ll_oracle(bundle: &hetgl2r::network::DatasetBundle, base: f64) -> ndarray::Array2<f64> {
    let n = bundle.network.len();
    let mut m = ndarray::Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            for path in &bundle.paths {
                let pi = path.segments.iter().position(|&s| s == i);
                let pj = path.segments.iter().position(|&s| s == j);
                if let (Some(a), Some(b)) = (pi, pj) {
                    if a < b {
                        let c = (b - a - 1) as f64;
                        m[[i, j]] += 1.0 / base.powf(c);
                    }
                }
            }
        }
    }
    m
}

/// Random bundle with at most `max_segments` segments.
pub fn random_bundle(seed: u64, max_segments: usize) -> hetgl2r::network::DatasetBundle {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(4..=max_segments);
    let od = rng.random_range(1..=6.min(n));
    let k = rng.random_range(1..=3);
    hetgl2r::network::generate_random_dataset(n, od, k, seed).unwrap()
}

/// Random attribute-guided graph with 1..=30 entities and 1..=10 attributes.
pub fn random_ag(seed: u64) -> hetgl2r::tripgraph::AttributeGuidedGraph {
    use hetgl2r::tripgraph::{build_attribute_graph, NodeType, RawAttributeTable};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=30);
    let k = rng.random_range(1..=10);
    let rows = ndarray::Array2::from_shape_fn((n, k), |(_, c)| {
        // every third column is constant to exercise the 0.5 rule
        if c % 3 == 2 {
            4.0
        } else {
            rng.random_range(0.0..100.0)
        }
    });
    let raw = RawAttributeTable {
        names: (0..k).map(|c| format!("a{c}")).collect(),
        rows,
    };
    let ids: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();
    build_attribute_graph(NodeType::Segment, &ids, &raw).unwrap()
}

/// EMD metric axioms on one triple of distributions; `None` when all hold.
pub fn emd_axiom_violation(p: &[f64], q: &[f64], r: &[f64]) -> Option<String> {
    use hetgl2r::metrics::emd_distributions as d;
    let tol = 1e-12;
    if d(p, p).abs() > tol {
        return Some("d(p, p) != 0".into());
    }
    if d(p, q) < 0.0 {
        return Some("negative distance".into());
    }
    if (d(p, q) - d(q, p)).abs() > tol {
        return Some("asymmetric".into());
    }
    if d(p, r) > d(p, q) + d(q, r) + tol {
        return Some("triangle inequality".into());
    }
    if p != q && d(p, q) == 0.0 {
        return Some("distinct distributions at distance 0".into());
    }
    None
}

pub fn random_distribution<R: rand::Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// `RankingPair` of two random permutations of `n` ids.
pub fn random_pair<R: rand::Rng>(rng: &mut R, n: usize) -> hetgl2r::metrics::RankingPair {
    use rand::seq::SliceRandom;
    let ids: Vec<String> = (0..n).map(|i| format!("s{i:03}")).collect();
    let mut a: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let mut b = a.clone();
    a.shuffle(rng);
    b.shuffle(rng);
    hetgl2r::metrics::RankingPair::from_scores(ids, a, b).unwrap()
}
