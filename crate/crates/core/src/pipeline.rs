//! Staged orchestration: dataset → graphs → walks → ground truth → training →
//! ranking → evaluation, plus the verification battery and parameter sweeps.
//!
//! Every stage reads its inputs from disk and writes its outputs with a
//! `.prov.json` sidecar holding the content hashes of both. Errors leave a
//! stage tag so callers can report which stage failed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::groundtruth::{ground_truth_table, read_ground_truth, write_ground_truth};
use crate::metrics::{evaluate, MetricsReport, RankingPair};
use crate::network::{
    generate_random_dataset, load_dataset, DatasetBundle, NETWORK_FILE, OD_FILE, PATHS_FILE,
};
use crate::nn::checkpoint;
use crate::nn::input_dims;
use crate::provenance::{sha256_bytes, Provenance};
use crate::ranker::{
    derive_seed, predict_full_ranking, score_all_segments, split_segments, train, EncodedCorpus,
    TrainOutcome,
};
use crate::tripgraph::{Graphs, NodeType};
use crate::walk::markov::{
    chi_square_p_value, ergodicity_check, joint_transition_matrix, propagation_identity,
    stationary_distribution_from, MAX_POWER_ITERATIONS,
};
use crate::walk::{
    build_sampler, joint_step, joint_step_law, read_corpus, run_hetgwalk, write_corpus,
    BranchPolicy, JointStep, WalkConfig, WalkCorpus, WalkToken,
};

pub const GEN_DATA: &str = "gen-data";
pub const BUILD_GRAPHS: &str = "build-graphs";
pub const WALK: &str = "walk";
pub const GROUND_TRUTH: &str = "ground-truth";
pub const TRAIN: &str = "train";
pub const RANK: &str = "rank";
pub const EVALUATE: &str = "evaluate";
pub const VERIFY: &str = "verify";
pub const SWEEP: &str = "sweep";

pub const CONFIG_FILE: &str = "run.cfg";
pub const GRAPHS_FILE: &str = "graphs.json";
pub const MATRICES_DIR: &str = "matrices";
pub const WALKS_FILE: &str = "walks.jsonl";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_FILE: &str = "loss_curve.csv";
pub const SPLIT_FILE: &str = "split.json";
pub const RANKING_FILE: &str = "ranking.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const BASELINES_FILE: &str = "baselines.json";
pub const RANKING_HEADER: &str = "rank,segment_id,score";
pub const SWEEP_HEADER: &str = "param,value,kendall_tau,ndcg,emd,diff";

const TAG_RANDOM_BASELINE: u64 = 7;

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

fn config_hash<T: Serialize>(v: &T) -> String {
    sha256_bytes(serde_json::to_string(v).expect("config serializes").as_bytes())
}

fn dataset_files(dir: &Path) -> [PathBuf; 3] {
    [NETWORK_FILE, OD_FILE, PATHS_FILE].map(|f| dir.join(f))
}

fn with_dataset(mut prov: Provenance, dir: &Path) -> Result<Provenance> {
    for f in dataset_files(dir) {
        let name = f.file_name().unwrap().to_string_lossy().into_owned();
        prov = prov.input_file(&name, &f)?;
    }
    Ok(prov)
}

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

/// Writes a generated dataset and its provenance into `out`.
pub fn gen_data(
    n_segments: usize,
    n_od: usize,
    paths_per_od: usize,
    seed: u64,
    out: &Path,
) -> Result<DatasetBundle> {
    let bundle = generate_random_dataset(n_segments, n_od, paths_per_od, seed)
        .map_err(|e| e.in_stage(GEN_DATA))?;
    write_bundle(&bundle, out, &format!("{n_segments},{n_od},{paths_per_od},{seed}"))?;
    Ok(bundle)
}

/// Writes the three dataset files with sidecars; `origin` is hashed as the only input.
pub fn write_bundle(bundle: &DatasetBundle, out: &Path, origin: &str) -> Result<()> {
    let tag = |e: Error| e.in_stage(GEN_DATA);
    bundle.write_to_dir(out).map_err(tag)?;
    for f in dataset_files(out) {
        Provenance::new(GEN_DATA)
            .input("generator", sha256_bytes(origin.as_bytes()))
            .write_for(&f)
            .map_err(tag)?;
    }
    Ok(())
}

pub fn summary_table(bundle: &DatasetBundle) -> String {
    let assigned = bundle.assigned_volumes();
    let on_path = bundle.segments_on_paths().len();
    let mean = assigned.iter().sum::<f64>() / assigned.len().max(1) as f64;
    let rows = [
        ("segments", bundle.network.len().to_string()),
        ("edges", bundle.network.edges.len().to_string()),
        ("od pairs", bundle.od_flows.len().to_string()),
        ("paths", bundle.paths.len().to_string()),
        ("segments on a path", on_path.to_string()),
        ("mean assigned volume", format!("{mean:.2}")),
    ];
    let mut s = String::new();
    for (k, v) in rows {
        let _ = writeln!(s, "{k:<22}{v:>10}");
    }
    s
}

// ---------------------------------------------------------------------------
// Staged pipeline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GraphSummary {
    pub fingerprint: String,
    pub n_od: usize,
    pub n_path: usize,
    pub n_segment: usize,
    pub decay_base: f64,
    pub segments_off_path: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSummary {
    pub model: MetricsReport,
    pub out_degree: MetricsReport,
    pub random: MetricsReport,
}

pub struct Pipeline<'a> {
    pub cfg: &'a RunConfig,
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: &'a RunConfig) -> Result<Self> {
        cfg.validate()?;
        fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
        Ok(Self { cfg })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn dataset(&self, stage: &'static str) -> Result<(DatasetBundle, Graphs)> {
        let bundle = load_dataset(&self.cfg.data_dir).map_err(|e| e.in_stage(stage))?;
        let g = Graphs::build(&bundle, self.cfg.graph.decay_base).map_err(|e| e.in_stage(stage))?;
        Ok((bundle, g))
    }

    fn corpus(&self, g: &Graphs) -> Result<WalkCorpus> {
        read_corpus(&self.out(WALKS_FILE), g).map_err(|e| e.in_stage(WALK))
    }

    fn ground_truth_for(&self, bundle: &DatasetBundle) -> Result<Vec<f64>> {
        read_ground_truth(&self.cfg.ground_truth_path(), &bundle.segment_ids())
            .map_err(|e| e.in_stage(GROUND_TRUTH))
    }

    pub fn build_graphs(&self) -> Result<Graphs> {
        let (bundle, g) = self.dataset(BUILD_GRAPHS)?;
        let run = || -> Result<()> {
            let tg = &g.trip;
            let summary = GraphSummary {
                fingerprint: g.fingerprint(),
                n_od: tg.n_od(),
                n_path: tg.n_path(),
                n_segment: tg.n_segment(),
                decay_base: tg.decay_base,
                segments_off_path: g
                    .kernels
                    .dead_ends
                    .segments_off_path
                    .iter()
                    .map(|&s| bundle.network.segments[s].id.clone())
                    .collect(),
            };
            let path = self.out(GRAPHS_FILE);
            write(&path, to_json(&summary))?;
            let prov = with_dataset(Provenance::new(BUILD_GRAPHS), &self.cfg.data_dir)?
                .input("graph_config", config_hash(&self.cfg.graph));
            prov.clone().write_for(&path)?;
            if self.cfg.graph.dump_matrices {
                let dir = self.out(MATRICES_DIR);
                fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                for (name, csv) in g.debug_csv() {
                    let p = dir.join(format!("{name}.csv"));
                    write(&p, csv)?;
                    prov.clone().write_for(&p)?;
                }
            }
            Ok(())
        };
        run().map_err(|e| e.in_stage(BUILD_GRAPHS))?;
        Ok(g)
    }

    pub fn walk(&self) -> Result<WalkCorpus> {
        let (_, g) = self.dataset(WALK)?;
        let run = || -> Result<WalkCorpus> {
            let sampler = build_sampler(&g, &self.cfg.walk);
            let corpus = run_hetgwalk(&sampler, &self.cfg.walk)?;
            let path = self.out(WALKS_FILE);
            write_corpus(&corpus, &g, &path)?;
            with_dataset(Provenance::new(WALK), &self.cfg.data_dir)?
                .input("walk_config", config_hash(&self.cfg.walk))
                .input("graph_fingerprint", g.fingerprint())
                .write_for(&path)?;
            Ok(corpus)
        };
        run().map_err(|e| e.in_stage(WALK))
    }

    pub fn ground_truth(&self) -> Result<Vec<f64>> {
        let run = || -> Result<Vec<f64>> {
            let bundle = load_dataset(&self.cfg.data_dir)?;
            let gt = ground_truth_table(&bundle, &self.cfg.failure)?;
            let path = self.cfg.ground_truth_path();
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            write_ground_truth(&path, &bundle.segment_ids(), &gt, &self.cfg.failure)?;
            with_dataset(Provenance::new(GROUND_TRUTH), &self.cfg.data_dir)?
                .input("failure_config", config_hash(&self.cfg.failure))
                .write_for(&path)?;
            Ok(gt)
        };
        run().map_err(|e| e.in_stage(GROUND_TRUTH))
    }

    pub fn train(&self) -> Result<TrainOutcome> {
        let (bundle, g) = self.dataset(TRAIN)?;
        let corpus = self.corpus(&g)?;
        let gt = self.ground_truth_for(&bundle)?;
        let run = || -> Result<TrainOutcome> {
            let data = EncodedCorpus::new(&corpus, &g, self.cfg.encoder.max_seq_tokens)?;
            let all: Vec<usize> = (0..bundle.network.len()).collect();
            let (train_ids, test_ids) =
                split_segments(&all, self.cfg.train.train_fraction, self.cfg.train.seed);
            let outcome = train(&data, &g, &gt, &train_ids, &self.cfg.encoder, &self.cfg.train)?;
            let prov = with_dataset(Provenance::new(TRAIN), &self.cfg.data_dir)?
                .input_file(WALKS_FILE, &self.out(WALKS_FILE))?
                .input_file("ground_truth", &self.cfg.ground_truth_path())?
                .input("encoder_config", config_hash(&self.cfg.encoder))
                .input("train_config", config_hash(&self.cfg.train));

            let ckpt = self.out(CHECKPOINT_FILE);
            checkpoint::save(&outcome.model, &ckpt)?;
            prov.clone().write_for(&ckpt)?;

            let mut curve = String::from("epoch,loss\n");
            for (e, l) in outcome.loss_curve.iter().enumerate() {
                let _ = writeln!(curve, "{},{l}", e + 1);
            }
            let loss = self.out(LOSS_FILE);
            write(&loss, curve)?;
            prov.clone().write_for(&loss)?;

            let ids = |v: &[usize]| v.iter().map(|&s| bundle.network.segments[s].id.clone()).collect();
            let split = Split {
                train: ids(&train_ids),
                test: ids(&test_ids),
            };
            let sp = self.out(SPLIT_FILE);
            write(&sp, to_json(&split))?;
            prov.write_for(&sp)?;
            Ok(outcome)
        };
        run().map_err(|e| e.in_stage(TRAIN))
    }

    /// Scores every segment with the checkpoint read back from disk.
    pub fn rank(&self) -> Result<Vec<(String, f64)>> {
        let (bundle, g) = self.dataset(RANK)?;
        let corpus = self.corpus(&g)?;
        let model = checkpoint::load(&self.out(CHECKPOINT_FILE)).map_err(|e| e.in_stage(TRAIN))?;
        let run = || -> Result<Vec<(String, f64)>> {
            if model.input_dims != input_dims(&g) {
                return Err(Error::Provenance(format!(
                    "checkpoint input dims {:?} do not match the dataset's {:?}",
                    model.input_dims,
                    input_dims(&g)
                )));
            }
            let data = EncodedCorpus::new(&corpus, &g, model.encoder.max_seq_tokens)?;
            let scores = score_all_segments(&model, &data)?;
            let ranking = predict_full_ranking(&bundle.segment_ids(), &scores);
            let path = self.out(RANKING_FILE);
            write(&path, ranking_csv(&ranking))?;
            with_dataset(Provenance::new(RANK), &self.cfg.data_dir)?
                .input_file(WALKS_FILE, &self.out(WALKS_FILE))?
                .input_file(CHECKPOINT_FILE, &self.out(CHECKPOINT_FILE))?
                .write_for(&path)?;
            Ok(ranking)
        };
        run().map_err(|e| e.in_stage(RANK))
    }

    /// Metrics of the model and both baselines on the test split.
    pub fn evaluate(&self) -> Result<EvaluationSummary> {
        let bundle = load_dataset(&self.cfg.data_dir).map_err(|e| e.in_stage(EVALUATE))?;
        let gt = self.ground_truth_for(&bundle)?;
        let run = || -> Result<EvaluationSummary> {
            let ids = bundle.segment_ids();
            let predicted = read_ranking(&self.out(RANKING_FILE), &ids)?;
            let split_path = self.out(SPLIT_FILE);
            let split: Split = serde_json::from_str(
                &fs::read_to_string(&split_path).map_err(|e| Error::io(&split_path, e))?,
            )
            .map_err(|e| Error::Provenance(format!("{}: {e}", split_path.display())))?;
            let test: Vec<usize> = split
                .test
                .iter()
                .map(|id| {
                    bundle
                        .network
                        .segment_index(id)
                        .ok_or_else(|| Error::Referential(format!("split names unknown segment {id}")))
                })
                .collect::<Result<_>>()?;

            let out_degree: Vec<f64> = bundle.network.out_degree().iter().map(|&d| d as f64).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.train.seed, &[TAG_RANDOM_BASELINE]));
            let random: Vec<f64> = (0..ids.len()).map(|_| rng.random::<f64>()).collect();

            let report = |scores: &[f64]| -> Result<MetricsReport> {
                let pair = RankingPair::from_scores(
                    test.iter().map(|&s| ids[s].clone()).collect(),
                    test.iter().map(|&s| gt[s]).collect(),
                    test.iter().map(|&s| scores[s]).collect(),
                )?;
                evaluate(&pair, self.cfg.eval.k)
            };
            let summary = EvaluationSummary {
                model: report(&predicted)?,
                out_degree: report(&out_degree)?,
                random: report(&random)?,
            };
            let prov = Provenance::new(EVALUATE)
                .input_file(RANKING_FILE, &self.out(RANKING_FILE))?
                .input_file(SPLIT_FILE, &split_path)?
                .input_file("ground_truth", &self.cfg.ground_truth_path())?
                .input("eval_config", config_hash(&self.cfg.eval));
            let m = self.out(METRICS_FILE);
            write(&m, to_json(&summary.model))?;
            prov.clone().write_for(&m)?;
            let b = self.out(BASELINES_FILE);
            write(&b, to_json(&summary))?;
            prov.write_for(&b)?;
            Ok(summary)
        };
        run().map_err(|e| e.in_stage(EVALUATE))
    }

    /// build → walk → (ground truth) → train → rank → evaluate.
    pub fn run(&self, compute_gt: bool) -> Result<(TrainOutcome, EvaluationSummary)> {
        self.cfg.save(&self.out(CONFIG_FILE))?;
        self.build_graphs()?;
        self.walk()?;
        if compute_gt {
            self.ground_truth()?;
        } else if !self.cfg.ground_truth_path().exists() {
            return Err(Error::Config(format!(
                "ground truth {} is missing; compute it first",
                self.cfg.ground_truth_path().display()
            ))
            .in_stage(GROUND_TRUTH));
        }
        let outcome = self.train()?;
        self.rank()?;
        let summary = self.evaluate()?;
        Ok((outcome, summary))
    }
}

pub fn ranking_csv(ranking: &[(String, f64)]) -> String {
    let mut s = String::from(RANKING_HEADER);
    s.push('\n');
    for (i, (id, score)) in ranking.iter().enumerate() {
        // unranked segments (no walk reached them) keep an empty score
        let score = if score.is_finite() { score.to_string() } else { String::new() };
        let _ = writeln!(s, "{},{id},{score}", i + 1);
    }
    s
}

/// Reads a ranking CSV into scores by segment index; empty scores become `-inf`.
pub fn read_ranking(path: &Path, ids: &[String]) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse = |line: usize, message: String| Error::Parse {
        file: path.to_path_buf(),
        line,
        column: 0,
        message,
    };
    let mut lines = text.lines();
    if lines.next() != Some(RANKING_HEADER) {
        return Err(parse(1, format!("expected header {RANKING_HEADER}")));
    }
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut out = vec![None; ids.len()];
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse(i + 2, "expected three fields".into()));
        }
        let s = *index
            .get(fields[1])
            .ok_or_else(|| Error::Referential(format!("ranking names unknown segment {}", fields[1])))?;
        let v = if fields[2].is_empty() {
            f64::NEG_INFINITY
        } else {
            fields[2].parse().map_err(|e| parse(i + 2, format!("score: {e}")))?
        };
        if out[s].replace(v).is_some() {
            return Err(parse(i + 2, format!("segment {} listed twice", fields[1])));
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| Error::Referential(format!("ranking lacks segment {}", ids[i]))))
        .collect()
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: String,
    pub value: String,
    pub report: MetricsReport,
}

/// Reruns the pipeline once per value of `param`, each in `<out_dir>/sweep/<param>=<value>`.
///
/// Without `compute_gt` every run shares the base config's ground truth.
pub fn sweep(base: &RunConfig, param: &str, values: &[String], compute_gt: bool) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for v in values {
        let mut cfg = base.clone();
        cfg.set(param, v).map_err(|e| e.in_stage(SWEEP))?;
        cfg.validate().map_err(|e| e.in_stage(SWEEP))?;
        if !compute_gt && cfg.ground_truth.is_none() {
            cfg.ground_truth = Some(base.ground_truth_path());
        }
        cfg.out_dir = base.out_dir.join("sweep").join(format!("{param}={v}"));
        let (_, summary) = Pipeline::new(&cfg)?.run(compute_gt)?;
        rows.push(SweepRow {
            param: param.to_string(),
            value: v.clone(),
            report: summary.model,
        });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        let m = &r.report;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.param, r.value, m.kendall_tau, m.ndcg_at_k, m.emd, m.diff
        );
    }
    s
}

// ---------------------------------------------------------------------------
// Verification battery
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub property: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.property.as_str())
            .collect()
    }
}

pub const ROW_SUM_TOL: f64 = 1e-12;
pub const IDENTITY_TOL: f64 = 1e-12;
pub const STATIONARY_TOL: f64 = 1e-13;
pub const STATIONARY_AGREEMENT: f64 = 1e-8;
pub const CHI_SQUARE_SAMPLES: usize = 100_000;
pub const CHI_SQUARE_STATES: usize = 10;
pub const CHI_SQUARE_MIN_P: f64 = 1e-3;

fn row_sum_audit(g: &Graphs, epsilon: f64) -> Check {
    let mut worst: f64 = 0.0;
    let mut note = |s: f64| {
        // a row either carries no mass or sums to one
        if s != 0.0 {
            worst = worst.max((s - 1.0).abs());
        }
    };
    let k = &g.kernels;
    for m in [&k.m_pl_row, &k.m_ll_row] {
        m.rows().into_iter().for_each(|r| note(r.sum()));
    }
    k.m_pl_col.columns().into_iter().for_each(|c| note(c.sum()));
    g.trip.m_op.rows().into_iter().for_each(|r| note(r.sum()));
    for i in 0..g.trip.n_nodes() {
        if let Some(row) = crate::walk::kernel::depth_first_row(g, i, epsilon) {
            note(row.probs.iter().sum());
        }
    }
    for ag in &g.attributes.0 {
        for i in 0..ag.n_entities() {
            note(crate::walk::kernel::attribute_distribution(ag, i).iter().sum());
            for kk in 0..ag.n_attributes() {
                note(crate::walk::kernel::entity_distribution(ag, kk, i).iter().sum());
            }
        }
    }
    Check {
        property: "kernel row sums".into(),
        passed: worst <= ROW_SUM_TOL,
        detail: format!("max |row sum - 1| = {worst:e}"),
    }
}

/// Empirical joint-step frequencies against the analytic mixture on `states` random states.
///
/// Returns the smallest chi-square p-value over the states.
pub fn walk_law_battery(g: &Graphs, cfg: &WalkConfig, states: usize, samples: usize, seed: u64) -> f64 {
    let sampler = build_sampler(g, cfg);
    let tg = &g.trip;
    let n = tg.n_nodes();
    let mut pick = ChaCha8Rng::seed_from_u64(seed);
    let token = |gl: usize| {
        let (t, i) = tg.local(gl);
        WalkToken::entity(t, i)
    };
    let mut min_p: f64 = 1.0;
    for s in 0..states {
        let current = token(pick.random_range(0..n));
        let predecessor = pick.random_bool(0.5).then(|| token(pick.random_range(0..n)));
        let law = joint_step_law(g, current, predecessor, cfg);
        let outcomes: Vec<JointStep> = law.keys().copied().collect();
        let probs: Vec<f64> = law.values().copied().collect();
        let index: BTreeMap<JointStep, usize> = outcomes.iter().enumerate().map(|(i, o)| (*o, i)).collect();
        let mut counts = vec![0u64; outcomes.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[s as u64]));
        let mut stray = false;
        for _ in 0..samples {
            let step = joint_step(current, predecessor, &sampler, cfg, BranchPolicy::Mixed, &mut rng);
            match index.get(&step) {
                Some(&i) => counts[i] += 1,
                None => stray = true,
            }
        }
        let p = if stray { 0.0 } else { chi_square_p_value(&counts, &probs) };
        min_p = min_p.min(p);
    }
    min_p
}

/// Two power iterations from distinct starts; returns their L1 distance.
pub fn stationary_agreement(p: &ndarray::Array2<f64>) -> Result<f64> {
    let n = p.nrows();
    let uniform = Array1::from_elem(n, 1.0 / n as f64);
    let mut point = Array1::zeros(n);
    point[n - 1] = 1.0;
    let a = stationary_distribution_from(p, uniform, STATIONARY_TOL, MAX_POWER_ITERATIONS)?;
    let b = stationary_distribution_from(p, point, STATIONARY_TOL, MAX_POWER_ITERATIONS)?;
    Ok((&a - &b).mapv(f64::abs).sum())
}

/// Checks the propagation identity, ergodicity, stationary uniqueness, the
/// sampled walk law and the kernel row sums on one dataset.
pub fn verify(bundle: &DatasetBundle, cfg: &RunConfig) -> Result<VerifyReport> {
    cfg.walk.validate().map_err(|e| e.in_stage(VERIFY))?;
    let g = Graphs::build(bundle, cfg.graph.decay_base).map_err(|e| e.in_stage(VERIFY))?;
    let mut checks = vec![row_sum_audit(&g, cfg.walk.epsilon)];

    let mut worst_u: f64 = 0.0;
    let mut worst_n: f64 = 0.0;
    for t in NodeType::ALL {
        let id = propagation_identity(g.attributes.get(t));
        worst_u = worst_u.max(id.unnormalized);
        worst_n = worst_n.max(id.normalized);
    }
    checks.push(Check {
        property: "propagation identity".into(),
        passed: worst_u <= IDENTITY_TOL && worst_n <= IDENTITY_TOL,
        detail: format!("max error unnormalized {worst_u:e}, normalized {worst_n:e}"),
    });

    match joint_transition_matrix(&g, cfg.walk.alpha, cfg.walk.epsilon, cfg.graph.dense_cap) {
        Ok(p) => {
            let e = ergodicity_check(&p);
            checks.push(Check {
                property: "ergodicity".into(),
                passed: e.irreducible && e.aperiodic,
                detail: format!(
                    "irreducible {}, aperiodic {}, {} communicating classes, period {}",
                    e.irreducible,
                    e.aperiodic,
                    e.components,
                    e.period
                ),
            });
            let (passed, detail) = match stationary_agreement(&p) {
                Ok(d) => (d < STATIONARY_AGREEMENT, format!("L1 distance between starts {d:e}")),
                Err(e) => (false, e.to_string()),
            };
            checks.push(Check {
                property: "stationary uniqueness".into(),
                passed,
                detail,
            });
        }
        Err(e) => {
            for property in ["ergodicity", "stationary uniqueness"] {
                checks.push(Check {
                    property: property.into(),
                    passed: false,
                    detail: e.to_string(),
                });
            }
        }
    }

    let min_p = walk_law_battery(&g, &cfg.walk, CHI_SQUARE_STATES, CHI_SQUARE_SAMPLES, cfg.walk.seed);
    checks.push(Check {
        property: "walk law chi-square".into(),
        passed: min_p > CHI_SQUARE_MIN_P,
        detail: format!(
            "min p = {min_p:.4} over {CHI_SQUARE_STATES} states x {CHI_SQUARE_SAMPLES} draws"
        ),
    });
    Ok(VerifyReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::example_network;

    #[test]
    fn ranking_csv_round_trip_keeps_unranked_last() {
        let ids: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let ranking = predict_full_ranking(&ids, &[Some(0.5), None, Some(2.0)]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(RANKING_FILE);
        fs::write(&p, ranking_csv(&ranking)).unwrap();
        assert!(fs::read_to_string(&p).unwrap().ends_with("3,b,\n"));
        let back = read_ranking(&p, &ids).unwrap();
        assert_eq!(back, vec![0.5, f64::NEG_INFINITY, 2.0]);
    }

    #[test]
    fn example_passes_every_check() {
        let r = verify(&example_network(), &RunConfig::default()).unwrap();
        assert!(r.passed(), "{:#?}", r.checks);
        assert_eq!(r.checks.len(), 5);
    }

    #[test]
    fn sweep_csv_has_the_fixed_header() {
        let m = MetricsReport {
            ndcg_at_k: 1.0,
            emd: 0.0,
            diff: 0.0,
            kendall_tau: 1.0,
            n: 2,
            k: 2,
        };
        let rows = [SweepRow {
            param: "walk.alpha".into(),
            value: "0.2".into(),
            report: m,
        }];
        let csv = sweep_csv(&rows);
        assert_eq!(csv.lines().next(), Some("param,value,kendall_tau,ndcg,emd,diff"));
        assert_eq!(csv.lines().count(), 2);
    }
}
