//! `hetgl2r`: one binary for every pipeline stage, verification and sweeps.
//!
//! Exit codes: 0 success, 1 computational failure, 2 usage or configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hetgl2r::config::RunConfig;
use hetgl2r::network::{example_network, load_dataset};
use hetgl2r::pipeline::{self, Pipeline};
use hetgl2r::Error;

#[derive(Parser)]
#[command(name = "hetgl2r", version, about = "Rank road segments by criticality from OD-flow structure")]
struct Cli {
    /// worker threads for parallel stages (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// log progress to stderr
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// flat key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// override one config key; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// dataset directory (same as --set data_dir=...)
    #[arg(long)]
    data: Option<PathBuf>,
    /// output directory (same as --set out_dir=...)
    #[arg(long)]
    out: Option<PathBuf>,
    /// print the resolved config and exit
    #[arg(long)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random dataset (or the 11-segment illustrative one)
    GenData {
        #[arg(long, default_value_t = 110)]
        segments: usize,
        #[arg(long, default_value_t = 20)]
        od: usize,
        #[arg(long, default_value_t = 3)]
        paths_per_od: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// write the fixed 11-segment example instead
        #[arg(long)]
        example: bool,
    },
    /// Build the trip graph and attribute graphs
    BuildGraphs(ConfigArgs),
    /// Sample the walk corpus
    Walk(ConfigArgs),
    /// Compute ground-truth importance scores
    GroundTruth(ConfigArgs),
    /// Train the ranker
    Train(ConfigArgs),
    /// Rank every segment with the saved checkpoint
    Rank(ConfigArgs),
    /// Score the ranking on the test split
    Evaluate(ConfigArgs),
    /// Run every stage in order
    Pipeline {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// compute the ground truth first
        #[arg(long)]
        compute_gt: bool,
    },
    /// Check the walk's Markov-chain properties on a dataset
    Verify {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// verify the built-in 11-segment example instead of --data
        #[arg(long)]
        example: bool,
    },
    /// Rerun the pipeline over a grid of one parameter
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// dotted config key, e.g. walk.alpha
        #[arg(long)]
        param: String,
        /// comma-separated grid
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        compute_gt: bool,
    },
}

fn resolve(a: &ConfigArgs) -> Result<RunConfig, Error> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &a.data {
        cfg.data_dir = d.clone();
    }
    if let Some(o) = &a.out {
        cfg.out_dir = o.clone();
    }
    for s in &a.set {
        cfg.set_assignment(s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_out(path: &Path, body: &str) -> Result<(), Error> {
    fs::write(path, body).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

/// Runs the command; `Ok(false)` means the command ran but a check failed.
fn run(cli: Cli) -> Result<bool, Error> {
    let stage = |a: &ConfigArgs, f: &dyn Fn(&Pipeline) -> Result<String, Error>| -> Result<bool, Error> {
        let cfg = resolve(a)?;
        if a.dry_run {
            print!("{}", cfg.dump());
            return Ok(true);
        }
        let p = Pipeline::new(&cfg)?;
        println!("{}", f(&p)?);
        Ok(true)
    };
    match cli.command {
        Command::GenData {
            segments,
            od,
            paths_per_od,
            seed,
            out,
            example: fig,
        } => {
            let bundle = if fig {
                let b = example_network();
                pipeline::write_bundle(&b, &out, "example")?;
                b
            } else {
                pipeline::gen_data(segments, od, paths_per_od, seed, &out)?
            };
            print!("{}", pipeline::summary_table(&bundle));
            Ok(true)
        }
        Command::BuildGraphs(a) => stage(&a, &|p| {
            let g = p.build_graphs()?;
            Ok(format!("graph fingerprint {}", g.fingerprint()))
        }),
        Command::Walk(a) => stage(&a, &|p| {
            let c = p.walk()?;
            Ok(format!("{} walks, {} segment tokens", c.sequences.len(), c.segment_token_count()))
        }),
        Command::GroundTruth(a) => stage(&a, &|p| {
            let gt = p.ground_truth()?;
            let nonzero = gt.iter().filter(|v| **v > 0.0).count();
            Ok(format!("{} segments scored, {nonzero} with nonzero importance", gt.len()))
        }),
        Command::Train(a) => stage(&a, &|p| {
            let o = p.train()?;
            let first = o.loss_curve.first().copied().unwrap_or(f64::NAN);
            let last = o.loss_curve.last().copied().unwrap_or(f64::NAN);
            Ok(format!("loss {first:.5} -> {last:.5} over {} epochs", o.loss_curve.len()))
        }),
        Command::Rank(a) => stage(&a, &|p| {
            let r = p.rank()?;
            let top: Vec<&str> = r.iter().take(5).map(|(id, _)| id.as_str()).collect();
            Ok(format!("ranked {} segments; top {}", r.len(), top.join(" ")))
        }),
        Command::Evaluate(a) => stage(&a, &|p| Ok(json(&p.evaluate()?))),
        Command::Pipeline { cfg, compute_gt } => stage(&cfg, &|p| {
            let (_, summary) = p.run(compute_gt)?;
            Ok(json(&summary))
        }),
        Command::Verify { cfg: a, example: fig } => {
            let cfg = resolve(&a)?;
            if a.dry_run {
                print!("{}", cfg.dump());
                return Ok(true);
            }
            let bundle = if fig {
                example_network()
            } else {
                load_dataset(&cfg.data_dir).map_err(|e| e.in_stage(pipeline::VERIFY))?
            };
            let report = pipeline::verify(&bundle, &cfg)?;
            for c in &report.checks {
                let mark = if c.passed { "PASS" } else { "FAIL" };
                println!("{mark} {}: {}", c.property, c.detail);
            }
            if !a.dry_run && cfg.out_dir.exists() {
                write_out(&cfg.out_dir.join("verify.json"), &json(&report))?;
            }
            if !report.passed() {
                eprintln!("verification failed: {}", report.failed().join(", "));
            }
            Ok(report.passed())
        }
        Command::Sweep {
            cfg: a,
            param,
            values,
            compute_gt,
        } => {
            let cfg = resolve(&a)?;
            // reject unknown parameters before any work
            cfg.clone().set(&param, &values[0])?;
            if a.dry_run {
                print!("{}", cfg.dump());
                return Ok(true);
            }
            let rows = pipeline::sweep(&cfg, &param, &values, compute_gt)?;
            let csv = pipeline::sweep_csv(&rows);
            fs::create_dir_all(&cfg.out_dir).map_err(|source| Error::Io {
                path: cfg.out_dir.clone(),
                source,
            })?;
            write_out(&cfg.out_dir.join(format!("sweep_{param}.csv")), &csv)?;
            print!("{csv}");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e.root() {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
