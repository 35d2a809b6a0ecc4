//! `spdgyro`: train, evaluate and inspect SPD knowledge-graph embeddings.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spdgyro::analysis::export_analysis;
use spdgyro::bench::{self, BenchOp};
use spdgyro::kgmodel::{check_score_gradient, KgDataset, ModelKind, Split};
use spdgyro::manifold::Metric;
use spdgyro::pipeline::{
    evaluate_filtered, evaluate_sampled, resume, train, TrainConfig, TrainState, BEST_FILE, HISTORY_FILE, LAST_FILE,
    SAMPLED_M,
};
use spdgyro::{Error, Result};

/// Tolerance of `check-grad`.
const GRAD_TOL: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(name = "spdgyro", version, about = "SPD manifold knowledge-graph embeddings", args_override_self = true)]
struct Cli {
    /// Worker threads for scoring and gradients (default: all cores)
    #[arg(long, global = true, env = "SPD_GYRO_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write history.csv, best.ckpt and last.ckpt
    Train(TrainArgs),
    /// Rank a split with a checkpoint
    Eval(EvalArgs),
    /// Export VVD norms and angles of train, negative and valid triples
    Analyze(AnalyzeArgs),
    /// Compare analytic and finite-difference score gradients
    CheckGrad(CheckGradArgs),
    /// Time a core operation over matrix sizes
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Configuration file of `key = value` lines; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding train.txt, valid.txt and test.txt
    #[arg(long)]
    data_dir: PathBuf,
    /// Output directory for the history and checkpoints
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
    /// Continue from this checkpoint (only --epochs may change)
    #[arg(long)]
    resume: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

/// Per-field overrides; unset flags keep the config file or built-in value.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// RNG seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Matrix size [default: 14]
    #[arg(long)]
    n: Option<usize>,
    /// scaling, rotation or reflection [default: scaling]
    #[arg(long)]
    model: Option<ModelKind>,
    /// riemannian or f1 [default: riemannian]
    #[arg(long)]
    metric: Option<Metric>,
    /// Fixed-order single-threaded reductions
    #[arg(long)]
    deterministic: bool,
    /// Maximum epochs [default: 5000]
    #[arg(long)]
    epochs: Option<usize>,
    /// Positive triples per batch [default: 4096]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Negatives per positive [default: 10]
    #[arg(long, short = 'k')]
    negatives: Option<usize>,
    /// Learning rate [default: 1e-4]
    #[arg(long)]
    lr: Option<f64>,
    /// Decoupled weight decay [default: 1e-3]
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Epochs run at lr / burn-in-factor [default: 10]
    #[arg(long)]
    burn_in_epochs: Option<usize>,
    /// [default: 10]
    #[arg(long)]
    burn_in_factor: Option<f64>,
    /// Epochs without dev improvement before the rate is cut [default: 50]
    #[arg(long)]
    plateau_patience: Option<usize>,
    /// Divisor applied at a plateau [default: 2]
    #[arg(long)]
    plateau_factor: Option<f64>,
    /// Epochs without dev improvement before stopping [default: 500]
    #[arg(long)]
    early_stop_patience: Option<usize>,
    /// Epochs between dev evaluations [default: 20]
    #[arg(long)]
    eval_every: Option<usize>,
    /// Global gradient norm cap [default: 5]
    #[arg(long)]
    grad_clip: Option<f64>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        macro_rules! push {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    out.push((stringify!($f), v.to_string()));
                }
            )*};
        }
        push!(
            seed,
            n,
            model,
            metric,
            epochs,
            batch_size,
            negatives,
            lr,
            weight_decay,
            burn_in_epochs,
            burn_in_factor,
            plateau_patience,
            plateau_factor,
            early_stop_patience,
            eval_every,
            grad_clip
        );
        if self.deterministic {
            out.push(("deterministic", "true".into()));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Filtered,
    Sampled,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data_dir: PathBuf,
    /// train, valid or test
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long, value_enum, default_value = "filtered")]
    mode: Mode,
    /// Candidates per query in sampled mode
    #[arg(long, default_value_t = SAMPLED_M)]
    sampled_m: usize,
    /// Seed for sampled candidates
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON report path [default: eval_<split>_<mode>.json beside the checkpoint]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data_dir: PathBuf,
    /// Output CSV
    #[arg(long)]
    out: PathBuf,
    /// Sampled negatives per train triple
    #[arg(long, default_value_t = 1)]
    negatives: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct CheckGradArgs {
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// scaling, rotation or reflection
    #[arg(long, default_value = "scaling")]
    model: ModelKind,
    /// riemannian or f1
    #[arg(long, default_value = "riemannian")]
    metric: Metric,
    /// First seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds checked
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Debug hook: perturb one adjoint so the check must fail
    #[arg(long)]
    corrupt_adjoint: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// dist, gyro_add, exp, log or matrix_scale
    #[arg(long, default_value = "dist")]
    op: BenchOp,
    /// Comma-separated matrix sizes
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    sizes: Vec<usize>,
    /// Timed repetitions per size; the median is reported
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output path [default: bench_<op>.csv]
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failed command and its exit code.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() || matches!(e, Error::Diverged { .. }) { 1 } else { 2 };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        msg: msg.into(),
    }
}

fn load_data(dir: &Path) -> Result<KgDataset> {
    let data = KgDataset::load(dir)?.augment_inverse();
    log::info!(
        "{}: {} entities, {} relations, {}/{}/{} triples",
        dir.display(),
        data.num_entities(),
        data.raw_relations,
        data.train.len(),
        data.valid.len(),
        data.test.len()
    );
    Ok(data)
}

fn cmd_train(a: &TrainArgs) -> std::result::Result<(), Failure> {
    let pairs = a.overrides.pairs();
    let outcome = if let Some(ckpt) = &a.resume {
        if a.config.is_some() || pairs.iter().any(|(k, _)| *k != "epochs") {
            return Err(usage("only --epochs can be changed when resuming"));
        }
        let mut state = TrainState::load(ckpt)?;
        if let Some(e) = a.overrides.epochs {
            state.config.epochs = e;
        }
        let data = load_data(&a.data_dir)?;
        log::info!("resuming {} at epoch {}", ckpt.display(), state.epoch);
        resume(state, &data, Some(&a.out_dir))?
    } else {
        let mut cfg = TrainConfig::default();
        if let Some(p) = &a.config {
            config::read_config_file(&mut cfg, p)?;
        }
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        let data = load_data(&a.data_dir)?;
        train(&cfg, &data, Some(&a.out_dir))?
    };
    let best = &outcome.best;
    println!(
        "trained to epoch {}{}; best dev MRR {} at epoch {}",
        outcome.last.epoch,
        if outcome.stopped_early { " (early stop)" } else { "" },
        best.best_dev_mrr.map_or("n/a".into(), |m| format!("{m:.4}")),
        best.best_epoch.map_or("n/a".into(), |e| e.to_string()),
    );
    for f in [HISTORY_FILE, BEST_FILE, LAST_FILE] {
        println!("wrote {}", a.out_dir.join(f).display());
    }
    Ok(())
}

fn load_checkpoint(path: &Path, data: &KgDataset) -> Result<TrainState> {
    let state = TrainState::load(path)?;
    state.check_dataset(data)?;
    Ok(state)
}

fn cmd_eval(a: &EvalArgs) -> std::result::Result<(), Failure> {
    let data = load_data(&a.data_dir)?;
    let state = load_checkpoint(&a.checkpoint, &data)?;
    let report = match a.mode {
        Mode::Filtered => evaluate_filtered(&state.model, &data, a.split, true)?,
        Mode::Sampled => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            evaluate_sampled(&state.model, &data, a.split, a.sampled_m, &mut rng)?
        }
    };
    print!("{report}");
    let mode = match a.mode {
        Mode::Filtered => "filtered",
        Mode::Sampled => "sampled",
    };
    let out = a.out.clone().unwrap_or_else(|| {
        let dir = a.checkpoint.parent().unwrap_or(Path::new("."));
        dir.join(format!("eval_{}_{mode}.json", a.split.name()))
    });
    std::fs::write(&out, report.to_json() + "\n").map_err(|e| usage(format!("{}: {e}", out.display())))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_analyze(a: &AnalyzeArgs) -> std::result::Result<(), Failure> {
    let data = load_data(&a.data_dir)?;
    let state = load_checkpoint(&a.checkpoint, &data)?;
    let rows = export_analysis(&state.model, &data, a.negatives, a.seed, &a.out)?;
    println!("wrote {} rows to {}", rows, a.out.display());
    Ok(())
}

fn cmd_check_grad(a: &CheckGradArgs) -> std::result::Result<(), Failure> {
    if a.seeds == 0 {
        return Err(usage("--seeds must be positive"));
    }
    let mut worst = 0.0f64;
    for seed in a.seed..a.seed + a.seeds {
        let c = check_score_gradient(a.model, a.metric, a.n, seed, a.corrupt_adjoint)?;
        log::debug!("seed {seed}: max relative error {:e}", c.max_rel_error);
        worst = worst.max(c.max_rel_error);
    }
    let pass = worst <= GRAD_TOL;
    println!(
        "{} model, {} metric, n = {}, {} seed(s): max relative error {worst:e} (tolerance {GRAD_TOL:e}) {}",
        a.model,
        a.metric,
        a.n,
        a.seeds,
        if pass { "ok" } else { "FAILED" }
    );
    if pass {
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            msg: "gradient check failed".into(),
        })
    }
}

fn cmd_bench(a: &BenchArgs) -> std::result::Result<(), Failure> {
    let (rows, slope) = bench::run(a.op, &a.sizes, a.reps, a.seed)?;
    println!("{:>6} {:>14}", "n", "median (s)");
    for r in &rows {
        println!("{:>6} {:>14.6e}", r.n, r.median_secs);
    }
    if let Some(s) = slope {
        println!("{} log-log slope: {s:.3}", a.op);
    }
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from(format!("bench_{}.csv", a.op)));
    std::fs::write(&out, bench::to_csv(&rows, slope)).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::CheckGrad(a) => cmd_check_grad(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
