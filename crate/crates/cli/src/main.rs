//! Command-line front door: dataset preparation, training, evaluation,
//! sweeps, and benchmarks.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage error. Progress
//! goes to stderr; machine-readable output goes to files and stdout.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mdals::data::io::{
    load_ratings_path, read_dataset_cache, write_dataset_cache, RatingsFormat,
};
use mdals::data::{
    assign_dimensions, binarize, filter_min_support, popularity_stats, temporal_split,
    DimensionScheme, RatingDataset, Split,
};
use mdals::eval::evaluate_model;
use mdals::harness::bench::{emit_bench_csv, scaling_benchmark, BenchSpec};
use mdals::harness::synth::{generate_ratings, SyntheticSpec};
use mdals::harness::{
    emit_histogram_csv, emit_sweep_csv, grid_search, run_manifest, run_sweep, validation_auc_hook,
    SweepAxis, SweepSpec,
};
use mdals::model::checkpoint::{read_checkpoint, write_checkpoint};
use mdals::model::{count_parameters, Variant};
use mdals::solvers::{train, TrainConfig};

#[derive(Parser)]
#[command(name = "mdals", version, about = "Mixed-dimension ALS matrix factorization")]
struct Cli {
    /// Cap solver parallelism (default: logical cores; overrides
    /// MDALS_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a rating log (or generate a synthetic one), run the
    /// preprocessing pipeline, and write the dataset cache plus the
    /// popularity histogram CSV.
    Prepare(PrepareArgs),
    /// Train one model variant on a prepared cache; writes a checkpoint and
    /// a training-report JSON.
    Train(TrainArgs),
    /// Score a checkpoint on the validation or test split; prints metrics
    /// JSON to stdout.
    Evaluate(EvaluateArgs),
    /// Quality-versus-parameter-count sweep with repeated reseeded runs;
    /// writes sweep.csv and a run manifest.
    Sweep(SweepArgs),
    /// Per-iteration timing benchmark on synthetic datasets of scaled
    /// sizes; writes bench.csv and a run manifest.
    Bench(BenchArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// Rating log to ingest. Omit together with --synthetic to generate
    /// data instead.
    #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
    input: Option<PathBuf>,

    /// Input format: movielens, generic, or netflix.
    #[arg(long, default_value = "movielens")]
    format: RatingsFormat,

    /// Generate a synthetic planted-factor dataset instead of reading a
    /// file.
    #[arg(long)]
    synthetic: bool,

    #[arg(long, default_value_t = 2000)]
    users: usize,
    #[arg(long, default_value_t = 2000)]
    items: usize,
    #[arg(long, default_value_t = 100_000)]
    interactions: usize,
    #[arg(long, default_value_t = 2)]
    rank: usize,
    #[arg(long, default_value_t = 1.2)]
    zipf: f64,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    synth_seed: u64,

    #[arg(long, default_value_t = 0.10)]
    val_frac: f64,
    #[arg(long, default_value_t = 0.10)]
    test_frac: f64,
    #[arg(long, default_value_t = 5)]
    min_count: usize,

    /// Output directory.
    #[arg(long, default_value = "./mdals-out")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset cache written by `prepare`.
    #[arg(long)]
    cache: PathBuf,

    /// baseline, zero-pad, or projected.
    #[arg(long)]
    variant: Variant,

    /// Embedding dimension for the baseline variant.
    #[arg(long, default_value_t = 6)]
    d: u32,

    /// Candidate dimensions for the mixed variants.
    #[arg(long, value_delimiter = ',', default_values_t = [2u32, 4, 6])]
    allowed_dims: Vec<u32>,

    /// Popularity scale for mixed-dimension assignment (required for
    /// zero-pad and projected).
    #[arg(long)]
    gamma: Option<f64>,

    #[arg(long)]
    lambda: f64,

    /// Projection regularization (required for projected).
    #[arg(long)]
    beta: Option<f64>,

    #[arg(long, default_value_t = 30)]
    iterations: usize,
    #[arg(long, default_value_t = 5)]
    eval_every: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bernoulli(1/p^2) subsampling of projection-update rows.
    #[arg(long)]
    subsample: bool,

    #[arg(long, default_value = "./mdals-out")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    cache: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// validation or test.
    #[arg(long, default_value = "test")]
    split: Split,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    cache: PathBuf,

    #[arg(long)]
    variant: Variant,

    /// Baseline dimension axis.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<u32>>,

    /// Gamma axis for the mixed variants.
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,

    #[arg(long, value_delimiter = ',', default_values_t = [2u32, 4, 6])]
    allowed_dims: Vec<u32>,

    /// Fixed lambda; when absent a cross-validated grid search picks it.
    #[arg(long)]
    lambda: Option<f64>,
    /// Fixed beta; when absent the grid search picks it.
    #[arg(long)]
    beta: Option<f64>,

    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.3, 1.0, 3.0])]
    lambda_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [300.0, 1000.0, 3000.0, 10_000.0])]
    beta_grid: Vec<f64>,

    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    #[arg(long, default_value_t = 30)]
    iterations: usize,
    #[arg(long, default_value_t = 5)]
    eval_every: usize,
    #[arg(long)]
    subsample: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value = "./mdals-out")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4])]
    scales: Vec<usize>,
    #[arg(long, default_value_t = 1500)]
    users: usize,
    #[arg(long, default_value_t = 1500)]
    items: usize,
    #[arg(long, default_value_t = 150_000)]
    base_interactions: usize,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 0.3)]
    lambda: f64,
    #[arg(long, default_value_t = 1000.0)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value = "./mdals-out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };

    if let Err(e) = configure_workers(cli.workers) {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }

    let outcome = match cli.command {
        Command::Prepare(args) => cmd_prepare(args),
        Command::Train(args) => match validate_train_args(&args) {
            Ok(()) => cmd_train(args),
            Err(e) => {
                eprintln!("usage error: {e:#}");
                return ExitCode::from(2);
            }
        },
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Sweep(args) => match validate_sweep_args(&args) {
            Ok(()) => cmd_sweep(args),
            Err(e) => {
                eprintln!("usage error: {e:#}");
                return ExitCode::from(2);
            }
        },
        Command::Bench(args) => cmd_bench(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn configure_workers(flag: Option<usize>) -> Result<()> {
    let env_workers = std::env::var("MDALS_WORKERS")
        .ok()
        .map(|v| v.parse::<usize>())
        .transpose()
        .context("MDALS_WORKERS must be an integer")?;
    if let Some(n) = flag.or(env_workers) {
        if n == 0 {
            bail!("worker count must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("thread pool already configured")?;
    }
    Ok(())
}

fn validate_train_args(args: &TrainArgs) -> Result<()> {
    match args.variant {
        Variant::Baseline => {
            if args.d == 0 {
                bail!("--d must be positive");
            }
        }
        Variant::ZeroPad => {
            if args.gamma.is_none() {
                bail!("--gamma is required for the zero-pad variant");
            }
        }
        Variant::Projected => {
            if args.gamma.is_none() {
                bail!("--gamma is required for the projected variant");
            }
            if args.beta.is_none() {
                bail!("--beta is required for the projected variant");
            }
        }
    }
    Ok(())
}

fn validate_sweep_args(args: &SweepArgs) -> Result<()> {
    match args.variant {
        Variant::Baseline => {
            if args.gammas.is_some() {
                bail!("--gammas does not apply to the baseline; use --dims");
            }
        }
        _ => {
            if args.dims.is_some() {
                bail!("--dims only applies to the baseline; use --gammas");
            }
        }
    }
    if args.lambda.is_some() != args.beta.is_some() {
        bail!("--lambda and --beta must be given together (or both omitted for grid search)");
    }
    Ok(())
}

fn cmd_prepare(args: PrepareArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out)?;
    let (ratings, source) = if args.synthetic {
        let spec = SyntheticSpec {
            users: args.users,
            items: args.items,
            interactions: args.interactions,
            rank: args.rank,
            zipf_exponent: args.zipf,
            noise: args.noise,
            seed: args.synth_seed,
        };
        eprintln!(
            "generating synthetic dataset: {} users, {} items, {} interactions",
            spec.users, spec.items, spec.interactions
        );
        let manifest = serde_json::to_value(&spec)?;
        (generate_ratings(&spec)?, manifest)
    } else {
        let input = args.input.as_ref().expect("clap enforces --input");
        eprintln!("reading {}", input.display());
        let outcome = load_ratings_path(input, args.format)?;
        if outcome.skipped > 0 {
            eprintln!("skipped {} malformed lines", outcome.skipped);
        }
        let manifest = serde_json::json!({
            "input": input.display().to_string(),
            "skipped_lines": outcome.skipped,
        });
        (outcome.ratings, manifest)
    };

    let total = ratings.len();
    let labeled = binarize(ratings);
    if labeled.is_empty() {
        bail!("dataset is empty after binarization ({total} input ratings)");
    }
    let ds = temporal_split(labeled, args.val_frac, args.test_frac)?;
    let ds = filter_min_support(&ds, args.min_count)?;
    let stats = popularity_stats(&ds);

    let cache_path = args.out.join("dataset.mdc");
    write_dataset_cache(&ds, &cache_path)?;
    let hist_path = args.out.join("popularity_histogram.csv");
    emit_histogram_csv(&stats.histogram, &hist_path)?;
    write_json(
        &args.out.join("prepare_manifest.json"),
        &run_manifest(
            serde_json::json!({
                "source": source,
                "val_frac": args.val_frac,
                "test_frac": args.test_frac,
                "min_count": args.min_count,
            }),
            args.synth_seed,
        ),
    )?;

    println!("users: {}", ds.num_users());
    println!("items: {}", ds.num_items());
    for split in Split::ALL {
        println!("{split} interactions: {}", ds.split_len(split));
    }
    eprintln!("cache written to {}", cache_path.display());
    Ok(())
}

fn build_scheme(
    ds: &RatingDataset,
    variant: Variant,
    d: u32,
    allowed_dims: &[u32],
    gamma: Option<f64>,
) -> Result<DimensionScheme> {
    Ok(match variant {
        Variant::Baseline => DimensionScheme::uniform(d, ds.num_users(), ds.num_items()),
        _ => {
            let stats = popularity_stats(ds);
            assign_dimensions(
                &stats,
                allowed_dims,
                gamma.expect("validated for mixed variants"),
            )?
        }
    })
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out)?;
    let ds = read_dataset_cache(&args.cache)?;
    let scheme = build_scheme(&ds, args.variant, args.d, &args.allowed_dims, args.gamma)?;

    let mut config = TrainConfig::new(args.lambda, args.beta.unwrap_or(1.0));
    config.iterations = args.iterations;
    config.eval_every = args.eval_every;
    config.subsample = args.subsample;
    config.seed = args.seed;

    eprintln!(
        "training {} on {} users x {} items ({} train interactions)",
        args.variant,
        ds.num_users(),
        ds.num_items(),
        ds.split_len(Split::Train)
    );
    let mut hook = validation_auc_hook(&ds);
    let (params, report) = train(&ds, &scheme, args.variant, config.clone(), Some(&mut hook))?;

    let checkpoint_path = args.out.join("checkpoint.mdcp");
    write_checkpoint(&params, scheme.allowed_dims(), &checkpoint_path)?;
    write_json(
        &args.out.join("train_report.json"),
        &serde_json::json!({
            "manifest": run_manifest(&config, args.seed),
            "variant": args.variant,
            "report": report,
        }),
    )?;
    eprintln!(
        "checkpoint written to {} (best iteration {:?})",
        checkpoint_path.display(),
        report.best_iteration
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let ds = read_dataset_cache(&args.cache)?;
    let (params, header) = read_checkpoint(&args.checkpoint)?;
    if header.num_users != ds.num_users() || header.num_items != ds.num_items() {
        bail!(
            "checkpoint covers {}x{} entities but the cache has {}x{}",
            header.num_users,
            header.num_items,
            ds.num_users(),
            ds.num_items()
        );
    }
    let metrics = evaluate_model(&params, &ds, args.split)?;
    let out = serde_json::json!({
        "split": args.split.to_string(),
        "auc": metrics.auc,
        "rmse": metrics.rmse,
        "n": metrics.n,
        "parameter_count": count_parameters(&params),
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out)?;
    let ds = read_dataset_cache(&args.cache)?;

    let mut spec = SweepSpec::defaults(args.variant);
    if let Some(dims) = &args.dims {
        spec.axis = SweepAxis::BaselineDims(dims.clone());
    }
    if let Some(gammas) = &args.gammas {
        spec.axis = SweepAxis::Gammas(gammas.clone());
    }
    spec.allowed_dims = args.allowed_dims.clone();
    spec.lambda_grid = args.lambda_grid.clone();
    spec.beta_grid = args.beta_grid.clone();
    spec.repeats = args.repeats;
    spec.cv_folds = args.folds;
    spec.iterations = args.iterations;
    spec.eval_every = args.eval_every;
    spec.subsample = args.subsample;
    spec.base_seed = args.seed;

    let (lambda, beta) = match (args.lambda, args.beta) {
        (Some(l), Some(b)) => (l, b),
        _ => {
            eprintln!(
                "grid search over {} lambdas x {} betas with {}-fold cross-validation",
                spec.lambda_grid.len(),
                spec.beta_grid.len(),
                spec.cv_folds
            );
            let picked = grid_search(&ds, &spec)?;
            eprintln!("selected lambda={} beta={}", picked.0, picked.1);
            picked
        }
    };

    let result = run_sweep(&ds, &spec, lambda, beta)?;
    let csv_path = args.out.join("sweep.csv");
    emit_sweep_csv(&result, &csv_path)?;
    let mut manifest = run_manifest(&spec, args.seed);
    manifest["lambda"] = serde_json::json!(lambda);
    manifest["beta"] = serde_json::json!(beta);
    manifest["wall_secs"] = serde_json::json!(result
        .rows
        .iter()
        .map(|r| r.wall_secs)
        .collect::<Vec<f64>>());
    manifest["failures"] = serde_json::to_value(&result.failures)?;
    write_json(&args.out.join("sweep_manifest.json"), &manifest)?;
    eprintln!(
        "{} rows ({} failures) written to {}",
        result.rows.len(),
        result.failures.len(),
        csv_path.display()
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out)?;
    let mut spec = BenchSpec::new(args.users, args.items, args.base_interactions, args.scales);
    spec.gamma = args.gamma;
    spec.lambda = args.lambda;
    spec.beta = args.beta;
    spec.seed = args.seed;

    eprintln!("benchmarking scales {:?}", spec.scales);
    let report = scaling_benchmark(&spec)?;
    let csv_path = args.out.join("bench.csv");
    emit_bench_csv(&report, &csv_path)?;
    write_json(
        &args.out.join("bench_manifest.json"),
        &run_manifest(&spec, args.seed),
    )?;
    for row in &report.rows {
        eprintln!(
            "{} (subsample={}) scale x{}: {:.4}s per iteration",
            row.variant, row.subsample, row.scale, row.iter_secs
        );
    }
    eprintln!("timings written to {}", csv_path.display());
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    use std::io::Write;
    w.write_all(b"\n")?;
    Ok(())
}
