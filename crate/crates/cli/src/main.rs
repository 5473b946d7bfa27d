//! `egal`: synthesize datasets, run or sweep query strategies, and serve the
//! labeling API.

mod config_file;

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use egal_core::dataset::{self, SkewedSynthSpec};
use egal_core::engine::{AlScore, Termination};
use egal_core::eval::{self, EvalDataset, StrategySpec};
use egal_core::{Dataset, ExampleRecord, RunConfig};
use egal_service::AppState;

#[derive(Debug, Parser)]
#[command(
    name = "egal",
    version,
    about = "Exemplar-guided active learning",
    args_override_self = true,
    after_help = "Any command accepts --config FILE: key=value lines named like the flags.\n\
                  Flags given on the command line take precedence over the file.\n\
                  Log level comes from EGAL_LOG (error, warn, info, debug, trace)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a skewed Gaussian dataset: pool, exemplar and test files.
    Synth(SynthArgs),
    /// Run one strategy on a simulation dataset; writes per-retrain CSV to stdout.
    Run(RunArgs),
    /// Run strategies over seeds and datasets; writes one results CSV.
    Sweep(SweepArgs),
    /// Serve the HTTP labeling API.
    Serve(ServeArgs),
}

/// Rare-to-common ratio `A:B`; both sides positive.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Skew {
    rare: u64,
    common: u64,
}

fn parse_skew(s: &str) -> Result<Skew, String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected A:B, got `{s}`"))?;
    let parse = |x: &str| {
        x.trim()
            .parse::<u64>()
            .map_err(|e| format!("`{x}` in `{s}`: {e}"))
    };
    let (rare, common) = (parse(a)?, parse(b)?);
    if rare == 0 || common == 0 {
        return Err(format!("both sides of `{s}` must be positive"));
    }
    Ok(Skew { rare, common })
}

#[derive(Debug, Clone, Args)]
struct SynthParams {
    /// Number of classes; the last one is rare.
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Distance between neighbouring class centers.
    #[arg(long, default_value_t = 6.0)]
    separation: f64,
    /// Rare-class examples to common-class examples (all common classes together).
    #[arg(long, default_value = "1:100", value_parser = parse_skew)]
    skew: Skew,
    /// Pool examples of the rare class.
    #[arg(long, default_value_t = 50)]
    rare_count: usize,
    /// Held-out test examples per class.
    #[arg(long, default_value_t = 50)]
    test_per_class: usize,
}

impl SynthParams {
    fn spec(&self, seed: u64) -> Result<SkewedSynthSpec> {
        let common_total = (self.rare_count as u128 * self.skew.common as u128)
            .div_ceil(self.skew.rare as u128);
        let common_total = usize::try_from(common_total).context("--skew gives too many examples")?;
        Ok(SkewedSynthSpec {
            classes: self.classes,
            dim: self.dim,
            separation: self.separation,
            common_total,
            rare_count: self.rare_count,
            test_per_class: self.test_per_class,
            seed,
        })
    }

    fn header(&self, seed: u64, common_total: usize) -> String {
        format!(
            "egal synth classes={} dim={} separation={} skew={}:{} rare_count={} common_total={} test_per_class={} seed={}",
            self.classes,
            self.dim,
            self.separation,
            self.skew.rare,
            self.skew.common,
            self.rare_count,
            common_total,
            self.test_per_class,
            seed
        )
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    params: SynthParams,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix; writes PREFIX.pool.jsonl, PREFIX.exemplars.jsonl, PREFIX.test.jsonl.
    #[arg(long, default_value = "synth")]
    out: PathBuf,
    /// Overwrite existing files.
    #[arg(long)]
    force: bool,
}

/// Engine settings shared by `run` and `sweep`.
#[derive(Debug, Args)]
struct EngineArgs {
    #[arg(long, default_value_t = RunConfig::default().gamma)]
    gamma: f64,
    #[arg(long, default_value_t = RunConfig::default().delta)]
    delta: f64,
    /// Maximum number of labels.
    #[arg(long, default_value_t = RunConfig::default().budget)]
    budget: usize,
    /// Labels between retrains.
    #[arg(long, default_value_t = RunConfig::default().batch_size)]
    batch: usize,
    /// Exploration rate of ε-greedy selection.
    #[arg(long, default_value_t = RunConfig::default().epsilon)]
    epsilon: f64,
    /// Propensity floor of the search distribution [default: 0.1 / pool size].
    #[arg(long)]
    alpha: Option<f64>,
    /// Temperature of Boltzmann uncertainty sampling.
    #[arg(long, default_value_t = RunConfig::default().al_lambda)]
    al_lambda: f64,
    /// Keep taking uniform steps until unseen classes are ruled out at rate gamma.
    #[arg(long)]
    unknown_class_guarantee: bool,
    /// L2 penalty of the classifier.
    #[arg(long, default_value_t = RunConfig::default().train.reg_strength)]
    reg_strength: f64,
}

impl EngineArgs {
    fn config(&self) -> RunConfig {
        let mut c = RunConfig {
            gamma: self.gamma,
            delta: self.delta,
            budget: self.budget,
            batch_size: self.batch,
            epsilon: self.epsilon,
            alpha_floor: self.alpha,
            al_lambda: self.al_lambda,
            unknown_class_guarantee: self.unknown_class_guarantee,
            al_score: AlScore::Entropy,
            ..RunConfig::default()
        };
        c.train.reg_strength = self.reg_strength;
        c
    }
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset prefix, as written by `synth`.
    #[arg(long, conflicts_with_all = ["pool", "exemplars", "test"])]
    data: Option<PathBuf>,
    /// Pool file (JSONL or binary) with hidden labels.
    #[arg(long, requires_all = ["exemplars", "test"])]
    pool: Option<PathBuf>,
    #[arg(long, requires = "pool")]
    exemplars: Option<PathBuf>,
    /// Held-out labeled examples for balanced accuracy.
    #[arg(long, requires = "pool")]
    test: Option<PathBuf>,
    /// Without --data or --pool, a synthetic dataset with these parameters
    /// (and --seed) is generated in memory.
    #[command(flatten)]
    synth: SynthParams,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// One of: random, entropy, least_confidence, egal_iw, egal_eps, egal_hybrid, guided_oracle.
    #[arg(long, default_value = "egal_hybrid")]
    strategy: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    engine: EngineArgs,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Comma-separated strategy names.
    #[arg(long, value_delimiter = ',', default_value = "random,entropy,egal_hybrid")]
    strategies: Vec<String>,
    /// Number of seeds; runs use seeds FIRST_SEED..FIRST_SEED+N.
    #[arg(long, default_value_t = 30)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    /// Dataset prefix; repeat for several datasets. Without it a synthetic
    /// dataset is generated from the synth flags and --data-seed.
    #[arg(long = "data")]
    datasets: Vec<PathBuf>,
    /// Seed of the generated synthetic dataset.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    #[command(flatten)]
    synth: SynthParams,
    #[command(flatten)]
    engine: EngineArgs,
    /// Results CSV.
    #[arg(long)]
    out: PathBuf,
    /// Also write per-(strategy, dataset, spent) means with 95% intervals.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    parallel: usize,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    exemplars: PathBuf,
    /// Dataset name clients refer to [default: pool file stem].
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Persist sessions here and restore them at startup.
    #[arg(long)]
    snapshot_dir: Option<PathBuf>,
}

fn prefixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn stem(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    name.split('.').next().unwrap_or(&name).to_string()
}

fn check_writable(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        bail!("{} already exists (use --force to overwrite)", path.display());
    }
    Ok(())
}

fn load_prefix(prefix: &Path) -> Result<EvalDataset> {
    load_files(
        stem(prefix),
        &prefixed(prefix, ".pool.jsonl"),
        &prefixed(prefix, ".exemplars.jsonl"),
        &prefixed(prefix, ".test.jsonl"),
    )
}

fn load_files(name: String, pool: &Path, exemplars: &Path, test: &Path) -> Result<EvalDataset> {
    let pool = dataset::load_dataset(pool, exemplars)
        .with_context(|| format!("loading {} with {}", pool.display(), exemplars.display()))?;
    let test = dataset::load_records(test).with_context(|| format!("loading {}", test.display()))?;
    Ok(EvalDataset {
        name,
        pool: Arc::new(pool),
        test,
    })
}

fn synthesize(params: &SynthParams, seed: u64) -> Result<(SkewedSynthSpec, Dataset, Vec<ExampleRecord>)> {
    let spec = params.spec(seed)?;
    let (pool, test) = dataset::skewed_synthetic(&spec)?;
    Ok((spec, pool, test))
}

fn cmd_synth(args: SynthArgs) -> Result<ExitCode> {
    let pool_path = prefixed(&args.out, ".pool.jsonl");
    let ex_path = prefixed(&args.out, ".exemplars.jsonl");
    let test_path = prefixed(&args.out, ".test.jsonl");
    for p in [&pool_path, &ex_path, &test_path] {
        check_writable(p, args.force)?;
    }
    let (spec, pool, test) = synthesize(&args.params, args.seed)?;
    let header = args.params.header(args.seed, spec.common_total);
    dataset::write_records(&pool_path, Some(&header), &pool.examples)?;
    dataset::write_exemplars(&ex_path, Some(&header), &pool.exemplars)?;
    dataset::write_records(&test_path, Some(&header), &test)?;
    log::info!(
        "wrote {} pool, {} test examples, {} exemplars",
        pool.len(),
        test.len(),
        pool.exemplars.len()
    );
    for p in [&pool_path, &ex_path, &test_path] {
        println!("{}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn strategy(name: &str) -> Result<StrategySpec> {
    Ok(name.parse()?)
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let spec = strategy(&args.strategy)?;
    let data = match (&args.data.data, &args.data.pool) {
        (Some(prefix), _) => load_prefix(prefix)?,
        (None, Some(pool)) => load_files(
            stem(pool),
            pool,
            args.data.exemplars.as_deref().expect("clap requires --exemplars"),
            args.data.test.as_deref().expect("clap requires --test"),
        )?,
        (None, None) => {
            let (_, pool, test) = synthesize(&args.data.synth, args.seed)?;
            EvalDataset {
                name: "synth".into(),
                pool: Arc::new(pool),
                test,
            }
        }
    };
    let base = args.engine.config();
    let run = eval::run_strategy(spec, data.pool.clone(), &data.test, &base, args.seed)?;
    let stdout = io::stdout();
    eval::write_results_csv(stdout.lock(), &eval::result_rows(&data.name, &run))?;
    match run.termination {
        Some(Termination::BudgetExhausted | Termination::AllClassesRuledOut) => Ok(ExitCode::SUCCESS),
        other => {
            eprintln!("egal: run ended early: {other:?}");
            Ok(ExitCode::from(2))
        }
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode> {
    let specs = args
        .strategies
        .iter()
        .map(|s| strategy(s))
        .collect::<Result<Vec<_>>>()?;
    if specs.is_empty() {
        bail!("--strategies is empty");
    }
    if args.seeds == 0 {
        bail!("--seeds must be positive");
    }
    check_writable(&args.out, args.force)?;
    if let Some(s) = &args.summary {
        check_writable(s, args.force)?;
    }
    let datasets = if args.datasets.is_empty() {
        let (_, pool, test) = synthesize(&args.synth, args.data_seed)?;
        vec![EvalDataset {
            name: "synth".into(),
            pool: Arc::new(pool),
            test,
        }]
    } else {
        args.datasets
            .iter()
            .map(|p| load_prefix(p))
            .collect::<Result<Vec<_>>>()?
    };
    let seeds: Vec<u64> = (args.first_seed..args.first_seed + args.seeds).collect();
    let started = Instant::now();
    let out = eval::run_sweep(&specs, &datasets, &seeds, &args.engine.config(), args.parallel)?;
    log::info!(
        "{} runs in {:.1}s",
        out.runs.len(),
        started.elapsed().as_secs_f64()
    );
    let file = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    eval::write_results_csv(BufWriter::new(file), &out.rows)?;
    if let Some(path) = &args.summary {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        eval::write_summary_csv(BufWriter::new(file), &eval::summarize(&out.rows))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_serve(args: ServeArgs) -> Result<ExitCode> {
    let dataset = dataset::load_dataset(&args.pool, &args.exemplars)
        .with_context(|| format!("loading {}", args.pool.display()))?;
    let name = args.name.unwrap_or_else(|| stem(&args.pool));
    let datasets = HashMap::from([(name.clone(), Arc::new(dataset))]);
    let state = Arc::new(AppState::new(datasets, args.snapshot_dir)?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        let local = listener.local_addr()?;
        println!("listening on http://{local} (dataset `{name}`)");
        io::stdout().flush()?;
        egal_service::serve(listener, state).await?;
        Ok(ExitCode::SUCCESS)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EGAL_LOG", "warn")).init();
    let args = match config_file::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("egal: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Serve(a) => cmd_serve(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("egal: {e:#}");
        ExitCode::FAILURE
    })
}
