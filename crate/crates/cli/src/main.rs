//! `l1css` command-line driver.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 solver
//! failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use l1css::baselines::make_synthetic_ground_truth;
use l1css::lemma_lab::*;
use l1css::*;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(
    name = "l1css",
    version,
    about = "Entrywise l1 low-rank approximation under heavy-tailed noise"
)]
struct Cli {
    /// Master seed; overrides the seed of a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (`bench`, `lemma`, `hardness`) or directory (`gen`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the comparison protocol and emit a JSON or CSV report.
    Bench(BenchArgs),
    /// Run one empirical lemma check.
    Lemma(LemmaArgs),
    /// Cauchy hardness experiment and its bounded-moment companion.
    Hardness(HardnessArgs),
    /// Write a synthetic input, its ground truth and its noise.
    Gen(GenArgs),
}

#[derive(Args, Debug)]
struct InstanceArgs {
    /// Synthetic rows.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Synthetic columns.
    #[arg(long, default_value_t = 200)]
    d: usize,
    /// `cauchy`, `stable:<alpha>`, `signed_power:<q>` or `bounded:<p>`.
    #[arg(long, default_value = "stable:1.1")]
    noise: NoiseFamily,
    #[arg(long, default_value_t = 1.0)]
    noise_scale: f64,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    /// Use the raw noise instead of multiplying by `‖A*‖₁ / (20·n·d)`.
    #[arg(long)]
    no_paper_scaling: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// JSON experiment config; other instance flags are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    instance: InstanceArgs,
    /// Read the base matrix from a file instead of generating it.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    input_format: MatrixFormat,
    #[arg(long)]
    drop_label_column: bool,
    /// Keep the file orientation (rows are then the selectable columns' entries).
    #[arg(long)]
    no_transpose: bool,
    #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<Algorithm>>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long, default_value = "json")]
    format: ReportFormat,
}

#[derive(Args, Debug)]
struct LemmaArgs {
    /// noise_lower_bound, averaging, heavy_columns, subset_mass,
    /// good_column_norm, cramer, good_tuple or cauchy_mass.
    lemma_id: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1.5)]
    p: f64,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Trials, columns or instances, depending on the lemma.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args, Debug)]
struct HardnessArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    rank: usize,
    #[arg(long, default_value_t = 6.0)]
    eta_exponent: f64,
    #[arg(long, default_value_t = 50)]
    subsets: usize,
    #[arg(long, default_value_t = 1.5)]
    companion_p: f64,
    #[arg(long, default_value_t = 1.0)]
    companion_eta_exponent: f64,
    #[arg(long, default_value_t = 0.25)]
    eps: f64,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, default_value_t = 10)]
    k: usize,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::InvalidInput(_) | Error::Capacity(_) => 1,
                Error::Parse { .. } | Error::Io(_) | Error::Json(_) => 2,
                Error::Solver(_) => 3,
            };
        }
        if cause.is::<std::io::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            bail!(Error::InvalidInput("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Bench(args) => bench(&cli, args),
        Command::Lemma(args) => lemma(&cli, args),
        Command::Hardness(args) => hardness(&cli, args),
        Command::Gen(args) => gen(&cli, args),
    }
}

fn noise_spec(args: &InstanceArgs) -> NoiseSpec {
    NoiseSpec::new(args.noise, args.noise_scale, args.noise_seed)
}

fn write_or_print(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text)
                .map_err(Error::Io)
                .with_context(|| format!("writing {}", path.display()))?;
            log::info!("wrote {}", path.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn bench_config(cli: &Cli, args: &BenchArgs) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::InvalidInput(format!("config {}: {e}", path.display())))?;
            serde_json::from_str::<ExperimentConfig>(&text)
                .map_err(|e| Error::InvalidInput(format!("config {}: {e}", path.display())))?
        }
        None => {
            let dataset = match &args.input {
                Some(path) => Dataset::File {
                    path: path.clone(),
                    format: args.input_format,
                    drop_label_column: args.drop_label_column,
                    transpose: !args.no_transpose,
                },
                None => Dataset::Synthetic {
                    n: args.instance.n,
                    d: args.instance.d,
                },
            };
            let mut c =
                ExperimentConfig::synthetic(0, 0, args.k.clone(), noise_spec(&args.instance), 0);
            c.dataset = dataset;
            c.paper_scaling = !args.instance.no_paper_scaling;
            c
        }
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(algorithms) = &args.algorithms {
        config.algorithms = algorithms.clone();
    }
    if let Some(repeats) = args.repeats {
        config.repeats = repeats;
    }
    if let Some(out) = &cli.out {
        config.output = Some(out.clone());
    }
    config.validate()?;
    Ok(config)
}

fn bench(cli: &Cli, args: &BenchArgs) -> anyhow::Result<()> {
    let config = bench_config(cli, args)?;
    let report = run_experiment(&config)?;
    for cell in report.cells.iter().filter(|c| !c.errors.is_empty()) {
        log::warn!(
            "{} at k={}: {} failed runs",
            cell.algorithm,
            cell.k,
            cell.errors.len()
        );
    }
    match &config.output {
        Some(path) => emit_report(&report, path, args.format)?,
        None => {
            let text = match args.format {
                ReportFormat::Json => serde_json::to_string_pretty(&report)?,
                ReportFormat::Csv => report_to_csv(&report)?,
            };
            print!("{text}");
            if args.format == ReportFormat::Json {
                println!();
            }
        }
    }
    Ok(())
}

fn lemma(cli: &Cli, args: &LemmaArgs) -> anyhow::Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let n = |default| args.n.unwrap_or(default);
    let trials = |default| args.trials.unwrap_or(default);
    let report = match args.lemma_id.as_str() {
        "noise_lower_bound" => check_noise_lower_bound(n(500), args.p, args.eps, trials(20), seed)?,
        "averaging" => check_averaging(n(1000), trials(256), args.p, seed)?,
        "heavy_columns" => count_heavy_columns(n(1000), args.p, seed)?,
        "subset_mass" => check_subset_mass(n(1000), args.p, args.eps, seed)?,
        "good_column_norm" => check_good_column_norm(n(2000), args.p, args.eps, trials(100), seed)?,
        "cramer" => cramer_trials(trials(100), seed)?,
        "good_tuple" => {
            let a_star = make_synthetic_ground_truth(20, n(120), 2, derive_seed(seed, 1))?;
            good_tuple_fraction(&a_star, 25, 4, trials(200), seed)?
        }
        "cauchy_mass" => check_cauchy_mass_upper(n(300), trials(20), seed)?,
        other => bail!(Error::InvalidInput(format!("unknown lemma id {other:?}"))),
    };
    write_or_print(cli.out.as_deref(), &serde_json::to_string_pretty(&report)?)
}

fn hardness(cli: &Cli, args: &HardnessArgs) -> anyhow::Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let hard = hardness_experiment(args.n, args.rank, args.eta_exponent, args.subsets, seed)?;
    let companion = hardness_companion(
        args.n,
        args.companion_p,
        args.companion_eta_exponent,
        args.eps,
        seed,
    )?;
    let report = json!({ "hardness": hard, "companion": companion });
    write_or_print(cli.out.as_deref(), &serde_json::to_string_pretty(&report)?)
}

fn gen(cli: &Cli, args: &GenArgs) -> anyhow::Result<()> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .map_err(Error::Io)
        .with_context(|| format!("creating {}", dir.display()))?;
    let mut config = ExperimentConfig::synthetic(
        args.instance.n,
        args.instance.d,
        vec![args.k],
        noise_spec(&args.instance),
        cli.seed.unwrap_or(0),
    );
    config.paper_scaling = !args.instance.no_paper_scaling;
    let inst = generate_instance(&config, args.k)?;
    for (name, m) in [
        ("A.txt", &inst.input),
        ("A_star.txt", &inst.ground_truth),
        ("delta.txt", &inst.noise),
    ] {
        write_matrix(dir.join(name), m)?;
    }
    log::info!("wrote A, A_star and delta to {}", dir.display());
    Ok(())
}
