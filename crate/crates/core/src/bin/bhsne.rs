use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bhsne::bench::{self, BenchSink};
use bhsne::io::{self, Format};
use bhsne::metrics::EvalReport;
use bhsne::pipeline::embed_with_observer;
use bhsne::{Algorithm, Condition, DataMatrix, Error, LabelVector, RunConfig};

/// Above this many points the exact algorithm needs --force.
const EXACT_GUARD: usize = 20_000;

#[derive(Parser)]
#[command(name = "bhsne", version, about = "Barnes-Hut t-SNE embeddings and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed a data set and write the coordinates as CSV.
    Embed(EmbedArgs),
    /// Sweep theta for Barnes-Hut (plus an exact baseline on small inputs).
    BenchTheta(BenchArgs),
    /// Sweep rho for the dual-tree algorithm (plus an exact baseline on small inputs).
    BenchDual(BenchArgs),
    /// Sweep the number of points for Barnes-Hut and exact.
    BenchSize(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Bin,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Exact,
    Bh,
    Dual,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConditionArg {
    Standard,
    PaperLiteral,
}

#[derive(Args)]
struct InputArgs {
    /// Data matrix (CSV or binary).
    #[arg(long)]
    input: PathBuf,
    /// Input format; defaults to bin for *.bin files and csv otherwise.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// File with one integer class label per line.
    #[arg(long, conflicts_with = "label_column")]
    labels: Option<PathBuf>,
    /// The last CSV column holds integer class labels.
    #[arg(long)]
    label_column: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 30.0)]
    perplexity: f64,
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    #[arg(long, default_value_t = 0.25)]
    rho: f64,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    /// Early exaggeration factor.
    #[arg(long, default_value_t = 12.0)]
    alpha: f64,
    #[arg(long, default_value_t = 250)]
    exaggeration_iters: usize,
    #[arg(long, default_value_t = 250)]
    momentum_switch: usize,
    /// Learning rate.
    #[arg(long, default_value_t = 200.0)]
    eta: f64,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(2..=3))]
    dims: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "bh")]
    algorithm: AlgorithmArg,
    #[arg(long, value_enum, default_value = "standard")]
    condition: ConditionArg,
    /// PCA target dimensionality; 0 disables PCA.
    #[arg(long, default_value_t = 50)]
    pca: usize,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Allow the exact algorithm on more than 20000 points.
    #[arg(long)]
    force: bool,
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            perplexity: self.perplexity,
            theta: self.theta,
            rho: self.rho,
            iterations: self.iters,
            exaggeration: self.alpha,
            exaggeration_iters: self.exaggeration_iters,
            momentum_switch_iter: self.momentum_switch,
            learning_rate: self.eta,
            output_dims: self.dims as usize,
            seed: self.seed,
            algorithm: match self.algorithm {
                AlgorithmArg::Exact => Algorithm::Exact,
                AlgorithmArg::Bh => Algorithm::BarnesHut,
                AlgorithmArg::Dual => Algorithm::DualTree,
            },
            condition: match self.condition {
                ConditionArg::Standard => Condition::Standard,
                ConditionArg::PaperLiteral => Condition::PaperLiteral,
            },
            pca_target: self.pca,
            ..RunConfig::default()
        }
    }
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Output CSV, one row per point: coordinates then the label if known.
    #[arg(long)]
    out: PathBuf,
    /// Print cost and elapsed time every 50 iterations to stderr.
    #[arg(long)]
    progress: bool,
    /// Print the peak resident set size to stderr on exit (Linux).
    #[arg(long)]
    peak_memory: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Benchmark CSV to append to (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated parameter values (theta, rho, or sizes).
    #[arg(long, value_delimiter = ',')]
    bench_grid: Option<Vec<String>>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Skip runs already recorded in --out.
    #[arg(long, requires = "out")]
    resume: bool,
    /// Largest size at which the exact algorithm is included.
    #[arg(long, default_value_t = bench::DEFAULT_EXACT_CAP)]
    exact_cap: usize,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn load(input: &InputArgs) -> Result<(DataMatrix, Option<LabelVector>), Error> {
    let format = input.format.map(|f| match f {
        FormatArg::Csv => Format::Csv,
        FormatArg::Bin => Format::Binary,
    });
    if input.label_column && matches!(format.unwrap_or_else(|| Format::from_path(&input.input)), Format::Binary) {
        return Err(usage("--label-column applies to CSV input only"));
    }
    let (data, mut labels) = io::load_matrix(&input.input, format, input.label_column)?;
    if let Some(path) = &input.labels {
        let l = io::load_labels(path)?;
        l.check_len(data.n())?;
        labels = Some(l);
    }
    Ok((data, labels))
}

fn setup_threads(threads: Option<usize>) -> Result<(), Error> {
    if let Some(t) = threads {
        if t == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| usage(format!("cannot configure thread pool: {e}")))?;
    }
    Ok(())
}

fn guard_exact(n: usize, run: &RunArgs) -> Result<(), Error> {
    if n > EXACT_GUARD && !run.force {
        return Err(usage(format!(
            "the exact algorithm on {n} points is O(N^2); pass --force to run it anyway (limit {EXACT_GUARD})"
        )));
    }
    Ok(())
}

fn cmd_embed(args: &EmbedArgs) -> Result<(), Error> {
    setup_threads(args.run.threads)?;
    let config = args.run.config();
    config.validate()?;
    let (data, labels) = load(&args.input)?;
    if config.algorithm == Algorithm::Exact {
        guard_exact(data.n(), &args.run)?;
    }
    let progress = args.progress;
    let out = embed_with_observer(&data, labels.as_ref(), &config, |rec| {
        if progress {
            eprintln!(
                "iteration {}: cost {:.6}, {:.2} s",
                rec.iteration + 1,
                rec.cost.unwrap_or(f64::NAN),
                rec.elapsed_seconds
            );
        }
    })?;
    io::write_embedding(&args.out, &out.result.embedding, labels.as_ref())?;
    if labels.is_some() {
        println!("{}", EvalReport::CSV_HEADER);
        println!("{}", out.report.csv_row());
    }
    if args.peak_memory {
        match peak_rss_bytes() {
            Some(b) => eprintln!("peak_rss_bytes={b}"),
            None => eprintln!("peak_rss_bytes=unavailable"),
        }
    }
    Ok(())
}

/// High-water resident set size of this process image. Unlike
/// `getrusage`, this is not inherited from the parent across exec.
fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn parse_grid<T: std::str::FromStr>(grid: &Option<Vec<String>>) -> Result<Option<Vec<T>>, Error> {
    grid.as_ref()
        .map(|g| {
            g.iter()
                .map(|s| s.trim().parse::<T>().map_err(|_| usage(format!("bad --bench-grid value {s:?}"))))
                .collect()
        })
        .transpose()
}

fn cmd_bench(args: &BenchArgs, kind: &str) -> Result<(), Error> {
    setup_threads(args.run.threads)?;
    let base = args.run.config();
    base.validate()?;
    if args.repeats == 0 {
        return Err(usage("--repeats must be at least 1"));
    }
    if args.exact_cap > EXACT_GUARD && !args.run.force {
        return Err(usage(format!("--exact-cap above {EXACT_GUARD} requires --force")));
    }
    let (data, labels) = load(&args.input)?;
    let mut sink = match &args.out {
        Some(p) => BenchSink::file(p, args.resume)?,
        None => BenchSink::stdout(),
    };
    let labels = labels.as_ref();
    match kind {
        "theta" => {
            let grid = parse_grid::<f64>(&args.bench_grid)?.unwrap_or_else(|| bench::DEFAULT_THETA_GRID.to_vec());
            bench::bench_tradeoff(&data, labels, &base, Algorithm::BarnesHut, &grid, args.exact_cap, args.repeats, &mut sink)?;
        }
        "dual" => {
            let grid = parse_grid::<f64>(&args.bench_grid)?.unwrap_or_else(|| bench::DEFAULT_RHO_GRID.to_vec());
            bench::bench_tradeoff(&data, labels, &base, Algorithm::DualTree, &grid, args.exact_cap, args.repeats, &mut sink)?;
        }
        _ => {
            let grid = parse_grid::<usize>(&args.bench_grid)?.unwrap_or_else(|| bench::DEFAULT_SIZE_GRID.to_vec());
            if grid.iter().any(|&n| n < 2) {
                return Err(usage("sizes must be at least 2"));
            }
            bench::bench_size(&data, labels, &base, &grid, args.exact_cap, args.repeats, &mut sink)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Embed(a) => cmd_embed(a),
        Command::BenchTheta(a) => cmd_bench(a, "theta"),
        Command::BenchDual(a) => cmd_bench(a, "dual"),
        Command::BenchSize(a) => cmd_bench(a, "size"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
