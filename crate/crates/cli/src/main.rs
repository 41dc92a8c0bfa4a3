mod config;
mod inputs;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use latentforge::directions::{LabeledCorpus, ToyCorpus};
use latentforge::manifest::MANIFEST_FILE;
use latentforge::metrics::{build_protocol_scores, cohort_scores, toy_reference_cohort, uniqueness_experiment, UniquenessOptions};
use latentforge::oracle::{serve, ORACLE_ENV};
use latentforge::report::{benchmark, to_json, BenchmarkReport, ComparisonTable, ScalingReport, UniquenessReport};
use latentforge::scaling::measure_scaling;
use latentforge::{
    discover_all_directions, generate_dataset, DatasetManifest, DirectionBank, DiscoveryOptions, OracleEndpoint, OracleSpec, PairSet,
    Protocol, ToyWorld,
};
use serde_json::json;

use crate::config::PipelineConfig;
use crate::inputs::{load_embeddings, DirCorpus};

const BANK_FILE: &str = "bank.json";
const BENCHMARK_FILE: &str = "benchmark.json";
const UNIQUENESS_FILE: &str = "uniqueness.json";
const SCALING_FILE: &str = "scaling.json";
const TABLE_FILE: &str = "table.json";
const TABLE_MD_FILE: &str = "table.md";

#[derive(Parser, Debug)]
#[command(name = "latentforge", version, about = "Synthetic identity datasets by latent-space editing, and benchmarks over them")]
struct Cli {
    /// Seed for identity sampling, subsampling and reference cohorts.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `toy` or `exec:<command>`.
    #[arg(long, global = true, env = ORACLE_ENV, default_value = "toy")]
    oracle: OracleSpec,
    /// Per-request oracle timeout in seconds.
    #[arg(long, global = true, default_value_t = 60.0)]
    timeout: f64,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print errors as JSON on stderr.
    #[arg(long, global = true)]
    json_errors: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit semantic directions from a labelled corpus.
    Discover(DiscoverArgs),
    /// Generate reference identities and their variations.
    Generate(GenerateArgs),
    /// FNMR at a fixed FMR per protocol for one manifest.
    Benchmark(BenchmarkArgs),
    /// Ref / Sy-Se / Sy-Sy ROC comparison.
    Uniqueness(UniquenessArgs),
    /// Attempts needed per identity count at several ICT values.
    Scaling(ScalingArgs),
    /// Merge benchmark reports into one FNMR table.
    Report(ReportArgs),
    /// Serve the toy world over the oracle protocol on stdin/stdout.
    #[command(hide = true)]
    Serve,
}

#[derive(Args, Debug)]
struct DiscoverArgs {
    /// Directory of `<attribute>.{a,b}.lvec` observables; defaults to a toy corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    per_class: Option<usize>,
    /// Fit every expression pair instead of neutral-to-expression only.
    #[arg(long)]
    all_pairs: bool,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    n_identities: Option<usize>,
    #[arg(long)]
    ict: Option<f64>,
    #[arg(long)]
    n_var: Option<usize>,
    #[arg(long)]
    max_attempts: Option<usize>,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    /// Manifest file or directory.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    fmr: f64,
    /// Row label in comparison tables.
    #[arg(long, default_value = "toy")]
    system: String,
    #[arg(long, default_value = "synthetic")]
    dataset: String,
    /// Benchmark report on real data to compute MGS and SEP against.
    #[arg(long)]
    real: Option<PathBuf>,
    /// Also write `scores_<protocol>.csv`.
    #[arg(long)]
    scores_csv: bool,
}

#[derive(Args, Debug)]
struct UniquenessArgs {
    /// Synthetic identities: manifest (references are used) or `.lvec` file.
    #[arg(long)]
    sy: PathBuf,
    /// Enrolled identities: manifest (references are used) or `.lvec` file.
    #[arg(long)]
    se: PathBuf,
    /// Labelled reference population (manifest); defaults to a toy cohort.
    #[arg(long)]
    r#ref: Option<PathBuf>,
    #[arg(long, conflicts_with = "exhaustive")]
    pair_cap: Option<usize>,
    /// Score every pair regardless of count.
    #[arg(long)]
    exhaustive: bool,
}

#[derive(Args, Debug)]
struct ScalingArgs {
    #[arg(long)]
    bank: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3")]
    ict: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "10,20,30")]
    checkpoints: Vec<usize>,
    #[arg(long)]
    max_attempts: Option<usize>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Benchmark report files.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(path)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

struct Ctx {
    config: PipelineConfig,
    oracle: OracleSpec,
    timeout: Duration,
    out: PathBuf,
}

impl Ctx {
    fn connect(&self) -> Result<OracleEndpoint> {
        Ok(OracleEndpoint::connect(&self.oracle, &self.config.toy, self.timeout)?)
    }
}

fn discover(ctx: &Ctx, args: DiscoverArgs) -> Result<()> {
    let mut oracle = ctx.connect()?;
    let mut settings = ctx.config.discovery.clone();
    if let Some(n) = args.per_class {
        settings.per_class = n;
    }
    if args.all_pairs {
        settings.pairs = PairSet::All;
    }
    let options = DiscoveryOptions { pairs: settings.pairs, ..Default::default() };
    let world;
    let corpus: Box<dyn LabeledCorpus> = match args.corpus {
        Some(dir) => Box::new(DirCorpus { dir }),
        None => {
            world = ToyWorld::new(ctx.config.toy.clone())?;
            Box::new(ToyCorpus { world: &world, per_class: settings.per_class })
        }
    };
    let bank = discover_all_directions(&mut oracle, corpus.as_ref(), &options)?;
    let path = ctx.out.join(BANK_FILE);
    fs::create_dir_all(&ctx.out)?;
    bank.save(&path)?;
    println!("{} directions -> {}", bank.len(), path.display());
    Ok(())
}

fn generate(ctx: &Ctx, args: GenerateArgs) -> Result<()> {
    let bank = DirectionBank::load(&args.bank)?;
    let mut config = ctx.config.generation.clone();
    config.n_identities = args.n_identities.unwrap_or(config.n_identities);
    config.ict = args.ict.unwrap_or(config.ict);
    config.n_var = args.n_var.unwrap_or(config.n_var);
    config.max_attempts_per_identity = args.max_attempts.unwrap_or(config.max_attempts_per_identity);
    let mut oracle = ctx.connect()?;
    match generate_dataset(&config, &bank, &mut oracle) {
        Ok(manifest) => {
            manifest.write(&ctx.out)?;
            println!(
                "{} identities, {} samples -> {}",
                manifest.header.identities.len(),
                manifest.records.len(),
                ctx.out.join(MANIFEST_FILE).display()
            );
            Ok(())
        }
        Err(failure) => {
            if let Some(partial) = &failure.partial {
                partial.write(&ctx.out)?;
                eprintln!("partial manifest with {} identities written to {}", partial.header.identities.len(), ctx.out.display());
            }
            Err(failure.error.into())
        }
    }
}

fn run_benchmark(ctx: &Ctx, args: BenchmarkArgs) -> Result<()> {
    let manifest = DatasetManifest::read(&args.manifest)?;
    let mut report = benchmark(&manifest, &args.system, &args.dataset, &Protocol::ALL, args.fmr)?;
    if let Some(real) = &args.real {
        let real: BenchmarkReport = read_json(real)?;
        report.compare_with(&real)?;
    }
    if args.scores_csv {
        for p in Protocol::ALL {
            write_file(&ctx.out, &format!("scores_{p}.csv"), &build_protocol_scores(&manifest, p)?.to_csv())?;
        }
    }
    let path = write_file(&ctx.out, BENCHMARK_FILE, &to_json(&report))?;
    for p in &report.protocols {
        println!("{}: FNMR {:.4} at FMR {:e}", p.protocol, p.result.fnmr, p.result.fmr_target);
    }
    println!("-> {}", path.display());
    Ok(())
}

fn uniqueness(ctx: &Ctx, seed: u64, args: UniquenessArgs) -> Result<()> {
    let sy: Vec<_> = load_embeddings(&args.sy, true)?.into_iter().map(|(_, e)| e).collect();
    let se: Vec<_> = load_embeddings(&args.se, true)?.into_iter().map(|(_, e)| e).collect();
    let cohort = match &args.r#ref {
        Some(path) => load_embeddings(path, false)?,
        None => {
            let s = &ctx.config.uniqueness;
            toy_reference_cohort(&ctx.config.toy, s.ref_identities, s.ref_samples_per_identity, seed)?
        }
    };
    let ref_scores = cohort_scores(&cohort)?;
    let pair_cap = if args.exhaustive { None } else { args.pair_cap.or(ctx.config.uniqueness.pair_cap) };
    let options = UniquenessOptions { pair_cap, seed };
    let result = uniqueness_experiment(&sy, &se, &ref_scores, &options)?;
    let report = UniquenessReport::new(result, options, sy.len(), se.len());
    let path = write_file(&ctx.out, UNIQUENESS_FILE, &to_json(&report))?;
    for row in &report.tpr_at_fmr {
        println!("FMR {:e}: TMR ref {:.4}  sy-se {:.4}  sy-sy {:.4}", row.fmr, row.reference, row.sy_se, row.sy_sy);
    }
    println!("-> {}", path.display());
    Ok(())
}

fn scaling(ctx: &Ctx, args: ScalingArgs) -> Result<()> {
    let bank = DirectionBank::load(&args.bank)?;
    let mut base = ctx.config.generation.clone();
    base.max_attempts_per_identity = args.max_attempts.unwrap_or(base.max_attempts_per_identity);
    let mut oracle = ctx.connect()?;
    let series = measure_scaling(&base, &args.ict, &args.checkpoints, &mut oracle, &bank)?;
    let report = ScalingReport::new(base.seed, args.checkpoints, series);
    let path = write_file(&ctx.out, SCALING_FILE, &to_json(&report))?;
    for s in &report.series {
        let attempts: Vec<String> = s.samples.iter().map(|x| format!("{}:{}", x.identities, x.cumulative_attempts)).collect();
        println!("ict {}: {}{}", s.ict, attempts.join(" "), if s.truncated { " (truncated)" } else { "" });
    }
    println!("-> {}", path.display());
    Ok(())
}

fn report(ctx: &Ctx, args: ReportArgs) -> Result<()> {
    let reports = args.reports.iter().map(|p| read_json::<BenchmarkReport>(p)).collect::<Result<Vec<_>>>()?;
    let table = ComparisonTable::merge(&reports)?;
    write_file(&ctx.out, TABLE_FILE, &to_json(&table))?;
    let md = table.to_markdown();
    write_file(&ctx.out, TABLE_MD_FILE, &md)?;
    print!("{md}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut config = PipelineConfig::load(cli.config.as_deref()).map_err(Failure)?;
    if let Some(seed) = cli.seed {
        config.generation.seed = seed;
    }
    if !(cli.timeout > 0.0 && cli.timeout.is_finite()) {
        return Err(Failure(format!("timeout must be positive, got {}", cli.timeout)));
    }
    let seed = config.generation.seed;
    let ctx = Ctx { config, oracle: cli.oracle, timeout: Duration::from_secs_f64(cli.timeout), out: cli.out };
    match cli.command {
        Command::Discover(a) => discover(&ctx, a),
        Command::Generate(a) => generate(&ctx, a),
        Command::Benchmark(a) => run_benchmark(&ctx, a),
        Command::Uniqueness(a) => uniqueness(&ctx, seed, a),
        Command::Scaling(a) => scaling(&ctx, a),
        Command::Report(a) => report(&ctx, a),
        Command::Serve => {
            let mut world = ToyWorld::new(ctx.config.toy.clone())?;
            serve(&mut world, io::stdin().lock(), io::stdout().lock())?;
            Ok(())
        }
    }
}

fn report_error(json: bool, code: u8, kind: &str, message: &str) {
    let mut err = io::stderr().lock();
    if json {
        let _ = writeln!(err, "{}", json!({ "error": message, "kind": kind, "exit_code": code }));
    } else {
        let _ = writeln!(err, "error: {message}");
    }
}

fn main() -> ExitCode {
    let json_errors = std::env::args().any(|a| a == "--json-errors");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            if json_errors {
                report_error(true, 1, "usage", e.to_string().trim());
            } else {
                let _ = e.print();
            }
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(message)) => {
            report_error(json_errors, 2, "runtime", &message);
            ExitCode::from(2)
        }
    }
}
