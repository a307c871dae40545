use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use partran::adapter::{check_adapter, Role, DEFAULT_TIMEOUT};
use partran::metric::Norm;
use partran::optimizer::bench::{compare_samplers, Benchmark};
use partran::optimizer::{SamplerKind, StudyConfig};
use partran::params::Assignment;
use partran::service::{serve, ServiceState};
use partran::session::{
    apply_result, parse_override, transcribe_with, EngineSpec, InputSpec, Metric, MetricSpec, SessionError,
    SessionSpec, TranscriptionResult,
};
use partran::transforms::{load_image, save_image};

#[derive(Parser)]
#[command(name = "partran", version, about = "Transcribe a reference image's style into editable photo-chain parameters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search the parameter space for the output closest in style to a reference
    Transcribe(TranscribeArgs),
    /// Re-render a result with edited parameters
    Apply(ApplyArgs),
    /// Serve the exploration API on loopback
    Serve(ServeArgs),
    /// Print the style descriptor of an image
    Encode(EncodeArgs),
    /// Compare TPE against random search on the benchmark suite
    Bench(BenchArgs),
    /// Run protocol conformance checks against an adapter
    AdapterCheck(AdapterCheckArgs),
}

#[derive(Args)]
struct SessionArgs {
    /// Input image
    #[arg(long, conflicts_with = "candidates", required_unless_present = "candidates")]
    original: Option<PathBuf>,
    /// Comma-separated candidate inputs; the search also picks among them
    #[arg(long, value_delimiter = ',')]
    candidates: Option<Vec<PathBuf>>,
    #[arg(long)]
    reference: PathBuf,
    /// `builtin` or an adapter command line
    #[arg(long, default_value = "builtin")]
    engine: String,
    /// `builtin`, `encoder:CMD` or `scorer:CMD`
    #[arg(long, default_value = "builtin")]
    metric: String,
    #[arg(long, default_value = "l1")]
    norm: Norm,
    /// Comma-separated descriptor weights
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// Adapter reply timeout in seconds
    #[arg(long)]
    timeout: Option<f64>,
}

#[derive(Args)]
struct TranscribeArgs {
    #[command(flatten)]
    session: SessionArgs,
    /// Total trials, the identity trial included
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "tpe")]
    sampler: SamplerKind,
    #[arg(long)]
    out: PathBuf,
    /// Suppress progress lines
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct ApplyArgs {
    /// result.json or its directory
    #[arg(long)]
    result: PathBuf,
    /// name=value, repeatable
    #[arg(long = "set")]
    set: Vec<String>,
    /// Parameter to reset to its identity, repeatable
    #[arg(long = "disable")]
    disable: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    /// A finished session directory
    #[arg(long, conflicts_with_all = ["original", "candidates"])]
    result: Option<PathBuf>,
    #[arg(long, requires = "reference")]
    original: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', requires = "reference")]
    candidates: Option<Vec<PathBuf>>,
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, default_value = "builtin")]
    engine: String,
    #[arg(long, default_value = "builtin")]
    metric: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8750)]
    port: u16,
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    host: IpAddr,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    image: PathBuf,
    /// `builtin` or `encoder:CMD`
    #[arg(long, default_value = "builtin")]
    metric: String,
    #[arg(long)]
    timeout: Option<f64>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "default")]
    suite: String,
    #[arg(long, default_value_t = 200)]
    budget: usize,
    #[arg(long, default_value_t = 20)]
    seeds: u64,
}

#[derive(Args)]
struct AdapterCheckArgs {
    /// Adapter command line
    #[arg(long)]
    cmd: String,
    /// Expected role: transform, encoder or scorer
    #[arg(long)]
    role: Option<Role>,
    #[arg(long)]
    timeout: Option<f64>,
}

fn timeout(secs: Option<f64>) -> Result<Duration, SessionError> {
    match secs {
        None => Ok(DEFAULT_TIMEOUT),
        Some(s) => Duration::try_from_secs_f64(s)
            .ok()
            .filter(|d| !d.is_zero())
            .ok_or_else(|| SessionError::Usage(format!("invalid timeout {s}"))),
    }
}

fn input_spec(original: Option<PathBuf>, candidates: Option<Vec<PathBuf>>) -> Result<InputSpec, SessionError> {
    match (original, candidates) {
        (Some(p), None) => Ok(InputSpec::Single(p)),
        (None, Some(c)) => Ok(InputSpec::Candidates(c)),
        _ => Err(SessionError::Usage("give exactly one of --original and --candidates".into())),
    }
}

fn session_spec(a: SessionArgs, study: StudyConfig, out: PathBuf) -> Result<SessionSpec, SessionError> {
    let t = timeout(a.timeout)?;
    Ok(SessionSpec {
        input: input_spec(a.original, a.candidates)?,
        reference: a.reference,
        engine: EngineSpec::parse(&a.engine)?.with_timeout(t),
        metric: MetricSpec::parse(&a.metric)?.with_timeout(t),
        norm: a.norm,
        weights: a.weights,
        study,
        out_dir: out,
    })
}

fn run_transcribe(a: TranscribeArgs) -> Result<(), SessionError> {
    let study = StudyConfig {
        seed: a.seed,
        budget: a.iters,
        sampler: a.sampler,
        ..StudyConfig::default()
    };
    let spec = session_spec(a.session, study, a.out)?;
    let quiet = a.quiet;
    let step = (spec.study.budget / 20).max(1);
    let result = transcribe_with(&spec, |record, p| {
        if !quiet && (p.trials_done % step == 0 || p.trials_done == p.budget) {
            let best = p.best_objective.map_or("-".into(), |v| format!("{v:.6}"));
            let failed = if record.is_complete() { "" } else { " (failed)" };
            eprintln!("trial {}/{}  best {best}{failed}", p.trials_done, p.budget);
        }
    })?;
    report(&result, &spec.out_dir);
    Ok(())
}

fn report(result: &TranscriptionResult, dir: &std::path::Path) {
    println!("best objective  {}", result.best_objective);
    if let Some(v) = result.identity_objective {
        println!("identity        {v}");
    }
    println!("best trial      {}", result.best_trial);
    println!(
        "trials          {} completed, {} failed",
        result.trials_completed, result.trials_failed
    );
    if let Some(c) = &result.selected_candidate {
        println!("candidate       {} ({})", c.label, c.index);
    }
    println!("assignment      {}", result.best_assignment.to_json());
    println!("written to      {}", dir.display());
}

fn run_apply(a: ApplyArgs) -> Result<(), SessionError> {
    let (result, _) = TranscriptionResult::load(&a.result)?;
    let mut overrides = Assignment::default();
    for s in &a.set {
        let (name, value) = parse_override(&result.space, s)?;
        overrides.set(name, value);
    }
    let img = apply_result(&result, &overrides, &a.disable)?;
    save_image(&img, &a.out)?;
    Ok(())
}

fn run_serve(a: ServeArgs) -> Result<(), SessionError> {
    let state = match a.result {
        Some(dir) => ServiceState::from_result_dir(&dir)?,
        None => {
            let reference = a
                .reference
                .ok_or_else(|| SessionError::Usage("give --result, or --original/--candidates with --reference".into()))?;
            let mut spec = SessionSpec::builtin(input_spec(a.original, a.candidates)?, reference, PathBuf::new());
            spec.engine = EngineSpec::parse(&a.engine)?;
            spec.metric = MetricSpec::parse(&a.metric)?;
            spec.study.seed = a.seed;
            ServiceState::from_spec(spec)?
        }
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| SessionError::Io {
        path: "runtime".into(),
        message: e.to_string(),
    })?;
    let addr = SocketAddr::new(a.host, a.port);
    rt.block_on(serve(state, addr)).map_err(|e| SessionError::Io {
        path: addr.to_string(),
        message: e.to_string(),
    })
}

fn run_encode(a: EncodeArgs) -> Result<(), SessionError> {
    let spec = MetricSpec::parse(&a.metric)?.with_timeout(timeout(a.timeout)?);
    if matches!(spec, MetricSpec::Scorer(_)) {
        return Err(SessionError::Usage("a scorer has no descriptor; use builtin or encoder:CMD".into()));
    }
    let img = load_image(&a.image)?;
    let mut metric = Metric::open(&spec, Norm::L1, None)?;
    let d = metric.descriptor(&img)?.expect("encoder metrics produce descriptors");
    println!(
        "{}",
        serde_json::json!({ "metric_id": d.metric_id, "values": d.values })
    );
    Ok(())
}

fn run_bench(a: BenchArgs) -> Result<(), SessionError> {
    if a.suite != "default" {
        return Err(SessionError::Usage(format!("unknown suite '{}' (only 'default')", a.suite)));
    }
    if a.seeds == 0 {
        return Err(SessionError::Usage("--seeds must be at least 1".into()));
    }
    println!("budget {}, seeds {}, median best objective minus global minimum", a.budget, a.seeds);
    println!("{:<26} {:>12} {:>12}  winner", "benchmark", "tpe", "random");
    for bench in Benchmark::suite() {
        let row = compare_samplers(&bench, a.budget, a.seeds)?;
        println!(
            "{:<26} {:>12.4e} {:>12.4e}  {}",
            row.id.name(),
            row.tpe_median - bench.global_min,
            row.random_median - bench.global_min,
            if row.tpe_wins() { "tpe" } else { "random" }
        );
    }
    Ok(())
}

fn run_adapter_check(a: AdapterCheckArgs) -> Result<bool, SessionError> {
    let outcomes = check_adapter(&a.cmd, a.role, timeout(a.timeout)?);
    for o in &outcomes {
        println!("{o}");
    }
    let passed = outcomes.iter().all(|o| o.passed);
    println!("{}", if passed { "all checks passed" } else { "some checks failed" });
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Transcribe(a) => run_transcribe(a).map(|_| true),
        Command::Apply(a) => run_apply(a).map(|_| true),
        Command::Serve(a) => run_serve(a).map(|_| true),
        Command::Encode(a) => run_encode(a).map(|_| true),
        Command::Bench(a) => run_bench(a).map(|_| true),
        Command::AdapterCheck(a) => run_adapter_check(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", e.category());
            ExitCode::from(e.exit_code())
        }
    }
}
