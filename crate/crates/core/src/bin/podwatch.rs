use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;
use tracing::info;
use tracing_subscriber::EnvFilter;

use podwatch::history::{self, Bucketing, HistoryError, ReplayWindow};
use podwatch::ingest::{IngestError, TripleStore};
use podwatch::pipeline::{self, PipelineConfig, PipelineError, StageTimings};
use podwatch::podsim::{scenario, FaultScript, SimError, SimHost};
use podwatch::server::protocol::frame_message;

/// Budget for one full cycle at full pod scale.
const CYCLE_BUDGET_S: f64 = 11.9;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_)
            | CliError::Pipeline(PipelineError::Config(_) | PipelineError::ConfigSyntax(_)) => 2,
            _ => 1,
        }
    }
}

/// Pod and cluster monitoring: simulate, collect, serve, replay and report.
#[derive(Debug, Parser)]
#[command(name = "podwatch", version)]
struct Cli {
    /// Pipeline config file (`key = value` lines); defaults to $PODWATCH_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Config override, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Log filter, e.g. `info` or `podwatch=debug`.
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the pod simulator, serving Modbus and node telemetry.
    Simulate(SimulateArgs),
    /// Run the collection pipeline.
    Pipeline(PipelineArgs),
    /// Run the pipeline with the state server attached.
    Serve(ServeArgs),
    /// Print the stored frames around a moment as replay Frame messages.
    Replay(ReplayArgs),
    /// Usage, hot-spot and failure reports over the store.
    Report {
        #[command(subcommand)]
        kind: ReportKind,
    },
    /// Write the store as sorted TSV (`table row column value`).
    Dump(DumpArgs),
    /// Time full cycles against a local simulator.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct SourceArgs {
    /// Simulator settings file.
    #[arg(long)]
    sim: Option<PathBuf>,
    /// Canned scenario: default, water_event, mixed_faults, memory_leak, friday_week.
    #[arg(long)]
    scenario: Option<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Extra fault script, applied on top of the scenario's.
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:5020")]
    modbus: String,
    #[arg(long, default_value = "127.0.0.1:5021")]
    telemetry: String,
    /// Steps to run; unbounded when omitted.
    #[arg(long)]
    cycles: Option<u64>,
    /// Step back to back instead of once per period.
    #[arg(long)]
    fast: bool,
    /// Write the register map the simulator serves.
    #[arg(long, value_name = "FILE")]
    write_map: Option<PathBuf>,
    /// Write the matching baseline.
    #[arg(long, value_name = "FILE")]
    write_baseline: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    store: Option<PathBuf>,
    /// Cycles to run; unbounded when omitted.
    #[arg(long)]
    cycles: Option<u64>,
    /// Pace cycles to the wall clock.
    #[arg(long)]
    realtime: bool,
    /// Per-cycle stage timings, TSV.
    #[arg(long, value_name = "FILE")]
    timing_report: Option<PathBuf>,
    /// Directory to write each frame into.
    #[arg(long, value_name = "DIR")]
    frames_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Address to listen on.
    #[arg(long)]
    listen: Option<String>,
    /// Token file: `token<TAB>principal<TAB>tier` lines.
    #[arg(long)]
    tokens: Option<PathBuf>,
    #[arg(long)]
    audit_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StoreArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    store: Option<PathBuf>,
    /// Baseline file; defaults to the configured simulator's baseline.
    #[arg(long)]
    baseline: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[command(flatten)]
    store: StoreArgs,
    /// Event time, Unix seconds.
    #[arg(long)]
    at: u64,
    #[arg(long, default_value_t = 300)]
    before: u64,
    #[arg(long, default_value_t = 300)]
    after: u64,
}

#[derive(Debug, Args)]
struct PeriodArgs {
    #[command(flatten)]
    store: StoreArgs,
    /// Period start, Unix seconds; defaults to the first stored cycle.
    #[arg(long)]
    from: Option<u64>,
    /// Period end, inclusive; defaults to the last stored cycle.
    #[arg(long)]
    to: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    format: Format,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Tsv,
    Json,
}

#[derive(Debug, Subcommand)]
enum ReportKind {
    /// Jobs submitted, core-hours and peak kW per bucket.
    Usage {
        #[command(flatten)]
        period: PeriodArgs,
        /// dow, hour, user or rack.
        #[arg(long, default_value = "dow")]
        bucket: String,
    },
    /// Racks ranked by temperature above the pod mean.
    Hotspot {
        #[command(flatten)]
        period: PeriodArgs,
    },
    /// Hosts failing per component.
    Failures {
        #[command(flatten)]
        period: PeriodArgs,
    },
}

#[derive(Debug, Args)]
struct DumpArgs {
    #[arg(long)]
    store: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 5325)]
    points: usize,
    #[arg(long, default_value_t = 900)]
    nodes: usize,
    #[arg(long, default_value_t = 3)]
    cycles: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let filter = EnvFilter::try_new(&cli.log).unwrap_or_else(|_| EnvFilter::new("warn"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("podwatch: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let path = cli
        .config
        .clone()
        .or_else(|| std::env::var_os("PODWATCH_CONFIG").map(PathBuf::from));
    Ok(match path {
        Some(p) => PipelineConfig::load(&p, &cli.overrides)?,
        None => PipelineConfig::parse("", Path::new("."), &cli.overrides)?,
    })
}

fn apply_source(config: &mut PipelineConfig, source: &SourceArgs) {
    if let Some(p) = &source.sim {
        config.sim = Some(p.clone());
    }
    if let Some(s) = &source.scenario {
        config.scenario = Some(s.clone());
    }
}

fn apply_store(config: &mut PipelineConfig, args: &StoreArgs) {
    apply_source(config, &args.source);
    if let Some(p) = &args.store {
        config.store = Some(p.clone());
    }
    if let Some(p) = &args.baseline {
        config.baseline = Some(p.clone());
    }
}

fn apply_pipeline(config: &mut PipelineConfig, args: &PipelineArgs) {
    apply_source(config, &args.source);
    if let Some(p) = &args.store {
        config.store = Some(p.clone());
    }
    if args.cycles.is_some() {
        config.cycles = args.cycles;
    }
    config.realtime |= args.realtime;
    if let Some(p) = &args.timing_report {
        config.timing_report = Some(p.clone());
    }
    if let Some(p) = &args.frames_dir {
        config.frames_dir = Some(p.clone());
    }
}

fn open_store(config: &PipelineConfig) -> Result<TripleStore, CliError> {
    let dir = config.store.as_ref().ok_or_else(|| {
        CliError::Usage("a store directory is required (--store or store = ...)".into())
    })?;
    if !dir.is_dir() {
        return Err(CliError::Usage(format!(
            "store {} does not exist",
            dir.display()
        )));
    }
    Ok(TripleStore::open(dir)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = load_config(&cli)?;
    match cli.command {
        Command::Simulate(args) => simulate(&mut config, &args),
        Command::Pipeline(args) => {
            apply_pipeline(&mut config, &args);
            run_pipeline(&config)
        }
        Command::Serve(args) => {
            apply_pipeline(&mut config, &args.pipeline);
            if let Some(a) = args.listen {
                config.server_endpoint = Some(a);
            }
            config
                .server_endpoint
                .get_or_insert_with(|| "127.0.0.1:7470".into());
            if let Some(p) = args.tokens {
                config.tokens = Some(p);
            }
            if let Some(p) = args.audit_log {
                config.audit_log = Some(p);
            }
            if args.pipeline.cycles.is_none() && config.cycles.is_none() {
                config.realtime = true;
            }
            run_pipeline(&config)
        }
        Command::Replay(args) => {
            apply_store(&mut config, &args.store);
            let store = open_store(&config)?;
            let baseline = pipeline::configured_baseline(&config)?;
            let window = ReplayWindow {
                at: args.at,
                before: args.before,
                after: args.after,
            };
            let mut out = BufWriter::new(io::stdout().lock());
            for frame in history::replay(&store, &baseline, &window)? {
                out.write_all(&frame_message(&frame, true))?;
            }
            out.flush()?;
            Ok(())
        }
        Command::Report { kind } => report(&mut config, kind),
        Command::Dump(args) => {
            if let Some(p) = args.store {
                config.store = Some(p);
            }
            let store = open_store(&config)?;
            let n = match &args.out {
                Some(p) => {
                    let mut f = BufWriter::new(File::create(p)?);
                    let n = store.dump(&mut f)?;
                    f.flush()?;
                    n
                }
                None => {
                    let mut out = BufWriter::new(io::stdout().lock());
                    let n = store.dump(&mut out)?;
                    out.flush()?;
                    n
                }
            };
            info!("{n} entries dumped");
            Ok(())
        }
        Command::Bench(args) => bench(&args),
    }
}

fn run_pipeline(config: &PipelineConfig) -> Result<(), CliError> {
    let mut deployment = pipeline::deploy(config)?;
    if let Some(server) = &deployment.server {
        eprintln!("state server listening on {}", server.local_addr());
    }
    let summary = deployment.run(config, |out| {
        println!(
            "frame {}\tts {}\talerts {}\ttotal {:.3}s",
            out.frame_id,
            out.timestamp,
            out.frame.active_alerts.len(),
            out.timings.total().as_secs_f64()
        );
    })?;
    eprintln!(
        "{} cycles completed, {} skipped",
        summary.completed, summary.failed
    );
    Ok(())
}

fn simulate(config: &mut PipelineConfig, args: &SimulateArgs) -> Result<(), CliError> {
    apply_source(config, &args.source);
    let mut sim = pipeline::configured_simulator(config)?;
    if let Some(p) = &args.script {
        sim.load_script(&FaultScript::load(p)?);
    }
    if let Some(p) = &args.write_map {
        sim.map().write_tsv(BufWriter::new(File::create(p)?))?;
    }
    if let Some(p) = &args.write_baseline {
        scenario::default_baseline(sim.config(), sim.map())
            .write_tsv(BufWriter::new(File::create(p)?))?;
    }
    let period = sim.config().period_s;
    let host = SimHost::start(sim, &args.modbus, &args.telemetry)?;
    eprintln!(
        "modbus on {}, telemetry on {}",
        host.modbus_addr(),
        host.telemetry_addr()
    );
    let mut step = 0;
    while args.cycles.is_none_or(|n| step < n) {
        let start = Instant::now();
        let ts = host.advance(period as f64)?;
        info!(ts, "simulator step");
        step += 1;
        if !args.fast {
            if let Some(rest) = Duration::from_secs(period).checked_sub(start.elapsed()) {
                thread::sleep(rest);
            }
        }
    }
    Ok(())
}

fn period_bounds(store: &TripleStore, args: &PeriodArgs) -> Result<(u64, u64), CliError> {
    let cycles = store.cycle_timestamps(0, u64::MAX)?;
    let (Some(first), Some(last)) = (cycles.first(), cycles.last()) else {
        return Err(HistoryError::NoData {
            from: 0,
            to: u64::MAX,
        }
        .into());
    };
    Ok((args.from.unwrap_or(*first), args.to.unwrap_or(*last)))
}

fn write_json<T: serde::Serialize>(value: &T) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(io::Error::from)?;
    writeln!(out)?;
    Ok(())
}

fn report(config: &mut PipelineConfig, kind: ReportKind) -> Result<(), CliError> {
    let period = match &kind {
        ReportKind::Usage { period, .. }
        | ReportKind::Hotspot { period }
        | ReportKind::Failures { period } => period,
    };
    apply_store(config, &period.store);
    let store = open_store(config)?;
    let baseline = pipeline::configured_baseline(config)?;
    let (from, to) = period_bounds(&store, period)?;
    let format = period.format;
    let out = io::stdout().lock();
    match kind {
        ReportKind::Usage { bucket, .. } => {
            let bucketing: Bucketing = bucket.parse().map_err(CliError::Usage)?;
            let r = history::usage_report(&store, &baseline, from, to, bucketing)?;
            match format {
                Format::Tsv => r.write_tsv(out)?,
                Format::Json => write_json(&r)?,
            }
        }
        ReportKind::Hotspot { .. } => {
            let rows = history::hotspot_report(&store, &baseline, from, to)?;
            match format {
                Format::Tsv => history::write_hotspots_tsv(&rows, out)?,
                Format::Json => write_json(&rows)?,
            }
        }
        ReportKind::Failures { .. } => {
            let rows = history::failure_inventory(&store, &baseline, from, to)?;
            match format {
                Format::Tsv => history::write_failures_tsv(&rows, out)?,
                Format::Json => write_json(&rows)?,
            }
        }
    }
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<(), CliError> {
    if args.points == 0 || args.nodes == 0 {
        return Err(CliError::Usage(
            "--points and --nodes must be positive".into(),
        ));
    }
    let outputs = pipeline::run_bench(args.points, args.nodes, args.cycles)?;
    let mut out = io::stdout().lock();
    writeln!(out, "{}", StageTimings::TSV_HEADER)?;
    for (i, o) in outputs.iter().enumerate() {
        writeln!(
            out,
            "{}",
            o.timings.tsv_row(i as u64 + 1, o.frame_id, o.timestamp)
        )?;
    }
    if let Some(worst) = outputs
        .iter()
        .map(|o| o.timings.total().as_secs_f64())
        .reduce(f64::max)
    {
        let verdict = if worst <= CYCLE_BUDGET_S {
            "within"
        } else {
            "over"
        };
        eprintln!(
            "{} points, {} nodes: slowest cycle {worst:.3}s, {verdict} the {CYCLE_BUDGET_S}s budget",
            args.points, args.nodes
        );
    }
    Ok(())
}
