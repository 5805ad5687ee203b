mod config;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use shpcn_core::engine::payment::PaymentStatus;
use shpcn_core::loadgen::{build_profile, ArrivalProcess, ProfileKind, ScenarioTable};
use shpcn_core::metrics::{
    cost_rows, latency_rows, minute_rows, summarize_rows, sweep_row, write_csv_file, CostModel, MetricsError,
    MetricsLog, SuccessRow, COST_HEADER, COST_SWEEP, LATENCY_CDF, LATENCY_HEADER, MINUTE_HEADER,
    REBALANCE_PER_MINUTE, SUCCESS_HEADER, SUCCESS_VS_LIQUIDITY,
};
use shpcn_core::rebalancer::{RebalanceKind, RebalanceOutcome};
use shpcn_core::sweep::{log_grid, run_sweep, thread_count, Seeding, SweepRun};
use shpcn_core::topology::{generate_topology, parse_topology, scaled_europe_params, serialize_topology, Topology};
use shpcn_core::{run, Money, RebalancingMode, SimConfig, SimError};

use config::FileConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Invariant(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Invariant { .. } => CliError::Invariant(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "shpcn", version, about = "Simulate semi-hierarchical payment channel networks with automated rebalancing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a topology and write it as JSON.
    Generate(GenerateArgs),
    /// Simulate one load profile on one topology.
    Run(RunArgs),
    /// Simulate the same load over a grid of total routing liquidity.
    Sweep(SweepArgs),
    /// Summarize the CSV files written by `sweep`.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// Seed (topology seed for `generate`, simulation seed otherwise).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Flat TOML file of SimConfig and TopologyParams fields; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    ScaledEurope,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    AverageDay,
    PeakDay,
}

#[derive(Clone, Copy, ValueEnum)]
enum Arrival {
    Poisson,
    Deterministic,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    preset: Preset,
    /// LSP–LSP channel capacity in cents.
    #[arg(long)]
    lsp_capacity: u64,
    /// CB–LSP channel capacity in cents.
    #[arg(long)]
    cb_lsp_capacity: u64,
    /// Output file; defaults to topology.json in the output directory.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Source {
    /// Topology JSON written by `generate`.
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    topology: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// LSP–LSP capacity in cents, with --preset.
    #[arg(long, requires = "preset")]
    lsp_capacity: Option<u64>,
    /// CB–LSP capacity in cents, with --preset.
    #[arg(long, requires = "preset")]
    cb_lsp_capacity: Option<u64>,
    /// Seed of a preset topology (default 1).
    #[arg(long, requires = "preset")]
    topology_seed: Option<u64>,
}

#[derive(Args)]
struct Load {
    #[arg(long, value_enum, default_value = "average-day")]
    profile: Profile,
    #[arg(long, value_enum, default_value = "poisson")]
    arrival: Arrival,
    /// Step of latency_cdf.csv in ms; defaults to the hop delay.
    #[arg(long)]
    resolution_ms: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    load: Load,
    /// full, waterfall-only or none.
    #[arg(long)]
    rebalancing: Option<RebalancingMode>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    load: Load,
    /// Explicit total routing liquidity points in cents.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["from", "to"])]
    liquidity: Vec<u64>,
    /// Lower end of the log-spaced grid, in cents.
    #[arg(long, default_value_t = 10_000_000)]
    from: u64,
    /// Upper end of the log-spaced grid, in cents.
    #[arg(long, default_value_t = 6_000_000_000)]
    to: u64,
    /// Also run a point with no routing liquidity.
    #[arg(long)]
    include_zero: bool,
    #[arg(long, value_delimiter = ',', default_value = "full,waterfall-only,none")]
    modes: Vec<RebalancingMode>,
    /// Annual lending rate for the liquidity cost.
    #[arg(long)]
    annual_rate: Option<f64>,
    /// Fee per layer-1 transaction, in cents.
    #[arg(long)]
    l1_fee: Option<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
}

fn input<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Input(format!("{context}: {e}"))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(input(dir.display()))
}

fn generate(args: GenerateArgs) -> Result<(), CliError> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let Preset::ScaledEurope = args.preset;
    let mut params = file.topology(&scaled_europe_params(Money(args.lsp_capacity), Money(args.cb_lsp_capacity)))?;
    params.lsp_lsp_capacity = Money(args.lsp_capacity);
    params.cb_lsp_capacity = Money(args.cb_lsp_capacity);
    if let Some(s) = args.common.seed {
        params.seed = s;
    }
    let t = generate_topology(&params).map_err(|e| CliError::Input(e.to_string()))?;
    let path = match args.output {
        Some(p) => p,
        None => {
            ensure_dir(&args.common.out_dir)?;
            args.common.out_dir.join("topology.json")
        }
    };
    fs::write(&path, serialize_topology(&t)).map_err(input(path.display()))?;
    println!(
        "nodes={} channels={} routing_channels={} total_routing_liquidity={} file={}",
        t.nodes.len(),
        t.channels.len(),
        t.routing_channels().count(),
        t.total_routing_liquidity().0,
        path.display()
    );
    Ok(())
}

fn load_topology(src: &Source, file: &FileConfig, need_capacities: bool) -> Result<Topology, CliError> {
    if let Some(path) = &src.topology {
        let bytes = fs::read(path).map_err(input(path.display()))?;
        return parse_topology(&bytes).map_err(input(path.display()));
    }
    let (lsp, cb) = match (src.lsp_capacity, src.cb_lsp_capacity) {
        (Some(a), Some(b)) => (Money(a), Money(b)),
        _ if need_capacities => {
            return Err(CliError::Input("--preset needs --lsp-capacity and --cb-lsp-capacity".into()));
        }
        (a, b) => (Money(a.unwrap_or(0)), Money(b.unwrap_or(0))),
    };
    let mut params = file.topology(&scaled_europe_params(lsp, cb))?;
    params.lsp_lsp_capacity = lsp;
    params.cb_lsp_capacity = cb;
    if let Some(s) = src.topology_seed {
        params.seed = s;
    }
    generate_topology(&params).map_err(|e| CliError::Input(e.to_string()))
}

fn sim_config(file: &FileConfig, common: &Common, mode: Option<RebalancingMode>) -> Result<SimConfig, CliError> {
    let mut c = file.sim(&SimConfig::default())?;
    if let Some(m) = mode {
        c.rebalancing = m;
    }
    if let Some(s) = common.seed {
        c.seed = s;
    }
    c.validate()?;
    Ok(c)
}

fn profile_of(load: &Load) -> shpcn_core::loadgen::LoadProfile {
    let kind = match load.profile {
        Profile::AverageDay => ProfileKind::AverageDay,
        Profile::PeakDay => ProfileKind::PeakDay,
    };
    let arrival = match load.arrival {
        Arrival::Poisson => ArrivalProcess::Poisson,
        Arrival::Deterministic => ArrivalProcess::Deterministic,
    };
    build_profile(kind, arrival)
}

fn write_run_files(dir: &Path, log: &MetricsLog, resolution_ms: u64) -> Result<(), CliError> {
    if resolution_ms == 0 {
        return Err(CliError::Input("--resolution-ms must be positive".into()));
    }
    write_csv_file(&dir.join(LATENCY_CDF), &LATENCY_HEADER, &latency_rows(log, resolution_ms))?;
    write_csv_file(&dir.join(REBALANCE_PER_MINUTE), &MINUTE_HEADER, &minute_rows(log))?;
    Ok(())
}

fn run_cmd(args: RunArgs) -> Result<(), CliError> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let topology = load_topology(&args.source, &file, true)?;
    let config = sim_config(&file, &args.common, args.rebalancing)?;
    let profile = profile_of(&args.load);
    ensure_dir(&args.common.out_dir)?;
    let start = Instant::now();
    let log = run(&topology, &profile, &ScenarioTable::default(), &config)?;
    let wall = start.elapsed().as_secs_f64();
    write_run_files(&args.common.out_dir, &log, args.load.resolution_ms.unwrap_or(config.hop_delay_ms))?;
    println!("{} wall_time_s={wall:.2}", run_summary(&log));
    Ok(())
}

/// Key=value pairs describing one run.
fn run_summary(log: &MetricsLog) -> String {
    let total = log.retail().count();
    let ok = log.retail().filter(|p| p.status == PaymentStatus::Succeeded).count();
    let rate = if total == 0 { 0.0 } else { ok as f64 / total as f64 };
    let max_ms = log.retail().filter_map(|p| p.latency_us()).max().unwrap_or(0) / 1000;
    let done = |k| log.count_actions(k, RebalanceOutcome::Completed);
    format!(
        "mode={} routing_liquidity={} payments={total} succeeded={ok} failed={} success_rate={rate:.6} \
         max_latency_ms={max_ms} waterfalls={} reverse_waterfalls={} swaps={} l1_txs={}",
        log.config.rebalancing,
        log.routing_liquidity.0,
        total - ok,
        done(RebalanceKind::WaterfallDeposit),
        done(RebalanceKind::ReverseWithdrawal),
        done(RebalanceKind::SubmarineSwap),
        log.l1_txs.len(),
    )
}

fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let base = load_topology(&args.source, &file, false)?;
    let config = sim_config(&file, &args.common, None)?;
    let profile = profile_of(&args.load);
    let mut model = CostModel::default();
    if let Some(r) = args.annual_rate {
        model.annual_lending_rate = r;
    }
    if let Some(f) = args.l1_fee {
        model.l1_fee_per_tx = Money(f);
    }
    let mut points: Vec<Money> = if args.liquidity.is_empty() {
        log_grid(Money(args.from), Money(args.to))
    } else {
        args.liquidity.iter().copied().map(Money).collect()
    };
    if args.include_zero {
        points.insert(0, Money::ZERO);
    }
    points.sort();
    points.dedup();
    if points.is_empty() {
        return Err(CliError::Input("the sweep has no liquidity points".into()));
    }
    let mut modes: Vec<RebalancingMode> = Vec::new();
    for m in &args.modes {
        if !modes.contains(m) {
            modes.push(*m);
        }
    }
    ensure_dir(&args.common.out_dir)?;
    let runs = run_sweep(&base, &points, &modes, &profile, &ScenarioTable::default(), &config, Seeding::PerPoint, thread_count())
        .map_err(|e| match e.source {
            SimError::Invariant { .. } => CliError::Invariant(e.to_string()),
            _ => CliError::Input(e.to_string()),
        })?;

    let mut success = Vec::new();
    for &mode in &modes {
        let of_mode: Vec<&SweepRun> = runs.iter().filter(|r| r.mode == mode).collect();
        let summary = summarize_rows(of_mode.iter().map(|r| sweep_row(r.liquidity, &r.log, &model)).collect());
        success.extend(summary.rows.iter().map(|r| SuccessRow { liquidity_cents: r.liquidity.0, success_rate: r.success_rate, mode }));
        let opt = |m: Option<Money>| m.map_or("none".to_owned(), |m| m.0.to_string());
        println!(
            "mode={mode} points={} min_liquidity_for_full_success={} cost_minimum={}",
            summary.rows.len(),
            opt(summary.min_full_success),
            opt(summary.cost_minimum)
        );
        if mode != cost_mode(&modes) {
            continue;
        }
        write_csv_file(&args.common.out_dir.join(COST_SWEEP), &COST_HEADER, &cost_rows(&summary))?;
        // Latency and per-minute files describe the cost-optimal run, or the
        // best-funded one when no point reaches full success.
        let chosen = summary.cost_minimum.unwrap_or(*points.last().unwrap());
        let run = of_mode.iter().find(|r| r.liquidity == chosen).expect("the chosen point was run");
        write_run_files(&args.common.out_dir, &run.log, args.load.resolution_ms.unwrap_or(config.hop_delay_ms))?;
    }
    write_csv_file(&args.common.out_dir.join(SUCCESS_VS_LIQUIDITY), &SUCCESS_HEADER, &success)?;
    Ok(())
}

/// The mode whose runs feed the cost curve: full rebalancing when swept.
fn cost_mode(modes: &[RebalancingMode]) -> RebalancingMode {
    if modes.contains(&RebalancingMode::Full) {
        RebalancingMode::Full
    } else {
        modes[0]
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run_cmd(a),
        Command::Sweep(a) => sweep(a),
        Command::Report(a) => report::report(&a.common.out_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use shpcn_core::SimTime;

    #[test]
    fn exit_codes() {
        let breach = SimError::Invariant { time: SimTime(5), message: "channel 3 not conserved".into() };
        let e = CliError::from(breach);
        assert_eq!(e.exit_code(), 3);
        assert!(e.to_string().contains("channel 3"));
        assert_eq!(CliError::from(SimError::InvalidConfig("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(SimError::InvalidTopology("x".into())).exit_code(), 2);
    }
}
