//! `aoi`: solve for the optimal two-unit thresholds, simulate policies, and
//! run comparison or sweep experiments. All results go out as JSON or CSV.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use aoi_core::analytic::{self, ThresholdSolution};
use aoi_core::engine::{self, SimOptions, SimResult};
use aoi_core::experiments::{self, CompareConfig, SweepConfig, SweepSpec};
use aoi_core::model::SystemParams;
use aoi_core::policies::PolicySpec;
use aoi_core::stats::{self, CiMethod, RenewalDiagnostics};
use aoi_core::{AoiError, SCHEMA_VERSION};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DOMAIN: u8 = 3;
const EXIT_INCOMPATIBLE: u8 = 4;

const RUN_CONFIG_VERSION: u32 = 1;
const OPTIMAL_PRESET: &str = "optimal-b2";

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (schema 1)");

#[derive(Parser, Debug)]
#[command(name = "aoi", version = VERSION, about = "Age of information with an energy-harvesting sensor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bisection for the optimal two-unit thresholds.
    Solve {
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Run one simulation and print the result as JSON.
    Simulate(SimulateArgs),
    /// Optimal two-unit policy against the slot baselines over shared seeds.
    Compare(CompareArgs),
    /// Evaluate a grid of thresholds, battery sizes or z values; CSV output.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// JSON run configuration; conflicts with the individual flags.
    #[arg(long, conflicts_with_all = ["battery", "policy", "horizon", "seed", "rate"])]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    battery: Option<u32>,
    /// `optimal-b2` or a JSON policy object.
    #[arg(long, required_unless_present = "config")]
    policy: Option<String>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    epochs_csv: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = CiChoice::BatchMeans)]
    ci: CiChoice,
    #[arg(long, default_value_t = stats::DEFAULT_BATCHES)]
    batches: usize,
    /// Skip the renewal diagnostics even when enough epochs are available.
    #[arg(long)]
    no_diagnostics: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CiChoice {
    BatchMeans,
    Delta,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long, default_value_t = 50)]
    seeds: usize,
    #[arg(long, default_value_t = 1e5)]
    horizon: f64,
    /// First seed; replication i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    rate: f64,
    /// Leave out the restart-on-delivery variants of the energy-aware baseline.
    #[arg(long)]
    no_restart_clock: bool,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    /// What goes to stdout.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// JSON sweep configuration.
    #[arg(long, group = "mode")]
    config: Option<PathBuf>,
    /// `start:end:count` for lambda, with x1 paired optimally.
    #[arg(long, group = "mode")]
    lambda_range: Option<String>,
    /// Cartesian grid over --lambdas and --x1s.
    #[arg(long, group = "mode", requires_all = ["lambdas", "x1s"])]
    grid: bool,
    #[arg(long, value_delimiter = ',')]
    lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    x1s: Vec<f64>,
    /// 3x3 grid of (lambda*, x1*) shifted by -d, 0, +d.
    #[arg(long, group = "mode", value_name = "D", num_args = 0..=1, default_missing_value = "0.1")]
    perturbation: Option<f64>,
    /// Energy-aware policy across battery sizes at fixed --z.
    #[arg(long, group = "mode", value_delimiter = ',')]
    batteries: Option<Vec<u32>>,
    #[arg(long, default_value_t = 1)]
    z: u32,
    /// Energy-aware policy across z values at fixed --battery.
    #[arg(long, group = "mode", value_delimiter = ',')]
    zs: Option<Vec<u32>>,
    #[arg(long, default_value_t = 2)]
    battery: u32,
    /// Simulate threshold cells as well as evaluating them analytically.
    #[arg(long)]
    simulate: bool,
    #[arg(long, default_value_t = 1e5)]
    horizon: f64,
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Policy given either by preset name or as a full specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum PolicyChoice {
    Preset(String),
    Spec(PolicySpec),
}

/// File form of a `simulate` invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    version: u32,
    system: SystemParams,
    policy: PolicyChoice,
    #[serde(default)]
    epochs_csv: Option<PathBuf>,
    #[serde(default)]
    ci: Option<CiMethod>,
}

#[derive(Serialize)]
struct Meta {
    generated_unix_seconds: u64,
    tool_version: &'static str,
}

impl Meta {
    fn now() -> Self {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Meta {
            generated_unix_seconds: secs,
            tool_version: env!("CARGO_PKG_VERSION"),
        }
    }
}

#[derive(Serialize)]
struct SolveOutput {
    schema_version: &'static str,
    #[serde(flatten)]
    solution: ThresholdSolution,
    meta: Meta,
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    schema_version: &'static str,
    system: &'a SystemParams,
    policy: &'a PolicySpec,
    result: &'a SimResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics: Option<RenewalDiagnostics>,
    meta: Meta,
}

#[derive(Serialize)]
struct CompareOutput<'a> {
    schema_version: &'static str,
    #[serde(flatten)]
    table: &'a experiments::ComparisonTable,
    meta: Meta,
}

/// Marks errors that come from malformed user input rather than the model.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<AoiError>() {
        Some(AoiError::InvalidParameter(_)) => EXIT_USAGE,
        Some(AoiError::Domain { .. } | AoiError::Bracket { .. } | AoiError::Quadrature { .. }) => EXIT_DOMAIN,
        Some(
            AoiError::IncompatiblePolicy(_) | AoiError::EnergyCausality { .. } | AoiError::TooFewEpochs { .. },
        ) => EXIT_INCOMPATIBLE,
        _ => EXIT_FAILURE,
    }
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn cmd_solve(tol: f64) -> anyhow::Result<()> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(usage(format!("--tol must be positive, got {tol}")));
    }
    let solution = analytic::solve_lambda_star(tol)?;
    print_json(&SolveOutput {
        schema_version: SCHEMA_VERSION,
        solution,
        meta: Meta::now(),
    })
}

fn parse_policy(text: &str) -> anyhow::Result<PolicySpec> {
    if text == OPTIMAL_PRESET {
        return Ok(experiments::optimal_b2()?.0);
    }
    serde_json::from_str(text).map_err(|e| usage(format!("bad --policy: {e}")))
}

fn resolve_policy(choice: PolicyChoice) -> anyhow::Result<PolicySpec> {
    match choice {
        PolicyChoice::Preset(name) if name == OPTIMAL_PRESET => Ok(experiments::optimal_b2()?.0),
        PolicyChoice::Preset(name) => Err(usage(format!("unknown policy preset {name:?}"))),
        PolicyChoice::Spec(spec) => Ok(spec),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let ci_flag = match args.ci {
        CiChoice::BatchMeans => CiMethod::BatchMeans { batches: args.batches },
        CiChoice::Delta => CiMethod::Delta,
    };
    let (params, policy, epochs_csv, ci_method) = match &args.config {
        Some(path) => {
            let cfg: RunConfig = read_json(path)?;
            if cfg.version != RUN_CONFIG_VERSION {
                return Err(usage(format!(
                    "run config version {} is not supported (expected {RUN_CONFIG_VERSION})",
                    cfg.version
                )));
            }
            let policy = resolve_policy(cfg.policy)?;
            (
                cfg.system,
                policy,
                args.epochs_csv.clone().or(cfg.epochs_csv),
                cfg.ci.unwrap_or(ci_flag),
            )
        }
        None => {
            let battery = args.battery.expect("clap enforces --battery");
            let policy = parse_policy(args.policy.as_deref().expect("clap enforces --policy"))?;
            let params = SystemParams::new(
                battery,
                args.rate.unwrap_or(1.0),
                args.horizon.unwrap_or(1e5),
                args.seed.unwrap_or(0),
            )?;
            (params, policy, args.epochs_csv.clone(), ci_flag)
        }
    };
    params.validate()?;

    let options = SimOptions {
        ci_method,
        ..SimOptions::default()
    };
    let result = engine::simulate_with(&params, &policy, &options)?;
    if let Some(path) = &epochs_csv {
        engine::write_epochs_csv_file(path, &result.epochs)?;
    }
    let diagnostics = if !args.no_diagnostics
        && policy.is_renewal()
        && result.epochs.len() >= stats::MIN_EPOCHS_FOR_DIAGNOSTICS
    {
        Some(stats::renewal_diagnostics(&result.epochs)?)
    } else {
        None
    };
    print_json(&SimulateOutput {
        schema_version: SCHEMA_VERSION,
        system: &params,
        policy: &policy,
        result: &result,
        diagnostics,
        meta: Meta::now(),
    })
}

fn cmd_compare(args: CompareArgs) -> anyhow::Result<()> {
    let config = CompareConfig {
        horizon: args.horizon,
        seeds: args.seeds,
        base_seed: args.seed,
        arrival_rate: args.rate,
        include_restart_clock: !args.no_restart_clock,
    };
    let table = experiments::compare(&config)?;
    if let Some(path) = &args.csv {
        experiments::write_comparison_csv(create(path)?, &table)?;
    }
    let output = CompareOutput {
        schema_version: SCHEMA_VERSION,
        table: &table,
        meta: Meta::now(),
    };
    if let Some(path) = &args.json {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &output)?;
        writeln!(w)?;
        w.flush()?;
    }
    match args.format {
        Format::Json => print_json(&output),
        Format::Csv => Ok(experiments::write_comparison_csv(io::stdout().lock(), &table)?),
    }
}

fn parse_range(text: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        bail!(usage(format!("--lambda-range expects start:end:count, got {text:?}")));
    };
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| usage(format!("{s:?}: {e}")));
    let count: usize = n.trim().parse().map_err(|e| usage(format!("{n:?}: {e}")))?;
    Ok(experiments::linspace(parse(a)?, parse(b)?, count))
}

fn sweep_spec(args: &SweepArgs) -> anyhow::Result<SweepSpec> {
    if let Some(range) = &args.lambda_range {
        return Ok(SweepSpec::LambdaLine {
            lambdas: parse_range(range)?,
        });
    }
    if args.grid {
        return Ok(SweepSpec::ThresholdGrid {
            lambdas: args.lambdas.clone(),
            x1s: args.x1s.clone(),
        });
    }
    if let Some(d) = args.perturbation {
        let (_, sol) = experiments::optimal_b2()?;
        let shifts = [-d, 0.0, d];
        return Ok(SweepSpec::ThresholdGrid {
            lambdas: shifts.iter().map(|s| sol.lambda_star + s).collect(),
            x1s: shifts.iter().map(|s| sol.x1_star + s).collect(),
        });
    }
    if let Some(capacities) = &args.batteries {
        return Ok(SweepSpec::Battery {
            capacities: capacities.clone(),
            z: args.z,
        });
    }
    if let Some(zs) = &args.zs {
        return Ok(SweepSpec::EnergyAwareZ {
            zs: zs.clone(),
            battery: args.battery,
        });
    }
    Err(usage(
        "choose one of --config, --lambda-range, --grid, --perturbation, --batteries, --zs",
    ))
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let config = match &args.config {
        Some(path) => read_json::<SweepConfig>(path)?,
        None => SweepConfig {
            spec: sweep_spec(&args)?,
            simulate: args.simulate,
            horizon: args.horizon,
            seeds: args.seeds,
            base_seed: args.seed,
        },
    };
    let rows = experiments::sweep(&config)?;
    match &args.out {
        Some(path) => experiments::write_sweep_csv(create(path)?, &rows)?,
        None => experiments::write_sweep_csv(io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Solve { tol } => cmd_solve(tol),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
