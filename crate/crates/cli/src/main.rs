use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use flexbeam::harness::{self, ExperimentConfig, SweepVariable};
use flexbeam::{solver, Algorithm};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "flexbeam", version, about = "Movable-antenna ISAC beamforming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single instance and print its metrics as JSON.
    Run {
        #[command(flatten)]
        common: Common,
        /// Algorithm name (SPGA-FBF-MA, DGA-FBF-MA, BF-FPA or a prefix).
        #[arg(long, default_value = "SPGA-FBF-MA")]
        algorithm: String,
        /// Scenario index under the master seed.
        #[arg(long, default_value_t = 0)]
        index: u64,
        /// Array size; defaults to the first configured antenna count.
        #[arg(long)]
        antennas: Option<usize>,
        /// Value of the swept variable; defaults to its first configured value.
        #[arg(long)]
        value: Option<f64>,
    },
    /// Objective versus transmit power.
    SweepPower(Common),
    /// Objective versus antenna region size.
    SweepRegion(Common),
    /// Communication / sensing trade-off.
    SweepTradeoff(Common),
    /// Cross-check the solver building blocks against the reference oracles.
    Verify(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment configuration; missing keys keep the preset values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of Monte Carlo seeds.
    #[arg(long)]
    seeds: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed.
    #[arg(long, env = "FLEXBEAM_SEED")]
    seed: Option<u64>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
}

/// Errors that map to exit code 2.
#[derive(Debug)]
struct ConfigError(anyhow::Error);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

fn load(common: &Common, preset: ExperimentConfig) -> anyhow::Result<ExperimentConfig> {
    let mut value = serde_json::to_value(&preset)?;
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let patch: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        merge(&mut value, patch);
    }
    let mut cfg: ExperimentConfig = serde_json::from_value(value).context("invalid configuration")?;
    if let Some(n) = common.seeds {
        cfg.num_seeds = n;
    }
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if cfg.sweep.variable != preset.sweep.variable {
        bail!(
            "configuration sweeps {} but this subcommand sweeps {}",
            cfg.sweep.variable,
            preset.sweep.variable
        );
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sweep(common: &Common, preset: ExperimentConfig) -> anyhow::Result<ExitCode> {
    let cfg = load(common, preset).map_err(ConfigError)?;
    if common.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(ExitCode::SUCCESS);
    }
    let outcome = harness::run_sweep(&cfg)?;
    let written = harness::emit(&outcome, &cfg, &cfg.output)?;
    for path in &written {
        eprintln!("wrote {}", path.display());
    }
    if cfg.sweep.variable == SweepVariable::PowerDbm {
        for gain in outcome.headline_gains() {
            println!("{gain}");
        }
    }
    for failure in &outcome.failures {
        eprintln!(
            "failed: seed {} {} = {} {} N = {}: {}",
            failure.seed, failure.sweep_var, failure.sweep_value, failure.algorithm, failure.n_antennas, failure.error
        );
    }
    Ok(if outcome.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::SweepPower(common) => sweep(&common, ExperimentConfig::fig3()),
        Command::SweepRegion(common) => sweep(&common, ExperimentConfig::fig4()),
        Command::SweepTradeoff(common) => sweep(&common, ExperimentConfig::fig5()),
        Command::Run {
            common,
            algorithm,
            index,
            antennas,
            value,
        } => {
            let preset = match &common.config {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))
                        .map_err(ConfigError)?;
                    let v: Value = serde_json::from_str(&text)
                        .with_context(|| format!("parsing {}", path.display()))
                        .map_err(ConfigError)?;
                    match v.pointer("/sweep/variable").and_then(Value::as_str) {
                        Some("region_lambda") => ExperimentConfig::fig4(),
                        Some("comm_weight") => ExperimentConfig::fig5(),
                        _ => ExperimentConfig::fig3(),
                    }
                }
                None => ExperimentConfig::fig3(),
            };
            let cfg = load(&common, preset).map_err(ConfigError)?;
            if common.print_config {
                println!("{}", serde_json::to_string_pretty(&cfg)?);
                return Ok(ExitCode::SUCCESS);
            }
            let algorithm: Algorithm = algorithm.parse().map_err(|e| ConfigError(anyhow::Error::new(e)))?;
            let n = antennas.unwrap_or(cfg.antenna_counts[0]);
            let value = value.unwrap_or(cfg.sweep.values[0]);
            let (geometry, solver_cfg) = cfg
                .point(value, n, algorithm)
                .map_err(|e| ConfigError(anyhow::Error::new(e)))?;
            let scenario = cfg.scenario_for(index, n)?;
            let out = solver::solve(&scenario, &geometry, &solver_cfg)?;
            let report = serde_json::json!({
                "algorithm": algorithm,
                "sweep_var": cfg.sweep.variable,
                "sweep_value": value,
                "n_antennas": n,
                "positions": out.positions,
                "iterations": out.iterations,
                "wall_ms": out.wall_time.as_secs_f64() * 1e3,
                "metrics": out.metrics,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify(common) => {
            let cfg = load(&common, ExperimentConfig::fig3()).map_err(ConfigError)?;
            if common.print_config {
                println!("{}", serde_json::to_string_pretty(&cfg)?);
                return Ok(ExitCode::SUCCESS);
            }
            let instances = common.seeds.unwrap_or(20);
            let checks = harness::verify(instances, cfg.master_seed)?;
            let mut ok = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<ConfigError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
