//! Seeded Monte Carlo sweeps over transmit power, region size or the
//! trade-off weight, with CSV and plot-data output.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp_core::BisectionConfig;
use crate::metrics::Weights;
use crate::model::{generate_scenario_with, scenario_rng, ArrayGeometry, Scenario, ScenarioParams};
use crate::position_opt::PositionOptConfig;
use crate::solver::{solve, Algorithm, SolverConfig};

/// `10^((p − 30)/10)`: with unit noise, 30 dBm is 0 dB SNR.
pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    PowerDbm,
    RegionLambda,
    CommWeight,
}

impl SweepVariable {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVariable::PowerDbm => "power_dbm",
            SweepVariable::RegionLambda => "region_lambda",
            SweepVariable::CommWeight => "comm_weight",
        }
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVariable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power_dbm" => Ok(SweepVariable::PowerDbm),
            "region_lambda" => Ok(SweepVariable::RegionLambda),
            "comm_weight" => Ok(SweepVariable::CommWeight),
            _ => Err(Error::Config(format!("unknown sweep variable '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// Feasible region and minimum spacing, in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySpec {
    pub x_min_lambda: f64,
    pub x_max_lambda: f64,
    pub d0_lambda: f64,
}

impl Default for GeometrySpec {
    fn default() -> Self {
        Self {
            x_min_lambda: 0.0,
            x_max_lambda: 10.0,
            d0_lambda: 0.5,
        }
    }
}

/// Solver knobs that are not swept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub outer_tol: f64,
    pub outer_max_iters: usize,
    /// `None` scales the defaults to the wavelength.
    pub position: Option<PositionOptConfig>,
    pub bisection: BisectionConfig,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let base = SolverConfig::default();
        Self {
            outer_tol: base.outer_tol,
            outer_max_iters: base.outer_max_iters,
            position: None,
            bisection: base.bisection,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioParams,
    pub geometry: GeometrySpec,
    /// Transmit power when it is not the swept variable.
    pub power_dbm: f64,
    /// Communication weight when it is not the swept variable.
    pub comm_weight: f64,
    pub solver: SolverSettings,
    pub sweep: SweepSpec,
    /// Array sizes to run; each overrides `scenario.num_antennas`.
    pub antenna_counts: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    pub num_seeds: usize,
    pub master_seed: u64,
    /// Output directory.
    pub output: PathBuf,
    /// When false, `wall_ms` is written as 0 so reruns are byte-identical.
    pub record_wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::fig3()
    }
}

fn steps(from: f64, to: f64, step: f64) -> Vec<f64> {
    let n = ((to - from) / step).round() as usize;
    (0..=n).map(|i| from + i as f64 * step).collect()
}

impl ExperimentConfig {
    fn base(variable: SweepVariable, values: Vec<f64>, output: &str) -> Self {
        Self {
            scenario: ScenarioParams::default(),
            geometry: GeometrySpec::default(),
            power_dbm: 30.0,
            comm_weight: 0.5,
            solver: SolverSettings::default(),
            sweep: SweepSpec { variable, values },
            antenna_counts: vec![4, 8],
            algorithms: Algorithm::ALL.to_vec(),
            num_seeds: 50,
            master_seed: 2024,
            output: PathBuf::from(output),
            record_wall_time: true,
        }
    }

    /// Objective versus transmit power, 10 to 40 dBm, 10λ region.
    pub fn fig3() -> Self {
        Self::base(SweepVariable::PowerDbm, steps(10.0, 40.0, 5.0), "out/power")
    }

    /// Objective versus region size, 6λ to 21λ at 30 dBm.
    pub fn fig4() -> Self {
        Self::base(SweepVariable::RegionLambda, steps(6.0, 21.0, 1.0), "out/region")
    }

    /// Rate / sensing trade-off over the communication weight at 30 dBm.
    pub fn fig5() -> Self {
        let mut cfg = Self::base(SweepVariable::CommWeight, steps(0.0, 1.0, 0.1), "out/tradeoff");
        cfg.antenna_counts = vec![4];
        cfg
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_seeds == 0 {
            return bad("num_seeds must be at least 1".into());
        }
        if self.sweep.values.is_empty() {
            return bad("sweep values must not be empty".into());
        }
        if self.sweep.values.iter().any(|v| !v.is_finite()) {
            return bad("sweep values must be finite".into());
        }
        if self.sweep.values.windows(2).any(|w| w[1] < w[0]) {
            return bad("sweep values must be sorted".into());
        }
        if self.algorithms.is_empty() || self.antenna_counts.is_empty() {
            return bad("algorithms and antenna_counts must not be empty".into());
        }
        if self.antenna_counts.contains(&0) {
            return bad("antenna counts must be positive".into());
        }
        let config_err = |e: Error| Error::Config(e.to_string());
        self.scenario.validate().map_err(config_err)?;
        for &value in &self.sweep.values {
            for &n in &self.antenna_counts {
                let (geometry, solver) = self.point(value, n, Algorithm::BfFpa).map_err(config_err)?;
                solver.validate().map_err(config_err)?;
                ArrayGeometry::ula(
                    n,
                    self.scenario.wavelength / 2.0,
                    geometry.x_min,
                    geometry.x_max,
                    geometry.d0,
                )
                .map_err(|e| Error::Config(format!("{} = {value}, N = {n}: {e}", self.sweep.variable)))?;
            }
        }
        Ok(())
    }

    /// Geometry and solver configuration at one sweep point.
    pub fn point(&self, value: f64, n: usize, algorithm: Algorithm) -> Result<(ArrayGeometry, SolverConfig)> {
        let lambda = self.scenario.wavelength;
        let mut x_max = self.geometry.x_max_lambda;
        let mut power_dbm = self.power_dbm;
        let mut comm = self.comm_weight;
        match self.sweep.variable {
            SweepVariable::PowerDbm => power_dbm = value,
            SweepVariable::RegionLambda => x_max = value,
            SweepVariable::CommWeight => comm = value,
        }
        let x_min = self.geometry.x_min_lambda * lambda;
        let d0 = self.geometry.d0_lambda * lambda;
        let positions = (0..n).map(|i| x_min + i as f64 * d0).collect();
        let geometry = ArrayGeometry::new(positions, x_min, x_max * lambda, d0)?;
        let solver = SolverConfig {
            power_budget: dbm_to_watts(power_dbm),
            weights: Weights::new(comm)?,
            outer_tol: self.solver.outer_tol,
            outer_max_iters: self.solver.outer_max_iters,
            position: self
                .solver
                .position
                .unwrap_or_else(|| PositionOptConfig::for_wavelength(lambda)),
            bisection: self.solver.bisection,
            algorithm,
        };
        Ok((geometry, solver))
    }

    /// The scenario every algorithm and sweep value sees at `seed` with an
    /// `n`-antenna array. Draws do not depend on `n`.
    pub fn scenario_for(&self, seed: u64, n: usize) -> Result<Scenario> {
        let params = ScenarioParams {
            num_antennas: n,
            ..self.scenario.clone()
        };
        generate_scenario_with(&mut scenario_rng(self.master_seed, seed), &params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub seed: u64,
    pub sweep_var: SweepVariable,
    pub sweep_value: f64,
    pub algorithm: Algorithm,
    pub n_antennas: usize,
    pub objective_bits: f64,
    pub sum_rate_bits: f64,
    pub sensing_mi_bits: f64,
    pub outer_iters: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub seed: u64,
    pub sweep_var: SweepVariable,
    pub sweep_value: f64,
    pub algorithm: Algorithm,
    pub n_antennas: usize,
    pub error: String,
}

/// Mean and standard error of one column over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub se: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return Self { mean, se: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            se: (var / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub sweep_var: SweepVariable,
    pub sweep_value: f64,
    pub algorithm: Algorithm,
    pub n_antennas: usize,
    pub count: usize,
    pub objective: Stat,
    pub sum_rate: Stat,
    pub sensing_mi: Stat,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    pub failures: Vec<FailedRun>,
    pub aggregates: Vec<Aggregate>,
}

impl SweepOutcome {
    pub fn aggregate(&self, value: f64, algorithm: Algorithm, n: usize) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.sweep_value == value && a.algorithm == algorithm && a.n_antennas == n)
    }

    /// Percentage gain of SPGA over each other algorithm at the largest
    /// sweep value, per array size.
    pub fn headline_gains(&self) -> Vec<HeadlineGain> {
        let Some(top) = self.aggregates.iter().map(|a| a.sweep_value).reduce(f64::max) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        let sizes: std::collections::BTreeSet<usize> = self.aggregates.iter().map(|a| a.n_antennas).collect();
        for n in sizes {
            let Some(ours) = self.aggregate(top, Algorithm::SpgaFbfMa, n) else {
                continue;
            };
            for baseline in [Algorithm::DgaFbfMa, Algorithm::BfFpa] {
                if let Some(theirs) = self.aggregate(top, baseline, n) {
                    out.push(HeadlineGain {
                        sweep_value: top,
                        n_antennas: n,
                        baseline,
                        gain_percent: 100.0 * (ours.objective.mean / theirs.objective.mean - 1.0),
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadlineGain {
    pub sweep_value: f64,
    pub n_antennas: usize,
    pub baseline: Algorithm,
    pub gain_percent: f64,
}

impl fmt::Display for HeadlineGain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "N = {}, sweep value {}: SPGA-FBF-MA vs {} {:+.1}%",
            self.n_antennas, self.sweep_value, self.baseline, self.gain_percent
        )
    }
}

/// Solves every (value, algorithm, N, seed) combination in parallel.
/// Failed solves are collected, not fatal.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &value in &cfg.sweep.values {
        for &algorithm in &cfg.algorithms {
            for &n in &cfg.antenna_counts {
                for seed in 0..cfg.num_seeds as u64 {
                    jobs.push((value, algorithm, n, seed));
                }
            }
        }
    }
    let results: Vec<std::result::Result<SweepRecord, FailedRun>> = jobs
        .par_iter()
        .map(|&(value, algorithm, n, seed)| {
            let fail = |e: Error| FailedRun {
                seed,
                sweep_var: cfg.sweep.variable,
                sweep_value: value,
                algorithm,
                n_antennas: n,
                error: e.to_string(),
            };
            let scenario = cfg.scenario_for(seed, n).map_err(fail)?;
            let (geometry, solver) = cfg.point(value, n, algorithm).map_err(fail)?;
            let out = solve(&scenario, &geometry, &solver).map_err(fail)?;
            Ok(SweepRecord {
                seed,
                sweep_var: cfg.sweep.variable,
                sweep_value: value,
                algorithm,
                n_antennas: n,
                objective_bits: out.metrics.objective,
                sum_rate_bits: out.metrics.sum_rate(),
                sensing_mi_bits: out.metrics.sensing_mi,
                outer_iters: out.iterations,
                wall_ms: if cfg.record_wall_time {
                    out.wall_time.as_secs_f64() * 1e3
                } else {
                    0.0
                },
            })
        })
        .collect();

    let mut outcome = SweepOutcome::default();
    for r in results {
        match r {
            Ok(rec) => outcome.records.push(rec),
            Err(f) => outcome.failures.push(f),
        }
    }
    outcome.records.sort_by(|x, y| {
        x.sweep_value
            .total_cmp(&y.sweep_value)
            .then((x.algorithm, x.n_antennas, x.seed).cmp(&(y.algorithm, y.n_antennas, y.seed)))
    });
    outcome.aggregates = aggregate(&outcome.records);
    Ok(outcome)
}

/// Per-(value, algorithm, N) means and standard errors.
pub fn aggregate(records: &[SweepRecord]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(u64, Algorithm, usize), Vec<&SweepRecord>> = BTreeMap::new();
    for r in records {
        // Sort key that orders finite floats like their values.
        let bits = r.sweep_value.to_bits();
        let ordered = if r.sweep_value.is_sign_negative() { !bits } else { bits | (1 << 63) };
        groups.entry((ordered, r.algorithm, r.n_antennas)).or_default().push(r);
    }
    groups
        .into_values()
        .map(|group| {
            let col = |f: fn(&SweepRecord) -> f64| Stat::of(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
            Aggregate {
                sweep_var: group[0].sweep_var,
                sweep_value: group[0].sweep_value,
                algorithm: group[0].algorithm,
                n_antennas: group[0].n_antennas,
                count: group.len(),
                objective: col(|r| r.objective_bits),
                sum_rate: col(|r| r.sum_rate_bits),
                sensing_mi: col(|r| r.sensing_mi_bits),
            }
        })
        .collect()
}

const AGGREGATE_HEADER: [&str; 11] = [
    "sweep_var",
    "sweep_value",
    "algorithm",
    "n_antennas",
    "count",
    "objective_mean",
    "objective_se",
    "sum_rate_mean",
    "sum_rate_se",
    "sensing_mi_mean",
    "sensing_mi_se",
];

const RECORD_HEADER: [&str; 10] = [
    "seed",
    "sweep_var",
    "sweep_value",
    "algorithm",
    "n_antennas",
    "objective_bits",
    "sum_rate_bits",
    "sensing_mi_bits",
    "outer_iters",
    "wall_ms",
];

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_records(records: &[SweepRecord], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err(path))?;
    w.write_record(RECORD_HEADER).map_err(csv_err(path))?;
    for r in records {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_records(path: &Path) -> Result<Vec<SweepRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err(path))
}

pub fn write_aggregates(aggregates: &[Aggregate], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(AGGREGATE_HEADER).map_err(csv_err(path))?;
    for a in aggregates {
        w.write_record([
            a.sweep_var.name().to_string(),
            a.sweep_value.to_string(),
            a.algorithm.name().to_string(),
            a.n_antennas.to_string(),
            a.count.to_string(),
            a.objective.mean.to_string(),
            a.objective.se.to_string(),
            a.sum_rate.mean.to_string(),
            a.sum_rate.se.to_string(),
            a.sensing_mi.mean.to_string(),
            a.sensing_mi.se.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Whitespace-delimited table: sweep value, then one mean column per
/// (algorithm, N) pair.
pub fn plot_table(aggregates: &[Aggregate], metric: fn(&Aggregate) -> f64) -> String {
    let mut series: Vec<(Algorithm, usize)> = aggregates.iter().map(|a| (a.algorithm, a.n_antennas)).collect();
    series.sort();
    series.dedup();
    let mut values: Vec<f64> = aggregates.iter().map(|a| a.sweep_value).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();

    let var = aggregates.first().map_or("x", |a| a.sweep_var.name());
    let mut out = format!("# {var}");
    for (alg, n) in &series {
        out.push_str(&format!(" {alg}/N{n}"));
    }
    out.push('\n');
    for v in values {
        out.push_str(&v.to_string());
        for (alg, n) in &series {
            let cell = aggregates
                .iter()
                .find(|a| a.sweep_value == v && a.algorithm == *alg && a.n_antennas == *n)
                .map_or(f64::NAN, metric);
            out.push_str(&format!(" {cell}"));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    library: &'static str,
    version: &'static str,
    master_seed: u64,
    records: usize,
    failures: &'a [FailedRun],
    headline_gains: Vec<HeadlineGain>,
    config: &'a ExperimentConfig,
}

/// Writes `records.csv`, `aggregates.csv`, the `plot_*.dat` tables and
/// `manifest.json` under `dir`.
pub fn emit(outcome: &SweepOutcome, cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();

    let path = dir.join("records.csv");
    write_records(&outcome.records, &path)?;
    written.push(path);
    let path = dir.join("aggregates.csv");
    write_aggregates(&outcome.aggregates, &path)?;
    written.push(path);

    let tables: [(&str, fn(&Aggregate) -> f64); 3] = [
        ("objective", |a| a.objective.mean),
        ("sum_rate", |a| a.sum_rate.mean),
        ("sensing_mi", |a| a.sensing_mi.mean),
    ];
    for (name, metric) in tables {
        let path = dir.join(format!("plot_{name}.dat"));
        fs::write(&path, plot_table(&outcome.aggregates, metric)).map_err(io_err(&path))?;
        written.push(path);
    }

    let manifest = Manifest {
        library: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        master_seed: cfg.master_seed,
        records: outcome.records.len(),
        failures: &outcome.failures,
        headline_gains: outcome.headline_gains(),
        config: cfg,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(io_err(&path))?;
    written.push(path);
    Ok(written)
}

/// Outcome of one oracle cross-check.
#[cfg(feature = "oracles")]
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Cross-checks the closed-form updates, gradients and position search
/// against the slow references in [`crate::oracles`] on `instances` seeded
/// random problems.
#[cfg(feature = "oracles")]
pub fn verify(instances: usize, master_seed: u64) -> Result<Vec<CheckOutcome>> {
    use crate::fp_core::{aux_fixed_point, initial_aux, AuxiliaryState};
    use crate::metrics::{objective_nats, surrogate, Beamformer};
    use crate::oracles::{exhaustive_positions, fd_gradient, numeric_aux_maximizer, FDConfig};
    use crate::position_opt::{spga, surrogate_gradient};
    use num_complex::Complex64;
    use rand::RngExt;
    use rand_distr::StandardNormal;

    let draw = |seed: u64, n: usize, k: usize, c: usize, span: f64| -> Result<_> {
        let params = ScenarioParams {
            num_users: k,
            num_clutter: c,
            num_antennas: n,
            ..ScenarioParams::default()
        };
        let mut rng = scenario_rng(master_seed, seed);
        let scenario = generate_scenario_with(&mut rng, &params)?;
        let f = Beamformer::new(crate::metrics::CMatrix::from_fn(n, k + 1, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        }))?;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..span)).collect();
        let w = Weights::new(rng.random_range(0.2..0.8))?;
        Ok((scenario, f, x, w))
    };

    let mut checks = Vec::new();
    let mut worst = 0.0f64;
    for i in 0..instances as u64 {
        let (scenario, f, x, w) = draw(i, 2 + 2 * (i as usize % 2), 1 + 3 * (i as usize % 2), 3 * (i as usize / 2 % 2), 1.0)?;
        let k = scenario.num_users();
        let aux = aux_fixed_point(&f, &x, &AuxiliaryState::zeros(k), &scenario, 10_000)?;
        let s = surrogate(&f, &x, &aux, &scenario, w)?;
        let o = objective_nats(&f, &x, &scenario, w)?;
        worst = worst.max((s - o).abs() / o.abs().max(1e-300));
    }
    checks.push(CheckOutcome {
        name: "surrogate tightness",
        passed: worst <= 1e-8,
        detail: format!("max relative gap {worst:.2e}"),
    });

    let mut worst = 0.0f64;
    for i in 0..instances as u64 {
        let (scenario, f, x, w) = draw(1000 + i, 4, 3, 3, 1.0)?;
        let closed = initial_aux(&f, &x, &scenario)?;
        let numeric = numeric_aux_maximizer(&f, &x, &scenario, w)?;
        for (a, b) in closed.mu.iter().zip(&numeric.mu) {
            worst = worst.max((a - b).abs() / a.abs().max(1.0));
        }
        for (a, b) in closed.xi_c.iter().chain(&closed.xi_s).zip(numeric.xi_c.iter().chain(&numeric.xi_s)) {
            worst = worst.max((a - b).norm() / a.norm().max(1.0));
        }
    }
    checks.push(CheckOutcome {
        name: "auxiliary closed forms",
        passed: worst <= 1e-6,
        detail: format!("max relative deviation {worst:.2e}"),
    });

    let mut worst = 0.0f64;
    for i in 0..instances as u64 {
        let (scenario, f, x, w) = draw(2000 + i, 4, 2, 1, 1.0)?;
        let aux = initial_aux(&f, &x, &scenario)?;
        let g = surrogate_gradient(&x, &f, &aux, &scenario, w)?;
        let fd = fd_gradient(
            |p| surrogate(&f, p, &aux, &scenario, w).unwrap_or(f64::NAN),
            &x,
            &FDConfig::default(),
        );
        for (a, b) in g.iter().zip(&fd) {
            if a.abs() >= 1e-10 {
                worst = worst.max((a - b).abs() / a.abs());
            }
        }
    }
    checks.push(CheckOutcome {
        name: "position gradient",
        passed: worst < 1e-5,
        detail: format!("max relative error {worst:.2e}"),
    });

    let mut good = 0;
    let trials = instances.min(20);
    for i in 0..trials as u64 {
        let (scenario, f, _, w) = draw(3000 + i, 2, 2, 2, 0.5)?;
        let geometry = ArrayGeometry::new(vec![0.0, 0.05], 0.0, 0.5, 0.05)?;
        let aux = initial_aux(&f, &geometry.positions, &scenario)?;
        let (_, best) = exhaustive_positions(&scenario, &f, &aux, w, &geometry, 0.002)?;
        let x = spga(&geometry.positions, &f, &aux, &scenario, w, &geometry, &PositionOptConfig::default())?;
        if surrogate(&f, &x, &aux, &scenario, w)? >= 0.99 * best {
            good += 1;
        }
    }
    checks.push(CheckOutcome {
        name: "two-antenna search quality",
        passed: 10 * good >= 9 * trials,
        detail: format!("{good} of {trials} within 99% of exhaustive"),
    });
    Ok(checks)
}
