//! Alternating optimization over the beamformer, antenna positions and the
//! surrogate auxiliaries, plus the two baselines.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp_core::{
    assemble_with, beamformer_update, initial_aux_with, update_mu_with, update_xi_with,
    AuxiliaryState, BisectionConfig,
};
use crate::metrics::{report_with, Beamformer, CMatrix, Links, MetricsReport, Weights};
use crate::model::{is_feasible, ArrayGeometry, CVector, Scenario};
use crate::position_opt::{dga_with, spga_with, PositionOptConfig, SurrogateLandscape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    /// Search-based projected gradient ascent on movable antennas.
    #[serde(rename = "SPGA-FBF-MA")]
    SpgaFbfMa,
    /// Direct gradient ascent on movable antennas.
    #[serde(rename = "DGA-FBF-MA")]
    DgaFbfMa,
    /// Beamforming only, fixed half-wavelength ULA.
    #[serde(rename = "BF-FPA")]
    BfFpa,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::SpgaFbfMa, Algorithm::DgaFbfMa, Algorithm::BfFpa];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::SpgaFbfMa => "SPGA-FBF-MA",
            Algorithm::DgaFbfMa => "DGA-FBF-MA",
            Algorithm::BfFpa => "BF-FPA",
        }
    }

    pub fn moves_antennas(&self) -> bool {
        !matches!(self, Algorithm::BfFpa)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_uppercase().replace('_', "-");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == key || a.name().split('-').next() == Some(key.as_str()))
            .ok_or_else(|| Error::Config(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Transmit power budget, linear watts.
    pub power_budget: f64,
    pub weights: Weights,
    /// Relative surrogate change below which the outer loop stops.
    pub outer_tol: f64,
    pub outer_max_iters: usize,
    pub position: PositionOptConfig,
    pub bisection: BisectionConfig,
    pub algorithm: Algorithm,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            power_budget: 1.0,
            weights: Weights::default(),
            outer_tol: 1e-4,
            outer_max_iters: 100,
            position: PositionOptConfig::default(),
            bisection: BisectionConfig::default(),
            algorithm: Algorithm::SpgaFbfMa,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.power_budget > 0.0 && self.power_budget.is_finite()) {
            return Err(Error::invalid("power budget must be positive"));
        }
        if !(self.outer_tol > 0.0) || self.outer_max_iters == 0 {
            return Err(Error::invalid("outer tolerance and iteration budget must be positive"));
        }
        self.position.validate()
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub beamformer: Beamformer,
    pub positions: Vec<f64>,
    pub metrics: MetricsReport,
    /// Surrogate (nats) at the initial point and after every outer iteration.
    pub surrogate_trajectory: Vec<f64>,
    /// Objective (bits) at the same points.
    pub objective_trajectory: Vec<f64>,
    pub iterations: usize,
    pub wall_time: Duration,
}

/// Half-wavelength ULA at `x_min`, channel-matched equal-power columns, and
/// tight auxiliaries.
pub fn initialize(
    scenario: &Scenario,
    geometry: &ArrayGeometry,
    cfg: &SolverConfig,
) -> Result<(Beamformer, Vec<f64>, AuxiliaryState)> {
    scenario.validate()?;
    cfg.validate()?;
    let n = geometry.num_antennas();
    let ula = ArrayGeometry::ula(
        n,
        scenario.wavelength / 2.0,
        geometry.x_min,
        geometry.x_max,
        geometry.d0,
    )?;
    let positions = ula.positions;
    let links = Links::new(scenario, &positions)?;

    let per_column = (cfg.power_budget / (scenario.num_users() + 1) as f64).sqrt();
    let unit = |v: &CVector| -> Option<CVector> {
        let norm = v.norm();
        (norm > 0.0).then(|| v * Complex64::from(per_column / norm))
    };
    let sensing = unit(&links.target).expect("steering vectors have unit-modulus entries");
    let mut columns: Vec<CVector> = links
        .channels
        .iter()
        .map(|h| unit(h).unwrap_or_else(|| sensing.clone()))
        .collect();
    columns.push(sensing);
    let f = Beamformer::new(CMatrix::from_columns(&columns))?;
    let aux = initial_aux_with(&links, scenario, &f);
    Ok((f, positions, aux))
}

/// Runs the alternating optimization: per outer iteration update F, then
/// the positions (unless fixed), then μ, then ξ.
pub fn solve(scenario: &Scenario, geometry: &ArrayGeometry, cfg: &SolverConfig) -> Result<SolveResult> {
    let started = Instant::now();
    let (mut f, mut x, mut aux) = initialize(scenario, geometry, cfg)?;
    let weights = cfg.weights;
    let mut links = Links::new(scenario, &x)?;

    let mut value = links.surrogate(scenario, f.matrix(), &aux, weights);
    let mut surrogate_trajectory = vec![value];
    let mut objective_trajectory = vec![report_with(&links, &f, scenario, weights).objective];
    let mut iterations = 0;

    for t in 1..=cfg.outer_max_iters {
        let at = |e: Error| Error::AtIteration {
            iteration: t,
            source: Box::new(e),
        };
        iterations = t;

        let qf = assemble_with(&links, scenario, &aux, weights);
        let (f_new, _) = beamformer_update(&qf, cfg.power_budget, &cfg.bisection).map_err(at)?;
        // The bisection tolerance can cost a sliver of value; never step down.
        if qf.value(f_new.matrix()) >= qf.value(f.matrix()) {
            f = f_new;
        }

        if cfg.algorithm.moves_antennas() {
            let landscape = SurrogateLandscape::new(scenario, &f, &aux, weights).map_err(at)?;
            let mut probe = landscape.probe(&x);
            let candidate = match cfg.algorithm {
                Algorithm::SpgaFbfMa => spga_with(&mut probe, geometry, &cfg.position),
                _ => dga_with(&mut probe, geometry, &cfg.position),
            }
            .map_err(at)?;
            if landscape.value(&candidate) >= landscape.value(&x) {
                x = candidate;
                links = Links::new(scenario, &x)?;
            }
        }

        let mu = update_mu_with(&links, scenario, f.matrix(), &aux);
        let (xi_c, xi_s) = update_xi_with(&links, scenario, f.matrix(), &mu);
        aux = AuxiliaryState { mu, xi_c, xi_s };

        let next = links.surrogate(scenario, f.matrix(), &aux, weights);
        surrogate_trajectory.push(next);
        objective_trajectory.push(report_with(&links, &f, scenario, weights).objective);
        let change = (next - value).abs() / value.abs().max(1e-12);
        value = next;
        if change < cfg.outer_tol {
            break;
        }
    }

    debug_assert!(is_feasible(&geometry.with_positions(x.clone())));
    let metrics = report_with(&links, &f, scenario, weights);
    Ok(SolveResult {
        beamformer: f,
        positions: x,
        metrics,
        surrogate_trajectory,
        objective_trajectory,
        iterations,
        wall_time: started.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_scenario, user_channel, PathCluster, ScenarioParams};
    use std::f64::consts::PI;

    fn region(n: usize) -> ArrayGeometry {
        ArrayGeometry::ula(n, 0.05, 0.0, 1.0, 0.05).unwrap()
    }

    fn db(dbm: f64) -> f64 {
        10f64.powf((dbm - 30.0) / 10.0)
    }

    #[test]
    fn algorithm_names_round_trip() {
        for alg in Algorithm::ALL {
            assert_eq!(alg.name().parse::<Algorithm>().unwrap(), alg);
            let json = serde_json::to_string(&alg).unwrap();
            assert_eq!(json, format!("\"{}\"", alg.name()));
        }
        assert_eq!("spga".parse::<Algorithm>().unwrap(), Algorithm::SpgaFbfMa);
        assert_eq!("bf_fpa".parse::<Algorithm>().unwrap(), Algorithm::BfFpa);
        assert!("gradient".parse::<Algorithm>().is_err());
    }

    #[test]
    fn initial_point_is_ula_at_full_power() {
        let scenario = generate_scenario(0, &ScenarioParams::default()).unwrap();
        let cfg = SolverConfig {
            power_budget: 3.5,
            ..Default::default()
        };
        let (f, x, aux) = initialize(&scenario, &region(4), &cfg).unwrap();
        let expect = [0.0, 0.05, 0.1, 0.15];
        for (a, b) in x.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((f.power() - 3.5).abs() < 1e-12);
        for col in f.matrix().column_iter() {
            assert!((col.norm_squared() - 0.7).abs() < 1e-12);
        }
        assert_eq!(aux.mu.len(), 5);
    }

    #[test]
    fn ula_outside_region_is_rejected() {
        let scenario = generate_scenario(0, &ScenarioParams::default()).unwrap();
        let geometry = ArrayGeometry {
            positions: vec![0.0; 4],
            x_min: 0.0,
            x_max: 0.12,
            d0: 0.03,
        };
        assert!(solve(&scenario, &geometry, &SolverConfig::default()).is_err());
    }

    #[test]
    fn single_user_converges_to_full_power_mrt() {
        let scenario = Scenario {
            wavelength: 0.1,
            num_antennas: 2,
            users: vec![PathCluster::new(vec![1.1], vec![Complex64::new(0.6, 0.8)]).unwrap()],
            user_noise: vec![1.0],
            target_angle: PI / 3.0,
            target_gain: Complex64::new(1.0, 0.0),
            clutter_angles: vec![],
            clutter_gains: vec![],
            sensing_noise: 1.0,
        };
        let cfg = SolverConfig {
            power_budget: 2.0,
            weights: Weights::new(1.0).unwrap(),
            algorithm: Algorithm::BfFpa,
            ..Default::default()
        };
        let out = solve(&scenario, &region(2), &cfg).unwrap();
        let h = user_channel(&scenario, 0, &out.positions).unwrap();
        let f1 = out.beamformer.matrix().column(0).into_owned();
        let gain = h.dotc(&f1).norm();
        assert!((gain - h.norm() * f1.norm()).abs() <= 1e-6 * gain);
        assert!((out.beamformer.power() - 2.0).abs() <= 1e-6);
        assert!((f1.norm_squared() - 2.0).abs() <= 1e-6);
    }

    #[test]
    fn vanishing_power_gives_vanishing_objective() {
        let scenario = generate_scenario(2, &ScenarioParams::default()).unwrap();
        for alg in Algorithm::ALL {
            let cfg = SolverConfig {
                power_budget: 1e-12,
                algorithm: alg,
                ..Default::default()
            };
            let out = solve(&scenario, &region(4), &cfg).unwrap();
            assert!(out.metrics.objective < 1e-9, "{alg}: {}", out.metrics.objective);
        }
    }

    #[test]
    fn trajectories_are_monotone_and_ma_beats_fixed() {
        for seed in 0..3 {
            let scenario = generate_scenario(seed, &ScenarioParams::default()).unwrap();
            let mut finals = Vec::new();
            for alg in Algorithm::ALL {
                let cfg = SolverConfig {
                    power_budget: db(35.0),
                    algorithm: alg,
                    ..Default::default()
                };
                let out = solve(&scenario, &region(4), &cfg).unwrap();
                for w in out.surrogate_trajectory.windows(2) {
                    assert!(w[1] >= w[0] - 1e-9, "{alg} seed {seed}: {} -> {}", w[0], w[1]);
                }
                assert_eq!(out.surrogate_trajectory.len(), out.iterations + 1);
                assert!(out.beamformer.power() <= cfg.power_budget * (1.0 + 1e-8));
                assert!(is_feasible(&region(4).with_positions(out.positions.clone())));
                finals.push(out.metrics.objective);
            }
            assert!(finals[0] >= finals[2], "seed {seed}: {finals:?}");
        }
    }

    #[test]
    fn fixed_array_never_moves() {
        let scenario = generate_scenario(4, &ScenarioParams::default()).unwrap();
        let cfg = SolverConfig {
            algorithm: Algorithm::BfFpa,
            ..Default::default()
        };
        let (_, start, _) = initialize(&scenario, &region(4), &cfg).unwrap();
        let out = solve(&scenario, &region(4), &cfg).unwrap();
        assert_eq!(out.positions, start);
    }

    #[test]
    fn solves_are_deterministic() {
        let scenario = generate_scenario(5, &ScenarioParams::default()).unwrap();
        let cfg = SolverConfig::default();
        let a = solve(&scenario, &region(4), &cfg).unwrap();
        let b = solve(&scenario, &region(4), &cfg).unwrap();
        assert_eq!(a.surrogate_trajectory, b.surrogate_trajectory);
        assert_eq!(a.objective_trajectory, b.objective_trajectory);
        assert_eq!(a.positions, b.positions);
        assert_eq!(a.beamformer, b.beamformer);
    }

    #[test]
    fn reported_objective_matches_trajectory_end() {
        let scenario = generate_scenario(6, &ScenarioParams::default()).unwrap();
        let out = solve(&scenario, &region(4), &SolverConfig::default()).unwrap();
        assert_eq!(*out.objective_trajectory.last().unwrap(), out.metrics.objective);
        let w = SolverConfig::default().weights;
        let recombined = w.comm() * out.metrics.sum_rate() + w.sense() * out.metrics.sensing_mi;
        assert!((recombined - out.metrics.objective).abs() < 1e-9);
    }
}
