//! Problem-instance types: array geometry, multipath user channels, the
//! radar scene, and seeded random scenario generation.
//!
//! All angles are in radians and all lengths in meters. The steering vector
//! of a linear array with element positions `x` toward angle `θ` has entries
//! `exp(j·2π/λ·x_n·cos θ)`.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CVector = DVector<Complex64>;

/// Absolute slack applied to the minimum-spacing check.
pub const SPACING_SLACK: f64 = 1e-12;

/// Antenna positions together with the moving region and minimum spacing.
///
/// Feasibility is not enforced at construction because optimizer
/// intermediates routinely leave the feasible set; see [`is_feasible`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub positions: Vec<f64>,
    pub x_min: f64,
    pub x_max: f64,
    pub d0: f64,
}

impl ArrayGeometry {
    pub fn new(positions: Vec<f64>, x_min: f64, x_max: f64, d0: f64) -> Result<Self> {
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("antenna positions must be finite"));
        }
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(Error::invalid(format!(
                "region [{x_min}, {x_max}] is empty or non-finite"
            )));
        }
        if !(d0 > 0.0 && d0.is_finite()) {
            return Err(Error::invalid(format!("minimum spacing {d0} must be positive")));
        }
        let n = positions.len() as f64;
        // Tiny relative slack so that e.g. 4 * 0.05 <= 0.2 survives round-off.
        if n * d0 > (x_max - x_min) * (1.0 + 1e-12) + SPACING_SLACK {
            return Err(Error::InfeasibleRegion(format!(
                "{} antennas at spacing {d0} do not fit in [{x_min}, {x_max}]",
                positions.len()
            )));
        }
        Ok(Self {
            positions,
            x_min,
            x_max,
            d0,
        })
    }

    /// Uniform linear array with `spacing` anchored at `x_min`.
    pub fn ula(n: usize, spacing: f64, x_min: f64, x_max: f64, d0: f64) -> Result<Self> {
        let positions = (0..n).map(|i| x_min + i as f64 * spacing).collect();
        let geometry = Self::new(positions, x_min, x_max, d0)?;
        if !is_feasible(&geometry) {
            return Err(Error::InfeasibleRegion(format!(
                "ULA of {n} elements at spacing {spacing} does not fit in [{x_min}, {x_max}] with d0={d0}"
            )));
        }
        Ok(geometry)
    }

    pub fn num_antennas(&self) -> usize {
        self.positions.len()
    }

    pub fn with_positions(&self, positions: Vec<f64>) -> Self {
        Self {
            positions,
            ..self.clone()
        }
    }
}

/// Multipath cluster of one user link: departure angles and complex gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCluster {
    pub angles: Vec<f64>,
    pub gains: Vec<Complex64>,
}

impl PathCluster {
    pub fn new(angles: Vec<f64>, gains: Vec<Complex64>) -> Result<Self> {
        if angles.len() != gains.len() {
            return Err(Error::invalid(format!(
                "path cluster has {} angles but {} gains",
                angles.len(),
                gains.len()
            )));
        }
        if let Some(a) = angles.iter().find(|a| !valid_angle(**a)) {
            return Err(Error::invalid(format!("path angle {a} outside [0, pi]")));
        }
        Ok(Self { angles, gains })
    }

    pub fn num_paths(&self) -> usize {
        self.angles.len()
    }
}

/// A complete problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub wavelength: f64,
    pub num_antennas: usize,
    pub users: Vec<PathCluster>,
    /// Per-user noise power (linear).
    pub user_noise: Vec<f64>,
    pub target_angle: f64,
    pub target_gain: Complex64,
    pub clutter_angles: Vec<f64>,
    pub clutter_gains: Vec<Complex64>,
    pub sensing_noise: f64,
}

impl Scenario {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_clutter(&self) -> usize {
        self.clutter_angles.len()
    }

    /// Phase slope 2π/λ.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::invalid("wavelength must be positive"));
        }
        if self.user_noise.len() != self.users.len() {
            return Err(Error::invalid(format!(
                "{} users but {} noise powers",
                self.users.len(),
                self.user_noise.len()
            )));
        }
        if self.user_noise.iter().any(|s| !(*s > 0.0)) || !(self.sensing_noise > 0.0) {
            return Err(Error::invalid("noise powers must be positive"));
        }
        if self.clutter_angles.len() != self.clutter_gains.len() {
            return Err(Error::invalid("clutter angle/gain length mismatch"));
        }
        let angles = self
            .users
            .iter()
            .flat_map(|u| u.angles.iter())
            .chain(self.clutter_angles.iter())
            .chain(std::iter::once(&self.target_angle));
        for a in angles {
            if !valid_angle(*a) {
                return Err(Error::invalid(format!("angle {a} outside [0, pi]")));
            }
        }
        for u in &self.users {
            if u.angles.len() != u.gains.len() {
                return Err(Error::invalid("path cluster length mismatch"));
            }
        }
        Ok(())
    }
}

/// Inputs to [`generate_scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub num_users: usize,
    pub num_clutter: usize,
    pub num_antennas: usize,
    pub num_paths: usize,
    pub wavelength: f64,
    pub target_angle: f64,
    /// Variance of every complex Gaussian path / scatterer gain.
    pub gain_variance: f64,
    pub user_noise: f64,
    pub sensing_noise: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            num_users: 4,
            num_clutter: 3,
            num_antennas: 4,
            num_paths: 13,
            wavelength: 0.1,
            target_angle: 60f64.to_radians(),
            gain_variance: 1.0,
            user_noise: 1.0,
            sensing_noise: 1.0,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.num_antennas == 0 || self.num_paths == 0 {
            return Err(Error::invalid("K, N and L_p must be positive"));
        }
        if !(self.wavelength > 0.0) || !(self.gain_variance > 0.0) {
            return Err(Error::invalid("wavelength and gain variance must be positive"));
        }
        if !(self.user_noise > 0.0) || !(self.sensing_noise > 0.0) {
            return Err(Error::invalid("noise powers must be positive"));
        }
        if !valid_angle(self.target_angle) {
            return Err(Error::invalid("target angle outside [0, pi]"));
        }
        Ok(())
    }
}

fn valid_angle(a: f64) -> bool {
    (0.0..=PI).contains(&a)
}

/// Far-field array response `exp(j·2π/λ·x_n·cos θ)`.
pub fn steering_vector(positions: &[f64], angle: f64, wavelength: f64) -> Result<CVector> {
    if !(wavelength > 0.0) {
        return Err(Error::invalid(format!("wavelength {wavelength} must be positive")));
    }
    let slope = 2.0 * PI / wavelength * angle.cos();
    Ok(DVector::from_iterator(
        positions.len(),
        positions.iter().map(|x| Complex64::cis(slope * x)),
    ))
}

/// Multipath channel `sqrt(N/L_p) Σ_l ρ_l a(x, θ_l)` of user `k`, with N
/// taken from `positions.len()`.
pub fn user_channel(scenario: &Scenario, k: usize, positions: &[f64]) -> Result<CVector> {
    let cluster = scenario.users.get(k).ok_or(Error::IndexOutOfRange {
        what: "user",
        index: k,
        len: scenario.users.len(),
    })?;
    if !(scenario.wavelength > 0.0) {
        return Err(Error::invalid("wavelength must be positive"));
    }
    let n = positions.len();
    let mut h = CVector::zeros(n);
    if cluster.num_paths() == 0 {
        return Ok(h);
    }
    let beta = scenario.wavenumber();
    for (theta, rho) in cluster.angles.iter().zip(&cluster.gains) {
        let slope = beta * theta.cos();
        for (hn, x) in h.iter_mut().zip(positions) {
            *hn += rho * Complex64::cis(slope * x);
        }
    }
    h *= Complex64::from((n as f64 / cluster.num_paths() as f64).sqrt());
    Ok(h)
}

/// Steering vectors toward the target and every clutter scatterer.
pub fn target_steering(scenario: &Scenario, positions: &[f64]) -> Result<CVector> {
    steering_vector(positions, scenario.target_angle, scenario.wavelength)
}

pub fn clutter_steering(scenario: &Scenario, positions: &[f64]) -> Result<Vec<CVector>> {
    scenario
        .clutter_angles
        .iter()
        .map(|a| steering_vector(positions, *a, scenario.wavelength))
        .collect()
}

/// True iff every position lies in the region and every pair is at least
/// `d0` apart (up to [`SPACING_SLACK`]).
pub fn is_feasible(geometry: &ArrayGeometry) -> bool {
    positions_feasible(&geometry.positions, geometry.x_min, geometry.x_max, geometry.d0)
}

pub(crate) fn positions_feasible(positions: &[f64], x_min: f64, x_max: f64, d0: f64) -> bool {
    if positions
        .iter()
        .any(|p| !p.is_finite() || *p < x_min || *p > x_max)
    {
        return false;
    }
    let mut sorted = positions.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.windows(2).all(|w| w[1] - w[0] >= d0 - SPACING_SLACK)
}

/// Deterministic generator for scenario index `index` under `master_seed`.
///
/// ChaCha8 keyed by the master seed, with the scenario index selecting the
/// 64-bit stream, so every index gets an independent portable substream.
pub fn scenario_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Draws a random scenario from `seed` (stream 0 of [`scenario_rng`]).
pub fn generate_scenario(seed: u64, params: &ScenarioParams) -> Result<Scenario> {
    generate_scenario_with(&mut scenario_rng(seed, 0), params)
}

/// Draws a random scenario from an explicit generator.
///
/// Draw order is fixed (per user: angles then gains; then target gain; then
/// clutter angles and gains) and does not depend on `num_antennas`, so the
/// same stream yields the same channels for every array size.
pub fn generate_scenario_with<R: Rng + ?Sized>(
    rng: &mut R,
    params: &ScenarioParams,
) -> Result<Scenario> {
    params.validate()?;
    let angle = Uniform::new_inclusive(0.0, PI).map_err(|e| Error::invalid(e.to_string()))?;
    let sd = (params.gain_variance / 2.0).sqrt();
    let gain = |rng: &mut R| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * sd, im * sd)
    };

    let mut users = Vec::with_capacity(params.num_users);
    for _ in 0..params.num_users {
        let angles: Vec<f64> = (0..params.num_paths).map(|_| angle.sample(rng)).collect();
        let gains: Vec<Complex64> = (0..params.num_paths).map(|_| gain(rng)).collect();
        users.push(PathCluster { angles, gains });
    }
    let target_gain = gain(rng);
    let clutter_angles: Vec<f64> = (0..params.num_clutter).map(|_| angle.sample(rng)).collect();
    let clutter_gains: Vec<Complex64> = (0..params.num_clutter).map(|_| gain(rng)).collect();

    Ok(Scenario {
        wavelength: params.wavelength,
        num_antennas: params.num_antennas,
        users,
        user_noise: vec![params.user_noise; params.num_users],
        target_angle: params.target_angle,
        target_gain,
        clutter_angles,
        clutter_gains,
        sensing_noise: params.sensing_noise,
    })
}
