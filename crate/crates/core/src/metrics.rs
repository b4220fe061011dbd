//! Closed-form communication and sensing metrics, the weighted objective, and
//! the fractional-programming surrogate.
//!
//! Rates and mutual information are reported in bits; the surrogate is
//! evaluated in nats, and the solver works entirely in nats.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp_core::AuxiliaryState;
use crate::model::{self, CVector, Scenario};

pub type CMatrix = DMatrix<Complex64>;

/// Transmit beamforming matrix `F = [f_1 .. f_K, f_{K+1}]`; the last column
/// carries the dedicated sensing stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Beamformer(CMatrix);

impl Beamformer {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.ncols() == 0 {
            return Err(Error::invalid("beamformer needs at least one column"));
        }
        if matrix.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::invalid("beamformer entries must be finite"));
        }
        Ok(Self(matrix))
    }

    pub fn zeros(num_antennas: usize, num_users: usize) -> Self {
        Self(CMatrix::zeros(num_antennas, num_users + 1))
    }

    pub fn from_columns(columns: &[CVector]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::invalid("beamformer needs at least one column"));
        }
        let n = columns[0].len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("beamformer columns differ in length"));
        }
        Self::new(CMatrix::from_columns(columns))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn num_antennas(&self) -> usize {
        self.0.nrows()
    }

    /// K + 1.
    pub fn num_columns(&self) -> usize {
        self.0.ncols()
    }

    /// `Tr(F^H F)`.
    pub fn power(&self) -> f64 {
        self.0.norm_squared()
    }

    fn check(&self, scenario: &Scenario, positions: &[f64]) -> Result<()> {
        if self.num_antennas() != positions.len() {
            return Err(Error::invalid(format!(
                "beamformer has {} rows but {} antenna positions were given",
                self.num_antennas(),
                positions.len()
            )));
        }
        if self.num_columns() != scenario.num_users() + 1 {
            return Err(Error::invalid(format!(
                "beamformer has {} columns, expected K+1 = {}",
                self.num_columns(),
                scenario.num_users() + 1
            )));
        }
        Ok(())
    }
}

/// Communication / sensing trade-off weights; the sensing weight is always
/// `1 - comm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Weights {
    comm: f64,
}

impl Weights {
    pub fn new(comm_weight: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&comm_weight) {
            return Err(Error::invalid(format!(
                "communication weight {comm_weight} outside [0, 1]"
            )));
        }
        Ok(Self { comm: comm_weight })
    }

    pub fn comm(&self) -> f64 {
        self.comm
    }

    pub fn sense(&self) -> f64 {
        1.0 - self.comm
    }
}

impl Default for Weights {
    fn default() -> Self {
        Self { comm: 0.5 }
    }
}

impl TryFrom<f64> for Weights {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Weights> for f64 {
    fn from(w: Weights) -> f64 {
        w.comm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sinr: Vec<f64>,
    /// Per-user rate in bits.
    pub rates: Vec<f64>,
    pub scnr: f64,
    /// Sensing mutual information in bits.
    pub sensing_mi: f64,
    /// Weighted objective in bits.
    pub objective: f64,
}

impl MetricsReport {
    pub fn sum_rate(&self) -> f64 {
        self.rates.iter().sum()
    }
}

/// Every link vector the metrics need, evaluated at one set of positions.
#[derive(Debug, Clone)]
pub struct Links {
    pub channels: Vec<CVector>,
    pub target: CVector,
    pub clutter: Vec<CVector>,
}

impl Links {
    pub fn new(scenario: &Scenario, positions: &[f64]) -> Result<Self> {
        let channels = (0..scenario.num_users())
            .map(|k| model::user_channel(scenario, k, positions))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            channels,
            target: model::target_steering(scenario, positions)?,
            clutter: model::clutter_steering(scenario, positions)?,
        })
    }

    /// `Σ_j |h_k^H f_j|²` over all K+1 columns.
    fn user_received_power(&self, k: usize, f: &CMatrix) -> f64 {
        let h = &self.channels[k];
        f.column_iter().map(|col| h.dotc(&col).norm_sqr()).sum()
    }

    /// `‖α a^H F‖²` for a steering vector `a`.
    fn echo_power(a: &CVector, gain: Complex64, f: &CMatrix) -> f64 {
        gain.norm_sqr() * f.column_iter().map(|col| a.dotc(&col).norm_sqr()).sum::<f64>()
    }

    fn target_echo(&self, scenario: &Scenario, f: &CMatrix) -> f64 {
        Self::echo_power(&self.target, scenario.target_gain, f)
    }

    fn clutter_echo(&self, scenario: &Scenario, f: &CMatrix) -> f64 {
        self.clutter
            .iter()
            .zip(&scenario.clutter_gains)
            .map(|(a, g)| Self::echo_power(a, *g, f))
            .sum()
    }

    pub(crate) fn sinr(&self, scenario: &Scenario, k: usize, f: &CMatrix) -> f64 {
        let h = &self.channels[k];
        let mut useful = 0.0;
        let mut interference = 0.0;
        for (j, col) in f.column_iter().enumerate() {
            let p = h.dotc(&col).norm_sqr();
            if j == k {
                useful = p;
            } else {
                interference += p;
            }
        }
        useful / (interference + scenario.user_noise[k])
    }

    pub(crate) fn scnr(&self, scenario: &Scenario, f: &CMatrix) -> f64 {
        self.target_echo(scenario, f) / (self.clutter_echo(scenario, f) + scenario.sensing_noise)
    }

    pub(crate) fn surrogate(
        &self,
        scenario: &Scenario,
        f: &CMatrix,
        aux: &AuxiliaryState,
        weights: Weights,
    ) -> f64 {
        let k_users = scenario.num_users();
        let (wc, ws) = (weights.comm(), weights.sense());
        let dual = |mu: f64| (1.0 + mu).ln() - mu;

        let mut comm = 0.0;
        for k in 0..k_users {
            let mu = aux.mu[k];
            let xi = aux.xi_c[k];
            let signal = self.channels[k].dotc(&f.column(k));
            let denom = self.user_received_power(k, f) + scenario.user_noise[k];
            comm += dual(mu) + 2.0 * (1.0 + mu).sqrt() * (xi * signal).re
                - xi.norm_sqr() * denom;
        }

        let mu_s = aux.mu[k_users];
        let alpha = scenario.target_gain;
        let projected: Complex64 = f
            .column_iter()
            .zip(aux.xi_s.iter())
            .map(|(col, xi)| self.target.dotc(&col) * xi)
            .sum();
        let denom = self.clutter_echo(scenario, f)
            + self.target_echo(scenario, f)
            + scenario.sensing_noise;
        let xi_s_norm = aux.xi_s.iter().map(|x| x.norm_sqr()).sum::<f64>();
        let sense = dual(mu_s) + 2.0 * (1.0 + mu_s).sqrt() * (alpha * projected).re
            - xi_s_norm * denom;

        wc * comm + ws * sense
    }
}

/// SINR of user `k`; the sensing column counts as interference.
pub fn sinr(k: usize, f: &Beamformer, scenario: &Scenario, positions: &[f64]) -> Result<f64> {
    if k >= scenario.num_users() {
        return Err(Error::IndexOutOfRange {
            what: "user",
            index: k,
            len: scenario.num_users(),
        });
    }
    f.check(scenario, positions)?;
    let h = model::user_channel(scenario, k, positions)?;
    let mut useful = 0.0;
    let mut interference = 0.0;
    for (j, col) in f.matrix().column_iter().enumerate() {
        let p = h.dotc(&col).norm_sqr();
        if j == k {
            useful = p;
        } else {
            interference += p;
        }
    }
    Ok(useful / (interference + scenario.user_noise[k]))
}

/// Radar signal-to-clutter-plus-noise ratio.
pub fn scnr(f: &Beamformer, scenario: &Scenario, positions: &[f64]) -> Result<f64> {
    f.check(scenario, positions)?;
    Ok(Links::new(scenario, positions)?.scnr(scenario, f.matrix()))
}

/// Weighted objective `ϖ_c Σ_k log2(1+SINR_k) + ϖ_s log2(1+SCNR)` in bits.
pub fn objective(
    f: &Beamformer,
    positions: &[f64],
    scenario: &Scenario,
    weights: Weights,
) -> Result<f64> {
    Ok(report(f, positions, scenario, weights)?.objective)
}

/// All metrics at once.
pub fn report(
    f: &Beamformer,
    positions: &[f64],
    scenario: &Scenario,
    weights: Weights,
) -> Result<MetricsReport> {
    f.check(scenario, positions)?;
    let links = Links::new(scenario, positions)?;
    Ok(report_with(&links, f, scenario, weights))
}

pub(crate) fn report_with(
    links: &Links,
    f: &Beamformer,
    scenario: &Scenario,
    weights: Weights,
) -> MetricsReport {
    let sinr: Vec<f64> = (0..scenario.num_users())
        .map(|k| links.sinr(scenario, k, f.matrix()))
        .collect();
    let rates: Vec<f64> = sinr.iter().map(|s| s.ln_1p() / std::f64::consts::LN_2).collect();
    let scnr = links.scnr(scenario, f.matrix());
    let sensing_mi = scnr.ln_1p() / std::f64::consts::LN_2;
    let objective = weights.comm() * rates.iter().sum::<f64>() + weights.sense() * sensing_mi;
    MetricsReport {
        sinr,
        rates,
        scnr,
        sensing_mi,
        objective,
    }
}

/// Objective in nats: `ϖ_c Σ_k ln(1+SINR_k) + ϖ_s ln(1+SCNR)`.
pub fn objective_nats(
    f: &Beamformer,
    positions: &[f64],
    scenario: &Scenario,
    weights: Weights,
) -> Result<f64> {
    Ok(objective(f, positions, scenario, weights)? * std::f64::consts::LN_2)
}

/// Fractional-programming surrogate of the objective, in nats.
///
/// Equals [`objective_nats`] when the auxiliaries are at their closed-form
/// optimum for `(f, positions)` and lower-bounds it otherwise.
pub fn surrogate(
    f: &Beamformer,
    positions: &[f64],
    aux: &AuxiliaryState,
    scenario: &Scenario,
    weights: Weights,
) -> Result<f64> {
    f.check(scenario, positions)?;
    aux.check(scenario.num_users())?;
    let links = Links::new(scenario, positions)?;
    Ok(links.surrogate(scenario, f.matrix(), aux, weights))
}
