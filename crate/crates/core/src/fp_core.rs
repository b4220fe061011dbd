//! Closed-form block updates of the fractional-programming surrogate:
//! the dual-transform weights `μ`, the quadratic-transform auxiliaries `ξ`,
//! and the power-constrained beamformer via KKT conditions and bisection on
//! the dual variable.

use nalgebra::linalg::Cholesky;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{Beamformer, CMatrix, Links, Weights};
use crate::model::{CVector, Scenario};

/// Auxiliary variables of the surrogate.
///
/// `mu` has K+1 entries (the last for sensing), `xi_c` has K, `xi_s` has K+1.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryState {
    pub mu: Vec<f64>,
    pub xi_c: Vec<Complex64>,
    pub xi_s: Vec<Complex64>,
}

impl AuxiliaryState {
    pub fn zeros(num_users: usize) -> Self {
        Self {
            mu: vec![0.0; num_users + 1],
            xi_c: vec![Complex64::new(0.0, 0.0); num_users],
            xi_s: vec![Complex64::new(0.0, 0.0); num_users + 1],
        }
    }

    pub(crate) fn check(&self, num_users: usize) -> Result<()> {
        if self.mu.len() != num_users + 1
            || self.xi_c.len() != num_users
            || self.xi_s.len() != num_users + 1
        {
            return Err(Error::invalid(format!(
                "auxiliary lengths (mu {}, xi_c {}, xi_s {}) do not match K = {num_users}",
                self.mu.len(),
                self.xi_c.len(),
                self.xi_s.len()
            )));
        }
        if self.mu.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return Err(Error::invalid("mu entries must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// The beamformer sub-problem written as
/// `Σ_k (2 Re{φ_kᴴ f_k} − f_kᴴ Λ f_k) + offset`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    /// Hermitian PSD matrix shared by every column.
    pub lambda: CMatrix,
    /// Column k is φ_k.
    pub phi: CMatrix,
    /// F-independent remainder of the surrogate.
    pub offset: f64,
}

impl QuadraticForm {
    pub fn value(&self, f: &CMatrix) -> f64 {
        let mut acc = self.offset;
        for (fk, phik) in f.column_iter().zip(self.phi.column_iter()) {
            let lf = &self.lambda * fk;
            acc += 2.0 * phik.dotc(&fk).re - fk.dotc(&lf).re;
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BisectionConfig {
    pub lambda_min: f64,
    /// Upper bracket; `None` derives `‖Φ‖_F / √P_0`.
    pub lambda_max: Option<f64>,
    /// Power tolerance relative to the budget: ε = tolerance · P_0.
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for BisectionConfig {
    fn default() -> Self {
        Self {
            lambda_min: 0.0,
            lambda_max: None,
            tolerance: 1e-8,
            max_iters: 200,
        }
    }
}

/// Builds Λ, Φ and the constant remainder from the current positions and
/// auxiliaries.
pub fn assemble_quadratic_form(
    scenario: &Scenario,
    positions: &[f64],
    aux: &AuxiliaryState,
    weights: Weights,
) -> Result<QuadraticForm> {
    aux.check(scenario.num_users())?;
    let links = Links::new(scenario, positions)?;
    Ok(assemble_with(&links, scenario, aux, weights))
}

pub(crate) fn assemble_with(
    links: &Links,
    scenario: &Scenario,
    aux: &AuxiliaryState,
    weights: Weights,
) -> QuadraticForm {
    let n = links.target.len();
    let k_users = scenario.num_users();
    let (wc, ws) = (weights.comm(), weights.sense());
    let xi_s_norm: f64 = aux.xi_s.iter().map(|x| x.norm_sqr()).sum();

    let mut lambda = CMatrix::zeros(n, n);
    for (h, xi) in links.channels.iter().zip(&aux.xi_c) {
        lambda += h * h.adjoint() * Complex64::from(wc * xi.norm_sqr());
    }
    let mut scatter = &links.target * links.target.adjoint() * Complex64::from(scenario.target_gain.norm_sqr());
    for (a, g) in links.clutter.iter().zip(&scenario.clutter_gains) {
        scatter += a * a.adjoint() * Complex64::from(g.norm_sqr());
    }
    lambda += scatter * Complex64::from(ws * xi_s_norm);
    lambda = (&lambda + lambda.adjoint()) * Complex64::from(0.5);

    let sense_scale = ws * (1.0 + aux.mu[k_users]).sqrt();
    let alpha_conj = scenario.target_gain.conj();
    let mut phi = CMatrix::zeros(n, k_users + 1);
    for j in 0..=k_users {
        let mut col: CVector = &links.target * (alpha_conj * aux.xi_s[j].conj() * sense_scale);
        if j < k_users {
            let c = aux.xi_c[j].conj() * (wc * (1.0 + aux.mu[j]).sqrt());
            col += &links.channels[j] * c;
        }
        phi.set_column(j, &col);
    }

    let dual = |mu: f64| (1.0 + mu).ln() - mu;
    let mut offset = ws * dual(aux.mu[k_users]) - ws * xi_s_norm * scenario.sensing_noise;
    for k in 0..k_users {
        offset += wc * dual(aux.mu[k]) - wc * aux.xi_c[k].norm_sqr() * scenario.user_noise[k];
    }

    QuadraticForm {
        lambda,
        phi,
        offset,
    }
}

/// Relative eigenvalue floor below which Λ is treated as singular.
const RANK_TOL: f64 = 1e-12;

/// Maximizes the quadratic form subject to `Tr(Fᴴ F) ≤ P_0`.
///
/// Returns the beamformer and the optimal dual variable λ*. When the
/// unconstrained maximizer `Λ^† Φ` exists and fits the budget it is returned
/// with λ* = 0; otherwise `F(λ) = (Λ + λI)⁻¹ Φ` with λ found by bisection on
/// the strictly decreasing `h(λ) = Tr(F(λ)ᴴ F(λ)) − P_0`.
pub fn beamformer_update(
    qf: &QuadraticForm,
    power_budget: f64,
    cfg: &BisectionConfig,
) -> Result<(Beamformer, f64)> {
    if !(power_budget > 0.0 && power_budget.is_finite()) {
        return Err(Error::invalid(format!("power budget {power_budget} must be positive")));
    }
    if !(cfg.tolerance > 0.0) || cfg.max_iters == 0 {
        return Err(Error::invalid("bisection tolerance and iteration budget must be positive"));
    }
    if let Some(hi) = cfg.lambda_max {
        if !(hi > cfg.lambda_min) {
            return Err(Error::invalid("lambda_max must exceed lambda_min"));
        }
    }
    if !(cfg.lambda_min >= 0.0) {
        return Err(Error::invalid("lambda_min must be nonnegative"));
    }
    let n = qf.lambda.nrows();
    let phi_norm = qf.phi.norm();
    if phi_norm == 0.0 {
        return Ok((Beamformer::new(CMatrix::zeros(n, qf.phi.ncols()))?, 0.0));
    }
    let eps = cfg.tolerance * power_budget;

    if cfg.lambda_min == 0.0 {
        if let Some(f0) = unconstrained_maximizer(qf) {
            if f0.norm_squared() <= power_budget {
                return Ok((Beamformer::new(f0)?, 0.0));
            }
        }
    }

    let h = |lam: f64| -> Result<(CMatrix, f64)> {
        let f = shifted_solve(&qf.lambda, &qf.phi, lam)?;
        let gap = f.norm_squared() - power_budget;
        Ok((f, gap))
    };

    let mut lo = cfg.lambda_min;
    if lo > 0.0 {
        let (f_lo, h_lo) = h(lo)?;
        if h_lo.abs() <= eps {
            return Ok((Beamformer::new(f_lo)?, lo));
        }
        if h_lo < -eps {
            let hi = cfg.lambda_max.unwrap_or(lo);
            return Err(Error::BisectionBracket {
                lambda_min: lo,
                lambda_max: hi,
                h_min: h_lo,
                h_max: f64::NAN,
            });
        }
    }
    // ‖F(λ)‖_F ≤ ‖Φ‖_F / λ, so this bracket already has h ≤ 0.
    let mut hi = cfg
        .lambda_max
        .unwrap_or(phi_norm / power_budget.sqrt())
        .max(lo + f64::MIN_POSITIVE);
    let (mut f_hi, mut h_hi) = h(hi)?;
    let mut doublings = 0;
    while h_hi > 0.0 {
        doublings += 1;
        if doublings > 200 {
            return Err(Error::BisectionBracket {
                lambda_min: lo,
                lambda_max: hi,
                h_min: f64::INFINITY,
                h_max: h_hi,
            });
        }
        lo = hi;
        hi *= 2.0;
        (f_hi, h_hi) = h(hi)?;
    }
    if h_hi.abs() <= eps {
        return Ok((Beamformer::new(f_hi)?, hi));
    }

    let mut last = f_hi;
    let mut last_lambda = hi;
    let mut last_gap = h_hi;
    for _ in 0..cfg.max_iters {
        let mid = 0.5 * (lo + hi);
        let (f, gap) = h(mid)?;
        if gap.abs() <= eps {
            return Ok((Beamformer::new(f)?, mid));
        }
        if gap > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        last = f;
        last_lambda = mid;
        last_gap = gap;
    }
    Err(Error::BisectionNotConverged {
        iterations: cfg.max_iters,
        lambda: last_lambda,
        gap: last_gap,
        last: Box::new(Beamformer::new(last)?),
    })
}

/// `Λ^† Φ` when the unconstrained problem is bounded, i.e. Φ lies in the
/// range of Λ. A nonsingular Λ goes through Cholesky; a singular one through
/// its eigendecomposition with small eigenvalues dropped.
fn unconstrained_maximizer(qf: &QuadraticForm) -> Option<CMatrix> {
    let eig = qf.lambda.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_eig == 0.0 {
        return None;
    }
    let floor = RANK_TOL * max_eig;
    let min_eig = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if min_eig > floor {
        if let Some(chol) = Cholesky::new(qf.lambda.clone()) {
            return Some(chol.solve(&qf.phi));
        }
    }

    let u = &eig.eigenvectors;
    let mut coeffs = u.adjoint() * &qf.phi;
    let mut leak = 0.0;
    for (i, d) in eig.eigenvalues.iter().enumerate() {
        let mut row = coeffs.row_mut(i);
        if *d > floor {
            row /= Complex64::from(*d);
        } else {
            leak += row.norm_squared();
            row.fill(Complex64::new(0.0, 0.0));
        }
    }
    if leak.sqrt() > 1e-9 * qf.phi.norm() {
        return None;
    }
    Some(u * coeffs)
}

/// `(Λ + λI)⁻¹ Φ` by Cholesky of the shifted matrix.
fn shifted_solve(lambda: &CMatrix, phi: &CMatrix, shift: f64) -> Result<CMatrix> {
    let n = lambda.nrows();
    let mut shifted = lambda.clone();
    for i in 0..n {
        shifted[(i, i)] += Complex64::from(shift);
    }
    Cholesky::new(shifted)
        .map(|c| c.solve(phi))
        .ok_or_else(|| Error::Numerical(format!("Λ + {shift}·I is not positive definite")))
}

/// Closed-form maximizer of the surrogate over μ with ξ fixed, clamped at 0.
pub fn update_mu(
    f: &Beamformer,
    positions: &[f64],
    aux: &AuxiliaryState,
    scenario: &Scenario,
) -> Result<Vec<f64>> {
    aux.check(scenario.num_users())?;
    let links = Links::new(scenario, positions)?;
    Ok(update_mu_with(&links, scenario, f.matrix(), aux))
}

pub(crate) fn mu_from_correlation(r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    0.5 * (r * r + r * (r * r + 4.0).sqrt())
}

pub(crate) fn update_mu_with(
    links: &Links,
    scenario: &Scenario,
    f: &CMatrix,
    aux: &AuxiliaryState,
) -> Vec<f64> {
    let k_users = scenario.num_users();
    let mut mu = Vec::with_capacity(k_users + 1);
    for k in 0..k_users {
        let r = (aux.xi_c[k] * links.channels[k].dotc(&f.column(k))).re;
        mu.push(mu_from_correlation(r));
    }
    let projected: Complex64 = f
        .column_iter()
        .zip(&aux.xi_s)
        .map(|(col, xi)| links.target.dotc(&col) * xi)
        .sum();
    mu.push(mu_from_correlation((scenario.target_gain * projected).re));
    mu
}

/// Closed-form maximizers of the surrogate over `ξ^c` and `ξ^s` with μ fixed.
pub fn update_xi(
    f: &Beamformer,
    positions: &[f64],
    mu: &[f64],
    scenario: &Scenario,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    if mu.len() != scenario.num_users() + 1 {
        return Err(Error::invalid("mu must have K+1 entries"));
    }
    if mu.iter().any(|m| !(*m >= 0.0)) {
        return Err(Error::invalid("mu entries must be nonnegative"));
    }
    let links = Links::new(scenario, positions)?;
    Ok(update_xi_with(&links, scenario, f.matrix(), mu))
}

pub(crate) fn update_xi_with(
    links: &Links,
    scenario: &Scenario,
    f: &CMatrix,
    mu: &[f64],
) -> (Vec<Complex64>, Vec<Complex64>) {
    let k_users = scenario.num_users();
    let xi_c = (0..k_users)
        .map(|k| {
            let h = &links.channels[k];
            let mut total = scenario.user_noise[k];
            let mut useful = Complex64::new(0.0, 0.0);
            for (j, col) in f.column_iter().enumerate() {
                let z = h.dotc(&col);
                total += z.norm_sqr();
                if j == k {
                    useful = z;
                }
            }
            useful.conj() * ((1.0 + mu[k]).sqrt() / total)
        })
        .collect();

    let alpha = scenario.target_gain;
    let target_row: Vec<Complex64> = f.column_iter().map(|col| links.target.dotc(&col)).collect();
    let mut total = scenario.sensing_noise
        + alpha.norm_sqr() * target_row.iter().map(|z| z.norm_sqr()).sum::<f64>();
    for (a, g) in links.clutter.iter().zip(&scenario.clutter_gains) {
        total += g.norm_sqr() * f.column_iter().map(|col| a.dotc(&col).norm_sqr()).sum::<f64>();
    }
    let scale = (1.0 + mu[k_users]).sqrt() / total;
    // ξ^s = √(1+μ) α* Fᴴ a_s / total; (Fᴴ a_s)_j = conj(a_sᴴ f_j).
    let xi_s = target_row
        .iter()
        .map(|z| alpha.conj() * z.conj() * scale)
        .collect();
    (xi_c, xi_s)
}

/// Starting auxiliaries: μ at the current SINRs/SCNR, then ξ from
/// [`update_xi`], which makes the surrogate tight at `(f, positions)`.
pub fn initial_aux(f: &Beamformer, positions: &[f64], scenario: &Scenario) -> Result<AuxiliaryState> {
    let links = Links::new(scenario, positions)?;
    Ok(initial_aux_with(&links, scenario, f))
}

pub(crate) fn initial_aux_with(links: &Links, scenario: &Scenario, f: &Beamformer) -> AuxiliaryState {
    let mut mu: Vec<f64> = (0..scenario.num_users())
        .map(|k| links.sinr(scenario, k, f.matrix()))
        .collect();
    mu.push(links.scnr(scenario, f.matrix()));
    let (xi_c, xi_s) = update_xi_with(links, scenario, f.matrix(), &mu);
    AuxiliaryState { mu, xi_c, xi_s }
}

/// Alternates [`update_mu`] and [`update_xi`] at fixed `(f, positions)` until
/// neither μ nor ξ moves or `max_rounds` is spent.
pub fn aux_fixed_point(
    f: &Beamformer,
    positions: &[f64],
    start: &AuxiliaryState,
    scenario: &Scenario,
    max_rounds: usize,
) -> Result<AuxiliaryState> {
    start.check(scenario.num_users())?;
    let links = Links::new(scenario, positions)?;
    let mut aux = start.clone();
    for _ in 0..max_rounds {
        let mu = update_mu_with(&links, scenario, f.matrix(), &aux);
        let (xi_c, xi_s) = update_xi_with(&links, scenario, f.matrix(), &mu);
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(1.0);
        let moved = mu
            .iter()
            .zip(&aux.mu)
            .map(|(a, b)| rel(*a, *b))
            .chain(
                xi_c.iter()
                    .chain(&xi_s)
                    .zip(aux.xi_c.iter().chain(&aux.xi_s))
                    .map(|(a, b)| (a - b).norm() / a.norm().max(1.0)),
            )
            .fold(0.0, f64::max);
        aux = AuxiliaryState { mu, xi_c, xi_s };
        if moved < 1e-15 {
            break;
        }
    }
    Ok(aux)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{self, objective_nats, surrogate};
    use crate::model::{generate_scenario, scenario_rng, PathCluster, ScenarioParams};
    use nalgebra::DMatrix;
    use rand::RngExt;
    use rand_distr::StandardNormal;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cn(rng: &mut impl rand::Rng) -> Complex64 {
        c(rng.sample(StandardNormal), rng.sample(StandardNormal))
    }

    struct Instance {
        scenario: Scenario,
        x: Vec<f64>,
        f: Beamformer,
        weights: Weights,
    }

    fn instance(seed: u64, n: usize, k: usize, clutter: usize) -> Instance {
        let params = ScenarioParams {
            num_users: k,
            num_clutter: clutter,
            num_antennas: n,
            ..Default::default()
        };
        let scenario = generate_scenario(seed, &params).unwrap();
        let mut rng = scenario_rng(seed, 7);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let f = Beamformer::new(DMatrix::from_fn(n, k + 1, |_, _| cn(&mut rng) * 0.5)).unwrap();
        let weights = Weights::new(rng.random_range(0.1..0.9)).unwrap();
        Instance {
            scenario,
            x,
            f,
            weights,
        }
    }

    fn random_aux(seed: u64, k: usize) -> AuxiliaryState {
        let mut rng = scenario_rng(seed, 8);
        AuxiliaryState {
            mu: (0..=k).map(|_| rng.random_range(0.0..3.0)).collect(),
            xi_c: (0..k).map(|_| cn(&mut rng) * 0.3).collect(),
            xi_s: (0..=k).map(|_| cn(&mut rng) * 0.3).collect(),
        }
    }

    fn isotropic_form(p1: Complex64) -> QuadraticForm {
        QuadraticForm {
            lambda: DMatrix::identity(2, 2),
            phi: DMatrix::from_columns(&[
                CVector::from_vec(vec![p1, c(0.0, 0.0)]),
                CVector::zeros(2),
            ]),
            offset: 0.0,
        }
    }

    #[test]
    fn zero_aux_gives_zero_form() {
        let inst = instance(1, 4, 2, 1);
        let qf = assemble_quadratic_form(&inst.scenario, &inst.x, &AuxiliaryState::zeros(2), inst.weights)
            .unwrap();
        assert_eq!(qf.lambda.norm(), 0.0);
        assert_eq!(qf.phi.norm(), 0.0);
    }

    #[test]
    fn single_user_form_collapses() {
        let scenario = Scenario {
            wavelength: 0.1,
            num_antennas: 3,
            users: vec![PathCluster::new(vec![1.1, 2.0], vec![c(0.4, -1.0), c(0.7, 0.2)]).unwrap()],
            user_noise: vec![1.0],
            target_angle: PI / 3.0,
            target_gain: c(1.0, 0.5),
            clutter_angles: vec![],
            clutter_gains: vec![],
            sensing_noise: 1.0,
        };
        let x = [0.0, 0.03, 0.11];
        let aux = AuxiliaryState {
            mu: vec![0.8, 0.0],
            xi_c: vec![c(1.0, 0.0)],
            xi_s: vec![c(0.0, 0.0); 2],
        };
        let qf = assemble_quadratic_form(&scenario, &x, &aux, Weights::new(1.0).unwrap()).unwrap();
        let h = crate::model::user_channel(&scenario, 0, &x).unwrap();
        assert!((&qf.lambda - &h * h.adjoint()).norm() < 1e-12);
        assert!((qf.phi.column(0) - &h * c(1.8f64.sqrt(), 0.0)).norm() < 1e-12);
        assert_eq!(qf.phi.column(1).norm(), 0.0);
    }

    #[test]
    fn quadratic_form_reproduces_surrogate() {
        for seed in 0..5 {
            let inst = instance(seed, 4, 3, 2);
            let aux = random_aux(seed, 3);
            let qf = assemble_quadratic_form(&inst.scenario, &inst.x, &aux, inst.weights).unwrap();
            for trial in 0..20 {
                let f = crate::metrics::tests::random_beamformer(4, 4, seed * 100 + trial);
                let direct = surrogate(&f, &inst.x, &aux, &inst.scenario, inst.weights).unwrap();
                let via_form = qf.value(f.matrix());
                assert!(
                    (direct - via_form).abs() <= 1e-10 * direct.abs().max(1.0),
                    "{direct} vs {via_form}"
                );
            }
        }
    }

    #[test]
    fn feasible_unconstrained_optimum_is_returned() {
        let (f, lam) = beamformer_update(&isotropic_form(c(2.0, 0.0)), 10.0, &BisectionConfig::default())
            .unwrap();
        assert_eq!(lam, 0.0);
        assert!((f.matrix()[(0, 0)] - c(2.0, 0.0)).norm() < 1e-12);
        assert!((f.power() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn isotropic_budget_binds_at_lambda_one() {
        let cfg = BisectionConfig::default();
        let (f, lam) = beamformer_update(&isotropic_form(c(2.0, 0.0)), 1.0, &cfg).unwrap();
        assert!((lam - 1.0).abs() < 1e-8, "lambda = {lam}");
        assert!((f.power() - 1.0).abs() <= cfg.tolerance);
        assert!((f.matrix()[(0, 0)] - c(1.0, 0.0)).norm() < 1e-8);
        assert!(f.matrix()[(1, 0)].norm() < 1e-15);
        assert_eq!(f.matrix().column(1).norm(), 0.0);
    }

    fn random_pd_form(seed: u64, n: usize, cols: usize) -> QuadraticForm {
        let mut rng = scenario_rng(seed, 11);
        let a = DMatrix::from_fn(n, n, |_, _| cn(&mut rng));
        let lambda = &a * a.adjoint() + DMatrix::<Complex64>::identity(n, n) * c(0.1, 0.0);
        let phi = DMatrix::from_fn(n, cols, |_, _| cn(&mut rng) * 3.0);
        QuadraticForm {
            lambda,
            phi,
            offset: 0.0,
        }
    }

    #[test]
    fn kkt_residuals_vanish() {
        for seed in 0..20 {
            let qf = random_pd_form(seed, 5, 3);
            let budget = 0.05;
            let cfg = BisectionConfig::default();
            let (f, lam) = beamformer_update(&qf, budget, &cfg).unwrap();
            assert!(lam > 0.0);
            let shifted = &qf.lambda + DMatrix::<Complex64>::identity(5, 5) * c(lam, 0.0);
            let residual = (&shifted * f.matrix() - &qf.phi).norm();
            assert!(residual <= 1e-8, "stationarity residual {residual}");
            assert!((lam * (f.power() - budget)).abs() <= 1e-6);
            assert!(f.power() <= budget * (1.0 + cfg.tolerance));
        }
    }

    #[test]
    fn power_decreases_in_dual_variable() {
        let qf = random_pd_form(3, 4, 3);
        let mut rng = scenario_rng(3, 12);
        for _ in 0..100 {
            let lam: f64 = rng.random_range(0.0..10.0);
            let delta: f64 = rng.random_range(1e-3..5.0);
            let p1 = shifted_solve(&qf.lambda, &qf.phi, lam).unwrap().norm_squared();
            let p2 = shifted_solve(&qf.lambda, &qf.phi, lam + delta).unwrap().norm_squared();
            assert!(p2 < p1);
        }
    }

    #[test]
    fn unconstrained_argmax_is_scale_invariant() {
        let qf = random_pd_form(4, 4, 2);
        let scaled = QuadraticForm {
            lambda: &qf.lambda * c(7.5, 0.0),
            phi: &qf.phi * c(7.5, 0.0),
            offset: 0.0,
        };
        let a = unconstrained_maximizer(&qf).unwrap();
        let b = unconstrained_maximizer(&scaled).unwrap();
        assert!((a - b).norm() < 1e-10);
    }

    #[test]
    fn singular_lambda_uses_pseudo_inverse() {
        // Rank-one Λ with Φ in its range: bounded, solved at λ* = 0.
        let v = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0), c(1.0, 1.0)]);
        let qf = QuadraticForm {
            lambda: &v * v.adjoint(),
            phi: DMatrix::from_columns(&[&v * c(0.5, 0.0)]),
            offset: 0.0,
        };
        let (f, lam) = beamformer_update(&qf, 100.0, &BisectionConfig::default()).unwrap();
        assert_eq!(lam, 0.0);
        assert!((&qf.lambda * f.matrix() - &qf.phi).norm() < 1e-12);
        // Φ outside the range of Λ: unbounded, so the budget binds.
        let w = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let u = CVector::from_vec(vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let qf = QuadraticForm {
            lambda: &w * w.adjoint(),
            phi: DMatrix::from_columns(&[u]),
            offset: 0.0,
        };
        let (f, lam) = beamformer_update(&qf, 2.0, &BisectionConfig::default()).unwrap();
        assert!(lam > 0.0);
        assert!((f.power() - 2.0).abs() <= 2e-8);
    }

    #[test]
    fn zero_phi_gives_zero_beamformer() {
        let qf = QuadraticForm {
            lambda: DMatrix::identity(3, 3),
            phi: DMatrix::zeros(3, 2),
            offset: 0.0,
        };
        let (f, lam) = beamformer_update(&qf, 1.0, &BisectionConfig::default()).unwrap();
        assert_eq!(f.power(), 0.0);
        assert_eq!(lam, 0.0);
    }

    #[test]
    fn iteration_budget_exhaustion_reports_last_iterate() {
        let cfg = BisectionConfig {
            max_iters: 2,
            tolerance: 1e-15,
            ..Default::default()
        };
        match beamformer_update(&random_pd_form(9, 4, 2), 0.01, &cfg) {
            Err(Error::BisectionNotConverged { iterations, last, .. }) => {
                assert_eq!(iterations, 2);
                assert_eq!(last.num_antennas(), 4);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn bad_budget_is_rejected() {
        let qf = isotropic_form(c(1.0, 0.0));
        assert!(beamformer_update(&qf, 0.0, &BisectionConfig::default()).is_err());
        assert!(beamformer_update(&qf, -1.0, &BisectionConfig::default()).is_err());
    }

    #[test]
    fn mu_closed_form_values() {
        assert_eq!(mu_from_correlation(0.0), 0.0);
        assert!((mu_from_correlation(2.0) - (2.0 + 2.0 * 2f64.sqrt())).abs() < 1e-12);
        assert_eq!(mu_from_correlation(-0.5), 0.0);
    }

    #[test]
    fn mu_matches_numeric_line_search() {
        // Dense scan of ln(1+μ) − μ + 2√(1+μ)·R for R = 2.
        let g = |mu: f64| (1.0 + mu).ln() - mu + 2.0 * (1.0 + mu).sqrt() * 2.0;
        let (mut best, mut best_v) = (0.0, f64::NEG_INFINITY);
        for i in 0..=2_000_000 {
            let mu = i as f64 * 1e-5;
            if g(mu) > best_v {
                best = mu;
                best_v = g(mu);
            }
        }
        assert!((best - 4.828427).abs() < 1e-4);
        assert!((mu_from_correlation(2.0) - 4.828427).abs() < 1e-6);
    }

    #[test]
    fn zero_beamformer_gives_zero_xi() {
        let inst = instance(2, 3, 2, 1);
        let f = Beamformer::zeros(3, 2);
        let (xc, xs) = update_xi(&f, &inst.x, &[0.4, 0.1, 2.0], &inst.scenario).unwrap();
        assert!(xc.iter().chain(xs.iter()).all(|v| v.norm() == 0.0));
    }

    #[test]
    fn scalar_xi_example() {
        // N = 1 broadside path gives h = 1; f = [1, 0] with σ² = 1.
        let scenario = Scenario {
            wavelength: 0.1,
            num_antennas: 1,
            users: vec![PathCluster::new(vec![PI / 2.0], vec![c(1.0, 0.0)]).unwrap()],
            user_noise: vec![1.0],
            target_angle: PI / 3.0,
            target_gain: c(1.0, 0.0),
            clutter_angles: vec![],
            clutter_gains: vec![],
            sensing_noise: 1.0,
        };
        let f = Beamformer::new(DMatrix::from_row_slice(1, 2, &[c(1.0, 0.0), c(0.0, 0.0)])).unwrap();
        let (xc, _) = update_xi(&f, &[0.0], &[0.0, 0.0], &scenario).unwrap();
        assert!((xc[0] - c(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn tight_aux_makes_surrogate_exact() {
        for seed in 0..20 {
            let inst = instance(seed, 4, 3, 3);
            let aux = initial_aux(&inst.f, &inst.x, &inst.scenario).unwrap();
            let s = surrogate(&inst.f, &inst.x, &aux, &inst.scenario, inst.weights).unwrap();
            let o = objective_nats(&inst.f, &inst.x, &inst.scenario, inst.weights).unwrap();
            assert!((s - o).abs() <= 1e-9 * o.abs(), "{s} vs {o}");
            // μ is a fixed point of the closed-form update.
            let mu = update_mu(&inst.f, &inst.x, &aux, &inst.scenario).unwrap();
            for k in 0..3 {
                let sinr = metrics::sinr(k, &inst.f, &inst.scenario, &inst.x).unwrap();
                assert!((mu[k] - sinr).abs() <= 1e-9 * sinr.max(1e-300));
            }
            let scnr = metrics::scnr(&inst.f, &inst.scenario, &inst.x).unwrap();
            assert!((mu[3] - scnr).abs() <= 1e-9 * scnr);
        }
    }

    #[test]
    fn fixed_point_iteration_reaches_tightness() {
        for seed in 0..20 {
            let inst = instance(seed, 2 + 2 * (seed as usize % 2), 1 + 3 * (seed as usize % 3 == 0) as usize, 3);
            let k = inst.scenario.num_users();
            let o = objective_nats(&inst.f, &inst.x, &inst.scenario, inst.weights).unwrap();
            for start in [random_aux(seed, k), AuxiliaryState::zeros(k)] {
                let aux = aux_fixed_point(&inst.f, &inst.x, &start, &inst.scenario, 10_000).unwrap();
                let s = surrogate(&inst.f, &inst.x, &aux, &inst.scenario, inst.weights).unwrap();
                assert!((s - o).abs() <= 1e-8 * o.abs(), "seed {seed}: {s} vs {o}");
            }
        }
    }

    #[test]
    fn random_aux_never_beats_tight_value() {
        let inst = instance(5, 4, 3, 2);
        let tight = initial_aux(&inst.f, &inst.x, &inst.scenario).unwrap();
        let best = surrogate(&inst.f, &inst.x, &tight, &inst.scenario, inst.weights).unwrap();
        let mut rng = scenario_rng(5, 13);
        for _ in 0..100 {
            let mut aux = tight.clone();
            for m in aux.mu.iter_mut() {
                *m = (*m + rng.random_range(-0.5..0.5)).max(0.0);
            }
            for x in aux.xi_c.iter_mut().chain(aux.xi_s.iter_mut()) {
                *x += cn(&mut rng) * 0.05;
            }
            let v = surrogate(&inst.f, &inst.x, &aux, &inst.scenario, inst.weights).unwrap();
            assert!(v <= best + 1e-12);
        }
    }

    #[test]
    fn xi_is_a_local_maximizer() {
        let inst = instance(6, 4, 2, 3);
        let aux0 = random_aux(6, 2);
        let (xi_c, xi_s) = update_xi(&inst.f, &inst.x, &aux0.mu, &inst.scenario).unwrap();
        let aux = AuxiliaryState {
            mu: aux0.mu.clone(),
            xi_c,
            xi_s,
        };
        let base = surrogate(&inst.f, &inst.x, &aux, &inst.scenario, inst.weights).unwrap();
        let mut rng = scenario_rng(6, 14);
        for _ in 0..100 {
            let mut p = aux.clone();
            let slot = rng.random_range(0..p.xi_c.len() + p.xi_s.len());
            let step = if rng.random_bool(0.5) { 1e-3 } else { -1e-3 };
            let delta = if rng.random_bool(0.5) { c(step, 0.0) } else { c(0.0, step) };
            if slot < p.xi_c.len() {
                p.xi_c[slot] += delta;
            } else {
                p.xi_s[slot - p.xi_c.len()] += delta;
            }
            let v = surrogate(&inst.f, &inst.x, &p, &inst.scenario, inst.weights).unwrap();
            assert!(v < base);
        }
    }

    #[test]
    fn each_block_update_ascends() {
        for seed in 0..10 {
            let inst = instance(seed, 4, 3, 3);
            let mut aux = random_aux(seed, 3);
            let eval = |f: &Beamformer, aux: &AuxiliaryState| {
                surrogate(f, &inst.x, aux, &inst.scenario, inst.weights).unwrap()
            };
            let mut f = inst.f.clone();
            let mut last = eval(&f, &aux);
            for _ in 0..5 {
                let qf = assemble_quadratic_form(&inst.scenario, &inst.x, &aux, inst.weights).unwrap();
                f = beamformer_update(&qf, 2.0, &BisectionConfig::default()).unwrap().0;
                let v = eval(&f, &aux);
                // The fresh F may exceed the random start's power, so only
                // compare after the first F step.
                last = v.max(last.min(v));
                aux.mu = update_mu(&f, &inst.x, &aux, &inst.scenario).unwrap();
                let v = eval(&f, &aux);
                assert!(v >= last - 1e-9);
                last = v;
                let (xc, xs) = update_xi(&f, &inst.x, &aux.mu, &inst.scenario).unwrap();
                aux.xi_c = xc;
                aux.xi_s = xs;
                let v = eval(&f, &aux);
                assert!(v >= last - 1e-9);
                last = v;
                let qf = assemble_quadratic_form(&inst.scenario, &inst.x, &aux, inst.weights).unwrap();
                let f2 = beamformer_update(&qf, 2.0, &BisectionConfig::default()).unwrap().0;
                assert!(eval(&f2, &aux) >= last - 1e-9);
            }
        }
    }
}
