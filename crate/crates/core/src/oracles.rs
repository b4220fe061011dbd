//! Slow reference computations used to cross-check the optimized paths.
//!
//! Nothing here calls into `fp_core` or `position_opt`: channels, inner
//! products and the per-block surrogate are recomputed from scratch.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fp_core::AuxiliaryState;
use crate::metrics::{self, Beamformer, Weights};
use crate::model::{ArrayGeometry, Scenario};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FDConfig {
    /// Central-difference step, meters.
    pub step: f64,
}

impl Default for FDConfig {
    fn default() -> Self {
        Self { step: 1e-6 }
    }
}

/// Central-difference gradient of `f` at `positions`.
pub fn fd_gradient<F>(f: F, positions: &[f64], cfg: &FDConfig) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let h = cfg.step;
    let mut x = positions.to_vec();
    (0..positions.len())
        .map(|n| {
            let base = x[n];
            x[n] = base + h;
            let up = f(&x);
            x[n] = base - h;
            let down = f(&x);
            x[n] = base;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Exhaustive search of the surrogate over every feasible grid tuple, for
/// arrays of at most two antennas. Ties resolve to the lexicographically
/// smallest tuple.
pub fn exhaustive_positions(
    scenario: &Scenario,
    f: &Beamformer,
    aux: &AuxiliaryState,
    weights: Weights,
    geometry: &ArrayGeometry,
    step: f64,
) -> Result<(Vec<f64>, f64)> {
    let n = geometry.num_antennas();
    if n == 0 || n > 2 {
        return Err(Error::UnsupportedSize(format!(
            "exhaustive position search supports 1 or 2 antennas, got {n}"
        )));
    }
    if !(step > 0.0) {
        return Err(Error::invalid("grid step must be positive"));
    }
    let count = ((geometry.x_max - geometry.x_min) / step + 1e-9).floor() as usize;
    let grid: Vec<f64> = (0..=count)
        .map(|i| (geometry.x_min + i as f64 * step).min(geometry.x_max))
        .collect();
    let eval = |x: &[f64]| metrics::surrogate(f, x, aux, scenario, weights);

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut consider = |x: Vec<f64>, v: f64| {
        if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
            best = Some((x, v));
        }
    };
    if n == 1 {
        for &p in &grid {
            let v = eval(&[p])?;
            consider(vec![p], v);
        }
    } else {
        for &p in &grid {
            for &q in &grid {
                if (p - q).abs() < geometry.d0 - 1e-12 {
                    continue;
                }
                let v = eval(&[p, q])?;
                consider(vec![p, q], v);
            }
        }
    }
    best.ok_or_else(|| Error::InfeasibleRegion("no feasible grid tuple".into()))
}

/// Scalar pieces of one surrogate block: `ln(1+μ) − μ + 2√(1+μ)·Re{Σ c_i ξ_i}
/// − ‖ξ‖²·d`.
struct Block {
    coupling: Vec<Complex64>,
    denominator: f64,
}

impl Block {
    fn value(&self, mu: f64, xi: &[Complex64]) -> f64 {
        let lin: Complex64 = self.coupling.iter().zip(xi).map(|(c, x)| c * x).sum();
        let energy: f64 = xi.iter().map(|x| x.norm_sqr()).sum();
        (1.0 + mu).ln() - mu + 2.0 * (1.0 + mu).sqrt() * lin.re - energy * self.denominator
    }

    /// Complex-step derivative of the block in μ.
    fn mu_slope(&self, mu: f64, xi: &[Complex64]) -> f64 {
        let h = 1e-30;
        let m = Complex64::new(mu, h);
        let one = Complex64::new(1.0, 0.0);
        let lin: Complex64 = self.coupling.iter().zip(xi).map(|(c, x)| c * x).sum();
        let v = (one + m).ln() - m + (one + m).sqrt() * (2.0 * lin.re);
        v.im / h
    }

    /// Golden section over μ, polished by bisection on the sign of the
    /// complex-step derivative inside the final bracket.
    fn best_mu(&self, xi: &[Complex64]) -> f64 {
        // The block is concave in μ when the coupling is nonnegative and
        // decreasing otherwise, so a nonpositive slope at 0 settles it.
        if self.mu_slope(0.0, xi) <= 0.0 {
            return 0.0;
        }
        let (lo, hi) = golden_bracket(|m| self.value(m, xi), 0.0, 1e6);
        let pad = 10.0 * (hi - lo) + 1e-12;
        let (mut a, mut b) = ((lo - pad).max(0.0), hi + pad);
        if self.mu_slope(a, xi) <= 0.0 {
            return a;
        }
        if self.mu_slope(b, xi) >= 0.0 {
            return 0.5 * (lo + hi);
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if self.mu_slope(m, xi) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    /// Block coordinate ascent: 1-D search over μ, exact parabola fits over
    /// each real and imaginary part of ξ.
    fn maximize(&self) -> (f64, Vec<Complex64>) {
        let mut mu = 0.0;
        let mut xi = vec![Complex64::new(0.0, 0.0); self.coupling.len()];
        for _ in 0..20_000 {
            let old_mu = mu;
            let old_xi = xi.clone();
            mu = self.best_mu(&xi);
            for i in 0..xi.len() {
                for part in 0..2 {
                    let at = |t: f64, xi: &mut Vec<Complex64>| {
                        if part == 0 {
                            xi[i].re = t;
                        } else {
                            xi[i].im = t;
                        }
                        self.value(mu, xi)
                    };
                    let t0 = if part == 0 { xi[i].re } else { xi[i].im };
                    let mut probe = xi.clone();
                    let fm = at(t0 - 1.0, &mut probe);
                    let f0 = at(t0, &mut probe);
                    let fp = at(t0 + 1.0, &mut probe);
                    let curvature = fp - 2.0 * f0 + fm;
                    if curvature < 0.0 {
                        let t = t0 - 0.5 * (fp - fm) / curvature;
                        if part == 0 {
                            xi[i].re = t;
                        } else {
                            xi[i].im = t;
                        }
                    }
                }
            }
            let change = xi
                .iter()
                .zip(&old_xi)
                .map(|(a, b)| (a - b).norm())
                .fold((mu - old_mu).abs() / mu.max(1.0), f64::max);
            if change < 1e-13 {
                break;
            }
        }
        (mu, xi)
    }
}

fn golden_bracket<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > 1e-13 * (1.0 + lo.abs()) {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        }
    }
    (lo, hi)
}

fn phases(positions: &[f64], angle: f64, wavelength: f64) -> Vec<Complex64> {
    positions
        .iter()
        .map(|x| {
            let phase = 2.0 * PI / wavelength * x * angle.cos();
            Complex64::new(phase.cos(), phase.sin())
        })
        .collect()
}

/// `vᴴ f` with an explicit loop.
fn project(v: &[Complex64], f: &Beamformer, column: usize) -> Complex64 {
    v.iter()
        .enumerate()
        .map(|(n, vn)| vn.conj() * f.matrix()[(n, column)])
        .sum()
}

/// Numerically maximizes the surrogate over all auxiliaries at fixed
/// `(f, positions)`. Communication weight and sensing weight must be
/// positive for the result to be unique.
pub fn numeric_aux_maximizer(
    f: &Beamformer,
    positions: &[f64],
    scenario: &Scenario,
    _weights: Weights,
) -> Result<AuxiliaryState> {
    let k_users = scenario.num_users();
    if f.num_columns() != k_users + 1 || f.num_antennas() != positions.len() {
        return Err(Error::invalid("beamformer shape does not match scenario"));
    }
    let n = positions.len();
    let cols = k_users + 1;

    let mut mu = Vec::with_capacity(cols);
    let mut xi_c = Vec::with_capacity(k_users);
    for (k, user) in scenario.users.iter().enumerate() {
        let mut h = vec![Complex64::new(0.0, 0.0); n];
        for (a, g) in user.angles.iter().zip(&user.gains) {
            for (hn, e) in h.iter_mut().zip(phases(positions, *a, scenario.wavelength)) {
                *hn += g * e;
            }
        }
        let scale = (n as f64 / user.num_paths() as f64).sqrt();
        h.iter_mut().for_each(|v| *v *= scale);
        let received: f64 = (0..cols).map(|j| project(&h, f, j).norm_sqr()).sum();
        let block = Block {
            coupling: vec![project(&h, f, k)],
            denominator: received + scenario.user_noise[k],
        };
        let (m, x) = block.maximize();
        mu.push(m);
        xi_c.push(x[0]);
    }

    let a_s = phases(positions, scenario.target_angle, scenario.wavelength);
    let alpha = scenario.target_gain;
    let coupling: Vec<Complex64> = (0..cols).map(|j| alpha * project(&a_s, f, j)).collect();
    let mut denominator = scenario.sensing_noise + coupling.iter().map(|c| c.norm_sqr()).sum::<f64>();
    for (angle, g) in scenario.clutter_angles.iter().zip(&scenario.clutter_gains) {
        let a_c = phases(positions, *angle, scenario.wavelength);
        denominator += g.norm_sqr() * (0..cols).map(|j| project(&a_c, f, j).norm_sqr()).sum::<f64>();
    }
    let (m, xi_s) = Block {
        coupling,
        denominator,
    }
    .maximize();
    mu.push(m);
    Ok(AuxiliaryState { mu, xi_c, xi_s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_scenario, PathCluster, ScenarioParams};
    use nalgebra::DMatrix;

    #[test]
    fn fd_of_polynomial_and_constant() {
        let g = fd_gradient(|x| x.iter().map(|v| v * v).sum(), &[1.0, 2.0], &FDConfig::default());
        assert!((g[0] - 2.0).abs() < 1e-6 && (g[1] - 4.0).abs() < 1e-6);
        let g = fd_gradient(|_| 3.0, &[0.4, 0.1, 0.9], &FDConfig::default());
        assert_eq!(g, vec![0.0; 3]);
    }

    fn small_instance(n: usize) -> (Scenario, Beamformer, AuxiliaryState) {
        let params = ScenarioParams {
            num_users: 1,
            num_clutter: 1,
            num_antennas: n,
            ..Default::default()
        };
        let scenario = generate_scenario(3, &params).unwrap();
        let f = crate::metrics::tests::random_beamformer(n, 2, 9);
        let x: Vec<f64> = (0..n).map(|i| 0.05 * i as f64).collect();
        let aux = crate::fp_core::initial_aux(&f, &x, &scenario).unwrap();
        (scenario, f, aux)
    }

    #[test]
    fn exhaustive_single_antenna_is_table_max() {
        let (scenario, f, aux) = small_instance(1);
        let geometry = ArrayGeometry::new(vec![0.0], 0.0, 0.5, 0.05).unwrap();
        let w = Weights::default();
        let (best, value) = exhaustive_positions(&scenario, &f, &aux, w, &geometry, 0.01).unwrap();
        let table: Vec<f64> = (0..=50)
            .map(|i| metrics::surrogate(&f, &[i as f64 * 0.01], &aux, &scenario, w).unwrap())
            .collect();
        let max = table.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(value, max);
        assert!((metrics::surrogate(&f, &best, &aux, &scenario, w).unwrap() - max).abs() < 1e-15);
    }

    #[test]
    fn exhaustive_tight_region_has_only_end_pairs() {
        let (scenario, f, aux) = small_instance(2);
        let geometry = ArrayGeometry {
            positions: vec![0.0, 0.1],
            x_min: 0.0,
            x_max: 0.1,
            d0: 0.1,
        };
        let (best, _) = exhaustive_positions(&scenario, &f, &aux, Weights::default(), &geometry, 0.02).unwrap();
        let mut sorted = best.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(sorted, vec![0.0, 0.1]);
    }

    #[test]
    fn exhaustive_rejects_large_arrays() {
        let (scenario, f, aux) = small_instance(3);
        let geometry = ArrayGeometry::new(vec![0.0, 0.05, 0.1], 0.0, 1.0, 0.05).unwrap();
        assert!(matches!(
            exhaustive_positions(&scenario, &f, &aux, Weights::default(), &geometry, 0.01),
            Err(Error::UnsupportedSize(_))
        ));
    }

    #[test]
    fn zero_beamformer_gives_zero_aux() {
        let (scenario, _, _) = small_instance(2);
        let f = Beamformer::zeros(2, 1);
        let aux = numeric_aux_maximizer(&f, &[0.0, 0.05], &scenario, Weights::default()).unwrap();
        assert!(aux.mu.iter().all(|m| *m == 0.0));
        assert!(aux.xi_c.iter().chain(&aux.xi_s).all(|x| x.norm() == 0.0));
    }

    #[test]
    fn scalar_case_matches_closed_form() {
        let scenario = Scenario {
            wavelength: 0.1,
            num_antennas: 1,
            users: vec![PathCluster::new(vec![PI / 2.0], vec![Complex64::new(1.0, 0.0)]).unwrap()],
            user_noise: vec![1.0],
            target_angle: PI / 3.0,
            target_gain: Complex64::new(1.0, 0.0),
            clutter_angles: vec![],
            clutter_gains: vec![],
            sensing_noise: 1.0,
        };
        let f = Beamformer::new(DMatrix::from_row_slice(
            1,
            2,
            &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        ))
        .unwrap();
        let aux = numeric_aux_maximizer(&f, &[0.0], &scenario, Weights::default()).unwrap();
        // Jointly optimal μ is the SINR (1), so ξ = √2 / 2.
        assert!((aux.mu[0] - 1.0).abs() < 1e-6);
        assert!((aux.xi_c[0] - Complex64::new(0.5f64.sqrt(), 0.0)).norm() < 1e-6);
        // With μ pinned at 0 the ξ block alone reproduces the scalar 0.5.
        let block = Block {
            coupling: vec![Complex64::new(1.0, 0.0)],
            denominator: 2.0,
        };
        let xi = 0.5 * block.coupling[0].conj() * 2.0 / block.denominator;
        assert!((xi - Complex64::new(0.5, 0.0)).norm() < 1e-12);
    }
}
