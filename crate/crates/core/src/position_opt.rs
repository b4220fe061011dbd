//! Antenna-position sub-problem: the surrogate as a function of positions,
//! its analytic gradient, and the position optimizers (three-stage SPGA and
//! the direct gradient ascent baseline).
//!
//! Every surrogate term is linear or quadratic in inner products
//! `z_{v,j} = v(x)ᴴ f_j`, where `v` is a user channel or a target/clutter
//! steering vector whose `n`-th entry depends on `x_n` only. Moving one
//! antenna therefore updates each `z` by a single rank-one correction, which
//! is what [`SurrogateProbe`] exploits.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp_core::AuxiliaryState;
use crate::metrics::{Beamformer, CMatrix, Weights};
use crate::model::{positions_feasible, ArrayGeometry, Scenario, SPACING_SLACK};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PositionOptConfig {
    /// Resolution of the initial grid search, meters.
    pub grid_step: f64,
    /// Maximum number of coordinate sweeps (or full steps for DGA).
    pub ascent_max_iters: usize,
    /// Sweeps stop once no coordinate moves more than this, meters.
    pub ascent_tol: f64,
    pub armijo_shrink: f64,
    pub armijo_slope: f64,
    /// Length of the first trial move of every line search, meters.
    pub initial_step: f64,
    pub max_backtracks: usize,
}

impl PositionOptConfig {
    pub fn for_wavelength(wavelength: f64) -> Self {
        Self {
            grid_step: wavelength / 20.0,
            ascent_max_iters: 100,
            ascent_tol: wavelength * 1e-6,
            armijo_shrink: 0.5,
            armijo_slope: 1e-4,
            initial_step: wavelength / 10.0,
            max_backtracks: 40,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.grid_step, self.ascent_tol, self.initial_step];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("position step sizes and tolerances must be positive"));
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0)
            || !(self.armijo_slope > 0.0 && self.armijo_slope < 1.0)
        {
            return Err(Error::invalid("Armijo parameters must lie in (0, 1)"));
        }
        if self.ascent_max_iters == 0 || self.max_backtracks == 0 {
            return Err(Error::invalid("iteration budgets must be positive"));
        }
        Ok(())
    }
}

impl Default for PositionOptConfig {
    fn default() -> Self {
        Self::for_wavelength(0.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub positions: Vec<f64>,
    /// `permutation[m]` is the original index of the m-th smallest position.
    pub permutation: Vec<usize>,
}

/// A scalar objective over antenna positions that supports cheap
/// single-coordinate moves. The optimizers below only talk to this trait.
pub trait CoordinateObjective {
    fn positions(&self) -> &[f64];
    /// Value at the current positions.
    fn value(&self) -> f64;
    /// Value at arbitrary positions; does not change the current state.
    fn value_at(&self, positions: &[f64]) -> f64;
    /// Value if antenna `n` alone were moved to `p`.
    fn value_if_moved(&self, n: usize, p: f64) -> f64;
    fn partial(&self, n: usize) -> f64;
    fn set(&mut self, n: usize, p: f64);
    fn reset(&mut self, positions: &[f64]);

    fn gradient(&self) -> Vec<f64> {
        (0..self.positions().len()).map(|n| self.partial(n)).collect()
    }
}

#[derive(Debug, Clone)]
struct Link {
    /// (phase slope 2π/λ·cos θ, complex amplitude) per path.
    paths: Vec<(f64, Complex64)>,
}

impl Link {
    fn element(&self, p: f64) -> Complex64 {
        self.paths.iter().map(|(s, g)| g * Complex64::cis(s * p)).sum()
    }

    fn derivative(&self, p: f64) -> Complex64 {
        self.paths
            .iter()
            .map(|(s, g)| g * Complex64::new(0.0, *s) * Complex64::cis(s * p))
            .sum()
    }
}

/// The surrogate with `F`, μ, ξ and the weights frozen, as a function of
/// antenna positions.
#[derive(Debug, Clone)]
pub struct SurrogateLandscape {
    f: CMatrix,
    /// Users 0..K, then the target, then the clutter scatterers.
    links: Vec<Link>,
    num_users: usize,
    comm_linear: Vec<Complex64>,
    comm_quadratic: Vec<f64>,
    sense_linear: Vec<Complex64>,
    /// Quadratic weights of the target (first) and clutter links.
    echo_quadratic: Vec<f64>,
    constant: f64,
}

impl SurrogateLandscape {
    pub fn new(
        scenario: &Scenario,
        f: &Beamformer,
        aux: &AuxiliaryState,
        weights: Weights,
    ) -> Result<Self> {
        let k_users = scenario.num_users();
        aux.check(k_users)?;
        if f.num_columns() != k_users + 1 {
            return Err(Error::invalid("beamformer must have K+1 columns"));
        }
        let n = f.num_antennas();
        let beta = scenario.wavenumber();
        let mut links = Vec::with_capacity(k_users + 1 + scenario.num_clutter());
        for user in &scenario.users {
            let scale = if user.num_paths() == 0 {
                0.0
            } else {
                (n as f64 / user.num_paths() as f64).sqrt()
            };
            links.push(Link {
                paths: user
                    .angles
                    .iter()
                    .zip(&user.gains)
                    .map(|(a, g)| (beta * a.cos(), g * scale))
                    .collect(),
            });
        }
        let unit = Complex64::new(1.0, 0.0);
        links.push(Link {
            paths: vec![(beta * scenario.target_angle.cos(), unit)],
        });
        for a in &scenario.clutter_angles {
            links.push(Link {
                paths: vec![(beta * a.cos(), unit)],
            });
        }

        let (wc, ws) = (weights.comm(), weights.sense());
        let mu_s = aux.mu[k_users];
        let xi_s_norm: f64 = aux.xi_s.iter().map(|x| x.norm_sqr()).sum();
        let comm_linear = (0..k_users)
            .map(|k| aux.xi_c[k] * (2.0 * wc * (1.0 + aux.mu[k]).sqrt()))
            .collect();
        let comm_quadratic = aux.xi_c.iter().map(|x| wc * x.norm_sqr()).collect();
        let sense_linear = aux
            .xi_s
            .iter()
            .map(|x| scenario.target_gain * x * (2.0 * ws * (1.0 + mu_s).sqrt()))
            .collect();
        let mut echo_quadratic = vec![ws * xi_s_norm * scenario.target_gain.norm_sqr()];
        echo_quadratic.extend(
            scenario
                .clutter_gains
                .iter()
                .map(|g| ws * xi_s_norm * g.norm_sqr()),
        );
        let dual = |mu: f64| (1.0 + mu).ln() - mu;
        let mut constant = ws * (dual(mu_s) - xi_s_norm * scenario.sensing_noise);
        for k in 0..k_users {
            constant += wc * (dual(aux.mu[k]) - aux.xi_c[k].norm_sqr() * scenario.user_noise[k]);
        }

        Ok(Self {
            f: f.matrix().clone(),
            links,
            num_users: k_users,
            comm_linear,
            comm_quadratic,
            sense_linear,
            echo_quadratic,
            constant,
        })
    }

    pub fn num_antennas(&self) -> usize {
        self.f.nrows()
    }

    pub fn probe(&self, positions: &[f64]) -> SurrogateProbe<'_> {
        let mut probe = SurrogateProbe {
            landscape: self,
            positions: Vec::new(),
            elements: Vec::new(),
            inner: Vec::new(),
        };
        probe.reset(positions);
        probe
    }

    pub fn value(&self, positions: &[f64]) -> f64 {
        self.probe(positions).value()
    }

    /// Surrogate contribution of link `l` given its inner products.
    fn link_value(&self, l: usize, z: impl Fn(usize) -> Complex64) -> f64 {
        let cols = self.f.ncols();
        let energy: f64 = (0..cols).map(|j| z(j).norm_sqr()).sum();
        if l < self.num_users {
            (self.comm_linear[l] * z(l)).re - self.comm_quadratic[l] * energy
        } else if l == self.num_users {
            let lin: Complex64 = (0..cols).map(|j| self.sense_linear[j] * z(j)).sum();
            lin.re - self.echo_quadratic[0] * energy
        } else {
            -self.echo_quadratic[l - self.num_users] * energy
        }
    }

    /// Derivative of link `l`'s contribution given `z` and `dz`.
    fn link_slope(&self, l: usize, z: &[Complex64], dz: impl Fn(usize) -> Complex64) -> f64 {
        let cols = self.f.ncols();
        let d_energy: f64 = (0..cols).map(|j| 2.0 * (z[j].conj() * dz(j)).re).sum();
        if l < self.num_users {
            (self.comm_linear[l] * dz(l)).re - self.comm_quadratic[l] * d_energy
        } else if l == self.num_users {
            let lin: Complex64 = (0..cols).map(|j| self.sense_linear[j] * dz(j)).sum();
            lin.re - self.echo_quadratic[0] * d_energy
        } else {
            -self.echo_quadratic[l - self.num_users] * d_energy
        }
    }
}

/// Stateful evaluator of a [`SurrogateLandscape`] at a current set of
/// positions.
#[derive(Debug, Clone)]
pub struct SurrogateProbe<'a> {
    landscape: &'a SurrogateLandscape,
    positions: Vec<f64>,
    /// `elements[l][n]` = n-th entry of link vector l.
    elements: Vec<Vec<Complex64>>,
    /// `inner[l][j]` = link l's vectorᴴ f_j.
    inner: Vec<Vec<Complex64>>,
}

impl CoordinateObjective for SurrogateProbe<'_> {
    fn positions(&self) -> &[f64] {
        &self.positions
    }

    fn value(&self) -> f64 {
        let ls = self.landscape;
        ls.constant
            + (0..ls.links.len())
                .map(|l| ls.link_value(l, |j| self.inner[l][j]))
                .sum::<f64>()
    }

    fn value_at(&self, positions: &[f64]) -> f64 {
        self.landscape.value(positions)
    }

    fn value_if_moved(&self, n: usize, p: f64) -> f64 {
        let ls = self.landscape;
        let mut acc = ls.constant;
        for (l, link) in ls.links.iter().enumerate() {
            let delta = (link.element(p) - self.elements[l][n]).conj();
            let z = &self.inner[l];
            acc += ls.link_value(l, |j| z[j] + delta * ls.f[(n, j)]);
        }
        acc
    }

    fn partial(&self, n: usize) -> f64 {
        let ls = self.landscape;
        let x = self.positions[n];
        let mut acc = 0.0;
        for (l, link) in ls.links.iter().enumerate() {
            let d = link.derivative(x).conj();
            acc += ls.link_slope(l, &self.inner[l], |j| d * ls.f[(n, j)]);
        }
        acc
    }

    fn set(&mut self, n: usize, p: f64) {
        let ls = self.landscape;
        for (l, link) in ls.links.iter().enumerate() {
            let e = link.element(p);
            let delta = (e - self.elements[l][n]).conj();
            for (j, z) in self.inner[l].iter_mut().enumerate() {
                *z += delta * ls.f[(n, j)];
            }
            self.elements[l][n] = e;
        }
        self.positions[n] = p;
    }

    fn reset(&mut self, positions: &[f64]) {
        let ls = self.landscape;
        assert_eq!(positions.len(), ls.num_antennas(), "position count mismatch");
        self.positions = positions.to_vec();
        self.elements = ls
            .links
            .iter()
            .map(|link| positions.iter().map(|p| link.element(*p)).collect())
            .collect();
        self.inner = self
            .elements
            .iter()
            .map(|e| {
                (0..ls.f.ncols())
                    .map(|j| {
                        e.iter()
                            .enumerate()
                            .map(|(n, v)| v.conj() * ls.f[(n, j)])
                            .sum()
                    })
                    .collect()
            })
            .collect();
    }
}

/// Analytic gradient of the surrogate with respect to antenna positions.
pub fn surrogate_gradient(
    positions: &[f64],
    f: &Beamformer,
    aux: &AuxiliaryState,
    scenario: &Scenario,
    weights: Weights,
) -> Result<Vec<f64>> {
    check_len(positions, f)?;
    let landscape = SurrogateLandscape::new(scenario, f, aux, weights)?;
    Ok(landscape.probe(positions).gradient())
}

fn check_len(positions: &[f64], f: &Beamformer) -> Result<()> {
    if positions.len() != f.num_antennas() {
        return Err(Error::invalid(format!(
            "{} positions for a {}-antenna beamformer",
            positions.len(),
            f.num_antennas()
        )));
    }
    Ok(())
}

/// Grid points `x_min, x_min + step, …` up to and including `x_max`.
pub fn search_grid(x_min: f64, x_max: f64, step: f64) -> Vec<f64> {
    let count = ((x_max - x_min) / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=count).map(|i| x_min + i as f64 * step).collect();
    if let Some(last) = grid.last_mut() {
        if *last > x_max {
            *last = x_max;
        }
    }
    if x_max - grid[grid.len() - 1] > 1e-12 * step {
        grid.push(x_max);
    }
    grid
}

/// Sequential on-grid search: antenna by antenna, move it to the grid point
/// that maximizes the objective among points at least `d0` away from the
/// antennas already placed. Ties go to the smaller coordinate.
pub fn grid_init_with<O: CoordinateObjective>(
    obj: &mut O,
    geometry: &ArrayGeometry,
    cfg: &PositionOptConfig,
) -> Result<Vec<f64>> {
    let span = geometry.x_max - geometry.x_min;
    if !(cfg.grid_step > 0.0 && cfg.grid_step <= span / 2.0) {
        return Err(Error::invalid(format!(
            "grid step {} must lie in (0, {}]",
            cfg.grid_step,
            span / 2.0
        )));
    }
    let grid = search_grid(geometry.x_min, geometry.x_max, cfg.grid_step);
    let n_ant = obj.positions().len();
    let mut placed: Vec<f64> = Vec::with_capacity(n_ant);
    for n in 0..n_ant {
        let mut best: Option<(f64, f64)> = None;
        for &p in &grid {
            if placed
                .iter()
                .any(|q| (p - q).abs() < geometry.d0 - SPACING_SLACK)
            {
                continue;
            }
            let v = obj.value_if_moved(n, p);
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((p, v));
            }
        }
        let (p, _) = best.ok_or(Error::InfeasibleGrid { antenna: n })?;
        obj.set(n, p);
        placed.push(p);
    }
    Ok(obj.positions().to_vec())
}

/// Gauss–Seidel coordinate ascent with Armijo backtracking.
///
/// Each trial move along the sign of the partial derivative starts at
/// `initial_step` meters and shrinks geometrically; a move of length `s` is
/// accepted when it gains at least `armijo_slope · s · |∂|`. Positions are
/// not constrained here.
pub fn coordinate_ascent_with<O: CoordinateObjective>(
    obj: &mut O,
    cfg: &PositionOptConfig,
) -> Vec<f64> {
    let n_ant = obj.positions().len();
    let mut current = obj.value();
    for _ in 0..cfg.ascent_max_iters {
        let mut largest_move = 0.0f64;
        for n in 0..n_ant {
            let g = obj.partial(n);
            if g == 0.0 || !g.is_finite() {
                continue;
            }
            let x = obj.positions()[n];
            let mut step = cfg.initial_step;
            for _ in 0..cfg.max_backtracks {
                let p = x + step * g.signum();
                let v = obj.value_if_moved(n, p);
                if v >= current + cfg.armijo_slope * step * g.abs() {
                    obj.set(n, p);
                    current = v;
                    largest_move = largest_move.max(step);
                    break;
                }
                step *= cfg.armijo_shrink;
            }
        }
        if largest_move < cfg.ascent_tol {
            break;
        }
    }
    obj.positions().to_vec()
}

/// Sorts the positions, pushes them onto the feasible set by the sequential
/// clamp chain, and restores the original antenna order.
pub fn project_positions(positions: &[f64], geometry: &ArrayGeometry) -> Result<ProjectionResult> {
    let n = positions.len();
    let (lo, hi, d0) = (geometry.x_min, geometry.x_max, geometry.d0);
    if n as f64 * d0 > (hi - lo) * (1.0 + 1e-12) + SPACING_SLACK || !(lo < hi) {
        return Err(Error::InfeasibleRegion(format!(
            "{n} antennas at spacing {d0} do not fit in [{lo}, {hi}]"
        )));
    }
    if positions.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("cannot project non-finite positions"));
    }
    let mut permutation: Vec<usize> = (0..n).collect();
    permutation.sort_by(|a, b| positions[*a].total_cmp(&positions[*b]));

    let mut sorted: Vec<f64> = permutation.iter().map(|i| positions[*i]).collect();
    for m in 0..n {
        let floor = if m == 0 { lo } else { sorted[m - 1] + d0 };
        let ceiling = hi - (n - 1 - m) as f64 * d0;
        sorted[m] = sorted[m].max(floor).min(ceiling);
    }
    let mut out = vec![0.0; n];
    for (m, &orig) in permutation.iter().enumerate() {
        out[orig] = sorted[m];
    }
    Ok(ProjectionResult {
        positions: out,
        permutation,
    })
}

/// Search, ascend, project. Falls back to the better of the grid-stage
/// layout and the (feasible) input whenever projection loses value.
pub fn spga_with<O: CoordinateObjective>(
    obj: &mut O,
    geometry: &ArrayGeometry,
    cfg: &PositionOptConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let input = obj.positions().to_vec();
    let input_value = obj.value();
    let input_ok = positions_feasible(&input, geometry.x_min, geometry.x_max, geometry.d0);

    let searched = grid_init_with(obj, geometry, cfg)?;
    let searched_value = obj.value();
    let ascended = coordinate_ascent_with(obj, cfg);
    let projected = project_positions(&ascended, geometry)?.positions;
    let projected_value = obj.value_at(&projected);

    let mut best = (projected, projected_value);
    if searched_value > best.1 {
        best = (searched, searched_value);
    }
    if input_ok && input_value > best.1 {
        best = (input, input_value);
    }
    obj.reset(&best.0);
    Ok(best.0)
}

/// Direct gradient ascent from a feasible layout: full-vector Armijo steps
/// until a step would leave the feasible set, at which point the step is cut
/// back to the boundary and the method stops.
pub fn dga_with<O: CoordinateObjective>(
    obj: &mut O,
    geometry: &ArrayGeometry,
    cfg: &PositionOptConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let (lo, hi, d0) = (geometry.x_min, geometry.x_max, geometry.d0);
    let feasible = |x: &[f64]| positions_feasible(x, lo, hi, d0);
    if !feasible(obj.positions()) {
        return Err(Error::invalid("direct gradient ascent needs a feasible start"));
    }
    let mut x = obj.positions().to_vec();
    let mut current = obj.value();
    for _ in 0..cfg.ascent_max_iters {
        let g = obj.gradient();
        let g_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if g_norm == 0.0 || !g_norm.is_finite() {
            break;
        }
        let dir: Vec<f64> = g.iter().map(|v| v / g_norm).collect();
        let along = |t: f64| -> Vec<f64> { x.iter().zip(&dir).map(|(a, d)| a + t * d).collect() };

        let mut step = cfg.initial_step;
        let mut accepted = None;
        for _ in 0..cfg.max_backtracks {
            let trial = along(step);
            let v = obj.value_at(&trial);
            if v >= current + cfg.armijo_slope * step * g_norm {
                accepted = Some((step, trial, v));
                break;
            }
            step *= cfg.armijo_shrink;
        }
        let Some((step, trial, v)) = accepted else {
            break;
        };
        if feasible(&trial) {
            x = trial;
            current = v;
            obj.reset(&x);
            if step < cfg.ascent_tol {
                break;
            }
            continue;
        }
        // Largest feasible fraction of the step, by bisection (t = 0 is feasible).
        let (mut t_ok, mut t_bad) = (0.0, 1.0);
        for _ in 0..60 {
            let t = 0.5 * (t_ok + t_bad);
            if feasible(&along(t * step)) {
                t_ok = t;
            } else {
                t_bad = t;
            }
        }
        // Moves shorter than the tolerance would only creep into the
        // spacing slack.
        if t_ok * step >= cfg.ascent_tol {
            let edge = along(t_ok * step);
            let v = obj.value_at(&edge);
            if v >= current {
                x = edge;
                obj.reset(&x);
            }
        }
        break;
    }
    Ok(x)
}

/// [`grid_init_with`] on the surrogate.
#[allow(clippy::too_many_arguments)]
pub fn grid_init(
    positions: &[f64],
    f: &Beamformer,
    aux: &AuxiliaryState,
    scenario: &Scenario,
    weights: Weights,
    geometry: &ArrayGeometry,
    cfg: &PositionOptConfig,
) -> Result<Vec<f64>> {
    check_len(positions, f)?;
    let landscape = SurrogateLandscape::new(scenario, f, aux, weights)?;
    grid_init_with(&mut landscape.probe(positions), geometry, cfg)
}

/// [`coordinate_ascent_with`] on the surrogate.
pub fn coordinate_ascent(
    positions: &[f64],
    f: &Beamformer,
    aux: &AuxiliaryState,
    scenario: &Scenario,
    weights: Weights,
    cfg: &PositionOptConfig,
) -> Result<Vec<f64>> {
    check_len(positions, f)?;
    let landscape = SurrogateLandscape::new(scenario, f, aux, weights)?;
    Ok(coordinate_ascent_with(&mut landscape.probe(positions), cfg))
}

/// [`spga_with`] on the surrogate.
#[allow(clippy::too_many_arguments)]
pub fn spga(
    positions: &[f64],
    f: &Beamformer,
    aux: &AuxiliaryState,
    scenario: &Scenario,
    weights: Weights,
    geometry: &ArrayGeometry,
    cfg: &PositionOptConfig,
) -> Result<Vec<f64>> {
    check_len(positions, f)?;
    let landscape = SurrogateLandscape::new(scenario, f, aux, weights)?;
    spga_with(&mut landscape.probe(positions), geometry, cfg)
}

/// [`dga_with`] on the surrogate.
#[allow(clippy::too_many_arguments)]
pub fn dga(
    positions: &[f64],
    f: &Beamformer,
    aux: &AuxiliaryState,
    scenario: &Scenario,
    weights: Weights,
    geometry: &ArrayGeometry,
    cfg: &PositionOptConfig,
) -> Result<Vec<f64>> {
    check_len(positions, f)?;
    let landscape = SurrogateLandscape::new(scenario, f, aux, weights)?;
    dga_with(&mut landscape.probe(positions), geometry, cfg)
}
