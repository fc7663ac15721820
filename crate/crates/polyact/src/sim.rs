//! Euler-Maruyama simulation of scalar polynomial diffusions and the
//! statistical validators tying the simulated laws back to the matrix
//! algebra: the conditional-moment formula, the compensated-martingale
//! property and the quadratic-covariation identity.
//!
//! Paths are driven by counter-based per-(path, step) random streams, so an
//! ensemble is a pure function of `(model, T, dt, n_paths, seed)` and can be
//! regenerated path by path instead of being stored; validators work through
//! the [`PathSource`] trait and reduce per-path results in path-index order,
//! which makes every report deterministic regardless of worker count.

use std::sync::Arc;

use rayon::prelude::*;

use crate::action::conditional_moment;
use crate::error::{Error, Result};
use crate::generator::GeneratorMatrix;
use crate::graded::{GradedBasis, PolyVec, StatePoint};
use crate::ode::SigmaTable;
use crate::product::{covariance_poly, ProductTable};
use crate::report::{mean_sd, CheckLine, ValidationReport};
use crate::rng::CounterRng;

/// Coefficient of the documented O(dt) weak-bias allowance added to the
/// 3-sigma band: `allowance = EULER_BIAS_COEFF * dt * max(1, scale)`.
///
/// Calibrated against the exactly computable Euler chain of the
/// mean-reverting model, where the weak bias of the first two moments at
/// dt = 1e-3 stays below 0.4 * dt * scale; the factor 2 leaves headroom for
/// the other bundled models. See `euler_bias_is_covered_by_allowance`.
pub const EULER_BIAS_COEFF: f64 = 2.0;

/// A report fails automatically when more than this fraction of path-steps
/// was clipped to the state range.
pub const CLIP_FAIL_FRACTION: f64 = 1e-3;

pub const DEFAULT_TOLERANCE_MULTIPLE: f64 = 3.0;

/// Relative-error threshold for the covariation validator.
pub const COVARIATION_REL_TOL: f64 = 0.05;

#[derive(Clone, Debug)]
pub enum DriftSpec {
    Zero,
    Constant(f64),
    /// `mu + gamma x`
    Affine { mu: f64, gamma: f64 },
}

impl DriftSpec {
    #[inline]
    pub fn at(&self, x: f64) -> f64 {
        match self {
            DriftSpec::Zero => 0.0,
            DriftSpec::Constant(c) => *c,
            DriftSpec::Affine { mu, gamma } => mu + gamma * x,
        }
    }
}

#[derive(Clone, Debug)]
pub enum SigmaSpec {
    Constant(f64),
    /// `sigma * x`
    Proportional(f64),
    /// `sqrt(u(x))` for the tabulated ODE solution.
    SqrtOdeU(Arc<SigmaTable>),
}

impl SigmaSpec {
    #[inline]
    pub fn at(&self, x: f64) -> Result<f64> {
        match self {
            SigmaSpec::Constant(s) => Ok(*s),
            SigmaSpec::Proportional(s) => Ok(s * x),
            SigmaSpec::SqrtOdeU(t) => t.sigma_at(x),
        }
    }

    pub fn variance_at(&self, x: f64) -> Result<f64> {
        let s = self.at(x)?;
        Ok(s * s)
    }
}

/// A concrete scalar diffusion together with the basis and generator it is
/// supposed to realize.
#[derive(Clone, Debug)]
pub struct ProcessModel {
    pub name: String,
    pub drift: DriftSpec,
    pub sigma: SigmaSpec,
    pub x0: f64,
    pub range: (f64, f64),
    pub basis: Arc<GradedBasis>,
    pub generator: GeneratorMatrix,
}

impl ProcessModel {
    pub fn new(
        name: &str,
        drift: DriftSpec,
        sigma: SigmaSpec,
        x0: f64,
        range: (f64, f64),
        generator: GeneratorMatrix,
    ) -> Result<Self> {
        let basis = generator.basis().clone();
        if basis.state_dim() != 1 {
            return Err(Error::InvalidInput(
                "path simulation needs a scalar state space".into(),
            ));
        }
        if !(range.0 < range.1) {
            return Err(Error::InvalidInput(format!("empty state range [{}, {}]", range.0, range.1)));
        }
        if !(x0 >= range.0 && x0 <= range.1) {
            return Err(Error::InvalidInput(format!("x0 = {x0} outside the state range")));
        }
        if let SigmaSpec::SqrtOdeU(t) = &sigma {
            if range.0 < -t.x_max() || range.1 > t.x_max() {
                return Err(Error::InvalidInput(format!(
                    "state range [{}, {}] exceeds the tabulated domain [{}, {}]",
                    range.0,
                    range.1,
                    -t.x_max(),
                    t.x_max()
                )));
            }
        }
        Ok(ProcessModel { name: name.to_string(), drift, sigma, x0, range, basis, generator })
    }

    #[inline]
    pub fn drift_at(&self, x: f64) -> f64 {
        self.drift.at(x)
    }

    #[inline]
    pub fn sigma_at(&self, x: f64) -> Result<f64> {
        self.sigma.at(x)
    }

    /// Verifies that the stored generator matrix agrees with
    /// `drift * f' + sigma^2/2 * f''` for every twice-differentiable basis
    /// entry, on an equally spaced grid over the state range. Derivatives are
    /// analytic (monomial powers; the tabulated entry carries its own
    /// derivative and satisfies f'' = x^2/f). Returns the worst deviation.
    pub fn generator_consistency(&self, n_grid: usize, tol: f64) -> Result<f64> {
        let mut worst = 0.0_f64;
        let (lo, hi) = self.range;
        for (j, entry) in self.basis.entries().iter().enumerate() {
            let image = self.generator.apply(&PolyVec::unit(self.basis.clone(), j))?;
            for k in 0..n_grid {
                let x = lo + (hi - lo) * k as f64 / (n_grid - 1).max(1) as f64;
                let (d1, d2) = match (entry.eval.deriv1(x), entry.eval.deriv2(x)) {
                    (Some(a), Some(b)) => (a?, b?),
                    _ => continue,
                };
                let lhs = image.evaluate(&StatePoint::scalar(x))?;
                let rhs = self.drift_at(x) * d1 + 0.5 * self.sigma.variance_at(x)? * d2;
                worst = worst.max((lhs - rhs).abs());
            }
        }
        if worst > tol {
            return Err(Error::InvalidInput(format!(
                "generator disagrees with the SDE coefficients by {worst:e} (> {tol:e})"
            )));
        }
        Ok(worst)
    }
}

/// Uniform time grid `0, dt, ..., n_steps * dt`.
#[derive(Clone, Debug)]
pub struct SimGrid {
    pub t_max: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl SimGrid {
    pub fn new(t_max: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !(t_max >= dt) {
            return Err(Error::InvalidInput(format!("need 0 < dt <= T, got dt = {dt}, T = {t_max}")));
        }
        let n_steps = (t_max / dt).round() as usize;
        if ((n_steps as f64) * dt - t_max).abs() > 1e-9 * t_max.max(1.0) {
            return Err(Error::OffGrid { t: t_max, dt });
        }
        Ok(SimGrid { t_max, dt, n_steps })
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| k as f64 * self.dt).collect()
    }

    pub fn index_of(&self, t: f64) -> Result<usize> {
        let r = t / self.dt;
        let i = r.round();
        if (r - i).abs() > 1e-6 || i < 0.0 || (i as usize) > self.n_steps {
            return Err(Error::OffGrid { t, dt: self.dt });
        }
        Ok(i as usize)
    }
}

/// Simulates one path into `buf` (cleared first); returns the clip count.
pub fn simulate_path(
    model: &ProcessModel,
    grid: &SimGrid,
    seed: u64,
    path: usize,
    buf: &mut Vec<f64>,
) -> Result<u64> {
    buf.clear();
    buf.reserve(grid.n_steps + 1);
    let (lo, hi) = model.range;
    let sqrt_dt = grid.dt.sqrt();
    let mut x = model.x0;
    let mut clips = 0u64;
    buf.push(x);
    for k in 0..grid.n_steps {
        let z = CounterRng::keyed(seed, &[path as u64, k as u64]).normal();
        x = x + model.drift_at(x) * grid.dt + model.sigma_at(x)? * sqrt_dt * z;
        if !x.is_finite() {
            return Err(Error::NonFiniteState { path, step: k });
        }
        if x < lo {
            x = lo;
            clips += 1;
        } else if x > hi {
            x = hi;
            clips += 1;
        }
        buf.push(x);
    }
    Ok(clips)
}

/// Access to an ensemble path by index; implemented by both the stored and
/// the streaming (regenerate-on-demand) representation.
pub trait PathSource: Sync {
    fn model(&self) -> &ProcessModel;
    fn grid(&self) -> &SimGrid;
    fn n_paths(&self) -> usize;
    fn seed(&self) -> u64;
    /// Fills `buf` with the `n_steps + 1` states of the path; returns the
    /// number of clipped steps.
    fn load_path(&self, idx: usize, buf: &mut Vec<f64>) -> Result<u64>;
}

/// A fully materialized ensemble (`n_paths x (n_steps + 1)` states).
#[derive(Clone, Debug)]
pub struct PathEnsemble {
    model: Arc<ProcessModel>,
    grid: SimGrid,
    seed: u64,
    n_paths: usize,
    data: Vec<f64>,
    clips: Vec<u64>,
}

impl PathEnsemble {
    pub fn path(&self, idx: usize) -> &[f64] {
        let w = self.grid.n_steps + 1;
        &self.data[idx * w..(idx + 1) * w]
    }

    pub fn times(&self) -> Vec<f64> {
        self.grid.times()
    }

    pub fn total_clipped(&self) -> u64 {
        self.clips.iter().sum()
    }
}

impl PathSource for PathEnsemble {
    fn model(&self) -> &ProcessModel {
        &self.model
    }
    fn grid(&self) -> &SimGrid {
        &self.grid
    }
    fn n_paths(&self) -> usize {
        self.n_paths
    }
    fn seed(&self) -> u64 {
        self.seed
    }
    fn load_path(&self, idx: usize, buf: &mut Vec<f64>) -> Result<u64> {
        buf.clear();
        buf.extend_from_slice(self.path(idx));
        Ok(self.clips[idx])
    }
}

/// Regenerates paths on demand from the counter-based streams; bit-identical
/// to the stored ensemble with the same parameters.
#[derive(Clone, Debug)]
pub struct StreamingEnsemble {
    pub model: Arc<ProcessModel>,
    pub grid: SimGrid,
    pub seed: u64,
    pub n_paths: usize,
}

impl StreamingEnsemble {
    pub fn new(model: Arc<ProcessModel>, t_max: f64, dt: f64, n_paths: usize, seed: u64) -> Result<Self> {
        if n_paths == 0 {
            return Err(Error::InvalidInput("need at least one path".into()));
        }
        Ok(StreamingEnsemble { grid: SimGrid::new(t_max, dt)?, model, seed, n_paths })
    }
}

impl PathSource for StreamingEnsemble {
    fn model(&self) -> &ProcessModel {
        &self.model
    }
    fn grid(&self) -> &SimGrid {
        &self.grid
    }
    fn n_paths(&self) -> usize {
        self.n_paths
    }
    fn seed(&self) -> u64 {
        self.seed
    }
    fn load_path(&self, idx: usize, buf: &mut Vec<f64>) -> Result<u64> {
        simulate_path(&self.model, &self.grid, self.seed, idx, buf)
    }
}

/// Simulates and stores a full ensemble. Parallel across paths; the layout
/// depends only on the inputs.
pub fn simulate(
    model: Arc<ProcessModel>,
    t_max: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(Error::InvalidInput("need at least one path".into()));
    }
    let grid = SimGrid::new(t_max, dt)?;
    let per_path: Vec<Result<(Vec<f64>, u64)>> = (0..n_paths)
        .into_par_iter()
        .map_init(Vec::new, |buf, idx| {
            let clips = simulate_path(&model, &grid, seed, idx, buf)?;
            Ok((buf.clone(), clips))
        })
        .collect();
    let mut data = Vec::with_capacity(n_paths * (grid.n_steps + 1));
    let mut clips = Vec::with_capacity(n_paths);
    for r in per_path {
        let (states, c) = r?;
        data.extend_from_slice(&states);
        clips.push(c);
    }
    Ok(PathEnsemble { model, grid, seed, n_paths, data, clips })
}

/// Maps every path through `f` in parallel and returns the per-path values in
/// path order plus the total clip count.
fn scan_paths<S, T, F>(src: &S, f: F) -> Result<(Vec<T>, u64)>
where
    S: PathSource + ?Sized,
    T: Send,
    F: Fn(&[f64]) -> Result<T> + Sync,
{
    let results: Vec<Result<(T, u64)>> = (0..src.n_paths())
        .into_par_iter()
        .map_init(Vec::new, |buf, idx| {
            let clips = src.load_path(idx, buf)?;
            Ok((f(buf)?, clips))
        })
        .collect();
    let mut values = Vec::with_capacity(src.n_paths());
    let mut clips = 0u64;
    for r in results {
        let (v, c) = r?;
        values.push(v);
        clips += c;
    }
    Ok((values, clips))
}

fn clip_fraction<S: PathSource + ?Sized>(src: &S, clipped: u64) -> f64 {
    clipped as f64 / (src.n_paths() as f64 * src.grid().n_steps as f64)
}

/// Evaluates a polynomial along a path into `out`.
fn eval_along(p: &PolyVec, states: &[f64], out: &mut Vec<f64>) -> Result<()> {
    out.clear();
    out.reserve(states.len());
    for &x in states {
        out.push(p.evaluate_scalar(x)?);
    }
    Ok(())
}

/// Trapezoidal cumulative integral of `values` on a uniform grid, evaluated
/// at index `upto`.
fn trapezoid(values: &[f64], dt: f64, upto: usize) -> f64 {
    if upto == 0 {
        return 0.0;
    }
    let mut acc = 0.5 * (values[0] + values[upto]);
    for v in &values[1..upto] {
        acc += v;
    }
    acc * dt
}

/// Compares the ensemble average of `p(X_h)` with the conditional moment
/// predicted by the matrix exponential at the start point.
pub fn moment_mc_test<S: PathSource + ?Sized>(
    src: &S,
    g: &GeneratorMatrix,
    p: &PolyVec,
    h: f64,
) -> Result<ValidationReport> {
    let grid = src.grid();
    let ih = grid.index_of(h)?;
    let model = src.model();
    let prediction = conditional_moment(g, p, h, &StatePoint::scalar(model.x0))?;

    let (values, clipped) = scan_paths(src, |states| p.evaluate_scalar(states[ih]))?;
    let (mean, sd) = mean_sd(&values);
    let n = values.len() as f64;
    let se = sd / n.sqrt();
    let allowance = EULER_BIAS_COEFF * grid.dt * prediction.abs().max(1.0);

    Ok(ValidationReport::new("moment_mc", &model.name, DEFAULT_TOLERANCE_MULTIPLE)
        .param("h", h)
        .param("dt", grid.dt)
        .param("n_paths", n)
        .param("prediction", prediction)
        .param("sample_mean", mean)
        .check(CheckLine::three_sigma(
            "sample_mean_minus_prediction",
            mean - prediction,
            se,
            allowance,
            DEFAULT_TOLERANCE_MULTIPLE,
        ))
        .with_clipping(clip_fraction(src, clipped), CLIP_FAIL_FRACTION)
        .finish())
}

/// Tests that `M_t = p(X_t) - int_0^t (Gp)(X_r) dr` has martingale
/// increments: the mean increment over `[s, t]` is centered, and the
/// increment is uncorrelated with `p(X_s)` (a conditional-expectation proxy).
pub fn martingale_residual_test<S: PathSource + ?Sized>(
    src: &S,
    g: &GeneratorMatrix,
    p: &PolyVec,
    s: f64,
    t: f64,
) -> Result<ValidationReport> {
    let grid = src.grid();
    let is = grid.index_of(s)?;
    let it = grid.index_of(t)?;
    if is >= it {
        return Err(Error::InvalidInput(format!("need s < t on the grid, got ({s}, {t})")));
    }
    let model = src.model();
    let gp = g.apply(p)?;

    struct Row {
        increment: f64,
        p_at_s: f64,
        abs_p_t: f64,
    }
    let (rows, clipped) = scan_paths(src, |states| {
        let mut pv = Vec::new();
        let mut gv = Vec::new();
        eval_along(p, &states[..=it], &mut pv)?;
        eval_along(&gp, &states[..=it], &mut gv)?;
        let m_s = pv[is] - trapezoid(&gv, grid.dt, is);
        let m_t = pv[it] - trapezoid(&gv, grid.dt, it);
        Ok(Row { increment: m_t - m_s, p_at_s: pv[is], abs_p_t: pv[it].abs() })
    })?;

    let incs: Vec<f64> = rows.iter().map(|r| r.increment).collect();
    let ps: Vec<f64> = rows.iter().map(|r| r.p_at_s).collect();
    let (mean_inc, sd_inc) = mean_sd(&incs);
    let (mean_ps, sd_ps) = mean_sd(&ps);
    let n = incs.len() as f64;
    let scale_p = rows.iter().map(|r| r.abs_p_t).sum::<f64>() / n;
    let scale = mean_ps.abs().max(scale_p);

    // orthogonality statistic: sample covariance of the increment against p(X_s)
    let cov_samples: Vec<f64> =
        rows.iter().map(|r| (r.increment - mean_inc) * (r.p_at_s - mean_ps)).collect();
    let (cov, sd_cov) = mean_sd(&cov_samples);

    Ok(ValidationReport::new("martingale_residual", &model.name, DEFAULT_TOLERANCE_MULTIPLE)
        .param("s", s)
        .param("t", t)
        .param("dt", grid.dt)
        .param("n_paths", n)
        .check(CheckLine::three_sigma(
            "mean_increment",
            mean_inc,
            sd_inc / n.sqrt(),
            EULER_BIAS_COEFF * grid.dt * scale.max(1.0),
            DEFAULT_TOLERANCE_MULTIPLE,
        ))
        .check(CheckLine::three_sigma(
            "covariance_with_p_at_s",
            cov,
            sd_cov / n.sqrt(),
            EULER_BIAS_COEFF * grid.dt * (sd_inc * sd_ps).max(1.0),
            DEFAULT_TOLERANCE_MULTIPLE,
        ))
        .with_clipping(clip_fraction(src, clipped), CLIP_FAIL_FRACTION)
        .finish())
}

/// Compares the realized covariation `sum dp(X) dq(X)` against the
/// compensator `int a_{p,q}(X_s) ds` over the whole grid; the statistic is
/// the mean relative error across paths.
///
/// The per-path relative error of the realized sum scales like
/// `sqrt(2 dt)`, so `dt <= 1e-3` is needed for the 5% threshold to carry
/// signal.
pub fn covariation_test<S: PathSource + ?Sized>(
    src: &S,
    g: &GeneratorMatrix,
    table: &ProductTable,
    p: &PolyVec,
    q: &PolyVec,
) -> Result<ValidationReport> {
    let grid = src.grid();
    let model = src.model();
    let a_poly = covariance_poly(g, table, p, q)?;
    let same = std::ptr::eq(p, q) || p.coeffs() == q.coeffs();

    let (rels, clipped) = scan_paths(src, |states| {
        let mut pv = Vec::new();
        let mut av = Vec::new();
        eval_along(p, states, &mut pv)?;
        eval_along(&a_poly, states, &mut av)?;
        let realized = if same {
            pv.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum::<f64>()
        } else {
            let mut qv = Vec::new();
            eval_along(q, states, &mut qv)?;
            pv.windows(2)
                .zip(qv.windows(2))
                .map(|(a, b)| (a[1] - a[0]) * (b[1] - b[0]))
                .sum::<f64>()
        };
        let compensator = trapezoid(&av, grid.dt, grid.n_steps);
        if realized == compensator {
            return Ok(0.0);
        }
        Ok((realized - compensator).abs() / compensator.abs().max(1e-12))
    })?;

    let (mean_rel, sd_rel) = mean_sd(&rels);
    let n = rels.len() as f64;

    let mut report = ValidationReport::new("covariation", &model.name, DEFAULT_TOLERANCE_MULTIPLE)
        .param("dt", grid.dt)
        .param("t", grid.t_max)
        .param("n_paths", n)
        .param("mean_rel_error_se", sd_rel / n.sqrt());
    if !table.covers_quadratic_products() {
        report = report.flag("outside quadratic-product hypotheses: empirical check only");
    }
    Ok(report
        .check(CheckLine::below("mean_relative_error", mean_rel, COVARIATION_REL_TOL))
        .with_clipping(clip_fraction(src, clipped), CLIP_FAIL_FRACTION)
        .finish())
}

/// Ensemble time-average of `p(X)^2`, a moment-integrability diagnostic: for
/// any p whose square stays in the basis span this must be finite and stable
/// across seeds.
pub fn time_average_square<S: PathSource + ?Sized>(src: &S, p: &PolyVec) -> Result<f64> {
    let grid = src.grid();
    let (vals, _) = scan_paths(src, |states| {
        let mut pv = Vec::new();
        eval_along(p, states, &mut pv)?;
        for v in pv.iter_mut() {
            *v *= *v;
        }
        Ok(trapezoid(&pv, grid.dt, grid.n_steps) / grid.t_max)
    })?;
    let (mean, _) = mean_sd(&vals);
    Ok(mean)
}

/// Exact mean of the Euler chain for `dX = -kappa X dt + sigma dW`:
/// `E[X_n] = (1 - kappa dt)^n x0`.
pub fn ou_euler_chain_mean(x0: f64, kappa: f64, dt: f64, n_steps: usize) -> f64 {
    (1.0 - kappa * dt).powi(n_steps as i32) * x0
}

/// Exact second moment of the same chain:
/// `E[X_n^2] = a^n x0^2 + sigma^2 dt (1 - a^n)/(1 - a)` with `a = (1-kappa dt)^2`.
pub fn ou_euler_chain_second_moment(
    x0: f64,
    kappa: f64,
    sigma: f64,
    dt: f64,
    n_steps: usize,
) -> f64 {
    let a = (1.0 - kappa * dt).powi(2);
    let an = a.powi(n_steps as i32);
    an * x0 * x0 + sigma * sigma * dt * (1.0 - an) / (1.0 - a)
}
