//! Finite truncation of the diagonal rotation semigroup on complex l2.
//!
//! Coordinate n rotates at rate 2*pi*n and carries noise with variance rate
//! 1/(1+n)^2. The constant drift vector b = (1, 1, 1, ...) has unbounded l2
//! norm (||b_N||^2 = N), yet the semigroup integral
//!
//! ```text
//! (int_0^t U_s b ds)_n = (e^{2 pi i n t} - 1) / (2 pi i n)
//! ```
//!
//! is square-summable: the drift vector lives outside the state space while
//! its smoothed integral lies inside. The mild solution
//! `X_n(t) = (int_0^t U_s b ds)_n + int_0^t e^{2 pi i n (t-s)} dW_n(s)` is
//! simulated exactly per step (the rotation is unimodular, so the stochastic
//! convolution increment is circular Gaussian with variance (dt)/(1+n)^2).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::jsonout::Json;
use crate::report::{mean_sd, CheckLine};
use crate::rng::CounterRng;

pub const TAU: f64 = std::f64::consts::TAU;

/// Rotation rate of coordinate n.
pub fn rotation_rate(n: usize) -> f64 {
    TAU * n as f64
}

/// Noise variance rate of coordinate n.
pub fn q_decay(n: usize) -> f64 {
    1.0 / ((1 + n) as f64 * (1 + n) as f64)
}

/// `e^{2 pi i n t}` with the phase reduced mod 1 first, so integer `n t`
/// gives exactly 1.
pub fn rotation(n: usize, t: f64) -> Complex64 {
    let phase = (n as f64 * t).fract();
    let theta = TAU * phase;
    Complex64::new(theta.cos(), theta.sin())
}

#[derive(Clone, Debug)]
pub struct DriftIntegral {
    pub t: f64,
    /// Component n (1-based index n = 1..=n_max).
    pub components: Vec<Complex64>,
    pub norm_sq: f64,
}

/// Closed form of the semigroup integral of the all-ones drift vector.
pub fn drift_integral(t: f64, n_max: usize) -> DriftIntegral {
    let mut components = Vec::with_capacity(n_max);
    let mut norm_sq = 0.0;
    for n in 1..=n_max {
        let rot = rotation(n, t);
        // (e^{i theta} - 1) / (2 pi i n) = (sin theta + i (1 - cos theta)) / (2 pi n)
        let denom = TAU * n as f64;
        let c = Complex64::new(rot.im / denom, (1.0 - rot.re) / denom);
        norm_sq += c.norm_sqr();
        components.push(c);
    }
    DriftIntegral { t, components, norm_sq }
}

/// Composite Simpson quadrature of `int_0^t e^{2 pi i n s} ds`.
pub fn drift_component_quadrature(t: f64, n: usize, step: f64) -> Complex64 {
    let mut m = (t / step).ceil() as usize;
    if m % 2 == 1 {
        m += 1;
    }
    let m = m.max(2);
    let h = t / m as f64;
    let f = |s: f64| {
        let theta = TAU * n as f64 * s;
        Complex64::new(theta.cos(), theta.sin())
    };
    let mut acc = f(0.0) + f(t);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += f(k as f64 * h) * w;
    }
    acc * (h / 3.0)
}

#[derive(Clone, Debug)]
pub struct OutOfSpaceRow {
    pub n_max: usize,
    /// `||b_N||^2`, summed literally over the truncation.
    pub b_norm_sq: f64,
    pub integral_norm_sq: f64,
}

/// Contrast between the divergent truncated drift norm and the convergent
/// integral norm.
#[derive(Clone, Debug)]
pub struct OutOfSpaceReport {
    pub t: f64,
    pub rows: Vec<OutOfSpaceRow>,
    /// Largest single-term increment of the integral-norm partial sums over
    /// the final truncation window (N_prev, N_last].
    pub max_tail_term: f64,
    /// Total change of the integral norm between the last two truncations.
    pub tail_change: f64,
    /// `||b_N||^2 / N` is exactly one for every N.
    pub b_grows_linearly: bool,
    /// Partial-sum increments below 1e-6 over the final window.
    pub integral_converged: bool,
    pub pass: bool,
}

pub const TAIL_TERM_TOL: f64 = 1e-6;

pub fn out_of_space_report(t: f64, n_list: &[usize]) -> Result<OutOfSpaceReport> {
    if n_list.len() < 2 || n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] == 0 {
        return Err(Error::InvalidInput("N list must be increasing and positive".into()));
    }
    let last = *n_list.last().unwrap();
    let full = drift_integral(t, last);
    let mut rows = Vec::new();
    let mut b_grows_linearly = true;
    for &n in n_list {
        let b_norm_sq = (0..n).fold(0.0_f64, |acc, _| acc + 1.0);
        b_grows_linearly &= b_norm_sq == n as f64;
        let integral_norm_sq: f64 =
            full.components[..n].iter().map(|c| c.norm_sqr()).sum();
        rows.push(OutOfSpaceRow { n_max: n, b_norm_sq, integral_norm_sq });
    }
    let prev = n_list[n_list.len() - 2];
    let max_tail_term = full.components[prev..last]
        .iter()
        .map(|c| c.norm_sqr())
        .fold(0.0_f64, f64::max);
    let tail_change =
        rows[rows.len() - 1].integral_norm_sq - rows[rows.len() - 2].integral_norm_sq;
    let integral_converged = max_tail_term < TAIL_TERM_TOL;
    Ok(OutOfSpaceReport {
        t,
        rows,
        max_tail_term,
        tail_change,
        b_grows_linearly,
        integral_converged,
        pass: b_grows_linearly && integral_converged,
    })
}

/// Truncation parameters for the spectral Ornstein-Uhlenbeck simulation.
#[derive(Clone, Debug)]
pub struct TruncatedSpectralModel {
    pub n_max: usize,
    pub t: f64,
    pub n_steps: usize,
    /// Coordinates whose Monte-Carlo moments are checked.
    pub checked_coords: Vec<usize>,
}

impl TruncatedSpectralModel {
    pub fn new(n_max: usize, t: f64) -> Result<Self> {
        if n_max == 0 || n_max > 10_000 {
            return Err(Error::InvalidInput(format!("truncation {n_max} outside 1..=10^4")));
        }
        if !(t > 0.0) {
            return Err(Error::InvalidInput(format!("need t > 0, got {t}")));
        }
        let checked_coords =
            [1usize, 2, 3, 5, 10, 100].iter().copied().filter(|n| *n <= n_max).collect();
        Ok(TruncatedSpectralModel { n_max, t, n_steps: 8, checked_coords })
    }
}

#[derive(Clone, Debug)]
pub struct CoordMomentCheck {
    pub coord: usize,
    pub expected_mean: Complex64,
    pub mean: Complex64,
    pub variance: f64,
    pub expected_variance: f64,
    pub checks: Vec<CheckLine>,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct SpectralOuReport {
    pub t: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub coords: Vec<CoordMomentCheck>,
    /// Sample covariance of the real parts of the first two checked
    /// coordinates (independence proxy).
    pub independence: Option<CheckLine>,
    pub pass: bool,
}

/// Simulates the checked coordinates of the mild solution exactly and runs
/// 3-sigma checks of the mean against the drift integral and of the variance
/// against `t/(1+n)^2`.
pub fn simulate_spectral_ou(
    model: &TruncatedSpectralModel,
    n_paths: usize,
    seed: u64,
) -> Result<SpectralOuReport> {
    if n_paths < 2 {
        return Err(Error::InvalidInput("need at least two paths".into()));
    }
    let dt = model.t / model.n_steps as f64;
    let tol = crate::sim::DEFAULT_TOLERANCE_MULTIPLE;
    let drift = drift_integral(model.t, model.n_max);

    let mut finals: Vec<Vec<Complex64>> = Vec::with_capacity(model.checked_coords.len());
    for &n in &model.checked_coords {
        let rot = rotation(n, dt);
        let noise_sd = (q_decay(n) * dt / 2.0).sqrt();
        let mut coord_finals = Vec::with_capacity(n_paths);
        for path in 0..n_paths {
            let mut conv = Complex64::new(0.0, 0.0);
            for step in 0..model.n_steps {
                let (g1, g2) =
                    CounterRng::keyed(seed, &[path as u64, n as u64, step as u64]).normal_pair();
                conv = conv * rot + Complex64::new(noise_sd * g1, noise_sd * g2);
            }
            coord_finals.push(drift.components[n - 1] + conv);
        }
        finals.push(coord_finals);
    }

    let mut coords = Vec::new();
    for (&n, coord_finals) in model.checked_coords.iter().zip(&finals) {
        let expected_mean = drift.components[n - 1];
        let res: Vec<f64> = coord_finals.iter().map(|z| z.re).collect();
        let ims: Vec<f64> = coord_finals.iter().map(|z| z.im).collect();
        let (mean_re, sd_re) = mean_sd(&res);
        let (mean_im, sd_im) = mean_sd(&ims);
        let sqrt_n = (n_paths as f64).sqrt();

        let mean = Complex64::new(mean_re, mean_im);
        let dev_sq: Vec<f64> = coord_finals.iter().map(|z| (z - mean).norm_sqr()).collect();
        let (variance, sd_var) = mean_sd(&dev_sq);
        let expected_variance = model.t * q_decay(n);

        let checks = vec![
            CheckLine::three_sigma(
                "mean_re",
                mean_re - expected_mean.re,
                sd_re / sqrt_n,
                0.0,
                tol,
            ),
            CheckLine::three_sigma(
                "mean_im",
                mean_im - expected_mean.im,
                sd_im / sqrt_n,
                0.0,
                tol,
            ),
            CheckLine::three_sigma(
                "variance",
                variance - expected_variance,
                sd_var / sqrt_n,
                0.0,
                tol,
            ),
        ];
        let pass = checks.iter().all(|c| c.pass);
        coords.push(CoordMomentCheck {
            coord: n,
            expected_mean,
            mean,
            variance,
            expected_variance,
            checks,
            pass,
        });
    }

    let independence = if finals.len() >= 2 {
        let a: Vec<f64> = finals[0].iter().map(|z| z.re).collect();
        let b: Vec<f64> = finals[1].iter().map(|z| z.re).collect();
        let (ma, _) = mean_sd(&a);
        let (mb, _) = mean_sd(&b);
        let prods: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).collect();
        let (cov, sd) = mean_sd(&prods);
        Some(CheckLine::three_sigma(
            "re_cov_first_two_coords",
            cov,
            sd / (n_paths as f64).sqrt(),
            0.0,
            tol,
        ))
    } else {
        None
    };

    let pass = coords.iter().all(|c| c.pass) && independence.as_ref().is_none_or(|c| c.pass);
    Ok(SpectralOuReport { t: model.t, n_paths, seed, coords, independence, pass })
}

/// Full demo report: the divergence/convergence contrast, the quadrature
/// cross-check of the closed-form components, and the Monte-Carlo moment
/// checks. Returns the rendered-ready JSON and the overall verdict.
pub fn demo_report(t: f64, n_list: &[usize], n_paths: usize, seed: u64) -> Result<(Json, bool)> {
    let report = out_of_space_report(t, n_list)?;
    let n_max = *n_list.last().unwrap();
    let model = TruncatedSpectralModel::new(n_max, t)?;

    let integral = drift_integral(t, n_max);
    let mut quad_max_err = 0.0_f64;
    for &n in &model.checked_coords {
        let q = drift_component_quadrature(t, n, 1e-4);
        quad_max_err = quad_max_err.max((integral.components[n - 1] - q).norm());
    }

    let mc = simulate_spectral_ou(&model, n_paths, seed)?;

    let rows_b: Vec<f64> = report.rows.iter().map(|r| r.b_norm_sq).collect();
    let rows_i: Vec<f64> = report.rows.iter().map(|r| r.integral_norm_sq).collect();
    let moment_checks: Vec<Json> = mc
        .coords
        .iter()
        .map(|c| {
            Json::obj(vec![
                ("coord", Json::Int(c.coord as i64)),
                ("mean_re", Json::Float(c.mean.re)),
                ("mean_im", Json::Float(c.mean.im)),
                ("expected_re", Json::Float(c.expected_mean.re)),
                ("expected_im", Json::Float(c.expected_mean.im)),
                ("variance", Json::Float(c.variance)),
                ("expected_variance", Json::Float(c.expected_variance)),
                ("checks", Json::Arr(c.checks.iter().map(|l| l.to_json()).collect())),
                ("pass", Json::Bool(c.pass)),
            ])
        })
        .collect();
    let pass = report.pass && mc.pass && quad_max_err < 1e-8;
    let out = Json::obj(vec![
        ("t", Json::Float(t)),
        ("n_list", Json::Arr(n_list.iter().map(|n| Json::Int(*n as i64)).collect())),
        ("b_norm_sq", Json::floats(&rows_b)),
        ("integral_norm_sq", Json::floats(&rows_i)),
        ("max_tail_term", Json::Float(report.max_tail_term)),
        ("tail_change", Json::Float(report.tail_change)),
        ("quadrature_max_err", Json::Float(quad_max_err)),
        ("moment_checks", Json::Arr(moment_checks)),
        (
            "independence",
            mc.independence.as_ref().map(|c| c.to_json()).unwrap_or(Json::Null),
        ),
        ("pass", Json::Bool(pass)),
    ]);
    Ok((out, pass))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_integral_is_zero_at_integer_times() {
        for &t in &[1.0_f64, 2.0, 7.0] {
            let d = drift_integral(t, 64);
            assert!(d.components.iter().all(|c| c.re == 0.0 && c.im == 0.0));
            assert_eq!(d.norm_sq, 0.0);
        }
    }

    #[test]
    fn first_component_at_half_period() {
        // (e^{i pi} - 1)/(2 pi i) = i / pi
        let d = drift_integral(0.5, 4);
        let c = d.components[0];
        assert!(c.re.abs() < 1e-15);
        assert!((c.im - 1.0 / std::f64::consts::PI).abs() < 1e-15);
        assert!((c.norm() - 1.0 / std::f64::consts::PI).abs() < 1e-15);
        // even coordinates are back at the start
        assert_eq!(d.components[1], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn integral_norm_is_nondecreasing_in_truncation() {
        let t = 0.5;
        let mut prev = 0.0;
        for n in [10usize, 100, 1000] {
            let s = drift_integral(t, n).norm_sq;
            assert!(s >= prev);
            prev = s;
        }
        // limit for t = 1/2 is sum over odd n of 1/(pi n)^2 = 1/8
        assert!((prev - 0.125).abs() < 1e-3);
    }

    #[test]
    fn out_of_space_contrast() {
        let r = out_of_space_report(0.5, &[100, 1000, 10000]).unwrap();
        assert!(r.b_grows_linearly);
        for row in &r.rows {
            assert_eq!(row.b_norm_sq, row.n_max as f64);
        }
        assert!(r.integral_converged, "max tail term {}", r.max_tail_term);
        // the largest single term beyond N = 1000 is about 1/(pi^2 1001^2)
        assert!(r.max_tail_term < 1.1e-7);
        assert!(r.pass);
        assert!(out_of_space_report(0.5, &[100]).is_err());
        assert!(out_of_space_report(0.5, &[1000, 100]).is_err());
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let t = 0.5;
        let d = drift_integral(t, 100);
        for &n in &[1usize, 2, 3, 5, 10, 100] {
            let q = drift_component_quadrature(t, n, 1e-4);
            let err = (d.components[n - 1] - q).norm();
            assert!(err < 1e-8, "n = {n}: err {err:e}");
        }
    }

    #[test]
    fn rotation_is_unitary_and_a_group() {
        for &n in &[1usize, 3, 17] {
            for &h in &[0.1_f64, 0.37, 1.9] {
                assert!((rotation(n, h).norm() - 1.0).abs() < 1e-15);
                let lhs = rotation(n, h) * rotation(n, 0.25);
                let rhs = rotation(n, h + 0.25);
                assert!((lhs - rhs).norm() < 1e-12);
                let inv = rotation(n, h) * rotation(n, -h);
                assert!((inv - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            }
        }
        // norm preservation on a random vector
        let mut rng = CounterRng::keyed(3, &[0]);
        let x: Vec<Complex64> =
            (0..32).map(|_| Complex64::new(rng.normal(), rng.normal())).collect();
        let before: f64 = x.iter().map(|z| z.norm_sqr()).sum();
        let after: f64 =
            x.iter().enumerate().map(|(i, z)| (rotation(i + 1, 0.77) * z).norm_sqr()).sum();
        assert!((before - after).abs() < 1e-12 * before);
    }

    #[test]
    fn spectral_ou_moments_pass() {
        let model = TruncatedSpectralModel::new(100, 0.5).unwrap();
        let rep = simulate_spectral_ou(&model, 4000, 77).unwrap();
        assert!(rep.pass, "coords: {:?}", rep.coords.iter().map(|c| c.pass).collect::<Vec<_>>());
        assert!(rep.independence.as_ref().unwrap().pass);
        // determinism
        let rep2 = simulate_spectral_ou(&model, 4000, 77).unwrap();
        assert_eq!(rep.coords[0].mean, rep2.coords[0].mean);
    }
}
