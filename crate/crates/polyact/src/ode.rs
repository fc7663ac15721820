//! Solver for the second-order ODE `u''(x) = x^2 / u(x)` with `u(0) = 1`,
//! `u'(0) = 0`.
//!
//! The solution is strictly positive, even, and satisfies the a-priori bounds
//! `u(x) <= 1 + x^4/12` and `|u'(x)| <= |x|^3/3`. Its square root serves as a
//! diffusion coefficient for which `{1, x, x^2, u}` spans an invariant space
//! of the generator `G p = u p'' / 2` (note `G x^2 = u` and `G u = x^2/2`).

use crate::error::{Error, Result};

/// Tabulated `(u, u')` on a uniform symmetric grid, with linear interpolation.
#[derive(Debug)]
pub struct SigmaTable {
    x_max: f64,
    step: f64,
    /// Values on the grid `-x_max, -x_max+step, ..., x_max`; `u` is even.
    u: Vec<f64>,
    /// Tabulated derivative, odd in x.
    du: Vec<f64>,
}

/// Integrates the ODE on `[-x_max, x_max]` with classical fourth-order
/// Runge-Kutta, stepping outward from 0.
///
/// The right-hand side is even in `x` and the system `(u, v)' = (v, x^2/u)`
/// is invariant under `(x, v) -> (-x, -v)`, so the discrete solution on the
/// negative half-line is the exact mirror of the positive one; only the
/// positive half is integrated.
pub fn solve_sigma_ode(x_max: f64, step: f64) -> Result<SigmaTable> {
    if !(x_max > 0.0) || !(step > 0.0) {
        return Err(Error::InvalidInput(format!(
            "solve_sigma_ode needs x_max > 0 and step > 0, got ({x_max}, {step})"
        )));
    }
    let n = (x_max / step).round() as usize;
    if n == 0 {
        return Err(Error::InvalidInput("step exceeds x_max".into()));
    }
    let h = x_max / n as f64;

    let f = |x: f64, u: f64, v: f64| -> (f64, f64) { (v, x * x / u) };

    let mut u_pos = Vec::with_capacity(n + 1);
    let mut v_pos = Vec::with_capacity(n + 1);
    let mut u = 1.0_f64;
    let mut v = 0.0_f64;
    u_pos.push(u);
    v_pos.push(v);
    for k in 0..n {
        let x = k as f64 * h;
        let (k1u, k1v) = f(x, u, v);
        let (k2u, k2v) = f(x + 0.5 * h, u + 0.5 * h * k1u, v + 0.5 * h * k1v);
        let (k3u, k3v) = f(x + 0.5 * h, u + 0.5 * h * k2u, v + 0.5 * h * k2v);
        let (k4u, k4v) = f(x + h, u + h * k3u, v + h * k3v);
        u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        if !(u > 0.0) || !u.is_finite() || !v.is_finite() {
            return Err(Error::InvalidInput(format!(
                "ODE integration lost positivity at x = {}",
                (k + 1) as f64 * h
            )));
        }
        u_pos.push(u);
        v_pos.push(v);
    }

    // Mirror: u even, u' odd.
    let mut u_all = Vec::with_capacity(2 * n + 1);
    let mut du_all = Vec::with_capacity(2 * n + 1);
    for k in (1..=n).rev() {
        u_all.push(u_pos[k]);
        du_all.push(-v_pos[k]);
    }
    u_all.extend_from_slice(&u_pos);
    du_all.extend_from_slice(&v_pos);

    let table = SigmaTable { x_max, step: h, u: u_all, du: du_all };
    table.check_slope_consistency()?;
    Ok(table)
}

impl SigmaTable {
    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn grid_x(&self, i: usize) -> f64 {
        -self.x_max + i as f64 * self.step
    }

    pub fn grid_u(&self, i: usize) -> f64 {
        self.u[i]
    }

    pub fn grid_du(&self, i: usize) -> f64 {
        self.du[i]
    }

    fn locate(&self, x: f64) -> Result<(usize, f64)> {
        if !x.is_finite() || x < -self.x_max || x > self.x_max {
            return Err(Error::TableDomain { x, lo: -self.x_max, hi: self.x_max });
        }
        let pos = (x + self.x_max) / self.step;
        let mut i = pos.floor() as usize;
        if i + 1 >= self.u.len() {
            i = self.u.len() - 2;
        }
        Ok((i, pos - i as f64))
    }

    pub fn u_at(&self, x: f64) -> Result<f64> {
        let (i, w) = self.locate(x)?;
        Ok(self.u[i] * (1.0 - w) + self.u[i + 1] * w)
    }

    pub fn du_at(&self, x: f64) -> Result<f64> {
        let (i, w) = self.locate(x)?;
        Ok(self.du[i] * (1.0 - w) + self.du[i + 1] * w)
    }

    /// Second derivative straight from the ODE, `u'' = x^2 / u`.
    pub fn d2u_at(&self, x: f64) -> Result<f64> {
        Ok(x * x / self.u_at(x)?)
    }

    pub fn sigma_at(&self, x: f64) -> Result<f64> {
        Ok(self.u_at(x)?.sqrt())
    }

    /// Compares the tabulated derivative against the central slope of the
    /// tabulated values; a disagreement beyond 1e-6 means the step is too
    /// coarse for the table to be trusted.
    fn check_slope_consistency(&self) -> Result<()> {
        let mut worst = 0.0_f64;
        for i in 1..self.u.len() - 1 {
            let slope = (self.u[i + 1] - self.u[i - 1]) / (2.0 * self.step);
            worst = worst.max((slope - self.du[i]).abs());
        }
        if worst > 1e-6 {
            return Err(Error::OdeStepTooCoarse { err: worst });
        }
        Ok(())
    }

    /// Largest violation of `u(x) <= 1 + x^4/12` over the grid (positive
    /// means the bound is broken).
    pub fn upper_bound_violation(&self) -> f64 {
        (0..self.u.len())
            .map(|i| {
                let x = self.grid_x(i);
                self.u[i] - (1.0 + x.powi(4) / 12.0)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest violation of `|u'(x)| <= |x|^3/3` over the grid.
    pub fn slope_bound_violation(&self) -> f64 {
        (0..self.du.len())
            .map(|i| {
                let x = self.grid_x(i);
                self.du[i].abs() - x.abs().powi(3) / 3.0
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_conditions() {
        let t = solve_sigma_ode(1.0, 1e-3).unwrap();
        assert_eq!(t.u_at(0.0).unwrap(), 1.0);
        assert_eq!(t.du_at(0.0).unwrap(), 0.0);
    }

    #[test]
    fn matches_taylor_series_oracle() {
        // u = 1 + x^4/12 - x^8/672 + 17 x^12/266112 + O(x^16), from iterating
        // u'' = x^2 (1 - x^4/12 + (1/672 + 1/144) x^8 + ...) term by term.
        // The truncated-series error at x = 1/2 is below 1e-10 for u and
        // about 2e-9 for u' (the x^15 tail), which sets the tolerances.
        let t = solve_sigma_ode(1.0, 1e-4).unwrap();
        for &x in &[0.25_f64, 0.5] {
            let series = 1.0 + x.powi(4) / 12.0 - x.powi(8) / 672.0
                + 17.0 * x.powi(12) / 266112.0;
            assert!(
                (t.u_at(x).unwrap() - series).abs() < 1e-9,
                "x = {x}: table {} vs series {}",
                t.u_at(x).unwrap(),
                series
            );
            let dseries = x.powi(3) / 3.0 - x.powi(7) / 84.0 + 17.0 * x.powi(11) / 22176.0;
            assert!((t.du_at(x).unwrap() - dseries).abs() < 1e-8);
        }
    }

    #[test]
    fn paper_bounds_hold_on_wide_interval() {
        // The slope bound |u'| <= |x|^3/3 is tight near 0 (slack is x^7/84),
        // so the discrete solution can sit above it by rounding only.
        let t = solve_sigma_ode(3.0, 1e-3).unwrap();
        assert!(t.upper_bound_violation() <= 1e-12);
        assert!(t.slope_bound_violation() <= 1e-12);
        // u grows like x^2/sqrt(2) for large |x|; sanity-check positivity.
        assert!(t.u_at(3.0).unwrap() > 1.0);
    }

    #[test]
    fn table_is_mirror_symmetric() {
        let t = solve_sigma_ode(2.0, 1e-3).unwrap();
        let n = t.len();
        for i in 0..n {
            assert_eq!(t.grid_u(i), t.grid_u(n - 1 - i));
            assert_eq!(t.grid_du(i), -t.grid_du(n - 1 - i));
        }
        // interpolation at mirrored points agrees up to rounding of the weights
        for &x in &[0.3_f64, 1.1, 1.9] {
            assert!((t.u_at(x).unwrap() - t.u_at(-x).unwrap()).abs() < 1e-12);
            assert!((t.du_at(x).unwrap() + t.du_at(-x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn coarse_step_is_rejected() {
        // With a huge step the tabulated derivative cannot match the slope.
        match solve_sigma_ode(3.0, 0.5) {
            Err(Error::OdeStepTooCoarse { .. }) => {}
            other => panic!("expected step-too-coarse, got {other:?}"),
        }
    }

    #[test]
    fn domain_errors() {
        let t = solve_sigma_ode(1.0, 1e-3).unwrap();
        assert!(matches!(t.u_at(1.5), Err(Error::TableDomain { .. })));
    }
}
