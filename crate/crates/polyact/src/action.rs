//! The polynomial action `T_h p = exp(h G) p`, conditional moments, the exact
//! finite sum for strictly degree-lowering generators, and the diagonal
//! eigen-action on exponential bases.
//!
//! The matrix exponential is computed by two independent algorithms and the
//! disagreement is reported with every result:
//!
//! 1. a truncated power series evaluated on the Krylov invariant subspace of
//!    the input polynomial, with the a-priori remainder bound
//!    `||hG||^{k+1}/(k+1)! * e^{||hG||} * ||p||` driven below 1e-12, and
//! 2. Padé scaling-and-squaring on the full matrix, scaled so the argument
//!    has 1-norm at most one.
//!
//! Because the generator matrix is upper block-triangular and the Padé solve
//! preserves exact zero blocks, the computed action never raises degree, not
//! even by rounding.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::generator::{
    krylov_basis_raw, ClassKind, GeneratorMatrix, DEFAULT_CLASSIFY_TOL, DEFAULT_RANK_TOL,
};
use crate::graded::{ComplexPolyVec, Evaluator, PolyVec, StatePoint};
use crate::linalg::{self, DMat};

/// Absolute remainder target for the truncated series route.
pub const SERIES_REMAINDER_TARGET: f64 = 1e-12;

const SERIES_MAX_TERMS: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionMethod {
    SeriesTruncated,
    ScalingSquaring,
    NilpotentExact,
    EigenDiagonal,
}

impl ActionMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            ActionMethod::SeriesTruncated => "SeriesTruncated",
            ActionMethod::ScalingSquaring => "ScalingSquaring",
            ActionMethod::NilpotentExact => "NilpotentExact",
            ActionMethod::EigenDiagonal => "EigenDiagonal",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ActionResult {
    pub result: PolyVec,
    pub method: ActionMethod,
    pub terms_used: usize,
    /// Coefficientwise disagreement between the two exponential routes.
    pub error_estimate: f64,
}

/// Matrix exponential by Padé [9/9] with scaling-and-squaring.
///
/// The scaling count is `ceil(log2(max(1, ||A||_1)))`, which brings the
/// scaled argument to 1-norm at most one where the order-9 approximant is
/// accurate to machine precision.
pub fn expm(a: &DMat) -> Result<DMat> {
    const B: [f64; 10] = [
        17_643_225_600.0,
        8_821_612_800.0,
        2_075_673_600.0,
        302_702_400.0,
        30_270_240.0,
        2_162_160.0,
        110_880.0,
        3_960.0,
        90.0,
        1.0,
    ];
    let n = a.rows();
    assert_eq!(n, a.cols(), "expm needs a square matrix");
    let norm = a.norm_1();
    let s = if norm > 1.0 { norm.log2().ceil() as u32 } else { 0 };
    let scaled = a.scale(0.5_f64.powi(s as i32));

    let ident = DMat::identity(n);
    let a2 = scaled.matmul(&scaled);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);
    let a8 = a4.matmul(&a4);

    let mut odd = ident.scale(B[1]);
    odd = odd.add(&a2.scale(B[3]));
    odd = odd.add(&a4.scale(B[5]));
    odd = odd.add(&a6.scale(B[7]));
    odd = odd.add(&a8.scale(B[9]));
    let u = scaled.matmul(&odd);

    let mut v = ident.scale(B[0]);
    v = v.add(&a2.scale(B[2]));
    v = v.add(&a4.scale(B[4]));
    v = v.add(&a6.scale(B[6]));
    v = v.add(&a8.scale(B[8]));

    let num = v.add(&u);
    let den = v.sub(&u);
    let mut r = den.solve(&num)?;
    for _ in 0..s {
        r = r.matmul(&r);
    }
    Ok(r)
}

/// Truncated exponential series evaluated on the Krylov subspace of `p`.
/// Returns the resulting coefficient vector and the number of series terms.
fn series_on_krylov(g: &GeneratorMatrix, p: &[f64], h: f64) -> Result<(Vec<f64>, usize)> {
    let q = krylov_basis_raw(|v| g.apply_raw(v), p, DEFAULT_RANK_TOL, g.dim())?;
    let m = q.len();
    let mut hmat = DMat::zeros(m, m);
    for (j, qj) in q.iter().enumerate() {
        let gq = g.apply_raw(qj);
        for (i, qi) in q.iter().enumerate() {
            hmat.set(i, j, linalg::dot(qi, &gq));
        }
    }
    let a = hmat.scale(h);
    let a_norm = a.norm_1();
    let p_norm = linalg::norm2(p);

    // Smallest k with a^{k+1}/(k+1)! e^a ||p|| below the target.
    let ea = a_norm.exp();
    let mut k = 0usize;
    let mut tail = a_norm; // a^{k+1}/(k+1)! at k = 0
    while tail * ea * p_norm >= SERIES_REMAINDER_TARGET && k < SERIES_MAX_TERMS {
        k += 1;
        tail *= a_norm / (k + 1) as f64;
    }

    let w: Vec<f64> = q.iter().map(|qi| linalg::dot(qi, p)).collect();
    let mut y = w.clone();
    let mut term = w;
    for j in 1..=k {
        term = a.matvec(&term);
        for t in term.iter_mut() {
            *t /= j as f64;
        }
        for (yi, ti) in y.iter_mut().zip(&term) {
            *yi += ti;
        }
    }

    let mut out = vec![0.0; p.len()];
    for (qi, yi) in q.iter().zip(&y) {
        linalg::axpy(&mut out, *yi, qi);
    }
    Ok((out, k + 1))
}

/// Applies the action `T_h = exp(h G)` to `p`.
///
/// Negative `h` is the group extension, available because the basis is
/// finite. The returned result comes from the scaling-and-squaring route;
/// `error_estimate` is its coefficientwise distance to the independent
/// Krylov-series route and `terms_used` is the series length.
pub fn act(g: &GeneratorMatrix, p: &PolyVec, h: f64) -> Result<ActionResult> {
    if !g.basis().same_basis(p.basis()) {
        return Err(Error::BasisMismatch);
    }
    if !h.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite time step h = {h}")));
    }
    if p.is_zero() {
        return Ok(ActionResult {
            result: p.clone(),
            method: ActionMethod::ScalingSquaring,
            terms_used: 1,
            error_estimate: 0.0,
        });
    }
    let (series, terms_used) = series_on_krylov(g, p.coeffs(), h)?;
    let e = expm(&g.matrix().scale(h))?;
    let squared = e.matvec(p.coeffs());
    let error_estimate = series
        .iter()
        .zip(&squared)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0_f64, f64::max);
    Ok(ActionResult {
        result: PolyVec::new(g.basis().clone(), squared)?,
        method: ActionMethod::ScalingSquaring,
        terms_used,
        error_estimate,
    })
}

/// The exact finite sum `T_h p = sum_{k=0}^{deg p} h^k/k! G^k p`, valid when
/// the generator strictly lowers degree (strongly reducing case).
pub fn act_nilpotent(g: &GeneratorMatrix, p: &PolyVec, h: f64) -> Result<ActionResult> {
    if !g.basis().same_basis(p.basis()) {
        return Err(Error::BasisMismatch);
    }
    if g.classify(DEFAULT_CLASSIFY_TOL).kind != ClassKind::StronglyReducing {
        return Err(Error::NotStronglyReducing);
    }
    let n = p.degree();
    let mut sum = p.clone();
    let mut term = p.clone();
    for k in 1..=n {
        term = g.apply(&term)?.scaled(h / k as f64);
        sum = sum.add(&term)?;
    }
    Ok(ActionResult {
        result: sum,
        method: ActionMethod::NilpotentExact,
        terms_used: n + 1,
        error_estimate: 0.0,
    })
}

/// `E[p(X_{t+h}) | X_t = x] = (T_h p)(x)`.
pub fn conditional_moment(g: &GeneratorMatrix, p: &PolyVec, h: f64, x: &StatePoint) -> Result<f64> {
    act(g, p, h)?.result.evaluate(x)
}

/// Built-in Lévy exponents. The closed forms satisfy `psi(0) = 0` by
/// construction; a tabulated exponent must list a value for every frequency
/// it is asked about (zero frequencies are fixed to 0 regardless).
#[derive(Clone, Debug)]
pub enum LevyExponent {
    /// `psi(u) = i b.u - (1/2) sum_k sigma2_k u_k^2`
    Gaussian { drift: Vec<f64>, sigma2: Vec<f64> },
    /// `psi(u) = intensity (e^{i u.jump} - 1)`
    Poisson { intensity: f64, jump: Vec<f64> },
    /// `psi(u) = intensity sum_j w_j (e^{i u.c_j} - 1)`
    Compound { intensity: f64, atoms: Vec<(f64, Vec<f64>)> },
    /// Explicit values keyed by frequency vector (exact match).
    Tabulated { values: Vec<(Vec<f64>, Complex64)> },
}

impl LevyExponent {
    pub fn psi(&self, u: &[f64]) -> Result<Complex64> {
        match self {
            LevyExponent::Gaussian { drift, sigma2 } => {
                let re: f64 = -0.5 * sigma2.iter().zip(u).map(|(s, ui)| s * ui * ui).sum::<f64>();
                let im: f64 = drift.iter().zip(u).map(|(b, ui)| b * ui).sum();
                Ok(Complex64::new(re, im))
            }
            LevyExponent::Poisson { intensity, jump } => {
                let phase: f64 = jump.iter().zip(u).map(|(c, ui)| c * ui).sum();
                Ok((Complex64::new(phase.cos(), phase.sin()) - 1.0) * *intensity)
            }
            LevyExponent::Compound { intensity, atoms } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for (w, c) in atoms {
                    let phase: f64 = c.iter().zip(u).map(|(cj, ui)| cj * ui).sum();
                    acc += (Complex64::new(phase.cos(), phase.sin()) - 1.0) * *w;
                }
                Ok(acc * *intensity)
            }
            LevyExponent::Tabulated { values } => {
                if u.iter().all(|ui| *ui == 0.0) {
                    return Ok(Complex64::new(0.0, 0.0));
                }
                values
                    .iter()
                    .find(|(freq, _)| freq.as_slice() == u)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| {
                        Error::InvalidInput(format!("no tabulated exponent value for u = {u:?}"))
                    })
            }
        }
    }
}

/// Diagonal action on an exponential basis: the coefficient of `e^{i u_n .}`
/// is multiplied by `exp(h psi(u_n))`; the constant coefficient is unchanged.
///
/// `h < 0` is rejected: unlike the finite-basis matrix case there is no group
/// extension here.
pub fn eigen_act(psi: &LevyExponent, p: &ComplexPolyVec, h: f64) -> Result<ComplexPolyVec> {
    if h < 0.0 || !h.is_finite() {
        return Err(Error::NegativeEigenTime { h });
    }
    let basis = p.basis();
    if !basis.is_exponential_type() {
        return Err(Error::ExponentialBasisRequired);
    }
    let mut coeffs = p.coeffs().to_vec();
    for (c, entry) in coeffs.iter_mut().zip(basis.entries()) {
        if let Evaluator::ComplexExp { freq } = &entry.eval {
            *c *= (psi.psi(freq)? * h).exp();
        }
    }
    ComplexPolyVec::new(basis.clone(), coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::scalar_diffusion_generator;
    use crate::graded::{BasisEntry, GradedBasis, ScalarField};
    use crate::rng::CounterRng;
    use std::sync::Arc;

    fn monomial_basis(maxd: usize) -> Arc<GradedBasis> {
        let entries = (0..=maxd)
            .map(|d| BasisEntry {
                label: if d == 0 { "1".into() } else { format!("x{d}") },
                degree: d,
                eval: Evaluator::Monomial { powers: vec![d as u32] },
            })
            .collect();
        GradedBasis::new(ScalarField::Real, entries).unwrap()
    }

    fn bm() -> GeneratorMatrix {
        scalar_diffusion_generator(monomial_basis(2), 0.0, 0.0, [1.0, 0.0, 0.0]).unwrap()
    }

    fn ou(kappa: f64, sigma: f64) -> GeneratorMatrix {
        scalar_diffusion_generator(monomial_basis(2), 0.0, -kappa, [sigma * sigma, 0.0, 0.0])
            .unwrap()
    }

    #[test]
    fn act_at_zero_is_identity() {
        let g = ou(1.0, 1.0);
        let p = PolyVec::new(g.basis().clone(), vec![0.5, -2.0, 3.0]).unwrap();
        let r = act(&g, &p, 0.0).unwrap();
        assert_eq!(r.result.coeffs(), p.coeffs());
        // the series route reconstructs p through the Krylov basis, so the
        // cross-route estimate is rounding-level rather than exactly zero
        assert!(r.error_estimate < 1e-14);
    }

    #[test]
    fn bm_square_gains_h() {
        // Gaussian-moment oracle: E[(x + W_h)^2] = x^2 + h.
        let g = bm();
        let p = PolyVec::unit(g.basis().clone(), 2);
        for &h in &[0.25_f64, 0.5, 1.0, 2.0] {
            let r = act(&g, &p, h).unwrap();
            assert!((r.result.coeff(0) - h).abs() < 1e-13);
            assert_eq!(r.result.coeff(1), 0.0);
            assert!((r.result.coeff(2) - 1.0).abs() < 1e-13);
            assert!(r.error_estimate < 1e-12);
        }
    }

    #[test]
    fn ou_linear_decays_exponentially() {
        // Scalar ODE oracle: c'(h) = -kappa c(h), c(0) = 1.
        let kappa = 1.4;
        let g = ou(kappa, 0.7);
        let p = PolyVec::unit(g.basis().clone(), 1);
        for &h in &[0.1_f64, 0.5, 1.0] {
            let r = act(&g, &p, h).unwrap();
            assert!((r.result.coeff(1) - (-kappa * h).exp()).abs() < 1e-13);
            assert_eq!(r.result.coeff(0), 0.0);
            assert_eq!(r.result.coeff(2), 0.0);
        }
    }

    #[test]
    fn conditional_moments_match_closed_forms() {
        let g = bm();
        let p = PolyVec::unit(g.basis().clone(), 2);
        let v = conditional_moment(&g, &p, 0.5, &StatePoint::scalar(1.0)).unwrap();
        assert!((v - 1.5).abs() < 1e-13);

        let g = ou(2.0, 1.0);
        let p = PolyVec::unit(g.basis().clone(), 1);
        let v = conditional_moment(&g, &p, 1.0, &StatePoint::scalar(3.0)).unwrap();
        assert!((v - 3.0 * (-2.0_f64).exp()).abs() < 1e-12);

        // constants are fixed regardless of model, h and x
        let c = PolyVec::new(g.basis().clone(), vec![4.25, 0.0, 0.0]).unwrap();
        let v = conditional_moment(&g, &c, 1.7, &StatePoint::scalar(-5.0)).unwrap();
        assert_eq!(v, 4.25);
    }

    #[test]
    fn semigroup_and_group_laws() {
        let g = ou(1.0, 1.0);
        let mut rng = CounterRng::keyed(7, &[0]);
        for _ in 0..50 {
            let p = PolyVec::new(
                g.basis().clone(),
                (0..3).map(|_| 2.0 * rng.uniform() - 1.0).collect(),
            )
            .unwrap();
            let h = 2.0 * rng.uniform();
            let k = 2.0 * rng.uniform();
            let two_step = act(&g, &act(&g, &p, k).unwrap().result, h).unwrap().result;
            let one_step = act(&g, &p, h + k).unwrap().result;
            assert!(two_step.sub(&one_step).unwrap().norm_inf() < 1e-10);
            let back = act(&g, &act(&g, &p, h).unwrap().result, -h).unwrap().result;
            assert!(back.sub(&p).unwrap().norm_inf() < 1e-10);
        }
    }

    #[test]
    fn action_is_block_triangular_and_degree_non_increasing() {
        let g = ou(0.8, 1.2);
        for n in 0..=2usize {
            for i in g.basis().grade_range(n).unwrap() {
                let m = PolyVec::unit(g.basis().clone(), i);
                let r = act(&g, &m, 0.7).unwrap().result;
                assert!(r.degree() <= n);
                for l in (n + 1)..=2 {
                    assert_eq!(r.project(l).unwrap().norm_inf(), 0.0);
                }
            }
        }
    }

    #[test]
    fn reducing_action_scales_top_grade_by_exp_lambda() {
        let kappa = 1.0;
        let g = ou(kappa, 1.0);
        let lam = g.classify(DEFAULT_CLASSIFY_TOL).lambda.unwrap();
        for n in 1..=2usize {
            let i = g.basis().grade_range(n).unwrap().start;
            let m = PolyVec::unit(g.basis().clone(), i);
            for &h in &[0.3_f64, 1.0] {
                let top = act(&g, &m, h).unwrap().result.project(n).unwrap();
                let expected = m.scaled((h * lam[n - 1]).exp());
                assert!(top.sub(&expected).unwrap().norm_inf() < 1e-10);
            }
        }
    }

    #[test]
    fn nilpotent_sum_is_exact() {
        let g = bm();
        let p = PolyVec::unit(g.basis().clone(), 2);
        let r = act_nilpotent(&g, &p, 0.75).unwrap();
        assert_eq!(r.terms_used, 3);
        assert_eq!(r.result.coeff(0), 0.75);
        assert_eq!(r.result.coeff(2), 1.0);
        let full = act(&g, &p, 0.75).unwrap();
        assert!(r.result.sub(&full.result).unwrap().norm_inf() < 1e-12);

        // G x = 0 for driftless unit-variance diffusion, so x is fixed.
        let x = PolyVec::unit(g.basis().clone(), 1);
        let r = act_nilpotent(&g, &x, 2.0).unwrap();
        assert_eq!(r.result.coeffs(), x.coeffs());
        assert_eq!(r.terms_used, 2);

        // constants stop after one term
        let c = PolyVec::new(g.basis().clone(), vec![3.0, 0.0, 0.0]).unwrap();
        let r = act_nilpotent(&g, &c, 2.0).unwrap();
        assert_eq!(r.terms_used, 1);
        assert_eq!(r.result.coeffs(), c.coeffs());

        assert!(matches!(
            act_nilpotent(&ou(1.0, 1.0), &x, 1.0),
            Err(Error::NotStronglyReducing)
        ));
    }

    #[test]
    fn series_and_squaring_agree() {
        let g = ou(1.3, 0.4);
        let mut rng = CounterRng::keyed(11, &[0]);
        for _ in 0..40 {
            let p = PolyVec::new(
                g.basis().clone(),
                (0..3).map(|_| 4.0 * rng.uniform() - 2.0).collect(),
            )
            .unwrap();
            let h = 4.0 * rng.uniform() - 2.0;
            let r = act(&g, &p, h).unwrap();
            let scale = r.result.norm_inf().max(1.0);
            assert!(r.error_estimate / scale < 1e-10, "estimate {}", r.error_estimate);
        }
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let e = expm(&DMat::zeros(3, 3)).unwrap();
        assert_eq!(e, DMat::identity(3));
    }

    fn exp_basis(freqs: &[f64]) -> Arc<GradedBasis> {
        let mut entries = vec![BasisEntry {
            label: "1".into(),
            degree: 0,
            eval: Evaluator::Monomial { powers: vec![0] },
        }];
        for f in freqs {
            entries.push(BasisEntry {
                label: format!("e{f}"),
                degree: 1,
                eval: Evaluator::ComplexExp { freq: vec![*f] },
            });
        }
        GradedBasis::new(ScalarField::Complex, entries).unwrap()
    }

    #[test]
    fn eigen_action_multiplies_coefficients() {
        let basis = exp_basis(&[1.0]);
        let psi = LevyExponent::Gaussian { drift: vec![0.0], sigma2: vec![1.0] };
        let p = ComplexPolyVec::new(
            basis.clone(),
            vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        )
        .unwrap();

        // identity at h = 0
        let r = eigen_act(&psi, &p, 0.0).unwrap();
        assert_eq!(r.coeffs(), p.coeffs());

        // characteristic-function oracle: E e^{i u W_h} = e^{-h u^2 / 2};
        // at u = 1, h = 2 the coefficient becomes e^{-1}.
        let r = eigen_act(&psi, &p, 2.0).unwrap();
        assert!((r.coeffs()[1].re - (-1.0_f64).exp()).abs() < 1e-15);
        assert!(r.coeffs()[1].im.abs() < 1e-15);

        // constants are fixed since psi(0) = 0
        let one = ComplexPolyVec::new(
            basis,
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        )
        .unwrap();
        let r = eigen_act(&psi, &one, 5.0).unwrap();
        assert_eq!(r.coeffs(), one.coeffs());

        assert!(matches!(
            eigen_act(&psi, &p, -0.5),
            Err(Error::NegativeEigenTime { .. })
        ));

        let poly_basis = monomial_basis(1);
        let q = ComplexPolyVec::from_real(&PolyVec::unit(poly_basis, 1));
        assert!(matches!(eigen_act(&psi, &q, 1.0), Err(Error::ExponentialBasisRequired)));
    }

    #[test]
    fn levy_exponents_vanish_at_zero() {
        let exps = [
            LevyExponent::Gaussian { drift: vec![0.4], sigma2: vec![2.0] },
            LevyExponent::Poisson { intensity: 3.0, jump: vec![0.7] },
            LevyExponent::Compound {
                intensity: 2.0,
                atoms: vec![(0.5, vec![1.0]), (0.5, vec![-2.0])],
            },
            LevyExponent::Tabulated { values: vec![(vec![1.0], Complex64::new(-0.5, 0.1))] },
        ];
        for e in &exps {
            let z = e.psi(&[0.0]).unwrap();
            assert_eq!((z.re, z.im), (0.0, 0.0));
        }
    }

    #[test]
    fn tabulated_exponent_looks_up_frequencies() {
        let psi = LevyExponent::Tabulated {
            values: vec![(vec![1.0], Complex64::new(-0.5, 0.0))],
        };
        let basis = exp_basis(&[1.0]);
        let p = ComplexPolyVec::new(
            basis,
            vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        )
        .unwrap();
        let r = eigen_act(&psi, &p, 2.0).unwrap();
        assert!((r.coeffs()[1].re - (-1.0_f64).exp()).abs() < 1e-15);
        // an unknown frequency is an error, not a silent identity
        let psi = LevyExponent::Tabulated { values: vec![(vec![0.25], Complex64::new(0.0, 0.0))] };
        assert!(eigen_act(&psi, &p, 1.0).is_err());
    }
}
