//! Generator matrices over graded bases.
//!
//! The generator G of a degree-respecting action maps constants to zero and
//! never raises degree, so its matrix over a graded basis is upper
//! block-triangular with respect to the grade decomposition. This module
//! verifies that structure, extracts the diagonal blocks `G^(n)`, classifies
//! the action (locally finite / reducing / strongly reducing) and constructs
//! minimal invariant subspaces by Krylov iteration.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graded::{Evaluator, GradedBasis, PolyVec};
use crate::linalg::{self, DMat};

/// Default relative tolerance for the scalar-multiple-of-identity test.
pub const DEFAULT_CLASSIFY_TOL: f64 = 1e-10;

/// Default rank tolerance for the Krylov truncation.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockNorm {
    pub l: usize,
    pub n: usize,
    pub norm: f64,
}

/// Per-block report of `P_l G P_n` norms.
#[derive(Clone, Debug)]
pub struct GradingReport {
    pub pass: bool,
    pub constant_column_norm: f64,
    pub blocks: Vec<BlockNorm>,
    /// Blocks with l > n that are not exactly zero.
    pub violations: Vec<BlockNorm>,
}

/// Checks the block structure of a raw square matrix over `basis`:
/// every block strictly below the diagonal must be exactly zero and the
/// column of the constant entry must be exactly zero.
pub fn check_grading(basis: &GradedBasis, mat: &DMat) -> Result<GradingReport> {
    if mat.rows() != basis.len() || mat.cols() != basis.len() {
        return Err(Error::DimensionMismatch { expected: basis.len(), got: mat.rows().max(mat.cols()) });
    }
    let maxd = basis.max_degree();
    let mut blocks = Vec::new();
    let mut violations = Vec::new();
    for l in 0..=maxd {
        let rows = basis.grade_range(l)?;
        for n in 0..=maxd {
            let cols = basis.grade_range(n)?;
            let mut sq = 0.0;
            for i in rows.clone() {
                for j in cols.clone() {
                    let v = mat.at(i, j);
                    sq += v * v;
                }
            }
            let b = BlockNorm { l, n, norm: sq.sqrt() };
            if l > n && b.norm > 0.0 {
                violations.push(b);
            }
            blocks.push(b);
        }
    }
    let constant_column_norm =
        (0..basis.len()).map(|i| mat.at(i, 0).powi(2)).sum::<f64>().sqrt();
    let pass = violations.is_empty() && constant_column_norm == 0.0;
    Ok(GradingReport { pass, constant_column_norm, blocks, violations })
}

/// The generator as a matrix: entry `[i][j]` is the coefficient of basis
/// entry i in the image of basis entry j. Grading is enforced at
/// construction.
#[derive(Clone, Debug)]
pub struct GeneratorMatrix {
    basis: Arc<GradedBasis>,
    mat: DMat,
}

impl GeneratorMatrix {
    pub fn new(basis: Arc<GradedBasis>, mat: DMat) -> Result<Self> {
        let report = check_grading(&basis, &mat)?;
        if let Some(v) = report.violations.first() {
            return Err(Error::GradingViolation { l: v.l, n: v.n, norm: v.norm });
        }
        if report.constant_column_norm != 0.0 {
            return Err(Error::ConstantColumnNotZero { norm: report.constant_column_norm });
        }
        Ok(GeneratorMatrix { basis, mat })
    }

    /// Builds the matrix from its columns (column j = image of entry j).
    pub fn from_columns(basis: Arc<GradedBasis>, columns: &[Vec<f64>]) -> Result<Self> {
        if columns.len() != basis.len() {
            return Err(Error::DimensionMismatch { expected: basis.len(), got: columns.len() });
        }
        Self::new(basis, DMat::from_columns(columns)?)
    }

    pub fn basis(&self) -> &Arc<GradedBasis> {
        &self.basis
    }

    pub fn matrix(&self) -> &DMat {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn grading_report(&self) -> GradingReport {
        check_grading(&self.basis, &self.mat).expect("dimensions validated at construction")
    }

    pub fn apply_raw(&self, coeffs: &[f64]) -> Vec<f64> {
        self.mat.matvec(coeffs)
    }

    pub fn apply(&self, p: &PolyVec) -> Result<PolyVec> {
        if !self.basis.same_basis(p.basis()) {
            return Err(Error::BasisMismatch);
        }
        PolyVec::new(self.basis.clone(), self.apply_raw(p.coeffs()))
    }

    /// The sub-matrix on the entries of degree exactly n (the block `G^(n)`).
    pub fn diagonal_block(&self, n: usize) -> Result<DMat> {
        let range = self.basis.grade_range(n)?;
        let d = range.len();
        let mut b = DMat::zeros(d, d);
        for (bi, i) in range.clone().enumerate() {
            for (bj, j) in range.clone().enumerate() {
                b.set(bi, bj, self.mat.at(i, j));
            }
        }
        Ok(b)
    }

    /// Classifies the action generated by this matrix.
    ///
    /// On a finite basis the action is always locally finite; it is reducing
    /// when every diagonal block is a scalar multiple of the identity (the
    /// least-squares scalar is trace/dim), and strongly reducing when all of
    /// those scalars vanish, i.e. the matrix strictly lowers degree.
    pub fn classify(&self, tol: f64) -> Classification {
        let maxd = self.basis.max_degree();
        let mut witnesses = Vec::with_capacity(maxd + 1);
        let mut lambda = Vec::new();
        let mut all_scalar = true;
        let mut all_zero = true;
        for n in 0..=maxd {
            let block = self.diagonal_block(n).expect("grade in range");
            let d = block.rows();
            let lam = block.trace() / d as f64;
            let mut resid_sq = 0.0;
            for i in 0..d {
                for j in 0..d {
                    let target = if i == j { lam } else { 0.0 };
                    resid_sq += (block.at(i, j) - target).powi(2);
                }
            }
            let resid = resid_sq.sqrt();
            let scale = block.norm_fro().max(1.0);
            let scalar_multiple = resid <= tol * scale;
            let lambda_zero = scalar_multiple && lam.abs() <= tol * scale;
            witnesses.push(GradeWitness {
                degree: n,
                block_dim: d,
                lambda_hat: lam,
                residual: resid,
                scalar_multiple,
            });
            if n >= 1 {
                lambda.push(lam);
            }
            all_scalar &= scalar_multiple;
            all_zero &= lambda_zero;
        }
        let kind = if all_scalar && all_zero {
            ClassKind::StronglyReducing
        } else if all_scalar {
            ClassKind::Reducing
        } else {
            ClassKind::LocallyFinite
        };
        let lambda = if all_scalar { Some(lambda) } else { None };
        Classification { kind, lambda, witnesses }
    }

    /// `|| M^(max_degree + 1) ||_max`; exactly zero for strictly
    /// degree-lowering generators.
    pub fn nilpotency_defect(&self) -> f64 {
        let mut power = DMat::identity(self.dim());
        for _ in 0..=self.basis.max_degree() {
            power = power.matmul(&self.mat);
        }
        power.max_abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassKind {
    LocallyFinite,
    Reducing,
    StronglyReducing,
}

impl ClassKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClassKind::LocallyFinite => "LocallyFinite",
            ClassKind::Reducing => "Reducing",
            ClassKind::StronglyReducing => "StronglyReducing",
        }
    }
}

/// Per-grade diagnostic for the classification.
#[derive(Clone, Debug)]
pub struct GradeWitness {
    pub degree: usize,
    pub block_dim: usize,
    /// Least-squares scalar trace/dim for this block.
    pub lambda_hat: f64,
    /// Frobenius distance of the block to `lambda_hat * I`.
    pub residual: f64,
    pub scalar_multiple: bool,
}

#[derive(Clone, Debug)]
pub struct Classification {
    pub kind: ClassKind,
    /// Eigenvalue ladder (lambda_1, ..., lambda_maxdeg); present exactly when
    /// the generator is reducing. lambda_0 = 0 always since the constant
    /// column vanishes.
    pub lambda: Option<Vec<f64>>,
    pub witnesses: Vec<GradeWitness>,
}

/// Orthonormal basis of `span{p, Gp, G^2 p, ...}` where G is given as a
/// black-box linear map on coefficient vectors.
///
/// Modified Gram-Schmidt with one reorthogonalization pass; the iteration
/// stops once the component of the next iterate orthogonal to the current
/// span has norm below `rank_tol * max(1, ||iterate||)`. Needing more than
/// `max_dim` directions is reported as an error.
pub fn krylov_basis_raw<F>(
    mut apply: F,
    start: &[f64],
    rank_tol: f64,
    max_dim: usize,
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let norm = linalg::norm2(start);
    if norm == 0.0 {
        return Err(Error::KrylovZeroStart);
    }
    if max_dim == 0 {
        return Err(Error::KrylovBudgetExceeded { max_dim });
    }
    let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|v| v / norm).collect()];
    loop {
        let mut w = apply(basis.last().unwrap());
        let w_norm = linalg::norm2(&w);
        for _ in 0..2 {
            for q in &basis {
                let c = linalg::dot(q, &w);
                linalg::axpy(&mut w, -c, q);
            }
        }
        let r = linalg::norm2(&w);
        if r < rank_tol * w_norm.max(1.0) {
            return Ok(basis);
        }
        if basis.len() == max_dim {
            return Err(Error::KrylovBudgetExceeded { max_dim });
        }
        for v in w.iter_mut() {
            *v /= r;
        }
        basis.push(w);
    }
}

/// [`krylov_basis_raw`] lifted to polynomials over a fixed basis.
pub fn krylov_invariant_subspace(
    g: &GeneratorMatrix,
    p: &PolyVec,
    rank_tol: f64,
    max_dim: usize,
) -> Result<Vec<PolyVec>> {
    if !g.basis().same_basis(p.basis()) {
        return Err(Error::BasisMismatch);
    }
    let raw = krylov_basis_raw(|v| g.apply_raw(v), p.coeffs(), rank_tol, max_dim)?;
    raw.into_iter().map(|c| PolyVec::new(g.basis().clone(), c)).collect()
}

/// Assembles the generator of the scalar diffusion
/// `dX = (mu + gamma X) dt + sigma(X) dW` with `sigma^2(x) = q0 + q1 x + q2 x^2`
/// on a one-dimensional monomial basis:
///
/// ```text
/// G x^n = n x^{n-1} (mu + gamma x) + n(n-1)/2 x^{n-2} (q0 + q1 x + q2 x^2)
/// ```
pub fn scalar_diffusion_generator(
    basis: Arc<GradedBasis>,
    mu: f64,
    gamma: f64,
    q: [f64; 3],
) -> Result<GeneratorMatrix> {
    let mut power_index = std::collections::HashMap::new();
    for (i, e) in basis.entries().iter().enumerate() {
        match &e.eval {
            Evaluator::Monomial { powers } if powers.len() == 1 => {
                power_index.insert(powers[0], i);
            }
            _ => {
                return Err(Error::InvalidInput(format!(
                    "entry '{}' is not a one-variable monomial",
                    e.label
                )))
            }
        }
    }
    let mut columns = vec![vec![0.0; basis.len()]; basis.len()];
    for (j, e) in basis.entries().iter().enumerate() {
        let n = match &e.eval {
            Evaluator::Monomial { powers } => powers[0],
            _ => unreachable!(),
        };
        let mut add = |power: i64, coeff: f64| -> Result<()> {
            if coeff == 0.0 || power < 0 {
                return Ok(());
            }
            let idx = power_index.get(&(power as u32)).ok_or_else(|| {
                Error::InvalidInput(format!("basis has no monomial of power {power}"))
            })?;
            columns[j][*idx] += coeff;
            Ok(())
        };
        let nf = n as f64;
        if n >= 1 {
            add(n as i64 - 1, nf * mu)?;
            add(n as i64, nf * gamma)?;
        }
        if n >= 2 {
            let c = nf * (nf - 1.0) / 2.0;
            add(n as i64 - 2, c * q[0])?;
            add(n as i64 - 1, c * q[1])?;
            add(n as i64, c * q[2])?;
        }
    }
    GeneratorMatrix::from_columns(basis, &columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graded::{BasisEntry, ScalarField};

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

    fn bm_generator() -> GeneratorMatrix {
        // G 1 = 0, G x = 0, G x^2 = 1
        scalar_diffusion_generator(monomial_basis(2), 0.0, 0.0, [1.0, 0.0, 0.0]).unwrap()
    }

    fn ou_generator(kappa: f64, sigma: f64) -> GeneratorMatrix {
        scalar_diffusion_generator(monomial_basis(2), 0.0, -kappa, [sigma * sigma, 0.0, 0.0])
            .unwrap()
    }

    #[test]
    fn zero_matrix_passes_grading() {
        let b = monomial_basis(2);
        let report = check_grading(&b, &DMat::zeros(3, 3)).unwrap();
        assert!(report.pass);
        assert!(report.blocks.iter().all(|bl| bl.norm == 0.0));
    }

    #[test]
    fn bm_generator_blocks() {
        // Hand-assembled: the only nonzero block of the 3x3 matrix is the
        // (0,2) block carrying G x^2 = 1.
        let g = bm_generator();
        let report = g.grading_report();
        assert!(report.pass);
        for bl in &report.blocks {
            if (bl.l, bl.n) == (0, 2) {
                assert_eq!(bl.norm, 1.0);
            } else {
                assert_eq!(bl.norm, 0.0, "unexpected block ({}, {})", bl.l, bl.n);
            }
        }
    }

    #[test]
    fn grading_violation_is_reported() {
        // A map sending x to x^2 breaks the grading in block (2, 1).
        let b = monomial_basis(2);
        let cols = vec![vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0]];
        let mat = DMat::from_columns(&cols).unwrap();
        let report = check_grading(&b, &mat).unwrap();
        assert!(!report.pass);
        assert_eq!(report.violations.len(), 1);
        assert_eq!((report.violations[0].l, report.violations[0].n), (2, 1));
        assert!(matches!(
            GeneratorMatrix::new(b, mat),
            Err(Error::GradingViolation { l: 2, n: 1, .. })
        ));
    }

    #[test]
    fn nonzero_constant_column_is_rejected() {
        // G(1) = 1 respects the grading but constants must map to zero
        let b = monomial_basis(1);
        let cols = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
        let mat = DMat::from_columns(&cols).unwrap();
        assert!(matches!(
            GeneratorMatrix::new(b, mat),
            Err(Error::ConstantColumnNotZero { .. })
        ));
    }

    #[test]
    fn diagonal_blocks() {
        // grade 0 block is the 1x1 zero (constants are killed)
        let g = bm_generator();
        let b0 = g.diagonal_block(0).unwrap();
        assert_eq!((b0.rows(), b0.cols()), (1, 1));
        assert_eq!(b0.at(0, 0), 0.0);

        // OU: G x = -kappa x
        let kappa = 1.7;
        let g = ou_generator(kappa, 0.9);
        assert_eq!(g.diagonal_block(1).unwrap().at(0, 0), -kappa);

        // GBM: G x^2 = (2 gamma + sigma^2) x^2
        let (gamma, sigma) = (0.05, 0.2);
        let g = scalar_diffusion_generator(monomial_basis(2), 0.0, gamma, [0.0, 0.0, sigma * sigma])
            .unwrap();
        let b2 = g.diagonal_block(2).unwrap();
        assert!((b2.at(0, 0) - (2.0 * gamma + sigma * sigma)).abs() < 1e-15);

        assert!(g.diagonal_block(3).is_err());
    }

    #[test]
    fn classify_bm_ou_drift2d() {
        let c = bm_generator().classify(DEFAULT_CLASSIFY_TOL);
        assert_eq!(c.kind, ClassKind::StronglyReducing);
        assert_eq!(c.lambda.unwrap(), vec![0.0, 0.0]);

        let c = ou_generator(1.0, 1.0).classify(DEFAULT_CLASSIFY_TOL);
        assert_eq!(c.kind, ClassKind::Reducing);
        let lam = c.lambda.unwrap();
        assert!((lam[0] + 1.0).abs() < 1e-12 && (lam[1] + 2.0).abs() < 1e-12);

        // 2-variable drift with a Jordan-type block: G x1 = x1 + x2, G x2 = x2,
        // so the grade-1 block is the transpose of [[1,1],[0,1]] and is not a
        // scalar multiple of the identity.
        let entries = vec![
            BasisEntry { label: "1".into(), degree: 0, eval: Evaluator::Monomial { powers: vec![0, 0] } },
            BasisEntry { label: "x1".into(), degree: 1, eval: Evaluator::Monomial { powers: vec![1, 0] } },
            BasisEntry { label: "x2".into(), degree: 1, eval: Evaluator::Monomial { powers: vec![0, 1] } },
        ];
        let b = GradedBasis::new(ScalarField::Real, entries).unwrap();
        let g = GeneratorMatrix::from_columns(
            b,
            &[vec![0.0, 0.0, 0.0], vec![0.0, 1.0, 1.0], vec![0.0, 0.0, 1.0]],
        )
        .unwrap();
        let c = g.classify(DEFAULT_CLASSIFY_TOL);
        assert_eq!(c.kind, ClassKind::LocallyFinite);
        assert!(c.lambda.is_none());
        assert!(!c.witnesses[1].scalar_multiple);
    }

    #[test]
    fn classify_is_scale_covariant() {
        let g = ou_generator(2.0, 0.5);
        let base = g.classify(DEFAULT_CLASSIFY_TOL);
        for &c in &[0.25_f64, 0.5, 3.0, 8.0, -2.0] {
            let scaled =
                GeneratorMatrix::new(g.basis().clone(), g.matrix().scale(c)).unwrap();
            let cls = scaled.classify(DEFAULT_CLASSIFY_TOL);
            assert_eq!(cls.kind, base.kind);
            let lam = cls.lambda.unwrap();
            let lam0 = base.lambda.as_ref().unwrap();
            for (a, b) in lam.iter().zip(lam0) {
                assert!((a - c * b).abs() <= 1e-12 * c.abs().max(1.0));
            }
        }
    }

    #[test]
    fn strongly_reducing_matrix_is_nilpotent() {
        let g = bm_generator();
        assert!(g.nilpotency_defect() <= 1e-12);
        let g = ou_generator(1.0, 1.0);
        assert!(g.nilpotency_defect() > 1e-6);
    }

    #[test]
    fn krylov_subspaces() {
        // BM at p = x^2: G x^2 = 1, G 1 = 0 -> span{x^2, 1}, dimension 2.
        let g = bm_generator();
        let p = PolyVec::unit(g.basis().clone(), 2);
        let v = krylov_invariant_subspace(&g, &p, DEFAULT_RANK_TOL, 10).unwrap();
        assert_eq!(v.len(), 2);

        // OU at p = x stays in span{x}.
        let g = ou_generator(1.3, 0.0);
        let p = PolyVec::unit(g.basis().clone(), 1);
        let v = krylov_invariant_subspace(&g, &p, DEFAULT_RANK_TOL, 10).unwrap();
        assert_eq!(v.len(), 1);

        // Constants are fixed.
        let p = PolyVec::unit(g.basis().clone(), 0);
        let v = krylov_invariant_subspace(&g, &p, DEFAULT_RANK_TOL, 10).unwrap();
        assert_eq!(v.len(), 1);

        // Zero start vector is rejected.
        let z = PolyVec::zero(g.basis().clone());
        assert!(matches!(
            krylov_invariant_subspace(&g, &z, DEFAULT_RANK_TOL, 10),
            Err(Error::KrylovZeroStart)
        ));

        // Budget exhaustion is reported.
        let g = bm_generator();
        let p = PolyVec::unit(g.basis().clone(), 2);
        assert!(matches!(
            krylov_invariant_subspace(&g, &p, DEFAULT_RANK_TOL, 1),
            Err(Error::KrylovBudgetExceeded { max_dim: 1 })
        ));
    }

    #[test]
    fn krylov_residual_and_dimension_bound() {
        let g = ou_generator(0.8, 1.1);
        let p = PolyVec::new(g.basis().clone(), vec![0.3, -1.0, 2.0]).unwrap();
        let v = krylov_invariant_subspace(&g, &p, DEFAULT_RANK_TOL, 10).unwrap();
        assert!(v.len() <= g.basis().dim_up_to(p.degree()));
        for q in &v {
            let gq = g.apply(q).unwrap();
            let mut resid = gq.coeffs().to_vec();
            for w in &v {
                let c = linalg::dot(w.coeffs(), &resid);
                linalg::axpy(&mut resid, -c, w.coeffs());
            }
            let r = linalg::norm2(&resid) / linalg::norm2(gq.coeffs()).max(1.0);
            assert!(r < DEFAULT_RANK_TOL, "residual {r}");
        }
    }
}
