//! Graded polynomial bases and coefficient-vector polynomials.
//!
//! A basis is an ordered list of evaluable functions with assigned degrees.
//! The span of entries with degree <= n realizes the polynomials of order n,
//! and the entries with degree exactly n form the chosen complement (the
//! "grade-n monomials"), so the grade projection is plain coefficient masking.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ode::SigmaTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarField {
    Real,
    Complex,
}

/// A point of the state set, as a coordinate vector.
#[derive(Clone, Debug, PartialEq)]
pub struct StatePoint(pub Vec<f64>);

impl StatePoint {
    pub fn scalar(x: f64) -> Self {
        StatePoint(vec![x])
    }

    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("state point has non-finite coordinates".into()));
        }
        Ok(StatePoint(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Built-in point evaluators for basis entries.
#[derive(Clone, Debug)]
pub enum Evaluator {
    /// `x -> prod_k x_k^{powers[k]}`; all powers zero is the constant one.
    Monomial { powers: Vec<u32> },
    /// The tabulated solution of `u'' = x^2/u` (scalar state only).
    OdeU { table: Arc<SigmaTable> },
    /// `x -> exp(i u . x)`, complex-valued.
    ComplexExp { freq: Vec<f64> },
}

impl Evaluator {
    pub fn state_dim(&self) -> usize {
        match self {
            Evaluator::Monomial { powers } => powers.len(),
            Evaluator::OdeU { .. } => 1,
            Evaluator::ComplexExp { freq } => freq.len(),
        }
    }

    pub fn is_constant_one(&self) -> bool {
        match self {
            Evaluator::Monomial { powers } => powers.iter().all(|p| *p == 0),
            Evaluator::ComplexExp { freq } => freq.iter().all(|f| *f == 0.0),
            Evaluator::OdeU { .. } => false,
        }
    }

    pub fn eval_real(&self, x: &StatePoint) -> Result<f64> {
        match self {
            Evaluator::Monomial { powers } => {
                if powers.len() != x.dim() {
                    return Err(Error::DimensionMismatch { expected: powers.len(), got: x.dim() });
                }
                let mut v = 1.0;
                for (c, p) in x.0.iter().zip(powers) {
                    v *= c.powi(*p as i32);
                }
                Ok(v)
            }
            Evaluator::OdeU { table } => {
                if x.dim() != 1 {
                    return Err(Error::DimensionMismatch { expected: 1, got: x.dim() });
                }
                table.u_at(x.0[0])
            }
            Evaluator::ComplexExp { .. } => Err(Error::ComplexEvaluator),
        }
    }

    /// Allocation-free evaluation on a scalar state.
    #[inline]
    pub fn eval_scalar(&self, x: f64) -> Result<f64> {
        match self {
            Evaluator::Monomial { powers } => {
                if powers.len() != 1 {
                    return Err(Error::DimensionMismatch { expected: powers.len(), got: 1 });
                }
                Ok(x.powi(powers[0] as i32))
            }
            Evaluator::OdeU { table } => table.u_at(x),
            Evaluator::ComplexExp { .. } => Err(Error::ComplexEvaluator),
        }
    }

    pub fn eval_complex(&self, x: &StatePoint) -> Result<Complex64> {
        match self {
            Evaluator::ComplexExp { freq } => {
                if freq.len() != x.dim() {
                    return Err(Error::DimensionMismatch { expected: freq.len(), got: x.dim() });
                }
                let phase: f64 = freq.iter().zip(&x.0).map(|(u, c)| u * c).sum();
                Ok(Complex64::new(phase.cos(), phase.sin()))
            }
            _ => Ok(Complex64::new(self.eval_real(x)?, 0.0)),
        }
    }

    /// First derivative for scalar-state evaluators; `None` when the entry is
    /// not differentiable in this sense (complex exponentials).
    pub fn deriv1(&self, x: f64) -> Option<Result<f64>> {
        match self {
            Evaluator::Monomial { powers } if powers.len() == 1 => {
                let n = powers[0];
                Some(Ok(if n == 0 { 0.0 } else { n as f64 * x.powi(n as i32 - 1) }))
            }
            Evaluator::OdeU { table } => Some(table.du_at(x)),
            _ => None,
        }
    }

    pub fn deriv2(&self, x: f64) -> Option<Result<f64>> {
        match self {
            Evaluator::Monomial { powers } if powers.len() == 1 => {
                let n = powers[0];
                Some(Ok(if n < 2 {
                    0.0
                } else {
                    (n * (n - 1)) as f64 * x.powi(n as i32 - 2)
                }))
            }
            Evaluator::OdeU { table } => Some(table.d2u_at(x)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BasisEntry {
    pub label: String,
    pub degree: usize,
    pub eval: Evaluator,
}

/// An ordered graded basis. Entries are sorted by non-decreasing degree and
/// the first entry is the constant-one function of degree 0.
#[derive(Debug)]
pub struct GradedBasis {
    field: ScalarField,
    entries: Vec<BasisEntry>,
    max_degree: usize,
    /// `degree_starts[n]` is the index of the first entry of degree >= n;
    /// has `max_degree + 2` elements so `degree_starts[max_degree+1] = len`.
    degree_starts: Vec<usize>,
    state_dim: usize,
}

impl GradedBasis {
    pub fn new(field: ScalarField, entries: Vec<BasisEntry>) -> Result<Arc<Self>> {
        if entries.is_empty() {
            return Err(Error::InvalidBasis("basis has no entries".into()));
        }
        let n_deg0 = entries.iter().filter(|e| e.degree == 0).count();
        if n_deg0 != 1 {
            return Err(Error::InvalidBasis(format!(
                "exactly one degree-0 entry required, found {n_deg0}"
            )));
        }
        if entries[0].degree != 0 || !entries[0].eval.is_constant_one() {
            return Err(Error::InvalidBasis(
                "the first entry must be the constant-one function of degree 0".into(),
            ));
        }
        for w in entries.windows(2) {
            if w[1].degree < w[0].degree {
                return Err(Error::InvalidBasis("entries must be sorted by degree".into()));
            }
        }
        for (i, e) in entries.iter().enumerate() {
            if entries[..i].iter().any(|o| o.label == e.label) {
                return Err(Error::InvalidBasis(format!("duplicate label '{}'", e.label)));
            }
            if matches!(e.eval, Evaluator::ComplexExp { .. }) && field != ScalarField::Complex {
                return Err(Error::InvalidBasis(format!(
                    "entry '{}' is complex-valued but the field is real",
                    e.label
                )));
            }
        }
        let state_dim = entries.iter().map(|e| e.eval.state_dim()).max().unwrap();
        for e in &entries {
            if e.eval.state_dim() != state_dim {
                return Err(Error::InvalidBasis(format!(
                    "entry '{}' expects {}-dimensional states but the basis uses {}",
                    e.label,
                    e.eval.state_dim(),
                    state_dim
                )));
            }
        }
        let max_degree = entries.last().unwrap().degree;
        let degree_starts: Vec<usize> = (0..=max_degree + 1)
            .map(|n| entries.iter().position(|e| e.degree >= n).unwrap_or(entries.len()))
            .collect();
        Ok(Arc::new(GradedBasis { field, entries, max_degree, degree_starts, state_dim }))
    }

    pub fn field(&self) -> ScalarField {
        self.field
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn entries(&self) -> &[BasisEntry] {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> &BasisEntry {
        &self.entries[i]
    }

    pub fn degree_of(&self, i: usize) -> usize {
        self.entries[i].degree
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.label == label)
    }

    /// Index range of the entries with degree exactly n.
    pub fn grade_range(&self, n: usize) -> Result<std::ops::Range<usize>> {
        if n > self.max_degree {
            return Err(Error::DegreeOutOfRange { n, max: self.max_degree });
        }
        Ok(self.degree_starts[n]..self.degree_starts[n + 1])
    }

    /// Number of entries with degree <= n.
    pub fn dim_up_to(&self, n: usize) -> usize {
        let n = n.min(self.max_degree);
        self.degree_starts[n + 1]
    }

    /// Two bases are interchangeable when the labelled grading agrees.
    pub fn same_basis(&self, other: &GradedBasis) -> bool {
        std::ptr::eq(self, other)
            || (self.entries.len() == other.entries.len()
                && self
                    .entries
                    .iter()
                    .zip(&other.entries)
                    .all(|(a, b)| a.label == b.label && a.degree == b.degree))
    }

    /// True when every non-constant entry is a complex exponential.
    pub fn is_exponential_type(&self) -> bool {
        self.entries
            .iter()
            .skip(1)
            .all(|e| matches!(e.eval, Evaluator::ComplexExp { .. }))
    }
}

/// A polynomial as a dense coefficient vector over a graded basis.
#[derive(Clone, Debug)]
pub struct PolyVec {
    basis: Arc<GradedBasis>,
    coeffs: Vec<f64>,
}

impl PolyVec {
    pub fn new(basis: Arc<GradedBasis>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::DimensionMismatch { expected: basis.len(), got: coeffs.len() });
        }
        Ok(PolyVec { basis, coeffs })
    }

    pub fn zero(basis: Arc<GradedBasis>) -> Self {
        let n = basis.len();
        PolyVec { basis, coeffs: vec![0.0; n] }
    }

    /// The k-th basis entry as a polynomial.
    pub fn unit(basis: Arc<GradedBasis>, k: usize) -> Self {
        let mut p = Self::zero(basis);
        p.coeffs[k] = 1.0;
        p
    }

    /// Builds a polynomial from `(label, coefficient)` pairs.
    pub fn from_labels(basis: Arc<GradedBasis>, terms: &[(&str, f64)]) -> Result<Self> {
        let mut p = Self::zero(basis);
        for (label, c) in terms {
            let i = p
                .basis
                .index_of(label)
                .ok_or_else(|| Error::InvalidInput(format!("no basis entry '{label}'")))?;
            p.coeffs[i] += c;
        }
        Ok(p)
    }

    pub fn basis(&self) -> &Arc<GradedBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize) -> f64 {
        self.coeffs[i]
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    /// Max degree over entries with nonzero coefficient; the zero vector has
    /// degree 0 by convention.
    pub fn degree(&self) -> usize {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, _)| self.basis.degree_of(i))
            .max()
            .unwrap_or(0)
    }

    /// Grade projection: keeps exactly the coefficients of degree-n entries.
    pub fn project(&self, n: usize) -> Result<PolyVec> {
        if n > self.basis.max_degree() {
            return Err(Error::DegreeOutOfRange { n, max: self.basis.max_degree() });
        }
        let mut out = Self::zero(self.basis.clone());
        for i in self.basis.grade_range(n)? {
            out.coeffs[i] = self.coeffs[i];
        }
        Ok(out)
    }

    pub fn evaluate(&self, x: &StatePoint) -> Result<f64> {
        let mut v = 0.0;
        for (c, e) in self.coeffs.iter().zip(self.basis.entries()) {
            if *c != 0.0 {
                v += c * e.eval.eval_real(x)?;
            }
        }
        Ok(v)
    }

    /// Allocation-free evaluation on a scalar state (hot path of the
    /// Monte-Carlo validators).
    #[inline]
    pub fn evaluate_scalar(&self, x: f64) -> Result<f64> {
        let mut v = 0.0;
        for (c, e) in self.coeffs.iter().zip(self.basis.entries()) {
            if *c != 0.0 {
                v += c * e.eval.eval_scalar(x)?;
            }
        }
        Ok(v)
    }

    pub fn add(&self, other: &PolyVec) -> Result<PolyVec> {
        if !self.basis.same_basis(&other.basis) {
            return Err(Error::BasisMismatch);
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(PolyVec { basis: self.basis.clone(), coeffs })
    }

    pub fn sub(&self, other: &PolyVec) -> Result<PolyVec> {
        if !self.basis.same_basis(&other.basis) {
            return Err(Error::BasisMismatch);
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(PolyVec { basis: self.basis.clone(), coeffs })
    }

    pub fn scaled(&self, c: f64) -> PolyVec {
        PolyVec { basis: self.basis.clone(), coeffs: self.coeffs.iter().map(|v| v * c).collect() }
    }

    pub fn axpy(&mut self, alpha: f64, other: &PolyVec) -> Result<()> {
        if !self.basis.same_basis(&other.basis) {
            return Err(Error::BasisMismatch);
        }
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn norm_inf(&self) -> f64 {
        crate::linalg::norm_inf(&self.coeffs)
    }
}

/// A complex-coefficient polynomial, used by the eigen-action on
/// exponential-type bases.
#[derive(Clone, Debug)]
pub struct ComplexPolyVec {
    basis: Arc<GradedBasis>,
    coeffs: Vec<Complex64>,
}

impl ComplexPolyVec {
    pub fn new(basis: Arc<GradedBasis>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::DimensionMismatch { expected: basis.len(), got: coeffs.len() });
        }
        Ok(ComplexPolyVec { basis, coeffs })
    }

    pub fn from_real(p: &PolyVec) -> Self {
        ComplexPolyVec {
            basis: p.basis.clone(),
            coeffs: p.coeffs.iter().map(|c| Complex64::new(*c, 0.0)).collect(),
        }
    }

    pub fn basis(&self) -> &Arc<GradedBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn evaluate(&self, x: &StatePoint) -> Result<Complex64> {
        let mut v = Complex64::new(0.0, 0.0);
        for (c, e) in self.coeffs.iter().zip(self.basis.entries()) {
            if c.norm_sqr() != 0.0 {
                v += c * e.eval.eval_complex(x)?;
            }
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn monomial_basis_1d(max_degree: usize) -> Arc<GradedBasis> {
        let entries = (0..=max_degree)
            .map(|d| BasisEntry {
                label: if d == 0 { "1".into() } else { format!("x{d}") },
                degree: d,
                eval: Evaluator::Monomial { powers: vec![d as u32] },
            })
            .collect();
        GradedBasis::new(ScalarField::Real, entries).unwrap()
    }

    #[test]
    fn project_masks_by_degree() {
        let b = monomial_basis_1d(2);
        // 1 + 2x + 3x^2
        let p = PolyVec::new(b.clone(), vec![1.0, 2.0, 3.0]).unwrap();
        let p1 = p.project(1).unwrap();
        assert_eq!(p1.coeffs(), &[0.0, 2.0, 0.0]);
        // constants are fixed by the grade-0 projection
        let c = PolyVec::new(b.clone(), vec![7.5, 0.0, 0.0]).unwrap();
        assert_eq!(c.project(0).unwrap().coeffs(), c.coeffs());
        // grade-1 projection kills x^2
        let q = PolyVec::new(b, vec![0.0, 0.0, 1.0]).unwrap();
        assert!(q.project(1).unwrap().is_zero());
    }

    #[test]
    fn project_rejects_out_of_range_grade() {
        let b = monomial_basis_1d(2);
        let p = PolyVec::unit(b, 1);
        assert!(matches!(p.project(3), Err(Error::DegreeOutOfRange { .. })));
    }

    #[test]
    fn degree_conventions() {
        let b = monomial_basis_1d(2);
        assert_eq!(PolyVec::zero(b.clone()).degree(), 0);
        assert_eq!(PolyVec::new(b.clone(), vec![5.0, 0.0, 0.0]).unwrap().degree(), 0);
        assert_eq!(PolyVec::new(b, vec![0.0, 1.0, 1.0]).unwrap().degree(), 2);
    }

    #[test]
    fn evaluate_substitutes() {
        let b = monomial_basis_1d(2);
        let p = PolyVec::new(b.clone(), vec![1.0, 2.0, 0.0]).unwrap();
        assert_eq!(p.evaluate(&StatePoint::scalar(3.0)).unwrap(), 7.0);
        assert_eq!(PolyVec::zero(b.clone()).evaluate(&StatePoint::scalar(11.0)).unwrap(), 0.0);
        let sq = PolyVec::unit(b, 2);
        assert_eq!(sq.evaluate(&StatePoint::scalar(-2.0)).unwrap(), 4.0);
    }

    #[test]
    fn basis_validation() {
        // missing constant entry
        let entries = vec![BasisEntry {
            label: "x".into(),
            degree: 1,
            eval: Evaluator::Monomial { powers: vec![1] },
        }];
        assert!(GradedBasis::new(ScalarField::Real, entries).is_err());
        // unsorted degrees
        let entries = vec![
            BasisEntry {
                label: "1".into(),
                degree: 0,
                eval: Evaluator::Monomial { powers: vec![0] },
            },
            BasisEntry {
                label: "x2".into(),
                degree: 2,
                eval: Evaluator::Monomial { powers: vec![2] },
            },
            BasisEntry {
                label: "x".into(),
                degree: 1,
                eval: Evaluator::Monomial { powers: vec![1] },
            },
        ];
        assert!(GradedBasis::new(ScalarField::Real, entries).is_err());
        // complex exponential in a real basis
        let entries = vec![
            BasisEntry {
                label: "1".into(),
                degree: 0,
                eval: Evaluator::Monomial { powers: vec![0] },
            },
            BasisEntry {
                label: "e1".into(),
                degree: 1,
                eval: Evaluator::ComplexExp { freq: vec![1.0] },
            },
        ];
        assert!(GradedBasis::new(ScalarField::Real, entries).is_err());
    }

    #[test]
    fn sum_of_projections_recovers_p() {
        let b = monomial_basis_1d(3);
        let p = PolyVec::new(b.clone(), vec![0.5, -1.5, 0.0, 2.25]).unwrap();
        let mut acc = PolyVec::zero(b.clone());
        for n in 0..=b.max_degree() {
            acc = acc.add(&p.project(n).unwrap()).unwrap();
        }
        assert_eq!(acc.coeffs(), p.coeffs());
    }

    #[test]
    fn complex_exponential_evaluates() {
        let entries = vec![
            BasisEntry {
                label: "1".into(),
                degree: 0,
                eval: Evaluator::Monomial { powers: vec![0] },
            },
            BasisEntry {
                label: "e1".into(),
                degree: 1,
                eval: Evaluator::ComplexExp { freq: vec![1.0] },
            },
        ];
        let b = GradedBasis::new(ScalarField::Complex, entries).unwrap();
        let p = ComplexPolyVec::new(b, vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)])
            .unwrap();
        let v = p.evaluate(&StatePoint::scalar(std::f64::consts::PI)).unwrap();
        assert!((v.re + 1.0).abs() < 1e-15);
        assert!(v.im.abs() < 1e-12);
    }
}
