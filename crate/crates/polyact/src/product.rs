//! Pointwise multiplication via structure constants, affine drift extraction
//! and the covariance polynomial.
//!
//! The covariance polynomial
//!
//! ```text
//! a_{p,q} = G(pq) - p Gq - q Gp
//! ```
//!
//! is the density of the predictable quadratic covariation of the compensated
//! processes p(X), q(X); its computation only needs the generator matrix and
//! a product table realizing `pq` inside the basis.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::generator::GeneratorMatrix;
use crate::graded::{Evaluator, GradedBasis, PolyVec, StatePoint};
use crate::linalg::DMat;

/// Structure constants for pointwise products of basis entries.
///
/// Products involving the constant entry are handled structurally and never
/// stored. A missing pair means the product leaves the modeled span; using it
/// is an error reported with the offending labels.
#[derive(Clone, Debug)]
pub struct ProductTable {
    basis: Arc<GradedBasis>,
    map: HashMap<(usize, usize), PolyVec>,
}

impl ProductTable {
    pub fn empty(basis: Arc<GradedBasis>) -> Self {
        ProductTable { basis, map: HashMap::new() }
    }

    /// Auto-fills products of one-variable monomial entries whose result is
    /// itself a basis entry; everything else is left as a gap.
    pub fn with_monomials(basis: Arc<GradedBasis>) -> Self {
        let mut table = Self::empty(basis.clone());
        let entries = basis.entries();
        for (i, ei) in entries.iter().enumerate().skip(1) {
            for (j, ej) in entries.iter().enumerate().skip(i) {
                let (pi, pj) = match (&ei.eval, &ej.eval) {
                    (Evaluator::Monomial { powers: a }, Evaluator::Monomial { powers: b }) => {
                        (a, b)
                    }
                    _ => continue,
                };
                let sum: Vec<u32> = pi.iter().zip(pj).map(|(a, b)| a + b).collect();
                let hit = entries.iter().position(|e| match &e.eval {
                    Evaluator::Monomial { powers } => *powers == sum,
                    _ => false,
                });
                if let Some(k) = hit {
                    let mut r = PolyVec::zero(basis.clone());
                    r.axpy(1.0, &PolyVec::unit(basis.clone(), k)).unwrap();
                    table.map.insert((i, j), r);
                }
            }
        }
        table
    }

    pub fn basis(&self) -> &Arc<GradedBasis> {
        &self.basis
    }

    /// Inserts the product of entries i and j (order-free). The degree of the
    /// result must not exceed deg(i) + deg(j).
    pub fn insert(&mut self, i: usize, j: usize, result: PolyVec) -> Result<()> {
        if !self.basis.same_basis(result.basis()) {
            return Err(Error::BasisMismatch);
        }
        let bound = self.basis.degree_of(i) + self.basis.degree_of(j);
        if result.degree() > bound {
            return Err(Error::InvalidInput(format!(
                "product of '{}' and '{}' has degree {} > {}",
                self.basis.entry(i).label,
                self.basis.entry(j).label,
                result.degree(),
                bound
            )));
        }
        self.map.insert((i.min(j), i.max(j)), result);
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&PolyVec> {
        self.map.get(&(i.min(j), i.max(j)))
    }

    /// Bilinear extension of the structure constants. Pairs with a zero
    /// coefficient on either side are never looked up; a product that leaves
    /// the modeled span is reported as a gap with the offending pair.
    pub fn multiply(&self, p: &PolyVec, q: &PolyVec) -> Result<PolyVec> {
        if !self.basis.same_basis(p.basis()) || !self.basis.same_basis(q.basis()) {
            return Err(Error::BasisMismatch);
        }
        let mut out = PolyVec::zero(self.basis.clone());
        let mut acc = vec![0.0; self.basis.len()];
        for (i, pi) in p.coeffs().iter().enumerate() {
            if *pi == 0.0 {
                continue;
            }
            for (j, qj) in q.coeffs().iter().enumerate() {
                if *qj == 0.0 {
                    continue;
                }
                let w = pi * qj;
                if i == 0 {
                    acc[j] += w;
                } else if j == 0 {
                    acc[i] += w;
                } else {
                    let entry = self.get(i, j).ok_or_else(|| Error::ProductGap {
                        i: self.basis.entry(i).label.clone(),
                        j: self.basis.entry(j).label.clone(),
                    })?;
                    for (k, c) in entry.coeffs().iter().enumerate() {
                        acc[k] += w * c;
                    }
                }
            }
        }
        for (k, v) in acc.into_iter().enumerate() {
            if v != 0.0 {
                out.axpy(v, &PolyVec::unit(self.basis.clone(), k))?;
            }
        }
        Ok(out)
    }

    /// Checks every stored product pointwise on an equally spaced grid.
    /// Returns the largest absolute deviation.
    pub fn validate_pointwise(&self, lo: f64, hi: f64, n_points: usize, tol: f64) -> Result<f64> {
        let mut worst = 0.0_f64;
        for ((i, j), result) in &self.map {
            for k in 0..n_points {
                let x = lo + (hi - lo) * k as f64 / (n_points - 1).max(1) as f64;
                let pt = StatePoint::scalar(x);
                let lhs = result.evaluate(&pt)?;
                let rhs = self.basis.entry(*i).eval.eval_real(&pt)?
                    * self.basis.entry(*j).eval.eval_real(&pt)?;
                worst = worst.max((lhs - rhs).abs());
            }
        }
        if worst > tol {
            return Err(Error::InvalidInput(format!(
                "product table fails pointwise validation: deviation {worst:e} > {tol:e}"
            )));
        }
        Ok(worst)
    }

    /// True when the table realizes all products of entries of degree <= 2,
    /// i.e. the quadratic-product hypothesis behind the covariation identity.
    /// Pure monomial bases satisfy the alternative positivity hypothesis and
    /// count as covered.
    pub fn covers_quadratic_products(&self) -> bool {
        let all_monomial = self
            .basis
            .entries()
            .iter()
            .all(|e| matches!(e.eval, Evaluator::Monomial { .. }));
        if all_monomial {
            return true;
        }
        let entries = self.basis.entries();
        for (i, ei) in entries.iter().enumerate().skip(1) {
            if ei.degree > 2 {
                continue;
            }
            for (j, ej) in entries.iter().enumerate().skip(i) {
                if ej.degree > 2 {
                    continue;
                }
                if self.get(i, j).is_none() {
                    return false;
                }
            }
        }
        true
    }
}

/// The affine drift data read off the degree-(0,1) part of the generator:
/// `b` is the constant row over the degree-1 entries and `a` is the dual
/// (transpose) of the grade-1 diagonal block.
#[derive(Clone, Debug)]
pub struct AffineDriftData {
    /// Labels of the degree-1 entries, in basis order.
    pub labels: Vec<String>,
    pub b: Vec<f64>,
    pub a: DMat,
}

pub fn drift_parts(g: &GeneratorMatrix) -> Result<AffineDriftData> {
    let basis = g.basis();
    let range = basis.grade_range(1.min(basis.max_degree()))?;
    if basis.max_degree() < 1 || range.is_empty() {
        return Err(Error::InvalidInput("basis has no degree-1 entries".into()));
    }
    let labels = range.clone().map(|i| basis.entry(i).label.clone()).collect();
    let b = range.clone().map(|j| g.matrix().at(0, j)).collect();
    let a = g.diagonal_block(1)?.transpose();
    Ok(AffineDriftData { labels, b, a })
}

/// Verifies the reconstruction `b(p) + (A delta_x)(p) = (Gp)(x)` for every
/// degree-1 entry p over the supplied sample points; returns the largest
/// absolute deviation.
pub fn verify_drift_reconstruction(
    g: &GeneratorMatrix,
    drift: &AffineDriftData,
    points: &[StatePoint],
) -> Result<f64> {
    let basis = g.basis();
    let range = basis.grade_range(1)?;
    let mut worst = 0.0_f64;
    for (dj, j) in range.clone().enumerate() {
        let gp = g.apply(&PolyVec::unit(basis.clone(), j))?;
        for x in points {
            let mut pairing = drift.b[dj];
            for (di, i) in range.clone().enumerate() {
                pairing += drift.a.at(dj, di) * basis.entry(i).eval.eval_real(x)?;
            }
            worst = worst.max((pairing - gp.evaluate(x)?).abs());
        }
    }
    Ok(worst)
}

/// `a_{p,q} = G(pq) - p Gq - q Gp` as a polynomial over the basis.
///
/// The cross terms are summed before subtracting, so `a_{p,q}` and `a_{q,p}`
/// are bitwise identical (float addition commutes; the table is symmetric).
pub fn covariance_poly(
    g: &GeneratorMatrix,
    table: &ProductTable,
    p: &PolyVec,
    q: &PolyVec,
) -> Result<PolyVec> {
    let pq = table.multiply(p, q)?;
    let gp = g.apply(p)?;
    let gq = g.apply(q)?;
    let gpq = g.apply(&pq)?;
    let cross = table.multiply(p, &gq)?.add(&table.multiply(q, &gp)?)?;
    gpq.sub(&cross)
}
