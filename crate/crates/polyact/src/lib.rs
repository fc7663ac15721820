//! Numerical toolkit for abstract polynomial processes.
//!
//! A process X is *polynomial* when conditional expectations of polynomials
//! are again polynomials of no higher degree:
//!
//! ```text
//! E[p(X_{t+h}) | F_t] = T_h p(X_t)
//! ```
//!
//! The operator family `T_h` (the *polynomial action*) is a degree-non-increasing
//! semigroup on a graded space of functions, and on finite bases it is exactly
//! the matrix exponential `exp(h G)` of the generator matrix `G`.
//!
//! The crate provides:
//!
//! - [`graded`]: graded bases, coefficient-vector polynomials, degree and the
//!   grade projections.
//! - [`generator`]: generator matrices, block-triangularity checks, the
//!   locally-finite / reducing / strongly-reducing classification and Krylov
//!   construction of minimal invariant subspaces.
//! - [`action`]: the action `T_h p = exp(hG) p` computed by two independent
//!   algorithms (Krylov-projected power series and Padé scaling-and-squaring),
//!   the exact finite sum in the nilpotent case, conditional moments, and the
//!   diagonal eigen-action for Lévy-type exponential bases.
//! - [`product`]: pointwise multiplication via structure constants, affine
//!   drift extraction `(b, A)` and the covariance polynomial
//!   `a_{p,q} = G(pq) - p Gq - q Gp`.
//! - [`sim`]: seeded Euler-Maruyama simulation of scalar diffusions with
//!   statistical validators for the moment formula, the martingale problem and
//!   the quadratic-covariation identity.
//! - [`ode`]: the Runge-Kutta solver for `u'' = x^2 / u`, whose square root is
//!   a diffusion coefficient with a 4-dimensional invariant polynomial space.
//! - [`spectral`]: a truncated diagonal-rotation demo on l2 where the constant
//!   drift vector lies outside the state space while its semigroup integral
//!   stays inside.
//! - [`model`]: JSON model files tying a basis, a generator, a product table
//!   and an SDE together.

// Negated float comparisons like `!(dt > 0.0)` are deliberate: they reject
// NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod error;
pub mod generator;
pub mod graded;
pub mod jsonout;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod product;
pub mod report;
pub mod rng;
pub mod sim;
pub mod spectral;

pub use error::{Error, Result};
