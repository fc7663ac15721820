//! JSON model files: a graded basis, a generator matrix (column-major), an
//! optional product table, an optional SDE block for simulation, and an
//! optional Lévy exponent for exponential bases.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "name": "ou",
//!   "basis": { "field": "real", "entries": [
//!     { "label": "1",  "degree": 0, "eval": { "type": "monomial", "powers": [0] } },
//!     { "label": "x",  "degree": 1, "eval": { "type": "monomial", "powers": [1] } },
//!     { "label": "x2", "degree": 2, "eval": { "type": "monomial", "powers": [2] } } ] },
//!   "generator": { "matrix": [[0,0,0],[0,-1,0],[1,0,-2]] },
//!   "sde": { "drift": { "type": "affine", "mu": 0.0, "gamma": -1.0 },
//!            "sigma": { "type": "constant", "value": 1.0 },
//!            "x0": 2.0, "range": [-12.0, 12.0] }
//! }
//! ```
//!
//! `generator.matrix` is column-major: `matrix[j]` lists the coefficients of
//! the image of basis entry j over all basis entries.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use crate::action::LevyExponent;
use crate::error::{Error, Result};
use crate::generator::GeneratorMatrix;
use crate::graded::{BasisEntry, Evaluator, GradedBasis, PolyVec, ScalarField};
use crate::ode::{solve_sigma_ode, SigmaTable};
use crate::product::ProductTable;
use crate::sim::{DriftSpec, ProcessModel, SigmaSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// Grid size and tolerance for the load-time consistency checks.
const VALIDATION_GRID: usize = 33;
const PRODUCT_TOL: f64 = 1e-10;
const GENERATOR_TOL: f64 = 1e-8;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: u32,
    pub name: String,
    pub basis: BasisSpec,
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
    #[serde(default)]
    pub product_table: Option<ProductTableSpec>,
    #[serde(default)]
    pub sde: Option<SdeSpec>,
    #[serde(default)]
    pub psi: Option<PsiSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub field: String,
    pub entries: Vec<EntrySpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntrySpec {
    pub label: String,
    pub degree: usize,
    pub eval: EvalSpec,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum EvalSpec {
    #[serde(rename = "monomial")]
    Monomial { powers: Vec<u32> },
    #[serde(rename = "ode_u")]
    OdeU { x_max: f64, step: f64 },
    #[serde(rename = "cexp")]
    ComplexExp { u: Vec<f64> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    /// Column-major: `matrix[j][i]` is the coefficient of entry i in G(entry j).
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductTableSpec {
    pub products: Vec<ProductSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductSpec {
    pub i: String,
    pub j: String,
    pub result: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum DriftFamily {
    #[serde(rename = "zero")]
    Zero,
    #[serde(rename = "constant")]
    Constant { value: f64 },
    #[serde(rename = "affine")]
    Affine { mu: f64, gamma: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum SigmaFamily {
    #[serde(rename = "constant")]
    Constant { value: f64 },
    #[serde(rename = "proportional")]
    Proportional { value: f64 },
    /// `sqrt(u(x))` with the table taken from the basis `ode_u` entry.
    #[serde(rename = "sqrt_ode_u")]
    SqrtOdeU {},
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeSpec {
    pub drift: DriftFamily,
    pub sigma: SigmaFamily,
    pub x0: f64,
    pub range: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompoundAtom {
    pub weight: f64,
    pub jump: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiValue {
    pub u: Vec<f64>,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum PsiSpec {
    #[serde(rename = "gaussian")]
    Gaussian { drift: Vec<f64>, sigma2: Vec<f64> },
    #[serde(rename = "poisson")]
    Poisson { intensity: f64, jump: Vec<f64> },
    #[serde(rename = "compound")]
    Compound { intensity: f64, atoms: Vec<CompoundAtom> },
    #[serde(rename = "tabulated")]
    Tabulated { values: Vec<PsiValue> },
}

/// A fully constructed and cross-validated model.
pub struct LoadedModel {
    pub name: String,
    pub basis: Arc<GradedBasis>,
    pub generator: Option<GeneratorMatrix>,
    pub table: ProductTable,
    pub process: Option<Arc<ProcessModel>>,
    pub psi: Option<LevyExponent>,
}

pub fn load_model_path(path: &Path) -> Result<LoadedModel> {
    let text = std::fs::read_to_string(path)?;
    load_model_str(&text)
}

pub fn load_model_str(text: &str) -> Result<LoadedModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    build_model(file)
}

fn build_model(file: ModelFile) -> Result<LoadedModel> {
    if file.schema_version != SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            file.schema_version
        )));
    }
    let field = match file.basis.field.as_str() {
        "real" => ScalarField::Real,
        "complex" => ScalarField::Complex,
        other => return Err(Error::Schema(format!("unknown field '{other}'"))),
    };

    // One shared table for all ode_u entries and the sqrt_ode_u sigma.
    let mut ode_table: Option<Arc<SigmaTable>> = None;
    let mut entries = Vec::with_capacity(file.basis.entries.len());
    for e in &file.basis.entries {
        let eval = match &e.eval {
            EvalSpec::Monomial { powers } => Evaluator::Monomial { powers: powers.clone() },
            EvalSpec::OdeU { x_max, step } => {
                if ode_table.is_none() {
                    ode_table = Some(Arc::new(solve_sigma_ode(*x_max, *step)?));
                }
                Evaluator::OdeU { table: ode_table.clone().unwrap() }
            }
            EvalSpec::ComplexExp { u } => Evaluator::ComplexExp { freq: u.clone() },
        };
        entries.push(BasisEntry { label: e.label.clone(), degree: e.degree, eval });
    }
    let basis = GradedBasis::new(field, entries)?;

    let generator = match &file.generator {
        Some(g) => Some(GeneratorMatrix::from_columns(basis.clone(), &g.matrix)?),
        None => None,
    };

    let mut table = ProductTable::with_monomials(basis.clone());
    if let Some(spec) = &file.product_table {
        for p in &spec.products {
            let i = basis
                .index_of(&p.i)
                .ok_or_else(|| Error::Schema(format!("product references unknown entry '{}'", p.i)))?;
            let j = basis
                .index_of(&p.j)
                .ok_or_else(|| Error::Schema(format!("product references unknown entry '{}'", p.j)))?;
            let mut result = PolyVec::zero(basis.clone());
            for (label, coeff) in &p.result {
                let k = basis.index_of(label).ok_or_else(|| {
                    Error::Schema(format!("product result references unknown entry '{label}'"))
                })?;
                result.axpy(*coeff, &PolyVec::unit(basis.clone(), k))?;
            }
            table.insert(i, j, result)?;
        }
    }

    let process = match &file.sde {
        Some(sde) => {
            let generator = generator
                .clone()
                .ok_or_else(|| Error::Schema("an sde block requires a generator".into()))?;
            let drift = match &sde.drift {
                DriftFamily::Zero => DriftSpec::Zero,
                DriftFamily::Constant { value } => DriftSpec::Constant(*value),
                DriftFamily::Affine { mu, gamma } => DriftSpec::Affine { mu: *mu, gamma: *gamma },
            };
            let sigma = match &sde.sigma {
                SigmaFamily::Constant { value } => SigmaSpec::Constant(*value),
                SigmaFamily::Proportional { value } => SigmaSpec::Proportional(*value),
                SigmaFamily::SqrtOdeU {} => SigmaSpec::SqrtOdeU(ode_table.clone().ok_or_else(
                    || Error::Schema("sqrt_ode_u sigma needs an ode_u basis entry".into()),
                )?),
            };
            let model = ProcessModel::new(
                &file.name,
                drift,
                sigma,
                sde.x0,
                (sde.range[0], sde.range[1]),
                generator,
            )?;
            model.generator_consistency(VALIDATION_GRID, GENERATOR_TOL)?;
            table.validate_pointwise(sde.range[0], sde.range[1], VALIDATION_GRID, PRODUCT_TOL)?;
            Some(Arc::new(model))
        }
        None => None,
    };

    let psi = match &file.psi {
        Some(PsiSpec::Gaussian { drift, sigma2 }) => {
            Some(LevyExponent::Gaussian { drift: drift.clone(), sigma2: sigma2.clone() })
        }
        Some(PsiSpec::Poisson { intensity, jump }) => {
            Some(LevyExponent::Poisson { intensity: *intensity, jump: jump.clone() })
        }
        Some(PsiSpec::Compound { intensity, atoms }) => Some(LevyExponent::Compound {
            intensity: *intensity,
            atoms: atoms.iter().map(|a| (a.weight, a.jump.clone())).collect(),
        }),
        Some(PsiSpec::Tabulated { values }) => {
            for v in values {
                if v.u.iter().all(|ui| *ui == 0.0) && (v.re != 0.0 || v.im != 0.0) {
                    return Err(Error::Schema(
                        "tabulated exponent must vanish at frequency zero".into(),
                    ));
                }
            }
            Some(LevyExponent::Tabulated {
                values: values
                    .iter()
                    .map(|v| (v.u.clone(), num_complex::Complex64::new(v.re, v.im)))
                    .collect(),
            })
        }
        None => None,
    };

    Ok(LoadedModel { name: file.name, basis, generator, table, process, psi })
}

#[cfg(test)]
mod tests {
    use super::*;

    const OU: &str = r#"{
        "schema_version": 1,
        "name": "ou",
        "basis": { "field": "real", "entries": [
            { "label": "1",  "degree": 0, "eval": { "type": "monomial", "powers": [0] } },
            { "label": "x",  "degree": 1, "eval": { "type": "monomial", "powers": [1] } },
            { "label": "x2", "degree": 2, "eval": { "type": "monomial", "powers": [2] } } ] },
        "generator": { "matrix": [[0,0,0],[0,-1,0],[1,0,-2]] },
        "sde": { "drift": { "type": "affine", "mu": 0.0, "gamma": -1.0 },
                 "sigma": { "type": "constant", "value": 1.0 },
                 "x0": 2.0, "range": [-12.0, 12.0] }
    }"#;

    #[test]
    fn loads_a_model_and_cross_validates() {
        let m = load_model_str(OU).unwrap();
        assert_eq!(m.name, "ou");
        let g = m.generator.unwrap();
        assert_eq!(g.matrix().at(0, 2), 1.0);
        assert_eq!(g.matrix().at(2, 2), -2.0);
        assert!(m.process.is_some());
    }

    #[test]
    fn rejects_wrong_schema_version() {
        let bad = OU.replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(load_model_str(&bad), Err(Error::Schema(_))));
    }

    #[test]
    fn rejects_inconsistent_generator() {
        // G x = -2x disagrees with the declared drift gamma = -1
        let bad = OU.replace("[0,-1,0]", "[0,-2,0]");
        assert!(load_model_str(&bad).is_err());
    }

    #[test]
    fn rejects_grading_violation() {
        // a generator column raising degree: G x = x^2
        let bad = OU.replace("[0,-1,0]", "[0,0,1]");
        assert!(matches!(load_model_str(&bad), Err(Error::GradingViolation { .. })));
    }

    #[test]
    fn rejects_malformed_json_and_unknown_fields() {
        assert!(matches!(load_model_str("{ not json"), Err(Error::Json(_))));
        let unknown = OU.replace("\"name\": \"ou\"", "\"name\": \"ou\", \"extra\": 1");
        assert!(matches!(load_model_str(&unknown), Err(Error::Json(_))));
    }

    #[test]
    fn product_table_overrides_parse() {
        let with_table = OU.replace(
            "\"sde\":",
            r#""product_table": { "products": [
                { "i": "x", "j": "x", "result": { "x2": 1.0 } } ] },
            "sde":"#,
        );
        let m = load_model_str(&with_table).unwrap();
        let x = PolyVec::unit(m.basis.clone(), 1);
        assert_eq!(m.table.multiply(&x, &x).unwrap().coeff(2), 1.0);
    }
}
