//! JSON model files.
//!
//! ```json
//! {
//!   "n": 2, "m": 1, "p": 2,
//!   "scheduling": [{"c": [1, 0], "d": 0, "lower": -2, "upper": 2}],
//!   "A1": {"base": [[1, 0.1], [0.1, 1.2]], "terms": []},
//!   "A2": {"base": [[0, 0], [0, 0]], "terms": [{"j": 0, "coeff": [[0, 0], [0.1, 0]]}]},
//!   "A3": ..., "Omega1": ..., "Omega2": ..., "Omega3": ...,
//!   "domain_b": [[0.5, 0], [-0.5, 0]]
//! }
//! ```
//!
//! Matrices are row-major nested arrays. Term index `j` is 0-based into
//! `scheduling`. Each half-plane row `b` encodes `bᵀx ≤ 1`.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AffineMatrix, DarModel, SchedulingVariable};
use crate::error::{Error, Result};
use crate::linalg::{from_rows, to_rows};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub scheduling: Vec<SchedulingEntry>,
    #[serde(rename = "A1")]
    pub a1: MatrixEntry,
    #[serde(rename = "A2")]
    pub a2: MatrixEntry,
    #[serde(rename = "A3")]
    pub a3: MatrixEntry,
    #[serde(rename = "Omega1")]
    pub omega1: MatrixEntry,
    #[serde(rename = "Omega2")]
    pub omega2: MatrixEntry,
    #[serde(rename = "Omega3")]
    pub omega3: MatrixEntry,
    pub domain_b: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulingEntry {
    pub c: Vec<f64>,
    #[serde(default)]
    pub d: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixEntry {
    pub base: Vec<Vec<f64>>,
    #[serde(default)]
    pub terms: Vec<TermEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermEntry {
    pub j: usize,
    pub coeff: Vec<Vec<f64>>,
}

fn matrix(field: &str, e: &MatrixEntry) -> Result<AffineMatrix> {
    let ragged = |what: &str| Error::InvalidModel(format!("{field}.{what} has ragged rows"));
    let mut out = AffineMatrix::constant(from_rows(&e.base).ok_or_else(|| ragged("base"))?);
    for (k, t) in e.terms.iter().enumerate() {
        let coeff = from_rows(&t.coeff).ok_or_else(|| ragged(&format!("terms[{k}].coeff")))?;
        out = out.with_term(t.j, coeff);
    }
    Ok(out)
}

fn entry(m: &AffineMatrix) -> MatrixEntry {
    MatrixEntry {
        base: to_rows(&m.base),
        terms: m
            .terms
            .iter()
            .map(|(j, c)| TermEntry {
                j: *j,
                coeff: to_rows(c),
            })
            .collect(),
    }
}

impl ModelFile {
    pub fn into_model(self) -> Result<DarModel> {
        // Empty nested arrays lose their column count; restore from n/m/p.
        let fix = |m: AffineMatrix, rows: usize, cols: usize| {
            if m.base.is_empty() && m.terms.is_empty() {
                AffineMatrix::constant(nalgebra::DMatrix::zeros(rows, cols))
            } else {
                m
            }
        };
        let (n, m, p) = (self.n, self.m, self.p);
        let model = DarModel {
            n,
            m,
            p,
            a1: fix(matrix("A1", &self.a1)?, n, n),
            a2: fix(matrix("A2", &self.a2)?, n, p),
            a3: fix(matrix("A3", &self.a3)?, n, m),
            omega1: fix(matrix("Omega1", &self.omega1)?, p, n),
            omega2: fix(matrix("Omega2", &self.omega2)?, p, p),
            omega3: fix(matrix("Omega3", &self.omega3)?, p, m),
            scheduling: self
                .scheduling
                .iter()
                .map(|s| SchedulingVariable::new(DVector::from_vec(s.c.clone()), s.d, s.lower, s.upper))
                .collect(),
            domain: self.domain_b.into_iter().map(DVector::from_vec).collect(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn from_model(model: &DarModel) -> Self {
        Self {
            n: model.n,
            m: model.m,
            p: model.p,
            scheduling: model
                .scheduling
                .iter()
                .map(|s| SchedulingEntry {
                    c: s.coeffs.iter().copied().collect(),
                    d: s.offset,
                    lower: s.lower,
                    upper: s.upper,
                })
                .collect(),
            a1: entry(&model.a1),
            a2: entry(&model.a2),
            a3: entry(&model.a3),
            omega1: entry(&model.omega1),
            omega2: entry(&model.omega2),
            omega3: entry(&model.omega3),
            domain_b: model.domain.iter().map(|b| b.iter().copied().collect()).collect(),
        }
    }
}

impl DarModel {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str::<ModelFile>(s)?.into_model()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from_model(self)).expect("model serializes")
    }

    /// Stable hash (SHA-256, hex) of the canonical compact JSON form, for run
    /// provenance.
    pub fn content_hash(&self) -> String {
        let s = serde_json::to_string(&ModelFile::from_model(self)).expect("model serializes");
        Sha256::digest(s.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
