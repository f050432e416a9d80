use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmi::expr::{ExprTriplets, MatExpr};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// A decision block. Symmetric blocks are parameterized by their scaled
/// half-vectorization: the upper triangle in column-major order
/// `(0,0), (0,1), (1,1), (0,2), …` with off-diagonal entries multiplied by
/// √2, so `⟨svec(A), svec(B)⟩ = tr(AB)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub symmetric: bool,
    /// Index of the first scalar unknown of this block.
    pub offset: usize,
}

impl VarBlock {
    pub fn scalar_count(&self) -> usize {
        if self.symmetric {
            self.rows * (self.rows + 1) / 2
        } else {
            self.rows * self.cols
        }
    }

    /// Symbolic matrix of this block.
    pub fn expr(&self) -> MatExpr {
        let mut e = MatExpr::zeros(self.rows, self.cols);
        if self.symmetric {
            for (k, (i, j)) in svec_positions(self.rows).into_iter().enumerate() {
                let mut m = DMatrix::zeros(self.rows, self.rows);
                if i == j {
                    m[(i, i)] = 1.0;
                } else {
                    m[(i, j)] = 1.0 / SQRT2;
                    m[(j, i)] = 1.0 / SQRT2;
                }
                e = e + MatExpr::term(self.offset + k, m);
            }
        } else {
            // row-major
            for i in 0..self.rows {
                for j in 0..self.cols {
                    let mut m = DMatrix::zeros(self.rows, self.cols);
                    m[(i, j)] = 1.0;
                    e = e + MatExpr::term(self.offset + i * self.cols + j, m);
                }
            }
        }
        e
    }

    fn unpack(&self, flat: &[f64]) -> DMatrix<f64> {
        let v = &flat[self.offset..self.offset + self.scalar_count()];
        if self.symmetric {
            smat(v, self.rows)
        } else {
            DMatrix::from_row_slice(self.rows, self.cols, v)
        }
    }

    fn pack_into(&self, m: &DMatrix<f64>, flat: &mut [f64]) {
        let dst = &mut flat[self.offset..self.offset + self.scalar_count()];
        if self.symmetric {
            dst.copy_from_slice(&svec(m));
        } else {
            for i in 0..self.rows {
                for j in 0..self.cols {
                    dst[i * self.cols + j] = m[(i, j)];
                }
            }
        }
    }
}

/// Upper-triangle positions `(row, col)` in column-major order.
pub fn svec_positions(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|j| (0..=j).map(move |i| (i, j))).collect()
}

/// Scaled half-vectorization of the symmetric part of `m`.
pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    svec_positions(m.nrows())
        .into_iter()
        .map(|(i, j)| {
            if i == j {
                m[(i, i)]
            } else {
                0.5 * (m[(i, j)] + m[(j, i)]) * SQRT2
            }
        })
        .collect()
}

pub fn smat(v: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for (k, (i, j)) in svec_positions(n).into_iter().enumerate() {
        if i == j {
            m[(i, i)] = v[k];
        } else {
            m[(i, j)] = v[k] / SQRT2;
            m[(j, i)] = v[k] / SQRT2;
        }
    }
    m
}

/// Named constraint `expr ⪰ 0`. A 1×1 expression is a scalar inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub expr: MatExpr,
}

/// Minimize a linear objective subject to affine PSD constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem {
    pub variables: Vec<VarBlock>,
    pub constraints: Vec<Constraint>,
    /// 1×1 affine objective, minimized.
    pub objective: MatExpr,
}

impl Default for LmiProblem {
    fn default() -> Self {
        Self {
            variables: Vec::new(),
            constraints: Vec::new(),
            objective: MatExpr::zeros(1, 1),
        }
    }
}

impl LmiProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn scalar_count(&self) -> usize {
        self.variables.iter().map(VarBlock::scalar_count).sum()
    }

    pub fn add_variable(&mut self, name: &str, rows: usize, cols: usize, symmetric: bool) -> Result<MatExpr> {
        if self.variables.iter().any(|v| v.name == name) {
            return Err(Error::DuplicateVariable(name.to_string()));
        }
        if symmetric && rows != cols {
            return Err(Error::Assembly(format!("symmetric variable `{name}` must be square")));
        }
        let block = VarBlock {
            name: name.to_string(),
            rows,
            cols,
            symmetric,
            offset: self.scalar_count(),
        };
        // Checked before the symbolic form is built: it is dense per unknown.
        let unknowns = block.offset + block.scalar_count();
        if unknowns > super::MAX_UNKNOWNS {
            return Err(Error::ProblemTooLarge {
                unknowns,
                limit: super::MAX_UNKNOWNS,
            });
        }
        let e = block.expr();
        self.variables.push(block);
        Ok(e)
    }

    pub fn variable(&self, name: &str) -> Option<&VarBlock> {
        self.variables.iter().find(|v| v.name == name)
    }

    /// Add `expr ⪰ 0`.
    pub fn add_psd(&mut self, label: impl Into<String>, expr: MatExpr) -> Result<()> {
        let label = label.into();
        let (r, c) = expr.shape();
        if r != c {
            return Err(Error::Assembly(format!("constraint `{label}` is {r}×{c}, not square")));
        }
        if !expr.is_symmetric() {
            return Err(Error::Assembly(format!("constraint `{label}` is not symmetric")));
        }
        if expr.max_unknown().is_some_and(|k| k >= self.scalar_count()) {
            return Err(Error::Assembly(format!(
                "constraint `{label}` references an unregistered unknown"
            )));
        }
        self.constraints.push(Constraint { label, expr });
        Ok(())
    }

    pub fn minimize(&mut self, objective: MatExpr) -> Result<()> {
        if objective.shape() != (1, 1) {
            return Err(Error::Assembly("objective must be 1×1".into()));
        }
        self.objective = objective;
        Ok(())
    }

    /// Objective gradient as a dense vector over the scalar unknowns.
    pub fn objective_coefficients(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.scalar_count()];
        for (k, m) in self.objective.terms() {
            q[k] = m[(0, 0)];
        }
        q
    }

    pub fn objective_value(&self, flat: &[f64]) -> f64 {
        self.objective.eval(flat)[(0, 0)]
    }

    pub fn unpack(&self, flat: &[f64]) -> BTreeMap<String, DMatrix<f64>> {
        self.variables
            .iter()
            .map(|v| (v.name.clone(), v.unpack(flat)))
            .collect()
    }

    pub fn pack(&self, values: &BTreeMap<String, DMatrix<f64>>) -> Result<Vec<f64>> {
        let mut flat = vec![0.0; self.scalar_count()];
        for v in &self.variables {
            let m = values
                .get(&v.name)
                .ok_or_else(|| Error::MissingVariable(v.name.clone()))?;
            if m.shape() != (v.rows, v.cols) {
                return Err(Error::Assembly(format!(
                    "value for `{}` is {:?}, expected {:?}",
                    v.name,
                    m.shape(),
                    (v.rows, v.cols)
                )));
            }
            v.pack_into(m, &mut flat);
        }
        Ok(flat)
    }

    pub fn to_dump(&self) -> ProblemDump {
        ProblemDump {
            format: DUMP_FORMAT.to_string(),
            variables: self.variables.clone(),
            constraints: self
                .constraints
                .iter()
                .map(|c| ConstraintDump {
                    label: c.label.clone(),
                    expr: c.expr.triplets(),
                })
                .collect(),
            objective: self.objective.triplets(),
        }
    }

    pub fn from_dump(d: &ProblemDump) -> Result<Self> {
        if d.format != DUMP_FORMAT {
            return Err(Error::Assembly(format!("unknown dump format `{}`", d.format)));
        }
        let mut p = LmiProblem::new();
        for v in &d.variables {
            p.add_variable(&v.name, v.rows, v.cols, v.symmetric)?;
        }
        if p.variables != d.variables {
            return Err(Error::Assembly("variable offsets are not canonical".into()));
        }
        for c in &d.constraints {
            p.add_psd(c.label.clone(), MatExpr::from_triplets(&c.expr))?;
        }
        p.minimize(MatExpr::from_triplets(&d.objective))?;
        Ok(p)
    }
}

pub const DUMP_FORMAT: &str = "lmi-problem/v1";

/// Canonical JSON dump: variable table plus coefficient triplets. The
/// meaning of each constraint is `constant + Σ_k v_k · coeff_k ⪰ 0`, with `v`
/// the flat scalar-unknown vector laid out by the variable offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDump {
    pub format: String,
    pub variables: Vec<VarBlock>,
    pub constraints: Vec<ConstraintDump>,
    pub objective: ExprTriplets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintDump {
    pub label: String,
    pub expr: ExprTriplets,
}
