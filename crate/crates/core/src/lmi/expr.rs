//! Affine matrix expressions over scalar unknowns.
//!
//! An expression is `C + Σ_k v_k M_k`, where `v` is the flat vector of
//! scalar unknowns of an [`LmiProblem`](crate::sdp::LmiProblem) and each
//! `M_k` is a dense coefficient matrix. Expressions of the size used here
//! (tens of rows, tens of unknowns) are cheap to keep dense.

use std::collections::BTreeMap;
use std::ops::{Add, Neg, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MatExpr {
    rows: usize,
    cols: usize,
    constant: DMatrix<f64>,
    terms: BTreeMap<usize, DMatrix<f64>>,
}

impl MatExpr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(DMatrix::zeros(rows, cols))
    }

    pub fn constant(m: DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            constant: m,
            terms: BTreeMap::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(DMatrix::identity(n, n))
    }

    /// Single-term expression `v_k · M`.
    pub fn term(k: usize, m: DMatrix<f64>) -> Self {
        let mut e = Self::zeros(m.nrows(), m.ncols());
        e.terms.insert(k, m);
        e
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn constant_part(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, &DMatrix<f64>)> {
        self.terms.iter().map(|(k, m)| (*k, m))
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn transpose(&self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            constant: self.constant.transpose(),
            terms: self.terms.iter().map(|(k, m)| (*k, m.transpose())).collect(),
        }
    }

    /// `M + Mᵀ`.
    pub fn he(&self) -> Self {
        self.clone() + self.transpose()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            constant: &self.constant * s,
            terms: self.terms.iter().map(|(k, m)| (*k, m * s)).collect(),
        }
    }

    /// `A · self`.
    pub fn left_mul(&self, a: &DMatrix<f64>) -> Self {
        assert_eq!(a.ncols(), self.rows, "left_mul shape");
        Self {
            rows: a.nrows(),
            cols: self.cols,
            constant: a * &self.constant,
            terms: self.terms.iter().map(|(k, m)| (*k, a * m)).collect(),
        }
    }

    /// `self · B`.
    pub fn right_mul(&self, b: &DMatrix<f64>) -> Self {
        assert_eq!(self.cols, b.nrows(), "right_mul shape");
        Self {
            rows: self.rows,
            cols: b.ncols(),
            constant: &self.constant * b,
            terms: self.terms.iter().map(|(k, m)| (*k, m * b)).collect(),
        }
    }

    /// 1×1 expression holding the trace.
    pub fn trace(&self) -> Self {
        assert_eq!(self.rows, self.cols, "trace of non-square expression");
        let tr = |m: &DMatrix<f64>| DMatrix::from_element(1, 1, m.trace());
        Self {
            rows: 1,
            cols: 1,
            constant: tr(&self.constant),
            terms: self.terms.iter().map(|(k, m)| (*k, tr(m))).collect(),
        }
    }

    /// `s · I_n` for a 1×1 expression `s`.
    pub fn times_identity(&self, n: usize) -> Self {
        assert_eq!(self.shape(), (1, 1), "times_identity needs a scalar expression");
        let id = DMatrix::<f64>::identity(n, n);
        Self {
            rows: n,
            cols: n,
            constant: &id * self.constant[(0, 0)],
            terms: self.terms.iter().map(|(k, m)| (*k, &id * m[(0, 0)])).collect(),
        }
    }

    /// Numeric value for a full vector of scalar unknowns.
    pub fn eval(&self, values: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (k, m) in &self.terms {
            out += m * values[*k];
        }
        out
    }

    /// Exact structural symmetry of the constant and every coefficient.
    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && self.constant == self.constant.transpose()
            && self.terms.values().all(|m| *m == m.transpose())
    }

    /// Assemble from a grid of blocks. Shapes are checked and a mismatch is
    /// reported with the block address.
    pub fn blocks(grid: &[Vec<MatExpr>]) -> Result<Self> {
        let heights: Vec<usize> = grid.iter().map(|row| row[0].rows).collect();
        let widths: Vec<usize> = grid[0].iter().map(|b| b.cols).collect();
        for (i, row) in grid.iter().enumerate() {
            if row.len() != widths.len() {
                return Err(Error::Assembly(format!("block row {} has {} blocks", i + 1, row.len())));
            }
            for (j, b) in row.iter().enumerate() {
                if b.shape() != (heights[i], widths[j]) {
                    return Err(Error::Assembly(format!(
                        "block ({},{}) is {:?}, expected {:?}",
                        i + 1,
                        j + 1,
                        b.shape(),
                        (heights[i], widths[j])
                    )));
                }
            }
        }
        let rows = heights.iter().sum();
        let cols = widths.iter().sum();
        let mut out = Self::zeros(rows, cols);
        let mut r0 = 0;
        for (i, row) in grid.iter().enumerate() {
            let mut c0 = 0;
            for (j, b) in row.iter().enumerate() {
                out.constant
                    .view_mut((r0, c0), b.shape())
                    .copy_from(&b.constant);
                for (k, m) in &b.terms {
                    out.terms
                        .entry(*k)
                        .or_insert_with(|| DMatrix::zeros(rows, cols))
                        .view_mut((r0, c0), m.shape())
                        .copy_from(m);
                }
                c0 += widths[j];
            }
            r0 += heights[i];
        }
        Ok(out)
    }

    /// Sparse (row, col, value) triplets of the constant and each coefficient.
    pub fn triplets(&self) -> ExprTriplets {
        ExprTriplets {
            rows: self.rows,
            cols: self.cols,
            constant: triplets_of(&self.constant),
            terms: self
                .terms
                .iter()
                .map(|(k, m)| (*k, triplets_of(m)))
                .filter(|(_, t)| !t.is_empty())
                .collect(),
        }
    }

    pub fn from_triplets(t: &ExprTriplets) -> Self {
        let dense = |trip: &[(usize, usize, f64)]| {
            let mut m = DMatrix::zeros(t.rows, t.cols);
            for &(i, j, v) in trip {
                m[(i, j)] = v;
            }
            m
        };
        Self {
            rows: t.rows,
            cols: t.cols,
            constant: dense(&t.constant),
            terms: t.terms.iter().map(|(k, trip)| (*k, dense(trip))).collect(),
        }
    }

    /// Largest unknown index referenced, if any.
    pub fn max_unknown(&self) -> Option<usize> {
        self.terms.keys().next_back().copied()
    }
}

fn triplets_of(m: &DMatrix<f64>) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if m[(i, j)] != 0.0 {
                out.push((i, j, m[(i, j)]));
            }
        }
    }
    out
}

/// Canonical sparse form of a [`MatExpr`], used by problem dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExprTriplets {
    pub rows: usize,
    pub cols: usize,
    pub constant: Vec<(usize, usize, f64)>,
    pub terms: Vec<(usize, Vec<(usize, usize, f64)>)>,
}

fn combine(a: MatExpr, b: MatExpr, sign: f64) -> MatExpr {
    assert_eq!(a.shape(), b.shape(), "expression shapes differ");
    let mut out = a;
    out.constant += b.constant * sign;
    for (k, m) in b.terms {
        match out.terms.get_mut(&k) {
            Some(existing) => *existing += m * sign,
            None => {
                out.terms.insert(k, m * sign);
            }
        }
    }
    out
}

impl Add for MatExpr {
    type Output = MatExpr;
    fn add(self, rhs: MatExpr) -> MatExpr {
        combine(self, rhs, 1.0)
    }
}

impl Sub for MatExpr {
    type Output = MatExpr;
    fn sub(self, rhs: MatExpr) -> MatExpr {
        combine(self, rhs, -1.0)
    }
}

impl Neg for MatExpr {
    type Output = MatExpr;
    fn neg(self) -> MatExpr {
        self.scale(-1.0)
    }
}
