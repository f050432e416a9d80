//! Small dense linear-algebra helpers shared by the model, solver and runtime layers.

use nalgebra::{DMatrix, DVector};

/// 2-norm condition number from the singular values. Returns `f64::INFINITY`
/// for singular or empty-rank input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let s = symmetrize(m);
    let mut ev: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `M + Mᵀ`.
pub fn he(m: &DMatrix<f64>) -> DMatrix<f64> {
    m + m.transpose()
}

/// Quadratic form `xᵀ M y`.
pub fn quad(x: &DVector<f64>, m: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.dot(&(m * y))
}

/// Dense row-major nested vectors to a matrix. Ragged input is rejected.
pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return None;
    }
    Some(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Assemble a dense block matrix; every block in a block-row shares its
/// height and every block in a block-column shares its width.
pub fn block_matrix(blocks: &[Vec<DMatrix<f64>>]) -> DMatrix<f64> {
    let heights: Vec<usize> = blocks.iter().map(|row| row[0].nrows()).collect();
    let widths: Vec<usize> = blocks[0].iter().map(DMatrix::ncols).collect();
    let mut out = DMatrix::zeros(heights.iter().sum(), widths.iter().sum());
    let mut r0 = 0;
    for (bi, row) in blocks.iter().enumerate() {
        let mut c0 = 0;
        for (bj, b) in row.iter().enumerate() {
            assert_eq!(b.shape(), (heights[bi], widths[bj]), "block ({bi},{bj}) shape");
            out.view_mut((r0, c0), b.shape()).copy_from(b);
            c0 += widths[bj];
        }
        r0 += heights[bi];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_of_identity_is_one() {
        assert!((condition_number(&DMatrix::identity(3, 3)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_has_infinite_condition() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(condition_number(&m) > 1e15);
    }

    #[test]
    fn block_layout() {
        let a = DMatrix::from_element(1, 1, 1.0);
        let b = DMatrix::from_element(1, 2, 2.0);
        let c = DMatrix::from_element(2, 1, 3.0);
        let d = DMatrix::from_element(2, 2, 4.0);
        let m = block_matrix(&[vec![a, b], vec![c, d]]);
        assert_eq!(m.shape(), (3, 3));
        assert_eq!(m[(0, 2)], 2.0);
        assert_eq!(m[(2, 0)], 3.0);
        assert_eq!(m[(2, 2)], 4.0);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_none());
    }
}
