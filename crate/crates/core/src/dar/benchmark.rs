use nalgebra::{dvector, DMatrix};

use super::{AffineMatrix, DarModel, SchedulingVariable};

/// The two-state cubic benchmark
///
/// ```text
/// x1+ = x1 + T x2
/// x2+ = x2 + T x1 + T x1³ + 2T x2 + 8T x2³ + T u
/// ```
///
/// with `π = (x1², x2²)`, scheduling `z = (x1, x2)` and the validity box
/// `|x_i| ≤ bound`.
pub fn cubic_benchmark(sampling: f64, bound: f64) -> DarModel {
    let t = sampling;
    let m = |rows: usize, cols: usize, data: &[f64]| DMatrix::from_row_slice(rows, cols, data);
    let inv = 1.0 / bound;
    DarModel {
        n: 2,
        m: 1,
        p: 2,
        a1: AffineMatrix::constant(m(2, 2, &[1.0, t, t, 1.0 + 2.0 * t])),
        a2: AffineMatrix::constant(DMatrix::zeros(2, 2))
            .with_term(0, m(2, 2, &[0.0, 0.0, t, 0.0]))
            .with_term(1, m(2, 2, &[0.0, 0.0, 0.0, 8.0 * t])),
        a3: AffineMatrix::constant(m(2, 1, &[0.0, t])),
        omega1: AffineMatrix::constant(DMatrix::zeros(2, 2))
            .with_term(0, m(2, 2, &[1.0, 0.0, 0.0, 0.0]))
            .with_term(1, m(2, 2, &[0.0, 0.0, 0.0, 1.0])),
        omega2: AffineMatrix::constant(DMatrix::from_diagonal_element(2, 2, -1.0)),
        omega3: AffineMatrix::constant(DMatrix::zeros(2, 1)),
        scheduling: vec![
            SchedulingVariable::new(dvector![1.0, 0.0], 0.0, -bound, bound),
            SchedulingVariable::new(dvector![0.0, 1.0], 0.0, -bound, bound),
        ],
        domain: vec![
            dvector![inv, 0.0],
            dvector![-inv, 0.0],
            dvector![0.0, inv],
            dvector![0.0, -inv],
        ],
    }
}
