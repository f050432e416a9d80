//! Semidefinite-programming interface.
//!
//! Problems are built as [`LmiProblem`]s and handed to an interior-point
//! backend (Clarabel). Every reported success is re-checked by [`verify`],
//! which recomputes constraint eigenvalues from the returned values and never
//! looks at backend residuals.

mod problem;

pub use problem::{
    smat, svec, svec_positions, Constraint, ConstraintDump, LmiProblem, ProblemDump, VarBlock,
    DUMP_FORMAT,
};

use std::collections::BTreeMap;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::min_eigenvalue;

// Link the system OpenBLAS used by the backend's dense PSD-cone kernels.
extern crate openblas_src;

/// Problems with more scalar unknowns are rejected up front.
pub const MAX_UNKNOWNS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Largest accepted constraint violation (most negative eigenvalue).
    pub feas_tol: f64,
    pub max_iters: u32,
    pub verbosity: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            feas_tol: 1e-7,
            max_iters: 200,
            verbosity: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    Inaccurate,
    SolverFailure,
}

impl SolveStatus {
    pub fn is_success(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Inaccurate => "inaccurate",
            SolveStatus::SolverFailure => "solver_failure",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolveStatus,
    pub values: BTreeMap<String, DMatrix<f64>>,
    /// Flat scalar unknowns in problem layout.
    pub raw: Vec<f64>,
    pub objective_value: f64,
    pub max_constraint_violation: f64,
    pub iterations: u32,
    /// Backend status string, kept for diagnostics.
    pub backend_status: String,
}

/// Most negative eigenvalue across all constraints, sign-flipped; 0 when
/// every constraint holds.
pub fn verify(problem: &LmiProblem, values: &BTreeMap<String, DMatrix<f64>>) -> Result<f64> {
    let flat = problem.pack(values)?;
    Ok(verify_flat(problem, &flat))
}

pub(crate) fn verify_flat(problem: &LmiProblem, flat: &[f64]) -> f64 {
    problem
        .constraints
        .iter()
        .map(|c| -min_eigenvalue(&c.expr.eval(flat)))
        .fold(0.0, f64::max)
}

/// Per-constraint violation, for diagnostics.
pub fn constraint_violations(problem: &LmiProblem, flat: &[f64]) -> Vec<(String, f64)> {
    problem
        .constraints
        .iter()
        .map(|c| (c.label.clone(), (-min_eigenvalue(&c.expr.eval(flat))).max(0.0)))
        .collect()
}

pub fn solve(problem: &LmiProblem, settings: &SolverSettings) -> Result<Solution> {
    let nvar = problem.scalar_count();
    if nvar > MAX_UNKNOWNS {
        return Err(Error::ProblemTooLarge {
            unknowns: nvar,
            limit: MAX_UNKNOWNS,
        });
    }
    let q = problem.objective_coefficients();
    let has_objective = q.iter().any(|&c| c != 0.0);

    if problem.constraints.is_empty() {
        // Nothing to satisfy; a nonconstant linear objective is unbounded.
        let raw = vec![0.0; nvar];
        let status = if has_objective {
            SolveStatus::SolverFailure
        } else {
            SolveStatus::Optimal
        };
        return Ok(Solution {
            status,
            values: problem.unpack(&raw),
            objective_value: problem.objective_value(&raw),
            raw,
            max_constraint_violation: 0.0,
            iterations: 0,
            backend_status: if has_objective { "unbounded" } else { "trivial" }.into(),
        });
    }

    let first = solve_backend(problem, settings, &q, has_objective, true)?;
    if first.status.is_success() || first.status == SolveStatus::Infeasible {
        return Ok(first);
    }
    // Decomposing the PSD cones changes the conditioning of the KKT system;
    // instances that stall one way often converge the other.
    let second = solve_backend(problem, settings, &q, has_objective, false)?;
    Ok(if second.status.is_success() || second.status == SolveStatus::Infeasible {
        second
    } else {
        first
    })
}

fn solve_backend(
    problem: &LmiProblem,
    settings: &SolverSettings,
    q: &[f64],
    has_objective: bool,
    chordal: bool,
) -> Result<Solution> {
    let nvar = problem.scalar_count();
    let (a, b, cones) = conic_form(problem);
    let p = CscMatrix::<f64>::zeros((nvar, nvar));
    let backend_settings = DefaultSettingsBuilder::<f64>::default()
        .verbose(settings.verbosity)
        .max_iter(settings.max_iters)
        .chordal_decomposition_enable(chordal)
        .build()
        .map_err(|e| Error::Solver(e.to_string()))?;
    let mut solver = DefaultSolver::new(&p, q, &a, &b, &cones, backend_settings)
        .map_err(|e| Error::Solver(e.to_string()))?;
    solver.solve();

    let raw = solver.solution.x.clone();
    let backend = solver.solution.status;
    let iterations = solver.solution.iterations;
    let violation = verify_flat(problem, &raw);
    let status = match backend {
        SolverStatus::Solved if violation <= settings.feas_tol => {
            if has_objective {
                SolveStatus::Optimal
            } else {
                SolveStatus::Feasible
            }
        }
        // Stalled just short of the backend's own gap tolerance: the point
        // passes the independent check, but optimality is not certified.
        SolverStatus::AlmostSolved if violation <= settings.feas_tol => SolveStatus::Feasible,
        SolverStatus::PrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::NumericalError | SolverStatus::DualInfeasible | SolverStatus::Unsolved => {
            SolveStatus::SolverFailure
        }
        _ => SolveStatus::Inaccurate,
    };
    let suffix = if chordal { "" } else { " (no chordal decomposition)" };
    Ok(Solution {
        status,
        values: problem.unpack(&raw),
        objective_value: problem.objective_value(&raw),
        raw,
        max_constraint_violation: violation,
        iterations,
        backend_status: format!("{backend:?}{suffix}"),
    })
}

/// Backend standard form `s = b − A v ∈ K`. Scalar constraints are grouped
/// into one nonnegative cone each; matrix constraints map to PSD triangle
/// cones using the same scaled half-vectorization as symmetric variables.
fn conic_form(problem: &LmiProblem) -> (CscMatrix<f64>, Vec<f64>, Vec<SupportedConeT<f64>>) {
    let nvar = problem.scalar_count();
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let mut rows_i = Vec::new();
    let mut cols_j = Vec::new();
    let mut vals = Vec::new();
    for c in &problem.constraints {
        let (d, _) = c.expr.shape();
        let row0 = b.len();
        if d == 1 {
            b.push(c.expr.constant_part()[(0, 0)]);
            for (k, m) in c.expr.terms() {
                if m[(0, 0)] != 0.0 {
                    rows_i.push(row0);
                    cols_j.push(k);
                    vals.push(-m[(0, 0)]);
                }
            }
            match cones.last_mut() {
                Some(SupportedConeT::NonnegativeConeT(dim)) => *dim += 1,
                _ => cones.push(SupportedConeT::NonnegativeConeT(1)),
            }
        } else {
            b.extend(svec(c.expr.constant_part()));
            for (k, m) in c.expr.terms() {
                for (r, v) in svec(m).into_iter().enumerate() {
                    if v != 0.0 {
                        rows_i.push(row0 + r);
                        cols_j.push(k);
                        vals.push(-v);
                    }
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(d));
        }
    }
    let a = CscMatrix::new_from_triplets(b.len(), nvar, rows_i, cols_j, vals);
    (a, b, cones)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::expr::MatExpr;

    fn settings() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn two_by_two_schur() {
        // min s  s.t. [[s, 1], [1, 2]] ⪰ 0  → s* = 1/2
        let mut p = LmiProblem::new();
        let s = p.add_variable("s", 1, 1, true).unwrap();
        let block = MatExpr::blocks(&[
            vec![s.clone(), MatExpr::identity(1)],
            vec![MatExpr::identity(1), MatExpr::identity(1).scale(2.0)],
        ])
        .unwrap();
        p.add_psd("schur", block).unwrap();
        p.minimize(s).unwrap();
        let sol = solve(&p, &settings()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective_value - 0.5).abs() < 1e-6, "{}", sol.objective_value);
        assert!(sol.max_constraint_violation <= 1e-7);
    }

    #[test]
    fn negative_identity_is_infeasible() {
        let mut p = LmiProblem::new();
        let x = p.add_variable("x", 1, 1, true).unwrap();
        p.add_psd("neg", -MatExpr::identity(2)).unwrap();
        p.minimize(x.clone()).unwrap();
        // keep x bounded so infeasibility is the only possible certificate
        p.add_psd("x_nonneg", x).unwrap();
        let sol = solve(&p, &settings()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn empty_problem_is_optimal_zero() {
        let p = LmiProblem::new();
        let sol = solve(&p, &settings()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.objective_value, 0.0);
    }

    #[test]
    fn verify_reports_most_negative_eigenvalue() {
        let mut p = LmiProblem::new();
        let x = p.add_variable("X", 2, 2, true).unwrap();
        p.add_psd("X", x).unwrap();
        let mut v = BTreeMap::new();
        v.insert("X".to_string(), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]));
        assert_eq!(verify(&p, &v).unwrap(), 0.0);
        v.insert("X".to_string(), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -3.0]));
        assert!((verify(&p, &v).unwrap() - 3.0).abs() < 1e-12);
        assert!(matches!(verify(&p, &BTreeMap::new()), Err(Error::MissingVariable(_))));
    }

    #[test]
    fn oversized_problem_rejected() {
        let mut p = LmiProblem::new();
        assert!(matches!(
            p.add_variable("big", 400, 400, true),
            Err(Error::ProblemTooLarge { unknowns: 80_200, .. })
        ));
        assert!(p.variables.is_empty());
    }

    #[test]
    fn deterministic_repeat() {
        let mut p = LmiProblem::new();
        let x = p.add_variable("X", 2, 2, true).unwrap();
        let t = p.add_variable("t", 1, 1, true).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.7]);
        // Lyapunov: X − A X Aᵀ ⪰ I, t ≥ tr X
        let lyap = x.clone() - x.left_mul(&a).right_mul(&a.transpose()) - MatExpr::identity(2);
        p.add_psd("lyap", lyap).unwrap();
        p.add_psd("trace", t.clone() - x.trace()).unwrap();
        p.minimize(t).unwrap();
        let s1 = solve(&p, &settings()).unwrap();
        let s2 = solve(&p, &settings()).unwrap();
        assert_eq!(s1.status, SolveStatus::Optimal);
        assert_eq!(s1.status, s2.status);
        assert!((s1.objective_value - s2.objective_value).abs() <= 1e-9);
    }
}
