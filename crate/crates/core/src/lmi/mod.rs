//! Matrix-inequality constraints of the co-design problems.
//!
//! Two variants share one assembly path:
//!
//! * [`Mode::Op1`] — gains `K_j`, `L_j` on the state and the nonlinearity
//!   vector, with `Q̃x, Q̃e, Q̃π, Q̃δ` trigger weights. Each `Φ_ij` has seven
//!   block rows of sizes `(n, n, p, p, n, n, p)`.
//! * [`Mode::Op2`] — state gains only (`L ≡ 0`), weights `Q̃x, Q̃e`, five block
//!   rows `(n, n, p, n, n)`.
//!
//! Plant matrices come from vertex `i`, gains from vertex `j`.

pub mod expr;
mod relax;

pub use relax::{relaxation_classes, RelaxationClass};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dar::{multi_index, PlantMatrices, PolytopicModel};
use crate::error::{Error, Result};
use crate::sdp::LmiProblem;
use expr::MatExpr;

/// Floor for the positive-definite blocks: `X, Q̃_• ⪰ δ_pd I`.
pub const DELTA_PD: f64 = 1e-6;
/// Strict negativity of the relaxation sums is `⪯ −δ I` with
/// `δ = STRICT_SCALE · (1 + max plant-matrix norm)`.
pub const STRICT_SCALE: f64 = 1e-7;
/// Strict trace budget `< ε` is realized as `≤ ε (1 − TRACE_BACKOFF)`.
pub const TRACE_BACKOFF: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Op1,
    Op2,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Op1 => "op1",
            Mode::Op2 => "op2",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "op1" => Ok(Mode::Op1),
            "op2" => Ok(Mode::Op2),
            other => Err(format!("unknown mode `{other}` (expected op1 or op2)")),
        }
    }
}

/// Symbolic decision blocks registered in an [`LmiProblem`].
#[derive(Debug, Clone)]
pub struct DecisionVars {
    pub mode: Mode,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub x: MatExpr,
    pub qx: MatExpr,
    pub qe: MatExpr,
    /// Present in [`Mode::Op1`] only.
    pub qpi: Option<MatExpr>,
    pub qdelta: Option<MatExpr>,
    pub z: MatExpr,
    pub k: Vec<MatExpr>,
    /// Empty in [`Mode::Op2`].
    pub l: Vec<MatExpr>,
    pub sigma: MatExpr,
}

pub fn vertex_tag(k: usize, r: usize) -> String {
    multi_index(k, r).iter().map(|b| char::from(b'0' + b)).collect()
}

pub mod names {
    pub const X: &str = "X";
    pub const QX: &str = "Qx_t";
    pub const QE: &str = "Qe_t";
    pub const QPI: &str = "Qpi_t";
    pub const QDELTA: &str = "Qdelta_t";
    pub const Z: &str = "Z_t";
    pub const SIGMA: &str = "sigma";

    pub fn k(tag: &str) -> String {
        format!("K_t[{tag}]")
    }

    pub fn l(tag: &str) -> String {
        format!("L_t[{tag}]")
    }
}

impl DecisionVars {
    pub fn register(
        problem: &mut LmiProblem,
        mode: Mode,
        (n, m, p): (usize, usize, usize),
        r: usize,
    ) -> Result<Self> {
        let x = problem.add_variable(names::X, n, n, true)?;
        let qx = problem.add_variable(names::QX, n, n, true)?;
        let qe = problem.add_variable(names::QE, n, n, true)?;
        let (qpi, qdelta) = match mode {
            Mode::Op1 => (
                Some(problem.add_variable(names::QPI, p, p, true)?),
                Some(problem.add_variable(names::QDELTA, p, p, true)?),
            ),
            Mode::Op2 => (None, None),
        };
        let z = problem.add_variable(names::Z, p, p, false)?;
        let mut k = Vec::new();
        let mut l = Vec::new();
        for v in 0..1usize << r {
            let tag = vertex_tag(v, r);
            k.push(problem.add_variable(&names::k(&tag), m, n, false)?);
            if mode == Mode::Op1 {
                l.push(problem.add_variable(&names::l(&tag), m, p, false)?);
            }
        }
        let sigma = problem.add_variable(names::SIGMA, 1, 1, true)?;
        Ok(Self {
            mode,
            n,
            m,
            p,
            x,
            qx,
            qe,
            qpi,
            qdelta,
            z,
            k,
            l,
            sigma,
        })
    }

    fn check_vertex(&self, v: &PlantMatrices, i: usize) -> Result<()> {
        let (n, m, p) = (self.n, self.m, self.p);
        let expected = [
            ("A1", &v.a1, (n, n)),
            ("A2", &v.a2, (n, p)),
            ("A3", &v.a3, (n, m)),
            ("Omega1", &v.omega1, (p, n)),
            ("Omega2", &v.omega2, (p, p)),
            ("Omega3", &v.omega3, (p, m)),
        ];
        for (name, mat, shape) in expected {
            if mat.shape() != shape {
                return Err(Error::Assembly(format!(
                    "{name} of vertex {i} is {:?}, expected {shape:?}",
                    mat.shape()
                )));
            }
        }
        Ok(())
    }
}

fn zero(r: usize, c: usize) -> MatExpr {
    MatExpr::zeros(r, c)
}

fn vertex<'a>(poly: &'a PolytopicModel, i: usize, vars: &DecisionVars, j: usize) -> Result<&'a PlantMatrices> {
    let v = poly
        .vertices
        .get(i)
        .ok_or_else(|| Error::Assembly(format!("plant vertex {i} out of range")))?;
    if j >= vars.k.len() {
        return Err(Error::Assembly(format!("gain vertex {j} out of range")));
    }
    vars.check_vertex(v, i)?;
    Ok(v)
}

/// `Φ_ij` of the full co-design condition (gains on `x` and `π`).
pub fn build_phi_full(i: usize, j: usize, vars: &DecisionVars, poly: &PolytopicModel) -> Result<MatExpr> {
    if vars.mode != Mode::Op1 {
        return Err(Error::Assembly("full Φ needs op1 decision variables".into()));
    }
    let v = vertex(poly, i, vars, j)?;
    let (n, p) = (vars.n, vars.p);
    let x = &vars.x;
    let kt = vars.k[j].transpose();
    let l = &vars.l[j];
    let lt = l.transpose();
    let z = &vars.z;
    let qe = &vars.qe;
    let qx = &vars.qx;
    let qpi = vars.qpi.as_ref().expect("op1 has Q̃π");
    let qdelta = vars.qdelta.as_ref().expect("op1 has Q̃δ");
    let (a1t, a2t, a3t) = (v.a1.transpose(), v.a2.transpose(), v.a3.transpose());
    let o1t = v.omega1.transpose();
    let o3t = v.omega3.transpose();

    let p13 = x.right_mul(&o1t) + kt.right_mul(&o3t);
    let p15 = x.right_mul(&a1t) + kt.right_mul(&a3t);
    let p23 = kt.right_mul(&o3t);
    let p25 = kt.right_mul(&a3t);
    let p33 = (z.left_mul(&v.omega2) + l.left_mul(&v.omega3)).he();
    let p34 = l.left_mul(&v.omega3);
    let p35 = z.transpose().right_mul(&a2t) + lt.right_mul(&a3t);
    let p37 = z.transpose();
    let p45 = lt.right_mul(&a3t);

    MatExpr::blocks(&[
        vec![-x.clone(), zero(n, n), p13.clone(), zero(n, p), p15.clone(), x.clone(), zero(n, p)],
        vec![zero(n, n), -qe.clone(), p23.clone(), zero(n, p), p25.clone(), zero(n, n), zero(n, p)],
        vec![p13.transpose(), p23.transpose(), p33, p34.clone(), p35.clone(), zero(p, n), p37.clone()],
        vec![zero(p, n), zero(p, n), p34.transpose(), -qdelta.clone(), p45.clone(), zero(p, n), zero(p, p)],
        vec![p15.transpose(), p25.transpose(), p35.transpose(), p45.transpose(), -x.clone(), zero(n, n), zero(n, p)],
        vec![x.clone(), zero(n, n), zero(n, p), zero(n, p), zero(n, n), -qx.clone(), zero(n, p)],
        vec![zero(p, n), zero(p, n), p37.transpose(), zero(p, p), zero(p, n), zero(p, n), -qpi.clone()],
    ])
}

/// `Φ_ij` of the state-gain-only condition.
pub fn build_phi_reduced(i: usize, j: usize, vars: &DecisionVars, poly: &PolytopicModel) -> Result<MatExpr> {
    let v = vertex(poly, i, vars, j)?;
    let (n, p) = (vars.n, vars.p);
    let x = &vars.x;
    let kt = vars.k[j].transpose();
    let z = &vars.z;
    let (a1t, a2t, a3t) = (v.a1.transpose(), v.a2.transpose(), v.a3.transpose());
    let o1t = v.omega1.transpose();
    let o3t = v.omega3.transpose();

    let p13 = x.right_mul(&o1t) + kt.right_mul(&o3t);
    let p14 = x.right_mul(&a1t) + kt.right_mul(&a3t);
    let p23 = kt.right_mul(&o3t);
    let p24 = kt.right_mul(&a3t);
    let p33 = z.left_mul(&v.omega2).he();
    let p34 = z.transpose().right_mul(&a2t);

    MatExpr::blocks(&[
        vec![-x.clone(), zero(n, n), p13.clone(), p14.clone(), x.clone()],
        vec![zero(n, n), -vars.qe.clone(), p23.clone(), p24.clone(), zero(n, n)],
        vec![p13.transpose(), p23.transpose(), p33, p34.clone(), zero(p, n)],
        vec![p14.transpose(), p24.transpose(), p34.transpose(), -x.clone(), zero(n, n)],
        vec![x.clone(), zero(n, n), zero(n, p), zero(n, n), -vars.qx.clone()],
    ])
}

pub fn build_phi(i: usize, j: usize, vars: &DecisionVars, poly: &PolytopicModel) -> Result<MatExpr> {
    match vars.mode {
        Mode::Op1 => build_phi_full(i, j, vars, poly),
        Mode::Op2 => build_phi_reduced(i, j, vars, poly),
    }
}

/// `[1, bᵀX; Xb, X] ⪰ 0`: the level set `xᵀX⁻¹x ≤ 1` stays inside `bᵀx ≤ 1`.
pub fn build_roa_lmi(b: &DVector<f64>, vars: &DecisionVars) -> Result<MatExpr> {
    if b.len() != vars.n {
        return Err(Error::Assembly(format!(
            "half-plane has length {}, expected {}",
            b.len(),
            vars.n
        )));
    }
    let bt = DMatrix::from_row_slice(1, vars.n, b.as_slice());
    let bx = vars.x.left_mul(&bt);
    MatExpr::blocks(&[
        vec![MatExpr::identity(1), bx.clone()],
        vec![bx.transpose(), vars.x.clone()],
    ])
}

/// `[σI, I; I, X] ⪰ 0`, equivalent to `X⁻¹ ⪯ σI`.
pub fn build_sigma_lmi(vars: &DecisionVars) -> Result<MatExpr> {
    let n = vars.n;
    MatExpr::blocks(&[
        vec![vars.sigma.times_identity(n), MatExpr::identity(n)],
        vec![MatExpr::identity(n), vars.x.clone()],
    ])
}

/// `ε(1 − backoff) − tr(…) ≥ 0` as a 1×1 expression. In op1 the trace covers
/// all four trigger weights, in op2 only `Q̃x, Q̃e`.
pub fn build_trace_constraint(vars: &DecisionVars, epsilon: f64, mode: Mode) -> Result<MatExpr> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut tr = vars.qx.trace() + vars.qe.trace();
    if mode == Mode::Op1 {
        let (qpi, qdelta) = vars
            .qpi
            .as_ref()
            .zip(vars.qdelta.as_ref())
            .ok_or_else(|| Error::Assembly("op1 trace needs Q̃π and Q̃δ".into()))?;
        tr = tr + qpi.trace() + qdelta.trace();
    }
    let budget = MatExpr::constant(DMatrix::from_element(1, 1, epsilon * (1.0 - TRACE_BACKOFF)));
    Ok(budget - tr)
}

/// Margin used for the strict relaxation inequalities.
pub fn strict_margin(poly: &PolytopicModel) -> f64 {
    let norm = poly.vertices.iter().map(PlantMatrices::max_norm).fold(0.0, f64::max);
    STRICT_SCALE * (1.0 + norm)
}

/// Full problem: relaxation sums, region constraints, σ-block, trace
/// budget, positivity floors, objective `min σ`.
pub fn assemble(
    poly: &PolytopicModel,
    domain: &[DVector<f64>],
    dims: (usize, usize, usize),
    mode: Mode,
    epsilon: f64,
) -> Result<(LmiProblem, DecisionVars)> {
    let mut problem = LmiProblem::new();
    let vars = DecisionVars::register(&mut problem, mode, dims, poly.r)?;
    if poly.len() != vars.k.len() {
        return Err(Error::Assembly(format!(
            "polytope has {} vertices, expected {}",
            poly.len(),
            vars.k.len()
        )));
    }

    let margin = strict_margin(poly);
    for class in relaxation_classes(poly.r) {
        let mut sum: Option<MatExpr> = None;
        for &(i, j) in &class.members {
            let phi = build_phi(i, j, &vars, poly)?;
            sum = Some(match sum {
                Some(s) => s + phi,
                None => phi,
            });
        }
        let sum = sum.expect("classes are nonempty");
        let d = sum.shape().0;
        problem.add_psd(class.label(), -sum - MatExpr::identity(d).scale(margin))?;
    }

    for (k, b) in domain.iter().enumerate() {
        problem.add_psd(format!("roa[{k}]"), build_roa_lmi(b, &vars)?)?;
    }
    problem.add_psd("sigma_block", build_sigma_lmi(&vars)?)?;
    problem.add_psd("trace", build_trace_constraint(&vars, epsilon, mode)?)?;

    let floor = |e: &MatExpr| e.clone() - MatExpr::identity(e.shape().0).scale(DELTA_PD);
    problem.add_psd("X_pd", floor(&vars.x))?;
    problem.add_psd("Qx_pd", floor(&vars.qx))?;
    problem.add_psd("Qe_pd", floor(&vars.qe))?;
    if let (Some(qpi), Some(qdelta)) = (&vars.qpi, &vars.qdelta) {
        problem.add_psd("Qpi_pd", floor(qpi))?;
        problem.add_psd("Qdelta_pd", floor(qdelta))?;
    }
    problem.minimize(vars.sigma.clone())?;
    Ok((problem, vars))
}
