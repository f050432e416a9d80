//! Co-design: solve the optimization problems, recover controller and
//! trigger parameters from the change-of-variables solution, and the
//! experiments built on top (ε sweeps, region estimates, box search).

mod maxbox;
mod pareto;
mod region;

pub use maxbox::{max_feasible_box, BoxProbe, BoxSearch};
pub use pareto::{log_grid, parse_grid, pareto_sweep, pareto_violations, write_pareto_csv, ParetoPoint};
pub use region::{roa_ellipse, RoaEllipse};

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dar::DarModel;
use crate::error::{Error, Result};
use crate::linalg::{condition_number, max_eigenvalue, min_eigenvalue, symmetrize};
use crate::lmi::{self, names, vertex_tag, DecisionVars, Mode};
use crate::sdp::{self, LmiProblem, Solution, SolveStatus, SolverSettings};
use crate::serde_mat;

/// Inversions during recovery refuse matrices at or above this condition.
pub const MAX_RECOVERY_CONDITION: f64 = 1e8;

/// Trigger parameters `(λ, θ, η₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignParams {
    pub lambda: f64,
    pub theta: f64,
    pub eta0: f64,
}

impl Default for DesignParams {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            theta: 100.0,
            eta0: 0.0,
        }
    }
}

impl DesignParams {
    /// `λ ∈ (0, 1)`, `θ > 1/(1 − λ)`, `η₀ ≥ 0`.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Config(format!("lambda must lie in (0, 1), got {}", self.lambda)));
        }
        let bound = 1.0 / (1.0 - self.lambda);
        if !(self.theta > bound) {
            return Err(Error::Config(format!(
                "theta must exceed 1/(1 - lambda) = {bound}, got {}",
                self.theta
            )));
        }
        if !(self.eta0 >= 0.0) || !self.eta0.is_finite() {
            return Err(Error::Config(format!("eta0 must be non-negative, got {}", self.eta0)));
        }
        Ok(())
    }
}

/// Where a design came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub epsilon: f64,
    pub solver: SolverSettings,
    pub model_hash: String,
    pub status: SolveStatus,
    pub max_violation: f64,
    pub backend: String,
    pub tool_version: String,
}

/// Controller gains, trigger weights and the Lyapunov certificate.
///
/// In op2 mode every `L[j]` is an `m×p` zero matrix and `Qpi`, `Qdelta` are
/// `0×0` placeholders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtcDesign {
    pub mode: Mode,
    #[serde(rename = "K", with = "serde_mat::list")]
    pub k: Vec<DMatrix<f64>>,
    #[serde(rename = "L", with = "serde_mat::list")]
    pub l: Vec<DMatrix<f64>>,
    #[serde(rename = "Qx", with = "serde_mat")]
    pub qx: DMatrix<f64>,
    #[serde(rename = "Qe", with = "serde_mat")]
    pub qe: DMatrix<f64>,
    #[serde(rename = "Qpi", with = "serde_mat")]
    pub qpi: DMatrix<f64>,
    #[serde(rename = "Qdelta", with = "serde_mat")]
    pub qdelta: DMatrix<f64>,
    #[serde(rename = "P", with = "serde_mat")]
    pub p: DMatrix<f64>,
    #[serde(rename = "Z", with = "serde_mat")]
    pub z: DMatrix<f64>,
    /// The solver's `X`, kept so `P·X = I` can be audited.
    #[serde(rename = "X", with = "serde_mat")]
    pub x: DMatrix<f64>,
    pub lambda: f64,
    pub theta: f64,
    pub eta0: f64,
    pub sigma: f64,
    #[serde(rename = "Lambda_metric")]
    pub lambda_metric: f64,
    pub provenance: Option<Provenance>,
}

impl EtcDesign {
    pub fn state_dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.k.first().map_or(0, |k| k.nrows())
    }

    pub fn nonlinearity_dim(&self) -> usize {
        self.z.nrows()
    }

    pub fn params(&self) -> DesignParams {
        DesignParams {
            lambda: self.lambda,
            theta: self.theta,
            eta0: self.eta0,
        }
    }

    /// Copy with other trigger parameters; the LMI certificate does not
    /// depend on them as long as `θ > 1/(1 − λ)`.
    pub fn with_params(&self, params: DesignParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            lambda: params.lambda,
            theta: params.theta,
            eta0: params.eta0,
            ..self.clone()
        })
    }

    /// Structural and numerical invariants of a stored design.
    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        let (n, m, p) = (self.state_dim(), self.input_dim(), self.nonlinearity_dim());
        let bad = |what: &str| Err(Error::Config(format!("design: {what}")));
        if self.k.is_empty() || !self.k.len().is_power_of_two() {
            return bad("number of vertex gains must be a positive power of two");
        }
        if self.k.iter().any(|k| k.shape() != (m, n)) {
            return bad("gain K has inconsistent shape");
        }
        if self.l.len() != self.k.len() || self.l.iter().any(|l| l.shape() != (m, p)) {
            return bad("gain L has inconsistent shape");
        }
        if self.x.shape() != (n, n) || self.qx.shape() != (n, n) || self.qe.shape() != (n, n) {
            return bad("state-sized matrices have inconsistent shape");
        }
        let op1_weights = self.mode == Mode::Op1;
        let expect_pi = if op1_weights { (p, p) } else { (0, 0) };
        if self.qpi.shape() != expect_pi || self.qdelta.shape() != expect_pi {
            return bad("Qpi/Qdelta shape does not match the mode");
        }
        if self.mode == Mode::Op2 && self.l.iter().any(|l| l.amax() != 0.0) {
            return bad("op2 design carries nonzero L gains");
        }
        let mut spd = vec![("P", &self.p), ("Qx", &self.qx), ("Qe", &self.qe)];
        if op1_weights {
            spd.push(("Qpi", &self.qpi));
            spd.push(("Qdelta", &self.qdelta));
        }
        for (name, mat) in spd {
            if (mat - mat.transpose()).amax() > 1e-9 * (1.0 + mat.amax()) || min_eigenvalue(mat) <= 0.0 {
                return bad(&format!("{name} is not symmetric positive definite"));
            }
        }
        let residual = (&self.p * &self.x - DMatrix::identity(n, n)).norm();
        if residual > 1e-8 {
            return bad(&format!("P·X deviates from identity by {residual:.3e}"));
        }
        Ok(())
    }

    /// Checks that the design fits the model's dimensions and vertex count.
    pub fn check_model(&self, model: &DarModel) -> Result<()> {
        let dims = (self.state_dim(), self.input_dim(), self.nonlinearity_dim());
        if dims != (model.n, model.m, model.p) || self.k.len() != model.vertex_count() {
            return Err(Error::Config(format!(
                "design (n, m, p) = {dims:?} with {} vertices does not fit model ({}, {}, {}) with {}",
                self.k.len(),
                model.n,
                model.m,
                model.p,
                model.vertex_count()
            )));
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("design serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let d: EtcDesign = serde_json::from_str(s)?;
        d.validate()?;
        Ok(d)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

fn checked_inverse(what: &str, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let condition = condition_number(m);
    if !(condition < MAX_RECOVERY_CONDITION) {
        return Err(Error::Recovery {
            what: what.to_string(),
            condition,
        });
    }
    m.clone().try_inverse().ok_or(Error::Recovery {
        what: what.to_string(),
        condition,
    })
}

fn fetch<'a>(values: &'a BTreeMap<String, DMatrix<f64>>, name: &str) -> Result<&'a DMatrix<f64>> {
    values.get(name).ok_or_else(|| Error::MissingVariable(name.to_string()))
}

/// Undo the change of variables:
/// `K_j = K̃_j X⁻¹`, `L_j = L̃_j Z̃⁻¹`, `P = X⁻¹`, `Z = Z̃⁻ᵀ`,
/// `Qx = Q̃x⁻¹`, `Qe = X⁻¹ Q̃e X⁻¹`, `Qπ = Q̃π⁻¹`, `Qδ = Z̃⁻ᵀ Q̃δ Z̃⁻¹`.
///
/// Accepts only optimal/feasible solutions.
pub fn recover(solution: &Solution, mode: Mode, params: &DesignParams) -> Result<EtcDesign> {
    if !solution.status.is_success() {
        return Err(Error::Solver(format!(
            "cannot recover a design from a `{}` solution",
            solution.status
        )));
    }
    params.validate()?;
    let v = &solution.values;
    let x = fetch(v, names::X)?;
    let n = x.nrows();
    let p_mat = symmetrize(&checked_inverse("X", x)?);
    let zt = fetch(v, names::Z)?;
    let pdim = zt.nrows();
    let zt_inv = checked_inverse("Z_t", zt)?;

    let vertex_count = v.keys().filter(|k| k.starts_with("K_t[")).count();
    if vertex_count == 0 || !vertex_count.is_power_of_two() {
        return Err(Error::MissingVariable("K_t[..]".into()));
    }
    let r = vertex_count.trailing_zeros() as usize;
    let mut k = Vec::with_capacity(vertex_count);
    let mut l = Vec::with_capacity(vertex_count);
    for j in 0..vertex_count {
        let tag = vertex_tag(j, r);
        let kt = fetch(v, &names::k(&tag))?;
        k.push(kt * &p_mat);
        l.push(match mode {
            Mode::Op1 => fetch(v, &names::l(&tag))? * &zt_inv,
            Mode::Op2 => DMatrix::zeros(kt.nrows(), pdim),
        });
    }

    let qx = symmetrize(&checked_inverse("Qx_t", fetch(v, names::QX)?)?);
    let qe = symmetrize(&(&p_mat * fetch(v, names::QE)? * &p_mat));
    let (qpi, qdelta) = match mode {
        Mode::Op1 => (
            symmetrize(&checked_inverse("Qpi_t", fetch(v, names::QPI)?)?),
            symmetrize(&(zt_inv.transpose() * fetch(v, names::QDELTA)? * &zt_inv)),
        ),
        Mode::Op2 => (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)),
    };
    let sigma = fetch(v, names::SIGMA)?[(0, 0)];

    let mut design = EtcDesign {
        mode,
        k,
        l,
        qx,
        qe,
        qpi,
        qdelta,
        p: p_mat,
        z: zt_inv.transpose(),
        x: x.clone(),
        lambda: params.lambda,
        theta: params.theta,
        eta0: params.eta0,
        sigma,
        lambda_metric: 0.0,
        provenance: None,
    };
    debug_assert_eq!(design.state_dim(), n);
    design.lambda_metric = lambda_metric(&design);
    Ok(design)
}

/// `Λ = max{λmax(Qe), λmax(Qδ)} / min{λmin(Qx), λmin(Qπ)}`; op2 designs use
/// `λmax(Qe) / λmin(Qx)`.
pub fn lambda_metric(design: &EtcDesign) -> f64 {
    let mut num = max_eigenvalue(&design.qe);
    let mut den = min_eigenvalue(&design.qx);
    if design.mode == Mode::Op1 && design.qpi.nrows() > 0 {
        num = num.max(max_eigenvalue(&design.qdelta));
        den = den.min(min_eigenvalue(&design.qpi));
    }
    num / den
}

/// Result of one synthesis run.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub status: SolveStatus,
    pub mode: Mode,
    pub epsilon: f64,
    /// Present only for optimal/feasible runs.
    pub sigma: Option<f64>,
    pub design: Option<EtcDesign>,
    pub max_violation: f64,
    pub iterations: u32,
    pub backend_status: String,
    pub unknowns: usize,
    /// Why a solver success was downgraded, if it was.
    pub note: Option<String>,
}

/// Assembled problem for a model, without solving it.
pub fn build_problem(model: &DarModel, mode: Mode, epsilon: f64) -> Result<(LmiProblem, DecisionVars)> {
    lmi::assemble(
        &model.vertexify(),
        &model.domain,
        (model.n, model.m, model.p),
        mode,
        epsilon,
    )
}

pub fn synthesize(
    model: &DarModel,
    mode: Mode,
    epsilon: f64,
    params: &DesignParams,
    settings: &SolverSettings,
) -> Result<Synthesis> {
    params.validate()?;
    let (problem, _) = build_problem(model, mode, epsilon)?;
    let solution = sdp::solve(&problem, settings)?;
    let mut out = Synthesis {
        status: solution.status,
        mode,
        epsilon,
        sigma: None,
        design: None,
        max_violation: solution.max_constraint_violation,
        iterations: solution.iterations,
        backend_status: solution.backend_status.clone(),
        unknowns: problem.scalar_count(),
        note: None,
    };
    if !solution.status.is_success() {
        return Ok(out);
    }
    match recover(&solution, mode, params) {
        Ok(mut design) => {
            design.provenance = Some(Provenance {
                epsilon,
                solver: *settings,
                model_hash: model.content_hash(),
                status: solution.status,
                max_violation: solution.max_constraint_violation,
                backend: "clarabel".into(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
            });
            out.sigma = Some(design.sigma);
            out.design = Some(design);
        }
        Err(e @ Error::Recovery { .. }) => {
            out.status = SolveStatus::Inaccurate;
            out.note = Some(e.to_string());
        }
        Err(e) => return Err(e),
    }
    Ok(out)
}

pub fn solve_op1(model: &DarModel, epsilon: f64, params: &DesignParams, settings: &SolverSettings) -> Result<Synthesis> {
    synthesize(model, Mode::Op1, epsilon, params, settings)
}

pub fn solve_op2(model: &DarModel, epsilon: f64, params: &DesignParams, settings: &SolverSettings) -> Result<Synthesis> {
    synthesize(model, Mode::Op2, epsilon, params, settings)
}
