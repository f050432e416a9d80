//! Event-triggering runtime: gain scheduling, the trigger function with its
//! asynchronism compensation, and the transmission decision.
//!
//! Notation: `x̂, π̂` are the values held by the controller since the last
//! transmission, `e = x̂ − x`, `δ = π̂ − π`, and the control input is
//! `u = K(x̂) x̂ + L(x̂) π̂`. Gains scheduled at the current state differ from
//! those at the held state; that mismatch enters the closed loop as
//!
//! ```text
//! ξ1 = A3(x) [ (K(x̂) − K(x)) x̂ + (L(x̂) − L(x)) π̂ ]
//! ξ2 = Ω3(x) [ same bracket ]
//! ξ  = 2 φ1ᵀ P ξ1 + ξ1ᵀ P ξ1 + 2 πᵀ Z ξ2
//! Γ  = xᵀQx x + πᵀQπ π − eᵀQe e − δᵀQδ δ − ξ
//! ```
//!
//! (op2 designs drop the `π`/`δ` weights and have `L ≡ 0`).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::codesign::EtcDesign;
use crate::dar::{solve_checked, DarModel};
use crate::error::{Error, Result};
use crate::linalg::quad;
use crate::lmi::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheduler {
    Dynamic,
    Static,
    Periodic,
}

impl Scheduler {
    pub const ALL: [Scheduler; 3] = [Scheduler::Dynamic, Scheduler::Static, Scheduler::Periodic];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheduler::Dynamic => "dynamic",
            Scheduler::Static => "static",
            Scheduler::Periodic => "periodic",
        }
    }
}

impl std::fmt::Display for Scheduler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheduler {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dynamic" => Ok(Scheduler::Dynamic),
            "static" => Ok(Scheduler::Static),
            "periodic" => Ok(Scheduler::Periodic),
            other => Err(format!("unknown scheduler `{other}` (dynamic, static or periodic)")),
        }
    }
}

fn blend(mats: &[DMatrix<f64>], alpha: &[f64]) -> DMatrix<f64> {
    let mut out = mats[0].scale(0.0);
    for (a, m) in alpha.iter().zip(mats) {
        out += m * *a;
    }
    out
}

/// `(K(x), L(x))` as convex combinations of the vertex gains. Fails outside
/// the scheduling bounds.
pub fn scheduled_gains(design: &EtcDesign, model: &DarModel, x: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let alpha = model.weights(x)?;
    Ok((blend(&design.k, &alpha), blend(&design.l, &alpha)))
}

/// Like [`scheduled_gains`] but with the scheduling values clamped into
/// their bounds. The flag reports whether clamping was needed.
pub fn scheduled_gains_clamped(
    design: &EtcDesign,
    model: &DarModel,
    x: &DVector<f64>,
) -> (DMatrix<f64>, DMatrix<f64>, bool) {
    let (alpha, clamped) = model.weights_clamped(x);
    (blend(&design.k, &alpha), blend(&design.l, &alpha), clamped)
}

/// Control input and held nonlinearity vector for a transmitted state,
/// solving `u = K x̂ + L π̂` and `0 = Ω1 x̂ + Ω2 π̂ + Ω3 u` together:
/// `(Ω2 + Ω3 L) π̂ = −(Ω1 + Ω3 K) x̂`.
pub fn control_input(design: &EtcDesign, model: &DarModel, x_hat: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let (u, pi_hat, _) = control_input_flagged(design, model, x_hat)?;
    Ok((u, pi_hat))
}

fn control_input_flagged(
    design: &EtcDesign,
    model: &DarModel,
    x_hat: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>, bool)> {
    let (k, l, clamped) = scheduled_gains_clamped(design, model, x_hat);
    let mats = model.matrices_at(x_hat);
    let pi_hat = if model.p == 0 {
        DVector::zeros(0)
    } else {
        let lhs = &mats.omega2 + &mats.omega3 * &l;
        let rhs = -((&mats.omega1 + &mats.omega3 * &k) * x_hat);
        solve_checked(&lhs, &rhs)?
    };
    let u = &k * x_hat + &l * &pi_hat;
    Ok((u, pi_hat, clamped))
}

/// Every intermediate of one trigger-function evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EtmEvaluation {
    pub u: DVector<f64>,
    pub pi: DVector<f64>,
    pub e: DVector<f64>,
    pub delta: DVector<f64>,
    /// `(x, π, e, δ)` stacked.
    pub zeta: DVector<f64>,
    pub phi1: DVector<f64>,
    pub phi2: DVector<f64>,
    pub xi1: DVector<f64>,
    pub xi2: DVector<f64>,
    pub xi: f64,
    pub gamma: f64,
    /// Gains were evaluated with clamped scheduling values.
    pub clamped: bool,
}

pub fn evaluate_gamma(
    design: &EtcDesign,
    model: &DarModel,
    x: &DVector<f64>,
    x_hat: &DVector<f64>,
    pi_hat: &DVector<f64>,
) -> Result<EtmEvaluation> {
    let (kx, lx, c1) = scheduled_gains_clamped(design, model, x);
    let (kh, lh, c2) = scheduled_gains_clamped(design, model, x_hat);
    let u = &kh * x_hat + &lh * pi_hat;
    let mats = model.matrices_at(x);
    let pi = model.eval_pi_with(&mats, x, &u)?;
    let e = x_hat - x;
    let delta = pi_hat - &pi;

    let phi1 = (&mats.a1 + &mats.a3 * &kx) * x
        + &mats.a3 * (&kx * &e)
        + (&mats.a2 + &mats.a3 * &lx) * &pi
        + &mats.a3 * (&lx * &delta);
    let phi2 = (&mats.omega1 + &mats.omega3 * &kx) * x
        + &mats.omega3 * (&kx * &e)
        + (&mats.omega2 + &mats.omega3 * &lx) * &pi
        + &mats.omega3 * (&lx * &delta);
    let mismatch = (&kh - &kx) * x_hat + (&lh - &lx) * pi_hat;
    let xi1 = &mats.a3 * &mismatch;
    let xi2 = &mats.omega3 * &mismatch;
    let xi = 2.0 * quad(&phi1, &design.p, &xi1) + quad(&xi1, &design.p, &xi1) + 2.0 * quad(&pi, &design.z, &xi2);

    let mut gamma = quad(x, &design.qx, x) - quad(&e, &design.qe, &e) - xi;
    if design.mode == Mode::Op1 {
        gamma += quad(&pi, &design.qpi, &pi) - quad(&delta, &design.qdelta, &delta);
    }
    let zeta = DVector::from_iterator(
        x.len() + 2 * pi.len() + e.len(),
        x.iter().chain(pi.iter()).chain(e.iter()).chain(delta.iter()).copied(),
    );
    Ok(EtmEvaluation {
        u,
        pi,
        e,
        delta,
        zeta,
        phi1,
        phi2,
        xi1,
        xi2,
        xi,
        gamma,
        clamped: c1 || c2,
    })
}

/// Runtime state of the trigger.
#[derive(Debug, Clone, PartialEq)]
pub struct EtmState {
    pub scheduler: Scheduler,
    /// Internal variable; identically zero for static and periodic rules.
    pub eta: f64,
    pub x_hat: Option<DVector<f64>>,
    pub pi_hat: Option<DVector<f64>>,
    pub last_event_k: Option<usize>,
}

impl EtmState {
    pub fn new(scheduler: Scheduler, eta0: f64) -> Self {
        Self {
            scheduler,
            eta: if scheduler == Scheduler::Dynamic { eta0 } else { 0.0 },
            x_hat: None,
            pi_hat: None,
            last_event_k: None,
        }
    }
}

/// Outcome of one decision instant.
#[derive(Debug, Clone)]
pub struct EtmStep {
    pub transmit: bool,
    pub u: DVector<f64>,
    /// Γ with the values held before the decision (`None` at the first step).
    pub gamma_held: Option<f64>,
    /// Evaluation with the post-decision held values; its Γ drives `η`.
    pub post: EtmEvaluation,
    pub next: EtmState,
}

/// One decision at step `k`:
/// 1. evaluate Γ with the held values,
/// 2. transmit if the rule is violated (always at the first step),
/// 3. update `η ← (1 − λ) η + Γ_post` with the post-decision held values.
pub fn step(state: &EtmState, design: &EtcDesign, model: &DarModel, x: &DVector<f64>, k: usize) -> Result<EtmStep> {
    if let Some(last) = state.last_event_k {
        if k <= last {
            return Err(Error::Config(format!("step {k} does not follow last event {last}")));
        }
    }
    if state.scheduler == Scheduler::Dynamic {
        let bound = 1.0 / (1.0 - design.lambda);
        if !(design.lambda > 0.0 && design.lambda < 1.0) || !(design.theta > bound) {
            return Err(Error::Config(format!(
                "dynamic trigger needs lambda in (0, 1) and theta > {bound}, got lambda = {}, theta = {}",
                design.lambda, design.theta
            )));
        }
    }

    let held = match (&state.x_hat, &state.pi_hat) {
        (Some(xh), Some(ph)) if k > 0 => Some(evaluate_gamma(design, model, x, xh, ph)?),
        _ => None,
    };
    let transmit = match (&held, state.scheduler) {
        (None, _) => true,
        (_, Scheduler::Periodic) => true,
        (Some(h), Scheduler::Static) => h.gamma < 0.0,
        (Some(h), Scheduler::Dynamic) => state.eta + design.theta * h.gamma < 0.0,
    };

    let mut next = state.clone();
    let post = if transmit {
        let (_, pi_hat, _) = control_input_flagged(design, model, x)?;
        next.x_hat = Some(x.clone());
        next.pi_hat = Some(pi_hat.clone());
        next.last_event_k = Some(k);
        evaluate_gamma(design, model, x, x, &pi_hat)?
    } else {
        held.clone().expect("held evaluation exists when not transmitting")
    };
    if state.scheduler == Scheduler::Dynamic {
        next.eta = (1.0 - design.lambda) * state.eta + post.gamma;
    }
    Ok(EtmStep {
        transmit,
        u: post.u.clone(),
        gamma_held: held.map(|h| h.gamma),
        post,
        next,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dar::cubic_benchmark;

    fn toy_design(mode: Mode) -> EtcDesign {
        let k: Vec<DMatrix<f64>> = (0..4)
            .map(|j| DMatrix::from_row_slice(1, 2, &[-1.0 - j as f64, -2.0 + 0.5 * j as f64]))
            .collect();
        let l: Vec<DMatrix<f64>> = (0..4)
            .map(|j| match mode {
                Mode::Op1 => DMatrix::from_row_slice(1, 2, &[0.1 * j as f64, -0.2]),
                Mode::Op2 => DMatrix::zeros(1, 2),
            })
            .collect();
        let pd = |a: f64, b: f64| DMatrix::from_row_slice(2, 2, &[a, b, b, 2.0 * a]);
        let (qpi, qdelta) = match mode {
            Mode::Op1 => (pd(0.5, 0.1), pd(0.3, 0.0)),
            Mode::Op2 => (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)),
        };
        let p = pd(2.0, 0.3);
        EtcDesign {
            mode,
            k,
            l,
            qx: pd(1.0, 0.2),
            qe: pd(0.7, -0.1),
            qpi,
            qdelta,
            x: p.clone().try_inverse().unwrap(),
            p,
            z: DMatrix::from_row_slice(2, 2, &[-0.5, 0.1, 0.0, -0.3]),
            lambda: 1e-3,
            theta: 100.0,
            eta0: 0.0,
            sigma: 1.0,
            lambda_metric: 1.0,
            provenance: None,
        }
    }

    fn v(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn gains_at_vertex_and_midpoint() {
        let model = cubic_benchmark(0.1, 2.0);
        let d = toy_design(Mode::Op1);
        let (k, l) = scheduled_gains(&d, &model, &v(2.0, -2.0)).unwrap();
        assert_eq!(k, d.k[2]);
        assert_eq!(l, d.l[2]);
        let (k0, _) = scheduled_gains(&d, &model, &v(0.0, 0.0)).unwrap();
        let mean = d.k.iter().fold(DMatrix::zeros(1, 2), |acc, m| acc + m) / 4.0;
        assert!((k0 - mean).amax() < 1e-15);
        assert!(scheduled_gains(&d, &model, &v(2.5, 0.0)).is_err());
        let (_, _, clamped) = scheduled_gains_clamped(&d, &model, &v(2.5, 0.0));
        assert!(clamped);
        let op2 = toy_design(Mode::Op2);
        let (_, l2) = scheduled_gains(&op2, &model, &v(0.3, -1.1)).unwrap();
        assert_eq!(l2.amax(), 0.0);
    }

    #[test]
    fn control_input_squares_state() {
        let model = cubic_benchmark(0.1, 2.0);
        let d = toy_design(Mode::Op1);
        let xh = v(0.4, -1.3);
        let (u, pi_hat) = control_input(&d, &model, &xh).unwrap();
        assert!((pi_hat - v(0.16, 1.69)).amax() < 1e-14);
        let (k, l) = scheduled_gains(&d, &model, &xh).unwrap();
        assert!((u - (&k * &xh + &l * v(0.16, 1.69))).amax() < 1e-14);
        let (u0, _) = control_input(&d, &model, &v(0.0, 0.0)).unwrap();
        assert_eq!(u0.amax(), 0.0);
    }

    #[test]
    fn fresh_transmission_gamma() {
        let model = cubic_benchmark(0.1, 2.0);
        for mode in [Mode::Op1, Mode::Op2] {
            let d = toy_design(mode);
            let x = v(0.7, 1.1);
            let (_, pi_hat) = control_input(&d, &model, &x).unwrap();
            let ev = evaluate_gamma(&d, &model, &x, &x, &pi_hat).unwrap();
            assert_eq!(ev.xi, 0.0);
            assert_eq!(ev.xi1.amax(), 0.0);
            let mut expected = quad(&x, &d.qx, &x);
            if mode == Mode::Op1 {
                expected += quad(&ev.pi, &d.qpi, &ev.pi);
            }
            assert!((ev.gamma - expected).abs() < 1e-12);
            assert!(ev.gamma >= 0.0);
            let zero = v(0.0, 0.0);
            let ev0 = evaluate_gamma(&d, &model, &zero, &zero, &DVector::zeros(2)).unwrap();
            assert_eq!(ev0.gamma, 0.0);
        }
    }

    #[test]
    fn algebraic_identity_holds_off_transmission() {
        let model = cubic_benchmark(0.1, 2.0);
        let d = toy_design(Mode::Op1);
        let xh = v(0.9, -0.6);
        let (_, ph) = control_input(&d, &model, &xh).unwrap();
        let ev = evaluate_gamma(&d, &model, &v(0.5, 0.2), &xh, &ph).unwrap();
        assert!((&ev.phi2 + &ev.xi2).amax() <= 1e-12 * (1.0 + ev.zeta.norm()));
    }

    #[test]
    fn origin_never_retransmits() {
        let model = cubic_benchmark(0.1, 2.0);
        let d = toy_design(Mode::Op1);
        let mut st = EtmState::new(Scheduler::Dynamic, 0.5);
        let zero = v(0.0, 0.0);
        for k in 0..20 {
            let s = step(&st, &d, &model, &zero, k).unwrap();
            assert_eq!(s.transmit, k == 0);
            assert!((s.next.eta - 0.5 * (1.0 - d.lambda).powi(k as i32 + 1)).abs() < 1e-15);
            st = s.next;
        }
    }

    #[test]
    fn periodic_always_transmits_and_theta_checked() {
        let model = cubic_benchmark(0.1, 2.0);
        let mut d = toy_design(Mode::Op2);
        let mut st = EtmState::new(Scheduler::Periodic, 0.0);
        for k in 0..5 {
            let s = step(&st, &d, &model, &v(0.1 * k as f64, 0.2), k).unwrap();
            assert!(s.transmit);
            st = s.next;
        }
        d.theta = 1.0;
        assert!(step(&EtmState::new(Scheduler::Dynamic, 0.0), &d, &model, &v(0.0, 0.0), 0).is_err());
        assert!(step(&EtmState::new(Scheduler::Static, 0.0), &d, &model, &v(0.0, 0.0), 0).is_ok());
    }
}
