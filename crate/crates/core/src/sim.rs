//! Closed-loop simulation and the batch experiments built on it.

use std::io::Write;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codesign::{roa_ellipse, EtcDesign};
use crate::dar::DarModel;
use crate::error::{Error, Result};
use crate::etm::{self, EtmState, Scheduler};
use crate::linalg::quad;
use crate::par::{map_ordered, Execution};

/// Final-state norm counted as converged after a finite horizon.
pub const CONVERGENCE_TOL: f64 = 1e-2;

/// Anything that advances the plant one sampling period.
pub trait Plant {
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>>;
}

impl Plant for DarModel {
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.step_dar(x, u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Decision instants are `k = 0..=horizon`.
    pub horizon: usize,
    pub x0: DVector<f64>,
    pub eta0: f64,
    pub scheduler: Scheduler,
}

impl SimConfig {
    pub fn new(x0: DVector<f64>, scheduler: Scheduler) -> Self {
        Self {
            horizon: 100,
            x0,
            eta0: 0.0,
            scheduler,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub k: usize,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub pi: DVector<f64>,
    /// `η_k` before the update at this step.
    pub eta: f64,
    /// Γ with post-decision held values, i.e. the one that drives `η`.
    pub gamma: f64,
    pub gamma_held: Option<f64>,
    pub xi: f64,
    pub event: bool,
    pub v: f64,
    pub w: f64,
    /// Gains evaluated with clamped scheduling values, or state outside the
    /// validity polytope.
    pub excursion: bool,
    /// `|φ2 + ξ2|`, zero up to rounding for a consistent closed loop.
    pub algebraic_residual: f64,
    pub zeta_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub scheduler: Scheduler,
    pub steps: Vec<TraceStep>,
    pub events: Vec<usize>,
    pub inter_event: Vec<usize>,
    pub excursions: Vec<usize>,
    /// Some `x_k` (including the state after the last step) left the
    /// validity polytope.
    pub left_domain: bool,
    /// State after the last decision instant.
    pub terminal_state: DVector<f64>,
}

impl SimTrace {
    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    /// `x_horizon`, the state at the last decision instant.
    pub fn final_state(&self) -> &DVector<f64> {
        &self.steps.last().expect("trace has at least one step").x
    }

    pub fn min_eta(&self) -> f64 {
        self.steps.iter().map(|s| s.eta).fold(f64::INFINITY, f64::min)
    }

    pub fn max_w(&self) -> f64 {
        self.steps.iter().map(|s| s.w).fold(f64::NEG_INFINITY, f64::max)
    }

    /// First `k` at which `W` fails to strictly decrease while `‖x_k‖` is
    /// above `floor`; `None` if it decreases throughout.
    pub fn w_increase(&self, floor: f64) -> Option<usize> {
        self.steps
            .windows(2)
            .find(|w| w[0].x.norm() > floor && !(w[1].w < w[0].w))
            .map(|w| w[0].k)
    }

    pub fn max_algebraic_ratio(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.algebraic_residual / (1.0 + s.zeta_norm))
            .fold(0.0, f64::max)
    }

    /// CSV with columns `k, x1..xn, u1..um, eta, gamma, event, V, W`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.steps.first().map_or(0, |s| s.x.len());
        let m = self.steps.first().map_or(0, |s| s.u.len());
        let mut header = vec!["k".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=m).map(|i| format!("u{i}")));
        header.extend(["eta", "gamma", "event", "V", "W"].map(String::from));
        w.write_record(&header).map_err(csv_err)?;
        for s in &self.steps {
            let mut row = vec![s.k.to_string()];
            row.extend(s.x.iter().map(|v| v.to_string()));
            row.extend(s.u.iter().map(|v| v.to_string()));
            row.push(s.eta.to_string());
            row.push(s.gamma.to_string());
            row.push(u8::from(s.event).to_string());
            row.push(s.v.to_string());
            row.push(s.w.to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> SimSummary {
        SimSummary {
            scheduler: self.scheduler,
            events: self.event_count(),
            event_steps: self.events.clone(),
            inter_event: self.inter_event.clone(),
            final_norm: self.final_state().norm(),
            min_eta: self.min_eta(),
            max_w: self.max_w(),
            w_first_increase: self.w_increase(1e-9),
            excursions: self.excursions.clone(),
            left_domain: self.left_domain,
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// JSON-friendly digest of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub scheduler: Scheduler,
    pub events: usize,
    pub event_steps: Vec<usize>,
    pub inter_event: Vec<usize>,
    pub final_norm: f64,
    pub min_eta: f64,
    pub max_w: f64,
    pub w_first_increase: Option<usize>,
    pub excursions: Vec<usize>,
    pub left_domain: bool,
}

pub fn simulate(model: &DarModel, design: &EtcDesign, config: &SimConfig) -> Result<SimTrace> {
    simulate_with(model, model, design, config)
}

/// Simulation with the controller and trigger built on `model` while the
/// state is advanced by `plant`.
pub fn simulate_with<P: Plant>(model: &DarModel, plant: &P, design: &EtcDesign, config: &SimConfig) -> Result<SimTrace> {
    design.check_model(model)?;
    if config.x0.len() != model.n {
        return Err(Error::Config(format!(
            "x0 has length {}, expected {}",
            config.x0.len(),
            model.n
        )));
    }
    if !model.in_domain(&config.x0) {
        return Err(Error::Config(format!(
            "x0 = {:?} lies outside the validity polytope",
            config.x0.as_slice()
        )));
    }
    if !(config.eta0 >= 0.0) {
        return Err(Error::Config(format!("eta0 must be non-negative, got {}", config.eta0)));
    }

    let mut state = EtmState::new(config.scheduler, config.eta0);
    let mut x = config.x0.clone();
    let mut steps = Vec::with_capacity(config.horizon + 1);
    let mut events = Vec::new();
    let mut excursions = Vec::new();
    let mut left_domain = false;
    for k in 0..=config.horizon {
        let decision = etm::step(&state, design, model, &x, k)?;
        let inside = model.in_domain(&x);
        left_domain |= !inside;
        let excursion = decision.post.clamped || !inside;
        if excursion {
            excursions.push(k);
        }
        if decision.transmit {
            events.push(k);
        }
        let v = quad(&x, &design.p, &x);
        let post = &decision.post;
        steps.push(TraceStep {
            k,
            x: x.clone(),
            u: decision.u.clone(),
            pi: post.pi.clone(),
            eta: state.eta,
            gamma: post.gamma,
            gamma_held: decision.gamma_held,
            xi: post.xi,
            event: decision.transmit,
            v,
            w: v + state.eta,
            excursion,
            algebraic_residual: (&post.phi2 + &post.xi2).amax(),
            zeta_norm: post.zeta.norm(),
        });
        x = plant.step(&x, &decision.u)?;
        state = decision.next;
    }
    left_domain |= !model.in_domain(&x);
    let inter_event = events.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(SimTrace {
        scheduler: config.scheduler,
        steps,
        events,
        inter_event,
        excursions,
        left_domain,
        terminal_state: x,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRun {
    pub run: usize,
    pub x0: Vec<f64>,
    pub events: usize,
    pub final_norm: f64,
    pub min_eta: f64,
    pub w_first_increase: Option<usize>,
    pub left_domain: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub scheduler: Scheduler,
    pub lambda: f64,
    pub theta: f64,
    pub seed: u64,
    pub mean_events: f64,
    pub runs: Vec<BatchRun>,
}

impl BatchReport {
    /// CSV with columns `run, x0_1..x0_n, events`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.runs.first().map_or(0, |r| r.x0.len());
        let mut header = vec!["run".to_string()];
        header.extend((1..=n).map(|i| format!("x0_{i}")));
        header.push("events".into());
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.runs {
            let mut row = vec![r.run.to_string()];
            row.extend(r.x0.iter().map(|v| v.to_string()));
            row.push(r.events.to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `count` seeded initial states inside the region estimate for `eta0`:
/// uniform angle, radius factor `√U` (uniform in `V` level). Drawn up front
/// so results do not depend on execution order.
pub fn sample_initial_states(design: &EtcDesign, eta0: f64, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let region = roa_ellipse(design, eta0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| region.sample_interior(&mut rng)).collect())
}

pub fn run_many(
    model: &DarModel,
    design: &EtcDesign,
    x0s: &[DVector<f64>],
    scheduler: Scheduler,
    horizon: usize,
    eta0: f64,
    exec: Execution,
) -> Result<Vec<SimTrace>> {
    map_ordered(exec, x0s, |index, x0| {
        let config = SimConfig {
            horizon,
            x0: x0.clone(),
            eta0,
            scheduler,
        };
        simulate(model, design, &config).map_err(|e| Error::Run {
            index,
            source: Box::new(e),
        })
    })
    .into_iter()
    .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn batch_events(
    model: &DarModel,
    design: &EtcDesign,
    count: usize,
    horizon: usize,
    scheduler: Scheduler,
    eta0: f64,
    seed: u64,
    exec: Execution,
) -> Result<BatchReport> {
    let x0s = sample_initial_states(design, eta0, count, seed)?;
    let traces = run_many(model, design, &x0s, scheduler, horizon, eta0, exec)?;
    Ok(batch_report(&x0s, &traces, design, scheduler, seed))
}

pub fn batch_report(
    x0s: &[DVector<f64>],
    traces: &[SimTrace],
    design: &EtcDesign,
    scheduler: Scheduler,
    seed: u64,
) -> BatchReport {
    let runs: Vec<BatchRun> = x0s
        .iter()
        .zip(traces)
        .enumerate()
        .map(|(run, (x0, t))| BatchRun {
            run,
            x0: x0.iter().copied().collect(),
            events: t.event_count(),
            final_norm: t.final_state().norm(),
            min_eta: t.min_eta(),
            w_first_increase: t.w_increase(1e-9),
            left_domain: t.left_domain,
        })
        .collect();
    let mean_events = if runs.is_empty() {
        0.0
    } else {
        runs.iter().map(|r| r.events as f64).sum::<f64>() / runs.len() as f64
    };
    BatchReport {
        scheduler,
        lambda: design.lambda,
        theta: design.theta,
        seed,
        mean_events,
        runs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoaRow {
    pub index: usize,
    pub x0: Vec<f64>,
    pub converged: bool,
    pub stayed_in_domain: bool,
    pub w0: f64,
    pub max_w: f64,
    pub w_bounded: bool,
    pub final_norm: f64,
    pub events: usize,
}

/// CSV with one row per boundary trajectory.
pub fn write_roa_csv<W: Write>(rows: &[RoaRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = rows.first().map_or(0, |r| r.x0.len());
    let mut header = vec!["index".to_string()];
    header.extend((1..=n).map(|i| format!("x0_{i}")));
    header.extend(["converged", "stayed_in_domain", "w0", "max_W", "final_norm", "events"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut row = vec![r.index.to_string()];
        row.extend(r.x0.iter().map(|v| v.to_string()));
        row.push(r.converged.to_string());
        row.push(r.stayed_in_domain.to_string());
        row.push(r.w0.to_string());
        row.push(r.max_w.to_string());
        row.push(r.final_norm.to_string());
        row.push(r.events.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Dynamic-trigger runs from `count` points on the boundary of the region
/// estimate with `η₀ = 0`.
pub fn roa_sweep(model: &DarModel, design: &EtcDesign, count: usize, horizon: usize, exec: Execution) -> Result<Vec<RoaRow>> {
    let region = roa_ellipse(design, 0.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x0s = region.boundary_points(count, &mut rng);
    let traces = run_many(model, design, &x0s, Scheduler::Dynamic, horizon, 0.0, exec)?;
    Ok(x0s
        .iter()
        .zip(&traces)
        .enumerate()
        .map(|(index, (x0, t))| {
            let w0 = t.steps[0].w;
            let max_w = t.max_w();
            let final_norm = t.final_state().norm();
            RoaRow {
                index,
                x0: x0.iter().copied().collect(),
                converged: final_norm <= CONVERGENCE_TOL,
                stayed_in_domain: !t.left_domain,
                w0,
                max_w,
                w_bounded: max_w <= w0 + 1e-9,
                final_norm,
                events: t.event_count(),
            }
        })
        .collect())
}

/// Number of `samples` boundary points of the region estimate (η₀ = 0)
/// that fall outside the validity domain.
pub fn boundary_outside_domain(model: &DarModel, design: &EtcDesign, samples: usize, seed: u64) -> Result<usize> {
    let region = roa_ellipse(design, 0.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(region
        .boundary_points(samples, &mut rng)
        .iter()
        .filter(|x| !model.in_domain(x))
        .count())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerComparison {
    pub dynamic: SimTrace,
    pub static_rule: SimTrace,
    pub periodic: SimTrace,
}

impl SchedulerComparison {
    pub fn counts(&self) -> [usize; 3] {
        [
            self.dynamic.event_count(),
            self.static_rule.event_count(),
            self.periodic.event_count(),
        ]
    }
}

pub fn compare_schedulers(
    model: &DarModel,
    design: &EtcDesign,
    x0: &DVector<f64>,
    horizon: usize,
    eta0: f64,
) -> Result<SchedulerComparison> {
    let run = |scheduler| {
        simulate(
            model,
            design,
            &SimConfig {
                horizon,
                x0: x0.clone(),
                eta0,
                scheduler,
            },
        )
    };
    Ok(SchedulerComparison {
        dynamic: run(Scheduler::Dynamic)?,
        static_rule: run(Scheduler::Static)?,
        periodic: run(Scheduler::Periodic)?,
    })
}
