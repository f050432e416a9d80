//! `dar-etc`: co-design, sweeps and closed-loop experiments from the shell.
//!
//! Exit codes: 0 success, 2 certified infeasible, 3 inaccurate or solver
//! failure, 4 input error, 1 anything else.

mod manifest;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde_json::json;

use dar_etc::codesign::{
    self, max_feasible_box, pareto_sweep, pareto_violations, parse_grid, write_pareto_csv,
    DesignParams, EtcDesign,
};
use dar_etc::dar::DarModel;
use dar_etc::etm::Scheduler;
use dar_etc::lmi::Mode;
use dar_etc::par::{with_jobs, Execution};
use dar_etc::sdp::{SolveStatus, SolverSettings};
use dar_etc::sim::{self, SimConfig};
use dar_etc::Error;

use manifest::RunManifest;

/// Environment variable holding JSON overrides for the solver settings.
const SETTINGS_ENV: &str = "ETC_SOLVER_SETTINGS";

#[derive(Parser)]
#[command(name = "dar-etc", version, about = "Event-triggered gain-scheduled control co-design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Largest accepted constraint violation in the independent check.
    #[arg(long)]
    feas_tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<u32>,
    /// Print backend iterations.
    #[arg(long)]
    solver_verbose: bool,
}

#[derive(Args, Clone)]
struct TriggerArgs {
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    #[arg(long, default_value_t = 100.0)]
    theta: f64,
    #[arg(long, default_value_t = 0.0)]
    eta0: f64,
}

impl TriggerArgs {
    fn params(&self) -> DesignParams {
        DesignParams {
            lambda: self.lambda,
            theta: self.theta,
            eta0: self.eta0,
        }
    }
}

/// Optional overrides of the trigger parameters stored in a design.
#[derive(Args, Clone)]
struct TriggerOverride {
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    eta0: Option<f64>,
}

impl TriggerOverride {
    fn apply(&self, design: &EtcDesign) -> dar_etc::Result<EtcDesign> {
        let base = design.params();
        design.with_params(DesignParams {
            lambda: self.lambda.unwrap_or(base.lambda),
            theta: self.theta.unwrap_or(base.theta),
            eta0: self.eta0.unwrap_or(base.eta0),
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the co-design problem and write a design file.
    Synthesize {
        model: PathBuf,
        #[arg(long, default_value = "op1")]
        mode: Mode,
        #[arg(long)]
        epsilon: f64,
        #[command(flatten)]
        trigger: TriggerArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, short, default_value = "design.json")]
        out: PathBuf,
        /// Write the assembled problem in canonical JSON form.
        #[arg(long)]
        dump_lmi: Option<PathBuf>,
    },
    /// ε-constraint sweep; CSV `epsilon,sigma,status,Lambda`.
    Pareto {
        model: PathBuf,
        #[arg(long, default_value = "op1")]
        mode: Mode,
        #[arg(long, default_value = "log:1e-1:1e5:20")]
        eps_grid: String,
        #[command(flatten)]
        trigger: TriggerArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Closed-loop run; CSV `k, x.., u.., eta, gamma, event, V, W`.
    Simulate {
        model: PathBuf,
        design: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x0: Vec<f64>,
        #[arg(long, default_value = "dynamic")]
        scheduler: Scheduler,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        #[command(flatten)]
        trigger: TriggerOverride,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// JSON summary of the run.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Runs from seeded initial states inside the region estimate.
    Batch {
        model: PathBuf,
        design: PathBuf,
        #[arg(long, default_value_t = 60)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "dynamic")]
        scheduler: Scheduler,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        #[command(flatten)]
        trigger: TriggerOverride,
        /// Grid of λ values (e.g. `1e-3,1e-2,1e-1`); with --theta-grid runs
        /// the dynamic trigger for every pair plus a static baseline.
        #[arg(long, requires = "theta_grid")]
        lambda_grid: Option<String>,
        #[arg(long, requires = "lambda_grid")]
        theta_grid: Option<String>,
        /// Per-run CSV `run, x0.., events` (single-cell mode).
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Trajectories from the boundary of the region estimate.
    Roa {
        model: PathBuf,
        design: PathBuf,
        #[arg(long, default_value_t = 24)]
        points: usize,
        /// Boundary samples checked for containment in the validity region.
        #[arg(long, default_value_t = 200)]
        boundary_samples: usize,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Largest feasible box size by bisection.
    Maxbox {
        model: PathBuf,
        #[arg(long, default_value = "op2")]
        mode: Mode,
        #[arg(long, default_value_t = 1274.3)]
        epsilon: f64,
        /// `LO:HI` range of box sizes.
        #[arg(long, default_value = "0.5:2.0")]
        interval: String,
        #[arg(long, default_value_t = 0.01)]
        tol: f64,
        #[command(flatten)]
        trigger: TriggerArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Infeasible(String),
    Inaccurate(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Infeasible(_) => 2,
            Failure::Inaccurate(_) => 3,
            Failure::Input(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Infeasible(m) | Failure::Inaccurate(m) | Failure::Other(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        if let Error::Run { source, .. } = e {
            return match Failure::from(*source) {
                Failure::Input(_) => Failure::Input(msg),
                Failure::Infeasible(_) => Failure::Infeasible(msg),
                Failure::Inaccurate(_) => Failure::Inaccurate(msg),
                Failure::Other(_) => Failure::Other(msg),
            };
        }
        match e {
            Error::Io(_)
            | Error::Json(_)
            | Error::InvalidModel(_)
            | Error::Config(_)
            | Error::DomainViolation { .. }
            | Error::EmptyRegion(_)
            | Error::ProblemTooLarge { .. } => Failure::Input(msg),
            Error::Infeasible(_) => Failure::Infeasible(msg),
            Error::Solver(_) | Error::Recovery { .. } | Error::Bisection(_) => Failure::Inaccurate(msg),
            _ => Failure::Other(msg),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    // Usage errors share the input-error code rather than clap's default 2,
    // which is reserved for infeasible problems.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(4) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synthesize {
            model,
            mode,
            epsilon,
            trigger,
            solver,
            out,
            dump_lmi,
        } => cmd_synthesize(&model, mode, epsilon, &trigger, &solver, &out, dump_lmi.as_deref()),
        Command::Pareto {
            model,
            mode,
            eps_grid,
            trigger,
            solver,
            out,
            jobs,
        } => with_jobs(jobs, || cmd_pareto(&model, mode, &eps_grid, &trigger, &solver, out.as_deref(), jobs)),
        Command::Simulate {
            model,
            design,
            x0,
            scheduler,
            horizon,
            trigger,
            out,
            report,
        } => cmd_simulate(&model, &design, x0, scheduler, horizon, &trigger, out.as_deref(), report.as_deref()),
        Command::Batch {
            model,
            design,
            runs,
            seed,
            scheduler,
            horizon,
            trigger,
            lambda_grid,
            theta_grid,
            out,
            report,
            jobs,
        } => with_jobs(jobs, || {
            let grids = lambda_grid.zip(theta_grid);
            cmd_batch(
                &model, &design, runs, seed, scheduler, horizon, &trigger, grids, out.as_deref(), report.as_deref(), jobs,
            )
        }),
        Command::Roa {
            model,
            design,
            points,
            boundary_samples,
            horizon,
            out,
            report,
            jobs,
        } => with_jobs(jobs, || {
            cmd_roa(&model, &design, points, boundary_samples, horizon, out.as_deref(), report.as_deref(), jobs)
        }),
        Command::Maxbox {
            model,
            mode,
            epsilon,
            interval,
            tol,
            trigger,
            solver,
            report,
            jobs,
        } => with_jobs(jobs, || {
            cmd_maxbox(&model, mode, epsilon, &interval, tol, &trigger, &solver, report.as_deref(), jobs)
        }),
    }
}

/// Defaults, then `ETC_SOLVER_SETTINGS` (JSON object), then flags.
fn solver_settings(args: &SolverArgs) -> CliResult<SolverSettings> {
    let mut s = match std::env::var(SETTINGS_ENV) {
        Ok(text) if !text.trim().is_empty() => serde_json::from_str::<SolverSettings>(&text)
            .map_err(|e| Failure::Input(format!("{SETTINGS_ENV}: {e}")))?,
        _ => SolverSettings::default(),
    };
    if let Some(t) = args.feas_tol {
        s.feas_tol = t;
    }
    if let Some(n) = args.max_iters {
        s.max_iters = n;
    }
    if args.solver_verbose {
        s.verbosity = true;
    }
    if !(s.feas_tol > 0.0) || s.max_iters == 0 {
        return Err(Failure::Input(format!(
            "solver settings need feas_tol > 0 and max_iters > 0, got {s:?}"
        )));
    }
    Ok(s)
}

fn load_model(path: &Path) -> CliResult<DarModel> {
    DarModel::load(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_design(path: &Path, model: &DarModel) -> CliResult<EtcDesign> {
    let d = EtcDesign::load(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    d.check_model(model)?;
    if let Some(prov) = &d.provenance {
        if prov.model_hash != model.content_hash() {
            eprintln!("note: design was synthesized for a different model (hash {})", prov.model_hash);
        }
    }
    Ok(d)
}

/// Write to `path`, or to stdout when absent.
fn emit(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> dar_etc::Result<()>) -> CliResult<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?);
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
        }
    }
    Ok(())
}

fn emit_json(path: Option<&Path>, value: &serde_json::Value) -> CliResult<()> {
    emit(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn status_failure(status: SolveStatus, detail: &str) -> Failure {
    match status {
        SolveStatus::Infeasible => Failure::Infeasible(format!("certified infeasible ({detail})")),
        _ => Failure::Inaccurate(format!("{status} ({detail})")),
    }
}

fn cmd_synthesize(
    model_path: &Path,
    mode: Mode,
    epsilon: f64,
    trigger: &TriggerArgs,
    solver: &SolverArgs,
    out: &Path,
    dump_lmi: Option<&Path>,
) -> CliResult<()> {
    let settings = solver_settings(solver)?;
    let model = load_model(model_path)?;
    let params = trigger.params();
    params.validate()?;
    if !(epsilon > 0.0) {
        return Err(Failure::Input(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut man = RunManifest::start("synthesize", settings);
    man.model_path = Some(model_path.to_path_buf());
    man.model_hash = Some(model.content_hash());
    man.settings.mode = Some(mode.as_str().into());
    man.settings.epsilon = Some(epsilon);
    man.settings.lambda = Some(params.lambda);
    man.settings.theta = Some(params.theta);
    man.settings.eta0 = Some(params.eta0);

    if let Some(path) = dump_lmi {
        let (problem, _) = codesign::build_problem(&model, mode, epsilon)?;
        emit(Some(path), |w| {
            serde_json::to_writer(&mut *w, &problem.to_dump())?;
            Ok(())
        })?;
        man.outputs.push(path.to_path_buf());
    }

    let s = codesign::synthesize(&model, mode, epsilon, &params, &settings)?;
    let summary = json!({
        "status": s.status,
        "mode": mode,
        "epsilon": epsilon,
        "sigma": s.sigma,
        "Lambda": s.design.as_ref().map(|d| d.lambda_metric),
        "max_violation": s.max_violation,
        "iterations": s.iterations,
        "backend_status": s.backend_status,
        "unknowns": s.unknowns,
        "note": s.note,
        "design": s.design.as_ref().map(|_| out),
    });
    emit_json(None, &summary)?;
    match s.design {
        Some(design) => {
            design.save(out)?;
            man.design_path = Some(out.to_path_buf());
            man.outputs.push(out.to_path_buf());
            man.finish()?;
            Ok(())
        }
        None => {
            man.finish()?;
            let detail = match s.status {
                SolveStatus::Infeasible => "backend returned a primal infeasibility certificate".to_string(),
                _ => s.note.unwrap_or(s.backend_status),
            };
            Err(status_failure(s.status, &detail))
        }
    }
}

fn cmd_pareto(
    model_path: &Path,
    mode: Mode,
    grid_spec: &str,
    trigger: &TriggerArgs,
    solver: &SolverArgs,
    out: Option<&Path>,
    jobs: Option<usize>,
) -> CliResult<()> {
    let settings = solver_settings(solver)?;
    let model = load_model(model_path)?;
    let grid = parse_grid(grid_spec)?;
    let params = trigger.params();
    let points = pareto_sweep(&model, &grid, mode, &params, &settings, Execution::Parallel)?;
    emit(out, |w| write_pareto_csv(&points, w))?;
    let feasible = points.iter().filter(|p| p.status.is_success()).count();
    eprintln!("{feasible} of {} points feasible", points.len());
    for (i, j) in pareto_violations(&points, 1e-6) {
        eprintln!(
            "warning: sigma increases from eps={} to eps={}",
            points[i].epsilon, points[j].epsilon
        );
    }
    if let Some(path) = out {
        let mut man = RunManifest::start("pareto", settings);
        man.model_path = Some(model_path.to_path_buf());
        man.model_hash = Some(model.content_hash());
        man.settings.mode = Some(mode.as_str().into());
        man.settings.eps_grid = Some(grid_spec.into());
        man.settings.lambda = Some(params.lambda);
        man.settings.theta = Some(params.theta);
        man.settings.eta0 = Some(params.eta0);
        man.settings.jobs = jobs;
        man.outputs.push(path.to_path_buf());
        man.finish()?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    model_path: &Path,
    design_path: &Path,
    x0: Vec<f64>,
    scheduler: Scheduler,
    horizon: usize,
    trigger: &TriggerOverride,
    out: Option<&Path>,
    report: Option<&Path>,
) -> CliResult<()> {
    let model = load_model(model_path)?;
    let design = trigger.apply(&load_design(design_path, &model)?)?;
    let config = SimConfig {
        horizon,
        x0: DVector::from_vec(x0.clone()),
        eta0: design.eta0,
        scheduler,
    };
    let trace = sim::simulate(&model, &design, &config)?;
    emit(out, |w| trace.write_csv(w))?;
    if !trace.excursions.is_empty() {
        eprintln!("warning: scheduling excursion at steps {:?}", trace.excursions);
    }

    let mut man = RunManifest::start("simulate", SolverSettings::default());
    man.model_path = Some(model_path.to_path_buf());
    man.model_hash = Some(model.content_hash());
    man.design_path = Some(design_path.to_path_buf());
    man.settings.scheduler = Some(scheduler.as_str().into());
    man.settings.horizon = Some(horizon);
    man.settings.x0 = Some(x0);
    man.settings.lambda = Some(design.lambda);
    man.settings.theta = Some(design.theta);
    man.settings.eta0 = Some(design.eta0);
    man.outputs.extend(out.map(Path::to_path_buf));
    if let Some(path) = report {
        let summary = serde_json::to_value(trace.summary()).map_err(Error::from)?;
        emit_json(Some(path), &json!({ "summary": summary, "manifest": RunManifest::sidecar(path) }))?;
        man.outputs.push(path.to_path_buf());
    } else {
        eprintln!("{} events over {} steps", trace.event_count(), horizon + 1);
    }
    man.finish()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_batch(
    model_path: &Path,
    design_path: &Path,
    runs: usize,
    seed: u64,
    scheduler: Scheduler,
    horizon: usize,
    trigger: &TriggerOverride,
    grids: Option<(String, String)>,
    out: Option<&Path>,
    report: Option<&Path>,
    jobs: Option<usize>,
) -> CliResult<()> {
    let model = load_model(model_path)?;
    let design = trigger.apply(&load_design(design_path, &model)?)?;
    let x0s = sim::sample_initial_states(&design, design.eta0, runs, seed)?;
    let exec = Execution::Parallel;

    let mut man = RunManifest::start("batch", SolverSettings::default());
    man.model_path = Some(model_path.to_path_buf());
    man.model_hash = Some(model.content_hash());
    man.design_path = Some(design_path.to_path_buf());
    man.settings.seed = Some(seed);
    man.settings.horizon = Some(horizon);
    man.settings.eta0 = Some(design.eta0);
    man.settings.jobs = jobs;

    let value = match grids {
        Some((lg, tg)) => {
            let lambdas = parse_grid(&lg)?;
            let thetas = parse_grid(&tg)?;
            let mut cells = Vec::new();
            for &lambda in &lambdas {
                for &theta in &thetas {
                    let cell = design.with_params(DesignParams {
                        lambda,
                        theta,
                        eta0: design.eta0,
                    });
                    let entry = match cell {
                        Ok(d) => {
                            let traces = sim::run_many(&model, &d, &x0s, Scheduler::Dynamic, horizon, d.eta0, exec)?;
                            let rep = sim::batch_report(&x0s, &traces, &d, Scheduler::Dynamic, seed);
                            json!({ "lambda": lambda, "theta": theta, "mean_events": rep.mean_events })
                        }
                        Err(e) => json!({ "lambda": lambda, "theta": theta, "error": e.to_string() }),
                    };
                    cells.push(entry);
                }
            }
            let traces = sim::run_many(&model, &design, &x0s, Scheduler::Static, horizon, design.eta0, exec)?;
            let static_rep = sim::batch_report(&x0s, &traces, &design, Scheduler::Static, seed);
            json!({ "runs": runs, "seed": seed, "dynamic": cells, "static_mean_events": static_rep.mean_events })
        }
        None => {
            man.settings.scheduler = Some(scheduler.as_str().into());
            man.settings.lambda = Some(design.lambda);
            man.settings.theta = Some(design.theta);
            let traces = sim::run_many(&model, &design, &x0s, scheduler, horizon, design.eta0, exec)?;
            let rep = sim::batch_report(&x0s, &traces, &design, scheduler, seed);
            if let Some(path) = out {
                emit(Some(path), |w| rep.write_csv(w))?;
                man.outputs.push(path.to_path_buf());
            }
            serde_json::to_value(&rep).map_err(Error::from)?
        }
    };
    emit_json(report, &value)?;
    man.outputs.extend(report.map(Path::to_path_buf));
    man.finish()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_roa(
    model_path: &Path,
    design_path: &Path,
    points: usize,
    boundary_samples: usize,
    horizon: usize,
    out: Option<&Path>,
    report: Option<&Path>,
    jobs: Option<usize>,
) -> CliResult<()> {
    let model = load_model(model_path)?;
    let design = load_design(design_path, &model)?;
    let outside = sim::boundary_outside_domain(&model, &design, boundary_samples, 0)?;
    let rows = sim::roa_sweep(&model, &design, points, horizon, Execution::Parallel)?;
    emit(out, |w| sim::write_roa_csv(&rows, w))?;
    let summary = json!({
        "boundary_samples": boundary_samples,
        "boundary_outside_domain": outside,
        "trajectories": rows.len(),
        "converged": rows.iter().filter(|r| r.converged).count(),
        "stayed_in_domain": rows.iter().filter(|r| r.stayed_in_domain).count(),
        "w_bounded": rows.iter().filter(|r| r.w_bounded).count(),
        "max_W": rows.iter().map(|r| r.max_w).fold(f64::NEG_INFINITY, f64::max),
    });
    match report {
        Some(path) => emit_json(Some(path), &summary)?,
        None => eprintln!("{summary}"),
    }

    let mut man = RunManifest::start("roa", SolverSettings::default());
    man.model_path = Some(model_path.to_path_buf());
    man.model_hash = Some(model.content_hash());
    man.design_path = Some(design_path.to_path_buf());
    man.settings.horizon = Some(horizon);
    man.settings.eta0 = Some(0.0);
    man.settings.jobs = jobs;
    man.outputs.extend(out.map(Path::to_path_buf));
    man.outputs.extend(report.map(Path::to_path_buf));
    man.finish()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_maxbox(
    model_path: &Path,
    mode: Mode,
    epsilon: f64,
    interval: &str,
    tol: f64,
    trigger: &TriggerArgs,
    solver: &SolverArgs,
    report: Option<&Path>,
    jobs: Option<usize>,
) -> CliResult<()> {
    let settings = solver_settings(solver)?;
    let model = load_model(model_path)?;
    let (lo, hi) = interval
        .split_once(':')
        .and_then(|(a, b)| Some((a.trim().parse::<f64>().ok()?, b.trim().parse::<f64>().ok()?)))
        .ok_or_else(|| Failure::Input(format!("bad interval `{interval}` (expected LO:HI)")))?;
    let params = trigger.params();
    let search = max_feasible_box(
        |xbar| model.with_box_size(xbar),
        mode,
        epsilon,
        &params,
        &settings,
        (lo, hi),
        tol,
        Execution::Parallel,
    )?;
    emit_json(report, &serde_json::to_value(&search).map_err(Error::from)?)?;
    let mut man = RunManifest::start("maxbox", settings);
    man.model_path = Some(model_path.to_path_buf());
    man.model_hash = Some(model.content_hash());
    man.settings.mode = Some(mode.as_str().into());
    man.settings.epsilon = Some(epsilon);
    man.settings.lambda = Some(params.lambda);
    man.settings.theta = Some(params.theta);
    man.settings.eta0 = Some(params.eta0);
    man.settings.jobs = jobs;
    man.outputs.extend(report.map(Path::to_path_buf));
    man.finish()?;
    Ok(())
}
