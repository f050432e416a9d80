//! End-to-end acceptance checks on the bundled benchmark model. Prints one
//! PASS/FAIL line per criterion and exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dar_etc::codesign::{build_problem, EtcDesign};
use dar_etc::dar::DarModel;
use dar_etc::etm::Scheduler;
use dar_etc::linalg::{max_eigenvalue, min_eigenvalue};
use dar_etc::lmi::{build_phi, names, vertex_tag, DecisionVars, Mode};
use dar_etc::par::Execution;
use dar_etc::sdp::LmiProblem;
use dar_etc::sim::{boundary_outside_domain, compare_schedulers, roa_sweep, run_many, sample_initial_states, SimTrace};

const EPSILON: f64 = 1274.3;
const X0: [f64; 2] = [0.6573, 1.4554];
const HORIZON: usize = 100;
const T: f64 = 0.1;

fn model_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/models/paper_sec4.json")
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dar-etc"))
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Ctx {
    dir: tempfile::TempDir,
    model: DarModel,
    design: Option<EtcDesign>,
    /// Trajectories of criteria 4 and 5, reused by 6, 7 and 10.
    scheduler_runs: Vec<SimTrace>,
    batch_runs: Vec<SimTrace>,
}

/// Decision values that reproduce a stored design: the inverse of the
/// recovery map applied to the design file.
fn tilde_values(d: &EtcDesign, problem: &LmiProblem, r: usize) -> Vec<f64> {
    let x = d.x.clone();
    let zt = d.z.transpose().try_inverse().expect("Z invertible");
    let mut v = BTreeMap::new();
    v.insert(names::X.to_string(), x.clone());
    v.insert(names::QX.to_string(), d.qx.clone().try_inverse().unwrap());
    v.insert(names::QE.to_string(), &x * &d.qe * &x);
    v.insert(names::Z.to_string(), zt.clone());
    v.insert(names::SIGMA.to_string(), DMatrix::from_element(1, 1, d.sigma));
    for j in 0..1 << r {
        let tag = vertex_tag(j, r);
        v.insert(names::k(&tag), &d.k[j] * &x);
        if d.mode == Mode::Op1 {
            v.insert(names::l(&tag), &d.l[j] * &zt);
        }
    }
    if d.mode == Mode::Op1 {
        v.insert(names::QPI.to_string(), d.qpi.clone().try_inverse().unwrap());
        v.insert(names::QDELTA.to_string(), zt.transpose() * &d.qdelta * &zt);
    }
    let sym = |m: &DMatrix<f64>| (m + m.transpose()) * 0.5;
    for block in &problem.variables {
        if block.symmetric {
            let m = sym(&v[&block.name]);
            v.insert(block.name.clone(), m);
        }
    }
    problem.pack(&v).unwrap()
}

fn criterion_1(ctx: &mut Ctx) -> Outcome {
    let out = ctx.dir.path().join("design_op1.json");
    let start = Instant::now();
    let status = bin()
        .args(["synthesize", model_path().to_str().unwrap(), "--mode", "op1", "--epsilon", "1274.3", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    let elapsed = start.elapsed();
    if status.status.code() != Some(0) {
        return outcome(false, format!("exit {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr)));
    }
    let design = match EtcDesign::load(&out) {
        Ok(d) => d,
        Err(e) => return outcome(false, format!("design file: {e}")),
    };
    // Re-check every constraint at the values implied by the saved design.
    let (problem, _) = build_problem(&ctx.model, Mode::Op1, EPSILON).unwrap();
    let flat = tilde_values(&design, &problem, ctx.model.r());
    let mut worst = f64::INFINITY;
    let mut worst_label = String::new();
    for c in &problem.constraints {
        let m = c.expr.eval(&flat);
        let e = if m.nrows() == 1 { m[(0, 0)] } else { min_eigenvalue(&m) };
        if e < worst {
            worst = e;
            worst_label = c.label.clone();
        }
    }
    let violation = (-worst).max(0.0);
    let pass = violation <= 1e-7 && elapsed < Duration::from_secs(60);
    let detail = format!(
        "sigma = {:.6}, {} constraints, max violation {violation:.2e} (tightest {worst_label}), {:.2} s",
        design.sigma,
        problem.constraints.len(),
        elapsed.as_secs_f64()
    );
    ctx.design = Some(design);
    outcome(pass, detail)
}

fn criterion_2(ctx: &mut Ctx) -> Outcome {
    let start = Instant::now();
    let full = bin()
        .args(["synthesize", model_path().to_str().unwrap(), "--mode", "op2", "--epsilon", "1274.3", "--out"])
        .arg(ctx.dir.path().join("design_op2.json"))
        .output()
        .unwrap();
    let report = ctx.dir.path().join("maxbox.json");
    let search = bin()
        .args(["maxbox", model_path().to_str().unwrap(), "--mode", "op2", "--interval", "0.5:2.0", "--report"])
        .arg(&report)
        .output()
        .unwrap();
    let elapsed = start.elapsed();
    if search.status.code() != Some(0) {
        return outcome(false, format!("maxbox exit {:?}: {}", search.status.code(), String::from_utf8_lossy(&search.stderr)));
    }
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let best = v["last_feasible"].as_f64().unwrap_or(f64::NAN);
    let first_bad = v["first_infeasible"].as_f64();
    let infeasible = full.status.code() == Some(2);
    let pass = infeasible && (1.43..=1.63).contains(&best) && elapsed < Duration::from_secs(300);
    outcome(
        pass,
        format!(
            "op2 at 2.0 exit {:?} (2 = infeasible); x* = {best:.4} (next probe {first_bad:?}); {:.1} s",
            full.status.code(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_3(ctx: &mut Ctx) -> Outcome {
    let csv = ctx.dir.path().join("pareto.csv");
    let run = bin()
        .args(["pareto", model_path().to_str().unwrap(), "--mode", "op1", "--eps-grid", "log:1e-1:1e5:20", "--out"])
        .arg(&csv)
        .output()
        .unwrap();
    if run.status.code() != Some(0) {
        return outcome(false, format!("exit {:?}", run.status.code()));
    }
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    let header_ok = lines.next() == Some("epsilon,sigma,status,Lambda");
    let mut feasible: Vec<(f64, f64)> = Vec::new();
    let mut rows = 0;
    for line in lines {
        rows += 1;
        let f: Vec<&str> = line.split(',').collect();
        if matches!(f[2], "optimal" | "feasible") {
            feasible.push((f[0].parse().unwrap(), f[1].parse().unwrap()));
        }
    }
    let bad: Vec<_> = feasible
        .windows(2)
        .filter(|w| w[1].1 > w[0].1 * (1.0 + 1e-6))
        .map(|w| (w[0].0, w[1].0))
        .collect();
    let pass = header_ok && rows == 20 && feasible.len() >= 2 && bad.is_empty();
    outcome(
        pass,
        format!(
            "{} of {rows} points feasible, sigma {:.4} -> {:.4}, increases at {bad:?}",
            feasible.len(),
            feasible.first().map_or(f64::NAN, |p| p.1),
            feasible.last().map_or(f64::NAN, |p| p.1)
        ),
    )
}

fn criterion_4(ctx: &mut Ctx) -> Outcome {
    let Some(d) = ctx.design.as_ref() else {
        return outcome(false, "no design from criterion 1".into());
    };
    let cmp = compare_schedulers(&ctx.model, d, &DVector::from_column_slice(&X0), HORIZON, 0.0).unwrap();
    let [dy, st, pe] = cmp.counts();
    let norms = [
        cmp.dynamic.final_state().norm(),
        cmp.static_rule.final_state().norm(),
        cmp.periodic.final_state().norm(),
    ];
    let counts_ok = pe == 101 && (20..=40).contains(&dy) && (25..=45).contains(&st) && dy <= st && st < pe;
    let norm_ok = norms[0] <= 1e-2;
    ctx.scheduler_runs = vec![cmp.dynamic, cmp.static_rule, cmp.periodic];
    outcome(
        counts_ok && norm_ok,
        format!(
            "events dynamic/static/periodic = {dy}/{st}/{pe} [{}]; |x_100| = {:.4} (dynamic), {:.4} (static), {:.4} (periodic) vs 1e-2 [{}]",
            if counts_ok { "ok" } else { "out of range" },
            norms[0],
            norms[1],
            norms[2],
            if norm_ok { "ok" } else { "not met" }
        ),
    )
}

fn criterion_5(ctx: &mut Ctx) -> Outcome {
    let Some(d) = ctx.design.as_ref() else {
        return outcome(false, "no design from criterion 1".into());
    };
    let x0s = sample_initial_states(d, 0.0, 60, 0).unwrap();
    let dynamic = run_many(&ctx.model, d, &x0s, Scheduler::Dynamic, HORIZON, 0.0, Execution::Parallel).unwrap();
    let static_rule = run_many(&ctx.model, d, &x0s, Scheduler::Static, HORIZON, 0.0, Execution::Parallel).unwrap();
    let mean = |t: &[SimTrace]| t.iter().map(|t| t.event_count() as f64).sum::<f64>() / t.len() as f64;
    let (md, ms) = (mean(&dynamic), mean(&static_rule));
    ctx.batch_runs = dynamic.into_iter().chain(static_rule).collect();
    outcome(md <= ms, format!("60 runs, seed 0: mean events dynamic {md:.2} vs static {ms:.2}"))
}

fn all_runs(ctx: &Ctx) -> impl Iterator<Item = &SimTrace> {
    ctx.scheduler_runs.iter().chain(&ctx.batch_runs)
}

fn criterion_6(ctx: &mut Ctx) -> Outcome {
    let n = all_runs(ctx).count();
    let min_eta = all_runs(ctx).map(SimTrace::min_eta).fold(f64::INFINITY, f64::min);
    outcome(n > 0 && min_eta >= -1e-12, format!("{n} trajectories, min eta = {min_eta:.3e}"))
}

fn criterion_7(ctx: &mut Ctx) -> Outcome {
    let mut checked = 0;
    let mut failures = Vec::new();
    for (idx, t) in all_runs(ctx).enumerate() {
        checked += 1;
        for w in t.steps.windows(2) {
            if w[0].x.norm() <= 1e-9 {
                break;
            }
            if !(w[1].w < w[0].w) {
                failures.push((idx, t.scheduler, w[0].k, w[1].w - w[0].w));
                break;
            }
        }
    }
    outcome(
        checked > 0 && failures.is_empty(),
        format!("{checked} trajectories, strict W decrease broken in {}: {:?}", failures.len(), &failures[..failures.len().min(5)]),
    )
}

fn criterion_8(ctx: &mut Ctx) -> Outcome {
    let Some(d) = ctx.design.as_ref() else {
        return outcome(false, "no design from criterion 1".into());
    };
    let outside = boundary_outside_domain(&ctx.model, d, 200, 0).unwrap();
    let rows = roa_sweep(&ctx.model, d, 24, HORIZON, Execution::Parallel).unwrap();
    let converged = rows.iter().filter(|r| r.converged).count();
    let stayed = rows.iter().filter(|r| r.stayed_in_domain).count();
    let max_w = rows.iter().map(|r| r.max_w).fold(f64::NEG_INFINITY, f64::max);
    let worst_norm = rows.iter().map(|r| r.final_norm).fold(0.0, f64::max);
    let pass = outside == 0 && converged == 24 && stayed == 24 && max_w <= 1.0 + 1e-9;
    outcome(
        pass,
        format!(
            "boundary points outside domain {outside}/200; converged {converged}/24 (worst |x_100| = {worst_norm:.4}); stayed in domain {stayed}/24; max W = {max_w:.12}"
        ),
    )
}

fn bits(k: usize, r: usize) -> Vec<u8> {
    (0..r).map(|q| ((k >> (r - 1 - q)) & 1) as u8).collect()
}

fn criterion_9(ctx: &mut Ctx) -> Outcome {
    let Some(d) = ctx.design.as_ref() else {
        return outcome(false, "no design from criterion 1".into());
    };
    let (problem, vars): (LmiProblem, DecisionVars) = build_problem(&ctx.model, Mode::Op1, EPSILON).unwrap();
    let flat = tilde_values(d, &problem, ctx.model.r());
    let poly = ctx.model.vertexify();
    let r = poly.r;
    let count = poly.len();
    let phi: Vec<Vec<DMatrix<f64>>> = (0..count)
        .map(|i| (0..count).map(|j| build_phi(i, j, &vars, &poly).unwrap().eval(&flat)).collect())
        .collect();
    // Σ_m Σ_n α_m α_n Σ_{(i,j) position-wise permutation of (m,n)} Φ_ij.
    let perms = |m: usize, n: usize| -> Vec<(usize, usize)> {
        let (bm, bn) = (bits(m, r), bits(n, r));
        let mut out = Vec::new();
        for i in 0..count {
            for j in 0..count {
                let (bi, bj) = (bits(i, r), bits(j, r));
                let ok = (0..r).all(|q| {
                    let (mut a, mut b) = ([bi[q], bj[q]], [bm[q], bn[q]]);
                    a.sort();
                    b.sort();
                    a == b
                });
                if ok {
                    out.push((i, j));
                }
            }
        }
        out
    };
    let mut worst = f64::NEG_INFINITY;
    let mut worst_at = (0.0, 0.0);
    for a in 0..21 {
        for b in 0..21 {
            let x = DVector::from_vec(vec![-2.0 + 0.2 * a as f64, -2.0 + 0.2 * b as f64]);
            let alpha = ctx.model.weights(&x).unwrap();
            let dim = phi[0][0].nrows();
            let mut total = DMatrix::zeros(dim, dim);
            for m in 0..count {
                for n in 0..count {
                    let w = alpha[m] * alpha[n];
                    for (i, j) in perms(m, n) {
                        total += &phi[i][j] * w;
                    }
                }
            }
            let e = max_eigenvalue(&total);
            if e > worst {
                worst = e;
                worst_at = (x[0], x[1]);
            }
        }
    }
    outcome(worst < 0.0, format!("441 grid points, max eigenvalue {worst:.3e} at {worst_at:?}"))
}

fn criterion_10(ctx: &mut Ctx) -> Outcome {
    let model = &ctx.model;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut step_dev: f64 = 0.0;
    let mut x = DVector::from_vec(vec![0.3, -0.2]);
    for _ in 0..1000 {
        // Random steps, re-seeded inside the box when the state leaves it.
        if x.amax() > 2.0 {
            x = DVector::from_fn(2, |_, _| rng.random_range(-2.0..=2.0));
        }
        let u = DVector::from_element(1, rng.random_range(-3.0..3.0));
        let next = model.step_dar(&x, &u).unwrap();
        let e1 = x[0] + T * x[1];
        let e2 = x[1] + T * x[0] + T * x[0].powi(3) + 2.0 * T * x[1] + 8.0 * T * x[1].powi(3) + T * u[0];
        step_dev = step_dev.max((next[0] - e1).abs()).max((next[1] - e2).abs());
        x = if next.amax() <= 2.0 { next } else { DVector::from_fn(2, |_, _| rng.random_range(-2.0..=2.0)) };
    }

    let poly = model.vertexify();
    let mut sum_dev: f64 = 0.0;
    let mut recon_dev: f64 = 0.0;
    let mut min_alpha = f64::INFINITY;
    for _ in 0..1000 {
        let x = DVector::from_fn(2, |_, _| rng.random_range(-2.0..=2.0));
        let alpha = model.weights(&x).unwrap();
        sum_dev = sum_dev.max((alpha.iter().sum::<f64>() - 1.0).abs());
        min_alpha = min_alpha.min(alpha.iter().copied().fold(f64::INFINITY, f64::min));
        recon_dev = recon_dev.max(model.matrices_at(&x).max_abs_diff(&poly.reconstruct(&alpha).unwrap()));
    }

    let mut alg: f64 = 0.0;
    let mut steps = 0;
    for t in &ctx.scheduler_runs {
        for s in &t.steps {
            steps += 1;
            alg = alg.max(s.algebraic_residual / (1.0 + s.zeta_norm));
        }
    }
    let pass = step_dev <= 1e-9 && sum_dev <= 1e-12 && min_alpha >= 0.0 && recon_dev <= 1e-12 && steps > 0 && alg <= 1e-9;
    outcome(
        pass,
        format!(
            "step deviation {step_dev:.1e}; |sum alpha - 1| {sum_dev:.1e}, min alpha {min_alpha:.3}; reconstruction {recon_dev:.1e}; |phi2+xi2|/(1+|zeta|) {alg:.1e} over {steps} steps"
        ),
    )
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; a name filter
    // that does not mention this suite skips it.
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance criterion".contains(f.as_str())) {
        return;
    }

    let mut ctx = Ctx {
        dir: tempfile::tempdir().unwrap(),
        model: DarModel::load(model_path()).unwrap(),
        design: None,
        scheduler_runs: Vec::new(),
        batch_runs: Vec::new(),
    };
    let criteria: [(&str, fn(&mut Ctx) -> Outcome); 10] = [
        ("op1 feasibility", criterion_1),
        ("op2 infeasibility / max box", criterion_2),
        ("pareto front", criterion_3),
        ("scheduler comparison", criterion_4),
        ("batch ordering", criterion_5),
        ("trigger variable nonnegative", criterion_6),
        ("lyapunov decrease", criterion_7),
        ("region containment", criterion_8),
        ("relaxation recombination", criterion_9),
        ("model-layer identities", criterion_10),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check(&mut ctx);
        println!("criterion {:>2} {} - {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 10 criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
