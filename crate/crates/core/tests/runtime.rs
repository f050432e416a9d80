use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dar_etc::codesign::{synthesize, DesignParams, EtcDesign};
use dar_etc::dar::DarModel;
use dar_etc::etm::{control_input, evaluate_gamma, Scheduler};
use dar_etc::lmi::Mode;
use dar_etc::par::Execution;
use dar_etc::sdp::SolverSettings;
use dar_etc::sim::{batch_events, roa_sweep, run_many, sample_initial_states};

const T: f64 = 0.1;

fn benchmark_model() -> DarModel {
    DarModel::load(concat!(env!("CARGO_MANIFEST_DIR"), "/models/paper_sec4.json")).unwrap()
}

fn benchmark_design(model: &DarModel) -> EtcDesign {
    synthesize(model, Mode::Op1, 1274.3, &DesignParams::default(), &SolverSettings::default())
        .unwrap()
        .design
        .unwrap()
}

/// The benchmark's difference equation, written directly.
fn closed_form_step(x1: f64, x2: f64, u: f64) -> (f64, f64) {
    (
        x1 + T * x2,
        x2 + T * x1 + T * x1.powi(3) + 2.0 * T * x2 + 8.0 * T * x2.powi(3) + T * u,
    )
}

#[test]
fn dar_step_matches_difference_equation() {
    let model = benchmark_model();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x = DVector::from_fn(2, |_, _| rng.random_range(-2.0..=2.0));
        let u = DVector::from_element(1, rng.random_range(-5.0..5.0));
        let next = model.step_dar(&x, &u).unwrap();
        let (a, b) = closed_form_step(x[0], x[1], u[0]);
        worst = worst.max((next[0] - a).abs()).max((next[1] - b).abs());
    }
    assert!(worst <= 1e-9, "worst deviation {worst}");
}

/// Scalar, straight-line evaluation of the trigger function for the
/// benchmark, where `π = (x1², x2²)` and `Ω3 = 0` (so `ξ2 = 0`).
fn gamma_by_hand(d: &EtcDesign, x: [f64; 2], xh: [f64; 2], pih: [f64; 2]) -> f64 {
    let alpha = |z: [f64; 2]| {
        let lo = |v: f64| (2.0 - v) / 4.0;
        let hi = |v: f64| (v + 2.0) / 4.0;
        [lo(z[0]) * lo(z[1]), lo(z[0]) * hi(z[1]), hi(z[0]) * lo(z[1]), hi(z[0]) * hi(z[1])]
    };
    let gains = |z: [f64; 2]| {
        let a = alpha(z);
        let mut k = [0.0; 2];
        let mut l = [0.0; 2];
        for v in 0..4 {
            for c in 0..2 {
                k[c] += a[v] * d.k[v][(0, c)];
                l[c] += a[v] * d.l[v][(0, c)];
            }
        }
        (k, l)
    };
    let (kx, lx) = gains(x);
    let (kh, lh) = gains(xh);
    let pi = [x[0] * x[0], x[1] * x[1]];
    let e = [xh[0] - x[0], xh[1] - x[1]];
    let dl = [pih[0] - pi[0], pih[1] - pi[1]];
    let u_here = kx[0] * xh[0] + kx[1] * xh[1] + lx[0] * pih[0] + lx[1] * pih[1];
    let u_held = kh[0] * xh[0] + kh[1] * xh[1] + lh[0] * pih[0] + lh[1] * pih[1];
    let (p1, p2) = closed_form_step(x[0], x[1], u_here);
    let xi1 = [0.0, T * (u_held - u_here)];
    let q = |m: &DMatrix<f64>, a: [f64; 2], b: [f64; 2]| {
        a[0] * (m[(0, 0)] * b[0] + m[(0, 1)] * b[1]) + a[1] * (m[(1, 0)] * b[0] + m[(1, 1)] * b[1])
    };
    let xi = 2.0 * q(&d.p, [p1, p2], xi1) + q(&d.p, xi1, xi1);
    q(&d.qx, x, x) + q(&d.qpi, pi, pi) - q(&d.qe, e, e) - q(&d.qdelta, dl, dl) - xi
}

#[test]
fn trigger_function_matches_straight_line_evaluation() {
    let model = benchmark_model();
    let d = benchmark_design(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let x = [rng.random_range(-1.9..1.9), rng.random_range(-1.9..1.9)];
        let xh = [rng.random_range(-1.9..1.9), rng.random_range(-1.9..1.9)];
        let xv = DVector::from_column_slice(&x);
        let xhv = DVector::from_column_slice(&xh);
        let (_, pih) = control_input(&d, &model, &xhv).unwrap();
        // Ω3 = 0 makes the held nonlinearity independent of the gains.
        assert!((pih[0] - xh[0] * xh[0]).abs() < 1e-12 && (pih[1] - xh[1] * xh[1]).abs() < 1e-12);
        let ev = evaluate_gamma(&d, &model, &xv, &xhv, &pih).unwrap();
        let reference = gamma_by_hand(&d, x, xh, [pih[0], pih[1]]);
        let scale = 1.0 + reference.abs() + ev.zeta.norm_squared() * d.qx.amax().max(d.qe.amax());
        assert!((ev.gamma - reference).abs() <= 1e-10 * scale, "{} vs {reference}", ev.gamma);
        assert!(ev.xi2.amax() == 0.0);
    }
}

#[test]
fn batches_are_deterministic_and_execution_independent() {
    let model = benchmark_model();
    let d = benchmark_design(&model);
    let a = batch_events(&model, &d, 12, 100, Scheduler::Dynamic, 0.0, 5, Execution::Parallel).unwrap();
    let b = batch_events(&model, &d, 12, 100, Scheduler::Dynamic, 0.0, 5, Execution::Parallel).unwrap();
    let c = batch_events(&model, &d, 12, 100, Scheduler::Dynamic, 0.0, 5, Execution::Sequential).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
    let other = batch_events(&model, &d, 12, 100, Scheduler::Dynamic, 0.0, 6, Execution::Sequential).unwrap();
    assert_ne!(a.runs[0].x0, other.runs[0].x0);

    let x0s = sample_initial_states(&d, 0.0, 8, 1).unwrap();
    for sched in Scheduler::ALL {
        let par = run_many(&model, &d, &x0s, sched, 100, 0.0, Execution::Parallel).unwrap();
        let seq = run_many(&model, &d, &x0s, sched, 100, 0.0, Execution::Sequential).unwrap();
        assert_eq!(par, seq, "{sched}");
    }
    let r1 = roa_sweep(&model, &d, 6, 100, Execution::Parallel).unwrap();
    let r2 = roa_sweep(&model, &d, 6, 100, Execution::Sequential).unwrap();
    assert_eq!(r1, r2);
}

#[test]
fn sampled_initial_states_lie_in_region_estimate() {
    let model = benchmark_model();
    let d = benchmark_design(&model);
    for eta0 in [0.0, 0.3] {
        for x in sample_initial_states(&d, eta0, 500, 9).unwrap() {
            assert!(x.dot(&(&d.p * &x)) <= 1.0 - eta0 + 1e-12);
            assert!(model.in_domain(&x));
        }
    }
}

#[test]
fn trigger_variable_stays_nonnegative_across_a_batch() {
    let model = benchmark_model();
    let d = benchmark_design(&model);
    let x0s = sample_initial_states(&d, 0.0, 30, 2).unwrap();
    for t in run_many(&model, &d, &x0s, Scheduler::Dynamic, 100, 0.0, Execution::Parallel).unwrap() {
        assert!(t.min_eta() >= -1e-12);
        assert!(!t.left_domain);
        assert!(t.excursions.is_empty());
    }
}
