use serde::{Deserialize, Serialize};

use super::{synthesize, DesignParams};
use crate::dar::DarModel;
use crate::error::{Error, Result};
use crate::lmi::Mode;
use crate::par::{map_ordered, Execution};
use crate::sdp::{SolveStatus, SolverSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub epsilon: f64,
    /// Set only for optimal/feasible points.
    pub sigma: Option<f64>,
    pub status: SolveStatus,
    #[serde(rename = "Lambda")]
    pub lambda_metric: Option<f64>,
}

/// `count` points spaced logarithmically over `[lo, hi]`, both ends included.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..count)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
                .collect()
        }
    }
}

/// Grid specifications: `log:LO:HI:N`, `lin:LO:HI:N`, or a comma list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("bad grid `{spec}` (expected log:LO:HI:N, lin:LO:HI:N or a,b,c)"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = spec.split(':').collect();
    let grid = match parts.as_slice() {
        [kind @ ("log" | "lin"), lo, hi, n] => {
            let (lo, hi) = (num(lo)?, num(hi)?);
            let n: usize = n.trim().parse().map_err(|_| bad())?;
            if *kind == "log" {
                if !(lo > 0.0 && hi > 0.0) {
                    return Err(bad());
                }
                log_grid(lo, hi, n)
            } else if n == 1 {
                vec![lo]
            } else {
                (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
            }
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<_>>>()?,
        _ => return Err(bad()),
    };
    if grid.is_empty() {
        return Err(bad());
    }
    Ok(grid)
}

/// One synthesis per ε. Points are independent, so they run in parallel
/// under `exec`; a failing point is recorded and the sweep continues.
pub fn pareto_sweep(
    model: &DarModel,
    grid: &[f64],
    mode: Mode,
    params: &DesignParams,
    settings: &SolverSettings,
    exec: Execution,
) -> Result<Vec<ParetoPoint>> {
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("epsilon grid must be strictly ascending".into()));
    }
    if let Some(e) = grid.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::Config(format!("epsilon must be positive, got {e}")));
    }
    params.validate()?;
    Ok(map_ordered(exec, grid, |_, &epsilon| {
        match synthesize(model, mode, epsilon, params, settings) {
            Ok(s) => ParetoPoint {
                epsilon,
                sigma: s.sigma,
                status: s.status,
                lambda_metric: s.design.as_ref().map(|d| d.lambda_metric),
            },
            Err(_) => ParetoPoint {
                epsilon,
                sigma: None,
                status: SolveStatus::SolverFailure,
                lambda_metric: None,
            },
        }
    }))
}

/// CSV with columns `epsilon,sigma,status,Lambda`; missing values are empty.
pub fn write_pareto_csv<W: std::io::Write>(points: &[ParetoPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["epsilon", "sigma", "status", "Lambda"]).map_err(io)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for p in points {
        w.write_record([
            p.epsilon.to_string(),
            opt(p.sigma),
            p.status.to_string(),
            opt(p.lambda_metric),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Index pairs `(i, j)`, consecutive among feasible points, where σ grows
/// by more than `rel_tol` relative as ε increases.
pub fn pareto_violations(points: &[ParetoPoint], rel_tol: f64) -> Vec<(usize, usize)> {
    let feasible: Vec<(usize, f64)> = points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.sigma.filter(|_| p.status.is_success()).map(|s| (i, s)))
        .collect();
    feasible
        .windows(2)
        .filter(|w| w[1].1 > w[0].1 * (1.0 + rel_tol) + f64::MIN_POSITIVE)
        .map(|w| (w[0].0, w[1].0))
        .collect()
}
