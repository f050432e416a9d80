use serde::{Deserialize, Serialize};

use super::{synthesize, DesignParams};
use crate::dar::DarModel;
use crate::error::{Error, Result};
use crate::lmi::Mode;
use crate::par::{map_ordered, Execution};
use crate::sdp::{SolveStatus, SolverSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxProbe {
    pub xbar: f64,
    pub status: SolveStatus,
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSearch {
    pub last_feasible: f64,
    /// `None` when the upper end of the interval is feasible.
    pub first_infeasible: Option<f64>,
    pub probes: Vec<BoxProbe>,
}

/// Largest box size `x̄` in `interval` for which the problem stays feasible,
/// by bisection down to `tol`.
///
/// Feasibility is assumed monotone (smaller boxes are easier). The two
/// endpoints are always checked; a feasible upper end with an infeasible
/// lower end contradicts that assumption and aborts the search.
#[allow(clippy::too_many_arguments)]
pub fn max_feasible_box<F>(
    template: F,
    mode: Mode,
    epsilon: f64,
    params: &DesignParams,
    settings: &SolverSettings,
    interval: (f64, f64),
    tol: f64,
    exec: Execution,
) -> Result<BoxSearch>
where
    F: Fn(f64) -> Result<DarModel> + Sync,
{
    let (lo, hi) = interval;
    if !(lo > 0.0) || !(lo <= hi) {
        return Err(Error::Bisection(format!("invalid interval [{lo}, {hi}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::Bisection(format!("tolerance must be positive, got {tol}")));
    }
    let probe = |xbar: f64| -> Result<BoxProbe> {
        let model = template(xbar)?;
        let s = synthesize(&model, mode, epsilon, params, settings)?;
        Ok(BoxProbe {
            xbar,
            status: s.status,
            sigma: s.sigma,
        })
    };

    let ends: Vec<f64> = if lo == hi { vec![lo] } else { vec![lo, hi] };
    let mut probes = map_ordered(exec, &ends, |_, &x| probe(x))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let feasible = |p: &BoxProbe| p.status.is_success();

    let lo_ok = feasible(&probes[0]);
    let hi_ok = feasible(probes.last().expect("at least one probe"));
    match (lo_ok, hi_ok) {
        (false, false) => {
            return Err(Error::Infeasible(format!(
                "both ends of [{lo}, {hi}] fail ({}, {})",
                probes[0].status,
                probes.last().unwrap().status
            )))
        }
        (false, true) => {
            return Err(Error::Bisection(format!(
                "feasibility is not monotone: infeasible at {lo} but feasible at {hi}"
            )))
        }
        (true, true) => {
            return Ok(BoxSearch {
                last_feasible: hi,
                first_infeasible: None,
                probes,
            })
        }
        (true, false) => {}
    }

    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        let p = probe(mid)?;
        if feasible(&p) {
            a = mid;
        } else {
            b = mid;
        }
        probes.push(p);
    }
    Ok(BoxSearch {
        last_feasible: a,
        first_infeasible: Some(b),
        probes,
    })
}
