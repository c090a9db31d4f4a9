//! End-to-end robust fair k-center: radius search, LP, rounding.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::centers::{get_centers_bounded, CenterPolicy};
use crate::instance::{candidate_radii, Instance, InstanceError};
use crate::lp::{build_lp, solve_feasibility, Feasibility, FractionalAssignment, LpError, DEFAULT_TOL};
use crate::noise::{bounds_feasible, check_consistency, NoiseParams, Violation};
use crate::rounding::{round, IntegralAssignment, RoundingError};

/// Above this many points the fractional solution is dropped by default.
pub const TRACE_LIMIT: usize = 10_000;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("no robust fair clustering exists for these bounds and noise caps")]
    Infeasible,
    #[error("noise parameters are inconsistent: {0:?}")]
    Inconsistent(Vec<Violation>),
    #[error("LP verdict at radius {radius} is unreliable: {source}")]
    Indeterminate { radius: f64, source: LpError },
    #[error("the largest candidate radius failed although the bounds admit one cluster")]
    NoRadius,
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Lp(LpError),
    #[error(transparent)]
    Rounding(#[from] RoundingError),
}

/// Which of the LP-certified solutions met during the search is returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// The one at the smallest radius where the predicate held.
    SmallestRadius,
    /// The one with the lowest realized cost after rounding; ties go to the
    /// smaller radius. The largest radius is always among the candidates.
    #[default]
    LowestCost,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub policy: CenterPolicy,
    pub selection: Selection,
    /// Try every candidate radius in ascending order instead of bisecting.
    pub linear_scan: bool,
    pub tol: f64,
    /// `None` keeps the fractional solution when `n <= TRACE_LIMIT`.
    pub retain_trace: Option<bool>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            policy: CenterPolicy::LowestId,
            selection: Selection::LowestCost,
            linear_scan: false,
            tol: DEFAULT_TOL,
            retain_trace: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    /// Centers with at least one assigned point.
    pub centers: Vec<usize>,
    /// Center id per point.
    pub assignment: Vec<usize>,
    /// Radius of the LP that produced this solution.
    pub found_radius: f64,
    /// Smallest radius where the search predicate held.
    pub search_radius: f64,
    pub cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fractional_trace: Option<FractionalAssignment>,
}

impl Solution {
    pub fn num_centers(&self) -> usize {
        self.centers.len()
    }
}

/// Largest distance from a point to its center.
pub fn assignment_cost(inst: &Instance, assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(j, &c)| inst.dist(j, c))
        .fold(0.0, f64::max)
}

/// The search predicate at one radius: at most `k` centers from the
/// marking procedure and a feasible LP on them.
pub fn evaluate_radius(
    inst: &Instance,
    np: &NoiseParams,
    radius: f64,
    opts: &SolveOptions,
) -> Result<Option<FractionalAssignment>, SolveError> {
    let centers = get_centers_bounded(inst, radius, opts.policy, inst.k());
    if centers.len() > inst.k() {
        return Ok(None);
    }
    let model = build_lp(inst, np, &centers, radius).map_err(SolveError::Lp)?;
    match solve_feasibility(&model, inst, np, opts.tol) {
        Ok(Feasibility::Feasible(f)) => Ok(Some(f)),
        Ok(Feasibility::Infeasible) => Ok(None),
        Err(e @ (LpError::Indeterminate { .. } | LpError::IterationLimit(_) | LpError::Validation(_))) => {
            Err(SolveError::Indeterminate { radius, source: e })
        }
        Err(e) => Err(SolveError::Lp(e)),
    }
}

pub fn robust_solve(inst: &Instance, np: &NoiseParams, opts: &SolveOptions) -> Result<Solution, SolveError> {
    check_consistency(np).map_err(SolveError::Inconsistent)?;
    let bounds = inst.require_bounds()?;
    if !bounds_feasible(bounds, &inst.groups().sizes(), np) {
        return Err(SolveError::Infeasible);
    }
    let radii = candidate_radii(inst);
    let mut found = if opts.linear_scan {
        linear_scan(inst, np, &radii, opts)?
    } else {
        bisect(inst, np, &radii, opts)?
    };
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    let search_radius = found[0].0;
    let candidates = match opts.selection {
        Selection::SmallestRadius => &found[..1],
        Selection::LowestCost => &found[..],
    };
    let mut best: Option<(f64, f64, IntegralAssignment, &FractionalAssignment)> = None;
    for (radius, frac) in candidates {
        let integral = round(frac, inst)?;
        let cost = assignment_cost(inst, &integral.assignment());
        if best.as_ref().is_none_or(|b| cost < b.0) {
            best = Some((cost, *radius, integral, frac));
        }
    }
    let (cost, radius, integral, frac) = best.expect("at least one candidate");
    let sizes = integral.cluster_sizes();
    let centers = integral
        .centers
        .iter()
        .zip(&sizes)
        .filter(|&(_, &s)| s > 0)
        .map(|(&c, _)| c)
        .collect();
    let keep = opts.retain_trace.unwrap_or(inst.len() <= TRACE_LIMIT);
    Ok(Solution {
        centers,
        assignment: integral.assignment(),
        found_radius: radius,
        search_radius,
        cost,
        fractional_trace: keep.then(|| frac.clone()),
    })
}

/// Robust solve with every noise cap at zero.
pub fn deterministic_fair_solve(inst: &Instance, opts: &SolveOptions) -> Result<Solution, SolveError> {
    robust_solve(inst, &NoiseParams::zero(inst.groups().sizes()), opts)
}

/// Feasible `(radius, solution)` pairs met while scanning upward: the first
/// one, plus the largest radius.
fn linear_scan(
    inst: &Instance,
    np: &NoiseParams,
    radii: &[f64],
    opts: &SolveOptions,
) -> Result<Vec<(f64, FractionalAssignment)>, SolveError> {
    for (idx, &r) in radii.iter().enumerate() {
        if let Some(f) = evaluate_radius(inst, np, r, opts)? {
            let mut out = vec![(r, f)];
            let last = radii.len() - 1;
            if idx != last {
                if let Some(g) = evaluate_radius(inst, np, radii[last], opts)? {
                    out.push((radii[last], g));
                }
            }
            return Ok(out);
        }
    }
    Err(SolveError::NoRadius)
}

/// Bisects for the smallest index whose predicate holds, assuming it holds
/// from some index on. The last radius is checked first since a single
/// cluster must pass. Returns every feasible evaluation.
fn bisect(
    inst: &Instance,
    np: &NoiseParams,
    radii: &[f64],
    opts: &SolveOptions,
) -> Result<Vec<(f64, FractionalAssignment)>, SolveError> {
    let mut cache: HashMap<usize, Option<FractionalAssignment>> = HashMap::new();
    let mut eval = |idx: usize| -> Result<bool, SolveError> {
        if let Some(v) = cache.get(&idx) {
            return Ok(v.is_some());
        }
        let v = evaluate_radius(inst, np, radii[idx], opts)?;
        let ok = v.is_some();
        cache.insert(idx, v);
        Ok(ok)
    };
    let last = radii.len() - 1;
    if !eval(last)? {
        return Err(SolveError::NoRadius);
    }
    let (mut lo, mut hi) = (0usize, last);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if eval(mid)? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(cache
        .into_iter()
        .filter_map(|(idx, f)| f.map(|f| (radii[idx], f)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{GroupAssignment, ProportionBounds};

    fn pairs(bounds: ProportionBounds) -> Instance {
        Instance::new(
            vec![vec![0.0], vec![0.0], vec![10.0], vec![10.0]],
            GroupAssignment::new(vec![0, 1, 0, 1], 2).unwrap(),
            2,
            Some(bounds),
        )
        .unwrap()
    }

    #[test]
    fn balanced_pairs_deterministic() {
        let inst = pairs(ProportionBounds::uniform(2, 0.25, 0.75).unwrap());
        let sol = deterministic_fair_solve(&inst, &SolveOptions::default()).unwrap();
        assert_eq!(sol.found_radius, 0.0);
        assert_eq!(sol.cost, 0.0);
        assert_eq!(sol.centers, vec![0, 2]);
        assert_eq!(sol.assignment, vec![0, 0, 2, 2]);
    }

    #[test]
    fn noisy_pairs_collapse_to_one_cluster() {
        let inst = pairs(ProportionBounds::uniform(2, 0.25, 0.75).unwrap());
        let np = NoiseParams::uniform(1, vec![2, 2]).unwrap();
        let sol = robust_solve(&inst, &np, &SolveOptions::default()).unwrap();
        assert_eq!(sol.centers, vec![0]);
        assert_eq!(sol.cost, 10.0);
        assert!(sol.cost <= 3.0 * sol.found_radius);
    }

    #[test]
    fn infeasible_bounds() {
        let inst = pairs(ProportionBounds::uniform(2, 0.5, 0.5).unwrap());
        let np = NoiseParams::uniform(1, vec![2, 2]).unwrap();
        assert!(matches!(robust_solve(&inst, &np, &SolveOptions::default()), Err(SolveError::Infeasible)));
    }

    #[test]
    fn inconsistent_noise() {
        let inst = pairs(ProportionBounds::uniform(2, 0.25, 0.75).unwrap());
        let np = NoiseParams::from_caps(vec![2, 0], vec![0, 0], vec![2, 2]).unwrap();
        assert!(matches!(
            robust_solve(&inst, &np, &SolveOptions::default()),
            Err(SolveError::Inconsistent(_))
        ));
    }

    #[test]
    fn linear_scan_matches_on_pairs() {
        let inst = pairs(ProportionBounds::uniform(2, 0.25, 0.75).unwrap());
        let opts = SolveOptions {
            linear_scan: true,
            ..SolveOptions::default()
        };
        let a = deterministic_fair_solve(&inst, &opts).unwrap();
        let b = deterministic_fair_solve(&inst, &SolveOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trace_retention() {
        let inst = pairs(ProportionBounds::uniform(2, 0.25, 0.75).unwrap());
        let sol = deterministic_fair_solve(&inst, &SolveOptions::default()).unwrap();
        assert!(sol.fractional_trace.is_some());
        let opts = SolveOptions {
            retain_trace: Some(false),
            ..SolveOptions::default()
        };
        assert!(deterministic_fair_solve(&inst, &opts).unwrap().fractional_trace.is_none());
    }
}
