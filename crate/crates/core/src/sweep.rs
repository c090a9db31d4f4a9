//! Noise sweeps: solve robustly and deterministically over a grid of noise
//! fractions and audit both under the same caps.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::audit::{worst_case_violation, Clustering};
use crate::exec::{self, Execution};
use crate::instance::Instance;
use crate::noise::{auto_bounds, NoiseError, NoiseParams};
use crate::solver::{deterministic_fair_solve, robust_solve, SolveOptions};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid grid {0:?}: expected start:stop:steps with 0 <= start <= stop < 1 and steps >= 1")]
    Grid(String),
    #[error("cannot choose proportion bounds: {0}")]
    Bounds(#[from] NoiseError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Robust,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub m_fraction: f64,
    pub m: usize,
    pub algorithm: Algorithm,
    pub objective: Option<f64>,
    pub lambda: Option<f64>,
    pub num_centers: Option<usize>,
    pub bound: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub fractions: Vec<f64>,
    /// Added to the bounds derived for the largest fraction.
    pub slack: f64,
    pub solve: SolveOptions,
    pub exec: Execution,
}

/// `start:stop:steps`, evenly spaced and inclusive of both ends.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, SweepError> {
    let bad = || SweepError::Grid(spec.to_string());
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, stop, steps] = parts.as_slice() else {
        return Err(bad());
    };
    let start: f64 = start.trim().parse().map_err(|_| bad())?;
    let stop: f64 = stop.trim().parse().map_err(|_| bad())?;
    let steps: usize = steps.trim().parse().map_err(|_| bad())?;
    if steps == 0 || !(0.0..1.0).contains(&start) || !(start..1.0).contains(&stop) {
        return Err(bad());
    }
    if steps == 1 {
        return Ok(vec![start]);
    }
    let step = (stop - start) / (steps - 1) as f64;
    Ok((0..steps)
        .map(|i| if i + 1 == steps { stop } else { ((start + step * i as f64) * 1e12).round() / 1e12 })
        .collect())
}

/// Per-group caps m_h⁺ = m_h⁻ = ⌈fraction · n⌉.
pub fn noise_for_fraction(inst: &Instance, fraction: f64) -> (usize, NoiseParams) {
    let m = (fraction * inst.len() as f64 - 1e-9).ceil().max(0.0) as usize;
    let np = NoiseParams::uniform(m, inst.groups().sizes()).expect("arity matches by construction");
    (m, np)
}

/// Runs every grid point. Without explicit bounds on `inst`, bounds are the
/// extremal feasible ones for the largest fraction and stay fixed across rows.
pub fn run_sweep(inst: &Instance, cfg: &SweepConfig) -> Result<Vec<SweepRow>, SweepError> {
    let mut inst = inst.clone();
    if inst.bounds().is_none() {
        let largest = cfg.fractions.iter().copied().fold(0.0, f64::max);
        let (_, np) = noise_for_fraction(&inst, largest);
        let bounds = auto_bounds(&inst, &np, cfg.slack)?;
        inst.set_bounds(bounds).map_err(NoiseError::from)?;
    }
    let inst = &inst;
    let rows = exec::map_indices(cfg.exec, cfg.fractions.len(), |i| {
        let fraction = cfg.fractions[i];
        let (m, np) = noise_for_fraction(inst, fraction);
        let bound = np.violation_bound();
        let row = |algorithm| SweepRow {
            m_fraction: fraction,
            m,
            algorithm,
            objective: None,
            lambda: None,
            num_centers: None,
            bound,
            error: None,
        };
        [Algorithm::Robust, Algorithm::Deterministic].map(|alg| {
            let solved = match alg {
                Algorithm::Robust => robust_solve(inst, &np, &cfg.solve),
                Algorithm::Deterministic => deterministic_fair_solve(inst, &cfg.solve),
            };
            let mut r = row(alg);
            match solved {
                Ok(sol) => {
                    r.objective = Some(sol.cost);
                    r.num_centers = Some(sol.num_centers());
                    match worst_case_violation(&Clustering::from(&sol), inst, &np) {
                        Ok(rep) => r.lambda = Some(rep.lambda),
                        Err(e) => r.error = Some(e.to_string()),
                    }
                }
                Err(e) => r.error = Some(e.to_string()),
            }
            r
        })
    });
    Ok(rows.into_iter().flatten().collect())
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), SweepError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m_fraction", "m", "algorithm", "objective", "lambda", "num_centers", "bound", "status"])?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for r in rows {
        let alg = match r.algorithm {
            Algorithm::Robust => "robust",
            Algorithm::Deterministic => "deterministic",
        };
        let status = match &r.error {
            Some(e) => format!("error: {e}"),
            None => "ok".to_string(),
        };
        w.write_record([
            format!("{}", r.m_fraction),
            r.m.to_string(),
            alg.to_string(),
            opt(r.objective),
            opt(r.lambda),
            r.num_centers.map(|c| c.to_string()).unwrap_or_default(),
            opt(r.bound),
            status,
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
