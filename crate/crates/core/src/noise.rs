//! Error models (BAE, BPE, BAPE) and the per-group noise caps they induce.
//!
//! Naming follows the flow convention: `pair_flow[g][h]` (m_{g->h}) bounds the
//! number of points *labeled* `g` whose true group is `h`. A group's inflow
//! cap m_h⁺ bounds how many points it can gain under relabeling, its outflow
//! cap m_h⁻ how many of its labeled points can turn out to belong elsewhere.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Instance, InstanceError, ProportionBounds};

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("{field} is required for the {variant:?} model")]
    MissingParameter {
        variant: ErrorModel,
        field: &'static str,
    },
    #[error("negative entry {value} in {field}")]
    Negative { field: &'static str, value: i64 },
    #[error("pairwise matrix must be {expected}x{expected}")]
    Shape { expected: usize },
    #[error("pairwise matrix has nonzero diagonal entry M[{group}][{group}] = {value}")]
    Diagonal { group: usize, value: i64 },
    #[error("group {group}: total error flowing out ({total}) exceeds its size {size}")]
    OutflowExceedsSize {
        group: usize,
        total: u64,
        size: usize,
    },
    #[error("vector lengths disagree with the {groups} groups")]
    Arity { groups: usize },
    #[error("group {group}: bounds collapse ({reason})")]
    BoundCollapse { group: usize, reason: &'static str },
    #[error(transparent)]
    Bounds(#[from] InstanceError),
    #[error("invalid error model JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorModel {
    Bae,
    Bpe,
    Bape,
}

/// User-facing parameterization, `{"variant": "bae"|"bpe"|"bape", "m": int?, "M": [[int]]?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorModelSpec {
    pub variant: ErrorModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<i64>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub pairwise: Option<Vec<Vec<i64>>>,
}

impl ErrorModelSpec {
    pub fn bae(m: i64) -> Self {
        Self {
            variant: ErrorModel::Bae,
            m: Some(m),
            pairwise: None,
        }
    }

    pub fn bpe(pairwise: Vec<Vec<i64>>) -> Self {
        Self {
            variant: ErrorModel::Bpe,
            m: None,
            pairwise: Some(pairwise),
        }
    }

    pub fn bape(m: i64, pairwise: Vec<Vec<i64>>) -> Self {
        Self {
            variant: ErrorModel::Bape,
            m: Some(m),
            pairwise: Some(pairwise),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, NoiseError> {
        serde_json::from_str(text).map_err(|e| NoiseError::Json(e.to_string()))
    }

    fn aggregate(&self) -> Result<u64, NoiseError> {
        let m = self.m.ok_or(NoiseError::MissingParameter {
            variant: self.variant,
            field: "m",
        })?;
        if m < 0 {
            return Err(NoiseError::Negative {
                field: "m",
                value: m,
            });
        }
        Ok(m as u64)
    }

    fn matrix(&self, sizes: &[usize]) -> Result<Vec<Vec<u64>>, NoiseError> {
        let raw = self.pairwise.as_ref().ok_or(NoiseError::MissingParameter {
            variant: self.variant,
            field: "M",
        })?;
        let l = sizes.len();
        if raw.len() != l || raw.iter().any(|r| r.len() != l) {
            return Err(NoiseError::Shape { expected: l });
        }
        let mut out = vec![vec![0u64; l]; l];
        for (g, row) in raw.iter().enumerate() {
            for (h, &v) in row.iter().enumerate() {
                if v < 0 {
                    return Err(NoiseError::Negative {
                        field: "M",
                        value: v,
                    });
                }
                if g == h && v != 0 {
                    return Err(NoiseError::Diagonal { group: g, value: v });
                }
                out[g][h] = v as u64;
            }
            let total: u64 = out[g].iter().sum();
            // The table example has sum == n_g, so only a strict excess is rejected.
            if total > sizes[g] as u64 {
                return Err(NoiseError::OutflowExceedsSize {
                    group: g,
                    total,
                    size: sizes[g],
                });
            }
        }
        Ok(out)
    }
}

/// Per-group noise caps consumed by the LP, the uncertainty set and the auditor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// m_h⁺
    pub inflow: Vec<usize>,
    /// m_h⁻
    pub outflow: Vec<usize>,
    /// m_{g->h}
    pub pair_flow: Vec<Vec<usize>>,
    /// m*
    pub aggregate_star: usize,
    pub group_sizes: Vec<usize>,
}

fn clamp(v: u64) -> usize {
    usize::try_from(v).unwrap_or(usize::MAX)
}

impl NoiseParams {
    /// Caps given directly as m_h⁺ / m_h⁻. Pairwise caps are left non-binding
    /// and m* = min(sum m_h⁻, n).
    pub fn from_caps(
        inflow: Vec<usize>,
        outflow: Vec<usize>,
        group_sizes: Vec<usize>,
    ) -> Result<Self, NoiseError> {
        let l = group_sizes.len();
        if inflow.len() != l || outflow.len() != l {
            return Err(NoiseError::Arity { groups: l });
        }
        let pair_flow = (0..l)
            .map(|g| {
                (0..l)
                    .map(|h| if g == h { 0 } else { group_sizes[g] })
                    .collect()
            })
            .collect();
        let n: usize = group_sizes.iter().sum();
        let aggregate_star = outflow.iter().sum::<usize>().min(n);
        Ok(Self {
            inflow,
            outflow,
            pair_flow,
            aggregate_star,
            group_sizes,
        })
    }

    /// m_h⁺ = m_h⁻ = m for every group.
    pub fn uniform(m: usize, group_sizes: Vec<usize>) -> Result<Self, NoiseError> {
        let l = group_sizes.len();
        Self::from_caps(vec![m; l], vec![m; l], group_sizes)
    }

    pub fn zero(group_sizes: Vec<usize>) -> Self {
        Self::uniform(0, group_sizes).expect("arity matches by construction")
    }

    pub fn group_count(&self) -> usize {
        self.group_sizes.len()
    }

    /// m_in = sum of m_h⁻.
    pub fn total_outflow(&self) -> usize {
        self.outflow.iter().sum()
    }

    /// m_out = sum of m_h⁺, the denominator of the violation bound.
    pub fn total_inflow(&self) -> usize {
        self.inflow.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.inflow.iter().all(|&v| v == 0) && self.outflow.iter().all(|&v| v == 0)
    }

    /// `2 / sum_h m_h⁺`, or `None` without noise.
    pub fn violation_bound(&self) -> Option<f64> {
        let total = self.total_inflow();
        (total > 0).then(|| 2.0 / total as f64)
    }
}

pub fn derive(spec: &ErrorModelSpec, group_sizes: &[usize]) -> Result<NoiseParams, NoiseError> {
    let l = group_sizes.len();
    let n: u64 = group_sizes.iter().map(|&s| s as u64).sum();
    let sizes: Vec<u64> = group_sizes.iter().map(|&s| s as u64).collect();
    let mut pair = vec![vec![0u64; l]; l];
    let (inflow, outflow, star): (Vec<u64>, Vec<u64>, u64) = match spec.variant {
        ErrorModel::Bae => {
            let m = spec.aggregate()?;
            for (g, row) in pair.iter_mut().enumerate() {
                for (h, v) in row.iter_mut().enumerate() {
                    if g != h {
                        *v = m;
                    }
                }
            }
            (vec![m; l], sizes.iter().map(|&s| m.min(s)).collect(), m)
        }
        ErrorModel::Bpe => {
            let mat = spec.matrix(group_sizes)?;
            for g in 0..l {
                for h in 0..l {
                    pair[g][h] = mat[g][h].min(sizes[g]);
                }
            }
            let inflow = (0..l).map(|h| (0..l).map(|g| pair[g][h]).sum()).collect();
            let outflow: Vec<u64> = (0..l).map(|h| pair[h].iter().sum()).collect();
            let star = outflow.iter().sum::<u64>().min(n);
            (inflow, outflow, star)
        }
        ErrorModel::Bape => {
            let m = spec.aggregate()?;
            let mat = spec.matrix(group_sizes)?;
            for g in 0..l {
                for h in 0..l {
                    pair[g][h] = mat[g][h].min(m).min(sizes[g]);
                }
            }
            let inflow = (0..l)
                .map(|h| (0..l).map(|g| pair[g][h]).sum::<u64>().min(m))
                .collect();
            let outflow = (0..l)
                .map(|h| pair[h].iter().sum::<u64>().min(m).min(sizes[h]))
                .collect();
            (inflow, outflow, m)
        }
    };
    Ok(NoiseParams {
        inflow: inflow.into_iter().map(clamp).collect(),
        outflow: outflow.into_iter().map(clamp).collect(),
        pair_flow: pair
            .into_iter()
            .map(|r| r.into_iter().map(clamp).collect())
            .collect(),
        aggregate_star: clamp(star),
        group_sizes: group_sizes.to_vec(),
    })
}

/// One failed consistency inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// m_h⁺ > sum_{g != h} m_g⁻
    GainExceedsLosses { group: usize },
    /// m_h⁻ > sum_{g != h} m_g⁺
    LossExceedsGains { group: usize },
    /// m_h⁻ > n_h
    LossExceedsSize { group: usize },
}

pub fn check_consistency(np: &NoiseParams) -> Result<(), Vec<Violation>> {
    let l = np.group_count();
    let mut out = Vec::new();
    let minus_total = np.total_outflow();
    let plus_total = np.total_inflow();
    for h in 0..l {
        if np.inflow[h] > minus_total - np.outflow[h] {
            out.push(Violation::GainExceedsLosses { group: h });
        }
        if np.outflow[h] > plus_total - np.inflow[h] {
            out.push(Violation::LossExceedsGains { group: h });
        }
        if np.outflow[h] > np.group_sizes[h] {
            out.push(Violation::LossExceedsSize { group: h });
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Slack for the count-scale comparisons below; bounds are usually computed
/// as `count / n` and multiplied back.
pub(crate) const COUNT_EPS: f64 = 1e-9;

/// A robust fair solution exists iff every group satisfies
/// `u_h >= (n_h + m_h⁺)/n` and `l_h <= (n_h - m_h⁻)/n`.
pub fn check_feasible_bounds(inst: &Instance, np: &NoiseParams) -> Result<bool, InstanceError> {
    let bounds = inst.require_bounds()?;
    Ok(bounds_feasible(bounds, &inst.groups().sizes(), np))
}

pub(crate) fn bounds_feasible(bounds: &ProportionBounds, sizes: &[usize], np: &NoiseParams) -> bool {
    let n: usize = sizes.iter().sum();
    let n = n as f64;
    (0..sizes.len()).all(|h| {
        let nh = sizes[h] as f64;
        bounds.upper(h) * n >= nh + np.inflow[h] as f64 - COUNT_EPS
            && bounds.lower(h) * n <= nh - np.outflow[h] as f64 + COUNT_EPS
    })
}

/// The extremal feasible bounds, optionally widened by `slack`.
pub fn auto_bounds(
    inst: &Instance,
    np: &NoiseParams,
    slack: f64,
) -> Result<ProportionBounds, NoiseError> {
    let sizes = inst.groups().sizes();
    if np.group_count() != sizes.len() {
        return Err(NoiseError::Arity {
            groups: sizes.len(),
        });
    }
    let n = inst.len() as f64;
    let floor = 1.0 / (2.0 * n);
    let mut lower = Vec::with_capacity(sizes.len());
    let mut upper = Vec::with_capacity(sizes.len());
    for (h, &nh) in sizes.iter().enumerate() {
        if nh <= np.outflow[h] {
            return Err(NoiseError::BoundCollapse {
                group: h,
                reason: "n_h - m_h⁻ <= 0",
            });
        }
        if nh + np.inflow[h] >= inst.len() {
            return Err(NoiseError::BoundCollapse {
                group: h,
                reason: "n_h + m_h⁺ >= n",
            });
        }
        let lo = (nh - np.outflow[h]) as f64 / n;
        let hi = (nh + np.inflow[h]) as f64 / n;
        lower.push((lo - slack).max(floor));
        upper.push((hi + slack).min(1.0 - floor));
    }
    Ok(ProportionBounds::new(lower, upper)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::GroupAssignment;

    fn inst_with_sizes(sizes: &[usize]) -> Instance {
        let labels: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(h, &s)| std::iter::repeat_n(h, s))
            .collect();
        let n = labels.len();
        Instance::new(
            (0..n).map(|i| vec![i as f64]).collect(),
            GroupAssignment::new(labels, sizes.len()).unwrap(),
            1,
            None,
        )
        .unwrap()
    }

    #[test]
    fn table_bae() {
        let np = derive(&ErrorModelSpec::bae(2), &[2, 2]).unwrap();
        assert_eq!(np.pair_flow[0][1], 2);
        assert_eq!(np.pair_flow[1][0], 2);
        assert_eq!(np.outflow, vec![2, 2]);
        assert_eq!(np.inflow, vec![2, 2]);
        assert_eq!(np.aggregate_star, 2);
    }

    #[test]
    fn table_bpe() {
        let np = derive(&ErrorModelSpec::bpe(vec![vec![0, 1], vec![2, 0]]), &[2, 2]).unwrap();
        assert_eq!((np.pair_flow[0][1], np.pair_flow[1][0]), (1, 2));
        assert_eq!(np.outflow, vec![1, 2]);
        assert_eq!(np.inflow, vec![2, 1]);
        assert_eq!(np.aggregate_star, 3);
    }

    #[test]
    fn table_bape() {
        let np = derive(&ErrorModelSpec::bape(2, vec![vec![0, 1], vec![2, 0]]), &[2, 2]).unwrap();
        assert_eq!((np.pair_flow[0][1], np.pair_flow[1][0]), (1, 2));
        assert_eq!(np.outflow, vec![1, 2]);
        assert_eq!(np.inflow, vec![2, 1]);
        assert_eq!(np.aggregate_star, 2);
    }

    #[test]
    fn bae_caps_outflow_at_group_size() {
        let np = derive(&ErrorModelSpec::bae(5), &[3, 10]).unwrap();
        assert_eq!(np.outflow, vec![3, 5]);
        assert_eq!(np.inflow, vec![5, 5]);
    }

    #[test]
    fn malformed_specs() {
        assert!(matches!(
            derive(&ErrorModelSpec::bae(-1), &[2, 2]),
            Err(NoiseError::Negative {
                field: "m",
                value: -1
            })
        ));
        assert!(matches!(
            derive(&ErrorModelSpec::bpe(vec![vec![1, 0], vec![0, 0]]), &[2, 2]),
            Err(NoiseError::Diagonal { group: 0, .. })
        ));
        assert!(matches!(
            derive(&ErrorModelSpec::bpe(vec![vec![0, 3], vec![0, 0]]), &[2, 2]),
            Err(NoiseError::OutflowExceedsSize { group: 0, .. })
        ));
        assert!(matches!(
            derive(&ErrorModelSpec::bpe(vec![vec![0, -1], vec![0, 0]]), &[2, 2]),
            Err(NoiseError::Negative { .. })
        ));
        let no_m = ErrorModelSpec {
            variant: ErrorModel::Bape,
            m: None,
            pairwise: Some(vec![vec![0, 1], vec![1, 0]]),
        };
        assert!(matches!(
            derive(&no_m, &[2, 2]),
            Err(NoiseError::MissingParameter { field: "m", .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let spec = ErrorModelSpec::from_json(r#"{"variant":"bape","m":2,"M":[[0,1],[2,0]]}"#).unwrap();
        assert_eq!(spec, ErrorModelSpec::bape(2, vec![vec![0, 1], vec![2, 0]]));
        let spec = ErrorModelSpec::from_json(r#"{"variant":"bae","m":3}"#).unwrap();
        assert_eq!(spec, ErrorModelSpec::bae(3));
        assert!(ErrorModelSpec::from_json(r#"{"variant":"xyz"}"#).is_err());
    }

    #[test]
    fn consistency_examples() {
        // two colors: m_red⁺ = m_blue⁻, m_red⁻ = m_blue⁺
        let np = NoiseParams::from_caps(vec![1, 2], vec![2, 1], vec![2, 2]).unwrap();
        assert_eq!(check_consistency(&np), Ok(()));
        assert_eq!(check_consistency(&NoiseParams::zero(vec![3, 4])), Ok(()));
        let np = NoiseParams::from_caps(vec![5, 0, 0], vec![0, 1, 1], vec![9, 9, 9]).unwrap();
        let errs = check_consistency(&np).unwrap_err();
        assert!(errs.contains(&Violation::GainExceedsLosses { group: 0 }));
        let np = NoiseParams::from_caps(vec![3, 3], vec![3, 3], vec![2, 5]).unwrap();
        assert!(check_consistency(&np)
            .unwrap_err()
            .contains(&Violation::LossExceedsSize { group: 0 }));
    }

    #[test]
    fn two_color_bae_identity() {
        for m in 0..6 {
            let np = derive(&ErrorModelSpec::bae(m), &[3, 4]).unwrap();
            // per-group caps: m, capped by the group size on the losing side
            assert_eq!(np.inflow[0], m as usize);
            assert_eq!(np.outflow[1], (m as usize).min(4));
            assert_eq!(np.outflow[0], (m as usize).min(3));
        }
    }

    #[test]
    fn observation_examples() {
        let np = NoiseParams::uniform(1, vec![2, 2]).unwrap();
        let with = |l: f64, u: f64| {
            inst_with_sizes(&[2, 2])
                .with_bounds(ProportionBounds::uniform(2, l, u).unwrap())
                .unwrap()
        };
        assert!(!check_feasible_bounds(&with(0.5, 0.5), &np).unwrap());
        // one relabeling turns a 2:2 split into 3:1, so u must reach 3/4
        assert!(!check_feasible_bounds(&with(1.0 / 3.0, 2.0 / 3.0), &np).unwrap());
        assert!(check_feasible_bounds(&with(0.25, 0.75), &np).unwrap());
    }

    #[test]
    fn zero_noise_around_ratio() {
        let inst = inst_with_sizes(&[3, 7]);
        let eps = 0.01;
        let b = ProportionBounds::new(vec![0.3 - eps, 0.7 - eps], vec![0.3 + eps, 0.7 + eps]).unwrap();
        let inst = inst.with_bounds(b).unwrap();
        assert!(check_feasible_bounds(&inst, &NoiseParams::zero(vec![3, 7])).unwrap());
    }

    #[test]
    fn auto_bounds_examples() {
        let inst = inst_with_sizes(&[40, 60]);
        let np = NoiseParams::uniform(5, vec![40, 60]).unwrap();
        let b = auto_bounds(&inst, &np, 0.0).unwrap();
        assert!((b.lower(0) - 0.35).abs() < 1e-12);
        assert!((b.upper(0) - 0.45).abs() < 1e-12);
        let b = auto_bounds(&inst, &np, 0.01).unwrap();
        assert!((b.lower(0) - 0.34).abs() < 1e-12);
        assert!((b.upper(0) - 0.46).abs() < 1e-12);

        let inst = inst_with_sizes(&[3, 10]);
        let np = NoiseParams::from_caps(vec![3, 3], vec![3, 3], vec![3, 10]).unwrap();
        assert!(matches!(
            auto_bounds(&inst, &np, 0.0),
            Err(NoiseError::BoundCollapse { group: 0, .. })
        ));
    }
}
