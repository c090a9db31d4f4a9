//! Worst-case fairness audit of a clustering over the uncertainty set.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Instance, InstanceError};
use crate::noise::NoiseParams;
use crate::solver::{assignment_cost, Solution};
use crate::uncertainty::{Coloring, Deviation};

/// Slack below which a witness counts as attaining the closed-form value.
pub const ATTAIN_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("center {center} has no assigned points")]
    EmptyCluster { center: usize },
    #[error("id {id} is out of range for {n} points")]
    DanglingId { id: usize, n: usize },
    #[error("point {point} is assigned to {center}, which is not a listed center")]
    UnknownCenter { point: usize, center: usize },
    #[error("assignment covers {got} points, instance has {expected}")]
    Shape { got: usize, expected: usize },
    #[error("noise parameters cover {got} groups, the instance has {expected}")]
    Arity { got: usize, expected: usize },
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// Centers and a center id per point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    pub centers: Vec<usize>,
    pub assignment: Vec<usize>,
}

impl From<&Solution> for Clustering {
    fn from(sol: &Solution) -> Self {
        Self {
            centers: sol.centers.clone(),
            assignment: sol.assignment.clone(),
        }
    }
}

impl Clustering {
    /// Centers in order of first use by the assignment.
    pub fn from_assignment(assignment: Vec<usize>) -> Self {
        let mut centers: Vec<usize> = Vec::new();
        for &c in &assignment {
            if !centers.contains(&c) {
                centers.push(c);
            }
        }
        Self { centers, assignment }
    }

    /// Position into `centers` per point, after checking every id.
    fn positions(&self, n: usize) -> Result<Vec<usize>, AuditError> {
        if self.assignment.len() != n {
            return Err(AuditError::Shape {
                got: self.assignment.len(),
                expected: n,
            });
        }
        if let Some(&id) = self.centers.iter().find(|&&c| c >= n) {
            return Err(AuditError::DanglingId { id, n });
        }
        let mut slot = vec![usize::MAX; n];
        for (pos, &c) in self.centers.iter().enumerate() {
            slot[c] = pos;
        }
        let mut used = vec![false; self.centers.len()];
        let positions = self
            .assignment
            .iter()
            .enumerate()
            .map(|(point, &c)| {
                if c >= n {
                    return Err(AuditError::DanglingId { id: c, n });
                }
                match slot[c] {
                    usize::MAX => Err(AuditError::UnknownCenter { point, center: c }),
                    pos => {
                        used[pos] = true;
                        Ok(pos)
                    }
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(pos) = used.iter().position(|&u| !u) {
            return Err(AuditError::EmptyCluster {
                center: self.centers[pos],
            });
        }
        Ok(positions)
    }
}

/// The two closed-form violation terms for one (cluster, group).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTerm {
    pub center: usize,
    pub group: usize,
    pub size: usize,
    pub count: usize,
    /// `(l_h |C_i| - |C_{i,h}| + m_h⁻) / |C_i|`
    pub lower: f64,
    /// `(|C_{i,h}| + m_h⁺ - u_h |C_i|) / |C_i|`
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub lambda: f64,
    pub per_cluster: Vec<ClusterTerm>,
    pub witness: Coloring,
    /// Realized violation of `witness`.
    pub witness_violation: f64,
    /// The witness falls short of `lambda` because some cap other than
    /// m_h⁺ / m_h⁻ binds, so `lambda` is only an upper bound.
    pub cap_loose: bool,
    pub cost: f64,
    /// `2 / sum_h m_h⁺` when positive noise exists.
    pub bound: Option<f64>,
    /// `2 / max_h m_h⁺`, the single-group form of the same bound.
    pub bound_single_group: Option<f64>,
}

struct Layout {
    positions: Vec<usize>,
    sizes: Vec<usize>,
    counts: Vec<Vec<usize>>,
}

fn layout(clustering: &Clustering, inst: &Instance, np: &NoiseParams) -> Result<Layout, AuditError> {
    if np.group_count() != inst.group_count() {
        return Err(AuditError::Arity {
            got: np.group_count(),
            expected: inst.group_count(),
        });
    }
    let positions = clustering.positions(inst.len())?;
    let counts = count(&positions, inst.groups().labels(), clustering.centers.len(), inst.group_count());
    let sizes = counts.iter().map(|r| r.iter().sum()).collect();
    Ok(Layout {
        positions,
        sizes,
        counts,
    })
}

fn count(positions: &[usize], labels: &[usize], clusters: usize, groups: usize) -> Vec<Vec<usize>> {
    let mut counts = vec![vec![0usize; groups]; clusters];
    for (&p, &g) in positions.iter().zip(labels) {
        counts[p][g] += 1;
    }
    counts
}

fn terms(clustering: &Clustering, inst: &Instance, np: &NoiseParams, lay: &Layout) -> Result<Vec<ClusterTerm>, AuditError> {
    let bounds = inst.require_bounds()?;
    let mut out = Vec::with_capacity(lay.sizes.len() * inst.group_count());
    for (pos, &center) in clustering.centers.iter().enumerate() {
        let size = lay.sizes[pos] as f64;
        for h in 0..inst.group_count() {
            let c = lay.counts[pos][h] as f64;
            out.push(ClusterTerm {
                center,
                group: h,
                size: lay.sizes[pos],
                count: lay.counts[pos][h],
                lower: (bounds.lower(h) * size - c + np.outflow[h] as f64) / size,
                upper: (c + np.inflow[h] as f64 - bounds.upper(h) * size) / size,
            });
        }
    }
    Ok(out)
}

/// Largest proportion-bound breach of `clustering` when points carry the
/// labels of `coloring`, clamped at 0.
pub fn realized_violation(clustering: &Clustering, inst: &Instance, coloring: &Coloring) -> Result<f64, AuditError> {
    let positions = clustering.positions(inst.len())?;
    if coloring.len() != inst.len() {
        return Err(AuditError::Shape {
            got: coloring.len(),
            expected: inst.len(),
        });
    }
    let bounds = inst.require_bounds()?;
    let counts = count(&positions, &coloring.labels, clustering.centers.len(), inst.group_count());
    let mut worst = 0.0f64;
    for row in &counts {
        let size: usize = row.iter().sum();
        for (h, &c) in row.iter().enumerate() {
            let p = c as f64 / size as f64;
            worst = worst.max(bounds.lower(h) - p).max(p - bounds.upper(h));
        }
    }
    Ok(worst)
}

/// Relabel inside one cluster to push one group's share as far as the caps
/// allow. `raise` moves other groups' points into `h`, otherwise points of
/// `h` move out. Lowest ids go first.
fn push_group(
    inst: &Instance,
    np: &NoiseParams,
    positions: &[usize],
    cluster: usize,
    h: usize,
    raise: bool,
) -> Coloring {
    let base = inst.groups().labels();
    let mut labels = base.to_vec();
    let mut dev = Deviation::zero(inst.group_count());
    for (j, &pos) in positions.iter().enumerate() {
        if pos != cluster {
            continue;
        }
        let g = base[j];
        if raise {
            if g != h && dev.can_move(np, g, h) {
                dev.moved[g][h] += 1;
                labels[j] = h;
            }
        } else if g == h {
            if let Some(to) = (0..inst.group_count()).find(|&to| dev.can_move(np, h, to)) {
                dev.moved[h][to] += 1;
                labels[j] = to;
            }
        }
    }
    Coloring::new(labels)
}

/// A member of the uncertainty set with the largest realized violation.
/// Each (cluster, group, side) target is pushed greedily; ties keep the
/// earliest target in (cluster, group, lower before upper) order.
pub fn adversarial_coloring(
    clustering: &Clustering,
    inst: &Instance,
    np: &NoiseParams,
) -> Result<(Coloring, f64), AuditError> {
    let lay = layout(clustering, inst, np)?;
    let base = Coloring::from_base(inst.groups());
    let mut best = (base.clone(), realized_violation(clustering, inst, &base)?);
    for cluster in 0..clustering.centers.len() {
        for h in 0..inst.group_count() {
            for raise in [false, true] {
                let c = push_group(inst, np, &lay.positions, cluster, h, raise);
                let v = realized_violation(clustering, inst, &c)?;
                if v > best.1 {
                    best = (c, v);
                }
            }
        }
    }
    Ok(best)
}

pub fn worst_case_violation(
    clustering: &Clustering,
    inst: &Instance,
    np: &NoiseParams,
) -> Result<AuditReport, AuditError> {
    let lay = layout(clustering, inst, np)?;
    let per_cluster = terms(clustering, inst, np, &lay)?;
    let lambda = per_cluster
        .iter()
        .map(|t| t.lower.max(t.upper))
        .fold(0.0, f64::max);
    let (witness, witness_violation) = adversarial_coloring(clustering, inst, np)?;
    let total = np.total_inflow();
    let max_single = np.inflow.iter().copied().max().unwrap_or(0);
    Ok(AuditReport {
        lambda,
        per_cluster,
        cap_loose: witness_violation < lambda - ATTAIN_EPS,
        witness,
        witness_violation,
        cost: cost(clustering, inst),
        bound: (total > 0).then(|| 2.0 / total as f64),
        bound_single_group: (max_single > 0).then(|| 2.0 / max_single as f64),
    })
}

/// Largest distance from a point to its center; 0 for a single point.
pub fn cost(clustering: &Clustering, inst: &Instance) -> f64 {
    assignment_cost(inst, &clustering.assignment)
}
