//! Membership in, enumeration of, and counting of the uncertainty set.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::GroupAssignment;
use crate::noise::NoiseParams;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UncertaintyError {
    #[error("coloring covers {got} points, base covers {expected}")]
    Universe { got: usize, expected: usize },
    #[error("point {point} has label {label}, only {groups} groups exist")]
    Label {
        point: usize,
        label: usize,
        groups: usize,
    },
    #[error("noise parameters cover {got} groups, base has {expected}")]
    Arity { got: usize, expected: usize },
    #[error("uncertainty set has more than {limit} members")]
    BudgetExceeded { limit: usize },
}

/// A candidate group assignment over the same points as the base.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Coloring {
    pub labels: Vec<usize>,
}

impl Coloring {
    pub fn new(labels: Vec<usize>) -> Self {
        Self { labels }
    }

    pub fn from_base(base: &GroupAssignment) -> Self {
        Self {
            labels: base.labels().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Relabeling counts of a candidate against the base.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Deviation {
    /// `moved[g][h]`: points with base label `g` and candidate label `h`.
    pub moved: Vec<Vec<usize>>,
}

impl Deviation {
    pub fn zero(groups: usize) -> Self {
        Self {
            moved: vec![vec![0; groups]; groups],
        }
    }

    pub fn lost(&self, g: usize) -> usize {
        self.moved[g]
            .iter()
            .enumerate()
            .filter(|&(h, _)| h != g)
            .map(|(_, &c)| c)
            .sum()
    }

    pub fn gained(&self, h: usize) -> usize {
        (0..self.moved.len())
            .filter(|&g| g != h)
            .map(|g| self.moved[g][h])
            .sum()
    }

    pub fn total(&self) -> usize {
        (0..self.moved.len()).map(|g| self.lost(g)).sum()
    }

    /// Whether moving one more point from `g` to `h` stays within every cap.
    pub fn can_move(&self, np: &NoiseParams, g: usize, h: usize) -> bool {
        g != h
            && self.lost(g) < np.outflow[g]
            && self.gained(h) < np.inflow[h]
            && self.moved[g][h] < np.pair_flow[g][h]
            && self.total() < np.aggregate_star
    }

    pub fn within(&self, np: &NoiseParams) -> bool {
        let l = self.moved.len();
        (0..l).all(|g| {
            self.lost(g) <= np.outflow[g]
                && self.gained(g) <= np.inflow[g]
                && (0..l).all(|h| g == h || self.moved[g][h] <= np.pair_flow[g][h])
        }) && self.total() <= np.aggregate_star
    }
}

fn check_universe(
    base: &GroupAssignment,
    candidate: &Coloring,
    np: &NoiseParams,
) -> Result<(), UncertaintyError> {
    if candidate.len() != base.len() {
        return Err(UncertaintyError::Universe {
            got: candidate.len(),
            expected: base.len(),
        });
    }
    if np.group_count() != base.group_count() {
        return Err(UncertaintyError::Arity {
            got: np.group_count(),
            expected: base.group_count(),
        });
    }
    let groups = base.group_count();
    if let Some((point, &label)) = candidate
        .labels
        .iter()
        .enumerate()
        .find(|&(_, &c)| c >= groups)
    {
        return Err(UncertaintyError::Label {
            point,
            label,
            groups,
        });
    }
    Ok(())
}

/// Per-group loss and gain caps, the joint cap m* on total relabelings, and
/// the pairwise caps `pair_flow[g][h]` on points moved from `g` to `h`.
pub fn in_uncertainty_set(
    base: &GroupAssignment,
    candidate: &Coloring,
    np: &NoiseParams,
) -> Result<bool, UncertaintyError> {
    check_universe(base, candidate, np)?;
    let mut dev = Deviation::zero(base.group_count());
    for (&g, &h) in base.labels().iter().zip(&candidate.labels) {
        dev.moved[g][h] += 1;
    }
    Ok(dev.within(np))
}

/// All members of the uncertainty set in lexicographic label order. Branches
/// that already break a cap are pruned, so the cost is proportional to the
/// output rather than to ℓⁿ.
pub fn enumerate_uncertainty_set(
    base: &GroupAssignment,
    np: &NoiseParams,
    limit: usize,
) -> Result<Vec<Coloring>, UncertaintyError> {
    check_universe(base, &Coloring::from_base(base), np)?;
    let mut out = Vec::new();
    let mut current = vec![0usize; base.len()];
    let mut dev = Deviation::zero(base.group_count());
    descend(base, np, limit, 0, &mut current, &mut dev, &mut out)?;
    Ok(out)
}

fn descend(
    base: &GroupAssignment,
    np: &NoiseParams,
    limit: usize,
    j: usize,
    current: &mut Vec<usize>,
    dev: &mut Deviation,
    out: &mut Vec<Coloring>,
) -> Result<(), UncertaintyError> {
    if j == base.len() {
        if out.len() == limit {
            return Err(UncertaintyError::BudgetExceeded { limit });
        }
        out.push(Coloring::new(current.clone()));
        return Ok(());
    }
    let g = base.label(j);
    for h in 0..base.group_count() {
        if h != g && !dev.can_move(np, g, h) {
            continue;
        }
        dev.moved[g][h] += 1;
        current[j] = h;
        descend(base, np, limit, j + 1, current, dev, out)?;
        dev.moved[g][h] -= 1;
    }
    Ok(())
}

/// `sum_{0<=i,j<=m} C(n1,i) C(n2,j)`, the size of the two-color set where each
/// color may lose at most `m` of its points.
pub fn count_two_color_symmetric(n1: u64, n2: u64, m: u64) -> BigUint {
    partial_binomial_sum(n1, m) * partial_binomial_sum(n2, m)
}

fn partial_binomial_sum(n: u64, m: u64) -> BigUint {
    let mut term = BigUint::from(1u32);
    let mut total = term.clone();
    for i in 1..=m.min(n) {
        term = term * BigUint::from(n - i + 1) / BigUint::from(i);
        total += &term;
    }
    total
}
