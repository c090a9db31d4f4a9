//! Center selection by ball marking, plus a farthest-first baseline.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec;
use crate::instance::{Instance, InstanceError};

/// Which unmarked point the marking loop picks next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterPolicy {
    #[default]
    LowestId,
    /// Visit points in a seeded random permutation.
    Random(u64),
}

/// Mark balls of radius `2R` until every point is covered. Returns the picked
/// centers in selection order.
pub fn get_centers(inst: &Instance, radius: f64, policy: CenterPolicy) -> Vec<usize> {
    get_centers_bounded(inst, radius, policy, usize::MAX)
}

/// Like [`get_centers`], but stops as soon as more than `cap` centers have
/// been picked. The result then has `cap + 1` entries and no coverage guarantee.
pub fn get_centers_bounded(
    inst: &Instance,
    radius: f64,
    policy: CenterPolicy,
    cap: usize,
) -> Vec<usize> {
    let n = inst.len();
    let order: Vec<usize> = match policy {
        CenterPolicy::LowestId => (0..n).collect(),
        CenterPolicy::Random(seed) => {
            let mut v: Vec<usize> = (0..n).collect();
            v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            v
        }
    };
    let reach = 2.0 * radius;
    let mut marked = vec![false; n];
    let mut centers = Vec::new();
    for &j in &order {
        if marked[j] {
            continue;
        }
        centers.push(j);
        if centers.len() > cap {
            break;
        }
        exec::for_each_mut(inst.exec(), &mut marked, |p, m| {
            if !*m && inst.dist(j, p) <= reach {
                *m = true;
            }
        });
    }
    centers
}

/// Farthest-first traversal seeded at point 0, ties broken toward the lowest id.
pub fn vanilla_kcenter(inst: &Instance, k: usize) -> Result<Vec<usize>, InstanceError> {
    let n = inst.len();
    if k == 0 || k > n {
        return Err(InstanceError::KOutOfRange { k, n });
    }
    let mut centers = vec![0usize];
    let mut nearest: Vec<f64> = exec::map_indices(inst.exec(), n, |p| inst.dist(0, p));
    // chosen points must not be picked again when coordinates repeat
    nearest[0] = f64::NEG_INFINITY;
    while centers.len() < k {
        let mut best = 0usize;
        for p in 1..n {
            if nearest[p] > nearest[best] {
                best = p;
            }
        }
        centers.push(best);
        nearest[best] = f64::NEG_INFINITY;
        exec::for_each_mut(inst.exec(), &mut nearest, |p, d| {
            *d = d.min(inst.dist(best, p));
        });
    }
    Ok(centers)
}
