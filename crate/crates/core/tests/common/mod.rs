//! Exhaustive test-only oracles and random small fixtures shared by the
//! integration tests and the acceptance harness.

#![allow(dead_code)]

use rand::Rng;
use rfc_core::instance::{GroupAssignment, Instance, ProportionBounds};
use rfc_core::lp::FractionalAssignment;
use rfc_core::noise::{auto_bounds, NoiseParams};
use rfc_core::rounding::{build_network, check_rounding, max_flow_integral, round};
use rfc_core::uncertainty::{enumerate_uncertainty_set, Coloring};

pub const EPS: f64 = 1e-9;

pub fn fixture_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// The 4-point toy: two red and two blue points, red first.
pub fn toy4(k: usize, bounds: Option<ProportionBounds>) -> Instance {
    Instance::new(
        vec![vec![0.0, 0.0], vec![3.0, 4.0], vec![0.0, 0.0], vec![3.0, 4.0]],
        GroupAssignment::new(vec![0, 0, 1, 1], 2).unwrap(),
        k,
        bounds,
    )
    .unwrap()
}

/// Two coincident mixed pairs ten apart, colored r, b, r, b.
pub fn far_pairs(bounds: ProportionBounds) -> Instance {
    Instance::new(
        vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![10.0, 0.0], vec![10.0, 0.0]],
        GroupAssignment::new(vec![0, 1, 0, 1], 2).unwrap(),
        2,
        Some(bounds),
    )
    .unwrap()
}

/// Raw parameters of a small two-group instance.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub coords: Vec<[u8; 2]>,
    pub labels: Vec<usize>,
    pub k: usize,
    /// m_r⁺ = m_b⁻ = a and m_b⁺ = m_r⁻ = b, clamped to group sizes.
    pub caps: (usize, usize),
    /// `None` uses auto bounds with the given slack.
    pub bounds: Option<(f64, f64)>,
    pub slack: f64,
}

impl Fixture {
    pub fn random<R: Rng>(rng: &mut R, max_n: usize, max_k: usize, max_cap: usize) -> Self {
        let n = rng.gen_range(2..=max_n);
        let coords = (0..n).map(|_| [rng.gen_range(0..5), rng.gen_range(0..5)]).collect();
        let mut labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let bounds = if rng.gen_bool(0.5) {
            let l = rng.gen_range(0.05..0.5);
            let u = rng.gen_range(0.5..0.95);
            Some((l, u))
        } else {
            None
        };
        Self {
            coords,
            labels,
            k: rng.gen_range(1..=max_k.min(n)),
            caps: (rng.gen_range(0..=max_cap), rng.gen_range(0..=max_cap)),
            bounds,
            slack: [0.0, 0.05, 0.15][rng.gen_range(0..3)],
        }
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; 2];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    pub fn noise(&self) -> NoiseParams {
        let s = self.sizes();
        let (a, b) = self.caps;
        // m_r⁺ <= m_b⁻ <= n_b and m_b⁺ <= m_r⁻ <= n_r keep the caps consistent.
        let a = a.min(s[1]);
        let b = b.min(s[0]);
        NoiseParams::from_caps(vec![a, b], vec![b, a], s).unwrap()
    }

    /// The instance with its bounds. Auto bounds fall back to fixed ones when
    /// a group would collapse.
    pub fn instance(&self) -> Instance {
        let feats = self.coords.iter().map(|c| vec![c[0] as f64, c[1] as f64]).collect();
        let groups = GroupAssignment::new(self.labels.clone(), 2).unwrap();
        let inst = Instance::new(feats, groups, self.k, None).unwrap();
        let bounds = match self.bounds {
            Some((l, u)) => ProportionBounds::uniform(2, l, u).unwrap(),
            None => auto_bounds(&inst, &self.noise(), self.slack)
                .unwrap_or_else(|_| ProportionBounds::uniform(2, 0.2, 0.8).unwrap()),
        };
        inst.with_bounds(bounds).unwrap()
    }
}

/// Robust fairness of one cluster from its integral counts, computed
/// directly from the worst-case count rule. An empty cluster passes only
/// with zero caps.
pub fn robust_fair_cluster(counts: &[usize], bounds: &ProportionBounds, np: &NoiseParams) -> bool {
    let size: usize = counts.iter().sum();
    counts.iter().enumerate().all(|(h, &c)| {
        let (c, s) = (c as f64, size as f64);
        c + np.inflow[h] as f64 <= bounds.upper(h) * s + EPS && c - np.outflow[h] as f64 >= bounds.lower(h) * s - EPS
    })
}

/// Per-cluster group counts for an assignment given as positions into `centers`.
fn cluster_counts(positions: &[usize], labels: &[usize], clusters: usize, groups: usize) -> Vec<Vec<usize>> {
    let mut counts = vec![vec![0; groups]; clusters];
    for (j, &p) in positions.iter().enumerate() {
        counts[p][labels[j]] += 1;
    }
    counts
}

/// Calls `visit` on every map from points to positions `0..m`.
fn for_each_assignment(n: usize, m: usize, mut visit: impl FnMut(&[usize])) {
    let mut pos = vec![0usize; n];
    loop {
        visit(&pos);
        let mut i = 0;
        while i < n {
            pos[i] += 1;
            if pos[i] < m {
                break;
            }
            pos[i] = 0;
            i += 1;
        }
        if i == n {
            return;
        }
    }
}

fn subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|mask| mask.count_ones() as usize == size)
        .map(|mask| (0..n).filter(|&i| mask >> i & 1 == 1).collect())
        .collect()
}

/// Optimal robust fair k-center radius by exhaustive search over center
/// sets and integral assignments; `None` when no robust fair clustering
/// exists. Empty clusters are simply unused centers.
pub fn brute_force_rstar(inst: &Instance, np: &NoiseParams) -> Option<f64> {
    let n = inst.len();
    let bounds = inst.require_bounds().unwrap();
    let labels = inst.groups().labels();
    let size = inst.k().min(n);
    let mut best: Option<f64> = None;
    for centers in subsets(n, size) {
        for_each_assignment(n, centers.len(), |pos| {
            let cost = pos
                .iter()
                .enumerate()
                .map(|(j, &p)| inst.dist(j, centers[p]))
                .fold(0.0, f64::max);
            if best.is_some_and(|b| cost >= b) {
                return;
            }
            let counts = cluster_counts(pos, labels, centers.len(), inst.group_count());
            let fair = counts
                .iter()
                .filter(|c| c.iter().sum::<usize>() > 0)
                .all(|c| robust_fair_cluster(c, bounds, np));
            if fair {
                best = Some(cost);
            }
        });
    }
    best
}

/// Whether an integral assignment to exactly `centers` exists with every
/// point within `limit` of its center and every center's cluster robust
/// fair, empty ones included.
pub fn integral_feasible(inst: &Instance, np: &NoiseParams, centers: &[usize], limit: f64) -> bool {
    let n = inst.len();
    let bounds = inst.require_bounds().unwrap();
    let labels = inst.groups().labels();
    let mut found = false;
    for_each_assignment(n, centers.len(), |pos| {
        if found {
            return;
        }
        if pos.iter().enumerate().any(|(j, &p)| inst.dist(j, centers[p]) > limit) {
            return;
        }
        let counts = cluster_counts(pos, labels, centers.len(), inst.group_count());
        if counts.iter().all(|c| robust_fair_cluster(c, bounds, np)) {
            found = true;
        }
    });
    found
}

/// Violation of the plain proportion bounds under one coloring, clamped at 0.
pub fn violation_under(inst: &Instance, assignment: &[usize], coloring: &Coloring) -> f64 {
    let bounds = inst.require_bounds().unwrap();
    let mut worst = 0.0f64;
    let mut centers: Vec<usize> = assignment.to_vec();
    centers.sort_unstable();
    centers.dedup();
    for &c in &centers {
        let members: Vec<usize> = (0..inst.len()).filter(|&j| assignment[j] == c).collect();
        for h in 0..inst.group_count() {
            let count = members.iter().filter(|&&j| coloring.labels[j] == h).count();
            let p = count as f64 / members.len() as f64;
            worst = worst.max(bounds.lower(h) - p).max(p - bounds.upper(h));
        }
    }
    worst
}

/// Largest violation over the whole enumerated uncertainty set.
pub fn enumerated_max_violation(inst: &Instance, np: &NoiseParams, assignment: &[usize]) -> f64 {
    enumerate_uncertainty_set(inst.groups(), np, 1 << 20)
        .unwrap()
        .iter()
        .map(|c| violation_under(inst, assignment, c))
        .fold(0.0, f64::max)
}

/// Floor and ceiling after treating values within 1e-6 of an integer as
/// that integer.
pub fn floor_ceil(m: f64) -> (i64, i64) {
    let r = m.round();
    let m = if (m - r).abs() <= 1e-6 { r } else { m };
    (m.floor() as i64, m.ceil() as i64)
}

/// The rounding guarantees and flow validity, checked against masses recomputed
/// here from the fractional values.
pub fn check_rounding_guarantees(frac: &FractionalAssignment, inst: &Instance) -> Result<(), String> {
    let net = build_network(frac, inst).map_err(|e| e.to_string())?;
    let flow = max_flow_integral(&net).map_err(|e| e.to_string())?;
    if !net.is_valid_flow(&flow) || net.flow_value(&flow) != inst.len() as i64 {
        return Err("invalid flow".into());
    }
    let integral = round(frac, inst).map_err(|e| e.to_string())?;
    let labels = inst.groups().labels();
    let l = inst.group_count();
    let k = frac.centers.len();
    let mut mass = vec![0.0; k];
    let mut pair = vec![vec![0.0; l]; k];
    for (j, row) in frac.values.iter().enumerate() {
        for &(pos, v) in row {
            mass[pos] += v;
            pair[pos][labels[j]] += v;
        }
        let pos = integral.positions[j];
        if !row.iter().any(|&(p, v)| p == pos && v > 0.0) {
            return Err(format!("point {j} sent to unsupported center"));
        }
    }
    let within = |count: usize, m: f64| {
        let (lo, hi) = floor_ceil(m);
        lo <= count as i64 && count as i64 <= hi
    };
    let sizes = integral.cluster_sizes();
    let groups = integral.cluster_group_sizes(labels, l);
    for i in 0..k {
        if !within(sizes[i], mass[i]) {
            return Err(format!("center {i}: {} vs mass {}", sizes[i], mass[i]));
        }
        for h in 0..l {
            if !within(groups[i][h], pair[i][h]) {
                return Err(format!("center {i} group {h}: {} vs mass {}", groups[i][h], pair[i][h]));
            }
        }
    }
    let support = frac.support_radius(inst);
    let realized = (0..inst.len())
        .map(|j| inst.dist(j, integral.centers[integral.positions[j]]))
        .fold(0.0, f64::max);
    if realized > support {
        return Err(format!("radius grew from {support} to {realized}"));
    }
    if !check_rounding(frac, &integral, labels, l).is_empty() {
        return Err("check_rounding disagrees".into());
    }
    Ok(())
}
