//! Integral rounding of a fractional assignment through a flow network whose
//! arc bounds are the floors and ceilings of the fractional cluster masses.

pub mod dinic;

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::Instance;
use crate::lp::FractionalAssignment;
use dinic::Dinic;

/// Masses within this distance of an integer are treated as that integer.
pub const SNAP_EPS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum RoundingError {
    #[error("fractional assignment covers {got} points, instance has {expected}")]
    Shape { got: usize, expected: usize },
    #[error("point {point}: invalid fractional value {value}")]
    Value { point: usize, value: f64 },
    #[error("no flow satisfies the arc bounds (found {found} of {required} units)")]
    NoFeasibleFlow { found: i64, required: i64 },
    #[error("flow of value {found} falls short of {required}")]
    ShortFlow { found: i64, required: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Node {
    Source,
    Sink,
    Point(usize),
    /// `(center position, group)`
    Pair(usize, usize),
    Center(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowArc {
    pub from: usize,
    pub to: usize,
    pub lower: i64,
    pub upper: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowNetwork {
    pub nodes: Vec<Node>,
    pub arcs: Vec<FlowArc>,
    pub source: usize,
    pub sink: usize,
    pub points: usize,
    /// For each point arc `s -> j -> (i,h)`, the center position `i`, keyed by arc id.
    pair_arc_center: Vec<Option<usize>>,
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= SNAP_EPS {
        r
    } else {
        v
    }
}

fn floor_ceil(v: f64) -> (i64, i64) {
    let v = snap(v);
    (v.floor() as i64, v.ceil() as i64)
}

pub fn build_network(frac: &FractionalAssignment, inst: &Instance) -> Result<FlowNetwork, RoundingError> {
    let n = inst.len();
    if frac.values.len() != n {
        return Err(RoundingError::Shape {
            got: frac.values.len(),
            expected: n,
        });
    }
    for (point, row) in frac.values.iter().enumerate() {
        if let Some(&(_, value)) = row.iter().find(|&&(_, v)| !(v.is_finite() && (0.0..=1.0).contains(&v))) {
            return Err(RoundingError::Value { point, value });
        }
    }
    let groups = inst.group_count();
    let labels = inst.groups().labels();
    let k = frac.centers.len();
    let center_mass = frac.center_mass();
    let pair_mass = frac.group_mass(labels, groups);

    let mut nodes = vec![Node::Source, Node::Sink];
    let point_node = |j: usize| 2 + j;
    nodes.extend((0..n).map(Node::Point));
    let mut touched = vec![vec![false; groups]; k];
    for (j, row) in frac.values.iter().enumerate() {
        for &(pos, v) in row {
            if v > 0.0 {
                touched[pos][labels[j]] = true;
            }
        }
    }
    let mut pair_node = vec![vec![None; groups]; k];
    for (pos, row) in touched.iter().enumerate() {
        for (h, &t) in row.iter().enumerate() {
            if t {
                pair_node[pos][h] = Some(nodes.len());
                nodes.push(Node::Pair(pos, h));
            }
        }
    }
    let center_base = nodes.len();
    nodes.extend((0..k).map(Node::Center));

    let mut arcs = Vec::new();
    let mut pair_arc_center = Vec::new();
    for j in 0..n {
        arcs.push(FlowArc {
            from: 0,
            to: point_node(j),
            lower: 0,
            upper: 1,
        });
        pair_arc_center.push(None);
    }
    for (j, row) in frac.values.iter().enumerate() {
        for &(pos, v) in row {
            if v > 0.0 {
                let to = pair_node[pos][labels[j]].expect("pair node exists for positive mass");
                arcs.push(FlowArc {
                    from: point_node(j),
                    to,
                    lower: 0,
                    upper: 1,
                });
                pair_arc_center.push(Some(pos));
            }
        }
    }
    for (pos, row) in pair_node.iter().enumerate() {
        for (h, node) in row.iter().enumerate() {
            if let Some(node) = *node {
                let (lower, upper) = floor_ceil(pair_mass[pos][h]);
                arcs.push(FlowArc {
                    from: node,
                    to: center_base + pos,
                    lower,
                    upper,
                });
                pair_arc_center.push(None);
            }
        }
    }
    for (pos, &m) in center_mass.iter().enumerate() {
        let (lower, upper) = floor_ceil(m);
        arcs.push(FlowArc {
            from: center_base + pos,
            to: 1,
            lower,
            upper,
        });
        pair_arc_center.push(None);
    }
    Ok(FlowNetwork {
        nodes,
        arcs,
        source: 0,
        sink: 1,
        points: n,
        pair_arc_center,
    })
}

impl FlowNetwork {
    /// Graphviz rendering with `[lower, upper]` arc labels.
    pub fn write_dot<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "digraph rounding {{")?;
        writeln!(out, "  rankdir=LR;")?;
        for (id, node) in self.nodes.iter().enumerate() {
            let label = match node {
                Node::Source => "s".to_string(),
                Node::Sink => "t".to_string(),
                Node::Point(j) => format!("p{j}"),
                Node::Pair(i, h) => format!("c{i}g{h}"),
                Node::Center(i) => format!("c{i}"),
            };
            writeln!(out, "  n{id} [label=\"{label}\"];")?;
        }
        for a in &self.arcs {
            writeln!(out, "  n{} -> n{} [label=\"[{},{}]\"];", a.from, a.to, a.lower, a.upper)?;
        }
        writeln!(out, "}}")
    }

    /// Net inflow minus outflow per node under `flow`.
    pub fn imbalance(&self, flow: &[i64]) -> Vec<i64> {
        let mut bal = vec![0i64; self.nodes.len()];
        for (a, &f) in self.arcs.iter().zip(flow) {
            bal[a.from] -= f;
            bal[a.to] += f;
        }
        bal
    }

    /// Whether `flow` respects every arc's bounds and conserves at inner nodes.
    pub fn is_valid_flow(&self, flow: &[i64]) -> bool {
        flow.len() == self.arcs.len()
            && self.arcs.iter().zip(flow).all(|(a, &f)| a.lower <= f && f <= a.upper)
            && self
                .imbalance(flow)
                .iter()
                .enumerate()
                .all(|(v, &b)| v == self.source || v == self.sink || b == 0)
    }

    pub fn flow_value(&self, flow: &[i64]) -> i64 {
        self.imbalance(flow)[self.sink]
    }
}

/// Maximum integral flow honoring lower bounds: find a feasible circulation
/// (super source and sink plus an unbounded `t -> s` arc), then augment from
/// `s` to `t` on what remains.
pub fn max_flow_integral(net: &FlowNetwork) -> Result<Vec<i64>, RoundingError> {
    let v = net.nodes.len();
    let (ss, tt) = (v, v + 1);
    let mut d = Dinic::new(v + 2);
    let mut excess = vec![0i64; v];
    let ids: Vec<usize> = net
        .arcs
        .iter()
        .map(|a| {
            excess[a.to] += a.lower;
            excess[a.from] -= a.lower;
            d.add_edge(a.from, a.to, a.upper - a.lower)
        })
        .collect();
    let unbounded = 4 * (net.points as i64 + 1);
    let back = d.add_edge(net.sink, net.source, unbounded);
    let mut required = 0;
    for (node, &e) in excess.iter().enumerate() {
        if e > 0 {
            d.add_edge(ss, node, e);
            required += e;
        } else if e < 0 {
            d.add_edge(node, tt, -e);
        }
    }
    let found = d.max_flow(ss, tt);
    if found != required {
        return Err(RoundingError::NoFeasibleFlow { found, required });
    }
    d.disable(back);
    d.max_flow(net.source, net.sink);
    let flow: Vec<i64> = net
        .arcs
        .iter()
        .zip(&ids)
        .map(|(a, &id)| a.lower + d.flow(id))
        .collect();
    let value = net.flow_value(&flow);
    if value != net.points as i64 {
        return Err(RoundingError::ShortFlow {
            found: value,
            required: net.points as i64,
        });
    }
    Ok(flow)
}

/// Every point assigned to exactly one center.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegralAssignment {
    pub centers: Vec<usize>,
    /// Center position (into `centers`) per point.
    pub positions: Vec<usize>,
}

impl IntegralAssignment {
    /// Center point id per point.
    pub fn assignment(&self) -> Vec<usize> {
        self.positions.iter().map(|&p| self.centers[p]).collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centers.len()];
        for &p in &self.positions {
            sizes[p] += 1;
        }
        sizes
    }

    pub fn cluster_group_sizes(&self, labels: &[usize], groups: usize) -> Vec<Vec<usize>> {
        let mut sizes = vec![vec![0; groups]; self.centers.len()];
        for (j, &p) in self.positions.iter().enumerate() {
            sizes[p][labels[j]] += 1;
        }
        sizes
    }
}

pub fn round(frac: &FractionalAssignment, inst: &Instance) -> Result<IntegralAssignment, RoundingError> {
    let net = build_network(frac, inst)?;
    let flow = max_flow_integral(&net)?;
    Ok(assignment_from_flow(&net, &flow, frac.centers.clone()))
}

pub(crate) fn assignment_from_flow(net: &FlowNetwork, flow: &[i64], centers: Vec<usize>) -> IntegralAssignment {
    let mut positions = vec![usize::MAX; net.points];
    for (id, a) in net.arcs.iter().enumerate() {
        if let (Some(pos), Node::Point(j)) = (net.pair_arc_center[id], net.nodes[a.from]) {
            if flow[id] == 1 {
                positions[j] = pos;
            }
        }
    }
    IntegralAssignment { centers, positions }
}

/// A failed rounding guarantee.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum RoundingViolation {
    /// A point went to a center it had no fractional mass on.
    Unsupported { point: usize, center: usize },
    CenterCount { center: usize, count: usize, mass: f64 },
    PairCount {
        center: usize,
        group: usize,
        count: usize,
        mass: f64,
    },
}

/// Checks that every integral count lies within the floor and ceiling of its
/// fractional mass and that no point lands where its fractional value was 0.
pub fn check_rounding(
    frac: &FractionalAssignment,
    integral: &IntegralAssignment,
    labels: &[usize],
    groups: usize,
) -> Vec<RoundingViolation> {
    let mut out = Vec::new();
    for (j, &pos) in integral.positions.iter().enumerate() {
        let supported = frac.values[j].iter().any(|&(p, v)| p == pos && v > 0.0);
        if !supported {
            out.push(RoundingViolation::Unsupported {
                point: j,
                center: integral.centers.get(pos).copied().unwrap_or(usize::MAX),
            });
        }
    }
    let within = |count: usize, mass: f64| {
        let (lo, hi) = floor_ceil(mass);
        lo <= count as i64 && count as i64 <= hi
    };
    let sizes = integral.cluster_sizes();
    let pair_sizes = integral.cluster_group_sizes(labels, groups);
    let mass = frac.center_mass();
    let pair_mass = frac.group_mass(labels, groups);
    for pos in 0..frac.centers.len() {
        if !within(sizes[pos], mass[pos]) {
            out.push(RoundingViolation::CenterCount {
                center: frac.centers[pos],
                count: sizes[pos],
                mass: mass[pos],
            });
        }
        for h in 0..groups {
            if !within(pair_sizes[pos][h], pair_mass[pos][h]) {
                out.push(RoundingViolation::PairCount {
                    center: frac.centers[pos],
                    group: h,
                    count: pair_sizes[pos][h],
                    mass: pair_mass[pos][h],
                });
            }
        }
    }
    out
}
