//! The feasibility LP that assigns points fractionally to a fixed center set
//! while every (center, group) pair satisfies the robust proportion rows.
//!
//! Points with the same group and the same set of admissible centers are
//! interchangeable in the LP, so the solver works on one aggregated variable
//! per (class, center) and spreads the result evenly over the class.

pub mod simplex;

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Instance, InstanceError};
use crate::noise::NoiseParams;

/// Default feasibility and validation tolerance, in point-count units.
pub const DEFAULT_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("the center set is empty")]
    EmptyCenters,
    #[error("center id {id} out of range for {n} points")]
    CenterOutOfRange { id: usize, n: usize },
    #[error("noise parameters cover {got} groups, the instance has {expected}")]
    Arity { got: usize, expected: usize },
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("indeterminate feasibility: residual {residual:e} lies in ({tol:e}, {upper:e}]", upper = 10.0 * tol)]
    Indeterminate { residual: f64, tol: f64 },
    #[error("simplex hit its pivot limit ({0})")]
    IterationLimit(usize),
    #[error("solver returned an assignment that fails validation: {0}")]
    Validation(#[from] ValidationError),
}

#[derive(Debug, Error, PartialEq)]
pub enum ValidationError {
    #[error("point {point}: assignment mass {mass} differs from 1")]
    Mass { point: usize, mass: f64 },
    #[error("point {point}: mass {value} on center {center} outside [0, 1]")]
    Range {
        point: usize,
        center: usize,
        value: f64,
    },
    #[error("point {point} has mass on center {center} beyond 3R")]
    Distance { point: usize, center: usize },
    #[error("center {center}, group {group}: {side} proportion row violated by {excess:e}")]
    Proportion {
        center: usize,
        group: usize,
        side: &'static str,
        excess: f64,
    },
    #[error("assignment covers {got} points, instance has {expected}")]
    Shape { got: usize, expected: usize },
}

/// Points sharing a group and an admissible-center set.
#[derive(Debug, Clone, PartialEq)]
struct PointClass {
    group: usize,
    /// Positions into `LpModel::centers`.
    allowed: Vec<usize>,
    members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpModel {
    centers: Vec<usize>,
    radius: f64,
    groups: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    inflow: Vec<usize>,
    outflow: Vec<usize>,
    point_groups: Vec<usize>,
    classes: Vec<PointClass>,
    /// Some point has no center within 3R.
    uncovered: Option<usize>,
}

pub fn build_lp(
    inst: &Instance,
    np: &NoiseParams,
    centers: &[usize],
    radius: f64,
) -> Result<LpModel, LpError> {
    if centers.is_empty() {
        return Err(LpError::EmptyCenters);
    }
    let n = inst.len();
    if let Some(&id) = centers.iter().find(|&&c| c >= n) {
        return Err(LpError::CenterOutOfRange { id, n });
    }
    let groups = inst.group_count();
    if np.group_count() != groups {
        return Err(LpError::Arity {
            got: np.group_count(),
            expected: groups,
        });
    }
    let bounds = inst.require_bounds()?;
    let reach = 3.0 * radius;
    let allowed: Vec<Vec<usize>> = crate::exec::map_indices(inst.exec(), n, |j| {
        centers
            .iter()
            .enumerate()
            .filter(|&(_, &c)| inst.dist(c, j) <= reach)
            .map(|(pos, _)| pos)
            .collect()
    });
    let uncovered = allowed.iter().position(Vec::is_empty);
    let mut by_key: BTreeMap<(usize, Vec<usize>), Vec<usize>> = BTreeMap::new();
    for (j, a) in allowed.into_iter().enumerate() {
        by_key.entry((inst.groups().label(j), a)).or_default().push(j);
    }
    let classes = by_key
        .into_iter()
        .map(|((group, allowed), members)| PointClass {
            group,
            allowed,
            members,
        })
        .collect();
    Ok(LpModel {
        centers: centers.to_vec(),
        radius,
        groups,
        lower: bounds.lowers().to_vec(),
        upper: bounds.uppers().to_vec(),
        inflow: np.inflow.clone(),
        outflow: np.outflow.clone(),
        point_groups: inst.groups().labels().to_vec(),
        classes,
        uncovered,
    })
}

impl LpModel {
    pub fn centers(&self) -> &[usize] {
        &self.centers
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Number of `x_ij` variables, one per admissible (center, point) pair.
    pub fn variable_count(&self) -> usize {
        self.classes
            .iter()
            .map(|c| c.allowed.len() * c.members.len())
            .sum()
    }

    /// One assignment row per point.
    pub fn equality_count(&self) -> usize {
        self.point_groups.len()
    }

    /// Two proportion rows per (center, group).
    pub fn inequality_count(&self) -> usize {
        2 * self.centers.len() * self.groups
    }

    /// Number of point classes the solver aggregates over.
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// A point with no center within 3R, if any.
    pub fn uncovered_point(&self) -> Option<usize> {
        self.uncovered
    }

    pub fn is_trivially_infeasible(&self) -> bool {
        self.uncovered.is_some()
    }

    /// Aggregated problem: column `t` is the pair `columns[t] = (class, center position)`.
    fn aggregated(&self) -> (simplex::Problem, Vec<(usize, usize)>) {
        let mut columns = Vec::new();
        let mut equalities = Vec::with_capacity(self.classes.len());
        for (ci, class) in self.classes.iter().enumerate() {
            let coeffs = class
                .allowed
                .iter()
                .map(|&pos| {
                    columns.push((ci, pos));
                    (columns.len() - 1, 1.0)
                })
                .collect();
            equalities.push(simplex::Row {
                coeffs,
                rhs: class.members.len() as f64,
            });
        }
        let mut by_center: Vec<Vec<usize>> = vec![Vec::new(); self.centers.len()];
        for (t, &(_, pos)) in columns.iter().enumerate() {
            by_center[pos].push(t);
        }
        let mut inequalities = Vec::with_capacity(self.inequality_count());
        for cols in &by_center {
            for h in 0..self.groups {
                let member = |t: usize| self.classes[columns[t].0].group == h;
                // sum_{P_h} x - u_h sum x <= -m_h⁺
                inequalities.push(simplex::Row {
                    coeffs: cols
                        .iter()
                        .map(|&t| (t, f64::from(u8::from(member(t))) - self.upper[h]))
                        .collect(),
                    rhs: -(self.inflow[h] as f64),
                });
                // l_h sum x - sum_{P_h} x <= -m_h⁻
                inequalities.push(simplex::Row {
                    coeffs: cols
                        .iter()
                        .map(|&t| (t, self.lower[h] - f64::from(u8::from(member(t)))))
                        .collect(),
                    rhs: -(self.outflow[h] as f64),
                });
            }
        }
        let problem = simplex::Problem {
            columns: columns.len(),
            equalities,
            inequalities,
        };
        (problem, columns)
    }

    /// Write the unaggregated model in CPLEX LP text format.
    pub fn write_lp<W: Write>(&self, mut out: W) -> io::Result<()> {
        let name = |pos: usize, j: usize| format!("x_{}_{}", self.centers[pos], j);
        let mut vars: Vec<Vec<(usize, usize)>> = vec![Vec::new(); self.centers.len()];
        writeln!(out, "\\ radius {}", self.radius)?;
        writeln!(out, "Minimize\n obj: 0")?;
        writeln!(out, "Subject To")?;
        let mut per_point: Vec<&[usize]> = vec![&[]; self.point_groups.len()];
        for class in &self.classes {
            for &j in &class.members {
                per_point[j] = &class.allowed;
            }
        }
        for (j, allowed) in per_point.iter().enumerate() {
            let terms: Vec<String> = allowed.iter().map(|&p| name(p, j)).collect();
            writeln!(out, " assign_{j}: {} = 1", terms.join(" + "))?;
            for &p in allowed.iter() {
                vars[p].push((j, self.point_groups[j]));
            }
        }
        for (pos, members) in vars.iter().enumerate() {
            let c = self.centers[pos];
            for h in 0..self.groups {
                let upper: Vec<String> = members
                    .iter()
                    .map(|&(j, g)| {
                        format!("{:+} {}", f64::from(u8::from(g == h)) - self.upper[h], name(pos, j))
                    })
                    .collect();
                let lower: Vec<String> = members
                    .iter()
                    .map(|&(j, g)| {
                        format!("{:+} {}", self.lower[h] - f64::from(u8::from(g == h)), name(pos, j))
                    })
                    .collect();
                let zero = |v: &Vec<String>| if v.is_empty() { "0 x_dummy".to_string() } else { v.join(" ") };
                writeln!(out, " upper_{c}_{h}: {} <= -{}", zero(&upper), self.inflow[h])?;
                writeln!(out, " lower_{c}_{h}: {} <= -{}", zero(&lower), self.outflow[h])?;
            }
        }
        writeln!(out, "End")
    }
}

/// Per point, the `(center position, value)` pairs with positive mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalAssignment {
    pub centers: Vec<usize>,
    pub radius: f64,
    pub values: Vec<Vec<(usize, f64)>>,
}

impl FractionalAssignment {
    /// `|C_i^LP|` for every center position.
    pub fn center_mass(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.centers.len()];
        for row in &self.values {
            for &(pos, v) in row {
                mass[pos] += v;
            }
        }
        mass
    }

    /// `|C_{i,h}^LP|` indexed `[center position][group]`.
    pub fn group_mass(&self, labels: &[usize], groups: usize) -> Vec<Vec<f64>> {
        let mut mass = vec![vec![0.0; groups]; self.centers.len()];
        for (j, row) in self.values.iter().enumerate() {
            for &(pos, v) in row {
                mass[pos][labels[j]] += v;
            }
        }
        mass
    }

    /// Largest `d(i, j)` over pairs carrying positive mass.
    pub fn support_radius(&self, inst: &Instance) -> f64 {
        self.values
            .iter()
            .enumerate()
            .flat_map(|(j, row)| row.iter().map(move |&(pos, _)| (j, pos)))
            .map(|(j, pos)| inst.dist(self.centers[pos], j))
            .fold(0.0, f64::max)
    }

    pub fn validate(&self, inst: &Instance, np: &NoiseParams, tol: f64) -> Result<(), ValidationError> {
        let n = inst.len();
        if self.values.len() != n {
            return Err(ValidationError::Shape {
                got: self.values.len(),
                expected: n,
            });
        }
        let reach = 3.0 * self.radius;
        for (j, row) in self.values.iter().enumerate() {
            let mut mass = 0.0;
            for &(pos, v) in row {
                let center = self.centers[pos];
                if !(0.0..=1.0).contains(&v) {
                    return Err(ValidationError::Range {
                        point: j,
                        center,
                        value: v,
                    });
                }
                if v > 0.0 && inst.dist(center, j) > reach {
                    return Err(ValidationError::Distance { point: j, center });
                }
                mass += v;
            }
            if (mass - 1.0).abs() > tol {
                return Err(ValidationError::Mass { point: j, mass });
            }
        }
        let bounds = inst.require_bounds().map_err(|_| ValidationError::Shape {
            got: 0,
            expected: inst.group_count(),
        })?;
        let total = self.center_mass();
        let by_group = self.group_mass(inst.groups().labels(), inst.group_count());
        for (pos, &center) in self.centers.iter().enumerate() {
            for (h, &mass) in by_group[pos].iter().enumerate() {
                let upper = mass + np.inflow[h] as f64 - bounds.upper(h) * total[pos];
                if upper > tol {
                    return Err(ValidationError::Proportion {
                        center,
                        group: h,
                        side: "upper",
                        excess: upper,
                    });
                }
                let lower = bounds.lower(h) * total[pos] - (mass - np.outflow[h] as f64);
                if lower > tol {
                    return Err(ValidationError::Proportion {
                        center,
                        group: h,
                        side: "lower",
                        excess: lower,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible(FractionalAssignment),
    Infeasible,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

/// Decide feasibility. A feasible verdict comes with a basic solution that
/// has passed [`FractionalAssignment::validate`] at `tol`.
pub fn solve_feasibility(
    model: &LpModel,
    inst: &Instance,
    np: &NoiseParams,
    tol: f64,
) -> Result<Feasibility, LpError> {
    if model.is_trivially_infeasible() {
        return Ok(Feasibility::Infeasible);
    }
    let (problem, columns) = model.aggregated();
    let limit = 50 * (problem.columns + problem.equalities.len() + problem.inequalities.len()) + 1000;
    let sol = simplex::phase_one(&problem, limit).map_err(|e| LpError::IterationLimit(e.0))?;
    if sol.residual > 10.0 * tol {
        return Ok(Feasibility::Infeasible);
    }
    if sol.residual > tol {
        return Err(LpError::Indeterminate {
            residual: sol.residual,
            tol,
        });
    }
    let mut values: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.point_groups.len()];
    for (t, &(ci, pos)) in columns.iter().enumerate() {
        let class = &model.classes[ci];
        let share = (sol.x[t] / class.members.len() as f64).clamp(0.0, 1.0);
        if share > 0.0 {
            for &j in &class.members {
                values[j].push((pos, share));
            }
        }
    }
    for row in &mut values {
        row.sort_by_key(|&(pos, _)| pos);
    }
    let frac = FractionalAssignment {
        centers: model.centers.clone(),
        radius: model.radius,
        values,
    };
    frac.validate(inst, np, tol)?;
    Ok(Feasibility::Feasible(frac))
}
