//! Robust fair k-center clustering when group labels may be wrong.
//!
//! Given points with possibly noisy group labels and per-group caps on how
//! many labels can be wrong, [`solver::robust_solve`] finds centers and an
//! assignment whose per-cluster group shares stay within the proportion
//! bounds for every labeling the caps allow, up to a small rounding
//! violation, at no more than three times the optimal radius.
//! [`audit::worst_case_violation`] measures that violation for any clustering.

pub mod audit;
pub mod centers;
pub mod exec;
pub mod instance;
pub mod lp;
pub mod noise;
pub mod rounding;
pub mod solver;
pub mod sweep;
pub mod uncertainty;

pub use audit::{adversarial_coloring, cost, realized_violation, worst_case_violation, AuditReport, Clustering};
pub use centers::{get_centers, vanilla_kcenter, CenterPolicy};
pub use exec::Execution;
pub use instance::{
    candidate_radii, load_csv, BoundsSpec, CsvSpec, GroupAssignment, Instance, InstanceError, Normalization,
    ProportionBounds,
};
pub use lp::{build_lp, solve_feasibility, Feasibility, FractionalAssignment, LpModel};
pub use noise::{auto_bounds, check_consistency, check_feasible_bounds, derive, ErrorModel, ErrorModelSpec, NoiseParams};
pub use rounding::{build_network, max_flow_integral, round, FlowNetwork, IntegralAssignment};
pub use solver::{deterministic_fair_solve, evaluate_radius, robust_solve, Selection, Solution, SolveError, SolveOptions};
pub use uncertainty::{count_two_color_symmetric, enumerate_uncertainty_set, in_uncertainty_set, Coloring};
