mod common;

use common::{check_rounding_guarantees as check_all, far_pairs, fixture_path, floor_ceil, Fixture};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rfc_core::centers::vanilla_kcenter;
use rfc_core::instance::{load_csv, CsvSpec, GroupAssignment, Instance, ProportionBounds};
use rfc_core::lp::{build_lp, solve_feasibility, Feasibility, FractionalAssignment, DEFAULT_TOL};
use rfc_core::noise::{auto_bounds, NoiseParams};
use rfc_core::rounding::{build_network, max_flow_integral, round, FlowNetwork, Node};
use rfc_core::solver::{robust_solve, SolveOptions};

fn arcs_into(net: &FlowNetwork, node: Node) -> Vec<(i64, i64)> {
    let idx = net.nodes.iter().position(|&n| n == node).unwrap();
    net.arcs.iter().filter(|a| a.to == idx).map(|a| (a.lower, a.upper)).collect()
}

fn arcs_out_of(net: &FlowNetwork, node: Node) -> Vec<(i64, i64)> {
    let idx = net.nodes.iter().position(|&n| n == node).unwrap();
    net.arcs.iter().filter(|a| a.from == idx).map(|a| (a.lower, a.upper)).collect()
}

#[test]
fn integral_input_is_tight_and_unchanged() {
    let inst = far_pairs(ProportionBounds::uniform(2, 0.25, 0.75).unwrap());
    let frac = FractionalAssignment {
        centers: vec![0, 2],
        radius: 0.0,
        values: vec![vec![(0, 1.0)], vec![(0, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)]],
    };
    let net = build_network(&frac, &inst).unwrap();
    for pos in 0..2 {
        assert!(arcs_out_of(&net, Node::Center(pos)).iter().all(|&(lo, hi)| lo == hi));
        for h in 0..2 {
            assert!(arcs_out_of(&net, Node::Pair(pos, h)).iter().all(|&(lo, hi)| lo == hi));
        }
    }
    let integral = round(&frac, &inst).unwrap();
    assert_eq!(integral.assignment(), vec![0, 0, 2, 2]);
    check_all(&frac, &inst).unwrap();
}

#[test]
fn half_and_half() {
    let inst = Instance::new(
        vec![vec![0.0], vec![1.0]],
        GroupAssignment::new(vec![0, 0], 1).unwrap(),
        2,
        None,
    )
    .unwrap();
    let frac = FractionalAssignment {
        centers: vec![0, 1],
        radius: 1.0,
        values: vec![vec![(0, 0.5), (1, 0.5)], vec![(0, 0.5), (1, 0.5)]],
    };
    let net = build_network(&frac, &inst).unwrap();
    assert_eq!(arcs_out_of(&net, Node::Center(0)), vec![(1, 1)]);
    assert_eq!(arcs_out_of(&net, Node::Center(1)), vec![(1, 1)]);
    let flow = max_flow_integral(&net).unwrap();
    assert_eq!(net.flow_value(&flow), 2);
    assert!(net.is_valid_flow(&flow));
    let integral = round(&frac, &inst).unwrap();
    assert_eq!(integral.cluster_sizes(), vec![1, 1]);
}

#[test]
fn relaxed_far_pairs_lp_bounds_match_column_sums() {
    let inst = far_pairs(ProportionBounds::uniform(2, 0.25, 0.75).unwrap());
    let np = NoiseParams::zero(vec![2, 2]);
    let centers = vanilla_kcenter(&inst, 2).unwrap();
    let model = build_lp(&inst, &np, &centers, inst.max_distance()).unwrap();
    let Feasibility::Feasible(frac) = solve_feasibility(&model, &inst, &np, DEFAULT_TOL).unwrap() else {
        panic!("relaxed fixture is feasible");
    };
    let net = build_network(&frac, &inst).unwrap();
    let labels = inst.groups().labels();
    for pos in 0..2 {
        let mass: f64 = frac.values.iter().flatten().filter(|&&(p, _)| p == pos).map(|&(_, v)| v).sum();
        assert_eq!(arcs_out_of(&net, Node::Center(pos)), vec![floor_ceil(mass)]);
        for h in 0..2 {
            let col: f64 = frac
                .values
                .iter()
                .enumerate()
                .filter(|&(j, _)| labels[j] == h)
                .flat_map(|(_, row)| row.iter().filter(|&&(p, _)| p == pos).map(|&(_, v)| v))
                .sum();
            if col > 0.0 {
                assert_eq!(arcs_out_of(&net, Node::Pair(pos, h)), vec![floor_ceil(col)]);
                assert!(!arcs_into(&net, Node::Pair(pos, h)).is_empty());
            }
        }
    }
    check_all(&frac, &inst).unwrap();
}

#[test]
fn desk_scale_lp_solution_rounds_to_full_flow() {
    let spec = CsvSpec::new(&["age", "balance", "duration"], "marital", 10);
    let inst = load_csv(fixture_path("bank_like_500.csv"), &spec).unwrap();
    let np = NoiseParams::uniform(5, inst.groups().sizes()).unwrap();
    let bounds = auto_bounds(&inst, &np, 0.0).unwrap();
    let inst = inst.with_bounds(bounds).unwrap();
    let sol = robust_solve(&inst, &np, &SolveOptions::default()).unwrap();
    check_all(sol.fractional_trace.as_ref().unwrap(), &inst).unwrap();
}

/// A random fractional assignment: each point spreads unit mass over a
/// random nonempty subset of the centers with small integer weights.
fn random_frac() -> impl Strategy<Value = (Vec<usize>, usize, Vec<Vec<u8>>)> {
    (1usize..=10, 1usize..=4, 1usize..=3).prop_flat_map(|(n, k, l)| {
        let k = k.min(n);
        (
            prop::collection::vec(0..l, n),
            Just(k),
            prop::collection::vec(prop::collection::vec(0u8..4, k), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn synthetic_fractions_round_within_floor_and_ceil((labels, k, weights) in random_frac()) {
        let n = labels.len();
        let groups = labels.iter().max().unwrap() + 1;
        let inst = Instance::new(
            (0..n).map(|j| vec![j as f64, (j * j % 7) as f64]).collect(),
            GroupAssignment::new(labels, groups).unwrap(),
            k,
            None,
        )
        .unwrap();
        let values = weights
            .iter()
            .map(|w| {
                let mut w = w.clone();
                if w.iter().all(|&x| x == 0) {
                    w[0] = 1;
                }
                let total: u32 = w.iter().map(|&x| x as u32).sum();
                w.iter()
                    .enumerate()
                    .filter(|&(_, &x)| x > 0)
                    .map(|(p, &x)| (p, x as f64 / total as f64))
                    .collect()
            })
            .collect();
        let frac = FractionalAssignment { centers: (0..k).collect(), radius: inst.max_distance(), values };
        let checked = check_all(&frac, &inst);
        prop_assert!(checked.is_ok(), "{:?}", checked);
    }

    #[test]
    fn solver_fractions_round_within_floor_and_ceil(seed in any::<u64>()) {
        let fx = Fixture::random(&mut ChaCha8Rng::seed_from_u64(seed), 8, 3, 2);
        let inst = fx.instance();
        if let Ok(sol) = robust_solve(&inst, &fx.noise(), &SolveOptions::default()) {
            let frac = sol.fractional_trace.as_ref().unwrap();
            let checked = check_all(frac, &inst);
            prop_assert!(checked.is_ok(), "{:?}", checked);
            prop_assert!(sol.cost <= 3.0 * sol.found_radius + 1e-9);
        }
    }
}
