mod common;

use pdra::env::{replay, reset, EnvError};
use pdra::instance::AttributeConfig;
use pdra::instancegen::{generate_tiny, TinyConfig};
use pdra::solvers::{greedy_heuristic, random_policy_rollout, validate_solution, Rule};
use pdra::Solution;

#[test]
fn random_rollouts_are_validator_feasible() {
    let mut r = common::rng(1);
    for inst in common::variant_suite(160, 2) {
        for _ in 0..8 {
            let sol = random_policy_rollout(&inst, &mut r).unwrap();
            let rep = validate_solution(&inst, &sol).unwrap();
            assert!(rep.feasible, "{}: {:?}", inst.attrs.name(), rep.violations);
            assert_eq!(rep.value, sol.value);
            assert_eq!(replay(&inst, &sol).unwrap().value(), sol.value);
        }
    }
}

#[test]
fn validator_and_replay_agree_on_mutations() {
    let mut r = common::rng(3);
    let (mut feasible, mut infeasible) = (0, 0);
    for inst in common::variant_suite(160, 4) {
        let base = random_policy_rollout(&inst, &mut r).unwrap();
        for _ in 0..20 {
            let m = common::mutate(&base, inst.network.len(), &mut r);
            let rep = validate_solution(&inst, &m).unwrap();
            let replayed = replay(&inst, &m);
            assert_eq!(
                rep.feasible,
                replayed.is_ok(),
                "{}: {:?} / {:?} on {:?}",
                inst.attrs.name(),
                rep.violations,
                replayed.err(),
                m.routes
            );
            if rep.feasible {
                feasible += 1;
            } else {
                infeasible += 1;
            }
        }
    }
    assert!(feasible > 50 && infeasible > 1000, "{feasible} / {infeasible}");
}

/// One-drone closed instance with at least two links.
fn basic_tiny(seed: u64) -> pdra::Instance {
    let cfg = TinyConfig {
        drones: 1,
        min_original: 3,
        max_links: 4,
        p_max_range: (3.0, 3.0),
        ..TinyConfig::default()
    };
    generate_tiny(&cfg, &mut common::rng(seed)).unwrap()
}

#[test]
fn artificial_to_artificial_move_breaks_connectivity() {
    let inst = basic_tiny(5);
    let net = &inst.network;
    let o = inst.depot();
    let p = net.incident(o)[0];
    let q = net.artificials().find(|&q| q != p).expect("two links");
    let sol = Solution {
        routes: vec![vec![o, p, q]],
        times: vec![0.0],
        value: 0.0,
    };
    let rep = validate_solution(&inst, &sol).unwrap();
    assert!(rep.has(Rule::Connectivity));
    assert!(replay(&inst, &sol).is_err());
}

#[test]
fn overlong_closed_tour_breaks_the_budget() {
    let mut inst = basic_tiny(6);
    let o = inst.depot();
    let p = inst.network.incident(o)[0];
    let e = inst.network.far_endpoint(p, o);
    let sol = Solution {
        routes: vec![vec![o, p, e, o]],
        times: vec![0.0],
        value: 0.0,
    };
    assert!(validate_solution(&inst, &sol).unwrap().feasible);
    inst.p_max = inst.network.artificial(p).half_time;
    let rep = validate_solution(&inst, &sol).unwrap();
    assert!(rep.has(Rule::Budget));
    assert!(replay(&inst, &sol).is_err());
}

#[test]
fn reassessing_a_link_breaks_exclusivity() {
    let inst = basic_tiny(7);
    let o = inst.depot();
    let p = inst.network.incident(o)[0];
    let e = inst.network.far_endpoint(p, o);
    let sol = Solution {
        routes: vec![vec![o, p, e, p, o]],
        times: vec![0.0],
        value: 0.0,
    };
    assert!(validate_solution(&inst, &sol).unwrap().has(Rule::Exclusivity));
}

#[test]
fn unknown_nodes_are_errors() {
    let inst = basic_tiny(8);
    let sol = Solution {
        routes: vec![vec![inst.depot(), 999]],
        times: vec![0.0],
        value: 0.0,
    };
    assert!(validate_solution(&inst, &sol).is_err());
}

#[test]
fn terminal_state_rejects_steps() {
    let inst = basic_tiny(9);
    let sol = greedy_heuristic(&inst).unwrap();
    let mut s = replay(&inst, &sol).unwrap();
    assert!(s.is_terminal());
    assert_eq!(s.step(0), Err(EnvError::TerminalState));
}

#[test]
fn route_count_must_match_drones() {
    let inst = basic_tiny(10);
    let mut sol = greedy_heuristic(&inst).unwrap();
    sol.routes.push(Vec::new());
    assert!(matches!(replay(&inst, &sol), Err(EnvError::RouteCount { .. })));
    assert!(validate_solution(&inst, &sol).unwrap().has(Rule::Termination));
}

#[test]
fn baselines_are_deterministic() {
    for inst in common::variant_suite(16, 11) {
        assert_eq!(greedy_heuristic(&inst).unwrap(), greedy_heuristic(&inst).unwrap());
        let a = random_policy_rollout(&inst, &mut common::rng(12)).unwrap();
        let b = random_policy_rollout(&inst, &mut common::rng(12)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn md_routes_start_at_depots_within_capacity() {
    let mut r = common::rng(13);
    for inst in common::variant_suite(64, 14)
        .into_iter()
        .filter(|i| i.attrs.multi_depot)
    {
        let sol = random_policy_rollout(&inst, &mut r).unwrap();
        let mut used = vec![0; inst.depots.len()];
        for route in sol.routes.iter().filter(|r| !r.is_empty()) {
            let o = inst
                .depots
                .iter()
                .position(|d| d.node == route[0])
                .expect("starts at a depot");
            used[o] += 1;
        }
        assert!(used.iter().zip(&inst.depots).all(|(u, d)| *u <= d.capacity));
    }
}

#[test]
fn empty_network_is_terminal_at_reset() {
    let inst = basic_tiny(15);
    assert!(!reset(&inst).is_terminal());
    assert_eq!(AttributeConfig::all().len(), 8);
}
