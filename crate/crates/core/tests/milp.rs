mod common;

use common::rng;
use pdra::instance::{AttributeConfig, Depot, Instance, TwRule};
use pdra::instancegen::{generate_tiny, TinyConfig};
use pdra::network::{build_road_network, transform, LinkSpec, Node};
use pdra::solvers::{encode_routes, enumerate_milp, exact_oracle, export_milp, families_for, MilpOutcome};

fn toy(p_max: f64) -> Instance {
    let road = build_road_network(
        vec![Node { id: 1, x: 0.0, y: 0.0 }, Node { id: 2, x: 0.4, y: 0.0 }],
        vec![LinkSpec {
            from: 1,
            to: 2,
            length: 0.4,
            value: 0.7,
        }],
    )
    .unwrap();
    let network = transform(&road);
    Instance {
        time_windows: vec![f64::INFINITY; network.len()],
        network,
        p_max,
        battery: 8.0,
        drones: 1,
        attrs: AttributeConfig::BASIC,
        depots: vec![Depot { node: 0, capacity: 1 }],
        tw_rule: TwRule::Arrival,
    }
}

#[test]
fn toy_variable_count() {
    let m = export_milp(&toy(1.0), AttributeConfig::BASIC).unwrap();
    // Three undirected arcs in both directions, plus one order variable per node.
    assert_eq!(m.vars.len(), 2 * 3 + 3);
    assert_eq!(m.binary_count(), 6);
}

#[test]
fn toy_optimum_collects_the_link() {
    let m = export_milp(&toy(1.0), AttributeConfig::BASIC).unwrap();
    let out = enumerate_milp(&m).unwrap();
    assert!((out.objective().unwrap() - 0.7).abs() < 1e-12);
}

#[test]
fn zero_budget_keeps_drone_home() {
    let m = export_milp(&toy(1e-9), AttributeConfig::BASIC).unwrap();
    match enumerate_milp(&m).unwrap() {
        MilpOutcome::Optimal { objective, values } => {
            assert_eq!(objective, 0.0);
            assert!(m.arcs.iter().enumerate().all(|(e, _)| values[e] == 0.0));
        }
        MilpOutcome::Infeasible => panic!("all-zero routing must be feasible"),
    }
}

#[test]
fn families_per_variant() {
    let mut r = rng(3);
    for attrs in AttributeConfig::all() {
        let cfg = TinyConfig {
            min_original: 3,
            max_original: 3,
            max_links: 3,
            drones: 2,
            attrs,
            depots: if attrs.multi_depot { 2 } else { 1 },
            ..TinyConfig::default()
        };
        let inst = generate_tiny(&cfg, &mut r).unwrap();
        let m = export_milp(&inst, attrs).unwrap();
        assert_eq!(m.families, families_for(attrs), "{attrs}");
        let lp = m.to_lp();
        assert_eq!(lp, export_milp(&inst, attrs).unwrap().to_lp());
        for f in families_for(attrs) {
            assert!(lp.contains(&f.to_string()), "{attrs} lacks {f}");
        }
        assert!(lp.starts_with("\\ ") && lp.ends_with("End\n"));
    }
}

#[test]
fn enumerated_optimum_is_bounded_by_oracle() {
    let mut r = rng(17);
    let mut equal_cases = 0;
    for i in 0..48 {
        let attrs = AttributeConfig::all()[i % 8];
        let cfg = TinyConfig {
            min_original: 2,
            max_original: 3,
            max_links: 3,
            drones: 1,
            attrs,
            depots: if attrs.multi_depot { 2 } else { 1 },
            depot_capacity: Some(1),
            ..TinyConfig::default()
        };
        let inst = generate_tiny(&cfg, &mut r).unwrap();
        let m = export_milp(&inst, attrs).unwrap();
        let milp = enumerate_milp(&m).unwrap().objective().unwrap();
        let best = exact_oracle(&inst).unwrap();
        assert!(
            milp <= best.value + 1e-9,
            "{i} {attrs}: milp {milp} > oracle {}",
            best.value
        );
        // Routes that visit each node once and cross links end to end are
        // model solutions, so the two optima coincide.
        if let Some(enc) = encode_routes(&m, &inst, &best.routes) {
            equal_cases += 1;
            assert_eq!(m.violation(&enc, 1e-9), None, "{i} {attrs} {:?}", best.routes);
            assert!(
                (milp - best.value).abs() < 1e-9,
                "{i} {attrs}: milp {milp} vs oracle {}",
                best.value
            );
        }
    }
    assert!(equal_cases > 10);
}
