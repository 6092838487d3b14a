//! Solver outputs against references computed without the solver.

use std::collections::{BTreeMap, BinaryHeap};
use std::cmp::Reverse;

use num_traits::ToPrimitive;
use proptest::prelude::*;

use mfroute::mfg::{best_response, forward_flow};
use mfroute::net::RoadSpec;
use mfroute::nplayer::{deviation_incentive_exact, deviation_incentive_mc, SimMode};
use mfroute::oracles::{
    brute_force_nash, pigou_deviation_formula, pigou_deviation_formula_rational, pigou_even_split_incentive_rational,
    pigou_even_split_policy, NASH_PROFILE_BUDGET,
};
use mfroute::scenarios::{assemble, pigou, NodeDemand, PigouVariant};
use mfroute::{CongestionFn, Network, NodeId, Policy, Scenario, TimeGrid};

fn ticks(cost: f64, dt: f64) -> usize {
    ((cost / dt - 1e-9).ceil() as usize).max(1)
}

/// Dijkstra over nodes with tick weights; `None` if `to` is unreachable.
fn shortest_ticks(edges: &[(NodeId, NodeId, usize)], from: NodeId, to: NodeId) -> Option<usize> {
    let mut best: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((0usize, from)));
    while let Some(Reverse((d, node))) = heap.pop() {
        if best.contains_key(&node) {
            continue;
        }
        best.insert(node, d);
        for &(tail, head, w) in edges {
            if tail == node && !best.contains_key(&head) {
                heap.push(Reverse((d + w, head)));
            }
        }
    }
    best.get(&to).copied()
}

/// Random graph on nodes 1..=5 with constant costs; node 5 is reachable from
/// node 1 through the chain 1-2-3-4-5.
fn constant_cost_graph() -> impl Strategy<Value = Vec<(NodeId, NodeId, f64)>> {
    let chain = prop::collection::vec(0.05f64..1.5, 4);
    let extra = prop::collection::vec((1u32..=5, 1u32..=5, 0.05f64..1.5), 0..8);
    (chain, extra).prop_map(|(chain, extra)| {
        let mut edges: Vec<(NodeId, NodeId, f64)> =
            chain.into_iter().enumerate().map(|(i, c)| (i as u32 + 1, i as u32 + 2, c)).collect();
        edges.extend(extra.into_iter().filter(|(a, b, _)| a != b));
        edges
    })
}

fn scenario_on(edges: &[(NodeId, NodeId, f64)], dt: f64, horizon: f64, departures: &[f64]) -> Scenario {
    let roads = Network::from_roads(edges.iter().map(|&(a, b, c)| RoadSpec::new(a, b, CongestionFn::constant(c)))).unwrap();
    let grid = TimeGrid::new(dt, horizon).unwrap();
    let demand: Vec<NodeDemand> = departures
        .iter()
        .map(|&t| NodeDemand {
            origin: 1,
            destination: 5,
            departure_time: t,
            count: 1.0,
        })
        .collect();
    assemble(roads, grid, &demand, departures.len() as f64).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn best_response_matches_time_expanded_shortest_path(
        edges in constant_cost_graph(),
        dt in prop::sample::select(vec![0.05, 0.1, 0.25]),
        departures in prop::collection::vec(0.0f64..2.0, 1..3),
    ) {
        let horizon = 4.0;
        let s = scenario_on(&edges, dt, horizon, &departures);
        let flow = forward_flow(&s, &Policy::uniform(&s)).unwrap();
        let br = best_response(&s, &flow).unwrap();
        let weighted: Vec<(NodeId, NodeId, usize)> = edges.iter().map(|&(a, b, c)| (a, b, ticks(c, dt))).collect();
        let road = shortest_ticks(&weighted, 1, 5).unwrap();
        for (atom, value) in s.atoms.iter().zip(&br.atom_values) {
            let arrival = atom.departure_tick + 1 + road;
            let expected = arrival.min(s.grid.n_ticks) as f64 * dt;
            prop_assert!((value - expected).abs() < 1e-9, "best response {value}, shortest path {expected}");
        }
    }
}

fn scaled_pigou() -> Scenario {
    pigou(PigouVariant::HorizonScaled { t: 2.0 }, 0.01, 3.0).unwrap()
}

#[test]
fn even_split_incentive_exact_matches_rational_sum() {
    let s = scaled_pigou();
    let policy = pigou_even_split_policy(&s).unwrap();
    for n in 1..=10u64 {
        let exact = deviation_incentive_exact(&s, &policy, n as usize, SimMode::Event).unwrap();
        let rational = 2.0 * pigou_even_split_incentive_rational(n).to_f64().unwrap();
        assert!((exact - rational).abs() <= 1e-12, "N={n}: enumeration {exact}, binomial sum {rational}");
        assert!((rational - 2.0 / (4.0 * n as f64)).abs() <= 1e-12);
    }
}

#[test]
fn tick_simulator_within_one_tick_of_event_simulator() {
    let s = scaled_pigou();
    let policy = pigou_even_split_policy(&s).unwrap();
    for n in [2, 3, 5] {
        let event = deviation_incentive_exact(&s, &policy, n, SimMode::Event).unwrap();
        let tick = deviation_incentive_exact(&s, &policy, n, SimMode::Tick).unwrap();
        // tick mode rounds 2k/N up to the grid
        assert!((event - tick).abs() <= s.grid.dt + 1e-12, "N={n}: event {event}, tick {tick}");
    }
}

#[test]
fn monte_carlo_brackets_exact_value() {
    let s = scaled_pigou();
    let policy = pigou_even_split_policy(&s).unwrap();
    for n in [2, 4, 8] {
        let exact = deviation_incentive_exact(&s, &policy, n, SimMode::Event).unwrap();
        let mc = deviation_incentive_mc(&s, &policy, n, 4000, 11, SimMode::Event).unwrap();
        assert!(
            (mc.mean - exact).abs() <= 3.0 * mc.half_width_95,
            "N={n}: MC {} ± {}, exact {exact}",
            mc.mean,
            mc.half_width_95
        );
    }
}

#[test]
fn formula_is_linear_in_horizon() {
    for n in 1..=12u64 {
        let base = pigou_deviation_formula(n, 1.0);
        for a in [0.5, 2.0, 7.0] {
            assert!((pigou_deviation_formula(n, a) - a * base).abs() <= 1e-12);
        }
    }
    assert_eq!(
        pigou_deviation_formula_rational(2),
        pigou_even_split_incentive_rational(2),
        "the two closed forms agree at N = 2"
    );
}

#[test]
fn pure_equilibria_sit_in_the_stable_band() {
    let s = scaled_pigou();
    for n in 2..=4 {
        let nash = brute_force_nash(&s, n, NASH_PROFILE_BUDGET).unwrap();
        assert!(!nash.equilibria.is_empty());
        assert_eq!(nash.minimax.1, 0.0);
        // k players on l' pay 2k/N; nobody moves iff N/2 - 1 <= k <= N/2
        let congestible = nash.paths[0]
            .iter()
            .position(|p| s.network.links()[p[1]].congestion.free_flow() == 0.0)
            .unwrap();
        for profile in &nash.equilibria {
            let k = profile.iter().filter(|&&x| x == congestible).count();
            assert!(k * 2 <= n && k * 2 + 2 >= n, "N={n}: {k} players on the congestible link");
        }
    }
}
