use std::path::{Path, PathBuf};

use proptest::prelude::*;

use mfroute::io::csv::{
    flow_csv, history_csv, parse_csv, parse_policy_csv, policy_csv, FLOW_HEADER, HISTORY_HEADER,
};
use mfroute::io::{build_scenario, load_config, parse_tntp, read_tntp, serialize_tntp, TntpMetadata, TntpNetworkFile, TntpRow};
use mfroute::mfg::{forward_flow, omd_solve, OmdSchedule};
use mfroute::LinkKind;

fn scenario_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

/// Half a unit in the ninth significant digit.
fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 5e-9 * a.abs().max(b.abs()) + 1e-300
}

fn tntp_row() -> impl Strategy<Value = TntpRow> {
    (
        (1u32..=30, 1u32..=30),
        0.0f64..1e6,
        0.0f64..100.0,
        0.0f64..50.0,
        0.0f64..1.0,
        0.0f64..8.0,
        (0.0f64..100.0, 0.0f64..10.0, -5i64..5),
    )
        .prop_map(|((i, j), capacity, length, free_flow_time, b, power, (speed, toll, link_type))| TntpRow {
            init_node: i,
            term_node: j,
            capacity,
            length,
            free_flow_time,
            b,
            power,
            speed,
            toll,
            link_type,
        })
}

proptest! {
    #[test]
    fn tntp_serialization_round_trips(rows in prop::collection::vec(tntp_row(), 1..40), zones in prop::option::of(1usize..30)) {
        let file = TntpNetworkFile {
            metadata: TntpMetadata {
                number_of_zones: zones,
                number_of_nodes: 30,
                number_of_links: rows.len(),
                first_thru_node: 1,
                other: vec![("ORIGINAL HEADER".into(), "~".into())],
            },
            rows,
        };
        prop_assert_eq!(parse_tntp(&serialize_tntp(&file)).unwrap(), file);
    }
}

#[test]
fn sioux_falls_file_is_the_standard_network() {
    let file = read_tntp(&scenario_file("SiouxFalls_net.tntp")).unwrap();
    assert_eq!(file.metadata.number_of_nodes, 24);
    assert_eq!(file.metadata.number_of_links, 76);
    assert_eq!(file.rows.len(), 76);
    assert!(file.rows.iter().all(|r| (1..=24).contains(&r.init_node) && (1..=24).contains(&r.term_node)));

    let loaded = load_config(&scenario_file("sioux_falls.json")).unwrap();
    let s = build_scenario(&loaded.config, &loaded.base_dir).unwrap();
    assert_eq!(s.network.road_links().count(), 76);
    for link in s.network.links() {
        for &next in s.network.successors(link.id) {
            assert_eq!(s.network.links()[next].tail, link.head, "{} -> {}", link.label, next);
        }
        if link.kind == LinkKind::DestinationVirtual {
            assert!(s.network.successors(link.id).is_empty());
        }
    }
}

#[test]
fn shipped_scenarios_build_with_unit_mass() {
    for name in [
        "pigou.json",
        "pigou_scaled.json",
        "braess.json",
        "augmented_braess.json",
        "sioux_falls.json",
        "discontinuous_pigou.json",
    ] {
        let loaded = load_config(&scenario_file(name)).unwrap();
        let s = build_scenario(&loaded.config, &loaded.base_dir).unwrap();
        let total: f64 = s.atoms.iter().map(|a| a.mass).sum();
        assert!((total - 1.0).abs() <= 1e-12, "{name}: {total}");
        assert!(s.atoms.iter().all(|a| a.departure_tick < s.grid.n_ticks));
        loaded.config.omd_schedule.validate().unwrap();
    }
}

#[test]
fn csv_outputs_parse_back_to_the_same_numbers() {
    let loaded = load_config(&scenario_file("augmented_braess.json")).unwrap();
    let s = build_scenario(&loaded.config, &loaded.base_dir).unwrap();
    let out = omd_solve(&s, &OmdSchedule::constant(5, 1.0)).unwrap();
    let flow = forward_flow(&s, &out.policy).unwrap();

    let (header, rows) = parse_csv(&history_csv(&out.history)).unwrap();
    assert_eq!(header.join(","), HISTORY_HEADER);
    assert_eq!(rows.len(), out.history.len());
    for (r, rec) in rows.iter().zip(&out.history) {
        assert_eq!(r[0].parse::<usize>().unwrap(), rec.iteration);
        assert!(close(r[1].parse().unwrap(), rec.learning_rate));
        assert!(close(r[2].parse().unwrap(), rec.exploitability));
        assert!(close(r[3].parse().unwrap(), rec.mean_travel_time));
    }

    let (header, rows) = parse_csv(&flow_csv(&flow)).unwrap();
    assert_eq!(header.join(","), FLOW_HEADER);
    assert_eq!(rows.len(), (s.grid.n_ticks + 1) * s.network.n_links());
    for r in &rows {
        let (t, link): (usize, usize) = (r[0].parse().unwrap(), r[1].parse().unwrap());
        assert!(close(r[2].parse().unwrap(), flow.link_proportion(t, link)));
    }

    let back = parse_policy_csv(&policy_csv(&out.policy), &s).unwrap();
    for ((t, l, d, a), (t2, l2, d2, b)) in out.policy.rows().zip(back.rows()) {
        assert_eq!((t, l, d), (t2, l2, d2));
        for (x, y) in a.iter().zip(b) {
            assert!(close(*x, *y));
        }
    }
}

#[test]
fn pigou_flow_splits_evenly_in_transit() {
    let loaded = load_config(&scenario_file("pigou_scaled.json")).unwrap();
    let s = build_scenario(&loaded.config, &loaded.base_dir).unwrap();
    let out = omd_solve(&s, &loaded.config.omd_schedule).unwrap();
    let (_, rows) = parse_csv(&flow_csv(&forward_flow(&s, &out.policy).unwrap())).unwrap();
    let roads: Vec<usize> = s.network.road_links().map(|l| l.id).collect();
    let at = |link: usize| -> f64 {
        rows.iter()
            .find(|r| r[0] == "1" && r[1] == link.to_string())
            .map(|r| r[2].parse().unwrap())
            .unwrap()
    };
    let (a, b) = (at(roads[0]), at(roads[1]));
    assert!((a / (a + b) - 0.5).abs() <= 0.01, "{a} vs {b}");
}
