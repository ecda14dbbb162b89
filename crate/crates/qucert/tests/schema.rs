use std::path::PathBuf;

use proptest::prelude::*;
use qucert::schema::{grid_to_json, load_grid, read_grid_file};
use qucert::simbench::import_simbench_dir;
use qucert::Error;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

#[test]
fn toy_feeder_contents() {
    let (id, g) = read_grid_file(&fixture("toy_feeder.json")).unwrap();
    assert_eq!(id, "toy_feeder");
    assert_eq!((g.nodes.len(), g.branches.len(), g.ders.len()), (5, 4, 2));
    let p: f64 = g.ders.iter().map(|d| d.p_inst_mw).sum();
    assert_eq!(p, 30.0);
}

#[test]
fn fixtures_round_trip() {
    for name in ["toy_feeder.json", "single_der.json", "meshed_hv.json"] {
        let (_, g) = read_grid_file(&fixture(name)).unwrap();
        assert_eq!(load_grid(&grid_to_json(&g)).unwrap(), g, "{name}");
    }
}

#[test]
fn simbench_excerpt_imports() {
    let g = import_simbench_dir(&fixture("simbench_excerpt")).unwrap();
    assert_eq!((g.nodes.len(), g.branches.len(), g.transformers.len()), (4, 2, 1));
    assert_eq!(g.ders.len(), 2);
    assert_eq!(load_grid(&grid_to_json(&g)).unwrap(), g);
}

#[test]
fn meshed_penetration() {
    let (_, g) = read_grid_file(&fixture("meshed_hv.json")).unwrap();
    // 35 MW over 43 km
    assert!((g.penetration_factor().unwrap() - 35_000.0 / 43.0).abs() < 1e-9);
}

#[test]
fn malformed_documents_are_schema_errors() {
    for doc in ["{", "[]", r#"{"nodes": 3}"#] {
        assert!(matches!(load_grid(doc), Err(Error::Schema(_) | Error::Json(_))), "{doc}");
    }
}

fn document(slopes: &[f64], lengths: &[f64]) -> String {
    let mut nodes = vec![r#"{"id": "n0", "vn_kv": 20, "kind": "slack", "u_set_pu": 1.0}"#.to_string()];
    let mut branches = Vec::new();
    for (i, l) in lengths.iter().enumerate() {
        nodes.push(format!(r#"{{"id": "n{}", "vn_kv": 20, "kind": "pq"}}"#, i + 1));
        branches.push(format!(
            r#"{{"id": "l{i}", "from": "n{i}", "to": "n{}", "r_ohm": {}, "x_ohm": {}, "b_us": 0, "length_km": {l}}}"#,
            i + 1,
            0.2 * l,
            0.4 * l
        ));
    }
    let ders: Vec<String> = slopes
        .iter()
        .enumerate()
        .map(|(k, m)| {
            format!(
                r#"{{"id": "d{k}", "node": "n{}", "p_inst_mw": 5, "p_r_mw": 5, "p_op_mw": 5, "model": "pt2",
                    "params": {{}}, "qu": {{"u_ref_pu": 1.0, "slope_percent_per_pu": {m}, "deadband_pu": 0}}}}"#,
                1 + k % lengths.len()
            )
        })
        .collect();
    format!(
        r#"{{"nodes": [{}], "branches": [{}], "transformers": [], "loads": [], "ders": [{}]}}"#,
        nodes.join(","),
        branches.join(","),
        ders.join(",")
    )
}

proptest! {
    #[test]
    fn serialization_round_trips(
        slopes in prop::collection::vec(0.0..100.0f64, 1..4),
        lengths in prop::collection::vec(0.5..20.0f64, 1..5),
    ) {
        let g = load_grid(&document(&slopes, &lengths)).unwrap();
        let again = load_grid(&grid_to_json(&g)).unwrap();
        prop_assert_eq!(again, g);
    }
}
