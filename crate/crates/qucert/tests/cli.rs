use std::path::{Path, PathBuf};

use qucert::cli::run;
use serde_json::Value;

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name).to_string_lossy().into_owned()
}

fn qucert(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let code = run(std::iter::once("qucert").chain(args.iter().copied()), &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn json(args: &[&str]) -> Value {
    let (code, out) = qucert(args);
    assert_eq!(code, 0, "{args:?}");
    serde_json::from_str(&out).unwrap()
}

fn m_max(reports: &Value, rep: &str) -> Option<f64> {
    let r = reports.as_array().unwrap().iter().find(|r| r["representation"] == rep).unwrap();
    r["m_max"].as_f64()
}

#[test]
fn missing_grid_file_is_an_input_error() {
    assert_eq!(qucert(&["assess", "--grid", "/does/not/exist.json"]).0, 2);
    let err = qucert::schema::read_grid_file(Path::new("/does/not/exist.json")).unwrap_err();
    assert!(err.to_string().contains("grid file not found"));
}

#[test]
fn usage_errors_exit_2() {
    let g = fixture("single_der.json");
    assert_eq!(qucert(&["simulate", "--grid", &g, "--slope", "10", "--dt", "0"]).0, 2);
    assert_eq!(qucert(&["assess"]).0, 2);
    assert_eq!(qucert(&["no-such-command"]).0, 2);
    assert_eq!(qucert(&["--help"]).0, 0);
}

#[test]
fn pt2_tar_limit_matches_closed_form() {
    let g = fixture("single_der.json");
    let k = json(&["sensitivity", "--grid", &g])["k_q"][0][0].as_f64().unwrap();
    let d = 0.517;
    // 25 MW plant on a 100 MVA base
    let beta_crit = 4.0 * d * (1.0 + d) / k;
    let analytic = 100.0 * beta_crit * 100.0 / 25.0;
    let reports = json(&["assess", "--grid", &g, "--representation", "pt2-tar", "--m-cap", "1e5"]);
    let m = m_max(&reports, "pt2-tar").unwrap();
    assert!((m - analytic).abs() < 0.2, "{m} vs {analytic}");
}

#[test]
fn representations_are_ordered() {
    let g = fixture("toy_feeder.json");
    let reports = json(&["assess", "--grid", &g, "--m-cap", "1e5"]);
    let (orig, der, tar) =
        (m_max(&reports, "orig").unwrap(), m_max(&reports, "pt2-der").unwrap(), m_max(&reports, "pt2-tar").unwrap());
    assert!(tar <= der && der <= orig, "{tar} {der} {orig}");
}

#[test]
fn default_cap_reports_no_limit() {
    let g = fixture("toy_feeder.json");
    let reports = json(&["assess", "--grid", &g, "--representation", "orig"]);
    assert_eq!(reports[0]["outcome"], "no_limit_below_cap");
    assert!(reports[0]["m_max"].is_null());
}

#[test]
fn assess_out_file_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let g = fixture("toy_feeder.json");
    let (code, table) = qucert(&["assess", "--grid", &g, "--representation", "pt2-tar", "--out", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(table.lines().nth(1).unwrap().starts_with("toy_feeder"));
    let reports: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(reports[0]["grid_id"], "toy_feeder");
    assert_eq!(reports[0]["criterion"], "circle");
}

#[test]
fn fit_tar_reproduces_generic_pt2() {
    let f = json(&["fit-pt2", "--mode", "tar"]);
    let (d, t) = (f["damping"].as_f64().unwrap(), f["t"].as_f64().unwrap());
    assert!((d / 0.517 - 1.0).abs() < 0.05 && (t / 2.335 - 1.0).abs() < 0.05);
}

#[test]
fn fitting_a_pt2_returns_it() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("p.json");
    std::fs::write(&params, r#"{"damping": 0.6, "t": 1.5}"#).unwrap();
    let f = json(&["fit-pt2", "--mode", "der", "--model", "pt2", "--params", params.to_str().unwrap()]);
    assert!((f["damping"].as_f64().unwrap() - 0.6).abs() < 1e-4);
    assert!((f["t"].as_f64().unwrap() - 1.5).abs() < 1e-4);
}

#[test]
fn responses_files() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = qucert(&["responses", "--horizon", "60", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0);
    let mut step = csv::Reader::from_path(dir.path().join("step.csv")).unwrap();
    assert_eq!(step.headers().unwrap(), vec!["time_s", "orig", "pt2_der", "pt2_tar"]);
    let rows: Vec<Vec<f64>> =
        step.records().map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect();
    let last = rows.last().unwrap();
    for v in &last[1..] {
        assert!((v - 1.0).abs() < 0.01, "static gain {v}");
    }
    // generic PT2 peak from its damping
    let peak = rows.iter().map(|r| r[3]).fold(0.0, f64::max);
    let d: f64 = 0.517;
    let want = 1.0 + (-std::f64::consts::PI * d / (1.0 - d * d).sqrt()).exp();
    assert!((peak - want).abs() < 1e-3, "{peak} vs {want}");
    let mut freq = csv::Reader::from_path(dir.path().join("freq.csv")).unwrap();
    let first: Vec<f64> = freq.records().next().unwrap().unwrap().iter().map(|v| v.parse().unwrap()).collect();
    assert!((first[1] - 1.0).abs() < 1e-2);
}

#[test]
fn simulate_zero_slope_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let g = fixture("single_der.json");
    let c = json(&["simulate", "--grid", &g, "--slope", "0", "--out", trace.to_str().unwrap()]);
    assert_eq!(c["verdict"], "asymptotically_stable");
    let mut r = csv::Reader::from_path(trace).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["time_s", "u_wf_pu", "q_wf_pu"]);
    assert_eq!(r.records().count(), 18_001);
}

#[test]
fn simulate_above_nyquist_does_not_decay() {
    // exact-delay Nyquist limit of this fixture is near 13 900 %/p.u.
    let g = fixture("single_der.json");
    let c = json(&["simulate", "--grid", &g, "--slope", "16000", "--coupling", "linearized", "--no-saturation"]);
    assert_ne!(c["verdict"], "asymptotically_stable");
}

#[test]
fn powerflow_and_sensitivity() {
    let g = fixture("toy_feeder.json");
    let pf = json(&["powerflow", "--grid", &g]);
    assert!(pf["iterations"].as_u64().unwrap() <= 10);
    assert_eq!(pf["nodes"].as_array().unwrap().len(), 5);
    let s = json(&["sensitivity", "--grid", &g]);
    assert_eq!(s["der_order"], serde_json::json!(["wf3", "wf4"]));
    let k = &s["k_q"];
    // self sensitivities dominate mutual ones on a radial feeder
    assert!(k[0][0].as_f64().unwrap() > k[0][1].as_f64().unwrap());
    assert!(k[1][1].as_f64().unwrap() > k[1][0].as_f64().unwrap());
}

#[test]
fn import_simbench_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid.json");
    let src = fixture("simbench_excerpt");
    let (code, _) = qucert(&["import-simbench", "--dir", &src, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let (_, from_file) = qucert::schema::read_grid_file(&out).unwrap();
    let direct = qucert::simbench::import_simbench_dir(Path::new(&src)).unwrap();
    assert_eq!(from_file, direct);
    assert_eq!(qucert(&["assess", "--grid", out.to_str().unwrap(), "--representation", "pt2-tar"]).0, 0);
}
