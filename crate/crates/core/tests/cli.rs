use rgds::report::DimensionReport;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn spec(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../specs")
        .join(name)
}

fn rgds(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rgds"))
        .args(args)
        .env_remove("RGDS_THREADS")
        .output()
        .unwrap()
}

fn report(out: &Output) -> DimensionReport {
    DimensionReport::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap()
}

fn cantor_with(edit: impl FnOnce(&mut serde_json::Value), dir: &Path) -> PathBuf {
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(spec("cantor_pair.json")).unwrap()).unwrap();
    edit(&mut v);
    let p = dir.join("edited.json");
    std::fs::write(&p, v.to_string()).unwrap();
    p
}

#[test]
fn validate_accepts_catalog_specs() {
    for name in [
        "cantor_pair.json",
        "middle_third.json",
        "g2.json",
        "carpet_pair.json",
        "rotated_pair.json",
    ] {
        let out = rgds(&["validate", "--spec-path", spec(name).to_str().unwrap()]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let r = report(&out);
        assert!(r.error.is_none());
        assert!(r.timestamp.as_deref().unwrap().starts_with("unix:"));
    }
}

#[test]
fn malformed_probabilities_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = cantor_with(|v| v["graphs"][0]["prob"] = 0.4.into(), dir.path());
    let out = rgds(&["validate", "--spec-path", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(report(&out).error.unwrap().kind, "MalformedSpec");
}

#[test]
fn expanding_map_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = cantor_with(
        |v| v["graphs"][1]["edges"][0]["ratio"] = 1.5.into(),
        dir.path(),
    );
    let out = rgds(&["dim1var", "--spec-path", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(report(&out).error.unwrap().kind, "NotContracting");
}

#[test]
fn subcritical_tree_exit_2() {
    // one surviving child with probability 1/2: mean offspring below one
    let dir = tempfile::tempdir().unwrap();
    let p = cantor_with(
        |v| {
            v["graphs"][0]["edges"] = serde_json::json!([]);
            v["graphs"][1]["edges"].as_array_mut().unwrap().truncate(1);
        },
        dir.path(),
    );
    let out = rgds(&["diminf", "--spec-path", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(report(&out).error.unwrap().kind, "NotSurviving");
}

#[test]
fn percolation_survives_in_infinite_mode() {
    let out = rgds(&[
        "diminf",
        "--spec-path",
        spec("percolation.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let s = report(&out).s_h.unwrap().value;
    assert!(
        (s - (1.5f64).ln() / (1.0f64 / 0.3).ln()).abs() < 1e-6,
        "{s}"
    );
}

#[test]
fn out_path_and_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let csv = dir.path().join("c.csv");
    let out = rgds(&[
        "boxcount",
        "--spec-path",
        spec("cantor_pair.json").to_str().unwrap(),
        "--eps",
        "0.0625",
        "--rounds",
        "4",
        "--no-timestamp",
        "--out-path",
        json.to_str().unwrap(),
        "--csv-path",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert!(!out.stdout.is_empty());
    let r = DimensionReport::from_json(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert!(r.timestamp.is_none());
    assert_eq!(r.command, "boxcount");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("delta;count"));
    assert!(text.lines().count() > 3);
}

#[test]
fn render_writes_svg() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("c.svg");
    let out = rgds(&[
        "render",
        "--spec-path",
        spec("rotated_pair.json").to_str().unwrap(),
        "--eps",
        "0.2",
        "--rounds",
        "2",
        "--out-path",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    report(&out);
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") || text.starts_with("<?xml"));
    assert!(text.contains("<rect "));
}

#[test]
fn thread_count_from_environment() {
    let g2 = spec("g2.json");
    let args = [
        "diminf",
        "--spec-path",
        g2.to_str().unwrap(),
        "--no-timestamp",
    ];
    let base = rgds(&args);
    let env = Command::new(env!("CARGO_BIN_EXE_rgds"))
        .args(args)
        .env("RGDS_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(env.status.code(), Some(0));
    assert_eq!(base.stdout, env.stdout);
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = rgds(&["dim1var", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}
