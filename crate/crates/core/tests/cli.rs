use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use impulse_core::cli::RunReport;
use impulse_core::solve::RegimeTag;

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn impulse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impulse")).args(args).output().unwrap()
}

fn solve_to(cfg: &str, out: &Path, extra: &[&str]) -> (Output, RunReport) {
    let c = config(cfg);
    let mut args = vec!["solve", "--config", c.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let output = impulse(&args);
    let report = RunReport::from_json(&std::fs::read_to_string(out).unwrap()).unwrap();
    (output, report)
}

#[test]
fn solve_bm_m2_writes_a_threshold_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bm.json");
    let (output, report) = solve_to("bm_m2.cfg", &out, &[]);
    assert_eq!(output.status.code(), Some(0));
    assert_eq!(report.regime, RegimeTag::Threshold);
    assert!((report.xstar.unwrap() - 1.5937).abs() < 1e-4);
    assert!((report.chat.unwrap() - 0.6476).abs() < 1e-4);
    assert!(report.audit.as_ref().unwrap().passed);
    assert!(report.smooth_fit_gap.unwrap() < 1e-6);
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("Threshold") && stdout.contains("1.5936"));
}

#[test]
fn report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("geo.json");
    let (_, report) = solve_to("geometric.cfg", &out, &[]);
    let again = RunReport::from_json(&report.to_json().unwrap()).unwrap();
    assert_eq!(report, again);
    assert!((report.xstar.unwrap() - (2.0 + 3f64.sqrt()).ln()).abs() < 1e-9);
}

#[test]
fn infinite_value_report_has_no_threshold_fields() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rbm1.json");
    let (output, report) = solve_to("rbm_m1.cfg", &out, &[]);
    assert_eq!(output.status.code(), Some(0));
    assert_eq!(report.regime, RegimeTag::InfiniteValue);
    let text = std::fs::read_to_string(&out).unwrap();
    for key in ["\"xstar\"", "\"chat\"", "\"value_at_0\"", "\"audit\""] {
        assert!(!text.contains(key), "{key} present in {text}");
    }
}

#[test]
fn degenerate_report_has_no_xstar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rbm2.json");
    let (output, report) = solve_to("rbm_m2.cfg", &out, &[]);
    assert_eq!(output.status.code(), Some(0));
    assert_eq!(report.regime, RegimeTag::Degenerate);
    assert!(report.xstar.is_none() && report.chat.is_none());
    assert_eq!(report.value_at_0, Some(2.0));
}

#[test]
fn unverified_assumption_two_maps_to_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bm.json");
    let (_, mut report) = solve_to("bm_m2.cfg", &out, &[]);
    assert_eq!(report.exit_code(), 0);
    report.assumption2_verified = Some(false);
    assert_eq!(report.exit_code(), 2);
}

#[test]
fn errors_exit_with_one_and_name_the_module() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, r#"{"process": {"ReflectedBM": {"sigma": 1.0}}, "reward": {"PowerReward": {"m": 2}}, "rate": -1.0}"#).unwrap();
    let output = impulse(&["solve", "--config", bad.to_str().unwrap(), "--out", dir.path().join("r.json").to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("problem:") && stderr.contains("rate"), "{stderr}");

    let output = impulse(&["solve", "--config", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));

    let c = config("rbm_m1.cfg");
    let output = impulse(&["curve", "--config", c.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8(output.stderr).unwrap().contains("valuefn:"));
}

#[test]
fn curve_csv_format() {
    let c = config("bm_m2.cfg");
    let output = impulse(&["curve", "--config", c.to_str().unwrap(), "--curve-range", "0,3", "--curve-points", "300"]);
    assert_eq!(output.status.code(), Some(0));
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,v,Mv,g"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 301);
    assert!((rows[0][1] - 0.647610237895).abs() < 1e-9);
    assert!((rows[300][0] - 3.0).abs() < 1e-12);
    for cell in text.lines().nth(2).unwrap().split(',') {
        let digits = cell.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).count();
        assert!(digits <= 13, "{cell}");
    }
}

#[test]
fn curve_for_degenerate_bm_starts_at_minus_f0() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.csv");
    let c = config("bm_m1.cfg");
    let output = impulse(&[
        "curve",
        "--config",
        c.to_str().unwrap(),
        "--curve-range=-2,2",
        "--curve-points",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0));
    let text = std::fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().nth(3), Some("0,1,1,0"));
    assert_eq!(text.lines().nth(1).unwrap().split(',').nth(2), Some("-inf"));
}

#[test]
fn solve_writes_the_curve_next_to_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bm.json");
    let (_, report) = solve_to("bm_m2.cfg", &out, &["--curve-range", "0,3", "--curve-points", "30"]);
    let path = report.curve_path.unwrap();
    assert_eq!(std::fs::read_to_string(path).unwrap().lines().count(), 32);
}

#[test]
fn simulate_is_reproducible_and_prefers_xstar() {
    let c = config("bm_m2.cfg");
    let args = [
        "simulate",
        "--config",
        c.to_str().unwrap(),
        "--paths",
        "40000",
        "--seed",
        "7",
        "--sweep",
        "0.8,1.0,1.2",
    ];
    let a = impulse(&args);
    let b = impulse(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let means: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert_eq!(means.len(), 3);
    assert!(means[1] > means[0] && means[1] > means[2], "{means:?}");
    let z: f64 = text.lines().nth(2).unwrap().split(',').nth(5).unwrap().parse().unwrap();
    assert!(z.abs() < 3.0, "{z}");
}

#[test]
fn simulate_refuses_eps_below_resolution() {
    let c = config("rbm_m1.cfg");
    let output = impulse(&["simulate", "--config", c.to_str().unwrap(), "--paths", "100", "--sweep", "0.1"]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8(output.stderr).unwrap().contains("mc:"));
}
