use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn aeroflex(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aeroflex"))
        .args(args)
        .current_dir(dir)
        .env_remove("AEROFLEX_OUT")
        .output()
        .expect("run aeroflex")
}

fn config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

fn first_error_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).lines().next().unwrap_or_default().to_string()
}

/// `error kind=<kind> message="<text>"` with no raw quotes inside the text.
fn assert_error_line(out: &Output, kind: &str) -> String {
    let line = first_error_line(out);
    let prefix = format!("error kind={kind} message=\"");
    assert!(line.starts_with(&prefix), "{line}");
    assert!(line.ends_with('"'), "{line}");
    let body = &line[prefix.len()..line.len() - 1];
    assert!(!body.replace("\\\"", "").contains('"'), "{line}");
    body.to_string()
}

const COARSE: &str = r#"{"aircraft": {"elements_per_side": 4}, "analysis": {"horizon": 0.4}}"#;

#[test]
fn modal_on_defaults_writes_the_frequency_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "run.json", "{}");
    let out = aeroflex(&["modal", "--config", cfg.to_str().unwrap(), "--out", "res"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("res/modal.csv")).unwrap();
    assert!(table.starts_with("mode,omega,label\n1,2.24"), "{table}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "bad.json", r#"{"aircraft": {"wingspan": 32}}"#);
    let out = aeroflex(&["trim", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let msg = assert_error_line(&out, "config");
    assert!(msg.contains("aircraft.wingspan"), "{msg}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn out_of_range_value_names_its_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "bad.json", r#"{"sigma": -1}"#);
    let out = aeroflex(&["modal", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(assert_error_line(&out, "config").contains("`sigma`"));
}

#[test]
fn malformed_json_and_missing_files_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "bad.json", "{\"sigma\": \n");
    let out = aeroflex(&["modal", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_error_line(&out, "config");
    let out = aeroflex(&["modal", "--config", "absent.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_error_line(&out, "config");
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = aeroflex(&["modal"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_error_line(&out, "usage");
    let out = aeroflex(&["fly", "--config", "x.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_error_line(&out, "usage");
}

#[test]
fn unreachable_trim_is_an_analysis_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "slow.json", r#"{"flight": {"U": 5}}"#);
    let out = aeroflex(&["trim", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(assert_error_line(&out, "analysis").contains("trim unreachable"));
}

#[test]
fn flutter_outside_the_sweep_is_an_analysis_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "f.json", r#"{"analysis": {"flutter": {"v_max": 20}}}"#);
    let out = aeroflex(&["flutter", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(assert_error_line(&out, "analysis").contains("no flutter"));
}

#[test]
fn flutter_writes_result_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "f.json", "{}");
    let out = aeroflex(&["flutter", "--config", cfg.to_str().unwrap(), "--basis", "undeformed"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/flutter.json")).unwrap()).unwrap();
    let v_f = json["V_f"].as_f64().unwrap();
    assert!((v_f - 31.2).abs() <= 0.05 * 31.2, "{v_f}");
    assert_eq!(json["basis"], "undeformed");
    let trace = std::fs::read_to_string(dir.path().join("out/flutter_trace.csv")).unwrap();
    assert!(trace.starts_with("V,max_real_part\n"));
}

#[test]
fn environment_overrides_the_output_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "run.json", "{}");
    let out = Command::new(env!("CARGO_BIN_EXE_aeroflex"))
        .args(["modal", "--config", cfg.to_str().unwrap(), "--out", "flag"])
        .current_dir(dir.path())
        .env("AEROFLEX_OUT", dir.path().join("env"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("env/modal.csv").exists());
    assert!(!dir.path().join("flag").exists());
}

#[test]
fn zero_amplitude_gust_gives_constant_channels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "calm.json",
        r#"{"aircraft": {"elements_per_side": 4}, "analysis": {"horizon": 0.4}, "gust": {"w_g0": 0}}"#,
    );
    let out = aeroflex(&["gust", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("out/gust.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,tip_defl,root_Mx,alpha_eff_root,pitch,u,w,q_rate,altitude");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 41);
    for row in &rows {
        for k in 1..9 {
            let scale = rows[0][k].abs().max(1.0);
            assert!((row[k] - rows[0][k]).abs() <= 1e-6 * scale, "column {k}: {} vs {}", row[k], rows[0][k]);
        }
    }
}

#[test]
fn gust_outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "run.json", COARSE);
    for out_dir in ["a", "b"] {
        let out = aeroflex(&["gust", "--config", cfg.to_str().unwrap(), "--out", out_dir], dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["gust.csv", "tip_deflection.svg", "root_moment.svg"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name}");
    }
    let csv = std::fs::read_to_string(dir.path().join("a/gust.csv")).unwrap();
    assert!(!csv.contains('\r'));
}

#[test]
fn sweep_rows_follow_the_sigma_list_for_any_job_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "sweep.json",
        r#"{"aircraft": {"elements_per_side": 3}, "analysis": {"horizon": 0.2}, "sigma_list": [1.0, 0.5]}"#,
    );
    for (jobs, out_dir) in [("1", "one"), ("2", "two")] {
        let out = aeroflex(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out_dir, "--jobs", jobs], dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let one = std::fs::read_to_string(dir.path().join("one/sweep.csv")).unwrap();
    let two = std::fs::read_to_string(dir.path().join("two/sweep.csv")).unwrap();
    assert_eq!(one, two);
    let lines: Vec<&str> = one.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("sigma,alpha_trim,"));
    assert!(lines[1].starts_with("1.00000000,") && lines[2].starts_with("0.500000000,"));
    assert!(dir.path().join("one/alpha_trim_vs_sigma.svg").exists());
}

#[test]
fn validate_reports_the_benchmarks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "run.json", "{}");
    let out = aeroflex(&["validate", "--config", cfg.to_str().unwrap()], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().any(|l| l.starts_with("PASS mode 1") && l.contains("2.24")), "{stdout}");
    assert!(stdout.lines().any(|l| l.starts_with("PASS flutter speed") && l.contains("31.2")), "{stdout}");
}

#[test]
fn static_writes_linear_and_nonlinear_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "run.json", r#"{"analysis": {"static_load": 12}}"#);
    let out = aeroflex(&["static", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("out/static.csv")).unwrap();
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    // upward load: tip moves toward body −z, less so when nonlinear
    assert!(last[3] < 0.0 && last[6] < 0.0 && last[6] > last[3]);
}
