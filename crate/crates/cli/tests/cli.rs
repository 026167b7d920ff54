use std::path::Path;
use std::process::{Command, Output};

fn sa_seu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sa-seu"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn body(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["sizes"].clone()
}

#[test]
fn poisson_table_values() {
    let o = sa_seu(&[
        "poisson",
        "--ser",
        "2.82e-7",
        "--fclk",
        "1e8",
        "--nff",
        "352,1240,4648",
        "--kmax",
        "2",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    for v in [
        "1.149e-17",
        "4.047e-17",
        "1.517e-16",
        "6.600e-35",
        "8.190e-34",
        "1.151e-32",
    ] {
        assert!(text.contains(v), "{v} missing from\n{text}");
    }
}

#[test]
fn poisson_edge_cases() {
    assert_eq!(sa_seu(&["poisson", "--nff", "0"]).status.code(), Some(2));
    assert_eq!(
        sa_seu(&["poisson", "--nff", "12", "--fclk", "fast"])
            .status
            .code(),
        Some(2)
    );
    let o = sa_seu(&["poisson", "--nff", "352", "--kmax", "0"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| l.trim_start().starts_with(char::is_numeric))
        .collect();
    assert_eq!(rows.len(), 1, "{text}");
    assert!(rows[0].contains("1 - 1.149e-17"));
}

#[test]
fn calibrate_8x8() {
    let o = sa_seu(&["calibrate", "--rows", "8", "--cols", "8", "--seed", "1"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["shift"], 7);
    assert_eq!(v["s_a_exponent"], -5);
    assert_eq!(v["config"]["seed"], 1);
}

#[test]
fn calibrate_usage_errors() {
    assert_eq!(sa_seu(&["calibrate", "--cols", "8"]).status.code(), Some(2));
    assert_eq!(
        sa_seu(&["calibrate", "--rows", "8", "--cols", "8", "--samples", "10"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(sa_seu(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("campaign.toml");
    std::fs::write(&cfg, "rows = 8\ncols = 8\nseed = 1\nsamples = 20000\n").unwrap();
    let o = sa_seu(&[
        "--config",
        cfg.to_str().unwrap(),
        "calibrate",
        "--samples",
        "5000",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["config"]["samples"], 5000);
    assert_eq!(v["config"]["rows"], 8);

    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    let o = sa_seu(&["--config", cfg.to_str().unwrap(), "poisson", "--nff", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_then_report_reproduces_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let again_dir = dir.path().join("again");
    let report_dir = dir.path().join("report");
    let common = [
        "--sizes",
        "2x2",
        "--iters",
        "1000",
        "--seed",
        "7",
        "--samples",
        "2000",
    ];
    let run = |out: &Path| {
        let mut args = vec!["run"];
        args.extend(common);
        args.extend(["--output", out.to_str().unwrap()]);
        sa_seu(&args)
    };
    let o = run(&run_dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(run_dir.join("records.csv").exists());
    assert!(run_dir.join("bars_2x2.csv").exists());

    let o = sa_seu(&[
        "report",
        "--input",
        run_dir.to_str().unwrap(),
        "--output",
        report_dir.to_str().unwrap(),
        "--svg",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(body(&run_dir), body(&report_dir));
    assert!(report_dir.join("boxes_2x2.svg").exists());

    assert!(run(&again_dir).status.success());
    assert_eq!(body(&run_dir), body(&again_dir));

    // resuming a complete campaign is a no-op
    let mut args = vec!["run"];
    args.extend(common);
    args.extend(["--output", run_dir.to_str().unwrap(), "--resume"]);
    let before = std::fs::read_to_string(run_dir.join("records.csv")).unwrap();
    assert!(sa_seu(&args).status.success());
    assert_eq!(
        before,
        std::fs::read_to_string(run_dir.join("records.csv")).unwrap()
    );

    // a different seed is refused
    let args: Vec<&str> = args
        .iter()
        .map(|a| if *a == "7" { "8" } else { a })
        .collect();
    assert_eq!(sa_seu(&args).status.code(), Some(2));
}

#[test]
fn report_on_missing_file_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = sa_seu(&[
        "report",
        "--input",
        dir.path().join("nothing.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn selftest_passes() {
    let o = sa_seu(&["selftest", "--stimuli", "100"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(
        stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(),
        3
    );
}
