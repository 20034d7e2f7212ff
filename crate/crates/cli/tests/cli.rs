use std::process::{Command, Output};

fn amdi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amdi")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn column(text: &str, row: usize, col: usize) -> f64 {
    text.lines().nth(row).unwrap().split(',').nth(col).unwrap().parse().unwrap()
}

#[test]
fn empty_range_prints_header_only() {
    let o = amdi(&["scan", "--distance", "300:200:10"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn hom_without_offset_gives_quarter_error() {
    let o = amdi(&["hom", "--delta-v", "0", "--tau", "0.000001"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap(), "delta_v_hz,tau_s,visibility,error_rate");
    assert_eq!(column(&text, 1, 3), 0.25);
}

#[test]
fn drift_at_one_microsecond() {
    let o = amdi(&["drift", "--window", "0.000001", "--delta-v", "100000"]);
    assert!(o.status.success());
    let e = column(&stdout(&o), 1, 3);
    assert!((e - 0.0245).abs() < 5e-5, "{e}");
}

#[test]
fn tiny_monte_carlo_run_succeeds() {
    let o = amdi(&["mc", "--pulses", "1000", "--distance", "50"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("quantity,empirical,analytic,z_score"));
}

#[test]
fn no_tracking_beats_plob_at_300km() {
    let o = amdi(&["scan", "--distance", "300", "--no-optimize"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(column(&text, 1, 1) > column(&text, 1, 7));
}

#[test]
fn infeasible_point_exits_with_2() {
    let o = amdi(&["scan", "--distance", "700", "--no-optimize"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).trim_end().ends_with("false"));
}

#[test]
fn bad_config_exits_with_3() {
    let dir = std::env::temp_dir().join(format!("amdi-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.json");
    std::fs::write(&path, "{ \"channel\": 5 }").unwrap();
    let o = amdi(&["--config", path.to_str().unwrap(), "scan", "--distance", "100"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(amdi(&["--config", "/nonexistent/amdi.json", "hom"]).status.code(), Some(3));
    assert_eq!(amdi(&["scan", "--distance", "a:b"]).status.code(), Some(3));
    assert_eq!(amdi(&["--bogus"]).status.code(), Some(3));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn presets_round_trip_through_config() {
    for preset in ["no-tracking", "free1ghz", "free4ghz", "free10ghz", "arbitrary"] {
        let o = amdi(&["config", "--preset", preset]);
        assert!(o.status.success());
        let parsed = amdi_core::Scenario::from_json(&stdout(&o)).unwrap();
        assert_eq!(parsed.to_json().trim(), stdout(&o).trim());
    }
}
