//! Black-box tests of the `soliton-qkd` binary: output formats and the
//! documented exit codes.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_soliton-qkd"))
}

fn tr1_scenario_path() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios/tr1_solo.toml")
        .display()
        .to_string()
}

fn run_ok(args: &[&str]) -> Output {
    let output = bin().args(args).output().expect("binary runs");
    assert!(
        output.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

#[test]
fn comb_emits_csv_spectrum() {
    let output = run_ok(&["comb"]);
    let stdout = String::from_utf8(output.stdout).unwrap();
    let mut lines = stdout.lines();
    assert_eq!(
        lines.next().unwrap(),
        "index,frequency_hz,power_dbm,snr_db"
    );
    assert_eq!(stdout.lines().count(), 222); // header + 221 usable lines

    let threshold = run_ok(&["comb", "--threshold-db", "17"]);
    let stdout = String::from_utf8(threshold.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 66); // header + 65 lines within 3 dB
}

#[test]
fn plan_emits_json_with_crosstalk_matrix() {
    let output = run_ok(&["plan"]);
    let value: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    let channels = value["channels"].as_array().unwrap();
    assert_eq!(channels.len(), 5);
    assert_eq!(channels[0]["assigned_line_index"], 0);
    let matrix = value["crosstalk_db"].as_array().unwrap();
    assert_eq!(matrix.len(), 5);
    assert_eq!(matrix[0].as_array().unwrap()[1], 20.0);
    assert_eq!(matrix[0].as_array().unwrap()[2], 40.0);
}

#[test]
fn simulate_writes_report_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let scenario = tr1_scenario_path();
    let output = run_ok(&[
        "simulate",
        &scenario,
        "--pulses",
        "20000",
        "--seed",
        "3",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("TR1"), "summary table missing: {stdout}");
    assert!(stdout.contains("digest: "));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pulses"], 20000);
    assert_eq!(report["master_seed"], 3);
    assert_eq!(report["systems"].as_array().unwrap().len(), 1);

    let csv = std::fs::read_to_string(out.join("qber_series.csv")).unwrap();
    assert!(csv.starts_with("system,channel,block,class,"));
}

#[test]
fn simulate_is_reproducible_across_invocations() {
    let scenario = tr1_scenario_path();
    let digest = |seed: &str| {
        let output = run_ok(&[
            "simulate",
            &scenario,
            "--pulses",
            "20000",
            "--seed",
            seed,
            "--out-dir",
            tempfile::tempdir().unwrap().path().to_str().unwrap(),
        ]);
        let stdout = String::from_utf8(output.stdout).unwrap();
        stdout
            .lines()
            .find(|l| l.starts_with("digest: "))
            .unwrap()
            .to_string()
    };
    assert_eq!(digest("11"), digest("11"));
    assert_ne!(digest("11"), digest("12"));
}

#[test]
fn invalid_scenario_exits_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    std::fs::write(
        &path,
        "[run]\nmode = \"solo\"\n\n[[systems]]\nname = \"TR1\"\nchannel = 1\nreceiver = \"single-spd\"\n",
    )
    .unwrap();
    let output = bin()
        .args(["simulate", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("intensities"), "stderr: {stderr}");
}

#[test]
fn keyrate_evaluates_gain_set_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gains.json");
    std::fs::write(
        &path,
        r#"{
            "intensities": { "mu": 0.5, "nu1": 0.16, "nu2": 0.008, "send_weights": [29, 2, 1] },
            "gains": {
                "mu":  { "gain": 4.0116e-3, "qber": 0.0266 },
                "nu1": { "gain": 1.2865e-3, "qber": 0.0270 },
                "nu2": { "gain": 6.5789e-5, "qber": 0.0372 }
            },
            "clock_hz": 1e9,
            "error_correction_inefficiency": 1.16,
            "duty_factor": 0.1738921903572535
        }"#,
    )
    .unwrap();
    let output = run_ok(&["keyrate", path.to_str().unwrap()]);
    let report: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    let skr = report["skr_bps"].as_f64().unwrap();
    assert!(skr > 5e4 && skr < 1.2e5, "skr {skr} far from expectation");
    assert!(report["y1_lower"].as_f64().unwrap() > 0.0);
}

#[test]
fn malformed_keyrate_input_exits_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{ \"gains\": 12 }").unwrap();
    let output = bin()
        .args(["keyrate", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

