use std::path::Path;
use std::process::{Command, Output};

fn pushpull(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pushpull"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SCENARIO: &str = r#"{"id":"light_6s","mass":27.7,"mu_static":0.239,"task_time":6.0,"condition":"dry","repetitions":1,"sensor_noise_std":0.0,"skeleton_noise_std":0.0}"#;

#[test]
fn unknown_subcommand_and_bad_flags_are_usage_errors() {
    assert_eq!(code(&pushpull(&["frobnicate"])), 2);
    assert_eq!(code(&pushpull(&["trial", "--condition", "sideways"])), 2);
    assert_eq!(code(&pushpull(&["--help"])), 0);
}

#[test]
fn missing_manifest_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = pushpull(&[
        "train",
        "--manifest",
        s(&dir.path().join("nope.json")),
        "--out",
        s(&dir.path().join("m.json")),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_writes_default_recording_count_and_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let oa = pushpull(&["synth", "--seed", "5", "--out", s(&a)]);
    assert_eq!(code(&oa), 0, "{}", String::from_utf8_lossy(&oa.stderr));
    assert!(stdout(&oa).contains("wrote 28 recordings"), "{}", stdout(&oa));
    let ob = pushpull(&["synth", "--seed", "5", "--out", s(&b)]);
    assert_eq!(code(&ob), 0);
    let ma = std::fs::read(a.join("manifest.json")).unwrap();
    let mb = std::fs::read(b.join("manifest.json")).unwrap();
    assert_eq!(ma, mb);
}

#[test]
fn gradcheck_passes() {
    let out = pushpull(&["gradcheck", "--seed", "1"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("max relative error"));
    assert_eq!(code(&pushpull(&["train", "--grad-check"])), 0);
}

#[test]
fn explore_then_dry_trial_then_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.json");
    std::fs::write(&scenario, SCENARIO).unwrap();
    let out = pushpull(&["explore", "--scenario", s(&scenario)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let updated: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&scenario).unwrap()).unwrap();
    let f_com = updated["f_com"].as_f64().unwrap();
    assert!((f_com - 65.0).abs() <= 3.0, "{f_com}");

    let log = dir.path().join("dry.csv");
    let out = pushpull(&["trial", "--scenario", s(&scenario), "--seed", "2", "--out", s(&log)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(log.is_file());

    // one condition only: report with a warning, no comparison
    let report = dir.path().join("report.json");
    let out = pushpull(&["metrics", s(&log), "--out", s(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(!json["warnings"].as_array().unwrap().is_empty());
    assert!(dir.path().join("report.actions.csv").is_file());
}

#[test]
fn assisted_trial_without_checkpoint_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.json");
    std::fs::write(&scenario, SCENARIO).unwrap();
    let out = pushpull(&[
        "trial",
        "--scenario",
        s(&scenario),
        "--condition",
        "assisted",
        "--out",
        s(&dir.path().join("x.csv")),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn domain_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    // frictionless object: exploration cannot find a holding force
    let scenario = dir.path().join("ice.json");
    std::fs::write(&scenario, SCENARIO.replace("0.239", "0.0")).unwrap();
    assert_eq!(code(&pushpull(&["explore", "--scenario", s(&scenario)])), 1);

    // an empty trial log
    let log = dir.path().join("empty.csv");
    std::fs::write(&log, "t,box_x,box_v,f_h_x,f_h_norm,f_r_x,f_d_x,u_x,intent_raw,intent_filtered,label\n").unwrap();
    std::fs::write(
        dir.path().join("empty.csv.meta.json"),
        r#"{"condition":"dry","scenario_id":"s","seed":0,"f_com":null}"#,
    )
    .unwrap();
    let out = pushpull(&["metrics", s(&log), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unpaired_scenarios_are_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let header = "t,box_x,box_v,f_h_x,f_h_norm,f_r_x,f_d_x,u_x,intent_raw,intent_filtered,label\n";
    let body: String = (0..100)
        .map(|i| {
            let v = if (20..60).contains(&i) { 0.1 } else { 0.0 };
            format!("{},0,{v},30,30,0,0,0,0,0,0\n", i as f64 * 0.01)
        })
        .collect();
    let mut paths = Vec::new();
    for (name, condition, scenario) in [("a", "dry", "one"), ("b", "assisted", "two")] {
        let p = dir.path().join(format!("{name}.csv"));
        std::fs::write(&p, format!("{header}{body}")).unwrap();
        std::fs::write(
            dir.path().join(format!("{name}.csv.meta.json")),
            format!(r#"{{"condition":"{condition}","scenario_id":"{scenario}","seed":0,"f_com":null}}"#),
        )
        .unwrap();
        paths.push(p);
    }
    let out = pushpull(&["metrics", s(&paths[0]), s(&paths[1]), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
}
