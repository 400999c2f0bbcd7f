use std::process::Command;

fn landing_sim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_landing-sim"))
}

#[test]
fn presets_are_listed_and_shown() {
    let out = landing_sim().args(["presets", "list"]).output().unwrap();
    assert!(out.status.success());
    let names = String::from_utf8(out.stdout).unwrap();
    for name in ["sim", "indoor-static", "obstacle-demo"] {
        assert!(names.lines().any(|l| l == name), "missing {name}");
    }
    let out = landing_sim().args(["presets", "show", "sim"]).output().unwrap();
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["name"], "sim");
}

#[test]
fn unknown_preset_fails() {
    let out = landing_sim().args(["presets", "show", "nowhere"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
}

#[test]
fn plan_prints_samples_from_start_to_goal() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.json");
    std::fs::write(
        &scene,
        r#"{"world": {"bounds": {"min": [-1, -1, 0], "max": [5, 3, 3]}},
            "start": {"position": [0, 0, 1]}, "goal": [4, 1, 1.5], "horizon": 3.0}"#,
    )
    .unwrap();
    let out = landing_sim().args(["plan", "--scene"]).arg(&scene).args(["--samples", "11"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(text.lines().next(), Some("t,x,y,z,vx,vy,vz"));
    assert_eq!(rows.len(), 11);
    assert!(rows[0][1..4].iter().zip([0.0, 0.0, 1.0]).all(|(a, b)| (a - b).abs() < 1e-9));
    assert!(rows[10][1..4].iter().zip([4.0, 1.0, 1.5]).all(|(a, b)| (a - b).abs() < 1e-6));
}

#[test]
fn gradcheck_passes() {
    let out = landing_sim().args(["gradcheck", "--instances", "10"]).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 4);
}

#[test]
fn run_writes_outputs_and_reports_landing() {
    let dir = tempfile::tempdir().unwrap();
    let out = landing_sim().args(["run", "--preset", "indoor-static", "--no-timing", "--out"]).arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["landed"], true);
    assert_eq!(summary["mean_planning_time"], 0.0);
    for f in ["ticks.csv", "summary.json", "trajectory_xyz.csv"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
}

#[test]
fn run_requires_a_scenario() {
    let out = landing_sim().arg("run").output().unwrap();
    assert!(!out.status.success());
}
