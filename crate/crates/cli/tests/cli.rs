//! End-to-end tests of the binary: pipeline determinism, stage equivalence,
//! exit codes and artifact schemas.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_niosyn"))
}

fn tmpdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("niosyn-test-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Parses a JSON artifact with its `meta` key removed.
fn canonical(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{path:?}: {e}"));
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v.as_object_mut().unwrap().remove("meta");
    serde_json::to_string(&v).unwrap()
}

#[test]
fn demo_batch_reactor_succeeds_and_is_deterministic() {
    let d1 = tmpdir("demo-a");
    let d2 = tmpdir("demo-b");
    for d in [&d1, &d2] {
        let out = bin()
            .args(["demo", "batch-reactor", "--seed", "7", "--out"])
            .arg(d)
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    for artifact in ["plant.json", "data.json", "controller.json", "report.json"] {
        assert_eq!(
            canonical(&d1.join(artifact)),
            canonical(&d2.join(artifact)),
            "{artifact} differs between identical runs"
        );
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d1.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["verdict"], "ok");
    assert_eq!(report["closed_loop"]["dim"], 12);
    assert!(report["closed_loop"]["spectral_radius"].as_f64().unwrap() < 1.0);
}

#[test]
fn manual_pipeline_reproduces_the_demo_bit_for_bit() {
    let demo_dir = tmpdir("stage-demo");
    let out = bin()
        .args(["demo", "batch-reactor", "--seed", "11", "--out"])
        .arg(&demo_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    // The same run, stage by stage: the config mirrors the demo regime.
    let manual_dir = tmpdir("stage-manual");
    let plant: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(demo_dir.join("plant.json")).unwrap())
            .unwrap();
    let config = serde_json::json!({
        "plant": plant,
        "ell": "auto",
        "num_experiments": 10,
        "samples_per_experiment": 4,
        "input_amplitude": 20.0,
        "du_bar": 0.01,
        "dy_bar": 0.01,
        "x0_amplitude": 20.0,
        "seed": 11,
    });
    let config_path = manual_dir.join("config.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();

    let out = bin()
        .args(["collect", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&manual_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let out = bin()
        .args(["synth", "--theta-scale", "2", "--data"])
        .arg(manual_dir.join("data.json"))
        .arg("--out")
        .arg(&manual_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let out = bin()
        .args(["verify", "--seed", "11", "--du-bar", "0.01", "--dy-bar", "0.01", "--plant"])
        .arg(demo_dir.join("plant.json"))
        .arg("--controller")
        .arg(manual_dir.join("controller.json"))
        .arg("--out")
        .arg(&manual_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    for artifact in ["data.json", "controller.json", "report.json"] {
        assert_eq!(
            canonical(&demo_dir.join(artifact)),
            canonical(&manual_dir.join(artifact)),
            "{artifact} differs between the demo and the staged pipeline"
        );
    }
}

#[test]
fn augmented_demo_succeeds_with_bounded_noisy_run() {
    let dir = tmpdir("demo-aug");
    let out = bin()
        .args(["demo", "augmented", "--seed", "3", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["verdict"], "ok");
    assert_eq!(report["noisy_run"]["diverged"], false);
    let controller: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("controller.json")).unwrap())
            .unwrap();
    assert!(controller["augmentation"].is_object());
    assert!((controller["theta"]["level"].as_f64().unwrap() - 0.174).abs() < 1e-12);
}

#[test]
fn drowned_noise_reports_assumption_violation() {
    let dir = tmpdir("demo-noise");
    let out = bin()
        .args(["demo", "batch-reactor", "--seed", "1", "--noise-scale", "1000", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["error"]["kind"], "assumption-violated");
    assert_eq!(doc["error"]["exit_code"], 3);
}

#[test]
fn dimension_mismatch_is_a_schema_error() {
    let dir = tmpdir("mismatch");
    let out = bin()
        .args(["demo", "batch-reactor", "--seed", "2", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success());

    // A plant with a single output cannot drive the two-output controller.
    let bad_plant = serde_json::json!({
        "A": [[0.5, 0.0], [0.0, 0.5]],
        "B": [[1.0], [1.0]],
        "C": [[1.0, 0.0]],
    });
    let bad_path = dir.join("bad_plant.json");
    std::fs::write(&bad_path, serde_json::to_string(&bad_plant).unwrap()).unwrap();
    let out = bin()
        .args(["verify", "--plant"])
        .arg(&bad_path)
        .arg("--controller")
        .arg(dir.join("controller.json"))
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["error"]["exit_code"], 1);
}

#[test]
fn lmi_dump_and_csv_exports_are_written() {
    let dir = tmpdir("dumps");
    let out = bin()
        .args(["demo", "batch-reactor", "--seed", "4", "--dump-lmi", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let lmi: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("lmi.json")).unwrap()).unwrap();
    assert_eq!(lmi["constraints"][0]["block_sizes"], serde_json::json!([8, 8, 8]));

    // Simulate writes the trajectory dumps.
    let out = bin()
        .args(["simulate", "--seed", "9", "--horizon", "200", "--plant"])
        .arg(dir.join("plant.json"))
        .arg("--controller")
        .arg(dir.join("controller.json"))
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let y = std::fs::read_to_string(dir.join("y.csv")).unwrap();
    assert_eq!(y.lines().count(), 201);
    assert_eq!(y.lines().next().unwrap().split(',').count(), 2);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("simulation.json")).unwrap())
            .unwrap();
    assert_eq!(summary["diverged"], false);

    // Collect-side CSV dumps.
    let plant: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("plant.json")).unwrap()).unwrap();
    let config = serde_json::json!({
        "plant": plant,
        "ell": 2,
        "num_experiments": 2,
        "samples_per_experiment": 5,
        "input_amplitude": 5.0,
        "du_bar": 0.01,
        "dy_bar": 0.01,
        "seed": 1,
    });
    let config_path = dir.join("config.json");
    std::fs::write(&config_path, serde_json::to_string(&config).unwrap()).unwrap();
    let out = bin()
        .args(["collect", "--dump-csv", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let psi1 = std::fs::read_to_string(dir.join("psi1.csv")).unwrap();
    assert_eq!(psi1.lines().count(), 8);
}

#[test]
fn hopeless_artificial_system_is_replaced_by_retries() {
    // A zero output map makes the augmented window matrix singular, so the
    // collect stage must fall back to contractive draws.
    let dir = tmpdir("aug-retry");
    let plant = serde_json::json!({
        "A": [[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
        "B": [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]],
        "C": [[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]],
    });
    let config = serde_json::json!({
        "plant": plant,
        "ell": "auto",
        "num_experiments": 1,
        "samples_per_experiment": 32,
        "input_amplitude": 2.0,
        "du_bar": 0.01,
        "dy_bar": 0.01,
        "seed": 3,
        "augment": {
            "a_a": [[0.0]],
            "b_a": [[1.0, 1.0]],
            "c_a": [[0.0], [0.0]],
        },
    });
    let config_path = dir.join("config.json");
    std::fs::write(&config_path, serde_json::to_string(&config).unwrap()).unwrap();
    let out = bin()
        .args(["collect", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let data: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("data.json")).unwrap()).unwrap();
    let c_a = &data["augmentation"]["c_a"]["data"];
    assert_ne!(c_a, &serde_json::json!([[0.0], [0.0]]), "retry must replace the zero output map");
    let out = bin()
        .args(["synth", "--theta-scale", "2", "--data"])
        .arg(dir.join("data.json"))
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn certification_thread_count_does_not_change_artifacts() {
    let d1 = tmpdir("threads-1");
    let d4 = tmpdir("threads-4");
    for (dir, threads) in [(&d1, "1"), (&d4, "4")] {
        let out = bin()
            .args(["demo", "batch-reactor", "--seed", "6", "--out"])
            .arg(dir)
            .env("NIO_SYNTH_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(
        canonical(&d1.join("controller.json")),
        canonical(&d4.join("controller.json"))
    );
}

#[test]
fn seed_override_changes_the_data() {
    let dir = tmpdir("seed-override");
    let plant = serde_json::json!({
        "A": [[0.2, 1.0], [-0.3, 0.1]],
        "B": [[1.0], [0.4]],
        "C": [[1.0, 0.0], [0.0, 1.0]],
    });
    let config = serde_json::json!({
        "plant": plant,
        "ell": "auto",
        "num_experiments": 2,
        "samples_per_experiment": 6,
        "input_amplitude": 2.0,
        "du_bar": 0.0,
        "dy_bar": 0.0,
        "seed": 5,
    });
    let config_path = dir.join("config.json");
    std::fs::write(&config_path, serde_json::to_string(&config).unwrap()).unwrap();
    for (seed_args, sub) in [(vec![], "a"), (vec!["--seed".to_string(), "99".to_string()], "b")] {
        let out_dir = dir.join(sub);
        let out = bin()
            .args(["collect", "--config"])
            .arg(&config_path)
            .args(&seed_args)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    let a: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("a/data.json")).unwrap()).unwrap();
    let b: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("b/data.json")).unwrap()).unwrap();
    assert_eq!(a["seed"], 5);
    assert_eq!(b["seed"], 99);
    assert_ne!(a["psi0"], b["psi0"]);
}
