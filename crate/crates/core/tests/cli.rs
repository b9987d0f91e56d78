use std::fs;
use std::path::Path;
use std::process::Command;

use phasekit::io::{read_signal, write_signal_csv};
use phasekit::Signal;

fn phasekit(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_phasekit")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_then_hio_writes_recon_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let (code, _, err) = phasekit(&["generate", "--scene", "phantom", "--size", "32", "--seed", "4", "--out", p(&scene)]);
    assert_eq!(code, 0, "{err}");
    for f in ["truth.bin", "obs.bin", "support.bin"] {
        assert!(scene.join(f).exists());
    }
    let before = fs::read(scene.join("obs.bin")).unwrap();
    let out = dir.path().join("hio");
    let (code, stdout, err) = phasekit(&[
        "solve",
        "--alg",
        "hio",
        "--obs",
        p(&scene.join("obs.bin")),
        "--support",
        p(&scene.join("support.bin")),
        "--truth",
        p(&scene.join("truth.bin")),
        "--nonnegative",
        "--iters",
        "200",
        "--out",
        p(&out),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("R_F"));
    let recon = read_signal(out.join("recon.bin")).unwrap();
    assert_eq!(recon.shape(), &[64, 64]);
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["E"].as_f64().unwrap() >= 0.0);
    assert!(metrics["aligned_residual"].as_f64().is_some());
    assert_eq!(fs::read(scene.join("obs.bin")).unwrap(), before);
}

#[test]
fn gespar_solve_on_generated_sparse_signal() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let (code, _, _) = phasekit(&["generate", "--scene", "sparse", "--n", "32", "--k", "3", "--seed", "2", "--out", p(&scene)]);
    assert_eq!(code, 0);
    let out = dir.path().join("g");
    let (code, _, err) = phasekit(&[
        "solve",
        "--alg",
        "gespar",
        "--obs",
        p(&scene.join("obs.bin")),
        "--sparsity",
        "3",
        "--truth",
        p(&scene.join("truth.bin")),
        "--out",
        p(&out),
    ]);
    assert_eq!(code, 0, "{err}");
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    // Equal-magnitude signals outside the trivial group may be returned.
    assert!(metrics["fourier_error"].as_f64().unwrap() < 1e-12);
    assert!(metrics["R_F"].as_f64().unwrap() < 1e-8);
}

#[test]
fn bench_writes_versioned_summary() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{
            "scene": { "kind": "sparse_vector", "n": 12, "k": [1, 2] },
            "measurement": { "kind": "oversampled_fourier" },
            "solvers": [{ "algorithm": "gespar" }, { "algorithm": "passthrough" }],
            "trials": 3,
            "base_seed": 9
        }"#,
    )
    .unwrap();
    let out = dir.path().join("results");
    let (code, stdout, err) = phasekit(&["bench", "--spec", p(&spec), "--out", p(&out), "--threads", "2"]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.starts_with("solver,k,trials,successes,rate,ci_lo,ci_hi"));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "# phasekit summary v1");
    assert_eq!(lines[1], "solver,k,trials,successes,rate,ci_lo,ci_hi");
    assert_eq!(lines.len(), 6);
    assert!(lines.contains(&"passthrough,2,3,3,1.000000,0.438503,1.000000"));
    assert!(out.join("trials.csv").exists());
}

#[test]
fn malformed_spec_exits_one_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.json");
    fs::write(
        &spec,
        r#"{
            "scene": { "kind": "sparse_vector", "n": 12, "k": [1] },
            "measurement": { "kind": "oversampled_fourier" },
            "solvers": [{ "algorithm": "gespar", "config": { "max_swaps": "many" } }],
            "trials": 1
        }"#,
    )
    .unwrap();
    let (code, _, err) = phasekit(&["bench", "--spec", p(&spec), "--out", p(&dir.path().join("r"))]);
    assert_eq!(code, 1);
    assert!(err.contains("solvers[0].config.max_swaps"), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(phasekit(&["solve", "--alg", "nonsense"]).0, 1);
    assert_eq!(phasekit(&["frobnicate"]).0, 1);
    assert_eq!(phasekit(&["diagnose"]).0, 1);
    assert_eq!(phasekit(&["--help"]).0, 0);
}

#[test]
fn diagnose_collision_and_guards() {
    let dir = tempfile::tempdir().unwrap();
    let sig = dir.path().join("x.csv");
    // Sites 0, 1, 2: 1 − 0 = 2 − 1 collides.
    write_signal_csv(&sig, &Signal::from_real(&[4], &[1.0, 2.0, 3.0, 0.0]).unwrap()).unwrap();
    let (code, stdout, _) = phasekit(&["diagnose", "--collision-free", "--signal", p(&sig)]);
    assert_eq!(code, 0);
    assert!(stdout.contains("collision_free: false"));
    assert!(stdout.contains("witness: "));
    write_signal_csv(&sig, &Signal::from_real(&[5], &[1.0, 1.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
    let (_, stdout, _) = phasekit(&["diagnose", "--collision-free", "--signal", p(&sig)]);
    assert!(stdout.contains("collision_free: true") && !stdout.contains("witness"));

    let mat = dir.path().join("a.csv");
    let values: Vec<f64> = (0..4 * 30).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
    write_signal_csv(&mat, &Signal::from_real(&[4, 30], &values).unwrap()).unwrap();
    let (code, stdout, _) = phasekit(&["diagnose", "--coherence", "--matrix", p(&mat)]);
    assert_eq!(code, 0);
    assert!(stdout.starts_with("coherence_mu: "));
    // 30 vectors exceed the exhaustive complement guard.
    let (code, _, err) = phasekit(&["diagnose", "--complement", "--matrix", p(&mat)]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn shipped_experiment_specs_validate() {
    let docs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs");
    let mut count = 0;
    for entry in fs::read_dir(docs).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            phasekit::bench::ExperimentSpec::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert_eq!(count, 2);
}
