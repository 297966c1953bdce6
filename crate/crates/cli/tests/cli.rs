use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use skewmem_cli::{Config, RunManifest};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_skewmem"));
    c.env_remove(skewmem_cli::OUT_DIR_ENV);
    c
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out-dir").arg(out).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn validate_constant_weights_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("constant.toml");
    let o = run(&["validate", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("validation.json")).unwrap()).unwrap();
    assert_eq!(report["h1"]["pass"], true);
    assert!(report["h1"]["delta"].as_array().unwrap().iter().all(|d| d[1] == 1.0));
}

#[test]
fn coeffs_for_weight_pair_one_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("single_membrane.toml");
    let o = run(&["coeffs", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(tmp.path().join("coeffs.csv")).unwrap();
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[0], 0.5);
    assert!((row[1] - 2.0 / 3.0).abs() < 1e-15);
    assert!((row[2] - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(stdout(&o), csv);
}

#[test]
fn verify_crossing_on_single_membrane() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("single_membrane.toml");
    let o = run(
        &["verify", "--test", "crossing", "--membrane", "0.5", "--config", cfg.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let line = std::fs::read_to_string(tmp.path().join("reports.jsonl")).unwrap();
    let r: skewmem::verify::TestReport = serde_json::from_str(line.trim()).unwrap();
    assert!(r.pass);
    assert_eq!(r.evaluate(), r.pass);
    assert_eq!(r.n, 10_000);
}

#[test]
fn negative_control_exits_with_test_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("single_membrane.toml");
    let o = run(
        &["verify", "--test", "crossing_negative", "--membrane", "0.5", "--paths", "2000", "--config", cfg.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stdout(&o).contains("FAIL"));
    let m = RunManifest::read(&tmp.path().join("manifest.json")).unwrap();
    assert_eq!(m.exit_code, 3);
    assert_eq!(m.overrides.paths, Some(2000));
}

#[test]
fn simulate_is_reproducible_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let base = std::fs::read_to_string(config("single_membrane.toml")).unwrap();
    let mut outputs = vec![];
    for workers in [1, 3] {
        for format in ["csv", "bin"] {
            let dir = tmp.path().join(format!("w{workers}-{format}"));
            std::fs::create_dir_all(&dir).unwrap();
            let text = base.replace("record_every = 10", &format!("record_every = 10\nworkers = {workers}"));
            let cfg = write_config(&dir, &text);
            let o = run(
                &["simulate", "--config", cfg.to_str().unwrap(), "--paths", "37", "--format", format],
                &dir,
            );
            assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
            let name = if format == "csv" { "trajectories.csv" } else { "trajectories.bin" };
            outputs.push((
                std::fs::read(dir.join(name)).unwrap(),
                std::fs::read(dir.join("local_times.csv")).unwrap(),
            ));
        }
    }
    assert_eq!(outputs[0], outputs[2]);
    assert_eq!(outputs[1], outputs[3]);
    let frame = skewmem::simulate::read_binary(&outputs[1].0[..]).unwrap();
    assert_eq!((frame.n_paths, frame.dim), (37, 3));
}

#[test]
fn manifest_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("three_membranes.toml");
    let o = run(&["coeffs", "--config", cfg.to_str().unwrap(), "--seed", "99", "--step", "0.002"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let m = RunManifest::read(&tmp.path().join("manifest.json")).unwrap();
    let back = Config::parse(&m.config).unwrap();
    assert_eq!(back.hash().unwrap(), m.config_hash);
    assert_eq!(back.canonical().unwrap(), m.config);
    assert_eq!((back.simulation.seed, back.simulation.step), (99, 0.002));
    assert_eq!(m.seed, 99);
    assert_eq!(m.outputs, vec!["coeffs.csv".to_string()]);

    let mut original = Config::parse(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    original.apply(&m.overrides);
    assert_eq!(original, back);
    assert_eq!(original.weight_field().unwrap().membranes, back.weight_field().unwrap().membranes);
}

#[test]
fn unknown_keys_are_rejected_with_line_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "dim = 3\n[membranes]\nkind = \"explicit\"\nm0 = 1.0\ngamma_top = 1.0\ngammabar_bottom = 1.0\n\n[simulation]\nsteps = 5\n";
    let cfg = write_config(tmp.path(), text);
    let o = run(&["validate", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 9") && err.contains("steps"), "{err}");
}

#[test]
fn invalid_weights_exit_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[membranes]\nkind = \"explicit\"\nm0 = 1.0\ninner = [{ radius = 0.5, weight = -1.0 }]\ngamma_top = 1.0\ngammabar_bottom = 1.0\n";
    let cfg = write_config(tmp.path(), text);
    let o = run(&["coeffs", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn failing_hypothesis_keeps_the_report() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[membranes]\nkind = \"analytic\"\nm0 = 1.0\ninner = { family = \"harmonic\", amp = 1.0 }\nouter = { family = \"constant\", value = 1.0 }\ntolerance = 1e-3\n";
    let cfg = write_config(tmp.path(), text);
    let o = run(&["validate", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("validation.json")).unwrap()).unwrap();
    assert_eq!(report["h1"]["pass"], false);
    assert!(tmp.path().join("manifest.json").exists());
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("constant.toml");
    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(1));
    let o = run(&["verify", "--test", "nope", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["validate", "--config", "/does/not/exist.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn output_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("from-env");
    let cfg = config("constant.toml");
    let o = bin()
        .args(["coeffs", "--config", cfg.to_str().unwrap()])
        .env(skewmem_cli::OUT_DIR_ENV, &out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("coeffs.csv").exists() && out.join("manifest.json").exists());
}

#[test]
fn analyze_three_membranes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("three_membranes.toml");
    let o = run(&["analyze", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let a: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("analysis.json")).unwrap()).unwrap();
    let ibp = a["ibp"].as_array().unwrap();
    assert_eq!(ibp.len(), 2);
    assert!(ibp.iter().all(|r| r["rel_residual"].as_f64().unwrap() < 1e-6));
    assert_eq!(a["ibp"][0]["surface"].as_array().unwrap().len(), 3);
}
