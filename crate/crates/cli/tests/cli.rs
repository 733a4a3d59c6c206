use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fluxnoise"));
    c.env_remove("RUST_LOG");
    c
}

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    bin()
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

/// Data rows of a CSV as (header, rows of strings).
fn table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (h, rows) = table(path);
    let i = h.iter().position(|c| c == name).unwrap();
    rows.iter().filter_map(|r| r[i].parse().ok()).collect()
}

const SMALL: &str = "[ramsey]\nrepetitions = 40\nhorizon_s = 10e-6\n";

#[test]
fn unknown_key_exits_with_config_code_and_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), "[ramsey]\nrepititions = 4\n", &["ramsey"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("kind=config") && err.contains("repititions"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn invalid_values_and_missing_input_are_config_errors() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(dir.path(), "[qubit]\nej_ghz = 1.0\n", &["ramsey"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), "", &["fit", "--input", "/nonexistent.csv"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), "", &["--threads", "0", "ramsey"]).status.code(), Some(2));
}

#[test]
fn csv_headers_carry_provenance() {
    let dir = TempDir::new().unwrap();
    ok(&run(dir.path(), SMALL, &["ramsey", "--seed", "42"]));
    let text = std::fs::read_to_string(dir.path().join("out/ramsey.csv")).unwrap();
    let head: Vec<&str> = text.lines().take(5).collect();
    assert!(head[0].starts_with("# fluxnoise "));
    assert_eq!(head[2], "# seed: 42");
    let hash = head[3].strip_prefix("# config_sha256: ").unwrap();
    assert_eq!(hash.len(), 64);
    let json: serde_json::Value = serde_json::from_str(head[4].strip_prefix("# config: ").unwrap()).unwrap();
    assert_eq!(json["ramsey"]["repetitions"], 40);
    assert_eq!(json["seed"], 42);
    let (h, rows) = table(&dir.path().join("out/ramsey.csv"));
    assert_eq!(h, ["time_s", "p1", "envelope", "decay_re", "decay_im"]);
    assert_eq!(rows.len(), 201);
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/fit.json")).unwrap()).unwrap();
    assert_eq!(fit["provenance"]["config_sha256"], hash);
}

#[test]
fn env_override_reaches_the_run() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let o = bin()
        .env("FLUXNOISE__RAMSEY__HORIZON_S", "5e-6")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .arg("ramsey")
        .output()
        .unwrap();
    ok(&o);
    assert_eq!(column(&dir.path().join("ramsey.csv"), "time_s").len(), 101);
    let bad = bin().env("FLUXNOISE__RAMSEY__NOPE", "1").arg("ramsey").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn single_repetition_is_relaxation_times_cosine() {
    let dir = TempDir::new().unwrap();
    ok(&run(dir.path(), "[ramsey]\nrepetitions = 1\n", &["ramsey"]));
    let p = dir.path().join("out/ramsey.csv");
    let (t, env, re, im) = (column(&p, "time_s"), column(&p, "envelope"), column(&p, "decay_re"), column(&p, "decay_im"));
    for k in 0..t.len() {
        assert!((env[k] - (-t[k] / 40e-6).exp()).abs() < 1e-12);
        assert!(((re[k] * re[k] + im[k] * im[k]).sqrt() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn plain_bath_decay_prefers_exponential_model() {
    let dir = TempDir::new().unwrap();
    ok(&run(dir.path(), "[strong_rtn]\namplitudes_phi0 = []\nrates_hz = []\n[ramsey]\nrepetitions = 1000\n", &["ramsey"]));
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/fit.json")).unwrap()).unwrap();
    assert_eq!(fit["preferred"], "exponential", "{fit:#}");
}

#[test]
fn single_frequency_sweep_matches_ramsey_envelope() {
    let dir = TempDir::new().unwrap();
    ok(&run(dir.path(), SMALL, &["ramsey"]));
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/fit.json")).unwrap()).unwrap();
    let f01 = fit["working_point"]["f01_hz"].as_f64().unwrap();
    let ramsey_env = column(&dir.path().join("out/ramsey.csv"), "envelope");

    let sweep_dir = TempDir::new().unwrap();
    let cfg = format!("{SMALL}[sweep]\nf01_hz = [{f01:?}]\nrepetitions = 40\n");
    ok(&run(sweep_dir.path(), &cfg, &["sweep"]));
    let sweep_env = column(&sweep_dir.path().join("out/sweep.csv"), "envelope");
    assert_eq!(sweep_env.len(), ramsey_env.len());
    for (a, b) in sweep_env.iter().zip(&ramsey_env) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
    let (_, rows) = table(&sweep_dir.path().join("out/t2star.csv"));
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), [&format!("{f01}") as &str, "mean", "max"]);
}

fn log_rms(freqs: &[f64], a: &[f64], b: &[f64], lo: f64, hi: f64) -> f64 {
    let rel: Vec<f64> = fluxnoise::noise::psd::log_bin(freqs, a, lo, hi, 10)
        .iter()
        .zip(fluxnoise::noise::psd::log_bin(freqs, b, lo, hi, 10))
        .map(|((_, x), (_, y))| x / y - 1.0)
        .collect();
    (rel.iter().map(|r| r * r).sum::<f64>() / rel.len() as f64).sqrt()
}

#[test]
fn single_fluctuator_spectrum_matches_lorentzian_column() {
    let dir = TempDir::new().unwrap();
    let cfg = "[psd]\nn_sources = 1\nrate_min_hz = 2e4\nrate_max_hz = 2.0001e4\npaths = 200\n";
    ok(&run(dir.path(), cfg, &["psd"]));
    let p = dir.path().join("out/psd.csv");
    let (f, est, lor) = (column(&p, "freq_hz"), column(&p, "psd_estimated"), column(&p, "psd_lorentzian_sum"));
    let rms = log_rms(&f, &est, &lor, 1e4, 2.5e6);
    assert!(rms < 0.15, "RMS {rms}");
}

#[test]
fn zero_amplitude_bath_gives_zero_spectrum() {
    let dir = TempDir::new().unwrap();
    ok(&run(dir.path(), "[psd]\namplitude_phi0 = 0.0\npaths = 4\n", &["psd"]));
    let est = column(&dir.path().join("out/psd.csv"), "psd_estimated");
    assert!(!est.is_empty() && est.iter().all(|v| v.abs() < 1e-30));
}

#[test]
fn fit_command_refits_external_fringe() {
    let dir = TempDir::new().unwrap();
    let (g, w) = (5e4, 2.0 * PI * 0.8e6);
    let mut text = String::from("# measured somewhere\ntime_s,p1\n");
    for k in 0..=800 {
        let t = k as f64 * 50e-9;
        text.push_str(&format!("{t},{}\n", 0.5 * (1.0 + (-g * t).exp() * (w * t).cos())));
    }
    let input = dir.path().join("fringe.csv");
    std::fs::write(&input, text).unwrap();
    ok(&run(dir.path(), "", &["fit", "--input", input.to_str().unwrap()]));
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/fit.json")).unwrap()).unwrap();
    let r = &fit["exponential"]["result"];
    assert!((r["gamma"].as_f64().unwrap() / g - 1.0).abs() < 1e-6);
    assert!((r["delta_omega"].as_f64().unwrap() / w - 1.0).abs() < 1e-6);
    assert_eq!(fit["preferred"], "exponential");

    std::fs::write(&input, "time_s,p1\n0,0.5\n1e-6,abc\n").unwrap();
    assert_eq!(run(dir.path(), "", &["fit", "--input", input.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn multi_rtn_writes_long_form_and_contrast() {
    let dir = TempDir::new().unwrap();
    let cfg = "[ramsey]\nhorizon_s = 20e-6\n[multi_rtn]\nsource_counts = [1, 3]\nseeds = 2\nrepetitions = 30\n";
    ok(&run(dir.path(), cfg, &["--seed", "9", "multi-rtn"]));
    let (h, rows) = table(&dir.path().join("out/contrast.csv"));
    assert_eq!(h, ["n_sources", "seed", "beating_contrast"]);
    let keys: Vec<(&str, &str)> = rows.iter().map(|r| (r[0].as_str(), r[1].as_str())).collect();
    assert_eq!(keys, [("1", "9"), ("3", "9"), ("1", "10"), ("3", "10")]);
    assert_eq!(column(&dir.path().join("out/multi_rtn.csv"), "envelope").len(), 4 * 401);
}

#[test]
fn repeated_runs_are_byte_identical_across_threads() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    ok(&run(a.path(), SMALL, &["--threads", "1", "--mode", "grid", "ramsey"]));
    ok(&run(b.path(), SMALL, &["--threads", "8", "--mode", "grid", "ramsey"]));
    for f in ["ramsey.csv", "fit.json"] {
        assert_eq!(
            std::fs::read(a.path().join("out").join(f)).unwrap(),
            std::fs::read(b.path().join("out").join(f)).unwrap(),
            "{f}"
        );
    }
}
