//! End-to-end tests of the zeronoise binary: exit codes, artifact layout,
//! and bit-identical reruns.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn zeronoise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zeronoise"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, content: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, content).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn invalid_config_exits_1_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.conf",
        "[map]\nname = pentagon\n",
    );
    let out = zeronoise(&["sweep", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("line 2"), "stderr: {stderr}");
    assert!(stderr.contains("pentagon"), "stderr: {stderr}");
}

#[test]
fn missing_config_exits_1() {
    let out = zeronoise(&["sweep"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("--config"));
}

#[test]
fn sweep_writes_artifacts_and_reruns_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "small.conf",
        "[map]\nname = perturbed-doubling\n\
         [kernel]\nname = uniform\n\
         [sweep]\nbackend = fourier\nresolution = 32\ndeltas = 0.2 0.1 0.05 0.025 0.0125\n\
         [solver]\ntolerance = 1e-13\n",
    );
    let out_a = dir.path().join("a");
    let run = zeronoise(&["sweep", "--config", &cfg, "--out", out_a.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&run.stderr));
    for artifact in ["sweep.csv", "fits.txt", "report.txt", "densities/h0.csv"] {
        assert!(out_a.join(artifact).exists(), "{artifact} missing");
    }
    let report = fs::read_to_string(out_a.join("report.txt")).unwrap();
    assert!(report.contains("[PASS] quadratic-speed"), "report: {report}");

    let out_b = dir.path().join("b");
    let rerun = zeronoise(&["sweep", "--config", &cfg, "--out", out_b.to_str().unwrap()]);
    assert_eq!(rerun.status.code(), Some(0));
    for artifact in ["sweep.csv", "fits.txt", "densities/h0.csv"] {
        let a = fs::read(out_a.join(artifact)).unwrap();
        let b = fs::read(out_b.join(artifact)).unwrap();
        assert_eq!(a, b, "{artifact} differs between reruns");
    }
}

#[test]
fn fit_refits_a_stored_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "small.conf",
        "[map]\nname = skew-tent\n\
         [kernel]\nname = uniform\n\
         [sweep]\nbackend = ulam\nresolution = 256\ndeltas = 0.1 0.05 0.025 0.0125\n",
    );
    let out = dir.path().join("run");
    let run = zeronoise(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&run.stderr));

    let fit = zeronoise(&["fit", out.join("sweep.csv").to_str().unwrap()]);
    assert_eq!(fit.status.code(), Some(0));
    let stdout = String::from_utf8(fit.stdout).unwrap();
    assert!(stdout.contains("field=dist_l1 model=Power"), "stdout: {stdout}");
    // the stored piecewise sweep must re-fit to a near-linear exponent
    let exp_line = stdout.lines().find(|l| l.starts_with("field=dist_l1 model=Power")).unwrap();
    let exponent: f64 = exp_line
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix("exponent="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((0.8..=1.2).contains(&exponent), "exponent {exponent}");
}

#[test]
fn failed_claim_exits_2_with_report_written() {
    let dir = tempfile::tempdir().unwrap();
    // deltas too coarse for the first-order deviation to reach 1e-3
    let cfg = write_config(
        dir.path(),
        "abs.conf",
        "[abstract]\nfamily = builtin\ndelta_max = 0.25\ndeltas = 0.2 0.02\n",
    );
    let out = dir.path().join("run");
    let run = zeronoise(&["abstract", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&run.stderr));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("[FAIL]"), "report: {report}");
    assert!(out.join("abstract_deviations.csv").exists());
}

#[test]
fn abstract_bundled_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/abstract_markov.conf");
    let out = dir.path().join("run");
    let run = zeronoise(&["abstract", "--config", cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&run.stderr));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("summary: 2/2 claims passed"), "report: {report}");
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.contains("per-delta deviations"), "stdout: {stdout}");
}

#[test]
fn montecarlo_seed_flag_controls_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "mc.conf",
        "[map]\nname = doubling\n\
         [kernel]\nname = triangular\n\
         [montecarlo]\nsteps = 20000\nburn_in = 100\nchains = 2\nbins = 32\ndelta = 0.1\nseed = 5\n",
    );
    let run_dir = |label: &str, extra: &[&str]| {
        let out = dir.path().join(label);
        let mut args = vec!["montecarlo", "--config", &cfg, "--out"];
        let out_str = out.to_str().unwrap().to_string();
        args.push(&out_str);
        args.extend_from_slice(extra);
        let run = zeronoise(&args);
        assert_eq!(run.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&run.stderr));
        fs::read(out.join("densities/montecarlo.csv")).unwrap()
    };
    let a = run_dir("a", &[]);
    let b = run_dir("b", &[]);
    let c = run_dir("c", &["--seed", "6"]);
    assert_eq!(a, b, "same config must reproduce the histogram bit-for-bit");
    assert_ne!(a, c, "--seed must override the config seed");
}

#[test]
fn stationary_writes_density_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "st.conf",
        "[map]\nname = skew-tent\n\
         [kernel]\nname = uniform\n\
         [sweep]\nbackend = ulam\nresolution = 128\n",
    );
    let out = dir.path().join("run");
    let run = zeronoise(&[
        "stationary", "--config", &cfg, "--out", out.to_str().unwrap(), "--delta", "0.1",
    ]);
    assert_eq!(run.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&run.stderr));
    let csv = fs::read_to_string(out.join("densities/h_delta_1.0000e-1.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,density"));
    assert_eq!(lines.count(), 128);
}
