//! CLI acceptance: determinism of file payloads, PGM validity, config
//! round-trips, and exit codes.

use std::fs;
use std::path::Path;
use std::process::Command;

fn momlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_momlab"))
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("missing {name}: {e}"))
}

fn run_sweep(out: &Path, seed: &str) {
    let status = momlab()
        .args([
            "sweep",
            "--Q",
            "8",
            "--dim",
            "16",
            "--grid",
            "8x7",
            "--iters",
            "300",
            "--trials",
            "2",
            "--seed",
            seed,
            "--out",
        ])
        .arg(out)
        .status()
        .expect("binary runs");
    assert!(status.success());
}

// -------------------------------------------------------------------------
// 12. Determinism: same seed, byte-identical payloads
// -------------------------------------------------------------------------

#[test]
fn acceptance_12_cli_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_sweep(&a, "7");
    run_sweep(&b, "7");
    for name in [
        "grid.csv",
        "contour.csv",
        "meta.json",
        "grid.json",
        "heatmap_rate.pgm",
        "heatmap_var.pgm",
        "plots.gp",
    ] {
        assert_eq!(read(&a, name), read(&b, name), "{name} differs across identical runs");
    }

    // A different seed must actually change the measured payload.
    let c = tmp.path().join("c");
    run_sweep(&c, "8");
    assert_ne!(read(&a, "grid.csv"), read(&c, "grid.csv"));

    // Counterexample and finite-sum runs are deterministic too.
    let (d, e) = (tmp.path().join("d"), tmp.path().join("e"));
    for dir in [&d, &e] {
        let status = momlab()
            .args([
                "counterexample",
                "--n",
                "10",
                "--seeds",
                "4",
                "--iters",
                "120",
                "--seed",
                "3",
                "--out",
            ])
            .arg(dir)
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(read(&d, "traces/trace_n10.csv"), read(&e, "traces/trace_n10.csv"));
    assert_eq!(read(&d, "summary.json"), read(&e, "summary.json"));

    let (f, g) = (tmp.path().join("f"), tmp.path().join("g"));
    for dir in [&f, &g] {
        let status = momlab()
            .args([
                "sgdfs", "--Q", "16", "--seeds", "3", "--iters", "80", "--seed", "5", "--out",
            ])
            .arg(dir)
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(read(&f, "bounds_q16.csv"), read(&g, "bounds_q16.csv"));

    println!("ACCEPTANCE PASS [12 cli determinism] sweep, counterexample, and sgdfs payloads are byte-identical across reruns");
}

#[test]
fn pgm_outputs_are_valid() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    run_sweep(&out, "11");
    for name in ["heatmap_rate.pgm", "heatmap_var.pgm"] {
        let bytes = read(&out, name);
        let header = b"P5\n8 7\n255\n";
        assert!(bytes.starts_with(header), "{name} header");
        assert_eq!(bytes.len(), header.len() + 8 * 7, "{name} payload size");
    }
}

#[test]
fn config_round_trip_reproduces_payloads() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    run_sweep(&first, "13");
    let replay = tmp.path().join("replay");
    let status = momlab()
        .args(["sweep", "--config"])
        .arg(first.join("meta.json"))
        .args(["--out"])
        .arg(&replay)
        .status()
        .unwrap();
    assert!(status.success());
    for name in ["grid.csv", "contour.csv", "meta.json"] {
        assert_eq!(read(&first, name), read(&replay, name), "{name} differs after replay");
    }
}

#[test]
fn seed_env_override_applies() {
    let tmp = tempfile::tempdir().unwrap();
    let via_env = tmp.path().join("env");
    let status = momlab()
        .env("MOMLAB_SEED", "7")
        .args([
            "sweep", "--Q", "8", "--dim", "16", "--grid", "8x7", "--iters", "300", "--trials",
            "2", "--out",
        ])
        .arg(&via_env)
        .status()
        .unwrap();
    assert!(status.success());
    let via_flag = tmp.path().join("flag");
    run_sweep(&via_flag, "7");
    assert_eq!(read(&via_env, "grid.csv"), read(&via_flag, "grid.csv"));
}

#[test]
fn exit_codes() {
    // Usage error: 1.
    let status = momlab().args(["sweep"]).status().unwrap();
    assert_eq!(status.code(), Some(1));
    let status = momlab().args(["nonsense"]).status().unwrap();
    assert_eq!(status.code(), Some(1));
    // Help: 0.
    let status = momlab().args(["--help"]).status().unwrap();
    assert_eq!(status.code(), Some(0));
    // Validation suites pass on a clean build: 0.
    let status = momlab().args(["validate"]).status().unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn theory_values_on_the_cli_surface() {
    let out = momlab()
        .args(["theory", "--mu", "1", "--L", "4", "--nesterov"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("rate rho            0.5\n"), "{text}");

    let out = momlab()
        .args([
            "theory",
            "--mu",
            "0.05",
            "--L",
            "100",
            "--nesterov",
            "--divergence-factor",
            "--n",
            "50",
        ])
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    let factor_line = text
        .lines()
        .find(|l| l.starts_with("divergence factor"))
        .expect("factor printed");
    let value: f64 = factor_line
        .split_whitespace()
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert!((value - 1.05678).abs() < 1e-4, "factor {value}");
}
