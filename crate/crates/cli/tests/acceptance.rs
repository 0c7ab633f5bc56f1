//! Acceptance check for the command-line tool: reproducibility.
//!
//! Every subcommand is run twice with identical arguments and once each with
//! one and two workers; stdout, exit status, and any written output files
//! must be byte-identical across all runs. Check outcomes (exit 0 vs 1) may
//! legitimately differ between configurations, but never between repeats of
//! the same configuration, and a usage error (exit 2) always means the test
//! itself is wrong.

use std::path::PathBuf;
use std::process::{Command, Output};
use std::time::Instant;

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_fwishart")
}

fn tmp(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(binary())
        .args(args)
        .output()
        .expect("spawning the CLI binary succeeds")
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("CLI terminated by signal")
}

/// Runs `args` four times (twice plainly, then with one and two workers) and
/// checks that stdout and exit status never change. Returns the exit code.
fn assert_reproducible(label: &str, args: &[&str]) -> i32 {
    let first = run(args);
    let second = run(args);
    let code = exit_code(&first);
    assert_ne!(code, 2, "{label}: usage error\nstderr: {}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(code, exit_code(&second), "{label}: exit code changed between repeats");
    assert_eq!(
        first.stdout, second.stdout,
        "{label}: stdout differed between identical repeats"
    );

    let serial = run(&[args, &["--workers", "1"]].concat());
    let parallel = run(&[args, &["--workers", "2"]].concat());
    assert_eq!(
        exit_code(&serial),
        exit_code(&parallel),
        "{label}: exit code differed between worker counts"
    );
    assert_eq!(
        serial.stdout, parallel.stdout,
        "{label}: stdout differed between one and two workers"
    );
    assert_eq!(
        first.stdout, serial.stdout,
        "{label}: stdout differed between default and explicit workers"
    );
    code
}

/// Runs `args` with `--out` twice and compares the written files byte for
/// byte, then again with one and two workers.
fn assert_file_reproducible(label: &str, args: &[&str], extension: &str) {
    let path_a = tmp(&format!("{label}_a.{extension}"));
    let path_b = tmp(&format!("{label}_b.{extension}"));
    let (a, b) = (path_a.to_str().unwrap(), path_b.to_str().unwrap());

    run(&[args, &["--out", a, "--workers", "1"]].concat());
    run(&[args, &["--out", b, "--workers", "2"]].concat());
    let bytes_a = std::fs::read(&path_a).expect("first output file written");
    let bytes_b = std::fs::read(&path_b).expect("second output file written");
    assert!(!bytes_a.is_empty(), "{label}: empty output file");
    assert_eq!(bytes_a, bytes_b, "{label}: output files differed between worker counts");

    run(&[args, &["--out", b]].concat());
    let bytes_rerun = std::fs::read(&path_b).expect("rerun output file written");
    assert_eq!(bytes_a, bytes_rerun, "{label}: output file differed between repeats");
}

// Criterion: repeated runs and parallel-vs-serial runs of every subcommand
// produce byte-identical output.
#[test]
fn c14_reproducibility() {
    let started = Instant::now();
    let cases: &[(&str, &[&str])] = &[
        (
            "simulate",
            &["simulate", "--n", "3", "--p", "5", "--steps", "8", "--replicas", "4", "--seed", "7"],
        ),
        (
            "verify-limit",
            &["verify-limit", "--n", "20", "--p", "40", "--steps", "2", "--replicas", "3", "--seed", "7"],
        ),
        ("verify-gradients", &["verify-gradients", "--trials", "3", "--seed", "7"]),
        ("verify-pde", &["verify-pde"]),
        ("verify-cst", &["verify-cst", "--times", "0.5"]),
        (
            "gaps",
            &["gaps", "--n", "4", "--p", "6", "--steps", "16", "--replicas", "5", "--seed", "7"],
        ),
        (
            "holder",
            &[
                "holder", "--n", "4", "--p", "6", "--steps", "64", "--replicas", "100", "--lags",
                "2,4,8,16,32", "--seed", "7",
            ],
        ),
        (
            "invmoment",
            &["invmoment", "--draws", "50", "--scales", "0.5,1,2", "--seed", "7"],
        ),
        ("law-table", &["law-table", "--points", "20"]),
        ("law-table-json", &["law-table", "--points", "20", "--format", "json"]),
    ];
    for (label, args) in cases {
        let code = assert_reproducible(label, args);
        assert!(
            code == 0 || code == 1,
            "{label}: unexpected exit code {code}"
        );
    }

    assert_file_reproducible(
        "simulate",
        &["simulate", "--n", "3", "--p", "5", "--steps", "8", "--replicas", "4", "--seed", "7"],
        "json",
    );
    assert_file_reproducible("law_table", &["law-table", "--points", "20"], "csv");
    assert_file_reproducible(
        "gradients",
        &["verify-gradients", "--trials", "3", "--seed", "7"],
        "csv",
    );

    let elapsed = started.elapsed().as_secs_f64();
    println!(
        "[c14 reproducibility] PASS subcommands={} file_checks=3 elapsed={elapsed:.2}s",
        cases.len()
    );
    assert!(elapsed < 60.0, "criterion 14 exceeded its 1 min budget: {elapsed:.2}s");
}
