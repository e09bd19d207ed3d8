//! End-to-end tests of the `molperf` binary: the selftest acceptance gate,
//! subcommand examples, exit codes, and byte-level reproducibility.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_molperf"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn tmp(name: &str) -> PathBuf {
    let mut p = std::env::temp_dir();
    p.push(format!("molperf-cli-{name}-{}", std::process::id()));
    p
}

fn gen_manifest(count: u64, seed: u64, name: &str) -> PathBuf {
    let path = tmp(name);
    let out = run(&[
        "dataset",
        "gen",
        "--profile",
        "table2",
        "--count",
        &count.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "dataset gen failed: {out:?}");
    path
}

/// Criterion 11: the kernel selftest aggregates the sparsity, oracle,
/// equivariance, and gradient checks and exits 0.
#[test]
fn c11_kernel_selftest_exits_zero() {
    let out = run(&["kernel", "selftest", "--lmax", "3", "--nu", "3"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    println!(
        "criterion 11 kernel-selftest: {} (exit {:?})",
        if out.status.success() { "PASS" } else { "FAIL" },
        out.status.code()
    );
    assert!(out.status.success(), "selftest failed:\n{stdout}");
    for check in [
        "cg_sparsity",
        "oracle_equivalence",
        "equivariance",
        "gradient_check",
    ] {
        assert!(
            stdout.contains(&format!("PASS {check}")),
            "missing PASS line for {check}:\n{stdout}"
        );
    }
}

#[test]
fn dataset_gen_writes_count_lines_and_stats_sees_largest_system() {
    let manifest = gen_manifest(1000, 7, "gen");
    let body = std::fs::read_to_string(&manifest).unwrap();
    assert_eq!(body.lines().count(), 1000);

    let stats_path = tmp("stats");
    let out = run(&[
        "dataset",
        "stats",
        manifest.to_str().unwrap(),
        "--out",
        stats_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&stats_path).unwrap()).unwrap();
    assert_eq!(stats["vertices"]["max"], 768);

    std::fs::remove_file(&manifest).ok();
    std::fs::remove_file(&stats_path).ok();
}

#[test]
fn dataset_stats_missing_file_exits_two() {
    let out = run(&["dataset", "stats", "/definitely/not/here.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pack_balanced_worker_multiple_and_fixed_count_chunks() {
    let manifest = gen_manifest(500, 3, "pack");
    let plan_path = tmp("plan");
    let out = run(&[
        "pack",
        "--manifest",
        manifest.to_str().unwrap(),
        "--algo",
        "balanced",
        "--capacity",
        "3072",
        "--workers",
        "8",
        "--out",
        plan_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let plan: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&plan_path).unwrap()).unwrap();
    let bins = plan["bins"].as_array().unwrap();
    assert_eq!(bins.len() % 8, 0, "bin count {} not a multiple of 8", bins.len());

    let out = run(&[
        "pack",
        "--manifest",
        manifest.to_str().unwrap(),
        "--algo",
        "fixed-count",
        "--batch",
        "4",
        "--workers",
        "2",
        "--out",
        plan_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let plan: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&plan_path).unwrap()).unwrap();
    let bins = plan["bins"].as_array().unwrap();
    assert_eq!(bins.len(), 125);
    assert!(bins.iter().all(|b| b.as_array().unwrap().len() <= 4));

    std::fs::remove_file(&manifest).ok();
    std::fs::remove_file(&plan_path).ok();
}

#[test]
fn pack_undersized_capacity_names_the_graph() {
    let manifest = gen_manifest(200, 5, "oversize");
    let plan_path = tmp("plan-oversize");
    let out = run(&[
        "pack",
        "--manifest",
        manifest.to_str().unwrap(),
        "--capacity",
        "10",
        "--workers",
        "1",
        "--out",
        plan_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("graph") && err.contains("exceeds"),
        "unhelpful error: {err}"
    );
    std::fs::remove_file(&manifest).ok();
}

#[test]
fn simulate_uniform_costs_reports_unit_imbalance() {
    let manifest = gen_manifest(400, 11, "sim");
    let plan_path = tmp("sim-plan");
    assert!(run(&[
        "pack",
        "--manifest",
        manifest.to_str().unwrap(),
        "--capacity",
        "3072",
        "--workers",
        "4",
        "--out",
        plan_path.to_str().unwrap(),
    ])
    .status
    .success());

    // Fixed per-batch cost only: every bin costs the same.
    let model_path = tmp("uniform-model");
    std::fs::write(
        &model_path,
        r#"{"c_edge":0.0,"c_node":0.0,"c_fixed":1.0,"channels":1,"l_max":0,"nu_max":1}"#,
    )
    .unwrap();
    let report_path = tmp("sim-report");
    let out = run(&[
        "simulate",
        "--plan",
        plan_path.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--cost-model",
        model_path.to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["imbalance"], 1.0);

    for p in [&manifest, &plan_path, &model_path, &report_path] {
        std::fs::remove_file(p).ok();
    }
}

#[test]
fn simulated_epoch_ratio_balanced_vs_fixed_count() {
    let manifest = gen_manifest(3000, 13, "ratio");
    let mut epoch_times = Vec::new();
    for algo in ["balanced", "fixed-count"] {
        let plan_path = tmp(&format!("ratio-{algo}"));
        assert!(run(&[
            "pack",
            "--manifest",
            manifest.to_str().unwrap(),
            "--algo",
            algo,
            "--capacity",
            "3072",
            "--workers",
            "16",
            "--batch",
            "6",
            "--out",
            plan_path.to_str().unwrap(),
        ])
        .status
        .success());
        let report_path = tmp(&format!("ratio-report-{algo}"));
        let out = run(&[
            "simulate",
            "--plan",
            plan_path.to_str().unwrap(),
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            report_path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{out:?}");
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
        epoch_times.push(report["epoch_time"].as_f64().unwrap());
        std::fs::remove_file(&plan_path).ok();
        std::fs::remove_file(&report_path).ok();
    }
    let ratio = epoch_times[1] / epoch_times[0];
    assert!(ratio >= 1.5, "epoch ratio {ratio:.2} below 1.5");
    std::fs::remove_file(&manifest).ok();
}

#[test]
fn scaling_reports_86_5_percent() {
    let out = run(&["scaling", "--timings", "16:80,740:2"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("86.49"), "{stdout}");
}

#[test]
fn sweep_brackets_capacities_with_error_rows() {
    let manifest = gen_manifest(300, 17, "sweep");
    let sweep_path = tmp("sweep-table");
    let out = run(&[
        "sweep",
        "--manifest",
        manifest.to_str().unwrap(),
        "--capacities",
        "100,800,3072,4000",
        "--workers",
        "2",
        "--out",
        sweep_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let table: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&sweep_path).unwrap()).unwrap();
    let rows = table["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    // 100 tokens is below the 768-atom systems: per-row error, not failure.
    assert!(rows[0]["error"].is_string());
    assert!(rows[2]["error"].is_null());
    assert!(rows[2]["utilization"].as_f64().unwrap() > 0.9);

    std::fs::remove_file(&manifest).ok();
    std::fs::remove_file(&sweep_path).ok();
}

#[test]
fn identical_flags_give_byte_identical_outputs() {
    let m1 = gen_manifest(800, 21, "repro-a");
    let m2 = gen_manifest(800, 21, "repro-b");
    assert_eq!(
        std::fs::read(&m1).unwrap(),
        std::fs::read(&m2).unwrap(),
        "manifest generation not reproducible"
    );
    let mut plans = Vec::new();
    for (i, m) in [&m1, &m2].iter().enumerate() {
        let plan_path = tmp(&format!("repro-plan-{i}"));
        assert!(run(&[
            "pack",
            "--manifest",
            m.to_str().unwrap(),
            "--capacity",
            "2048",
            "--workers",
            "4",
            "--out",
            plan_path.to_str().unwrap(),
        ])
        .status
        .success());
        plans.push(std::fs::read(&plan_path).unwrap());
        std::fs::remove_file(&plan_path).ok();
    }
    assert_eq!(plans[0], plans[1], "plans not reproducible");
    std::fs::remove_file(&m1).ok();
    std::fs::remove_file(&m2).ok();
}

/// Kernel outputs are independent of the worker pool size: checksums from
/// single-threaded and dual-threaded runs match exactly.
#[test]
fn kernel_results_independent_of_thread_count() {
    let mut checksums = Vec::new();
    for threads in ["1", "2"] {
        let csv_path = tmp(&format!("threads-{threads}"));
        let out = bin()
            .env("RAYON_NUM_THREADS", threads)
            .args([
                "kernel",
                "bench",
                "--lmax",
                "2",
                "--channels",
                "8",
                "--nodes",
                "120",
                "--avg-degree",
                "8",
                "--nu",
                "2",
                "--iters",
                "1",
                "--out",
                csv_path.to_str().unwrap(),
            ])
            .output()
            .expect("binary runs");
        assert!(out.status.success(), "{out:?}");
        let csv = std::fs::read_to_string(&csv_path).unwrap();
        let sums: Vec<String> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(8).unwrap().to_string())
            .collect();
        assert_eq!(sums.len(), 4);
        checksums.push(sums);
        std::fs::remove_file(&csv_path).ok();
    }
    assert_eq!(
        checksums[0], checksums[1],
        "kernel output depends on thread count"
    );
}

#[test]
fn bench_lmax_zero_variants_agree() {
    let csv_path = tmp("bench-l0");
    let out = run(&[
        "kernel",
        "bench",
        "--lmax",
        "0",
        "--channels",
        "4",
        "--nodes",
        "50",
        "--avg-degree",
        "6",
        "--nu",
        "2",
        "--iters",
        "1",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "kernel,variant,nodes,edges,channels,l_max,nu,wall_time_ns,checksum"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    // Dense and fused checksums agree per kernel at l = 0.
    assert_eq!(rows[0][8], rows[1][8]);
    assert_eq!(rows[2][8], rows[3][8]);
    std::fs::remove_file(&csv_path).ok();

    let out = run(&["kernel", "bench", "--lmax", "9"]);
    assert_eq!(out.status.code(), Some(1));
}
