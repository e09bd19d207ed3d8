//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `cargo test --test acceptance -- --nocapture`).

use molperf::contraction::{
    symmetric_contraction_dense, symmetric_contraction_fused, AtomicBasis, ContractionPlan,
    PlanConfig, ProductWeights,
};
use molperf::dataset::{synthesize_manifest, table2_profiles};
use molperf::packer::{
    compute_metrics, pack_balanced, pack_ffd, pack_fixed_count, PackConfig,
};
use molperf::selftest::{
    check_coupling_sparsity, check_equivariance, check_gradients, check_oracle_equivalence,
    SelftestConfig,
};
use molperf::simulator::{
    assign, bin_costs, pad_to_worker_multiple, scaling_metrics, simulate_epoch, AssignPolicy,
    CostModel, SyncMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn report(criterion: &str, passed: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} ({detail})",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {criterion} failed: {detail}");
}

/// Criterion 1: balanced plans satisfy total unique assignment, capacity,
/// worker multiplicity, and determinism over 1,000 randomized manifests
/// (N <= 5,000, sizes <= C) in under a minute.
#[test]
fn c01_packer_property_suite() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for trial in 0..1000u32 {
        let n = rng.gen_range(1..=5000usize);
        let capacity = rng.gen_range(8..=4096u64);
        let workers = rng.gen_range(1..=16u32);
        let sizes: Vec<u64> = (0..n).map(|_| rng.gen_range(1..=capacity)).collect();
        let cfg = PackConfig::new(capacity, workers);
        let plan = pack_balanced(&sizes, &cfg).unwrap();

        // Unique total assignment + capacity, via the validating metric pass.
        let metrics = compute_metrics(&plan, &sizes).unwrap();
        assert!(metrics.utilization <= 1.0 + 1e-12, "trial {trial}");
        for bin in &plan.bins {
            assert!(bin.used <= capacity, "trial {trial}: capacity violated");
        }
        assert_eq!(
            plan.bins.len() % workers as usize,
            0,
            "trial {trial}: bin count not a worker multiple"
        );
        let again = pack_balanced(&sizes, &cfg).unwrap();
        assert_eq!(plan, again, "trial {trial}: nondeterministic plan");
    }
    let elapsed = start.elapsed();
    report(
        "1 packer-property-suite",
        elapsed.as_secs_f64() < 60.0,
        &format!("1000 randomized manifests in {:.2}s", elapsed.as_secs_f64()),
    );
}

/// Criterion 2: exact hand-traced plans for the balanced packer and FFD.
#[test]
fn c02_packer_hand_trace() {
    let sizes = [7u64, 5, 4, 3, 2, 1];
    let balanced = pack_balanced(&sizes, &PackConfig::new(8, 2)).unwrap();
    let got: Vec<Vec<u64>> = balanced.bins.iter().map(|b| b.graph_ids.clone()).collect();
    let exact_balanced = got == vec![vec![0], vec![1], vec![2, 5], vec![3, 4]];

    let ffd = pack_ffd(&sizes, &PackConfig::new(8, 2)).unwrap();
    let got_ffd: Vec<Vec<u64>> = ffd.bins.iter().map(|b| b.graph_ids.clone()).collect();
    let exact_ffd = got_ffd == vec![vec![0, 5], vec![1, 3], vec![2, 4]];

    report(
        "2 packer-hand-trace",
        exact_balanced && exact_ffd,
        &format!("balanced bins {got:?}, ffd bins {got_ffd:?}"),
    );
}

/// Criterion 3: a million-graph synthetic manifest packs in <= 10 s
/// single-threaded, with quasi-linear growth over 10^4 and 10^5 prefixes.
#[test]
fn c03_packer_throughput_million() {
    let graphs = synthesize_manifest(&table2_profiles(), 1_000_000, 42).unwrap();
    let sizes: Vec<u64> = graphs.iter().map(|g| u64::from(g.vertices)).collect();
    let cfg = PackConfig::new(3072, 8);

    let mut timings = Vec::new();
    for n in [10_000usize, 100_000, 1_000_000] {
        let start = Instant::now();
        let plan = pack_balanced(&sizes[..n], &cfg).unwrap();
        let dt = start.elapsed().as_secs_f64();
        assert_eq!(plan.bins.len() % 8, 0);
        if n == 1_000_000 {
            // Full validation pass: unique total assignment, recorded
            // loads, and the 3072-token capacity on every bin.
            let metrics = compute_metrics(&plan, &sizes[..n]).unwrap();
            assert!(metrics.utilization <= 1.0 + 1e-12);
        }
        timings.push((n, dt));
    }
    let t_million = timings[2].1;
    // Quasi-linear growth: a 10x input must cost far less than the ~100x a
    // quadratic packer would (noise-floored for small timings).
    let quasi_linear = t_million <= 50.0 * timings[1].1.max(0.01);
    report(
        "3 packer-throughput",
        t_million <= 10.0 && quasi_linear,
        &format!(
            "pack times {:?} (s) for N = 1e4/1e5/1e6",
            timings.iter().map(|t| t.1).collect::<Vec<_>>()
        ),
    );
}

/// Criterion 4: stored-nonzero fraction of the full degree<=3 coupling
/// tensor is below 0.20.
#[test]
fn c04_cg_sparsity() {
    let outcome = check_coupling_sparsity();
    report("4 cg-sparsity", outcome.passed, &outcome.detail);
}

/// Criterion 5: fused kernels match the dense references within 1e-12
/// relative over >= 200 randomized instances, in under two minutes.
#[test]
fn c05_kernel_oracle_equivalence() {
    let start = Instant::now();
    let outcome = check_oracle_equivalence(&SelftestConfig::default());
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "5 kernel-oracle-equivalence",
        outcome.passed && elapsed < 120.0,
        &format!("{} in {elapsed:.1}s", outcome.detail),
    );
}

/// Criterion 6: end-to-end equivariance under >= 50 random rotations within
/// 1e-10 relative; degree-0 outputs rotation-invariant.
#[test]
fn c06_equivariance() {
    let outcome = check_equivariance(&SelftestConfig::default());
    report("6 equivariance", outcome.passed, &outcome.detail);
}

/// Criterion 7: contraction VJP matches central finite differences within
/// 1e-6 relative on >= 20 random instances.
#[test]
fn c07_gradient_check() {
    let outcome = check_gradients(&SelftestConfig::default());
    report("7 gradient-check", outcome.passed, &outcome.detail);
}

/// Criterion 8: the fused symmetric contraction sustains >= 1.5x the dense
/// reference throughput at nodes = 10^4, channels = 64, l_max = 3, nu = 2.
#[test]
fn c08_kernel_speedup() {
    let cfg = PlanConfig::uniform(3, 2);
    let plan = ContractionPlan::<f64>::build(&cfg).unwrap();
    let nodes = 10_000usize;
    let channels = 64usize;
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut basis = AtomicBasis::<f64>::zeros(nodes, channels, 3);
    for v in &mut basis.values {
        *v = rng.gen_range(-1.0..1.0);
    }
    let species: Vec<u32> = (0..nodes).map(|_| rng.gen_range(0..4)).collect();
    let mut weights = ProductWeights::<f64>::zeros(4, channels, plan.num_paths());
    for v in &mut weights.values {
        *v = rng.gen_range(-1.0..1.0);
    }

    // Warm the thread pool and caches once.
    let _ = symmetric_contraction_fused(&basis, &weights, &species, &plan).unwrap();

    let dense_iters = 2;
    let start = Instant::now();
    for _ in 0..dense_iters {
        let out = symmetric_contraction_dense(
            &basis, &weights, &species, &plan.paths, 2, true, 3,
        )
        .unwrap();
        std::hint::black_box(out);
    }
    let t_dense = start.elapsed().as_secs_f64() / dense_iters as f64;

    let fused_iters = 10;
    let start = Instant::now();
    for _ in 0..fused_iters {
        let out = symmetric_contraction_fused(&basis, &weights, &species, &plan).unwrap();
        std::hint::black_box(out);
    }
    let t_fused = start.elapsed().as_secs_f64() / fused_iters as f64;

    let ratio = t_dense / t_fused;
    report(
        "8 kernel-speedup",
        ratio >= 1.5,
        &format!(
            "dense {:.1} ms/iter, fused {:.1} ms/iter, throughput ratio {ratio:.2}x",
            t_dense * 1e3,
            t_fused * 1e3
        ),
    );
}

/// Criterion 9: on a 100k-graph mixture manifest with edge-proportional
/// costs, balanced packing beats fixed-count batching by >= 1.5x simulated
/// epoch time, and all balanced bins except possibly the final G sit within
/// [C - max_graph, C] tokens.
#[test]
fn c09_load_balancing_benefit() {
    let graphs = synthesize_manifest(&table2_profiles(), 100_000, 9).unwrap();
    let sizes: Vec<u64> = graphs.iter().map(|g| u64::from(g.vertices)).collect();
    let max_graph = *sizes.iter().max().unwrap();
    let workers = 64u32;
    let capacity = 3072u64;
    let cfg = PackConfig::new(capacity, workers);

    let balanced = pack_balanced(&sizes, &cfg).unwrap();
    let mut fixed = pack_fixed_count(&sizes, 6, 9, &cfg).unwrap();
    pad_to_worker_multiple(&mut fixed, workers);

    // Manifest ids are positional here by construction.
    let model = CostModel::edge_proportional();
    let t_balanced = simulate_epoch(
        &balanced,
        &assign(&balanced, workers, AssignPolicy::RoundRobin).unwrap(),
        &bin_costs(&balanced, &graphs, &model).unwrap(),
        SyncMode::Barrier,
    )
    .unwrap()
    .epoch_time;
    let t_fixed = simulate_epoch(
        &fixed,
        &assign(&fixed, workers, AssignPolicy::RoundRobin).unwrap(),
        &bin_costs(&fixed, &graphs, &model).unwrap(),
        SyncMode::Barrier,
    )
    .unwrap()
    .epoch_time;
    let ratio = t_fixed / t_balanced;

    let lower = capacity - max_graph;
    let body = &balanced.bins[..balanced.bins.len() - workers as usize];
    let mut out_of_window = 0usize;
    for bin in body {
        if bin.used < lower || bin.used > capacity {
            out_of_window += 1;
        }
    }

    report(
        "9 load-balancing-benefit",
        ratio >= 1.5 && out_of_window == 0,
        &format!(
            "epoch ratio {ratio:.2}x over {} balanced / {} fixed bins; {} of {} body bins outside [{lower},{capacity}]",
            balanced.bins.len(),
            fixed.bins.len(),
            out_of_window,
            body.len()
        ),
    );
}

/// Criterion 10: strong-scaling efficiency from published-style points
/// (16 workers at 80 min, 740 workers at 2 min) is 86.5% +- 0.1%.
#[test]
fn c10_scaling_arithmetic() {
    let table = scaling_metrics(&[(16, 80.0), (740, 2.0)], 0).unwrap();
    let eff = table.rows[1].efficiency_pct;
    report(
        "10 scaling-arithmetic",
        (eff - 86.5).abs() <= 0.1,
        &format!("efficiency {eff:.3}%"),
    );
}
