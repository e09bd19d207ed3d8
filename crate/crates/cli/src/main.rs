//! `molperf`: batch planning, epoch simulation, and kernel verification /
//! benchmarking over molecular-graph workloads.
//!
//! Exit codes: 0 success, 1 validation failure, 2 i/o failure, 3 selftest
//! failure. All randomness flows from the per-command `--seed` flag; thread
//! count can be overridden with the `RAYON_NUM_THREADS` environment
//! variable.

use clap::{Args, Parser, Subcommand, ValueEnum};
use molperf::contraction::{
    channelwise_tp_dense, channelwise_tp_fused, pool_edges_to_nodes, symmetric_contraction_dense,
    symmetric_contraction_fused, AtomicBasis, ContractionPlan, EdgeGeometry, NodeFeatures,
    PlanConfig, ProductWeights, Scalar,
};
use molperf::dataset::{
    load_manifest, manifest_stats, save_manifest, synthesize_manifest, table2_profiles,
    GraphMeta, SourceProfile,
};
use molperf::packer::{
    compute_metrics, pack_balanced_indexed, pack_bfd, pack_ffd, pack_fixed_count,
    BatchPlan, PackConfig, PlanDocument, SizeKey,
};
use molperf::selftest::{run_selftest, SelftestConfig};
use molperf::simulator::{
    assign, bin_costs, capacity_sweep, pad_to_worker_multiple, scaling_metrics, simulate_epoch,
    AssignPolicy, CostModel, SyncMode,
};
use molperf::so3::SparseCouplingTable;
use molperf::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "molperf", version, about = "Batch planning and equivariant kernel toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize or summarize graph manifests.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Pack a manifest into a batch plan.
    Pack(PackArgs),
    /// Simulate one data-parallel epoch over a plan.
    Simulate(SimulateArgs),
    /// Sweep bin capacities: pack + simulate each.
    Sweep(SweepArgs),
    /// Speedup / scaling-efficiency arithmetic over timing points.
    Scaling(ScalingArgs),
    /// Kernel correctness suite and benchmarks.
    Kernel {
        #[command(subcommand)]
        command: KernelCommand,
    },
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Generate a synthetic manifest from a source-mixture profile.
    Gen(DatasetGenArgs),
    /// Summarize a manifest (JSON to stdout or --out).
    Stats(DatasetStatsArgs),
}

#[derive(Args)]
struct DatasetGenArgs {
    /// Built-in profile name ("table2") or path to a profile JSON list.
    #[arg(long, default_value = "table2")]
    profile: String,
    #[arg(long)]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DatasetStatsArgs {
    manifest: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Balanced,
    FixedCount,
    Ffd,
    Bfd,
}

#[derive(Clone, Copy, ValueEnum)]
enum SizeKeyArg {
    Vertices,
    Edges,
    VerticesPlusEdges,
}

impl From<SizeKeyArg> for SizeKey {
    fn from(v: SizeKeyArg) -> Self {
        match v {
            SizeKeyArg::Vertices => SizeKey::Vertices,
            SizeKeyArg::Edges => SizeKey::Edges,
            SizeKeyArg::VerticesPlusEdges => SizeKey::VerticesPlusEdges,
        }
    }
}

#[derive(Args)]
struct PackArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = AlgoArg::Balanced)]
    algo: AlgoArg,
    #[arg(long, default_value_t = 3072)]
    capacity: u64,
    #[arg(long, default_value_t = 1)]
    workers: u32,
    #[arg(long, value_enum, default_value_t = SizeKeyArg::Vertices)]
    size_key: SizeKeyArg,
    /// Per-epoch shuffle seed (affects fixed-count plans only; balanced
    /// plans are shuffle-invariant).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Graphs per bin for --algo fixed-count.
    #[arg(long, default_value_t = 6)]
    batch: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    metrics_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    RoundRobin,
    Contiguous,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Barrier,
    NoBarrier,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Cost-model JSON; defaults to the edge-proportional model.
    #[arg(long)]
    cost_model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PolicyArg::RoundRobin)]
    policy: PolicyArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Barrier)]
    mode: ModeArg,
    #[arg(long)]
    out: PathBuf,
    /// Also dump the [step x worker] cost matrix as CSV.
    #[arg(long)]
    matrix_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated capacities, e.g. 1024,2048,3072.
    #[arg(long)]
    capacities: String,
    #[arg(long, default_value_t = 1)]
    workers: u32,
    #[arg(long)]
    cost_model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SizeKeyArg::Vertices)]
    size_key: SizeKeyArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScalingArgs {
    /// Comma-separated gpus:minutes points, e.g. "16:80,740:2".
    #[arg(long)]
    timings: String,
    #[arg(long, default_value_t = 0)]
    reference: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum KernelCommand {
    /// Run the correctness suite; exits 3 on any failed check.
    Selftest(SelftestArgs),
    /// Benchmark dense vs fused kernels; emits CSV rows.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 3)]
    lmax: usize,
    #[arg(long, default_value_t = 3)]
    nu: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 50)]
    rotations: usize,
    #[arg(long, default_value_t = 20)]
    grad_instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 3)]
    lmax: usize,
    #[arg(long, default_value_t = 128)]
    channels: usize,
    #[arg(long, default_value_t = 1000)]
    nodes: u32,
    #[arg(long, default_value_t = 12.0)]
    avg_degree: f64,
    #[arg(long, default_value_t = 2)]
    nu: usize,
    #[arg(long, value_enum, default_value_t = PrecisionArg::F64)]
    precision: PrecisionArg,
    #[arg(long, default_value_t = 3)]
    iters: usize,
    #[arg(long, default_value_t = 4.5)]
    cutoff: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::validation(format!("serialize: {e}")))?;
    std::fs::write(path, body + "\n")?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let body = std::fs::read_to_string(path)?;
    serde_json::from_str(&body).map_err(|e| Error::Parse {
        line: e.line(),
        message: format!("{}: {e}", path.display()),
    })
}

fn load_profiles(spec: &str) -> Result<Vec<SourceProfile>> {
    if spec == "table2" {
        Ok(table2_profiles())
    } else {
        read_json(Path::new(spec))
    }
}

fn load_cost_model(path: &Option<PathBuf>) -> Result<CostModel> {
    match path {
        Some(p) => read_json(p),
        None => Ok(CostModel::edge_proportional()),
    }
}

fn cmd_dataset_gen(args: &DatasetGenArgs) -> Result<()> {
    let profiles = load_profiles(&args.profile)?;
    let graphs = synthesize_manifest(&profiles, args.count, args.seed)?;
    save_manifest(&graphs, &args.out)?;
    println!("wrote {} records to {}", graphs.len(), args.out.display());
    Ok(())
}

fn cmd_dataset_stats(args: &DatasetStatsArgs) -> Result<()> {
    let graphs = load_manifest(&args.manifest)?;
    let stats = manifest_stats(&graphs)?;
    match &args.out {
        Some(path) => write_json(&stats, path)?,
        None => println!(
            "{}",
            serde_json::to_string_pretty(&stats)
                .map_err(|e| Error::validation(e.to_string()))?
        ),
    }
    Ok(())
}

fn cmd_pack(args: &PackArgs) -> Result<()> {
    let graphs = load_manifest(&args.manifest)?;
    let size_key: SizeKey = args.size_key.into();
    let config = PackConfig {
        capacity: args.capacity,
        workers: args.workers,
        size_key,
    };
    let items: Vec<(u64, u64)> = graphs.iter().map(|g| (g.id, size_key.size_of(g))).collect();
    let sizes: Vec<u64> = items.iter().map(|&(_, s)| s).collect();
    let plan = match args.algo {
        AlgoArg::Balanced => pack_balanced_indexed(&items, &config)?,
        AlgoArg::Ffd => remap_ids(pack_ffd(&sizes, &config)?, &graphs),
        AlgoArg::Bfd => remap_ids(pack_bfd(&sizes, &config)?, &graphs),
        AlgoArg::FixedCount => remap_ids(
            pack_fixed_count(&sizes, args.batch, args.seed, &config)?,
            &graphs,
        ),
    };
    write_json(&PlanDocument::from_plan(&plan), &args.out)?;

    // The metric pass indexes sizes positionally; remap manifest ids back.
    let pos_of: HashMap<u64, u64> = graphs
        .iter()
        .enumerate()
        .map(|(p, g)| (g.id, p as u64))
        .collect();
    let mut positional = plan.clone();
    for bin in &mut positional.bins {
        for id in &mut bin.graph_ids {
            *id = pos_of[id];
        }
    }
    let metrics = compute_metrics(&positional, &sizes)?;
    if let Some(path) = &args.metrics_out {
        write_json(&metrics, path)?;
    }
    println!(
        "{}: {} bins, utilization {:.4}, token_spread {}",
        plan.algorithm.as_str(),
        metrics.num_bins,
        metrics.utilization,
        metrics.token_spread
    );
    Ok(())
}

/// The positional packers label bins with list positions; translate back to
/// manifest ids.
fn remap_ids(mut plan: BatchPlan, graphs: &[GraphMeta]) -> BatchPlan {
    for bin in &mut plan.bins {
        for id in &mut bin.graph_ids {
            *id = graphs[*id as usize].id;
        }
    }
    plan
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let graphs = load_manifest(&args.manifest)?;
    let tokens: HashMap<u64, u64> = graphs.iter().map(|g| (g.id, u64::from(g.vertices))).collect();
    let doc: PlanDocument = read_json(&args.plan)?;
    let mut plan = doc.into_plan(&|id| tokens.get(&id).copied())?;
    let workers = plan.config.workers;
    pad_to_worker_multiple(&mut plan, workers);
    let model = load_cost_model(&args.cost_model)?;
    let policy = match args.policy {
        PolicyArg::RoundRobin => AssignPolicy::RoundRobin,
        PolicyArg::Contiguous => AssignPolicy::Contiguous,
    };
    let mode = match args.mode {
        ModeArg::Barrier => SyncMode::Barrier,
        ModeArg::NoBarrier => SyncMode::NoBarrier,
    };
    let assignment = assign(&plan, workers, policy)?;
    let costs = bin_costs(&plan, &graphs, &model)?;
    let report = simulate_epoch(&plan, &assignment, &costs, mode)?;
    if let Some(csv_path) = &args.matrix_csv {
        let mut csv = String::from("step");
        for w in 0..report.workers {
            csv.push_str(&format!(",worker{w}"));
        }
        csv.push('\n');
        for (s, row) in report.per_step_worker_cost.iter().enumerate() {
            csv.push_str(&s.to_string());
            for v in row {
                csv.push_str(&format!(",{v:.6e}"));
            }
            csv.push('\n');
        }
        std::fs::write(csv_path, csv)?;
    }
    write_json(&report, &args.out)?;
    println!(
        "epoch_time {:.6e}, imbalance {:.4}, padding_fraction {:.4}",
        report.epoch_time, report.imbalance, report.padding_fraction
    );
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let graphs = load_manifest(&args.manifest)?;
    let capacities: Vec<u64> = args
        .capacities
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|e| Error::validation(format!("bad capacity '{s}': {e}")))
        })
        .collect::<Result<_>>()?;
    let model = load_cost_model(&args.cost_model)?;
    let table = capacity_sweep(&graphs, &model, &capacities, args.workers, args.size_key.into())?;
    write_json(&table, &args.out)?;
    for row in &table.rows {
        match &row.error {
            Some(err) => println!("capacity {}: error ({err})", row.capacity),
            None => println!(
                "capacity {}: {} bins, utilization {:.4}, epoch_time {:.6e}",
                row.capacity, row.bins, row.utilization, row.epoch_time
            ),
        }
    }
    if let Some(knee) = table.knee_capacity {
        println!("knee capacity (utilization >= 0.95): {knee}");
    }
    Ok(())
}

fn cmd_scaling(args: &ScalingArgs) -> Result<()> {
    let mut timings = Vec::new();
    for part in args.timings.split(',') {
        let (gpus, time) = part
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::validation(format!("bad timing point '{part}'")))?;
        timings.push((
            gpus.parse::<u32>()
                .map_err(|e| Error::validation(format!("bad worker count '{gpus}': {e}")))?,
            time.parse::<f64>()
                .map_err(|e| Error::validation(format!("bad time '{time}': {e}")))?,
        ));
    }
    let table = scaling_metrics(&timings, args.reference)?;
    for row in &table.rows {
        println!(
            "gpus {:>6}  time {:>12.4}  speedup {:>8.3}  efficiency {:>7.2}%",
            row.gpus, row.epoch_time, row.speedup, row.efficiency_pct
        );
    }
    if let Some(path) = &args.out {
        write_json(&table, path)?;
    }
    Ok(())
}

fn cmd_selftest(args: &SelftestArgs) -> Result<bool> {
    let cfg = SelftestConfig {
        l_max: args.lmax,
        nu_max: args.nu,
        oracle_trials: args.trials,
        rotations: args.rotations,
        gradient_instances: args.grad_instances,
        seed: args.seed,
    };
    let outcomes = run_selftest(&cfg)?;
    let mut all_passed = true;
    for o in &outcomes {
        println!(
            "{} {}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
        all_passed &= o.passed;
    }
    Ok(all_passed)
}

struct BenchRow {
    kernel: &'static str,
    variant: &'static str,
    nodes: usize,
    edges: usize,
    channels: usize,
    l_max: usize,
    nu: usize,
    wall_time_ns: u128,
    checksum: f64,
}

fn time_ns<T>(iters: usize, mut f: impl FnMut() -> T) -> (u128, T) {
    let mut out = None;
    let start = Instant::now();
    for _ in 0..iters {
        out = Some(std::hint::black_box(f()));
    }
    (
        start.elapsed().as_nanos() / iters as u128,
        out.expect("at least one iteration"),
    )
}

fn bench_kernels<F: Scalar>(args: &BenchArgs) -> Result<Vec<BenchRow>> {
    if args.lmax > 6 {
        return Err(Error::validation(format!(
            "l_max {} unsupported (maximum 6)",
            args.lmax
        )));
    }
    if args.nu == 0 || args.nu > 4 {
        return Err(Error::validation("nu must be in 1..=4"));
    }
    let cfg = PlanConfig::uniform(args.lmax, args.nu);
    let plan = ContractionPlan::<F>::build(&cfg)?;
    let plan_f64 = ContractionPlan::<f64>::build(&cfg)?;
    let table = SparseCouplingTable::build(args.lmax, args.lmax, args.lmax);

    // Box side chosen so a uniform cloud at the given cutoff hits the
    // requested average degree (open-boundary, so slightly under).
    let volume_ball = 4.0 / 3.0 * std::f64::consts::PI * args.cutoff.powi(3);
    let box_side = (f64::from(args.nodes) * volume_ball / args.avg_degree.max(0.1)).cbrt();
    let graph = molperf::dataset::synthesize_geometry(
        args.nodes,
        box_side,
        args.cutoff,
        4,
        args.seed,
    )?;
    let nodes = graph.num_vertices();
    let edges = graph.edge_list.len();
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed ^ 0xbe6c);

    let dim = (args.lmax + 1) * (args.lmax + 1);
    let features = NodeFeatures::<F>::new(
        nodes,
        args.channels,
        args.lmax,
        (0..nodes * args.channels * dim)
            .map(|_| F::cast(rng.gen_range(-1.0..1.0)))
            .collect(),
    )?;
    let radial: Vec<F> = (0..edges * args.channels * plan.num_triples())
        .map(|_| F::cast(rng.gen_range(-1.0..1.0)))
        .collect();
    let geometry =
        EdgeGeometry::<F>::from_graph(&graph, args.channels, args.lmax, plan.num_triples(), radial)?;
    let weights = ProductWeights::<F>::new(
        4,
        args.channels,
        plan.num_paths(),
        (0..4 * args.channels * plan.num_paths())
            .map(|_| F::cast(rng.gen_range(-1.0..1.0)))
            .collect(),
    )?;
    let species = graph.species.clone();

    let checksum = |values: &[F]| values.iter().fold(0.0f64, |acc, v| acc + v.widen());
    let mut rows = Vec::new();

    let (t, out) = time_ns(args.iters, || {
        channelwise_tp_dense(&features, &geometry, &graph.edge_list, &table, args.lmax).unwrap()
    });
    rows.push(BenchRow {
        kernel: "channelwise_tp",
        variant: "dense",
        nodes,
        edges,
        channels: args.channels,
        l_max: args.lmax,
        nu: args.nu,
        wall_time_ns: t,
        checksum: checksum(&out.values),
    });
    let (t, out) = time_ns(args.iters, || {
        channelwise_tp_fused(&features, &geometry, &graph.edge_list, &plan).unwrap()
    });
    rows.push(BenchRow {
        kernel: "channelwise_tp",
        variant: "fused",
        nodes,
        edges,
        channels: args.channels,
        l_max: args.lmax,
        nu: args.nu,
        wall_time_ns: t,
        checksum: checksum(&out.values),
    });

    let pooled = pool_edges_to_nodes(&out, &graph.edge_list, nodes)?;
    // The f64 dense reference path renders the same basis for both
    // precisions of the symmetric benchmarks.
    let pooled_f64 = AtomicBasis::<f64> {
        values: pooled.values.iter().map(|v| v.widen()).collect(),
        num_targets: pooled.num_targets,
        channels: pooled.channels,
        l_max: pooled.l_max,
    };
    let weights_f64 = ProductWeights::<f64> {
        values: weights.values.iter().map(|v| v.widen()).collect(),
        num_species: weights.num_species,
        channels: weights.channels,
        num_paths: weights.num_paths,
    };
    let (t, out) = time_ns(args.iters, || {
        symmetric_contraction_dense(
            &pooled_f64,
            &weights_f64,
            &species,
            &plan_f64.paths,
            args.nu,
            true,
            args.lmax,
        )
        .unwrap()
    });
    rows.push(BenchRow {
        kernel: "symmetric_contraction",
        variant: "dense",
        nodes,
        edges,
        channels: args.channels,
        l_max: args.lmax,
        nu: args.nu,
        wall_time_ns: t,
        checksum: checksum(
            &out.values
                .iter()
                .map(|v| F::cast(*v))
                .collect::<Vec<F>>(),
        ),
    });
    let (t, out) = time_ns(args.iters, || {
        symmetric_contraction_fused(&pooled, &weights, &species, &plan).unwrap()
    });
    rows.push(BenchRow {
        kernel: "symmetric_contraction",
        variant: "fused",
        nodes,
        edges,
        channels: args.channels,
        l_max: args.lmax,
        nu: args.nu,
        wall_time_ns: t,
        checksum: checksum(&out.values),
    });
    Ok(rows)
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let rows = match args.precision {
        PrecisionArg::F64 => bench_kernels::<f64>(args)?,
        PrecisionArg::F32 => bench_kernels::<f32>(args)?,
    };
    let mut csv = String::from("kernel,variant,nodes,edges,channels,l_max,nu,wall_time_ns,checksum\n");
    for r in rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{:.12e}\n",
            r.kernel, r.variant, r.nodes, r.edges, r.channels, r.l_max, r.nu, r.wall_time_ns,
            r.checksum
        ));
    }
    match &args.out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::Dataset { command } => {
            match command {
                DatasetCommand::Gen(args) => cmd_dataset_gen(args)?,
                DatasetCommand::Stats(args) => cmd_dataset_stats(args)?,
            }
            Ok(true)
        }
        Command::Pack(args) => cmd_pack(args).map(|()| true),
        Command::Simulate(args) => cmd_simulate(args).map(|()| true),
        Command::Sweep(args) => cmd_sweep(args).map(|()| true),
        Command::Scaling(args) => cmd_scaling(args).map(|()| true),
        Command::Kernel { command } => match command {
            KernelCommand::Selftest(args) => cmd_selftest(args),
            KernelCommand::Bench(args) => cmd_bench(args).map(|()| true),
        },
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("selftest failed");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io(_) => 2,
                Error::Validation(_) | Error::Parse { .. } => 1,
            })
        }
    }
}
