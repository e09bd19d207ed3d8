//! Correctness suite for the tensor kernels: coupling-table sparsity,
//! dense/fused oracle equivalence, end-to-end rotation equivariance, and
//! reverse-mode gradient checks. The CLI runs it as `kernel selftest`; the
//! acceptance tests call the same checks directly.

use crate::contraction::{
    channelwise_tp_dense, channelwise_tp_fused, pool_edges_to_nodes, symmetric_contraction_dense,
    symmetric_contraction_fused, symmetric_contraction_vjp, AtomicBasis, ContractionPlan,
    EdgeGeometry, NodeFeatures, PlanConfig, ProductWeights,
};
use crate::dataset::GeometricGraph;
use crate::error::{Error, Result};
use crate::so3::{random_rotation, wigner_d, SparseCouplingTable};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const ORACLE_TOL: f64 = 1e-12;
pub const EQUIVARIANCE_TOL: f64 = 1e-10;
pub const GRADIENT_TOL: f64 = 1e-6;
pub const SPARSITY_BOUND: f64 = 0.20;

#[derive(Debug, Clone)]
pub struct SelftestConfig {
    pub l_max: usize,
    pub nu_max: usize,
    pub oracle_trials: usize,
    pub rotations: usize,
    pub gradient_instances: usize,
    pub seed: u64,
}

impl Default for SelftestConfig {
    fn default() -> Self {
        SelftestConfig {
            l_max: 3,
            nu_max: 3,
            oracle_trials: 200,
            rotations: 50,
            gradient_instances: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn pass(name: &str, detail: String) -> Self {
        CheckOutcome {
            name: name.to_string(),
            passed: true,
            detail,
        }
    }

    fn fail(name: &str, detail: String) -> Self {
        CheckOutcome {
            name: name.to_string(),
            passed: false,
            detail,
        }
    }
}

/// Largest element difference of two buffers, scaled by the larger overall
/// magnitude (so exact zeros compare cleanly).
pub fn relative_deviation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = a
        .iter()
        .chain(b)
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

fn validate_config(cfg: &SelftestConfig) -> Result<()> {
    if cfg.l_max > 6 {
        return Err(Error::validation(format!(
            "l_max {} unsupported (maximum 6)",
            cfg.l_max
        )));
    }
    if cfg.nu_max == 0 || cfg.nu_max > 4 {
        return Err(Error::validation("nu_max must be in 1..=4"));
    }
    Ok(())
}

/// Coupling-table soundness: stored-nonzero fraction of the full degree<=3
/// tensor stays under 20%, every entry obeys the triangle rule, and
/// triangle-violating blocks are empty.
pub fn check_coupling_sparsity() -> CheckOutcome {
    const NAME: &str = "cg_sparsity";
    let table = SparseCouplingTable::build(3, 3, 3);
    let density = table.density();
    for e in table.entries() {
        let (l1, l2, l3) = (e.l1 as usize, e.l2 as usize, e.l3 as usize);
        if l3 < l1.abs_diff(l2) || l3 > l1 + l2 {
            return CheckOutcome::fail(
                NAME,
                format!("stored entry violates triangle rule: ({l1},{l2},{l3})"),
            );
        }
        if !e.value.is_finite() || e.value == 0.0 {
            return CheckOutcome::fail(NAME, "stored entry is zero or non-finite".into());
        }
    }
    for (l1, l2, l3) in [(0usize, 0usize, 3usize), (0, 1, 3), (3, 1, 1), (2, 0, 3)] {
        if table.block_nnz(l1, l2, l3) != 0 {
            return CheckOutcome::fail(
                NAME,
                format!("triangle-violating block ({l1},{l2},{l3}) is non-empty"),
            );
        }
    }
    if density >= SPARSITY_BOUND {
        return CheckOutcome::fail(
            NAME,
            format!("density {density:.4} >= {SPARSITY_BOUND}"),
        );
    }
    CheckOutcome::pass(
        NAME,
        format!(
            "{} stored nonzeros, density {density:.4} < {SPARSITY_BOUND}",
            table.entries().len()
        ),
    )
}

struct KernelInstance {
    graph: GeometricGraph,
    features: NodeFeatures<f64>,
    geometry: EdgeGeometry<f64>,
    plan: ContractionPlan<f64>,
    table: SparseCouplingTable,
    weights: ProductWeights<f64>,
    species: Vec<u32>,
}

fn random_instance(
    rng: &mut ChaCha8Rng,
    max_nodes: usize,
    max_channels: usize,
    l_cap: usize,
    nu_cap: usize,
) -> KernelInstance {
    let nodes = rng.gen_range(2..=max_nodes.max(2)) as u32;
    let channels = rng.gen_range(1..=max_channels.max(1));
    let l_sh_max = rng.gen_range(0..=l_cap);
    let l_feat_max = rng.gen_range(0..=l_cap);
    let l_edge_out_max = rng.gen_range(0..=l_cap);
    let msg_l_max = rng.gen_range(0..=l_edge_out_max.max(1).min(l_cap));
    let nu_max = rng.gen_range(1..=nu_cap.max(1));
    let include_lower_orders = rng.gen_bool(0.5);
    let num_species = rng.gen_range(1..=4u32);

    let cfg = PlanConfig {
        l_sh_max,
        l_feat_max,
        l_edge_out_max,
        msg_l_max,
        nu_max,
        include_lower_orders,
    };
    let plan = ContractionPlan::<f64>::build(&cfg).expect("plan builds");
    let table = SparseCouplingTable::build(l_sh_max, l_feat_max, l_edge_out_max);
    let graph =
        crate::dataset::synthesize_geometry(nodes, 3.0, 1.6, num_species, rng.gen()).unwrap();
    let ne = graph.edge_list.len();

    let feat_dim = (l_feat_max + 1) * (l_feat_max + 1);
    let features = NodeFeatures::new(
        nodes as usize,
        channels,
        l_feat_max,
        (0..nodes as usize * channels * feat_dim)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
    )
    .unwrap();
    let radial: Vec<f64> = (0..ne * channels * plan.num_triples())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let geometry =
        EdgeGeometry::from_graph(&graph, channels, l_sh_max, plan.num_triples(), radial).unwrap();
    let weights = ProductWeights::new(
        num_species as usize,
        channels,
        plan.num_paths(),
        (0..num_species as usize * channels * plan.num_paths())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
    )
    .unwrap();
    KernelInstance {
        species: graph.species.clone(),
        graph,
        features,
        geometry,
        plan,
        table,
        weights,
    }
}

/// Dense/fused agreement for both kernels over randomized instances.
pub fn check_oracle_equivalence(cfg: &SelftestConfig) -> CheckOutcome {
    const NAME: &str = "oracle_equivalence";
    let l_cap = cfg.l_max.min(3);
    let nu_cap = cfg.nu_max.min(3);
    let mut rng = crate::rng::stream(cfg.seed, "selftest-oracle");
    let mut worst = 0.0f64;
    for trial in 0..cfg.oracle_trials {
        let inst = random_instance(&mut rng, 50, 8, l_cap, nu_cap);
        let dense_a = channelwise_tp_dense(
            &inst.features,
            &inst.geometry,
            &inst.graph.edge_list,
            &inst.table,
            inst.plan.config.l_edge_out_max,
        )
        .unwrap();
        let fused_a = channelwise_tp_fused(
            &inst.features,
            &inst.geometry,
            &inst.graph.edge_list,
            &inst.plan,
        )
        .unwrap();
        let err_a = relative_deviation(&dense_a.values, &fused_a.values);

        let pooled =
            pool_edges_to_nodes(&fused_a, &inst.graph.edge_list, inst.graph.num_vertices())
                .unwrap();
        let dense_m = symmetric_contraction_dense(
            &pooled,
            &inst.weights,
            &inst.species,
            &inst.plan.paths,
            inst.plan.config.nu_max,
            inst.plan.config.include_lower_orders,
            inst.plan.config.msg_l_max,
        )
        .unwrap();
        let fused_m =
            symmetric_contraction_fused(&pooled, &inst.weights, &inst.species, &inst.plan)
                .unwrap();
        let err_m = relative_deviation(&dense_m.values, &fused_m.values);

        let err = err_a.max(err_m);
        worst = worst.max(err);
        if err > ORACLE_TOL {
            return CheckOutcome::fail(
                NAME,
                format!("trial {trial}: relative deviation {err:.3e} > {ORACLE_TOL:.0e}"),
            );
        }
    }
    CheckOutcome::pass(
        NAME,
        format!(
            "{} trials, worst relative deviation {worst:.3e}",
            cfg.oracle_trials
        ),
    )
}

fn rotate_basis(d: &crate::so3::WignerD, b: &AtomicBasis<f64>) -> AtomicBasis<f64> {
    let mut out = b.clone();
    let dim = b.dim();
    for row in out.values.chunks_mut(dim) {
        d.rotate_layout_row(row);
    }
    out
}

fn rotate_positions(rot: &[[f64; 3]; 3], positions: &[[f64; 3]]) -> Vec<[f64; 3]> {
    positions
        .iter()
        .map(|p| {
            let mut q = [0.0; 3];
            for i in 0..3 {
                for j in 0..3 {
                    q[i] += rot[i][j] * p[j];
                }
            }
            q
        })
        .collect()
}

/// End-to-end equivariance: rotating the geometry and the input features
/// rotates per-edge A, pooled A, and messages m by the matching rotation
/// blocks, and leaves degree-0 messages invariant.
pub fn check_equivariance(cfg: &SelftestConfig) -> CheckOutcome {
    const NAME: &str = "equivariance";
    let l = cfg.l_max.min(3);
    let nu = cfg.nu_max.min(3);
    let mut rng = crate::rng::stream(cfg.seed, "selftest-equivariance");
    let plan_cfg = PlanConfig {
        l_sh_max: l,
        l_feat_max: l.min(2),
        l_edge_out_max: l.min(2),
        msg_l_max: l.min(2),
        nu_max: nu,
        include_lower_orders: true,
    };
    let plan = ContractionPlan::<f64>::build(&plan_cfg).expect("plan builds");
    let graph = crate::dataset::synthesize_geometry(12, 2.4, 1.8, 3, cfg.seed ^ 0x5eed).unwrap();
    let ne = graph.edge_list.len();
    if ne == 0 {
        return CheckOutcome::fail(NAME, "test geometry has no edges".into());
    }
    let channels = 3;
    let feat_dim = (plan_cfg.l_feat_max + 1) * (plan_cfg.l_feat_max + 1);
    let features = NodeFeatures::new(
        12,
        channels,
        plan_cfg.l_feat_max,
        (0..12 * channels * feat_dim)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
    )
    .unwrap();
    let radial: Vec<f64> = (0..ne * channels * plan.num_triples())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let geometry =
        EdgeGeometry::from_graph(&graph, channels, l, plan.num_triples(), radial.clone()).unwrap();
    let weights = ProductWeights::new(
        3,
        channels,
        plan.num_paths(),
        (0..3 * channels * plan.num_paths())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
    )
    .unwrap();
    let species = graph.species.clone();

    let a_edge = channelwise_tp_fused(&features, &geometry, &graph.edge_list, &plan).unwrap();
    let a_node = pool_edges_to_nodes(&a_edge, &graph.edge_list, 12).unwrap();
    let msgs = symmetric_contraction_fused(&a_node, &weights, &species, &plan).unwrap();

    let mut worst = 0.0f64;
    for _ in 0..cfg.rotations {
        let rot = random_rotation(&mut rng);
        let d_feat = wigner_d(plan_cfg.l_feat_max, &rot).unwrap();
        let d_out = wigner_d(plan_cfg.l_edge_out_max, &rot).unwrap();
        let d_msg = wigner_d(plan_cfg.msg_l_max, &rot).unwrap();

        // Same edge set, rotated coordinates and rotated input features.
        let rot_graph = GeometricGraph {
            positions: rotate_positions(&rot, &graph.positions),
            species: graph.species.clone(),
            edge_list: graph.edge_list.clone(),
            cutoff: graph.cutoff,
        };
        let rot_geometry =
            EdgeGeometry::from_graph(&rot_graph, channels, l, plan.num_triples(), radial.clone())
                .unwrap();
        let mut rot_features = features.clone();
        for row in rot_features.values.chunks_mut(feat_dim) {
            d_feat.rotate_layout_row(row);
        }

        let a_edge_rot =
            channelwise_tp_fused(&rot_features, &rot_geometry, &rot_graph.edge_list, &plan)
                .unwrap();
        let expect_a_edge = rotate_basis(&d_out, &a_edge);
        let err_edge = relative_deviation(&a_edge_rot.values, &expect_a_edge.values);

        let a_node_rot = pool_edges_to_nodes(&a_edge_rot, &rot_graph.edge_list, 12).unwrap();
        let expect_a_node = rotate_basis(&d_out, &a_node);
        let err_node = relative_deviation(&a_node_rot.values, &expect_a_node.values);

        let msgs_rot =
            symmetric_contraction_fused(&a_node_rot, &weights, &species, &plan).unwrap();
        let expect_msgs = rotate_basis(&d_msg, &msgs);
        let err_msg = relative_deviation(&msgs_rot.values, &expect_msgs.values);

        // Degree-0 channels are numerically invariant.
        let msg_dim = msgs.dim();
        let mut err_scalar = 0.0f64;
        let scale = msgs
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-300);
        for (rot_row, base_row) in msgs_rot
            .values
            .chunks(msg_dim)
            .zip(msgs.values.chunks(msg_dim))
        {
            err_scalar = err_scalar.max((rot_row[0] - base_row[0]).abs() / scale);
        }

        let err = err_edge.max(err_node).max(err_msg).max(err_scalar);
        worst = worst.max(err);
        if err > EQUIVARIANCE_TOL {
            return CheckOutcome::fail(
                NAME,
                format!("relative deviation {err:.3e} > {EQUIVARIANCE_TOL:.0e}"),
            );
        }
    }
    CheckOutcome::pass(
        NAME,
        format!(
            "{} rotations, worst relative deviation {worst:.3e}",
            cfg.rotations
        ),
    )
}

/// Reverse-mode gradients vs central finite differences.
pub fn check_gradients(cfg: &SelftestConfig) -> CheckOutcome {
    const NAME: &str = "gradient_check";
    let mut rng = crate::rng::stream(cfg.seed, "selftest-gradients");
    let mut worst = 0.0f64;
    for trial in 0..cfg.gradient_instances {
        let l_max = rng.gen_range(1..=cfg.l_max.min(2));
        let nu_max = rng.gen_range(1..=cfg.nu_max.min(3));
        let msg_l_max = rng.gen_range(0..=l_max);
        let include = rng.gen_bool(0.5);
        let nodes = 2usize;
        let channels = rng.gen_range(1..=2usize);
        let paths = crate::so3::generalized_cg_paths(nu_max, l_max, msg_l_max);
        let mut basis = AtomicBasis::<f64>::zeros(nodes, channels, l_max);
        for v in &mut basis.values {
            *v = rng.gen_range(-1.0..1.0);
        }
        let species = vec![0u32; nodes];
        let mut weights = ProductWeights::<f64>::zeros(1, channels, paths.len());
        for v in &mut weights.values {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut cot = AtomicBasis::<f64>::zeros(nodes, channels, msg_l_max);
        for v in &mut cot.values {
            *v = rng.gen_range(-1.0..1.0);
        }

        let loss = |b: &AtomicBasis<f64>, w: &ProductWeights<f64>| -> f64 {
            let m = symmetric_contraction_dense(b, w, &species, &paths, nu_max, include, msg_l_max)
                .unwrap();
            m.values.iter().zip(&cot.values).map(|(a, c)| a * c).sum()
        };
        let (ga, gw) =
            symmetric_contraction_vjp(&basis, &weights, &species, &paths, nu_max, include, &cot)
                .unwrap();
        let h = 1e-5;
        let mut check = |analytic: f64, fd: f64| -> f64 {
            let err = (analytic - fd).abs() / fd.abs().max(1.0);
            worst = worst.max(err);
            err
        };
        for idx in 0..basis.values.len() {
            let mut bp = basis.clone();
            bp.values[idx] += h;
            let mut bm = basis.clone();
            bm.values[idx] -= h;
            let fd = (loss(&bp, &weights) - loss(&bm, &weights)) / (2.0 * h);
            if check(ga.values[idx], fd) > GRADIENT_TOL {
                return CheckOutcome::fail(
                    NAME,
                    format!("trial {trial}: basis grad [{idx}] off by > {GRADIENT_TOL:.0e}"),
                );
            }
        }
        for idx in 0..weights.values.len() {
            let mut wp = weights.clone();
            wp.values[idx] += h;
            let mut wm = weights.clone();
            wm.values[idx] -= h;
            let fd = (loss(&basis, &wp) - loss(&basis, &wm)) / (2.0 * h);
            if check(gw.values[idx], fd) > GRADIENT_TOL {
                return CheckOutcome::fail(
                    NAME,
                    format!("trial {trial}: weight grad [{idx}] off by > {GRADIENT_TOL:.0e}"),
                );
            }
        }
    }
    CheckOutcome::pass(
        NAME,
        format!(
            "{} instances, worst relative deviation {worst:.3e}",
            cfg.gradient_instances
        ),
    )
}

/// Run all checks; any failure means the binary suite should exit nonzero.
pub fn run_selftest(cfg: &SelftestConfig) -> Result<Vec<CheckOutcome>> {
    validate_config(cfg)?;
    Ok(vec![
        check_coupling_sparsity(),
        check_oracle_equivalence(cfg),
        check_equivariance(cfg),
        check_gradients(cfg),
    ])
}
