//! Synchronous data-parallel epoch simulation over a batch plan: bin-to-
//! worker assignment, per-step straggler timing, scaling arithmetic, and
//! capacity sweeps.

use crate::contraction::{ContractionPlan, PlanConfig};
use crate::dataset::GraphMeta;
use crate::error::{Error, Result};
use crate::packer::{self, BatchPlan, Bin, PackConfig, SizeKey};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// How bins map onto workers within an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignPolicy {
    /// Bin i -> worker i mod G, step i / G.
    RoundRobin,
    /// Bin i -> worker i / (bins/G), step i mod (bins/G).
    Contiguous,
}

/// Synchronization model for an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SyncMode {
    /// Barrier after every step: epoch time sums per-step worker maxima.
    #[default]
    Barrier,
    /// No intermediate barriers: epoch time is the maximum per-worker total.
    NoBarrier,
}

/// Bin index -> (worker, step) mapping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub policy: AssignPolicy,
    pub workers: u32,
    pub steps: usize,
    /// Indexed by bin.
    pub mapping: Vec<(u32, u32)>,
}

/// Every worker gets exactly bins/G bins; requires |bins| to be a multiple
/// of G (pad fixed-count plans first).
pub fn assign(plan: &BatchPlan, workers: u32, policy: AssignPolicy) -> Result<Assignment> {
    if workers == 0 {
        return Err(Error::validation("workers must be >= 1"));
    }
    let bins = plan.bins.len();
    if bins % workers as usize != 0 {
        return Err(Error::validation(format!(
            "{bins} bins are not a multiple of {workers} workers; pad the plan first"
        )));
    }
    let steps = bins / workers as usize;
    let mapping = (0..bins)
        .map(|i| match policy {
            AssignPolicy::RoundRobin => ((i % workers as usize) as u32, (i / workers as usize) as u32),
            AssignPolicy::Contiguous => ((i / steps.max(1)) as u32, (i % steps.max(1)) as u32),
        })
        .collect();
    Ok(Assignment {
        policy,
        workers,
        steps,
        mapping,
    })
}

/// Append empty bins until the plan is a worker multiple.
pub fn pad_to_worker_multiple(plan: &mut BatchPlan, workers: u32) {
    let g = workers as usize;
    if g == 0 {
        return;
    }
    while plan.bins.len() % g != 0 {
        plan.bins.push(Bin {
            graph_ids: Vec::new(),
            used: 0,
            capacity: plan.config.capacity,
        });
    }
}

/// Per-unit execution costs. The per-edge and per-node factors are scaled
/// by the kernel work profile (channels x coupling-table nonzeros) derived
/// from the configured degree/order maxima; `c_fixed` is per-batch overhead
/// (launch plus a constant communication share).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub c_edge: f64,
    pub c_node: f64,
    pub c_fixed: f64,
    pub channels: u64,
    pub l_max: usize,
    pub nu_max: usize,
}

impl CostModel {
    /// Edge-proportional model: bin cost = total member edges.
    pub fn edge_proportional() -> Self {
        CostModel {
            c_edge: 1.0,
            c_node: 0.0,
            c_fixed: 0.0,
            channels: 1,
            l_max: 0,
            nu_max: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_edge < 0.0 || self.c_node < 0.0 || self.c_fixed < 0.0 {
            return Err(Error::validation("cost coefficients must be >= 0"));
        }
        if self.c_edge == 0.0 && self.c_node == 0.0 && self.c_fixed == 0.0 {
            return Err(Error::validation("cost model cannot be all zeros"));
        }
        if self.nu_max == 0 {
            return Err(Error::validation("nu_max must be >= 1"));
        }
        Ok(())
    }

    /// (per-edge, per-node) work factors from the kernel lookup tables.
    pub fn work_factors(&self) -> Result<(f64, f64)> {
        let plan = ContractionPlan::<f64>::build(&PlanConfig::uniform(self.l_max, self.nu_max))?;
        Ok((
            (self.channels * plan.edge_nnz()) as f64,
            (self.channels * plan.node_nnz()) as f64,
        ))
    }
}

/// Cost of every bin in a plan under a cost model and manifest.
pub fn bin_costs(plan: &BatchPlan, graphs: &[GraphMeta], model: &CostModel) -> Result<Vec<f64>> {
    model.validate()?;
    let (edge_factor, node_factor) = model.work_factors()?;
    let by_id: HashMap<u64, &GraphMeta> = graphs.iter().map(|g| (g.id, g)).collect();
    let mut costs = Vec::with_capacity(plan.bins.len());
    for bin in &plan.bins {
        let mut cost = model.c_fixed;
        for &id in &bin.graph_ids {
            let g = by_id
                .get(&id)
                .ok_or_else(|| Error::validation(format!("plan references unknown graph {id}")))?;
            cost += model.c_edge * edge_factor * g.edges as f64
                + model.c_node * node_factor * f64::from(g.vertices);
        }
        costs.push(cost);
    }
    Ok(costs)
}

/// Epoch execution report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub workers: u32,
    pub steps: usize,
    pub policy: AssignPolicy,
    pub mode: SyncMode,
    /// [step][worker] cost matrix.
    pub per_step_worker_cost: Vec<Vec<f64>>,
    /// Sum over steps of the per-step worker maximum (barrier mode) or the
    /// max per-worker total (no-barrier mode).
    pub epoch_time: f64,
    /// Mean over steps of max/mean worker cost; 1.0 is perfectly balanced.
    pub imbalance: f64,
    /// 1 - token utilization over non-empty bins.
    pub padding_fraction: f64,
    /// Per worker: number of steps it was the slowest (first argmax).
    pub straggler_histogram: Vec<u64>,
}

/// Simulate one epoch: one bin per (worker, step), synchronous barrier or
/// aggregate mode.
pub fn simulate_epoch(
    plan: &BatchPlan,
    assignment: &Assignment,
    costs: &[f64],
    mode: SyncMode,
) -> Result<SimReport> {
    if costs.len() != plan.bins.len() || assignment.mapping.len() != plan.bins.len() {
        return Err(Error::validation(
            "plan, assignment, and cost list disagree on bin count",
        ));
    }
    let workers = assignment.workers as usize;
    let steps = assignment.steps;
    let mut matrix = vec![vec![0.0f64; workers]; steps];
    let mut filled = vec![vec![false; workers]; steps];
    for (bin, &(w, s)) in assignment.mapping.iter().enumerate() {
        let (w, s) = (w as usize, s as usize);
        if w >= workers || s >= steps || filled[s][w] {
            return Err(Error::validation("assignment is not one bin per slot"));
        }
        filled[s][w] = true;
        matrix[s][w] = costs[bin];
    }

    let mut epoch_time = 0.0;
    let mut imbalance_acc = 0.0;
    let mut stragglers = vec![0u64; workers];
    for row in &matrix {
        let max = row.iter().cloned().fold(f64::MIN, f64::max);
        let mean = row.iter().sum::<f64>() / workers as f64;
        epoch_time += max;
        imbalance_acc += if mean > 0.0 { max / mean } else { 1.0 };
        let argmax = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        stragglers[argmax] += 1;
    }
    if mode == SyncMode::NoBarrier {
        epoch_time = (0..workers)
            .map(|w| matrix.iter().map(|row| row[w]).sum::<f64>())
            .fold(f64::MIN, f64::max);
    }

    let occupied: Vec<&Bin> = plan.bins.iter().filter(|b| !b.graph_ids.is_empty()).collect();
    let utilization = if occupied.is_empty() || plan.config.capacity == 0 {
        0.0
    } else {
        occupied.iter().map(|b| b.used).sum::<u64>() as f64
            / (occupied.len() as f64 * plan.config.capacity as f64)
    };

    Ok(SimReport {
        workers: assignment.workers,
        steps,
        policy: assignment.policy,
        mode,
        per_step_worker_cost: matrix,
        epoch_time,
        imbalance: if steps > 0 {
            imbalance_acc / steps as f64
        } else {
            1.0
        },
        padding_fraction: 1.0 - utilization,
        straggler_histogram: stragglers,
    })
}

/// One measured or simulated (worker count, epoch time) point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub gpus: u32,
    pub epoch_time: f64,
    pub speedup: f64,
    pub efficiency_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub reference_gpus: u32,
    pub reference_time: f64,
    pub rows: Vec<ScalingRow>,
}

/// Speedup and scaling efficiency against the reference point:
/// efficiency = (T_ref * P_ref) / (T_P * P) * 100.
pub fn scaling_metrics(timings: &[(u32, f64)], reference_index: usize) -> Result<ScalingTable> {
    if timings.len() < 2 {
        return Err(Error::validation("need at least two timing points"));
    }
    if reference_index >= timings.len() {
        return Err(Error::validation("reference index out of range"));
    }
    for &(gpus, t) in timings {
        if gpus == 0 || !t.is_finite() || t <= 0.0 {
            return Err(Error::validation(
                "timings must have positive worker counts and times",
            ));
        }
    }
    let (p_ref, t_ref) = timings[reference_index];
    let rows = timings
        .iter()
        .map(|&(p, t)| ScalingRow {
            gpus: p,
            epoch_time: t,
            speedup: t_ref / t,
            efficiency_pct: (t_ref * f64::from(p_ref)) / (t * f64::from(p)) * 100.0,
        })
        .collect();
    Ok(ScalingTable {
        reference_gpus: p_ref,
        reference_time: t_ref,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub capacity: u64,
    pub bins: usize,
    pub utilization: f64,
    pub epoch_time: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Smallest swept capacity reaching 95% utilization.
    pub knee_capacity: Option<u64>,
}

/// Pack + simulate each capacity with the balanced packer; capacities below
/// the largest graph produce per-row errors rather than failing the sweep.
pub fn capacity_sweep(
    graphs: &[GraphMeta],
    model: &CostModel,
    capacities: &[u64],
    workers: u32,
    size_key: SizeKey,
) -> Result<SweepTable> {
    if graphs.is_empty() {
        return Err(Error::validation("capacity sweep needs a non-empty manifest"));
    }
    model.validate()?;
    let items: Vec<(u64, u64)> = graphs.iter().map(|g| (g.id, size_key.size_of(g))).collect();
    let max_size = items.iter().map(|&(_, s)| s).max().unwrap_or(0);
    let sizes_by_pos: Vec<u64> = items.iter().map(|&(_, s)| s).collect();
    let mut rows = Vec::with_capacity(capacities.len());
    for &capacity in capacities {
        if capacity < max_size {
            rows.push(SweepRow {
                capacity,
                bins: 0,
                utilization: 0.0,
                epoch_time: 0.0,
                error: Some(format!(
                    "capacity {capacity} below largest graph size {max_size}"
                )),
            });
            continue;
        }
        let config = PackConfig {
            capacity,
            workers,
            size_key,
        };
        let plan = packer::pack_balanced_indexed(&items, &config)?;
        // Plan ids are manifest ids; remap to positions for the metric pass.
        let pos_of: HashMap<u64, usize> = graphs.iter().enumerate().map(|(p, g)| (g.id, p)).collect();
        let mut pos_plan = plan.clone();
        for bin in &mut pos_plan.bins {
            for id in &mut bin.graph_ids {
                *id = pos_of[id] as u64;
            }
        }
        let metrics = packer::compute_metrics(&pos_plan, &sizes_by_pos)?;
        let assignment = assign(&plan, workers, AssignPolicy::RoundRobin)?;
        let costs = bin_costs(&plan, graphs, model)?;
        let report = simulate_epoch(&plan, &assignment, &costs, SyncMode::Barrier)?;
        rows.push(SweepRow {
            capacity,
            bins: plan.bins.len(),
            utilization: metrics.utilization,
            epoch_time: report.epoch_time,
            error: None,
        });
    }
    let knee_capacity = rows
        .iter()
        .filter(|r| r.error.is_none() && r.utilization >= 0.95)
        .map(|r| r.capacity)
        .min();
    Ok(SweepTable {
        rows,
        knee_capacity,
    })
}
