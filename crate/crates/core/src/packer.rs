//! Capacity-bounded bin packing for mini-batch planning.
//!
//! The load-balancing packer pre-allocates a worker-multiple of bins sized
//! from the total token mass and distributes size-sorted items cyclically,
//! one item per bin per round, so bins fill at matched rates. First-fit /
//! best-fit decreasing and fixed-graph-count baselines are provided for
//! comparison, along with the multi-objective metrics the planners are
//! scored on.

use crate::dataset::GraphMeta;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

/// How a graph's packed "size" is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SizeKey {
    #[default]
    Vertices,
    Edges,
    VerticesPlusEdges,
}

impl SizeKey {
    pub fn size_of(&self, g: &GraphMeta) -> u64 {
        match self {
            SizeKey::Vertices => u64::from(g.vertices),
            SizeKey::Edges => g.edges,
            SizeKey::VerticesPlusEdges => u64::from(g.vertices) + g.edges,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackConfig {
    /// Maximum tokens per bin.
    pub capacity: u64,
    /// Number of data-parallel workers the plan will be spread over.
    pub workers: u32,
    pub size_key: SizeKey,
}

impl PackConfig {
    pub fn new(capacity: u64, workers: u32) -> Self {
        PackConfig {
            capacity,
            workers,
            size_key: SizeKey::Vertices,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(Error::validation("capacity must be >= 1"));
        }
        if self.workers == 0 {
            return Err(Error::validation("workers must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bin {
    /// Input ids in placement order; duplicate-free.
    pub graph_ids: Vec<u64>,
    /// Sum of member sizes.
    pub used: u64,
    pub capacity: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Balanced,
    FixedCount,
    Ffd,
    Bfd,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Balanced => "balanced",
            Algorithm::FixedCount => "fixed_count",
            Algorithm::Ffd => "ffd",
            Algorithm::Bfd => "bfd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub bins: Vec<Bin>,
    pub config: PackConfig,
    pub algorithm: Algorithm,
}

/// Multi-objective packing scores. `num_bins` counts non-empty bins;
/// `padding_objective` and `load_spread` use squared sizes, `token_spread`
/// and `utilization` linear sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackMetrics {
    pub num_bins: usize,
    /// Sum over assigned graphs of (size/C)^2; constant in the assignment by
    /// construction, reported for completeness.
    pub padding_objective: f64,
    /// Max pairwise difference of per-bin squared-size mass.
    pub load_spread: f64,
    /// Max minus min per-bin token load.
    pub token_spread: u64,
    /// Total tokens over total non-empty bin capacity.
    pub utilization: f64,
}

fn reject_oversized(sizes: &[u64], capacity: u64) -> Result<()> {
    for (i, &s) in sizes.iter().enumerate() {
        if s > capacity {
            return Err(Error::validation(format!(
                "graph {i} (size {s}) exceeds bin capacity {capacity}"
            )));
        }
        if s == 0 {
            return Err(Error::validation(format!("graph {i} has size 0")));
        }
    }
    Ok(())
}

struct LiveBin {
    id: u64,
    remaining: u64,
    items: Vec<usize>,
}

/// One allocation level of the balanced packer: pre-allocate a
/// worker-multiple of bins for the given (descending-sorted) items, fill
/// cyclically, and return (bins, leftover item range start).
fn balanced_level(
    items: &[(usize, u64)],
    capacity: u64,
    workers: u32,
    first_bin_id: u64,
) -> (Vec<LiveBin>, usize) {
    let total: u128 = items.iter().map(|&(_, s)| u128::from(s)).sum();
    let mut m = total.div_ceil(u128::from(capacity)) as u64;
    m = m.div_ceil(u64::from(workers)) * u64::from(workers);
    let mut active: Vec<LiveBin> = (0..m)
        .map(|k| LiveBin {
            id: first_bin_id + k,
            remaining: capacity,
            items: Vec::new(),
        })
        .collect();
    let mut retired: Vec<LiveBin> = Vec::new();
    let mut p = 0usize;

    while p < items.len() && !active.is_empty() {
        // Fullest bins (least remaining capacity) last; ties by creation id.
        active.sort_by(|a, b| b.remaining.cmp(&a.remaining).then(a.id.cmp(&b.id)));
        let mut full = vec![false; active.len()];
        for idx in 0..active.len() {
            if p >= items.len() {
                break;
            }
            let (pos, size) = items[p];
            if active[idx].remaining >= size {
                active[idx].items.push(pos);
                active[idx].remaining -= size;
                p += 1;
            } else {
                full[idx] = true;
            }
        }
        if full.iter().any(|&f| f) {
            let mut kept = Vec::new();
            let mut marked = Vec::new();
            for (bin, is_full) in active.drain(..).zip(full) {
                if is_full {
                    marked.push(bin);
                } else {
                    kept.push(bin);
                }
            }
            // A non-full bin that ended the round below some full bin's
            // remaining capacity means the full set was written off too
            // early; give all of it a second chance.
            let min_kept = kept.iter().map(|b| b.remaining).min();
            let max_marked = marked.iter().map(|b| b.remaining).max();
            let reopen = matches!((min_kept, max_marked), (Some(lo), Some(hi)) if lo < hi);
            if reopen {
                kept.extend(marked);
            } else {
                retired.extend(marked);
            }
            active = kept;
        }
    }
    retired.extend(active);
    (retired, p)
}

/// Load-balancing packer over explicit (id, size) pairs.
///
/// Items are stably sorted by size descending with ties broken by ascending
/// id, so the plan is invariant under any permutation of the input pairs;
/// per-epoch reshuffling upstream cannot change a balanced plan. Leftover
/// items that no pre-allocated bin could take recurse into a fresh
/// allocation; output bins appear in creation order.
pub fn pack_balanced_indexed(items: &[(u64, u64)], config: &PackConfig) -> Result<BatchPlan> {
    config.validate()?;
    let mut seen = std::collections::HashSet::with_capacity(items.len());
    for &(id, size) in items {
        if size > config.capacity {
            return Err(Error::validation(format!(
                "graph {id} (size {size}) exceeds bin capacity {}",
                config.capacity
            )));
        }
        if size == 0 {
            return Err(Error::validation(format!("graph {id} has size 0")));
        }
        if !seen.insert(id) {
            return Err(Error::validation(format!("duplicate graph id {id}")));
        }
    }
    let mut order: Vec<(usize, u64)> = items.iter().map(|&(_, s)| s).enumerate().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(items[a.0].0.cmp(&items[b.0].0)));

    let mut all_bins: Vec<LiveBin> = Vec::new();
    let mut slice: &[(usize, u64)] = &order;
    while !slice.is_empty() {
        let (bins, consumed) =
            balanced_level(slice, config.capacity, config.workers, all_bins.len() as u64);
        all_bins.extend(bins);
        slice = &slice[consumed..];
    }
    all_bins.sort_by_key(|b| b.id);
    let bins = all_bins
        .into_iter()
        .map(|b| Bin {
            graph_ids: b.items.iter().map(|&pos| items[pos].0).collect(),
            used: config.capacity - b.remaining,
            capacity: config.capacity,
        })
        .collect();
    Ok(BatchPlan {
        bins,
        config: *config,
        algorithm: Algorithm::Balanced,
    })
}

/// Load-balancing packer; input position doubles as the graph id.
pub fn pack_balanced(sizes: &[u64], config: &PackConfig) -> Result<BatchPlan> {
    let items: Vec<(u64, u64)> = sizes
        .iter()
        .enumerate()
        .map(|(i, &s)| (i as u64, s))
        .collect();
    pack_balanced_indexed(&items, config)
}

/// Baseline: shuffle by seed, then chunk a fixed number of graphs per bin.
/// No capacity constraint is enforced; the recorded capacity is the largest
/// bin token load actually produced.
pub fn pack_fixed_count(
    sizes: &[u64],
    graphs_per_batch: usize,
    seed: u64,
    config: &PackConfig,
) -> Result<BatchPlan> {
    if graphs_per_batch == 0 {
        return Err(Error::validation("graphs_per_batch must be >= 1"));
    }
    if config.workers == 0 {
        return Err(Error::validation("workers must be >= 1"));
    }
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    let mut rng = crate::rng::stream(seed, "pack_fixed_count");
    order.shuffle(&mut rng);
    let mut bins: Vec<Bin> = Vec::new();
    for chunk in order.chunks(graphs_per_batch) {
        let used = chunk.iter().map(|&i| sizes[i]).sum();
        bins.push(Bin {
            graph_ids: chunk.iter().map(|&i| i as u64).collect(),
            used,
            capacity: 0,
        });
    }
    let capacity = bins.iter().map(|b| b.used).max().unwrap_or(0);
    for b in &mut bins {
        b.capacity = capacity;
    }
    Ok(BatchPlan {
        bins,
        config: PackConfig {
            capacity,
            workers: config.workers,
            size_key: config.size_key,
        },
        algorithm: Algorithm::FixedCount,
    })
}

fn pack_fit_decreasing(sizes: &[u64], config: &PackConfig, best_fit: bool) -> Result<BatchPlan> {
    config.validate()?;
    reject_oversized(sizes, config.capacity)?;
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    let mut bins: Vec<Bin> = Vec::new();
    for i in order {
        let size = sizes[i];
        let candidate = if best_fit {
            // Tightest bin that still fits; ties by creation order.
            bins.iter()
                .enumerate()
                .filter(|(_, b)| b.capacity - b.used >= size)
                .min_by_key(|(idx, b)| (b.capacity - b.used, *idx))
                .map(|(idx, _)| idx)
        } else {
            bins.iter()
                .position(|b| b.capacity - b.used >= size)
        };
        match candidate {
            Some(idx) => {
                bins[idx].graph_ids.push(i as u64);
                bins[idx].used += size;
            }
            None => bins.push(Bin {
                graph_ids: vec![i as u64],
                used: size,
                capacity: config.capacity,
            }),
        }
    }
    Ok(BatchPlan {
        bins,
        config: *config,
        algorithm: if best_fit {
            Algorithm::Bfd
        } else {
            Algorithm::Ffd
        },
    })
}

/// Textbook first-fit decreasing; bins open on demand, no worker rounding.
pub fn pack_ffd(sizes: &[u64], config: &PackConfig) -> Result<BatchPlan> {
    pack_fit_decreasing(sizes, config, false)
}

/// Textbook best-fit decreasing; bins open on demand, no worker rounding.
pub fn pack_bfd(sizes: &[u64], config: &PackConfig) -> Result<BatchPlan> {
    pack_fit_decreasing(sizes, config, true)
}

/// Score a plan against the sizes it was built from, validating consistency
/// (total unique assignment, recorded loads, capacity).
pub fn compute_metrics(plan: &BatchPlan, sizes: &[u64]) -> Result<PackMetrics> {
    let mut seen = vec![false; sizes.len()];
    for bin in &plan.bins {
        let mut used = 0u64;
        for &id in &bin.graph_ids {
            let idx = usize::try_from(id).expect("id fits usize");
            if idx >= sizes.len() {
                return Err(Error::validation(format!(
                    "plan references graph {id} outside the size list"
                )));
            }
            if seen[idx] {
                return Err(Error::validation(format!(
                    "graph {id} assigned to more than one bin"
                )));
            }
            seen[idx] = true;
            used += sizes[idx];
        }
        if used != bin.used {
            return Err(Error::validation(format!(
                "bin records used={} but members sum to {used}",
                bin.used
            )));
        }
        if bin.used > bin.capacity {
            return Err(Error::validation(format!(
                "bin load {} exceeds capacity {}",
                bin.used, bin.capacity
            )));
        }
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::validation(format!(
            "graph {missing} is not assigned to any bin"
        )));
    }

    let capacity = plan.config.capacity;
    let occupied: Vec<&Bin> = plan.bins.iter().filter(|b| !b.graph_ids.is_empty()).collect();
    if occupied.is_empty() {
        return Ok(PackMetrics {
            num_bins: 0,
            padding_objective: 0.0,
            load_spread: 0.0,
            token_spread: 0,
            utilization: 0.0,
        });
    }
    let w2 = (capacity as f64) * (capacity as f64);
    let sq_mass = |bin: &Bin| -> f64 {
        bin.graph_ids
            .iter()
            .map(|&id| {
                let s = sizes[id as usize] as f64;
                s * s
            })
            .sum()
    };
    let padding_objective: f64 = occupied.iter().map(|b| sq_mass(b) / w2).sum();
    let sq: Vec<f64> = occupied.iter().map(|b| sq_mass(b)).collect();
    let load_spread = sq.iter().cloned().fold(f64::MIN, f64::max)
        - sq.iter().cloned().fold(f64::MAX, f64::min);
    let min_used = occupied.iter().map(|b| b.used).min().unwrap();
    let max_used = occupied.iter().map(|b| b.used).max().unwrap();
    let total_used: u64 = occupied.iter().map(|b| b.used).sum();
    Ok(PackMetrics {
        num_bins: occupied.len(),
        padding_objective,
        load_spread,
        token_spread: max_used - min_used,
        utilization: total_used as f64 / (occupied.len() as f64 * capacity as f64),
    })
}

/// Serialized plan document: `{algorithm, capacity, workers, bins}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDocument {
    pub algorithm: Algorithm,
    pub capacity: u64,
    pub workers: u32,
    pub bins: Vec<Vec<u64>>,
}

impl PlanDocument {
    pub fn from_plan(plan: &BatchPlan) -> Self {
        PlanDocument {
            algorithm: plan.algorithm,
            capacity: plan.config.capacity,
            workers: plan.config.workers,
            bins: plan.bins.iter().map(|b| b.graph_ids.clone()).collect(),
        }
    }

    /// Rebuild a full plan, recomputing per-bin loads from token counts.
    pub fn into_plan(self, tokens_by_id: &dyn Fn(u64) -> Option<u64>) -> Result<BatchPlan> {
        let mut bins = Vec::with_capacity(self.bins.len());
        for ids in self.bins {
            let mut used = 0u64;
            for &id in &ids {
                used += tokens_by_id(id).ok_or_else(|| {
                    Error::validation(format!("plan references unknown graph id {id}"))
                })?;
            }
            bins.push(Bin {
                graph_ids: ids,
                used,
                capacity: self.capacity,
            });
        }
        Ok(BatchPlan {
            bins,
            config: PackConfig {
                capacity: self.capacity,
                workers: self.workers,
                size_key: SizeKey::Vertices,
            },
            algorithm: self.algorithm,
        })
    }
}
