//! Precomputed sparse-coefficient lookup tables driving the fused kernels.
//!
//! The plan owns the canonical (l1, l2, l3) triple enumeration shared with
//! the radial-weight layout, plus flattened per-path coupling nonzeros with
//! component indices resolved to flat layout offsets so the kernels do pure
//! array walks.

use crate::error::{Error, Result};
use crate::so3::{generalized_cg_paths, CouplingPath, IrrepsLayout, SparseCouplingTable};

use super::Scalar;

/// Canonical enumeration of radial-weight triples: lexicographic (l1, l2,
/// l3) over triangle-valid, natural-parity (l1+l2+l3 even) combinations.
/// l1 indexes the edge harmonics, l2 the sender features, l3 the output.
pub fn enumerate_triples(
    l_sh_max: usize,
    l_feat_max: usize,
    l_out_max: usize,
) -> Vec<(u8, u8, u8)> {
    let mut triples = Vec::new();
    for l1 in 0..=l_sh_max {
        for l2 in 0..=l_feat_max {
            for l3 in 0..=l_out_max {
                let triangle = l3 >= l1.abs_diff(l2) && l3 <= l1 + l2;
                let natural_parity = (l1 + l2 + l3) % 2 == 0;
                if triangle && natural_parity {
                    triples.push((l1 as u8, l2 as u8, l3 as u8));
                }
            }
        }
    }
    triples
}

/// Sparse nonzeros of one coupling block, with flat layout indices.
#[derive(Debug, Clone)]
pub struct TripleBlock<F> {
    pub l1: u8,
    pub l2: u8,
    pub l3: u8,
    /// Position of this triple in the canonical enumeration (= the radial
    /// weight column it reads).
    pub triple_index: usize,
    /// (sh layout index, feature layout index, output layout index, value).
    pub entries: Vec<(u16, u16, u16, F)>,
}

/// One coupling path flattened for the fused symmetric contraction:
/// `factors` holds nu layout indices per coefficient, chunked.
#[derive(Debug, Clone)]
pub struct FusedPath<F> {
    pub nu: usize,
    pub output_l: u8,
    /// Index into the full path list; the weight column this path reads.
    pub weight_index: usize,
    pub factors: Vec<u16>,
    pub outputs: Vec<u16>,
    pub coeffs: Vec<F>,
}

/// Kernel configuration a plan is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanConfig {
    /// Highest edge-harmonic degree.
    pub l_sh_max: usize,
    /// Highest sender-feature degree.
    pub l_feat_max: usize,
    /// Highest atomic-basis output degree.
    pub l_edge_out_max: usize,
    /// Highest message degree.
    pub msg_l_max: usize,
    /// Maximum correlation order.
    pub nu_max: usize,
    /// Sum correlation orders 1..=nu_max (true) or only nu_max (false).
    pub include_lower_orders: bool,
}

impl PlanConfig {
    /// One degree cap everywhere; the common benchmarking shape.
    pub fn uniform(l_max: usize, nu_max: usize) -> Self {
        PlanConfig {
            l_sh_max: l_max,
            l_feat_max: l_max,
            l_edge_out_max: l_max,
            msg_l_max: l_max,
            nu_max,
            include_lower_orders: true,
        }
    }
}

/// Lookup tables for both kernels, built once and immutable.
#[derive(Debug, Clone)]
pub struct ContractionPlan<F> {
    pub config: PlanConfig,
    pub triples: Vec<TripleBlock<F>>,
    /// Full canonical path list for (nu_max, l_edge_out_max, msg_l_max);
    /// weight buffers are aligned with it.
    pub paths: Vec<CouplingPath>,
    /// Paths actually executed (respecting `include_lower_orders`).
    pub fused_paths: Vec<FusedPath<F>>,
}

impl<F: Scalar> ContractionPlan<F> {
    pub fn build(config: &PlanConfig) -> Result<Self> {
        if config.nu_max == 0 {
            return Err(Error::validation("nu_max must be >= 1"));
        }
        let table = SparseCouplingTable::build(
            config.l_sh_max,
            config.l_feat_max,
            config.l_edge_out_max,
        );
        let mut triples = Vec::new();
        for (t, &(l1, l2, l3)) in
            enumerate_triples(config.l_sh_max, config.l_feat_max, config.l_edge_out_max)
                .iter()
                .enumerate()
        {
            let mut entries = Vec::new();
            for m3 in -(i64::from(l3))..=i64::from(l3) {
                for e in table.slice(l1 as usize, l2 as usize, l3 as usize, m3) {
                    entries.push((
                        IrrepsLayout::index(l1 as usize, i64::from(e.m1)) as u16,
                        IrrepsLayout::index(l2 as usize, i64::from(e.m2)) as u16,
                        IrrepsLayout::index(l3 as usize, m3) as u16,
                        F::cast(e.value),
                    ));
                }
            }
            triples.push(TripleBlock {
                l1,
                l2,
                l3,
                triple_index: t,
                entries,
            });
        }

        let paths = generalized_cg_paths(config.nu_max, config.l_edge_out_max, config.msg_l_max);
        let mut fused_paths = Vec::new();
        for (p, path) in paths.iter().enumerate() {
            if !config.include_lower_orders && path.nu != config.nu_max {
                continue;
            }
            let mut factors = Vec::with_capacity(path.nonzeros.len() * path.nu);
            let mut outputs = Vec::with_capacity(path.nonzeros.len());
            let mut coeffs = Vec::with_capacity(path.nonzeros.len());
            for nz in &path.nonzeros {
                for (l, m) in path.ls.iter().zip(&nz.ms) {
                    factors.push(IrrepsLayout::index(*l as usize, i64::from(*m)) as u16);
                }
                outputs
                    .push(IrrepsLayout::index(path.output_l as usize, i64::from(nz.m_out)) as u16);
                coeffs.push(F::cast(nz.value));
            }
            fused_paths.push(FusedPath {
                nu: path.nu,
                output_l: path.output_l,
                weight_index: p,
                factors,
                outputs,
                coeffs,
            });
        }
        Ok(ContractionPlan {
            config: *config,
            triples,
            paths,
            fused_paths,
        })
    }

    /// Number of radial-weight columns.
    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    /// Number of weight columns (full path list, independent of the
    /// lower-order flag).
    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    /// Total channelwise-product nonzeros.
    pub fn edge_nnz(&self) -> u64 {
        self.triples.iter().map(|t| t.entries.len() as u64).sum()
    }

    /// Total executed symmetric-contraction nonzeros.
    pub fn node_nnz(&self) -> u64 {
        self.fused_paths
            .iter()
            .map(|p| p.coeffs.len() as u64)
            .sum()
    }
}
