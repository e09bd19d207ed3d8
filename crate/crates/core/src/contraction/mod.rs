//! Channelwise tensor product and symmetric tensor contraction kernels.
//!
//! Each kernel exists twice: a dense reference that visits every (l, m)
//! combination of the coupling tensors (multiplying by the zeros), and a
//! fused single-pass variant that walks precomputed sparse coefficient
//! tables with per-target accumulators kept in locals. The dense forms are
//! the correctness oracles; the fused forms are the optimization.
//!
//! All kernels are generic over `f64` (the correctness substrate) and `f32`
//! (offered for throughput measurements with relaxed tolerances).

mod channelwise;
mod plan;
mod symmetric;

pub use channelwise::{channelwise_tp_dense, channelwise_tp_fused, pool_edges_to_nodes};
pub use plan::{enumerate_triples, ContractionPlan, FusedPath, PlanConfig, TripleBlock};
pub use symmetric::{
    symmetric_contraction_dense, symmetric_contraction_fused, symmetric_contraction_vjp,
};

use crate::error::{Error, Result};

/// Floating-point substrate for the kernels.
pub trait Scalar:
    num::Float + core::ops::AddAssign + Send + Sync + std::fmt::Debug + Default + 'static
{
    fn cast(v: f64) -> Self;
    fn widen(self) -> f64;
}

impl Scalar for f64 {
    fn cast(v: f64) -> Self {
        v
    }
    fn widen(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    fn cast(v: f64) -> Self {
        v as f32
    }
    fn widen(self) -> f64 {
        f64::from(self)
    }
}

fn lm_dim(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1)
}

/// Per-node equivariant features [num_nodes x channels x (l_max+1)^2].
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures<F> {
    pub values: Vec<F>,
    pub num_nodes: usize,
    pub channels: usize,
    pub l_max: usize,
}

impl<F: Scalar> NodeFeatures<F> {
    pub fn new(num_nodes: usize, channels: usize, l_max: usize, values: Vec<F>) -> Result<Self> {
        if values.len() != num_nodes * channels * lm_dim(l_max) {
            return Err(Error::validation("node feature buffer length mismatch"));
        }
        Ok(NodeFeatures {
            values,
            num_nodes,
            channels,
            l_max,
        })
    }

    pub fn zeros(num_nodes: usize, channels: usize, l_max: usize) -> Self {
        NodeFeatures {
            values: vec![F::zero(); num_nodes * channels * lm_dim(l_max)],
            num_nodes,
            channels,
            l_max,
        }
    }

    pub fn dim(&self) -> usize {
        lm_dim(self.l_max)
    }

    pub fn row(&self, node: usize, channel: usize) -> &[F] {
        let dim = self.dim();
        let start = (node * self.channels + channel) * dim;
        &self.values[start..start + dim]
    }

    pub fn row_mut(&mut self, node: usize, channel: usize) -> &mut [F] {
        let dim = self.dim();
        let start = (node * self.channels + channel) * dim;
        &mut self.values[start..start + dim]
    }
}

/// Per-edge (after the channelwise product) or per-node (after pooling)
/// atomic-basis features [num_targets x channels x (l_max+1)^2].
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicBasis<F> {
    pub values: Vec<F>,
    pub num_targets: usize,
    pub channels: usize,
    pub l_max: usize,
}

impl<F: Scalar> AtomicBasis<F> {
    pub fn zeros(num_targets: usize, channels: usize, l_max: usize) -> Self {
        AtomicBasis {
            values: vec![F::zero(); num_targets * channels * lm_dim(l_max)],
            num_targets,
            channels,
            l_max,
        }
    }

    pub fn dim(&self) -> usize {
        lm_dim(self.l_max)
    }

    pub fn row(&self, target: usize, channel: usize) -> &[F] {
        let dim = self.dim();
        let start = (target * self.channels + channel) * dim;
        &self.values[start..start + dim]
    }

    pub fn row_mut(&mut self, target: usize, channel: usize) -> &mut [F] {
        let dim = self.dim();
        let start = (target * self.channels + channel) * dim;
        &mut self.values[start..start + dim]
    }
}

/// Higher-order messages [num_nodes x channels x (l_max+1)^2].
pub type Messages<F> = AtomicBasis<F>;

/// Per-edge geometry inputs: spherical harmonics of the edge unit vectors
/// and radial weights, one per valid (l1, l2, l3) triple in the canonical
/// plan order.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGeometry<F> {
    /// [num_edges x (l_sh_max+1)^2]
    pub sh: Vec<F>,
    /// [num_edges x channels x num_triples]
    pub radial: Vec<F>,
    pub num_edges: usize,
    pub channels: usize,
    pub l_sh_max: usize,
    pub num_triples: usize,
}

impl<F: Scalar> EdgeGeometry<F> {
    pub fn new(
        num_edges: usize,
        channels: usize,
        l_sh_max: usize,
        num_triples: usize,
        sh: Vec<F>,
        radial: Vec<F>,
    ) -> Result<Self> {
        if sh.len() != num_edges * lm_dim(l_sh_max) {
            return Err(Error::validation("spherical-harmonic buffer length mismatch"));
        }
        if radial.len() != num_edges * channels * num_triples {
            return Err(Error::validation("radial buffer length mismatch"));
        }
        Ok(EdgeGeometry {
            sh,
            radial,
            num_edges,
            channels,
            l_sh_max,
            num_triples,
        })
    }

    /// Evaluate the harmonics of every edge unit vector of a geometric
    /// graph; radial weights are supplied by the caller.
    pub fn from_graph(
        graph: &crate::dataset::GeometricGraph,
        channels: usize,
        l_sh_max: usize,
        num_triples: usize,
        radial: Vec<F>,
    ) -> Result<Self> {
        let dim = lm_dim(l_sh_max);
        let mut sh = Vec::with_capacity(graph.edge_list.len() * dim);
        for e in 0..graph.edge_list.len() {
            let y = crate::so3::real_sph_harm(l_sh_max, graph.edge_unit_vector(e))?;
            sh.extend(y.into_iter().map(F::cast));
        }
        Self::new(
            graph.edge_list.len(),
            channels,
            l_sh_max,
            num_triples,
            sh,
            radial,
        )
    }

    pub fn sh_row(&self, edge: usize) -> &[F] {
        let dim = lm_dim(self.l_sh_max);
        &self.sh[edge * dim..(edge + 1) * dim]
    }

    pub fn radial_row(&self, edge: usize, channel: usize) -> &[F] {
        let start = (edge * self.channels + channel) * self.num_triples;
        &self.radial[start..start + self.num_triples]
    }
}

/// Learnable contraction weights, one scalar per
/// (species, channel, coupling path).
#[derive(Debug, Clone, PartialEq)]
pub struct ProductWeights<F> {
    pub values: Vec<F>,
    pub num_species: usize,
    pub channels: usize,
    pub num_paths: usize,
}

impl<F: Scalar> ProductWeights<F> {
    pub fn new(
        num_species: usize,
        channels: usize,
        num_paths: usize,
        values: Vec<F>,
    ) -> Result<Self> {
        if values.len() != num_species * channels * num_paths {
            return Err(Error::validation("weight buffer length mismatch"));
        }
        Ok(ProductWeights {
            values,
            num_species,
            channels,
            num_paths,
        })
    }

    pub fn zeros(num_species: usize, channels: usize, num_paths: usize) -> Self {
        ProductWeights {
            values: vec![F::zero(); num_species * channels * num_paths],
            num_species,
            channels,
            num_paths,
        }
    }

    pub fn get(&self, species: usize, channel: usize, path: usize) -> F {
        self.values[(species * self.channels + channel) * self.num_paths + path]
    }

    pub fn get_mut(&mut self, species: usize, channel: usize, path: usize) -> &mut F {
        &mut self.values[(species * self.channels + channel) * self.num_paths + path]
    }
}

/// Flop-proportional work counts; the simulator's cost model consumes the
/// per-edge and per-node factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostEstimate {
    /// num_edges x channels x (channelwise-plan nonzeros)
    pub edge_term: u64,
    /// num_nodes x channels x (sum of selected path nonzeros)
    pub node_term: u64,
}

/// Work estimate for one pass of both kernels over a graph batch.
pub fn kernel_cost<F: Scalar>(
    num_edges: u64,
    num_nodes: u64,
    channels: u64,
    plan: &ContractionPlan<F>,
) -> CostEstimate {
    CostEstimate {
        edge_term: num_edges * channels * plan.edge_nnz(),
        node_term: num_nodes * channels * plan.node_nnz(),
    }
}
