//! Balanced batch planning and equivariant tensor-contraction kernels for
//! training graph networks on large heterogeneous molecular-graph datasets.
//!
//! The crate has two halves that share a thin layer of dataset plumbing:
//!
//! * **Batch planning** ([`dataset`], [`packer`], [`simulator`]): synthesize
//!   or load per-graph metadata, pack graphs into capacity-bounded bins with
//!   a load-balancing packer (plus first-fit / best-fit / fixed-count
//!   baselines), and simulate synchronous data-parallel epoch execution over
//!   the resulting plans.
//! * **Contraction kernels** ([`so3`], [`contraction`]): real spherical
//!   harmonics, sparse Clebsch-Gordan coupling tables, Wigner rotation
//!   matrices, and the channelwise tensor product / symmetric tensor
//!   contraction kernels in both a dense reference form and an optimized
//!   sparse-path form, with reverse-mode derivatives.
//!
//! [`selftest`] bundles the correctness suite (coupling-table sparsity,
//! dense/fused oracle equivalence, rotation equivariance, gradient checks)
//! so it can run both under `cargo test` and from the CLI.

pub mod contraction;
pub mod dataset;
pub mod error;
pub mod packer;
pub mod selftest;
pub mod simulator;
pub mod so3;

pub(crate) mod rng;

pub use error::{Error, Result};
