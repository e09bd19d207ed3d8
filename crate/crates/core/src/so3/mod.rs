//! Rotation-group machinery: real spherical harmonics, sparse
//! Clebsch-Gordan coupling tables, generalized coupling paths, and Wigner
//! rotation matrices.
//!
//! Everything works in the real basis with components ordered m = -l..l and
//! orthonormal normalization; degree-l blocks of a feature vector live at
//! offset l^2 with dimension 2l+1.

mod cg;
mod paths;
mod sph;
mod wigner;

pub use cg::{CgEntry, SparseCouplingTable};
pub use paths::{generalized_cg_paths, CouplingPath, PathNonzero};
pub use sph::real_sph_harm;
pub use wigner::{random_rotation, wigner_d, WignerD};

use serde::{Deserialize, Serialize};

/// Index arithmetic for feature tensors carrying degrees 0..=l_max over a
/// fixed number of channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrrepsLayout {
    pub l_max: usize,
    pub channels: usize,
}

impl IrrepsLayout {
    pub fn new(l_max: usize, channels: usize) -> Self {
        IrrepsLayout { l_max, channels }
    }

    /// Total (l, m) dimension: sum over l of (2l+1) = (l_max+1)^2.
    pub fn total_lm_dim(&self) -> usize {
        (self.l_max + 1) * (self.l_max + 1)
    }

    /// Offset of the degree-l block.
    pub fn offset(l: usize) -> usize {
        l * l
    }

    /// Flat index of component (l, m), m in -l..=l.
    pub fn index(l: usize, m: i64) -> usize {
        debug_assert!(m.unsigned_abs() as usize <= l);
        l * l + (m + l as i64) as usize
    }
}
