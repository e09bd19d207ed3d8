//! Clebsch-Gordan coupling coefficients in the real spherical-harmonic
//! basis, stored sparsely.
//!
//! Complex-basis coefficients come from Racah's closed-form sum evaluated
//! with exact big-rational arithmetic (one square root at the end). The
//! real-basis coupling is the complex tensor conjugated by the real<->complex
//! change of basis; for blocks with odd l1+l2+l3 the conjugated tensor is
//! purely imaginary and the imaginary part is taken (an intertwiner is only
//! defined up to a scalar). The transform produces exact zeros contaminated
//! by rounding, so entries below 1e-12 are dropped.

use crate::error::Result;
use num::complex::Complex64;
use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use std::collections::BTreeMap;

/// Magnitudes at or below this threshold are treated as exact zeros.
pub const NONZERO_EPS: f64 = 1e-12;

struct Factorials {
    table: Vec<BigInt>,
}

impl Factorials {
    fn new() -> Self {
        Factorials {
            table: vec![BigInt::one()],
        }
    }

    fn get(&mut self, n: i64) -> BigInt {
        debug_assert!(n >= 0);
        let n = n as usize;
        while self.table.len() <= n {
            let k = self.table.len();
            let next = self.table[k - 1].clone() * BigInt::from(k);
            self.table.push(next);
        }
        self.table[n].clone()
    }
}

/// Complex-basis Clebsch-Gordan coefficient <l1 m1 l2 m2 | l3 m3> via the
/// Racah sum. Exact rational under the square root, one f64 rounding.
fn cg_complex(facts: &mut Factorials, l1: i64, m1: i64, l2: i64, m2: i64, l3: i64, m3: i64) -> f64 {
    if m1 + m2 != m3
        || l3 < (l1 - l2).abs()
        || l3 > l1 + l2
        || m1.abs() > l1
        || m2.abs() > l2
        || m3.abs() > l3
    {
        return 0.0;
    }
    let ratio = |num: BigInt, den: BigInt| BigRational::new(num, den);
    let triangle = ratio(
        facts.get(l1 + l2 - l3) * facts.get(l1 - l2 + l3) * facts.get(-l1 + l2 + l3),
        facts.get(l1 + l2 + l3 + 1),
    );
    let weights = BigRational::from(
        BigInt::from(2 * l3 + 1)
            * facts.get(l1 + m1)
            * facts.get(l1 - m1)
            * facts.get(l2 + m2)
            * facts.get(l2 - m2)
            * facts.get(l3 + m3)
            * facts.get(l3 - m3),
    );
    let k_min = 0.max(l2 - l3 - m1).max(l1 - l3 + m2);
    let k_max = (l1 + l2 - l3).min(l1 - m1).min(l2 + m2);
    let mut sum = BigRational::zero();
    for k in k_min..=k_max {
        let den = facts.get(k)
            * facts.get(l1 + l2 - l3 - k)
            * facts.get(l1 - m1 - k)
            * facts.get(l2 + m2 - k)
            * facts.get(l3 - l2 + m1 + k)
            * facts.get(l3 - l1 - m2 + k);
        let term = ratio(BigInt::one(), den);
        if k % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    if sum.is_zero() {
        return 0.0;
    }
    let square = triangle * weights * sum.clone() * sum.clone();
    let magnitude = square.to_f64().expect("CG square fits in f64").sqrt();
    if sum.is_negative() {
        -magnitude
    } else {
        magnitude
    }
}

/// Row (r, m) of the unitary change of basis from complex to real harmonics.
fn u_entry(real_idx: i64, m: i64) -> Complex64 {
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let cs = |m: i64| if m % 2 == 0 { 1.0 } else { -1.0 };
    if real_idx == 0 {
        if m == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    } else if real_idx > 0 {
        if m == real_idx {
            Complex64::new(cs(m) * inv_sqrt2, 0.0)
        } else if m == -real_idx {
            Complex64::new(inv_sqrt2, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    } else if m == -real_idx {
        Complex64::new(0.0, -cs(m) * inv_sqrt2)
    } else if m == real_idx {
        Complex64::new(0.0, inv_sqrt2)
    } else {
        Complex64::new(0.0, 0.0)
    }
}

/// Dense real-basis coupling block for (l1, l2, l3), row-major over
/// (m1, m2, m3) with each m running -l..=l. Empty when the triangle rule
/// fails.
pub(crate) fn coupling_block_dense(l1: usize, l2: usize, l3: usize) -> Vec<f64> {
    let (n1, n2, n3) = (2 * l1 + 1, 2 * l2 + 1, 2 * l3 + 1);
    let mut block = vec![0.0; n1 * n2 * n3];
    if l3 < l1.abs_diff(l2) || l3 > l1 + l2 {
        return block;
    }
    let mut facts = Factorials::new();
    let (il1, il2, il3) = (l1 as i64, l2 as i64, l3 as i64);

    // Complex block, indexed by (m1, m2); m3 is forced to m1 + m2.
    let mut complex = vec![0.0; n1 * n2];
    for m1 in -il1..=il1 {
        for m2 in -il2..=il2 {
            if (m1 + m2).abs() <= il3 {
                complex[((m1 + il1) * n2 as i64 + (m2 + il2)) as usize] =
                    cg_complex(&mut facts, il1, m1, il2, m2, il3, m1 + m2);
            }
        }
    }

    // m values a real component r draws on: just {0} for r = 0, else {-|r|, |r|}.
    let candidates = |r: i64| if r == 0 { vec![0] } else { vec![-r.abs(), r.abs()] };

    let take_imag = (l1 + l2 + l3) % 2 == 1;
    for r1 in -il1..=il1 {
        for r2 in -il2..=il2 {
            for r3 in -il3..=il3 {
                let mut acc = Complex64::new(0.0, 0.0);
                for &m1 in &candidates(r1) {
                    let u1 = u_entry(r1, m1);
                    for &m2 in &candidates(r2) {
                        let u2 = u_entry(r2, m2);
                        let m3 = m1 + m2;
                        if m3.abs() != r3.abs() || m3.abs() > il3 {
                            continue;
                        }
                        let u3 = u_entry(r3, m3).conj();
                        let c = complex[((m1 + il1) * n2 as i64 + (m2 + il2)) as usize];
                        acc += u1 * u2 * u3 * c;
                    }
                }
                let val = if take_imag { acc.im } else { acc.re };
                debug_assert!(
                    (if take_imag { acc.re } else { acc.im }).abs() < 1e-10,
                    "coupling block ({l1},{l2},{l3}) not purely {}",
                    if take_imag { "imaginary" } else { "real" }
                );
                let idx = (((r1 + il1) * n2 as i64 + (r2 + il2)) * n3 as i64 + (r3 + il3)) as usize;
                block[idx] = val;
            }
        }
    }

    // Fix the residual sign freedom deterministically: first nonzero in
    // (m1, m2, m3) scan order is positive.
    if let Some(first) = block.iter().find(|v| v.abs() > NONZERO_EPS) {
        if *first < 0.0 {
            for v in &mut block {
                *v = -*v;
            }
        }
    }
    block
}

/// One stored nonzero coupling coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CgEntry {
    pub l1: u8,
    pub m1: i8,
    pub l2: u8,
    pub m2: i8,
    pub l3: u8,
    pub m3: i8,
    pub value: f64,
}

/// Sparse real-basis coupling table over all degree triples
/// (l1 <= l1_max, l2 <= l2_max, l3 <= l3_max).
///
/// Entries are grouped contiguously by (l1, l2, l3, m3) so a kernel can walk
/// exactly the contributing (m1, m2) pairs of one output component.
#[derive(Debug, Clone)]
pub struct SparseCouplingTable {
    l1_max: usize,
    l2_max: usize,
    l3_max: usize,
    entries: Vec<CgEntry>,
    index: BTreeMap<(u8, u8, u8, i8), (u32, u32)>,
}

impl SparseCouplingTable {
    pub fn build(l1_max: usize, l2_max: usize, l3_max: usize) -> Self {
        let mut entries = Vec::new();
        let mut index = BTreeMap::new();
        for l1 in 0..=l1_max {
            for l2 in 0..=l2_max {
                for l3 in 0..=l3_max {
                    if l3 < l1.abs_diff(l2) || l3 > l1 + l2 {
                        continue;
                    }
                    let block = coupling_block_dense(l1, l2, l3);
                    let (n1, n2, n3) = (2 * l1 + 1, 2 * l2 + 1, 2 * l3 + 1);
                    for m3 in 0..n3 {
                        let start = entries.len() as u32;
                        for m1 in 0..n1 {
                            for m2 in 0..n2 {
                                let v = block[(m1 * n2 + m2) * n3 + m3];
                                if v.abs() > NONZERO_EPS {
                                    entries.push(CgEntry {
                                        l1: l1 as u8,
                                        m1: (m1 as i64 - l1 as i64) as i8,
                                        l2: l2 as u8,
                                        m2: (m2 as i64 - l2 as i64) as i8,
                                        l3: l3 as u8,
                                        m3: (m3 as i64 - l3 as i64) as i8,
                                        value: v,
                                    });
                                }
                            }
                        }
                        let end = entries.len() as u32;
                        if end > start {
                            index.insert(
                                (l1 as u8, l2 as u8, l3 as u8, (m3 as i64 - l3 as i64) as i8),
                                (start, end),
                            );
                        }
                    }
                }
            }
        }
        SparseCouplingTable {
            l1_max,
            l2_max,
            l3_max,
            entries,
            index,
        }
    }

    pub fn maxima(&self) -> (usize, usize, usize) {
        (self.l1_max, self.l2_max, self.l3_max)
    }

    pub fn entries(&self) -> &[CgEntry] {
        &self.entries
    }

    /// Contributing (m1, m2, value) entries for one output component.
    pub fn slice(&self, l1: usize, l2: usize, l3: usize, m3: i64) -> &[CgEntry] {
        match self
            .index
            .get(&(l1 as u8, l2 as u8, l3 as u8, m3 as i8))
        {
            Some(&(start, end)) => &self.entries[start as usize..end as usize],
            None => &[],
        }
    }

    /// Single coefficient lookup; absent entries read as zero.
    pub fn value(&self, l1: usize, m1: i64, l2: usize, m2: i64, l3: usize, m3: i64) -> f64 {
        self.slice(l1, l2, l3, m3)
            .iter()
            .find(|e| i64::from(e.m1) == m1 && i64::from(e.m2) == m2)
            .map_or(0.0, |e| e.value)
    }

    /// Dense (m1, m2, m3) block re-materialized from the stored nonzeros.
    pub fn block_dense(&self, l1: usize, l2: usize, l3: usize) -> Vec<f64> {
        let (n1, n2, n3) = (2 * l1 + 1, 2 * l2 + 1, 2 * l3 + 1);
        let mut block = vec![0.0; n1 * n2 * n3];
        for m3 in -(l3 as i64)..=(l3 as i64) {
            for e in self.slice(l1, l2, l3, m3) {
                let i1 = (i64::from(e.m1) + l1 as i64) as usize;
                let i2 = (i64::from(e.m2) + l2 as i64) as usize;
                let i3 = (m3 + l3 as i64) as usize;
                block[(i1 * n2 + i2) * n3 + i3] = e.value;
            }
        }
        block
    }

    pub fn block_nnz(&self, l1: usize, l2: usize, l3: usize) -> usize {
        (-(l3 as i64)..=(l3 as i64))
            .map(|m3| self.slice(l1, l2, l3, m3).len())
            .sum()
    }

    /// Stored-nonzero fraction over the full six-index cube.
    pub fn density(&self) -> f64 {
        let d1 = (self.l1_max + 1) * (self.l1_max + 1);
        let d2 = (self.l2_max + 1) * (self.l2_max + 1);
        let d3 = (self.l3_max + 1) * (self.l3_max + 1);
        self.entries.len() as f64 / (d1 * d2 * d3) as f64
    }

    /// Diagnostic dump of all stored entries; not a stability-guaranteed
    /// format.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.entries).expect("entries serialize"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_block_is_identity() {
        let t = SparseCouplingTable::build(0, 0, 0);
        assert_eq!(t.entries().len(), 1);
        assert!((t.value(0, 0, 0, 0, 0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn vector_pair_to_scalar_is_scaled_dot_product() {
        let t = SparseCouplingTable::build(1, 1, 1);
        let c = 1.0 / 3.0f64.sqrt();
        for m1 in -1i64..=1 {
            for m2 in -1i64..=1 {
                let v = t.value(1, m1, 1, m2, 0, 0);
                if m1 == m2 {
                    assert!((v - c).abs() < 1e-13, "diag {m1}: {v}");
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn triangle_violating_blocks_are_empty() {
        let t = SparseCouplingTable::build(3, 3, 3);
        assert_eq!(t.block_nnz(0, 1, 3), 0);
        assert_eq!(t.block_nnz(3, 1, 1), 0);
        for e in t.entries() {
            let (l1, l2, l3) = (e.l1 as usize, e.l2 as usize, e.l3 as usize);
            assert!(l1.abs_diff(l2) <= l3 && l3 <= l1 + l2);
            assert!(e.value.is_finite() && e.value.abs() > NONZERO_EPS);
        }
    }

    #[test]
    fn selected_odd_parity_block_is_nonempty() {
        let t = SparseCouplingTable::build(3, 3, 3);
        assert!(t.block_nnz(2, 3, 2) > 0);
    }

    #[test]
    fn density_below_one_fifth_at_l3() {
        let t = SparseCouplingTable::build(3, 3, 3);
        let d = t.density();
        assert!(d < 0.20, "density {d}");
        assert!(d > 0.0);
    }

    /// Unitarity of the coupling: summing an (l1, l2) block over (m1, m2)
    /// against itself reproduces the identity across (l3, m3) pairs.
    #[test]
    fn coupling_is_orthonormal_across_outputs() {
        let t = SparseCouplingTable::build(3, 3, 6);
        for (l1, l2) in [(1usize, 1usize), (2, 3), (3, 3), (0, 2)] {
            for l3 in l1.abs_diff(l2)..=(l1 + l2) {
                for l3p in l1.abs_diff(l2)..=(l1 + l2) {
                    for m3 in -(l3 as i64)..=(l3 as i64) {
                        for m3p in -(l3p as i64)..=(l3p as i64) {
                            let mut acc = 0.0;
                            for m1 in -(l1 as i64)..=(l1 as i64) {
                                for m2 in -(l2 as i64)..=(l2 as i64) {
                                    acc += t.value(l1, m1, l2, m2, l3, m3)
                                        * t.value(l1, m1, l2, m2, l3p, m3p);
                                }
                            }
                            let target = if l3 == l3p && m3 == m3p { 1.0 } else { 0.0 };
                            assert!(
                                (acc - target).abs() < 1e-10,
                                "({l1},{l2}) {l3},{m3} vs {l3p},{m3p}: {acc}"
                            );
                        }
                    }
                }
            }
        }
    }

    /// Null-space oracle: the equivariance constraint
    /// X (D^1 (x) D^1) = D^0 X over random rotations pins the (1,1,0)
    /// coupling to a one-dimensional space, and our block spans it.
    #[test]
    fn vector_pair_block_matches_nullspace_oracle() {
        use crate::so3::{random_rotation, wigner_d};
        let mut rng = crate::rng::stream(19, "cg-nullspace");
        // Rows of the constraint system: for each rotation, 9 equations
        // x^T (D1 (x) D1 - I) = 0 over the 9 unknowns x[m1*3+m2].
        let mut rows: Vec<[f64; 9]> = Vec::new();
        for _ in 0..4 {
            let rot = random_rotation(&mut rng);
            let d = wigner_d(1, &rot).unwrap();
            let d1 = d.block(1);
            for col in 0..9usize {
                let (c1, c2) = (col / 3, col % 3);
                let mut row = [0.0; 9];
                for r in 0..9usize {
                    let (a, b) = (r / 3, r % 3);
                    row[r] = d1[a * 3 + c1] * d1[b * 3 + c2];
                }
                row[col] -= 1.0;
                rows.push(row);
            }
        }
        // Gaussian elimination for the rank.
        let mut rank = 0usize;
        for col in 0..9usize {
            let pivot = (rank..rows.len()).max_by(|&a, &b| {
                rows[a][col].abs().partial_cmp(&rows[b][col].abs()).unwrap()
            });
            let Some(p) = pivot else { break };
            if rows[p][col].abs() < 1e-9 {
                continue;
            }
            rows.swap(rank, p);
            for r in 0..rows.len() {
                if r != rank {
                    let f = rows[r][col] / rows[rank][col];
                    for c in 0..9 {
                        rows[r][c] -= f * rows[rank][c];
                    }
                }
            }
            rank += 1;
        }
        assert_eq!(rank, 8, "invariant subspace of two vectors should be 1-dim");

        // Our block solves the constraint and is unit-norm.
        let t = SparseCouplingTable::build(1, 1, 1);
        let block = t.block_dense(1, 1, 0);
        let norm: f64 = block.iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        let rot = random_rotation(&mut rng);
        let d = wigner_d(1, &rot).unwrap();
        let d1 = d.block(1);
        for c1 in 0..3usize {
            for c2 in 0..3usize {
                let mut acc = 0.0;
                for a in 0..3usize {
                    for b in 0..3usize {
                        acc += block[a * 3 + b] * d1[a * 3 + c1] * d1[b * 3 + c2];
                    }
                }
                assert!((acc - block[c1 * 3 + c2]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn slices_cover_all_entries_exactly_once() {
        let t = SparseCouplingTable::build(2, 2, 2);
        let mut covered = 0usize;
        for l1 in 0..=2 {
            for l2 in 0..=2 {
                for l3 in 0..=2 {
                    for m3 in -(l3 as i64)..=(l3 as i64) {
                        covered += t.slice(l1, l2, l3, m3).len();
                    }
                }
            }
        }
        assert_eq!(covered, t.entries().len());
    }
}
