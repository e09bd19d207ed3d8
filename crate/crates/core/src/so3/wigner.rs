//! Wigner rotation matrices acting on real spherical-harmonic components.

use crate::error::{Error, Result};
use crate::so3::cg::coupling_block_dense;

const ROTATION_TOL: f64 = 1e-9;

/// Per-degree orthogonal rotation blocks D^l, 0 <= l <= l_max.
#[derive(Debug, Clone)]
pub struct WignerD {
    blocks: Vec<Vec<f64>>,
}

impl WignerD {
    pub fn l_max(&self) -> usize {
        self.blocks.len() - 1
    }

    /// Row-major (2l+1) x (2l+1) block.
    pub fn block(&self, l: usize) -> &[f64] {
        &self.blocks[l]
    }

    /// D^l v for one degree-l component vector.
    pub fn rotate(&self, l: usize, v: &[f64]) -> Vec<f64> {
        let n = 2 * l + 1;
        debug_assert_eq!(v.len(), n);
        let d = &self.blocks[l];
        (0..n)
            .map(|row| (0..n).map(|col| d[row * n + col] * v[col]).sum())
            .collect()
    }

    /// Apply the block-diagonal rotation in place to a full layout row of
    /// length (l_max+1)^2.
    pub fn rotate_layout_row(&self, row: &mut [f64]) {
        debug_assert_eq!(row.len(), (self.l_max() + 1) * (self.l_max() + 1));
        for l in 0..=self.l_max() {
            let off = l * l;
            let rotated = self.rotate(l, &row[off..off + 2 * l + 1]);
            row[off..off + 2 * l + 1].copy_from_slice(&rotated);
        }
    }
}

fn det3(r: &[[f64; 3]; 3]) -> f64 {
    r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
        - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
}

/// Build D^l for all l <= l_max from a proper rotation matrix.
///
/// D^1 is the rotation itself re-expressed in the real l = 1 component order
/// (m = -1, 0, 1) <-> (y, z, x); higher blocks follow recursively by
/// projecting D^{l-1} (x) D^1 through the (l-1, 1, l) coupling block.
pub fn wigner_d(l_max: usize, rot: &[[f64; 3]; 3]) -> Result<WignerD> {
    // Orthogonality check: R R^T = I.
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| rot[i][k] * rot[j][k]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            if (dot - target).abs() > ROTATION_TOL {
                return Err(Error::validation(
                    "wigner_d requires an orthogonal rotation matrix",
                ));
            }
        }
    }
    let det = det3(rot);
    if (det - 1.0).abs() > ROTATION_TOL {
        return Err(Error::validation(format!(
            "wigner_d requires a proper rotation (det +1), got det {det:.6}"
        )));
    }

    let mut blocks = vec![vec![1.0]];
    if l_max == 0 {
        return Ok(WignerD { blocks });
    }
    const AXIS: [usize; 3] = [1, 2, 0]; // (m=-1,0,1) reads (y, z, x)
    let mut d1 = vec![0.0; 9];
    for a in 0..3 {
        for b in 0..3 {
            d1[a * 3 + b] = rot[AXIS[a]][AXIS[b]];
        }
    }
    blocks.push(d1);

    for l in 2..=l_max {
        let (n1, n3) = (2 * l - 1, 2 * l + 1);
        let c = coupling_block_dense(l - 1, 1, l); // [n1][3][n3]
        let prev = &blocks[l - 1];
        let d1 = &blocks[1];
        // t1[a'][b][m] = sum_a prev[a][a'] c[a][b][m]
        let mut t1 = vec![0.0; n1 * 3 * n3];
        for a in 0..n1 {
            for ap in 0..n1 {
                let p = prev[a * n1 + ap];
                if p == 0.0 {
                    continue;
                }
                for b in 0..3 {
                    for m in 0..n3 {
                        t1[(ap * 3 + b) * n3 + m] += p * c[(a * 3 + b) * n3 + m];
                    }
                }
            }
        }
        // t2[a'][b'][m] = sum_b d1[b][b'] t1[a'][b][m]
        let mut t2 = vec![0.0; n1 * 3 * n3];
        for b in 0..3 {
            for bp in 0..3 {
                let p = d1[b * 3 + bp];
                for ap in 0..n1 {
                    for m in 0..n3 {
                        t2[(ap * 3 + bp) * n3 + m] += p * t1[(ap * 3 + b) * n3 + m];
                    }
                }
            }
        }
        // d[m][m'] = sum_{a',b'} t2[a'][b'][m] c[a'][b'][m']
        let mut d = vec![0.0; n3 * n3];
        for ap in 0..n1 {
            for bp in 0..3 {
                for m in 0..n3 {
                    let t = t2[(ap * 3 + bp) * n3 + m];
                    if t == 0.0 {
                        continue;
                    }
                    for mp in 0..n3 {
                        d[m * n3 + mp] += t * c[(ap * 3 + bp) * n3 + mp];
                    }
                }
            }
        }
        blocks.push(d);
    }
    Ok(WignerD { blocks })
}

/// Draw a rotation uniformly over SO(3) via a rejection-sampled unit
/// quaternion.
pub fn random_rotation<R: rand::Rng>(rng: &mut R) -> [[f64; 3]; 3] {
    let q: [f64; 4] = {
        loop {
            let q: [f64; 4] = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-3 && n <= 1.0 {
                break [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
            }
        }
    };
    let [w, x, y, z] = q;
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}
