//! Real spherical harmonics, orthonormal on the unit sphere.

use crate::error::{Error, Result};
use crate::so3::IrrepsLayout;
use std::f64::consts::PI;

const UNIT_NORM_TOL: f64 = 1e-9;

fn double_factorial(n: i64) -> f64 {
    let mut r = 1.0;
    let mut k = n;
    while k > 1 {
        r *= k as f64;
        k -= 2;
    }
    r
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Evaluate the real spherical harmonics of all degrees l <= l_max at a unit
/// vector, in layout order (index l^2 + l + m).
///
/// Conventions: orthonormal normalization, components m = -l..l with
/// Y_{1,-1}, Y_{1,0}, Y_{1,1} proportional to (y, z, x). The caller must
/// pass a unit vector; anything off by more than 1e-9 is rejected.
pub fn real_sph_harm(l_max: usize, v: [f64; 3]) -> Result<Vec<f64>> {
    let [x, y, z] = v;
    let norm = (x * x + y * y + z * z).sqrt();
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::validation(format!(
            "real_sph_harm expects a unit vector, got norm {norm:.12}"
        )));
    }

    let n = l_max + 1;
    // cs[m] = Re[(x+iy)^m], sn[m] = Im[(x+iy)^m]; together with the scaled
    // Legendre functions below these give sin(theta)^m cos/sin(m phi)
    // without ever extracting the azimuth angle.
    let mut cs = vec![0.0; n];
    let mut sn = vec![0.0; n];
    cs[0] = 1.0;
    for m in 1..n {
        cs[m] = x * cs[m - 1] - y * sn[m - 1];
        sn[m] = x * sn[m - 1] + y * cs[m - 1];
    }

    // q[l][m] = P_l^m(z) / sin(theta)^m, Condon-Shortley free:
    //   q_m^m = (2m-1)!!,    q_{m+1}^m = z (2m+1) q_m^m,
    //   q_l^m = ((2l-1) z q_{l-1}^m - (l+m-1) q_{l-2}^m) / (l-m).
    let mut q = vec![vec![0.0; n]; n];
    for m in 0..n {
        q[m][m] = if m == 0 {
            1.0
        } else {
            double_factorial(2 * m as i64 - 1)
        };
        if m + 1 < n {
            q[m + 1][m] = z * (2.0 * m as f64 + 1.0) * q[m][m];
        }
        for l in (m + 2)..n {
            q[l][m] = ((2.0 * l as f64 - 1.0) * z * q[l - 1][m]
                - (l + m - 1) as f64 * q[l - 2][m])
                / (l - m) as f64;
        }
    }

    let mut out = vec![0.0; n * n];
    for l in 0..n {
        let c0 = ((2.0 * l as f64 + 1.0) / (4.0 * PI)).sqrt();
        out[IrrepsLayout::index(l, 0)] = c0 * q[l][0];
        for m in 1..=l {
            let c = c0
                * (2.0 * factorial(l - m) / factorial(l + m)).sqrt();
            out[IrrepsLayout::index(l, m as i64)] = c * q[l][m] * cs[m];
            out[IrrepsLayout::index(l, -(m as i64))] = c * q[l][m] * sn[m];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: [f64; 3]) -> [f64; 3] {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    }

    #[test]
    fn degree_zero_is_constant() {
        for v in [[0.0, 0.0, 1.0], unit([0.3, -0.8, 0.2]), unit([1.0, 1.0, 1.0])] {
            let y = real_sph_harm(0, v).unwrap();
            assert!((y[0] - 0.28209479177387814).abs() < 1e-15);
        }
    }

    #[test]
    fn degree_one_along_z() {
        let y = real_sph_harm(1, [0.0, 0.0, 1.0]).unwrap();
        let c = (3.0 / (4.0 * PI)).sqrt();
        assert!((y[1]).abs() < 1e-15);
        assert!((y[2] - c).abs() < 1e-12);
        assert!((y[3]).abs() < 1e-15);
    }

    #[test]
    fn degree_one_and_two_match_closed_forms() {
        let v = unit([0.3, -0.55, 0.71]);
        let [x, y, z] = v;
        let out = real_sph_harm(2, v).unwrap();
        let c1 = (3.0 / (4.0 * PI)).sqrt();
        assert!((out[1] - c1 * y).abs() < 1e-13);
        assert!((out[2] - c1 * z).abs() < 1e-13);
        assert!((out[3] - c1 * x).abs() < 1e-13);
        // Standard real l=2 table for unit vectors.
        let c2 = 0.5 * (15.0 / PI).sqrt();
        let expected = [
            c2 * x * y,
            c2 * y * z,
            0.25 * (5.0 / PI).sqrt() * (3.0 * z * z - 1.0),
            c2 * x * z,
            0.25 * (15.0 / PI).sqrt() * (x * x - y * y),
        ];
        for (got, want) in out[4..9].iter().zip(expected) {
            assert!((got - want).abs() < 1e-13, "{got} vs {want}");
        }
    }

    #[test]
    fn non_unit_vector_is_rejected() {
        assert!(real_sph_harm(2, [0.0, 0.0, 1.1]).is_err());
        assert!(real_sph_harm(2, [0.0, 0.0, 0.0]).is_err());
    }

    /// Quadrature oracle: on a Fibonacci sphere grid the Gram matrix of the
    /// harmonics up to l = 4 approaches the identity.
    #[test]
    fn gram_matrix_is_identity_under_sphere_quadrature() {
        let l_max = 4usize;
        let dim = (l_max + 1) * (l_max + 1);
        let npts = 40_000usize;
        let mut gram = vec![0.0; dim * dim];
        let golden = PI * (3.0 - 5.0f64.sqrt());
        for k in 0..npts {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / npts as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            let v = [r * phi.cos(), r * phi.sin(), z];
            let ys = real_sph_harm(l_max, v).unwrap();
            for i in 0..dim {
                for j in 0..dim {
                    gram[i * dim + j] += ys[i] * ys[j];
                }
            }
        }
        let w = 4.0 * PI / npts as f64;
        let mut max_err: f64 = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let target = if i == j { 1.0 } else { 0.0 };
                max_err = max_err.max((gram[i * dim + j] * w - target).abs());
            }
        }
        assert!(max_err < 1e-3, "gram deviation {max_err}");
    }
}
