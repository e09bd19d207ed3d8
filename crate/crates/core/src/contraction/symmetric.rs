//! Symmetric tensor contraction: contract nu copies of the pooled atomic
//! basis into higher body-order messages, with reverse-mode derivatives.

use super::plan::ContractionPlan;
use super::{lm_dim, AtomicBasis, Messages, ProductWeights, Scalar};
use crate::error::{Error, Result};
use crate::so3::{CouplingPath, IrrepsLayout};
use rayon::prelude::*;

fn validate_inputs<F: Scalar>(
    basis: &AtomicBasis<F>,
    weights: &ProductWeights<F>,
    species: &[u32],
    num_paths: usize,
) -> Result<()> {
    if species.len() != basis.num_targets {
        return Err(Error::validation("species list and basis rows disagree"));
    }
    if weights.channels != basis.channels {
        return Err(Error::validation("weight channels disagree with basis"));
    }
    if weights.num_paths != num_paths {
        return Err(Error::validation(format!(
            "weights carry {} path columns, plan has {num_paths}",
            weights.num_paths
        )));
    }
    for (i, &z) in species.iter().enumerate() {
        if (z as usize) >= weights.num_species {
            return Err(Error::validation(format!(
                "node {i} has species {z} but weights cover only {}",
                weights.num_species
            )));
        }
    }
    Ok(())
}

fn selected<'a>(
    paths: &'a [CouplingPath],
    nu_max: usize,
    include_lower_orders: bool,
) -> impl Iterator<Item = (usize, &'a CouplingPath)> {
    paths
        .iter()
        .enumerate()
        .filter(move |(_, p)| p.nu <= nu_max && (include_lower_orders || p.nu == nu_max))
}

/// Dense reference: for every node, channel, and executed path, walk the
/// full (m_1 .. m_nu, M) coefficient box of that path (materialized dense,
/// zeros included), recomputing the feature product per combination.
pub fn symmetric_contraction_dense<F: Scalar>(
    basis: &AtomicBasis<F>,
    weights: &ProductWeights<F>,
    species: &[u32],
    paths: &[CouplingPath],
    nu_max: usize,
    include_lower_orders: bool,
    msg_l_max: usize,
) -> Result<Messages<F>> {
    validate_inputs(basis, weights, species, paths.len())?;
    struct DensePath<F> {
        weight_index: usize,
        factor_offsets: Vec<usize>,
        factor_dims: Vec<usize>,
        out_offset: usize,
        out_dim: usize,
        coeffs: Vec<F>,
    }
    let mut dense_paths: Vec<DensePath<F>> = Vec::new();
    for (idx, path) in selected(paths, nu_max, include_lower_orders) {
        if (path.output_l as usize) > msg_l_max {
            return Err(Error::validation(
                "path output degree exceeds the message maximum",
            ));
        }
        if path.ls.iter().any(|&l| (l as usize) > basis.l_max) {
            return Err(Error::validation(
                "path factor degree exceeds the basis maximum",
            ));
        }
        let factor_dims: Vec<usize> = path.ls.iter().map(|&l| 2 * l as usize + 1).collect();
        let out_dim = 2 * path.output_l as usize + 1;
        let box_len: usize = factor_dims.iter().product::<usize>() * out_dim;
        let mut coeffs = vec![F::zero(); box_len];
        for nz in &path.nonzeros {
            let mut flat = 0usize;
            for (d, (&m, &l)) in nz.ms.iter().zip(&path.ls).enumerate() {
                flat = flat * factor_dims[d] + (i64::from(m) + i64::from(l)) as usize;
            }
            let out = (i64::from(nz.m_out) + i64::from(path.output_l)) as usize;
            coeffs[flat * out_dim + out] = F::cast(nz.value);
        }
        dense_paths.push(DensePath {
            weight_index: idx,
            factor_offsets: path
                .ls
                .iter()
                .map(|&l| IrrepsLayout::offset(l as usize))
                .collect(),
            factor_dims,
            out_offset: IrrepsLayout::offset(path.output_l as usize),
            out_dim,
            coeffs,
        });
    }

    let channels = basis.channels;
    let out_dim_total = lm_dim(msg_l_max);
    let mut out = Messages::<F>::zeros(basis.num_targets, channels, msg_l_max);
    out.values
        .par_chunks_mut(channels * out_dim_total)
        .enumerate()
        .for_each(|(i, out_node)| {
            let z = species[i] as usize;
            for k in 0..channels {
                let a = basis.row(i, k);
                let acc = &mut out_node[k * out_dim_total..(k + 1) * out_dim_total];
                for dp in &dense_paths {
                    let w = weights.get(z, k, dp.weight_index);
                    let nu = dp.factor_dims.len();
                    // Odometer over (m_1 .. m_nu).
                    let mut digits = vec![0usize; nu];
                    let combos: usize = dp.factor_dims.iter().product();
                    let mut flat = 0usize;
                    for _ in 0..combos {
                        let mut prod = F::one();
                        for (d, &m) in digits.iter().enumerate() {
                            prod = prod * a[dp.factor_offsets[d] + m];
                        }
                        let wp = w * prod;
                        let base = flat * dp.out_dim;
                        for m_out in 0..dp.out_dim {
                            acc[dp.out_offset + m_out] += dp.coeffs[base + m_out] * wp;
                        }
                        // Advance odometer.
                        flat += 1;
                        for d in (0..nu).rev() {
                            digits[d] += 1;
                            if digits[d] < dp.factor_dims[d] {
                                break;
                            }
                            digits[d] = 0;
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// Fused sparse-path variant: one pass over the flattened nonzeros per
/// node, accumulating into a local output row.
pub fn symmetric_contraction_fused<F: Scalar>(
    basis: &AtomicBasis<F>,
    weights: &ProductWeights<F>,
    species: &[u32],
    plan: &ContractionPlan<F>,
) -> Result<Messages<F>> {
    validate_inputs(basis, weights, species, plan.num_paths())?;
    if plan.config.l_edge_out_max != basis.l_max {
        return Err(Error::validation("plan basis degree disagrees with input"));
    }
    let channels = basis.channels;
    let msg_l_max = plan.config.msg_l_max;
    let out_dim_total = lm_dim(msg_l_max);
    let mut out = Messages::<F>::zeros(basis.num_targets, channels, msg_l_max);
    out.values
        .par_chunks_mut(channels * out_dim_total)
        .enumerate()
        .for_each(|(i, out_node)| {
            let z = species[i] as usize;
            for k in 0..channels {
                let a = basis.row(i, k);
                let acc = &mut out_node[k * out_dim_total..(k + 1) * out_dim_total];
                for fp in &plan.fused_paths {
                    let w = weights.get(z, k, fp.weight_index);
                    if w == F::zero() {
                        continue;
                    }
                    let nu = fp.nu;
                    for (c, (&m_out, &coeff)) in
                        fp.outputs.iter().zip(&fp.coeffs).enumerate()
                    {
                        let mut prod = coeff;
                        for &f in &fp.factors[c * nu..(c + 1) * nu] {
                            prod = prod * a[f as usize];
                        }
                        acc[m_out as usize] += w * prod;
                    }
                }
            }
        });
    Ok(out)
}

/// Reverse-mode derivatives of the symmetric contraction.
///
/// Returns (d loss/d basis, d loss/d weights) for loss = <cotangent, m>.
/// Repeated (l, m) factors get the multiplicity-summed product rule: the
/// per-factor contributions are accumulated, one term per factor slot.
pub fn symmetric_contraction_vjp<F: Scalar>(
    basis: &AtomicBasis<F>,
    weights: &ProductWeights<F>,
    species: &[u32],
    paths: &[CouplingPath],
    nu_max: usize,
    include_lower_orders: bool,
    cotangent: &Messages<F>,
) -> Result<(AtomicBasis<F>, ProductWeights<F>)> {
    validate_inputs(basis, weights, species, paths.len())?;
    if cotangent.num_targets != basis.num_targets || cotangent.channels != basis.channels {
        return Err(Error::validation("cotangent shape disagrees with forward"));
    }
    let msg_l_max = cotangent.l_max;
    let channels = basis.channels;
    let mut grad_basis = AtomicBasis::<F>::zeros(basis.num_targets, channels, basis.l_max);
    let mut grad_weights =
        ProductWeights::<F>::zeros(weights.num_species, channels, weights.num_paths);

    let chosen: Vec<(usize, &CouplingPath)> =
        selected(paths, nu_max, include_lower_orders).collect();
    for (_, path) in &chosen {
        if (path.output_l as usize) > msg_l_max
            || path.ls.iter().any(|&l| (l as usize) > basis.l_max)
        {
            return Err(Error::validation("path degrees exceed forward shapes"));
        }
    }

    for i in 0..basis.num_targets {
        let z = species[i] as usize;
        for k in 0..channels {
            let a = basis.row(i, k).to_vec();
            let ct = cotangent.row(i, k);
            let ga = grad_basis.row_mut(i, k);
            for &(idx, path) in &chosen {
                let w = weights.get(z, k, idx);
                let out_offset = IrrepsLayout::offset(path.output_l as usize);
                let mut gw = F::zero();
                for nz in &path.nonzeros {
                    let cbar =
                        ct[out_offset + (i64::from(nz.m_out) + i64::from(path.output_l)) as usize];
                    if cbar == F::zero() {
                        continue;
                    }
                    let coeff = F::cast(nz.value);
                    let factor_idx: Vec<usize> = path
                        .ls
                        .iter()
                        .zip(&nz.ms)
                        .map(|(&l, &m)| IrrepsLayout::index(l as usize, i64::from(m)))
                        .collect();
                    let mut prod = F::one();
                    for &fi in &factor_idx {
                        prod = prod * a[fi];
                    }
                    gw += cbar * coeff * prod;
                    // Product rule, one term per factor slot.
                    for (xi, &fi) in factor_idx.iter().enumerate() {
                        let mut partial = F::one();
                        for (xj, &fj) in factor_idx.iter().enumerate() {
                            if xi != xj {
                                partial = partial * a[fj];
                            }
                        }
                        ga[fi] += cbar * w * coeff * partial;
                    }
                }
                *grad_weights.get_mut(z, k, idx) += gw;
            }
        }
    }
    Ok((grad_basis, grad_weights))
}
