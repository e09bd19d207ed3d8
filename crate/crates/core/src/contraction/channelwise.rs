//! Channelwise tensor product: per-edge combination of sender features,
//! edge harmonics, and radial weights into atomic-basis features, plus the
//! edge-to-node pooling that follows it.

use super::plan::{enumerate_triples, ContractionPlan};
use super::{lm_dim, AtomicBasis, EdgeGeometry, NodeFeatures, Scalar};
use crate::error::{Error, Result};
use crate::so3::{IrrepsLayout, SparseCouplingTable};
use rayon::prelude::*;

fn validate_inputs<F: Scalar>(
    features: &NodeFeatures<F>,
    geometry: &EdgeGeometry<F>,
    edges: &[(u32, u32)],
    expected_triples: usize,
) -> Result<()> {
    if geometry.num_edges != edges.len() {
        return Err(Error::validation("edge list and geometry disagree on edge count"));
    }
    if geometry.channels != features.channels {
        return Err(Error::validation("channel counts disagree"));
    }
    if geometry.num_triples != expected_triples {
        return Err(Error::validation(format!(
            "geometry carries {} radial triples, plan expects {expected_triples}",
            geometry.num_triples
        )));
    }
    for &(j, i) in edges {
        if (j as usize) >= features.num_nodes || (i as usize) >= features.num_nodes {
            return Err(Error::validation("edge endpoint out of range"));
        }
    }
    Ok(())
}

/// Dense reference for the per-edge product.
///
/// For every edge, channel, and radial triple, visits all
/// (m1, m2, m3) combinations of the coupling block, zeros included, and
/// accumulates coefficient x radial x harmonic x feature into the output
/// component.
pub fn channelwise_tp_dense<F: Scalar>(
    features: &NodeFeatures<F>,
    geometry: &EdgeGeometry<F>,
    edges: &[(u32, u32)],
    cg: &SparseCouplingTable,
    l_out_max: usize,
) -> Result<AtomicBasis<F>> {
    let triples = enumerate_triples(geometry.l_sh_max, features.l_max, l_out_max);
    validate_inputs(features, geometry, edges, triples.len())?;
    let (c1, c2, c3) = cg.maxima();
    if c1 < geometry.l_sh_max || c2 < features.l_max || c3 < l_out_max {
        return Err(Error::validation(
            "coupling table does not cover the requested degree maxima",
        ));
    }

    // Materialize the dense blocks once; the edge loops still walk every
    // entry of them.
    let blocks: Vec<Vec<F>> = triples
        .iter()
        .map(|&(l1, l2, l3)| {
            cg.block_dense(l1 as usize, l2 as usize, l3 as usize)
                .into_iter()
                .map(F::cast)
                .collect()
        })
        .collect();

    let channels = features.channels;
    let out_dim = lm_dim(l_out_max);
    let mut out = AtomicBasis::<F>::zeros(edges.len(), channels, l_out_max);
    out.values
        .par_chunks_mut(channels * out_dim)
        .enumerate()
        .for_each(|(e, out_edge)| {
            let (j, _i) = edges[e];
            let sh = geometry.sh_row(e);
            for k in 0..channels {
                let radial = geometry.radial_row(e, k);
                let feat = features.row(j as usize, k);
                let acc = &mut out_edge[k * out_dim..(k + 1) * out_dim];
                for (t, &(l1, l2, l3)) in triples.iter().enumerate() {
                    let (n1, n2, n3) = (
                        2 * l1 as usize + 1,
                        2 * l2 as usize + 1,
                        2 * l3 as usize + 1,
                    );
                    let (o1, o2, o3) = (
                        IrrepsLayout::offset(l1 as usize),
                        IrrepsLayout::offset(l2 as usize),
                        IrrepsLayout::offset(l3 as usize),
                    );
                    let r = radial[t];
                    let block = &blocks[t];
                    for m1 in 0..n1 {
                        let ry = r * sh[o1 + m1];
                        for m2 in 0..n2 {
                            let ryh = ry * feat[o2 + m2];
                            let base = (m1 * n2 + m2) * n3;
                            for m3 in 0..n3 {
                                acc[o3 + m3] += block[base + m3] * ryh;
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// Fused sparse-path variant: identical contract to the dense reference,
/// but walks only the stored nonzero coefficients from the plan.
pub fn channelwise_tp_fused<F: Scalar>(
    features: &NodeFeatures<F>,
    geometry: &EdgeGeometry<F>,
    edges: &[(u32, u32)],
    plan: &ContractionPlan<F>,
) -> Result<AtomicBasis<F>> {
    let cfg = &plan.config;
    if cfg.l_sh_max != geometry.l_sh_max || cfg.l_feat_max != features.l_max {
        return Err(Error::validation("plan degree maxima disagree with inputs"));
    }
    validate_inputs(features, geometry, edges, plan.num_triples())?;

    let channels = features.channels;
    let out_dim = lm_dim(cfg.l_edge_out_max);
    let mut out = AtomicBasis::<F>::zeros(edges.len(), channels, cfg.l_edge_out_max);
    out.values
        .par_chunks_mut(channels * out_dim)
        .enumerate()
        .for_each(|(e, out_edge)| {
            let (j, _i) = edges[e];
            let sh = geometry.sh_row(e);
            for k in 0..channels {
                let radial = geometry.radial_row(e, k);
                let feat = features.row(j as usize, k);
                let acc = &mut out_edge[k * out_dim..(k + 1) * out_dim];
                for tb in &plan.triples {
                    let r = radial[tb.triple_index];
                    for &(i1, i2, i3, c) in &tb.entries {
                        acc[i3 as usize] += c * r * sh[i1 as usize] * feat[i2 as usize];
                    }
                }
            }
        });
    Ok(out)
}

/// Sum per-edge atomic-basis rows onto their receiving node, accumulating
/// in ascending edge-index order.
pub fn pool_edges_to_nodes<F: Scalar>(
    per_edge: &AtomicBasis<F>,
    edges: &[(u32, u32)],
    num_nodes: usize,
) -> Result<AtomicBasis<F>> {
    if per_edge.num_targets != edges.len() {
        return Err(Error::validation("per-edge rows and edge list disagree"));
    }
    let mut out = AtomicBasis::<F>::zeros(num_nodes, per_edge.channels, per_edge.l_max);
    let row_len = per_edge.channels * per_edge.dim();
    for (e, &(_j, i)) in edges.iter().enumerate() {
        let i = i as usize;
        if i >= num_nodes {
            return Err(Error::validation(format!(
                "edge {e} targets node {i} outside 0..{num_nodes}"
            )));
        }
        let src = &per_edge.values[e * row_len..(e + 1) * row_len];
        let dst = &mut out.values[i * row_len..(i + 1) * row_len];
        for (d, s) in dst.iter_mut().zip(src) {
            *d += *s;
        }
    }
    Ok(out)
}
