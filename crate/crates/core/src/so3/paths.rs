//! Generalized coupling paths: trees of pairwise couplings that contract
//! correlation-order-nu products of degree-l features into one output degree.
//!
//! Only left-nested trees are enumerated: couple (l1, l2) -> T2, then
//! (T2, l3) -> T3, and so on. Left nesting spans the same space as any
//! other tree shape. Intermediate degrees are bounded only by the triangle rule; the
//! final degree is capped by the requested output maximum.

use crate::so3::cg::{coupling_block_dense, NONZERO_EPS};
use std::collections::{BTreeMap, HashMap};

/// One nonzero generalized coupling coefficient: the coefficient that
/// multiplies the product of components (m_1 .. m_nu) in output component
/// m_out.
#[derive(Debug, Clone, PartialEq)]
pub struct PathNonzero {
    pub ms: Vec<i8>,
    pub m_out: i8,
    pub value: f64,
}

/// A fully resolved coupling path.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingPath {
    /// Correlation order: number of coupled feature factors.
    pub nu: usize,
    /// Degrees of the nu factors.
    pub ls: Vec<u8>,
    /// Coupled degree after each pairwise step; empty for nu = 1, and the
    /// last entry always equals `output_l`.
    pub intermediates: Vec<u8>,
    /// Output degree L.
    pub output_l: u8,
    /// Index of this path among the paths sharing (nu, output_l), in
    /// lexicographic (ls, intermediates) order.
    pub eta: u32,
    /// Flattened nonzero coefficients, chained from the pairwise tables.
    pub nonzeros: Vec<PathNonzero>,
}

/// Cache of dense pairwise blocks keyed by (l1, l2, l3).
struct BlockCache {
    blocks: HashMap<(usize, usize, usize), Vec<f64>>,
}

impl BlockCache {
    fn new() -> Self {
        BlockCache {
            blocks: HashMap::new(),
        }
    }

    fn get(&mut self, l1: usize, l2: usize, l3: usize) -> &[f64] {
        self.blocks
            .entry((l1, l2, l3))
            .or_insert_with(|| coupling_block_dense(l1, l2, l3))
    }
}

/// Chain prev-stage nonzeros through the (t_prev, l_next, t_next) block.
fn chain(
    prev: &[PathNonzero],
    t_prev: usize,
    l_next: usize,
    t_next: usize,
    cache: &mut BlockCache,
) -> Vec<PathNonzero> {
    let (n2, n3) = (2 * l_next + 1, 2 * t_next + 1);
    let block = cache.get(t_prev, l_next, t_next).to_vec();
    let mut acc: BTreeMap<(Vec<i8>, i8), f64> = BTreeMap::new();
    for nz in prev {
        let i1 = (i64::from(nz.m_out) + t_prev as i64) as usize;
        for m in 0..n2 {
            for mu in 0..n3 {
                let c = block[(i1 * n2 + m) * n3 + mu];
                if c.abs() <= NONZERO_EPS {
                    continue;
                }
                let mut ms = nz.ms.clone();
                ms.push((m as i64 - l_next as i64) as i8);
                let m_out = (mu as i64 - t_next as i64) as i8;
                *acc.entry((ms, m_out)).or_insert(0.0) += nz.value * c;
            }
        }
    }
    acc.into_iter()
        .filter(|(_, v)| v.abs() > NONZERO_EPS)
        .map(|((ms, m_out), value)| PathNonzero { ms, m_out, value })
        .collect()
}

/// Enumerate all coupling paths with nu in 1..=nu_max, factor degrees up to
/// l_max, and output degree up to l_out_max, in (nu, ls, intermediates)
/// lexicographic order.
pub fn generalized_cg_paths(nu_max: usize, l_max: usize, l_out_max: usize) -> Vec<CouplingPath> {
    assert!(nu_max >= 1, "correlation order must be at least 1");
    let mut cache = BlockCache::new();
    let mut paths = Vec::new();
    let mut eta_counter: BTreeMap<(usize, u8), u32> = BTreeMap::new();

    for nu in 1..=nu_max {
        // Depth-first over (ls, intermediates), carrying the chained
        // nonzeros so shared prefixes are not recomputed.
        struct Frame {
            ls: Vec<u8>,
            intermediates: Vec<u8>,
            nonzeros: Vec<PathNonzero>,
        }
        fn descend(
            frame: Frame,
            nu: usize,
            l_max: usize,
            l_out_max: usize,
            cache: &mut BlockCache,
            out: &mut Vec<(Vec<u8>, Vec<u8>, Vec<PathNonzero>)>,
        ) {
            let depth = frame.ls.len();
            if depth == nu {
                let final_l = if nu == 1 {
                    frame.ls[0] as usize
                } else {
                    *frame.intermediates.last().unwrap() as usize
                };
                if final_l <= l_out_max {
                    out.push((frame.ls, frame.intermediates, frame.nonzeros));
                }
                return;
            }
            for l_next in 0..=l_max {
                if depth == 0 {
                    let nonzeros = (0..(2 * l_next + 1))
                        .map(|m| PathNonzero {
                            ms: vec![(m as i64 - l_next as i64) as i8],
                            m_out: (m as i64 - l_next as i64) as i8,
                            value: 1.0,
                        })
                        .collect();
                    descend(
                        Frame {
                            ls: vec![l_next as u8],
                            intermediates: vec![],
                            nonzeros,
                        },
                        nu,
                        l_max,
                        l_out_max,
                        cache,
                        out,
                    );
                } else {
                    let t_prev = if depth == 1 {
                        frame.ls[0] as usize
                    } else {
                        *frame.intermediates.last().unwrap() as usize
                    };
                    let lo = t_prev.abs_diff(l_next);
                    let hi = t_prev + l_next;
                    for t_next in lo..=hi {
                        // Every intermediate except the last may exceed the
                        // output cap; the last one is filtered at depth nu.
                        if depth + 1 == nu && t_next > l_out_max {
                            continue;
                        }
                        let nonzeros =
                            chain(&frame.nonzeros, t_prev, l_next, t_next, cache);
                        if nonzeros.is_empty() {
                            continue;
                        }
                        let mut ls = frame.ls.clone();
                        ls.push(l_next as u8);
                        let mut intermediates = frame.intermediates.clone();
                        intermediates.push(t_next as u8);
                        descend(
                            Frame {
                                ls,
                                intermediates,
                                nonzeros,
                            },
                            nu,
                            l_max,
                            l_out_max,
                            cache,
                            out,
                        );
                    }
                }
            }
        }

        let mut collected = Vec::new();
        descend(
            Frame {
                ls: vec![],
                intermediates: vec![],
                nonzeros: vec![],
            },
            nu,
            l_max,
            l_out_max,
            &mut cache,
            &mut collected,
        );
        for (ls, intermediates, nonzeros) in collected {
            let output_l = if nu == 1 {
                ls[0]
            } else {
                *intermediates.last().unwrap()
            };
            let eta = eta_counter.entry((nu, output_l)).or_insert(0);
            paths.push(CouplingPath {
                nu,
                ls,
                intermediates,
                output_l,
                eta: *eta,
                nonzeros,
            });
            *eta += 1;
        }
    }
    paths
}
