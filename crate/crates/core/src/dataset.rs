//! Molecular-graph metadata: manifest ingestion/synthesis, summary
//! statistics, and small synthetic geometric graphs for the kernels.
//!
//! A manifest is UTF-8 with one JSON record per line and exactly the keys
//! `{"id","vertices","edges","source"}`; unknown keys are rejected. That
//! keeps million-record files streamable.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// Per-graph metadata record; the unit being packed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphMeta {
    pub id: u64,
    pub vertices: u32,
    pub edges: u64,
    pub source: String,
}

impl GraphMeta {
    pub fn validate(&self) -> Result<()> {
        if self.vertices == 0 {
            return Err(Error::validation(format!(
                "graph {}: vertices must be >= 1",
                self.id
            )));
        }
        let v = u64::from(self.vertices);
        let max_edges = v * (v - 1);
        if self.edges > max_edges {
            return Err(Error::validation(format!(
                "graph {}: {} edges exceeds directed-simple-graph bound {}",
                self.id, self.edges, max_edges
            )));
        }
        Ok(())
    }
}

/// One row of a synthetic dataset mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceProfile {
    pub name: String,
    /// Fraction of the total record count, in [0, 1]; a profile set must sum
    /// to 1 within 1e-9.
    pub proportion: f64,
    /// Inclusive vertex-count range.
    pub vertex_range: (u32, u32),
    /// Directed edges per vertex used to derive the advisory edge count.
    pub mean_degree: f64,
}

pub fn validate_profiles(profiles: &[SourceProfile]) -> Result<()> {
    if profiles.is_empty() {
        return Err(Error::validation("profile set must be non-empty"));
    }
    let mut total = 0.0;
    for p in profiles {
        if !(0.0..=1.0).contains(&p.proportion) {
            return Err(Error::validation(format!(
                "profile {}: proportion {} outside [0,1]",
                p.name, p.proportion
            )));
        }
        if p.vertex_range.0 < 1 || p.vertex_range.0 > p.vertex_range.1 {
            return Err(Error::validation(format!(
                "profile {}: bad vertex range {:?}",
                p.name, p.vertex_range
            )));
        }
        if !p.mean_degree.is_finite() || p.mean_degree <= 0.0 {
            return Err(Error::validation(format!(
                "profile {}: mean_degree must be positive",
                p.name
            )));
        }
        total += p.proportion;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!(
            "profile proportions sum to {total}, expected 1"
        )));
    }
    Ok(())
}

/// Eight-source mixture mirroring a combined multi-dataset training corpus:
/// proportions are exact record-count fractions, vertex ranges per source.
/// Mean degrees are plausible cost-model inputs for a ~4.5 length-unit
/// neighbor cutoff; only the simulator consumes them.
pub fn table2_profiles() -> Vec<SourceProfile> {
    const TOTAL: f64 = 2_650_823.0;
    let row = |name: &str, count: f64, lo: u32, hi: u32, deg: f64| SourceProfile {
        name: name.to_string(),
        proportion: count / TOTAL,
        vertex_range: (lo, hi),
        mean_degree: deg,
    };
    vec![
        row("al_hcl_aq", 884.0, 281, 281, 30.0),
        row("cuni", 74_335.0, 492, 500, 45.0),
        row("hea", 25_628.0, 36, 48, 40.0),
        row("liquid_water", 190_267.0, 768, 768, 35.0),
        row("MPtrj", 1_580_312.0, 1, 444, 30.0),
        row("tmd", 219_627.0, 16, 96, 20.0),
        row("water_clusters", 460_000.0, 9, 75, 25.0),
        row("zeolite", 99_770.0, 203, 408, 28.0),
    ]
}

/// Largest-remainder apportionment: floor every share, then hand the
/// leftover units to the largest fractional remainders (ties broken by
/// input order). Always sums to `count` exactly.
pub fn apportion(proportions: &[f64], count: u64) -> Vec<u64> {
    let mut counts: Vec<u64> = Vec::with_capacity(proportions.len());
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(proportions.len());
    let mut assigned = 0u64;
    for (i, p) in proportions.iter().enumerate() {
        let share = p * count as f64;
        let floor = share.floor() as u64;
        counts.push(floor);
        assigned += floor;
        remainders.push((share - floor as f64, i));
    }
    let mut leftover = count - assigned;
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for (_, i) in remainders {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }
    counts
}

/// Generate `count` records from a source mixture. Pure function of its
/// arguments: records are emitted per profile in profile order with
/// sequential ids, vertex counts drawn uniformly from each source's range,
/// and edges = round(mean_degree * vertices) clamped to the simple-graph
/// bound.
pub fn synthesize_manifest(
    profiles: &[SourceProfile],
    count: u64,
    seed: u64,
) -> Result<Vec<GraphMeta>> {
    validate_profiles(profiles)?;
    if count == 0 {
        return Ok(Vec::new());
    }
    let proportions: Vec<f64> = profiles.iter().map(|p| p.proportion).collect();
    let per_source = apportion(&proportions, count);
    let mut rng = crate::rng::stream(seed, "synthesize_manifest");
    let mut out = Vec::with_capacity(count as usize);
    let mut id = 0u64;
    for (profile, n) in profiles.iter().zip(per_source) {
        let (lo, hi) = profile.vertex_range;
        for _ in 0..n {
            let vertices = rng.gen_range(lo..=hi);
            let v = u64::from(vertices);
            let edges = ((profile.mean_degree * vertices as f64).round() as u64)
                .min(v * (v - 1));
            out.push(GraphMeta {
                id,
                vertices,
                edges,
                source: profile.name.clone(),
            });
            id += 1;
        }
    }
    Ok(out)
}

/// Stream a line-delimited manifest from disk, validating as it goes.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<GraphMeta>> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let record: GraphMeta = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        record.validate().map_err(|e| match e {
            Error::Validation(msg) => Error::Parse {
                line: lineno + 1,
                message: msg,
            },
            other => other,
        })?;
        if !seen.insert(record.id) {
            return Err(Error::validation(format!(
                "duplicate graph id {} at line {}",
                record.id,
                lineno + 1
            )));
        }
        out.push(record);
    }
    Ok(out)
}

/// Write records one JSON object per line in canonical (compact, field-order
/// id/vertices/edges/source) form.
pub fn save_manifest(graphs: &[GraphMeta], path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for g in graphs {
        serde_json::to_writer(&mut w, g).map_err(|e| Error::validation(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Small geometric graph: positions in a box, cutoff-ball edges.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricGraph {
    pub positions: Vec<[f64; 3]>,
    pub species: Vec<u32>,
    /// Directed pairs (sender j, receiver i), j != i, present in both
    /// directions, sorted lexicographically by (i, j).
    pub edge_list: Vec<(u32, u32)>,
    pub cutoff: f64,
}

impl GeometricGraph {
    /// Build the cutoff graph for explicit positions: (j, i) is an edge
    /// exactly when 0 < |r_j - r_i| <= cutoff.
    pub fn from_positions(
        positions: Vec<[f64; 3]>,
        species: Vec<u32>,
        cutoff: f64,
    ) -> Result<Self> {
        if cutoff <= 0.0 {
            return Err(Error::validation("cutoff must be positive"));
        }
        if positions.len() != species.len() {
            return Err(Error::validation("positions/species length mismatch"));
        }
        let n = positions.len();
        let cut2 = cutoff * cutoff;
        let mut edge_list = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let d = [
                    positions[j][0] - positions[i][0],
                    positions[j][1] - positions[i][1],
                    positions[j][2] - positions[i][2],
                ];
                let d2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                if d2 > 0.0 && d2 <= cut2 {
                    edge_list.push((j as u32, i as u32));
                }
            }
        }
        Ok(GeometricGraph {
            positions,
            species,
            edge_list,
            cutoff,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.positions.len()
    }

    /// Unit vector of edge e, pointing along r_j - r_i.
    pub fn edge_unit_vector(&self, e: usize) -> [f64; 3] {
        let (j, i) = self.edge_list[e];
        let (pj, pi) = (self.positions[j as usize], self.positions[i as usize]);
        let d = [pj[0] - pi[0], pj[1] - pi[1], pj[2] - pi[2]];
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        [d[0] / n, d[1] / n, d[2] / n]
    }
}

/// Uniform positions in a cube, uniform species, open-boundary cutoff graph.
pub fn synthesize_geometry(
    num_vertices: u32,
    box_side: f64,
    cutoff: f64,
    num_species: u32,
    seed: u64,
) -> Result<GeometricGraph> {
    if num_vertices == 0 {
        return Err(Error::validation("num_vertices must be >= 1"));
    }
    if box_side <= 0.0 {
        return Err(Error::validation("box_side must be positive"));
    }
    if num_species == 0 {
        return Err(Error::validation("num_species must be >= 1"));
    }
    let mut rng = crate::rng::stream(seed, "synthesize_geometry");
    let mut positions = Vec::with_capacity(num_vertices as usize);
    let mut species = Vec::with_capacity(num_vertices as usize);
    for _ in 0..num_vertices {
        positions.push([
            rng.gen_range(0.0..box_side),
            rng.gen_range(0.0..box_side),
            rng.gen_range(0.0..box_side),
        ]);
        species.push(rng.gen_range(0..num_species));
    }
    GeometricGraph::from_positions(positions, species, cutoff)
}

/// Summary statistics of one integer-valued field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub min: u64,
    pub max: u64,
    pub mean: f64,
    /// Nearest-rank percentiles at 5/25/50/75/95.
    pub p05: u64,
    pub p25: u64,
    pub p50: u64,
    pub p75: u64,
    pub p95: u64,
}

fn field_stats(values: &mut [u64]) -> FieldStats {
    values.sort_unstable();
    let n = values.len();
    let pct = |p: f64| {
        let rank = ((p / 100.0) * n as f64).ceil() as usize;
        values[rank.clamp(1, n) - 1]
    };
    FieldStats {
        min: values[0],
        max: values[n - 1],
        mean: values.iter().map(|&v| v as f64).sum::<f64>() / n as f64,
        p05: pct(5.0),
        p25: pct(25.0),
        p50: pct(50.0),
        p75: pct(75.0),
        p95: pct(95.0),
    }
}

/// One log2 histogram bucket [lo, hi).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub lo: u64,
    pub hi: u64,
    pub count: u64,
}

/// Power-of-two binning: a zero bucket, then [1,2), [2,4), [4,8), ...
fn log_histogram(values: &[u64]) -> Vec<HistBin> {
    let max = values.iter().copied().max().unwrap_or(0);
    let top_bit = if max == 0 {
        0
    } else {
        64 - max.leading_zeros() as u64
    };
    let mut bins: Vec<HistBin> = Vec::with_capacity(top_bit as usize + 1);
    bins.push(HistBin {
        lo: 0,
        hi: 1,
        count: 0,
    });
    for k in 0..top_bit {
        bins.push(HistBin {
            lo: 1 << k,
            hi: 1 << (k + 1),
            count: 0,
        });
    }
    for &v in values {
        let idx = if v == 0 {
            0
        } else {
            64 - v.leading_zeros() as usize
        };
        bins[idx].count += 1;
    }
    bins
}

/// Full manifest summary, serialized as a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub count: u64,
    pub vertices: FieldStats,
    pub edges: FieldStats,
    pub per_source: BTreeMap<String, u64>,
    pub vertex_histogram: Vec<HistBin>,
    pub edge_histogram: Vec<HistBin>,
}

pub fn manifest_stats(graphs: &[GraphMeta]) -> Result<StatsSummary> {
    if graphs.is_empty() {
        return Err(Error::validation("manifest_stats requires a non-empty list"));
    }
    let mut vertices: Vec<u64> = graphs.iter().map(|g| u64::from(g.vertices)).collect();
    let mut edges: Vec<u64> = graphs.iter().map(|g| g.edges).collect();
    let mut per_source = BTreeMap::new();
    for g in graphs {
        *per_source.entry(g.source.clone()).or_insert(0u64) += 1;
    }
    let vertex_histogram = log_histogram(&vertices);
    let edge_histogram = log_histogram(&edges);
    Ok(StatsSummary {
        count: graphs.len() as u64,
        vertices: field_stats(&mut vertices),
        edges: field_stats(&mut edges),
        per_source,
        vertex_histogram,
        edge_histogram,
    })
}
