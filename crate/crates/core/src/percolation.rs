//! Seeded Bernoulli bond and site percolation.
//!
//! Every edge (site) draws its uniform from a counter-based hash of
//! `(seed, lattice coordinates, axis)`. The draw depends only on where the
//! edge sits in `Z^d`, so sampling a subgraph equals restricting a sample of
//! any ambient graph, and `open(p1) ⊆ open(p2)` whenever `p1 <= p2`.

use std::io::{BufRead, Read, Write};
use std::sync::Arc;

use bitvec::prelude::*;

use crate::error::{Error, Result};
use crate::lattice_geometry::{EdgeId, LatticeGraph, VertexId};

/// Version tag of the canonical edge order used by dumps.
pub const EDGE_ORDER_VERSION: &str = "lex-min-endpoint-axis/1";

const BOND_DOMAIN: u64 = 0xB0DD_0000_0000_0001;
const SITE_DOMAIN: u64 = 0x517E_0000_0000_0002;

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in `[0, 1)` keyed by seed, domain and lattice coordinates.
pub fn keyed_uniform(seed: u64, domain: u64, coords: &[i32], tag: u64) -> f64 {
    let mut h = mix64(seed ^ mix64(domain));
    for &c in coords {
        h = mix64(h ^ u64::from(c as u32));
    }
    h = mix64(h ^ tag);
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Seed for an auxiliary RNG stream derived from a run seed.
pub fn stream_seed(seed: u64, domain: u64) -> u64 {
    mix64(seed ^ mix64(domain))
}

/// The uniform driving edge `e` of `graph` under `seed`.
pub fn edge_uniform(graph: &LatticeGraph, seed: u64, e: EdgeId) -> f64 {
    let (u, _) = graph.edge(e);
    keyed_uniform(seed, BOND_DOMAIN, graph.coord(u), graph.edge_axis(e) as u64)
}

pub fn site_uniform(graph: &LatticeGraph, seed: u64, v: VertexId) -> f64 {
    keyed_uniform(seed, SITE_DOMAIN, graph.coord(v), 0)
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::arg(format!("retention probability must be in (0, 1], got {p}")))
    }
}

/// Open/closed state of every edge of a graph.
#[derive(Debug, Clone)]
pub struct BondConfig {
    graph: Arc<LatticeGraph>,
    open: BitVec<u64, Lsb0>,
    p: f64,
    seed: u64,
}

impl PartialEq for BondConfig {
    fn eq(&self, other: &Self) -> bool {
        self.open == other.open && self.p == other.p && self.seed == other.seed
    }
}

pub fn sample_bond(graph: &Arc<LatticeGraph>, p: f64, seed: u64) -> Result<BondConfig> {
    check_p(p)?;
    let open = (0..graph.num_edges())
        .map(|e| edge_uniform(graph, seed, e) < p)
        .collect();
    Ok(BondConfig { graph: Arc::clone(graph), open, p, seed })
}

/// Restriction of an ambient configuration to a subgraph's edges.
pub fn restrict(ambient: &BondConfig, a: &Arc<LatticeGraph>) -> Result<BondConfig> {
    let g = &ambient.graph;
    if a.dim() != g.dim() {
        return Err(Error::arg("dimension mismatch between subgraph and ambient graph"));
    }
    let mut open = BitVec::with_capacity(a.num_edges());
    for e in 0..a.num_edges() {
        let (u, w) = a.edge(e);
        let amb = g
            .vertex_at(a.coord(u))
            .zip(g.vertex_at(a.coord(w)))
            .and_then(|(x, y)| g.edge_between(x, y))
            .ok_or_else(|| {
                Error::arg(format!("edge {:?}-{:?} is not in the ambient graph", a.coord(u), a.coord(w)))
            })?;
        open.push(ambient.open[amb]);
    }
    Ok(BondConfig { graph: Arc::clone(a), open, p: ambient.p, seed: ambient.seed })
}

impl BondConfig {
    /// Explicit configuration; `p` and `seed` are recorded as metadata.
    pub fn from_bits(graph: Arc<LatticeGraph>, bits: &[bool], p: f64, seed: u64) -> Result<Self> {
        if bits.len() != graph.num_edges() {
            return Err(Error::arg(format!(
                "{} bits for {} edges",
                bits.len(),
                graph.num_edges()
            )));
        }
        Ok(Self { graph, open: bits.iter().copied().collect(), p, seed })
    }

    pub fn all_open(graph: Arc<LatticeGraph>) -> Self {
        let n = graph.num_edges();
        Self { graph, open: bitvec![u64, Lsb0; 1; n], p: 1.0, seed: 0 }
    }

    pub fn all_closed(graph: Arc<LatticeGraph>) -> Self {
        let n = graph.num_edges();
        Self { graph, open: bitvec![u64, Lsb0; 0; n], p: 0.0, seed: 0 }
    }

    /// Copy with the given edges closed.
    pub fn with_closed(&self, edges: &[EdgeId]) -> Self {
        let mut c = self.clone();
        for &e in edges {
            c.open.set(e, false);
        }
        c
    }

    pub fn graph(&self) -> &LatticeGraph {
        &self.graph
    }

    pub fn graph_arc(&self) -> &Arc<LatticeGraph> {
        &self.graph
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_open(&self, e: EdgeId) -> bool {
        self.open[e]
    }

    pub fn bits(&self) -> &BitSlice<u64, Lsb0> {
        &self.open
    }

    pub fn open_count(&self) -> usize {
        self.open.count_ones()
    }

    pub fn open_fraction(&self) -> f64 {
        if self.open.is_empty() {
            0.0
        } else {
            self.open_count() as f64 / self.open.len() as f64
        }
    }

    /// Open edges of `self` are a subset of those of `other`.
    pub fn is_subset_of(&self, other: &BondConfig) -> bool {
        self.open.len() == other.open.len()
            && self.open.iter().by_vals().zip(other.open.iter().by_vals()).all(|(a, b)| !a || b)
    }

    pub fn write_dump(&self, w: &mut impl Write) -> Result<()> {
        write_header(w, "bond", &self.graph, self.p, self.seed, self.open.len())?;
        w.write_all(&pack_bits(&self.open))?;
        Ok(())
    }

    pub fn read_dump(r: &mut impl BufRead, graph: Arc<LatticeGraph>) -> Result<Self> {
        let header = read_header(r, "bond", &graph, graph.num_edges())?;
        let open = read_bits(r, graph.num_edges())?;
        Ok(Self { graph, open, p: header.p, seed: header.seed })
    }
}

/// Open/closed state of every vertex of a graph.
#[derive(Debug, Clone)]
pub struct SiteConfig {
    graph: Arc<LatticeGraph>,
    open: BitVec<u64, Lsb0>,
    p: f64,
    seed: u64,
}

pub fn sample_site(graph: &Arc<LatticeGraph>, p: f64, seed: u64) -> Result<SiteConfig> {
    check_p(p)?;
    let open = (0..graph.num_vertices())
        .map(|v| site_uniform(graph, seed, v) < p)
        .collect();
    Ok(SiteConfig { graph: Arc::clone(graph), open, p, seed })
}

impl SiteConfig {
    pub fn from_bits(graph: Arc<LatticeGraph>, bits: &[bool], p: f64, seed: u64) -> Result<Self> {
        if bits.len() != graph.num_vertices() {
            return Err(Error::arg(format!(
                "{} bits for {} vertices",
                bits.len(),
                graph.num_vertices()
            )));
        }
        Ok(Self { graph, open: bits.iter().copied().collect(), p, seed })
    }

    pub fn graph(&self) -> &LatticeGraph {
        &self.graph
    }

    pub fn graph_arc(&self) -> &Arc<LatticeGraph> {
        &self.graph
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_open(&self, v: VertexId) -> bool {
        self.open[v]
    }

    pub fn open_count(&self) -> usize {
        self.open.count_ones()
    }

    pub fn write_dump(&self, w: &mut impl Write) -> Result<()> {
        write_header(w, "site", &self.graph, self.p, self.seed, self.open.len())?;
        w.write_all(&pack_bits(&self.open))?;
        Ok(())
    }

    pub fn read_dump(r: &mut impl BufRead, graph: Arc<LatticeGraph>) -> Result<Self> {
        let header = read_header(r, "site", &graph, graph.num_vertices())?;
        let open = read_bits(r, graph.num_vertices())?;
        Ok(Self { graph, open, p: header.p, seed: header.seed })
    }
}

// Dump layout: text header lines `key=value`, terminated by a line `end`,
// followed by ceil(n/8) bytes of LSB-first packed bits.

struct Header {
    p: f64,
    seed: u64,
}

fn fmt_coords(c: &[i32]) -> String {
    c.iter().map(i32::to_string).collect::<Vec<_>>().join(",")
}

fn write_header(
    w: &mut impl Write,
    kind: &str,
    graph: &LatticeGraph,
    p: f64,
    seed: u64,
    bits: usize,
) -> Result<()> {
    let (lo, hi) = graph.box_bounds();
    writeln!(w, "wedgelab-config v1")?;
    writeln!(w, "kind={kind}")?;
    writeln!(w, "dim={}", graph.dim())?;
    writeln!(w, "box_lo={}", fmt_coords(lo))?;
    writeln!(w, "box_hi={}", fmt_coords(hi))?;
    writeln!(w, "vertices={}", graph.num_vertices())?;
    writeln!(w, "edges={}", graph.num_edges())?;
    writeln!(w, "bits={bits}")?;
    writeln!(w, "p={p:?}")?;
    writeln!(w, "seed={seed}")?;
    writeln!(w, "edge_order={EDGE_ORDER_VERSION}")?;
    writeln!(w, "end")?;
    Ok(())
}

fn read_header(r: &mut impl BufRead, kind: &str, graph: &LatticeGraph, bits: usize) -> Result<Header> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != "wedgelab-config v1" {
        return Err(Error::Format(format!("bad magic line {:?}", line.trim_end())));
    }
    let (lo, hi) = graph.box_bounds();
    let expect = [
        ("kind", kind.to_string()),
        ("dim", graph.dim().to_string()),
        ("box_lo", fmt_coords(lo)),
        ("box_hi", fmt_coords(hi)),
        ("vertices", graph.num_vertices().to_string()),
        ("edges", graph.num_edges().to_string()),
        ("bits", bits.to_string()),
        ("edge_order", EDGE_ORDER_VERSION.to_string()),
    ];
    let mut p = None;
    let mut seed = None;
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Format("header not terminated".into()));
        }
        let l = line.trim_end();
        if l == "end" {
            break;
        }
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header line {l:?}")))?;
        match k {
            "p" => p = Some(v.parse::<f64>().map_err(|e| Error::Format(e.to_string()))?),
            "seed" => seed = Some(v.parse::<u64>().map_err(|e| Error::Format(e.to_string()))?),
            _ => {
                if let Some((_, want)) = expect.iter().find(|(name, _)| *name == k) {
                    if want != v {
                        return Err(Error::Format(format!("{k}={v} but graph has {want}")));
                    }
                }
            }
        }
    }
    match (p, seed) {
        (Some(p), Some(seed)) => Ok(Header { p, seed }),
        _ => Err(Error::Format("header lacks p or seed".into())),
    }
}

fn pack_bits(bits: &BitSlice<u64, Lsb0>) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for i in bits.iter_ones() {
        out[i / 8] |= 1 << (i % 8);
    }
    out
}

fn read_bits(r: &mut impl Read, n: usize) -> Result<BitVec<u64, Lsb0>> {
    let mut bytes = vec![0u8; n.div_ceil(8)];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Format("bitmap shorter than header claims".into()))?;
    Ok((0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect())
}
