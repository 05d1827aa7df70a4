//! Block renormalization: coarse sites `A_N`, the block event on cubes
//! `Q_N(v)` of side `5N/4`, and the renormalized site configuration.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::cluster_analysis::{ClusterLabeling, UnionFind};
use crate::error::{Error, Result};
use crate::lattice_geometry::{LatticeGraph, VertexId};
use crate::percolation::{sample_bond, BondConfig, SiteConfig};
use crate::stats::{wilson, Interval};

/// Coarse sites `v` with `N v + [-5N/8, 5N/8]^d` inside the fine graph.
#[derive(Debug, Clone)]
pub struct BlockGrid {
    pub n: i32,
    pub sites: Vec<Vec<i32>>,
    /// Graph on the coarse sites (nearest-neighbour adjacency).
    pub coarse: Option<Arc<LatticeGraph>>,
}

impl BlockGrid {
    pub fn half_side(&self) -> i32 {
        5 * self.n / 8
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

fn check_scale(n: i32) -> Result<()> {
    if n <= 0 || n % 8 != 0 {
        return Err(Error::arg(format!("block scale must be a positive multiple of 8, got {n}")));
    }
    Ok(())
}

/// Lexicographic odometer over the integer box `[lo, hi]`.
fn for_each_point(lo: &[i32], hi: &[i32], mut f: impl FnMut(&[i32]) -> bool) -> bool {
    if lo.iter().zip(hi).any(|(l, h)| l > h) {
        return true;
    }
    let mut p = lo.to_vec();
    loop {
        if !f(&p) {
            return false;
        }
        let mut a = p.len();
        loop {
            if a == 0 {
                return true;
            }
            a -= 1;
            if p[a] < hi[a] {
                p[a] += 1;
                break;
            }
            p[a] = lo[a];
        }
    }
}

/// Exact evaluation of the cube-containment predicate on every candidate site.
pub fn coarse_sites(a: &LatticeGraph, n: i32) -> Result<BlockGrid> {
    check_scale(n)?;
    let h = 5 * n / 8;
    let (vlo, vhi) = a.vertex_bounds();
    let dim = a.dim();
    let clo: Vec<i32> = (0..dim).map(|i| (vlo[i] + h).div_euclid(n) + i32::from((vlo[i] + h).rem_euclid(n) != 0)).collect();
    let chi: Vec<i32> = (0..dim).map(|i| (vhi[i] - h).div_euclid(n)).collect();
    let mut sites = Vec::new();
    for_each_point(&clo, &chi, |v| {
        let lo: Vec<i32> = v.iter().map(|c| c * n - h).collect();
        let hi: Vec<i32> = v.iter().map(|c| c * n + h).collect();
        if for_each_point(&lo, &hi, |p| a.vertex_at(p).is_some()) {
            sites.push(v.to_vec());
        }
        true
    });
    let coarse = if sites.is_empty() { None } else { Some(Arc::new(LatticeGraph::from_points(dim, &sites)?)) };
    Ok(BlockGrid { n, sites, coarse })
}

/// Outcome of the block event on one cube.
#[derive(Debug, Clone)]
pub struct BlockOutcome {
    pub event: bool,
    /// Fine vertices of the component touching all `2d` faces, if any.
    pub crossing: Option<Vec<VertexId>>,
}

struct Cube {
    lo: Vec<i32>,
    hi: Vec<i32>,
    stride: Vec<usize>,
    fine: Vec<VertexId>,
}

impl Cube {
    fn new(graph: &LatticeGraph, centre: &[i32], h: i32) -> Result<Self> {
        let lo: Vec<i32> = centre.iter().map(|c| c - h).collect();
        let hi: Vec<i32> = centre.iter().map(|c| c + h).collect();
        let side = (2 * h + 1) as usize;
        let dim = centre.len();
        let mut stride = vec![1usize; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            stride[a] = stride[a + 1] * side;
        }
        let mut fine = Vec::with_capacity(side.pow(dim as u32));
        let complete = for_each_point(&lo, &hi, |p| match graph.vertex_at(p) {
            Some(v) => {
                fine.push(v);
                true
            }
            None => false,
        });
        if !complete {
            return Err(Error::arg("block cube is clipped by the graph"));
        }
        Ok(Self { lo, hi, stride, fine })
    }

    fn local(&self, p: &[i32]) -> Option<usize> {
        let mut idx = 0;
        for a in 0..p.len() {
            if p[a] < self.lo[a] || p[a] > self.hi[a] {
                return None;
            }
            idx += (p[a] - self.lo[a]) as usize * self.stride[a];
        }
        Some(idx)
    }

    /// Local adjacency over open edges inside the cube.
    fn open_neighbors(&self, config: &BondConfig) -> Vec<Vec<u32>> {
        let g = config.graph();
        self.fine
            .iter()
            .map(|&v| {
                g.neighbors(v)
                    .filter(|&(_, e)| config.is_open(e))
                    .filter_map(|(w, _)| self.local(g.coord(w)).map(|i| i as u32))
                    .collect()
            })
            .collect()
    }
}

/// Whether the graph diameter of `verts` under `adj` exceeds `t`.
fn diameter_exceeds(adj: &[Vec<u32>], verts: &[u32], t: u32, dist: &mut [u32], stamp: &mut [u32], round: &mut u32) -> bool {
    let mut queue = std::collections::VecDeque::new();
    for &s in verts {
        *round += 1;
        stamp[s as usize] = *round;
        dist[s as usize] = 0;
        queue.clear();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let du = dist[u as usize];
            if du > t {
                return true;
            }
            for &w in &adj[u as usize] {
                if stamp[w as usize] != *round {
                    stamp[w as usize] = *round;
                    dist[w as usize] = du + 1;
                    queue.push_back(w);
                }
            }
        }
    }
    false
}

/// The cube `Q_N(v)` has an open component touching all `2d` faces and every
/// other open component has graph diameter at most `N/10`.
pub fn block_outcome(config: &BondConfig, v: &[i32], n: i32) -> Result<BlockOutcome> {
    check_scale(n)?;
    let graph = config.graph();
    if v.len() != graph.dim() {
        return Err(Error::arg("coarse site has the wrong dimension"));
    }
    let centre: Vec<i32> = v.iter().map(|c| c * n).collect();
    let cube = Cube::new(graph, &centre, 5 * n / 8)?;
    let adj = cube.open_neighbors(config);
    let m = cube.fine.len();
    let mut uf = UnionFind::new(m);
    for (i, nb) in adj.iter().enumerate() {
        for &j in nb {
            uf.union(i, j as usize);
        }
    }
    let dim = graph.dim();
    let all_faces: u64 = (1u64 << (2 * dim)) - 1;
    let mut faces = vec![0u64; m];
    let mut lo_c = vec![vec![i32::MAX; dim]; m];
    let mut hi_c = vec![vec![i32::MIN; dim]; m];
    for (i, &fv) in cube.fine.iter().enumerate() {
        let r = uf.find(i);
        let p = graph.coord(fv);
        for a in 0..dim {
            if p[a] == cube.lo[a] {
                faces[r] |= 1 << (2 * a);
            }
            if p[a] == cube.hi[a] {
                faces[r] |= 1 << (2 * a + 1);
            }
            lo_c[r][a] = lo_c[r][a].min(p[a]);
            hi_c[r][a] = hi_c[r][a].max(p[a]);
        }
    }
    let crossing_roots: Vec<usize> = (0..m).filter(|&i| uf.find(i) == i && faces[i] == all_faces).collect();
    let Some(&root) = crossing_roots.first() else {
        return Ok(BlockOutcome { event: false, crossing: None });
    };
    let crossing: Vec<VertexId> = (0..m).filter(|&i| uf.find(i) == root).map(|i| cube.fine[i]).collect();
    if crossing_roots.len() > 1 {
        return Ok(BlockOutcome { event: false, crossing: Some(crossing) });
    }
    // N/10 as a real threshold: diameter > N/10 iff diameter > floor(N/10)
    let t = (n / 10) as u32;
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); m];
    for i in 0..m {
        let r = uf.find(i);
        if r != root {
            members[r].push(i as u32);
        }
    }
    let mut dist = vec![0u32; m];
    let mut stamp = vec![0u32; m];
    let mut round = 0u32;
    for r in 0..m {
        let verts = &members[r];
        if verts.len() <= 1 {
            continue;
        }
        let extent = (0..dim).map(|a| (hi_c[r][a] - lo_c[r][a]) as u32).max().unwrap_or(0);
        // graph distance dominates coordinate extent
        if extent > t || diameter_exceeds(&adj, verts, t, &mut dist, &mut stamp, &mut round) {
            return Ok(BlockOutcome { event: false, crossing: Some(crossing) });
        }
    }
    Ok(BlockOutcome { event: true, crossing: Some(crossing) })
}

pub fn block_event(config: &BondConfig, v: &[i32], n: i32) -> Result<bool> {
    Ok(block_outcome(config, v, n)?.event)
}

/// Site configuration on `A_N`: a coarse site is open iff its block event holds.
pub fn renormalized_config(config: &BondConfig, grid: &BlockGrid) -> Result<SiteConfig> {
    let coarse = grid.coarse.as_ref().ok_or_else(|| Error::arg("empty block grid"))?;
    let bits: Vec<bool> = (0..coarse.num_vertices())
        .into_par_iter()
        .map(|c| block_event(config, coarse.coord(c), grid.n))
        .collect::<Result<_>>()?;
    SiteConfig::from_bits(Arc::clone(coarse), &bits, config.p(), config.seed())
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockProbability {
    pub dim: usize,
    pub p: f64,
    pub n: i32,
    pub samples: usize,
    pub p_hat: Interval,
}

impl BlockProbability {
    pub fn write_csv(rows: &[BlockProbability], w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["dim", "p", "N", "samples", "p_hat", "lo", "hi"])?;
        for r in rows {
            out.write_record([
                r.dim.to_string(),
                r.p.to_string(),
                r.n.to_string(),
                r.samples.to_string(),
                r.p_hat.estimate.to_string(),
                r.p_hat.lo.to_string(),
                r.p_hat.hi.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Monte Carlo estimate of `P(block event at the origin)`.
pub fn block_probability(dim: usize, p: f64, n: i32, seeds: &[u64]) -> Result<BlockProbability> {
    check_scale(n)?;
    let graph = Arc::new(LatticeGraph::lattice_box(dim, 5 * n / 8)?);
    let origin = vec![0; dim];
    let hits: Vec<bool> = seeds
        .par_iter()
        .map(|&s| block_event(&sample_bond(&graph, p, s)?, &origin, n))
        .collect::<Result<_>>()?;
    let k = hits.iter().filter(|&&h| h).count();
    Ok(BlockProbability { dim, p, n, samples: seeds.len(), p_hat: wilson(k, seeds.len()) })
}

#[derive(Debug, Clone, Serialize)]
pub struct LiftReport {
    pub open_sites: usize,
    pub coarse_giant: usize,
    pub adjacent_pairs: usize,
    /// Adjacent open sites whose crossing components share a fine vertex.
    pub intersecting_pairs: usize,
    /// Fine open clusters met by crossing components of the coarse giant.
    pub fine_clusters: usize,
}

impl LiftReport {
    pub fn lifts(&self) -> bool {
        self.intersecting_pairs == self.adjacent_pairs && self.fine_clusters <= 1
    }
}

/// Lifts the largest cluster of the renormalized configuration to the fine
/// configuration through the crossing components of its blocks.
pub fn lift_check(config: &BondConfig, grid: &BlockGrid, sites: &SiteConfig) -> Result<LiftReport> {
    let coarse = sites.graph();
    let labeling = ClusterLabeling::from_edges(coarse, |e| {
        let (a, b) = coarse.edge(e);
        sites.is_open(a) && sites.is_open(b)
    });
    let open: Vec<usize> = (0..coarse.num_vertices()).filter(|&c| sites.is_open(c)).collect();
    let giant = open.iter().map(|&c| labeling.label(c)).max_by_key(|&l| (labeling.size(l), std::cmp::Reverse(l)));
    let Some(giant) = giant else {
        return Ok(LiftReport { open_sites: 0, coarse_giant: 0, adjacent_pairs: 0, intersecting_pairs: 0, fine_clusters: 0 });
    };
    let members: Vec<usize> = open.iter().copied().filter(|&c| labeling.label(c) == giant).collect();
    let mut crossing: Vec<Option<Vec<VertexId>>> = vec![None; coarse.num_vertices()];
    for &c in &members {
        let mut cr = block_outcome(config, coarse.coord(c), grid.n)?.crossing.expect("open block has a crossing");
        cr.sort_unstable();
        crossing[c] = Some(cr);
    }
    let mut adjacent_pairs = 0;
    let mut intersecting_pairs = 0;
    for &c in &members {
        for (d, _) in coarse.neighbors(c) {
            if d > c && crossing[d].is_some() {
                adjacent_pairs += 1;
                let (a, b) = (crossing[c].as_ref().unwrap(), crossing[d].as_ref().unwrap());
                if a.iter().any(|x| b.binary_search(x).is_ok()) {
                    intersecting_pairs += 1;
                }
            }
        }
    }
    let fine = ClusterLabeling::from_edges(config.graph(), |e| config.is_open(e));
    let mut labels: Vec<usize> = members.iter().map(|&c| fine.label(crossing[c].as_ref().unwrap()[0])).collect();
    labels.sort_unstable();
    labels.dedup();
    Ok(LiftReport {
        open_sites: open.len(),
        coarse_giant: members.len(),
        adjacent_pairs,
        intersecting_pairs,
        fine_clusters: labels.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_graph(dim: usize, m: i32) -> Arc<LatticeGraph> {
        Arc::new(LatticeGraph::lattice_box(dim, m).unwrap())
    }

    #[test]
    fn scale_must_divide_by_eight() {
        let g = cube_graph(2, 10);
        assert!(coarse_sites(&g, 12).is_err());
        assert!(block_event(&BondConfig::all_open(g), &[0, 0], 4).is_err());
    }

    #[test]
    fn full_box_sites() {
        // Lambda_{4N} with N = 8: interior sites satisfy |v| * 8 + 5 <= 32
        let g = cube_graph(2, 32);
        let grid = coarse_sites(&g, 8).unwrap();
        let mut want = Vec::new();
        for x in -3..=3 {
            for y in -3..=3 {
                want.push(vec![x, y]);
            }
        }
        assert_eq!(grid.sites, want);
        assert!(coarse_sites(&cube_graph(2, 4), 8).unwrap().is_empty());
    }

    #[test]
    fn wedge_coarse_sites_follow_predicate() {
        use crate::lattice_geometry::{GaugeFunction, RegionSpec};
        let h = GaugeFunction::constant(6.0, 40).unwrap();
        let g = LatticeGraph::build(&RegionSpec::wedge(h), 24).unwrap();
        let grid = coarse_sites(&g, 8).unwrap();
        // direct predicate: x - 5 >= 0, |z| + 5 <= 6, box |.| + 5 <= 24
        let mut want = Vec::new();
        for x in -3i32..=3 {
            for y in -3i32..=3 {
                for z in -3i32..=3 {
                    if 8 * x - 5 >= 0 && (8 * z).abs() + 5 <= 6 && (8 * x).abs() + 5 <= 24 && (8 * y).abs() + 5 <= 24 {
                        want.push(vec![x, y, z]);
                    }
                }
            }
        }
        assert_eq!(grid.sites, want);
        assert!(grid.sites.iter().all(|s| s[2] == 0));
    }

    #[test]
    fn trivial_block_events() {
        let g = cube_graph(3, 10);
        assert!(block_event(&BondConfig::all_open(Arc::clone(&g)), &[0, 0, 0], 16).unwrap());
        assert!(!block_event(&BondConfig::all_closed(Arc::clone(&g)), &[0, 0, 0], 16).unwrap());
        assert!(block_event(&BondConfig::all_open(Arc::clone(&g)), &[1, 0, 0], 16).is_err());
    }

    #[test]
    fn stray_component_breaks_event() {
        // N = 16 in Z^2: cube [-10, 10]^2, threshold N/10 = 1.6
        let g = cube_graph(2, 10);
        let at = |p: [i32; 2]| g.vertex_at(&p).unwrap();
        // cut the 3-vertex path (2,2)-(3,2)-(4,2) out of the cluster
        let path = [at([2, 2]), at([3, 2]), at([4, 2])];
        let mut cut = Vec::new();
        for &v in &path {
            for (w, e) in g.neighbors(v) {
                if !path.contains(&w) {
                    cut.push(e);
                }
            }
        }
        let c = BondConfig::all_open(Arc::clone(&g)).with_closed(&cut);
        assert!(!block_event(&c, &[0, 0], 16).unwrap());
        // a single cut edge (diameter 1) is tolerated
        let pair = [at([2, 2]), at([3, 2])];
        let cut: Vec<_> = pair
            .iter()
            .flat_map(|&v| g.neighbors(v).filter(|(w, _)| !pair.contains(w)).map(|(_, e)| e).collect::<Vec<_>>())
            .collect();
        let c = BondConfig::all_open(Arc::clone(&g)).with_closed(&cut);
        assert!(block_event(&c, &[0, 0], 16).unwrap());
    }

    #[test]
    fn full_configuration_renormalizes_open() {
        let g = cube_graph(2, 40);
        let grid = coarse_sites(&g, 16).unwrap();
        let sites = renormalized_config(&BondConfig::all_open(Arc::clone(&g)), &grid).unwrap();
        assert_eq!(sites.open_count(), grid.sites.len());
        let rep = lift_check(&BondConfig::all_open(g), &grid, &sites).unwrap();
        assert!(rep.lifts());
        assert_eq!(rep.coarse_giant, grid.sites.len());
    }

    #[test]
    fn probability_extremes() {
        let r = block_probability(2, 1.0, 8, &[1, 2, 3]).unwrap();
        assert_eq!(r.p_hat.estimate, 1.0);
        let r = block_probability(2, 0.05, 8, &[1, 2, 3]).unwrap();
        assert_eq!(r.p_hat.estimate, 0.0);
    }

    #[test]
    fn supercritical_lift() {
        let g = cube_graph(3, 30);
        let grid = coarse_sites(&g, 16).unwrap();
        for seed in 0..3 {
            let c = sample_bond(&g, 0.7, seed).unwrap();
            let sites = renormalized_config(&c, &grid).unwrap();
            let rep = lift_check(&c, &grid, &sites).unwrap();
            assert!(rep.lifts(), "{rep:?}");
        }
    }
}
