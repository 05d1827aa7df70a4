//! Connected components of open subgraphs: giant-cluster proxy, gaps,
//! k-strongly-open edges, weakly-closed clusters and inner k-boundaries.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use bitvec::prelude::*;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice_geometry::{EdgeId, LatticeGraph, VertexId, UNREACHED};
use crate::percolation::{sample_bond, stream_seed, BondConfig};
use crate::stats::{fit_tail, TailFit};

const GAP_DOMAIN: u64 = 0x6A90_0000_0000_0005;

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n as u32).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let gp = self.parent[self.parent[x] as usize];
            self.parent[x] = gp;
            x = gp as usize;
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra as u32;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Component id per vertex. Ids are assigned in order of each component's
/// smallest vertex, so labelings are canonical.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterLabeling {
    labels: Vec<u32>,
    sizes: Vec<usize>,
    bbox_lo: Vec<Vec<i32>>,
    bbox_hi: Vec<Vec<i32>>,
}

impl ClusterLabeling {
    /// Components of the subgraph made of the edges accepted by `edge_ok`.
    pub fn from_edges(graph: &LatticeGraph, edge_ok: impl Fn(EdgeId) -> bool) -> Self {
        let n = graph.num_vertices();
        let mut uf = UnionFind::new(n);
        for e in 0..graph.num_edges() {
            if edge_ok(e) {
                let (u, w) = graph.edge(e);
                uf.union(u, w);
            }
        }
        let mut root_label = vec![u32::MAX; n];
        let mut labels = vec![0u32; n];
        let mut sizes = Vec::new();
        let mut bbox_lo: Vec<Vec<i32>> = Vec::new();
        let mut bbox_hi: Vec<Vec<i32>> = Vec::new();
        for v in 0..n {
            let r = uf.find(v);
            if root_label[r] == u32::MAX {
                root_label[r] = sizes.len() as u32;
                sizes.push(0);
                bbox_lo.push(graph.coord(v).to_vec());
                bbox_hi.push(graph.coord(v).to_vec());
            }
            let c = root_label[r] as usize;
            labels[v] = c as u32;
            sizes[c] += 1;
            for (a, &x) in graph.coord(v).iter().enumerate() {
                bbox_lo[c][a] = bbox_lo[c][a].min(x);
                bbox_hi[c][a] = bbox_hi[c][a].max(x);
            }
        }
        Self { labels, sizes, bbox_lo, bbox_hi }
    }

    pub fn label(&self, v: VertexId) -> usize {
        self.labels[v] as usize
    }

    pub fn num_components(&self) -> usize {
        self.sizes.len()
    }

    pub fn size(&self, c: usize) -> usize {
        self.sizes[c]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn bounding_box(&self, c: usize) -> (&[i32], &[i32]) {
        (&self.bbox_lo[c], &self.bbox_hi[c])
    }

    pub fn members(&self, c: usize) -> Vec<VertexId> {
        (0..self.labels.len()).filter(|&v| self.labels[v] as usize == c).collect()
    }

    pub fn same(&self, u: VertexId, w: VertexId) -> bool {
        self.labels[u] == self.labels[w]
    }
}

/// Exact connected components of the open subgraph.
pub fn label_clusters(config: &BondConfig) -> ClusterLabeling {
    ClusterLabeling::from_edges(config.graph(), |e| config.is_open(e))
}

/// Finite-volume proxy for the infinite cluster: among components whose
/// bounding box spans two opposite faces of the graph's vertex bounding box,
/// the largest (smallest id on ties). `None` when nothing crosses.
pub fn giant_cluster(labeling: &ClusterLabeling, graph: &LatticeGraph) -> Option<usize> {
    let (lo, hi) = graph.vertex_bounds();
    let crosses = |c: usize| {
        let (blo, bhi) = labeling.bounding_box(c);
        (0..graph.dim()).any(|a| lo[a] < hi[a] && blo[a] == lo[a] && bhi[a] == hi[a])
    };
    (0..labeling.num_components())
        .filter(|&c| crosses(c))
        .max_by(|&a, &b| labeling.size(a).cmp(&labeling.size(b)).then(b.cmp(&a)))
}

/// Labeling of a configuration together with its giant component.
#[derive(Debug, Clone)]
pub struct GiantCluster {
    pub labeling: ClusterLabeling,
    pub id: usize,
}

impl GiantCluster {
    /// `None` when no open component crosses the box.
    pub fn find(config: &BondConfig) -> Option<Self> {
        let labeling = label_clusters(config);
        let id = giant_cluster(&labeling, config.graph())?;
        Some(Self { labeling, id })
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.labeling.label(v) == self.id
    }

    pub fn size(&self) -> usize {
        self.labeling.size(self.id)
    }

    pub fn vertices(&self) -> Vec<VertexId> {
        self.labeling.members(self.id)
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.labeling.labels.len()).map(|v| self.contains(v)).collect()
    }
}

/// Reusable stamped buffers for many small BFS runs on one graph.
pub(crate) struct SearchScratch {
    member: Vec<u32>,
    member_stamp: u32,
    seen: Vec<u32>,
    seen_stamp: u32,
    dist: Vec<u32>,
    queue: VecDeque<VertexId>,
}

fn bump(stamp: &mut u32, buf: &mut [u32]) -> u32 {
    if *stamp == u32::MAX {
        buf.fill(0);
        *stamp = 0;
    }
    *stamp += 1;
    *stamp
}

impl SearchScratch {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            member: vec![0; n],
            member_stamp: 0,
            seen: vec![0; n],
            seen_stamp: 0,
            dist: vec![0; n],
            queue: VecDeque::new(),
        }
    }

    /// Graph diameter of the subgraph induced on `verts` by accepted edges,
    /// exact (BFS from every vertex). Assumes that subgraph is connected.
    pub(crate) fn diameter(
        &mut self,
        graph: &LatticeGraph,
        verts: &[VertexId],
        edge_ok: impl Fn(EdgeId) -> bool,
    ) -> u32 {
        match verts.len() {
            0 | 1 => return 0,
            2 => return 1,
            _ => {}
        }
        let set = bump(&mut self.member_stamp, &mut self.member);
        for &v in verts {
            self.member[v] = set;
        }
        let mut best = 0;
        for &s in verts {
            let st = bump(&mut self.seen_stamp, &mut self.seen);
            self.seen[s] = st;
            self.dist[s] = 0;
            self.queue.clear();
            self.queue.push_back(s);
            while let Some(u) = self.queue.pop_front() {
                let du = self.dist[u];
                best = best.max(du);
                for (w, e) in graph.neighbors(u) {
                    if self.member[w] == set && self.seen[w] != st && edge_ok(e) {
                        self.seen[w] = st;
                        self.dist[w] = du + 1;
                        self.queue.push_back(w);
                    }
                }
            }
        }
        best
    }
}

/// A connected component of the complement of the giant cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Gap {
    pub vertices: Vec<VertexId>,
    /// Graph diameter inside the gap using lattice edges of either state.
    pub diameter: u32,
    /// Giant-cluster vertices adjacent to the gap.
    pub giant_neighbors: Vec<VertexId>,
    /// Touches the outer face, so its extent is truncated.
    pub censored: bool,
}

#[derive(Debug, Clone)]
pub struct GapSet {
    pub gaps: Vec<Gap>,
    gap_of: Vec<u32>,
}

impl GapSet {
    pub fn gap_of(&self, v: VertexId) -> Option<usize> {
        match self.gap_of[v] {
            u32::MAX => None,
            g => Some(g as usize),
        }
    }

    /// Diameters of uncensored gaps.
    pub fn uncensored_diameters(&self) -> Vec<u32> {
        self.gaps.iter().filter(|g| !g.censored).map(|g| g.diameter).collect()
    }
}

/// Gaps relative to `giant` (every vertex is in a gap when `giant` is `None`).
///
/// Adjacency is the ambient lattice (open or closed edges); vertices in
/// non-giant open components are gap members.
pub fn gaps(config: &BondConfig, labeling: &ClusterLabeling, giant: Option<usize>) -> GapSet {
    let graph = config.graph();
    let n = graph.num_vertices();
    let in_giant = |v: VertexId| giant == Some(labeling.label(v));
    let mut gap_of = vec![u32::MAX; n];
    let mut out = Vec::new();
    let mut scratch = SearchScratch::new(n);
    let mut queue = VecDeque::new();
    for s in 0..n {
        if in_giant(s) || gap_of[s] != u32::MAX {
            continue;
        }
        let id = out.len() as u32;
        gap_of[s] = id;
        queue.push_back(s);
        let mut vertices = Vec::new();
        let mut giant_neighbors = Vec::new();
        while let Some(u) = queue.pop_front() {
            vertices.push(u);
            for (w, _) in graph.neighbors(u) {
                if in_giant(w) {
                    giant_neighbors.push(w);
                } else if gap_of[w] == u32::MAX {
                    gap_of[w] = id;
                    queue.push_back(w);
                }
            }
        }
        vertices.sort_unstable();
        giant_neighbors.sort_unstable();
        giant_neighbors.dedup();
        let diameter = scratch.diameter(graph, &vertices, |_| true);
        let censored = vertices.iter().any(|&v| graph.on_outer_face(v));
        out.push(Gap { vertices, diameter, giant_neighbors, censored });
    }
    GapSet { gaps: out, gap_of }
}

#[derive(Debug, Clone, Serialize)]
pub struct GapRow {
    pub seed: u64,
    pub size: usize,
    pub diameter: u32,
    pub censored: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapTail {
    pub samples: usize,
    /// Seeds without a giant cluster.
    pub skipped_seeds: Vec<u64>,
    pub uncensored: usize,
    pub censored: usize,
    /// `P(diameter > n)` over uncensored gaps.
    pub survival: Vec<f64>,
    /// Log-linear decay rate of the survival curve.
    pub gamma: Option<TailFit>,
    #[serde(skip)]
    pub rows: Vec<GapRow>,
}

impl GapTail {
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Gap diameters over one configuration per seed, with a tail fit on the
/// uncensored ones. The fit starts at `n_min` and uses survival points
/// backed by at least `min_exceed` gaps.
pub fn gap_tail_experiment(graph: &Arc<LatticeGraph>, p: f64, seeds: &[u64], n_min: u32, min_exceed: usize) -> Result<GapTail> {
    if seeds.is_empty() {
        return Err(Error::arg("at least one seed is required"));
    }
    let per_seed: Vec<Result<Option<Vec<GapRow>>>> = seeds
        .par_iter()
        .map(|&seed| {
            let config = sample_bond(graph, p, seed)?;
            let labeling = label_clusters(&config);
            let Some(giant) = giant_cluster(&labeling, graph) else {
                return Ok(None);
            };
            let set = gaps(&config, &labeling, Some(giant));
            Ok(Some(
                set.gaps
                    .iter()
                    .map(|g| GapRow { seed, size: g.vertices.len(), diameter: g.diameter, censored: g.censored })
                    .collect(),
            ))
        })
        .collect();
    let mut rows = Vec::new();
    let mut skipped_seeds = Vec::new();
    for (&seed, r) in seeds.iter().zip(per_seed) {
        match r? {
            Some(mut v) => rows.append(&mut v),
            None => skipped_seeds.push(seed),
        }
    }
    let diameters: Vec<u32> = rows.iter().filter(|r| !r.censored).map(|r| r.diameter).collect();
    let gamma = fit_tail(&diameters, n_min, min_exceed, 500, stream_seed(seeds[0], GAP_DOMAIN)).ok();
    Ok(GapTail {
        samples: seeds.len(),
        skipped_seeds,
        uncensored: diameters.len(),
        censored: rows.len() - diameters.len(),
        survival: crate::stats::survival(&diameters),
        gamma,
        rows,
    })
}

/// Edges that are open together with every edge within line-graph distance
/// `k`. `k = 0` gives the open set.
pub fn strongly_open_edges(config: &BondConfig, k: u32) -> BitVec<u64, Lsb0> {
    let graph = config.graph();
    let m = graph.num_edges();
    let mut dist = vec![UNREACHED; m];
    let mut queue = VecDeque::new();
    for e in 0..m {
        if !config.is_open(e) {
            dist[e] = 0;
            queue.push_back(e);
        }
    }
    while let Some(f) = queue.pop_front() {
        let df = dist[f];
        if df >= k {
            continue;
        }
        let (u, w) = graph.edge(f);
        for x in [u, w] {
            for (_, g) in graph.neighbors(x) {
                if dist[g] == UNREACHED {
                    dist[g] = df + 1;
                    queue.push_back(g);
                }
            }
        }
    }
    dist.iter().map(|&d| d > k).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeaklyClosedCluster {
    pub component: usize,
    pub vertices: Vec<VertexId>,
    /// Graph diameter along weakly-closed edges.
    pub diameter: u32,
    pub censored: bool,
}

#[derive(Debug, Clone)]
pub struct WeaklyClosedClusters {
    /// Components of the subgraph of weakly-closed edges.
    pub labeling: ClusterLabeling,
    /// Components containing at least one weakly-closed edge.
    pub clusters: Vec<WeaklyClosedCluster>,
    /// `P(diam C(v) > n)` over all vertices, index `n`; vertices outside any
    /// cluster count as diameter 0.
    pub vertex_survival: Vec<f64>,
}

pub fn weakly_closed_clusters(config: &BondConfig, k: u32) -> WeaklyClosedClusters {
    let graph = config.graph();
    let strong = strongly_open_edges(config, k);
    let weak = |e: EdgeId| !strong[e];
    let labeling = ClusterLabeling::from_edges(graph, weak);
    let mut members: Vec<Vec<VertexId>> = vec![Vec::new(); labeling.num_components()];
    for v in 0..graph.num_vertices() {
        members[labeling.label(v)].push(v);
    }
    let mut scratch = SearchScratch::new(graph.num_vertices());
    let mut clusters = Vec::new();
    let mut diam_of = vec![0u32; labeling.num_components()];
    for (c, verts) in members.into_iter().enumerate() {
        if verts.len() < 2 {
            continue;
        }
        let diameter = scratch.diameter(graph, &verts, weak);
        diam_of[c] = diameter;
        let censored = verts.iter().any(|&v| graph.on_outer_face(v));
        clusters.push(WeaklyClosedCluster { component: c, vertices: verts, diameter, censored });
    }
    let n = graph.num_vertices().max(1) as f64;
    let max_d = diam_of.iter().copied().max().unwrap_or(0) as usize;
    let mut counts = vec![0usize; max_d + 1];
    for v in 0..graph.num_vertices() {
        counts[diam_of[labeling.label(v)] as usize] += 1;
    }
    let mut vertex_survival = Vec::with_capacity(max_d + 1);
    let mut above = graph.num_vertices();
    for c in counts {
        above -= c;
        vertex_survival.push(above as f64 / n);
    }
    WeaklyClosedClusters { labeling, clusters, vertex_survival }
}

/// `{x in region : d(x, graph \ region) < k}` with `d` the graph metric.
pub fn inner_k_boundary(region: &[bool], k: u32, graph: &LatticeGraph) -> Result<Vec<VertexId>> {
    if region.len() != graph.num_vertices() {
        return Err(Error::arg("region mask length differs from vertex count"));
    }
    let outside: Vec<VertexId> = (0..region.len()).filter(|&v| !region[v]).collect();
    if outside.len() == region.len() {
        return Err(Error::arg("region is empty"));
    }
    if outside.is_empty() {
        return Err(Error::arg("region is the whole graph"));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let dist = graph.bfs(&outside, |_| true, Some(k - 1));
    Ok((0..region.len()).filter(|&v| region[v] && dist[v] < k).collect())
}

/// [`inner_k_boundary`] for a sorted vertex list, touching only the set.
pub fn inner_k_boundary_of(verts: &[VertexId], k: u32, graph: &LatticeGraph) -> Vec<VertexId> {
    if k == 0 {
        return Vec::new();
    }
    let inside = |v: VertexId| verts.binary_search(&v).is_ok();
    let mut dist: std::collections::HashMap<VertexId, u32> = std::collections::HashMap::new();
    let mut queue = VecDeque::new();
    for &v in verts {
        if graph.neighbors(v).any(|(w, _)| !inside(w)) {
            dist.insert(v, 1);
            queue.push_back(v);
        }
    }
    while let Some(u) = queue.pop_front() {
        let du = dist[&u];
        if du + 1 >= k {
            continue;
        }
        for (w, _) in graph.neighbors(u) {
            if inside(w) && !dist.contains_key(&w) {
                dist.insert(w, du + 1);
                queue.push_back(w);
            }
        }
    }
    let mut out: Vec<VertexId> = dist.into_iter().filter(|&(_, d)| d < k).map(|(v, _)| v).collect();
    out.sort_unstable();
    out
}

/// Whether `verts` induce a connected subgraph under accepted edges.
pub fn is_connected(graph: &LatticeGraph, verts: &[VertexId], edge_ok: impl Fn(EdgeId) -> bool) -> bool {
    if verts.len() <= 1 {
        return true;
    }
    let mut member = vec![false; graph.num_vertices()];
    for &v in verts {
        member[v] = true;
    }
    let mut seen = vec![false; graph.num_vertices()];
    let mut stack = vec![verts[0]];
    seen[verts[0]] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for (w, e) in graph.neighbors(u) {
            if member[w] && !seen[w] && edge_ok(e) {
                seen[w] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count == verts.len()
}

/// The k-strongly-open cluster `S` and the components of its complement.
#[derive(Debug, Clone)]
pub struct StrongOpenDecomposition {
    pub k: u32,
    pub strong: BitVec<u64, Lsb0>,
    /// Vertex mask of `S`, the giant component of strongly-open edges.
    pub in_strong: Vec<bool>,
    /// Components of `V \ S` under lattice adjacency.
    pub components: Vec<Vec<VertexId>>,
    component_of: Vec<u32>,
}

impl StrongOpenDecomposition {
    pub fn component_of(&self, v: VertexId) -> Option<usize> {
        match self.component_of[v] {
            u32::MAX => None,
            c => Some(c as usize),
        }
    }

    pub fn component_mask(&self, c: usize) -> Vec<bool> {
        let mut m = vec![false; self.component_of.len()];
        for &v in &self.components[c] {
            m[v] = true;
        }
        m
    }
}

/// `None` when the strongly-open edges have no crossing component.
pub fn strong_open_decomposition(config: &BondConfig, k: u32) -> Option<StrongOpenDecomposition> {
    let graph = config.graph();
    let strong = strongly_open_edges(config, k);
    let labeling = ClusterLabeling::from_edges(graph, |e| strong[e]);
    let giant = giant_cluster(&labeling, graph)?;
    if labeling.size(giant) < 2 {
        return None;
    }
    let n = graph.num_vertices();
    let in_strong: Vec<bool> = (0..n).map(|v| labeling.label(v) == giant).collect();
    let mut component_of = vec![u32::MAX; n];
    let mut components = Vec::new();
    for s in 0..n {
        if in_strong[s] || component_of[s] != u32::MAX {
            continue;
        }
        let id = components.len() as u32;
        component_of[s] = id;
        let mut verts = vec![s];
        let mut i = 0;
        while i < verts.len() {
            let u = verts[i];
            i += 1;
            for (w, _) in graph.neighbors(u) {
                if !in_strong[w] && component_of[w] == u32::MAX {
                    component_of[w] = id;
                    verts.push(w);
                }
            }
        }
        verts.sort_unstable();
        components.push(verts);
    }
    Some(StrongOpenDecomposition { k, strong, in_strong, components, component_of })
}
