//! Finite induced subgraphs of `Z^d`.

use std::collections::VecDeque;

use super::region::RegionSpec;
use crate::error::{Error, Result};

pub type VertexId = usize;
pub type EdgeId = usize;

const ABSENT: u32 = u32::MAX;
/// Distance value for vertices a search never reached.
pub const UNREACHED: u32 = u32::MAX;

/// A finite set of lattice points with all nearest-neighbour edges between them.
///
/// Vertices are numbered in lexicographic coordinate order and edges in
/// lexicographic order of `(lower endpoint, axis)`; both orders are the
/// canonical orders used for tie-breaking and serialization.
#[derive(Debug, Clone)]
pub struct LatticeGraph {
    dim: usize,
    lo: Vec<i32>,
    hi: Vec<i32>,
    strides: Vec<usize>,
    coords: Vec<i32>,
    lookup: Vec<u32>,
    edges: Vec<[u32; 2]>,
    axes: Vec<u8>,
    adj_start: Vec<u32>,
    adj: Vec<[u32; 2]>,
    region_boundary: Vec<bool>,
    vmin: Vec<i32>,
    vmax: Vec<i32>,
}

impl LatticeGraph {
    /// Region points inside the truncation box `anchor + [-w, w]^d`.
    ///
    /// Region boundary flags mark vertices with a lattice neighbour outside
    /// the region; truncation faces are not region boundary.
    pub fn build(region: &RegionSpec, half_width: i32) -> Result<Self> {
        if half_width < 0 {
            return Err(Error::arg("truncation half-width must be >= 0"));
        }
        if let Some(limit) = region.x_table_limit() {
            // neighbours one step beyond the box are probed for boundary flags
            let need = i64::from(half_width) + 1;
            if limit < need {
                return Err(Error::Range {
                    what: "gauge j_max",
                    value: limit,
                    min: need,
                    max: i64::MAX,
                });
            }
        }
        let lo: Vec<i32> = region.anchor.iter().map(|a| a - half_width).collect();
        let hi: Vec<i32> = region.anchor.iter().map(|a| a + half_width).collect();
        Self::from_membership(region.dim, lo, hi, |p| region.contains(p), |p| region.contains(p))
    }

    /// The full box `[-m, m]^d` with its faces as region boundary.
    pub fn lattice_box(dim: usize, m: i32) -> Result<Self> {
        Self::build(&RegionSpec::lattice_box(dim, m)?, m)
    }

    /// Arbitrary point set; boundary = points with a lattice neighbour outside the set.
    pub fn from_points(dim: usize, points: &[Vec<i32>]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("dimension must be positive"));
        }
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::arg(format!("point {p:?} is not {dim}-dimensional")));
        }
        let (lo, hi) = if points.is_empty() {
            (vec![0; dim], vec![-1; dim])
        } else {
            let lo = (0..dim).map(|a| points.iter().map(|p| p[a]).min().unwrap()).collect();
            let hi = (0..dim).map(|a| points.iter().map(|p| p[a]).max().unwrap()).collect();
            (lo, hi)
        };
        let set = DenseSet::new(&lo, &hi, points);
        Self::from_membership(dim, lo, hi, |p| set.contains(p), |p| set.contains(p))
    }

    fn from_membership(
        dim: usize,
        lo: Vec<i32>,
        hi: Vec<i32>,
        inside: impl Fn(&[i32]) -> bool,
        in_region: impl Fn(&[i32]) -> bool,
    ) -> Result<Self> {
        let extent: Vec<usize> = (0..dim).map(|a| (hi[a] - lo[a] + 1).max(0) as usize).collect();
        let mut strides = vec![1usize; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * extent[a + 1];
        }
        let total: usize = extent.iter().product();
        if total >= ABSENT as usize {
            return Err(Error::arg("truncation box too large"));
        }
        let mut lookup = vec![ABSENT; total];
        let mut coords = Vec::new();
        let mut n = 0u32;
        let mut p = lo.clone();
        for cell in 0..total {
            if inside(&p) {
                lookup[cell] = n;
                coords.extend_from_slice(&p);
                n += 1;
            }
            // odometer, last axis fastest
            for a in (0..dim).rev() {
                p[a] += 1;
                if p[a] <= hi[a] {
                    break;
                }
                p[a] = lo[a];
            }
        }
        let nv = n as usize;
        let mut g = LatticeGraph {
            dim,
            lo,
            hi,
            strides,
            coords,
            lookup,
            edges: Vec::new(),
            axes: Vec::new(),
            adj_start: Vec::new(),
            adj: Vec::new(),
            region_boundary: vec![false; nv],
            vmin: vec![0; dim],
            vmax: vec![-1; dim],
        };
        let mut deg = vec![0u32; nv + 1];
        let mut q = vec![0i32; dim];
        for v in 0..nv {
            for a in 0..dim {
                q.copy_from_slice(g.coord(v));
                q[a] += 1;
                if let Some(w) = g.vertex_at(&q) {
                    g.edges.push([v as u32, w as u32]);
                    g.axes.push(a as u8);
                    deg[v] += 1;
                    deg[w] += 1;
                }
                if !in_region(&q) {
                    g.region_boundary[v] = true;
                }
                q[a] -= 2;
                if !in_region(&q) {
                    g.region_boundary[v] = true;
                }
            }
        }
        let mut start = vec![0u32; nv + 1];
        for v in 0..nv {
            start[v + 1] = start[v] + deg[v];
        }
        let mut fill = start.clone();
        let mut adj = vec![[0u32; 2]; start[nv] as usize];
        for (e, &[u, w]) in g.edges.iter().enumerate() {
            adj[fill[u as usize] as usize] = [w, e as u32];
            fill[u as usize] += 1;
            adj[fill[w as usize] as usize] = [u, e as u32];
            fill[w as usize] += 1;
        }
        for v in 0..nv {
            adj[start[v] as usize..start[v + 1] as usize].sort_unstable();
        }
        g.adj_start = start;
        g.adj = adj;
        if nv > 0 {
            for a in 0..dim {
                g.vmin[a] = (0..nv).map(|v| g.coord(v)[a]).min().unwrap();
                g.vmax[a] = (0..nv).map(|v| g.coord(v)[a]).max().unwrap();
            }
        }
        Ok(g)
    }

    /// Subgraph induced by the kept vertices. A kept vertex is boundary if it
    /// was boundary here or loses a neighbour.
    pub fn induced(&self, keep: &[bool]) -> LatticeGraph {
        assert_eq!(keep.len(), self.num_vertices());
        let lookup_keep = |p: &[i32]| self.vertex_at(p).is_some_and(|v| keep[v]);
        let mut g = Self::from_membership(
            self.dim,
            self.lo.clone(),
            self.hi.clone(),
            lookup_keep,
            |_| true,
        )
        .expect("sub-box of a valid box");
        for v in 0..g.num_vertices() {
            let pv = self.vertex_at(g.coord(v)).unwrap();
            g.region_boundary[v] = self.region_boundary[pv]
                || self.neighbors(pv).any(|(w, _)| !keep[w]);
        }
        g
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        self.region_boundary.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn coord(&self, v: VertexId) -> &[i32] {
        &self.coords[v * self.dim..(v + 1) * self.dim]
    }

    pub fn vertex_at(&self, p: &[i32]) -> Option<VertexId> {
        let mut cell = 0usize;
        for a in 0..self.dim {
            if p[a] < self.lo[a] || p[a] > self.hi[a] {
                return None;
            }
            cell += (p[a] - self.lo[a]) as usize * self.strides[a];
        }
        match self.lookup[cell] {
            ABSENT => None,
            v => Some(v as VertexId),
        }
    }

    /// Neighbours in canonical (increasing index) order, with connecting edge.
    pub fn neighbors(&self, v: VertexId) -> impl Iterator<Item = (VertexId, EdgeId)> + '_ {
        self.adj[self.adj_start[v] as usize..self.adj_start[v + 1] as usize]
            .iter()
            .map(|&[w, e]| (w as VertexId, e as EdgeId))
    }

    pub fn degree(&self, v: VertexId) -> usize {
        (self.adj_start[v + 1] - self.adj_start[v]) as usize
    }

    /// Endpoints `(lower, upper)` in canonical order.
    pub fn edge(&self, e: EdgeId) -> (VertexId, VertexId) {
        let [u, w] = self.edges[e];
        (u as VertexId, w as VertexId)
    }

    pub fn edge_axis(&self, e: EdgeId) -> usize {
        self.axes[e] as usize
    }

    pub fn edge_between(&self, u: VertexId, w: VertexId) -> Option<EdgeId> {
        self.neighbors(u).find(|&(x, _)| x == w).map(|(_, e)| e)
    }

    pub fn is_region_boundary(&self, v: VertexId) -> bool {
        self.region_boundary[v]
    }

    pub fn region_boundary(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.num_vertices()).filter(|&v| self.region_boundary[v])
    }

    /// Truncation box corners (inclusive).
    pub fn box_bounds(&self) -> (&[i32], &[i32]) {
        (&self.lo, &self.hi)
    }

    /// Bounding box of the vertex set (inclusive).
    pub fn vertex_bounds(&self) -> (&[i32], &[i32]) {
        (&self.vmin, &self.vmax)
    }

    /// Whether `v` lies on a face of the vertex bounding box.
    pub fn on_outer_face(&self, v: VertexId) -> bool {
        let c = self.coord(v);
        (0..self.dim).any(|a| c[a] == self.vmin[a] || c[a] == self.vmax[a])
    }

    pub fn l1(&self, u: VertexId, w: VertexId) -> u64 {
        l1_distance(self.coord(u), self.coord(w))
    }

    /// Vertices at sup-norm distance exactly `n` from `center`.
    pub fn shell(&self, center: &[i32], n: i32) -> Vec<VertexId> {
        (0..self.num_vertices())
            .filter(|&v| linf_distance(self.coord(v), center) == n as u64)
            .collect()
    }

    /// Multi-source BFS over edges accepted by `edge_ok`, stopping at depth `cap`.
    pub fn bfs(
        &self,
        sources: &[VertexId],
        edge_ok: impl Fn(EdgeId) -> bool,
        cap: Option<u32>,
    ) -> Vec<u32> {
        let mut dist = vec![UNREACHED; self.num_vertices()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s] == UNREACHED {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        let cap = cap.unwrap_or(UNREACHED - 1);
        while let Some(u) = queue.pop_front() {
            let du = dist[u];
            if du >= cap {
                continue;
            }
            for (w, e) in self.neighbors(u) {
                if dist[w] == UNREACHED && edge_ok(e) {
                    dist[w] = du + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }
}

pub fn l1_distance(a: &[i32], b: &[i32]) -> u64 {
    a.iter().zip(b).map(|(x, y)| u64::from(x.abs_diff(*y))).sum()
}

pub fn linf_distance(a: &[i32], b: &[i32]) -> u64 {
    a.iter().zip(b).map(|(x, y)| u64::from(x.abs_diff(*y))).max().unwrap_or(0)
}

struct DenseSet {
    lo: Vec<i32>,
    hi: Vec<i32>,
    strides: Vec<usize>,
    bits: Vec<bool>,
}

impl DenseSet {
    fn new(lo: &[i32], hi: &[i32], points: &[Vec<i32>]) -> Self {
        let dim = lo.len();
        let extent: Vec<usize> = (0..dim).map(|a| (hi[a] - lo[a] + 1).max(0) as usize).collect();
        let mut strides = vec![1usize; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * extent[a + 1];
        }
        let mut s = DenseSet {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            strides,
            bits: vec![false; extent.iter().product()],
        };
        for p in points {
            let i = s.index(p).unwrap();
            s.bits[i] = true;
        }
        s
    }

    fn index(&self, p: &[i32]) -> Option<usize> {
        let mut i = 0;
        for a in 0..self.lo.len() {
            if p[a] < self.lo[a] || p[a] > self.hi[a] {
                return None;
            }
            i += (p[a] - self.lo[a]) as usize * self.strides[a];
        }
        Some(i)
    }

    fn contains(&self, p: &[i32]) -> bool {
        self.index(p).is_some_and(|i| self.bits[i])
    }
}
