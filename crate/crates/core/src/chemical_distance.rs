//! Chemical (open-path) distance, canonical shortest bridges, and the
//! empirical tail harness for `D(v, w)` relative to `|v - w|_1`.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cluster_analysis::GiantCluster;
use crate::error::{Error, Result};
use crate::lattice_geometry::{LatticeGraph, VertexId};
use crate::percolation::{sample_bond, stream_seed, BondConfig};
use crate::stats::{fit_tail, quantile, TailFit};

const PAIR_DOMAIN: u64 = 0xAD15_0000_0000_0003;

/// Length and vertex sequence of a shortest open path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceResult {
    pub length: Option<u32>,
    pub path: Option<Vec<VertexId>>,
}

impl DistanceResult {
    pub fn unreachable() -> Self {
        Self { length: None, path: None }
    }

    fn from_path(path: Vec<VertexId>) -> Self {
        Self { length: Some(path.len() as u32 - 1), path: Some(path) }
    }

    pub fn is_reachable(&self) -> bool {
        self.length.is_some()
    }
}

/// Reusable state for repeated point-to-point queries on one graph.
pub struct DistanceSearcher {
    stamp: u32,
    mark: [Vec<u32>; 2],
    dist: [Vec<u32>; 2],
    parent: [Vec<u32>; 2],
    frontier: [Vec<VertexId>; 2],
    next: Vec<VertexId>,
}

impl DistanceSearcher {
    pub fn new(graph: &LatticeGraph) -> Self {
        let n = graph.num_vertices();
        Self {
            stamp: 0,
            mark: [vec![0; n], vec![0; n]],
            dist: [vec![0; n], vec![0; n]],
            parent: [vec![0; n], vec![0; n]],
            frontier: [Vec::new(), Vec::new()],
            next: Vec::new(),
        }
    }

    fn fresh_stamp(&mut self) -> u32 {
        if self.stamp == u32::MAX {
            self.mark[0].fill(0);
            self.mark[1].fill(0);
            self.stamp = 0;
        }
        self.stamp += 1;
        self.stamp
    }

    /// Bidirectional BFS over open edges, expanding the smaller frontier a
    /// whole layer at a time.
    pub fn query(&mut self, config: &BondConfig, v: VertexId, w: VertexId) -> DistanceResult {
        let graph = config.graph();
        if v == w {
            return DistanceResult::from_path(vec![v]);
        }
        let st = self.fresh_stamp();
        for (side, s) in [(0, v), (1, w)] {
            self.mark[side][s] = st;
            self.dist[side][s] = 0;
            self.parent[side][s] = s as u32;
            self.frontier[side].clear();
            self.frontier[side].push(s);
        }
        loop {
            if self.frontier[0].is_empty() || self.frontier[1].is_empty() {
                return DistanceResult::unreachable();
            }
            let side = usize::from(self.frontier[1].len() < self.frontier[0].len());
            let other = 1 - side;
            let mut best: Option<(u32, VertexId)> = None;
            self.next.clear();
            for i in 0..self.frontier[side].len() {
                let u = self.frontier[side][i];
                let du = self.dist[side][u];
                for (x, e) in graph.neighbors(u) {
                    if !config.is_open(e) || self.mark[side][x] == st {
                        continue;
                    }
                    self.mark[side][x] = st;
                    self.dist[side][x] = du + 1;
                    self.parent[side][x] = u as u32;
                    self.next.push(x);
                    if self.mark[other][x] == st {
                        let total = du + 1 + self.dist[other][x];
                        if best.map_or(true, |(b, _)| total < b) {
                            best = Some((total, x));
                        }
                    }
                }
            }
            if let Some((_, meet)) = best {
                return DistanceResult::from_path(self.splice(meet, v, w));
            }
            std::mem::swap(&mut self.frontier[side], &mut self.next);
        }
    }

    fn splice(&self, meet: VertexId, v: VertexId, w: VertexId) -> Vec<VertexId> {
        let mut left = vec![meet];
        let mut x = meet;
        while x != v {
            x = self.parent[0][x] as usize;
            left.push(x);
        }
        left.reverse();
        let mut x = meet;
        while x != w {
            x = self.parent[1][x] as usize;
            left.push(x);
        }
        left
    }
}

/// Shortest open path from `v` to `w`.
pub fn chemical_dist(config: &BondConfig, v: VertexId, w: VertexId) -> DistanceResult {
    DistanceSearcher::new(config.graph()).query(config, v, w)
}

/// Shortest open path from `a` to `b` inside the giant cluster; among all
/// shortest paths, the lexicographically smallest vertex sequence.
pub fn shortest_bridge(config: &BondConfig, giant: &GiantCluster, a: VertexId, b: VertexId) -> Result<DistanceResult> {
    BridgeSearcher::new(config.graph()).bridge(config, giant, a, b)
}

/// Reusable state for repeated [`shortest_bridge`] queries on one graph.
pub struct BridgeSearcher {
    stamp: u32,
    mark: Vec<u32>,
    dist: Vec<u32>,
    queue: VecDeque<VertexId>,
}

impl BridgeSearcher {
    pub fn new(graph: &LatticeGraph) -> Self {
        let n = graph.num_vertices();
        Self { stamp: 0, mark: vec![0; n], dist: vec![0; n], queue: VecDeque::new() }
    }

    pub fn bridge(&mut self, config: &BondConfig, giant: &GiantCluster, a: VertexId, b: VertexId) -> Result<DistanceResult> {
        if !giant.contains(a) || !giant.contains(b) {
            return Err(Error::arg("bridge endpoints must lie in the giant cluster"));
        }
        let graph = config.graph();
        if a == b {
            return Ok(DistanceResult::from_path(vec![a]));
        }
        if self.stamp == u32::MAX {
            self.mark.fill(0);
            self.stamp = 0;
        }
        self.stamp += 1;
        let st = self.stamp;
        // distances from b; once a is discovered every shorter layer is complete
        self.queue.clear();
        self.queue.push_back(b);
        self.mark[b] = st;
        self.dist[b] = 0;
        'search: while let Some(u) = self.queue.pop_front() {
            for (x, e) in graph.neighbors(u) {
                if config.is_open(e) && self.mark[x] != st {
                    self.mark[x] = st;
                    self.dist[x] = self.dist[u] + 1;
                    if x == a {
                        break 'search;
                    }
                    self.queue.push_back(x);
                }
            }
        }
        if self.mark[a] != st {
            return Ok(DistanceResult::unreachable());
        }
        let mut path = vec![a];
        let mut u = a;
        while u != b {
            let du = self.dist[u];
            u = graph
                .neighbors(u)
                .filter(|&(x, e)| config.is_open(e) && self.mark[x] == st && self.dist[x] + 1 == du)
                .map(|(x, _)| x)
                .min()
                .expect("BFS layers are consistent");
            path.push(u);
        }
        Ok(DistanceResult::from_path(path))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PairRow {
    pub seed: u64,
    pub v: VertexId,
    pub w: VertexId,
    pub l1: u64,
    pub d: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct ApTail {
    /// 99% quantile of `D / L1`.
    pub rho_hat: f64,
    /// `(m, P(D > m * L1))` on a grid of `m`.
    pub tail: Vec<(f64, f64)>,
    /// Log-linear decay of the ratio tail, when enough exceedances exist.
    pub theta: Option<TailFit>,
    pub pairs: usize,
    pub skipped_seeds: Vec<u64>,
    #[serde(skip)]
    pub rows: Vec<PairRow>,
}

impl ApTail {
    /// Fraction of pairs with `D > factor * L1`.
    pub fn fraction_above(&self, factor: f64) -> f64 {
        let k = self.rows.iter().filter(|r| f64::from(r.d) > factor * r.l1 as f64).count();
        k as f64 / self.rows.len().max(1) as f64
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Grid step of the ratio tail.
pub const TAIL_STEP: f64 = 0.05;

/// Samples `pairs_per_seed` uniform pairs of distinct giant vertices per
/// seed and records their chemical and `L1` distances.
pub fn ap_tail_experiment(
    graph: &Arc<LatticeGraph>,
    p: f64,
    pairs_per_seed: usize,
    seeds: &[u64],
) -> Result<ApTail> {
    let per_seed: Vec<Result<Option<Vec<PairRow>>>> = seeds
        .par_iter()
        .map(|&seed| {
            let config = sample_bond(graph, p, seed)?;
            let Some(giant) = GiantCluster::find(&config) else {
                return Ok(None);
            };
            let verts = giant.vertices();
            if verts.len() < 2 {
                return Ok(None);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, PAIR_DOMAIN));
            let mut searcher = DistanceSearcher::new(graph);
            let mut rows = Vec::with_capacity(pairs_per_seed);
            while rows.len() < pairs_per_seed {
                let v = verts[rng.gen_range(0..verts.len())];
                let w = verts[rng.gen_range(0..verts.len())];
                if v == w {
                    continue;
                }
                let d = searcher.query(&config, v, w).length.expect("giant is connected");
                rows.push(PairRow { seed, v, w, l1: graph.l1(v, w), d });
            }
            Ok(Some(rows))
        })
        .collect();
    let mut rows = Vec::new();
    let mut skipped_seeds = Vec::new();
    for (seed, r) in seeds.iter().zip(per_seed) {
        match r? {
            Some(mut v) => rows.append(&mut v),
            None => skipped_seeds.push(*seed),
        }
    }
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!("{} giant-cluster pairs", rows.len())));
    }
    let ratios: Vec<f64> = rows.iter().map(|r| f64::from(r.d) / r.l1 as f64).collect();
    let rho_hat = quantile(&ratios, 0.99)?;
    let max_ratio = ratios.iter().copied().fold(1.0, f64::max);
    let steps = ((max_ratio - 1.0) / TAIL_STEP).ceil() as usize + 1;
    let tail = (0..=steps)
        .map(|k| {
            let m = 1.0 + k as f64 * TAIL_STEP;
            let above = ratios.iter().filter(|&&r| r > m).count();
            (m, above as f64 / ratios.len() as f64)
        })
        .collect();
    // P(bin > n) = P(ratio > 1 + n * step)
    let bins: Vec<u32> = ratios.iter().map(|&r| ((r - 1.0) / TAIL_STEP).ceil().max(0.0) as u32).collect();
    let theta = fit_tail(&bins, 1, 10, 200, stream_seed(seeds[0], PAIR_DOMAIN + 1))
        .ok()
        .map(|mut f| {
            for x in [&mut f.rate.estimate, &mut f.rate.lo, &mut f.rate.hi] {
                *x /= TAIL_STEP;
            }
            f
        });
    Ok(ApTail { rho_hat, tail, theta, pairs: rows.len(), skipped_seeds, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice_geometry::UNREACHED;

    fn square(m: i32) -> Arc<LatticeGraph> {
        Arc::new(LatticeGraph::lattice_box(2, m).unwrap())
    }

    fn at(g: &LatticeGraph, p: [i32; 2]) -> VertexId {
        g.vertex_at(&p).unwrap()
    }

    fn close(g: &LatticeGraph, pairs: &[([i32; 2], [i32; 2])]) -> Vec<usize> {
        pairs.iter().map(|(a, b)| g.edge_between(at(g, *a), at(g, *b)).unwrap()).collect()
    }

    /// Plain BFS oracle distance.
    fn bfs_dist(c: &BondConfig, v: VertexId, w: VertexId) -> Option<u32> {
        let d = c.graph().bfs(&[v], |e| c.is_open(e), None)[w];
        (d != UNREACHED).then_some(d)
    }

    fn check_path(c: &BondConfig, r: &DistanceResult) {
        let path = r.path.as_ref().unwrap();
        assert_eq!(path.len() as u32 - 1, r.length.unwrap());
        let mut seen = std::collections::HashSet::new();
        assert!(path.iter().all(|v| seen.insert(*v)));
        for win in path.windows(2) {
            let e = c.graph().edge_between(win[0], win[1]).unwrap();
            assert!(c.is_open(e));
        }
    }

    #[test]
    fn all_open_is_l1() {
        let g = square(5);
        let c = BondConfig::all_open(Arc::clone(&g));
        let r = chemical_dist(&c, at(&g, [0, 0]), at(&g, [3, 4]));
        assert_eq!(r.length, Some(7));
        check_path(&c, &r);
    }

    #[test]
    fn separated_is_unreachable() {
        let g = square(3);
        let v = at(&g, [0, 0]);
        let cut: Vec<_> = g.neighbors(v).map(|(_, e)| e).collect();
        let c = BondConfig::all_open(Arc::clone(&g)).with_closed(&cut);
        assert!(!chemical_dist(&c, v, at(&g, [2, 2])).is_reachable());
    }

    #[test]
    fn corridor_with_closed_edge() {
        // 6 x 2 strip: 12 vertices; close the middle bottom edge
        let pts: Vec<Vec<i32>> = (0..6).flat_map(|x| (0..2).map(move |y| vec![x, y])).collect();
        let g = Arc::new(LatticeGraph::from_points(2, &pts).unwrap());
        assert_eq!(g.num_vertices(), 12);
        let c = BondConfig::all_open(Arc::clone(&g)).with_closed(&close(&g, &[([2, 0], [3, 0])]));
        let (v, w) = (at(&g, [0, 0]), at(&g, [5, 0]));
        let r = chemical_dist(&c, v, w);
        assert_eq!(r.length, bfs_dist(&c, v, w));
        assert_eq!(r.length, Some(5 + 2));
        check_path(&c, &r);
    }

    #[test]
    fn matches_bfs_on_random_configs() {
        let g = square(12);
        for seed in 0..20 {
            let c = sample_bond(&g, 0.6, seed).unwrap();
            let mut s = DistanceSearcher::new(&g);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..30 {
                let v = rng.gen_range(0..g.num_vertices());
                let w = rng.gen_range(0..g.num_vertices());
                let r = s.query(&c, v, w);
                assert_eq!(r.length, bfs_dist(&c, v, w));
                if r.is_reachable() {
                    check_path(&c, &r);
                }
            }
        }
    }

    #[test]
    fn bridge_examples() {
        let g = square(4);
        let c = BondConfig::all_open(Arc::clone(&g));
        let giant = GiantCluster::find(&c).unwrap();
        let a = at(&g, [0, 0]);
        assert_eq!(shortest_bridge(&c, &giant, a, a).unwrap().length, Some(0));
        let b = at(&g, [1, 0]);
        assert_eq!(shortest_bridge(&c, &giant, a, b).unwrap().path, Some(vec![a, b]));
        // both direct corner routes to (1,1) blocked by closed edges
        let c = c.with_closed(&close(&g, &[([0, 0], [1, 0]), ([0, 1], [1, 1])]));
        let giant = GiantCluster::find(&c).unwrap();
        let r = shortest_bridge(&c, &giant, a, at(&g, [1, 1])).unwrap();
        assert_eq!(r.length, Some(4));
        check_path(&c, &r);
        // two length-4 detours; the southern one is lexicographically first
        let want: Vec<_> = [[0, 0], [0, -1], [1, -1], [1, 0], [1, 1]].iter().map(|p| at(&g, *p)).collect();
        assert_eq!(r.path.unwrap(), want);
        let iso = at(&g, [3, 3]);
        let cut: Vec<_> = g.neighbors(iso).map(|(_, e)| e).collect();
        let c = c.with_closed(&cut);
        let giant = GiantCluster::find(&c).unwrap();
        assert!(shortest_bridge(&c, &giant, a, iso).is_err());
    }

    /// Enumerates every shortest path by DFS on BFS layers and returns the
    /// lexicographically smallest one.
    fn lex_min_shortest(c: &BondConfig, a: VertexId, b: VertexId) -> Vec<VertexId> {
        let g = c.graph();
        let from_b = g.bfs(&[b], |e| c.is_open(e), None);
        let mut all = Vec::new();
        fn rec(c: &BondConfig, d: &[u32], u: usize, b: usize, cur: &mut Vec<usize>, all: &mut Vec<Vec<usize>>) {
            if u == b {
                all.push(cur.clone());
                return;
            }
            for (x, e) in c.graph().neighbors(u) {
                if c.is_open(e) && d[x] != UNREACHED && d[x] + 1 == d[u] {
                    cur.push(x);
                    rec(c, d, x, b, cur, all);
                    cur.pop();
                }
            }
        }
        rec(c, &from_b, a, b, &mut vec![a], &mut all);
        all.into_iter().min().unwrap()
    }

    #[test]
    fn bridge_is_lexicographic_minimum() {
        let g = square(5);
        for seed in 0..10 {
            let c = sample_bond(&g, 0.75, seed).unwrap();
            let Some(giant) = GiantCluster::find(&c) else { continue };
            let verts = giant.vertices();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..10 {
                let a = verts[rng.gen_range(0..verts.len())];
                let b = verts[rng.gen_range(0..verts.len())];
                let r = shortest_bridge(&c, &giant, a, b).unwrap();
                assert_eq!(r.length, bfs_dist(&c, a, b));
                assert_eq!(r.path.unwrap(), lex_min_shortest(&c, a, b));
            }
        }
    }

    #[test]
    fn fully_open_harness() {
        let g = square(10);
        let t = ap_tail_experiment(&g, 1.0, 200, &[1, 2]).unwrap();
        assert_eq!(t.rho_hat, 1.0);
        assert_eq!(t.pairs, 400);
        assert!(t.tail.iter().all(|&(_, s)| s == 0.0));
        assert!(t.theta.is_none());
        assert_eq!(t.fraction_above(1.0), 0.0);
    }

    #[test]
    fn tail_curve_nonincreasing() {
        let g = square(20);
        let t = ap_tail_experiment(&g, 0.65, 300, &[5, 6, 7]).unwrap();
        assert!(t.rho_hat >= 1.0);
        assert!(t.tail.windows(2).all(|w| w[1].1 <= w[0].1));
        assert!(t.rows.iter().all(|r| u64::from(r.d) >= r.l1));
    }

    #[test]
    fn no_giant_is_insufficient() {
        let g = square(10);
        assert!(matches!(
            ap_tail_experiment(&g, 0.05, 10, &[1]),
            Err(Error::InsufficientData(_))
        ));
    }
}
