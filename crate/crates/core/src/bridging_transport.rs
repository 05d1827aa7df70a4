//! Transport of a path measure `mu` on the full graph to a measure `mu'` on
//! the giant cluster by bridging over gaps, with projection statistics and
//! the energy-comparison bounds.

use std::cell::{Cell, RefCell};
use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chemical_distance::BridgeSearcher;
use crate::cluster_analysis::{gaps, inner_k_boundary_of, strong_open_decomposition, GapSet, GiantCluster, StrongOpenDecomposition};
use crate::error::{Error, Result};
use crate::flows_energy::{path_measure_to_flow, sample_outward_paths, EnergyGauge, PathMeasure};
use crate::lattice_geometry::{EdgeId, LatticeGraph, VertexId};
use crate::percolation::{sample_bond, stream_seed, BondConfig};

const MU_DOMAIN: u64 = 0x3A7B_0000_0000_0004;

/// Relative slack for floating-point summation in the energy checks.
pub const ROUNDOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Shortest,
    Boundary { k: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BridgeEvent {
    pub path_id: usize,
    pub gap_id: Option<usize>,
    pub a: VertexId,
    pub b: VertexId,
    /// The replaced stretch of the original path, `a` to `b` inclusive.
    pub removed: Vec<VertexId>,
    pub bridge: Vec<VertexId>,
    pub strategy: &'static str,
}

#[derive(Debug, Clone)]
pub struct BridgedPath {
    pub original: Vec<VertexId>,
    /// Walk after splicing, before loop erasure.
    pub spliced: Vec<VertexId>,
    /// Loop-erased walk.
    pub path: Vec<VertexId>,
    pub events: Vec<BridgeEvent>,
    /// Index ranges `(i, j)` of `original` replaced by bridges.
    pub replaced: Vec<(usize, usize)>,
}

impl BridgedPath {
    /// Edges of the original outside replaced ranges appear in the spliced walk.
    pub fn identity_holds(&self) -> bool {
        let steps: HashSet<(VertexId, VertexId)> =
            self.spliced.windows(2).map(|w| (w[0].min(w[1]), w[0].max(w[1]))).collect();
        (0..self.original.len().saturating_sub(1))
            .filter(|&t| !self.replaced.iter().any(|&(i, j)| i <= t && t < j))
            .all(|t| {
                let (u, w) = (self.original[t], self.original[t + 1]);
                steps.contains(&(u.min(w), u.max(w)))
            })
    }
}

/// Chronological loop erasure.
pub fn loop_erase(walk: &[VertexId]) -> Vec<VertexId> {
    let mut out: Vec<VertexId> = Vec::with_capacity(walk.len());
    let mut pos: HashMap<VertexId, usize> = HashMap::new();
    for &v in walk {
        if let Some(&i) = pos.get(&v) {
            for u in out.drain(i + 1..) {
                pos.remove(&u);
            }
        } else {
            pos.insert(v, out.len());
            out.push(v);
        }
    }
    out
}

/// Per-configuration state shared by all transported paths.
pub struct TransportContext<'a> {
    config: &'a BondConfig,
    giant: GiantCluster,
    gaps: GapSet,
    strategy: Strategy,
    strong: Option<StrongOpenDecomposition>,
    searcher: RefCell<BridgeSearcher>,
    boundary_cache: RefCell<HashMap<usize, Vec<VertexId>>>,
    fallbacks: Cell<usize>,
}

impl<'a> TransportContext<'a> {
    pub fn new(config: &'a BondConfig, strategy: Strategy) -> Result<Self> {
        let giant = GiantCluster::find(config).ok_or_else(|| Error::InsufficientData("no giant cluster".into()))?;
        let gaps = gaps(config, &giant.labeling, Some(giant.id));
        let strong = match strategy {
            Strategy::Shortest => None,
            Strategy::Boundary { k } => strong_open_decomposition(config, k)
                // the strongly-open cluster must sit inside the giant
                .filter(|d| (0..d.in_strong.len()).all(|v| !d.in_strong[v] || giant.contains(v))),
        };
        Ok(Self {
            config,
            giant,
            gaps,
            strategy,
            strong,
            searcher: RefCell::new(BridgeSearcher::new(config.graph())),
            boundary_cache: RefCell::new(HashMap::new()),
            fallbacks: Cell::new(0),
        })
    }

    pub fn giant(&self) -> &GiantCluster {
        &self.giant
    }

    pub fn gaps(&self) -> &GapSet {
        &self.gaps
    }

    pub fn config(&self) -> &BondConfig {
        self.config
    }

    /// Boundary-strategy segments that fell back to shortest bridges.
    pub fn fallbacks(&self) -> usize {
        self.fallbacks.get()
    }

    fn edge_open(&self, u: VertexId, w: VertexId) -> bool {
        self.config.graph().edge_between(u, w).is_some_and(|e| self.config.is_open(e))
    }

    /// Replaces every off-giant excursion and closed step of `path[lo..=hi]`
    /// by a shortest bridge; `walk` must end at `path[lo]`.
    #[allow(clippy::too_many_arguments)]
    fn splice_shortest(
        &self,
        path: &[VertexId],
        lo: usize,
        hi: usize,
        path_id: usize,
        tag: &'static str,
        walk: &mut Vec<VertexId>,
        out: &mut (Vec<BridgeEvent>, Vec<(usize, usize)>),
    ) -> Result<()> {
        let mut i = lo;
        while i < hi {
            let mut j = i + 1;
            while !self.giant.contains(path[j]) {
                j += 1;
            }
            if j == i + 1 && self.edge_open(path[i], path[j]) {
                walk.push(path[j]);
            } else {
                let bridge = self
                    .searcher
                    .borrow_mut()
                    .bridge(self.config, &self.giant, path[i], path[j])?
                    .path
                    .expect("giant cluster is connected");
                walk.extend_from_slice(&bridge[1..]);
                out.0.push(BridgeEvent {
                    path_id,
                    gap_id: (i + 1..j).find_map(|t| self.gaps.gap_of(path[t])),
                    a: path[i],
                    b: path[j],
                    removed: path[i..=j].to_vec(),
                    bridge,
                    strategy: tag,
                });
                out.1.push((i, j));
            }
            i = j;
        }
        Ok(())
    }

    fn inner_boundary(&self, comp: usize, strong: &StrongOpenDecomposition, k: u32) -> Vec<VertexId> {
        self.boundary_cache
            .borrow_mut()
            .entry(comp)
            .or_insert_with(|| inner_k_boundary_of(&strong.components[comp], k, self.config.graph()))
            .clone()
    }

    /// BFS shortest path inside `set` over open edges.
    fn path_within(&self, set: &[VertexId], from: VertexId, to: VertexId) -> Option<Vec<VertexId>> {
        let graph = self.config.graph();
        let inside = |v: VertexId| set.binary_search(&v).is_ok();
        if !inside(from) || !inside(to) {
            return None;
        }
        let mut parent: HashMap<VertexId, VertexId> = HashMap::from([(from, from)]);
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            if u == to {
                let mut p = vec![to];
                let mut x = to;
                while x != from {
                    x = parent[&x];
                    p.push(x);
                }
                p.reverse();
                return Some(p);
            }
            for (w, e) in graph.neighbors(u) {
                if inside(w) && self.config.is_open(e) && !parent.contains_key(&w) {
                    parent.insert(w, u);
                    queue.push_back(w);
                }
            }
        }
        None
    }

    /// `mu -> mu'` image of one path.
    pub fn bridge_path(&self, path: &[VertexId], path_id: usize) -> Result<BridgedPath> {
        let graph = self.config.graph();
        let (Some(&first), Some(&last)) = (path.first(), path.last()) else {
            return Err(Error::arg("empty path"));
        };
        if !self.giant.contains(first) || !self.giant.contains(last) {
            return Err(Error::arg("path endpoints must lie in the giant cluster"));
        }
        if path.windows(2).any(|w| graph.edge_between(w[0], w[1]).is_none()) {
            return Err(Error::arg("path steps must be lattice edges"));
        }
        let end = path.len() - 1;
        let mut walk = vec![first];
        let mut out = (Vec::new(), Vec::new());
        match (self.strategy, &self.strong) {
            (Strategy::Shortest, _) => self.splice_shortest(path, 0, end, path_id, "shortest", &mut walk, &mut out)?,
            (Strategy::Boundary { .. }, None) => {
                if end > 0 {
                    self.fallbacks.set(self.fallbacks.get() + 1);
                }
                self.splice_shortest(path, 0, end, path_id, "boundary-fallback", &mut walk, &mut out)?;
            }
            (Strategy::Boundary { k }, Some(strong)) => {
                let mut i = 0;
                while i < end {
                    let t = i + 1;
                    let Some(comp) = strong.component_of(path[t]) else {
                        // edges at the strongly-open cluster are open
                        walk.push(path[t]);
                        i = t;
                        continue;
                    };
                    let l = (t..=end).rev().find(|&x| strong.component_of(path[x]) == Some(comp)).unwrap();
                    let start = if strong.component_of(path[i]) == Some(comp) { i } else { t };
                    let needs = (start..=l).any(|x| !self.giant.contains(path[x]))
                        || (i..l).any(|x| !self.edge_open(path[x], path[x + 1]));
                    if !needs {
                        walk.extend_from_slice(&path[t..=l]);
                        i = l;
                        continue;
                    }
                    let routed = if start == t && l < end {
                        let u = self.inner_boundary(comp, strong, k);
                        self.path_within(&u, path[t], path[l])
                            .filter(|b| b.iter().all(|&v| self.giant.contains(v)))
                    } else {
                        None
                    };
                    match routed {
                        Some(bridge) => {
                            walk.extend_from_slice(&bridge);
                            out.0.push(BridgeEvent {
                                path_id,
                                gap_id: (t..=l).find_map(|x| self.gaps.gap_of(path[x])),
                                a: path[t],
                                b: path[l],
                                removed: path[t..=l].to_vec(),
                                bridge,
                                strategy: "boundary",
                            });
                            out.1.push((t, l));
                            i = l;
                        }
                        None => {
                            self.fallbacks.set(self.fallbacks.get() + 1);
                            let hi = (l..=end).find(|&x| self.giant.contains(path[x])).unwrap();
                            self.splice_shortest(path, i, hi, path_id, "boundary-fallback", &mut walk, &mut out)?;
                            i = hi;
                        }
                    }
                }
            }
        }
        let erased = loop_erase(&walk);
        Ok(BridgedPath { original: path.to_vec(), spliced: walk, path: erased, events: out.0, replaced: out.1 })
    }
}

/// Pushforward `mu' = mu o phi^-1`; colliding images merge their weights.
#[derive(Debug, Clone)]
pub struct Transport {
    pub measure: PathMeasure,
    pub bridged: Vec<BridgedPath>,
}

impl Transport {
    pub fn events(&self) -> impl Iterator<Item = &BridgeEvent> {
        self.bridged.iter().flat_map(|b| b.events.iter())
    }

    /// Rows `(path id, gap id, a, b, removed length, bridge length, strategy)`.
    pub fn write_events_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["path_id", "gap_id", "a", "b", "removed_len", "bridge_len", "strategy"])?;
        for ev in self.events() {
            out.write_record([
                ev.path_id.to_string(),
                ev.gap_id.map_or_else(String::new, |g| g.to_string()),
                ev.a.to_string(),
                ev.b.to_string(),
                (ev.removed.len() - 1).to_string(),
                (ev.bridge.len() - 1).to_string(),
                ev.strategy.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn transport_measure(mu: &PathMeasure, ctx: &TransportContext<'_>) -> Result<Transport> {
    if !Arc::ptr_eq(mu.graph_arc(), ctx.config.graph_arc()) && mu.graph().num_edges() != ctx.config.graph().num_edges() {
        return Err(Error::arg("measure and configuration live on different graphs"));
    }
    let mut bridged = Vec::with_capacity(mu.len());
    let mut index: HashMap<Vec<VertexId>, usize> = HashMap::new();
    let mut paths: Vec<Vec<VertexId>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (id, (path, w)) in mu.iter().enumerate() {
        let b = ctx.bridge_path(path, id)?;
        match index.get(&b.path) {
            Some(&k) => weights[k] += w,
            None => {
                index.insert(b.path.clone(), paths.len());
                paths.push(b.path.clone());
                weights.push(w);
            }
        }
        bridged.push(b);
    }
    let measure = PathMeasure::new(Arc::clone(mu.graph_arc()), mu.source(), mu.sinks().to_vec(), paths, weights)?;
    Ok(Transport { measure, bridged })
}

/// `T(f)` for every edge carrying load in `mu` or `mu'`.
fn projection_sets(mu: &PathMeasure, transport: &Transport) -> HashMap<EdgeId, BTreeSet<EdgeId>> {
    let graph = mu.graph();
    let edges_of = |p: &[VertexId]| -> Vec<EdgeId> { p.windows(2).filter_map(|w| graph.edge_between(w[0], w[1])).collect() };
    let mut t: HashMap<EdgeId, BTreeSet<EdgeId>> = HashMap::new();
    for ev in transport.events() {
        let removed = edges_of(&ev.removed);
        for f in edges_of(&ev.bridge) {
            t.entry(f).or_default().extend(removed.iter().copied());
        }
    }
    let load = mu.edge_load();
    let load2 = transport.measure.edge_load();
    for f in 0..graph.num_edges() {
        if load[f] > 0.0 || load2[f] > 0.0 {
            t.entry(f).or_default().insert(f);
        }
    }
    t
}

/// `S(e)` from `T`.
fn invert(t: &HashMap<EdgeId, BTreeSet<EdgeId>>) -> HashMap<EdgeId, BTreeSet<EdgeId>> {
    let mut s: HashMap<EdgeId, BTreeSet<EdgeId>> = HashMap::new();
    for (&f, es) in t {
        for &e in es {
            s.entry(e).or_default().insert(f);
        }
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyComparison {
    /// `sum_f F'(f)^2`
    pub quadratic_lhs: f64,
    /// `sum_f (sum_{e in T(f)} F(e))^2`
    pub projected_square: f64,
    /// `sum_f |T(f)| sum_{e in T(f)} F(e)^2`
    pub cauchy_schwarz: f64,
    /// `sum_e F(e)^2 sum_{f in S(e)} |T(f)|`
    pub quadratic_rhs: f64,
    /// `H_g(F')`
    pub gauge_lhs: f64,
    /// `sum_e g(F(e)) (sum_{f in S(e)} |T(f)|)^(l-1)`
    pub gauge_rhs: f64,
    pub max_s: usize,
    pub max_t: usize,
}

fn le(a: f64, b: f64) -> bool {
    a <= b + ROUNDOFF * b.abs().max(a.abs())
}

/// Evaluates both comparison chains and fails on any violation.
pub fn energy_comparison(mu: &PathMeasure, transport: &Transport, gauge: &EnergyGauge) -> Result<EnergyComparison> {
    let f_load = mu.edge_load();
    let g_load = transport.measure.edge_load();
    let t = projection_sets(mu, transport);
    let s = invert(&t);
    let mut keys: Vec<EdgeId> = t.keys().copied().collect();
    keys.sort_unstable();
    let mut rep = EnergyComparison {
        quadratic_lhs: 0.0,
        projected_square: 0.0,
        cauchy_schwarz: 0.0,
        quadratic_rhs: 0.0,
        gauge_lhs: 0.0,
        gauge_rhs: 0.0,
        max_s: s.values().map(BTreeSet::len).max().unwrap_or(0),
        max_t: t.values().map(BTreeSet::len).max().unwrap_or(0),
    };
    for &f in &keys {
        let tf = &t[&f];
        let sum: f64 = tf.iter().map(|&e| f_load[e]).sum();
        if !le(g_load[f], sum) {
            return Err(Error::EnergyComparison(format!("load on edge {f} is {} > projected {}", g_load[f], sum)));
        }
        rep.quadratic_lhs += g_load[f] * g_load[f];
        rep.gauge_lhs += gauge.eval(g_load[f]);
        rep.projected_square += sum * sum;
        rep.cauchy_schwarz += tf.len() as f64 * tf.iter().map(|&e| f_load[e] * f_load[e]).sum::<f64>();
    }
    let mut es: Vec<EdgeId> = s.keys().copied().collect();
    es.sort_unstable();
    for &e in &es {
        let compound: usize = s[&e].iter().map(|f| t[f].len()).sum();
        rep.quadratic_rhs += f_load[e] * f_load[e] * compound as f64;
        rep.gauge_rhs += gauge.eval(f_load[e]) * (compound as f64).powf(gauge.l - 1.0);
    }
    let checks = [
        ("sum F'^2 <= sum (sum_T F)^2", rep.quadratic_lhs, rep.projected_square),
        ("Cauchy-Schwarz step", rep.projected_square, rep.cauchy_schwarz),
        ("quadratic comparison", rep.quadratic_lhs, rep.quadratic_rhs),
        ("gauge comparison", rep.gauge_lhs, rep.gauge_rhs),
    ];
    for (name, lhs, rhs) in checks {
        if !le(lhs, rhs) {
            return Err(Error::EnergyComparison(format!("{name}: {lhs} > {rhs}")));
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeProjection {
    pub edge: EdgeId,
    pub s_size: usize,
    /// `sum_{f in S(e)} |T(f)|`
    pub compound: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistanceBin {
    pub distance: u64,
    pub projected: usize,
    pub candidates: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionStats {
    pub edges: Vec<EdgeProjection>,
    /// Non-identity projections by edge distance, for the tail of `P(e -> f)`.
    pub by_distance: Vec<DistanceBin>,
}

/// Edge distance: smallest `L1` distance between endpoints.
pub fn edge_distance(graph: &LatticeGraph, e: EdgeId, f: EdgeId) -> u64 {
    let (a, b) = graph.edge(e);
    let (c, d) = graph.edge(f);
    [graph.l1(a, c), graph.l1(a, d), graph.l1(b, c), graph.l1(b, d)].into_iter().min().unwrap()
}

pub fn projection_stats(mu: &PathMeasure, transport: &Transport, sample_edges: &[EdgeId], max_distance: u64) -> ProjectionStats {
    let graph = mu.graph();
    let t = projection_sets(mu, transport);
    let s = invert(&t);
    let mut bins: Vec<DistanceBin> =
        (0..=max_distance).map(|distance| DistanceBin { distance, projected: 0, candidates: 0 }).collect();
    let mut edges = Vec::with_capacity(sample_edges.len());
    for &e in sample_edges {
        let empty = BTreeSet::new();
        let se = s.get(&e).unwrap_or(&empty);
        let compound = se.iter().map(|f| t[f].len()).sum::<usize>().max(1);
        edges.push(EdgeProjection { edge: e, s_size: se.len().max(1), compound });
        for f in 0..graph.num_edges() {
            if f == e {
                continue;
            }
            let r = edge_distance(graph, e, f);
            if r <= max_distance {
                bins[r as usize].candidates += 1;
                if se.contains(&f) {
                    bins[r as usize].projected += 1;
                }
            }
        }
    }
    ProjectionStats { edges, by_distance: bins }
}

/// One realized configuration of the bridging experiment.
#[derive(Debug, Clone, Serialize)]
pub struct BridgeSample {
    pub seed: u64,
    pub p: f64,
    pub paths: usize,
    pub events: usize,
    pub fallbacks: usize,
    /// Every `mu'` path uses open edges of the giant cluster only.
    pub support_ok: bool,
    pub identity_ok: bool,
    pub conservation_error: f64,
    pub quadratic: EnergyComparison,
    pub gauge: EnergyComparison,
    #[serde(skip)]
    pub transport: Transport,
    #[serde(skip)]
    pub mu: PathMeasure,
}

/// Giant vertex closest (in `L1`) to `centre`, smallest index on ties.
pub fn central_giant_vertex(graph: &LatticeGraph, giant: &GiantCluster, centre: &[i32]) -> Option<VertexId> {
    (0..graph.num_vertices())
        .filter(|&v| giant.contains(v))
        .min_by_key(|&v| (crate::lattice_geometry::l1_distance(graph.coord(v), centre), v))
}

/// Base measure: `n_paths` outward paths from the central giant vertex,
/// each truncated at its last giant vertex, with random weights.
pub fn base_measure(config: &BondConfig, giant: &GiantCluster, n_paths: usize, seed: u64) -> Result<PathMeasure> {
    let graph = config.graph();
    let centre = vec![0; graph.dim()];
    let v0 = central_giant_vertex(graph, giant, &centre).ok_or_else(|| Error::InsufficientData("empty giant".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, MU_DOMAIN));
    let raw = sample_outward_paths(graph, v0, n_paths, usize::MAX, &mut rng);
    let mut paths = Vec::new();
    let mut weights = Vec::new();
    for mut p in raw {
        let w: f64 = rng.gen_range(0.5..1.5);
        let cut = p.iter().rposition(|&v| giant.contains(v)).unwrap();
        p.truncate(cut + 1);
        if p.len() > 1 {
            paths.push(p);
            weights.push(w);
        }
    }
    if paths.is_empty() {
        return Err(Error::InsufficientData("no path leaves the source inside the giant".into()));
    }
    PathMeasure::normalized(Arc::clone(config.graph_arc()), v0, paths, weights)
}

/// Samples a configuration, transports the base measure and runs every check.
pub fn bridge_sample(
    graph: &Arc<LatticeGraph>,
    p: f64,
    seed: u64,
    strategy: Strategy,
    n_paths: usize,
    gauge: &EnergyGauge,
) -> Result<BridgeSample> {
    let config = sample_bond(graph, p, seed)?;
    let ctx = TransportContext::new(&config, strategy)?;
    let mu = base_measure(&config, ctx.giant(), n_paths, seed)?;
    let transport = transport_measure(&mu, &ctx)?;
    let support_ok = transport.measure.paths().iter().all(|path| {
        path.iter().all(|&v| ctx.giant().contains(v)) && path.windows(2).all(|w| ctx.edge_open(w[0], w[1]))
    });
    let identity_ok = transport.bridged.iter().all(BridgedPath::identity_holds);
    let conservation_error = path_measure_to_flow(&transport.measure).conservation_error();
    let quadratic = energy_comparison(&mu, &transport, &EnergyGauge::quadratic())?;
    let gauge = energy_comparison(&mu, &transport, gauge)?;
    Ok(BridgeSample {
        seed,
        p,
        paths: mu.len(),
        events: transport.events().count(),
        fallbacks: ctx.fallbacks(),
        support_ok,
        identity_ok,
        conservation_error,
        quadratic,
        gauge,
        transport,
        mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(m: i32) -> Arc<LatticeGraph> {
        Arc::new(LatticeGraph::lattice_box(2, m).unwrap())
    }

    fn at(g: &LatticeGraph, p: [i32; 2]) -> VertexId {
        g.vertex_at(&p).unwrap()
    }

    fn straight(g: &LatticeGraph, from: i32, to: i32) -> Vec<VertexId> {
        (from..=to).map(|x| at(g, [x, 0])).collect()
    }

    fn isolate(g: &LatticeGraph, v: VertexId, c: BondConfig) -> BondConfig {
        let cut: Vec<_> = g.neighbors(v).map(|(_, e)| e).collect();
        c.with_closed(&cut)
    }

    #[test]
    fn loop_erasure() {
        assert_eq!(loop_erase(&[1, 2, 3, 2, 4]), vec![1, 2, 4]);
        assert_eq!(loop_erase(&[1, 2, 3, 1, 5]), vec![1, 5]);
        assert_eq!(loop_erase(&[1, 2, 3]), vec![1, 2, 3]);
    }

    #[test]
    fn all_open_is_identity() {
        let g = square(6);
        let c = BondConfig::all_open(Arc::clone(&g));
        for strategy in [Strategy::Shortest, Strategy::Boundary { k: 2 }] {
            let ctx = TransportContext::new(&c, strategy).unwrap();
            let p = straight(&g, 0, 5);
            let b = ctx.bridge_path(&p, 0).unwrap();
            assert_eq!(b.path, p);
            assert!(b.events.is_empty());
        }
    }

    #[test]
    fn isolated_vertex_detour() {
        let g = square(6);
        let u = at(&g, [2, 0]);
        let c = isolate(&g, u, BondConfig::all_open(Arc::clone(&g)));
        let ctx = TransportContext::new(&c, Strategy::Shortest).unwrap();
        let p = straight(&g, 0, 5);
        let b = ctx.bridge_path(&p, 0).unwrap();
        assert_eq!(b.path.len(), p.len() + 2);
        assert_eq!(b.events.len(), 1);
        let ev = &b.events[0];
        assert_eq!((ev.a, ev.b), (at(&g, [1, 0]), at(&g, [3, 0])));
        // BFS oracle for the detour length
        let d = g.bfs(&[ev.a], |e| c.is_open(e), None)[ev.b];
        assert_eq!(ev.bridge.len() as u32 - 1, d);
        assert_eq!(d, 4);
        assert!(b.identity_holds());
        assert_eq!(ev.gap_id, ctx.gaps().gap_of(u));
    }

    #[test]
    fn projection_of_swallowed_edges() {
        let g = square(6);
        let u = at(&g, [2, 0]);
        let c = isolate(&g, u, BondConfig::all_open(Arc::clone(&g)));
        let ctx = TransportContext::new(&c, Strategy::Shortest).unwrap();
        let p = straight(&g, 0, 5);
        let mu = PathMeasure::normalized(Arc::clone(&g), p[0], vec![p.clone()], vec![1.0]).unwrap();
        let tr = transport_measure(&mu, &ctx).unwrap();
        let e1 = g.edge_between(at(&g, [1, 0]), u).unwrap();
        let e2 = g.edge_between(u, at(&g, [3, 0])).unwrap();
        let detour: BTreeSet<EdgeId> = tr.bridged[0].events[0].bridge.windows(2).map(|w| g.edge_between(w[0], w[1]).unwrap()).collect();
        let s = invert(&projection_sets(&mu, &tr));
        for e in [e1, e2] {
            let mut want = detour.clone();
            want.insert(e);
            assert_eq!(s[&e], want);
        }
        let kept = g.edge_between(p[0], p[1]).unwrap();
        assert_eq!(s[&kept], BTreeSet::from([kept]));
        let stats = projection_stats(&mu, &tr, &[e1, kept], 6);
        assert_eq!(stats.edges[1].s_size, 1);
        assert_eq!(stats.edges[0].s_size, 5);
    }

    /// Hand expansion: point mass on a 5-edge path with one isolated vertex.
    #[test]
    fn point_mass_comparison_by_hand() {
        let g = square(6);
        let u = at(&g, [2, 0]);
        let c = isolate(&g, u, BondConfig::all_open(Arc::clone(&g)));
        let ctx = TransportContext::new(&c, Strategy::Shortest).unwrap();
        let p = straight(&g, 0, 5);
        let mu = PathMeasure::normalized(Arc::clone(&g), p[0], vec![p], vec![1.0]).unwrap();
        let tr = transport_measure(&mu, &ctx).unwrap();
        let rep = energy_comparison(&mu, &tr, &EnergyGauge::quadratic()).unwrap();
        // mu' is a 7-edge path: lhs = 7; the detour's 4 edges each have
        // T(f) = {f, e1, e2} (|T| = 3) and T(e) = {e} for the 3 kept edges;
        // S(e1) = S(e2) = {e, 4 detour edges}: compound 1 + 4*3 = 13.
        assert_eq!(rep.quadratic_lhs, 7.0);
        assert_eq!(rep.quadratic_rhs, 3.0 + 2.0 * 13.0);
        assert_eq!(rep.cauchy_schwarz, rep.quadratic_rhs);
    }

    #[test]
    fn all_open_comparison_is_equality() {
        let g = square(8);
        let c = BondConfig::all_open(Arc::clone(&g));
        let ctx = TransportContext::new(&c, Strategy::Shortest).unwrap();
        let giant = GiantCluster::find(&c).unwrap();
        let mu = base_measure(&c, &giant, 10, 3).unwrap();
        let tr = transport_measure(&mu, &ctx).unwrap();
        assert_eq!(tr.measure.paths(), mu.paths());
        let gauge = EnergyGauge::psi(2, 1.5, 4.0).unwrap();
        let rep = energy_comparison(&mu, &tr, &gauge).unwrap();
        assert!((rep.quadratic_lhs - rep.quadratic_rhs).abs() < 1e-15);
        assert!((rep.gauge_lhs - rep.gauge_rhs).abs() < 1e-15);
    }

    #[test]
    fn endpoint_outside_giant_is_rejected() {
        let g = square(6);
        let u = at(&g, [5, 0]);
        let c = isolate(&g, u, BondConfig::all_open(Arc::clone(&g)));
        let ctx = TransportContext::new(&c, Strategy::Shortest).unwrap();
        assert!(ctx.bridge_path(&straight(&g, 0, 5), 0).is_err());
    }

    #[test]
    fn supercritical_samples_pass_all_checks() {
        let g = square(20);
        let gauge = EnergyGauge::psi(2, 1.5, 4.0).unwrap();
        for strategy in [Strategy::Shortest, Strategy::Boundary { k: 2 }] {
            for seed in 0..10 {
                let s = bridge_sample(&g, 0.75, seed, strategy, 30, &gauge).unwrap();
                assert!(s.support_ok && s.identity_ok, "{strategy:?} {seed}");
                assert!(s.conservation_error <= 1e-12);
            }
        }
    }

    #[test]
    fn boundary_strategy_routes_through_inner_boundary() {
        let g = square(20);
        let mut routed = 0;
        for seed in 0..20 {
            let config = sample_bond(&g, 0.98, seed).unwrap();
            let ctx = TransportContext::new(&config, Strategy::Boundary { k: 2 }).unwrap();
            assert!(ctx.strong.is_some());
            let mu = base_measure(&config, ctx.giant(), 20, seed).unwrap();
            let tr = transport_measure(&mu, &ctx).unwrap();
            for ev in tr.events().filter(|e| e.strategy == "boundary") {
                routed += 1;
                assert!(ev.bridge.windows(2).all(|w| ctx.edge_open(w[0], w[1])));
            }
        }
        assert!(routed > 0);
    }

    /// The inner boundary of each complementary component is a connected
    /// subset of the giant when the strongly-open cluster is dense.
    #[test]
    fn inner_boundaries_connected_in_giant() {
        let g = square(24);
        let k = 3;
        for seed in 0..10 {
            let config = sample_bond(&g, 0.99, seed).unwrap();
            let giant = GiantCluster::find(&config).unwrap();
            let d = strong_open_decomposition(&config, k).unwrap();
            for comp in &d.components {
                if comp.len() == g.num_vertices() {
                    continue;
                }
                let u = inner_k_boundary_of(comp, k, &g);
                assert!(u.iter().all(|&v| giant.contains(v)));
                let inside = |v: VertexId| u.binary_search(&v).is_ok();
                let dist = g.bfs(&u[..1], |e| {
                    let (a, b) = g.edge(e);
                    config.is_open(e) && inside(a) && inside(b)
                }, None);
                assert!(u.iter().all(|&v| dist[v] != u32::MAX), "seed {seed}");
            }
        }
    }
}
