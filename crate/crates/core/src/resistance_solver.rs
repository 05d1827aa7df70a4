//! Effective resistance and minimum-energy unit flows to a grounded sink
//! shell, plus resistance-scaling curves over nested boxes.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::cluster_analysis::GiantCluster;
use crate::error::{Error, Result};
use crate::flows_energy::{energy, EnergyGauge, Flow};
use crate::lattice_geometry::{EdgeId, LatticeGraph, RegionSpec, VertexId};
use crate::percolation::sample_bond;
use crate::stats::{mean_interval, Interval};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 100_000;

const GROUND: u32 = u32::MAX;

/// Grounded Laplacian on the component of `source` under accepted edges,
/// with every sink vertex collapsed into a zero-potential super-sink.
struct Grounded {
    /// Unknown index per graph vertex (`GROUND` for sinks and unreached).
    index: Vec<u32>,
    /// Graph vertex per unknown.
    vertex: Vec<VertexId>,
    row: Vec<usize>,
    col: Vec<u32>,
    /// Edge id per off-diagonal entry, for weighted systems.
    edge: Vec<u32>,
    /// Active edges incident to each unknown, including those to the sink.
    incident: Vec<Vec<EdgeId>>,
    active_edges: Vec<EdgeId>,
}

impl Grounded {
    fn build(graph: &LatticeGraph, edge_ok: &(dyn Fn(EdgeId) -> bool + Sync), source: VertexId, sinks: &[VertexId]) -> Result<Self> {
        let n = graph.num_vertices();
        let mut is_sink = vec![false; n];
        for &s in sinks {
            is_sink[s] = true;
        }
        if is_sink[source] {
            return Err(Error::arg("source lies in the sink set"));
        }
        // component of the source; sinks absorb (no expansion through them)
        let mut index = vec![GROUND; n];
        let mut vertex = vec![source];
        index[source] = 0;
        let mut reached_sink = false;
        let mut seen_sink = vec![false; n];
        let mut i = 0;
        while i < vertex.len() {
            let u = vertex[i];
            i += 1;
            for (w, e) in graph.neighbors(u) {
                if !edge_ok(e) {
                    continue;
                }
                if is_sink[w] {
                    reached_sink = true;
                    seen_sink[w] = true;
                } else if index[w] == GROUND {
                    index[w] = vertex.len() as u32;
                    vertex.push(w);
                }
            }
        }
        if !reached_sink {
            return Err(Error::Unreachable);
        }
        let m = vertex.len();
        let mut row = Vec::with_capacity(m + 1);
        let mut col = Vec::new();
        let mut edge = Vec::new();
        let mut incident = Vec::with_capacity(m);
        let mut active_edges = Vec::new();
        row.push(0);
        for &u in &vertex {
            let mut inc = Vec::new();
            for (w, e) in graph.neighbors(u) {
                if !edge_ok(e) {
                    continue;
                }
                inc.push(e);
                if index[w] != GROUND {
                    col.push(index[w]);
                    edge.push(e as u32);
                    if u < w {
                        active_edges.push(e);
                    }
                } else {
                    active_edges.push(e);
                }
            }
            incident.push(inc);
            row.push(col.len());
        }
        active_edges.sort_unstable();
        Ok(Self { index, vertex, row, col, edge, incident, active_edges })
    }

    fn len(&self) -> usize {
        self.vertex.len()
    }

    /// `y = L x` with conductances `c` (unit when `None`).
    fn apply(&self, c: Option<&[f64]>, diag: &[f64], x: &[f64], y: &mut [f64]) {
        for i in 0..self.len() {
            let mut s = diag[i] * x[i];
            for k in self.row[i]..self.row[i + 1] {
                let w = c.map_or(1.0, |c| c[self.edge[k] as usize]);
                s -= w * x[self.col[k] as usize];
            }
            y[i] = s;
        }
    }

    fn diagonal(&self, c: Option<&[f64]>) -> Vec<f64> {
        self.incident
            .iter()
            .map(|inc| inc.iter().map(|&e| c.map_or(1.0, |c| c[e])).sum())
            .collect()
    }

    /// Preconditioned conjugate gradients; returns `(x, iterations, relative residual)`.
    fn solve(&self, c: Option<&[f64]>, b: &[f64], tol: f64) -> Result<(Vec<f64>, usize, f64)> {
        let n = self.len();
        let diag = self.diagonal(c);
        let bnorm = norm(b);
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok((x, 0, 0.0));
        }
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);
        for it in 1..=MAX_ITERATIONS {
            self.apply(c, &diag, &p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let res = norm(&r) / bnorm;
            if res <= tol {
                // confirm against the true residual
                self.apply(c, &diag, &x, &mut ap);
                let true_res = norm(&b.iter().zip(&ap).map(|(b, a)| b - a).collect::<Vec<_>>()) / bnorm;
                if true_res <= tol {
                    return Ok((x, it, true_res));
                }
                r = b.iter().zip(&ap).map(|(b, a)| b - a).collect();
            }
            for i in 0..n {
                z[i] = r[i] / diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::Solver { iterations: MAX_ITERATIONS, residual: norm(&r) / bnorm })
    }

    /// Edge values `c_e (phi_u - phi_v)` in canonical orientation.
    fn edge_differences(&self, graph: &LatticeGraph, phi: &[f64], out: &mut [f64]) {
        let pot = |v: VertexId| match self.index[v] {
            GROUND => 0.0,
            i => phi[i as usize],
        };
        for &e in &self.active_edges {
            let (u, w) = graph.edge(e);
            out[e] = pot(u) - pot(w);
        }
    }

    /// `B v` restricted to unknowns: net outflow at each non-sink vertex.
    fn divergence(&self, graph: &LatticeGraph, values: &[f64]) -> Vec<f64> {
        self.vertex
            .iter()
            .zip(&self.incident)
            .map(|(&u, inc)| inc.iter().map(|&e| if graph.edge(e).0 == u { values[e] } else { -values[e] }).sum())
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone)]
pub struct ResistanceSolution {
    pub resistance: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Unit current flow from the source to the sinks.
    pub current: Flow,
}

/// Effective resistance from `source` to the grounded `sinks` through the
/// edges accepted by `edge_ok`.
pub fn effective_resistance(
    graph: &Arc<LatticeGraph>,
    edge_ok: &(dyn Fn(EdgeId) -> bool + Sync),
    source: VertexId,
    sinks: &[VertexId],
    tol: f64,
) -> Result<ResistanceSolution> {
    let sys = Grounded::build(graph, edge_ok, source, sinks)?;
    let mut b = vec![0.0; sys.len()];
    b[0] = 1.0;
    let (phi, iterations, residual) = sys.solve(None, &b, tol)?;
    let mut values = vec![0.0; graph.num_edges()];
    sys.edge_differences(graph, &phi, &mut values);
    let current = Flow::from_values(Arc::clone(graph), source, sinks.to_vec(), values)?;
    Ok(ResistanceSolution { resistance: phi[0], iterations, residual, current })
}

#[derive(Debug, Clone)]
pub struct MinEnergyFlow {
    pub flow: Flow,
    pub energy: f64,
    pub newton_steps: usize,
    /// Norm of the energy gradient projected on the cycle space, relative to
    /// the gradient norm.
    pub projected_gradient: f64,
}

const MAX_NEWTON: usize = 200;

/// Unit flow from `source` to `sinks` minimizing `sum_e g(|F(e)|)`.
pub fn min_energy_flow(
    graph: &Arc<LatticeGraph>,
    edge_ok: &(dyn Fn(EdgeId) -> bool + Sync),
    gauge: &EnergyGauge,
    source: VertexId,
    sinks: &[VertexId],
    tol: f64,
) -> Result<MinEnergyFlow> {
    let sys = Grounded::build(graph, edge_ok, source, sinks)?;
    let solve_tol = (tol * 1e-2).max(1e-14);
    let mut b = vec![0.0; sys.len()];
    b[0] = 1.0;
    let (phi, _, _) = sys.solve(None, &b, solve_tol)?;
    let mut f = vec![0.0; graph.num_edges()];
    sys.edge_differences(graph, &phi, &mut f);
    let objective = |f: &[f64]| -> f64 { sys.active_edges.iter().map(|&e| gauge.eval(f[e])).sum() };
    let gradient = |f: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; f.len()];
        for &e in &sys.active_edges {
            let x = f[e];
            g[e] = if x == 0.0 { 0.0 } else { x.signum() * gauge.d1(x.abs()) };
        }
        g
    };
    // projection of a gradient onto the cycle space (unit conductances)
    let cycle_part = |g: &[f64]| -> Result<(f64, f64)> {
        let rhs = sys.divergence(graph, g);
        let (lam, _, _) = sys.solve(None, &rhs, solve_tol)?;
        let mut pot = vec![0.0; g.len()];
        sys.edge_differences(graph, &lam, &mut pot);
        let (mut r2, mut g2) = (0.0, 0.0);
        for &e in &sys.active_edges {
            r2 += (g[e] - pot[e]).powi(2);
            g2 += g[e] * g[e];
        }
        Ok((r2.sqrt(), g2.sqrt()))
    };
    let mut steps = 0;
    let mut value = objective(&f);
    loop {
        let g = gradient(&f);
        let (r, gn) = cycle_part(&g)?;
        let cert = if gn > 0.0 { r / gn } else { 0.0 };
        if cert <= tol {
            let flow = Flow::from_values(Arc::clone(graph), source, sinks.to_vec(), f)?;
            return Ok(MinEnergyFlow { energy: energy(&flow, gauge), flow, newton_steps: steps, projected_gradient: cert });
        }
        if steps == MAX_NEWTON {
            return Err(Error::Solver { iterations: steps, residual: cert });
        }
        steps += 1;
        // diagonal Hessian, floored relative to its largest entry
        let mut h = vec![0.0; f.len()];
        let mut hmax: f64 = 0.0;
        for &e in &sys.active_edges {
            let x = f[e].abs().max(1e-12);
            let v = gauge.d2(x);
            h[e] = if v.is_finite() { v } else { f64::MAX };
            hmax = hmax.max(h[e].min(1e300));
        }
        let floor = (hmax * 1e-10).max(1e-300);
        let c: Vec<f64> = h.iter().map(|&v| 1.0 / v.clamp(floor, 1e300)).collect();
        // d = -C (g - B^T lambda), with B C B^T lambda = B C g
        let cg: Vec<f64> = g.iter().zip(&c).map(|(g, c)| g * c).collect();
        let rhs = sys.divergence(graph, &cg);
        let (lam, _, _) = sys.solve(Some(&c), &rhs, solve_tol)?;
        let mut pot = vec![0.0; f.len()];
        sys.edge_differences(graph, &lam, &mut pot);
        let d: Vec<f64> = (0..f.len()).map(|e| -c[e] * (g[e] - pot[e])).collect();
        let slope: f64 = sys.active_edges.iter().map(|&e| g[e] * d[e]).sum();
        let mut t = 1.0;
        let mut next = f.clone();
        loop {
            for &e in &sys.active_edges {
                next[e] = f[e] + t * d[e];
            }
            let nv = objective(&next);
            if nv <= value + 1e-4 * t * slope || t < 1e-12 {
                value = nv;
                break;
            }
            t *= 0.5;
        }
        if t < 1e-12 {
            return Err(Error::Solver { iterations: steps, residual: cert });
        }
        f = next;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResistanceRow {
    pub region: String,
    pub p: f64,
    pub n: i32,
    pub seed: u64,
    pub resistance: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RadiusSummary {
    pub n: i32,
    pub mean: Interval,
    pub samples: usize,
    pub skipped: usize,
    /// Mean over seeds of `R(n) - R(previous radius)` (seeds present at both).
    pub increment: Option<Interval>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResistanceCurve {
    pub region: String,
    pub p: f64,
    pub radii: Vec<i32>,
    pub summaries: Vec<RadiusSummary>,
    #[serde(skip)]
    pub rows: Vec<ResistanceRow>,
}

impl ResistanceCurve {
    pub fn increments(&self) -> Vec<f64> {
        self.summaries.iter().filter_map(|s| s.increment.map(|i| i.estimate)).collect()
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

/// `R(anchor -> shell at sup-distance n)` for each radius and seed.
///
/// For `p < 1` the solve runs on the giant cluster of the seeded
/// configuration; seeds whose giant misses the anchor are skipped and
/// counted. For `p = 1` the graph is solved once per radius.
pub fn resistance_scaling(region: &RegionSpec, p: f64, radii: &[i32], seeds: &[u64], tol: f64) -> Result<ResistanceCurve> {
    if radii.is_empty() || radii.windows(2).any(|w| w[0] >= w[1]) || radii[0] < 1 {
        return Err(Error::arg("radii must be positive and strictly increasing"));
    }
    if seeds.is_empty() {
        return Err(Error::arg("at least one seed is required"));
    }
    let name = region.shape_name().to_string();
    let mut rows = Vec::new();
    let mut per_radius: Vec<Vec<Option<f64>>> = Vec::new();
    for &n in radii {
        let graph = Arc::new(LatticeGraph::build(region, n)?);
        let source = graph
            .vertex_at(&region.anchor)
            .ok_or_else(|| Error::arg("region does not contain its anchor"))?;
        let sinks = graph.shell(&region.anchor, n);
        let results: Vec<Result<Option<ResistanceSolution>>> = if p >= 1.0 {
            let sol = effective_resistance(&graph, &|_| true, source, &sinks, tol)?;
            seeds.iter().map(|_| Ok(Some(sol.clone()))).collect()
        } else {
            seeds
                .par_iter()
                .map(|&seed| {
                    let config = sample_bond(&graph, p, seed)?;
                    match GiantCluster::find(&config) {
                        Some(g) if g.contains(source) => {
                            effective_resistance(&graph, &|e| config.is_open(e), source, &sinks, tol).map(Some)
                        }
                        _ => Ok(None),
                    }
                })
                .collect()
        };
        let mut col = Vec::with_capacity(seeds.len());
        for (&seed, r) in seeds.iter().zip(results) {
            match r? {
                Some(sol) => {
                    rows.push(ResistanceRow {
                        region: name.clone(),
                        p,
                        n,
                        seed,
                        resistance: sol.resistance,
                        iterations: sol.iterations,
                        residual: sol.residual,
                    });
                    col.push(Some(sol.resistance));
                }
                None => col.push(None),
            }
        }
        per_radius.push(col);
    }
    let mut summaries = Vec::new();
    for (k, &n) in radii.iter().enumerate() {
        let vals: Vec<f64> = per_radius[k].iter().flatten().copied().collect();
        let increment = (k > 0).then(|| {
            let diffs: Vec<f64> = per_radius[k]
                .iter()
                .zip(&per_radius[k - 1])
                .filter_map(|(a, b)| Some((*a)? - (*b)?))
                .collect();
            mean_interval(&diffs)
        });
        summaries.push(RadiusSummary {
            n,
            mean: mean_interval(&vals),
            samples: vals.len(),
            skipped: seeds.len() - vals.len(),
            increment,
        });
    }
    Ok(ResistanceCurve { region: name, p, radii: radii.to_vec(), summaries, rows })
}
