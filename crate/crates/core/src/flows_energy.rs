//! Unit flows, path measures and their conversions, and the convex energy
//! functionals `H_g(F) = sum_e g(|F(e)|)`.

use std::collections::VecDeque;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice_geometry::{EdgeId, LatticeGraph, VertexId};

/// Edge function stored per undirected edge, oriented from the lower to the
/// higher endpoint as returned by [`LatticeGraph::edge`].
#[derive(Debug, Clone)]
pub struct Flow {
    graph: Arc<LatticeGraph>,
    values: Vec<f64>,
    source: VertexId,
    sinks: Vec<VertexId>,
}

impl Flow {
    pub fn zero(graph: Arc<LatticeGraph>, source: VertexId, mut sinks: Vec<VertexId>) -> Self {
        sinks.sort_unstable();
        sinks.dedup();
        let values = vec![0.0; graph.num_edges()];
        Self { graph, values, source, sinks }
    }

    pub fn from_values(
        graph: Arc<LatticeGraph>,
        source: VertexId,
        sinks: Vec<VertexId>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != graph.num_edges() {
            return Err(Error::arg("flow value count differs from edge count"));
        }
        let mut f = Self::zero(graph, source, sinks);
        f.values = values;
        Ok(f)
    }

    pub fn graph(&self) -> &LatticeGraph {
        &self.graph
    }

    pub fn graph_arc(&self) -> &Arc<LatticeGraph> {
        &self.graph
    }

    pub fn source(&self) -> VertexId {
        self.source
    }

    pub fn sinks(&self) -> &[VertexId] {
        &self.sinks
    }

    pub fn is_sink(&self, v: VertexId) -> bool {
        self.sinks.binary_search(&v).is_ok()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value on `e` in its canonical orientation.
    pub fn value(&self, e: EdgeId) -> f64 {
        self.values[e]
    }

    /// `F(uw)` for adjacent `u`, `w`; antisymmetric by construction.
    pub fn along(&self, u: VertexId, w: VertexId) -> Option<f64> {
        let e = self.graph.edge_between(u, w)?;
        let sign = if self.graph.edge(e).0 == u { 1.0 } else { -1.0 };
        Some(sign * self.values[e])
    }

    /// Adds `amount` along `u -> w`.
    pub fn push(&mut self, u: VertexId, w: VertexId, amount: f64) -> Result<()> {
        let e = self
            .graph
            .edge_between(u, w)
            .ok_or_else(|| Error::arg(format!("vertices {u} and {w} are not adjacent")))?;
        let sign = if self.graph.edge(e).0 == u { 1.0 } else { -1.0 };
        self.values[e] += sign * amount;
        Ok(())
    }

    pub fn push_path(&mut self, path: &[VertexId], amount: f64) -> Result<()> {
        for w in path.windows(2) {
            self.push(w[0], w[1], amount)?;
        }
        Ok(())
    }

    /// Net outflow `sum_w F(vw)`.
    pub fn divergence(&self, v: VertexId) -> f64 {
        self.graph
            .neighbors(v)
            .map(|(_, e)| if self.graph.edge(e).0 == v { self.values[e] } else { -self.values[e] })
            .sum()
    }

    pub fn strength(&self) -> f64 {
        self.divergence(self.source)
    }

    /// Largest `|divergence|` over vertices that are neither source nor sink.
    pub fn conservation_error(&self) -> f64 {
        (0..self.graph.num_vertices())
            .filter(|&v| v != self.source && !self.is_sink(v))
            .map(|v| self.divergence(v).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_conserved(&self, tol: f64) -> bool {
        self.conservation_error() <= tol
    }

    /// Sum of `F(e)^2`.
    pub fn quadratic_energy(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum()
    }

    /// Rows `(edge, u, w, value)`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["edge", "u", "w", "value"])?;
        for (e, &x) in self.values.iter().enumerate() {
            let (u, v) = self.graph.edge(e);
            out.write_record([e.to_string(), u.to_string(), v.to_string(), format!("{x:e}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Finitely supported probability measure on self-avoiding paths that start
/// at `source` and end in `sinks`.
#[derive(Debug, Clone)]
pub struct PathMeasure {
    graph: Arc<LatticeGraph>,
    source: VertexId,
    sinks: Vec<VertexId>,
    paths: Vec<Vec<VertexId>>,
    weights: Vec<f64>,
}

/// Tolerance on `sum of weights = 1` accepted by [`PathMeasure::new`].
pub const WEIGHT_TOL: f64 = 1e-9;

impl PathMeasure {
    pub fn new(
        graph: Arc<LatticeGraph>,
        source: VertexId,
        sinks: Vec<VertexId>,
        paths: Vec<Vec<VertexId>>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let mut sinks = sinks;
        sinks.sort_unstable();
        sinks.dedup();
        if paths.len() != weights.len() || paths.is_empty() {
            return Err(Error::arg("path measure needs one positive weight per path"));
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::arg("path weights must be positive and finite"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::arg(format!("path weights sum to {total}, not 1")));
        }
        let mut seen = vec![u32::MAX; graph.num_vertices()];
        for (i, path) in paths.iter().enumerate() {
            if path.first() != Some(&source) {
                return Err(Error::arg(format!("path {i} does not start at the source")));
            }
            if sinks.binary_search(path.last().unwrap()).is_err() {
                return Err(Error::arg(format!("path {i} does not end in the sink set")));
            }
            for &v in path {
                if v >= graph.num_vertices() || seen[v] == i as u32 {
                    return Err(Error::arg(format!("path {i} is not self-avoiding")));
                }
                seen[v] = i as u32;
            }
            if path.windows(2).any(|w| graph.edge_between(w[0], w[1]).is_none()) {
                return Err(Error::arg(format!("path {i} leaves the graph")));
            }
        }
        Ok(Self { graph, source, sinks, paths, weights })
    }

    /// As [`PathMeasure::new`] with weights rescaled to sum to one, and sinks
    /// taken to be the path endpoints.
    pub fn normalized(graph: Arc<LatticeGraph>, source: VertexId, paths: Vec<Vec<VertexId>>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::arg("path weights must have positive total"));
        }
        let sinks = paths.iter().filter_map(|p| p.last().copied()).collect();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Self::new(graph, source, sinks, paths, weights)
    }

    pub fn graph(&self) -> &LatticeGraph {
        &self.graph
    }

    pub fn graph_arc(&self) -> &Arc<LatticeGraph> {
        &self.graph
    }

    pub fn source(&self) -> VertexId {
        self.source
    }

    pub fn sinks(&self) -> &[VertexId] {
        &self.sinks
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn paths(&self) -> &[Vec<VertexId>] {
        &self.paths
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[VertexId], f64)> {
        self.paths.iter().map(Vec::as_slice).zip(self.weights.iter().copied())
    }

    /// Edges of path `i`.
    pub fn path_edges(&self, i: usize) -> impl Iterator<Item = EdgeId> + '_ {
        self.paths[i]
            .windows(2)
            .map(|w| self.graph.edge_between(w[0], w[1]).expect("validated path"))
    }

    /// `mu(e in P)` per edge, ignoring direction.
    pub fn edge_load(&self) -> Vec<f64> {
        let mut load = vec![0.0; self.graph.num_edges()];
        for i in 0..self.paths.len() {
            for e in self.path_edges(i) {
                load[e] += self.weights[i];
            }
        }
        load
    }

    /// One line per path: the weight, then the vertex ids.
    pub fn write_dump(&self, mut w: impl Write) -> Result<()> {
        for (path, weight) in self.iter() {
            write!(w, "{weight:e}")?;
            for v in path {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_dump(r: impl BufRead, graph: Arc<LatticeGraph>, source: VertexId) -> Result<Self> {
        let mut paths = Vec::new();
        let mut weights = Vec::new();
        for line in r.lines() {
            let line = line?;
            let mut it = line.split_whitespace();
            let Some(w) = it.next() else { continue };
            weights.push(w.parse::<f64>().map_err(|e| Error::Format(format!("weight: {e}")))?);
            let path = it
                .map(|t| t.parse::<VertexId>().map_err(|e| Error::Format(format!("vertex: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            paths.push(path);
        }
        let sinks = paths.iter().filter_map(|p| p.last().copied()).collect();
        Self::new(graph, source, sinks, paths, weights)
    }
}

/// `F(e)` = signed total weight of paths traversing `e`.
pub fn path_measure_to_flow(mu: &PathMeasure) -> Flow {
    let mut f = Flow::zero(Arc::clone(&mu.graph), mu.source, mu.sinks.clone());
    for (path, w) in mu.iter() {
        f.push_path(path, w).expect("validated path");
    }
    f
}

/// Paths from `v0` whose every step increases the `L1` distance to `v0`,
/// each run until it reaches the outer face of the graph or `max_len` steps.
/// Such paths traverse every edge away from `v0`, so their flow never
/// cancels.
pub fn sample_outward_paths(
    graph: &LatticeGraph,
    v0: VertexId,
    count: usize,
    max_len: usize,
    rng: &mut impl Rng,
) -> Vec<Vec<VertexId>> {
    let mut out = Vec::with_capacity(count);
    let mut options = Vec::with_capacity(2 * graph.dim());
    for _ in 0..count {
        let mut path = vec![v0];
        let mut u = v0;
        while path.len() <= max_len && !graph.on_outer_face(u) {
            options.clear();
            options.extend(graph.neighbors(u).map(|(w, _)| w).filter(|&w| graph.l1(w, v0) > graph.l1(u, v0)));
            if options.is_empty() {
                break;
            }
            u = options[rng.gen_range(0..options.len())];
            path.push(u);
        }
        out.push(path);
    }
    out
}

/// Convex gauge `g` with a claimed exponent `l` such that `x^-l g(x)` is
/// nonincreasing on `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GaugeForm {
    /// `x^2`
    Quadratic,
    /// `x^q`
    Power { q: f64 },
    /// `x^{d/(d-1)} / ln(1 + 1/x)^alpha`
    Psi { d: u32, alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyGauge {
    pub form: GaugeForm,
    pub l: f64,
}

/// `|x|^{d/(d-1)} / ln(1 + 1/|x|)^alpha`, zero at zero.
pub fn psi(d: u32, alpha: f64, x: f64) -> f64 {
    let x = x.abs();
    if x == 0.0 {
        return 0.0;
    }
    let a = f64::from(d) / f64::from(d - 1);
    x.powf(a) / (1.0 / x).ln_1p().powf(alpha)
}

impl EnergyGauge {
    pub fn quadratic() -> Self {
        Self { form: GaugeForm::Quadratic, l: 2.0 }
    }

    pub fn power(q: f64, l: f64) -> Self {
        Self { form: GaugeForm::Power { q }, l }
    }

    pub fn psi(d: u32, alpha: f64, l: f64) -> Result<Self> {
        if d < 2 || !(alpha >= 0.0) {
            return Err(Error::arg(format!("psi needs d >= 2 and alpha >= 0, got d = {d}, alpha = {alpha}")));
        }
        Ok(Self { form: GaugeForm::Psi { d, alpha }, l })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.abs();
        match self.form {
            GaugeForm::Quadratic => x * x,
            GaugeForm::Power { q } => {
                if x == 0.0 {
                    0.0
                } else {
                    x.powf(q)
                }
            }
            GaugeForm::Psi { d, alpha } => psi(d, alpha, x),
        }
    }

    /// `g'(x)` for `x > 0`.
    pub fn d1(&self, x: f64) -> f64 {
        match self.form {
            GaugeForm::Quadratic => 2.0 * x,
            GaugeForm::Power { q } => q * x.powf(q - 1.0),
            GaugeForm::Psi { d, alpha } => {
                let (a, l, q) = psi_parts(d, x);
                x.powf(a - 1.0) * l.powf(-alpha) * (a + alpha * q)
            }
        }
    }

    /// `g''(x)` for `x > 0`.
    pub fn d2(&self, x: f64) -> f64 {
        match self.form {
            GaugeForm::Quadratic => 2.0,
            GaugeForm::Power { q } => q * (q - 1.0) * x.powf(q - 2.0),
            GaugeForm::Psi { d, alpha } => {
                let (a, l, q) = psi_parts(d, x);
                let dq = (1.0 / x - l) / ((x + 1.0) * (x + 1.0) * l * l);
                x.powf(a - 2.0) * l.powf(-alpha) * ((a - 1.0 + alpha * q) * (a + alpha * q) + alpha * x * dq)
            }
        }
    }
}

/// `(d/(d-1), ln(1 + 1/x), 1/((x+1) ln(1 + 1/x)))`.
fn psi_parts(d: u32, x: f64) -> (f64, f64, f64) {
    let a = f64::from(d) / f64::from(d - 1);
    let l = (1.0 / x).ln_1p();
    (a, l, 1.0 / ((x + 1.0) * l))
}

/// `sum_e g(|F(e)|)` in edge order.
pub fn energy(flow: &Flow, g: &EnergyGauge) -> f64 {
    flow.values.iter().map(|&x| g.eval(x)).sum()
}

/// Relative slack for floating-point rounding in the grid checks.
const GRID_ROUNDOFF: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct GaugeReport {
    pub points: usize,
    /// Smallest `(g(a) + g(b))/2 - g((a+b)/2)` relative to the average.
    pub min_convexity_margin: f64,
    /// Smallest relative drop of `x^-l g(x)` between grid neighbours.
    pub min_ratio_drop: f64,
}

/// Checks `g(0) = 0`, monotonicity, midpoint convexity on consecutive grid
/// points and on `[0, x]`, and that `x^-l g(x)` is nonincreasing.
pub fn validate_gauge(g: &EnergyGauge, grid: &[f64]) -> Result<GaugeReport> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] <= 0.0 || grid[grid.len() - 1] > 1.0 {
        return Err(Error::arg("validation grid must be strictly increasing in (0, 1]"));
    }
    if g.eval(0.0) != 0.0 {
        return Err(Error::Validation { check: "g(0) = 0", x: 0.0 });
    }
    let mut min_conv = f64::INFINITY;
    let mut min_drop = f64::INFINITY;
    let mut midpoint = |a: f64, b: f64| -> Result<()> {
        let avg = 0.5 * (g.eval(a) + g.eval(b));
        let mid = g.eval(0.5 * (a + b));
        let margin = (avg - mid) / avg.max(f64::MIN_POSITIVE);
        if margin < -GRID_ROUNDOFF {
            return Err(Error::Validation { check: "midpoint convexity", x: b });
        }
        min_conv = min_conv.min(margin);
        Ok(())
    };
    for &x in grid {
        midpoint(0.0, x)?;
    }
    for w in grid.windows(2) {
        midpoint(w[0], w[1])?;
    }
    for w in grid.windows(2) {
        let (ga, gb) = (g.eval(w[0]), g.eval(w[1]));
        if gb < ga * (1.0 - GRID_ROUNDOFF) {
            return Err(Error::Validation { check: "g nondecreasing", x: w[1] });
        }
        let ra = g.eval(w[0]) * w[0].powf(-g.l);
        let rb = g.eval(w[1]) * w[1].powf(-g.l);
        let drop = (ra - rb) / ra.max(f64::MIN_POSITIVE);
        if drop < -GRID_ROUNDOFF {
            return Err(Error::Validation { check: "x^-l g(x) nonincreasing", x: w[1] });
        }
        min_drop = min_drop.min(drop);
    }
    Ok(GaugeReport { points: grid.len(), min_convexity_margin: min_conv, min_ratio_drop: min_drop })
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| if i + 1 == n { hi } else { (a + (b - a) * i as f64 / (n - 1) as f64).exp() })
        .collect()
}

/// Result of [`flow_to_path_measure`].
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub measure: PathMeasure,
    /// The flow after cycle cancellation.
    pub acyclic: Flow,
    pub cycles_cancelled: usize,
    /// Largest leftover `|F(e)|` after path stripping.
    pub residual: f64,
}

/// Directed view of positive flow: `dir[e] = +1` for lower-to-higher.
fn arc(values: &[f64], e: EdgeId, eps: f64) -> i8 {
    if values[e] > eps {
        1
    } else if values[e] < -eps {
        -1
    } else {
        0
    }
}

/// Next vertex along the positive direction of `e` from `u`, if any.
fn forward(graph: &LatticeGraph, values: &[f64], u: VertexId, e: EdgeId, eps: f64) -> bool {
    let lower = graph.edge(e).0 == u;
    match arc(values, e, eps) {
        1 => lower,
        -1 => !lower,
        _ => false,
    }
}

fn is_acyclic(graph: &LatticeGraph, values: &[f64], eps: f64) -> bool {
    let n = graph.num_vertices();
    let mut indeg = vec![0u32; n];
    for e in 0..graph.num_edges() {
        let (u, w) = graph.edge(e);
        match arc(values, e, eps) {
            1 => indeg[w] += 1,
            -1 => indeg[u] += 1,
            _ => {}
        }
    }
    let mut stack: Vec<VertexId> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut removed = 0;
    while let Some(u) = stack.pop() {
        removed += 1;
        for (w, e) in graph.neighbors(u) {
            if forward(graph, values, u, e, eps) {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    stack.push(w);
                }
            }
        }
    }
    removed == n
}

/// Cancels directed cycles of positive flow, lowest edge first; returns the
/// number of cycles removed.
fn cancel_cycles(flow: &mut Flow, eps: f64) -> usize {
    let graph = Arc::clone(&flow.graph);
    if is_acyclic(&graph, &flow.values, eps) {
        return 0;
    }
    let n = graph.num_vertices();
    let mut parent = vec![(usize::MAX, usize::MAX); n];
    let mut cancelled = 0;
    for e in 0..graph.num_edges() {
        loop {
            let (lo, hi) = graph.edge(e);
            let (tail, head) = match arc(&flow.values, e, eps) {
                1 => (lo, hi),
                -1 => (hi, lo),
                _ => break,
            };
            // directed path head -> tail
            parent.iter_mut().for_each(|p| *p = (usize::MAX, usize::MAX));
            parent[head] = (head, usize::MAX);
            let mut queue = VecDeque::from([head]);
            let mut found = false;
            while let Some(u) = queue.pop_front() {
                if u == tail {
                    found = true;
                    break;
                }
                for (w, f) in graph.neighbors(u) {
                    if f != e && parent[w].0 == usize::MAX && forward(&graph, &flow.values, u, f, eps) {
                        parent[w] = (u, f);
                        queue.push_back(w);
                    }
                }
            }
            if !found {
                break;
            }
            let mut cycle = vec![e];
            let mut x = tail;
            while x != head {
                let (p, f) = parent[x];
                cycle.push(f);
                x = p;
            }
            let amount = cycle.iter().map(|&f| flow.values[f].abs()).fold(f64::INFINITY, f64::min);
            for &f in &cycle {
                let v = &mut flow.values[f];
                *v -= v.signum() * amount;
                if v.abs() <= eps {
                    *v = 0.0;
                }
            }
            cancelled += 1;
        }
    }
    cancelled
}

/// Acyclicizes `flow` and strips it into weighted source-to-sink paths.
///
/// Paths are extracted greedily: from each vertex, the smallest-index
/// neighbour carrying positive flow; a path stops at a sink that still has
/// unabsorbed inflow.
pub fn flow_to_path_measure(flow: &Flow, tol: f64) -> Result<Decomposition> {
    if !(tol > 0.0) {
        return Err(Error::arg("tolerance must be positive"));
    }
    let strength = flow.strength();
    if (strength - 1.0).abs() > tol {
        return Err(Error::arg(format!("flow strength is {strength}, expected 1")));
    }
    let eps = tol * 1e-3;
    let mut acyclic = flow.clone();
    let cycles_cancelled = cancel_cycles(&mut acyclic, eps);
    let graph = Arc::clone(&flow.graph);
    let mut rest = acyclic.values.clone();
    let mut absorb: Vec<f64> = vec![0.0; graph.num_vertices()];
    for &s in &flow.sinks {
        absorb[s] = -acyclic.divergence(s);
    }
    let mut remaining = strength;
    let mut dropped = 0.0f64;
    let mut paths = Vec::new();
    let mut weights = Vec::new();
    'strip: while remaining > eps {
        let mut path = vec![flow.source];
        let mut edges = Vec::new();
        let mut u = flow.source;
        loop {
            if u != flow.source && absorb[u] > eps {
                break;
            }
            let next = graph
                .neighbors(u)
                .filter(|&(_, e)| forward(&graph, &rest, u, e, eps))
                .min_by_key(|&(w, _)| w);
            let Some((w, e)) = next else {
                // dead end fed by solver noise: drop the edge and restart
                let Some(&last) = edges.last() else {
                    dropped = dropped.max(remaining);
                    break 'strip;
                };
                dropped = dropped.max(f64::abs(rest[last]));
                rest[last] = 0.0;
                continue 'strip;
            };
            path.push(w);
            edges.push(e);
            u = w;
            if path.len() > graph.num_vertices() {
                return Err(Error::Decomposition { residual: remaining });
            }
        }
        let w = edges
            .iter()
            .map(|&e| rest[e].abs())
            .fold(absorb[u].min(remaining), f64::min);
        for &e in &edges {
            rest[e] -= rest[e].signum() * w;
            if rest[e].abs() <= eps {
                rest[e] = 0.0;
            }
        }
        absorb[u] -= w;
        remaining -= w;
        paths.push(path);
        weights.push(w);
    }
    let residual = rest.iter().fold(dropped, |m, x| m.max(x.abs()));
    let total: f64 = weights.iter().sum();
    if residual > tol || (total - 1.0).abs() > tol {
        return Err(Error::Decomposition { residual: residual.max((total - 1.0).abs()) });
    }
    let sinks = flow.sinks.clone();
    let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let measure = PathMeasure::new(graph, flow.source, sinks, paths, weights)?;
    Ok(Decomposition { measure, acyclic, cycles_cancelled, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn square(m: i32) -> Arc<LatticeGraph> {
        Arc::new(LatticeGraph::lattice_box(2, m).unwrap())
    }

    fn line(n: i32) -> Arc<LatticeGraph> {
        let pts: Vec<Vec<i32>> = (0..=n).map(|x| vec![x, 0]).collect();
        Arc::new(LatticeGraph::from_points(2, &pts).unwrap())
    }

    fn at(g: &LatticeGraph, p: [i32; 2]) -> VertexId {
        g.vertex_at(&p).unwrap()
    }

    #[test]
    fn psi_values() {
        assert!((psi(2, 0.0, 0.5) - 0.25).abs() < 1e-15);
        assert_eq!(psi(3, 1.0, 0.0), 0.0);
        assert!((psi(3, 1.0, 1.0) - 1.0 / 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn psi_derivatives_match_finite_differences() {
        for (d, alpha) in [(2, 0.0), (2, 1.5), (3, 1.0), (4, 2.5)] {
            let g = EnergyGauge::psi(d, alpha, 4.0).unwrap();
            for &x in &[1e-4, 0.01, 0.3, 1.0, 5.0] {
                let h = x * 1e-5;
                let fd1 = (g.eval(x + h) - g.eval(x - h)) / (2.0 * h);
                let fd2 = (g.d1(x + h) - g.d1(x - h)) / (2.0 * h);
                assert!((g.d1(x) - fd1).abs() <= 1e-6 * fd1.abs().max(1e-12), "d1 {d} {alpha} {x}");
                assert!((g.d2(x) - fd2).abs() <= 1e-6 * fd2.abs().max(1e-12), "d2 {d} {alpha} {x}");
            }
        }
    }

    #[test]
    fn path_energies() {
        let g = line(6);
        let mut f = Flow::zero(Arc::clone(&g), 0, vec![6]);
        assert_eq!(energy(&f, &EnergyGauge::quadratic()), 0.0);
        let path: Vec<_> = (0..=6).collect();
        f.push_path(&path, 1.0).unwrap();
        assert_eq!(energy(&f, &EnergyGauge::quadratic()), 6.0);
        let psi21 = EnergyGauge::psi(2, 1.0, 4.0).unwrap();
        assert!((energy(&f, &psi21) - 6.0 / 2f64.ln()).abs() < 1e-12);
        assert!(f.is_conserved(0.0));
        assert_eq!(f.strength(), 1.0);
        assert_eq!(f.along(1, 0), Some(-1.0));
    }

    #[test]
    fn validation_examples() {
        let grid = log_grid(1e-6, 1.0, 1000);
        validate_gauge(&EnergyGauge::quadratic(), &grid).unwrap();
        validate_gauge(&EnergyGauge::psi(2, 1.5, 4.0).unwrap(), &grid).unwrap();
        let err = validate_gauge(&EnergyGauge::power(0.5, 1.0), &grid).unwrap_err();
        assert!(matches!(err, Error::Validation { check: "midpoint convexity", .. }));
        // x^3 is convex but x^-2 x^3 increases
        let err = validate_gauge(&EnergyGauge::power(3.0, 2.0), &grid).unwrap_err();
        assert!(matches!(err, Error::Validation { check: "x^-l g(x) nonincreasing", .. }));
    }

    #[test]
    fn single_and_disjoint_path_measures() {
        let g = square(3);
        let o = at(&g, [0, 0]);
        let p1: Vec<_> = [[0, 0], [1, 0], [2, 0], [3, 0]].iter().map(|p| at(&g, *p)).collect();
        let p2: Vec<_> = [[0, 0], [-1, 0], [-2, 0]].iter().map(|p| at(&g, *p)).collect();
        let mu = PathMeasure::new(Arc::clone(&g), o, vec![p1[3], p2[2]], vec![p1.clone()], vec![1.0]);
        assert!(mu.is_ok());
        let mu = PathMeasure::normalized(Arc::clone(&g), o, vec![p1.clone(), p2.clone()], vec![1.0, 1.0]).unwrap();
        let f = path_measure_to_flow(&mu);
        assert!(f.values().iter().all(|&x| x == 0.0 || x.abs() == 0.5));
        assert_eq!(f.quadratic_energy(), (3.0 + 2.0) / 4.0);
        assert!(f.is_conserved(1e-12));
    }

    #[test]
    fn rejects_bad_measures() {
        let g = square(2);
        let o = at(&g, [0, 0]);
        let far = at(&g, [2, 0]);
        let jump = vec![o, far];
        assert!(PathMeasure::normalized(Arc::clone(&g), o, vec![jump], vec![1.0]).is_err());
        let lp = vec![o, at(&g, [1, 0]), o];
        assert!(PathMeasure::normalized(Arc::clone(&g), o, vec![lp], vec![1.0]).is_err());
        let ok = vec![o, at(&g, [1, 0])];
        assert!(PathMeasure::new(Arc::clone(&g), o, vec![ok[1]], vec![ok], vec![0.5]).is_err());
    }

    /// Exhaustive `E|P cap Q|` over all ordered pairs of support paths.
    fn expected_intersection(mu: &PathMeasure) -> f64 {
        let sets: Vec<std::collections::HashSet<EdgeId>> = (0..mu.len()).map(|i| mu.path_edges(i).collect()).collect();
        let mut total = 0.0;
        for i in 0..mu.len() {
            for j in 0..mu.len() {
                total += mu.weights()[i] * mu.weights()[j] * sets[i].intersection(&sets[j]).count() as f64;
            }
        }
        total
    }

    #[test]
    fn quadratic_energy_is_expected_intersection() {
        let g = square(8);
        let o = at(&g, [0, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let paths = sample_outward_paths(&g, o, 20, usize::MAX, &mut rng);
            let weights: Vec<f64> = (0..20).map(|_| rng.gen_range(0.1..1.0)).collect();
            let mu = PathMeasure::normalized(Arc::clone(&g), o, paths, weights).unwrap();
            let f = path_measure_to_flow(&mu);
            let want = expected_intersection(&mu);
            assert!((f.quadratic_energy() - want).abs() <= 1e-12 * want);
            let load = mu.edge_load();
            assert!(load.iter().zip(f.values()).all(|(l, v)| (l - v.abs()).abs() < 1e-15));
        }
    }

    #[test]
    fn decomposition_single_path_and_cycle() {
        let g = square(2);
        let o = at(&g, [0, 0]);
        let path: Vec<_> = [[0, 0], [1, 0], [2, 0]].iter().map(|p| at(&g, *p)).collect();
        let mut f = Flow::zero(Arc::clone(&g), o, vec![path[2]]);
        f.push_path(&path, 1.0).unwrap();
        let d = flow_to_path_measure(&f, 1e-12).unwrap();
        assert_eq!(d.measure.paths(), &[path.clone()]);
        assert_eq!(d.cycles_cancelled, 0);
        let cycle: Vec<_> = [[1, 0], [2, 0], [2, 1], [1, 1], [1, 0]].iter().map(|p| at(&g, *p)).collect();
        let mut fc = f.clone();
        fc.push_path(&cycle, 1.0).unwrap();
        let d = flow_to_path_measure(&fc, 1e-12).unwrap();
        assert_eq!(d.cycles_cancelled, 1);
        assert_eq!(d.measure.paths(), &[path]);
        assert_eq!(d.measure.weights(), &[1.0]);
        let q = EnergyGauge::quadratic();
        assert!(energy(&d.acyclic, &q) <= energy(&fc, &q));
    }

    #[test]
    fn decomposition_round_trip_with_cycles() {
        let g = square(5);
        let o = at(&g, [0, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let paths = sample_outward_paths(&g, o, 15, usize::MAX, &mut rng);
        let weights: Vec<f64> = (0..15).map(|_| rng.gen_range(0.1..1.0)).collect();
        let mu = PathMeasure::normalized(Arc::clone(&g), o, paths, weights).unwrap();
        let mut f = path_measure_to_flow(&mu);
        for (corner, amt) in [([1, 1], 2.0), ([-2, 0], 3.0), ([2, -3], 1.5)] {
            let [x, y] = corner;
            let c: Vec<_> = [[x, y], [x + 1, y], [x + 1, y + 1], [x, y + 1], [x, y]].iter().map(|p| at(&g, *p)).collect();
            f.push_path(&c, amt).unwrap();
        }
        let d = flow_to_path_measure(&f, 1e-10).unwrap();
        assert!(d.cycles_cancelled >= 3);
        let back = path_measure_to_flow(&d.measure);
        for e in 0..g.num_edges() {
            assert!((back.value(e) - d.acyclic.value(e)).abs() < 1e-10);
        }
        for gauge in [EnergyGauge::quadratic(), EnergyGauge::psi(2, 1.5, 4.0).unwrap()] {
            assert!(energy(&d.acyclic, &gauge) <= energy(&f, &gauge) + 1e-15);
        }
        assert!(d.acyclic.is_conserved(1e-12));
    }

    #[test]
    fn dumps_round_trip() {
        let g = square(4);
        let o = at(&g, [0, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let paths = sample_outward_paths(&g, o, 4, usize::MAX, &mut rng);
        let mu = PathMeasure::normalized(Arc::clone(&g), o, paths, vec![0.25; 4]).unwrap();
        let mut buf = Vec::new();
        mu.write_dump(&mut buf).unwrap();
        let back = PathMeasure::read_dump(&buf[..], Arc::clone(&g), o).unwrap();
        assert_eq!(back.paths(), mu.paths());
        assert_eq!(back.weights(), mu.weights());
        let mut csv_buf = Vec::new();
        path_measure_to_flow(&mu).write_csv(&mut csv_buf).unwrap();
        assert_eq!(String::from_utf8(csv_buf).unwrap().lines().count(), g.num_edges() + 1);
    }
}
