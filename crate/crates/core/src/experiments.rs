//! Reproducible experiment driver. A run reads one TOML config, executes a
//! command over a seed list, and writes a directory holding a copy of the
//! config, a manifest and the command's CSV/JSON outputs.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bridging_transport::{bridge_sample, BridgeSample, Strategy};
use crate::chemical_distance::ap_tail_experiment;
use crate::cluster_analysis::{gap_tail_experiment, GiantCluster};
use crate::error::{Error, Result};
use crate::flows_energy::{energy, flow_to_path_measure, log_grid, validate_gauge, EnergyGauge};
use crate::lattice_geometry::{
    c_core_mask, check_subwedge_in_core, classify_gauge, Criterion, GaugeFunction, LatticeGraph, RegionSpec, Shape,
};
use crate::percolation::sample_bond;
use crate::renormalization::{block_probability, BlockProbability};
use crate::resistance_solver::{min_energy_flow, resistance_scaling};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Gauge,
    Sample,
    Clusters,
    Apdist,
    Core,
    Flow,
    Bridge,
    Resist,
    Renorm,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Gauge => "gauge",
            Command::Sample => "sample",
            Command::Clusters => "clusters",
            Command::Apdist => "apdist",
            Command::Core => "core",
            Command::Flow => "flow",
            Command::Bridge => "bridge",
            Command::Resist => "resist",
            Command::Renorm => "renorm",
        }
    }
}

fn default_j_max() -> usize {
    1_000_000
}

/// Height function of a wedge, or a gauge whose criteria sums are classified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeightConfig {
    Constant {
        c: f64,
        #[serde(default = "default_j_max")]
        j_max: usize,
    },
    Power {
        exponent: f64,
        #[serde(default = "default_j_max")]
        j_max: usize,
    },
    LogPower {
        r: f64,
        #[serde(default = "default_j_max")]
        j_max: usize,
    },
}

impl HeightConfig {
    pub fn build(&self) -> Result<GaugeFunction> {
        match *self {
            HeightConfig::Constant { c, j_max } => GaugeFunction::constant(c, j_max),
            HeightConfig::Power { exponent, j_max } => GaugeFunction::power(exponent, j_max),
            HeightConfig::LogPower { r, j_max } => GaugeFunction::log_power(r, j_max),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            HeightConfig::Constant { c, .. } => format!("constant({c})"),
            HeightConfig::Power { exponent, .. } => format!("power({exponent})"),
            HeightConfig::LogPower { r, .. } => format!("log_power({r})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeName {
    Box,
    Whole,
    Halfspace,
    Wedge,
    Subwedge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub shape: ShapeName,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Truncation box `[anchor - w, anchor + w]^d`.
    pub half_width: i32,
    #[serde(default)]
    pub height: Option<HeightConfig>,
    #[serde(default)]
    pub anchor: Option<Vec<i32>>,
}

fn default_dim() -> usize {
    2
}

impl RegionConfig {
    pub fn spec(&self) -> Result<RegionSpec> {
        let anchor = self.anchor.clone().unwrap_or_else(|| vec![0; self.dim]);
        let height = || {
            self.height
                .as_ref()
                .ok_or_else(|| config_err("region.height", "wedge regions need a height function"))?
                .build()
        };
        let shape = match self.shape {
            ShapeName::Box => Shape::Box(self.half_width),
            ShapeName::Whole => Shape::Whole,
            ShapeName::Halfspace => Shape::Halfspace,
            ShapeName::Wedge => Shape::Wedge(height()?),
            ShapeName::Subwedge => Shape::Subwedge(height()?),
        };
        RegionSpec::new(self.dim, shape, anchor)
    }

    pub fn graph(&self) -> Result<(RegionSpec, Arc<LatticeGraph>)> {
        let spec = self.spec()?;
        let graph = LatticeGraph::build(&spec, self.half_width)?;
        Ok((spec, Arc::new(graph)))
    }
}

/// Explicit seed list or a contiguous range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

impl SeedSpec {
    pub fn seeds(&self, offset: u64) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.iter().map(|s| s.wrapping_add(offset)).collect(),
            SeedSpec::Range { start, count } => (0..*count).map(|i| start.wrapping_add(i).wrapping_add(offset)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_solver_tol")]
    pub solver: f64,
    #[serde(default = "default_decomposition_tol")]
    pub decomposition: f64,
    #[serde(default = "default_classify_tol")]
    pub classify: f64,
}

fn default_solver_tol() -> f64 {
    1e-8
}

fn default_decomposition_tol() -> f64 {
    1e-9
}

fn default_classify_tol() -> f64 {
    1e-6
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { solver: default_solver_tol(), decomposition: default_decomposition_tol(), classify: default_classify_tol() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub region: Option<RegionConfig>,
    #[serde(default)]
    pub p: Option<f64>,
    /// Several occupation probabilities (renorm tables).
    #[serde(default)]
    pub ps: Vec<f64>,
    #[serde(default)]
    pub seeds: Option<SeedSpec>,
    /// Radii (resist) or block scales (renorm).
    #[serde(default)]
    pub sizes: Vec<i32>,
    /// Height functions classified by the gauge command.
    #[serde(default)]
    pub heights: Vec<HeightConfig>,
    #[serde(default)]
    pub energy: Option<EnergyGauge>,
    #[serde(default)]
    pub strategy: Option<Strategy>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub pairs: Option<usize>,
    #[serde(default)]
    pub paths: Option<usize>,
    /// C-core constant.
    #[serde(default)]
    pub c: Option<f64>,
    /// Ratio threshold for the chemical-distance harness.
    #[serde(default)]
    pub factor: Option<f64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.to_string(), message: message.into() }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::de::Deserializer::parse(text).map_err(|e| config_err("", e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(if path == "." { "" } else { &path }, e.inner().to_string())
        })
    }

    fn region(&self) -> Result<&RegionConfig> {
        self.region.as_ref().ok_or_else(|| config_err("region", "required by this command"))
    }

    fn p(&self) -> Result<f64> {
        let p = self.p.ok_or_else(|| config_err("p", "required by this command"))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(config_err("p", format!("{p} is not a probability")));
        }
        Ok(p)
    }

    fn seeds(&self, offset: u64) -> Result<Vec<u64>> {
        let s = self.seeds.as_ref().ok_or_else(|| config_err("seeds", "required by this command"))?.seeds(offset);
        if s.is_empty() {
            return Err(config_err("seeds", "empty seed list"));
        }
        Ok(s)
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed_offset: u64,
    pub threads: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Residual {
    pub seed: Option<u64>,
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed_offset: u64,
    pub seeds: Vec<u64>,
    pub threads: usize,
    pub wall_time_s: f64,
    pub residuals: Vec<Residual>,
    pub outputs: Vec<String>,
}

/// Collects the files of one run.
struct Sink<'a> {
    dir: &'a Path,
    outputs: Vec<String>,
}

impl Sink<'_> {
    fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(path)?))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        serde_json::to_writer_pretty(self.file(name)?, value)?;
        Ok(())
    }
}

#[derive(Default)]
struct Outcome {
    seeds: Vec<u64>,
    residuals: Vec<Residual>,
}

/// Runs `command` with the config text `text` and writes everything under
/// `opts.out`.
pub fn run(command: Command, text: &str, opts: &RunOptions) -> Result<RunManifest> {
    let config = ExperimentConfig::parse(text)?;
    if let Some(c) = config.command {
        if c != command {
            return Err(config_err("command", format!("config is for `{}`, not `{}`", c.name(), command.name())));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| Error::arg(format!("thread pool: {e}")))?;
    fs::create_dir_all(&opts.out)?;
    fs::write(opts.out.join("config.toml"), text)?;
    let mut sink = Sink { dir: &opts.out, outputs: vec!["config.toml".into()] };
    let start = Instant::now();
    let outcome = pool.install(|| dispatch(command, &config, opts.seed_offset, &mut sink))?;
    let manifest = RunManifest {
        version: VERSION.to_string(),
        command: command.name().to_string(),
        config_sha256: format!("{:x}", Sha256::digest(text.as_bytes())),
        seed_offset: opts.seed_offset,
        seeds: outcome.seeds,
        threads: opts.threads,
        wall_time_s: start.elapsed().as_secs_f64(),
        residuals: outcome.residuals,
        outputs: {
            let mut o = sink.outputs.clone();
            o.push("manifest.json".into());
            o
        },
    };
    sink.json("manifest.json", &manifest)?;
    Ok(manifest)
}

fn dispatch(command: Command, cfg: &ExperimentConfig, offset: u64, sink: &mut Sink<'_>) -> Result<Outcome> {
    match command {
        Command::Gauge => run_gauge(cfg, sink),
        Command::Sample => run_sample(cfg, offset, sink),
        Command::Clusters => run_clusters(cfg, offset, sink),
        Command::Apdist => run_apdist(cfg, offset, sink),
        Command::Core => run_core(cfg, sink),
        Command::Flow => run_flow(cfg, offset, sink),
        Command::Bridge => run_bridge(cfg, offset, sink),
        Command::Resist => run_resist(cfg, offset, sink),
        Command::Renorm => run_renorm(cfg, offset, sink),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GaugeRow {
    pub height: String,
    pub criterion: Criterion,
    pub verdict: String,
    pub partial_sum: f64,
    pub ln_cutoff: f64,
    pub tail_lower: f64,
    pub tail_upper: f64,
}

/// Classification of both criteria sums for every configured height.
pub fn gauge_rows(heights: &[HeightConfig], tol: f64) -> Result<Vec<GaugeRow>> {
    let mut rows = Vec::new();
    for h in heights {
        let g = h.build()?;
        for criterion in [Criterion::Lyons, Criterion::HaggstromMossel] {
            let c = classify_gauge(&g, criterion, tol);
            rows.push(GaugeRow {
                height: h.label(),
                criterion,
                verdict: c.verdict.to_string(),
                partial_sum: c.partial_sum,
                ln_cutoff: c.ln_cutoff,
                tail_lower: c.tail.lower,
                tail_upper: c.tail.upper,
            });
        }
    }
    Ok(rows)
}

fn write_rows<T: Serialize>(sink: &mut Sink<'_>, name: &str, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink.file(name)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn run_gauge(cfg: &ExperimentConfig, sink: &mut Sink<'_>) -> Result<Outcome> {
    if cfg.heights.is_empty() && cfg.energy.is_none() {
        return Err(config_err("heights", "give at least one height function or an energy gauge"));
    }
    let rows = gauge_rows(&cfg.heights, cfg.tolerances.classify)?;
    write_rows(sink, "gauge.csv", &rows)?;
    let validation = match &cfg.energy {
        Some(g) => Some(match validate_gauge(g, &log_grid(1e-6, 1.0, 1000)) {
            Ok(r) => serde_json::json!({ "gauge": g, "passed": true, "report": r }),
            Err(e) => serde_json::json!({ "gauge": g, "passed": false, "failure": e.to_string() }),
        }),
        None => None,
    };
    sink.json("summary.json", &serde_json::json!({ "classifications": rows, "validation": validation }))?;
    Ok(Outcome::default())
}

#[derive(Debug, Clone, Serialize)]
struct SampleRow {
    seed: u64,
    p: f64,
    edges: usize,
    open: usize,
    giant_size: usize,
}

fn run_sample(cfg: &ExperimentConfig, offset: u64, sink: &mut Sink<'_>) -> Result<Outcome> {
    let (_, graph) = cfg.region()?.graph()?;
    let p = cfg.p()?;
    let seeds = cfg.seeds(offset)?;
    let configs: Vec<_> = seeds.par_iter().map(|&s| sample_bond(&graph, p, s)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for c in &configs {
        c.write_dump(&mut sink.file(&format!("configs/seed_{}.bin", c.seed()))?)?;
        rows.push(SampleRow {
            seed: c.seed(),
            p,
            edges: graph.num_edges(),
            open: c.open_count(),
            giant_size: GiantCluster::find(c).map_or(0, |g| g.size()),
        });
    }
    write_rows(sink, "sample.csv", &rows)?;
    Ok(Outcome { seeds, ..Default::default() })
}

fn run_clusters(cfg: &ExperimentConfig, offset: u64, sink: &mut Sink<'_>) -> Result<Outcome> {
    let (_, graph) = cfg.region()?.graph()?;
    let seeds = cfg.seeds(offset)?;
    let tail = gap_tail_experiment(&graph, cfg.p()?, &seeds, 0, 10)?;
    tail.write_csv(sink.file("gaps.csv")?)?;
    sink.json("summary.json", &tail)?;
    Ok(Outcome { seeds, ..Default::default() })
}

fn run_apdist(cfg: &ExperimentConfig, offset: u64, sink: &mut Sink<'_>) -> Result<Outcome> {
    let (_, graph) = cfg.region()?.graph()?;
    let seeds = cfg.seeds(offset)?;
    let pairs = cfg.pairs.unwrap_or(100);
    let factor = cfg.factor.unwrap_or(3.0);
    let ap = ap_tail_experiment(&graph, cfg.p()?, pairs, &seeds)?;
    ap.write_csv(sink.file("pairs.csv")?)?;
    sink.json(
        "summary.json",
        &serde_json::json!({ "factor": factor, "fraction_above": ap.fraction_above(factor), "result": ap }),
    )?;
    Ok(Outcome { seeds, ..Default::default() })
}

#[derive(Debug, Clone, Serialize)]
struct CoreRow {
    x: i32,
    region_vertices: usize,
    core_vertices: usize,
}

fn run_core(cfg: &ExperimentConfig, sink: &mut Sink<'_>) -> Result<Outcome> {
    let region = cfg.region()?;
    let (spec, graph) = region.graph()?;
    let c = cfg.c.ok_or_else(|| config_err("c", "required by this command"))?;
    let mask = c_core_mask(&graph, c, &spec.anchor)?;
    let lo = graph.vertex_bounds().0[0];
    let hi = graph.vertex_bounds().1[0];
    let mut rows: Vec<CoreRow> = (lo..=hi).map(|x| CoreRow { x, region_vertices: 0, core_vertices: 0 }).collect();
    for v in 0..graph.num_vertices() {
        let r = &mut rows[(graph.coord(v)[0] - lo) as usize];
        r.region_vertices += 1;
        r.core_vertices += usize::from(mask[v]);
    }
    write_rows(sink, "core.csv", &rows)?;
    let containment = match (&spec.shape, &region.height) {
        (Shape::Wedge(_), Some(h)) => {
            let s = check_subwedge_in_core(&h.build()?, c, region.half_width)?;
            Some(serde_json::json!({ "x0": s.x0, "checked": s.checked, "violations": s.violations.len() }))
        }
        _ => None,
    };
    sink.json(
        "summary.json",
        &serde_json::json!({
            "region_vertices": graph.num_vertices(),
            "core_vertices": mask.iter().filter(|&&m| m).count(),
            "subwedge_containment": containment,
        }),
    )?;
    Ok(Outcome::default())
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowRow {
    pub seed: u64,
    pub energy: f64,
    pub quadratic_energy: f64,
    pub newton_steps: usize,
    pub projected_gradient: f64,
    pub paths: usize,
    pub cycles_cancelled: usize,
    pub decomposition_residual: f64,
    pub conservation_error: f64,
}

fn run_flow(cfg: &ExperimentConfig, offset: u64, sink: &mut Sink<'_>) -> Result<Outcome> {
    let region = cfg.region()?;
    let (spec, graph) = region.graph()?;
    let p = cfg.p()?;
    let seeds = cfg.seeds(offset)?;
    let gauge = cfg.energy.unwrap_or_else(EnergyGauge::quadratic);
    let tol = cfg.tolerances.solver;
    let dtol = cfg.tolerances.decomposition;
    let source = graph.vertex_at(&spec.anchor).ok_or_else(|| config_err("region.anchor", "anchor outside region"))?;
    let sinks = graph.shell(&spec.anchor, region.half_width);
    let results: Vec<Result<Option<FlowRow>>> = seeds
        .par_iter()
        .map(|&seed| {
            let config = sample_bond(&graph, p, seed)?;
            match GiantCluster::find(&config) {
                Some(g) if g.contains(source) => {}
                _ => return Ok(None),
            }
            let open = |e| config.is_open(e);
            let m = min_energy_flow(&graph, &open, &gauge, source, &sinks, tol)?;
            let d = flow_to_path_measure(&m.flow, dtol)?;
            Ok(Some(FlowRow {
                seed,
                energy: energy(&m.flow, &gauge),
                quadratic_energy: m.flow.quadratic_energy(),
                newton_steps: m.newton_steps,
                projected_gradient: m.projected_gradient,
                paths: d.measure.len(),
                cycles_cancelled: d.cycles_cancelled,
                decomposition_residual: d.residual,
                conservation_error: m.flow.conservation_error(),
            }))
        })
        .collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (&seed, r) in seeds.iter().zip(results) {
        match r? {
            Some(row) => rows.push(row),
            None => skipped.push(seed),
        }
    }
    write_rows(sink, "flows.csv", &rows)?;
    sink.json("summary.json", &serde_json::json!({ "gauge": gauge, "solved": rows.len(), "skipped_seeds": skipped }))?;
    let residuals = rows
        .iter()
        .map(|r| Residual { seed: Some(r.seed), label: "projected_gradient".into(), value: r.projected_gradient })
        .collect();
    Ok(Outcome { seeds, residuals })
}

#[derive(Debug, Clone, Serialize)]
pub struct BridgeRow {
    pub seed: u64,
    pub p: f64,
    pub paths: usize,
    pub events: usize,
    pub fallbacks: usize,
    pub support_ok: bool,
    pub identity_ok: bool,
    pub conservation_error: f64,
    pub quadratic_lhs: f64,
    pub quadratic_rhs: f64,
    pub gauge_lhs: f64,
    pub gauge_rhs: f64,
    pub max_s: usize,
    pub max_t: usize,
}

impl From<&BridgeSample> for BridgeRow {
    fn from(s: &BridgeSample) -> Self {
        Self {
            seed: s.seed,
            p: s.p,
            paths: s.paths,
            events: s.events,
            fallbacks: s.fallbacks,
            support_ok: s.support_ok,
            identity_ok: s.identity_ok,
            conservation_error: s.conservation_error,
            quadratic_lhs: s.quadratic.quadratic_lhs,
            quadratic_rhs: s.quadratic.quadratic_rhs,
            gauge_lhs: s.gauge.gauge_lhs,
            gauge_rhs: s.gauge.gauge_rhs,
            max_s: s.gauge.max_s,
            max_t: s.gauge.max_t,
        }
    }
}

/// Bridging samples for every seed; seeds without a usable giant cluster
/// are returned separately.
pub fn bridge_batch(
    graph: &Arc<LatticeGraph>,
    p: f64,
    seeds: &[u64],
    strategy: Strategy,
    paths: usize,
    gauge: &EnergyGauge,
) -> Result<(Vec<BridgeSample>, Vec<u64>)> {
    let results: Vec<Result<BridgeSample>> =
        seeds.par_iter().map(|&s| bridge_sample(graph, p, s, strategy, paths, gauge)).collect();
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for (&seed, r) in seeds.iter().zip(results) {
        match r {
            Ok(s) => samples.push(s),
            Err(Error::InsufficientData(_)) => skipped.push(seed),
            Err(e) => return Err(e),
        }
    }
    Ok((samples, skipped))
}

fn run_bridge(cfg: &ExperimentConfig, offset: u64, sink: &mut Sink<'_>) -> Result<Outcome> {
    let (_, graph) = cfg.region()?.graph()?;
    let p = cfg.p()?;
    let seeds = cfg.seeds(offset)?;
    let gauge = match cfg.energy {
        Some(g) => g,
        None => EnergyGauge::psi(2, 1.5, 4.0)?,
    };
    let strategy = cfg.strategy.unwrap_or(Strategy::Shortest);
    let (samples, skipped) = bridge_batch(&graph, p, &seeds, strategy, cfg.paths.unwrap_or(50), &gauge)?;
    let rows: Vec<BridgeRow> = samples.iter().map(BridgeRow::from).collect();
    write_rows(sink, "bridge.csv", &rows)?;
    let mut w = csv::Writer::from_writer(sink.file("events.csv")?);
    w.write_record(["seed", "path_id", "gap_id", "a", "b", "removed_len", "bridge_len", "strategy"])?;
    for s in &samples {
        for ev in s.transport.events() {
            w.write_record([
                s.seed.to_string(),
                ev.path_id.to_string(),
                ev.gap_id.map_or_else(String::new, |g| g.to_string()),
                ev.a.to_string(),
                ev.b.to_string(),
                (ev.removed.len() - 1).to_string(),
                (ev.bridge.len() - 1).to_string(),
                ev.strategy.to_string(),
            ])?;
        }
    }
    w.flush()?;
    drop(w);
    let events: usize = rows.iter().map(|r| r.events).sum();
    sink.json(
        "summary.json",
        &serde_json::json!({
            "strategy": strategy,
            "gauge": gauge,
            "samples": rows.len(),
            "skipped_seeds": skipped,
            "events": events,
            "identity": events == 0,
            "all_supported": rows.iter().all(|r| r.support_ok),
            "max_conservation_error": rows.iter().map(|r| r.conservation_error).fold(0.0, f64::max),
        }),
    )?;
    let residuals = rows
        .iter()
        .map(|r| Residual { seed: Some(r.seed), label: "conservation_error".into(), value: r.conservation_error })
        .collect();
    Ok(Outcome { seeds, residuals })
}

fn run_resist(cfg: &ExperimentConfig, offset: u64, sink: &mut Sink<'_>) -> Result<Outcome> {
    let spec = cfg.region()?.spec()?;
    let seeds = cfg.seeds(offset)?;
    if cfg.sizes.is_empty() {
        return Err(config_err("sizes", "resist needs the list of radii"));
    }
    let curve = resistance_scaling(&spec, cfg.p()?, &cfg.sizes, &seeds, cfg.tolerances.solver)?;
    curve.write_csv(sink.file("resistance.csv")?)?;
    sink.json("summary.json", &curve)?;
    let residuals = curve
        .rows
        .iter()
        .map(|r| Residual { seed: Some(r.seed), label: format!("R(n={})", r.n), value: r.residual })
        .collect();
    Ok(Outcome { seeds, residuals })
}

fn run_renorm(cfg: &ExperimentConfig, offset: u64, sink: &mut Sink<'_>) -> Result<Outcome> {
    let dim = cfg.region.as_ref().map_or(2, |r| r.dim);
    let seeds = cfg.seeds(offset)?;
    let ps: Vec<f64> = if cfg.ps.is_empty() { vec![cfg.p()?] } else { cfg.ps.clone() };
    if cfg.sizes.is_empty() {
        return Err(config_err("sizes", "renorm needs the list of block scales"));
    }
    let mut rows = Vec::new();
    for &p in &ps {
        for &n in &cfg.sizes {
            rows.push(block_probability(dim, p, n, &seeds)?);
        }
    }
    BlockProbability::write_csv(&rows, sink.file("blocks.csv")?)?;
    sink.json("summary.json", &rows)?;
    Ok(Outcome { seeds, ..Default::default() })
}
