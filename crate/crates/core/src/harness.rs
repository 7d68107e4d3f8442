//! Config-driven pipeline stages and the files they write.
//!
//! Every output starts with `#` header lines (or a `provenance` object in
//! JSON) carrying the config hash and seeds. Nothing time- or host-dependent
//! is written, so rerunning a config reproduces each file byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::central::{mahalanobis, solve_central};
use crate::diffusion::{line_search_step_size, run, Network, RunConfig, TrajectoryLog};
use crate::error::{Error, Result};
use crate::graph::{
    connected_knn_edges, contraction_factor, metropolis_weights, radius_edges, random_activation,
    random_sphere_points, GraphStats, MixingSchedule, TimeVaryingGraph,
};
use crate::learner::{read_schedule, train, write_schedule, LearnerConfig, TrainingTrace};
use crate::linalg::{fmt_full, mean};
use crate::metrics::{epoch_errors, iterations_to_tolerance, log_msd_fit, IterationMetrics};
use crate::scenario::{draw_stations, generate_with_stations, load_station_coordinates, Scenario, ScenarioConfig, Station};
use crate::theory::{
    block_decay, check_lemmas, compute_constants, spectral_radius_h, stepsize_admissible, unit_eigenvalue_slope,
    BlockDecay, BlockSystem, LemmaReport, StepSizeCheck, TheoryConstants,
};

pub const GRAPH_FILE: &str = "graph.txt";
pub const SCHEDULE_FILE: &str = "schedule.txt";
pub const TRAINING_FILE: &str = "training.csv";
pub const SCENARIO_FILE: &str = "scenario.json";
pub const BASELINE_FILE: &str = "baseline.csv";
pub const THEORY_FILE: &str = "theory.txt";
pub const SUMMARY_FILE: &str = "summary.json";

pub const LEARNED: &str = "learned";
pub const METROPOLIS: &str = "metropolis";

/// Step for the central-difference eigenvalue slope at ω = 0.
const SLOPE_STEP: f64 = 1e-7;

/// Windows whose block maxima fall below this fraction of the first are
/// left out of the decay estimate (they sit at the rounding floor).
const DECAY_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    /// k nearest neighbours over station ECEF coordinates, bridged until connected.
    Knn,
    /// Stations closer than `radius_m`.
    Radius,
    /// k nearest neighbours over random unit-sphere points drawn from the graph seed.
    SphereKnn,
    Ring,
    Path,
    Complete,
    /// Read from `edge_file`.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    /// Number of stations R; also sets the scenario's station count.
    pub nodes: usize,
    pub construction: Construction,
    pub k: usize,
    pub radius_m: f64,
    pub window: usize,
    pub seed: u64,
    /// Per-snapshot edge activation probability; 1 repeats the base graph.
    pub activation: f64,
    pub edge_file: Option<PathBuf>,
    /// `id,lat,lon,height` rows; stations are drawn from the scenario region when absent.
    pub station_file: Option<PathBuf>,
}

impl Default for GraphSection {
    fn default() -> Self {
        Self {
            nodes: 20,
            construction: Construction::Knn,
            k: 4,
            radius_m: 1.5e6,
            window: 5,
            seed: 0,
            activation: 1.0,
            edge_file: None,
            station_file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleSource {
    Learned,
    /// Single lazy Metropolis matrix on the union graph, applied every iteration.
    Metropolis,
}

impl std::str::FromStr for Construction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "knn" => Construction::Knn,
            "radius" => Construction::Radius,
            "sphere-knn" => Construction::SphereKnn,
            "ring" => Construction::Ring,
            "path" => Construction::Path,
            "complete" => Construction::Complete,
            "file" => Construction::File,
            other => {
                return Err(Error::Config(format!(
                    "unknown construction `{other}` (knn, radius, sphere-knn, ring, path, complete, file)"
                )))
            }
        })
    }
}

impl std::str::FromStr for ScheduleSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(ScheduleSource::Learned),
            "metropolis" => Ok(ScheduleSource::Metropolis),
            other => Err(Error::Config(format!("unknown schedule `{other}` (learned, metropolis)"))),
        }
    }
}

impl ScheduleSource {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleSource::Learned => LEARNED,
            ScheduleSource::Metropolis => METROPOLIS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Fixed step size. When absent, a halving line search starting at 2/L picks one.
    pub step_size: Option<f64>,
    pub max_iters: usize,
    pub schedule: ScheduleSource,
    pub schedule_file: Option<PathBuf>,
    pub scenario_file: Option<PathBuf>,
    pub log_every: usize,
    /// MSD threshold for the iterations-to-tolerance comparison.
    pub tolerance: f64,
    /// Ratio between consecutive line-search candidates.
    pub line_search_shrink: f64,
    pub line_search_candidates: usize,
    pub line_search_iters: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            step_size: None,
            max_iters: 5_000,
            schedule: ScheduleSource::Learned,
            schedule_file: None,
            scenario_file: None,
            log_every: 1,
            tolerance: 1e-6,
            line_search_shrink: 0.5,
            line_search_candidates: 10,
            line_search_iters: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("gadiff-out") }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSection,
    pub learner: LearnerConfig,
    pub scenario: ScenarioConfig,
    pub run: RunSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub graph_seed: u64,
    pub learner_seed: u64,
    pub scenario_seed: u64,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            Error::parse(origin, line, "config", e.message())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    /// Applies the keys present in `text` on top of `self`; keys the text
    /// does not mention keep their current values.
    pub fn overlay_toml(&self, text: &str, origin: &str) -> Result<Self> {
        Self::from_toml(text, origin)?;
        let mut base = toml::Table::try_from(self).map_err(|e| Error::Format(e.to_string()))?;
        let top: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::parse(origin, 0, "config", e.message()))?;
        merge_tables(&mut base, top);
        let cfg: Self = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| Error::parse(origin, 0, "config", e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn overlay_file(&self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.overlay_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let g = &self.graph;
        if g.nodes == 0 || g.window == 0 {
            return bad("graph.nodes and graph.window must be positive");
        }
        if g.k == 0 {
            return bad("graph.k must be positive");
        }
        if !(g.activation > 0.0 && g.activation <= 1.0) {
            return bad("graph.activation must lie in (0, 1]");
        }
        if g.construction == Construction::File && g.edge_file.is_none() {
            return bad("graph.construction = \"file\" needs graph.edge_file");
        }
        self.learner.validate()?;
        self.scenario_config().validate()?;
        let r = &self.run;
        if r.step_size.is_some_and(|mu| !(mu >= 0.0 && mu.is_finite())) {
            return bad("run.step_size must be finite and nonnegative");
        }
        if r.max_iters == 0 || r.log_every == 0 || r.line_search_candidates == 0 || r.line_search_iters == 0 {
            return bad("run iteration counts must be positive");
        }
        if !(r.line_search_shrink > 0.0 && r.line_search_shrink < 1.0) {
            return bad("run.line_search_shrink must lie in (0, 1)");
        }
        if !(r.tolerance > 0.0) {
            return bad("run.tolerance must be positive");
        }
        Ok(())
    }

    /// Scenario settings with the station count taken from the graph section.
    pub fn scenario_config(&self) -> ScenarioConfig {
        ScenarioConfig {
            stations: self.graph.nodes,
            ..self.scenario.clone()
        }
    }

    /// SHA-256 of the canonical TOML form, ignoring the output directory.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir = PathBuf::new();
        c.scenario.stations = c.graph.nodes;
        let text = c.to_toml().unwrap_or_default();
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_sha256: self.config_hash(),
            graph_seed: self.graph.seed,
            learner_seed: self.learner.init_seed,
            scenario_seed: self.scenario.seed,
        }
    }

    pub fn header(&self, artifact: &str) -> Vec<String> {
        let p = self.provenance();
        vec![
            format!("gadiff {artifact}"),
            format!("config_sha256 {}", p.config_sha256),
            format!("seeds graph={} learner={} scenario={}", p.graph_seed, p.learner_seed, p.scenario_seed),
        ]
    }

    pub fn output_path(&self, name: &str) -> PathBuf {
        self.output.dir.join(name)
    }

    fn scenario_path(&self) -> PathBuf {
        self.run.scenario_file.clone().unwrap_or_else(|| self.output_path(SCENARIO_FILE))
    }

    fn schedule_path(&self) -> PathBuf {
        self.run.schedule_file.clone().unwrap_or_else(|| self.output_path(SCHEDULE_FILE))
    }
}

fn merge_tables(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge_tables(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn staged<T>(stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| e.in_stage(stage))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_text(header: &[String], columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    let _ = writeln!(out, "{}", columns.join(","));
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

fn opt_usize(v: Option<usize>) -> String {
    v.map_or_else(String::new, |n| n.to_string())
}

fn write_json<T: Serialize>(path: &Path, provenance: &Provenance, body: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Wrapped<'a, T> {
        provenance: &'a Provenance,
        #[serde(flatten)]
        body: &'a T,
    }
    let text = serde_json::to_string_pretty(&Wrapped { provenance, body }).map_err(|e| Error::Format(e.to_string()))?;
    write_file(path, &(text + "\n"))
}

/// Station coordinates from `graph.station_file`, or drawn from the scenario region.
pub fn stations(cfg: &ExperimentConfig) -> Result<Vec<Station>> {
    match &cfg.graph.station_file {
        Some(path) => {
            let s = load_station_coordinates(path)?;
            if s.len() != cfg.graph.nodes {
                return Err(Error::Config(format!(
                    "{} lists {} stations but graph.nodes is {}",
                    path.display(),
                    s.len(),
                    cfg.graph.nodes
                )));
            }
            Ok(s)
        }
        None => draw_stations(&cfg.scenario_config()),
    }
}

pub fn build_graph(cfg: &ExperimentConfig, stations: &[Station]) -> Result<TimeVaryingGraph> {
    let g = &cfg.graph;
    let n = g.nodes;
    let ecef = || stations.iter().map(|s| s.ecef).collect::<Vec<_>>();
    let base = match g.construction {
        Construction::Knn => connected_knn_edges(&ecef(), g.k),
        Construction::Radius => radius_edges(&ecef(), g.radius_m),
        Construction::SphereKnn => {
            let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
            connected_knn_edges(&random_sphere_points(n, &mut rng), g.k)
        }
        Construction::Ring => TimeVaryingGraph::ring(n, 1)?.union_edges(),
        Construction::Path => TimeVaryingGraph::path(n, 1)?.union_edges(),
        Construction::Complete => TimeVaryingGraph::complete(n, 1)?.union_edges(),
        Construction::File => {
            let path = g.edge_file.as_deref().unwrap_or(Path::new(""));
            let graph = TimeVaryingGraph::read_edge_list(path)?;
            if graph.node_count() != n || graph.window() != g.window {
                return Err(Error::Config(format!(
                    "{} has R = {}, tau = {}; config asks for R = {n}, tau = {}",
                    path.display(),
                    graph.node_count(),
                    graph.window(),
                    g.window
                )));
            }
            return Ok(graph);
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed.wrapping_add(1));
    TimeVaryingGraph::new(n, random_activation(&base, g.window, g.activation, &mut rng))
}

pub fn gen_graph(cfg: &ExperimentConfig) -> Result<(TimeVaryingGraph, GraphStats)> {
    staged("gen-graph", || {
        let graph = build_graph(cfg, &stations(cfg)?)?;
        let stats = graph.stats();
        let mut header = cfg.header("edge list");
        header.push(format!(
            "R {} union_edges {} diameter {} radius {}",
            stats.nodes,
            stats.union_edges,
            opt_usize(stats.diameter),
            opt_usize(stats.radius)
        ));
        write_file(&cfg.output_path(GRAPH_FILE), &graph.to_edge_list(&header))?;
        Ok((graph, stats))
    })
}

fn read_graph(cfg: &ExperimentConfig) -> Result<TimeVaryingGraph> {
    TimeVaryingGraph::read_edge_list(&cfg.output_path(GRAPH_FILE))
}

pub fn learn_schedule(cfg: &ExperimentConfig, graph: &TimeVaryingGraph) -> Result<(MixingSchedule, TrainingTrace)> {
    staged("learn-schedule", || {
        let (schedule, trace) = train(graph, &cfg.learner)?;
        let mut header = cfg.header("mixing schedule");
        header.push(format!(
            "clamped_entries {} final_sinkhorn_residual {}",
            trace.clamped_entries,
            fmt_full(trace.final_sinkhorn_residual)
        ));
        let path = cfg.output_path(SCHEDULE_FILE);
        write_file(&path, "")?;
        write_schedule(&path, &schedule, trace.final_epsilon, &header)?;
        let rows = trace.losses.iter().enumerate().map(|(i, l)| vec![i.to_string(), fmt_full(*l)]);
        write_file(
            &cfg.output_path(TRAINING_FILE),
            &csv_text(&cfg.header("training trace"), &["iteration", "loss"], rows),
        )?;
        Ok((schedule, trace))
    })
}

/// Reads the graph written by `gen_graph` and trains on it.
pub fn learn_schedule_from_files(cfg: &ExperimentConfig) -> Result<(MixingSchedule, TrainingTrace)> {
    let graph = staged("learn-schedule", || read_graph(cfg))?;
    learn_schedule(cfg, &graph)
}

pub fn gen_scenario(cfg: &ExperimentConfig) -> Result<Scenario> {
    staged("gen-scenario", || {
        let scenario = generate_with_stations(&cfg.scenario_config(), Some(stations(cfg)?))?;
        write_json(&cfg.output_path(SCENARIO_FILE), &cfg.provenance(), &scenario)?;
        Ok(scenario)
    })
}

/// Lazy Metropolis weights on the union-over-window graph, as a one-layer schedule.
pub fn metropolis_schedule(graph: &TimeVaryingGraph) -> Result<MixingSchedule> {
    let union = TimeVaryingGraph::repeated(graph.node_count(), graph.union_edges(), 1)?;
    MixingSchedule::new(vec![metropolis_weights(&union, 0, false)?], true)
}

pub fn choose_step_size(cfg: &ExperimentConfig, network: &Network, schedule: &MixingSchedule) -> Result<f64> {
    match cfg.run.step_size {
        Some(mu) => Ok(mu),
        None => line_search_step_size(
            network,
            schedule,
            2.0 / network.smoothness().l,
            cfg.run.line_search_shrink,
            cfg.run.line_search_candidates,
            cfg.run.line_search_iters,
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRun {
    pub epoch: usize,
    pub iterations: usize,
    pub final_msd: f64,
    pub iterations_to_tolerance: Option<usize>,
    /// max_r ‖z_r − ẑ‖ against the centralized solution.
    pub max_deviation: f64,
    pub e_pos: f64,
    pub e_z: f64,
    pub mahalanobis: f64,
    /// Slope and R² of log₁₀ MSD over iterations [100, 0.8K].
    pub log_msd_slope: Option<f64>,
    pub log_msd_r_squared: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub step_size: f64,
    pub epsilon: f64,
    pub epochs: Vec<EpochRun>,
}

const TRAJECTORY_COLUMNS: [&str; 7] =
    ["iter", "msd", "grad_norm", "disagreement", "tracking", "avg_opt_error", "inexact_grad"];

fn trajectory_row(m: &IterationMetrics) -> Vec<String> {
    let mut row = vec![m.iter.to_string()];
    row.extend(
        [m.msd, m.grad_norm, m.disagreement, m.tracking, m.avg_opt_error, m.inexact_grad]
            .iter()
            .map(|v| fmt_full(*v)),
    );
    row
}

pub fn trajectory_file(method: &str, epoch: usize) -> String {
    format!("trajectory_{method}_epoch{epoch}.csv")
}

pub fn run_summary_file(method: &str) -> String {
    format!("run_{method}.csv")
}

/// Runs every epoch of `scenario` with one schedule. The step size comes
/// from `step_size`, else from the config (fixed or line search on epoch 0).
pub fn run_method(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    schedule: &MixingSchedule,
    method: &str,
    step_size: Option<f64>,
) -> Result<(MethodSummary, Vec<TrajectoryLog>)> {
    staged("run", || {
        let mut mu = step_size;
        let mut epochs = Vec::with_capacity(scenario.epochs.len());
        let mut logs = Vec::with_capacity(scenario.epochs.len());
        for (e, epoch) in scenario.epochs.iter().enumerate() {
            let network = Network::from_systems(&epoch.systems)?;
            let step = match mu {
                Some(v) => v,
                None => *mu.insert(choose_step_size(cfg, &network, schedule)?),
            };
            let rc = RunConfig {
                step_size: step,
                max_iters: cfg.run.max_iters,
                log_every: cfg.run.log_every,
                ..RunConfig::default()
            };
            let (state, log) = run(&network, schedule, &rc, e)?;
            let central = solve_central(&epoch.systems)?;
            let x_hat: Vec<_> = network.objectives().iter().zip(&state.z).map(|(o, z)| o.local_x(z)).collect();
            let z_bar = mean(&state.z);
            let errors = epoch_errors(&x_hat, &z_bar, &epoch.systems, &scenario.z_true);
            let k = cfg.run.max_iters;
            let fit = log_msd_fit(&log.history, 100, k * 4 / 5);
            let last = log.final_metrics().copied().unwrap_or_default();
            epochs.push(EpochRun {
                epoch: e,
                iterations: k,
                final_msd: last.msd,
                iterations_to_tolerance: iterations_to_tolerance(&log.history, cfg.run.tolerance),
                max_deviation: state.z.iter().map(|z| (z - &central.z_hat).norm()).fold(0.0, f64::max),
                e_pos: errors.e_pos,
                e_z: errors.e_z,
                mahalanobis: mahalanobis(&z_bar, &scenario.z_true, &central.precision)?,
                log_msd_slope: fit.map(|f| f.slope),
                log_msd_r_squared: fit.map(|f| f.r_squared),
            });
            let header = cfg.header(&format!("trajectory {method} epoch {e} step_size {}", fmt_full(step)));
            let rows = log.logged();
            write_file(
                &cfg.output_path(&trajectory_file(method, e)),
                &csv_text(&header, &TRAJECTORY_COLUMNS, rows.iter().map(trajectory_row)),
            )?;
            logs.push(log);
        }
        let summary = MethodSummary {
            method: method.to_string(),
            step_size: mu.unwrap_or(0.0),
            epsilon: contraction_factor(schedule)?,
            epochs,
        };
        let rows = summary.epochs.iter().map(|r| {
            vec![
                r.epoch.to_string(),
                fmt_full(summary.step_size),
                r.iterations.to_string(),
                fmt_full(r.final_msd),
                opt_usize(r.iterations_to_tolerance),
                fmt_full(r.max_deviation),
                fmt_full(r.e_pos),
                fmt_full(r.e_z),
                fmt_full(r.mahalanobis),
            ]
        });
        let columns = [
            "epoch",
            "step_size",
            "iterations",
            "final_msd",
            "iterations_to_tolerance",
            "max_deviation",
            "e_pos",
            "e_z",
            "mahalanobis",
        ];
        write_file(
            &cfg.output_path(&run_summary_file(method)),
            &csv_text(&cfg.header(&format!("run summary {method}")), &columns, rows),
        )?;
        Ok((summary, logs))
    })
}

fn read_scenario(cfg: &ExperimentConfig) -> Result<Scenario> {
    Scenario::read(&cfg.scenario_path())
}

/// Schedule named by `run.schedule`: the learned one from its file, or
/// Metropolis weights on the written graph.
fn read_run_schedule(cfg: &ExperimentConfig) -> Result<MixingSchedule> {
    match cfg.run.schedule {
        ScheduleSource::Learned => Ok(read_schedule(&cfg.schedule_path())?.0),
        ScheduleSource::Metropolis => metropolis_schedule(&read_graph(cfg)?),
    }
}

/// Standalone `run`: scenario and schedule come from files.
pub fn run_from_files(cfg: &ExperimentConfig) -> Result<MethodSummary> {
    let (scenario, schedule) = staged("run", || Ok((read_scenario(cfg)?, read_run_schedule(cfg)?)))?;
    Ok(run_method(cfg, &scenario, &schedule, cfg.run.schedule.name(), None)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineEpoch {
    pub epoch: usize,
    pub e_pos: f64,
    pub e_z: f64,
    pub mahalanobis: f64,
}

pub fn baseline(cfg: &ExperimentConfig, scenario: &Scenario) -> Result<Vec<BaselineEpoch>> {
    staged("baseline", || {
        let mut out = Vec::with_capacity(scenario.epochs.len());
        for (e, epoch) in scenario.epochs.iter().enumerate() {
            let sol = solve_central(&epoch.systems)?;
            let errors = epoch_errors(&sol.x_hat, &sol.z_hat, &epoch.systems, &scenario.z_true);
            out.push(BaselineEpoch {
                epoch: e,
                e_pos: errors.e_pos,
                e_z: errors.e_z,
                mahalanobis: mahalanobis(&sol.z_hat, &scenario.z_true, &sol.precision)?,
            });
        }
        let rows = out
            .iter()
            .map(|b| vec![b.epoch.to_string(), fmt_full(b.e_pos), fmt_full(b.e_z), fmt_full(b.mahalanobis)]);
        write_file(
            &cfg.output_path(BASELINE_FILE),
            &csv_text(&cfg.header("centralized baseline"), &["epoch", "e_pos", "e_z", "mahalanobis"], rows),
        )?;
        Ok(out)
    })
}

pub fn baseline_from_files(cfg: &ExperimentConfig) -> Result<Vec<BaselineEpoch>> {
    let scenario = staged("baseline", || read_scenario(cfg))?;
    baseline(cfg, &scenario)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheorySummary {
    pub constants: TheoryConstants,
    pub step: StepSizeCheck,
    pub rho_at_zero: f64,
    /// Moduli of the block-matrix eigenvalues at ω = 0, ascending.
    pub eigenvalues_at_zero: Vec<f64>,
    pub unit_slope: f64,
    /// −τ / (2Q).
    pub predicted_slope: f64,
    /// ρ(ℋ(μL)) and 1 − τμL/(4Q), when μ is admissible.
    pub rho_at_step: Option<f64>,
    pub rate_bound_at_step: Option<f64>,
    pub lemmas: LemmaReport,
    pub decay: Option<BlockDecay>,
}

impl TheorySummary {
    pub fn to_text(&self, header: &[String]) -> String {
        let c = &self.constants;
        let mut out = String::new();
        for h in header {
            let _ = writeln!(out, "# {h}");
        }
        let _ = writeln!(
            out,
            "L {} m {} Q {} tau {} R {} epsilon {} c_W {}",
            fmt_full(c.l),
            fmt_full(c.m),
            fmt_full(c.condition),
            c.window,
            c.nodes,
            fmt_full(c.epsilon),
            fmt_full(c.c_w)
        );
        let _ = writeln!(
            out,
            "c1 {} c2 {} c3 {} c4 {} c_P {} c_S {} c_H {} K3 {}",
            fmt_full(c.c1),
            fmt_full(c.c2),
            fmt_full(c.c3),
            fmt_full(c.c4),
            fmt_full(c.c_p),
            fmt_full(c.c_s),
            fmt_full(c.c_h),
            fmt_full(c.k3)
        );
        let _ = writeln!(
            out,
            "step_size {} admissible {} binding {}",
            fmt_full(self.step.step_size),
            self.step.admissible,
            self.step.binding
        );
        for (t, m) in self.step.terms.iter().zip(&self.step.margins) {
            let _ = writeln!(out, "bound {} {} margin {}", t.name, fmt_full(t.value), fmt_full(*m));
        }
        let eig: Vec<String> = self.eigenvalues_at_zero.iter().map(|v| fmt_full(*v)).collect();
        let _ = writeln!(out, "rho_at_zero {} eigenvalues {}", fmt_full(self.rho_at_zero), eig.join(" "));
        let _ = writeln!(
            out,
            "unit_slope {} predicted {}",
            fmt_full(self.unit_slope),
            fmt_full(self.predicted_slope)
        );
        if let (Some(rho), Some(bound)) = (self.rho_at_step, self.rate_bound_at_step) {
            let _ = writeln!(out, "rho_at_step {} rate_bound {}", fmt_full(rho), fmt_full(bound));
        }
        for check in &self.lemmas.checks {
            let _ = writeln!(out, "{check}");
        }
        match &self.decay {
            Some(d) => {
                let _ = writeln!(
                    out,
                    "block_decay windows {} ratio {} envelope {} holds {}",
                    d.windows,
                    fmt_full(d.ratio),
                    fmt_full(d.envelope),
                    d.holds()
                );
            }
            None => {
                let _ = writeln!(out, "block_decay not enough windows above the floor");
            }
        }
        out
    }
}

/// Theory report for epoch 0 of `scenario`, checked against `log` (a run of
/// that epoch with `schedule`), or against a fresh run when `log` is `None`.
pub fn check_theory(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    schedule: &MixingSchedule,
    log: Option<&TrajectoryLog>,
) -> Result<TheorySummary> {
    staged("check-theory", || {
        let epoch = scenario.epoch(0)?;
        let network = Network::from_systems(&epoch.systems)?;
        let constants = compute_constants(&network.smoothness(), schedule)?;
        let owned;
        let log = match log {
            Some(l) => l,
            None => {
                let rc = RunConfig {
                    step_size: choose_step_size(cfg, &network, schedule)?,
                    max_iters: cfg.run.max_iters,
                    ..RunConfig::default()
                };
                owned = run(&network, schedule, &rc, 0)?.1;
                &owned
            }
        };
        let mu = log.step_size;
        let blocks = BlockSystem::from_constants(&constants);
        let mut eigenvalues_at_zero: Vec<f64> = blocks.eigenvalues(0.0)?.iter().map(|z| z.norm()).collect();
        eigenvalues_at_zero.sort_by(f64::total_cmp);
        let step = stepsize_admissible(mu, &constants);
        let omega = mu * constants.l;
        let (rho_at_step, rate_bound_at_step) = if step.admissible && mu > 0.0 {
            (
                Some(spectral_radius_h(&blocks, omega)?),
                Some(1.0 - constants.window as f64 * omega / (4.0 * constants.condition)),
            )
        } else {
            (None, None)
        };
        let summary = TheorySummary {
            constants,
            step,
            rho_at_zero: spectral_radius_h(&blocks, 0.0)?,
            eigenvalues_at_zero,
            unit_slope: unit_eigenvalue_slope(&blocks, SLOPE_STEP)?,
            predicted_slope: -(constants.window as f64) / (2.0 * constants.condition),
            rho_at_step,
            rate_bound_at_step,
            lemmas: check_lemmas(log, &constants)?,
            decay: block_decay(log, &constants, DECAY_FLOOR),
        };
        write_file(&cfg.output_path(THEORY_FILE), &summary.to_text(&cfg.header("theory report")))?;
        Ok(summary)
    })
}

pub fn check_theory_from_files(cfg: &ExperimentConfig) -> Result<TheorySummary> {
    let (scenario, schedule) = staged("check-theory", || Ok((read_scenario(cfg)?, read_run_schedule(cfg)?)))?;
    check_theory(cfg, &scenario, &schedule, None)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochComparison {
    pub epoch: usize,
    pub learned: Option<usize>,
    pub metropolis: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineSummary {
    pub graph: GraphStats,
    pub tolerance: f64,
    pub step_size: f64,
    pub learned: MethodSummary,
    pub metropolis: MethodSummary,
    pub baseline: Vec<BaselineEpoch>,
    pub theory: TheorySummary,
    pub comparison: Vec<EpochComparison>,
    /// Learned schedule reached the tolerance in strictly fewer iterations on every epoch.
    pub learned_faster: bool,
}

/// Graph → schedule → scenario → learned run → Metropolis run → baseline →
/// theory report, then `summary.json`. Both runs share the step size chosen
/// for the learned schedule.
pub fn pipeline(cfg: &ExperimentConfig) -> Result<PipelineSummary> {
    let (graph, stats) = gen_graph(cfg)?;
    let (learned_schedule, _) = learn_schedule(cfg, &graph)?;
    let scenario = gen_scenario(cfg)?;
    let (learned, logs) = run_method(cfg, &scenario, &learned_schedule, LEARNED, None)?;
    let metro_schedule = staged("run", || metropolis_schedule(&graph))?;
    let (metropolis, _) = run_method(cfg, &scenario, &metro_schedule, METROPOLIS, Some(learned.step_size))?;
    let baseline = baseline(cfg, &scenario)?;
    let theory = check_theory(cfg, &scenario, &learned_schedule, logs.first())?;
    let comparison: Vec<EpochComparison> = learned
        .epochs
        .iter()
        .zip(&metropolis.epochs)
        .map(|(a, b)| EpochComparison {
            epoch: a.epoch,
            learned: a.iterations_to_tolerance,
            metropolis: b.iterations_to_tolerance,
        })
        .collect();
    let learned_faster = comparison.iter().all(|c| match (c.learned, c.metropolis) {
        (Some(a), Some(b)) => a < b,
        (Some(_), None) => true,
        _ => false,
    });
    let summary = PipelineSummary {
        graph: stats,
        tolerance: cfg.run.tolerance,
        step_size: learned.step_size,
        learned,
        metropolis,
        baseline,
        theory,
        comparison,
        learned_faster,
    };
    staged("pipeline", || write_json(&cfg.output_path(SUMMARY_FILE), &cfg.provenance(), &summary))?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.graph.nodes = 5;
        cfg.graph.window = 2;
        cfg.graph.construction = Construction::Ring;
        cfg.learner.step_size = 1.0;
        cfg.learner.max_iters = 50;
        cfg.scenario.satellites = 8;
        cfg.scenario.epochs = 1;
        cfg.run.step_size = Some(0.01);
        cfg.run.max_iters = 50;
        cfg.output.dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg = ExperimentConfig::from_toml("[graph]\nnodes = 7\n[run]\nstep_size = 0.02\n", "mem").unwrap();
        assert_eq!(cfg.graph.nodes, 7);
        assert_eq!(cfg.scenario_config().stations, 7);
        assert_eq!(cfg.run.step_size, Some(0.02));
        assert_eq!(cfg.learner, LearnerConfig::default());
    }

    #[test]
    fn unknown_key_is_a_parse_error_with_line() {
        let err = ExperimentConfig::from_toml("[graph]\nnodes = 7\n\n[run]\nbogus = 1\n", "cfg.toml").unwrap_err();
        match err {
            Error::Parse { path, line, .. } => {
                assert_eq!(path, "cfg.toml");
                assert_eq!(line, 5);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn overlay_keeps_unmentioned_values() {
        let mut flags = ExperimentConfig::default();
        flags.graph.nodes = 9;
        flags.run.max_iters = 77;
        let cfg = flags.overlay_toml("[run]\nmax_iters = 12\n", "mem").unwrap();
        assert_eq!(cfg.graph.nodes, 9);
        assert_eq!(cfg.run.max_iters, 12);
        assert!(flags.overlay_toml("[run]\nmax_iter = 12\n", "mem").is_err());
    }

    #[test]
    fn toml_round_trip_and_hash_ignores_output_dir() {
        let mut cfg = ExperimentConfig::default();
        cfg.graph.seed = 9;
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap(), "mem").unwrap();
        assert_eq!(back, cfg);
        let mut moved = cfg.clone();
        moved.output.dir = PathBuf::from("elsewhere");
        assert_eq!(moved.config_hash(), cfg.config_hash());
        moved.scenario.seed = 1;
        assert_ne!(moved.config_hash(), cfg.config_hash());
        assert_eq!(cfg.config_hash().len(), 64);
    }

    #[test]
    fn ring_request_gives_ring_stats() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.graph.nodes = 4;
        let (_, stats) = gen_graph(&cfg).unwrap();
        assert_eq!(stats.union_edges, 4);
        assert_eq!(stats.diameter, Some(2));
        let text = std::fs::read_to_string(dir.path().join(GRAPH_FILE)).unwrap();
        assert!(text.starts_with("# gadiff edge list\n# config_sha256 "));
    }

    #[test]
    fn missing_scenario_names_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        let err = run_from_files(&cfg).unwrap_err();
        assert!(err.to_string().starts_with("run: "), "{err}");
        assert!(err.to_string().contains(SCENARIO_FILE), "{err}");
    }

    #[test]
    fn stages_chain_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        gen_graph(&cfg).unwrap();
        learn_schedule_from_files(&cfg).unwrap();
        gen_scenario(&cfg).unwrap();
        let summary = run_from_files(&cfg).unwrap();
        assert_eq!(summary.epochs.len(), 1);
        assert_eq!(baseline_from_files(&cfg).unwrap().len(), 1);
        check_theory_from_files(&cfg).unwrap();
        for f in [GRAPH_FILE, SCHEDULE_FILE, TRAINING_FILE, SCENARIO_FILE, BASELINE_FILE, THEORY_FILE] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let csv = std::fs::read_to_string(dir.path().join(trajectory_file(LEARNED, 0))).unwrap();
        assert_eq!(csv.lines().nth(3), Some(TRAJECTORY_COLUMNS.join(",").as_str()));
        assert_eq!(csv.lines().count(), 4 + 51);
    }
}
