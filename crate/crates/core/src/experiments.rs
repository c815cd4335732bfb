//! Seeded batch runs over scenario sweeps, aggregation, and CSV/JSON export.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::baselines::{GreedyPolicy, HeuristicPolicy};
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::forwarding::{deviation_grid, EpisodeMetrics, EVENT_LOG_HEADER};
use crate::ippo::{read_header, Trainer};
use crate::mobility::write_trajectory_csv;
use crate::sim::{RoutingPolicy, Simulation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    IppoDm,
    Heuristic,
    Greedy,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::IppoDm => "ippo-dm",
            PolicyKind::Heuristic => "heuristic",
            PolicyKind::Greedy => "greedy",
        })
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ippo-dm" => Ok(PolicyKind::IppoDm),
            "heuristic" => Ok(PolicyKind::Heuristic),
            "greedy" => Ok(PolicyKind::Greedy),
            _ => Err(Error::Experiment(format!(
                "unknown policy {s:?}; expected ippo-dm, heuristic or greedy"
            ))),
        }
    }
}

/// Traffic-size presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Load {
    Low,
    High,
}

impl Load {
    pub fn size_range_mb(self) -> [f64; 2] {
        match self {
            Load::Low => [1.0, 1.5],
            Load::High => [1.5, 2.0],
        }
    }
}

impl fmt::Display for Load {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Load::Low => "low",
            Load::High => "high",
        })
    }
}

impl FromStr for Load {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Load::Low),
            "high" => Ok(Load::High),
            _ => Err(Error::Experiment(format!("unknown load {s:?}; expected low or high"))),
        }
    }
}

/// A swept config key with its values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sweep {
    Uavs(Vec<usize>),
    Neighbors(Vec<usize>),
}

impl Sweep {
    pub fn key(&self) -> &'static str {
        match self {
            Sweep::Uavs(_) => "uavs",
            Sweep::Neighbors(_) => "n",
        }
    }

    pub fn values(&self) -> &[usize] {
        match self {
            Sweep::Uavs(v) | Sweep::Neighbors(v) => v,
        }
    }

    fn apply(&self, cfg: &mut SimConfig, value: usize) {
        match self {
            Sweep::Uavs(_) => cfg.num_uavs = value,
            Sweep::Neighbors(_) => cfg.max_neighbors = value,
        }
    }
}

/// Parses `uavs=8,16,24` or `n=2..8` (inclusive range).
impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Experiment(format!("bad sweep {s:?}; expected uavs=8,16 or n=2..8"));
        let (key, list) = s.split_once('=').ok_or_else(bad)?;
        let values: Vec<usize> = if let Some((a, b)) = list.split_once("..") {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            (a..=b).collect()
        } else {
            list.split(',')
                .map(|v| v.trim().parse().map_err(|_| bad()))
                .collect::<Result<_>>()?
        };
        if values.is_empty() {
            return Err(bad());
        }
        match key.trim() {
            "uavs" => Ok(Sweep::Uavs(values)),
            "n" => Ok(Sweep::Neighbors(values)),
            _ => Err(bad()),
        }
    }
}

/// Optional per-run artifacts, written for the first run of each scenario.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Dumps {
    pub events: bool,
    pub links: bool,
    pub trajectory: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub scenario: String,
    pub base: SimConfig,
    pub policy: PolicyKind,
    pub runs: usize,
    pub seed_base: u64,
    pub load: Option<Load>,
    pub sweep: Option<Sweep>,
    pub checkpoint: Option<PathBuf>,
    pub dumps: Dumps,
}

impl ExperimentSpec {
    pub fn new(scenario: impl Into<String>, base: SimConfig, policy: PolicyKind) -> Self {
        Self {
            scenario: scenario.into(),
            base,
            policy,
            runs: 50,
            seed_base: 0,
            load: None,
            sweep: None,
            checkpoint: None,
            dumps: Dumps::default(),
        }
    }

    /// One config per sweep point, or the base config alone.
    pub fn scenarios(&self) -> Vec<Scenario> {
        let mut base = self.base.clone();
        let mut label = self.scenario.clone();
        if let Some(load) = self.load {
            base.traffic_size_range_mb = load.size_range_mb();
            label = format!("{label}-{load}");
        }
        match &self.sweep {
            None => vec![Scenario {
                label,
                sweep_key: None,
                sweep_value: None,
                cfg: base,
            }],
            Some(s) => s
                .values()
                .iter()
                .map(|&v| {
                    let mut cfg = base.clone();
                    s.apply(&mut cfg, v);
                    Scenario {
                        label: format!("{label}-{}{v}", s.key()),
                        sweep_key: Some(s.key()),
                        sweep_value: Some(v),
                        cfg,
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub label: String,
    pub sweep_key: Option<&'static str>,
    pub sweep_value: Option<usize>,
    pub cfg: SimConfig,
}

/// Run-averaged metrics of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub generated: f64,
    pub delivered: f64,
    pub on_time: f64,
    pub forward_loss: f64,
    pub overflow_loss: f64,
    pub expired: f64,
    pub queued: f64,
    pub flows: f64,
    pub flows_completed: f64,
    pub flows_on_time: f64,
    pub on_time_ratio: f64,
    pub loss_ratio: f64,
    pub total_loss_ratio: f64,
    /// Fraction of runs within the loss cap.
    pub loss_cap_ok: f64,
    pub on_time_ratio_se: f64,
    pub loss_ratio_se: f64,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl Aggregate {
    pub fn from_runs(runs: &[EpisodeMetrics]) -> Self {
        let col = |f: &dyn Fn(&EpisodeMetrics) -> f64| -> Vec<f64> { runs.iter().map(f).collect() };
        let mean = |f: &dyn Fn(&EpisodeMetrics) -> f64| mean_se(&col(f)).0;
        let (on_time_ratio, on_time_ratio_se) = mean_se(&col(&|m| m.on_time_ratio));
        let (loss_ratio, loss_ratio_se) = mean_se(&col(&|m| m.loss_ratio));
        Self {
            generated: mean(&|m| m.generated as f64),
            delivered: mean(&|m| m.delivered as f64),
            on_time: mean(&|m| m.on_time as f64),
            forward_loss: mean(&|m| m.forward_loss as f64),
            overflow_loss: mean(&|m| m.overflow_loss as f64),
            expired: mean(&|m| m.expired as f64),
            queued: mean(&|m| m.queued as f64),
            flows: mean(&|m| m.flows as f64),
            flows_completed: mean(&|m| m.flows_completed as f64),
            flows_on_time: mean(&|m| m.flows_on_time as f64),
            on_time_ratio,
            loss_ratio,
            total_loss_ratio: mean(&|m| m.total_loss_ratio),
            loss_cap_ok: mean(&|m| f64::from(u8::from(m.loss_cap_ok))),
            on_time_ratio_se,
            loss_ratio_se,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub metrics: EpisodeMetrics,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioResult {
    pub scenario: String,
    pub policy: PolicyKind,
    pub sweep_key: Option<&'static str>,
    pub sweep_value: Option<usize>,
    pub runs: Vec<RunRecord>,
    pub aggregate: Aggregate,
    /// Deviation grid in seconds.
    pub grid: Vec<f64>,
    /// Run-averaged fraction of packets delivered within each deviation.
    pub packet_curve: Vec<f64>,
    /// Run-averaged fraction of tasks delivered within each deviation.
    pub task_curve: Vec<f64>,
}

fn mean_curve(curves: &[Vec<f64>], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    if curves.is_empty() {
        return out;
    }
    for c in curves {
        for (o, v) in out.iter_mut().zip(c) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= curves.len() as f64);
    out
}

fn make_policy(kind: PolicyKind, checkpoint: Option<&Path>, cfg: &SimConfig) -> Result<Box<dyn RoutingPolicy>> {
    Ok(match kind {
        PolicyKind::Heuristic => Box::new(HeuristicPolicy),
        PolicyKind::Greedy => Box::new(GreedyPolicy),
        PolicyKind::IppoDm => {
            let path = checkpoint
                .ok_or_else(|| Error::Experiment("policy ippo-dm needs a checkpoint".into()))?;
            if !path.is_file() {
                return Err(Error::Experiment(format!("missing checkpoint {}", path.display())));
            }
            let header = read_header(path)?;
            if header.sim.max_neighbors != cfg.max_neighbors {
                return Err(Error::Experiment(format!(
                    "checkpoint was trained with max_neighbors = {}, scenario uses {}",
                    header.sim.max_neighbors, cfg.max_neighbors
                )));
            }
            Box::new(Trainer::load(path)?.policy())
        }
    })
}

/// Artifacts of one run besides its metrics.
#[derive(Debug, Default)]
pub struct RunArtifacts {
    pub events: Option<String>,
    pub links: Option<Vec<u8>>,
    pub trajectory: Option<Vec<u8>>,
}

/// One seeded episode of `policy`, with the requested dumps.
pub fn run_once(
    cfg: &SimConfig,
    seed: u64,
    policy: &mut dyn RoutingPolicy,
    dumps: Dumps,
) -> Result<(EpisodeMetrics, RunArtifacts)> {
    let mut sim = Simulation::new(cfg, seed)?;
    if dumps.events {
        sim = sim.with_event_log();
    }
    if dumps.links {
        sim = sim.with_link_dump();
    }
    if dumps.trajectory {
        sim = sim.with_trajectory();
    }
    policy.begin_episode(cfg.num_uavs, seed);
    while !sim.is_done() {
        sim.step_with(policy)?;
    }
    let links = sim.take_link_dump();
    let outcome = sim.finish();
    let events = outcome.events.map(|ev| {
        let mut s = String::from(EVENT_LOG_HEADER);
        s.push('\n');
        for e in ev {
            s.push_str(&e.to_string());
            s.push('\n');
        }
        s
    });
    let trajectory = match outcome.trajectory {
        Some(t) => {
            let mut buf = Vec::new();
            write_trajectory_csv(&mut buf, &t)?;
            Some(buf)
        }
        None => None,
    };
    Ok((
        outcome.metrics,
        RunArtifacts {
            events,
            links,
            trajectory,
        },
    ))
}

/// Run every scenario of `spec`; runs use seeds `seed_base + i`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<(Vec<ScenarioResult>, Vec<(String, RunArtifacts)>)> {
    let grid = deviation_grid();
    let mut results = Vec::new();
    let mut artifacts = Vec::new();
    for sc in spec.scenarios() {
        sc.cfg.validate()?;
        let mut policy = make_policy(spec.policy, spec.checkpoint.as_deref(), &sc.cfg)?;
        let mut runs = Vec::with_capacity(spec.runs);
        for i in 0..spec.runs {
            let seed = spec.seed_base + i as u64;
            let dumps = if i == 0 { spec.dumps } else { Dumps::default() };
            let (metrics, art) = run_once(&sc.cfg, seed, policy.as_mut(), dumps)?;
            if i == 0 && spec.dumps != Dumps::default() {
                artifacts.push((sc.label.clone(), art));
            }
            runs.push(RunRecord { run: i, seed, metrics });
        }
        let metrics: Vec<EpisodeMetrics> = runs.iter().map(|r| r.metrics.clone()).collect();
        let packet: Vec<Vec<f64>> = metrics.iter().map(|m| m.packet_curve(&grid)).collect();
        let task: Vec<Vec<f64>> = metrics.iter().map(|m| m.task_curve(&grid)).collect();
        results.push(ScenarioResult {
            scenario: sc.label,
            policy: spec.policy,
            sweep_key: sc.sweep_key,
            sweep_value: sc.sweep_value,
            aggregate: Aggregate::from_runs(&metrics),
            packet_curve: mean_curve(&packet, grid.len()),
            task_curve: mean_curve(&task, grid.len()),
            grid: grid.clone(),
            runs,
        });
    }
    Ok((results, artifacts))
}

/// Column names carry units: `_pkt` packets, `_flows` tasks, `_frac` ratios.
pub const METRICS_HEADER: [&str; 21] = [
    "scenario",
    "policy",
    "sweep_key",
    "sweep_value",
    "run",
    "seed",
    "aggregate",
    "generated_pkt",
    "delivered_pkt",
    "on_time_pkt",
    "forward_loss_pkt",
    "overflow_loss_pkt",
    "expired_pkt",
    "queued_pkt",
    "flows_flows",
    "flows_completed_flows",
    "flows_on_time_flows",
    "on_time_ratio_frac",
    "loss_ratio_frac",
    "total_loss_ratio_frac",
    "loss_cap_ok_frac",
];

pub const CURVES_HEADER: [&str; 5] = ["scenario", "policy", "deviation_s", "packet_cdf_frac", "task_cdf_frac"];

pub const SUMMARY_HEADER: [&str; 8] = [
    "scenario",
    "policy",
    "sweep_key",
    "sweep_value",
    "runs",
    "on_time_ratio_frac",
    "on_time_ratio_se_frac",
    "loss_ratio_frac",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::Experiment(format!("csv buffer: {e}")))
}

pub fn metrics_csv(results: &[ScenarioResult]) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for r in results {
        let lead = |run: String, seed: String, agg: bool| {
            vec![
                r.scenario.clone(),
                r.policy.to_string(),
                opt(r.sweep_key),
                opt(r.sweep_value),
                run,
                seed,
                agg.to_string(),
            ]
        };
        for run in &r.runs {
            let m = &run.metrics;
            let mut row = lead(run.run.to_string(), run.seed.to_string(), false);
            row.extend(
                [
                    m.generated,
                    m.delivered,
                    m.on_time,
                    m.forward_loss,
                    m.overflow_loss,
                    m.expired,
                    m.queued,
                    m.flows,
                    m.flows_completed,
                    m.flows_on_time,
                ]
                .map(|v| v.to_string()),
            );
            row.extend([
                m.on_time_ratio.to_string(),
                m.loss_ratio.to_string(),
                m.total_loss_ratio.to_string(),
                f64::from(u8::from(m.loss_cap_ok)).to_string(),
            ]);
            rows.push(row);
        }
        if !r.runs.is_empty() {
            let a = &r.aggregate;
            let mut row = lead(String::new(), String::new(), true);
            row.extend(
                [
                    a.generated,
                    a.delivered,
                    a.on_time,
                    a.forward_loss,
                    a.overflow_loss,
                    a.expired,
                    a.queued,
                    a.flows,
                    a.flows_completed,
                    a.flows_on_time,
                    a.on_time_ratio,
                    a.loss_ratio,
                    a.total_loss_ratio,
                    a.loss_cap_ok,
                ]
                .map(|v| v.to_string()),
            );
            rows.push(row);
        }
    }
    csv_bytes(&METRICS_HEADER, rows)
}

pub fn curves_csv(results: &[ScenarioResult]) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for r in results {
        for ((x, p), t) in r.grid.iter().zip(&r.packet_curve).zip(&r.task_curve) {
            rows.push(vec![
                r.scenario.clone(),
                r.policy.to_string(),
                format!("{x:.1}"),
                p.to_string(),
                t.to_string(),
            ]);
        }
    }
    csv_bytes(&CURVES_HEADER, rows)
}

pub fn summary_csv(results: &[ScenarioResult]) -> Result<Vec<u8>> {
    let rows = results
        .iter()
        .map(|r| {
            vec![
                r.scenario.clone(),
                r.policy.to_string(),
                opt(r.sweep_key),
                opt(r.sweep_value),
                r.runs.len().to_string(),
                r.aggregate.on_time_ratio.to_string(),
                r.aggregate.on_time_ratio_se.to_string(),
                r.aggregate.loss_ratio.to_string(),
            ]
        })
        .collect();
    csv_bytes(&SUMMARY_HEADER, rows)
}

/// Write `metrics.csv`, `curves.csv`, `summary.csv`, `results.json` and any
/// per-run dumps into `dir`.
pub fn export(dir: &Path, results: &[ScenarioResult], artifacts: &[(String, RunArtifacts)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, bytes: &[u8]| {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(p, e))
    };
    write("metrics.csv", &metrics_csv(results)?)?;
    write("curves.csv", &curves_csv(results)?)?;
    write("summary.csv", &summary_csv(results)?)?;
    write("results.json", &serde_json::to_vec_pretty(results)?)?;
    for (label, art) in artifacts {
        if let Some(ev) = &art.events {
            write(&format!("events_{label}.csv"), ev.as_bytes())?;
        }
        if let Some(l) = &art.links {
            write(&format!("links_{label}.csv"), l)?;
        }
        if let Some(t) = &art.trajectory {
            write(&format!("trajectory_{label}.csv"), t)?;
        }
    }
    Ok(())
}
