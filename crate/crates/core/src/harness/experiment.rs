//! Controllers x seeds x replicas evaluation grids.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::PriorityFunction;
use crate::policy::Baseline;
use crate::search::{search, AblationMode, SearchConfig, SearchOutcome};
use crate::sim::{replica_flows, run_episode, EpisodeMetrics, Scenario, SimParams};

/// Either a fixed controller or a search run (optionally ablated) whose best
/// policy is then evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ControllerSpec {
    Search(AblationMode),
    Fixed(Baseline),
}

impl fmt::Display for ControllerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControllerSpec::Search(AblationMode::FM) => f.write_str("search"),
            ControllerSpec::Search(m) => write!(f, "search:{m}"),
            ControllerSpec::Fixed(b) => b.fmt(f),
        }
    }
}

impl FromStr for ControllerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("search") {
            return Ok(ControllerSpec::Search(AblationMode::FM));
        }
        if let Some(mode) = t.strip_prefix("search:") {
            return Ok(ControllerSpec::Search(mode.parse()?));
        }
        Ok(ControllerSpec::Fixed(t.parse()?))
    }
}

impl From<ControllerSpec> for String {
    fn from(c: ControllerSpec) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for ControllerSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_replicas() -> usize {
    9
}

fn default_noise() -> u32 {
    60
}

/// JSON experiment description. Scenario paths are resolved relative to the
/// experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: PathBuf,
    #[serde(default)]
    pub transfer: Vec<PathBuf>,
    pub controllers: Vec<ControllerSpec>,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_noise")]
    pub noise_bound: u32,
    #[serde(default)]
    pub decision_interval: Option<u32>,
}

impl ExperimentSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Loads the referenced scenarios; relative paths are taken from `base`.
    pub fn resolve(&self, base: &Path) -> Result<Experiment> {
        let load = |p: &PathBuf| {
            let p = if p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            };
            Scenario::load(&p)
        };
        let mut params = SimParams::default();
        if let Some(d) = self.decision_interval {
            params.decision_interval = d;
        }
        let exp = Experiment {
            scenario: load(&self.scenario)?,
            transfer: self.transfer.iter().map(load).collect::<Result<_>>()?,
            controllers: self.controllers.clone(),
            search: self.search.clone(),
            seeds: self.seeds.clone(),
            replicas: self.replicas,
            noise_bound: self.noise_bound,
            params,
        };
        exp.validate()?;
        Ok(exp)
    }
}

/// A fully loaded experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub scenario: Scenario,
    pub transfer: Vec<Scenario>,
    pub controllers: Vec<ControllerSpec>,
    pub search: SearchConfig,
    pub seeds: Vec<u64>,
    pub replicas: usize,
    pub noise_bound: u32,
    /// Episode length is taken from each scenario.
    pub params: SimParams,
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        if self.controllers.is_empty() {
            return Err(Error::Config("no controllers listed".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds listed".into()));
        }
        if self.replicas == 0 {
            return Err(Error::Config("replicas must be at least 1".into()));
        }
        self.search.validate()?;
        self.params.validate()
    }
}

/// One evaluated episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub controller: String,
    pub seed: u64,
    pub replica: usize,
    pub avg_travel_time: f64,
    pub throughput: f64,
    pub completed: usize,
    pub entered: usize,
    /// Policy text for symbolic controllers, empty otherwise.
    pub policy: String,
    pub flops: Option<usize>,
    pub bytes: Option<usize>,
}

/// A finished search, kept for logs and policy files.
#[derive(Debug, Clone)]
pub struct TrainedPolicy {
    pub controller: String,
    pub seed: u64,
    pub outcome: SearchOutcome,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ResultRow>,
    pub trained: Vec<TrainedPolicy>,
}

/// Evaluates `baseline` on `replicas` jittered copies of the scenario flows.
pub fn evaluate_replicas(
    scenario: &Scenario,
    baseline: &Baseline,
    seed: u64,
    replicas: usize,
    noise_bound: u32,
    params: SimParams,
) -> Result<Vec<EpisodeMetrics>> {
    let params = params.with_episode_length(scenario.episode_length);
    (0..replicas)
        .map(|r| {
            let flows = replica_flows(&scenario.flows, noise_bound, seed, r as u64);
            let mut ctl = baseline.controller(seed)?;
            run_episode(&scenario.network, &flows, ctl.as_mut(), params)
        })
        .collect()
}

fn rows_for(
    scenario_tag: &str,
    controller: &str,
    seed: u64,
    policy: Option<&PriorityFunction>,
    metrics: Vec<EpisodeMetrics>,
) -> Vec<ResultRow> {
    let text = policy.map(|p| p.render()).unwrap_or_default();
    let cost = policy.and_then(|p| p.cost().ok());
    metrics
        .into_iter()
        .enumerate()
        .map(|(replica, m)| ResultRow {
            scenario: scenario_tag.to_string(),
            controller: controller.to_string(),
            seed,
            replica,
            avg_travel_time: m.avg_travel_time,
            throughput: m.throughput,
            completed: m.completed,
            entered: m.entered,
            policy: text.clone(),
            flops: cost.map(|c| c.flops),
            bytes: cost.map(|c| c.bytes),
        })
        .collect()
}

/// Tag used for rows where a policy trained on `source` runs on `target`.
pub fn transfer_tag(source: &str, target: &str) -> String {
    format!("{source}->{target}")
}

struct Cell {
    rows: Vec<ResultRow>,
    trained: Option<TrainedPolicy>,
}

fn run_cell(exp: &Experiment, controller: &ControllerSpec, seed: u64) -> Result<Cell> {
    let name = controller.to_string();
    let (baseline, trained) = match controller {
        ControllerSpec::Fixed(b) => (b.clone(), None),
        ControllerSpec::Search(mode) => {
            let cfg = SearchConfig {
                seed,
                ..exp.search.clone()
            }
            .with_ablation(*mode);
            let params = exp.params.with_episode_length(exp.scenario.episode_length);
            let outcome = search(&exp.scenario, &cfg, params)?;
            info!(
                "{name} seed {seed}: {} (train tt {:.2})",
                outcome.best, outcome.best_travel_time
            );
            (
                Baseline::Policy(outcome.best.clone()),
                Some(TrainedPolicy {
                    controller: name.clone(),
                    seed,
                    outcome,
                }),
            )
        }
    };
    let m = evaluate_replicas(
        &exp.scenario,
        &baseline,
        seed,
        exp.replicas,
        exp.noise_bound,
        exp.params,
    )?;
    let policy = match &baseline {
        Baseline::Policy(p) => Some(p),
        _ => None,
    };
    let mut rows = rows_for(&exp.scenario.name, &name, seed, policy, m);
    for target in &exp.transfer {
        let tag = match controller {
            ControllerSpec::Search(_) => transfer_tag(&exp.scenario.name, &target.name),
            ControllerSpec::Fixed(_) => target.name.clone(),
        };
        let m = evaluate_replicas(
            target,
            &baseline,
            seed,
            exp.replicas,
            exp.noise_bound,
            exp.params,
        )?;
        rows.extend(rows_for(&tag, &name, seed, policy, m));
    }
    Ok(Cell { rows, trained })
}

/// Runs every (controller, seed) cell in parallel; row order is
/// controllers-major, then seed, then scenario, then replica.
pub fn run_experiment(exp: &Experiment) -> Result<ExperimentReport> {
    exp.validate()?;
    let cells: Vec<(&ControllerSpec, u64)> = exp
        .controllers
        .iter()
        .flat_map(|c| exp.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let done = cells
        .par_iter()
        .map(|&(c, s)| run_cell(exp, c, s))
        .collect::<Result<Vec<_>>>()?;
    let mut report = ExperimentReport::default();
    for cell in done {
        report.rows.extend(cell.rows);
        report.trained.extend(cell.trained);
    }
    Ok(report)
}

/// Evaluates a fixed policy trained elsewhere on each target scenario;
/// rows carry `label` as their controller.
#[allow(clippy::too_many_arguments)]
pub fn transfer_eval(
    policy: &PriorityFunction,
    label: &str,
    source: &str,
    targets: &[Scenario],
    seeds: &[u64],
    replicas: usize,
    noise_bound: u32,
    params: SimParams,
) -> Result<Vec<ResultRow>> {
    let baseline = Baseline::Policy(policy.clone());
    let mut rows = Vec::new();
    for target in targets {
        let tag = transfer_tag(source, &target.name);
        for &seed in seeds {
            let m = evaluate_replicas(target, &baseline, seed, replicas, noise_bound, params)?;
            rows.extend(rows_for(&tag, label, seed, Some(policy), m));
        }
    }
    Ok(rows)
}

/// Runs the full method and each ablation on the experiment's scenario.
pub fn ablation_suite(exp: &Experiment, modes: &[AblationMode]) -> Result<ExperimentReport> {
    let exp = Experiment {
        controllers: modes.iter().map(|&m| ControllerSpec::Search(m)).collect(),
        transfer: Vec::new(),
        ..exp.clone()
    };
    run_experiment(&exp)
}
