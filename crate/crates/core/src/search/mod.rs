//! Monte Carlo tree search over priority functions.
//!
//! Each iteration selects a path by UCT (with epsilon-greedy deviations),
//! expands one unexplored child, completes it with a rollout, scores the
//! resulting policy in the simulator and backs the reward up the path with a
//! max rule. The reward is the reciprocal of average travel time, normalized
//! by the best raw reward seen so far.

mod archive;
mod config;
mod psr;
mod tree;

use std::collections::HashMap;

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use archive::{Archive, ArchiveEntry};
pub use config::{parse_exploration, AblationMode, SearchConfig};
pub use psr::{rollout, PsrTable};
pub use tree::{SearchNode, SearchTree, ROOT};

use crate::error::Result;
use crate::expr::PriorityFunction;
use crate::policy::SymbolicController;
use crate::sim::{replica_flows, run_episode, EpisodeMetrics, Flow, Scenario, SimParams};

/// Scores policies on a fixed set of flow replicas.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    scenario: &'a Scenario,
    params: SimParams,
    flow_sets: Vec<Vec<Flow>>,
}

impl<'a> Evaluator<'a> {
    /// `replicas == 0` evaluates on the scenario's own flows.
    pub fn new(
        scenario: &'a Scenario,
        params: SimParams,
        replicas: usize,
        noise_bound: u32,
        seed: u64,
    ) -> Self {
        let flow_sets = if replicas == 0 {
            vec![scenario.flows.clone()]
        } else {
            (0..replicas)
                .map(|r| replica_flows(&scenario.flows, noise_bound, seed, r as u64))
                .collect()
        };
        Self {
            scenario,
            params,
            flow_sets,
        }
    }

    pub fn metrics(&self, policy: &PriorityFunction) -> Result<EpisodeMetrics> {
        let runs = self
            .flow_sets
            .iter()
            .map(|flows| {
                let mut ctl = SymbolicController::new(policy.clone())?;
                run_episode(&self.scenario.network, flows, &mut ctl, self.params)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EpisodeMetrics::mean(&runs))
    }

    pub fn travel_time(&self, policy: &PriorityFunction) -> Result<f64> {
        Ok(self.metrics(policy)?.avg_travel_time)
    }
}

/// One line of the search log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iter: usize,
    pub candidate: PriorityFunction,
    pub raw_reward: f64,
    pub shaped_reward: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: PriorityFunction,
    pub best_raw_reward: f64,
    pub best_travel_time: f64,
    pub archive: Archive,
    pub log: Vec<LogRecord>,
    pub unique_evaluations: usize,
    pub tree_size: usize,
}

/// Runs `config.iterations` search iterations on `scenario`.
pub fn search(
    scenario: &Scenario,
    config: &SearchConfig,
    params: SimParams,
) -> Result<SearchOutcome> {
    config.validate()?;
    params.validate()?;
    let evaluator = Evaluator::new(
        scenario,
        params,
        config.train_replicas,
        config.noise_bound,
        config.seed,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tree = SearchTree::new(config);
    let mut archive = Archive::new(config.k);
    let mut psr = PsrTable::new(config.alpha);
    let mut cache: HashMap<PriorityFunction, f64> = HashMap::new();
    let mut log = Vec::with_capacity(config.iterations);

    for iter in 0..config.iterations {
        let mut path = tree.select(&mut rng);
        let leaf = *path.last().expect("non-empty path");
        if tree.node(leaf).is_expandable() {
            path.push(tree.expand(leaf, &mut rng));
        }
        let state = &tree.node(*path.last().expect("non-empty path")).state;
        let candidate = rollout(state, &psr, config, &mut rng);

        let travel_time = match cache.get(&candidate) {
            Some(&tt) => tt,
            None => {
                let tt = evaluator.travel_time(&candidate)?;
                cache.insert(candidate.clone(), tt);
                tt
            }
        };
        let raw = if travel_time > 0.0 {
            1.0 / travel_time
        } else {
            warn!("zero travel time for `{candidate}`; scoring it at the current best");
            if archive.best_raw_reward() > 0.0 {
                archive.best_raw_reward()
            } else {
                1.0
            }
        };

        if archive.insert(&candidate, raw) && config.psr {
            psr.rebuild(&archive);
        }
        let shaped = archive.shaped_reward(raw)?;
        let reward = if config.reward_shaping { shaped } else { raw };
        tree.backpropagate(&path, reward);

        debug!("iter {iter}: {candidate} tt={travel_time:.3} r={reward:.4}");
        log.push(LogRecord {
            iter,
            candidate,
            raw_reward: raw,
            shaped_reward: shaped,
            best_so_far: archive.best_raw_reward(),
        });
    }

    let best_entry = archive.best().expect("at least one iteration ran").clone();
    Ok(SearchOutcome {
        best_travel_time: cache[&best_entry.policy],
        best: best_entry.policy,
        best_raw_reward: best_entry.raw_reward,
        archive,
        log,
        unique_evaluations: cache.len(),
        tree_size: tree.len(),
    })
}
