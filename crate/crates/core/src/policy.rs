//! Movement features, phase selection and the classical baseline controllers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{ExprTree, Feature, PriorityFunction, Token};
use crate::sim::{Controller, Simulation};

/// The eight features of one movement, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LaneFeatures {
    values: [f64; 8],
}

impl LaneFeatures {
    pub fn new(values: [f64; 8]) -> Self {
        Self { values }
    }

    pub fn get(&self, f: Feature) -> f64 {
        self.values[f.index()]
    }

    pub fn set(&mut self, f: Feature, value: f64) {
        self.values[f.index()] = value;
    }

    pub fn values(&self) -> &[f64; 8] {
        &self.values
    }
}

/// Raw counts behind [`LaneFeatures`] for one movement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RawCounts {
    pub waiting_in: usize,
    pub waiting_out: usize,
    pub count_in: usize,
    pub count_out: usize,
    pub near_in: usize,
    pub near_out: usize,
    pub capacity_in: usize,
    pub capacity_out: usize,
    /// Vehicles on every lane incident to the intersection.
    pub intersection_total: usize,
}

impl RawCounts {
    pub fn normalize(&self) -> LaneFeatures {
        let total = self.intersection_total.max(1) as f64;
        let cap = (self.capacity_in + self.capacity_out) as f64;
        LaneFeatures::new([
            self.waiting_in as f64 / total,
            self.waiting_out as f64 / total,
            self.count_in as f64 / total,
            self.count_out as f64 / total,
            self.near_in as f64 / total,
            self.near_out as f64 / total,
            self.count_in as f64 / cap,
            self.count_out as f64 / cap,
        ])
    }
}

/// Vehicles on all lanes incident to the intersection. Kept separate so the
/// normalization denominator can be swapped in one place.
pub fn intersection_total(sim: &Simulation<'_>, intersection: usize) -> usize {
    sim.network().intersections[intersection]
        .incident_lanes
        .iter()
        .map(|&l| sim.lane_occupancy(l))
        .sum()
}

pub fn raw_counts(
    sim: &Simulation<'_>,
    intersection: usize,
    movement: usize,
    total: usize,
) -> RawCounts {
    let net = sim.network();
    let mv = net.intersections[intersection].movements[movement];
    let green = f64::from(sim.params().decision_interval);
    RawCounts {
        waiting_in: sim.lane_waiting(mv.in_lane),
        waiting_out: sim.lane_waiting(mv.out_lane),
        count_in: sim.lane_occupancy(mv.in_lane),
        count_out: sim.lane_occupancy(mv.out_lane),
        near_in: sim.lane_near(mv.in_lane, green),
        near_out: sim.lane_near(mv.out_lane, green),
        capacity_in: net.lanes[mv.in_lane].capacity,
        capacity_out: net.lanes[mv.out_lane].capacity,
        intersection_total: total,
    }
}

pub fn extract_features(
    sim: &Simulation<'_>,
    intersection: usize,
    movement: usize,
) -> LaneFeatures {
    let total = intersection_total(sim, intersection);
    raw_counts(sim, intersection, movement, total).normalize()
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Per-phase priority: sum of the movement priorities in each phase.
pub fn phase_scores(tree: &ExprTree, sim: &Simulation<'_>, intersection: usize) -> Vec<f64> {
    let inter = &sim.network().intersections[intersection];
    let total = intersection_total(sim, intersection);
    let mut scratch = vec![0.0; tree.len()];
    let movement_scores: Vec<f64> = (0..inter.movements.len())
        .map(|m| {
            let feats = raw_counts(sim, intersection, m, total).normalize();
            tree.evaluate_with(&feats, &mut scratch)
        })
        .collect();
    inter
        .phases
        .iter()
        .map(|phase| {
            phase
                .iter()
                .map(|&m| movement_scores[m])
                .fold(0.0, |acc, s| (acc + s).clamp(-f64::MAX, f64::MAX))
        })
        .collect()
}

pub fn phase_decision(tree: &ExprTree, sim: &Simulation<'_>, intersection: usize) -> usize {
    argmax_lowest(&phase_scores(tree, sim, intersection))
}

/// Pressure per phase: incoming minus outgoing queue, summed over movements.
pub fn phase_pressures(sim: &Simulation<'_>, intersection: usize) -> Vec<f64> {
    let inter = &sim.network().intersections[intersection];
    inter
        .phases
        .iter()
        .map(|phase| {
            phase
                .iter()
                .map(|&m| {
                    let mv = inter.movements[m];
                    sim.lane_waiting(mv.in_lane) as f64 - sim.lane_waiting(mv.out_lane) as f64
                })
                .sum()
        })
        .collect()
}

pub fn max_pressure_decision(sim: &Simulation<'_>, intersection: usize) -> usize {
    argmax_lowest(&phase_pressures(sim, intersection))
}

/// Round-robin: one decision interval per phase.
pub fn fixed_time_decision(phase_count: usize, time_s: f64, decision_interval: u32) -> usize {
    let slot = (time_s / f64::from(decision_interval)).floor() as usize;
    slot % phase_count
}

/// Shared priority function applied at every intersection.
#[derive(Debug, Clone)]
pub struct SymbolicController {
    policy: PriorityFunction,
    tree: ExprTree,
}

impl SymbolicController {
    pub fn new(policy: PriorityFunction) -> Result<Self> {
        let tree = policy.build_tree()?;
        Ok(Self { policy, tree })
    }

    pub fn policy(&self) -> &PriorityFunction {
        &self.policy
    }
}

impl Controller for SymbolicController {
    fn decide(&mut self, sim: &Simulation<'_>, intersection: usize) -> Result<usize> {
        Ok(phase_decision(&self.tree, sim, intersection))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MaxPressure;

impl Controller for MaxPressure {
    fn decide(&mut self, sim: &Simulation<'_>, intersection: usize) -> Result<usize> {
        Ok(max_pressure_decision(sim, intersection))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FixedTime;

impl Controller for FixedTime {
    fn decide(&mut self, sim: &Simulation<'_>, intersection: usize) -> Result<usize> {
        let count = sim.network().intersections[intersection].phases.len();
        Ok(fixed_time_decision(
            count,
            sim.time(),
            sim.params().decision_interval,
        ))
    }
}

#[derive(Debug, Clone)]
pub struct RandomController {
    rng: ChaCha8Rng,
}

impl RandomController {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Controller for RandomController {
    fn decide(&mut self, sim: &Simulation<'_>, intersection: usize) -> Result<usize> {
        let count = sim.network().intersections[intersection].phases.len();
        Ok(self.rng.gen_range(0..count))
    }
}

/// Controller selectable by name: `maxpressure`, `fixedtime`, `random`, or
/// `policy:<token list>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Baseline {
    MaxPressure,
    FixedTime,
    Random,
    Policy(PriorityFunction),
}

impl Baseline {
    /// Fresh controller instance; `seed` only matters for `random`.
    pub fn controller(&self, seed: u64) -> Result<Box<dyn Controller + Send>> {
        Ok(match self {
            Baseline::MaxPressure => Box::new(MaxPressure),
            Baseline::FixedTime => Box::new(FixedTime),
            Baseline::Random => Box::new(RandomController::new(seed)),
            Baseline::Policy(pf) => Box::new(SymbolicController::new(pf.clone())?),
        })
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Baseline::MaxPressure => f.write_str("maxpressure"),
            Baseline::FixedTime => f.write_str("fixedtime"),
            Baseline::Random => f.write_str("random"),
            Baseline::Policy(pf) => write!(f, "policy:{pf}"),
        }
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(text) = s.strip_prefix("policy:") {
            return Ok(Baseline::Policy(PriorityFunction::parse(text)?));
        }
        match s.to_ascii_lowercase().as_str() {
            "maxpressure" => Ok(Baseline::MaxPressure),
            "fixedtime" => Ok(Baseline::FixedTime),
            "random" => Ok(Baseline::Random),
            other => Err(Error::Config(format!("unknown controller `{other}`"))),
        }
    }
}

impl From<Baseline> for String {
    fn from(b: Baseline) -> String {
        b.to_string()
    }
}

impl TryFrom<String> for Baseline {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Occurrences of each feature across the given policies.
pub fn feature_frequency<'a>(
    policies: impl IntoIterator<Item = &'a PriorityFunction>,
) -> BTreeMap<Feature, usize> {
    let mut counts: BTreeMap<Feature, usize> = Feature::ALL.iter().map(|&f| (f, 0)).collect();
    for pf in policies {
        for t in pf.tokens() {
            if let Token::Var(f) = t {
                *counts.entry(*f).or_default() += 1;
            }
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Flow, Scenario, ScenarioFile, SimParams};

    /// One intersection, approaches a (phase 0, movements 0,1) and b (phase 1, movement 2).
    fn scenario() -> Scenario {
        let lane = serde_json::json!([{"capacity": 10, "length_m": 200.0, "speed_mps": 10.0}]);
        let file: ScenarioFile = serde_json::from_value(serde_json::json!({
            "network": {
                "intersections": [{
                    "id": "I",
                    "phases": [[0, 1], [2]],
                    "movements": [
                        {"in_lane": "a_0", "out_lane": "c_0"},
                        {"in_lane": "a_0", "out_lane": "d_0"},
                        {"in_lane": "b_0", "out_lane": "c_0"}
                    ]
                }],
                "roads": [
                    {"id": "a", "from": null, "to": "I", "lanes": lane},
                    {"id": "b", "from": null, "to": "I", "lanes": lane},
                    {"id": "c", "from": "I", "to": null, "lanes": lane},
                    {"id": "d", "from": "I", "to": null, "lanes": lane}
                ]
            },
            "flows": [],
            "episode_length_s": 600
        }))
        .unwrap();
        Scenario::from_file("t", &file).unwrap()
    }

    fn queued_on_b(s: &Scenario, n: usize) -> Vec<Flow> {
        let route = vec![
            s.network.lane_by_id("b_0").unwrap(),
            s.network.lane_by_id("c_0").unwrap(),
        ];
        (0..n)
            .map(|_| Flow {
                entry_time: 0.0,
                route: route.clone(),
            })
            .collect()
    }

    #[test]
    fn empty_intersection_is_all_zero() {
        let s = scenario();
        let sim = Simulation::new(&s.network, &[], SimParams::default());
        for m in 0..3 {
            assert_eq!(extract_features(&sim, 0, m), LaneFeatures::default());
        }
    }

    #[test]
    fn single_queued_vehicle() {
        let s = scenario();
        let flows = queued_on_b(&s, 1);
        let mut sim = Simulation::new(&s.network, &flows, SimParams::default());
        while sim.lane_waiting(1) == 0 {
            sim.step(1.0);
        }
        let f = extract_features(&sim, 0, 2);
        assert_eq!(f.get(Feature::WI), 1.0);
        assert_eq!(f.get(Feature::CI), 1.0);
        assert_eq!(f.get(Feature::DI), 1.0);
        assert_eq!(f.get(Feature::LI), 0.05);
        for feat in [Feature::WO, Feature::CO, Feature::DO, Feature::LO] {
            assert_eq!(f.get(feat), 0.0);
        }
    }

    #[test]
    fn near_range_is_one_green_of_travel() {
        let s = scenario();
        let flows = queued_on_b(&s, 1);
        let mut sim = Simulation::new(&s.network, &flows, SimParams::default());
        // lane is 200 m at 10 m/s, range is 20 s * 10 m/s = 200 m: in range on entry
        sim.step(1.0);
        let raw = raw_counts(&sim, 0, 2, intersection_total(&sim, 0));
        assert_eq!((raw.count_in, raw.near_in, raw.waiting_in), (1, 1, 0));
        let short = SimParams {
            decision_interval: 5,
            ..SimParams::default()
        };
        let mut sim = Simulation::new(&s.network, &flows, short);
        sim.step(1.0);
        let raw = raw_counts(&sim, 0, 2, intersection_total(&sim, 0));
        assert_eq!((raw.count_in, raw.near_in), (1, 0));
    }

    #[test]
    fn constant_policy_prefers_larger_phase() {
        let s = scenario();
        let sim = Simulation::new(&s.network, &[], SimParams::default());
        // WI is zero everywhere so div WI WI is 1 for every movement
        let tree = PriorityFunction::parse("div WI WI")
            .unwrap()
            .build_tree()
            .unwrap();
        assert_eq!(phase_scores(&tree, &sim, 0), vec![2.0, 1.0]);
        assert_eq!(phase_decision(&tree, &sim, 0), 0);
    }

    #[test]
    fn traffic_on_one_phase_selects_it() {
        let s = scenario();
        let flows = queued_on_b(&s, 3);
        let mut sim = Simulation::new(&s.network, &flows, SimParams::default());
        while sim.lane_waiting(1) < 3 {
            sim.step(1.0);
        }
        let tree = PriorityFunction::parse("mul LI mul DI DI")
            .unwrap()
            .build_tree()
            .unwrap();
        assert_eq!(phase_decision(&tree, &sim, 0), 1);
        assert_eq!(max_pressure_decision(&sim, 0), 1);
        let scores = phase_scores(&tree, &sim, 0);
        let doubled: Vec<f64> = scores.iter().map(|s| s * 2.0).collect();
        assert_eq!(argmax_lowest(&scores), argmax_lowest(&doubled));
    }

    #[test]
    fn max_pressure_ties_to_zero() {
        let s = scenario();
        let sim = Simulation::new(&s.network, &[], SimParams::default());
        assert_eq!(phase_pressures(&sim, 0), vec![0.0, 0.0]);
        assert_eq!(max_pressure_decision(&sim, 0), 0);
    }

    #[test]
    fn fixed_time_cycles() {
        assert_eq!(fixed_time_decision(4, 0.0, 20), 0);
        assert_eq!(fixed_time_decision(4, 20.0, 20), 1);
        assert_eq!(fixed_time_decision(4, 39.0, 20), 1);
        assert_eq!(fixed_time_decision(4, 80.0, 20), 0);
        assert_eq!(fixed_time_decision(3, 100.0, 20), 2);
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax_lowest(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax_lowest(&[0.0, 0.0]), 0);
        assert_eq!(argmax_lowest(&[-1.0, -0.5]), 1);
    }

    #[test]
    fn baseline_names() {
        assert_eq!(
            "maxpressure".parse::<Baseline>().unwrap(),
            Baseline::MaxPressure
        );
        assert_eq!(
            "FixedTime".parse::<Baseline>().unwrap(),
            Baseline::FixedTime
        );
        let p: Baseline = "policy:mul LI mul DI DI".parse().unwrap();
        assert_eq!(p.to_string(), "policy:mul LI mul DI DI");
        assert!("policy:mul LI".parse::<Baseline>().is_err());
        assert!("webster".parse::<Baseline>().is_err());
    }

    #[test]
    fn feature_counts() {
        let pi1 = PriorityFunction::parse("mul LI mul DI DI").unwrap();
        let one = feature_frequency([&pi1]);
        assert_eq!(one[&Feature::LI], 1);
        assert_eq!(one[&Feature::DI], 2);
        assert_eq!(one.values().sum::<usize>(), 3);
        let none = feature_frequency(std::iter::empty());
        assert!(none.values().all(|&c| c == 0));
        assert_eq!(none.len(), 8);
        let two = feature_frequency([&pi1, &pi1]);
        assert_eq!(two[&Feature::DI], 4);
        assert_eq!(two[&Feature::LI], 2);
    }
}
