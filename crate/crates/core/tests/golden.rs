//! Frozen reference run on the committed 2x2 scenario.

use std::path::PathBuf;

use serde_json::Value;

use phasewise::policy::{FixedTime, MaxPressure, SymbolicController};
use phasewise::sim::{run_episode, Controller, EpisodeMetrics, Scenario, SimParams, Simulation};
use phasewise::PriorityFunction;

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn golden() -> Value {
    let text = std::fs::read_to_string(dir().join("tests/golden/grid2x2_medium.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn scenario() -> Scenario {
    Scenario::load(dir().join("scenarios/grid2x2_medium.json")).unwrap()
}

fn metrics(v: &Value) -> EpisodeMetrics {
    serde_json::from_value(v.clone()).unwrap()
}

#[test]
fn fixed_time_trace_matches() {
    let g = golden();
    let s = scenario();
    let params = SimParams::default().with_episode_length(s.episode_length);
    let mut sim = Simulation::new(&s.network, &s.flows, params);
    let mut ctl = FixedTime;
    let trace = g["fixedtime"]["trace"].as_array().unwrap();
    let mut next = trace.iter().peekable();
    for tick in 0..params.episode_length {
        if tick % params.decision_interval == 0 {
            for i in 0..s.network.intersections.len() {
                let p = ctl.decide(&sim, i).unwrap();
                sim.set_phase(i, p).unwrap();
            }
        }
        sim.step(1.0);
        if let Some(point) = next.peek() {
            if point["time_s"].as_u64() == Some(u64::from(tick + 1)) {
                assert_eq!(
                    point["entered"].as_u64().unwrap() as usize,
                    sim.entered(),
                    "t={}",
                    tick + 1
                );
                assert_eq!(
                    point["completed"].as_u64().unwrap() as usize,
                    sim.completed(),
                    "t={}",
                    tick + 1
                );
                assert_eq!(
                    point["in_network"].as_u64().unwrap() as usize,
                    sim.in_network(),
                    "t={}",
                    tick + 1
                );
                next.next();
            }
        }
    }
    assert!(next.next().is_none());
    assert_eq!(sim.metrics(), metrics(&g["fixedtime"]["metrics"]));
}

#[test]
fn episode_runner_matches_stepwise_trace() {
    let g = golden();
    let s = scenario();
    let params = SimParams::default().with_episode_length(s.episode_length);
    let m = run_episode(&s.network, &s.flows, &mut FixedTime, params).unwrap();
    assert_eq!(m, metrics(&g["fixedtime"]["metrics"]));
}

#[test]
fn symbolic_policy_metrics_match() {
    let g = golden();
    let s = scenario();
    let params = SimParams::default().with_episode_length(s.episode_length);
    let pf = PriorityFunction::parse("mul LI mul DI DI").unwrap();
    let mut ctl = SymbolicController::new(pf).unwrap();
    let m = run_episode(&s.network, &s.flows, &mut ctl, params).unwrap();
    assert_eq!(m, metrics(&g["mul LI mul DI DI"]["metrics"]));
}

#[test]
fn max_pressure_beats_fixed_time_on_congested_scenario() {
    let s = scenario();
    let params = SimParams::default().with_episode_length(s.episode_length);
    let ft = run_episode(&s.network, &s.flows, &mut FixedTime, params).unwrap();
    let mp = run_episode(&s.network, &s.flows, &mut MaxPressure, params).unwrap();
    assert!(mp.avg_travel_time <= ft.avg_travel_time, "{mp:?} vs {ft:?}");
}
