//! Deterministic lane-queue traffic microsimulator.

mod engine;
mod network;

pub use engine::{
    run_episode, Controller, Discharge, EpisodeMetrics, Signal, SimParams, Simulation,
    VehiclePosition, VehicleStatus,
};
pub use network::{
    jitter_flows, lane_id, replica_flows, replica_seed, Flow, FlowFile, Intersection,
    IntersectionFile, Lane, LaneFile, Movement, MovementFile, NetworkFile, Road, RoadFile,
    Scenario, ScenarioFile, TrafficNetwork,
};
