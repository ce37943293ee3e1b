//! Road network topology and the scenario file format.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_episode_length() -> u32 {
    3600
}

/// On-disk scenario: one file fully determines an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub network: NetworkFile,
    pub flows: Vec<FlowFile>,
    #[serde(default = "default_episode_length")]
    pub episode_length_s: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub intersections: Vec<IntersectionFile>,
    pub roads: Vec<RoadFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntersectionFile {
    pub id: String,
    pub phases: Vec<Vec<usize>>,
    pub movements: Vec<MovementFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovementFile {
    pub in_lane: String,
    pub out_lane: String,
}

/// A directed road. `from`/`to` name an intersection, or are null for a
/// boundary source/sink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadFile {
    pub id: String,
    pub from: Option<String>,
    pub to: Option<String>,
    pub lanes: Vec<LaneFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneFile {
    pub capacity: usize,
    pub length_m: f64,
    pub speed_mps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowFile {
    pub entry_time_s: f64,
    pub route: Vec<String>,
}

/// Lanes are addressed as `<road id>_<lane index>`.
pub fn lane_id(road: &str, index: usize) -> String {
    format!("{road}_{index}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub id: String,
    pub road: usize,
    pub capacity: usize,
    pub length_m: f64,
    pub speed_mps: f64,
    /// Intersection at the stop line, `None` for a boundary sink.
    pub downstream: Option<usize>,
    pub upstream: Option<usize>,
}

impl Lane {
    pub fn traverse_time(&self) -> f64 {
        self.length_m / self.speed_mps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Road {
    pub id: String,
    pub from: Option<usize>,
    pub to: Option<usize>,
    pub lanes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Movement {
    pub in_lane: usize,
    pub out_lane: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Intersection {
    pub id: String,
    pub movements: Vec<Movement>,
    /// Each phase is a non-empty set of movement indices.
    pub phases: Vec<Vec<usize>>,
    /// Distinct lanes touching this intersection (incoming then outgoing).
    pub incident_lanes: Vec<usize>,
    /// `phase_movements[p][m]` is true when phase `p` gives movement `m` green.
    phase_mask: Vec<Vec<bool>>,
}

impl Intersection {
    pub fn phase_allows(&self, phase: usize, movement: usize) -> bool {
        self.phase_mask[phase][movement]
    }
}

/// Validated network with dense indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficNetwork {
    pub lanes: Vec<Lane>,
    pub roads: Vec<Road>,
    pub intersections: Vec<Intersection>,
    /// (in_lane, out_lane) -> (intersection, movement index)
    links: HashMap<(usize, usize), (usize, usize)>,
    /// in_lane -> movements leaving it
    lane_movements: Vec<Vec<(usize, usize)>>,
    lane_index: HashMap<String, usize>,
}

impl TrafficNetwork {
    pub fn from_file(file: &NetworkFile) -> Result<Self> {
        let bad = |msg: String| Error::Scenario(msg);

        let mut inter_index = HashMap::new();
        for (i, it) in file.intersections.iter().enumerate() {
            if inter_index.insert(it.id.clone(), i).is_some() {
                return Err(bad(format!("duplicate intersection id `{}`", it.id)));
            }
        }
        let resolve = |end: &Option<String>, road: &str| -> Result<Option<usize>> {
            match end {
                None => Ok(None),
                Some(id) => inter_index.get(id).copied().map(Some).ok_or_else(|| {
                    bad(format!(
                        "road `{road}` references unknown intersection `{id}`"
                    ))
                }),
            }
        };

        let mut lanes = Vec::new();
        let mut roads = Vec::new();
        let mut lane_index = HashMap::new();
        let mut road_ids = HashMap::new();
        for (r, rf) in file.roads.iter().enumerate() {
            if road_ids.insert(rf.id.clone(), r).is_some() {
                return Err(bad(format!("duplicate road id `{}`", rf.id)));
            }
            if rf.lanes.is_empty() {
                return Err(bad(format!("road `{}` has no lanes", rf.id)));
            }
            let from = resolve(&rf.from, &rf.id)?;
            let to = resolve(&rf.to, &rf.id)?;
            let mut ids = Vec::new();
            for (k, lf) in rf.lanes.iter().enumerate() {
                if lf.capacity == 0 {
                    return Err(bad(format!(
                        "road `{}` lane {k}: capacity must be positive",
                        rf.id
                    )));
                }
                if !(lf.length_m.is_finite() && lf.length_m > 0.0) {
                    return Err(bad(format!(
                        "road `{}` lane {k}: length must be positive",
                        rf.id
                    )));
                }
                if !(lf.speed_mps.is_finite() && lf.speed_mps > 0.0) {
                    return Err(bad(format!(
                        "road `{}` lane {k}: speed must be positive",
                        rf.id
                    )));
                }
                let id = lane_id(&rf.id, k);
                if lane_index.insert(id.clone(), lanes.len()).is_some() {
                    return Err(bad(format!("duplicate lane id `{id}`")));
                }
                ids.push(lanes.len());
                lanes.push(Lane {
                    id,
                    road: r,
                    capacity: lf.capacity,
                    length_m: lf.length_m,
                    speed_mps: lf.speed_mps,
                    downstream: to,
                    upstream: from,
                });
            }
            roads.push(Road {
                id: rf.id.clone(),
                from,
                to,
                lanes: ids,
            });
        }

        let lookup = |id: &str| -> Result<usize> {
            lane_index
                .get(id)
                .copied()
                .ok_or_else(|| bad(format!("unknown lane `{id}`")))
        };

        let mut links = HashMap::new();
        let mut lane_movements = vec![Vec::new(); lanes.len()];
        let mut intersections = Vec::new();
        for (i, it) in file.intersections.iter().enumerate() {
            let mut movements = Vec::new();
            for (m, mf) in it.movements.iter().enumerate() {
                let in_lane = lookup(&mf.in_lane)?;
                let out_lane = lookup(&mf.out_lane)?;
                if lanes[in_lane].downstream != Some(i) {
                    return Err(bad(format!(
                        "intersection `{}` movement {m}: lane `{}` does not enter it",
                        it.id, mf.in_lane
                    )));
                }
                if lanes[out_lane].upstream != Some(i) {
                    return Err(bad(format!(
                        "intersection `{}` movement {m}: lane `{}` does not leave it",
                        it.id, mf.out_lane
                    )));
                }
                if links.insert((in_lane, out_lane), (i, m)).is_some() {
                    return Err(bad(format!(
                        "duplicate movement `{}` -> `{}`",
                        mf.in_lane, mf.out_lane
                    )));
                }
                lane_movements[in_lane].push((i, m));
                movements.push(Movement { in_lane, out_lane });
            }
            if it.phases.is_empty() {
                return Err(bad(format!("intersection `{}` has no phases", it.id)));
            }
            let mut phase_mask = Vec::new();
            for (p, phase) in it.phases.iter().enumerate() {
                if phase.is_empty() {
                    return Err(bad(format!("intersection `{}` phase {p} is empty", it.id)));
                }
                let mut mask = vec![false; movements.len()];
                for &m in phase {
                    if m >= movements.len() {
                        return Err(bad(format!(
                            "intersection `{}` phase {p}: movement {m} out of range",
                            it.id
                        )));
                    }
                    mask[m] = true;
                }
                phase_mask.push(mask);
            }
            let mut incident_lanes: Vec<usize> = Vec::new();
            for mv in &movements {
                if !incident_lanes.contains(&mv.in_lane) {
                    incident_lanes.push(mv.in_lane);
                }
            }
            for mv in &movements {
                if !incident_lanes.contains(&mv.out_lane) {
                    incident_lanes.push(mv.out_lane);
                }
            }
            intersections.push(Intersection {
                id: it.id.clone(),
                movements,
                phases: it.phases.clone(),
                incident_lanes,
                phase_mask,
            });
        }

        Ok(Self {
            lanes,
            roads,
            intersections,
            links,
            lane_movements,
            lane_index,
        })
    }

    pub fn lane_by_id(&self, id: &str) -> Option<usize> {
        self.lane_index.get(id).copied()
    }

    /// Movement joining two lanes, as (intersection, movement index).
    pub fn link(&self, in_lane: usize, out_lane: usize) -> Option<(usize, usize)> {
        self.links.get(&(in_lane, out_lane)).copied()
    }

    /// Movements that discharge from `lane`.
    pub fn movements_from(&self, lane: usize) -> &[(usize, usize)] {
        &self.lane_movements[lane]
    }
}

/// One scheduled vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub entry_time: f64,
    pub route: Vec<usize>,
}

/// A validated environment: network, vehicle schedule and horizon.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub network: Arc<TrafficNetwork>,
    pub flows: Vec<Flow>,
    pub episode_length: u32,
}

impl Scenario {
    pub fn from_file(name: impl Into<String>, file: &ScenarioFile) -> Result<Self> {
        let network = TrafficNetwork::from_file(&file.network)?;
        if file.episode_length_s == 0 {
            return Err(Error::Scenario("episode_length_s must be positive".into()));
        }
        let mut flows = Vec::with_capacity(file.flows.len());
        for (v, ff) in file.flows.iter().enumerate() {
            if !(ff.entry_time_s.is_finite() && ff.entry_time_s >= 0.0) {
                return Err(Error::Scenario(format!(
                    "flow {v}: entry time must be finite and >= 0"
                )));
            }
            if ff.route.is_empty() {
                return Err(Error::Scenario(format!("flow {v}: empty route")));
            }
            let route = ff
                .route
                .iter()
                .map(|id| {
                    network
                        .lane_by_id(id)
                        .ok_or_else(|| Error::Scenario(format!("flow {v}: unknown lane `{id}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            for w in route.windows(2) {
                if network.link(w[0], w[1]).is_none() {
                    return Err(Error::Scenario(format!(
                        "flow {v}: no movement from `{}` to `{}`",
                        network.lanes[w[0]].id, network.lanes[w[1]].id
                    )));
                }
            }
            flows.push(Flow {
                entry_time: ff.entry_time_s,
                route,
            });
        }
        Ok(Self {
            name: name.into(),
            network: Arc::new(network),
            flows,
            episode_length: file.episode_length_s,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let file: ScenarioFile = serde_json::from_str(&text)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into());
        Self::from_file(name, &file)
    }

    /// Same network and horizon with a different vehicle schedule.
    pub fn with_flows(&self, flows: Vec<Flow>) -> Self {
        Self {
            name: self.name.clone(),
            network: Arc::clone(&self.network),
            flows,
            episode_length: self.episode_length,
        }
    }
}

/// Shifts every entry time by an integer drawn uniformly from
/// `[-noise_bound, noise_bound]`, clamped at zero. Routes are untouched.
pub fn jitter_flows(flows: &[Flow], noise_bound: u32, seed: u64) -> Vec<Flow> {
    if noise_bound == 0 {
        return flows.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = i64::from(noise_bound);
    flows
        .iter()
        .map(|f| {
            let shift = rng.gen_range(-bound..=bound) as f64;
            Flow {
                entry_time: shifted_entry(f.entry_time, shift),
                route: f.route.clone(),
            }
        })
        .collect()
}

/// Stream seed for jitter replica `replica` of a run seeded with `seed`.
pub fn replica_seed(seed: u64, replica: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ replica.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Replica `replica` of `flows` for a run seeded with `seed`.
pub fn replica_flows(flows: &[Flow], noise_bound: u32, seed: u64, replica: u64) -> Vec<Flow> {
    jitter_flows(flows, noise_bound, replica_seed(seed, replica))
}

fn shifted_entry(entry: f64, shift: f64) -> f64 {
    (entry + shift).max(0.0)
}
