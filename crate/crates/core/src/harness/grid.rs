//! Synthetic grid networks with Poisson arrivals.
//!
//! Every intersection has four approaches. An approach road carries one lane
//! per turn (left, through, right) at its downstream end; roads that leave
//! the grid have a single lane. Vehicles pick a turn at every intersection
//! they reach, which fixes the lane they use on each road.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{
    lane_id, FlowFile, IntersectionFile, LaneFile, MovementFile, NetworkFile, RoadFile,
    ScenarioFile,
};

/// Arrival rates per boundary approach, vehicles per hour. East-west
/// approaches carry the major stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemandProfile {
    Light,
    Medium,
    Heavy,
}

impl DemandProfile {
    /// (major, minor) vehicles per hour per approach.
    pub fn rates(self) -> (f64, f64) {
        match self {
            DemandProfile::Light => (240.0, 120.0),
            DemandProfile::Medium => (420.0, 210.0),
            DemandProfile::Heavy => (600.0, 300.0),
        }
    }
}

impl fmt::Display for DemandProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DemandProfile::Light => "light",
            DemandProfile::Medium => "medium",
            DemandProfile::Heavy => "heavy",
        })
    }
}

impl FromStr for DemandProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "light" => Ok(DemandProfile::Light),
            "medium" => Ok(DemandProfile::Medium),
            "heavy" => Ok(DemandProfile::Heavy),
            other => Err(Error::Config(format!("unknown demand profile `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseScheme {
    /// Through+right and protected left for each axis.
    Four,
    /// Paired movements per axis plus one phase per approach.
    Eight,
    /// Four- and eight-phase intersections in a checkerboard.
    Mixed,
}

impl FromStr for PhaseScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "4" | "four" => Ok(PhaseScheme::Four),
            "8" | "eight" => Ok(PhaseScheme::Eight),
            "mixed" => Ok(PhaseScheme::Mixed),
            other => Err(Error::Config(format!("unknown phase scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub rows: usize,
    pub cols: usize,
    pub demand: DemandProfile,
    pub seed: u64,
    pub phases: PhaseScheme,
    pub episode_length_s: u32,
    pub lane_length_m: f64,
    pub speed_mps: f64,
    pub lane_capacity: usize,
    /// Probability of (left, through, right) at each intersection.
    pub turn_probs: [f64; 3],
    /// Overrides the profile's (major, minor) vehicles per hour.
    #[serde(default)]
    pub rates_vph: Option<[f64; 2]>,
}

impl GridOptions {
    pub fn new(rows: usize, cols: usize, demand: DemandProfile, seed: u64) -> Self {
        Self {
            rows,
            cols,
            demand,
            seed,
            phases: PhaseScheme::Eight,
            episode_length_s: 3600,
            lane_length_m: 200.0,
            speed_mps: 10.0,
            lane_capacity: 40,
            turn_probs: [0.2, 0.6, 0.2],
            rates_vph: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    N,
    E,
    S,
    W,
}

const DIRS: [Dir; 4] = [Dir::N, Dir::E, Dir::S, Dir::W];

impl Dir {
    fn idx(self) -> usize {
        self as usize
    }

    fn opposite(self) -> Dir {
        DIRS[(self.idx() + 2) % 4]
    }

    /// Direction of travel after taking `turn` (0 left, 1 through, 2 right)
    /// while heading `self`.
    fn turn(self, turn: usize) -> Dir {
        match turn {
            0 => DIRS[(self.idx() + 3) % 4],
            1 => self,
            _ => DIRS[(self.idx() + 1) % 4],
        }
    }

    fn tag(self) -> char {
        ['N', 'E', 'S', 'W'][self.idx()]
    }

    fn is_major(self) -> bool {
        matches!(self, Dir::E | Dir::W)
    }
}

struct Grid {
    rows: usize,
    cols: usize,
}

impl Grid {
    fn neighbor(&self, (r, c): (usize, usize), d: Dir) -> Option<(usize, usize)> {
        match d {
            Dir::N if r > 0 => Some((r - 1, c)),
            Dir::S if r + 1 < self.rows => Some((r + 1, c)),
            Dir::W if c > 0 => Some((r, c - 1)),
            Dir::E if c + 1 < self.cols => Some((r, c + 1)),
            _ => None,
        }
    }

    fn intersection_id((r, c): (usize, usize)) -> String {
        format!("I_{r}_{c}")
    }

    /// Road leaving `at` heading `d`.
    fn leaving(at: (usize, usize), d: Dir) -> String {
        format!("R_{}_{}_{}", at.0, at.1, d.tag())
    }

    /// Road entering `at` on its `arm` approach.
    fn entering(&self, at: (usize, usize), arm: Dir) -> String {
        match self.neighbor(at, arm) {
            Some(n) => Self::leaving(n, arm.opposite()),
            None => format!("B_{}_{}_{}", at.0, at.1, arm.tag()),
        }
    }

    fn leaving_lanes(&self, at: (usize, usize), d: Dir) -> usize {
        if self.neighbor(at, d).is_some() {
            3
        } else {
            1
        }
    }
}

/// Builds an `rows x cols` grid scenario; identical options give an
/// identical file.
pub fn generate_grid_scenario(opts: &GridOptions) -> ScenarioFile {
    let grid = Grid {
        rows: opts.rows,
        cols: opts.cols,
    };
    let lane = LaneFile {
        capacity: opts.lane_capacity,
        length_m: opts.lane_length_m,
        speed_mps: opts.speed_mps,
    };
    let cells: Vec<(usize, usize)> = (0..opts.rows)
        .flat_map(|r| (0..opts.cols).map(move |c| (r, c)))
        .collect();

    let mut roads = Vec::new();
    for &at in &cells {
        for d in DIRS {
            roads.push(RoadFile {
                id: Grid::leaving(at, d),
                from: Some(Grid::intersection_id(at)),
                to: grid.neighbor(at, d).map(Grid::intersection_id),
                lanes: vec![lane.clone(); grid.leaving_lanes(at, d)],
            });
        }
    }
    for &at in &cells {
        for arm in DIRS {
            if grid.neighbor(at, arm).is_none() {
                roads.push(RoadFile {
                    id: grid.entering(at, arm),
                    from: None,
                    to: Some(Grid::intersection_id(at)),
                    lanes: vec![lane.clone(); 3],
                });
            }
        }
    }

    let mut intersections = Vec::new();
    for &at in &cells {
        let mut movements = Vec::new();
        // movement indices per (arm, turn)
        let mut groups = vec![[Vec::new(), Vec::new(), Vec::new()]; 4];
        for arm in DIRS {
            let heading = arm.opposite();
            let in_road = grid.entering(at, arm);
            for (turn, group) in groups[arm.idx()].iter_mut().enumerate() {
                let out = heading.turn(turn);
                let out_road = Grid::leaving(at, out);
                for k in 0..grid.leaving_lanes(at, out) {
                    group.push(movements.len());
                    movements.push(MovementFile {
                        in_lane: lane_id(&in_road, turn),
                        out_lane: lane_id(&out_road, k),
                    });
                }
            }
        }
        let eight = match opts.phases {
            PhaseScheme::Four => false,
            PhaseScheme::Eight => true,
            PhaseScheme::Mixed => (at.0 + at.1) % 2 == 1,
        };
        let pick = |arms: &[Dir], turns: &[usize]| -> Vec<usize> {
            let mut v: Vec<usize> = arms
                .iter()
                .flat_map(|a| turns.iter().flat_map(|&t| groups[a.idx()][t].clone()))
                .collect();
            v.sort_unstable();
            v
        };
        let ns = [Dir::N, Dir::S];
        let ew = [Dir::E, Dir::W];
        let phases = if eight {
            vec![
                pick(&ew, &[1, 2]),
                pick(&ns, &[1, 2]),
                pick(&ew, &[0]),
                pick(&ns, &[0]),
                pick(&[Dir::W], &[0, 1, 2]),
                pick(&[Dir::E], &[0, 1, 2]),
                pick(&[Dir::N], &[0, 1, 2]),
                pick(&[Dir::S], &[0, 1, 2]),
            ]
        } else {
            vec![
                pick(&ns, &[1, 2]),
                pick(&ns, &[0]),
                pick(&ew, &[1, 2]),
                pick(&ew, &[0]),
            ]
        };
        intersections.push(IntersectionFile {
            id: Grid::intersection_id(at),
            phases,
            movements,
        });
    }

    let flows = generate_flows(&grid, &cells, opts);
    ScenarioFile {
        network: NetworkFile {
            intersections,
            roads,
        },
        flows,
        episode_length_s: opts.episode_length_s,
    }
}

fn sample_turn<R: Rng>(rng: &mut R, probs: &[f64; 3]) -> usize {
    let total: f64 = probs.iter().sum();
    let u = rng.gen::<f64>() * total;
    if u < probs[0] {
        0
    } else if u < probs[0] + probs[1] {
        1
    } else {
        2
    }
}

fn generate_flows(grid: &Grid, cells: &[(usize, usize)], opts: &GridOptions) -> Vec<FlowFile> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (major, minor) = opts.rates_vph.map_or(opts.demand.rates(), |[a, b]| (a, b));
    let horizon = f64::from(opts.episode_length_s);
    let max_hops = opts.rows + opts.cols;
    let mut flows = Vec::new();
    for &start in cells {
        for arm in DIRS {
            if grid.neighbor(start, arm).is_some() {
                continue;
            }
            let rate = if arm.is_major() { major } else { minor } / 3600.0;
            let mut t = 0.0;
            loop {
                t += -(1.0 - rng.gen::<f64>()).ln() / rate;
                if t >= horizon {
                    break;
                }
                let mut route = Vec::new();
                let mut at = start;
                let mut heading = arm.opposite();
                let mut in_road = grid.entering(start, arm);
                let mut hops = 0;
                loop {
                    let turn = if hops >= max_hops {
                        1
                    } else {
                        sample_turn(&mut rng, &opts.turn_probs)
                    };
                    route.push(lane_id(&in_road, turn));
                    let out = heading.turn(turn);
                    let out_road = Grid::leaving(at, out);
                    match grid.neighbor(at, out) {
                        Some(next) => {
                            at = next;
                            heading = out;
                            in_road = out_road;
                            hops += 1;
                        }
                        None => {
                            route.push(lane_id(&out_road, 0));
                            break;
                        }
                    }
                }
                flows.push(FlowFile {
                    entry_time_s: t.floor(),
                    route,
                });
            }
        }
    }
    flows.sort_by(|a, b| a.entry_time_s.total_cmp(&b.entry_time_s));
    flows
}
