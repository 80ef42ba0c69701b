//! Ground-truth vehicle dynamics: a stochastic cellular automaton with open
//! boundaries, advanced one second per tick.
//!
//! Each tick applies, in parallel over all vehicles against a frozen copy of
//! the tick-start state: acceleration, braking to the free gap (leader,
//! occupied intersection cell, or red signal), random deceleration with
//! probability `p`, and movement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{KeyedStream, RandomStream};
use crate::signal::{Colour, SignalAssignment};
use crate::topology::{GridTopology, LaneId, CELL_LENGTH_M, LANE_CELLS};

/// IDs at or above this value belong to fabricated (Sybil) identities.
pub const SYBIL_ID_BASE: u64 = 1 << 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VehicleId(pub u64);

impl std::fmt::Display for VehicleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vehicle {
    pub id: VehicleId,
    pub lane: LaneId,
    pub cell: usize,
    /// Cells per second.
    pub velocity: u8,
    pub stop_delay_s: u32,
}

impl Vehicle {
    pub fn position_m(&self) -> f64 {
        self.cell as f64 * CELL_LENGTH_M
    }

    pub fn speed_mps(&self) -> f64 {
        f64::from(self.velocity) * CELL_LENGTH_M
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Random deceleration probability.
    pub p: f64,
    /// Spawn probability per entry lane per second.
    pub q: f64,
    /// Cells per second.
    pub v_max: u8,
    pub duration_s: u32,
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            p: 0.15,
            q: 0.10,
            v_max: 2,
            duration_s: 600,
            seed: 0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |key: &str, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(Error::InvalidValue {
                    key: key.into(),
                    value: value.to_string(),
                    reason: "must lie in [0, 1]".into(),
                })
            }
        };
        unit("p", self.p)?;
        unit("q", self.q)
    }
}

/// Result of one automaton update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepOutcome {
    pub departed: usize,
}

/// Ground truth of the simulation.
#[derive(Clone, Debug)]
pub struct NetworkState {
    pub tick: u64,
    /// Sorted by ID.
    vehicles: Vec<Vehicle>,
    next_id: u64,
    entered: u64,
    departed: u64,
    departed_delay_s: u64,
}

impl Default for NetworkState {
    fn default() -> Self {
        Self::new()
    }
}

impl NetworkState {
    pub fn new() -> Self {
        NetworkState {
            tick: 0,
            vehicles: Vec::new(),
            next_id: 1,
            entered: 0,
            departed: 0,
            departed_delay_s: 0,
        }
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    /// True vehicles that entered the network so far.
    pub fn entered(&self) -> u64 {
        self.entered
    }

    pub fn departed(&self) -> u64 {
        self.departed
    }

    /// Insert a vehicle at a given cell, e.g. to set up a queue.
    pub fn place_vehicle(&mut self, lane: LaneId, cell: usize, velocity: u8) -> Result<VehicleId> {
        if cell >= LANE_CELLS || self.occupant(lane, cell).is_some() {
            return Err(Error::InvalidValue {
                key: "cell".into(),
                value: cell.to_string(),
                reason: format!("cell on lane {lane} is occupied or out of range"),
            });
        }
        Ok(self.insert(lane, cell, velocity))
    }

    fn insert(&mut self, lane: LaneId, cell: usize, velocity: u8) -> VehicleId {
        let id = VehicleId(self.next_id);
        self.next_id += 1;
        self.entered += 1;
        self.vehicles.push(Vehicle {
            id,
            lane,
            cell,
            velocity,
            stop_delay_s: 0,
        });
        id
    }

    pub fn occupant(&self, lane: LaneId, cell: usize) -> Option<&Vehicle> {
        self.vehicles
            .iter()
            .find(|v| v.lane == lane && v.cell == cell)
    }

    /// Checks the no-collision and speed invariants.
    pub fn check_invariants(
        &self,
        topo: &GridTopology,
        v_max: u8,
    ) -> std::result::Result<(), String> {
        let mut lanes = vec![vec![false; LANE_CELLS]; topo.lanes.len()];
        let mut nodes = vec![false; topo.intersections.len()];
        for v in &self.vehicles {
            if v.velocity > v_max {
                return Err(format!("vehicle {} exceeds v_max", v.id));
            }
            if v.cell >= LANE_CELLS {
                return Err(format!("vehicle {} beyond lane end", v.id));
            }
            let slot = &mut lanes[v.lane.0 as usize][v.cell];
            if *slot {
                return Err(format!("collision on lane {} cell {}", v.lane, v.cell));
            }
            *slot = true;
            if let Some(node) = topo.crossing_at(v.lane, v.cell) {
                if nodes[node.0 as usize] {
                    return Err(format!("collision inside intersection {node}"));
                }
                nodes[node.0 as usize] = true;
            }
        }
        Ok(())
    }
}

/// Advance the automaton by one tick under the given signal colours.
pub fn ca_step(
    state: &mut NetworkState,
    topo: &GridTopology,
    signals: &SignalAssignment,
    params: &SimParams,
    rng: &KeyedStream,
) -> StepOutcome {
    let mut lanes = vec![vec![false; LANE_CELLS]; topo.lanes.len()];
    let mut nodes = vec![false; topo.intersections.len()];
    for v in &state.vehicles {
        lanes[v.lane.0 as usize][v.cell] = true;
        if let Some(node) = topo.crossing_at(v.lane, v.cell) {
            nodes[node.0 as usize] = true;
        }
    }

    let tick = state.tick;
    for v in &mut state.vehicles {
        let approach = topo.lane(v.lane).approach;
        let occupied = &lanes[v.lane.0 as usize];
        // 1. acceleration
        let wanted = (v.velocity + 1).min(params.v_max);
        // 2. braking to the free gap
        let mut gap = 0u8;
        while gap < wanted {
            let next = v.cell + usize::from(gap) + 1;
            if next >= LANE_CELLS {
                gap = wanted;
                break;
            }
            if occupied[next] {
                break;
            }
            if let Some(node) = topo.crossing_at(v.lane, next) {
                if nodes[node.0 as usize] || signals.colour(node, approach) == Colour::Red {
                    break;
                }
            }
            gap += 1;
        }
        let mut speed = wanted.min(gap);
        // 3. randomization; the draw is addressed by (vehicle, tick)
        if rng.unit(v.id.0, tick) < params.p {
            speed = speed.saturating_sub(1);
        }
        v.velocity = speed;
    }

    // 4. movement
    let mut outcome = StepOutcome::default();
    let (mut departed, mut departed_delay) = (0u64, 0u64);
    state.vehicles.retain_mut(|v| {
        v.cell += usize::from(v.velocity);
        if v.cell >= LANE_CELLS {
            departed += 1;
            departed_delay += u64::from(v.stop_delay_s);
            return false;
        }
        if v.velocity == 0 {
            v.stop_delay_s += 1;
        }
        true
    });
    state.departed += departed;
    state.departed_delay_s += departed_delay;
    outcome.departed = departed as usize;
    state.tick += 1;
    outcome
}

/// Spawn new vehicles at lane entries with probability `q` each.
///
/// One draw is consumed per entry lane per call whether or not the entry
/// cell is free. Returns the number spawned.
pub fn spawn_vehicles(
    state: &mut NetworkState,
    topo: &GridTopology,
    q: f64,
    v_max: u8,
    rng: &mut RandomStream,
) -> usize {
    let mut spawned = 0;
    for (lane, cell) in topo.entries() {
        let draw = rng.unit();
        if draw < q && state.occupant(lane, cell).is_none() {
            state.insert(lane, cell, v_max);
            spawned += 1;
        }
    }
    spawned
}

/// Total stop delay (vehicle-seconds) of every true vehicle that was ever
/// present, departed ones included.
pub fn stop_delay_total(state: &NetworkState) -> u64 {
    state.departed_delay_s
        + state
            .vehicles
            .iter()
            .map(|v| u64::from(v.stop_delay_s))
            .sum::<u64>()
}

/// Queue discharge measured at a single intersection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SaturationMeasurement {
    pub runs: usize,
    pub mean_discharged: f64,
    pub green_s: u32,
    pub veh_per_hour: f64,
}

/// Queue `queue_len` stopped vehicles at a red stop line, hold red for
/// `red_s`, switch to green and count stop-line crossings over the first
/// `green_s` seconds, averaged over `runs` seeds.
pub fn measure_saturation_flow(
    topo: &GridTopology,
    p: f64,
    queue_len: usize,
    red_s: u32,
    green_s: u32,
    runs: usize,
    base_seed: u64,
) -> SaturationMeasurement {
    use crate::topology::Approach;

    let lane = LaneId(0);
    let (node, intersection_cell) = topo.lane(lane).crossings[0];
    let stop_cell = intersection_cell - 1;
    let queue_len = queue_len.min(stop_cell + 1);
    let mut red = SignalAssignment::all(Colour::Green);
    red.set(node, Approach::Horizontal, Colour::Red);
    let green = SignalAssignment::all(Colour::Green);

    let mut total = 0usize;
    for run in 0..runs {
        let params = SimParams {
            p,
            q: 0.0,
            seed: base_seed + run as u64,
            ..SimParams::default()
        };
        let rng = KeyedStream::new(params.seed, crate::rng::streams::DRIVER);
        let mut state = NetworkState::new();
        for k in 0..queue_len {
            state
                .place_vehicle(lane, stop_cell - k, 0)
                .expect("queue cell free");
        }
        for _ in 0..red_s {
            ca_step(&mut state, topo, &red, &params, &rng);
        }
        for _ in 0..green_s {
            let before: Vec<(VehicleId, usize)> = state
                .vehicles()
                .iter()
                .filter(|v| v.lane == lane)
                .map(|v| (v.id, v.cell))
                .collect();
            ca_step(&mut state, topo, &green, &params, &rng);
            total += before
                .iter()
                .filter(|(id, cell)| {
                    *cell <= stop_cell
                        && state
                            .vehicles()
                            .iter()
                            .find(|v| v.id == *id)
                            .is_none_or(|v| v.cell > stop_cell)
                })
                .count();
        }
    }
    let mean = total as f64 / runs.max(1) as f64;
    SaturationMeasurement {
        runs,
        mean_discharged: mean,
        green_s,
        veh_per_hour: mean * 3600.0 / f64::from(green_s.max(1)),
    }
}
