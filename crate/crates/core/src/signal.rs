//! Self-organizing two-phase signal control.
//!
//! Each intersection runs an isolated controller that compares the
//! "pressure" of its two approaches, computed from trust-filtered reports
//! only. The pressure formula and switching policy are a stand-in for the
//! original priority controller, which is not reproduced here: a vehicle
//! within the horizon upstream of the stop line counts 1, or
//! `stopped_weight` if it reports near-zero speed; a switch happens after
//! `min_green_s` once the opposing pressure exceeds the current one by
//! `hysteresis`, or unconditionally when the opposing approach would
//! otherwise stay red longer than `max_red_s`.

use serde::{Deserialize, Serialize};

use crate::topology::{Approach, GridTopology, IntersectionId, LaneId, CELL_LENGTH_M};
use crate::vanet::VehicleReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Colour {
    Red,
    Green,
}

impl Colour {
    pub fn as_str(self) -> &'static str {
        match self {
            Colour::Red => "red",
            Colour::Green => "green",
        }
    }

    pub fn parse(s: &str) -> Option<Colour> {
        match s {
            "red" => Some(Colour::Red),
            "green" => Some(Colour::Green),
            _ => None,
        }
    }
}

/// Colour of every approach of every intersection for one tick.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignalAssignment {
    colours: Vec<[Colour; 2]>,
}

impl SignalAssignment {
    pub fn all(colour: Colour) -> Self {
        SignalAssignment {
            colours: vec![[colour; 2]; crate::topology::GRID_SIZE.pow(2)],
        }
    }

    pub fn from_states(states: &[SignalState]) -> Self {
        SignalAssignment {
            colours: states
                .iter()
                .map(|s| [s.colour(Approach::Horizontal), s.colour(Approach::Vertical)])
                .collect(),
        }
    }

    pub fn colour(&self, node: IntersectionId, approach: Approach) -> Colour {
        self.colours[node.0 as usize][approach.index()]
    }

    pub fn set(&mut self, node: IntersectionId, approach: Approach, colour: Colour) {
        self.colours[node.0 as usize][approach.index()] = colour;
    }

    pub fn len(&self) -> usize {
        self.colours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colours.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    pub min_green_s: u32,
    pub intergreen_s: u32,
    pub max_red_s: u32,
    pub pressure_horizon_m: f64,
    pub stopped_weight: f64,
    pub hysteresis: f64,
    /// Reported speeds below this count as stopped, m/s.
    pub stopped_speed_mps: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        ControllerParams {
            min_green_s: 10,
            intergreen_s: 5,
            max_red_s: 115,
            pressure_horizon_m: 150.0,
            stopped_weight: 2.0,
            hysteresis: 1.0,
            stopped_speed_mps: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Green(Approach),
    /// All-red clearance before `next` turns green.
    Intergreen {
        next: Approach,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignalState {
    pub intersection: IntersectionId,
    pub phase: Phase,
    /// Ticks this phase has been displayed, including the current one.
    pub phase_age: u32,
    /// Consecutive red ticks per approach, indexed by [`Approach::index`].
    pub time_since_service: [u32; 2],
}

impl SignalState {
    /// Controller at rest before its first tick: horizontal green, age zero.
    pub fn new(intersection: IntersectionId) -> Self {
        SignalState {
            intersection,
            phase: Phase::Green(Approach::Horizontal),
            phase_age: 0,
            time_since_service: [0; 2],
        }
    }

    pub fn colour(&self, approach: Approach) -> Colour {
        match self.phase {
            Phase::Green(a) if a == approach => Colour::Green,
            _ => Colour::Red,
        }
    }
}

/// Pressure of one approach: weighted count of reports on `lane` between
/// `stop_line - horizon` and the stop line.
pub fn compute_pressure<'a>(
    reports: impl IntoIterator<Item = &'a VehicleReport>,
    lane: LaneId,
    stop_line: f64,
    params: &ControllerParams,
) -> f64 {
    let lower = stop_line - params.pressure_horizon_m;
    let upper = stop_line + CELL_LENGTH_M / 2.0;
    reports
        .into_iter()
        .filter(|r| r.lane == lane && r.x >= lower && r.x < upper)
        .map(|r| {
            if r.v < params.stopped_speed_mps {
                params.stopped_weight
            } else {
                1.0
            }
        })
        .sum()
}

/// Pressures of both approaches of every intersection, indexed by node then
/// [`Approach::index`].
pub fn network_pressures<'a>(
    reports: impl IntoIterator<Item = &'a VehicleReport>,
    topo: &GridTopology,
    params: &ControllerParams,
) -> Vec<[f64; 2]> {
    let mut by_lane: Vec<Vec<&VehicleReport>> = vec![Vec::new(); topo.lanes.len()];
    for r in reports {
        if let Some(bucket) = by_lane.get_mut(r.lane.0 as usize) {
            bucket.push(r);
        }
    }
    topo.intersections
        .iter()
        .map(|node| {
            Approach::ALL.map(|a| {
                let lane = node.lane(a);
                compute_pressure(
                    by_lane[lane.0 as usize].iter().copied(),
                    lane,
                    node.stop_line(a),
                    params,
                )
            })
        })
        .collect()
}

/// Advance one controller by one tick and return the state displayed during
/// that tick.
pub fn decide_phase(
    state: &SignalState,
    pressures: [f64; 2],
    params: &ControllerParams,
) -> SignalState {
    let mut next = state.clone();
    match state.phase {
        Phase::Green(current) => {
            let opposing = current.opposing();
            let forced = state.time_since_service[opposing.index()] + params.intergreen_s
                >= params.max_red_s;
            let wants = state.phase_age >= params.min_green_s
                && pressures[opposing.index()] > pressures[current.index()] + params.hysteresis;
            if (forced || wants) && params.intergreen_s > 0 {
                next.phase = Phase::Intergreen { next: opposing };
                next.phase_age = 1;
            } else if forced || wants {
                next.phase = Phase::Green(opposing);
                next.phase_age = 1;
            } else {
                next.phase_age += 1;
            }
        }
        Phase::Intergreen { next: target } => {
            if state.phase_age >= params.intergreen_s {
                next.phase = Phase::Green(target);
                next.phase_age = 1;
            } else {
                next.phase_age += 1;
            }
        }
    }
    for a in Approach::ALL {
        let green = next.colour(a) == Colour::Green;
        let slot = &mut next.time_since_service[a.index()];
        *slot = if green { 0 } else { *slot + 1 };
    }
    next
}
