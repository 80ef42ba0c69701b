//! Vehicle reports and Sybil injection.
//!
//! True vehicles report once per tick with bounded localization noise and
//! the positions of every true vehicle their sensors see within range.
//! Fabricated identities move at a constant claimed velocity and are never
//! sensed by anyone, since they do not physically exist.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::signal::{Colour, SignalAssignment};
use crate::spatial::BucketGrid;
use crate::topology::{Approach, GridTopology, IntersectionId, LaneId, Point};
use crate::traffic::{NetworkState, VehicleId, SYBIL_ID_BASE};

/// One sensed neighbour `<x_k, l_k>`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbour {
    pub x: f64,
    pub lane: LaneId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleReport {
    pub sender: VehicleId,
    pub t: u64,
    pub lane: LaneId,
    /// Metres along the lane.
    pub x: f64,
    /// m/s.
    pub v: f64,
    pub neighbours: Vec<Neighbour>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportBatch {
    pub t: u64,
    pub reports: Vec<VehicleReport>,
}

impl ReportBatch {
    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Sybil spawn probability per lane per second.
    pub q_f: f64,
    /// Sybils vouch for each other in their neighbour sets.
    pub collusion: bool,
    /// Claimed constant velocity range, m/s.
    pub velocity_range: (f64, f64),
    /// Lifetime of a stationary (v = 0) Sybil stream, seconds. Moving
    /// streams live until they pass the lane end.
    pub max_lifetime_s: u32,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            q_f: 0.0,
            collusion: false,
            velocity_range: (0.0, 15.0),
            max_lifetime_s: 120,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SybilStream {
    pub id: VehicleId,
    pub lane: LaneId,
    pub x0: f64,
    pub v: f64,
    pub born: u64,
}

impl SybilStream {
    pub fn position_at(&self, t: u64) -> f64 {
        self.x0 + self.v * (t - self.born) as f64
    }
}

/// Live fabricated identities.
#[derive(Clone, Debug)]
pub struct SybilSwarm {
    streams: Vec<SybilStream>,
    next_id: u64,
}

impl Default for SybilSwarm {
    fn default() -> Self {
        SybilSwarm {
            streams: Vec::new(),
            next_id: SYBIL_ID_BASE,
        }
    }
}

impl SybilSwarm {
    pub fn streams(&self) -> &[SybilStream] {
        &self.streams
    }

    pub fn is_sybil(id: VehicleId) -> bool {
        id.0 >= SYBIL_ID_BASE
    }

    /// Start a stream directly, bypassing the random spawn process.
    pub fn launch(&mut self, lane: LaneId, x0: f64, v: f64, born: u64) -> VehicleId {
        let id = VehicleId(self.next_id);
        self.next_id += 1;
        self.streams.push(SybilStream {
            id,
            lane,
            x0,
            v,
            born,
        });
        id
    }
}

/// Reports of all true vehicles for the current tick, in vehicle-ID order.
///
/// Positions carry uniform noise in `[-noise, +noise]` clamped to the lane.
/// Neighbour entries list every other true vehicle within `range` of the
/// sender's true position, each with its own independent noise draw.
pub fn generate_reports(
    state: &NetworkState,
    topo: &GridTopology,
    range: f64,
    noise: f64,
    rng: &mut RandomStream,
) -> ReportBatch {
    let length = topo.lane_length();
    let jitter = |x: f64, rng: &mut RandomStream| {
        if noise > 0.0 {
            (x + rng.uniform(-noise, noise)).clamp(0.0, length)
        } else {
            x
        }
    };

    let vehicles = state.vehicles();
    let points: Vec<Point> = vehicles
        .iter()
        .map(|v| topo.point(v.lane, v.position_m()))
        .collect();
    let grid = BucketGrid::new(range, points.iter().copied());

    let mut reports = Vec::with_capacity(vehicles.len());
    let mut seen = Vec::new();
    for (j, vehicle) in vehicles.iter().enumerate() {
        let x = jitter(vehicle.position_m(), rng);
        seen.clear();
        seen.extend(
            grid.candidates(points[j])
                .filter(|&k| k != j && points[k].distance(points[j]) <= range),
        );
        seen.sort_unstable();
        let neighbours = seen
            .iter()
            .map(|&k| Neighbour {
                x: jitter(vehicles[k].position_m(), rng),
                lane: vehicles[k].lane,
            })
            .collect();
        reports.push(VehicleReport {
            sender: vehicle.id,
            t: state.tick,
            lane: vehicle.lane,
            x,
            v: vehicle.speed_mps(),
            neighbours,
        });
    }
    ReportBatch {
        t: state.tick,
        reports,
    }
}

/// Advance the Sybil swarm to `batch.t` and append one report per live
/// stream.
///
/// Streams past the lane end, and stationary streams older than the
/// lifetime cap, are retired;
/// then each lane starts a new stream with probability `q_f` at a uniform
/// position and a uniform constant velocity.
pub fn inject_sybil(
    batch: &mut ReportBatch,
    attack: &AttackConfig,
    swarm: &mut SybilSwarm,
    topo: &GridTopology,
    range: f64,
    rng: &mut RandomStream,
) {
    let t = batch.t;
    let length = topo.lane_length();
    swarm.streams.retain(|s| {
        let expired = s.v == 0.0 && t.saturating_sub(s.born) >= u64::from(attack.max_lifetime_s);
        !expired && s.position_at(t) <= length
    });
    for lane in &topo.lanes {
        let draw = rng.unit();
        if draw < attack.q_f {
            let x0 = rng.uniform(0.0, length);
            let v = rng.uniform(attack.velocity_range.0, attack.velocity_range.1);
            swarm.launch(lane.id, x0, v, t);
        }
    }

    let claimed: Vec<(LaneId, f64)> = swarm
        .streams
        .iter()
        .map(|s| (s.lane, s.position_at(t)))
        .collect();
    let points: Vec<Point> = claimed.iter().map(|&(l, x)| topo.point(l, x)).collect();
    let grid = attack
        .collusion
        .then(|| BucketGrid::new(range, points.iter().copied()));

    for (i, s) in swarm.streams.iter().enumerate() {
        let neighbours = match &grid {
            Some(grid) => {
                let mut near: Vec<usize> = grid
                    .candidates(points[i])
                    .filter(|&k| k != i && points[k].distance(points[i]) <= range)
                    .collect();
                near.sort_unstable();
                near.iter()
                    .map(|&k| Neighbour {
                        x: claimed[k].1,
                        lane: claimed[k].0,
                    })
                    .collect()
            }
            None => Vec::new(),
        };
        batch.reports.push(VehicleReport {
            sender: s.id,
            t,
            lane: s.lane,
            x: claimed[i].1,
            v: s.v,
            neighbours,
        });
    }
}

/// One line of the text trace: `t,sender,lane,x,v,[k: x_1 l_1 ... x_k l_k]`.
pub fn format_report(r: &VehicleReport) -> String {
    let mut line = format!(
        "{},{},{},{},{},[{}:",
        r.t,
        r.sender,
        r.lane,
        r.x,
        r.v,
        r.neighbours.len()
    );
    for n in &r.neighbours {
        let _ = write!(line, " {} {}", n.x, n.lane);
    }
    line.push(']');
    line
}

pub fn parse_report(line: &str, line_no: usize) -> Result<VehicleReport> {
    let bad = |reason: &str| Error::Trace {
        line: line_no,
        reason: reason.to_string(),
    };
    let mut fields = line.splitn(6, ',');
    let mut next = |name: &str| {
        fields
            .next()
            .map(str::trim)
            .ok_or_else(|| bad(&format!("missing {name}")))
    };
    let t = next("t")?.parse().map_err(|_| bad("bad t"))?;
    let sender = VehicleId(next("sender")?.parse().map_err(|_| bad("bad sender"))?);
    let lane = LaneId(next("lane")?.parse().map_err(|_| bad("bad lane"))?);
    let x = next("x")?.parse().map_err(|_| bad("bad x"))?;
    let v = next("v")?.parse().map_err(|_| bad("bad v"))?;
    let set = next("neighbours")?;
    let inner = set
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| bad("neighbour set must be bracketed"))?;
    let (count, rest) = inner
        .split_once(':')
        .ok_or_else(|| bad("neighbour count missing"))?;
    let count: usize = count
        .trim()
        .parse()
        .map_err(|_| bad("bad neighbour count"))?;
    let tokens: Vec<&str> = rest.split_whitespace().collect();
    if tokens.len() != 2 * count {
        return Err(bad("neighbour count does not match entries"));
    }
    let neighbours = tokens
        .chunks(2)
        .map(|pair| {
            Ok(Neighbour {
                x: pair[0].parse().map_err(|_| bad("bad neighbour x"))?,
                lane: LaneId(pair[1].parse().map_err(|_| bad("bad neighbour lane"))?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VehicleReport {
        sender,
        t,
        lane,
        x,
        v,
        neighbours,
    })
}

/// Read a report trace into per-tick batches, in tick order.
pub fn parse_trace(text: &str) -> Result<Vec<ReportBatch>> {
    let mut batches: Vec<ReportBatch> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let report = parse_report(line, i + 1)?;
        match batches.last_mut() {
            Some(b) if b.t == report.t => b.reports.push(report),
            Some(b) if b.t > report.t => {
                return Err(Error::Trace {
                    line: i + 1,
                    reason: "ticks out of order".into(),
                })
            }
            _ => batches.push(ReportBatch {
                t: report.t,
                reports: vec![report],
            }),
        }
    }
    Ok(batches)
}

/// Signal trace lines: `t,intersection,horizontal_colour,vertical_colour`.
pub fn format_signals(t: u64, signals: &SignalAssignment) -> String {
    let mut out = String::new();
    for n in 0..signals.len() {
        let node = IntersectionId(n as u8);
        let _ = writeln!(
            out,
            "{t},{n},{},{}",
            signals.colour(node, Approach::Horizontal).as_str(),
            signals.colour(node, Approach::Vertical).as_str()
        );
    }
    out
}

/// Read a signal trace into per-tick assignments.
pub fn parse_signal_trace(text: &str) -> Result<Vec<(u64, SignalAssignment)>> {
    let mut out: Vec<(u64, SignalAssignment)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| Error::Trace {
            line: i + 1,
            reason: reason.to_string(),
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(bad("expected t,intersection,horizontal,vertical"));
        }
        let t: u64 = f[0].parse().map_err(|_| bad("bad t"))?;
        let node: u8 = f[1].parse().map_err(|_| bad("bad intersection"))?;
        if usize::from(node) >= crate::topology::GRID_SIZE.pow(2) {
            return Err(bad("intersection out of range"));
        }
        let h = Colour::parse(f[2]).ok_or_else(|| bad("bad colour"))?;
        let v = Colour::parse(f[3]).ok_or_else(|| bad("bad colour"))?;
        if out.last().is_none_or(|(last, _)| *last != t) {
            if out.last().is_some_and(|(last, _)| *last > t) {
                return Err(bad("ticks out of order"));
            }
            out.push((t, SignalAssignment::all(Colour::Red)));
        }
        let (_, assignment) = out.last_mut().expect("pushed above");
        assignment.set(IntersectionId(node), Approach::Horizontal, h);
        assignment.set(IntersectionId(node), Approach::Vertical, v);
    }
    Ok(out)
}
