//! Brute-force reference evaluations of the trust rules and a generator of
//! small randomized traces to compare them against.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vanet_core::signal::{Colour, SignalAssignment};
use vanet_core::topology::{Approach, GridTopology, IntersectionId, LaneId};
use vanet_core::traffic::VehicleId;
use vanet_core::trust::{DetectionParams, TrustLedger};
use vanet_core::vanet::{Neighbour, ReportBatch, VehicleReport};

/// Reports and signal colours of every tick, plus the trust levels in force
/// when the rules are evaluated at each tick.
#[derive(Clone, Debug)]
pub struct MicroTrace {
    pub ticks: Vec<Vec<VehicleReport>>,
    pub signals: Vec<SignalAssignment>,
    pub trust: Vec<BTreeMap<u64, f64>>,
}

const TRUST_LEVELS: [f64; 6] = [-2.0, -0.5, 0.0, 0.5, 1.0, 4.0];

/// Up to five vehicles over up to twenty ticks, crowded around the first
/// intersection so that overtakes, stop-line crossings and neighbour checks
/// all fire with reasonable frequency.
pub fn micro_trace(seed: u64) -> MicroTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=5);
    let len = rng.gen_range(3..=20);
    let lanes = [LaneId(0), LaneId(4)];

    struct Plan {
        id: u64,
        lane: LaneId,
        x: f64,
        v: f64,
        erratic: bool,
    }
    let mut plans: Vec<Plan> = (0..n)
        .map(|k| Plan {
            id: 1 + k as u64 * 7,
            lane: lanes[rng.gen_range(0..2)],
            x: rng.gen_range(240.0..330.0),
            v: if rng.gen_bool(0.3) {
                0.0
            } else {
                rng.gen_range(0.0..15.0)
            },
            erratic: rng.gen_bool(0.3),
        })
        .collect();

    let mut colours = [Colour::Red, Colour::Green];
    let mut ticks = Vec::with_capacity(len);
    let mut signals = Vec::with_capacity(len);
    let mut trust = Vec::with_capacity(len);
    for t in 0..len as u64 {
        if rng.gen_bool(0.15) {
            colours.swap(0, 1);
        }
        let mut s = SignalAssignment::all(Colour::Green);
        s.set(IntersectionId(0), Approach::Horizontal, colours[0]);
        s.set(IntersectionId(0), Approach::Vertical, colours[1]);
        signals.push(s);

        let mut reports = Vec::new();
        for p in &mut plans {
            p.x = if p.erratic {
                rng.gen_range(240.0..340.0)
            } else {
                p.x + p.v
            };
            if rng.gen_bool(0.1) {
                continue;
            }
            let v = if rng.gen_bool(0.2) {
                rng.gen_range(0.0..15.0)
            } else {
                p.v
            };
            reports.push(VehicleReport {
                sender: VehicleId(p.id),
                t,
                lane: p.lane,
                x: p.x.clamp(0.0, 1500.0),
                v,
                neighbours: Vec::new(),
            });
        }
        let snapshot: Vec<(LaneId, f64)> = reports.iter().map(|r| (r.lane, r.x)).collect();
        for r in &mut reports {
            for &(lane, x) in &snapshot {
                if rng.gen_bool(0.6) {
                    let jitter = if rng.gen_bool(0.8) {
                        rng.gen_range(-5.0..5.0)
                    } else {
                        rng.gen_range(-40.0..40.0)
                    };
                    r.neighbours.push(Neighbour {
                        x: (x + jitter).clamp(0.0, 1500.0),
                        lane,
                    });
                }
            }
            if rng.gen_bool(0.2) {
                r.neighbours.push(Neighbour {
                    x: rng.gen_range(240.0..340.0),
                    lane: lanes[rng.gen_range(0..2)],
                });
            }
        }
        ticks.push(reports);
        trust.push(
            plans
                .iter()
                .map(|p| (p.id, TRUST_LEVELS[rng.gen_range(0..TRUST_LEVELS.len())]))
                .collect(),
        );
    }
    MicroTrace {
        ticks,
        signals,
        trust,
    }
}

/// Feed a trace into a fresh ledger tick by tick; at each tick, after the
/// history is recorded and the trace's trust levels installed, call `f`.
pub fn replay_ticks(
    trace: &MicroTrace,
    params: &DetectionParams,
    mut f: impl FnMut(usize, &TrustLedger, &ReportBatch),
) {
    let mut ledger = TrustLedger::new();
    for (t, reports) in trace.ticks.iter().enumerate() {
        let batch = ReportBatch {
            t: t as u64,
            reports: reports.clone(),
        };
        ledger.observe(&batch, &trace.signals[t], params);
        for (&id, &level) in &trace.trust[t] {
            ledger.set_trust(VehicleId(id), level);
        }
        f(t, &ledger, &batch);
    }
}

/// Net update per vehicle; zero entries are dropped.
pub fn net(updates: impl IntoIterator<Item = (VehicleId, f64)>) -> BTreeMap<u64, f64> {
    let mut out: BTreeMap<u64, f64> = BTreeMap::new();
    for (id, d) in updates {
        *out.entry(id.0).or_insert(0.0) += d;
    }
    out.retain(|_, d| *d != 0.0);
    out
}

fn report_of(trace: &MicroTrace, t: usize, id: u64) -> Option<&VehicleReport> {
    trace.ticks[t].iter().find(|r| r.sender.0 == id)
}

/// The vehicle's reports for every tick of `[t - delta, t]`, if complete.
fn full_window(trace: &MicroTrace, t: usize, id: u64, delta: usize) -> Option<Vec<&VehicleReport>> {
    if t < delta {
        return None;
    }
    (t - delta..=t).map(|k| report_of(trace, k, id)).collect()
}

fn trusted(trace: &MicroTrace, t: usize, id: u64) -> bool {
    trace.trust[t].get(&id).copied().unwrap_or(1.0) > 0.0
}

/// Order rule: every ordered pair checked against the overtaking inequality.
pub fn oracle_order(trace: &MicroTrace, t: usize, p: &DetectionParams) -> BTreeMap<u64, f64> {
    let delta = p.delta_s as usize;
    let ids: Vec<u64> = trace.ticks[t].iter().map(|r| r.sender.0).collect();
    let mut out = Vec::new();
    for (a, &i) in ids.iter().enumerate() {
        for &j in &ids[a + 1..] {
            let (Some(wi), Some(wj)) = (
                full_window(trace, t, i, delta),
                full_window(trace, t, j, delta),
            ) else {
                continue;
            };
            if (0..=delta).any(|k| wi[k].lane != wj[k].lane) {
                continue;
            }
            let passes = |a: &[&VehicleReport], b: &[&VehicleReport]| {
                a[delta].x - b[delta].x > p.eps_x && a[0].x - b[0].x < -p.eps_x
            };
            if !(passes(&wi, &wj) || passes(&wj, &wi)) {
                continue;
            }
            let (ti, tj) = (trusted(trace, t, i), trusted(trace, t, j));
            for (id, hit) in [(i, !ti || (ti && tj)), (j, !tj || (ti && tj))] {
                if hit {
                    out.push((VehicleId(id), -p.alpha));
                }
            }
        }
    }
    net(out)
}

/// Signal rule: red crossing, green waiting and their rewarded opposites,
/// over every stop line of the vehicle's road.
pub fn oracle_signals(
    trace: &MicroTrace,
    t: usize,
    topo: &GridTopology,
    p: &DetectionParams,
) -> BTreeMap<u64, f64> {
    let delta = p.delta_s as usize;
    if t < delta {
        return BTreeMap::new();
    }
    let mut out = Vec::new();
    for r in &trace.ticks[t] {
        let Some(w) = full_window(trace, t, r.sender.0, delta) else {
            continue;
        };
        if w.iter().any(|s| s.lane != r.lane) {
            continue;
        }
        let approach = topo.lane(r.lane).approach;
        for (node, cell) in &topo.lane(r.lane).crossings {
            let h = (*cell as f64 - 1.0) * 7.5;
            let colour_all =
                |c| (t - delta..=t).all(|k| trace.signals[k].colour(*node, approach) == c);
            let crossed = h - w[0].x > p.eps_x && h - w[delta].x < -p.eps_x;
            let waited = w.iter().all(|s| (h - s.x).abs() < p.eps_x);
            let red = colour_all(Colour::Red);
            let green = colour_all(Colour::Green);
            if (crossed && red) || (waited && green) {
                out.push((r.sender, -p.alpha));
            }
            if (crossed && green) || (waited && red) {
                out.push((r.sender, p.alpha));
            }
        }
    }
    net(out)
}

/// Velocity rule with a brute-force headway: every trusted report ahead in
/// the lane and every red line the vehicle has not yet passed.
pub fn oracle_velocity(
    trace: &MicroTrace,
    t: usize,
    topo: &GridTopology,
    p: &DetectionParams,
) -> BTreeMap<u64, f64> {
    let mut out = Vec::new();
    for r in &trace.ticks[t] {
        let mut h = f64::INFINITY;
        for o in &trace.ticks[t] {
            if o.sender != r.sender
                && o.lane == r.lane
                && o.x > r.x
                && trusted(trace, t, o.sender.0)
            {
                h = h.min(o.x - r.x);
            }
        }
        let approach = topo.lane(r.lane).approach;
        for (node, cell) in &topo.lane(r.lane).crossings {
            let line = (*cell as f64 - 1.0) * 7.5;
            if r.x < line + p.h_min / 2.0 && trace.signals[t].colour(*node, approach) == Colour::Red
            {
                h = h.min(line + p.h_min - r.x);
            }
        }
        let expected = if h.is_infinite() {
            p.v_free
        } else {
            ((h - p.h_min) / p.tau).min(p.v_free).max(0.0)
        };
        let diff = (expected - r.v).abs();
        let u = if diff < p.eps_v {
            1.0
        } else {
            -diff / p.v_free
        };
        out.push((r.sender, u * p.beta));
    }
    net(out)
}

/// Neighbour rule: every (claimer, witness) pair voted separately, the net
/// sign applied once.
pub fn oracle_neighbour(
    trace: &MicroTrace,
    t: usize,
    topo: &GridTopology,
    p: &DetectionParams,
) -> BTreeMap<u64, f64> {
    let reports = &trace.ticks[t];
    let mut out = Vec::new();
    for i in reports {
        let pi = topo.point(i.lane, i.x);
        let mut votes = 0i64;
        for j in reports {
            if j.sender == i.sender || !trusted(trace, t, j.sender.0) {
                continue;
            }
            if pi.distance(topo.point(j.lane, j.x)) > p.range_m {
                continue;
            }
            let confirmed = j
                .neighbours
                .iter()
                .any(|k| topo.point(k.lane, k.x).distance(pi) <= p.eps_x);
            votes += if confirmed { 1 } else { -1 };
        }
        if votes != 0 {
            out.push((i.sender, p.alpha * votes.signum() as f64));
        }
    }
    net(out)
}

/// First mismatch between two net-update maps, if any.
pub fn mismatch(actual: &BTreeMap<u64, f64>, expected: &BTreeMap<u64, f64>) -> Option<String> {
    let keys: std::collections::BTreeSet<_> = actual.keys().chain(expected.keys()).collect();
    keys.into_iter().find_map(|k| {
        let a = actual.get(k).copied().unwrap_or(0.0);
        let e = expected.get(k).copied().unwrap_or(0.0);
        ((a - e).abs() >= 1e-9).then(|| format!("vehicle {k}: got {a}, oracle {e}"))
    })
}

pub fn assert_close(actual: &BTreeMap<u64, f64>, expected: &BTreeMap<u64, f64>, what: &str) {
    if let Some(m) = mismatch(actual, expected) {
        panic!("{what}: {m}\nactual {actual:?}\noracle {expected:?}");
    }
}
