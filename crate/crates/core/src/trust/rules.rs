//! The four rule families. Each returns signed trust updates for one tick
//! and never mutates the ledger.

use std::collections::BTreeMap;

use super::{RuleContext, Sample};
use crate::signal::Colour;
use crate::spatial::BucketGrid;
use crate::topology::{LaneId, Point};
use crate::traffic::VehicleId;

/// Unique senders of the current batch with a complete window.
fn windows(ctx: &RuleContext<'_>) -> BTreeMap<VehicleId, Vec<Sample>> {
    ctx.reports
        .iter()
        .filter_map(|r| {
            ctx.ledger
                .window(r.sender, ctx.t, ctx.params.delta_s)
                .map(|w| (r.sender, w))
        })
        .collect()
}

fn single_lane(window: &[Sample]) -> Option<LaneId> {
    let lane = window.first()?.lane;
    window.iter().all(|s| s.lane == lane).then_some(lane)
}

/// Vehicles that swapped order within one lane over the window.
///
/// A pair triggers when `i` trails `j` by more than `eps_x` at `t - delta`,
/// leads it by more than `eps_x` at `t`, and both stayed in the same lane
/// throughout. Both are penalized when both are trusted; otherwise only the
/// untrusted ones are.
pub fn rule_vehicle_order(ctx: &RuleContext<'_>) -> Vec<(VehicleId, f64)> {
    let eps = ctx.params.eps_x;
    let alpha = ctx.params.alpha;
    let mut by_lane: BTreeMap<LaneId, Vec<(VehicleId, Vec<Sample>)>> = BTreeMap::new();
    for (id, w) in windows(ctx) {
        let lane = w.last().expect("nonempty window").lane;
        by_lane.entry(lane).or_default().push((id, w));
    }

    let swapped = |a: &[Sample], b: &[Sample]| {
        let last = a.len() - 1;
        a[last].x - b[last].x > eps && a[0].x - b[0].x < -eps
    };

    let mut out = Vec::new();
    for group in by_lane.values() {
        for (k, (i, wi)) in group.iter().enumerate() {
            for (j, wj) in &group[k + 1..] {
                let same_lane = wi.iter().zip(wj).all(|(a, b)| a.lane == b.lane);
                if !same_lane || !(swapped(wi, wj) || swapped(wj, wi)) {
                    continue;
                }
                let ti = ctx.ledger.is_trusted(*i);
                let tj = ctx.ledger.is_trusted(*j);
                if ti && tj {
                    out.push((*i, -alpha));
                    out.push((*j, -alpha));
                } else {
                    if !ti {
                        out.push((*i, -alpha));
                    }
                    if !tj {
                        out.push((*j, -alpha));
                    }
                }
            }
        }
    }
    out.sort_by_key(|(id, _)| *id);
    out
}

/// Reaction to signals over the window, per stop line of the vehicle's lane.
///
/// Penalized: crossing the stop line while red throughout, or waiting
/// within `eps_x` of it while green throughout. Rewarded: crossing while
/// green throughout, or waiting while red throughout. A window with a colour
/// change yields nothing.
pub fn rule_signal_reaction(ctx: &RuleContext<'_>) -> Vec<(VehicleId, f64)> {
    let (eps, alpha) = (ctx.params.eps_x, ctx.params.alpha);
    let Some(colours) = ctx.ledger.signal_window(ctx.t, ctx.params.delta_s) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (id, w) in windows(ctx) {
        let Some(lane) = single_lane(&w) else {
            continue;
        };
        let approach = ctx.topo.lane(lane).approach;
        let (first, last) = (w[0].x, w[w.len() - 1].x);
        for (node, h) in ctx.topo.stop_lines(lane) {
            let all = |c: Colour| colours.iter().all(|s| s.colour(node, approach) == c);
            let crossing = h - first > eps && h - last < -eps;
            let waiting = w.iter().all(|s| (h - s.x).abs() < eps);
            if !(crossing || waiting) {
                continue;
            }
            let (red, green) = (all(Colour::Red), all(Colour::Green));
            if (red && crossing) || (green && waiting) {
                out.push((id, -alpha));
            } else if (green && crossing) || (red && waiting) {
                out.push((id, alpha));
            }
        }
    }
    out
}

/// Expected velocity for a headway: `min(v_free, (h - h_min) / tau)`,
/// floored at zero.
pub fn expected_velocity(headway: f64, params: &super::DetectionParams) -> f64 {
    ((headway - params.h_min) / params.tau).clamp(0.0, params.v_free)
}

/// Velocity-rule update: `+beta` when the reported velocity is within
/// `eps_v` of the expected one, else `-beta * |v_hat - v| / v_free`.
pub fn rule_velocity(v_reported: f64, v_expected: f64, params: &super::DetectionParams) -> f64 {
    let diff = (v_expected - v_reported).abs();
    let u = if diff < params.eps_v {
        1.0
    } else {
        -diff / params.v_free
    };
    u * params.beta
}

/// Headway of every report in the batch, as seen by the control node: the
/// distance to the nearest trusted report ahead in the same lane or to the
/// nearest red signal ahead, whichever is closer; infinite when neither
/// exists. A red signal sits `h_min` beyond its stop line, so a vehicle
/// waiting on the line has headway `h_min`.
pub fn headway(ctx: &RuleContext<'_>) -> Vec<(VehicleId, f64)> {
    let mut trusted: BTreeMap<LaneId, Vec<(f64, VehicleId)>> = BTreeMap::new();
    for r in ctx
        .reports
        .iter()
        .filter(|r| ctx.ledger.is_trusted(r.sender))
    {
        trusted.entry(r.lane).or_default().push((r.x, r.sender));
    }
    for list in trusted.values_mut() {
        list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
    let signals = ctx.ledger.current_signals(ctx.t);
    let h_min = ctx.params.h_min;

    ctx.reports
        .iter()
        .map(|r| {
            let mut h = f64::INFINITY;
            if let Some(list) = trusted.get(&r.lane) {
                let from = list.partition_point(|(x, _)| *x <= r.x);
                if let Some((x, _)) = list[from..].iter().find(|(_, id)| *id != r.sender) {
                    h = x - r.x;
                }
            }
            if let Some(signals) = signals {
                let approach = ctx.topo.lane(r.lane).approach;
                for (node, line) in ctx.topo.stop_lines(r.lane) {
                    if r.x < line + h_min / 2.0 && signals.colour(node, approach) == Colour::Red {
                        h = h.min(line + h_min - r.x);
                        break;
                    }
                }
            }
            (r.sender, h)
        })
        .collect()
}

/// Velocity rule for every report of the batch.
pub fn rule_velocity_all(ctx: &RuleContext<'_>) -> Vec<(VehicleId, f64)> {
    headway(ctx)
        .into_iter()
        .zip(ctx.reports)
        .map(|((id, h), r)| {
            (
                id,
                rule_velocity(r.v, expected_velocity(h, ctx.params), ctx.params),
            )
        })
        .collect()
}

/// Position verification by neighbouring witnesses.
///
/// Every trusted witness `j` within `range_m` of `i` votes for `i` if some
/// entry of its neighbour set lies within `eps_x` of `i`, and against it
/// otherwise. Each `i` moves by at most one `alpha` per tick, in the
/// direction of the majority; ties leave it unchanged.
pub fn rule_neighbour(ctx: &RuleContext<'_>) -> Vec<(VehicleId, f64)> {
    let (range, eps) = (ctx.params.range_m, ctx.params.eps_x);
    let points: Vec<Point> = ctx
        .reports
        .iter()
        .map(|r| ctx.topo.point(r.lane, r.x))
        .collect();
    let grid = BucketGrid::new(range, points.iter().copied());
    let mut votes: BTreeMap<VehicleId, i64> = BTreeMap::new();

    for (j, witness) in ctx.reports.iter().enumerate() {
        if !ctx.ledger.is_trusted(witness.sender) {
            continue;
        }
        let sensed: Vec<Point> = witness
            .neighbours
            .iter()
            .map(|n| ctx.topo.point(n.lane, n.x))
            .collect();
        for i in grid.candidates(points[j]) {
            let claimer = &ctx.reports[i];
            if claimer.sender == witness.sender || points[i].distance(points[j]) > range {
                continue;
            }
            let confirmed = sensed.iter().any(|k| k.distance(points[i]) <= eps);
            *votes.entry(claimer.sender).or_insert(0) += if confirmed { 1 } else { -1 };
        }
    }

    votes
        .into_iter()
        .filter(|(_, v)| *v != 0)
        .map(|(id, v)| (id, ctx.params.alpha * v.signum() as f64))
        .collect()
}
