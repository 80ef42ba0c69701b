//! Trust ledger and malicious-data filter.
//!
//! The control infrastructure keeps one trust level per reported vehicle ID.
//! After each delivery the enabled rule families contribute signed updates,
//! which are summed per vehicle, applied at once and clamped. Only reports
//! whose sender has strictly positive trust reach the signal controllers.

mod rules;

use std::collections::{BTreeMap, VecDeque};

use bitflags::bitflags;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SignalAssignment;
use crate::topology::{GridTopology, LaneId};
use crate::traffic::VehicleId;
use crate::vanet::{ReportBatch, VehicleReport};

pub use rules::{
    expected_velocity, headway, rule_neighbour, rule_signal_reaction, rule_vehicle_order,
    rule_velocity, rule_velocity_all,
};

bitflags! {
    /// Enabled rule families.
    #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
    pub struct RuleSet: u8 {
        /// Unrealistic overtaking within a lane.
        const ORDER = 1 << 0;
        /// Running red or stopping at green.
        const SIGNALS = 1 << 1;
        /// Deviation from the expected velocity.
        const VELOCITY = 1 << 2;
        /// Position verification by neighbouring vehicles.
        const NEIGHBOUR = 1 << 3;
    }
}

/// Detection algorithm 0..=9. Algorithm 0 disables detection altogether;
/// 1..=9 select rule combinations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Algorithm(u8);

impl Algorithm {
    pub const NONE: Algorithm = Algorithm(0);
    pub const ALL_RULES: Algorithm = Algorithm(9);

    pub fn new(n: u8) -> Result<Self> {
        if n <= 9 {
            Ok(Algorithm(n))
        } else {
            Err(Error::InvalidAlgorithm(n))
        }
    }

    pub fn number(self) -> u8 {
        self.0
    }

    pub fn detects(self) -> bool {
        self.0 != 0
    }

    pub fn rule_set(self) -> RuleSet {
        algorithm_ruleset(self.0).expect("validated on construction")
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Rule combinations of the compared algorithms.
pub fn algorithm_ruleset(n: u8) -> Result<RuleSet> {
    use RuleSet as R;
    Ok(match n {
        0 => R::empty(),
        1 => R::ORDER,
        2 => R::NEIGHBOUR,
        3 => R::SIGNALS,
        4 => R::VELOCITY,
        5 => R::ORDER | R::SIGNALS,
        6 => R::SIGNALS | R::NEIGHBOUR,
        7 => R::ORDER | R::VELOCITY,
        8 => R::VELOCITY | R::NEIGHBOUR,
        9 => R::all(),
        _ => return Err(Error::InvalidAlgorithm(n)),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// Trust step of the order, signal and neighbour rules.
    pub alpha: f64,
    /// Trust step of the velocity rule.
    pub beta: f64,
    /// Maximum localization error, m.
    pub eps_x: f64,
    /// Velocity-difference threshold, m/s.
    pub eps_v: f64,
    /// Rule window, s.
    pub delta_s: u32,
    /// Neighbour sensing range, m.
    pub range_m: f64,
    /// Free-flow velocity, m/s.
    pub v_free: f64,
    /// Minimum headway of a stopped vehicle, m.
    pub h_min: f64,
    /// Safe stopping time, s.
    pub tau: f64,
    pub rule_set: RuleSet,
    pub trust_init: f64,
    pub trust_min: f64,
    pub trust_max: f64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams {
            alpha: 1.0,
            beta: 0.2,
            eps_x: 7.5,
            eps_v: 1.5,
            delta_s: 2,
            range_m: 50.0,
            v_free: 15.0,
            h_min: 7.5,
            tau: 2.0,
            rule_set: RuleSet::all(),
            trust_init: 1.0,
            trust_min: -10.0,
            trust_max: 10.0,
        }
    }
}

impl DetectionParams {
    pub fn validate(&self) -> Result<()> {
        let check = |key: &str, ok: bool, value: f64, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidValue {
                    key: key.into(),
                    value: value.to_string(),
                    reason: reason.into(),
                })
            }
        };
        check("alpha", self.alpha > 0.0, self.alpha, "must be positive")?;
        check("beta", self.beta > 0.0, self.beta, "must be positive")?;
        check(
            "delta_s",
            self.delta_s >= 1,
            f64::from(self.delta_s),
            "must be at least 1",
        )?;
        check(
            "eps_x",
            self.eps_x >= 0.0,
            self.eps_x,
            "must be nonnegative",
        )?;
        check(
            "eps_v",
            self.eps_v >= 0.0,
            self.eps_v,
            "must be nonnegative",
        )?;
        check(
            "range_m",
            self.range_m >= 0.0,
            self.range_m,
            "must be nonnegative",
        )?;
        check(
            "h_min",
            self.h_min >= 0.0,
            self.h_min,
            "must be nonnegative",
        )?;
        check("v_free", self.v_free > 0.0, self.v_free, "must be positive")?;
        check("tau", self.tau > 0.0, self.tau, "must be positive")?;
        check(
            "trust_max",
            self.trust_max >= self.trust_min,
            self.trust_max,
            "must not be below trust_min",
        )?;
        check(
            "trust_init",
            (self.trust_min..=self.trust_max).contains(&self.trust_init),
            self.trust_init,
            "must lie within the trust clamp",
        )
    }
}

/// One reported state of a vehicle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub t: u64,
    pub lane: LaneId,
    pub x: f64,
    pub v: f64,
}

/// Trust levels and the short report history the rules look back over.
#[derive(Clone, Debug, Default)]
pub struct TrustLedger {
    trust: BTreeMap<VehicleId, f64>,
    histories: BTreeMap<VehicleId, VecDeque<Sample>>,
    signals: VecDeque<(u64, SignalAssignment)>,
    last_reward: BTreeMap<VehicleId, u64>,
}

/// Read-only view of everything the rules need at tick `t`.
pub struct RuleContext<'a> {
    pub t: u64,
    pub reports: &'a [VehicleReport],
    pub ledger: &'a TrustLedger,
    pub topo: &'a GridTopology,
    pub params: &'a DetectionParams,
}

impl TrustLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Current trust, or `None` for a vehicle never reported.
    pub fn trust(&self, id: VehicleId) -> Option<f64> {
        self.trust.get(&id).copied()
    }

    /// Trusted iff trust is strictly positive.
    pub fn is_trusted(&self, id: VehicleId) -> bool {
        self.trust(id).is_some_and(|t| t > 0.0)
    }

    pub fn set_trust(&mut self, id: VehicleId, value: f64) {
        self.trust.insert(id, value);
    }

    pub fn trust_levels(&self) -> impl Iterator<Item = (VehicleId, f64)> + '_ {
        self.trust.iter().map(|(&id, &t)| (id, t))
    }

    /// The samples of `id` covering `[t - delta, t]`, one per tick, or
    /// `None` if any tick is missing.
    pub fn window(&self, id: VehicleId, t: u64, delta: u32) -> Option<Vec<Sample>> {
        let start = t.checked_sub(u64::from(delta))?;
        let history = self.histories.get(&id)?;
        let samples: Vec<Sample> = history
            .iter()
            .filter(|s| s.t >= start && s.t <= t)
            .copied()
            .collect();
        let complete = samples.len() == delta as usize + 1
            && samples
                .iter()
                .enumerate()
                .all(|(k, s)| s.t == start + k as u64);
        complete.then_some(samples)
    }

    /// Signal colours for every tick of `[t - delta, t]`, oldest first.
    pub fn signal_window(&self, t: u64, delta: u32) -> Option<Vec<&SignalAssignment>> {
        let start = t.checked_sub(u64::from(delta))?;
        let window: Vec<(u64, &SignalAssignment)> = self
            .signals
            .iter()
            .filter(|(tick, _)| *tick >= start && *tick <= t)
            .map(|(tick, s)| (*tick, s))
            .collect();
        let complete = window.len() == delta as usize + 1
            && window
                .iter()
                .enumerate()
                .all(|(k, (tick, _))| *tick == start + k as u64);
        complete.then(|| window.into_iter().map(|(_, s)| s).collect())
    }

    pub fn current_signals(&self, t: u64) -> Option<&SignalAssignment> {
        self.signals
            .iter()
            .rev()
            .find(|(tick, _)| *tick == t)
            .map(|(_, s)| s)
    }

    /// Record a delivery without applying any rule: unseen senders start at
    /// `trust_init`, samples and signal colours join the history.
    pub fn observe(
        &mut self,
        batch: &ReportBatch,
        signals: &SignalAssignment,
        params: &DetectionParams,
    ) {
        let keep = params.delta_s as usize + 1;
        for r in &batch.reports {
            self.trust.entry(r.sender).or_insert(params.trust_init);
            let history = self.histories.entry(r.sender).or_default();
            if history.back().is_some_and(|s| s.t == batch.t) {
                history.pop_back();
            }
            history.push_back(Sample {
                t: batch.t,
                lane: r.lane,
                x: r.x,
                v: r.v,
            });
            while history.len() > keep {
                history.pop_front();
            }
        }
        if self.signals.back().is_some_and(|(t, _)| *t == batch.t) {
            self.signals.pop_back();
        }
        self.signals.push_back((batch.t, signals.clone()));
        while self.signals.len() > keep {
            self.signals.pop_front();
        }
        let horizon = batch.t.saturating_sub(u64::from(params.delta_s));
        self.histories
            .retain(|_, h| h.back().is_some_and(|s| s.t >= horizon));
    }

    pub fn context<'a>(
        &'a self,
        batch: &'a ReportBatch,
        topo: &'a GridTopology,
        params: &'a DetectionParams,
    ) -> RuleContext<'a> {
        RuleContext {
            t: batch.t,
            reports: &batch.reports,
            ledger: self,
            topo,
            params,
        }
    }
}

/// Apply one delivery: observe it, evaluate the enabled rules against the
/// tick-start trust levels, then add the summed updates and clamp.
///
/// Rewards from the signal rule are granted at most once per disjoint
/// window per vehicle. Returns the net update applied to each vehicle
/// before clamping.
pub fn update_trust(
    ledger: &mut TrustLedger,
    batch: &ReportBatch,
    signals: &SignalAssignment,
    topo: &GridTopology,
    params: &DetectionParams,
) -> BTreeMap<VehicleId, f64> {
    ledger.observe(batch, signals, params);
    if batch.is_empty() {
        return BTreeMap::new();
    }
    let rules = params.rule_set;
    let mut deltas: BTreeMap<VehicleId, f64> = BTreeMap::new();
    let mut rewarded = Vec::new();
    {
        let ctx = ledger.context(batch, topo, params);
        let mut add = |id: VehicleId, d: f64| *deltas.entry(id).or_insert(0.0) += d;
        if rules.contains(RuleSet::ORDER) {
            for (id, d) in rule_vehicle_order(&ctx) {
                add(id, d);
            }
        }
        if rules.contains(RuleSet::SIGNALS) {
            for (id, d) in rule_signal_reaction(&ctx) {
                if d > 0.0 {
                    let recent = ledger
                        .last_reward
                        .get(&id)
                        .is_some_and(|&last| batch.t <= last + u64::from(params.delta_s));
                    if recent || rewarded.contains(&id) {
                        continue;
                    }
                    rewarded.push(id);
                }
                add(id, d);
            }
        }
        if rules.contains(RuleSet::VELOCITY) {
            for (id, d) in rule_velocity_all(&ctx) {
                add(id, d);
            }
        }
        if rules.contains(RuleSet::NEIGHBOUR) {
            for (id, d) in rule_neighbour(&ctx) {
                add(id, d);
            }
        }
    }
    for id in rewarded {
        ledger.last_reward.insert(id, batch.t);
    }
    for (id, d) in &deltas {
        let level = ledger.trust.entry(*id).or_insert(params.trust_init);
        *level = (*level + d).clamp(params.trust_min, params.trust_max);
    }
    deltas
}

/// Reports whose sender currently has positive trust, in batch order.
pub fn filter_reports<'a>(batch: &'a ReportBatch, ledger: &TrustLedger) -> Vec<&'a VehicleReport> {
    batch
        .reports
        .iter()
        .filter(|r| ledger.is_trusted(r.sender))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Colour;

    fn report(id: u64, t: u64, lane: u8, x: f64, v: f64) -> VehicleReport {
        VehicleReport {
            sender: VehicleId(id),
            t,
            lane: LaneId(lane),
            x,
            v,
            neighbours: Vec::new(),
        }
    }

    #[test]
    fn table_of_algorithms() {
        use RuleSet as R;
        assert_eq!(algorithm_ruleset(9).unwrap(), R::all());
        assert_eq!(algorithm_ruleset(8).unwrap(), R::VELOCITY | R::NEIGHBOUR);
        assert_eq!(algorithm_ruleset(2).unwrap(), R::NEIGHBOUR);
        assert_eq!(algorithm_ruleset(0).unwrap(), R::empty());
        assert!(!Algorithm::new(0).unwrap().detects());
        assert!(matches!(
            algorithm_ruleset(10),
            Err(Error::InvalidAlgorithm(10))
        ));
        assert!(Algorithm::new(11).is_err());
        // Each rule appears in exactly the columns of the comparison table.
        let columns: Vec<RuleSet> = (1..=9).map(|n| algorithm_ruleset(n).unwrap()).collect();
        let uses = |rule: RuleSet| -> Vec<u8> {
            columns
                .iter()
                .enumerate()
                .filter(|(_, s)| s.contains(rule))
                .map(|(i, _)| i as u8 + 1)
                .collect()
        };
        assert_eq!(uses(R::ORDER), vec![1, 5, 7, 9]);
        assert_eq!(uses(R::SIGNALS), vec![3, 5, 6, 9]);
        assert_eq!(uses(R::VELOCITY), vec![4, 7, 8, 9]);
        assert_eq!(uses(R::NEIGHBOUR), vec![2, 6, 8, 9]);
    }

    #[test]
    fn empty_batch_leaves_ledger_unchanged() {
        let topo = GridTopology::manhattan();
        let params = DetectionParams::default();
        let mut ledger = TrustLedger::new();
        ledger.set_trust(VehicleId(1), 3.0);
        let d = update_trust(
            &mut ledger,
            &ReportBatch::default(),
            &SignalAssignment::all(Colour::Green),
            &topo,
            &params,
        );
        assert!(d.is_empty());
        assert_eq!(ledger.trust(VehicleId(1)), Some(3.0));
        assert_eq!(ledger.trust_levels().count(), 1);
    }

    #[test]
    fn new_senders_start_at_initial_trust() {
        let topo = GridTopology::manhattan();
        let params = DetectionParams {
            rule_set: RuleSet::empty(),
            ..DetectionParams::default()
        };
        let mut ledger = TrustLedger::new();
        let batch = ReportBatch {
            t: 0,
            reports: vec![report(5, 0, 0, 10.0, 15.0)],
        };
        update_trust(
            &mut ledger,
            &batch,
            &SignalAssignment::all(Colour::Green),
            &topo,
            &params,
        );
        assert_eq!(ledger.trust(VehicleId(5)), Some(1.0));
    }

    #[test]
    fn trust_is_clamped() {
        let topo = GridTopology::manhattan();
        let params = DetectionParams {
            rule_set: RuleSet::VELOCITY,
            ..DetectionParams::default()
        };
        let mut ledger = TrustLedger::new();
        let green = SignalAssignment::all(Colour::Green);
        for t in 0..200 {
            let batch = ReportBatch {
                t,
                reports: vec![report(1, t, 0, 10.0 + 15.0 * t as f64 % 1000.0, 15.0)],
            };
            update_trust(&mut ledger, &batch, &green, &topo, &params);
        }
        assert_eq!(ledger.trust(VehicleId(1)), Some(10.0));
    }

    #[test]
    fn filter_keeps_only_positive_trust_in_order() {
        let mut ledger = TrustLedger::new();
        ledger.set_trust(VehicleId(1), 1.0);
        ledger.set_trust(VehicleId(2), 0.0);
        ledger.set_trust(VehicleId(3), 0.4);
        ledger.set_trust(VehicleId(4), -2.0);
        let batch = ReportBatch {
            t: 0,
            reports: vec![
                report(3, 0, 0, 1.0, 0.0),
                report(2, 0, 0, 2.0, 0.0),
                report(1, 0, 0, 3.0, 0.0),
                report(4, 0, 0, 4.0, 0.0),
            ],
        };
        let kept: Vec<u64> = filter_reports(&batch, &ledger)
            .iter()
            .map(|r| r.sender.0)
            .collect();
        assert_eq!(kept, vec![3, 1]);

        let all_fresh = TrustLedger {
            trust: [(VehicleId(1), 1.0)].into(),
            ..TrustLedger::default()
        };
        let one = ReportBatch {
            t: 0,
            reports: vec![report(1, 0, 0, 3.0, 0.0)],
        };
        assert_eq!(filter_reports(&one, &all_fresh).len(), 1);
    }

    #[test]
    fn window_requires_every_tick() {
        let params = DetectionParams::default();
        let green = SignalAssignment::all(Colour::Green);
        let mut ledger = TrustLedger::new();
        for t in [0u64, 1, 3, 4, 5] {
            let batch = ReportBatch {
                t,
                reports: vec![report(1, t, 0, t as f64, 0.0)],
            };
            ledger.observe(&batch, &green, &params);
            let expected = t >= 5;
            assert_eq!(
                ledger.window(VehicleId(1), t, 2).is_some(),
                expected,
                "t={t}"
            );
        }
    }

    #[test]
    fn invalid_params_name_the_key() {
        let p = DetectionParams {
            delta_s: 0,
            ..DetectionParams::default()
        };
        assert!(matches!(p.validate(), Err(Error::InvalidValue { key, .. }) if key == "delta_s"));
        assert!(DetectionParams::default().validate().is_ok());
    }
}
