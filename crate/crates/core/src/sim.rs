//! The closed loop: reports, trust update, filtering, signal decisions and
//! the automaton step, once per simulated second.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::{
    accumulate, summarize, ClassificationCounts, RunRecorder, RunResult, TickRecord,
};
use crate::rng::{streams, KeyedStream, RandomStream};
use crate::signal::{
    decide_phase, network_pressures, ControllerParams, SignalAssignment, SignalState,
};
use crate::topology::GridTopology;
use crate::traffic::{ca_step, spawn_vehicles, stop_delay_total, NetworkState, SimParams};
use crate::trust::{filter_reports, update_trust, Algorithm, DetectionParams, TrustLedger};
use crate::vanet::{
    generate_reports, inject_sybil, AttackConfig, ReportBatch, SybilSwarm, VehicleReport,
};

/// Whether all control nodes share one trust ledger or each keeps its own.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LedgerScope {
    #[default]
    Shared,
    /// Each report is delivered to the node nearest its claimed position.
    PerNode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub sim: SimParams,
    /// Half-width of the uniform localization noise, m.
    pub noise_m: f64,
    pub attack: AttackConfig,
    pub detection: DetectionParams,
    pub controller: ControllerParams,
    pub algorithm: Algorithm,
    pub ledger_scope: LedgerScope,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let detection = DetectionParams::default();
        ScenarioConfig {
            sim: SimParams::default(),
            noise_m: detection.eps_x / 2.0,
            attack: AttackConfig::default(),
            detection,
            controller: ControllerParams::default(),
            algorithm: Algorithm::ALL_RULES,
            ledger_scope: LedgerScope::Shared,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.detection.validate()?;
        if !(0.0..=1.0).contains(&self.attack.q_f) {
            return Err(crate::Error::InvalidValue {
                key: "qf".into(),
                value: self.attack.q_f.to_string(),
                reason: "must lie in [0, 1]".into(),
            });
        }
        Ok(())
    }
}

/// Everything that happened in one tick.
#[derive(Clone, Debug)]
pub struct Tick {
    pub batch: ReportBatch,
    /// Colours the trust rules saw for this tick.
    pub signals_seen: SignalAssignment,
    /// Colours that governed this tick's movement.
    pub signals_applied: SignalAssignment,
    pub accepted: Vec<bool>,
    pub counts: ClassificationCounts,
}

pub struct Simulation {
    cfg: ScenarioConfig,
    topo: GridTopology,
    state: NetworkState,
    controllers: Vec<SignalState>,
    displayed: SignalAssignment,
    ledgers: Vec<TrustLedger>,
    swarm: SybilSwarm,
    spawn_rng: RandomStream,
    driver_rng: KeyedStream,
    sensor_rng: RandomStream,
    sybil_rng: RandomStream,
    recorder: RunRecorder,
}

impl Simulation {
    pub fn new(mut cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        cfg.detection.rule_set = cfg.algorithm.rule_set();
        let topo = GridTopology::manhattan();
        let controllers: Vec<SignalState> = topo
            .intersections
            .iter()
            .map(|n| SignalState::new(n.id))
            .collect();
        let ledgers = match cfg.ledger_scope {
            LedgerScope::Shared => vec![TrustLedger::new()],
            LedgerScope::PerNode => vec![TrustLedger::new(); topo.intersections.len()],
        };
        let seed = cfg.sim.seed;
        Ok(Simulation {
            displayed: SignalAssignment::from_states(&controllers),
            controllers,
            ledgers,
            state: NetworkState::new(),
            swarm: SybilSwarm::default(),
            spawn_rng: RandomStream::new(seed, streams::SPAWN),
            driver_rng: KeyedStream::new(seed, streams::DRIVER),
            sensor_rng: RandomStream::new(seed, streams::SENSOR),
            sybil_rng: RandomStream::new(seed, streams::SYBIL),
            recorder: RunRecorder::default(),
            topo,
            cfg,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn topology(&self) -> &GridTopology {
        &self.topo
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn controllers(&self) -> &[SignalState] {
        &self.controllers
    }

    pub fn ledgers(&self) -> &[TrustLedger] {
        &self.ledgers
    }

    pub fn recorder(&self) -> &RunRecorder {
        &self.recorder
    }

    fn classify(&mut self, batch: &ReportBatch) -> Vec<bool> {
        if !self.cfg.algorithm.detects() {
            return vec![true; batch.len()];
        }
        let params = &self.cfg.detection;
        match self.cfg.ledger_scope {
            LedgerScope::Shared => {
                let ledger = &mut self.ledgers[0];
                update_trust(ledger, batch, &self.displayed, &self.topo, params);
                let kept = filter_reports(batch, ledger);
                let mut it = kept.iter().peekable();
                batch
                    .reports
                    .iter()
                    .map(|r| match it.peek() {
                        Some(k) if std::ptr::eq(**k, r) => {
                            it.next();
                            true
                        }
                        _ => false,
                    })
                    .collect()
            }
            LedgerScope::PerNode => {
                let node_of: Vec<usize> = batch
                    .reports
                    .iter()
                    .map(|r| {
                        self.topo
                            .nearest_intersection(self.topo.point(r.lane, r.x))
                            .0 as usize
                    })
                    .collect();
                let mut accepted = vec![false; batch.len()];
                for (node, ledger) in self.ledgers.iter_mut().enumerate() {
                    let idx: Vec<usize> =
                        (0..batch.len()).filter(|&k| node_of[k] == node).collect();
                    let local = ReportBatch {
                        t: batch.t,
                        reports: idx.iter().map(|&k| batch.reports[k].clone()).collect(),
                    };
                    update_trust(ledger, &local, &self.displayed, &self.topo, params);
                    for &k in &idx {
                        accepted[k] = ledger.is_trusted(batch.reports[k].sender);
                    }
                }
                accepted
            }
        }
    }

    /// Advance one second.
    pub fn step(&mut self) -> Tick {
        let range = self.cfg.detection.range_m;
        let mut batch = generate_reports(
            &self.state,
            &self.topo,
            range,
            self.cfg.noise_m,
            &mut self.sensor_rng,
        );
        inject_sybil(
            &mut batch,
            &self.cfg.attack,
            &mut self.swarm,
            &self.topo,
            range,
            &mut self.sybil_rng,
        );

        let signals_seen = self.displayed.clone();
        let accepted = self.classify(&batch);
        let counts = accumulate(&batch.reports, &accepted, SybilSwarm::is_sybil);

        let trusted: Vec<&VehicleReport> = batch
            .reports
            .iter()
            .zip(&accepted)
            .filter(|(_, ok)| **ok)
            .map(|(r, _)| r)
            .collect();
        let pressures = network_pressures(trusted, &self.topo, &self.cfg.controller);
        for (ctrl, p) in self.controllers.iter_mut().zip(pressures) {
            *ctrl = decide_phase(ctrl, p, &self.cfg.controller);
        }
        self.displayed = SignalAssignment::from_states(&self.controllers);

        ca_step(
            &mut self.state,
            &self.topo,
            &self.displayed,
            &self.cfg.sim,
            &self.driver_rng,
        );
        spawn_vehicles(
            &mut self.state,
            &self.topo,
            self.cfg.sim.q,
            self.cfg.sim.v_max,
            &mut self.spawn_rng,
        );

        self.recorder.record(TickRecord {
            t: batch.t,
            counts,
            stop_delay_s: stop_delay_total(&self.state),
            vehicles_present: self.state.vehicles().len(),
        });
        Tick {
            batch,
            signals_seen,
            signals_applied: self.displayed.clone(),
            accepted,
            counts,
        }
    }

    /// Spawn the initial vehicles. Call once before the first step; `run`
    /// does this itself.
    pub fn prime(&mut self) {
        if self.state.tick == 0 && self.state.entered() == 0 {
            spawn_vehicles(
                &mut self.state,
                &self.topo,
                self.cfg.sim.q,
                self.cfg.sim.v_max,
                &mut self.spawn_rng,
            );
        }
    }

    pub fn summary(&self) -> RunResult {
        summarize(
            &self.recorder,
            stop_delay_total(&self.state),
            self.state.entered(),
            self.cfg.algorithm.number(),
            self.cfg.sim.q,
            self.cfg.attack.q_f,
            self.cfg.sim.seed,
        )
    }

    /// Run for the configured duration.
    pub fn run(mut self) -> RunOutcome {
        self.prime();
        for _ in 0..self.cfg.sim.duration_s {
            self.step();
        }
        RunOutcome {
            result: self.summary(),
            series: self.recorder.series,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub result: RunResult,
    pub series: Vec<TickRecord>,
}
