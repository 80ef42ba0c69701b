//! Invariants of the traffic model, the signal controller, the report layer
//! and the closed loop.

use std::collections::BTreeMap;

use proptest::prelude::*;

use vanet_core::rng::{streams, KeyedStream, RandomStream};
use vanet_core::signal::{
    decide_phase, network_pressures, Colour, ControllerParams, Phase, SignalAssignment, SignalState,
};
use vanet_core::sim::{ScenarioConfig, Simulation};
use vanet_core::topology::{Approach, GridTopology, IntersectionId, LaneId, CELL_LENGTH_M};
use vanet_core::traffic::{ca_step, spawn_vehicles, NetworkState, SimParams, VehicleId};
use vanet_core::trust::{filter_reports, TrustLedger};
use vanet_core::vanet::{
    generate_reports, inject_sybil, AttackConfig, ReportBatch, SybilSwarm, VehicleReport,
};

/// Random but conflict-free colours: per node, at most one approach green.
fn random_safe_colours(rng: &mut RandomStream, nodes: usize) -> SignalAssignment {
    let mut s = SignalAssignment::all(Colour::Red);
    for n in 0..nodes {
        let node = IntersectionId(n as u8);
        match (rng.unit() * 3.0) as u8 {
            0 => s.set(node, Approach::Horizontal, Colour::Green),
            1 => s.set(node, Approach::Vertical, Colour::Green),
            _ => {}
        }
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 10, ..ProptestConfig::default() })]

    /// 10 cases of 1000 ticks: no two vehicles share a cell or an
    /// intersection, vehicles are conserved, nobody passes anybody and
    /// every move equals the new velocity.
    #[test]
    fn automaton_invariants(seed in any::<u64>(), q in 0.0..0.6f64, p in 0.0..0.5f64, hold in 1u64..30) {
        let topo = GridTopology::manhattan();
        let params = SimParams { p, q, seed, ..SimParams::default() };
        let driver = KeyedStream::new(seed, streams::DRIVER);
        let mut spawn = RandomStream::new(seed, streams::SPAWN);
        let mut colours_rng = RandomStream::new(seed, 99);
        let mut state = NetworkState::new();
        let mut colours = SignalAssignment::all(Colour::Red);
        for tick in 0..1000u64 {
            if tick % hold == 0 {
                colours = random_safe_colours(&mut colours_rng, topo.intersections.len());
            }
            let before: BTreeMap<VehicleId, (LaneId, usize)> =
                state.vehicles().iter().map(|v| (v.id, (v.lane, v.cell))).collect();
            let present = before.len() as u64;
            let out = ca_step(&mut state, &topo, &colours, &params, &driver);
            prop_assert_eq!(state.vehicles().len() as u64, present - out.departed as u64);
            for v in state.vehicles() {
                let (lane, cell) = before[&v.id];
                prop_assert_eq!(lane, v.lane);
                prop_assert_eq!(v.cell, cell + v.velocity as usize);
            }
            let spawned = spawn_vehicles(&mut state, &topo, q, params.v_max, &mut spawn);
            prop_assert_eq!(state.vehicles().len() as u64, present - out.departed as u64 + spawned as u64);
            prop_assert_eq!(state.entered(), state.departed() + state.vehicles().len() as u64);
            if let Err(e) = state.check_invariants(&topo, params.v_max) {
                return Err(TestCaseError::fail(e));
            }
            let mut by_lane: BTreeMap<LaneId, Vec<(VehicleId, usize)>> = BTreeMap::new();
            for v in state.vehicles() {
                by_lane.entry(v.lane).or_default().push((v.id, v.cell));
            }
            for list in by_lane.values() {
                prop_assert!(list.windows(2).all(|w| w[0].1 > w[1].1), "older vehicles stay ahead");
            }
        }
    }

    #[test]
    fn ramp_without_randomization(lane in 0u8..8, start in 0usize..5) {
        let topo = GridTopology::manhattan();
        let params = SimParams { p: 0.0, ..SimParams::default() };
        let driver = KeyedStream::new(0, streams::DRIVER);
        let mut state = NetworkState::new();
        state.place_vehicle(LaneId(lane), start, 0).unwrap();
        let green = SignalAssignment::all(Colour::Green);
        let mut moves = Vec::new();
        for _ in 0..6 {
            let before = state.vehicles()[0].cell;
            ca_step(&mut state, &topo, &green, &params, &driver);
            moves.push(state.vehicles()[0].cell - before);
        }
        prop_assert_eq!(moves, vec![1, 2, 2, 2, 2, 2]);
    }

    /// Any pressure stream: never both green, every switch separated by
    /// exactly the intergreen, no approach waits more than 120 s.
    #[test]
    fn controller_safety_and_liveness(
        pressures in prop::collection::vec((0.0..40.0f64, 0.0..40.0f64), 600..2000),
        bias in prop_oneof![Just(0.0), 0.0..1000.0f64],
    ) {
        let params = ControllerParams::default();
        let mut state = SignalState::new(IntersectionId(0));
        let mut since_green = [0u32; 2];
        let mut all_red = 0u32;
        let mut last_green: Option<Approach> = Some(Approach::Horizontal);
        for &(h, v) in &pressures {
            state = decide_phase(&state, [h + bias, v], &params);
            let colours = [state.colour(Approach::Horizontal), state.colour(Approach::Vertical)];
            prop_assert!(!(colours[0] == Colour::Green && colours[1] == Colour::Green));
            match colours.iter().position(|c| *c == Colour::Green) {
                Some(k) => {
                    let a = if k == 0 { Approach::Horizontal } else { Approach::Vertical };
                    if last_green.is_some_and(|prev| prev != a) {
                        prop_assert_eq!(all_red, params.intergreen_s, "intergreen length");
                    } else {
                        prop_assert_eq!(all_red, 0, "all-red only between conflicting greens");
                    }
                    last_green = Some(a);
                    all_red = 0;
                }
                None => {
                    all_red += 1;
                    let intergreen = matches!(state.phase, Phase::Intergreen { .. });
                    prop_assert!(intergreen);
                }
            }
            for (k, c) in colours.iter().enumerate() {
                since_green[k] = if *c == Colour::Green { 0 } else { since_green[k] + 1 };
                prop_assert!(since_green[k] < 120, "approach {} red for {} s", k, since_green[k]);
            }
        }
    }

    /// Controllers only ever see the filter output: adding reports from
    /// distrusted senders changes no decision.
    #[test]
    fn distrusted_reports_never_steer(seed in any::<u64>()) {
        let topo = GridTopology::manhattan();
        let params = ControllerParams::default();
        let mut rng = RandomStream::new(seed, 7);
        let mut clean: Vec<SignalState> = topo.intersections.iter().map(|n| SignalState::new(n.id)).collect();
        let mut noisy = clean.clone();
        let mut ledger = TrustLedger::new();
        for id in 0..40u64 {
            ledger.set_trust(VehicleId(id), if id % 3 == 0 { -1.0 } else { 1.0 });
        }
        for t in 0..300u64 {
            let reports: Vec<VehicleReport> = (0..40u64)
                .filter(|id| id % 3 != 0)
                .map(|id| VehicleReport {
                    sender: VehicleId(id),
                    t,
                    lane: LaneId((id % 8) as u8),
                    x: rng.uniform(0.0, 1500.0),
                    v: rng.uniform(0.0, 15.0),
                    neighbours: Vec::new(),
                })
                .collect();
            let mut with_junk = reports.clone();
            for id in (0..40u64).filter(|id| id % 3 == 0) {
                with_junk.push(VehicleReport {
                    sender: VehicleId(id),
                    t,
                    lane: LaneId((id % 8) as u8),
                    x: rng.uniform(250.0, 300.0),
                    v: 0.0,
                    neighbours: Vec::new(),
                });
            }
            let a = ReportBatch { t, reports };
            let b = ReportBatch { t, reports: with_junk };
            let pa = network_pressures(filter_reports(&a, &ledger), &topo, &params);
            let pb = network_pressures(filter_reports(&b, &ledger), &topo, &params);
            for ((c, n), (pa, pb)) in clean.iter_mut().zip(noisy.iter_mut()).zip(pa.into_iter().zip(pb)) {
                *c = decide_phase(c, pa, &params);
                *n = decide_phase(n, pb, &params);
            }
            prop_assert_eq!(&clean, &noisy);
        }
    }

    #[test]
    fn reports_follow_ground_truth(seed in any::<u64>(), q_f in 0.0..0.3f64) {
        let topo = GridTopology::manhattan();
        let params = SimParams { q: 0.3, seed, ..SimParams::default() };
        let driver = KeyedStream::new(seed, streams::DRIVER);
        let mut spawn = RandomStream::new(seed, streams::SPAWN);
        let mut sensor = RandomStream::new(seed, streams::SENSOR);
        let mut sybil = RandomStream::new(seed, streams::SYBIL);
        let attack = AttackConfig { q_f, ..AttackConfig::default() };
        let mut swarm = SybilSwarm::default();
        let mut state = NetworkState::new();
        let green = SignalAssignment::all(Colour::Green);
        for _ in 0..120 {
            let mut batch = generate_reports(&state, &topo, 50.0, 0.0, &mut sensor);
            let truth: Vec<(LaneId, f64)> =
                state.vehicles().iter().map(|v| (v.lane, v.cell as f64 * CELL_LENGTH_M)).collect();
            for (r, v) in batch.reports.iter().zip(state.vehicles()) {
                prop_assert_eq!(r.sender, v.id);
                prop_assert_eq!(r.x, v.cell as f64 * CELL_LENGTH_M);
                prop_assert_eq!(r.v, f64::from(v.velocity) * CELL_LENGTH_M);
                let me = topo.point(r.lane, r.x);
                for n in &r.neighbours {
                    prop_assert!(topo.point(n.lane, n.x).distance(me) <= 50.0);
                    prop_assert!(truth.contains(&(n.lane, n.x)), "sensed something that is not a vehicle");
                }
            }
            inject_sybil(&mut batch, &attack, &mut swarm, &topo, 50.0, &mut sybil);
            prop_assert_eq!(batch.len(), state.vehicles().len() + swarm.streams().len());
            for r in batch.reports.iter().filter(|r| SybilSwarm::is_sybil(r.sender)) {
                prop_assert!(r.neighbours.is_empty());
                prop_assert!((0.0..=topo.lane_length()).contains(&r.x));
            }
            ca_step(&mut state, &topo, &green, &params, &driver);
            spawn_vehicles(&mut state, &topo, params.q, params.v_max, &mut spawn);
        }
    }
}

/// Spawn draws over 600 ticks on 8 entries: within 3 sigma of
/// Binomial(4800, 0.1), for every one of 20 fixed seeds.
#[test]
fn spawn_counts_are_binomial() {
    let topo = GridTopology::manhattan();
    let (n, q): (f64, f64) = (4800.0, 0.10);
    let sigma = (n * q * (1.0 - q)).sqrt();
    for seed in 0..20 {
        let mut rng = RandomStream::new(seed, streams::SPAWN);
        let mut total = 0;
        for _ in 0..600 {
            let mut empty = NetworkState::new();
            total += spawn_vehicles(&mut empty, &topo, q, 2, &mut rng);
        }
        let z = (total as f64 - n * q) / sigma;
        assert!(z.abs() <= 3.0, "seed {seed}: {total} spawns, z = {z:.2}");
    }
}

/// Same configuration, same trajectory: every tick's reports, colours and
/// classification agree between two independent runs.
#[test]
fn closed_loop_is_deterministic() {
    let mut cfg = ScenarioConfig::default();
    cfg.sim.q = 0.1;
    cfg.sim.seed = 42;
    cfg.attack.q_f = 0.06;
    let mut a = Simulation::new(cfg.clone()).unwrap();
    let mut b = Simulation::new(cfg).unwrap();
    a.prime();
    b.prime();
    for _ in 0..300 {
        let (ta, tb) = (a.step(), b.step());
        assert_eq!(ta.batch, tb.batch);
        assert_eq!(ta.signals_applied, tb.signals_applied);
        assert_eq!(ta.accepted, tb.accepted);
        assert_eq!(a.state().vehicles(), b.state().vehicles());
    }
    assert_eq!(a.summary(), b.summary());
}

/// Delay accrues to true vehicles only: the attack moves the lights, but
/// never adds a vehicle of its own.
#[test]
fn sybils_never_enter_the_traffic_model() {
    let mut cfg = ScenarioConfig::default();
    cfg.sim.seed = 3;
    cfg.attack.q_f = 0.2;
    let mut sim = Simulation::new(cfg).unwrap();
    sim.prime();
    for _ in 0..200 {
        sim.step();
        assert!(sim
            .state()
            .vehicles()
            .iter()
            .all(|v| !SybilSwarm::is_sybil(v.id)));
    }
}
