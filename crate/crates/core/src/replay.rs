//! Trust engine driven by recorded traces instead of the simulator.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::signal::SignalAssignment;
use crate::topology::GridTopology;
use crate::traffic::VehicleId;
use crate::trust::{update_trust, DetectionParams, TrustLedger};
use crate::vanet::ReportBatch;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrustRow {
    pub t: u64,
    pub vehicle_id: u64,
    pub trust: f64,
    pub classified_malicious: bool,
}

/// Run the trust engine over per-tick report batches. Each batch needs the
/// signal colours of its tick. Emits the trust of every sender after each
/// tick's update, in batch order.
pub fn replay(
    batches: &[ReportBatch],
    signals: &[(u64, SignalAssignment)],
    topo: &GridTopology,
    params: &DetectionParams,
) -> Result<Vec<TrustRow>> {
    params.validate()?;
    let mut ledger = TrustLedger::new();
    let mut rows = Vec::new();
    let mut cursor = 0;
    for batch in batches {
        while cursor < signals.len() && signals[cursor].0 < batch.t {
            cursor += 1;
        }
        let colours = match signals.get(cursor) {
            Some((t, s)) if *t == batch.t => s,
            _ => {
                return Err(Error::Trace {
                    line: 0,
                    reason: format!("no signal colours for tick {}", batch.t),
                })
            }
        };
        update_trust(&mut ledger, batch, colours, topo, params);
        let mut seen: Vec<VehicleId> = Vec::with_capacity(batch.len());
        for r in &batch.reports {
            if seen.contains(&r.sender) {
                continue;
            }
            seen.push(r.sender);
            let trust = ledger.trust(r.sender).unwrap_or(params.trust_init);
            rows.push(TrustRow {
                t: batch.t,
                vehicle_id: r.sender.0,
                trust,
                classified_malicious: trust <= 0.0,
            });
        }
    }
    Ok(rows)
}

pub fn write_trust_csv<W: Write>(rows: &[TrustRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
