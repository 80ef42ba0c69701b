//! Classification accuracy per one-second interval and vehicle stop delay.

use serde::{Deserialize, Serialize};

use crate::traffic::VehicleId;
use crate::vanet::VehicleReport;

/// Report counts cross-tabulated by sender truth and filter outcome.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationCounts {
    pub true_accepted: u64,
    pub true_rejected: u64,
    pub sybil_rejected: u64,
    pub sybil_accepted: u64,
}

impl ClassificationCounts {
    pub fn true_reports(&self) -> u64 {
        self.true_accepted + self.true_rejected
    }

    pub fn sybil_reports(&self) -> u64 {
        self.sybil_accepted + self.sybil_rejected
    }

    /// Percentage of Sybil reports rejected; zero when there were none.
    pub fn pct_malicious_detected(&self) -> f64 {
        percent(self.sybil_rejected, self.sybil_reports())
    }

    /// Percentage of true reports accepted; zero when there were none.
    pub fn pct_true_recognized(&self) -> f64 {
        percent(self.true_accepted, self.true_reports())
    }
}

impl std::ops::AddAssign for ClassificationCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.true_accepted += rhs.true_accepted;
        self.true_rejected += rhs.true_rejected;
        self.sybil_rejected += rhs.sybil_rejected;
        self.sybil_accepted += rhs.sybil_accepted;
    }
}

fn percent(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

/// Classify one tick: `accepted[k]` tells whether `reports[k]` passed the
/// filter, `is_sybil` is the ground truth for its sender.
pub fn accumulate(
    reports: &[VehicleReport],
    accepted: &[bool],
    is_sybil: impl Fn(VehicleId) -> bool,
) -> ClassificationCounts {
    let mut c = ClassificationCounts::default();
    for (r, &ok) in reports.iter().zip(accepted) {
        match (is_sybil(r.sender), ok) {
            (false, true) => c.true_accepted += 1,
            (false, false) => c.true_rejected += 1,
            (true, false) => c.sybil_rejected += 1,
            (true, true) => c.sybil_accepted += 1,
        }
    }
    c
}

/// One tick of a run's time series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: u64,
    #[serde(flatten)]
    pub counts: ClassificationCounts,
    /// Cumulative stop delay at the end of the tick, vehicle-seconds.
    pub stop_delay_s: u64,
    pub vehicles_present: usize,
}

/// Per-run accumulator.
#[derive(Clone, Debug, Default)]
pub struct RunRecorder {
    pub totals: ClassificationCounts,
    pub series: Vec<TickRecord>,
}

impl RunRecorder {
    pub fn record(&mut self, tick: TickRecord) {
        self.totals += tick.counts;
        self.series.push(tick);
    }
}

/// One CSV row per (algorithm, q, q_F, seed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algorithm: u8,
    pub q: f64,
    #[serde(rename = "qF")]
    pub q_f: f64,
    pub seed: u64,
    pub total_delay_s: f64,
    pub mean_delay_s: f64,
    pub pct_malicious_detected: f64,
    pub pct_true_recognized: f64,
    pub vehicles: u64,
}

/// Fold a finished run into its summary row. `vehicles` counts true
/// vehicles that entered the network; the mean delay is zero for an empty
/// run.
pub fn summarize(
    recorder: &RunRecorder,
    total_delay_s: u64,
    vehicles: u64,
    algorithm: u8,
    q: f64,
    q_f: f64,
    seed: u64,
) -> RunResult {
    let total = total_delay_s as f64;
    RunResult {
        algorithm,
        q,
        q_f,
        seed,
        total_delay_s: total,
        mean_delay_s: if vehicles == 0 {
            0.0
        } else {
            total / vehicles as f64
        },
        pct_malicious_detected: recorder.totals.pct_malicious_detected(),
        pct_true_recognized: recorder.totals.pct_true_recognized(),
        vehicles,
    }
}
