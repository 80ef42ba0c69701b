//! Experiment plans: the algorithm set swept over the intensity grid with
//! seeded replication, plus CSV persistence and the summary tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::metrics::RunResult;
use crate::sim::{ScenarioConfig, Simulation};
use crate::trust::Algorithm;

pub use crate::trust::algorithm_ruleset;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub algorithms: Vec<Algorithm>,
    pub q: Vec<f64>,
    pub q_f: Vec<f64>,
    pub replications: u32,
    pub duration_s: u32,
    pub base_seed: u64,
    /// Template for every cell; algorithm, intensities, duration and seed
    /// are overwritten per cell.
    pub scenario: ScenarioConfig,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            algorithms: (0..=9)
                .map(|n| Algorithm::new(n).expect("in range"))
                .collect(),
            q: vec![0.02, 0.06, 0.10, 0.14],
            q_f: vec![0.02, 0.04, 0.06, 0.08],
            replications: 20,
            duration_s: 600,
            base_seed: 2016,
            scenario: ScenarioConfig::default(),
        }
    }
}

/// One (algorithm, q, q_F, replication) combination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub algorithm: Algorithm,
    pub q: f64,
    pub q_f: f64,
    pub replication: u32,
    pub seed: u64,
}

/// Seed of a replication. The algorithm is deliberately not an input:
/// every algorithm sees the same demand and the same attack for a given
/// (q, q_F, replication), so comparisons between algorithms are paired.
pub fn cell_seed(base_seed: u64, q: f64, q_f: f64, replication: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(base_seed.to_le_bytes());
    h.update(q.to_bits().to_le_bytes());
    h.update(q_f.to_bits().to_le_bytes());
    h.update(replication.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

impl ExperimentPlan {
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &algorithm in &self.algorithms {
            for &q in &self.q {
                for &q_f in &self.q_f {
                    for replication in 0..self.replications {
                        let seed = cell_seed(self.base_seed, q, q_f, replication);
                        cells.push(Cell {
                            algorithm,
                            q,
                            q_f,
                            replication,
                            seed,
                        });
                    }
                }
            }
        }
        cells
    }

    pub fn scenario_for(&self, cell: &Cell) -> ScenarioConfig {
        let mut s = self.scenario.clone();
        s.algorithm = cell.algorithm;
        s.sim.q = cell.q;
        s.sim.seed = cell.seed;
        s.sim.duration_s = self.duration_s;
        s.attack.q_f = cell.q_f;
        s
    }

    pub fn validate(&self) -> Result<()> {
        for cell in self.cells().iter().take(1) {
            self.scenario_for(cell).validate()?;
        }
        for &q in self.q.iter().chain(&self.q_f) {
            let mut probe = self.scenario.clone();
            probe.sim.q = q;
            probe.attack.q_f = q;
            probe.validate()?;
        }
        Ok(())
    }
}

pub fn run_cell(plan: &ExperimentPlan, cell: &Cell) -> Result<RunResult> {
    Ok(Simulation::new(plan.scenario_for(cell))?.run().result)
}

/// Run every cell of the plan, in parallel, returning results in cell order.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<Vec<RunResult>> {
    plan.validate()?;
    plan.cells()
        .par_iter()
        .map(|cell| run_cell(plan, cell))
        .collect()
}

pub fn write_runs_csv<W: Write>(results: &[RunResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_runs_csv<R: Read>(input: R) -> Result<Vec<RunResult>> {
    let mut rd = csv::Reader::from_reader(input);
    Ok(rd.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Seed-averaged results of one (algorithm, q, q_F) combination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub algorithm: u8,
    pub q: f64,
    #[serde(rename = "qF")]
    pub q_f: f64,
    pub runs: usize,
    pub total_delay_s: f64,
    pub mean_delay_s: f64,
    pub pct_malicious_detected: f64,
    pub pct_true_recognized: f64,
    pub vehicles: f64,
}

/// Key ordering on (algorithm, q, q_F) that does not depend on input order.
fn key(r: &RunResult) -> (u8, u64, u64) {
    (r.algorithm, r.q.to_bits(), r.q_f.to_bits())
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Average over seeds. Rows come out sorted by (algorithm, q, q_F) and each
/// group is averaged in seed order, so the output is independent of the
/// order results arrive in.
pub fn aggregate(results: &[RunResult]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(u8, u64, u64), Vec<&RunResult>> = BTreeMap::new();
    for r in results {
        groups.entry(key(r)).or_default().push(r);
    }
    groups
        .into_values()
        .map(|mut g| {
            g.sort_by_key(|r| r.seed);
            AggregateRow {
                algorithm: g[0].algorithm,
                q: g[0].q,
                q_f: g[0].q_f,
                runs: g.len(),
                total_delay_s: mean(g.iter().map(|r| r.total_delay_s)),
                mean_delay_s: mean(g.iter().map(|r| r.mean_delay_s)),
                pct_malicious_detected: mean(g.iter().map(|r| r.pct_malicious_detected)),
                pct_true_recognized: mean(g.iter().map(|r| r.pct_true_recognized)),
                vehicles: mean(g.iter().map(|r| r.vehicles as f64)),
            }
        })
        .collect()
}

pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean of a quantity over every row of an algorithm, optionally restricted.
pub fn algorithm_mean(
    rows: &[AggregateRow],
    algorithm: u8,
    filter: impl Fn(&AggregateRow) -> bool,
    value: impl Fn(&AggregateRow) -> f64,
) -> f64 {
    mean(
        rows.iter()
            .filter(|r| r.algorithm == algorithm && filter(r))
            .map(value),
    )
}

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Detection accuracy per algorithm, one block per q_F.
pub fn detection_table(rows: &[AggregateRow]) -> String {
    let mut out = String::new();
    for qf in distinct(rows.iter().map(|r| r.q_f)) {
        let _ = writeln!(out, "qF = {qf}");
        let _ = writeln!(
            out,
            "{:>9} {:>12} {:>12}",
            "algorithm", "malicious %", "true %"
        );
        for alg in distinct(rows.iter().map(|r| f64::from(r.algorithm))) {
            let alg = alg as u8;
            let same = |r: &AggregateRow| r.q_f == qf;
            let _ = writeln!(
                out,
                "{:>9} {:>12.2} {:>12.2}",
                alg,
                algorithm_mean(rows, alg, same, |r| r.pct_malicious_detected),
                algorithm_mean(rows, alg, same, |r| r.pct_true_recognized),
            );
        }
        out.push('\n');
    }
    out
}

/// Delay per algorithm averaged over every intensity combination.
pub fn delay_table(rows: &[AggregateRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>9} {:>16} {:>14}",
        "algorithm", "total delay [s]", "mean delay [s]"
    );
    for alg in distinct(rows.iter().map(|r| f64::from(r.algorithm))) {
        let alg = alg as u8;
        let _ = writeln!(
            out,
            "{:>9} {:>16.1} {:>14.3}",
            alg,
            algorithm_mean(rows, alg, |_| true, |r| r.total_delay_s),
            algorithm_mean(rows, alg, |_| true, |r| r.mean_delay_s),
        );
    }
    out
}

/// Mean delay per algorithm and q, one block per q_F.
pub fn intensity_table(rows: &[AggregateRow]) -> String {
    let qs = distinct(rows.iter().map(|r| r.q));
    let mut out = String::new();
    for qf in distinct(rows.iter().map(|r| r.q_f)) {
        let _ = writeln!(out, "qF = {qf}: mean delay [s] by q");
        let _ = write!(out, "{:>9}", "algorithm");
        for q in &qs {
            let _ = write!(out, " {:>9}", format!("q={q}"));
        }
        out.push('\n');
        for alg in distinct(rows.iter().map(|r| f64::from(r.algorithm))) {
            let alg = alg as u8;
            let _ = write!(out, "{alg:>9}");
            for &q in &qs {
                let v = algorithm_mean(rows, alg, |r| r.q_f == qf && r.q == q, |r| r.mean_delay_s);
                let _ = write!(out, " {v:>9.3}");
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
