use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use vanet_core::harness::{
    aggregate, delay_table, detection_table, intensity_table, read_runs_csv, run_experiment,
    write_aggregate_csv, write_runs_csv, ExperimentPlan,
};
use vanet_core::replay::{replay, write_trust_csv};
use vanet_core::sim::Simulation;
use vanet_core::topology::GridTopology;
use vanet_core::traffic::measure_saturation_flow;
use vanet_core::trust::Algorithm;
use vanet_core::vanet::{format_report, format_signals, parse_signal_trace, parse_trace};

#[derive(Parser)]
#[command(
    name = "vanetsim",
    version,
    about = "Sybil-resilient VANET signal control simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment grid and write per-run and seed-averaged CSVs.
    Run(RunArgs),
    /// Score a recorded report trace with the trust engine.
    Replay(ReplayArgs),
    /// Measure queue discharge at a single stop line.
    Calibrate(CalibrateArgs),
    /// Print summary tables from a per-run CSV.
    Report {
        /// Per-run CSV written by `run`.
        runs: PathBuf,
    },
    /// Run one scenario and dump its report and signal traces.
    Trace(TraceArgs),
    /// Print the road network layout.
    Topology,
}

#[derive(Args)]
struct PlanArgs {
    /// Config file of `key = value` lines.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Algorithms, comma separated (0-9).
    #[arg(long, value_delimiter = ',')]
    alg: Option<Vec<u8>>,
    /// Arrival probabilities, comma separated.
    #[arg(long, value_delimiter = ',')]
    q: Option<Vec<f64>>,
    /// Sybil arrival probabilities, comma separated.
    #[arg(long, value_delimiter = ',')]
    qf: Option<Vec<f64>>,
    /// Replications per cell.
    #[arg(long)]
    seeds: Option<u32>,
    /// Simulated seconds per run.
    #[arg(long)]
    duration: Option<u32>,
    /// Base seed.
    #[arg(long)]
    base_seed: Option<u64>,
}

impl PlanArgs {
    fn plan(&self) -> Result<ExperimentPlan> {
        let mut plan = ExperimentPlan::default();
        if let Some(path) = &self.config {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            plan.apply_config(&text)
                .with_context(|| format!("in {}", path.display()))?;
        }
        if let Some(algs) = &self.alg {
            plan.algorithms = algs
                .iter()
                .map(|&n| Algorithm::new(n))
                .collect::<Result<_, _>>()?;
        }
        if let Some(q) = &self.q {
            plan.q = q.clone();
        }
        if let Some(qf) = &self.qf {
            plan.q_f = qf.clone();
        }
        if let Some(n) = self.seeds {
            plan.replications = n;
        }
        if let Some(d) = self.duration {
            plan.duration_s = d;
        }
        if let Some(s) = self.base_seed {
            plan.base_seed = s;
        }
        plan.validate()?;
        Ok(plan)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    plan: PlanArgs,
    /// Output directory for runs.csv and aggregate.csv.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    /// Report trace, one `t,sender,lane,x,v,[k: x l ...]` line per report.
    reports: PathBuf,
    /// Signal trace, one `t,node,horizontal,vertical` line per node and tick.
    signals: PathBuf,
    /// Config file for detection parameters.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Algorithm whose rules are applied.
    #[arg(long, default_value_t = 9)]
    alg: u8,
    /// Output CSV; stdout if omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, default_value_t = 0.15)]
    p: f64,
    /// Stopped vehicles queued at the stop line.
    #[arg(long, default_value_t = 10)]
    queue: usize,
    /// Red seconds before the green onset.
    #[arg(long, default_value_t = 40)]
    red: u32,
    /// Green seconds counted.
    #[arg(long, default_value_t = 20)]
    green: u32,
    #[arg(long, default_value_t = 200)]
    runs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    plan: PlanArgs,
    /// Output directory for reports.trace and signals.trace.
    #[arg(long, short, default_value = "trace")]
    out: PathBuf,
}

/// Write to stdout; a closed pipe (`| head`) ends output quietly.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn create(path: &PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn run(args: RunArgs) -> Result<()> {
    let plan = args.plan.plan()?;
    let results = run_experiment(&plan)?;
    fs::create_dir_all(&args.out)?;
    write_runs_csv(&results, create(&args.out.join("runs.csv"))?)?;
    let rows = aggregate(&results);
    write_aggregate_csv(&rows, create(&args.out.join("aggregate.csv"))?)?;
    emit(&format!(
        "{} runs written to {}\n{}",
        results.len(),
        args.out.display(),
        delay_table(&rows)
    ))
}

fn replay_cmd(args: ReplayArgs) -> Result<()> {
    let mut plan = ExperimentPlan::default();
    if let Some(path) = &args.config {
        plan.apply_config(&fs::read_to_string(path)?)?;
    }
    let mut params = plan.scenario.detection;
    params.rule_set = Algorithm::new(args.alg)?.rule_set();
    let batches = parse_trace(&fs::read_to_string(&args.reports)?).context("report trace")?;
    let signals =
        parse_signal_trace(&fs::read_to_string(&args.signals)?).context("signal trace")?;
    let rows = replay(&batches, &signals, &GridTopology::manhattan(), &params)?;
    match &args.out {
        Some(path) => write_trust_csv(&rows, create(path)?)?,
        None => {
            let mut buf = Vec::new();
            write_trust_csv(&rows, &mut buf)?;
            emit(&String::from_utf8(buf)?)?
        }
    }
    Ok(())
}

fn trace(args: TraceArgs) -> Result<()> {
    let plan = args.plan.plan()?;
    let cell = plan.cells().into_iter().next().context("empty plan")?;
    let mut sim = Simulation::new(plan.scenario_for(&cell))?;
    fs::create_dir_all(&args.out)?;
    let mut reports = create(&args.out.join("reports.trace"))?;
    let mut signals = create(&args.out.join("signals.trace"))?;
    sim.prime();
    for _ in 0..plan.duration_s {
        let tick = sim.step();
        for r in &tick.batch.reports {
            writeln!(reports, "{}", format_report(r))?;
        }
        write!(
            signals,
            "{}",
            format_signals(tick.batch.t, &tick.signals_seen)
        )?;
    }
    reports.flush()?;
    signals.flush()?;
    emit(&format!(
        "seed {}: traces written to {}\n",
        cell.seed,
        args.out.display()
    ))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Replay(args) => replay_cmd(args),
        Command::Calibrate(a) => {
            let m = measure_saturation_flow(
                &GridTopology::manhattan(),
                a.p,
                a.queue,
                a.red,
                a.green,
                a.runs,
                a.seed,
            );
            emit(&format!(
                "{:.2} vehicles discharged in {} s over {} runs: {:.0} veh/h\n",
                m.mean_discharged, m.green_s, m.runs, m.veh_per_hour
            ))
        }
        Command::Report { runs } => {
            let results = read_runs_csv(
                File::open(&runs).with_context(|| format!("opening {}", runs.display()))?,
            )?;
            let rows = aggregate(&results);
            emit(&format!(
                "Detection accuracy\n\n{}\nDelay by algorithm\n\n{}\nDelay by arrival intensity\n\n{}",
                detection_table(&rows),
                delay_table(&rows),
                intensity_table(&rows)
            ))
        }
        Command::Trace(args) => trace(args),
        Command::Topology => emit(&GridTopology::manhattan().dump()),
    }
}
