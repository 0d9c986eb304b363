use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sizeset::harness::{check_linearizable, run_stress, CheckOutcome, History, OpMix, StopAfter, StressConfig};
use sizeset::workload::{overhead_csv, run_bench, run_overhead_comparison, BenchConfig, Workload};
use sizeset::{Options, Reclamation, StructureKind};

#[derive(Parser)]
#[command(name = "sizeset", version, about = "Benchmarks and history checks for sets with a linearizable size()")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fill a set, run timed rounds of a workload, write per-round throughput as CSV.
    Bench(BenchArgs),
    /// Compare a transformed set against its untransformed baseline.
    Overhead(OverheadArgs),
    /// Run a short randomized stress test and write its history.
    Stress(StressArgs),
    /// Check a history file for linearizability.
    ///
    /// Exits 0 if linearizable, 1 on a violation, 2 if the check gave up.
    Check(CheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct RunArgs {
    /// Elements inserted before the first round.
    #[arg(long, default_value_t = 1_000)]
    initial_size: usize,
    /// Seconds per round.
    #[arg(long, default_value_t = 1.0)]
    duration: f64,
    /// Unmeasured rounds before the measured ones.
    #[arg(long, default_value_t = 3)]
    warmup: usize,
    /// Measured rounds.
    #[arg(long, default_value_t = 5)]
    rounds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    backoff: Switch,
    #[arg(long, default_value = "defer", value_parser = ["defer", "leak"])]
    reclamation: String,
    /// Thread slots in the set; defaults to workers + size threads.
    #[arg(long)]
    max_threads: Option<usize>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "hash")]
    structure: StructureKind,
    #[arg(long, default_value = "update-heavy")]
    workload: Workload,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    size_threads: usize,
    /// Also measure throughput per operation type, choosing one type per
    /// block of 100 operations. Written next to the main CSV as
    /// `<out>.breakdown.csv`, or after it on stdout.
    #[arg(long)]
    breakdown: bool,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct OverheadArgs {
    #[arg(long, default_value = "hash")]
    structure: StructureKind,
    /// Workloads to run; both by default.
    #[arg(long, value_delimiter = ',')]
    workload: Vec<Workload>,
    /// Worker counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    workers: Vec<usize>,
    /// Size-thread counts for the transformed runs, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    size_threads: Vec<usize>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct StressArgs {
    #[arg(long, default_value = "list")]
    structure: StructureKind,
    #[arg(long, default_value_t = 3)]
    workers: usize,
    #[arg(long, default_value_t = 1)]
    size_threads: usize,
    /// Worker keys are drawn from 0..key-range.
    #[arg(long, default_value_t = 8)]
    key_range: i64,
    /// Operations per thread.
    #[arg(long, default_value_t = 50)]
    ops: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Percent chance of yielding at each instrumented point (needs a build
    /// with the `instrument` feature).
    #[arg(long, default_value_t = 0)]
    chaos: u32,
    /// Also run the linearizability checker on the result.
    #[arg(long)]
    check: bool,
    /// History file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    history: PathBuf,
}

impl RunArgs {
    fn config(&self, structure: StructureKind, workload: Workload, workers: usize, size_threads: usize) -> Result<BenchConfig> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            bail!("--duration must be a positive number of seconds");
        }
        let mut cfg = BenchConfig::new(structure, workload, workers, size_threads);
        cfg.initial_size = self.initial_size;
        cfg.duration = Duration::from_secs_f64(self.duration);
        cfg.warmup_rounds = self.warmup;
        cfg.rounds = self.rounds;
        cfg.seed = self.seed;
        cfg.options = Options::new(self.max_threads.unwrap_or(workers + size_threads))
            .reclamation(self.reclamation.parse::<Reclamation>()?)
            .backoff(matches!(self.backoff, Switch::On));
        Ok(cfg)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn bench(args: BenchArgs) -> Result<()> {
    let mut cfg = args.run.config(args.structure, args.workload, args.workers, args.size_threads)?;
    cfg.breakdown = args.breakdown;
    let report = run_bench(&cfg)?;
    emit(args.run.out.as_deref(), &report.to_csv())?;
    if args.breakdown {
        let csv = report.breakdown_csv();
        match &args.run.out {
            Some(path) => {
                let mut name = path.as_os_str().to_owned();
                name.push(".breakdown.csv");
                emit(Some(Path::new(&name)), &csv)?;
            }
            None => emit(None, &csv)?,
        }
    }
    Ok(())
}

fn overhead(args: OverheadArgs) -> Result<()> {
    if args.structure.baseline().is_none() {
        bail!("structure `{}` has no untransformed baseline", args.structure);
    }
    let workloads = if args.workload.is_empty() {
        vec![Workload::UpdateHeavy, Workload::ReadHeavy]
    } else {
        args.workload.clone()
    };
    let mut rows = Vec::new();
    for &workload in &workloads {
        for &workers in &args.workers {
            for &size_threads in &args.size_threads {
                let mut run = args.run.config(args.structure, workload, workers, size_threads)?;
                if args.run.max_threads.is_none() {
                    run.options.max_threads = workers + size_threads;
                }
                rows.push(run_overhead_comparison(&run)?);
            }
        }
    }
    emit(args.run.out.as_deref(), &overhead_csv(&rows))
}

fn stress(args: StressArgs) -> Result<ExitCode> {
    let mut cfg = StressConfig::new(args.structure, args.workers, args.size_threads);
    cfg.key_range = args.key_range;
    cfg.mix = OpMix::BALANCED;
    cfg.stop = StopAfter::Ops {
        per_worker: args.ops,
        per_size_thread: args.ops,
    };
    cfg.seed = args.seed;
    cfg.chaos = args.chaos;
    let run = run_stress(&cfg)?;
    run.history.save(&args.out)?;
    let c = &run.checks;
    eprintln!(
        "{} events, {} sizes: {} negative, {} above key space, {} snapshot disagreements",
        run.history.len(),
        c.sizes_seen,
        c.negative,
        c.above_keyspace,
        c.snapshot_disagreements
    );
    if !c.passed() {
        return Ok(ExitCode::from(1));
    }
    if args.check {
        return Ok(report(&check_linearizable(&run.history)));
    }
    Ok(ExitCode::SUCCESS)
}

fn report(outcome: &CheckOutcome) -> ExitCode {
    match outcome {
        CheckOutcome::Linearizable => {
            println!("linearizable");
            ExitCode::SUCCESS
        }
        CheckOutcome::Violation(v) => {
            print!("violation: {v}");
            ExitCode::from(1)
        }
        CheckOutcome::Inconclusive { steps, reason } => {
            println!("inconclusive after {steps} steps: {reason}");
            ExitCode::from(2)
        }
    }
}

fn check(args: CheckArgs) -> Result<ExitCode> {
    let history = History::load(&args.history).with_context(|| format!("reading {}", args.history.display()))?;
    Ok(report(&check_linearizable(&history)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench(a) => bench(a).map(|()| ExitCode::SUCCESS),
        Command::Overhead(a) => overhead(a).map(|()| ExitCode::SUCCESS),
        Command::Stress(a) => stress(a),
        Command::Check(a) => check(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        // 2 is taken by "inconclusive" for `check`.
        ExitCode::from(3)
    })
}
