//! Throughput benchmarks: fill a structure, run mixed workloads with
//! optional size threads for a number of timed rounds, report CSV.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Barrier;
use std::time::{Duration, Instant};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::harness::OpMix;
use crate::set::{ConcurrentSet, Options, StructureKind};

/// Operations per uniform-type block in breakdown mode.
pub const BREAKDOWN_BLOCK: u64 = 100;

pub const CSV_HEADER: &str = "structure,workload,workers,size_threads,round,worker_mops,size_kops";
pub const OVERHEAD_HEADER: &str =
    "structure,workload,workers,size_threads,baseline_mops,transformed_mops,relative_pct";
pub const BREAKDOWN_HEADER: &str = "structure,workload,workers,size_threads,round,op,mops";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Workload {
    UpdateHeavy,
    ReadHeavy,
}

impl Workload {
    pub fn name(self) -> &'static str {
        match self {
            Workload::UpdateHeavy => "update-heavy",
            Workload::ReadHeavy => "read-heavy",
        }
    }

    pub fn mix(self) -> OpMix {
        match self {
            Workload::UpdateHeavy => OpMix::UPDATE_HEAVY,
            Workload::ReadHeavy => OpMix::READ_HEAVY,
        }
    }

    /// Upper end of the key range `[1, r]` that keeps `initial` keys resident
    /// in steady state.
    pub fn key_range(self, initial: usize) -> i64 {
        let m = self.mix();
        let r = initial as u128 * u128::from(m.insert + m.delete) / u128::from(m.insert);
        (r as i64).max(1)
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Workload {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "update-heavy" => Ok(Workload::UpdateHeavy),
            "read-heavy" => Ok(Workload::ReadHeavy),
            _ => Err(Error::Config(format!("unknown workload `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub structure: StructureKind,
    pub workload: Workload,
    pub workers: usize,
    pub size_threads: usize,
    pub initial_size: usize,
    /// Length of each round.
    pub duration: Duration,
    pub warmup_rounds: usize,
    pub rounds: usize,
    pub seed: u64,
    /// `max_threads` defaults to `workers + size_threads` when zero.
    pub options: Options,
    pub breakdown: bool,
}

impl BenchConfig {
    pub fn new(structure: StructureKind, workload: Workload, workers: usize, size_threads: usize) -> Self {
        BenchConfig {
            structure,
            workload,
            workers,
            size_threads,
            initial_size: 1_000,
            duration: Duration::from_secs(1),
            warmup_rounds: 3,
            rounds: 5,
            seed: 0,
            options: Options::new(workers + size_threads),
            breakdown: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let threads = self.workers + self.size_threads;
        if threads == 0 {
            return Err(Error::Config("need at least one worker or size thread".into()));
        }
        if threads > self.options.max_threads {
            return Err(Error::Config(format!(
                "{} workers + {} size threads exceed max_threads = {}",
                self.workers, self.size_threads, self.options.max_threads
            )));
        }
        if self.rounds == 0 {
            return Err(Error::Config("need at least one measured round".into()));
        }
        Ok(())
    }

    pub fn key_range(&self) -> i64 {
        self.workload.key_range(self.initial_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundResult {
    pub round: usize,
    pub worker_ops: u64,
    pub size_ops: u64,
    pub elapsed: Duration,
    /// Worker operations and time per kind (insert, delete, contains);
    /// filled in breakdown mode only.
    pub by_kind: [(u64, Duration); 3],
}

impl RoundResult {
    pub fn worker_mops(&self) -> f64 {
        self.worker_ops as f64 / self.elapsed.as_secs_f64() / 1e6
    }

    pub fn size_kops(&self) -> f64 {
        self.size_ops as f64 / self.elapsed.as_secs_f64() / 1e3
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub rounds: Vec<RoundResult>,
    pub final_size: usize,
}

/// Mean and coefficient of variation (sample standard deviation over mean).
pub fn mean_cv(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 || mean == 0.0 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt() / mean)
}

impl BenchReport {
    pub fn mean_worker_mops(&self) -> f64 {
        mean_cv(&self.rounds.iter().map(RoundResult::worker_mops).collect::<Vec<_>>()).0
    }

    pub fn mean_size_kops(&self) -> f64 {
        mean_cv(&self.rounds.iter().map(RoundResult::size_kops).collect::<Vec<_>>()).0
    }

    fn prefix(&self) -> String {
        let c = &self.config;
        format!("{},{},{},{}", c.structure, c.workload, c.workers, c.size_threads)
    }

    /// One row per measured round, then `mean` and `cv` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{CSV_HEADER}").unwrap();
        self.write_rows(&mut out);
        out
    }

    pub fn write_rows(&self, out: &mut String) {
        let p = self.prefix();
        for r in &self.rounds {
            writeln!(out, "{p},{},{:.6},{:.6}", r.round, r.worker_mops(), r.size_kops()).unwrap();
        }
        let w: Vec<f64> = self.rounds.iter().map(RoundResult::worker_mops).collect();
        let s: Vec<f64> = self.rounds.iter().map(RoundResult::size_kops).collect();
        let (wm, wcv) = mean_cv(&w);
        let (sm, scv) = mean_cv(&s);
        writeln!(out, "{p},mean,{wm:.6},{sm:.6}").unwrap();
        writeln!(out, "{p},cv,{wcv:.6},{scv:.6}").unwrap();
    }

    pub fn breakdown_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{BREAKDOWN_HEADER}").unwrap();
        let p = self.prefix();
        for r in &self.rounds {
            for (name, (ops, time)) in ["insert", "delete", "contains"].iter().zip(r.by_kind) {
                let mops = if time.is_zero() {
                    0.0
                } else {
                    ops as f64 / time.as_secs_f64() / 1e6
                };
                writeln!(out, "{p},{},{name},{mops:.6}", r.round).unwrap();
            }
        }
        out
    }

    /// Whether the resident size stayed within `tolerance` (a fraction) of
    /// the initial size.
    pub fn steady_state(&self, tolerance: f64) -> bool {
        let n = self.config.initial_size as f64;
        (self.final_size as f64 - n).abs() <= tolerance * n
    }
}

/// Inserts `n` distinct keys drawn uniformly from `[1, r]`.
///
/// Keys go in descending order so list fills stay linear.
pub fn fill(set: &dyn ConcurrentSet, n: usize, r: i64, seed: u64) -> Result<()> {
    if n as i64 > r {
        return Err(Error::Config(format!("cannot place {n} distinct keys in [1, {r}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let mut keys: Vec<i64> = index::sample(&mut rng, r as usize, n)
        .into_iter()
        .map(|i| i as i64 + 1)
        .collect();
    keys.sort_unstable_by(|a, b| b.cmp(a));
    let reg = set.register()?;
    for k in keys {
        set.insert(reg.id(), k);
    }
    Ok(())
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let mut options = cfg.options;
    options.expected_elements = options.expected_elements.max(cfg.initial_size).max(1);
    let set = cfg.structure.build(options)?;
    let r = cfg.key_range();
    fill(&*set, cfg.initial_size, r, cfg.seed)?;

    let mut rounds = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.warmup_rounds + cfg.rounds {
        let result = run_round(cfg, &*set, r, round)?;
        if round >= cfg.warmup_rounds {
            rounds.push(RoundResult {
                round: round - cfg.warmup_rounds,
                ..result
            });
        }
    }
    let final_size = {
        let reg = set.register()?;
        set.size(reg.id()).max(0) as usize
    };
    Ok(BenchReport {
        config: cfg.clone(),
        rounds,
        final_size,
    })
}

struct ThreadCount {
    ops: u64,
    by_kind: [(u64, Duration); 3],
}

fn run_round(cfg: &BenchConfig, set: &dyn ConcurrentSet, r: i64, round: usize) -> Result<RoundResult> {
    let threads = cfg.workers + cfg.size_threads;
    let stop = AtomicBool::new(false);
    let barrier = Barrier::new(threads + 1);
    let mix = cfg.workload.mix();

    let (counts, elapsed) = std::thread::scope(|scope| -> Result<_> {
        let handles: Vec<_> = (0..threads)
            .map(|i| {
                let (stop, barrier) = (&stop, &barrier);
                scope.spawn(move || -> Result<ThreadCount> {
                    let reg = set.register();
                    barrier.wait();
                    let reg = reg?;
                    let tid = reg.id();
                    let mut count = ThreadCount {
                        ops: 0,
                        by_kind: [(0, Duration::ZERO); 3],
                    };
                    if i >= cfg.workers {
                        while !stop.load(Ordering::Relaxed) {
                            std::hint::black_box(set.size(tid));
                            count.ops += 1;
                        }
                        return Ok(count);
                    }
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream((round * threads + i) as u64);
                    let kind_of = |roll: u32| -> usize {
                        if roll < mix.insert {
                            0
                        } else if roll < mix.insert + mix.delete {
                            1
                        } else {
                            2
                        }
                    };
                    let apply = |kind: usize, key: i64| match kind {
                        0 => set.insert(tid, key),
                        1 => set.delete(tid, key),
                        _ => set.contains(tid, key),
                    };
                    if cfg.breakdown {
                        while !stop.load(Ordering::Relaxed) {
                            let kind = kind_of(rng.random_range(0..100));
                            let start = Instant::now();
                            for _ in 0..BREAKDOWN_BLOCK {
                                std::hint::black_box(apply(kind, rng.random_range(1..=r)));
                            }
                            let slot = &mut count.by_kind[kind];
                            slot.0 += BREAKDOWN_BLOCK;
                            slot.1 += start.elapsed();
                            count.ops += BREAKDOWN_BLOCK;
                        }
                    } else {
                        while !stop.load(Ordering::Relaxed) {
                            let kind = kind_of(rng.random_range(0..100));
                            std::hint::black_box(apply(kind, rng.random_range(1..=r)));
                            count.ops += 1;
                        }
                    }
                    Ok(count)
                })
            })
            .collect();
        barrier.wait();
        let start = Instant::now();
        std::thread::sleep(cfg.duration);
        stop.store(true, Ordering::Relaxed);
        let counts: Vec<ThreadCount> = handles
            .into_iter()
            .map(|h| h.join().expect("benchmark thread panicked"))
            .collect::<Result<_>>()?;
        Ok((counts, start.elapsed()))
    })?;

    let mut result = RoundResult {
        round,
        worker_ops: 0,
        size_ops: 0,
        elapsed,
        by_kind: [(0, Duration::ZERO); 3],
    };
    for (i, c) in counts.iter().enumerate() {
        if i < cfg.workers {
            result.worker_ops += c.ops;
            for k in 0..3 {
                result.by_kind[k].0 += c.by_kind[k].0;
                result.by_kind[k].1 += c.by_kind[k].1;
            }
        } else {
            result.size_ops += c.ops;
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverheadRow {
    pub structure: StructureKind,
    pub workload: Workload,
    pub workers: usize,
    pub size_threads: usize,
    pub baseline_mops: f64,
    pub transformed_mops: f64,
}

impl OverheadRow {
    pub fn relative_pct(&self) -> f64 {
        if self.baseline_mops == 0.0 {
            0.0
        } else {
            100.0 * self.transformed_mops / self.baseline_mops
        }
    }
}

/// Runs `cfg.structure` and its untransformed baseline under the same
/// configuration and seed. The baseline runs without size threads.
pub fn run_overhead_comparison(cfg: &BenchConfig) -> Result<OverheadRow> {
    let baseline = cfg.structure.baseline().ok_or_else(|| {
        Error::Config(format!("structure `{}` has no baseline", cfg.structure))
    })?;
    let base_cfg = BenchConfig {
        structure: baseline,
        size_threads: 0,
        breakdown: false,
        ..cfg.clone()
    };
    let base = run_bench(&base_cfg)?;
    let transformed = run_bench(&BenchConfig {
        breakdown: false,
        ..cfg.clone()
    })?;
    Ok(OverheadRow {
        structure: cfg.structure,
        workload: cfg.workload,
        workers: cfg.workers,
        size_threads: cfg.size_threads,
        baseline_mops: base.mean_worker_mops(),
        transformed_mops: transformed.mean_worker_mops(),
    })
}

pub fn overhead_csv(rows: &[OverheadRow]) -> String {
    let mut out = String::new();
    writeln!(out, "{OVERHEAD_HEADER}").unwrap();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{:.2}",
            r.structure,
            r.workload,
            r.workers,
            r.size_threads,
            r.baseline_mops,
            r.transformed_mops,
            r.relative_pct()
        )
        .unwrap();
    }
    out
}
