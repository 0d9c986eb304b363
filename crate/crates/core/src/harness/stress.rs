//! Randomized multi-threaded runs that record a history and run cheap
//! online checks on every size result.

use std::collections::HashMap;
use std::sync::Barrier;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{execute, Event, Header, History, Op, OpResult};
use crate::error::{Error, Result};
use crate::set::{ConcurrentSet, Options, StructureKind};
use crate::size::ThreadId;

/// Percentages of inserts, deletes and contains issued by workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpMix {
    pub insert: u32,
    pub delete: u32,
    pub contains: u32,
}

impl OpMix {
    pub const UPDATE_HEAVY: OpMix = OpMix {
        insert: 30,
        delete: 20,
        contains: 50,
    };
    pub const READ_HEAVY: OpMix = OpMix {
        insert: 3,
        delete: 2,
        contains: 95,
    };
    /// Equal inserts and deletes; keeps a small key range churning.
    pub const BALANCED: OpMix = OpMix {
        insert: 40,
        delete: 40,
        contains: 20,
    };

    pub fn new(insert: u32, delete: u32, contains: u32) -> Result<Self> {
        if insert + delete + contains != 100 {
            return Err(Error::Config(format!(
                "operation mix {insert}/{delete}/{contains} does not sum to 100"
            )));
        }
        Ok(OpMix {
            insert,
            delete,
            contains,
        })
    }

    fn pick(&self, roll: u32, key: i64) -> Op {
        if roll < self.insert {
            Op::Insert(key)
        } else if roll < self.insert + self.delete {
            Op::Delete(key)
        } else {
            Op::Contains(key)
        }
    }
}

impl Default for OpMix {
    fn default() -> Self {
        OpMix::BALANCED
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopAfter {
    Ops { per_worker: u64, per_size_thread: u64 },
    Duration(Duration),
}

#[derive(Debug, Clone)]
pub struct StressConfig {
    pub structure: StructureKind,
    pub workers: usize,
    pub size_threads: usize,
    /// Worker keys are drawn uniformly from `0..key_range`.
    pub key_range: i64,
    pub mix: OpMix,
    pub stop: StopAfter,
    pub seed: u64,
    /// Keys inserted before the workers start.
    pub initial: Vec<i64>,
    /// `max_threads` is raised to fit all workers and size threads.
    pub options: Options,
    /// Keep every event. Off for long runs that only need the online checks.
    pub record: bool,
    /// Percent chance of giving up the CPU at each yield point, so that
    /// operations interleave even on few cores. Needs the `instrument`
    /// feature; ignored otherwise.
    pub chaos: u32,
}

impl StressConfig {
    pub fn new(structure: StructureKind, workers: usize, size_threads: usize) -> Self {
        StressConfig {
            structure,
            workers,
            size_threads,
            key_range: 8,
            mix: OpMix::default(),
            stop: StopAfter::Ops {
                per_worker: 50,
                per_size_thread: 50,
            },
            seed: 0,
            initial: Vec::new(),
            options: Options::new(workers + size_threads),
            record: true,
            chaos: 0,
        }
    }

    pub fn threads(&self) -> usize {
        self.workers + self.size_threads
    }

    fn header(&self) -> Header {
        Header {
            structure: self.structure.name().to_owned(),
            workers: self.workers,
            size_threads: self.size_threads,
            key_range: self.key_range,
            seed: self.seed,
            initial: self.initial.clone(),
        }
    }
}

/// Results of the checks applied to each size as it is returned.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OnlineChecks {
    pub sizes_seen: u64,
    pub negative: u64,
    /// Sizes larger than the number of distinct keys in play.
    pub above_keyspace: u64,
    /// Snapshots for which two `compute()` calls reported different sizes.
    /// Always zero without the `instrument` feature.
    pub snapshot_disagreements: u64,
    /// Distinct snapshots observed by more than one `compute()` call.
    pub shared_snapshots: u64,
}

impl OnlineChecks {
    pub fn passed(&self) -> bool {
        self.negative == 0 && self.above_keyspace == 0 && self.snapshot_disagreements == 0
    }
}

#[derive(Debug, Clone)]
pub struct StressRun {
    pub history: History,
    pub checks: OnlineChecks,
    pub operations: u64,
    pub elapsed: Duration,
}

/// The operations worker `thread` issues, as a pure function of the seed.
pub fn op_stream(seed: u64, thread: usize, mix: OpMix, key_range: i64) -> impl Iterator<Item = Op> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(thread as u64);
    let range = key_range.max(1);
    std::iter::repeat_with(move || {
        let roll = rng.random_range(0..100);
        let key = rng.random_range(0..range);
        mix.pick(roll, key)
    })
}

struct ThreadLog {
    events: Vec<Event>,
    sizes: Vec<(u64, i64)>,
    operations: u64,
}

pub fn run_stress(cfg: &StressConfig) -> Result<StressRun> {
    if cfg.workers + cfg.size_threads == 0 {
        return Err(Error::Config("a stress run needs at least one thread".into()));
    }
    if cfg.key_range < 1 {
        return Err(Error::Config("key_range must be at least 1".into()));
    }
    let mut options = cfg.options;
    options.max_threads = options.max_threads.max(cfg.threads());
    options.expected_elements = options.expected_elements.max(cfg.key_range as usize);
    let set = cfg.structure.build(options)?;
    {
        let reg = set.register()?;
        for &k in &cfg.initial {
            set.insert(reg.id(), k);
        }
    }

    let barrier = Barrier::new(cfg.threads());
    let base = Instant::now();
    let set: &dyn ConcurrentSet = &*set;
    let logs: Vec<Result<ThreadLog>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..cfg.threads())
            .map(|index| {
                let barrier = &barrier;
                scope.spawn(move || run_thread(cfg, set, index, barrier, base))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("stress thread panicked"))
            .collect()
    });
    let elapsed = base.elapsed();

    let mut events = Vec::new();
    let mut checks = OnlineChecks::default();
    let mut by_snapshot: HashMap<u64, (i64, u64, bool)> = HashMap::new();
    let keyspace = cfg.key_range.max(0) + cfg.initial.iter().filter(|&&k| !(0..cfg.key_range).contains(&k)).count() as i64;
    let mut operations = 0;
    for log in logs {
        let log = log?;
        operations += log.operations;
        events.extend(log.events);
        for (snapshot, size) in log.sizes {
            checks.sizes_seen += 1;
            checks.negative += u64::from(size < 0);
            checks.above_keyspace += u64::from(size > keyspace);
            if snapshot == 0 {
                continue;
            }
            let entry = by_snapshot.entry(snapshot).or_insert((size, 0, false));
            entry.1 += 1;
            if entry.0 != size && !entry.2 {
                entry.2 = true;
                checks.snapshot_disagreements += 1;
            }
        }
    }
    checks.shared_snapshots = by_snapshot.values().filter(|e| e.1 > 1).count() as u64;

    Ok(StressRun {
        history: History::new(cfg.header(), events),
        checks,
        operations,
        elapsed,
    })
}

fn run_thread(
    cfg: &StressConfig,
    set: &dyn ConcurrentSet,
    index: usize,
    barrier: &Barrier,
    base: Instant,
) -> Result<ThreadLog> {
    let reg = set.register()?;
    let tid = reg.id();
    let is_worker = index < cfg.workers;
    let mut ops: Box<dyn Iterator<Item = Op>> = if is_worker {
        Box::new(op_stream(cfg.seed, index, cfg.mix, cfg.key_range))
    } else {
        Box::new(std::iter::repeat(Op::Size))
    };
    let limit = match cfg.stop {
        StopAfter::Ops {
            per_worker,
            per_size_thread,
        } => Some(if is_worker { per_worker } else { per_size_thread }),
        StopAfter::Duration(_) => None,
    };
    let deadline = match cfg.stop {
        StopAfter::Duration(d) => Some(d),
        StopAfter::Ops { .. } => None,
    };
    let now = || base.elapsed().as_nanos() as u64;

    let mut log = ThreadLog {
        events: Vec::new(),
        sizes: Vec::new(),
        operations: 0,
    };
    #[cfg(feature = "instrument")]
    if cfg.chaos > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
        rng.set_stream(index as u64 | 1 << 32);
        let chaos = cfg.chaos.min(100);
        crate::hooks::set_yield_hook(Some(Box::new(move |_| {
            if rng.random_ratio(chaos, 100) {
                std::thread::yield_now();
            }
        })));
    }

    let mut last_response = 0;
    barrier.wait();
    loop {
        if limit.is_some_and(|l| log.operations >= l) {
            break;
        }
        if deadline.is_some_and(|d| base.elapsed() >= d) {
            break;
        }
        let op = ops.next().expect("op streams are infinite");
        let invoke_ns = now().max(last_response);
        let result = execute(set, tid, op);
        let response_ns = now().max(invoke_ns + 1);
        last_response = response_ns;
        log.operations += 1;
        if let OpResult::Size(n) = result {
            log.sizes.push((snapshot_id(), n));
        }
        if cfg.record {
            log.events.push(Event {
                thread: ThreadId::new(index),
                op,
                result,
                invoke_ns,
                response_ns,
            });
        }
    }
    #[cfg(feature = "instrument")]
    crate::hooks::set_yield_hook(None);
    Ok(log)
}

fn snapshot_id() -> u64 {
    #[cfg(feature = "instrument")]
    {
        crate::hooks::last_compute_trace().snapshot_id
    }
    #[cfg(not(feature = "instrument"))]
    {
        0
    }
}
