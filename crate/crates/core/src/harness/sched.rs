//! Deterministic interleavings.
//!
//! Each program runs on its own OS thread, but only one thread is ever
//! allowed to run: the controller hands a baton to the thread named by the
//! next [`Step`], which runs until it reaches the requested yield point or
//! finishes its current operation, and then hands the baton back. Time is a
//! logical clock advanced at every invocation and response, so the recorded
//! history depends only on the schedule.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use super::{execute, Event, Header, History, Op};
use crate::error::{Error, Result};
use crate::hooks::{self, ComputeTrace, YieldPoint};
use crate::set::ConcurrentSet;
use crate::size::ThreadId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stop {
    /// Run until the thread reaches this point.
    At(YieldPoint),
    /// Run until the thread's current operation returns.
    Done,
}

/// Resume `thread`, starting its next operation if none is in flight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub thread: usize,
    pub stop: Stop,
}

impl Step {
    pub fn at(thread: usize, point: YieldPoint) -> Self {
        Step {
            thread,
            stop: Stop::At(point),
        }
    }

    pub fn done(thread: usize) -> Self {
        Step {
            thread,
            stop: Stop::Done,
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.stop {
            Stop::At(p) => write!(f, "{}:{p}", self.thread),
            Stop::Done => write!(f, "{}:done", self.thread),
        }
    }
}

/// Parses `"<thread>:<yield-point>"` or `"<thread>:done"`.
impl FromStr for Step {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (t, stop) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("malformed step `{s}`")))?;
        let thread = t
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad thread in step `{s}`")))?;
        let stop = match stop.trim() {
            "done" => Stop::Done,
            p => Stop::At(p.parse()?),
        };
        Ok(Step { thread, stop })
    }
}

/// Per-thread operation lists and the interleaving to run them under.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Schedule {
    pub programs: Vec<Vec<Op>>,
    pub steps: Vec<Step>,
}

impl Schedule {
    pub fn new(programs: Vec<Vec<Op>>) -> Self {
        Schedule {
            programs,
            steps: Vec::new(),
        }
    }

    pub fn step(mut self, step: Step) -> Self {
        self.steps.push(step);
        self
    }

    pub fn at(self, thread: usize, point: YieldPoint) -> Self {
        self.step(Step::at(thread, point))
    }

    pub fn done(self, thread: usize) -> Self {
        self.step(Step::done(thread))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    /// Stopped at the requested yield point.
    Paused,
    /// The operation returned.
    Completed,
    /// The operation returned without passing the requested point.
    CompletedBeforePoint,
    /// The thread had no operations left; nothing ran.
    Idle,
}

#[derive(Debug, Clone)]
pub struct DeterministicRun {
    pub history: History,
    /// One entry per schedule step, followed by one per operation that was
    /// still in flight when the schedule ended and had to be drained.
    pub outcomes: Vec<StepOutcome>,
    /// The `compute()` trace of every completed size operation, in
    /// completion order. Empty without the `instrument` feature.
    pub size_traces: Vec<(Event, ComputeTrace)>,
}

impl DeterministicRun {
    /// Events of `thread` in program order.
    pub fn events_of(&self, thread: usize) -> Vec<Event> {
        self.history
            .events
            .iter()
            .filter(|e| e.thread.index() == thread)
            .copied()
            .collect()
    }
}

#[derive(Default)]
struct Ctl {
    turn: Option<usize>,
    target: Option<Stop>,
    last: Option<StepOutcome>,
    clock: u64,
    in_flight: Vec<bool>,
    started: Vec<usize>,
    events: Vec<Event>,
    traces: Vec<(Event, ComputeTrace)>,
    crashed: bool,
    shutdown: bool,
}

struct Baton {
    ctl: Mutex<Ctl>,
    cv: Condvar,
}

impl Baton {
    fn lock(&self) -> MutexGuard<'_, Ctl> {
        self.ctl.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn wait_turn(&self, me: usize) -> MutexGuard<'_, Ctl> {
        let mut g = self.lock();
        while g.turn != Some(me) && !g.shutdown {
            g = self.cv.wait(g).unwrap_or_else(|e| e.into_inner());
        }
        g
    }

    fn hand_back(&self, mut g: MutexGuard<'_, Ctl>, outcome: StepOutcome) {
        g.last = Some(outcome);
        g.turn = None;
        drop(g);
        self.cv.notify_all();
    }
}

/// Releases the controller if a program thread unwinds.
struct CrashGuard<'a>(&'a Baton);

impl Drop for CrashGuard<'_> {
    fn drop(&mut self) {
        if std::thread::panicking() {
            let mut g = self.0.lock();
            g.crashed = true;
            g.shutdown = true;
            g.turn = None;
            drop(g);
            self.0.cv.notify_all();
        }
    }
}

/// Runs `schedule` on `set`, program `i` acting as `ThreadId::new(i)`.
///
/// Steps that name a yield point need the `instrument` feature. When the
/// steps run out, operations still in flight are finished in thread order;
/// operations never started are not run.
pub fn run_deterministic(set: &dyn ConcurrentSet, schedule: &Schedule) -> Result<DeterministicRun> {
    let threads = schedule.programs.len();
    if threads > set.max_threads() {
        return Err(Error::Config(format!(
            "schedule has {threads} programs but the set allows {} threads",
            set.max_threads()
        )));
    }
    for (i, s) in schedule.steps.iter().enumerate() {
        if s.thread >= threads {
            return Err(Error::UnknownThread {
                step: i,
                thread: s.thread,
                threads,
            });
        }
        if matches!(s.stop, Stop::At(_)) && !hooks::enabled() {
            return Err(Error::Config(
                "yield-point steps need the `instrument` feature".into(),
            ));
        }
    }

    let baton = Arc::new(Baton {
        ctl: Mutex::new(Ctl {
            in_flight: vec![false; threads],
            started: vec![0; threads],
            ..Ctl::default()
        }),
        cv: Condvar::new(),
    });

    let mut outcomes = Vec::with_capacity(schedule.steps.len());
    std::thread::scope(|scope| {
        for (me, program) in schedule.programs.iter().enumerate() {
            let baton = Arc::clone(&baton);
            scope.spawn(move || program_thread(set, me, program, &baton));
        }

        let run = |step: Step| -> StepOutcome {
            let mut g = baton.lock();
            if g.crashed {
                return StepOutcome::Idle;
            }
            if !g.in_flight[step.thread] && g.started[step.thread] == schedule.programs[step.thread].len() {
                return StepOutcome::Idle;
            }
            g.turn = Some(step.thread);
            g.target = Some(step.stop);
            g.last = None;
            baton.cv.notify_all();
            while g.turn.is_some() {
                g = baton.cv.wait(g).unwrap_or_else(|e| e.into_inner());
            }
            g.last.unwrap_or(StepOutcome::Idle)
        };

        for &step in &schedule.steps {
            outcomes.push(run(step));
        }
        for t in 0..threads {
            if baton.lock().in_flight[t] {
                outcomes.push(run(Step::done(t)));
            }
        }
        // Release threads waiting to start an operation that will never run.
        baton.lock().shutdown = true;
        baton.cv.notify_all();
    });

    let mut g = baton.lock();
    let header = Header {
        structure: String::new(),
        workers: threads,
        ..Header::default()
    };
    Ok(DeterministicRun {
        history: History::new(header, std::mem::take(&mut g.events)),
        outcomes,
        size_traces: std::mem::take(&mut g.traces),
    })
}

fn program_thread(set: &dyn ConcurrentSet, me: usize, program: &[Op], baton: &Arc<Baton>) {
    let _guard = CrashGuard(baton);
    let tid = ThreadId::new(me);

    #[cfg(feature = "instrument")]
    {
        let b = Arc::clone(baton);
        hooks::set_yield_hook(Some(Box::new(move |point| {
            let g = b.lock();
            if g.turn == Some(me) && g.target == Some(Stop::At(point)) {
                b.hand_back(g, StepOutcome::Paused);
                drop(b.wait_turn(me));
            }
        })));
    }

    for &op in program {
        let mut g = baton.wait_turn(me);
        if g.shutdown {
            break;
        }
        g.started[me] += 1;
        g.in_flight[me] = true;
        g.clock += 1;
        let invoke_ns = g.clock;
        drop(g);

        let result = execute(set, tid, op);

        let mut g = baton.lock();
        g.clock += 1;
        let event = Event {
            thread: tid,
            op,
            result,
            invoke_ns,
            response_ns: g.clock,
        };
        g.events.push(event);
        #[cfg(feature = "instrument")]
        if op == Op::Size {
            g.traces.push((event, hooks::last_compute_trace()));
        }
        g.in_flight[me] = false;
        let outcome = match g.target {
            Some(Stop::At(_)) => StepOutcome::CompletedBeforePoint,
            _ => StepOutcome::Completed,
        };
        baton.hand_back(g, outcome);
    }

    #[cfg(feature = "instrument")]
    hooks::set_yield_hook(None);
}
