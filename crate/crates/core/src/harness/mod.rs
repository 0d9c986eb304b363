//! Testing machinery: history recording, a linearizability checker against
//! a sequential set-with-size model, randomized stress runs and a
//! deterministic interleaving scheduler driven by [`hooks`](crate::hooks)
//! yield points.

mod checker;
mod history;
mod model;
mod sched;
mod stress;

pub use checker::{check_linearizable, check_with_limits, CheckLimits, CheckOutcome, Violation};
pub use history::{Event, Header, History, Op, OpResult};
pub use model::SetModel;
pub use sched::{run_deterministic, DeterministicRun, Schedule, Step, StepOutcome, Stop};
pub use stress::{op_stream, run_stress, OnlineChecks, OpMix, StopAfter, StressConfig, StressRun};

use crate::set::ConcurrentSet;
use crate::size::ThreadId;

/// Runs `op` against `set` as thread `tid`.
pub fn execute(set: &dyn ConcurrentSet, tid: ThreadId, op: Op) -> OpResult {
    match op {
        Op::Insert(k) => OpResult::Bool(set.insert(tid, k)),
        Op::Delete(k) => OpResult::Bool(set.delete(tid, k)),
        Op::Contains(k) => OpResult::Bool(set.contains(tid, k)),
        Op::Size => OpResult::Size(set.size(tid)),
    }
}
