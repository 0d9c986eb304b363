//! Per-thread size metadata and the wait-free `compute()` built on it.
//!
//! A [`SizeCalculator`] keeps two monotone counters per thread, one for
//! successful insertions and one for successful deletions. Updates publish an
//! [`UpdateInfo`] so that any thread can finish the counter increment on
//! their behalf, and `compute()` takes a consistent snapshot of all counters
//! through a shared [`CountersSnapshot`] into which concurrent updates forward
//! the values a collector may have missed.

mod calculator;
mod counters;
mod registry;
mod snapshot;

pub use calculator::SizeCalculator;
pub use counters::MetadataCounters;
pub use registry::{Registration, ThreadRegistry};
pub use snapshot::CountersSnapshot;

use std::fmt;

/// Sentinel for unfilled snapshot cells and an unset agreed size. No counter
/// can reach it in practice.
pub const INVALID: i64 = i64::MAX;

/// Index of a registered worker thread, `0 <= id < max_threads`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ThreadId(usize);

impl ThreadId {
    /// Wraps a raw index. Prefer [`ThreadRegistry::register`]; a raw id must
    /// not be shared by two live threads.
    pub const fn new(index: usize) -> Self {
        ThreadId(index)
    }

    pub const fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ThreadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(usize)]
pub enum OpKind {
    Insert = 0,
    Delete = 1,
}

impl OpKind {
    pub const BOTH: [OpKind; 2] = [OpKind::Insert, OpKind::Delete];

    #[inline]
    pub(crate) const fn index(self) -> usize {
        self as usize
    }
}

/// Record left by a successful insert or delete so that helpers can bring
/// the owner's metadata counter to `counter`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateInfo {
    tid: ThreadId,
    counter: i64,
}

impl UpdateInfo {
    pub fn new(tid: ThreadId, counter: i64) -> Self {
        assert!(counter >= 1, "update target counter must be at least 1");
        UpdateInfo { tid, counter }
    }

    pub fn tid(&self) -> ThreadId {
        self.tid
    }

    pub fn counter(&self) -> i64 {
        self.counter
    }
}

/// Shared-memory step tally for one `compute()` call.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Steps(pub u64);

impl Steps {
    #[inline(always)]
    pub(crate) fn tick(&mut self) {
        self.0 += 1;
    }

    #[inline(always)]
    pub(crate) fn add(&mut self, n: u64) {
        self.0 += n;
    }
}
