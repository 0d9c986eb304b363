//! Instrumentation points.
//!
//! Everything here compiles to nothing unless the `instrument` feature is
//! enabled. With it, the algorithms report yield points to an optional
//! per-thread hook (used by the deterministic scheduler), keep per-thread
//! traces of the last `compute()` call, and tally invariant checks in
//! process-wide counters.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Named places inside the set and size algorithms where a thread can be
/// suspended by the deterministic scheduler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum YieldPoint {
    /// Insert built its node and update record, not yet linked.
    InsertInfoCreated,
    /// Insert linked its node; size metadata not yet updated.
    InsertLinked,
    /// Insert updated its metadata; `insertInfo` not yet cleared.
    InsertMetadataUpdated,
    /// Delete published its `deleteInfo`; node not yet marked.
    DeleteInfoInstalled,
    /// Delete marked its node; size metadata not yet updated.
    DeleteMarked,
    /// Delete updated its metadata; node not yet unlinked.
    DeleteMetadataUpdated,
    /// Delete unlinked its node. Naive baselines decrement their counter after this.
    DeleteUnlinked,
    /// Inside `update_metadata`, after the counter CAS, before the snapshot is read.
    MetadataCounterUpdated,
    /// Inside `update_metadata`, all checks passed, about to forward.
    BeforeForward,
    /// `compute()` holds a collecting snapshot, collection not started.
    SizeObtained,
    /// `compute()` collected every counter, collecting flag still set.
    SizeCollected,
    /// `compute()` cleared the collecting flag, size not yet computed.
    SizeClosed,
}

impl YieldPoint {
    pub const ALL: [YieldPoint; 12] = [
        YieldPoint::InsertInfoCreated,
        YieldPoint::InsertLinked,
        YieldPoint::InsertMetadataUpdated,
        YieldPoint::DeleteInfoInstalled,
        YieldPoint::DeleteMarked,
        YieldPoint::DeleteMetadataUpdated,
        YieldPoint::DeleteUnlinked,
        YieldPoint::MetadataCounterUpdated,
        YieldPoint::BeforeForward,
        YieldPoint::SizeObtained,
        YieldPoint::SizeCollected,
        YieldPoint::SizeClosed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            YieldPoint::InsertInfoCreated => "insert-info-created",
            YieldPoint::InsertLinked => "insert-linked",
            YieldPoint::InsertMetadataUpdated => "insert-metadata-updated",
            YieldPoint::DeleteInfoInstalled => "delete-info-installed",
            YieldPoint::DeleteMarked => "delete-marked",
            YieldPoint::DeleteMetadataUpdated => "delete-metadata-updated",
            YieldPoint::DeleteUnlinked => "delete-unlinked",
            YieldPoint::MetadataCounterUpdated => "metadata-counter-updated",
            YieldPoint::BeforeForward => "before-forward",
            YieldPoint::SizeObtained => "size-obtained",
            YieldPoint::SizeCollected => "size-collected",
            YieldPoint::SizeClosed => "size-closed",
        }
    }
}

impl fmt::Display for YieldPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for YieldPoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        YieldPoint::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownYieldPoint(s.to_owned()))
    }
}

/// What the most recent `compute()` on this thread did.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ComputeTrace {
    /// Identity of the snapshot instance the call operated on.
    pub snapshot_id: u64,
    /// Shared-memory steps taken (loads, CASes, stores, backoff rounds).
    pub steps: u64,
    /// The call adopted a snapshot announced by another thread.
    pub adopted: bool,
    /// The call returned a size fixed by another thread without computing.
    pub early_return: bool,
}

/// Process-wide tallies of invariant checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tallies {
    /// Largest number of loop iterations any `forward` executed.
    pub max_forward_iterations: u64,
    pub forward_calls: u64,
    /// `compute()` results below zero.
    pub negative_sizes: u64,
    /// Marked nodes unlinked before their deletion reached the metadata.
    pub unlink_before_metadata: u64,
    /// Announcements that replaced a snapshot still flagged as collecting.
    pub overlapping_collections: u64,
    /// Agreed sizes built from a snapshot cell above its metadata counter.
    pub future_witness: u64,
    pub compute_calls: u64,
}

#[cfg(feature = "instrument")]
mod imp {
    use std::cell::{Cell, RefCell};
    use std::sync::atomic::{AtomicU64, Ordering::Relaxed};

    use super::{ComputeTrace, Tallies, YieldPoint};

    pub(crate) static MAX_FORWARD: AtomicU64 = AtomicU64::new(0);
    pub(crate) static FORWARD_CALLS: AtomicU64 = AtomicU64::new(0);
    pub(crate) static NEGATIVE: AtomicU64 = AtomicU64::new(0);
    pub(crate) static UNLINK_EARLY: AtomicU64 = AtomicU64::new(0);
    pub(crate) static OVERLAP: AtomicU64 = AtomicU64::new(0);
    pub(crate) static FUTURE: AtomicU64 = AtomicU64::new(0);
    pub(crate) static COMPUTES: AtomicU64 = AtomicU64::new(0);
    pub(crate) static SNAPSHOT_IDS: AtomicU64 = AtomicU64::new(1);

    type Hook = Box<dyn FnMut(YieldPoint)>;

    thread_local! {
        static HOOK: RefCell<Option<Hook>> = const { RefCell::new(None) };
        static TRACE: Cell<ComputeTrace> = const { Cell::new(ComputeTrace {
            snapshot_id: 0, steps: 0, adopted: false, early_return: false,
        }) };
    }

    pub fn set_yield_hook(hook: Option<Hook>) {
        HOOK.with(|h| *h.borrow_mut() = hook);
    }

    pub fn yield_point(point: YieldPoint) {
        HOOK.with(|h| {
            // The hook itself never re-enters the algorithms, so a failed
            // borrow can only mean there is nothing to call.
            if let Ok(mut h) = h.try_borrow_mut() {
                if let Some(f) = h.as_mut() {
                    f(point);
                }
            }
        });
    }

    pub fn last_compute_trace() -> ComputeTrace {
        TRACE.with(Cell::get)
    }

    pub(crate) fn store_trace(t: ComputeTrace) {
        TRACE.with(|c| c.set(t));
    }

    pub fn tallies() -> Tallies {
        Tallies {
            max_forward_iterations: MAX_FORWARD.load(Relaxed),
            forward_calls: FORWARD_CALLS.load(Relaxed),
            negative_sizes: NEGATIVE.load(Relaxed),
            unlink_before_metadata: UNLINK_EARLY.load(Relaxed),
            overlapping_collections: OVERLAP.load(Relaxed),
            future_witness: FUTURE.load(Relaxed),
            compute_calls: COMPUTES.load(Relaxed),
        }
    }
}

#[cfg(feature = "instrument")]
pub use imp::{last_compute_trace, set_yield_hook, tallies};
#[cfg(feature = "instrument")]
pub(crate) use imp::*;

/// Reports `point` to this thread's hook, if any.
#[inline(always)]
pub fn yield_point(point: YieldPoint) {
    #[cfg(feature = "instrument")]
    imp::yield_point(point);
    #[cfg(not(feature = "instrument"))]
    let _ = point;
}

/// True when the crate was built with the `instrument` feature.
pub const fn enabled() -> bool {
    cfg!(feature = "instrument")
}
