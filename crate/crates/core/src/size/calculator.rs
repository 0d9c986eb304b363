use std::sync::atomic::Ordering::SeqCst;
use std::time::{Duration, Instant};

use crossbeam_epoch::{self as epoch, Atomic, Guard, Owned};

use super::{CountersSnapshot, MetadataCounters, OpKind, Steps, ThreadId, UpdateInfo};
use crate::error::{Error, Result};
use crate::hooks::{self, YieldPoint};

const BACKOFF_START: Duration = Duration::from_micros(1);
const BACKOFF_CAP: Duration = Duration::from_micros(128);

/// Owner of the per-thread metadata counters and of the currently announced
/// [`CountersSnapshot`].
#[derive(Debug)]
pub struct SizeCalculator {
    counters: MetadataCounters,
    announced: Atomic<CountersSnapshot>,
    backoff: bool,
}

enum Obtained<'g> {
    Snapshot {
        cs: &'g CountersSnapshot,
        adopted: bool,
    },
    /// A concurrent `compute()` already fixed the size.
    Done { size: i64, snapshot_id: u64 },
}

impl SizeCalculator {
    /// A calculator with size backoff enabled.
    pub fn new(max_threads: usize) -> Result<Self> {
        Self::with_backoff(max_threads, true)
    }

    pub fn with_backoff(max_threads: usize, backoff: bool) -> Result<Self> {
        if max_threads == 0 {
            return Err(Error::InvalidMaxThreads);
        }
        // Dummy, already closed, so the first compute() announces a fresh one.
        let dummy = CountersSnapshot::new(max_threads);
        dummy.stop_collecting();
        Ok(SizeCalculator {
            counters: MetadataCounters::new(max_threads),
            announced: Atomic::new(dummy),
            backoff,
        })
    }

    pub fn max_threads(&self) -> usize {
        self.counters.max_threads()
    }

    pub fn backoff_enabled(&self) -> bool {
        self.backoff
    }

    /// Current value of one metadata counter.
    pub fn counter(&self, tid: ThreadId, kind: OpKind) -> i64 {
        self.counters.get(tid, kind)
    }

    /// Record for the caller's next successful operation of `kind`. Only the
    /// thread owning `caller` may call this.
    pub fn create_update_info(&self, caller: ThreadId, kind: OpKind) -> UpdateInfo {
        UpdateInfo::new(caller, self.counters.get(caller, kind) + 1)
    }

    /// Brings the owner's counter to `info.counter` (at most once, whoever
    /// calls it) and forwards the value to a collecting snapshot that may
    /// have missed it.
    ///
    /// The order of the steps after the counter CAS matters: snapshot, then
    /// collecting flag, then a re-read of the counter. Reading the counter
    /// last keeps stale helpers from forwarding old values, which is what
    /// bounds `forward` to two attempts.
    pub fn update_metadata(&self, info: &UpdateInfo, kind: OpKind) {
        let counter = self.counters.cell(info.tid(), kind);
        let target = info.counter();
        if counter.load(SeqCst) == target - 1 {
            // Losing this CAS means another helper already did the same step.
            let _ = counter.compare_exchange(target - 1, target, SeqCst, SeqCst);
        }
        hooks::yield_point(YieldPoint::MetadataCounterUpdated);

        let guard = epoch::pin();
        // SAFETY: the announced pointer is never null and replaced instances
        // are only destroyed after every pinned reader has moved on.
        let cs = unsafe { self.announced.load(SeqCst, &guard).deref() };
        if cs.is_collecting() && counter.load(SeqCst) == target {
            hooks::yield_point(YieldPoint::BeforeForward);
            let attempts = cs.forward(info.tid(), kind, target);
            #[cfg(feature = "instrument")]
            {
                use std::sync::atomic::Ordering::Relaxed;
                hooks::MAX_FORWARD.fetch_max(u64::from(attempts), Relaxed);
                hooks::FORWARD_CALLS.fetch_add(1, Relaxed);
            }
            #[cfg(not(feature = "instrument"))]
            let _ = attempts;
        }
    }

    /// Linearizable size: the agreed value of the snapshot this call
    /// collected into. Wait-free, `O(max_threads)` steps.
    pub fn compute(&self, caller: ThreadId) -> i64 {
        let _ = caller;
        let guard = epoch::pin();
        let mut steps = Steps::default();

        let (cs, adopted) = match self.obtain_collecting(&guard, &mut steps) {
            Obtained::Snapshot { cs, adopted } => (cs, adopted),
            Obtained::Done { size, snapshot_id } => {
                return self.finish(size, snapshot_id, steps, true, true);
            }
        };
        hooks::yield_point(YieldPoint::SizeObtained);

        if adopted && self.backoff {
            if let Some(size) = Self::back_off(cs, &mut steps) {
                return self.finish(size, cs.id(), steps, true, true);
            }
        }

        self.collect(cs, &mut steps);
        hooks::yield_point(YieldPoint::SizeCollected);
        cs.stop_collecting();
        steps.tick();
        hooks::yield_point(YieldPoint::SizeClosed);

        let size = cs.compute_size_counted(&mut steps);
        #[cfg(feature = "instrument")]
        self.check_no_future_values(cs);
        self.finish(size, cs.id(), steps, adopted, false)
    }

    fn obtain_collecting<'g>(&self, guard: &'g Guard, steps: &mut Steps) -> Obtained<'g> {
        let current = self.announced.load(SeqCst, guard);
        steps.tick();
        // SAFETY: never null; protected by `guard`.
        let cur = unsafe { current.deref() };
        steps.tick();
        if cur.is_collecting() {
            steps.tick();
            return match cur.size() {
                Some(size) => Obtained::Done {
                    size,
                    snapshot_id: cur.id(),
                },
                None => Obtained::Snapshot {
                    cs: cur,
                    adopted: true,
                },
            };
        }

        let fresh = Owned::new(CountersSnapshot::new(self.max_threads()));
        steps.tick();
        match self
            .announced
            .compare_exchange(current, fresh, SeqCst, SeqCst, guard)
        {
            Ok(ours) => {
                #[cfg(feature = "instrument")]
                if cur.is_collecting() {
                    hooks::OVERLAP.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                }
                // SAFETY: unreachable from `announced` now; readers that
                // still hold it are pinned.
                unsafe { guard.defer_destroy(current) };
                Obtained::Snapshot {
                    // SAFETY: just installed, protected by `guard`.
                    cs: unsafe { ours.deref() },
                    adopted: false,
                }
            }
            Err(lost) => {
                // SAFETY: the witnessed instance is announced; protected by `guard`.
                let theirs = unsafe { lost.current.deref() };
                steps.tick();
                match theirs.size() {
                    Some(size) => Obtained::Done {
                        size,
                        snapshot_id: theirs.id(),
                    },
                    None => Obtained::Snapshot {
                        cs: theirs,
                        adopted: true,
                    },
                }
            }
        }
    }

    /// Exponential backoff while another `compute()` finishes the epoch.
    fn back_off(cs: &CountersSnapshot, steps: &mut Steps) -> Option<i64> {
        let mut wait = BACKOFF_START;
        loop {
            let until = Instant::now() + wait;
            while Instant::now() < until {
                std::hint::spin_loop();
            }
            steps.tick();
            if let Some(size) = cs.size() {
                return Some(size);
            }
            if wait >= BACKOFF_CAP {
                return None;
            }
            wait *= 2;
        }
    }

    fn collect(&self, cs: &CountersSnapshot, steps: &mut Steps) {
        for t in 0..self.max_threads() {
            let tid = ThreadId::new(t);
            for kind in OpKind::BOTH {
                cs.add(tid, kind, self.counters.get(tid, kind));
                steps.add(2);
            }
        }
    }

    #[cfg(feature = "instrument")]
    fn check_no_future_values(&self, cs: &CountersSnapshot) {
        for t in 0..self.max_threads() {
            let tid = ThreadId::new(t);
            for kind in OpKind::BOTH {
                if let Some(v) = cs.cell(tid, kind) {
                    if v > self.counters.get(tid, kind) {
                        hooks::FUTURE.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    }
                }
            }
        }
    }

    #[inline]
    fn finish(&self, size: i64, snapshot_id: u64, steps: Steps, adopted: bool, early: bool) -> i64 {
        #[cfg(feature = "instrument")]
        {
            use std::sync::atomic::Ordering::Relaxed;
            hooks::COMPUTES.fetch_add(1, Relaxed);
            if size < 0 {
                hooks::NEGATIVE.fetch_add(1, Relaxed);
            }
            hooks::store_trace(hooks::ComputeTrace {
                snapshot_id,
                steps: steps.0,
                adopted,
                early_return: early,
            });
        }
        #[cfg(not(feature = "instrument"))]
        let _ = (snapshot_id, steps, adopted, early);
        size
    }

    /// Upper bound on the steps one `compute()` may take; linear in
    /// `max_threads` and nothing else.
    pub fn step_bound(&self) -> u64 {
        let t = self.max_threads() as u64;
        // obtain (4) + backoff rounds (8) + collect (4t) + close (1)
        // + compute_size (2t + 3)
        6 * t + 16
    }
}

impl Drop for SizeCalculator {
    fn drop(&mut self) {
        // SAFETY: `&mut self` means no other thread can reach the announced
        // instance anymore.
        unsafe {
            let cur = self.announced.load(SeqCst, epoch::unprotected());
            drop(cur.into_owned());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    const T0: ThreadId = ThreadId::new(0);

    fn succeed(sc: &SizeCalculator, tid: ThreadId, kind: OpKind) {
        let info = sc.create_update_info(tid, kind);
        sc.update_metadata(&info, kind);
    }

    #[test]
    fn rejects_zero_threads() {
        assert!(matches!(SizeCalculator::new(0), Err(Error::InvalidMaxThreads)));
    }

    #[test]
    fn fresh_calculator() {
        let sc = SizeCalculator::new(4).unwrap();
        assert_eq!(sc.compute(T0), 0);
        let sc = SizeCalculator::new(1).unwrap();
        for kind in OpKind::BOTH {
            assert_eq!(sc.counter(T0, kind), 0);
        }
    }

    #[test]
    fn update_info_targets_next_counter_value() {
        let sc = SizeCalculator::new(4).unwrap();
        assert_eq!(sc.create_update_info(T0, OpKind::Insert), UpdateInfo::new(T0, 1));

        let t2 = ThreadId::new(2);
        for _ in 0..3 {
            succeed(&sc, t2, OpKind::Delete);
        }
        assert_eq!(sc.create_update_info(t2, OpKind::Delete), UpdateInfo::new(t2, 4));

        let t1 = ThreadId::new(1);
        succeed(&sc, t1, OpKind::Insert);
        assert_eq!(sc.create_update_info(t1, OpKind::Insert), UpdateInfo::new(t1, 2));
    }

    #[test]
    fn update_metadata_steps_counter_once() {
        let sc = SizeCalculator::new(1).unwrap();
        sc.update_metadata(&UpdateInfo::new(T0, 1), OpKind::Insert);
        assert_eq!(sc.counter(T0, OpKind::Insert), 1);
    }

    #[test]
    fn concurrent_helpers_do_not_double_count() {
        for _ in 0..50 {
            let sc = Arc::new(SizeCalculator::new(9).unwrap());
            let info = UpdateInfo::new(T0, 1);
            let hs: Vec<_> = (0..8)
                .map(|_| {
                    let sc = Arc::clone(&sc);
                    std::thread::spawn(move || sc.update_metadata(&info, OpKind::Insert))
                })
                .collect();
            hs.into_iter().for_each(|h| h.join().unwrap());
            assert_eq!(sc.counter(T0, OpKind::Insert), 1);
        }
    }

    #[test]
    fn stale_helper_is_a_no_op() {
        let sc = SizeCalculator::new(1).unwrap();
        for _ in 0..5 {
            succeed(&sc, T0, OpKind::Insert);
        }
        sc.update_metadata(&UpdateInfo::new(T0, 1), OpKind::Insert);
        assert_eq!(sc.counter(T0, OpKind::Insert), 5);
    }

    #[test]
    fn sequential_compute() {
        let sc = SizeCalculator::new(2).unwrap();
        for _ in 0..3 {
            succeed(&sc, T0, OpKind::Insert);
        }
        succeed(&sc, ThreadId::new(1), OpKind::Delete);
        assert_eq!(sc.compute(T0), 2);
        // A second call announces a new epoch and sees the same counters.
        assert_eq!(sc.compute(T0), 2);
    }

    #[test]
    fn forward_reaches_a_collecting_snapshot() {
        let sc = SizeCalculator::new(2).unwrap();
        let guard = epoch::pin();
        let mut steps = Steps::default();
        let Obtained::Snapshot { cs, adopted: false } = sc.obtain_collecting(&guard, &mut steps)
        else {
            panic!("expected a fresh snapshot");
        };
        // Collector reads the counter before the update lands.
        cs.add(T0, OpKind::Insert, 0);
        succeed(&sc, T0, OpKind::Insert);
        assert_eq!(cs.cell(T0, OpKind::Insert), Some(1));
    }

    #[test]
    fn backoff_toggle_is_kept() {
        assert!(SizeCalculator::new(1).unwrap().backoff_enabled());
        assert!(!SizeCalculator::with_backoff(1, false).unwrap().backoff_enabled());
    }
}
