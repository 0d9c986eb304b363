use std::sync::atomic::{AtomicBool, AtomicI64, Ordering::SeqCst};

use super::{OpKind, Steps, ThreadId, INVALID};

/// One size-computation epoch shared by every concurrent `compute()` that
/// finds it collecting.
///
/// Cells move from [`INVALID`] to a counter value exactly once through `add`
/// or `forward`, and afterwards only grow (through `forward`). The agreed
/// size is write-once.
#[derive(Debug)]
pub struct CountersSnapshot {
    cells: Box<[AtomicI64]>,
    collecting: AtomicBool,
    size: AtomicI64,
    #[cfg(feature = "instrument")]
    id: u64,
}

impl CountersSnapshot {
    /// A fresh, collecting snapshot for `max_threads` threads.
    pub fn new(max_threads: usize) -> Self {
        CountersSnapshot {
            cells: (0..max_threads * 2).map(|_| AtomicI64::new(INVALID)).collect(),
            collecting: AtomicBool::new(true),
            size: AtomicI64::new(INVALID),
            #[cfg(feature = "instrument")]
            id: crate::hooks::SNAPSHOT_IDS.fetch_add(1, std::sync::atomic::Ordering::Relaxed),
        }
    }

    /// Unique per instance when instrumentation is enabled, 0 otherwise.
    pub fn id(&self) -> u64 {
        #[cfg(feature = "instrument")]
        return self.id;
        #[cfg(not(feature = "instrument"))]
        0
    }

    #[inline]
    fn slot(&self, tid: ThreadId, kind: OpKind) -> &AtomicI64 {
        &self.cells[tid.index() * 2 + kind.index()]
    }

    pub fn max_threads(&self) -> usize {
        self.cells.len() / 2
    }

    pub fn is_collecting(&self) -> bool {
        self.collecting.load(SeqCst)
    }

    /// Ends the collection phase. Returns `true` for the call that actually
    /// flipped the flag.
    pub fn stop_collecting(&self) -> bool {
        self.collecting.swap(false, SeqCst)
    }

    /// The agreed size, once some caller has fixed it.
    pub fn size(&self) -> Option<i64> {
        match self.size.load(SeqCst) {
            INVALID => None,
            s => Some(s),
        }
    }

    /// The collected value for `(tid, kind)`, if any.
    pub fn cell(&self, tid: ThreadId, kind: OpKind) -> Option<i64> {
        match self.slot(tid, kind).load(SeqCst) {
            INVALID => None,
            v => Some(v),
        }
    }

    /// Collector path: fills the cell only if nothing is there yet.
    pub fn add(&self, tid: ThreadId, kind: OpKind, counter: i64) {
        debug_assert_ne!(counter, INVALID);
        let slot = self.slot(tid, kind);
        if slot.load(SeqCst) == INVALID {
            let _ = slot.compare_exchange(INVALID, counter, SeqCst, SeqCst);
        }
    }

    /// Updater path: raises the cell to at least `counter`. Returns the
    /// number of CAS attempts made, which `update_metadata`'s call order
    /// bounds by two.
    pub fn forward(&self, tid: ThreadId, kind: OpKind, counter: i64) -> u32 {
        debug_assert_ne!(counter, INVALID);
        let slot = self.slot(tid, kind);
        let mut seen = slot.load(SeqCst);
        let mut attempts = 0;
        while seen == INVALID || counter > seen {
            attempts += 1;
            match slot.compare_exchange(seen, counter, SeqCst, SeqCst) {
                Ok(_) => break,
                Err(witnessed) => seen = witnessed,
            }
        }
        attempts
    }

    /// Sum of insertion cells minus sum of deletion cells, agreed through a
    /// single CAS on the size field. Must only be called once collection
    /// has finished.
    pub fn compute_size(&self) -> i64 {
        self.compute_size_counted(&mut Steps::default())
    }

    pub(crate) fn compute_size_counted(&self, steps: &mut Steps) -> i64 {
        steps.tick();
        if let Some(s) = self.size() {
            return s;
        }
        let mut computed = 0i64;
        for pair in self.cells.chunks_exact(2) {
            let ins = pair[OpKind::Insert.index()].load(SeqCst);
            let del = pair[OpKind::Delete.index()].load(SeqCst);
            debug_assert!(ins != INVALID && del != INVALID, "compute_size before collection");
            computed += ins - del;
        }
        steps.add(self.cells.len() as u64);
        steps.tick();
        if let Some(s) = self.size() {
            return s;
        }
        steps.tick();
        match self.size.compare_exchange(INVALID, computed, SeqCst, SeqCst) {
            Ok(_) => computed,
            Err(witnessed) => witnessed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    const T0: ThreadId = ThreadId::new(0);
    const T1: ThreadId = ThreadId::new(1);

    fn filled(ins: &[i64], del: &[i64]) -> CountersSnapshot {
        let cs = CountersSnapshot::new(ins.len());
        for (i, (&a, &d)) in ins.iter().zip(del).enumerate() {
            cs.add(ThreadId::new(i), OpKind::Insert, a);
            cs.add(ThreadId::new(i), OpKind::Delete, d);
        }
        cs.stop_collecting();
        cs
    }

    #[test]
    fn fresh_instance_is_collecting_and_empty() {
        let cs = CountersSnapshot::new(2);
        assert!(cs.is_collecting());
        assert_eq!(cs.size(), None);
        assert_eq!(cs.cell(T1, OpKind::Delete), None);
        assert!(cs.stop_collecting());
        assert!(!cs.stop_collecting());
        assert!(!cs.is_collecting());
    }

    #[test]
    fn add_fills_only_invalid_cells() {
        let cs = CountersSnapshot::new(1);
        cs.add(T0, OpKind::Insert, 4);
        assert_eq!(cs.cell(T0, OpKind::Insert), Some(4));
        cs.add(T0, OpKind::Insert, 9);
        assert_eq!(cs.cell(T0, OpKind::Insert), Some(4));
    }

    #[test]
    fn racing_adds_leave_exactly_one_winner() {
        for _ in 0..200 {
            let cs = Arc::new(CountersSnapshot::new(1));
            let hs: Vec<_> = [3, 5]
                .into_iter()
                .map(|v| {
                    let cs = Arc::clone(&cs);
                    std::thread::spawn(move || cs.add(T0, OpKind::Insert, v))
                })
                .collect();
            hs.into_iter().for_each(|h| h.join().unwrap());
            assert!(matches!(cs.cell(T0, OpKind::Insert), Some(3 | 5)));
        }
    }

    #[test]
    fn forward_into_invalid_cell() {
        let cs = CountersSnapshot::new(1);
        assert_eq!(cs.forward(T0, OpKind::Delete, 5), 1);
        assert_eq!(cs.cell(T0, OpKind::Delete), Some(5));
    }

    #[test]
    fn forward_never_lowers_a_cell() {
        let cs = CountersSnapshot::new(1);
        cs.add(T0, OpKind::Insert, 7);
        assert_eq!(cs.forward(T0, OpKind::Insert, 5), 0);
        assert_eq!(cs.cell(T0, OpKind::Insert), Some(7));
    }

    #[test]
    fn forward_raises_a_smaller_cell() {
        let cs = CountersSnapshot::new(1);
        cs.add(T0, OpKind::Insert, 2);
        assert_eq!(cs.forward(T0, OpKind::Insert, 5), 1);
        assert_eq!(cs.cell(T0, OpKind::Insert), Some(5));
    }

    #[test]
    fn compute_size_is_inserts_minus_deletes() {
        assert_eq!(filled(&[2, 3], &[1, 0]).compute_size(), 4);
        assert_eq!(filled(&[0, 0, 0], &[0, 0, 0]).compute_size(), 0);
    }

    #[test]
    fn compute_size_adopts_a_fixed_value() {
        let cs = filled(&[8], &[0]);
        cs.size.store(7, SeqCst);
        assert_eq!(cs.compute_size(), 7);
        // A forward after the size was fixed changes nothing.
        cs.forward(T0, OpKind::Insert, 9);
        assert_eq!(cs.compute_size(), 7);
    }

    #[test]
    fn concurrent_compute_size_agrees() {
        for _ in 0..100 {
            let cs = Arc::new(filled(&[5, 1], &[2, 0]));
            let results: Vec<i64> = (0..4)
                .map(|i| {
                    let cs = Arc::clone(&cs);
                    std::thread::spawn(move || {
                        if i == 0 {
                            cs.forward(T1, OpKind::Insert, 3);
                        }
                        cs.compute_size()
                    })
                })
                .collect::<Vec<_>>()
                .into_iter()
                .map(|h| h.join().unwrap())
                .collect();
            assert!(results.windows(2).all(|w| w[0] == w[1]), "{results:?}");
            assert!(results[0] == 4 || results[0] == 6);
        }
    }
}
