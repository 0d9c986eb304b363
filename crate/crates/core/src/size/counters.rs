use std::sync::atomic::{AtomicI64, Ordering::SeqCst};

use super::{OpKind, ThreadId};

/// One thread's insertion and deletion counters, alone in a 128-byte block
/// so neighbouring threads never share a line (or an adjacent-line prefetch).
#[repr(align(128))]
#[derive(Debug, Default)]
struct CounterPair([AtomicI64; 2]);

/// The per-thread insertion/deletion counters the size is derived from.
#[derive(Debug)]
pub struct MetadataCounters {
    pairs: Box<[CounterPair]>,
}

impl MetadataCounters {
    pub fn new(max_threads: usize) -> Self {
        MetadataCounters {
            pairs: (0..max_threads).map(|_| CounterPair::default()).collect(),
        }
    }

    pub fn max_threads(&self) -> usize {
        self.pairs.len()
    }

    #[inline]
    pub(crate) fn cell(&self, tid: ThreadId, kind: OpKind) -> &AtomicI64 {
        &self.pairs[tid.index()].0[kind.index()]
    }

    pub fn get(&self, tid: ThreadId, kind: OpKind) -> i64 {
        self.cell(tid, kind).load(SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_sit_in_separate_blocks() {
        assert_eq!(std::mem::align_of::<CounterPair>(), 128);
        assert_eq!(std::mem::size_of::<CounterPair>(), 128);
        let c = MetadataCounters::new(3);
        let a = c.cell(ThreadId::new(0), OpKind::Insert) as *const _ as usize;
        let b = c.cell(ThreadId::new(1), OpKind::Insert) as *const _ as usize;
        assert_eq!(b - a, 128);
    }

    #[test]
    fn start_at_zero() {
        let c = MetadataCounters::new(1);
        for kind in OpKind::BOTH {
            assert_eq!(c.get(ThreadId::new(0), kind), 0);
        }
    }
}
