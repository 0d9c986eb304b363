//! Harris-style sorted linked list maintaining size metadata.
//!
//! Deletion publishes a `deleteInfo` record on the node (installed by CAS
//! from null, so exactly one delete owns the node), then sets the mark bit in
//! `next`, then updates the metadata, and only then unlinks. Any thread that
//! meets a marked node finishes the owner's metadata update before trying to
//! unlink it or treating the key as absent; any thread that meets an
//! unmarked node finishes the inserter's metadata update before treating the
//! key as present.

use std::sync::atomic::Ordering::{Relaxed, SeqCst};

use crossbeam_epoch::{self as epoch, Atomic, Guard, Owned, Shared};

use crate::error::Result;
use crate::hooks::{self, YieldPoint};
use crate::set::{check_key, ConcurrentSet, Options, Reclamation};
use crate::size::{OpKind, Registration, SizeCalculator, ThreadId, ThreadRegistry, UpdateInfo};

struct Node {
    key: i64,
    /// Tag bit 1 marks this node as logically deleted.
    next: Atomic<Node>,
    /// Cleared once the insertion is reflected in the metadata.
    insert_info: Atomic<UpdateInfo>,
    /// Set before the mark; immutable afterwards.
    delete_info: Atomic<UpdateInfo>,
}

impl Node {
    fn new(key: i64, info: UpdateInfo) -> Self {
        Node {
            key,
            next: Atomic::null(),
            insert_info: Atomic::new(info),
            delete_info: Atomic::null(),
        }
    }

    fn is_marked(&self, guard: &Guard) -> bool {
        self.next.load(SeqCst, guard).tag() == 1
    }
}

impl Drop for Node {
    fn drop(&mut self) {
        // SAFETY: a node is dropped only once no thread can reach it, and the
        // records it still points to were never handed to the collector.
        unsafe {
            let g = epoch::unprotected();
            for info in [&self.insert_info, &self.delete_info] {
                let p = info.load(Relaxed, g);
                if !p.is_null() {
                    drop(p.into_owned());
                }
            }
        }
    }
}

/// The list algorithm without its own calculator, so a hash table can run
/// many of them against one shared [`SizeCalculator`].
pub(crate) struct RawList {
    head: Atomic<Node>,
    reclamation: Reclamation,
}

impl RawList {
    pub(crate) fn new(reclamation: Reclamation) -> Self {
        RawList {
            head: Atomic::null(),
            reclamation,
        }
    }

    fn retire<T>(&self, p: Shared<'_, T>, guard: &Guard) {
        if self.reclamation == Reclamation::Defer {
            // SAFETY: callers pass pointers they just made unreachable.
            unsafe { guard.defer_destroy(p) };
        }
    }

    fn help_insert(&self, node: &Node, sc: &SizeCalculator, guard: &Guard) {
        let info = node.insert_info.load(SeqCst, guard);
        // SAFETY: records are retired only after being swapped out, and we are pinned.
        if let Some(i) = unsafe { info.as_ref() } {
            sc.update_metadata(i, OpKind::Insert);
            self.clear_insert_info(node, info, guard);
        }
    }

    fn clear_insert_info(&self, node: &Node, info: Shared<'_, UpdateInfo>, guard: &Guard) {
        if node
            .insert_info
            .compare_exchange(info, Shared::null(), SeqCst, SeqCst, guard)
            .is_ok()
        {
            self.retire(info, guard);
        }
    }

    fn help_delete(node: &Node, sc: &SizeCalculator, guard: &Guard) {
        let info = node.delete_info.load(SeqCst, guard);
        // SAFETY: delete_info lives as long as the node.
        let info = unsafe { info.as_ref() }.expect("marked node without delete record");
        sc.update_metadata(info, OpKind::Delete);
    }

    fn unlinked(&self, node: Shared<'_, Node>, sc: &SizeCalculator, guard: &Guard) {
        #[cfg(feature = "instrument")]
        {
            // SAFETY: still protected by `guard`.
            let n = unsafe { node.deref() };
            let info = unsafe { n.delete_info.load(SeqCst, guard).deref() };
            if sc.counter(info.tid(), OpKind::Delete) < info.counter() {
                hooks::UNLINK_EARLY.fetch_add(1, Relaxed);
            }
        }
        #[cfg(not(feature = "instrument"))]
        let _ = sc;
        self.retire(node, guard);
    }

    /// Returns `(pred, curr)` where `curr` is the first node with a key
    /// `>= key` (or null) and `pred` pointed at it, unlinking marked nodes
    /// on the way after helping their deletes reach the metadata.
    fn find<'g>(
        &'g self,
        key: i64,
        sc: &SizeCalculator,
        guard: &'g Guard,
    ) -> (&'g Atomic<Node>, Shared<'g, Node>) {
        'retry: loop {
            let mut pred = &self.head;
            let mut curr = pred.load(SeqCst, guard);
            // SAFETY: every node reached here was reachable while we were pinned.
            while let Some(c) = unsafe { curr.as_ref() } {
                let succ = c.next.load(SeqCst, guard);
                if succ.tag() == 1 {
                    Self::help_delete(c, sc, guard);
                    let succ = succ.with_tag(0);
                    if pred
                        .compare_exchange(curr, succ, SeqCst, SeqCst, guard)
                        .is_err()
                    {
                        continue 'retry;
                    }
                    self.unlinked(curr, sc, guard);
                    curr = succ;
                } else {
                    if c.key >= key {
                        break;
                    }
                    pred = &c.next;
                    curr = succ;
                }
            }
            return (pred, curr);
        }
    }

    pub(crate) fn insert(&self, tid: ThreadId, key: i64, sc: &SizeCalculator) -> bool {
        check_key(key);
        let guard = &epoch::pin();
        let mut pending: Option<Owned<Node>> = None;
        loop {
            let (pred, curr) = self.find(key, sc, guard);
            // SAFETY: protected by `guard`.
            if let Some(c) = unsafe { curr.as_ref() } {
                if c.key == key {
                    self.help_insert(c, sc, guard);
                    return false;
                }
            }
            let node = match pending.take() {
                Some(n) => n,
                None => {
                    let info = sc.create_update_info(tid, OpKind::Insert);
                    hooks::yield_point(YieldPoint::InsertInfoCreated);
                    Owned::new(Node::new(key, info))
                }
            };
            node.next.store(curr, Relaxed);
            match pred.compare_exchange(curr, node, SeqCst, SeqCst, guard) {
                Ok(linked) => {
                    hooks::yield_point(YieldPoint::InsertLinked);
                    // SAFETY: protected by `guard`.
                    let n = unsafe { linked.deref() };
                    let info = n.insert_info.load(SeqCst, guard);
                    // Null means a helper already finished and cleared it.
                    if let Some(i) = unsafe { info.as_ref() } {
                        sc.update_metadata(i, OpKind::Insert);
                        hooks::yield_point(YieldPoint::InsertMetadataUpdated);
                        self.clear_insert_info(n, info, guard);
                    }
                    return true;
                }
                Err(e) => pending = Some(e.new),
            }
        }
    }

    pub(crate) fn delete(&self, tid: ThreadId, key: i64, sc: &SizeCalculator) -> bool {
        check_key(key);
        let guard = &epoch::pin();
        let (pred, curr) = self.find(key, sc, guard);
        // SAFETY: protected by `guard`.
        let c = match unsafe { curr.as_ref() } {
            Some(c) if c.key == key => c,
            _ => return false,
        };
        if c.is_marked(guard) {
            Self::help_delete(c, sc, guard);
            return false;
        }
        self.help_insert(c, sc, guard);

        let info = sc.create_update_info(tid, OpKind::Delete);
        let owned = c
            .delete_info
            .compare_exchange(Shared::null(), Owned::new(info), SeqCst, SeqCst, guard);
        // Mark even when another delete owns the node: its record is in place,
        // so setting the bit on its behalf keeps us from waiting on it.
        if owned.is_ok() {
            hooks::yield_point(YieldPoint::DeleteInfoInstalled);
        }
        c.next.fetch_or(1, SeqCst, guard);
        if owned.is_err() {
            Self::help_delete(c, sc, guard);
            return false;
        }

        hooks::yield_point(YieldPoint::DeleteMarked);
        sc.update_metadata(&info, OpKind::Delete);
        hooks::yield_point(YieldPoint::DeleteMetadataUpdated);

        let succ = c.next.load(SeqCst, guard).with_tag(0);
        if pred
            .compare_exchange(curr, succ, SeqCst, SeqCst, guard)
            .is_ok()
        {
            self.unlinked(curr, sc, guard);
        } else {
            self.find(key, sc, guard);
        }
        hooks::yield_point(YieldPoint::DeleteUnlinked);
        true
    }

    pub(crate) fn contains(&self, key: i64, sc: &SizeCalculator) -> bool {
        check_key(key);
        let guard = &epoch::pin();
        let mut curr = self.head.load(SeqCst, guard);
        // SAFETY: protected by `guard`.
        while let Some(c) = unsafe { curr.as_ref() } {
            if c.key >= key {
                break;
            }
            curr = c.next.load(SeqCst, guard).with_tag(0);
        }
        match unsafe { curr.as_ref() } {
            Some(c) if c.key == key => {
                if c.is_marked(guard) {
                    Self::help_delete(c, sc, guard);
                    false
                } else {
                    self.help_insert(c, sc, guard);
                    true
                }
            }
            _ => false,
        }
    }

    /// Unmarked nodes, counted by walking. Exact only when quiescent.
    pub(crate) fn count(&self) -> usize {
        let guard = &epoch::pin();
        let mut n = 0;
        let mut curr = self.head.load(SeqCst, guard);
        // SAFETY: protected by `guard`.
        while let Some(c) = unsafe { curr.as_ref() } {
            let next = c.next.load(SeqCst, guard);
            if next.tag() == 0 {
                n += 1;
            }
            curr = next.with_tag(0);
        }
        n
    }

    /// Keys of unmarked nodes in list order. Exact only when quiescent.
    pub(crate) fn keys(&self) -> Vec<i64> {
        let guard = &epoch::pin();
        let mut out = Vec::new();
        let mut curr = self.head.load(SeqCst, guard);
        // SAFETY: protected by `guard`.
        while let Some(c) = unsafe { curr.as_ref() } {
            let next = c.next.load(SeqCst, guard);
            if next.tag() == 0 {
                out.push(c.key);
            }
            curr = next.with_tag(0);
        }
        out
    }
}

impl Drop for RawList {
    fn drop(&mut self) {
        // SAFETY: `&mut self`, no concurrent access remains.
        unsafe {
            let g = epoch::unprotected();
            let mut curr = self.head.load(Relaxed, g);
            while !curr.is_null() {
                let next = curr.deref().next.load(Relaxed, g).with_tag(0);
                drop(curr.into_owned());
                curr = next;
            }
        }
    }
}

/// Lock-free sorted set with a linearizable, wait-free [`size`](ListSet::size).
pub struct ListSet {
    list: RawList,
    sc: SizeCalculator,
    registry: ThreadRegistry,
}

impl ListSet {
    pub fn new(max_threads: usize) -> Result<Self> {
        Self::with_options(Options::new(max_threads))
    }

    pub fn with_options(opts: Options) -> Result<Self> {
        Ok(ListSet {
            list: RawList::new(opts.reclamation),
            sc: SizeCalculator::with_backoff(opts.max_threads, opts.backoff)?,
            registry: ThreadRegistry::new(opts.max_threads)?,
        })
    }

    pub fn register(&self) -> Result<Registration<'_>> {
        self.registry.register()
    }

    pub fn insert(&self, tid: ThreadId, key: i64) -> bool {
        self.list.insert(tid, key, &self.sc)
    }

    pub fn delete(&self, tid: ThreadId, key: i64) -> bool {
        self.list.delete(tid, key, &self.sc)
    }

    pub fn contains(&self, _tid: ThreadId, key: i64) -> bool {
        self.list.contains(key, &self.sc)
    }

    pub fn size(&self, tid: ThreadId) -> i64 {
        self.sc.compute(tid)
    }

    pub fn size_calculator(&self) -> &SizeCalculator {
        &self.sc
    }

    /// Keys currently linked and unmarked. Only meaningful when no other
    /// thread is operating on the set.
    pub fn keys(&self) -> Vec<i64> {
        self.list.keys()
    }

    pub fn count_by_traversal(&self) -> usize {
        self.list.count()
    }
}

impl ConcurrentSet for ListSet {
    fn register(&self) -> Result<Registration<'_>> {
        ListSet::register(self)
    }
    fn insert(&self, tid: ThreadId, key: i64) -> bool {
        ListSet::insert(self, tid, key)
    }
    fn delete(&self, tid: ThreadId, key: i64) -> bool {
        ListSet::delete(self, tid, key)
    }
    fn contains(&self, tid: ThreadId, key: i64) -> bool {
        ListSet::contains(self, tid, key)
    }
    fn size(&self, tid: ThreadId) -> i64 {
        ListSet::size(self, tid)
    }
    fn max_threads(&self) -> usize {
        self.registry.max_threads()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const T0: ThreadId = ThreadId::new(0);

    #[test]
    fn insert_contains_delete() {
        let s = ListSet::new(1).unwrap();
        assert_eq!(s.size(T0), 0);
        assert!(s.insert(T0, 5));
        assert_eq!(s.size(T0), 1);
        assert!(!s.insert(T0, 5));
        assert_eq!(s.size(T0), 1);
        assert!(s.contains(T0, 5));
        assert!(!s.contains(T0, 6));
        assert!(s.delete(T0, 5));
        assert_eq!(s.size(T0), 0);
        assert!(!s.delete(T0, 5));
        assert!(!s.contains(T0, 5));
    }

    #[test]
    fn keeps_keys_sorted() {
        let s = ListSet::new(1).unwrap();
        for k in [7, -3, 12, 0, 5, MIN_KEY_T, MAX_KEY_T] {
            assert!(s.insert(T0, k));
        }
        let keys = s.keys();
        assert!(keys.windows(2).all(|w| w[0] < w[1]), "{keys:?}");
        assert_eq!(s.size(T0), 7);
    }

    const MIN_KEY_T: i64 = crate::MIN_KEY;
    const MAX_KEY_T: i64 = crate::MAX_KEY;

    #[test]
    #[should_panic(expected = "reserved")]
    fn rejects_sentinel_keys() {
        let s = ListSet::new(1).unwrap();
        s.insert(T0, i64::MAX);
    }

    #[test]
    fn insert_clears_its_record_after_metadata() {
        let s = ListSet::new(1).unwrap();
        s.insert(T0, 1);
        let guard = epoch::pin();
        let node = unsafe { s.list.head.load(SeqCst, &guard).deref() };
        assert!(node.insert_info.load(SeqCst, &guard).is_null());
        assert_eq!(s.size_calculator().counter(T0, OpKind::Insert), 1);
    }

    #[test]
    fn matches_btreeset_sequentially() {
        for reclamation in [Reclamation::Defer, Reclamation::Leak] {
            let s = ListSet::with_options(Options::new(1).reclamation(reclamation)).unwrap();
            let mut oracle = BTreeSet::new();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for _ in 0..20_000 {
                let k = rng.random_range(0..64);
                match rng.random_range(0..4) {
                    0 => assert_eq!(s.insert(T0, k), oracle.insert(k)),
                    1 => assert_eq!(s.delete(T0, k), oracle.remove(&k)),
                    2 => assert_eq!(s.contains(T0, k), oracle.contains(&k)),
                    _ => assert_eq!(s.size(T0), oracle.len() as i64),
                }
            }
            assert_eq!(s.keys(), oracle.iter().copied().collect::<Vec<_>>());
        }
    }

    #[test]
    fn concurrent_disjoint_inserts_are_all_counted() {
        let s = ListSet::new(4).unwrap();
        std::thread::scope(|scope| {
            for i in 0..4 {
                let s = &s;
                scope.spawn(move || {
                    // Slots are reused once a thread finishes, so key ranges
                    // come from the spawn index.
                    let reg = s.register().unwrap();
                    let base = i * 1000;
                    for k in 0..200 {
                        assert!(s.insert(reg.id(), base + k));
                    }
                });
            }
        });
        assert_eq!(s.size(T0), 800);
        assert_eq!(s.count_by_traversal(), 800);
    }

    #[test]
    fn racing_deletes_of_one_key() {
        for _ in 0..200 {
            let s = ListSet::new(3).unwrap();
            s.insert(T0, 5);
            let wins: usize = std::thread::scope(|scope| {
                let hs: Vec<_> = (0..2)
                    .map(|_| {
                        scope.spawn(|| {
                            let reg = s.register().unwrap();
                            s.delete(reg.id(), 5) as usize
                        })
                    })
                    .collect();
                hs.into_iter().map(|h| h.join().unwrap()).sum()
            });
            assert_eq!(wins, 1);
            assert_eq!(s.size(T0), 0);
        }
    }
}
