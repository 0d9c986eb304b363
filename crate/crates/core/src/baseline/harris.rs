use std::sync::atomic::Ordering::{Relaxed, SeqCst};

use crossbeam_epoch::{self as epoch, Atomic, Guard, Owned, Shared};

use super::Structural;
use crate::error::Result;
use crate::hash::{bucket_index, table_size_for};
use crate::hooks::{self, YieldPoint};
use crate::set::{check_key, Options, Reclamation};

struct Node {
    key: i64,
    next: Atomic<Node>,
}

/// Harris-Michael lock-free sorted list.
pub struct HarrisList {
    head: Atomic<Node>,
    reclamation: Reclamation,
}

impl HarrisList {
    pub fn new(reclamation: Reclamation) -> Self {
        HarrisList {
            head: Atomic::null(),
            reclamation,
        }
    }

    fn retire(&self, p: Shared<'_, Node>, guard: &Guard) {
        if self.reclamation == Reclamation::Defer {
            // SAFETY: `p` was just unlinked by the caller.
            unsafe { guard.defer_destroy(p) };
        }
    }

    fn find<'g>(&'g self, key: i64, guard: &'g Guard) -> (&'g Atomic<Node>, Shared<'g, Node>) {
        'retry: loop {
            let mut pred = &self.head;
            let mut curr = pred.load(SeqCst, guard);
            // SAFETY: protected by `guard`.
            while let Some(c) = unsafe { curr.as_ref() } {
                let succ = c.next.load(SeqCst, guard);
                if succ.tag() == 1 {
                    let succ = succ.with_tag(0);
                    if pred
                        .compare_exchange(curr, succ, SeqCst, SeqCst, guard)
                        .is_err()
                    {
                        continue 'retry;
                    }
                    self.retire(curr, guard);
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
}

impl Structural for HarrisList {
    fn with_options(opts: &Options) -> Result<Self> {
        Ok(HarrisList::new(opts.reclamation))
    }

    fn insert(&self, key: i64) -> bool {
        check_key(key);
        let guard = &epoch::pin();
        let mut node = Owned::new(Node {
            key,
            next: Atomic::null(),
        });
        loop {
            let (pred, curr) = self.find(key, guard);
            // SAFETY: protected by `guard`.
            if matches!(unsafe { curr.as_ref() }, Some(c) if c.key == key) {
                return false;
            }
            node.next.store(curr, Relaxed);
            match pred.compare_exchange(curr, node, SeqCst, SeqCst, guard) {
                Ok(_) => {
                    hooks::yield_point(YieldPoint::InsertLinked);
                    return true;
                }
                Err(e) => node = e.new,
            }
        }
    }

    fn delete(&self, key: i64) -> bool {
        check_key(key);
        let guard = &epoch::pin();
        loop {
            let (pred, curr) = self.find(key, guard);
            // SAFETY: protected by `guard`.
            let c = match unsafe { curr.as_ref() } {
                Some(c) if c.key == key => c,
                _ => return false,
            };
            let succ = c.next.load(SeqCst, guard);
            if succ.tag() == 1 {
                continue;
            }
            if c.next
                .compare_exchange(succ, succ.with_tag(1), SeqCst, SeqCst, guard)
                .is_err()
            {
                continue;
            }
            hooks::yield_point(YieldPoint::DeleteMarked);
            if pred
                .compare_exchange(curr, succ, SeqCst, SeqCst, guard)
                .is_ok()
            {
                self.retire(curr, guard);
            } else {
                self.find(key, guard);
            }
            hooks::yield_point(YieldPoint::DeleteUnlinked);
            return true;
        }
    }

    fn contains(&self, key: i64) -> bool {
        check_key(key);
        let guard = &epoch::pin();
        let mut curr = self.head.load(SeqCst, guard);
        // SAFETY: protected by `guard`.
        while let Some(c) = unsafe { curr.as_ref() } {
            let next = c.next.load(SeqCst, guard);
            if c.key >= key {
                return c.key == key && next.tag() == 0;
            }
            curr = next.with_tag(0);
        }
        false
    }

    fn count(&self) -> usize {
        let guard = &epoch::pin();
        let mut n = 0;
        let mut curr = self.head.load(SeqCst, guard);
        // SAFETY: protected by `guard`.
        while let Some(c) = unsafe { curr.as_ref() } {
            let next = c.next.load(SeqCst, guard);
            n += usize::from(next.tag() == 0);
            curr = next.with_tag(0);
        }
        n
    }
}

impl Drop for HarrisList {
    fn drop(&mut self) {
        // SAFETY: exclusive access.
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

/// Fixed table of [`HarrisList`] buckets, hashed like the transformed table.
pub struct HarrisTable {
    buckets: Box<[HarrisList]>,
    bits: u32,
}

impl HarrisTable {
    fn bucket(&self, key: i64) -> &HarrisList {
        &self.buckets[bucket_index(key, self.bits)]
    }

    pub fn table_size(&self) -> usize {
        self.buckets.len()
    }
}

impl Structural for HarrisTable {
    fn with_options(opts: &Options) -> Result<Self> {
        let table = table_size_for(opts.expected_elements)?;
        Ok(HarrisTable {
            buckets: (0..table).map(|_| HarrisList::new(opts.reclamation)).collect(),
            bits: table.trailing_zeros(),
        })
    }

    fn insert(&self, key: i64) -> bool {
        self.bucket(key).insert(key)
    }

    fn delete(&self, key: i64) -> bool {
        self.bucket(key).delete(key)
    }

    fn contains(&self, key: i64) -> bool {
        self.bucket(key).contains(key)
    }

    fn count(&self) -> usize {
        self.buckets.iter().map(HarrisList::count).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn check_against_oracle<S: Structural>(s: S) {
        let mut oracle = BTreeSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let k = rng.random_range(0..40);
            match rng.random_range(0..3) {
                0 => assert_eq!(s.insert(k), oracle.insert(k)),
                1 => assert_eq!(s.delete(k), oracle.remove(&k)),
                _ => assert_eq!(s.contains(k), oracle.contains(&k)),
            }
            assert_eq!(s.count(), oracle.len());
        }
    }

    #[test]
    fn list_matches_btreeset() {
        check_against_oracle(HarrisList::new(Reclamation::Defer));
        check_against_oracle(HarrisList::new(Reclamation::Leak));
    }

    #[test]
    fn table_matches_btreeset() {
        check_against_oracle(HarrisTable::with_options(&Options::new(1).expected_elements(16)).unwrap());
    }
}
