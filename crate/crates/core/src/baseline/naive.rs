use std::sync::atomic::{AtomicI64, Ordering::SeqCst};

use super::Structural;
use crate::error::Result;
use crate::set::{ConcurrentSet, Options};
use crate::size::{Registration, ThreadId, ThreadRegistry};

/// A set with a shared size field adjusted *after* each structural update,
/// the way many concurrent libraries do it. `size()` just reads the field,
/// so it can disagree with the structure and can even go negative.
pub struct NaiveCounterSet<S> {
    inner: S,
    size: AtomicI64,
    registry: ThreadRegistry,
}

impl<S: Structural> NaiveCounterSet<S> {
    pub fn with_options(opts: Options) -> Result<Self> {
        Ok(NaiveCounterSet {
            inner: S::with_options(&opts)?,
            size: AtomicI64::new(0),
            registry: ThreadRegistry::new(opts.max_threads)?,
        })
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

impl<S: Structural> ConcurrentSet for NaiveCounterSet<S> {
    fn register(&self) -> Result<Registration<'_>> {
        self.registry.register()
    }

    fn insert(&self, _tid: ThreadId, key: i64) -> bool {
        let inserted = self.inner.insert(key);
        if inserted {
            self.size.fetch_add(1, SeqCst);
        }
        inserted
    }

    fn delete(&self, _tid: ThreadId, key: i64) -> bool {
        let deleted = self.inner.delete(key);
        if deleted {
            self.size.fetch_sub(1, SeqCst);
        }
        deleted
    }

    fn contains(&self, _tid: ThreadId, key: i64) -> bool {
        self.inner.contains(key)
    }

    fn size(&self, _tid: ThreadId) -> i64 {
        self.size.load(SeqCst)
    }

    fn max_threads(&self) -> usize {
        self.registry.max_threads()
    }
}

/// A set whose `size()` walks the structure and counts what it sees.
pub struct TraversalSizeSet<S> {
    inner: S,
    registry: ThreadRegistry,
}

impl<S: Structural> TraversalSizeSet<S> {
    pub fn with_options(opts: Options) -> Result<Self> {
        Ok(TraversalSizeSet {
            inner: S::with_options(&opts)?,
            registry: ThreadRegistry::new(opts.max_threads)?,
        })
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

impl<S: Structural> ConcurrentSet for TraversalSizeSet<S> {
    fn register(&self) -> Result<Registration<'_>> {
        self.registry.register()
    }

    fn insert(&self, _tid: ThreadId, key: i64) -> bool {
        self.inner.insert(key)
    }

    fn delete(&self, _tid: ThreadId, key: i64) -> bool {
        self.inner.delete(key)
    }

    fn contains(&self, _tid: ThreadId, key: i64) -> bool {
        self.inner.contains(key)
    }

    fn size(&self, _tid: ThreadId) -> i64 {
        self.inner.count() as i64
    }

    fn max_threads(&self) -> usize {
        self.registry.max_threads()
    }
}
