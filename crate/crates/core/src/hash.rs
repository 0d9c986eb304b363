//! Fixed-size table of transformed lists sharing one size calculator.

use crate::error::{Error, Result};
use crate::list::RawList;
use crate::set::{ConcurrentSet, Options};
use crate::size::{Registration, SizeCalculator, ThreadId, ThreadRegistry};

/// 2^64 / golden ratio.
const FIBONACCI: u64 = 0x9E37_79B9_7F4A_7C15;

/// Number of buckets for `expected` elements: the smallest power of two
/// that is at least `expected`.
pub(crate) fn table_size_for(expected: usize) -> Result<usize> {
    if expected == 0 {
        return Err(Error::InvalidCapacity);
    }
    expected
        .checked_next_power_of_two()
        .ok_or(Error::InvalidCapacity)
}

/// Fibonacci hashing: top `bits` bits of `key * 2^64/phi`.
#[inline]
pub(crate) fn bucket_index(key: i64, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        ((key as u64).wrapping_mul(FIBONACCI) >> (64 - bits)) as usize
    }
}

/// Lock-free hash set with a linearizable, wait-free [`size`](HashSet::size).
/// The table never resizes; `size()` reads only the shared metadata.
pub struct HashSet {
    buckets: Box<[RawList]>,
    bits: u32,
    sc: SizeCalculator,
    registry: ThreadRegistry,
}

impl HashSet {
    pub fn new(expected_elements: usize, max_threads: usize) -> Result<Self> {
        Self::with_options(Options::new(max_threads).expected_elements(expected_elements))
    }

    pub fn with_options(opts: Options) -> Result<Self> {
        let table = table_size_for(opts.expected_elements)?;
        Ok(HashSet {
            buckets: (0..table).map(|_| RawList::new(opts.reclamation)).collect(),
            bits: table.trailing_zeros(),
            sc: SizeCalculator::with_backoff(opts.max_threads, opts.backoff)?,
            registry: ThreadRegistry::new(opts.max_threads)?,
        })
    }

    pub fn table_size(&self) -> usize {
        self.buckets.len()
    }

    #[inline]
    fn bucket(&self, key: i64) -> &RawList {
        &self.buckets[bucket_index(key, self.bits)]
    }

    pub fn register(&self) -> Result<Registration<'_>> {
        self.registry.register()
    }

    pub fn insert(&self, tid: ThreadId, key: i64) -> bool {
        self.bucket(key).insert(tid, key, &self.sc)
    }

    pub fn delete(&self, tid: ThreadId, key: i64) -> bool {
        self.bucket(key).delete(tid, key, &self.sc)
    }

    pub fn contains(&self, _tid: ThreadId, key: i64) -> bool {
        self.bucket(key).contains(key, &self.sc)
    }

    pub fn size(&self, tid: ThreadId) -> i64 {
        self.sc.compute(tid)
    }

    pub fn size_calculator(&self) -> &SizeCalculator {
        &self.sc
    }

    pub fn count_by_traversal(&self) -> usize {
        self.buckets.iter().map(RawList::count).sum()
    }

    /// Which bucket `key` lives in.
    pub fn bucket_of(&self, key: i64) -> usize {
        bucket_index(key, self.bits)
    }
}

impl ConcurrentSet for HashSet {
    fn register(&self) -> Result<Registration<'_>> {
        HashSet::register(self)
    }
    fn insert(&self, tid: ThreadId, key: i64) -> bool {
        HashSet::insert(self, tid, key)
    }
    fn delete(&self, tid: ThreadId, key: i64) -> bool {
        HashSet::delete(self, tid, key)
    }
    fn contains(&self, tid: ThreadId, key: i64) -> bool {
        HashSet::contains(self, tid, key)
    }
    fn size(&self, tid: ThreadId) -> i64 {
        HashSet::size(self, tid)
    }
    fn max_threads(&self) -> usize {
        self.registry.max_threads()
    }
}
