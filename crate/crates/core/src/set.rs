use std::fmt;
use std::str::FromStr;

use crate::baseline::{HarrisHashSet, HarrisListSet, NaiveCounterHashSet, NaiveCounterListSet};
use crate::error::{Error, Result};
use crate::size::{Registration, ThreadId};
use crate::{HashSet, ListSet};

/// Smallest key a set accepts; `i64::MIN` is reserved.
pub const MIN_KEY: i64 = i64::MIN + 1;
/// Largest key a set accepts; `i64::MAX` is reserved.
pub const MAX_KEY: i64 = i64::MAX - 1;

#[inline]
pub(crate) fn check_key(key: i64) {
    assert!(
        (MIN_KEY..=MAX_KEY).contains(&key),
        "key {key} is reserved"
    );
}

/// How unlinked nodes and update records are freed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Reclamation {
    /// Epoch-based deferred destruction.
    #[default]
    Defer,
    /// Never free unlinked nodes while the set lives.
    Leak,
}

impl FromStr for Reclamation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "defer" => Ok(Reclamation::Defer),
            "leak" => Ok(Reclamation::Leak),
            _ => Err(Error::Config(format!("unknown reclamation mode `{s}`"))),
        }
    }
}

/// Construction parameters shared by every structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Options {
    pub max_threads: usize,
    /// Hash tables only: expected resident elements.
    pub expected_elements: usize,
    pub reclamation: Reclamation,
    pub backoff: bool,
}

impl Options {
    pub fn new(max_threads: usize) -> Self {
        Options {
            max_threads,
            expected_elements: 1024,
            reclamation: Reclamation::Defer,
            backoff: true,
        }
    }

    pub fn expected_elements(mut self, n: usize) -> Self {
        self.expected_elements = n;
        self
    }

    pub fn reclamation(mut self, r: Reclamation) -> Self {
        self.reclamation = r;
        self
    }

    pub fn backoff(mut self, on: bool) -> Self {
        self.backoff = on;
        self
    }
}

/// The set surface shared by the transformed structures and the baselines,
/// so the harness and benchmarks can drive any of them.
pub trait ConcurrentSet: Send + Sync {
    /// Claims a thread id for the calling thread.
    fn register(&self) -> Result<Registration<'_>>;
    fn insert(&self, tid: ThreadId, key: i64) -> bool;
    fn delete(&self, tid: ThreadId, key: i64) -> bool;
    fn contains(&self, tid: ThreadId, key: i64) -> bool;
    fn size(&self, tid: ThreadId) -> i64;
    fn max_threads(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StructureKind {
    /// Transformed linked list.
    List,
    /// Transformed hash table.
    Hash,
    /// Linked list with a shared counter bumped after each update.
    NaiveList,
    /// Hash table with a shared counter bumped after each update.
    NaiveHash,
    /// Untransformed linked list; size counts by traversal.
    HarrisList,
    /// Untransformed hash table; size counts by traversal.
    HarrisHash,
}

impl StructureKind {
    pub const ALL: [StructureKind; 6] = [
        StructureKind::List,
        StructureKind::Hash,
        StructureKind::NaiveList,
        StructureKind::NaiveHash,
        StructureKind::HarrisList,
        StructureKind::HarrisHash,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StructureKind::List => "list",
            StructureKind::Hash => "hash",
            StructureKind::NaiveList => "naive-list",
            StructureKind::NaiveHash => "naive-hash",
            StructureKind::HarrisList => "harris-list",
            StructureKind::HarrisHash => "harris-hash",
        }
    }

    /// Whether `size()` is linearizable for this structure.
    pub fn is_transformed(self) -> bool {
        matches!(self, StructureKind::List | StructureKind::Hash)
    }

    /// The untransformed structure a transformed one is measured against.
    pub fn baseline(self) -> Option<StructureKind> {
        match self {
            StructureKind::List => Some(StructureKind::HarrisList),
            StructureKind::Hash => Some(StructureKind::HarrisHash),
            _ => None,
        }
    }

    pub fn build(self, opts: Options) -> Result<Box<dyn ConcurrentSet>> {
        Ok(match self {
            StructureKind::List => Box::new(ListSet::with_options(opts)?),
            StructureKind::Hash => Box::new(HashSet::with_options(opts)?),
            StructureKind::NaiveList => Box::new(NaiveCounterListSet::with_options(opts)?),
            StructureKind::NaiveHash => Box::new(NaiveCounterHashSet::with_options(opts)?),
            StructureKind::HarrisList => Box::new(HarrisListSet::with_options(opts)?),
            StructureKind::HarrisHash => Box::new(HarrisHashSet::with_options(opts)?),
        })
    }
}

impl fmt::Display for StructureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StructureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StructureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown structure `{s}`")))
    }
}
