//! Sets without the size transformation.
//!
//! [`HarrisList`] and [`HarrisTable`] are the untransformed structures the
//! overhead benchmarks compare against. Their `size()` comes from one of
//! two non-linearizable recipes: walking the structure
//! ([`TraversalSizeSet`]) or a shared counter bumped after each structural
//! update ([`NaiveCounterSet`]). Both are kept on purpose; the harness uses
//! them to show the anomalies a linearizable size must rule out.

mod harris;
mod naive;

pub use harris::{HarrisList, HarrisTable};
pub use naive::{NaiveCounterSet, TraversalSizeSet};

use crate::error::Result;
use crate::set::Options;

/// Structural set operations with no size metadata at all.
pub trait Structural: Send + Sync + Sized {
    fn with_options(opts: &Options) -> Result<Self>;
    fn insert(&self, key: i64) -> bool;
    fn delete(&self, key: i64) -> bool;
    fn contains(&self, key: i64) -> bool;
    /// Unmarked nodes encountered by one walk.
    fn count(&self) -> usize;
}

pub type NaiveCounterListSet = NaiveCounterSet<HarrisList>;
pub type NaiveCounterHashSet = NaiveCounterSet<HarrisTable>;
pub type HarrisListSet = TraversalSizeSet<HarrisList>;
pub type HarrisHashSet = TraversalSizeSet<HarrisTable>;
