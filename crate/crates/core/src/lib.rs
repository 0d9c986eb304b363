//! Lock-free sets with a linearizable, wait-free `size()`.
//!
//! Successful inserts and deletes bump per-thread metadata counters, and any
//! operation that runs into an unfinished update on the same key completes
//! that counter bump before acting on the key. `size()` snapshots the
//! counters through a shared collection epoch, so it costs `O(threads)`
//! regardless of how many elements the set holds.
//!
//! * [`size`]: the metadata counters and the size computation.
//! * [`ListSet`] and [`HashSet`]: a Harris-style sorted list and a fixed
//!   table of such lists, both maintaining the metadata.
//! * [`baseline`]: untransformed and naively counted sets, kept for
//!   comparison and as known-broken references.
//! * [`harness`]: history recording, a linearizability checker and a
//!   deterministic interleaving scheduler.
//! * [`workload`]: the throughput benchmark driver.
//!
//! ```
//! use sizeset::HashSet;
//!
//! let set = HashSet::new(1 << 16, 8)?;
//! let me = set.register()?;
//! set.insert(me.id(), 42);
//! assert!(set.contains(me.id(), 42));
//! assert_eq!(set.size(me.id()), 1);
//! # Ok::<(), sizeset::Error>(())
//! ```

pub mod baseline;
pub mod error;
pub mod harness;
pub mod hooks;
mod list;
mod hash;
mod set;
pub mod size;
pub mod workload;

pub use error::{Error, Result};
pub use hash::HashSet;
pub use list::ListSet;
pub use set::{ConcurrentSet, Options, Reclamation, StructureKind, MAX_KEY, MIN_KEY};
pub use size::{OpKind, SizeCalculator, ThreadId, UpdateInfo};
