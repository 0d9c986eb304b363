use std::collections::BTreeSet;

use super::{Op, OpResult};

/// Sequential reference: a sorted set whose size is its cardinality.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct SetModel {
    keys: BTreeSet<i64>,
}

impl SetModel {
    pub fn new(initial: impl IntoIterator<Item = i64>) -> Self {
        SetModel {
            keys: initial.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn contains(&self, key: i64) -> bool {
        self.keys.contains(&key)
    }

    /// Applies `op` and returns what a sequential set would answer.
    pub fn apply(&mut self, op: Op) -> OpResult {
        match op {
            Op::Insert(k) => OpResult::Bool(self.keys.insert(k)),
            Op::Delete(k) => OpResult::Bool(self.keys.remove(&k)),
            Op::Contains(k) => OpResult::Bool(self.keys.contains(&k)),
            Op::Size => OpResult::Size(self.keys.len() as i64),
        }
    }
}
