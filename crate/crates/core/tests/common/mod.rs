#![allow(dead_code)]

use sizeset::harness::{Event, History, Op, OpResult, Schedule};
use sizeset::hooks::YieldPoint;
use std::collections::BTreeSet;

/// Decides linearizability by trying every order that respects real time.
/// Exponential; for histories of a dozen events at most.
pub fn brute_force_linearizable(h: &History) -> bool {
    fn apply(set: &mut BTreeSet<i64>, op: Op) -> OpResult {
        match op {
            Op::Insert(k) => OpResult::Bool(set.insert(k)),
            Op::Delete(k) => OpResult::Bool(set.remove(&k)),
            Op::Contains(k) => OpResult::Bool(set.contains(&k)),
            Op::Size => OpResult::Size(set.len() as i64),
        }
    }
    fn go(events: &[Event], placed: &mut [bool], set: &BTreeSet<i64>) -> bool {
        if placed.iter().all(|&p| p) {
            return true;
        }
        for i in 0..events.len() {
            if placed[i] {
                continue;
            }
            let must_wait = (0..events.len())
                .any(|j| !placed[j] && events[j].response_ns < events[i].invoke_ns);
            if must_wait {
                continue;
            }
            let mut next = set.clone();
            if apply(&mut next, events[i].op) != events[i].result {
                continue;
            }
            placed[i] = true;
            if go(events, placed, &next) {
                return true;
            }
            placed[i] = false;
        }
        false
    }
    let set: BTreeSet<i64> = h.header.initial.iter().copied().collect();
    go(&h.events, &mut vec![false; h.events.len()], &set)
}

/// Thread 0 inserts 1 but stops right after linking; thread 1 then runs
/// `contains(1)` and `size()` to completion.
pub fn stale_size_schedule() -> Schedule {
    Schedule::new(vec![vec![Op::Insert(1)], vec![Op::Contains(1), Op::Size]])
        .at(0, YieldPoint::InsertLinked)
        .done(1)
        .done(1)
        .done(0)
}

/// Thread 0 links 1 and stops; thread 1 deletes 1 to completion; thread 2
/// then asks for the size.
pub fn negative_size_schedule() -> Schedule {
    Schedule::new(vec![vec![Op::Insert(1)], vec![Op::Delete(1)], vec![Op::Size]])
        .at(0, YieldPoint::InsertLinked)
        .done(1)
        .done(2)
        .done(0)
}

pub fn results(h: &History, thread: usize) -> Vec<OpResult> {
    h.events
        .iter()
        .filter(|e| e.thread.index() == thread)
        .map(|e| e.result)
        .collect()
}
