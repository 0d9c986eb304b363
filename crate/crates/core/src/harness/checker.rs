//! Linearizability checking of set histories.
//!
//! A depth-first search in the style of Wing and Gong with Lowe's state
//! cache: operations are linearized one at a time in an order consistent
//! with real time, backtracking when a response is reached whose operation
//! could not be placed. Calls and returns sharing a timestamp are treated as
//! concurrent.

use std::collections::HashSet;
use std::fmt;

use super::{Event, History, Op, OpResult, SetModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckLimits {
    /// Longer histories are not searched.
    pub max_events: usize,
    /// Search steps across the whole check, including minimization.
    pub max_steps: u64,
}

impl Default for CheckLimits {
    fn default() -> Self {
        CheckLimits {
            max_events: 10_000,
            max_steps: 50_000_000,
        }
    }
}

/// A shortest failing prefix of a history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Every event invoked at or before this time belongs to the prefix.
    pub cut_ns: u64,
    /// Events that completed by `cut_ns`.
    pub events: Vec<Event>,
    /// Updates still in flight at `cut_ns`; they may or may not have
    /// taken effect.
    pub pending: Vec<Event>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "no linearization for the first {} events (cut at {} ns):",
            self.events.len(),
            self.cut_ns
        )?;
        for e in &self.events {
            writeln!(
                f,
                "  t{} {} -> {} [{}, {}]",
                e.thread, e.op, e.result, e.invoke_ns, e.response_ns
            )?;
        }
        for e in &self.pending {
            writeln!(f, "  t{} {} pending since {}", e.thread, e.op, e.invoke_ns)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckOutcome {
    Linearizable,
    Violation(Violation),
    Inconclusive { steps: u64, reason: String },
}

impl CheckOutcome {
    pub fn is_linearizable(&self) -> bool {
        matches!(self, CheckOutcome::Linearizable)
    }

    pub fn is_violation(&self) -> bool {
        matches!(self, CheckOutcome::Violation(_))
    }
}

pub fn check_linearizable(history: &History) -> CheckOutcome {
    check_with_limits(history, CheckLimits::default())
}

pub fn check_with_limits(history: &History, limits: CheckLimits) -> CheckOutcome {
    if history.events.len() > limits.max_events {
        return CheckOutcome::Inconclusive {
            steps: 0,
            reason: format!(
                "history has {} events, limit is {}",
                history.events.len(),
                limits.max_events
            ),
        };
    }
    let initial = SetModel::new(history.header.initial.iter().copied());
    let mut budget = Budget {
        used: 0,
        max: limits.max_steps,
    };
    let all: Vec<Pending> = history.events.iter().map(Pending::complete).collect();
    match search(&initial, &all, &mut budget) {
        Some(true) => return CheckOutcome::Linearizable,
        Some(false) => {}
        None => {
            return CheckOutcome::Inconclusive {
                steps: budget.used,
                reason: "step limit reached".into(),
            }
        }
    }

    // Non-linearizability of a prefix carries over to every longer prefix,
    // so the shortest failing cut can be found by bisection.
    let mut cuts: Vec<u64> = history.events.iter().map(|e| e.response_ns).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let (mut lo, mut hi) = (0, cuts.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        match search(&initial, &prefix(history, cuts[mid]), &mut budget) {
            Some(false) => hi = mid,
            Some(true) => lo = mid + 1,
            None => {
                lo = hi;
                break;
            }
        }
    }
    CheckOutcome::Violation(violation_at(history, cuts[lo]))
}

fn violation_at(history: &History, cut: u64) -> Violation {
    let mut v = Violation {
        cut_ns: cut,
        events: Vec::new(),
        pending: Vec::new(),
    };
    for e in history.events.iter().filter(|e| e.invoke_ns <= cut) {
        if e.response_ns <= cut {
            v.events.push(*e);
        } else if e.op.is_update() {
            v.pending.push(*e);
        }
    }
    v
}

/// An operation to place; `result` is `None` for an update still in flight.
#[derive(Debug, Clone, Copy)]
struct Pending {
    op: Op,
    result: Option<OpResult>,
    invoke: u64,
    response: Option<u64>,
}

impl Pending {
    fn complete(e: &Event) -> Self {
        Pending {
            op: e.op,
            result: Some(e.result),
            invoke: e.invoke_ns,
            response: Some(e.response_ns),
        }
    }
}

fn prefix(history: &History, cut: u64) -> Vec<Pending> {
    history
        .events
        .iter()
        .filter(|e| e.invoke_ns <= cut)
        .filter_map(|e| {
            if e.response_ns <= cut {
                Some(Pending::complete(e))
            } else if e.op.is_update() {
                Some(Pending {
                    result: None,
                    response: None,
                    ..Pending::complete(e)
                })
            } else {
                // An unfinished read has no observable effect.
                None
            }
        })
        .collect()
}

struct Budget {
    used: u64,
    max: u64,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    op: usize,
    /// For a call, the index of its return entry if it has one.
    ret: Option<usize>,
    is_call: bool,
}

/// Circular doubly linked entry list with O(1) removal and reinsertion.
struct Links {
    next: Vec<usize>,
    prev: Vec<usize>,
}

impl Links {
    fn new(n: usize) -> Self {
        // Index `n` is the head sentinel.
        Links {
            next: (0..=n).map(|i| (i + 1) % (n + 1)).collect(),
            prev: (0..=n).map(|i| (i + n) % (n + 1)).collect(),
        }
    }

    fn remove(&mut self, i: usize) {
        let (p, n) = (self.prev[i], self.next[i]);
        self.next[p] = n;
        self.prev[n] = p;
    }

    fn restore(&mut self, i: usize) {
        let (p, n) = (self.prev[i], self.next[i]);
        self.next[p] = i;
        self.prev[n] = i;
    }
}

struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }

    fn set(&mut self, i: usize, on: bool) {
        if on {
            self.0[i / 64] |= 1 << (i % 64);
        } else {
            self.0[i / 64] &= !(1 << (i % 64));
        }
    }
}

/// Returns `Some(linearizable)`, or `None` when the budget runs out.
fn search(initial: &SetModel, ops: &[Pending], budget: &mut Budget) -> Option<bool> {
    let mut entries = Vec::with_capacity(ops.len() * 2);
    let mut order: Vec<(u64, u8, usize)> = Vec::with_capacity(ops.len() * 2);
    for (i, p) in ops.iter().enumerate() {
        order.push((p.invoke, 0, i));
        if let Some(r) = p.response {
            order.push((r, 1, i));
        }
    }
    order.sort_unstable();
    let mut call_at = vec![usize::MAX; ops.len()];
    for &(_, kind, op) in &order {
        let idx = entries.len();
        if kind == 0 {
            call_at[op] = idx;
        } else {
            entries[call_at[op]] = Entry {
                ret: Some(idx),
                ..entries[call_at[op]]
            };
        }
        entries.push(Entry {
            op,
            ret: None,
            is_call: kind == 0,
        });
    }

    let head = entries.len();
    let mut links = Links::new(head);
    let mut returns_left = ops.iter().filter(|p| p.response.is_some()).count();
    let mut state = initial.clone();
    let mut placed = Bits::new(ops.len());
    let mut seen: HashSet<(Vec<u64>, SetModel)> = HashSet::new();
    let mut stack: Vec<(usize, SetModel)> = Vec::new();
    let mut cur = links.next[head];

    while returns_left > 0 {
        budget.used += 1;
        if budget.used > budget.max {
            return None;
        }
        let e = entries[cur];
        if cur != head && e.is_call {
            let p = ops[e.op];
            let mut next = state.clone();
            let got = next.apply(p.op);
            if p.result.is_none() || p.result == Some(got) {
                placed.set(e.op, true);
                if seen.insert((placed.0.clone(), next.clone())) {
                    stack.push((cur, std::mem::replace(&mut state, next)));
                    links.remove(cur);
                    if let Some(r) = e.ret {
                        links.remove(r);
                        returns_left -= 1;
                    }
                    cur = links.next[head];
                    continue;
                }
                placed.set(e.op, false);
            }
            cur = links.next[cur];
        } else {
            // A response whose call could not be placed: undo the last choice.
            let Some((call, prev)) = stack.pop() else {
                return Some(false);
            };
            let c = entries[call];
            state = prev;
            placed.set(c.op, false);
            if let Some(r) = c.ret {
                links.restore(r);
                returns_left += 1;
            }
            links.restore(call);
            cur = links.next[call];
        }
    }
    Some(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Header;
    use crate::size::ThreadId;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ev(t: usize, op: Op, result: OpResult, invoke: u64, response: u64) -> Event {
        Event {
            thread: ThreadId::new(t),
            op,
            result,
            invoke_ns: invoke,
            response_ns: response,
        }
    }

    fn hist(initial: Vec<i64>, events: Vec<Event>) -> History {
        History::new(
            Header {
                initial,
                ..Header::default()
            },
            events,
        )
    }

    use OpResult::{Bool, Size};

    #[test]
    fn empty_history_is_linearizable() {
        assert!(check_linearizable(&hist(vec![], vec![])).is_linearizable());
    }

    #[test]
    fn sequential_histories() {
        let ok = hist(
            vec![5],
            vec![
                ev(0, Op::Insert(1), Bool(true), 1, 2),
                ev(0, Op::Size, Size(2), 3, 4),
                ev(1, Op::Delete(5), Bool(true), 5, 6),
                ev(1, Op::Contains(5), Bool(false), 7, 8),
            ],
        );
        assert!(check_linearizable(&ok).is_linearizable());

        let bad = hist(
            vec![],
            vec![
                ev(0, Op::Insert(1), Bool(true), 1, 2),
                ev(1, Op::Size, Size(0), 3, 4),
            ],
        );
        let CheckOutcome::Violation(v) = check_linearizable(&bad) else {
            panic!("expected a violation");
        };
        assert_eq!(v.cut_ns, 4);
        assert_eq!(v.events.len(), 2);
    }

    #[test]
    fn overlapping_operations_may_reorder() {
        let h = hist(
            vec![],
            vec![
                ev(0, Op::Insert(1), Bool(true), 1, 10),
                ev(1, Op::Size, Size(1), 2, 3),
                ev(2, Op::Contains(1), Bool(false), 4, 5),
            ],
        );
        // size saw the insert but a later contains did not.
        assert!(check_linearizable(&h).is_violation());

        let h = hist(
            vec![],
            vec![
                ev(0, Op::Insert(1), Bool(true), 1, 10),
                ev(1, Op::Size, Size(0), 2, 3),
                ev(2, Op::Contains(1), Bool(true), 4, 5),
            ],
        );
        assert!(check_linearizable(&h).is_linearizable());
    }

    #[test]
    fn equal_timestamps_are_concurrent() {
        let h = hist(
            vec![],
            vec![
                ev(0, Op::Size, Size(1), 1, 5),
                ev(1, Op::Insert(3), Bool(true), 5, 9),
            ],
        );
        assert!(check_linearizable(&h).is_linearizable());
    }

    #[test]
    fn minimal_cut_keeps_in_flight_updates() {
        // The size at [3,4] needs the in-flight insert of 2 to have happened;
        // the violation only shows once contains(2) = false completes.
        let h = hist(
            vec![],
            vec![
                ev(0, Op::Insert(2), Bool(true), 1, 100),
                ev(1, Op::Size, Size(1), 3, 4),
                ev(1, Op::Contains(2), Bool(false), 5, 6),
                ev(2, Op::Insert(7), Bool(true), 20, 30),
            ],
        );
        let CheckOutcome::Violation(v) = check_linearizable(&h) else {
            panic!("expected a violation");
        };
        assert_eq!(v.cut_ns, 6);
        assert_eq!(v.events.len(), 2);
        assert_eq!(v.pending.len(), 1);
        assert_eq!(v.pending[0].op, Op::Insert(2));
    }

    #[test]
    fn limits_make_the_result_inconclusive() {
        let events = (0..20)
            .map(|i| ev(i, Op::Insert(i as i64), Bool(true), 1, 50))
            .collect();
        let h = hist(vec![], events);
        let tight = CheckLimits {
            max_events: 10,
            max_steps: 1,
        };
        assert!(matches!(
            check_with_limits(&h, tight),
            CheckOutcome::Inconclusive { .. }
        ));
        let tight = CheckLimits {
            max_events: 100,
            max_steps: 3,
        };
        assert!(matches!(
            check_with_limits(&h, tight),
            CheckOutcome::Inconclusive { .. }
        ));
    }

    /// Tries every real-time-respecting order.
    fn brute_force(h: &History) -> bool {
        fn go(events: &[Event], used: &mut Vec<bool>, model: &SetModel) -> bool {
            if used.iter().all(|&u| u) {
                return true;
            }
            for i in 0..events.len() {
                if used[i] {
                    continue;
                }
                let blocked = (0..events.len())
                    .any(|j| !used[j] && j != i && events[j].precedes(&events[i]));
                if blocked {
                    continue;
                }
                let mut m = model.clone();
                if m.apply(events[i].op) != events[i].result {
                    continue;
                }
                used[i] = true;
                if go(events, used, &m) {
                    return true;
                }
                used[i] = false;
            }
            false
        }
        let model = SetModel::new(h.header.initial.iter().copied());
        go(&h.events, &mut vec![false; h.events.len()], &model)
    }

    #[test]
    fn agrees_with_brute_force_on_small_histories() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mut yes, mut no) = (0, 0);
        for _ in 0..2_000 {
            let n = rng.random_range(1..=7);
            let mut clock = [0u64; 3];
            let events = (0..n)
                .map(|_| {
                    let t = rng.random_range(0..3);
                    let invoke = clock[t] + rng.random_range(1..4);
                    let response = invoke + rng.random_range(1..6);
                    clock[t] = response;
                    let k = rng.random_range(0..3);
                    let (op, result) = match rng.random_range(0..4) {
                        0 => (Op::Insert(k), Bool(rng.random())),
                        1 => (Op::Delete(k), Bool(rng.random())),
                        2 => (Op::Contains(k), Bool(rng.random())),
                        _ => (Op::Size, Size(rng.random_range(0..3))),
                    };
                    ev(t, op, result, invoke, response)
                })
                .collect();
            let initial = if rng.random() { vec![1] } else { vec![] };
            let h = hist(initial, events);
            let expected = brute_force(&h);
            let got = check_linearizable(&h);
            assert_eq!(got.is_linearizable(), expected, "{h}");
            assert_eq!(got.is_violation(), !expected);
            if expected {
                yes += 1;
            } else {
                no += 1;
            }
        }
        assert!(yes > 100 && no > 100, "degenerate sample: {yes}/{no}");
    }
}
