//! Operation histories and their line-oriented file format.
//!
//! ```text
//! # sizeset-history v1 structure=list workers=2 size_threads=1 key_range=4 seed=7 initial=1,3
//! 0 insert 3 false 1200 1530
//! 2 size - 2 1250 1900
//! ```
//!
//! One event per line: `tid op arg result invoke_ns response_ns`. `arg` is
//! `-` for `size`; `result` is `true`/`false` for insert, delete and
//! contains, and an integer for size.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::size::ThreadId;

const MAGIC: &str = "sizeset-history";
const VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Insert(i64),
    Delete(i64),
    Contains(i64),
    Size,
}

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Insert(_) => "insert",
            Op::Delete(_) => "delete",
            Op::Contains(_) => "contains",
            Op::Size => "size",
        }
    }

    pub fn key(self) -> Option<i64> {
        match self {
            Op::Insert(k) | Op::Delete(k) | Op::Contains(k) => Some(k),
            Op::Size => None,
        }
    }

    pub fn is_update(self) -> bool {
        matches!(self, Op::Insert(_) | Op::Delete(_))
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.key() {
            Some(k) => write!(f, "{}({k})", self.name()),
            None => write!(f, "{}()", self.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpResult {
    Bool(bool),
    Size(i64),
}

impl fmt::Display for OpResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpResult::Bool(b) => b.fmt(f),
            OpResult::Size(n) => n.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub thread: ThreadId,
    pub op: Op,
    pub result: OpResult,
    pub invoke_ns: u64,
    pub response_ns: u64,
}

impl Event {
    /// `self` finished before `other` started.
    pub fn precedes(&self, other: &Event) -> bool {
        self.response_ns < other.invoke_ns
    }
}

/// Run configuration carried in the history header.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Header {
    pub structure: String,
    pub workers: usize,
    pub size_threads: usize,
    pub key_range: i64,
    pub seed: u64,
    /// Keys present before the first event.
    pub initial: Vec<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct History {
    pub header: Header,
    pub events: Vec<Event>,
}

impl History {
    pub fn new(header: Header, mut events: Vec<Event>) -> Self {
        events.sort_by_key(|e| (e.invoke_ns, e.response_ns, e.thread));
        History { header, events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Checks the structural invariants: every event has
    /// `invoke < response`, and each thread's events do not overlap.
    pub fn validate(&self) -> Result<()> {
        let mut last: std::collections::HashMap<ThreadId, u64> = Default::default();
        for (i, e) in self.events.iter().enumerate() {
            if e.invoke_ns >= e.response_ns {
                return Err(Error::HistoryParse {
                    line: i + 2,
                    msg: "response does not follow invocation".into(),
                });
            }
            if let Some(&prev) = last.get(&e.thread) {
                if prev > e.invoke_ns {
                    return Err(Error::HistoryParse {
                        line: i + 2,
                        msg: format!("thread {} has overlapping operations", e.thread),
                    });
                }
            }
            last.insert(e.thread, e.response_ns);
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        let h = &self.header;
        let initial: Vec<String> = h.initial.iter().map(i64::to_string).collect();
        writeln!(
            w,
            "# {MAGIC} {VERSION} structure={} workers={} size_threads={} key_range={} seed={} initial={}",
            if h.structure.is_empty() { "-" } else { &h.structure },
            h.workers,
            h.size_threads,
            h.key_range,
            h.seed,
            initial.join(","),
        )?;
        for e in &self.events {
            let arg = e.op.key().map_or_else(|| "-".to_owned(), |k| k.to_string());
            writeln!(
                w,
                "{} {} {} {} {} {}",
                e.thread,
                e.op.name(),
                arg,
                e.result,
                e.invoke_ns,
                e.response_ns
            )?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = io::BufWriter::new(fs::File::create(path)?);
        self.write_to(f)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        fs::read_to_string(path)?.parse()
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut buf = Vec::new();
        self.write_to(&mut buf).map_err(|_| fmt::Error)?;
        f.write_str(&String::from_utf8_lossy(&buf))
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::HistoryParse {
        line,
        msg: msg.into(),
    }
}

fn parse_header(line: usize, text: &str) -> Result<Header> {
    let mut words = text.trim_start_matches('#').split_whitespace();
    if words.next() != Some(MAGIC) {
        return Err(parse_err(line, "missing history header"));
    }
    if words.next() != Some(VERSION) {
        return Err(parse_err(line, "unsupported history version"));
    }
    let mut h = Header::default();
    for word in words {
        let (k, v) = word
            .split_once('=')
            .ok_or_else(|| parse_err(line, format!("malformed header field `{word}`")))?;
        let bad = |_| parse_err(line, format!("bad value for `{k}`"));
        match k {
            "structure" => h.structure = if v == "-" { String::new() } else { v.to_owned() },
            "workers" => h.workers = v.parse().map_err(bad)?,
            "size_threads" => h.size_threads = v.parse().map_err(bad)?,
            "key_range" => h.key_range = v.parse().map_err(bad)?,
            "seed" => h.seed = v.parse().map_err(bad)?,
            "initial" => {
                h.initial = v
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(bad)?
            }
            // Newer writers may add fields.
            _ => {}
        }
    }
    Ok(h)
}

fn parse_event(line: usize, text: &str) -> Result<Event> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    let [tid, op, arg, result, invoke, response] = fields[..] else {
        return Err(parse_err(line, format!("expected 6 fields, found {}", fields.len())));
    };
    let num = |s: &str, what: &str| -> Result<i64> {
        s.parse().map_err(|_| parse_err(line, format!("bad {what} `{s}`")))
    };
    let key = || num(arg, "key");
    let op = match op {
        "insert" => Op::Insert(key()?),
        "delete" => Op::Delete(key()?),
        "contains" => Op::Contains(key()?),
        "size" => Op::Size,
        other => return Err(parse_err(line, format!("unknown operation `{other}`"))),
    };
    let result = match (op, result) {
        (Op::Size, r) => OpResult::Size(num(r, "size result")?),
        (_, "true") => OpResult::Bool(true),
        (_, "false") => OpResult::Bool(false),
        (_, r) => return Err(parse_err(line, format!("bad result `{r}`"))),
    };
    let time = |s: &str, what: &str| -> Result<u64> {
        s.parse().map_err(|_| parse_err(line, format!("bad {what} `{s}`")))
    };
    Ok(Event {
        thread: ThreadId::new(
            tid.parse()
                .map_err(|_| parse_err(line, format!("bad thread id `{tid}`")))?,
        ),
        op,
        result,
        invoke_ns: time(invoke, "invoke time")?,
        response_ns: time(response, "response time")?,
    })
}

impl FromStr for History {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (n, first) = lines.next().ok_or_else(|| parse_err(1, "empty history"))?;
        let header = parse_header(n, first)?;
        let mut events = Vec::new();
        for (n, line) in lines {
            if line.starts_with('#') {
                continue;
            }
            events.push(parse_event(n, line)?);
        }
        let h = History::new(header, events);
        h.validate()?;
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SAMPLE: &str = "\
# sizeset-history v1 structure=list workers=2 size_threads=1 key_range=4 seed=7 initial=1,3
0 insert 3 false 1200 1530
2 size - 2 1250 1900
1 contains 1 true 1300 1400
";

    #[test]
    fn parses_the_documented_format() {
        let h: History = SAMPLE.parse().unwrap();
        assert_eq!(h.header.structure, "list");
        assert_eq!(h.header.initial, vec![1, 3]);
        assert_eq!(h.len(), 3);
        assert_eq!(h.events[1].op, Op::Size);
        assert_eq!(h.events[1].result, OpResult::Size(2));
        assert_eq!(h.to_string(), SAMPLE);
    }

    #[test]
    fn rejects_malformed_lines() {
        let bad = [
            "",
            "# other v1\n",
            "# sizeset-history v9\n",
            "# sizeset-history v1\n0 insert x true 1 2\n",
            "# sizeset-history v1\n0 push 1 true 1 2\n",
            "# sizeset-history v1\n0 insert 1 maybe 1 2\n",
            "# sizeset-history v1\n0 insert 1 true 5 2\n",
            "# sizeset-history v1\n0 insert 1 true 1 5\n0 insert 2 true 4 6\n",
            "# sizeset-history v1\n0 insert 1 true 1\n",
        ];
        for text in bad {
            assert!(text.parse::<History>().is_err(), "accepted {text:?}");
        }
    }

    fn arb_event() -> impl Strategy<Value = (usize, Op, i64, bool, u64, u64)> {
        (
            0usize..4,
            prop_oneof![
                (-50i64..50).prop_map(Op::Insert),
                (-50i64..50).prop_map(Op::Delete),
                (-50i64..50).prop_map(Op::Contains),
                Just(Op::Size),
            ],
            -5i64..100,
            any::<bool>(),
            0u64..1_000,
            1u64..1_000,
        )
    }

    proptest! {
        #[test]
        fn text_round_trip(
            raw in prop::collection::vec(arb_event(), 0..40),
            initial in prop::collection::vec(-9i64..9, 0..5),
            seed in any::<u64>(),
        ) {
            // Lay the events out per thread so they never overlap.
            let mut clock = [0u64; 4];
            let events: Vec<Event> = raw.into_iter().map(|(t, op, n, b, gap, len)| {
                let invoke = clock[t] + gap + 1;
                let response = invoke + len;
                clock[t] = response;
                let result = if op == Op::Size { OpResult::Size(n) } else { OpResult::Bool(b) };
                Event { thread: ThreadId::new(t), op, result, invoke_ns: invoke, response_ns: response }
            }).collect();
            let h = History::new(
                Header { structure: "hash".into(), workers: 3, size_threads: 1, key_range: 50, seed, initial },
                events,
            );
            let back: History = h.to_string().parse().unwrap();
            prop_assert_eq!(back, h);
        }
    }
}
