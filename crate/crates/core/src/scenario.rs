//! Scripted workloads.
//!
//! One step per line, `<client> <op> [args] [@delay]`, clients numbered
//! from 1 in the same order as the simulation's process ids:
//!
//! ```text
//! # writer 1 revises the initial version, then reads
//! 1 write a [0,0] @0
//! 1 read @5
//! 2 rmw append b pause=40
//! 3 edit line-1
//! ```
//!
//! Ops are `read`, `get`, `write <v> [ver]`, `revise <v> [ver]`,
//! `rmw append <s> | set <s> | incr [pause=<n>]`, `propose <v>` and
//! `edit <line>`. A missing `ver` means the largest tag the client has
//! witnessed. A missing `@delay` draws a random think time.

use crate::apps::ModifierFunction;
use crate::client::{Step, Task};
use crate::error::Error;
use crate::types::{Tag, Value};

pub type Workload = Vec<Vec<Step>>;

fn parse_tag(s: &str) -> Option<Tag> {
    let inner = s.strip_prefix('[')?.strip_suffix(']')?;
    let (a, b) = inner.split_once(',')?;
    Some(Tag::new(a.trim().parse().ok()?, b.trim().parse().ok()?))
}

fn parse_line(words: &[&str]) -> Result<(usize, Step), String> {
    let (mut words, delay) = match words.last() {
        Some(w) if w.starts_with('@') => {
            let d = w[1..].parse::<u64>().map_err(|_| format!("bad delay {w:?}"))?;
            (words[..words.len() - 1].to_vec(), Some(d))
        }
        _ => (words.to_vec(), None),
    };
    if words.len() < 2 {
        return Err("expected `<client> <op>`".into());
    }
    let client: usize = words[0].parse().map_err(|_| format!("bad client {:?}", words[0]))?;
    if client == 0 {
        return Err("clients are numbered from 1".into());
    }
    let op = words[1];
    words.drain(..2);
    let arity = |n: std::ops::RangeInclusive<usize>, words: &[&str]| {
        if n.contains(&words.len()) {
            Ok(())
        } else {
            Err(format!("`{op}` takes {}..={} arguments, got {}", n.start(), n.end(), words.len()))
        }
    };
    let ver = |w: Option<&&str>| -> Result<Option<Tag>, String> {
        w.map(|s| parse_tag(s).ok_or_else(|| format!("bad version {s:?}"))).transpose()
    };
    let task = match op {
        "read" => {
            arity(0..=0, &words)?;
            Task::Read
        }
        "get" => {
            arity(0..=0, &words)?;
            Task::Get
        }
        "write" | "revise" => {
            arity(1..=2, &words)?;
            let value = Value::from(words[0]);
            let ver = ver(words.get(1))?;
            if op == "write" {
                Task::Write { value, ver }
            } else {
                Task::Revise { value, ver }
            }
        }
        "propose" => {
            arity(1..=1, &words)?;
            Task::Propose {
                value: Value::from(words[0]),
            }
        }
        "edit" => {
            arity(1..=1, &words)?;
            Task::Edit {
                line: Value::from(words[0]),
            }
        }
        "rmw" => {
            let mut pause = 0;
            if let Some(p) = words.last().and_then(|w| w.strip_prefix("pause=")) {
                pause = p.parse().map_err(|_| format!("bad pause {p:?}"))?;
                words.pop();
            }
            let f = match words.as_slice() {
                ["append", s] => ModifierFunction::append(*s),
                ["set", s] => ModifierFunction::set(*s),
                ["incr"] => ModifierFunction::increment(),
                _ => return Err("rmw expects `append <s>`, `set <s>` or `incr`".into()),
            };
            Task::Rmw { f, pause }
        }
        other => return Err(format!("unknown op {other:?}")),
    };
    Ok((client, Step { task, delay }))
}

/// Parses a script for `clients` clients; clients without lines stay idle.
pub fn parse_workload(text: &str, clients: usize) -> Result<Workload, Error> {
    let mut out = vec![Vec::new(); clients];
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        let (client, step) = parse_line(&words).map_err(|msg| Error::Parse { line: i + 1, msg })?;
        if client > clients {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("client {client} out of range (have {clients})"),
            });
        }
        out[client - 1].push(step);
    }
    Ok(out)
}
