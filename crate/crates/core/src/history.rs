//! Operation histories and their line-oriented text format.
//!
//! A history file is a short header followed by one event per line:
//!
//! ```text
//! # coverable-history v1
//! # v0 x
//! 1 invoke 1 cvr-write 4294967297 x61;[0,0] -
//! 9 respond 1 cvr-write 4294967297 - x61;[1,1];chg
//! ```
//!
//! Fields are `seq kind proc op op_id args result`, separated by single
//! spaces. Integers are base-10, byte strings are `x` followed by lowercase
//! hex, tags are `[ts,wid]` and absent fields are `-`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::apps::RmwStatus;
use crate::error::Error;
use crate::types::{Flag, ProcessId, Tag, Value, WriteOutcome};

pub const HEADER: &str = "# coverable-history v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    Invoke,
    Respond,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpKind {
    CvrWrite,
    CvrRead,
    Rmw,
    Revise,
    Get,
    Propose,
}

impl OpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::CvrWrite => "cvr-write",
            OpKind::CvrRead => "cvr-read",
            OpKind::Rmw => "rmw",
            OpKind::Revise => "revise",
            OpKind::Get => "get",
            OpKind::Propose => "propose",
        }
    }

    /// Register-level operations are the ones the coverability checkers see.
    pub fn is_register_op(self) -> bool {
        matches!(self, OpKind::CvrWrite | OpKind::CvrRead)
    }
}

impl FromStr for OpKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "cvr-write" => OpKind::CvrWrite,
            "cvr-read" => OpKind::CvrRead,
            "rmw" => OpKind::Rmw,
            "revise" => OpKind::Revise,
            "get" => OpKind::Get,
            "propose" => OpKind::Propose,
            other => return Err(format!("unknown op {other:?}")),
        })
    }
}

/// Inputs of an operation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Args {
    None,
    /// `cvr-write` and `revise`.
    Write { value: Value, ver: Tag },
    /// `rmw`, identified by the label of its modifier function.
    Rmw { label: String },
    Propose { value: Value },
}

/// Outputs of an operation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Output {
    Write(WriteOutcome),
    /// `cvr-read` and `get`.
    Read { value: Value, tag: Tag },
    Rmw(RmwRecord),
    ReviseOk,
    ReviseRebase { value: Value, tag: Tag },
    Propose { value: Value },
}

/// What an `rmw` logged: its status, the value it returned, the value and
/// version its read observed, and the tag its write returned.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RmwRecord {
    pub status: RmwStatus,
    pub value: Value,
    pub oldval: Value,
    pub read_tag: Tag,
    pub write_tag: Tag,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HistoryEvent {
    pub seq: u64,
    pub kind: EventKind,
    pub proc: ProcessId,
    pub op: OpKind,
    pub op_id: u64,
    pub args: Args,
    pub result: Option<Output>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct History {
    /// Value of the register at `TAG0`.
    pub initial: Value,
    pub events: Vec<HistoryEvent>,
}

/// An invocation paired with its (optional) response.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Operation {
    pub op_id: u64,
    pub proc: ProcessId,
    pub op: OpKind,
    pub args: Args,
    pub invoke: u64,
    pub respond: Option<u64>,
    pub result: Option<Output>,
}

impl Operation {
    pub fn is_complete(&self) -> bool {
        self.respond.is_some()
    }

    /// Real-time precedence: `self` responded before `other` was invoked.
    pub fn precedes(&self, other: &Operation) -> bool {
        matches!(self.respond, Some(r) if r < other.invoke)
    }

    pub fn concurrent_with(&self, other: &Operation) -> bool {
        !self.precedes(other) && !other.precedes(self)
    }

    /// Response time, with incomplete operations treated as never returning.
    pub fn respond_or_max(&self) -> u64 {
        self.respond.unwrap_or(u64::MAX)
    }

    pub fn write_args(&self) -> Option<(&Value, Tag)> {
        match &self.args {
            Args::Write { value, ver } => Some((value, *ver)),
            _ => None,
        }
    }

    pub fn write_outcome(&self) -> Option<&WriteOutcome> {
        match &self.result {
            Some(Output::Write(o)) => Some(o),
            _ => None,
        }
    }

    /// The `(value, tag)` a read-like operation returned: a `cvr-read`,
    /// a `get`, or an unsuccessful `cvr-write`.
    pub fn observed(&self) -> Option<(&Value, Tag)> {
        match &self.result {
            Some(Output::Read { value, tag }) => Some((value, *tag)),
            Some(Output::Write(o)) if o.flag == Flag::Unchg => Some((&o.value, o.tag)),
            _ => None,
        }
    }
}

impl History {
    pub fn new(initial: Value) -> Self {
        History {
            initial,
            events: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Pair invocations with responses, validating well-formedness:
    /// strictly increasing `seq`, unique op ids, a response only after its
    /// matching invocation, and at most one pending operation per process.
    pub fn operations(&self) -> Result<Vec<Operation>, Error> {
        let mut ops: Vec<Operation> = Vec::new();
        let mut index: BTreeMap<u64, usize> = BTreeMap::new();
        let mut pending: BTreeMap<ProcessId, u64> = BTreeMap::new();
        let mut last_seq: Option<u64> = None;
        for e in &self.events {
            if let Some(prev) = last_seq {
                if e.seq <= prev {
                    return Err(Error::MalformedHistory(format!(
                        "seq {} does not increase (previous {prev})",
                        e.seq
                    )));
                }
            }
            last_seq = Some(e.seq);
            match e.kind {
                EventKind::Invoke => {
                    if index.contains_key(&e.op_id) {
                        return Err(Error::MalformedHistory(format!(
                            "op_id {} invoked twice",
                            e.op_id
                        )));
                    }
                    if let Some(p) = pending.get(&e.proc) {
                        return Err(Error::MalformedHistory(format!(
                            "process {} invokes op {} while op {p} is pending",
                            e.proc, e.op_id
                        )));
                    }
                    check_args(e.op, &e.args)
                        .map_err(|m| Error::MalformedHistory(format!("op {}: {m}", e.op_id)))?;
                    pending.insert(e.proc, e.op_id);
                    index.insert(e.op_id, ops.len());
                    ops.push(Operation {
                        op_id: e.op_id,
                        proc: e.proc,
                        op: e.op,
                        args: e.args.clone(),
                        invoke: e.seq,
                        respond: None,
                        result: None,
                    });
                }
                EventKind::Respond => {
                    let Some(&i) = index.get(&e.op_id) else {
                        return Err(Error::MalformedHistory(format!(
                            "response for op {} without invocation",
                            e.op_id
                        )));
                    };
                    let op = &mut ops[i];
                    if op.respond.is_some() || pending.get(&e.proc) != Some(&e.op_id) {
                        return Err(Error::MalformedHistory(format!(
                            "unexpected response for op {}",
                            e.op_id
                        )));
                    }
                    if op.proc != e.proc || op.op != e.op {
                        return Err(Error::MalformedHistory(format!(
                            "response for op {} does not match its invocation",
                            e.op_id
                        )));
                    }
                    let Some(result) = &e.result else {
                        return Err(Error::MalformedHistory(format!(
                            "response for op {} has no result",
                            e.op_id
                        )));
                    };
                    check_result(e.op, result)
                        .map_err(|m| Error::MalformedHistory(format!("op {}: {m}", e.op_id)))?;
                    op.respond = Some(e.seq);
                    op.result = Some(result.clone());
                    pending.remove(&e.proc);
                }
            }
        }
        Ok(ops)
    }

    /// The events belonging to the given operations, in history order.
    pub fn restrict(&self, op_ids: &BTreeSet<u64>) -> History {
        History {
            initial: self.initial.clone(),
            events: self
                .events
                .iter()
                .filter(|e| op_ids.contains(&e.op_id))
                .cloned()
                .collect(),
        }
    }

    /// Keep only register-level operations.
    pub fn register_ops(&self) -> History {
        History {
            initial: self.initial.clone(),
            events: self
                .events
                .iter()
                .filter(|e| e.op.is_register_op())
                .cloned()
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{HEADER}");
        let _ = writeln!(out, "# v0 {}", enc_bytes(&self.initial.0));
        for e in &self.events {
            let _ = writeln!(out, "{e}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<History, Error> {
        let mut h = History::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("v0 ") {
                    h.initial = Value(dec_bytes(v.trim()).map_err(|msg| Error::Parse {
                        line: line_no,
                        msg,
                    })?);
                }
                continue;
            }
            let e = parse_event(line).map_err(|msg| Error::Parse { line: line_no, msg })?;
            h.events.push(e);
        }
        Ok(h)
    }
}

fn check_args(op: OpKind, args: &Args) -> Result<(), String> {
    let ok = match op {
        OpKind::CvrWrite | OpKind::Revise => matches!(args, Args::Write { .. }),
        OpKind::CvrRead | OpKind::Get => matches!(args, Args::None),
        OpKind::Rmw => matches!(args, Args::Rmw { .. }),
        OpKind::Propose => matches!(args, Args::Propose { .. }),
    };
    if ok {
        Ok(())
    } else {
        Err(format!("arguments do not fit {}", op.as_str()))
    }
}

fn check_result(op: OpKind, out: &Output) -> Result<(), String> {
    let ok = match op {
        OpKind::CvrWrite => matches!(out, Output::Write(_)),
        OpKind::CvrRead | OpKind::Get => matches!(out, Output::Read { .. }),
        OpKind::Rmw => matches!(out, Output::Rmw(_)),
        OpKind::Revise => matches!(out, Output::ReviseOk | Output::ReviseRebase { .. }),
        OpKind::Propose => matches!(out, Output::Propose { .. }),
    };
    if ok {
        Ok(())
    } else {
        Err(format!("result does not fit {}", op.as_str()))
    }
}

fn enc_bytes(b: &[u8]) -> String {
    format!("x{}", hex::encode(b))
}

fn dec_bytes(s: &str) -> Result<Vec<u8>, String> {
    let h = s
        .strip_prefix('x')
        .ok_or_else(|| format!("byte string {s:?} must start with 'x'"))?;
    hex::decode(h).map_err(|e| format!("bad hex {s:?}: {e}"))
}

fn dec_tag(s: &str) -> Result<Tag, String> {
    let inner = s
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| format!("tag {s:?} must look like [ts,wid]"))?;
    let (ts, wid) = inner
        .split_once(',')
        .ok_or_else(|| format!("tag {s:?} must look like [ts,wid]"))?;
    let ts = ts.parse().map_err(|_| format!("bad ts in {s:?}"))?;
    let wid = wid.parse().map_err(|_| format!("bad wid in {s:?}"))?;
    Ok(Tag::new(ts, wid))
}

impl fmt::Display for Args {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Args::None => f.write_str("-"),
            Args::Write { value, ver } => write!(f, "{};{ver}", enc_bytes(&value.0)),
            Args::Rmw { label } => f.write_str(&enc_bytes(label.as_bytes())),
            Args::Propose { value } => f.write_str(&enc_bytes(&value.0)),
        }
    }
}

impl fmt::Display for Output {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Output::Write(o) => write!(f, "{};{};{}", enc_bytes(&o.value.0), o.tag, o.flag.as_str()),
            Output::Read { value, tag } => write!(f, "{};{tag}", enc_bytes(&value.0)),
            Output::Rmw(r) => write!(
                f,
                "{};{};{};{};{}",
                r.status.as_str(),
                enc_bytes(&r.value.0),
                enc_bytes(&r.oldval.0),
                r.read_tag,
                r.write_tag
            ),
            Output::ReviseOk => f.write_str("ok"),
            Output::ReviseRebase { value, tag } => write!(f, "{};{tag}", enc_bytes(&value.0)),
            Output::Propose { value } => f.write_str(&enc_bytes(&value.0)),
        }
    }
}

impl fmt::Display for HistoryEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            EventKind::Invoke => "invoke",
            EventKind::Respond => "respond",
        };
        let args = match self.kind {
            EventKind::Invoke => self.args.to_string(),
            EventKind::Respond => "-".to_string(),
        };
        let result = match &self.result {
            Some(r) => r.to_string(),
            None => "-".to_string(),
        };
        write!(
            f,
            "{} {kind} {} {} {} {args} {result}",
            self.seq,
            self.proc.0,
            self.op.as_str(),
            self.op_id
        )
    }
}

fn parse_args(op: OpKind, s: &str) -> Result<Args, String> {
    if s == "-" {
        return Ok(Args::None);
    }
    match op {
        OpKind::CvrWrite | OpKind::Revise => {
            let (v, t) = s.split_once(';').ok_or("write args must be value;tag")?;
            Ok(Args::Write {
                value: Value(dec_bytes(v)?),
                ver: dec_tag(t)?,
            })
        }
        OpKind::Rmw => {
            let label = String::from_utf8(dec_bytes(s)?).map_err(|_| "rmw label is not utf-8")?;
            Ok(Args::Rmw { label })
        }
        OpKind::Propose => Ok(Args::Propose {
            value: Value(dec_bytes(s)?),
        }),
        OpKind::CvrRead | OpKind::Get => Err(format!("{} takes no arguments", op.as_str())),
    }
}

fn parse_output(op: OpKind, s: &str) -> Result<Output, String> {
    let parts: Vec<&str> = s.split(';').collect();
    match (op, parts.as_slice()) {
        (OpKind::CvrWrite, [v, t, flag]) => {
            let flag = match *flag {
                "chg" => Flag::Chg,
                "unchg" => Flag::Unchg,
                other => return Err(format!("bad flag {other:?}")),
            };
            Ok(Output::Write(WriteOutcome {
                value: Value(dec_bytes(v)?),
                tag: dec_tag(t)?,
                flag,
            }))
        }
        (OpKind::CvrRead | OpKind::Get, [v, t]) => Ok(Output::Read {
            value: Value(dec_bytes(v)?),
            tag: dec_tag(t)?,
        }),
        (OpKind::Rmw, [status, v, old, rt, wt]) => {
            let status = match *status {
                "success" => RmwStatus::Success,
                "fail" => RmwStatus::Fail,
                other => return Err(format!("bad rmw status {other:?}")),
            };
            Ok(Output::Rmw(RmwRecord {
                status,
                value: Value(dec_bytes(v)?),
                oldval: Value(dec_bytes(old)?),
                read_tag: dec_tag(rt)?,
                write_tag: dec_tag(wt)?,
            }))
        }
        (OpKind::Revise, ["ok"]) => Ok(Output::ReviseOk),
        (OpKind::Revise, [v, t]) => Ok(Output::ReviseRebase {
            value: Value(dec_bytes(v)?),
            tag: dec_tag(t)?,
        }),
        (OpKind::Propose, [v]) => Ok(Output::Propose {
            value: Value(dec_bytes(v)?),
        }),
        _ => Err(format!("result {s:?} does not fit {}", op.as_str())),
    }
}

fn parse_event(line: &str) -> Result<HistoryEvent, String> {
    let fields: Vec<&str> = line.split(' ').collect();
    let [seq, kind, proc, op, op_id, args, result] = fields.as_slice() else {
        return Err(format!("expected 7 fields, found {}", fields.len()));
    };
    let seq: u64 = seq.parse().map_err(|_| format!("bad seq {seq:?}"))?;
    let kind = match *kind {
        "invoke" => EventKind::Invoke,
        "respond" => EventKind::Respond,
        other => return Err(format!("bad event kind {other:?}")),
    };
    let proc = ProcessId(proc.parse().map_err(|_| format!("bad proc {proc:?}"))?);
    let op: OpKind = op.parse()?;
    let op_id: u64 = op_id.parse().map_err(|_| format!("bad op_id {op_id:?}"))?;
    let (args, result) = match kind {
        EventKind::Invoke => {
            if *result != "-" {
                return Err("invoke events carry no result".into());
            }
            (parse_args(op, args)?, None)
        }
        EventKind::Respond => {
            if *args != "-" {
                return Err("respond events carry no arguments".into());
            }
            if *result == "-" {
                return Err("respond events need a result".into());
            }
            (Args::None, Some(parse_output(op, result)?))
        }
    };
    Ok(HistoryEvent {
        seq,
        kind,
        proc,
        op,
        op_id,
        args,
        result,
    })
}

/// Incrementally builds hand-written histories (fixtures, tests).
#[derive(Debug, Default)]
pub struct HistoryBuilder {
    history: History,
    next_op: u64,
}

impl HistoryBuilder {
    pub fn new(initial: Value) -> Self {
        HistoryBuilder {
            history: History::new(initial),
            next_op: 1,
        }
    }

    pub fn invoke(&mut self, seq: u64, proc: u64, op: OpKind, args: Args) -> u64 {
        let op_id = self.next_op;
        self.next_op += 1;
        self.history.events.push(HistoryEvent {
            seq,
            kind: EventKind::Invoke,
            proc: ProcessId(proc),
            op,
            op_id,
            args,
            result: None,
        });
        op_id
    }

    pub fn respond(&mut self, seq: u64, op_id: u64, result: Output) -> &mut Self {
        let inv = self
            .history
            .events
            .iter()
            .find(|e| e.op_id == op_id && e.kind == EventKind::Invoke)
            .expect("respond to unknown op")
            .clone();
        self.history.events.push(HistoryEvent {
            seq,
            kind: EventKind::Respond,
            proc: inv.proc,
            op: inv.op,
            op_id,
            args: Args::None,
            result: Some(result),
        });
        self
    }

    /// A complete `cvr-write` over `[inv, resp]`.
    pub fn write(
        &mut self,
        inv: u64,
        resp: u64,
        proc: u64,
        value: &str,
        ver: Tag,
        out: (&str, Tag, Flag),
    ) -> u64 {
        let id = self.invoke(
            inv,
            proc,
            OpKind::CvrWrite,
            Args::Write {
                value: Value::from(value),
                ver,
            },
        );
        self.respond(
            resp,
            id,
            Output::Write(WriteOutcome {
                value: Value::from(out.0),
                tag: out.1,
                flag: out.2,
            }),
        );
        id
    }

    /// A complete successful write of `value` revising `ver` to `tag`.
    pub fn chg(&mut self, inv: u64, resp: u64, proc: u64, value: &str, ver: Tag, tag: Tag) -> u64 {
        self.write(inv, resp, proc, value, ver, (value, tag, Flag::Chg))
    }

    /// A complete `cvr-read` returning `(value, tag)`.
    pub fn read(&mut self, inv: u64, resp: u64, proc: u64, value: &str, tag: Tag) -> u64 {
        let id = self.invoke(inv, proc, OpKind::CvrRead, Args::None);
        self.respond(
            resp,
            id,
            Output::Read {
                value: Value::from(value),
                tag,
            },
        );
        id
    }

    /// Events are sorted by `seq` on build, so fixtures can be written
    /// operation by operation.
    pub fn build(mut self) -> History {
        self.history.events.sort_by_key(|e| e.seq);
        self.history
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::TAG0;
    use proptest::prelude::*;

    #[test]
    fn text_shape() {
        let mut b = HistoryBuilder::new(Value::default());
        b.chg(1, 9, 1, "a", TAG0, Tag::new(1, 1));
        let h = b.build();
        let text = h.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], HEADER);
        assert_eq!(lines[1], "# v0 x");
        assert_eq!(lines[2], "1 invoke 1 cvr-write 1 x61;[0,0] -");
        assert_eq!(lines[3], "9 respond 1 cvr-write 1 - x61;[1,1];chg");
        assert_eq!(History::parse(&text).unwrap(), h);
    }

    #[test]
    fn malformed_inputs() {
        assert!(History::parse("1 invoke 1 cvr-write 1 x61;[0,0]").is_err());
        assert!(History::parse("1 invoke 1 nope 1 - -").is_err());
        assert!(History::parse("1 invoke 1 cvr-write 1 61;[0,0] -").is_err());
        // response without invoke
        let h = History::parse("3 respond 1 cvr-read 7 - x;[0,0]").unwrap();
        assert!(matches!(h.operations(), Err(Error::MalformedHistory(_))));
        // overlapping ops on one process
        let h = History::parse("1 invoke 1 cvr-read 1 - -\n2 invoke 1 cvr-read 2 - -").unwrap();
        assert!(h.operations().is_err());
        // decreasing seq
        let h = History::parse("5 invoke 1 cvr-read 1 - -\n2 respond 1 cvr-read 1 - x;[0,0]").unwrap();
        assert!(h.operations().is_err());
    }

    fn bytes() -> impl Strategy<Value = Value> {
        proptest::collection::vec(any::<u8>(), 0..4).prop_map(Value)
    }

    fn tag() -> impl Strategy<Value = Tag> {
        (0u64..100, 0u64..10).prop_map(|(a, b)| Tag::new(a, b))
    }

    fn op_and_io() -> impl Strategy<Value = (OpKind, Args, Output)> {
        prop_oneof![
            (bytes(), tag(), bytes(), tag(), any::<bool>()).prop_map(|(v, ver, ov, ot, c)| (
                OpKind::CvrWrite,
                Args::Write { value: v, ver },
                Output::Write(WriteOutcome { value: ov, tag: ot, flag: if c { Flag::Chg } else { Flag::Unchg } })
            )),
            (bytes(), tag()).prop_map(|(v, t)| (OpKind::CvrRead, Args::None, Output::Read { value: v, tag: t })),
            (bytes(), tag()).prop_map(|(v, t)| (OpKind::Get, Args::None, Output::Read { value: v, tag: t })),
            (bytes(), tag(), any::<bool>(), bytes(), tag()).prop_map(|(v, ver, ok, rv, rt)| (
                OpKind::Revise,
                Args::Write { value: v, ver },
                if ok { Output::ReviseOk } else { Output::ReviseRebase { value: rv, tag: rt } }
            )),
            (bytes(), bytes()).prop_map(|(v, d)| (OpKind::Propose, Args::Propose { value: v }, Output::Propose { value: d })),
            ("[a-z:0-9]{0,8}", any::<bool>(), bytes(), bytes(), tag(), tag()).prop_map(|(l, s, v, o, rt, wt)| (
                OpKind::Rmw,
                Args::Rmw { label: l },
                Output::Rmw(RmwRecord {
                    status: if s { RmwStatus::Success } else { RmwStatus::Fail },
                    value: v, oldval: o, read_tag: rt, write_tag: wt,
                })
            )),
        ]
    }

    proptest! {
        #[test]
        fn text_round_trip(init in bytes(), ops in proptest::collection::vec((op_and_io(), 1u64..5, any::<bool>()), 0..12)) {
            let mut h = History::new(init);
            let mut seq = 0;
            for (i, ((op, args, out), proc, complete)) in ops.into_iter().enumerate() {
                seq += 1;
                h.events.push(HistoryEvent { seq, kind: EventKind::Invoke, proc: ProcessId(proc), op, op_id: i as u64, args, result: None });
                if complete {
                    seq += 1;
                    h.events.push(HistoryEvent { seq, kind: EventKind::Respond, proc: ProcessId(proc), op, op_id: i as u64, args: Args::None, result: Some(out) });
                }
            }
            let parsed = History::parse(&h.to_text()).unwrap();
            prop_assert_eq!(parsed, h);
        }
    }
}
