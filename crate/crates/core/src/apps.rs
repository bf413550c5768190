//! Weak read-modify-write and file objects over any coverable register.
//!
//! The synchronous wrappers here drive a [`CoverableRegister`] directly.
//! Inside the simulator the same logic runs as client tasks (see
//! [`crate::client::Task`]); both share [`rmw_finish`] and
//! [`revise_finish`].

use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use crate::error::Error;
use crate::history::{History, OpKind, Operation, Output, RmwRecord};
use crate::types::{CoverableRegister, Flag, ProcessId, Tag, Value, WriteOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RmwStatus {
    Success,
    Fail,
}

impl RmwStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RmwStatus::Success => "success",
            RmwStatus::Fail => "fail",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RmwOutcome {
    pub value: Value,
    pub status: RmwStatus,
}

/// A deterministic `Value -> Value` map, identified by its label. Two
/// functions with the same label must compute the same mapping.
#[derive(Clone)]
pub struct ModifierFunction {
    label: String,
    f: Arc<dyn Fn(&Value) -> Value + Send + Sync>,
}

impl ModifierFunction {
    pub fn new(label: impl Into<String>, f: impl Fn(&Value) -> Value + Send + Sync + 'static) -> Self {
        ModifierFunction {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    /// Append `suffix` to the current value.
    pub fn append(suffix: impl Into<Vec<u8>>) -> Self {
        let suffix: Vec<u8> = suffix.into();
        let label = format!("append:{}", hex::encode(&suffix));
        ModifierFunction::new(label, move |v| {
            let mut out = v.0.clone();
            out.extend_from_slice(&suffix);
            Value(out)
        })
    }

    /// Replace the current value with `value`.
    pub fn set(value: impl Into<Vec<u8>>) -> Self {
        let value: Vec<u8> = value.into();
        let label = format!("set:{}", hex::encode(&value));
        ModifierFunction::new(label, move |_| Value(value.clone()))
    }

    /// Interpret the value as a decimal counter and add one. Non-numeric
    /// values count as zero.
    pub fn increment() -> Self {
        ModifierFunction::new("incr", |v| {
            let n: u64 = std::str::from_utf8(&v.0)
                .ok()
                .and_then(|s| s.parse().ok())
                .unwrap_or(0);
            Value::new((n + 1).to_string())
        })
    }

    /// Rebuild one of the built-in functions from its label.
    pub fn builtin(label: &str) -> Option<Self> {
        if label == "incr" {
            return Some(Self::increment());
        }
        let (kind, arg) = label.split_once(':')?;
        let bytes = hex::decode(arg).ok()?;
        match kind {
            "append" => Some(Self::append(bytes)),
            "set" => Some(Self::set(bytes)),
            _ => None,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn apply(&self, v: &Value) -> Value {
        (self.f)(v)
    }
}

impl fmt::Debug for ModifierFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ModifierFunction({})", self.label)
    }
}

impl PartialEq for ModifierFunction {
    fn eq(&self, other: &Self) -> bool {
        self.label == other.label
    }
}

impl Eq for ModifierFunction {}

impl Hash for ModifierFunction {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.label.hash(state);
    }
}

/// Map the result of an rmw's write phase to its outcome.
pub fn rmw_finish(o: &WriteOutcome) -> RmwOutcome {
    RmwOutcome {
        value: o.value.clone(),
        status: if o.flag == Flag::Chg {
            RmwStatus::Success
        } else {
            RmwStatus::Fail
        },
    }
}

pub fn rmw<R: CoverableRegister + ?Sized>(
    reg: &mut R,
    f: &ModifierFunction,
    proc: ProcessId,
) -> Result<RmwOutcome, Error> {
    let (oldval, lcver) = reg.cvr_read(proc)?;
    let newv = f.apply(&oldval);
    let o = reg.cvr_write(proc, newv, lcver)?;
    Ok(rmw_finish(&o))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ReviseOutcome {
    Ok,
    Rebase(Value, Tag),
}

impl ReviseOutcome {
    pub fn to_output(&self) -> Output {
        match self {
            ReviseOutcome::Ok => Output::ReviseOk,
            ReviseOutcome::Rebase(value, tag) => Output::ReviseRebase {
                value: value.clone(),
                tag: *tag,
            },
        }
    }
}

pub fn revise_finish(o: &WriteOutcome) -> ReviseOutcome {
    match o.flag {
        Flag::Chg => ReviseOutcome::Ok,
        Flag::Unchg => ReviseOutcome::Rebase(o.value.clone(), o.tag),
    }
}

pub fn file_revise<R: CoverableRegister + ?Sized>(
    reg: &mut R,
    v: Value,
    ver: Tag,
    proc: ProcessId,
) -> Result<ReviseOutcome, Error> {
    Ok(revise_finish(&reg.cvr_write(proc, v, ver)?))
}

pub fn file_get<R: CoverableRegister + ?Sized>(reg: &mut R, proc: ProcessId) -> Result<(Value, Tag), Error> {
    reg.cvr_read(proc)
}

// ---------------------------------------------------------------------------
// Property checks over application histories
// ---------------------------------------------------------------------------

/// Result of [`check_rmw`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RmwReport {
    /// Complete rmw ops grouped into maximal sets of overlapping operations.
    pub groups: Vec<Vec<u64>>,
    pub solo: usize,
    pub successes: usize,
    pub violations: Vec<String>,
}

impl RmwReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn rmw_record(op: &Operation) -> Option<&RmwRecord> {
    match &op.result {
        Some(Output::Rmw(r)) => Some(r),
        _ => None,
    }
}

/// Check the weak-rmw guarantees on `h`, which must contain only rmw
/// operations. Labels are resolved through `resolve` to recompute `f`.
///
/// Contention groups are the connected components of the interval-overlap
/// graph of the complete rmw ops.
pub fn check_rmw(
    h: &History,
    resolve: impl Fn(&str) -> Option<ModifierFunction>,
) -> Result<RmwReport, Error> {
    let ops = h.operations()?;
    let mut rep = RmwReport::default();
    let mut rmws: Vec<&Operation> = Vec::new();
    for op in &ops {
        if op.op != OpKind::Rmw {
            return Err(Error::MalformedHistory(format!(
                "op {} is {}, expected rmw",
                op.op_id,
                op.op.as_str()
            )));
        }
        if op.is_complete() {
            rmws.push(op);
        }
    }
    // Incomplete rmws can still overlap complete ones; they do not join
    // groups but make their neighbours non-solo.
    let incomplete: Vec<&Operation> = ops.iter().filter(|o| !o.is_complete()).collect();

    for op in &rmws {
        let rec = rmw_record(op).expect("complete rmw has a record");
        let label = match &op.args {
            crate::history::Args::Rmw { label } => label.as_str(),
            _ => "",
        };
        if rec.status == RmwStatus::Success {
            rep.successes += 1;
            match resolve(label) {
                Some(f) => {
                    let want = f.apply(&rec.oldval);
                    if want != rec.value {
                        rep.violations.push(format!(
                            "rmw {} succeeded with {} but f({}) = {}",
                            op.op_id, rec.value, rec.oldval, want
                        ));
                    }
                }
                None => rep
                    .violations
                    .push(format!("rmw {} uses unknown function {label:?}", op.op_id)),
            }
        }
    }

    rmws.sort_by_key(|o| o.invoke);
    let mut i = 0;
    while i < rmws.len() {
        let mut end = rmws[i].respond_or_max();
        let mut j = i + 1;
        while j < rmws.len() && rmws[j].invoke < end {
            end = end.max(rmws[j].respond_or_max());
            j += 1;
        }
        let group: Vec<&Operation> = rmws[i..j].to_vec();
        let start = group[0].invoke;
        let overlapped = incomplete.iter().any(|o| o.invoke < end && start < o.respond_or_max());
        if group.len() == 1 && !overlapped {
            rep.solo += 1;
            let rec = rmw_record(group[0]).unwrap();
            if rec.status != RmwStatus::Success {
                rep.violations.push(format!("solo rmw {} failed", group[0].op_id));
            }
        }
        let any = group
            .iter()
            .any(|o| rmw_record(o).unwrap().status == RmwStatus::Success);
        if !any && !overlapped {
            rep.violations.push(format!(
                "contention group {:?} has no successful rmw",
                group.iter().map(|o| o.op_id).collect::<Vec<_>>()
            ));
        }
        rep.groups.push(group.iter().map(|o| o.op_id).collect());
        i = j;
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqreg::SeqRegister;
    use crate::types::TAG0;

    #[test]
    fn solo_rmw_on_fresh_register() {
        let mut r = SeqRegister::new(Value::from(""));
        let o = rmw(&mut r, &ModifierFunction::append("x"), ProcessId(1)).unwrap();
        assert_eq!(o, RmwOutcome { value: Value::from("x"), status: RmwStatus::Success });
    }

    #[test]
    fn rmw_after_interfering_write_fails() {
        let mut r = SeqRegister::new(Value::from(""));
        let (old, ver) = r.cvr_read(ProcessId(1)).unwrap();
        r.cvr_write(ProcessId(2), Value::from("other"), ver).unwrap();
        let o = r.cvr_write(ProcessId(1), ModifierFunction::append("x").apply(&old), ver).unwrap();
        assert_eq!(rmw_finish(&o), RmwOutcome { value: Value::from("other"), status: RmwStatus::Fail });
    }

    #[test]
    fn revise_and_get() {
        let mut r = SeqRegister::new(Value::from("v0"));
        assert_eq!(file_get(&mut r, ProcessId(1)).unwrap(), (Value::from("v0"), TAG0));
        assert_eq!(file_revise(&mut r, Value::from("a"), TAG0, ProcessId(1)).unwrap(), ReviseOutcome::Ok);
        let got = file_get(&mut r, ProcessId(2)).unwrap();
        assert_eq!(got, (Value::from("a"), Tag::new(1, 1)));
        assert_eq!(
            file_revise(&mut r, Value::from("b"), TAG0, ProcessId(2)).unwrap(),
            ReviseOutcome::Rebase(Value::from("a"), Tag::new(1, 1))
        );
    }

    #[test]
    fn builtin_labels_round_trip() {
        for f in [ModifierFunction::append("ab"), ModifierFunction::set("z"), ModifierFunction::increment()] {
            let g = ModifierFunction::builtin(f.label()).unwrap();
            assert_eq!(f.apply(&Value::from("41")), g.apply(&Value::from("41")));
        }
        assert_eq!(ModifierFunction::increment().apply(&Value::from("41")), Value::from("42"));
        assert!(ModifierFunction::builtin("rot13:00").is_none());
    }
}
