//! Domain types shared by every protocol: process identities, tags,
//! values and the outcome of a coverable write.

use std::fmt;

use crate::error::Error;

/// Identity of a process. `0` is reserved and never names a real writer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProcessId(pub u64);

impl ProcessId {
    pub const RESERVED: ProcessId = ProcessId(0);

    pub fn is_reserved(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A version identifier: a logical sequence number paired with the id of
/// the writer that produced it.
///
/// Field order matters: the derived `Ord` compares `ts` first and breaks
/// ties on `wid`, which is exactly the lexicographic tag order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag {
    pub ts: u64,
    pub wid: ProcessId,
}

/// The initial version of every register.
pub const TAG0: Tag = Tag {
    ts: 0,
    wid: ProcessId(0),
};

impl Tag {
    pub const fn new(ts: u64, wid: u64) -> Self {
        Tag {
            ts,
            wid: ProcessId(wid),
        }
    }

    /// The tag a writer `w` creates when it revises `self`: `(ts + 1, w)`.
    pub fn successor(self, w: ProcessId) -> Result<Tag, Error> {
        if w.is_reserved() {
            return Err(Error::ReservedWriter);
        }
        let ts = self.ts.checked_add(1).ok_or(Error::TagOverflow)?;
        Ok(Tag { ts, wid: w })
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.ts, self.wid.0)
    }
}

/// Lexicographic comparison of two tags.
pub fn tag_compare(a: Tag, b: Tag) -> std::cmp::Ordering {
    a.cmp(&b)
}

/// See [`Tag::successor`].
pub fn tag_successor(t: Tag, w: ProcessId) -> Result<Tag, Error> {
    t.successor(w)
}

/// An opaque register value.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Value(pub Vec<u8>);

impl Value {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        Value(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value(s.as_bytes().to_vec())
    }
}

impl From<Vec<u8>> for Value {
    fn from(b: Vec<u8>) -> Self {
        Value(b)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match std::str::from_utf8(&self.0) {
            Ok(s) if s.chars().all(|c| !c.is_control()) => write!(f, "{s:?}"),
            _ => write!(f, "x{}", hex::encode(&self.0)),
        }
    }
}

/// Whether a coverable write changed the register.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Flag {
    Chg,
    Unchg,
}

impl Flag {
    pub fn as_str(self) -> &'static str {
        match self {
            Flag::Chg => "chg",
            Flag::Unchg => "unchg",
        }
    }
}

/// Result of `cvr-write`: on `Chg` the pair that was installed, on `Unchg`
/// the newer pair that prevented the write.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WriteOutcome {
    pub value: Value,
    pub tag: Tag,
    pub flag: Flag,
}

impl WriteOutcome {
    pub fn changed(&self) -> bool {
        self.flag == Flag::Chg
    }
}

/// Value and version held by a register or replica.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct RegisterState {
    pub value: Value,
    pub tag: Tag,
}

impl RegisterState {
    pub fn initial(v0: Value) -> Self {
        RegisterState {
            value: v0,
            tag: TAG0,
        }
    }
}

/// Anything that behaves as a coverable register from a single caller's
/// point of view. Implemented by the sequential register, the simulated
/// quorum clusters and the consensus-backed register.
pub trait CoverableRegister {
    fn cvr_write(&mut self, proc: ProcessId, value: Value, ver: Tag)
        -> Result<WriteOutcome, Error>;
    fn cvr_read(&mut self, proc: ProcessId) -> Result<(Value, Tag), Error>;
}
