//! Sequential versioned register: the transition relation of the
//! register type, executed one operation at a time.
//!
//! Two replay modes are offered. [`SeqRegister::write`] applies the
//! versioned transitions literally (a write succeeds only on the current
//! version). [`SeqRegister::install`] applies an already-decided
//! successful write, which is how atomicity is replayed for weakly
//! coverable histories where several writes may revise one version.

use std::collections::BTreeSet;

use crate::error::Error;
use crate::types::{
    CoverableRegister, Flag, ProcessId, RegisterState, Tag, Value, WriteOutcome, TAG0,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeqRegister {
    state: RegisterState,
    produced: BTreeSet<Tag>,
}

impl SeqRegister {
    pub fn new(v0: Value) -> Self {
        SeqRegister {
            state: RegisterState::initial(v0),
            produced: BTreeSet::from([TAG0]),
        }
    }

    pub fn state(&self) -> &RegisterState {
        &self.state
    }

    pub fn produced(&self) -> &BTreeSet<Tag> {
        &self.produced
    }

    /// `cvr-write(v, ver)` by writer `w`.
    pub fn write(&mut self, v: Value, ver: Tag, w: ProcessId) -> Result<WriteOutcome, Error> {
        if ver != self.state.tag {
            return Ok(WriteOutcome {
                value: self.state.value.clone(),
                tag: self.state.tag,
                flag: Flag::Unchg,
            });
        }
        let tag = ver.successor(w)?;
        self.state = RegisterState {
            value: v.clone(),
            tag,
        };
        self.produced.insert(tag);
        Ok(WriteOutcome {
            value: v,
            tag,
            flag: Flag::Chg,
        })
    }

    pub fn read(&self) -> (Value, Tag) {
        (self.state.value.clone(), self.state.tag)
    }

    /// Install the result of a successful write decided elsewhere. Accepted
    /// only when `tag` is larger than the current version and was never
    /// produced before.
    pub fn install(&mut self, v: Value, tag: Tag) -> bool {
        if tag <= self.state.tag || self.produced.contains(&tag) {
            return false;
        }
        self.state = RegisterState { value: v, tag };
        self.produced.insert(tag);
        true
    }

    /// True when `(v, tag)` is what a read would return right now.
    pub fn matches(&self, v: &Value, tag: Tag) -> bool {
        self.state.tag == tag && &self.state.value == v
    }
}

impl CoverableRegister for SeqRegister {
    fn cvr_write(&mut self, proc: ProcessId, value: Value, ver: Tag) -> Result<WriteOutcome, Error> {
        self.write(value, ver, proc)
    }

    fn cvr_read(&mut self, _proc: ProcessId) -> Result<(Value, Tag), Error> {
        Ok(self.read())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn v(s: &str) -> Value {
        Value::from(s)
    }

    #[test]
    fn write_examples() {
        let mut r = SeqRegister::new(Value::default());
        let o = r.write(v("a"), TAG0, ProcessId(1)).unwrap();
        assert_eq!(o, WriteOutcome { value: v("a"), tag: Tag::new(1, 1), flag: Flag::Chg });
        let o = r.write(v("b"), TAG0, ProcessId(2)).unwrap();
        assert_eq!(o, WriteOutcome { value: v("a"), tag: Tag::new(1, 1), flag: Flag::Unchg });
        let o = r.write(v("b"), Tag::new(1, 1), ProcessId(2)).unwrap();
        assert_eq!(o, WriteOutcome { value: v("b"), tag: Tag::new(2, 2), flag: Flag::Chg });
    }

    #[test]
    fn read_examples() {
        let mut r = SeqRegister::new(v("init"));
        assert_eq!(r.read(), (v("init"), TAG0));
        r.write(v("a"), TAG0, ProcessId(1)).unwrap();
        assert_eq!(r.read(), (v("a"), Tag::new(1, 1)));
        assert_eq!(r.read(), r.read());
    }

    #[test]
    fn reserved_writer_rejected() {
        let mut r = SeqRegister::new(Value::default());
        assert!(r.write(v("a"), TAG0, ProcessId(0)).is_err());
    }

    #[test]
    fn install_requires_growth() {
        let mut r = SeqRegister::new(Value::default());
        assert!(r.install(v("a"), Tag::new(1, 2)));
        assert!(!r.install(v("b"), Tag::new(1, 1)));
        assert!(!r.install(v("b"), Tag::new(1, 2)));
        assert!(r.install(v("c"), Tag::new(1, 3)));
        assert!(r.matches(&v("c"), Tag::new(1, 3)));
    }

    proptest! {
        // Sequential executions produce a single chain rooted at TAG0.
        #[test]
        fn sequential_runs_form_a_chain(ops in proptest::collection::vec((any::<bool>(), 1u64..4, any::<bool>()), 0..40)) {
            let mut r = SeqRegister::new(Value::default());
            let mut parent: BTreeMap<Tag, Tag> = BTreeMap::new();
            for (i, (is_write, w, use_current)) in ops.into_iter().enumerate() {
                if is_write {
                    let cur = r.read().1;
                    let ver = if use_current { cur } else { Tag::new(cur.ts + 7, 9) };
                    let o = r.write(Value::new(vec![i as u8]), ver, ProcessId(w)).unwrap();
                    if o.changed() {
                        prop_assert!(o.tag > ver);
                        parent.insert(o.tag, ver);
                    } else {
                        prop_assert_eq!(o.tag, cur);
                    }
                } else {
                    let _ = r.read();
                }
            }
            // Every produced tag except TAG0 has exactly one child at most
            // and walking parents from the head reaches TAG0 through all of them.
            let mut seen = 0;
            let mut cur = r.read().1;
            while cur != TAG0 {
                cur = parent[&cur];
                seen += 1;
            }
            prop_assert_eq!(seen, parent.len());
            prop_assert_eq!(r.produced().len(), parent.len() + 1);
        }
    }
}
