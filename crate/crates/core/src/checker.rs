//! History checkers.
//!
//! Notation: a successful (`chg`) write that revised `ver` and produced
//! `ver'` is written `<ver|ver'>`. The order among successful writes used
//! by the coverability properties is their tag order. Reads and
//! unsuccessful writes both count as reads.
//!
//! Every check is a pure function of the history. Failures carry a reason
//! and a counterexample: a sub-history (whole operations) on which the
//! same check still fails, shrunk greedily.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use crate::error::Error;
use crate::history::{History, OpKind, Operation};
use crate::seqreg::SeqRegister;
use crate::types::{Tag, Value, TAG0};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Property {
    Atomicity,
    Validity,
    Consolidation,
    Continuity,
    Evolution,
    /// Depth of every version in the tree equals its `ts`.
    EvolutionWitness,
    StrongCoverability,
    /// Result of the exhaustive oracle.
    Linearizable,
}

impl Property {
    pub const WEAK_SUITE: [Property; 5] = [
        Property::Atomicity,
        Property::Validity,
        Property::Consolidation,
        Property::Continuity,
        Property::Evolution,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Property::Atomicity => "atomicity",
            Property::Validity => "validity",
            Property::Consolidation => "consolidation",
            Property::Continuity => "continuity",
            Property::Evolution => "evolution",
            Property::EvolutionWitness => "evolution-witness",
            Property::StrongCoverability => "strong",
            Property::Linearizable => "linearizable",
        }
    }

    pub fn parse(s: &str) -> Option<Property> {
        [
            Property::Atomicity,
            Property::Validity,
            Property::Consolidation,
            Property::Continuity,
            Property::Evolution,
            Property::EvolutionWitness,
            Property::StrongCoverability,
            Property::Linearizable,
        ]
        .into_iter()
        .find(|p| p.as_str() == s)
    }

    /// Properties whose checks assume validity.
    pub fn needs_validity(self) -> bool {
        !matches!(self, Property::Validity | Property::Linearizable)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Pass,
    Fail,
    /// Not evaluated because a prerequisite failed.
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub property: Property,
    pub status: Status,
    pub reason: Option<String>,
    pub counterexample: Option<History>,
}

impl Verdict {
    pub fn pass(property: Property) -> Self {
        Verdict {
            property,
            status: Status::Pass,
            reason: None,
            counterexample: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        write!(f, "{}: {s}", self.property.as_str())?;
        if let Some(r) = &self.reason {
            write!(f, " ({r})")?;
        }
        Ok(())
    }
}

/// Why a check failed, with the operations involved.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Failure {
    reason: String,
    ops: Vec<u64>,
}

type Outcome = Result<(), Failure>;

fn fail(reason: impl Into<String>, ops: impl IntoIterator<Item = u64>) -> Outcome {
    Err(Failure {
        reason: reason.into(),
        ops: ops.into_iter().collect(),
    })
}

// ---------------------------------------------------------------------------
// Views over a history
// ---------------------------------------------------------------------------

/// A successful write `<ver|tag>`.
#[derive(Clone, Debug)]
struct Chg<'a> {
    op: &'a Operation,
    ver: Tag,
    tag: Tag,
}

fn register_ops(h: &History) -> Result<Vec<Operation>, Error> {
    Ok(h.operations()?
        .into_iter()
        .filter(|o| o.op.is_register_op())
        .collect())
}

fn chg_writes(ops: &[Operation]) -> Vec<Chg<'_>> {
    ops.iter()
        .filter_map(|op| {
            let o = op.write_outcome()?;
            if !o.changed() {
                return None;
            }
            let (_, ver) = op.write_args()?;
            Some(Chg { op, ver, tag: o.tag })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Validity
// ---------------------------------------------------------------------------

fn validity(ops: &[Operation]) -> Outcome {
    let ws = chg_writes(ops);
    for w in &ws {
        if w.ver >= w.tag {
            return fail(
                format!("write {} revised {} but produced {} (not larger)", w.op.op_id, w.ver, w.tag),
                [w.op.op_id],
            );
        }
    }
    let mut by_tag: BTreeMap<Tag, &Chg> = BTreeMap::new();
    for w in &ws {
        if let Some(prev) = by_tag.insert(w.tag, w) {
            return fail(
                format!("writes {} and {} both produced {}", prev.op.op_id, w.op.op_id, w.tag),
                [prev.op.op_id, w.op.op_id],
            );
        }
    }
    // Each step strictly decreases the tag, so the walk terminates.
    for w in &ws {
        let mut chain = vec![w.op.op_id];
        let mut ver = w.ver;
        while ver != TAG0 {
            match by_tag.get(&ver) {
                Some(p) => {
                    chain.push(p.op.op_id);
                    ver = p.ver;
                }
                None => {
                    return fail(
                        format!("{} has no chain of writes back to {TAG0}: {ver} was never produced", w.tag),
                        chain,
                    )
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Weak coverability
// ---------------------------------------------------------------------------

fn consolidation(ops: &[Operation]) -> Outcome {
    let ws = chg_writes(ops);
    for a in &ws {
        for b in &ws {
            if !a.op.precedes(b.op) {
                continue;
            }
            if a.tag > b.ver {
                return fail(
                    format!(
                        "write {} produced {} before write {} revised the older {}",
                        a.op.op_id, a.tag, b.op.op_id, b.ver
                    ),
                    [a.op.op_id, b.op.op_id],
                );
            }
            if a.tag >= b.tag {
                return fail(
                    format!("write {} precedes write {} but is not earlier in tag order", a.op.op_id, b.op.op_id),
                    [a.op.op_id, b.op.op_id],
                );
            }
        }
    }
    Ok(())
}

fn continuity(ops: &[Operation]) -> Outcome {
    let ws = chg_writes(ops);
    let producers: BTreeMap<Tag, &Chg> = ws.iter().map(|w| (w.tag, w)).collect();
    for w in &ws {
        if w.ver == TAG0 {
            continue;
        }
        match producers.get(&w.ver) {
            Some(p) if p.tag < w.tag => {}
            Some(p) => {
                return fail(
                    format!(
                        "write {} revised {} whose producer {} is not earlier in tag order",
                        w.op.op_id, w.ver, p.op.op_id
                    ),
                    [w.op.op_id, p.op.op_id],
                )
            }
            None => {
                return fail(
                    format!("write {} revised {} which no write produced", w.op.op_id, w.ver),
                    [w.op.op_id],
                )
            }
        }
    }
    Ok(())
}

/// The versions and successful-write edges of a history.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VersionTree {
    nodes: Vec<Tag>,
    parent: BTreeMap<Tag, Tag>,
    children: BTreeMap<Tag, Vec<Tag>>,
    producer: BTreeMap<Tag, u64>,
}

impl VersionTree {
    fn from_writes(ws: &[Chg]) -> Result<Self, Failure> {
        let mut t = VersionTree {
            nodes: vec![TAG0],
            parent: BTreeMap::new(),
            children: BTreeMap::new(),
            producer: BTreeMap::new(),
        };
        for w in ws {
            if w.tag == TAG0 || t.parent.insert(w.tag, w.ver).is_some() {
                return Err(Failure {
                    reason: format!("{} produced more than once", w.tag),
                    ops: vec![w.op.op_id],
                });
            }
            t.producer.insert(w.tag, w.op.op_id);
            t.nodes.push(w.tag);
            t.children.entry(w.ver).or_default().push(w.tag);
        }
        t.nodes.sort();
        for c in t.children.values_mut() {
            c.sort();
        }
        for (&child, &par) in &t.parent {
            if par != TAG0 && !t.parent.contains_key(&par) {
                return Err(Failure {
                    reason: format!("{child} hangs off {par}, which is not a version"),
                    ops: vec![t.producer[&child]],
                });
            }
            if par >= child {
                return Err(Failure {
                    reason: format!("edge {par} -> {child} does not increase"),
                    ops: vec![t.producer[&child]],
                });
            }
        }
        Ok(t)
    }

    pub fn root(&self) -> Tag {
        TAG0
    }

    /// All versions, sorted.
    pub fn nodes(&self) -> &[Tag] {
        &self.nodes
    }

    /// `(parent, child)` pairs sorted by child.
    pub fn edges(&self) -> Vec<(Tag, Tag)> {
        self.parent.iter().map(|(&c, &p)| (p, c)).collect()
    }

    pub fn parent(&self, t: Tag) -> Option<Tag> {
        self.parent.get(&t).copied()
    }

    pub fn children(&self, t: Tag) -> &[Tag] {
        self.children.get(&t).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Op id of the write that produced `t`.
    pub fn producer(&self, t: Tag) -> Option<u64> {
        self.producer.get(&t).copied()
    }

    /// Distance from the root. Edges always increase the tag, so depths
    /// can be filled in tag order.
    pub fn depths(&self) -> BTreeMap<Tag, usize> {
        let mut d = BTreeMap::from([(TAG0, 0usize)]);
        for &n in &self.nodes[1..] {
            let p = self.parent[&n];
            let pd = d[&p];
            d.insert(n, pd + 1);
        }
        d
    }

    pub fn is_path(&self) -> bool {
        self.children.values().all(|c| c.len() <= 1)
    }
}

pub fn build_version_tree(h: &History) -> Result<VersionTree, Error> {
    let ops = register_ops(h)?;
    let ws = chg_writes(&ops);
    VersionTree::from_writes(&ws).map_err(|f| Error::MalformedHistory(format!("invalid history: {}", f.reason)))
}

fn tree_of(ops: &[Operation]) -> Result<VersionTree, Failure> {
    VersionTree::from_writes(&chg_writes(ops))
}

/// Every version at a smaller depth has a smaller tag than every version
/// at a greater depth.
fn evolution(ops: &[Operation]) -> Outcome {
    let t = tree_of(ops)?;
    let mut levels: BTreeMap<usize, (Tag, Tag)> = BTreeMap::new();
    for (tag, d) in t.depths() {
        let e = levels.entry(d).or_insert((tag, tag));
        e.0 = e.0.min(tag);
        e.1 = e.1.max(tag);
    }
    // Largest tag seen at any shallower level, compared against the
    // smallest tag at each level.
    let mut shallow_max: Option<(Tag, usize)> = None;
    for (&d, &(lo, hi)) in &levels {
        if let Some((m, md)) = shallow_max {
            if m >= lo {
                let ops = [t.producer(m), t.producer(lo)].into_iter().flatten();
                return fail(format!("{m} at depth {md} is not smaller than {lo} at depth {d}"), ops);
            }
        }
        if shallow_max.map_or(true, |(m, _)| hi > m) {
            shallow_max = Some((hi, d));
        }
    }
    Ok(())
}

fn evolution_witness(ops: &[Operation]) -> Outcome {
    let t = tree_of(ops)?;
    for (tag, d) in t.depths() {
        if tag.ts != d as u64 {
            return fail(
                format!("{tag} sits at depth {d}"),
                t.producer(tag),
            );
        }
    }
    Ok(())
}

fn strong(ops: &[Operation]) -> Outcome {
    validity(ops)?;
    let t = tree_of(ops)?;
    for n in t.nodes() {
        let c = t.children(*n);
        if c.len() > 1 {
            return fail(
                format!("{n} was revised by {} successful writes", c.len()),
                c.iter().filter_map(|x| t.producer(*x)),
            );
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Atomicity
// ---------------------------------------------------------------------------

/// What an operation contributes to a linearization.
#[derive(Clone, Debug)]
enum Role<'a> {
    Write { tag: Tag, value: &'a Value },
    Read { tag: Tag, value: &'a Value },
}

#[derive(Clone, Debug)]
struct Item<'a> {
    op_id: u64,
    invoke: u64,
    respond: u64,
    role: Role<'a>,
    /// Incomplete writes may be left out.
    optional: bool,
}

impl Item<'_> {
    fn tag(&self) -> Tag {
        match self.role {
            Role::Write { tag, .. } | Role::Read { tag, .. } => tag,
        }
    }
}

/// Complete ops become mandatory items. Incomplete writes become optional
/// items carrying the tag they would produce; incomplete reads impose
/// nothing and are dropped.
fn items(ops: &[Operation]) -> Vec<Item<'_>> {
    let mut out = Vec::new();
    for op in ops {
        match (op.op, op.is_complete()) {
            (OpKind::CvrWrite, true) => {
                let o = op.write_outcome().expect("complete write has an outcome");
                let role = if o.changed() {
                    Role::Write { tag: o.tag, value: &o.value }
                } else {
                    Role::Read { tag: o.tag, value: &o.value }
                };
                out.push(Item {
                    op_id: op.op_id,
                    invoke: op.invoke,
                    respond: op.respond.unwrap(),
                    role,
                    optional: false,
                });
            }
            (OpKind::CvrRead, true) => {
                let (value, tag) = op.observed().expect("complete read has a result");
                out.push(Item {
                    op_id: op.op_id,
                    invoke: op.invoke,
                    respond: op.respond.unwrap(),
                    role: Role::Read { tag, value },
                    optional: false,
                });
            }
            (OpKind::CvrWrite, false) => {
                let (value, ver) = op.write_args().expect("write has arguments");
                if let Ok(tag) = ver.successor(op.proc) {
                    out.push(Item {
                        op_id: op.op_id,
                        invoke: op.invoke,
                        respond: u64::MAX,
                        role: Role::Write { tag, value },
                        optional: true,
                    });
                }
            }
            _ => {}
        }
    }
    out
}

fn atomicity(ops: &[Operation], initial: &Value) -> Outcome {
    let all = items(ops);
    let mut writes: BTreeMap<Tag, &Item> = BTreeMap::new();
    for it in all.iter().filter(|i| !i.optional) {
        if let Role::Write { tag, .. } = it.role {
            if let Some(prev) = writes.insert(tag, it) {
                return fail(format!("A2: writes {} and {} share tag {tag}", prev.op_id, it.op_id), [prev.op_id, it.op_id]);
            }
            if tag == TAG0 {
                return fail(format!("A2: write {} produced the initial tag", it.op_id), [it.op_id]);
            }
        }
    }
    let observed: BTreeSet<Tag> = all
        .iter()
        .filter(|i| !i.optional && matches!(i.role, Role::Read { .. }))
        .map(Item::tag)
        .collect();
    // An incomplete write joins only if it is the sole explanation for an
    // observed tag; otherwise leaving it out never hurts.
    let mut chosen: Vec<&Item> = all.iter().filter(|i| !i.optional).collect();
    for it in all.iter().filter(|i| i.optional) {
        let t = it.tag();
        if observed.contains(&t) && !writes.contains_key(&t) {
            writes.insert(t, it);
            chosen.push(it);
        }
    }
    for it in &chosen {
        if let Role::Read { tag, value } = it.role {
            let ok = match writes.get(&tag) {
                Some(w) => matches!(w.role, Role::Write { value: wv, .. } if wv == value),
                None => tag == TAG0 && value == initial,
            };
            if !ok {
                let mut involved = vec![it.op_id];
                if let Some(w) = writes.get(&tag) {
                    involved.push(w.op_id);
                }
                return fail(
                    format!("A3: op {} returned {value} at {tag}, which no write stored", it.op_id),
                    involved,
                );
            }
        }
    }
    // Order: by tag, the write of a tag before its readers, readers by
    // response. The only freedom left is among readers of one tag.
    chosen.sort_by_key(|i| (i.tag(), matches!(i.role, Role::Read { .. }), i.respond, i.op_id));
    let mut suffix_min: Option<&Item> = None;
    for it in chosen.iter().rev() {
        if let Some(m) = suffix_min {
            if m.respond < it.invoke {
                return fail(
                    format!(
                        "A1: op {} ({}) finished before op {} ({}) began but must follow it",
                        m.op_id,
                        m.tag(),
                        it.op_id,
                        it.tag()
                    ),
                    [it.op_id, m.op_id],
                );
            }
        }
        if suffix_min.map_or(true, |m| it.respond < m.respond) {
            suffix_min = Some(it);
        }
    }
    Ok(())
}

/// Operation limit for [`brute_force_linearizable`].
pub const BRUTE_FORCE_LIMIT: usize = 8;

/// Exhaustive search for a legal sequential order. Writes take effect by
/// installing their tag (which must be new and larger than the current
/// one); reads must match the current state.
fn brute_force(ops: &[Operation], initial: &Value) -> Outcome {
    let all = items(ops);
    let n = all.len();
    // preds[i]: items that must come before i in real time.
    let preds: Vec<u32> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| all[j].respond < all[i].invoke)
                .fold(0u32, |m, j| m | (1 << j))
        })
        .collect();
    let mandatory: u32 = (0..n).filter(|&i| !all[i].optional).fold(0, |m, i| m | (1 << i));
    let mut dead: HashSet<(u32, u32, Tag)> = HashSet::new();

    fn go(
        all: &[Item],
        preds: &[u32],
        mandatory: u32,
        placed: u32,
        skipped: u32,
        reg: &SeqRegister,
        dead: &mut HashSet<(u32, u32, Tag)>,
    ) -> bool {
        if placed & mandatory == mandatory {
            return true;
        }
        let key = (placed, skipped, reg.state().tag);
        if dead.contains(&key) {
            return false;
        }
        let done = placed | skipped;
        for i in 0..all.len() {
            let bit = 1u32 << i;
            if done & bit != 0 || preds[i] & !done != 0 {
                continue;
            }
            let it = &all[i];
            let mut next = reg.clone();
            let ok = match it.role {
                Role::Write { tag, value } => next.install(value.clone(), tag),
                Role::Read { tag, value } => next.matches(value, tag),
            };
            if ok && go(all, preds, mandatory, placed | bit, skipped, &next, dead) {
                return true;
            }
            if it.optional && go(all, preds, mandatory, placed, skipped | bit, reg, dead) {
                return true;
            }
        }
        dead.insert(key);
        false
    }

    let reg = SeqRegister::new(initial.clone());
    if go(&all, &preds, mandatory, 0, 0, &reg, &mut dead) {
        Ok(())
    } else {
        fail(
            "no sequential order of the operations reproduces their results",
            all.iter().map(|i| i.op_id),
        )
    }
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

fn run_raw(p: Property, h: &History) -> Result<Outcome, Error> {
    let ops = register_ops(h)?;
    Ok(match p {
        Property::Atomicity => atomicity(&ops, &h.initial),
        Property::Validity => validity(&ops),
        Property::Consolidation => consolidation(&ops),
        Property::Continuity => continuity(&ops),
        Property::Evolution => evolution(&ops),
        Property::EvolutionWitness => evolution_witness(&ops),
        Property::StrongCoverability => strong(&ops),
        Property::Linearizable => {
            let n = items(&ops).len();
            if n > BRUTE_FORCE_LIMIT {
                return Err(Error::OracleLimit {
                    ops: n,
                    limit: BRUTE_FORCE_LIMIT,
                });
            }
            brute_force(&ops, &h.initial)
        }
    })
}

/// The reason with op ids and tags removed; failures with the same shape
/// are the same kind of violation.
fn shape(reason: &str) -> String {
    reason
        .chars()
        .filter(|c| !c.is_ascii_digit() && !matches!(c, '[' | ']' | ','))
        .collect()
}

/// Shrink to a small sub-history on which `p` still fails the same way.
fn minimize(p: Property, h: &History, f: &Failure) -> History {
    let want = shape(&f.reason);
    let hint = &f.ops;
    let fails = |c: &History| matches!(run_raw(p, c), Ok(Err(g)) if shape(&g.reason) == want);
    let all: BTreeSet<u64> = h.events.iter().map(|e| e.op_id).collect();
    let hinted: BTreeSet<u64> = hint.iter().copied().collect();
    let mut keep = if fails(&h.restrict(&hinted)) { hinted } else { all };
    for id in keep.clone() {
        let mut trial = keep.clone();
        trial.remove(&id);
        if fails(&h.restrict(&trial)) {
            keep = trial;
        }
    }
    h.restrict(&keep)
}

pub fn check(p: Property, h: &History) -> Result<Verdict, Error> {
    match run_raw(p, h)? {
        Ok(()) => Ok(Verdict::pass(p)),
        Err(f) => Ok(Verdict {
            property: p,
            status: Status::Fail,
            counterexample: Some(minimize(p, h, &f)),
            reason: Some(f.reason),
        }),
    }
}

pub fn check_atomicity(h: &History) -> Result<Verdict, Error> {
    check(Property::Atomicity, h)
}

pub fn brute_force_linearizable(h: &History) -> Result<Verdict, Error> {
    check(Property::Linearizable, h)
}

pub fn check_validity(h: &History) -> Result<Verdict, Error> {
    check(Property::Validity, h)
}

pub fn check_consolidation(h: &History) -> Result<Verdict, Error> {
    check(Property::Consolidation, h)
}

pub fn check_continuity(h: &History) -> Result<Verdict, Error> {
    check(Property::Continuity, h)
}

pub fn check_evolution(h: &History) -> Result<Verdict, Error> {
    check(Property::Evolution, h)
}

pub fn check_evolution_witness(h: &History) -> Result<Verdict, Error> {
    check(Property::EvolutionWitness, h)
}

pub fn check_strong(h: &History) -> Result<Verdict, Error> {
    check(Property::StrongCoverability, h)
}

/// Verdicts for `props`. Validity is evaluated first; when it fails, the
/// properties that assume it are reported as skipped.
pub fn report(h: &History, props: &[Property]) -> Result<Vec<Verdict>, Error> {
    let valid = if props.iter().any(|p| p.needs_validity() || *p == Property::Validity) {
        Some(check_validity(h)?)
    } else {
        None
    };
    let ok = valid.as_ref().map_or(true, Verdict::passed);
    props
        .iter()
        .map(|&p| {
            if p == Property::Validity {
                Ok(valid.clone().expect("validity evaluated"))
            } else if p.needs_validity() && !ok {
                Ok(Verdict {
                    property: p,
                    status: Status::Skipped,
                    reason: Some("validity failed".into()),
                    counterexample: None,
                })
            } else {
                check(p, h)
            }
        })
        .collect()
}

/// The standard suite: atomicity, validity and the three coverability
/// properties.
pub fn check_weak(h: &History) -> Result<Vec<Verdict>, Error> {
    report(h, &Property::WEAK_SUITE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::HistoryBuilder;
    use crate::types::Flag;

    fn t(ts: u64, w: u64) -> Tag {
        Tag::new(ts, w)
    }

    fn both(h: &History) -> (bool, bool) {
        (
            check_atomicity(h).unwrap().passed(),
            brute_force_linearizable(h).unwrap().passed(),
        )
    }

    #[test]
    fn sequential_write_read_passes() {
        let mut b = HistoryBuilder::new(Value::default());
        b.chg(1, 2, 1, "a", TAG0, t(1, 1));
        b.read(3, 4, 2, "a", t(1, 1));
        let h = b.build();
        assert_eq!(both(&h), (true, true));
        for v in check_weak(&h).unwrap() {
            assert!(v.passed(), "{v}");
        }
    }

    #[test]
    fn read_before_write_fails() {
        let mut b = HistoryBuilder::new(Value::default());
        b.read(1, 2, 2, "a", t(1, 1));
        b.chg(3, 4, 1, "a", TAG0, t(1, 1));
        let h = b.build();
        assert_eq!(both(&h), (false, false));
        let v = check_atomicity(&h).unwrap();
        assert!(v.reason.unwrap().starts_with("A1"));
        assert_eq!(v.counterexample.unwrap().events.len(), 4);
    }

    #[test]
    fn new_old_inversion_fails() {
        let mut b = HistoryBuilder::new(Value::default());
        b.chg(1, 10, 1, "a", TAG0, t(1, 1));
        b.read(2, 3, 2, "a", t(1, 1));
        b.read(4, 5, 3, "", TAG0);
        let h = b.build();
        assert_eq!(both(&h), (false, false));
        let ce = check_atomicity(&h).unwrap().counterexample.unwrap();
        assert_eq!(ce.operations().unwrap().len(), 3);
    }

    #[test]
    fn empty_and_unknown_tag() {
        let h = History::new(Value::default());
        assert_eq!(both(&h), (true, true));
        let mut b = HistoryBuilder::new(Value::default());
        b.read(1, 2, 1, "z", t(4, 4));
        assert_eq!(both(&b.build()), (false, false));
    }

    #[test]
    fn incomplete_write_completed_when_observed() {
        let mut b = HistoryBuilder::new(Value::default());
        b.invoke(1, 1, OpKind::CvrWrite, crate::history::Args::Write { value: Value::from("a"), ver: TAG0 });
        b.read(2, 3, 2, "a", t(1, 1));
        let h = b.build();
        assert_eq!(both(&h), (true, true));
        let mut b = HistoryBuilder::new(Value::default());
        b.invoke(1, 1, OpKind::CvrWrite, crate::history::Args::Write { value: Value::from("a"), ver: TAG0 });
        b.read(2, 3, 2, "", TAG0);
        assert_eq!(both(&b.build()), (true, true));
    }

    #[test]
    fn validity_bullets() {
        let mut b = HistoryBuilder::new(Value::default());
        b.chg(1, 4, 1, "a", TAG0, t(1, 1));
        b.chg(2, 3, 2, "b", TAG0, t(1, 1));
        let v = check_validity(&b.build()).unwrap();
        assert!(v.failed());
        assert!(v.reason.unwrap().contains("both produced"));

        let mut b = HistoryBuilder::new(Value::default());
        b.chg(1, 2, 1, "a", t(4, 1), t(5, 1));
        let v = check_validity(&b.build()).unwrap();
        assert!(v.reason.unwrap().contains("never produced"));

        let mut b = HistoryBuilder::new(Value::default());
        b.chg(1, 2, 1, "a", t(2, 1), t(1, 1));
        let v = check_validity(&b.build()).unwrap();
        assert!(v.reason.unwrap().contains("not larger"));
    }

    #[test]
    fn consolidation_detects_older_sibling_revision() {
        let mut b = HistoryBuilder::new(Value::default());
        b.chg(1, 2, 1, "a", TAG0, t(1, 1));
        b.chg(3, 4, 2, "b", TAG0, t(1, 2));
        let h = b.build();
        assert!(check_validity(&h).unwrap().passed());
        let v = check_consolidation(&h).unwrap();
        assert!(v.failed());
        assert_eq!(check_continuity(&h).unwrap().status, Status::Pass);
    }

    #[test]
    fn branching_and_tree() {
        let mut b = HistoryBuilder::new(Value::default());
        b.chg(1, 2, 1, "a", TAG0, t(1, 1));
        b.chg(3, 6, 1, "b", t(1, 1), t(2, 1));
        b.chg(4, 5, 2, "c", t(1, 1), t(2, 2));
        let h = b.build();
        assert!(check_continuity(&h).unwrap().passed());
        assert!(check_evolution(&h).unwrap().passed());
        assert!(check_evolution_witness(&h).unwrap().passed());
        assert!(check_strong(&h).unwrap().failed());
        let tree = build_version_tree(&h).unwrap();
        assert_eq!(tree.children(t(1, 1)), &[t(2, 1), t(2, 2)]);
        assert_eq!(tree.edges(), vec![(TAG0, t(1, 1)), (t(1, 1), t(2, 1)), (t(1, 1), t(2, 2))]);

        let empty = build_version_tree(&History::new(Value::default())).unwrap();
        assert_eq!(empty.nodes(), &[TAG0]);
        assert!(empty.is_path());
    }

    #[test]
    fn evolution_level_violation() {
        let mut b = HistoryBuilder::new(Value::default());
        b.chg(1, 2, 1, "a", TAG0, t(9, 1));
        b.chg(3, 4, 2, "b", TAG0, t(1, 2));
        b.chg(5, 6, 2, "c", t(1, 2), t(2, 2));
        b.chg(7, 8, 2, "d", t(2, 2), t(3, 2));
        let h = b.build();
        assert!(check_validity(&h).unwrap().passed());
        let v = check_evolution(&h).unwrap();
        assert!(v.failed(), "{v}");
        assert!(check_evolution_witness(&h).unwrap().failed());
    }

    #[test]
    fn report_skips_after_invalid() {
        let mut b = HistoryBuilder::new(Value::default());
        b.write(1, 2, 1, "a", t(3, 3), ("a", t(4, 1), Flag::Chg));
        let r = check_weak(&b.build()).unwrap();
        let by: BTreeMap<_, _> = r.iter().map(|v| (v.property, v.status)).collect();
        assert_eq!(by[&Property::Validity], Status::Fail);
        assert_eq!(by[&Property::Atomicity], Status::Skipped);
        assert_eq!(by[&Property::Evolution], Status::Skipped);
    }

    #[test]
    fn oracle_limit() {
        let mut b = HistoryBuilder::new(Value::default());
        for i in 0..9 {
            b.read(2 * i + 1, 2 * i + 2, 1, "", TAG0);
        }
        assert!(matches!(brute_force_linearizable(&b.build()), Err(Error::OracleLimit { .. })));
    }
}
