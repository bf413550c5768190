//! Consensus and strongly coverable registers, each built from the other.
//!
//! [`propose_value`] decides by revising the initial version: only one
//! write can succeed on it, and every other proposer learns the winner's
//! value from its `unchg` outcome.
//!
//! In the other direction, a [`ConsensusOracle`] runs one instance per
//! version. A write proposes `<v, successor(ver)>` on the instance of
//! `ver`; readers and losing writers walk decided instances forward from
//! their local cursor until they reach an undecided one.

use std::collections::{BTreeMap, BTreeSet};

use crate::client::{run_workload, Cluster, Driver, Proc, RegOp, RegResult, RegisterClient, Server, SimRun, Step, Task};
use crate::codec::{Dec, Enc};
use crate::error::Error;
use crate::history::{History, OpKind, Output};
use crate::simnet::{random_crashes, Effects, Sim, SimConfig, Wire};
use crate::types::{CoverableRegister, Flag, ProcessId, Tag, Value, WriteOutcome, TAG0};
use crate::vmwabd::{aux_rng, crash_horizon};

/// A value together with the version it creates.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Proposal {
    pub val: Value,
    pub ver: Tag,
}

/// `successor(ver)` stamped with the caller.
pub fn generate_version(ver: Tag, proc: ProcessId) -> Result<Tag, Error> {
    ver.successor(proc)
}

/// One consensus instance per version; each decides at most once, on the
/// first real proposal it receives.
///
/// Instances are open only for the initial version and versions some
/// instance has decided. A proposal on any other version would create a
/// version with no history behind it, so it is answered like a probe.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct ConsensusOracle {
    decided: BTreeMap<Tag, Proposal>,
    open: BTreeSet<Tag>,
}

impl ConsensusOracle {
    pub fn new() -> Self {
        ConsensusOracle {
            decided: BTreeMap::new(),
            open: BTreeSet::from([TAG0]),
        }
    }

    /// Propose on instance `ver`; `None` is a probe that never decides.
    /// Returns the decision, if any.
    pub fn propose(&mut self, ver: Tag, p: Option<Proposal>) -> Option<Proposal> {
        if let Some(d) = self.decided.get(&ver) {
            return Some(d.clone());
        }
        let p = p?;
        if !self.open.contains(&ver) {
            return None;
        }
        self.open.insert(p.ver);
        self.decided.insert(ver, p.clone());
        Some(p)
    }

    pub fn decision(&self, ver: Tag) -> Option<&Proposal> {
        self.decided.get(&ver)
    }

    pub fn instances(&self) -> &BTreeMap<Tag, Proposal> {
        &self.decided
    }
}

/// Consensus from a strongly coverable register.
pub fn propose_value<R: CoverableRegister + ?Sized>(reg: &mut R, v: Value, proc: ProcessId) -> Result<Value, Error> {
    Ok(reg.cvr_write(proc, v, TAG0)?.value)
}

// ---------------------------------------------------------------------------
// In-process strong register
// ---------------------------------------------------------------------------

/// A strongly coverable register over a local oracle; each process keeps
/// its own cursor.
#[derive(Clone, Debug)]
pub struct OracleRegister {
    oracle: ConsensusOracle,
    v0: Value,
    cursors: BTreeMap<ProcessId, (Value, Tag)>,
}

impl OracleRegister {
    pub fn new(v0: Value) -> Self {
        OracleRegister {
            oracle: ConsensusOracle::new(),
            v0,
            cursors: BTreeMap::new(),
        }
    }

    pub fn oracle(&self) -> &ConsensusOracle {
        &self.oracle
    }

    fn chase(&mut self, proc: ProcessId, mut p: Option<Proposal>) -> (Value, Tag) {
        let v0 = self.v0.clone();
        let cur = self.cursors.entry(proc).or_insert((v0, TAG0));
        while let Some(d) = p {
            *cur = (d.val, d.ver);
            p = self.oracle.propose(cur.1, None);
        }
        cur.clone()
    }
}

impl CoverableRegister for OracleRegister {
    fn cvr_write(&mut self, proc: ProcessId, value: Value, ver: Tag) -> Result<WriteOutcome, Error> {
        let ver_new = generate_version(ver, proc)?;
        let p = self.oracle.propose(ver, Some(Proposal { val: value.clone(), ver: ver_new }));
        match p {
            Some(d) if d.ver == ver_new => {
                self.cursors.insert(proc, (value.clone(), ver_new));
                Ok(WriteOutcome { value, tag: ver_new, flag: Flag::Chg })
            }
            Some(d) => {
                let (value, tag) = self.chase(proc, Some(d));
                Ok(WriteOutcome { value, tag, flag: Flag::Unchg })
            }
            None => {
                let (value, tag) = self.cvr_read(proc)?;
                Ok(WriteOutcome { value, tag, flag: Flag::Unchg })
            }
        }
    }

    fn cvr_read(&mut self, proc: ProcessId) -> Result<(Value, Tag), Error> {
        let at = self.cursors.get(&proc).map_or(TAG0, |c| c.1);
        let p = self.oracle.propose(at, None);
        Ok(self.chase(proc, p))
    }
}

// ---------------------------------------------------------------------------
// Message-passing strong register
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Message {
    Propose { op_id: u64, instance: Tag, proposal: Option<Proposal> },
    Decision { op_id: u64, instance: Tag, decided: Option<Proposal> },
}

const K_PROPOSE: u8 = 1;
const K_DECISION: u8 = 2;

fn enc_proposal(e: Enc, p: &Option<Proposal>) -> Enc {
    match p {
        None => e.u64(0),
        Some(p) => e.u64(1).value(&p.val).tag(p.ver),
    }
}

fn dec_proposal(d: &mut Dec) -> Result<Option<Proposal>, Error> {
    match d.u64()? {
        0 => Ok(None),
        1 => Ok(Some(Proposal { val: d.value()?, ver: d.tag()? })),
        x => Err(Error::Decode(format!("bad proposal marker {x}"))),
    }
}

impl Wire for Message {
    fn encode(&self) -> Vec<u8> {
        match self {
            Message::Propose { op_id, instance, proposal } => {
                enc_proposal(Enc::new(K_PROPOSE).u64(*op_id).tag(*instance), proposal)
            }
            Message::Decision { op_id, instance, decided } => {
                enc_proposal(Enc::new(K_DECISION).u64(*op_id).tag(*instance), decided)
            }
        }
        .finish()
    }

    fn decode(buf: &[u8]) -> Result<Self, Error> {
        let (mut d, kind) = Dec::new(buf)?;
        let op_id = d.u64()?;
        let instance = d.tag()?;
        let m = match kind {
            K_PROPOSE => Message::Propose { op_id, instance, proposal: dec_proposal(&mut d)? },
            K_DECISION => Message::Decision { op_id, instance, decided: dec_proposal(&mut d)? },
            k => return Err(Error::Decode(format!("unknown message kind {k}"))),
        };
        d.end()?;
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OracleServer {
    pub oracle: ConsensusOracle,
}

impl Server for OracleServer {
    type Msg = Message;

    fn on_message(&mut self, from: ProcessId, msg: Message, fx: &mut Effects<Message>) {
        if let Message::Propose { op_id, instance, proposal } = msg {
            let decided = self.oracle.propose(instance, proposal);
            fx.send(from, Message::Decision { op_id, instance, decided });
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Phase {
    /// Waiting for the instance of `ver` to answer the write's proposal.
    First { value: Value, ver_new: Tag },
    /// Walking decided instances; the result is a read or an unchg write.
    Chase { as_write: bool },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StrongClient {
    id: ProcessId,
    oracle: ProcessId,
    lcval: Value,
    lcver: Tag,
    running: Option<(u64, Phase)>,
    last_op: u64,
}

impl StrongClient {
    pub fn new(id: ProcessId, oracle: ProcessId, v0: Value) -> Self {
        StrongClient {
            id,
            oracle,
            lcval: v0,
            lcver: TAG0,
            running: None,
            last_op: 0,
        }
    }

    fn probe(&mut self, op_id: u64, as_write: bool, fx: &mut Effects<Message>) {
        self.running = Some((op_id, Phase::Chase { as_write }));
        fx.send(self.oracle, Message::Propose { op_id, instance: self.lcver, proposal: None });
    }
}

impl RegisterClient for StrongClient {
    type Msg = Message;

    fn start(&mut self, op_id: u64, op: RegOp, fx: &mut Effects<Message>) {
        self.last_op = op_id;
        match op {
            RegOp::Write { value, ver } => {
                let ver_new = generate_version(ver, self.id).expect("client ids are non-zero");
                let proposal = Some(Proposal { val: value.clone(), ver: ver_new });
                self.running = Some((op_id, Phase::First { value, ver_new }));
                fx.send(self.oracle, Message::Propose { op_id, instance: ver, proposal });
            }
            RegOp::Read => self.probe(op_id, false, fx),
        }
    }

    fn on_message(&mut self, _from: ProcessId, msg: Message, fx: &mut Effects<Message>) -> Option<RegResult> {
        let Message::Decision { op_id, decided, .. } = msg else {
            return None;
        };
        let (id, phase) = self.running.take()?;
        if id != op_id {
            self.running = Some((id, phase));
            return None;
        }
        match (phase, decided) {
            (Phase::First { value, ver_new }, Some(d)) if d.ver == ver_new => {
                self.lcval = value.clone();
                self.lcver = ver_new;
                Some(RegResult::Write(WriteOutcome { value, tag: ver_new, flag: Flag::Chg }))
            }
            (phase, Some(d)) => {
                let as_write = match phase {
                    Phase::First { .. } => true,
                    Phase::Chase { as_write } => as_write,
                };
                self.lcval = d.val;
                self.lcver = d.ver;
                self.probe(op_id, as_write, fx);
                None
            }
            // The instance of `ver` is not open: report the latest version
            // reachable from the cursor.
            (Phase::First { .. }, None) => {
                self.probe(op_id, true, fx);
                None
            }
            (Phase::Chase { as_write }, None) => {
                let (value, tag) = (self.lcval.clone(), self.lcver);
                Some(if as_write {
                    RegResult::Write(WriteOutcome { value, tag, flag: Flag::Unchg })
                } else {
                    RegResult::Read(value, tag)
                })
            }
        }
    }

    fn ignores(&self, _from: ProcessId, msg: &Message) -> bool {
        match msg {
            Message::Decision { op_id, .. } => *op_id < self.last_op || (self.running.is_none() && *op_id == self.last_op),
            Message::Propose { .. } => true,
        }
    }
}

// ---------------------------------------------------------------------------
// Systems and checks
// ---------------------------------------------------------------------------

pub type StrongProc = Proc<StrongClient, OracleServer>;
pub type StrongCluster = Cluster<StrongClient, OracleServer>;

/// Clients `1..=clients`, then the oracle.
pub fn processes(clients: usize, v0: &Value) -> Vec<StrongProc> {
    let oracle = ProcessId(clients as u64 + 1);
    let mut nodes: Vec<StrongProc> = (1..=clients as u64)
        .map(|i| {
            let id = ProcessId(i);
            Proc::Client(Driver::new(id, StrongClient::new(id, oracle, v0.clone()), v0.clone()))
        })
        .collect();
    nodes.push(Proc::Server(OracleServer { oracle: ConsensusOracle::new() }));
    nodes
}

pub fn cluster(clients: usize, seed: u64, delay_bound: Option<u64>, v0: Value) -> StrongCluster {
    Cluster::from_sim(Sim::new(processes(clients, &v0), seed, delay_bound, v0), clients)
}

/// The oracle is a single process and cannot crash; `cfg.replicas` and
/// `cfg.crashes` must describe exactly that.
pub fn simulate(cfg: &SimConfig, workload: Option<Vec<Vec<Step>>>, v0: Value) -> Result<SimRun<StrongProc>, Error> {
    if cfg.replicas != 1 || cfg.crashes != 0 {
        return Err(Error::InvalidConfig(
            "the oracle-backed register has exactly one server, which cannot crash".into(),
        ));
    }
    cfg.validate(0)?;
    let mut aux = aux_rng(cfg.seed);
    let workload = match workload {
        Some(w) => w,
        None => crate::client::random_workload(cfg, &mut aux),
    };
    let mut sim = Sim::new(processes(cfg.clients(), &v0), cfg.seed, cfg.delay_bound, v0);
    let cids: Vec<ProcessId> = (1..=cfg.clients() as u64).map(ProcessId).collect();
    for (p, at) in random_crashes(&mut aux, &cids, cfg.client_crashes, crash_horizon(cfg)) {
        sim.crash(p, at)?;
    }
    run_workload(sim, workload)
}

/// Every client proposes `p<id>` first, then runs `extra` register
/// operations on the latest version it knows. Agreement needs `extra == 0`:
/// a proposal reports the current state, which later writes move past the
/// decision.
pub fn proposal_workload(clients: usize, extra: usize) -> Vec<Vec<Step>> {
    (1..=clients)
        .map(|id| {
            let mut steps = vec![Step::think(Task::Propose { value: Value::new(format!("p{id}")) })];
            for k in 0..extra {
                steps.push(Step::think(if k % 2 == 0 {
                    Task::Write { value: Value::new(format!("w{id}.{k}")), ver: None }
                } else {
                    Task::Read
                }));
            }
            steps
        })
        .collect()
}

/// Result of [`check_consensus`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConsensusReport {
    pub decided: BTreeSet<Value>,
    pub proposed: BTreeSet<Value>,
    pub agreement: bool,
    pub validity: bool,
    pub termination: bool,
}

impl ConsensusReport {
    pub fn passed(&self) -> bool {
        self.agreement && self.validity && self.termination
    }
}

/// Check agreement, validity and termination over the propose operations
/// of an application history. `correct` lists processes that did not
/// crash; each of them must have a completed proposal.
pub fn check_consensus(app: &History, correct: &BTreeSet<ProcessId>) -> Result<ConsensusReport, Error> {
    let mut r = ConsensusReport::default();
    let mut finished = BTreeSet::new();
    for op in app.operations()?.iter().filter(|o| o.op == OpKind::Propose) {
        if let crate::history::Args::Propose { value } = &op.args {
            r.proposed.insert(value.clone());
        }
        if let Some(Output::Propose { value }) = &op.result {
            r.decided.insert(value.clone());
            finished.insert(op.proc);
        }
    }
    r.agreement = r.decided.len() <= 1;
    r.validity = r.decided.is_subset(&r.proposed);
    r.termination = correct.is_subset(&finished);
    Ok(r)
}
