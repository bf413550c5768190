//! Versioned large objects: metadata and data on separate servers.
//!
//! Directory servers hold the largest `(tag, locations)` pair they have
//! accepted; replica servers hold every `(tag, value)` they were sent.
//! A client learns the latest tag and its locations from a directory
//! majority, so only the value transfer touches replica servers, and
//! then only `2f + 1` of them on write and `f + 1` on read.

use std::collections::{BTreeMap, BTreeSet};

use crate::client::{
    random_workload, run_workload, Cluster, Driver, Proc, RegOp, RegResult, RegisterClient, Server,
    SimRun, Step,
};
use crate::codec::{Dec, Enc};
use crate::error::Error;
use crate::simnet::{random_crashes, Effects, Sim, SimConfig, Wire};
use crate::types::{Flag, ProcessId, Tag, Value, WriteOutcome, TAG0};
use crate::vmwabd::{aux_rng, crash_horizon};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Message {
    GetMeta { op_id: u64 },
    MetaReply { op_id: u64, tag: Tag, locs: Vec<ProcessId> },
    PutMeta { op_id: u64, tag: Tag, locs: Vec<ProcessId> },
    PutMetaAck { op_id: u64 },
    Put { op_id: u64, tag: Tag, value: Value },
    PutAck { op_id: u64 },
    Get { op_id: u64, tag: Tag },
    GetReply { op_id: u64, tag: Tag, value: Value },
}

impl Message {
    pub fn op_id(&self) -> u64 {
        match self {
            Message::GetMeta { op_id }
            | Message::MetaReply { op_id, .. }
            | Message::PutMeta { op_id, .. }
            | Message::PutMetaAck { op_id }
            | Message::Put { op_id, .. }
            | Message::PutAck { op_id }
            | Message::Get { op_id, .. }
            | Message::GetReply { op_id, .. } => *op_id,
        }
    }
}

const K_GET_META: u8 = 1;
const K_META_REPLY: u8 = 2;
const K_PUT_META: u8 = 3;
const K_PUT_META_ACK: u8 = 4;
const K_PUT: u8 = 5;
const K_PUT_ACK: u8 = 6;
const K_GET: u8 = 7;
const K_GET_REPLY: u8 = 8;

impl Wire for Message {
    fn encode(&self) -> Vec<u8> {
        match self {
            Message::GetMeta { op_id } => Enc::new(K_GET_META).u64(*op_id),
            Message::MetaReply { op_id, tag, locs } => Enc::new(K_META_REPLY).u64(*op_id).tag(*tag).pids(locs),
            Message::PutMeta { op_id, tag, locs } => Enc::new(K_PUT_META).u64(*op_id).tag(*tag).pids(locs),
            Message::PutMetaAck { op_id } => Enc::new(K_PUT_META_ACK).u64(*op_id),
            Message::Put { op_id, tag, value } => Enc::new(K_PUT).u64(*op_id).tag(*tag).value(value),
            Message::PutAck { op_id } => Enc::new(K_PUT_ACK).u64(*op_id),
            Message::Get { op_id, tag } => Enc::new(K_GET).u64(*op_id).tag(*tag),
            Message::GetReply { op_id, tag, value } => Enc::new(K_GET_REPLY).u64(*op_id).tag(*tag).value(value),
        }
        .finish()
    }

    fn decode(buf: &[u8]) -> Result<Self, Error> {
        let (mut d, kind) = Dec::new(buf)?;
        let op_id = d.u64()?;
        let m = match kind {
            K_GET_META => Message::GetMeta { op_id },
            K_META_REPLY => Message::MetaReply { op_id, tag: d.tag()?, locs: d.pids()? },
            K_PUT_META => Message::PutMeta { op_id, tag: d.tag()?, locs: d.pids()? },
            K_PUT_META_ACK => Message::PutMetaAck { op_id },
            K_PUT => Message::Put { op_id, tag: d.tag()?, value: d.value()? },
            K_PUT_ACK => Message::PutAck { op_id },
            K_GET => Message::Get { op_id, tag: d.tag()? },
            K_GET_REPLY => Message::GetReply { op_id, tag: d.tag()?, value: d.value()? },
            k => return Err(Error::Decode(format!("unknown message kind {k}"))),
        };
        d.end()?;
        Ok(m)
    }
}

// ---------------------------------------------------------------------------
// Servers
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LdrMetadata {
    pub tag: Tag,
    pub locations: Vec<ProcessId>,
}

/// Directory transition: answer queries, accept larger tags whose location
/// set has at least `f + 1` members.
pub fn directory_handle(msg: Message, st: LdrMetadata, f: usize) -> (Option<Message>, LdrMetadata) {
    match msg {
        Message::GetMeta { op_id } => {
            let reply = Message::MetaReply {
                op_id,
                tag: st.tag,
                locs: st.locations.clone(),
            };
            (Some(reply), st)
        }
        Message::PutMeta { op_id, tag, locs } => {
            let st = if tag > st.tag && locs.len() > f {
                LdrMetadata { tag, locations: locs }
            } else {
                st
            };
            (Some(Message::PutMetaAck { op_id }), st)
        }
        _ => (None, st),
    }
}

/// Replica-server transition. `get` for a tag not in the store gets no
/// reply at all.
pub fn ldr_replica_handle(msg: Message, store: &mut BTreeMap<Tag, Value>) -> Option<Message> {
    match msg {
        Message::Put { op_id, tag, value } => {
            store.entry(tag).or_insert(value);
            Some(Message::PutAck { op_id })
        }
        Message::Get { op_id, tag } => store.get(&tag).map(|v| Message::GetReply {
            op_id,
            tag,
            value: v.clone(),
        }),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum LdrServer {
    Directory {
        meta: LdrMetadata,
        f: usize,
        log: Vec<Tag>,
    },
    Replica {
        store: BTreeMap<Tag, Value>,
    },
}

impl LdrServer {
    pub fn directory(all_replicas: Vec<ProcessId>, f: usize) -> Self {
        LdrServer::Directory {
            meta: LdrMetadata {
                tag: TAG0,
                locations: all_replicas,
            },
            f,
            log: vec![TAG0],
        }
    }

    pub fn replica(v0: Value) -> Self {
        LdrServer::Replica {
            store: BTreeMap::from([(TAG0, v0)]),
        }
    }

    pub fn tag_log(&self) -> Option<&[Tag]> {
        match self {
            LdrServer::Directory { log, .. } => Some(log),
            LdrServer::Replica { .. } => None,
        }
    }

    pub fn metadata(&self) -> Option<&LdrMetadata> {
        match self {
            LdrServer::Directory { meta, .. } => Some(meta),
            LdrServer::Replica { .. } => None,
        }
    }

    pub fn store(&self) -> Option<&BTreeMap<Tag, Value>> {
        match self {
            LdrServer::Replica { store } => Some(store),
            LdrServer::Directory { .. } => None,
        }
    }
}

impl Server for LdrServer {
    type Msg = Message;

    fn on_message(&mut self, from: ProcessId, msg: Message, fx: &mut Effects<Message>) {
        let reply = match self {
            LdrServer::Directory { meta, f, log } => {
                let st = std::mem::replace(meta, LdrMetadata { tag: TAG0, locations: Vec::new() });
                let (reply, st) = directory_handle(msg, st, *f);
                if log.last() != Some(&st.tag) {
                    log.push(st.tag);
                }
                *meta = st;
                reply
            }
            LdrServer::Replica { store } => ldr_replica_handle(msg, store),
        };
        if let Some(r) = reply {
            fx.send(from, r);
        }
    }
}

// ---------------------------------------------------------------------------
// Client
// ---------------------------------------------------------------------------

/// What follows a completed put-metadata phase.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum After {
    Return(RegResult),
    /// Fetch the value of `tag`, then report it as a read or an unchg write.
    Fetch { tag: Tag, locs: Vec<ProcessId>, as_write: bool },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Phase {
    GetMeta(BTreeMap<ProcessId, (Tag, Vec<ProcessId>)>),
    Put {
        tag: Tag,
        value: Value,
        acks: BTreeSet<ProcessId>,
    },
    PutMeta {
        acks: BTreeSet<ProcessId>,
        after: After,
    },
    Fetch {
        tag: Tag,
        locs: Vec<ProcessId>,
        contacted: BTreeSet<ProcessId>,
        as_write: bool,
    },
}

impl Phase {
    fn rank(&self) -> u8 {
        match self {
            Phase::GetMeta(_) => 0,
            Phase::Put { .. } => 1,
            Phase::PutMeta { .. } => 2,
            Phase::Fetch { .. } => 3,
        }
    }
}

fn reply_rank(m: &Message) -> Option<u8> {
    match m {
        Message::MetaReply { .. } => Some(0),
        Message::PutAck { .. } => Some(1),
        Message::PutMetaAck { .. } => Some(2),
        Message::GetReply { .. } => Some(3),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Running {
    op_id: u64,
    op: RegOp,
    phase: Phase,
}

/// Delay before a fetch that got no reply is sent to more locations.
pub const NUDGE_DELAY: u64 = 1_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LdrClient {
    id: ProcessId,
    directories: Vec<ProcessId>,
    replicas: Vec<ProcessId>,
    f: usize,
    running: Option<Running>,
    last_op: u64,
    ops_started: u64,
    fetch_retries: u64,
    fetches: u64,
}

impl LdrClient {
    pub fn new(id: ProcessId, directories: Vec<ProcessId>, replicas: Vec<ProcessId>, f: usize) -> Self {
        LdrClient {
            id,
            directories,
            replicas,
            f,
            running: None,
            last_op: 0,
            ops_started: 0,
            fetch_retries: 0,
            fetches: 0,
        }
    }

    fn majority(&self) -> usize {
        self.directories.len() / 2 + 1
    }

    /// Fetches that had to be re-sent to more locations.
    pub fn fetch_retries(&self) -> u64 {
        self.fetch_retries
    }

    /// Fetches completed.
    pub fn fetches(&self) -> u64 {
        self.fetches
    }

    /// `2f + 1` replica servers, rotating with the client and operation.
    fn put_targets(&self) -> Vec<ProcessId> {
        let n = self.replicas.len();
        let start = (self.id.0 + self.ops_started) as usize % n;
        (0..(2 * self.f + 1).min(n))
            .map(|k| self.replicas[(start + k) % n])
            .collect()
    }

    fn fetch_targets(&self, locs: &[ProcessId], skip: &BTreeSet<ProcessId>) -> Vec<ProcessId> {
        let n = locs.len();
        if n == 0 {
            return Vec::new();
        }
        let start = (self.id.0 + self.ops_started) as usize % n;
        (0..n)
            .map(|k| locs[(start + k) % n])
            .filter(|p| !skip.contains(p))
            .take(self.f + 1)
            .collect()
    }

    fn start_fetch(&mut self, tag: Tag, locs: Vec<ProcessId>, as_write: bool, fx: &mut Effects<Message>) {
        let targets = self.fetch_targets(&locs, &BTreeSet::new());
        let run = self.running.as_mut().expect("running op");
        let op_id = run.op_id;
        run.phase = Phase::Fetch {
            tag,
            locs,
            contacted: targets.iter().copied().collect(),
            as_write,
        };
        fx.broadcast(&targets, &Message::Get { op_id, tag });
        fx.set_timer(NUDGE_DELAY, op_id);
    }
}

impl RegisterClient for LdrClient {
    type Msg = Message;

    fn start(&mut self, op_id: u64, op: RegOp, fx: &mut Effects<Message>) {
        self.last_op = op_id;
        self.ops_started += 1;
        self.running = Some(Running {
            op_id,
            op,
            phase: Phase::GetMeta(BTreeMap::new()),
        });
        fx.broadcast(&self.directories, &Message::GetMeta { op_id });
    }

    fn on_message(&mut self, from: ProcessId, msg: Message, fx: &mut Effects<Message>) -> Option<RegResult> {
        let majority = self.majority();
        let f = self.f;
        let id = self.id;
        let put_targets = self.put_targets();
        let run = self.running.as_mut()?;
        if msg.op_id() != run.op_id {
            return None;
        }
        let op_id = run.op_id;
        match (&mut run.phase, msg) {
            (Phase::GetMeta(replies), Message::MetaReply { tag, locs, .. }) => {
                replies.insert(from, (tag, locs));
                if replies.len() < majority {
                    return None;
                }
                let (tau, s) = replies
                    .values()
                    .max_by_key(|(t, _)| *t)
                    .cloned()
                    .expect("majority is non-empty");
                match &run.op {
                    RegOp::Write { value, ver } if *ver == tau => {
                        let tag = tau.successor(id).expect("client ids are non-zero");
                        run.phase = Phase::Put {
                            tag,
                            value: value.clone(),
                            acks: BTreeSet::new(),
                        };
                        let m = Message::Put { op_id, tag, value: value.clone() };
                        fx.broadcast(&put_targets, &m);
                    }
                    op => {
                        let as_write = matches!(op, RegOp::Write { .. });
                        run.phase = Phase::PutMeta {
                            acks: BTreeSet::new(),
                            after: After::Fetch { tag: tau, locs: s.clone(), as_write },
                        };
                        fx.broadcast(&self.directories, &Message::PutMeta { op_id, tag: tau, locs: s });
                    }
                }
                None
            }
            (Phase::Put { tag, value, acks }, Message::PutAck { .. }) => {
                acks.insert(from);
                if acks.len() < f + 1 {
                    return None;
                }
                let locs: Vec<ProcessId> = acks.iter().copied().collect();
                let (tag, value) = (*tag, value.clone());
                run.phase = Phase::PutMeta {
                    acks: BTreeSet::new(),
                    after: After::Return(RegResult::Write(WriteOutcome {
                        value,
                        tag,
                        flag: Flag::Chg,
                    })),
                };
                fx.broadcast(&self.directories, &Message::PutMeta { op_id, tag, locs });
                None
            }
            (Phase::PutMeta { acks, after }, Message::PutMetaAck { .. }) => {
                acks.insert(from);
                if acks.len() < majority {
                    return None;
                }
                match after.clone() {
                    After::Return(r) => {
                        self.running = None;
                        Some(r)
                    }
                    After::Fetch { tag, locs, as_write } => {
                        self.start_fetch(tag, locs, as_write, fx);
                        None
                    }
                }
            }
            (Phase::Fetch { tag, as_write, .. }, Message::GetReply { tag: t, value, .. }) if t == *tag => {
                let r = if *as_write {
                    RegResult::Write(WriteOutcome {
                        value,
                        tag: t,
                        flag: Flag::Unchg,
                    })
                } else {
                    RegResult::Read(value, t)
                };
                self.running = None;
                self.fetches += 1;
                Some(r)
            }
            _ => None,
        }
    }

    fn on_timer(&mut self, token: u64, fx: &mut Effects<Message>) -> Option<RegResult> {
        let (op_id, tag, locs, contacted) = match &self.running {
            Some(Running {
                op_id,
                phase: Phase::Fetch { tag, locs, contacted, .. },
                ..
            }) if *op_id == token => (*op_id, *tag, locs.clone(), contacted.clone()),
            _ => return None,
        };
        let more = self.fetch_targets(&locs, &contacted);
        self.fetch_retries += 1;
        if let Some(Running {
            phase: Phase::Fetch { contacted, .. },
            ..
        }) = &mut self.running
        {
            contacted.extend(more.iter().copied());
        }
        // Once every location was asked, only the original requests remain.
        if !more.is_empty() {
            fx.broadcast(&more, &Message::Get { op_id, tag });
            fx.set_timer(NUDGE_DELAY, op_id);
        }
        None
    }

    fn ignores(&self, _from: ProcessId, msg: &Message) -> bool {
        let id = msg.op_id();
        if id < self.last_op {
            return true;
        }
        match (&self.running, reply_rank(msg)) {
            (None, _) => id <= self.last_op,
            (Some(r), Some(k)) => k < r.phase.rank(),
            (Some(_), None) => true,
        }
    }
}

// ---------------------------------------------------------------------------
// Systems
// ---------------------------------------------------------------------------

pub type LdrProc = Proc<LdrClient, LdrServer>;
pub type LdrCluster = Cluster<LdrClient, LdrServer>;

/// Shape of an LDR deployment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LdrConfig {
    /// `sim.replicas` is the number of directory servers and `sim.crashes`
    /// the directory crashes.
    pub sim: SimConfig,
    pub f: usize,
    pub replica_servers: usize,
    pub replica_crashes: usize,
}

impl LdrConfig {
    /// 5 directories and `2f + 2` replica servers.
    pub fn standard(f: usize) -> Self {
        LdrConfig {
            sim: SimConfig {
                replicas: 5,
                ..SimConfig::default()
            },
            f,
            replica_servers: 2 * f + 2,
            replica_crashes: 0,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.sim.validate(SimConfig::minority(self.sim.replicas))?;
        if self.replica_servers < 2 * self.f + 1 {
            return Err(Error::InvalidConfig(format!(
                "{} replica servers cannot host 2f+1 = {} copies",
                self.replica_servers,
                2 * self.f + 1
            )));
        }
        if self.replica_crashes > self.replica_servers {
            return Err(Error::InvalidConfig("more replica crashes than replica servers".into()));
        }
        if self.sim.liveness && self.replica_crashes > self.f {
            return Err(Error::InvalidConfig(format!(
                "{} replica crashes exceed f = {}",
                self.replica_crashes, self.f
            )));
        }
        Ok(())
    }

    pub fn directory_ids(&self) -> Vec<ProcessId> {
        let c = self.sim.clients();
        (0..self.sim.replicas).map(|i| ProcessId((c + i) as u64 + 1)).collect()
    }

    pub fn replica_ids(&self) -> Vec<ProcessId> {
        let base = self.sim.clients() + self.sim.replicas;
        (0..self.replica_servers).map(|i| ProcessId((base + i) as u64 + 1)).collect()
    }

    pub fn processes(&self, v0: &Value) -> Vec<LdrProc> {
        let dirs = self.directory_ids();
        let reps = self.replica_ids();
        let mut nodes: Vec<LdrProc> = (0..self.sim.clients())
            .map(|i| {
                let id = ProcessId(i as u64 + 1);
                Proc::Client(Driver::new(id, LdrClient::new(id, dirs.clone(), reps.clone(), self.f), v0.clone()))
            })
            .collect();
        nodes.extend(dirs.iter().map(|_| Proc::Server(LdrServer::directory(reps.clone(), self.f))));
        nodes.extend(reps.iter().map(|_| Proc::Server(LdrServer::replica(v0.clone()))));
        nodes
    }
}

pub fn cluster(cfg: &LdrConfig, v0: Value) -> Result<LdrCluster, Error> {
    cfg.validate()?;
    let nodes = cfg.processes(&v0);
    Ok(Cluster::from_sim(Sim::new(nodes, cfg.sim.seed, cfg.sim.delay_bound, v0), cfg.sim.clients()))
}

pub fn simulate(cfg: &LdrConfig, workload: Option<Vec<Vec<Step>>>, v0: Value) -> Result<SimRun<LdrProc>, Error> {
    cfg.validate()?;
    let mut aux = aux_rng(cfg.sim.seed);
    let workload = match workload {
        Some(w) => w,
        None => random_workload(&cfg.sim, &mut aux),
    };
    let mut sim = Sim::new(cfg.processes(&v0), cfg.sim.seed, cfg.sim.delay_bound, v0);
    let horizon = crash_horizon(&cfg.sim);
    for (p, at) in random_crashes(&mut aux, &cfg.replica_ids(), cfg.replica_crashes, horizon) {
        sim.crash(p, at)?;
    }
    for (p, at) in random_crashes(&mut aux, &cfg.directory_ids(), cfg.sim.crashes, horizon) {
        sim.crash(p, at)?;
    }
    let cids: Vec<ProcessId> = (1..=cfg.sim.clients() as u64).map(ProcessId).collect();
    for (p, at) in random_crashes(&mut aux, &cids, cfg.sim.client_crashes, horizon) {
        sim.crash(p, at)?;
    }
    run_workload(sim, workload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::CoverableRegister;

    fn pids(xs: &[u64]) -> Vec<ProcessId> {
        xs.iter().map(|&x| ProcessId(x)).collect()
    }

    #[test]
    fn directory_rules() {
        let st = LdrMetadata { tag: TAG0, locations: pids(&[1, 2, 3, 4]) };
        let (r, s) = directory_handle(Message::PutMeta { op_id: 1, tag: Tag::new(1, 1), locs: pids(&[2]) }, st.clone(), 1);
        assert_eq!(r, Some(Message::PutMetaAck { op_id: 1 }));
        assert_eq!(s, st);
        let (_, s) = directory_handle(Message::PutMeta { op_id: 2, tag: Tag::new(1, 1), locs: pids(&[2, 3]) }, st, 1);
        assert_eq!(s.tag, Tag::new(1, 1));
        let (_, s2) = directory_handle(Message::PutMeta { op_id: 3, tag: TAG0, locs: pids(&[1, 2, 3]) }, s.clone(), 1);
        assert_eq!(s2, s);
    }

    #[test]
    fn replica_rules() {
        let mut store = BTreeMap::new();
        assert_eq!(ldr_replica_handle(Message::Get { op_id: 1, tag: Tag::new(1, 1) }, &mut store), None);
        let r = ldr_replica_handle(Message::Put { op_id: 2, tag: Tag::new(1, 1), value: Value::from("big") }, &mut store);
        assert_eq!(r, Some(Message::PutAck { op_id: 2 }));
        let r = ldr_replica_handle(Message::Get { op_id: 3, tag: Tag::new(1, 1) }, &mut store);
        assert_eq!(r, Some(Message::GetReply { op_id: 3, tag: Tag::new(1, 1), value: Value::from("big") }));
    }

    #[test]
    fn encoding_round_trip() {
        let msgs = [
            Message::GetMeta { op_id: 1 },
            Message::MetaReply { op_id: 2, tag: Tag::new(1, 2), locs: pids(&[5, 6]) },
            Message::PutMeta { op_id: 3, tag: TAG0, locs: vec![] },
            Message::PutMetaAck { op_id: 4 },
            Message::Put { op_id: 5, tag: Tag::new(3, 1), value: Value::from("x") },
            Message::PutAck { op_id: 6 },
            Message::Get { op_id: 7, tag: Tag::new(3, 1) },
            Message::GetReply { op_id: 8, tag: Tag::new(3, 1), value: Value::from("y") },
        ];
        for m in msgs {
            assert_eq!(Message::decode(&m.encode()).unwrap(), m);
        }
        let mut bad = Message::MetaReply { op_id: 2, tag: TAG0, locs: pids(&[5]) }.encode();
        bad.truncate(bad.len() - 3);
        assert!(Message::decode(&bad).is_err());
    }

    #[test]
    fn solo_write_and_stale_write() {
        let mut cfg = LdrConfig::standard(1);
        cfg.sim.writers = 2;
        let mut c = cluster(&cfg, Value::from("v0")).unwrap();
        assert_eq!(c.cvr_read(ProcessId(1)).unwrap(), (Value::from("v0"), TAG0));
        let big = Value::new(vec![7u8; 4096]);
        let o = c.cvr_write(ProcessId(1), big.clone(), TAG0).unwrap();
        assert_eq!(o, WriteOutcome { value: big.clone(), tag: Tag::new(1, 1), flag: Flag::Chg });
        let o = c.cvr_write(ProcessId(2), Value::from("late"), TAG0).unwrap();
        assert_eq!(o, WriteOutcome { value: big.clone(), tag: Tag::new(1, 1), flag: Flag::Unchg });
        assert_eq!(c.cvr_read(ProcessId(2)).unwrap(), (big, Tag::new(1, 1)));
        let stored = c
            .sim()
            .nodes()
            .iter()
            .filter_map(|n| n.as_server().and_then(LdrServer::metadata))
            .filter(|m| m.tag == Tag::new(1, 1))
            .count();
        assert!(stored >= 3);
    }

    #[test]
    fn config_checks() {
        let mut cfg = LdrConfig::standard(2);
        cfg.replica_crashes = 3;
        assert!(cfg.validate().is_err());
        cfg.replica_crashes = 2;
        cfg.replica_servers = 4;
        assert!(cfg.validate().is_err());
    }
}
