//! Versioned multi-writer ABD.
//!
//! Both operations run a query phase followed by a propagate phase, each
//! waiting for a majority of replicas. A write whose `ver` equals the
//! largest tag discovered installs `(ts + 1, wid)`; otherwise it writes
//! back the discovered pair and reports `unchg`. Replicas keep the
//! largest-tagged pair they have seen.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::client::{
    random_workload, run_workload, Cluster, Driver, Proc, RegOp, RegResult, RegisterClient, Server,
    SimRun, Step,
};
use crate::codec::{Dec, Enc};
use crate::error::Error;
use crate::simnet::{random_crashes, Effects, Sim, SimConfig, Wire};
use crate::types::{Flag, ProcessId, Tag, Value, WriteOutcome, TAG0};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Message {
    Query { op_id: u64 },
    QueryReply { op_id: u64, tag: Tag, value: Value },
    Propagate { op_id: u64, tag: Tag, value: Value },
    PropagateAck { op_id: u64 },
}

impl Message {
    pub fn op_id(&self) -> u64 {
        match self {
            Message::Query { op_id }
            | Message::QueryReply { op_id, .. }
            | Message::Propagate { op_id, .. }
            | Message::PropagateAck { op_id } => *op_id,
        }
    }
}

const K_QUERY: u8 = 1;
const K_QUERY_REPLY: u8 = 2;
const K_PROPAGATE: u8 = 3;
const K_ACK: u8 = 4;

impl Wire for Message {
    fn encode(&self) -> Vec<u8> {
        match self {
            Message::Query { op_id } => Enc::new(K_QUERY).u64(*op_id),
            Message::QueryReply { op_id, tag, value } => {
                Enc::new(K_QUERY_REPLY).u64(*op_id).tag(*tag).value(value)
            }
            Message::Propagate { op_id, tag, value } => {
                Enc::new(K_PROPAGATE).u64(*op_id).tag(*tag).value(value)
            }
            Message::PropagateAck { op_id } => Enc::new(K_ACK).u64(*op_id),
        }
        .finish()
    }

    fn decode(buf: &[u8]) -> Result<Self, Error> {
        let (mut d, kind) = Dec::new(buf)?;
        let op_id = d.u64()?;
        let m = match kind {
            K_QUERY => Message::Query { op_id },
            K_QUERY_REPLY => Message::QueryReply {
                op_id,
                tag: d.tag()?,
                value: d.value()?,
            },
            K_PROPAGATE => Message::Propagate {
                op_id,
                tag: d.tag()?,
                value: d.value()?,
            },
            K_ACK => Message::PropagateAck { op_id },
            k => return Err(Error::Decode(format!("unknown message kind {k}"))),
        };
        d.end()?;
        Ok(m)
    }
}

// ---------------------------------------------------------------------------
// Replica
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ReplicaState {
    pub tag: Tag,
    pub value: Value,
}

/// The replica's transition function. Only sensible for requests; replies
/// addressed to a replica are dropped.
pub fn replica_handle(msg: Message, st: ReplicaState) -> (Option<Message>, ReplicaState) {
    match msg {
        Message::Query { op_id } => {
            let reply = Message::QueryReply {
                op_id,
                tag: st.tag,
                value: st.value.clone(),
            };
            (Some(reply), st)
        }
        Message::Propagate { op_id, tag, value } => {
            let st = if tag > st.tag {
                ReplicaState { tag, value }
            } else {
                st
            };
            (Some(Message::PropagateAck { op_id }), st)
        }
        Message::QueryReply { .. } | Message::PropagateAck { .. } => (None, st),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Replica {
    state: ReplicaState,
    /// Every tag this replica held, starting with its initial one.
    log: Vec<Tag>,
    record: bool,
}

impl Replica {
    pub fn new(v0: Value) -> Self {
        Replica {
            state: ReplicaState {
                tag: TAG0,
                value: v0,
            },
            log: vec![TAG0],
            record: true,
        }
    }

    /// A replica that keeps no tag log (smaller state for exploration).
    pub fn quiet(v0: Value) -> Self {
        Replica {
            log: Vec::new(),
            record: false,
            ..Replica::new(v0)
        }
    }

    pub fn state(&self) -> &ReplicaState {
        &self.state
    }

    pub fn tag_log(&self) -> &[Tag] {
        &self.log
    }
}

impl Server for Replica {
    type Msg = Message;

    fn on_message(&mut self, from: ProcessId, msg: Message, fx: &mut Effects<Message>) {
        let st = std::mem::replace(
            &mut self.state,
            ReplicaState {
                tag: TAG0,
                value: Value::default(),
            },
        );
        let (reply, st) = replica_handle(msg, st);
        if self.record && self.log.last() != Some(&st.tag) {
            self.log.push(st.tag);
        }
        self.state = st;
        if let Some(r) = reply {
            fx.send(from, r);
        }
    }
}

// ---------------------------------------------------------------------------
// Client
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Phase {
    Query(BTreeMap<ProcessId, (Tag, Value)>),
    Propagate {
        acks: BTreeSet<ProcessId>,
        result: RegResult,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Running {
    op_id: u64,
    op: RegOp,
    phase: Phase,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AbdClient {
    id: ProcessId,
    replicas: Vec<ProcessId>,
    running: Option<Running>,
    last_op: u64,
    quorums: Vec<BTreeSet<ProcessId>>,
    record: bool,
}

impl AbdClient {
    pub fn new(id: ProcessId, replicas: Vec<ProcessId>) -> Self {
        AbdClient {
            id,
            replicas,
            running: None,
            last_op: 0,
            quorums: Vec::new(),
            record: true,
        }
    }

    /// A client that keeps no quorum log.
    pub fn quiet(id: ProcessId, replicas: Vec<ProcessId>) -> Self {
        AbdClient {
            record: false,
            ..AbdClient::new(id, replicas)
        }
    }

    pub fn majority(&self) -> usize {
        self.replicas.len() / 2 + 1
    }

    /// Result of the running operation once its query phase has decided it.
    pub fn decided(&self) -> Option<&RegResult> {
        match &self.running {
            Some(Running {
                phase: Phase::Propagate { result, .. },
                ..
            }) => Some(result),
            _ => None,
        }
    }

    /// The replica sets each completed phase waited for, in order.
    pub fn quorums(&self) -> &[BTreeSet<ProcessId>] {
        &self.quorums
    }

    fn close_phase(&mut self, members: BTreeSet<ProcessId>) {
        if self.record {
            self.quorums.push(members);
        }
    }
}

impl RegisterClient for AbdClient {
    type Msg = Message;

    fn start(&mut self, op_id: u64, op: RegOp, fx: &mut Effects<Message>) {
        self.last_op = op_id;
        self.running = Some(Running {
            op_id,
            op,
            phase: Phase::Query(BTreeMap::new()),
        });
        fx.broadcast(&self.replicas, &Message::Query { op_id });
    }

    fn on_message(&mut self, from: ProcessId, msg: Message, fx: &mut Effects<Message>) -> Option<RegResult> {
        let majority = self.majority();
        let run = self.running.as_mut()?;
        if msg.op_id() != run.op_id {
            return None;
        }
        match (&mut run.phase, msg) {
            (Phase::Query(replies), Message::QueryReply { tag, value, .. }) => {
                replies.insert(from, (tag, value));
                if replies.len() < majority {
                    return None;
                }
                let (tau, v) = replies
                    .values()
                    .max_by_key(|(t, _)| *t)
                    .cloned()
                    .expect("majority is non-empty");
                let members: BTreeSet<ProcessId> = replies.keys().copied().collect();
                let (tag, value, result) = match &run.op {
                    RegOp::Write { value: val, ver } if *ver == tau => {
                        let new = tau.successor(self.id).expect("client ids are non-zero");
                        let out = WriteOutcome {
                            value: val.clone(),
                            tag: new,
                            flag: Flag::Chg,
                        };
                        (new, val.clone(), RegResult::Write(out))
                    }
                    RegOp::Write { .. } => {
                        let out = WriteOutcome {
                            value: v.clone(),
                            tag: tau,
                            flag: Flag::Unchg,
                        };
                        (tau, v, RegResult::Write(out))
                    }
                    RegOp::Read => (tau, v.clone(), RegResult::Read(v, tau)),
                };
                let op_id = run.op_id;
                run.phase = Phase::Propagate {
                    acks: BTreeSet::new(),
                    result,
                };
                self.close_phase(members);
                fx.broadcast(&self.replicas, &Message::Propagate { op_id, tag, value });
                None
            }
            (Phase::Propagate { acks, .. }, Message::PropagateAck { .. }) => {
                acks.insert(from);
                if acks.len() < majority {
                    return None;
                }
                let Some(Running {
                    phase: Phase::Propagate { acks, result },
                    ..
                }) = self.running.take()
                else {
                    unreachable!()
                };
                self.close_phase(acks);
                Some(result)
            }
            _ => None,
        }
    }

    fn ignores(&self, _from: ProcessId, msg: &Message) -> bool {
        let id = msg.op_id();
        if id < self.last_op {
            return true;
        }
        match (&self.running, msg) {
            (None, _) => id <= self.last_op,
            (Some(r), Message::QueryReply { .. }) => !matches!(r.phase, Phase::Query(_)),
            _ => false,
        }
    }
}

// ---------------------------------------------------------------------------
// Systems
// ---------------------------------------------------------------------------

pub type AbdProc = Proc<AbdClient, Replica>;
pub type AbdCluster = Cluster<AbdClient, Replica>;

/// Clients are processes `1..=clients`, replicas follow.
pub fn processes(clients: usize, replicas: usize, v0: &Value) -> Vec<AbdProc> {
    let rids: Vec<ProcessId> = (0..replicas)
        .map(|i| ProcessId((clients + i) as u64 + 1))
        .collect();
    let mut nodes: Vec<AbdProc> = (0..clients)
        .map(|i| {
            let id = ProcessId(i as u64 + 1);
            Proc::Client(Driver::new(id, AbdClient::new(id, rids.clone()), v0.clone()))
        })
        .collect();
    nodes.extend((0..replicas).map(|_| Proc::Server(Replica::new(v0.clone()))));
    nodes
}

pub fn replica_ids(clients: usize, replicas: usize) -> Vec<ProcessId> {
    (0..replicas)
        .map(|i| ProcessId((clients + i) as u64 + 1))
        .collect()
}

pub fn cluster(clients: usize, replicas: usize, seed: u64, delay_bound: Option<u64>, v0: Value) -> AbdCluster {
    let nodes = processes(clients, replicas, &v0);
    Cluster::from_sim(Sim::new(nodes, seed, delay_bound, v0), clients)
}

/// Seed of the auxiliary stream used for workloads and crash plans; kept
/// apart from the scheduler's stream.
pub fn aux_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15)
}

/// Logical time window in which random crashes are placed.
pub fn crash_horizon(cfg: &SimConfig) -> u64 {
    let spread = cfg.delay_bound.unwrap_or(32);
    (cfg.ops_per_client as u64 + 1) * 8 * spread
}

/// Run `cfg` with the given workload, or a random one.
pub fn simulate(cfg: &SimConfig, workload: Option<Vec<Vec<Step>>>, v0: Value) -> Result<SimRun<AbdProc>, Error> {
    cfg.validate(SimConfig::minority(cfg.replicas))?;
    let mut aux = aux_rng(cfg.seed);
    let workload = match workload {
        Some(w) => w,
        None => random_workload(cfg, &mut aux),
    };
    if workload.len() > cfg.clients() {
        return Err(Error::InvalidConfig(format!(
            "workload names {} clients, configuration has {}",
            workload.len(),
            cfg.clients()
        )));
    }
    let nodes = processes(cfg.clients(), cfg.replicas, &v0);
    let mut sim = Sim::new(nodes, cfg.seed, cfg.delay_bound, v0);
    let horizon = crash_horizon(cfg);
    for (p, at) in random_crashes(&mut aux, &replica_ids(cfg.clients(), cfg.replicas), cfg.crashes, horizon) {
        sim.crash(p, at)?;
    }
    let cids: Vec<ProcessId> = (1..=cfg.clients() as u64).map(ProcessId).collect();
    for (p, at) in random_crashes(&mut aux, &cids, cfg.client_crashes, horizon) {
        sim.crash(p, at)?;
    }
    run_workload(sim, workload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{Task, TaskOutcome};
    use crate::types::CoverableRegister;

    fn st(ts: u64, wid: u64, v: &str) -> ReplicaState {
        ReplicaState {
            tag: Tag::new(ts, wid),
            value: Value::from(v),
        }
    }

    #[test]
    fn replica_transitions() {
        let (r, s) = replica_handle(
            Message::Propagate { op_id: 1, tag: Tag::new(1, 1), value: Value::from("a") },
            st(0, 0, ""),
        );
        assert_eq!(r, Some(Message::PropagateAck { op_id: 1 }));
        assert_eq!(s, st(1, 1, "a"));

        let (r, s) = replica_handle(
            Message::Propagate { op_id: 2, tag: Tag::new(1, 9), value: Value::from("x") },
            st(2, 1, "c"),
        );
        assert_eq!(r, Some(Message::PropagateAck { op_id: 2 }));
        assert_eq!(s, st(2, 1, "c"));

        let (_, s) = replica_handle(
            Message::Propagate { op_id: 3, tag: Tag::new(1, 1), value: Value::from("zzz") },
            st(1, 1, "a"),
        );
        assert_eq!(s, st(1, 1, "a"));

        let (r, s) = replica_handle(Message::Query { op_id: 4 }, st(1, 1, "a"));
        assert_eq!(r, Some(Message::QueryReply { op_id: 4, tag: Tag::new(1, 1), value: Value::from("a") }));
        assert_eq!(s, st(1, 1, "a"));
    }

    #[test]
    fn message_encoding() {
        let msgs = [
            Message::Query { op_id: 7 },
            Message::QueryReply { op_id: 1 << 40, tag: Tag::new(3, 2), value: Value::from("abc") },
            Message::Propagate { op_id: 0, tag: TAG0, value: Value::default() },
            Message::PropagateAck { op_id: u64::MAX },
        ];
        for m in msgs {
            assert_eq!(Message::decode(&m.encode()).unwrap(), m);
        }
        let q = Message::Query { op_id: 7 }.encode();
        assert_eq!(q, [1, 0, 0, 0, 0, 0, 0, 0, 7]);
        assert!(Message::decode(&[9, 0, 0, 0, 0, 0, 0, 0, 0]).is_err());
        assert!(Message::decode(&[2, 0, 0]).is_err());
        let mut long = q.clone();
        long.push(0);
        assert!(Message::decode(&long).is_err());
    }

    #[test]
    fn solo_write_then_stale_write() {
        let mut c = cluster(2, 3, 7, None, Value::default());
        let o = c.cvr_write(ProcessId(1), Value::from("a"), TAG0).unwrap();
        assert_eq!(o, WriteOutcome { value: Value::from("a"), tag: Tag::new(1, 1), flag: Flag::Chg });
        let o = c.cvr_write(ProcessId(2), Value::from("b"), TAG0).unwrap();
        assert_eq!(o, WriteOutcome { value: Value::from("a"), tag: Tag::new(1, 1), flag: Flag::Unchg });
        assert_eq!(c.cvr_read(ProcessId(2)).unwrap(), (Value::from("a"), Tag::new(1, 1)));
    }

    #[test]
    fn stale_ver_returns_other_writers_value() {
        let mut c = cluster(2, 5, 3, None, Value::default());
        c.cvr_write(ProcessId(2), Value::from("b"), TAG0).unwrap();
        let o = c.cvr_write(ProcessId(1), Value::from("a"), TAG0).unwrap();
        assert_eq!(o, WriteOutcome { value: Value::from("b"), tag: Tag::new(1, 2), flag: Flag::Unchg });
    }

    #[test]
    fn fresh_read_returns_initial() {
        let mut c = cluster(1, 3, 1, None, Value::from("v0"));
        assert_eq!(c.cvr_read(ProcessId(1)).unwrap(), (Value::from("v0"), TAG0));
    }

    #[test]
    fn concurrent_writers_can_both_change() {
        let mut both = 0;
        for seed in 0..200 {
            let mut c = cluster(3, 5, seed, Some(4), Value::default());
            let out = c
                .run(vec![
                    (ProcessId(1), Step::now(Task::Write { value: Value::from("a"), ver: Some(TAG0) })),
                    (ProcessId(2), Step::now(Task::Write { value: Value::from("b"), ver: Some(TAG0) })),
                ])
                .unwrap();
            if let [TaskOutcome::Write(a), TaskOutcome::Write(b)] = &out[..] {
                if a.changed() && b.changed() {
                    both += 1;
                    assert_eq!((a.tag, b.tag), (Tag::new(1, 1), Tag::new(1, 2)));
                    assert_eq!(c.cvr_read(ProcessId(3)).unwrap(), (Value::from("b"), Tag::new(1, 2)));
                }
            }
        }
        assert!(both > 0);
    }

    #[test]
    fn survives_minority_crash() {
        let cfg = SimConfig { seed: 5, replicas: 5, writers: 1, ops_per_client: 3, crashes: 2, ..Default::default() };
        let run = simulate(&cfg, None, Value::default()).unwrap();
        assert_eq!(run.stats.crashed.len(), 2);
        assert!(run.clients().all(|d| d.outcomes().len() == 3));
    }

    #[test]
    fn majority_crash_rejected() {
        let cfg = SimConfig { replicas: 5, crashes: 3, ..Default::default() };
        assert!(matches!(simulate(&cfg, None, Value::default()), Err(Error::InvalidConfig(_))));
    }
}
