//! Deterministic discrete-event simulation of an asynchronous
//! message-passing system with reliable channels and crash faults.
//!
//! Processes are event-driven automata implementing [`Node`]. Handlers
//! never touch the network directly: they fill an [`Effects`] buffer that
//! the driver applies. [`Sim`] applies effects with seeded random delays,
//! [`explore`] applies them by branching over every possible delivery
//! order. Messages travel as encoded bytes, so every delivery runs the
//! [`Wire`] codec.

use std::cmp::Reverse;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, PendingOp};
use crate::history::{Args, EventKind, History, HistoryEvent, OpKind, Output};
use crate::types::{ProcessId, Value};

/// Byte encoding of protocol messages.
pub trait Wire: Sized {
    fn encode(&self) -> Vec<u8>;
    fn decode(bytes: &[u8]) -> Result<Self, Error>;
}

/// Which history an operation record belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Level {
    /// `cvr-write` / `cvr-read`, checked by the coverability checkers.
    Register,
    /// Application operations built on top of the register.
    App,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Record {
    Invoke {
        level: Level,
        op_id: u64,
        op: OpKind,
        args: Args,
    },
    Respond {
        level: Level,
        op_id: u64,
        op: OpKind,
        result: Output,
    },
}

/// Side effects produced by one handler invocation.
#[derive(Debug)]
pub struct Effects<M> {
    sends: Vec<(ProcessId, M)>,
    timers: Vec<(u64, u64)>,
    wakes: Vec<Option<u64>>,
    records: Vec<Record>,
}

impl<M> Default for Effects<M> {
    fn default() -> Self {
        Effects {
            sends: Vec::new(),
            timers: Vec::new(),
            wakes: Vec::new(),
            records: Vec::new(),
        }
    }
}

impl<M: Clone> Effects<M> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn send(&mut self, dst: ProcessId, msg: M) {
        self.sends.push((dst, msg));
    }

    pub fn broadcast<'a>(&mut self, dsts: impl IntoIterator<Item = &'a ProcessId>, msg: &M) {
        for d in dsts {
            self.sends.push((*d, msg.clone()));
        }
    }

    /// Fire `on_timer(token)` after `delay` time units.
    pub fn set_timer(&mut self, delay: u64, token: u64) {
        self.timers.push((delay, token));
    }

    /// Schedule `on_wake` after `delay`, or after a random think time.
    pub fn wake(&mut self, delay: Option<u64>) {
        self.wakes.push(delay);
    }

    pub fn invoke(&mut self, level: Level, op_id: u64, op: OpKind, args: Args) {
        self.records.push(Record::Invoke {
            level,
            op_id,
            op,
            args,
        });
    }

    pub fn respond(&mut self, level: Level, op_id: u64, op: OpKind, result: Output) {
        self.records.push(Record::Respond {
            level,
            op_id,
            op,
            result,
        });
    }

    pub fn sends(&self) -> &[(ProcessId, M)] {
        &self.sends
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.sends.is_empty() && self.timers.is_empty() && self.wakes.is_empty() && self.records.is_empty()
    }
}

/// An automaton hosted by the simulator.
pub trait Node {
    type Msg: Wire + Clone;

    fn on_message(&mut self, from: ProcessId, msg: Self::Msg, fx: &mut Effects<Self::Msg>);

    fn on_wake(&mut self, _fx: &mut Effects<Self::Msg>) {}

    fn on_timer(&mut self, _token: u64, _fx: &mut Effects<Self::Msg>) {}

    fn is_client(&self) -> bool {
        false
    }

    /// Work a live client still owes; `Some` at the end of a run means the
    /// run did not quiesce.
    fn pending(&self) -> Option<PendingOp> {
        None
    }

    /// True when delivering `msg` now and at any later point is a no-op.
    /// Used by [`explore`] to prune stale replies; must be monotone.
    fn ignores(&self, _from: ProcessId, _msg: &Self::Msg) -> bool {
        false
    }
}

/// Parameters of a simulated run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimConfig {
    pub seed: u64,
    pub replicas: usize,
    pub writers: usize,
    pub readers: usize,
    pub ops_per_client: usize,
    /// Server crashes injected at random times.
    pub crashes: usize,
    /// Upper bound on message delay; `None` means the default wide spread.
    pub delay_bound: Option<u64>,
    /// Client crashes injected at random times (off by default).
    pub client_crashes: usize,
    /// Reject configurations that cannot guarantee termination.
    pub liveness: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            replicas: 3,
            writers: 1,
            readers: 0,
            ops_per_client: 1,
            crashes: 0,
            delay_bound: None,
            client_crashes: 0,
            liveness: true,
        }
    }
}

impl SimConfig {
    pub fn clients(&self) -> usize {
        self.writers + self.readers
    }

    /// Largest number of crashes that leaves a majority of `n` alive.
    pub fn minority(n: usize) -> usize {
        n.saturating_sub(1) / 2
    }

    /// Checks shared by every protocol; `crash_budget` is the protocol's
    /// tolerance for `crashes`.
    pub fn validate(&self, crash_budget: usize) -> Result<(), Error> {
        if self.replicas == 0 {
            return Err(Error::InvalidConfig("need at least one replica".into()));
        }
        if self.clients() == 0 {
            return Err(Error::InvalidConfig("need at least one client".into()));
        }
        if self.crashes > self.replicas {
            return Err(Error::InvalidConfig(format!(
                "cannot crash {} of {} servers",
                self.crashes, self.replicas
            )));
        }
        if self.liveness && self.crashes > crash_budget {
            return Err(Error::InvalidConfig(format!(
                "{} crashes exceed the fault budget of {crash_budget} (a majority must stay alive)",
                self.crashes
            )));
        }
        if self.client_crashes > self.clients() {
            return Err(Error::InvalidConfig("more client crashes than clients".into()));
        }
        if self.delay_bound == Some(0) {
            return Err(Error::InvalidConfig("delay bound must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SimEventKind {
    Deliver,
    Crash,
    ClientStep,
    Timer(u64),
}

/// A scheduled event. `seq` is unique and increases in scheduling order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimEvent {
    pub seq: u64,
    pub due: u64,
    pub kind: SimEventKind,
    pub src: ProcessId,
    pub dst: ProcessId,
    pub payload: Vec<u8>,
}

/// Message accounting for one run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SimStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub events: u64,
    pub crashed: Vec<ProcessId>,
}

impl SimStats {
    /// Every sent message was either delivered once or dropped because an
    /// endpoint crashed.
    pub fn balanced(&self) -> bool {
        self.sent == self.delivered + self.dropped
    }
}

const DEFAULT_SPREAD: u64 = 32;
const EVENT_LIMIT: u64 = 50_000_000;

/// The seeded simulator.
pub struct Sim<N: Node> {
    nodes: Vec<N>,
    rng: ChaCha8Rng,
    now: u64,
    next_seq: u64,
    queue: BinaryHeap<Reverse<(u64, u64)>>,
    scheduled: BTreeMap<u64, SimEvent>,
    crashed: BTreeSet<ProcessId>,
    history: History,
    app_history: History,
    clock: u64,
    stats: SimStats,
    delay_bound: Option<u64>,
}

impl<N: Node> Sim<N> {
    /// Node `i` gets process id `i + 1`.
    pub fn new(nodes: Vec<N>, seed: u64, delay_bound: Option<u64>, initial: Value) -> Self {
        Sim {
            nodes,
            rng: ChaCha8Rng::seed_from_u64(seed),
            now: 0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            scheduled: BTreeMap::new(),
            crashed: BTreeSet::new(),
            history: History::new(initial.clone()),
            app_history: History::new(initial),
            clock: 0,
            stats: SimStats::default(),
            delay_bound,
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn nodes(&self) -> &[N] {
        &self.nodes
    }

    pub fn node(&self, p: ProcessId) -> Option<&N> {
        (p.0 as usize).checked_sub(1).and_then(|i| self.nodes.get(i))
    }

    pub fn node_mut(&mut self, p: ProcessId) -> Option<&mut N> {
        (p.0 as usize).checked_sub(1).and_then(|i| self.nodes.get_mut(i))
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn app_history(&self) -> &History {
        &self.app_history
    }

    pub fn stats(&self) -> &SimStats {
        &self.stats
    }

    pub fn is_crashed(&self, p: ProcessId) -> bool {
        self.crashed.contains(&p)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn into_parts(self) -> (Vec<N>, History, History, SimStats) {
        (self.nodes, self.history, self.app_history, self.stats)
    }

    fn max_delay(&self) -> u64 {
        self.delay_bound.unwrap_or(DEFAULT_SPREAD)
    }

    fn message_delay(&mut self) -> u64 {
        match self.delay_bound {
            Some(b) => self.rng.gen_range(1..=b),
            None => {
                let base = self.rng.gen_range(1..=DEFAULT_SPREAD);
                // occasional stragglers
                if self.rng.gen_ratio(1, 16) {
                    base + self.rng.gen_range(0..=8 * DEFAULT_SPREAD)
                } else {
                    base
                }
            }
        }
    }

    fn think_time(&mut self) -> u64 {
        let m = self.max_delay();
        self.rng.gen_range(1..=4 * m)
    }

    fn schedule(&mut self, due: u64, kind: SimEventKind, src: ProcessId, dst: ProcessId, payload: Vec<u8>) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse((due, seq)));
        self.scheduled.insert(
            seq,
            SimEvent {
                seq,
                due,
                kind,
                src,
                dst,
                payload,
            },
        );
    }

    /// Schedule a wake-up of process `p`.
    pub fn wake(&mut self, p: ProcessId, delay: Option<u64>) {
        let d = match delay {
            Some(d) => d,
            None => self.think_time(),
        };
        self.schedule(self.now + d, SimEventKind::ClientStep, p, p, Vec::new());
    }

    /// Crash process `p` at logical time `at`. From then on nothing is
    /// delivered to or from it.
    pub fn crash(&mut self, p: ProcessId, at: u64) -> Result<(), Error> {
        if self.node(p).is_none() {
            return Err(Error::UnknownProcess(p.0));
        }
        let due = at.max(self.now);
        self.schedule(due, SimEventKind::Crash, p, p, Vec::new());
        Ok(())
    }

    fn apply(&mut self, me: ProcessId, fx: Effects<N::Msg>) {
        for r in fx.records {
            self.clock += 1;
            let seq = self.clock;
            let (level, ev) = match r {
                Record::Invoke {
                    level,
                    op_id,
                    op,
                    args,
                } => (
                    level,
                    HistoryEvent {
                        seq,
                        kind: EventKind::Invoke,
                        proc: me,
                        op,
                        op_id,
                        args,
                        result: None,
                    },
                ),
                Record::Respond {
                    level,
                    op_id,
                    op,
                    result,
                } => (
                    level,
                    HistoryEvent {
                        seq,
                        kind: EventKind::Respond,
                        proc: me,
                        op,
                        op_id,
                        args: Args::None,
                        result: Some(result),
                    },
                ),
            };
            match level {
                Level::Register => self.history.events.push(ev),
                Level::App => self.app_history.events.push(ev),
            }
        }
        for (dst, msg) in fx.sends {
            let d = self.message_delay();
            self.stats.sent += 1;
            self.schedule(self.now + d, SimEventKind::Deliver, me, dst, msg.encode());
        }
        for (delay, token) in fx.timers {
            self.schedule(self.now + delay, SimEventKind::Timer(token), me, me, Vec::new());
        }
        for w in fx.wakes {
            self.wake(me, w);
        }
    }

    /// Process a single event. Returns false when nothing is scheduled.
    pub fn step(&mut self) -> Result<bool, Error> {
        let Some(Reverse((due, seq))) = self.queue.pop() else {
            return Ok(false);
        };
        let ev = self.scheduled.remove(&seq).expect("scheduled event");
        self.now = due;
        self.stats.events += 1;
        match ev.kind {
            SimEventKind::Deliver => {
                if self.crashed.contains(&ev.dst) || self.crashed.contains(&ev.src) {
                    self.stats.dropped += 1;
                    return Ok(true);
                }
                let msg = N::Msg::decode(&ev.payload)?;
                let mut fx = Effects::new();
                let idx = ev.dst.0 as usize - 1;
                self.nodes[idx].on_message(ev.src, msg, &mut fx);
                self.stats.delivered += 1;
                self.apply(ev.dst, fx);
            }
            SimEventKind::Crash => {
                if self.crashed.insert(ev.dst) {
                    self.stats.crashed.push(ev.dst);
                }
            }
            SimEventKind::ClientStep | SimEventKind::Timer(_) => {
                if self.crashed.contains(&ev.dst) {
                    return Ok(true);
                }
                let mut fx = Effects::new();
                let idx = ev.dst.0 as usize - 1;
                match ev.kind {
                    SimEventKind::Timer(token) => self.nodes[idx].on_timer(token, &mut fx),
                    _ => self.nodes[idx].on_wake(&mut fx),
                }
                self.apply(ev.dst, fx);
            }
        }
        Ok(true)
    }

    /// Run until no event is left, then report live clients that still
    /// have work outstanding.
    pub fn run(&mut self) -> Result<(), Error> {
        let start = self.stats.events;
        while self.step()? {
            if self.stats.events - start > EVENT_LIMIT {
                break;
            }
        }
        let pending: Vec<PendingOp> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.crashed.contains(&ProcessId(*i as u64 + 1)))
            .filter_map(|(_, n)| n.pending())
            .collect();
        if pending.is_empty() {
            Ok(())
        } else {
            Err(Error::Deadlock { pending })
        }
    }
}

/// Draw `count` distinct processes from `candidates`, each with a crash
/// time in `[0, horizon]`.
pub fn random_crashes(
    rng: &mut ChaCha8Rng,
    candidates: &[ProcessId],
    count: usize,
    horizon: u64,
) -> Vec<(ProcessId, u64)> {
    let mut pool = candidates.to_vec();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count.min(pool.len()) {
        let i = rng.gen_range(0..pool.len());
        let p = pool.swap_remove(i);
        out.push((p, rng.gen_range(0..=horizon)));
    }
    out
}

// ---------------------------------------------------------------------------
// Exhaustive exploration
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Pending {
    Deliver {
        src: ProcessId,
        dst: ProcessId,
        payload: Vec<u8>,
    },
    Wake(ProcessId),
    Timer(ProcessId, u64),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExploreStats {
    pub states: usize,
    pub terminals: usize,
    pub truncated: bool,
}

/// Search bounds and reductions for [`explore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExploreOptions {
    /// At most this many distinct states are expanded.
    pub limit: usize,
    /// Deliver messages sent by non-client nodes in the same step that
    /// produced them. Explores every order in which servers handle
    /// requests, but not reply reordering; reachability results are
    /// sound, exhaustiveness claims hold only for the fused model.
    pub fuse_server_replies: bool,
}

impl ExploreOptions {
    pub fn exhaustive(limit: usize) -> Self {
        ExploreOptions {
            limit,
            fuse_server_replies: false,
        }
    }
}

fn explore_step<N: Node>(
    nodes: &mut [N],
    pending: &mut Vec<Pending>,
    item: &Pending,
    fuse: bool,
) -> Result<(), Error> {
    let mut work = vec![item.clone()];
    while let Some(item) = work.pop() {
        let mut fx = Effects::new();
        let me = match &item {
            Pending::Deliver { src, dst, payload } => {
                let msg = N::Msg::decode(payload)?;
                if nodes[dst.0 as usize - 1].ignores(*src, &msg) {
                    continue;
                }
                nodes[dst.0 as usize - 1].on_message(*src, msg, &mut fx);
                *dst
            }
            Pending::Wake(p) => {
                nodes[p.0 as usize - 1].on_wake(&mut fx);
                *p
            }
            Pending::Timer(p, t) => {
                nodes[p.0 as usize - 1].on_timer(*t, &mut fx);
                *p
            }
        };
        let inline = fuse && !nodes[me.0 as usize - 1].is_client();
        for (dst, msg) in fx.sends {
            let d = Pending::Deliver {
                src: me,
                dst,
                payload: msg.encode(),
            };
            if inline {
                work.insert(0, d);
            } else {
                pending.push(d);
            }
        }
        for (_, token) in fx.timers {
            pending.push(Pending::Timer(me, token));
        }
        for _ in fx.wakes {
            pending.push(Pending::Wake(me));
        }
    }
    Ok(())
}

/// Visit every terminal state reachable from `nodes` after waking
/// `starters`, over all delivery orders. A state is terminal when nothing
/// is pending or `settled` holds for it; `settled` must stay true once it
/// holds. States are deduplicated by hash.
pub fn explore<N>(
    nodes: Vec<N>,
    starters: &[ProcessId],
    opts: ExploreOptions,
    settled: impl Fn(&[N]) -> bool,
    mut on_terminal: impl FnMut(&[N]),
) -> Result<ExploreStats, Error>
where
    N: Node + Clone + Hash + Eq,
{
    let mut pending: Vec<Pending> = starters.iter().map(|p| Pending::Wake(*p)).collect();
    pending.sort();
    let mut stack = vec![(nodes, pending)];
    let mut seen: HashSet<u64> = HashSet::new();
    let mut stats = ExploreStats::default();
    while let Some((nodes, pending)) = stack.pop() {
        let mut h = DefaultHasher::new();
        nodes.hash(&mut h);
        pending.hash(&mut h);
        if !seen.insert(h.finish()) {
            continue;
        }
        stats.states += 1;
        if stats.states > opts.limit {
            stats.truncated = true;
            break;
        }
        if pending.is_empty() || settled(&nodes) {
            stats.terminals += 1;
            on_terminal(&nodes);
            continue;
        }
        let mut last: Option<&Pending> = None;
        for (i, item) in pending.iter().enumerate() {
            if last == Some(item) {
                continue;
            }
            last = Some(item);
            let mut next_nodes = nodes.clone();
            let mut next_pending = pending.clone();
            next_pending.remove(i);
            explore_step(&mut next_nodes, &mut next_pending, item, opts.fuse_server_replies)?;
            // Drop messages their receiver will ignore forever.
            next_pending.retain(|p| match p {
                Pending::Deliver { src, dst, payload } => match N::Msg::decode(payload) {
                    Ok(m) => !next_nodes[dst.0 as usize - 1].ignores(*src, &m),
                    Err(_) => true,
                },
                _ => true,
            });
            next_pending.sort();
            stack.push((next_nodes, next_pending));
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Ping-pong automaton: node 1 sends `n` pings to node 2, which echoes.
    #[derive(Clone, Debug, PartialEq, Eq, Hash)]
    struct Echo {
        sent: u64,
        got: Vec<u8>,
        total: u64,
    }

    impl Wire for u8 {
        fn encode(&self) -> Vec<u8> {
            vec![*self]
        }
        fn decode(b: &[u8]) -> Result<Self, Error> {
            b.first().copied().ok_or_else(|| Error::MalformedHistory("empty".into()))
        }
    }

    impl Node for Echo {
        type Msg = u8;
        fn on_message(&mut self, from: ProcessId, msg: u8, fx: &mut Effects<u8>) {
            self.got.push(msg);
            if from == ProcessId(1) {
                fx.send(from, msg);
            }
        }
        fn on_wake(&mut self, fx: &mut Effects<u8>) {
            while self.sent < self.total {
                fx.send(ProcessId(2), self.sent as u8);
                self.sent += 1;
            }
        }
        fn is_client(&self) -> bool {
            self.total > 0
        }
        fn pending(&self) -> Option<PendingOp> {
            (self.total > 0 && (self.got.len() as u64) < self.total).then(|| PendingOp {
                proc: 1,
                op_id: None,
                queued: 0,
            })
        }
    }

    fn pair(n: u64) -> Vec<Echo> {
        vec![
            Echo { sent: 0, got: vec![], total: n },
            Echo { sent: 0, got: vec![], total: 0 },
        ]
    }

    #[test]
    fn deterministic_per_seed() {
        let run = |seed| {
            let mut s = Sim::new(pair(6), seed, None, Value::default());
            s.wake(ProcessId(1), Some(0));
            s.run().unwrap();
            (s.nodes()[0].got.clone(), s.stats().clone())
        };
        assert_eq!(run(3), run(3));
        let (got, stats) = run(3);
        assert_eq!(got.len(), 6);
        assert!(stats.balanced());
        assert_eq!(stats.sent, 12);
    }

    #[test]
    fn crash_drops_traffic() {
        let mut s = Sim::new(pair(4), 1, Some(3), Value::default());
        s.crash(ProcessId(2), 0).unwrap();
        s.wake(ProcessId(1), Some(1));
        let err = s.run().unwrap_err();
        assert!(matches!(err, Error::Deadlock { .. }));
        assert_eq!(s.stats().delivered, 0);
        assert_eq!(s.stats().dropped, 4);
        assert!(s.stats().balanced());
    }

    #[test]
    fn explore_sees_every_order() {
        let mut orders = BTreeSet::new();
        let stats = explore(pair(3), &[ProcessId(1)], ExploreOptions::exhaustive(100_000), |_| false, |nodes| {
            orders.insert(nodes[0].got.clone());
        })
        .unwrap();
        assert!(!stats.truncated);
        // 3 echoes can come back in any of 3! orders
        assert_eq!(orders.len(), 6);
    }

    #[test]
    fn config_validation() {
        let mut c = SimConfig { replicas: 5, crashes: 2, ..SimConfig::default() };
        assert!(c.validate(SimConfig::minority(5)).is_ok());
        c.crashes = 3;
        assert!(c.validate(SimConfig::minority(5)).is_err());
        c.liveness = false;
        assert!(c.validate(SimConfig::minority(5)).is_ok());
    }
}
