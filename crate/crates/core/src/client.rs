//! Client-side plumbing shared by all register protocols.
//!
//! A protocol supplies a [`RegisterClient`] (the two-phase state machine
//! for a single `cvr-write` or `cvr-read`) and a [`Server`] automaton. The
//! [`Driver`] sequences a client's workload: it runs each [`Task`] as one
//! or more register operations, logs invocations and responses, and
//! implements the application-level tasks (rmw, revise, get, propose,
//! edit) on top of the register.

use std::collections::VecDeque;
use std::fmt::Debug;
use std::hash::Hash;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::apps::{self, ModifierFunction, ReviseOutcome};
use crate::error::{Error, PendingOp};
use crate::history::{Args, History, OpKind, Output, RmwRecord};
use crate::simnet::{Effects, Level, Node, Sim, SimConfig, SimStats, Wire};
use crate::types::{
    CoverableRegister, Flag, ProcessId, RegisterState, Tag, Value, WriteOutcome, TAG0,
};

/// A single register operation handed to a protocol client.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RegOp {
    Write { value: Value, ver: Tag },
    Read,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RegResult {
    Write(WriteOutcome),
    Read(Value, Tag),
}

/// Protocol-specific client automaton. Runs one operation at a time.
pub trait RegisterClient: Clone + Debug + Hash + Eq {
    type Msg: Wire + Clone + Debug;

    fn start(&mut self, op_id: u64, op: RegOp, fx: &mut Effects<Self::Msg>);

    /// Returns the result once the running operation completes.
    fn on_message(
        &mut self,
        from: ProcessId,
        msg: Self::Msg,
        fx: &mut Effects<Self::Msg>,
    ) -> Option<RegResult>;

    fn on_timer(&mut self, _token: u64, _fx: &mut Effects<Self::Msg>) -> Option<RegResult> {
        None
    }

    /// See [`Node::ignores`].
    fn ignores(&self, _from: ProcessId, _msg: &Self::Msg) -> bool {
        false
    }
}

/// Protocol-specific server automaton.
pub trait Server: Clone + Debug + Hash + Eq {
    type Msg: Wire + Clone + Debug;

    fn on_message(&mut self, from: ProcessId, msg: Self::Msg, fx: &mut Effects<Self::Msg>);
}

/// Work items a client executes in order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    Read,
    /// `cvr-write(value, ver)`; `None` uses the largest tag this client has
    /// witnessed so far.
    Write { value: Value, ver: Option<Tag> },
    /// Weak read-modify-write; `pause` time units between read and write.
    Rmw { f: ModifierFunction, pause: u64 },
    Revise { value: Value, ver: Option<Tag> },
    Get,
    /// Consensus proposal: `cvr-write(value, TAG0)`.
    Propose { value: Value },
    /// Append `line` to a file object with get/revise, rebasing until a
    /// get confirms the line is part of the latest version.
    Edit { line: Value },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Step {
    pub task: Task,
    /// Time before invocation; `None` draws a random think time.
    pub delay: Option<u64>,
}

impl Step {
    pub fn now(task: Task) -> Self {
        Step {
            task,
            delay: Some(0),
        }
    }

    pub fn after(delay: u64, task: Task) -> Self {
        Step {
            task,
            delay: Some(delay),
        }
    }

    pub fn think(task: Task) -> Self {
        Step { task, delay: None }
    }
}

/// Result of a finished [`Task`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TaskOutcome {
    Read(Value, Tag),
    Write(WriteOutcome),
    Rmw(RmwRecord),
    Get(Value, Tag),
    Revise(ReviseOutcome),
    Propose(Value),
    Edit { applied: bool, attempts: u32, tag: Tag },
}

const EDIT_ATTEMPTS: u32 = 10_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum RmwStage {
    Reading,
    Paused { oldval: Value, lcver: Tag },
    Writing { oldval: Value, lcver: Tag },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum EditStage {
    Getting,
    Revising,
    Confirming,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Active {
    Read,
    Write,
    Rmw {
        app: u64,
        f: ModifierFunction,
        pause: u64,
        stage: RmwStage,
    },
    Get {
        app: u64,
    },
    Revise {
        app: u64,
    },
    Propose {
        app: u64,
    },
    Edit {
        app: u64,
        line: Value,
        attempts: u32,
        stage: EditStage,
    },
}

/// Hosts a protocol client and runs its workload.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Driver<C> {
    pub id: ProcessId,
    core: C,
    queue: VecDeque<Step>,
    active: Option<Active>,
    reg_op: Option<(u64, OpKind)>,
    counter: u64,
    seen: RegisterState,
    outcomes: Vec<TaskOutcome>,
}

impl<C: RegisterClient> Driver<C> {
    pub fn new(id: ProcessId, core: C, v0: Value) -> Self {
        Driver {
            id,
            core,
            queue: VecDeque::new(),
            active: None,
            reg_op: None,
            counter: 0,
            seen: RegisterState::initial(v0),
            outcomes: Vec::new(),
        }
    }

    pub fn core(&self) -> &C {
        &self.core
    }

    pub fn outcomes(&self) -> &[TaskOutcome] {
        &self.outcomes
    }

    pub fn is_idle(&self) -> bool {
        self.active.is_none() && self.queue.is_empty()
    }

    pub fn enqueue(&mut self, steps: impl IntoIterator<Item = Step>) {
        self.queue.extend(steps);
    }

    /// Delay of the next queued step, if any.
    pub fn next_delay(&self) -> Option<Option<u64>> {
        self.queue.front().map(|s| s.delay)
    }

    fn next_id(&mut self) -> u64 {
        self.counter += 1;
        (self.id.0 << 32) | self.counter
    }

    fn begin_reg(&mut self, op: RegOp, fx: &mut Effects<C::Msg>) {
        let id = self.next_id();
        let (kind, args) = match &op {
            RegOp::Write { value, ver } => (
                OpKind::CvrWrite,
                Args::Write {
                    value: value.clone(),
                    ver: *ver,
                },
            ),
            RegOp::Read => (OpKind::CvrRead, Args::None),
        };
        fx.invoke(Level::Register, id, kind, args);
        self.reg_op = Some((id, kind));
        self.core.start(id, op, fx);
    }

    fn begin_app(&mut self, op: OpKind, args: Args, fx: &mut Effects<C::Msg>) -> u64 {
        let id = self.next_id();
        fx.invoke(Level::App, id, op, args);
        id
    }

    fn start_task(&mut self, task: Task, fx: &mut Effects<C::Msg>) {
        match task {
            Task::Read => {
                self.active = Some(Active::Read);
                self.begin_reg(RegOp::Read, fx);
            }
            Task::Write { value, ver } => {
                let ver = ver.unwrap_or(self.seen.tag);
                self.active = Some(Active::Write);
                self.begin_reg(RegOp::Write { value, ver }, fx);
            }
            Task::Rmw { f, pause } => {
                let app = self.begin_app(
                    OpKind::Rmw,
                    Args::Rmw {
                        label: f.label().to_string(),
                    },
                    fx,
                );
                self.active = Some(Active::Rmw {
                    app,
                    f,
                    pause,
                    stage: RmwStage::Reading,
                });
                self.begin_reg(RegOp::Read, fx);
            }
            Task::Get => {
                let app = self.begin_app(OpKind::Get, Args::None, fx);
                self.active = Some(Active::Get { app });
                self.begin_reg(RegOp::Read, fx);
            }
            Task::Revise { value, ver } => {
                let ver = ver.unwrap_or(self.seen.tag);
                let app = self.begin_app(
                    OpKind::Revise,
                    Args::Write {
                        value: value.clone(),
                        ver,
                    },
                    fx,
                );
                self.active = Some(Active::Revise { app });
                self.begin_reg(RegOp::Write { value, ver }, fx);
            }
            Task::Propose { value } => {
                let app = self.begin_app(
                    OpKind::Propose,
                    Args::Propose {
                        value: value.clone(),
                    },
                    fx,
                );
                self.active = Some(Active::Propose { app });
                self.begin_reg(RegOp::Write { value, ver: TAG0 }, fx);
            }
            Task::Edit { line } => {
                let app = self.begin_app(OpKind::Get, Args::None, fx);
                self.active = Some(Active::Edit {
                    app,
                    line,
                    attempts: 0,
                    stage: EditStage::Getting,
                });
                self.begin_reg(RegOp::Read, fx);
            }
        }
    }

    fn finish(&mut self, outcome: TaskOutcome, fx: &mut Effects<C::Msg>) {
        self.outcomes.push(outcome);
        self.active = None;
        if let Some(s) = self.queue.front() {
            fx.wake(s.delay);
        }
    }

    fn witness(&mut self, value: &Value, tag: Tag) {
        if tag > self.seen.tag {
            self.seen = RegisterState {
                value: value.clone(),
                tag,
            };
        }
    }

    fn edit_revise(&mut self, base: Value, ver: Tag, line: &Value, fx: &mut Effects<C::Msg>) -> u64 {
        let mut content = base.0;
        content.extend_from_slice(&line.0);
        let value = Value(content);
        let app = self.begin_app(
            OpKind::Revise,
            Args::Write {
                value: value.clone(),
                ver,
            },
            fx,
        );
        self.begin_reg(RegOp::Write { value, ver }, fx);
        app
    }

    fn on_result(&mut self, res: RegResult, fx: &mut Effects<C::Msg>) {
        let (id, kind) = self.reg_op.take().expect("result without running op");
        let out = match &res {
            RegResult::Write(o) => Output::Write(o.clone()),
            RegResult::Read(v, t) => Output::Read {
                value: v.clone(),
                tag: *t,
            },
        };
        fx.respond(Level::Register, id, kind, out);
        match &res {
            RegResult::Write(o) => self.witness(&o.value, o.tag),
            RegResult::Read(v, t) => self.witness(v, *t),
        }
        let Some(active) = self.active.take() else {
            return;
        };
        match (active, res) {
            (Active::Read, RegResult::Read(v, t)) => self.finish(TaskOutcome::Read(v, t), fx),
            (Active::Write, RegResult::Write(o)) => self.finish(TaskOutcome::Write(o), fx),
            (
                Active::Rmw {
                    app,
                    f,
                    pause,
                    stage: RmwStage::Reading,
                },
                RegResult::Read(oldval, lcver),
            ) => {
                if pause > 0 {
                    self.active = Some(Active::Rmw {
                        app,
                        f,
                        pause,
                        stage: RmwStage::Paused { oldval, lcver },
                    });
                    fx.wake(Some(pause));
                } else {
                    self.rmw_write(app, f, pause, oldval, lcver, fx);
                }
            }
            (
                Active::Rmw {
                    app,
                    stage: RmwStage::Writing { oldval, lcver },
                    ..
                },
                RegResult::Write(o),
            ) => {
                let r = apps::rmw_finish(&o);
                let rec = RmwRecord {
                    status: r.status,
                    value: r.value,
                    oldval,
                    read_tag: lcver,
                    write_tag: o.tag,
                };
                fx.respond(Level::App, app, OpKind::Rmw, Output::Rmw(rec.clone()));
                self.finish(TaskOutcome::Rmw(rec), fx);
            }
            (Active::Get { app }, RegResult::Read(v, t)) => {
                fx.respond(
                    Level::App,
                    app,
                    OpKind::Get,
                    Output::Read {
                        value: v.clone(),
                        tag: t,
                    },
                );
                self.finish(TaskOutcome::Get(v, t), fx);
            }
            (Active::Revise { app }, RegResult::Write(o)) => {
                let r = apps::revise_finish(&o);
                fx.respond(Level::App, app, OpKind::Revise, r.to_output());
                self.finish(TaskOutcome::Revise(r), fx);
            }
            (Active::Propose { app }, RegResult::Write(o)) => {
                fx.respond(
                    Level::App,
                    app,
                    OpKind::Propose,
                    Output::Propose {
                        value: o.value.clone(),
                    },
                );
                self.finish(TaskOutcome::Propose(o.value), fx);
            }
            (
                Active::Edit {
                    app,
                    line,
                    attempts,
                    stage,
                },
                res,
            ) => self.edit_step(app, line, attempts, stage, res, fx),
            (a, r) => unreachable!("result {r:?} does not fit task {a:?}"),
        }
    }

    fn rmw_write(
        &mut self,
        app: u64,
        f: ModifierFunction,
        pause: u64,
        oldval: Value,
        lcver: Tag,
        fx: &mut Effects<C::Msg>,
    ) {
        let newv = f.apply(&oldval);
        self.active = Some(Active::Rmw {
            app,
            f,
            pause,
            stage: RmwStage::Writing {
                oldval,
                lcver,
            },
        });
        self.begin_reg(RegOp::Write { value: newv, ver: lcver }, fx);
    }

    fn edit_step(
        &mut self,
        app: u64,
        line: Value,
        attempts: u32,
        stage: EditStage,
        res: RegResult,
        fx: &mut Effects<C::Msg>,
    ) {
        let (base, ver, done) = match (stage, res) {
            (EditStage::Getting, RegResult::Read(v, t)) => {
                fx.respond(Level::App, app, OpKind::Get, Output::Read { value: v.clone(), tag: t });
                (v, t, false)
            }
            (EditStage::Revising, RegResult::Write(o)) => {
                let r = apps::revise_finish(&o);
                fx.respond(Level::App, app, OpKind::Revise, r.to_output());
                if o.flag == Flag::Chg {
                    let app = self.begin_app(OpKind::Get, Args::None, fx);
                    self.active = Some(Active::Edit {
                        app,
                        line,
                        attempts,
                        stage: EditStage::Confirming,
                    });
                    self.begin_reg(RegOp::Read, fx);
                    return;
                }
                (o.value, o.tag, false)
            }
            (EditStage::Confirming, RegResult::Read(v, t)) => {
                fx.respond(Level::App, app, OpKind::Get, Output::Read { value: v.clone(), tag: t });
                let applied = contains(&v.0, &line.0);
                (v, t, applied)
            }
            (s, r) => unreachable!("edit stage {s:?} got {r:?}"),
        };
        if done || attempts >= EDIT_ATTEMPTS {
            self.finish(
                TaskOutcome::Edit {
                    applied: done,
                    attempts,
                    tag: ver,
                },
                fx,
            );
            return;
        }
        let app = self.edit_revise(base, ver, &line, fx);
        self.active = Some(Active::Edit {
            app,
            line,
            attempts: attempts + 1,
            stage: EditStage::Revising,
        });
    }

    fn wake(&mut self, fx: &mut Effects<C::Msg>) {
        match self.active.take() {
            Some(Active::Rmw {
                app,
                f,
                pause,
                stage: RmwStage::Paused { oldval, lcver },
            }) => self.rmw_write(app, f, pause, oldval, lcver, fx),
            Some(a) => self.active = Some(a),
            None => {
                if let Some(step) = self.queue.pop_front() {
                    self.start_task(step.task, fx);
                }
            }
        }
    }
}

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    needle.is_empty() || hay.windows(needle.len()).any(|w| w == needle)
}

/// A process in a simulated register system.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Proc<C, S> {
    Client(Driver<C>),
    Server(S),
}

impl<C, S> Proc<C, S> {
    pub fn as_client(&self) -> Option<&Driver<C>> {
        match self {
            Proc::Client(d) => Some(d),
            Proc::Server(_) => None,
        }
    }

    pub fn as_client_mut(&mut self) -> Option<&mut Driver<C>> {
        match self {
            Proc::Client(d) => Some(d),
            Proc::Server(_) => None,
        }
    }

    pub fn as_server(&self) -> Option<&S> {
        match self {
            Proc::Server(s) => Some(s),
            Proc::Client(_) => None,
        }
    }
}

impl<C, S> Node for Proc<C, S>
where
    C: RegisterClient,
    S: Server<Msg = C::Msg>,
{
    type Msg = C::Msg;

    fn on_message(&mut self, from: ProcessId, msg: C::Msg, fx: &mut Effects<C::Msg>) {
        match self {
            Proc::Client(d) => {
                if let Some(r) = d.core.on_message(from, msg, fx) {
                    d.on_result(r, fx);
                }
            }
            Proc::Server(s) => s.on_message(from, msg, fx),
        }
    }

    fn on_wake(&mut self, fx: &mut Effects<C::Msg>) {
        if let Proc::Client(d) = self {
            d.wake(fx);
        }
    }

    fn on_timer(&mut self, token: u64, fx: &mut Effects<C::Msg>) {
        if let Proc::Client(d) = self {
            if let Some(r) = d.core.on_timer(token, fx) {
                d.on_result(r, fx);
            }
        }
    }

    fn is_client(&self) -> bool {
        matches!(self, Proc::Client(_))
    }

    fn pending(&self) -> Option<PendingOp> {
        match self {
            Proc::Client(d) if !d.is_idle() => Some(PendingOp {
                proc: d.id.0,
                op_id: d.reg_op.map(|(id, _)| id),
                queued: d.queue.len(),
            }),
            _ => None,
        }
    }

    fn ignores(&self, from: ProcessId, msg: &C::Msg) -> bool {
        match self {
            Proc::Client(d) => d.core.ignores(from, msg),
            Proc::Server(_) => false,
        }
    }
}

/// Everything a finished simulation produced.
#[derive(Clone, Debug)]
pub struct SimRun<N> {
    pub history: History,
    pub app_history: History,
    pub stats: SimStats,
    pub nodes: Vec<N>,
}

impl<C, S> SimRun<Proc<C, S>> {
    pub fn clients(&self) -> impl Iterator<Item = &Driver<C>> {
        self.nodes.iter().filter_map(Proc::as_client)
    }

    pub fn servers(&self) -> impl Iterator<Item = &S> {
        self.nodes.iter().filter_map(Proc::as_server)
    }
}

/// Hand each client its steps, wake the first step of every client and
/// run to quiescence.
pub fn run_workload<C, S>(
    mut sim: Sim<Proc<C, S>>,
    workload: Vec<Vec<Step>>,
) -> Result<SimRun<Proc<C, S>>, Error>
where
    C: RegisterClient,
    S: Server<Msg = C::Msg>,
{
    for (i, steps) in workload.into_iter().enumerate() {
        let pid = ProcessId(i as u64 + 1);
        let Some(Proc::Client(d)) = sim.node_mut(pid) else {
            return Err(Error::UnknownProcess(pid.0));
        };
        d.enqueue(steps);
        if let Some(delay) = d.next_delay() {
            sim.wake(pid, delay);
        }
    }
    sim.run()?;
    let (nodes, history, app_history, stats) = sim.into_parts();
    Ok(SimRun {
        history,
        app_history,
        stats,
        nodes,
    })
}

/// Writers alternate `cvr-write` (on the latest tag they witnessed) and
/// occasional reads; readers only read.
pub fn random_workload(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<Step>> {
    let mut out = Vec::with_capacity(cfg.clients());
    for c in 0..cfg.clients() {
        let id = c + 1;
        let writer = c < cfg.writers;
        let steps = (0..cfg.ops_per_client)
            .map(|k| {
                if writer && rng.gen_ratio(3, 4) {
                    Step::think(Task::Write {
                        value: Value::new(format!("w{id}.{k}")),
                        ver: None,
                    })
                } else {
                    Step::think(Task::Read)
                }
            })
            .collect();
        out.push(steps);
    }
    out
}

/// A simulated register system that runs operations on demand. Clients are
/// processes `1..=clients`.
pub struct Cluster<C: RegisterClient, S: Server<Msg = C::Msg>> {
    sim: Sim<Proc<C, S>>,
    clients: usize,
}

impl<C, S> Cluster<C, S>
where
    C: RegisterClient,
    S: Server<Msg = C::Msg>,
{
    pub fn from_sim(sim: Sim<Proc<C, S>>, clients: usize) -> Self {
        Cluster { sim, clients }
    }

    pub fn sim(&self) -> &Sim<Proc<C, S>> {
        &self.sim
    }

    pub fn sim_mut(&mut self) -> &mut Sim<Proc<C, S>> {
        &mut self.sim
    }

    pub fn history(&self) -> &History {
        self.sim.history()
    }

    pub fn app_history(&self) -> &History {
        self.sim.app_history()
    }

    pub fn clients(&self) -> usize {
        self.clients
    }

    fn driver_mut(&mut self, p: ProcessId) -> Result<&mut Driver<C>, Error> {
        if p.0 == 0 || p.0 as usize > self.clients {
            return Err(Error::UnknownProcess(p.0));
        }
        match self.sim.node_mut(p) {
            Some(Proc::Client(d)) => Ok(d),
            _ => Err(Error::UnknownProcess(p.0)),
        }
    }

    /// Run a batch of steps concurrently and return their outcomes in batch
    /// order. Steps of one client run in sequence.
    pub fn run(&mut self, batch: Vec<(ProcessId, Step)>) -> Result<Vec<TaskOutcome>, Error> {
        let mut before = Vec::new();
        let mut to_wake = Vec::new();
        for (p, step) in &batch {
            let was_idle;
            {
                let d = self.driver_mut(*p)?;
                was_idle = d.is_idle();
                if !before.iter().any(|(q, _)| q == p) {
                    before.push((*p, d.outcomes().len()));
                }
                d.enqueue([step.clone()]);
            }
            if was_idle {
                to_wake.push((*p, step.delay));
            }
        }
        for (p, delay) in to_wake {
            self.sim.wake(p, delay);
        }
        self.sim.run()?;
        let mut cursor: Vec<(ProcessId, usize)> = before;
        let mut out = Vec::with_capacity(batch.len());
        for (p, _) in &batch {
            let slot = cursor.iter_mut().find(|(q, _)| q == p).expect("known client");
            let d = self.driver_mut(*p)?;
            out.push(d.outcomes()[slot.1].clone());
            let slot = cursor.iter_mut().find(|(q, _)| q == p).expect("known client");
            slot.1 += 1;
        }
        Ok(out)
    }

    pub fn run_one(&mut self, p: ProcessId, task: Task) -> Result<TaskOutcome, Error> {
        Ok(self.run(vec![(p, Step::now(task))])?.remove(0))
    }
}

impl<C, S> CoverableRegister for Cluster<C, S>
where
    C: RegisterClient,
    S: Server<Msg = C::Msg>,
{
    fn cvr_write(&mut self, proc: ProcessId, value: Value, ver: Tag) -> Result<WriteOutcome, Error> {
        match self.run_one(proc, Task::Write { value, ver: Some(ver) })? {
            TaskOutcome::Write(o) => Ok(o),
            other => unreachable!("write produced {other:?}"),
        }
    }

    fn cvr_read(&mut self, proc: ProcessId) -> Result<(Value, Tag), Error> {
        match self.run_one(proc, Task::Read)? {
            TaskOutcome::Read(v, t) => Ok((v, t)),
            other => unreachable!("read produced {other:?}"),
        }
    }
}
