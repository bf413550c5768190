//! Single-site ranked registers and their property checks.
//!
//! Operations take effect atomically at their response step; schedules
//! interleave invocation and response steps of several processes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::types::Value;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rank(pub u64);

pub const RANK0: Rank = Rank(0);

impl fmt::Display for Rank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RrResult {
    Commit,
    Abort,
}

/// When a lower-ranked write may commit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Policy {
    /// Every write commits regardless of rank.
    #[default]
    Permissive,
    /// A write aborts when a higher rank has already been seen.
    Strict,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankedState {
    /// Highest-ranked committed pair, `(RANK0, v0)` initially.
    pub committed: (Rank, Value),
    pub highest_seen: Rank,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankedRegister {
    state: RankedState,
    policy: Policy,
}

impl RankedRegister {
    pub fn new(v0: Value, policy: Policy) -> Self {
        RankedRegister {
            state: RankedState {
                committed: (RANK0, v0),
                highest_seen: RANK0,
            },
            policy,
        }
    }

    pub fn state(&self) -> &RankedState {
        &self.state
    }

    /// Returns the outcome and the highest rank observed.
    pub fn rr_write(&mut self, r: Rank, v: Value) -> (RrResult, Rank) {
        let seen = self.state.highest_seen;
        if self.policy == Policy::Strict && r < seen {
            return (RrResult::Abort, seen);
        }
        // A lower-ranked commit leaves the stored pair alone so reads
        // keep returning the highest committed rank.
        if r >= self.state.committed.0 {
            self.state.committed = (r, v);
        }
        self.state.highest_seen = seen.max(r);
        (RrResult::Commit, seen.max(r))
    }

    pub fn rr_read(&mut self, r: Rank) -> (Rank, Value) {
        self.state.highest_seen = self.state.highest_seen.max(r);
        self.state.committed.clone()
    }
}

// ---------------------------------------------------------------------------
// Schedules
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RankedOp {
    Write { rank: Rank, value: Value },
    Read { rank: Rank },
}

impl RankedOp {
    pub fn rank(&self) -> Rank {
        match self {
            RankedOp::Write { rank, .. } | RankedOp::Read { rank } => *rank,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SchedStep {
    Invoke { proc: u64, op: RankedOp },
    /// Complete the pending operation of `proc`.
    Respond { proc: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RankedOutput {
    Write(RrResult, Rank),
    Read(Rank, Value),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankedRecord {
    pub proc: u64,
    pub op: RankedOp,
    pub invoke: usize,
    pub respond: usize,
    pub output: RankedOutput,
}

impl RankedRecord {
    pub fn precedes(&self, other: &RankedRecord) -> bool {
        self.respond < other.invoke
    }
}

/// Execute a schedule; invocations with a pending operation on the same
/// process and responses without one are skipped.
pub fn run_schedule(reg: &mut RankedRegister, schedule: &[SchedStep]) -> Vec<RankedRecord> {
    let mut pending: BTreeMap<u64, (RankedOp, usize)> = BTreeMap::new();
    let mut out = Vec::new();
    for (t, step) in schedule.iter().enumerate() {
        match step {
            SchedStep::Invoke { proc, op } => {
                pending.entry(*proc).or_insert((op.clone(), t));
            }
            SchedStep::Respond { proc } => {
                let Some((op, inv)) = pending.remove(proc) else {
                    continue;
                };
                let output = match &op {
                    RankedOp::Write { rank, value } => {
                        let (res, rh) = reg.rr_write(*rank, value.clone());
                        RankedOutput::Write(res, rh)
                    }
                    RankedOp::Read { rank } => {
                        let (r, v) = reg.rr_read(*rank);
                        RankedOutput::Read(r, v)
                    }
                };
                out.push(RankedRecord {
                    proc: *proc,
                    op,
                    invoke: inv,
                    respond: t,
                    output,
                });
            }
        }
    }
    out
}

/// `procs` processes each run `ops` operations with random ranks in
/// `1..=max_rank`; invocations and responses are shuffled subject to
/// per-process order. Write values are unique.
pub fn random_schedule(rng: &mut ChaCha8Rng, procs: u64, ops: usize, max_rank: u64) -> Vec<SchedStep> {
    let mut per: Vec<Vec<SchedStep>> = (1..=procs)
        .map(|p| {
            (0..ops)
                .flat_map(|k| {
                    let rank = Rank(rng.gen_range(1..=max_rank));
                    let op = if rng.gen_bool(0.6) {
                        RankedOp::Write {
                            rank,
                            value: Value::new(format!("p{p}.{k}")),
                        }
                    } else {
                        RankedOp::Read { rank }
                    };
                    [SchedStep::Invoke { proc: p, op }, SchedStep::Respond { proc: p }]
                })
                .rev()
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    loop {
        let live: Vec<usize> = (0..per.len()).filter(|&i| !per[i].is_empty()).collect();
        let Some(&i) = live.choose(rng) else {
            break;
        };
        out.push(per[i].pop().unwrap());
    }
    out
}

/// Property violations found in a ranked history.
pub fn check_ranked(records: &[RankedRecord], v0: &Value) -> Vec<String> {
    let mut bad = Vec::new();
    let written: BTreeSet<(Rank, &Value)> = records
        .iter()
        .filter_map(|r| match &r.op {
            RankedOp::Write { rank, value } => Some((*rank, value)),
            _ => None,
        })
        .collect();
    for r in records {
        if let (RankedOp::Read { rank: r2 }, RankedOutput::Read(got, v)) = (&r.op, &r.output) {
            if !(*got == RANK0 && v == v0) && !written.contains(&(*got, v)) {
                bad.push(format!("safety: read returned ({got}, {v}) which was never written"));
            }
            for w in records {
                if let (RankedOp::Write { rank: r1, .. }, RankedOutput::Write(RrResult::Commit, _)) = (&w.op, &w.output) {
                    if w.precedes(r) && r2 > r1 && got < r1 {
                        bad.push(format!(
                            "safety: read at {r2} returned {got} after a commit at {r1}"
                        ));
                    }
                }
            }
        }
        if let (RankedOp::Write { rank: r1, .. }, RankedOutput::Write(RrResult::Abort, rh)) = (&r.op, &r.output) {
            if rh <= r1 {
                bad.push(format!("non-triviality: abort at {r1} reported {rh}"));
            }
            let justified = records
                .iter()
                .any(|o| o.op.rank() > *r1 && (o.precedes(r) || !r.precedes(o)));
            if !justified {
                bad.push(format!("non-triviality: write at {r1} aborted with no higher-ranked operation"));
            }
        }
    }
    bad
}

/// A committed write at rank 5 followed by a write at rank 2. Under the
/// permissive policy the second write commits too.
pub fn lower_rank_commit_schedule() -> Vec<SchedStep> {
    vec![
        SchedStep::Invoke {
            proc: 1,
            op: RankedOp::Write {
                rank: Rank(5),
                value: Value::from("high"),
            },
        },
        SchedStep::Respond { proc: 1 },
        SchedStep::Invoke {
            proc: 2,
            op: RankedOp::Write {
                rank: Rank(2),
                value: Value::from("low"),
            },
        },
        SchedStep::Respond { proc: 2 },
        SchedStep::Invoke {
            proc: 3,
            op: RankedOp::Read { rank: Rank(7) },
        },
        SchedStep::Respond { proc: 3 },
    ]
}

/// True when a write commits after a higher-ranked write had already
/// committed and responded.
pub fn has_lower_rank_commit(records: &[RankedRecord]) -> bool {
    records.iter().any(|lo| {
        matches!(lo.output, RankedOutput::Write(RrResult::Commit, _))
            && records.iter().any(|hi| {
                matches!(hi.output, RankedOutput::Write(RrResult::Commit, _))
                    && hi.precedes(lo)
                    && hi.op.rank() > lo.op.rank()
                    && matches!(hi.op, RankedOp::Write { .. })
                    && matches!(lo.op, RankedOp::Write { .. })
            })
    })
}
