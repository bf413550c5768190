//! Random small register histories for cross-checking the checkers.
//!
//! A history starts as a linearizable execution: operations get random
//! intervals around increasing linearization points and are run in that
//! order against a register that installs chg writes. Processes are
//! assigned so no process has two overlapping operations. Roughly half the
//! histories are then perturbed, which usually breaks atomicity.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::history::{Args, EventKind, History, HistoryEvent, OpKind, Output};
use crate::types::{Flag, ProcessId, Tag, Value, WriteOutcome, TAG0};

#[derive(Clone, Debug)]
struct Plan {
    invoke: u64,
    respond: Option<u64>,
    proc: u64,
    op: OpKind,
    args: Args,
    result: Option<Output>,
}

/// A history of at most `max_ops` register operations.
pub fn random_history(rng: &mut ChaCha8Rng, max_ops: usize) -> History {
    let n = rng.gen_range(1..=max_ops.max(1));
    let v0 = Value::default();
    let mut plans: Vec<Plan> = Vec::with_capacity(n);
    // Intervals: op k linearizes at 10k + 5 and spans a random window
    // around it; odd offsets keep every endpoint distinct.
    let mut procs_free: Vec<u64> = Vec::new();
    for k in 0..n as u64 {
        let lp = 10 * k + 5;
        let inv = lp - 2 * rng.gen_range(0..=2u64) - 1;
        let resp = lp + 2 * rng.gen_range(0..=12u64) + 1;
        // first process whose latest op has finished
        let proc = match procs_free.iter().position(|&free| free < inv) {
            Some(i) => i as u64 + 1,
            None => {
                procs_free.push(0);
                procs_free.len() as u64
            }
        };
        procs_free[proc as usize - 1] = resp;
        plans.push(Plan {
            invoke: inv,
            respond: Some(resp),
            proc,
            op: OpKind::CvrRead,
            args: Args::None,
            result: None,
        });
    }

    let mut cur = (v0.clone(), TAG0);
    let mut produced = vec![TAG0];
    for (k, p) in plans.iter_mut().enumerate() {
        if rng.gen_bool(0.55) {
            let ver = if rng.gen_bool(0.7) {
                cur.1
            } else {
                *produced.choose(rng).expect("TAG0 is always produced")
            };
            let value = Value::new(format!("v{k}"));
            let next = Tag::new(ver.ts + 1, p.proc);
            let out = if next > cur.1 && !produced.contains(&next) {
                produced.push(next);
                cur = (value.clone(), next);
                WriteOutcome { value: value.clone(), tag: next, flag: Flag::Chg }
            } else {
                WriteOutcome { value: cur.0.clone(), tag: cur.1, flag: Flag::Unchg }
            };
            p.op = OpKind::CvrWrite;
            p.args = Args::Write { value, ver };
            p.result = Some(Output::Write(out));
        } else {
            p.result = Some(Output::Read { value: cur.0.clone(), tag: cur.1 });
        }
    }

    // A process's last op may stay pending.
    for proc in 1..=procs_free.len() as u64 {
        if rng.gen_ratio(1, 6) {
            if let Some(p) = plans.iter_mut().filter(|p| p.proc == proc).last() {
                p.respond = None;
                p.result = None;
            }
        }
    }

    if rng.gen_bool(0.5) {
        perturb(rng, &mut plans, &produced);
    }

    let mut events: Vec<(u64, HistoryEvent)> = Vec::new();
    for (i, p) in plans.into_iter().enumerate() {
        let op_id = (p.proc << 32) | (i as u64 + 1);
        events.push((
            p.invoke,
            HistoryEvent {
                seq: 0,
                kind: EventKind::Invoke,
                proc: ProcessId(p.proc),
                op: p.op,
                op_id,
                args: p.args,
                result: None,
            },
        ));
        if let (Some(t), Some(r)) = (p.respond, p.result) {
            events.push((
                t,
                HistoryEvent {
                    seq: 0,
                    kind: EventKind::Respond,
                    proc: ProcessId(p.proc),
                    op: p.op,
                    op_id,
                    args: Args::None,
                    result: Some(r),
                },
            ));
        }
    }
    events.sort_by_key(|(t, _)| *t);
    History {
        initial: v0,
        events: events
            .into_iter()
            .enumerate()
            .map(|(i, (_, mut e))| {
                e.seq = i as u64 + 1;
                e
            })
            .collect(),
    }
}

fn perturb(rng: &mut ChaCha8Rng, plans: &mut [Plan], produced: &[Tag]) {
    let complete: Vec<usize> = (0..plans.len()).filter(|&i| plans[i].result.is_some()).collect();
    let Some(&i) = complete.choose(rng) else {
        return;
    };
    let tag = *produced.choose(rng).expect("TAG0 is always produced");
    let stored = plans
        .iter()
        .find_map(|p| match (&p.args, &p.result) {
            (Args::Write { value, .. }, Some(Output::Write(o))) if o.flag == Flag::Chg && o.tag == tag => Some(value.clone()),
            _ => None,
        })
        .unwrap_or_default();
    let r = plans[i].result.as_mut().expect("complete op");
    match r {
        Output::Read { value, tag: t } => {
            if rng.gen_bool(0.8) {
                *t = tag;
                *value = stored;
            } else {
                *value = Value::from("forged");
            }
        }
        Output::Write(o) => match o.flag {
            Flag::Chg => {
                if rng.gen_bool(0.5) {
                    o.flag = Flag::Unchg;
                    o.tag = tag;
                    o.value = stored;
                } else {
                    o.tag = Tag::new(o.tag.ts + rng.gen_range(0..3), o.tag.wid.0 % 3 + 1);
                }
            }
            Flag::Unchg => {
                o.tag = tag;
                o.value = stored;
            }
        },
        _ => unreachable!("register ops only"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn histories_are_well_formed_and_mixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pass = 0;
        for _ in 0..300 {
            let h = random_history(&mut rng, 8);
            let ops = h.operations().unwrap();
            assert!(!ops.is_empty() && ops.len() <= 8);
            assert_eq!(History::parse(&h.to_text()).unwrap(), h);
            pass += crate::checker::brute_force_linearizable(&h).unwrap().passed() as usize;
        }
        assert!(pass > 60 && pass < 270, "{pass} of 300 linearizable");
    }
}
