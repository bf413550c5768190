use std::collections::BTreeSet;

use coverable::checker::{build_version_tree, check_strong, check_weak};
use coverable::client::{Step, Task};
use coverable::consensus::{self, check_consensus, propose_value, OracleRegister};
use coverable::history::Output;
use coverable::simnet::SimConfig;
use coverable::{vmwabd, ProcessId, Value};
use proptest::prelude::*;

fn strong_cfg(seed: u64, procs: usize) -> SimConfig {
    SimConfig { seed, replicas: 1, writers: procs, ops_per_client: 1, ..SimConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn proposers_agree(seed in any::<u64>(), procs in 1usize..=6, bound in prop::option::of(1u64..10)) {
        let cfg = SimConfig { delay_bound: bound, ..strong_cfg(seed, procs) };
        let run = consensus::simulate(&cfg, Some(consensus::proposal_workload(procs, 0)), Value::default()).unwrap();
        let correct: BTreeSet<ProcessId> = (1..=procs as u64).map(ProcessId).collect();
        let rep = check_consensus(&run.app_history, &correct).unwrap();
        prop_assert!(rep.passed(), "{rep:?}");
        prop_assert_eq!(rep.decided.len(), 1);
        prop_assert!(check_strong(&run.history).unwrap().passed());
        let tree = build_version_tree(&run.history).unwrap();
        prop_assert!(tree.is_path());
        for v in check_weak(&run.history).unwrap() {
            prop_assert!(v.passed(), "{v}");
        }
    }

    #[test]
    fn mixed_writes_stay_strong(seed in any::<u64>(), procs in 1usize..=5, extra in 1usize..8) {
        let run = consensus::simulate(&strong_cfg(seed, procs), Some(consensus::proposal_workload(procs, extra)), Value::default()).unwrap();
        prop_assert!(check_strong(&run.history).unwrap().passed());
        prop_assert!(build_version_tree(&run.history).unwrap().is_path());
        for v in check_weak(&run.history).unwrap() {
            prop_assert!(v.passed(), "{v}");
        }
    }

    /// Crashed clients stop but the rest still decide the same value.
    #[test]
    fn agreement_with_client_crashes(seed in any::<u64>()) {
        let cfg = SimConfig { client_crashes: 2, ..strong_cfg(seed, 5) };
        let run = consensus::simulate(&cfg, Some(consensus::proposal_workload(5, 0)), Value::default()).unwrap();
        let crashed: BTreeSet<ProcessId> = run.stats.crashed.iter().copied().collect();
        let correct = (1..=5).map(ProcessId).filter(|p| !crashed.contains(p)).collect();
        let rep = check_consensus(&run.app_history, &correct).unwrap();
        prop_assert!(rep.passed(), "{rep:?}");
    }
}

#[test]
fn local_register_decides_first_proposal() {
    let mut r = OracleRegister::new(Value::default());
    let got: Vec<Value> = (1..=5u64).map(|p| propose_value(&mut r, Value::new(format!("p{p}")), ProcessId(p)).unwrap()).collect();
    assert!(got.iter().all(|v| *v == Value::from("p1")));
}

/// The same construction over a weakly coverable register can decide two
/// values: concurrent writes on the initial version may both change it.
#[test]
fn weak_register_loses_agreement() {
    let mut split = 0;
    for seed in 0..60 {
        let cfg = SimConfig { seed, replicas: 5, writers: 3, delay_bound: Some(4), ..SimConfig::default() };
        let w = (1..=3).map(|i| vec![Step::now(Task::Propose { value: Value::new(format!("p{i}")) })]).collect();
        let run = vmwabd::simulate(&cfg, Some(w), Value::default()).unwrap();
        let decided: BTreeSet<Value> = run
            .app_history
            .operations()
            .unwrap()
            .into_iter()
            .filter_map(|o| match o.result {
                Some(Output::Propose { value }) => Some(value),
                _ => None,
            })
            .collect();
        if decided.len() > 1 {
            split += 1;
            assert!(check_strong(&run.history).unwrap().failed());
        }
        for v in check_weak(&run.history).unwrap() {
            assert!(v.passed(), "seed {seed}: {v}");
        }
    }
    assert!(split > 0, "no run split the decision");
}

/// A proposal is a write on the initial version, so it reports the
/// register's current state. Once plain writes move the register past the
/// decision, a late proposer returns one of them.
#[test]
fn shared_register_breaks_agreement() {
    let lost = (0..100).any(|seed| {
        let run = consensus::simulate(&strong_cfg(seed, 3), Some(consensus::proposal_workload(3, 2)), Value::default()).unwrap();
        let correct = (1..=3).map(ProcessId).collect();
        !check_consensus(&run.app_history, &correct).unwrap().agreement
    });
    assert!(lost);
}

#[test]
fn oracle_server_cannot_crash() {
    let cfg = SimConfig { crashes: 1, ..strong_cfg(1, 2) };
    assert!(consensus::simulate(&cfg, None, Value::default()).is_err());
}
