//! Command-line front end: `sim`, `check` and `demo`.
//!
//! Exit codes: 0 pass, 1 property failure, 2 usage or configuration
//! error, 3 I/O or parse error.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::apps::{check_rmw, ModifierFunction};
use crate::checker::{self, Property, Status, BRUTE_FORCE_LIMIT};
use crate::client::{SimRun, Step, Task, TaskOutcome};
use crate::consensus;
use crate::error::Error;
use crate::history::{History, Output};
use crate::ldr::{self, LdrConfig};
use crate::ranked::{self, Policy, RankedOp, RankedOutput, RankedRegister};
use crate::scenario::parse_workload;
use crate::simnet::SimConfig;
use crate::types::{ProcessId, Value};
use crate::vmwabd;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "coverable", version, about = "Coverable register simulator and history checker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    Vmwabd,
    Ldr,
    Strongtr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WorkloadKind {
    Random,
    Scripted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Demo {
    Rmw,
    File,
    Consensus,
    Ranked,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a seeded simulation and write its history.
    Sim(SimArgs),
    /// Check a history file against coverability properties.
    Check(CheckArgs),
    /// Run a canonical scenario and print its transcript.
    Demo(DemoArgs),
}

#[derive(Debug, clap::Args)]
pub struct SimArgs {
    #[arg(long, value_enum, default_value = "vmwabd")]
    pub protocol: Protocol,
    /// Replica servers (vmwabd) or directory servers (ldr).
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub writers: usize,
    #[arg(long, default_value_t = 0)]
    pub readers: usize,
    #[arg(long, default_value_t = 1)]
    pub ops: usize,
    /// Server crashes. For ldr these hit replica servers.
    #[arg(long, default_value_t = 0)]
    pub crashes: usize,
    /// ldr only: directory server crashes.
    #[arg(long, default_value_t = 0)]
    pub dir_crashes: usize,
    #[arg(long, default_value_t = 0)]
    pub client_crashes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub delay_bound: Option<u64>,
    /// ldr fault threshold; replica servers default to 2f+2.
    #[arg(long, default_value_t = 1)]
    pub f: usize,
    #[arg(long)]
    pub replica_servers: Option<usize>,
    #[arg(long, value_enum, default_value = "random")]
    pub workload: WorkloadKind,
    /// Workload script for `--workload scripted`.
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    /// Register-level history; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Application-level history (rmw, revise, get, propose).
    #[arg(long)]
    pub app_out: Option<PathBuf>,
    #[arg(long)]
    pub initial: Option<String>,
}

#[derive(Debug, clap::Args)]
pub struct CheckArgs {
    pub file: PathBuf,
    /// Comma-separated properties; defaults to the weak suite.
    #[arg(long, value_delimiter = ',')]
    pub props: Vec<String>,
    /// Cross-check atomicity with the exhaustive search.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, clap::Args)]
pub struct DemoArgs {
    #[arg(value_enum)]
    pub which: Demo,
    #[arg(long, default_value_t = 3)]
    pub procs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Concurrent rmw operations on one version.
    #[arg(long, default_value_t = 2)]
    pub contend: usize,
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn main_with(args: impl IntoIterator<Item = String>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match run(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) | Error::ReservedWriter | Error::UnknownProcess(_) => EXIT_USAGE,
        Error::Deadlock { .. } => EXIT_FAIL,
        _ => EXIT_IO,
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<i32, Error> {
    match &cli.command {
        Command::Sim(a) => cmd_sim(a, out),
        Command::Check(a) => cmd_check(a, out),
        Command::Demo(a) => cmd_demo(a, out),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text)?;
    Ok(())
}

fn sim_config(a: &SimArgs) -> SimConfig {
    let default_replicas = if a.protocol == Protocol::Strongtr { 1 } else { 5 };
    SimConfig {
        seed: a.seed,
        replicas: a.replicas.unwrap_or(default_replicas),
        writers: a.writers,
        readers: a.readers,
        ops_per_client: a.ops,
        crashes: if a.protocol == Protocol::Ldr { a.dir_crashes } else { a.crashes },
        delay_bound: a.delay_bound,
        client_crashes: a.client_crashes,
        liveness: true,
    }
}

/// Histories produced by the run a set of `sim` flags describes.
pub fn simulate(a: &SimArgs) -> Result<(History, History), Error> {
    let cfg = sim_config(a);
    let v0 = Value::from(a.initial.as_deref().unwrap_or(""));
    let workload = match a.workload {
        WorkloadKind::Random => None,
        WorkloadKind::Scripted => {
            let path = a
                .fixture
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("--workload scripted needs --fixture".into()))?;
            Some(parse_workload(&std::fs::read_to_string(path)?, cfg.clients())?)
        }
    };
    fn parts<N>(r: SimRun<N>) -> (History, History) {
        (r.history, r.app_history)
    }
    Ok(match a.protocol {
        Protocol::Vmwabd => parts(vmwabd::simulate(&cfg, workload, v0)?),
        Protocol::Strongtr => parts(consensus::simulate(&cfg, workload, v0)?),
        Protocol::Ldr => {
            let lc = LdrConfig {
                sim: cfg,
                f: a.f,
                replica_servers: a.replica_servers.unwrap_or(2 * a.f + 2),
                replica_crashes: a.crashes,
            };
            parts(ldr::simulate(&lc, workload, v0)?)
        }
    })
}

fn cmd_sim(a: &SimArgs, out: &mut dyn Write) -> Result<i32, Error> {
    let (h, app) = simulate(a)?;
    match &a.out {
        Some(p) => write_file(p, &h.to_text())?,
        None => out.write_all(h.to_text().as_bytes())?,
    }
    if let Some(p) = &a.app_out {
        write_file(p, &app.to_text())?;
    }
    Ok(EXIT_PASS)
}

fn parse_props(names: &[String]) -> Result<Vec<Property>, Error> {
    if names.is_empty() {
        return Ok(Property::WEAK_SUITE.to_vec());
    }
    let mut props = Vec::new();
    for n in names {
        let n = n.trim();
        if n == "all" {
            props.extend(Property::WEAK_SUITE);
            props.push(Property::StrongCoverability);
            continue;
        }
        let p = Property::parse(n).ok_or_else(|| Error::InvalidConfig(format!("unknown property {n:?}")))?;
        props.push(p);
    }
    let mut seen = BTreeSet::new();
    props.retain(|p| seen.insert(*p));
    Ok(props)
}

fn print_counterexample(out: &mut dyn Write, h: &History) -> Result<(), Error> {
    writeln!(out, "  counterexample:")?;
    for line in h.to_text().lines() {
        writeln!(out, "    {line}")?;
    }
    Ok(())
}

fn cmd_check(a: &CheckArgs, out: &mut dyn Write) -> Result<i32, Error> {
    let props = parse_props(&a.props)?;
    let h = History::parse(&std::fs::read_to_string(&a.file)?)?;
    let h = h.register_ops();
    let verdicts = checker::report(&h, &props)?;
    let mut failed = false;
    for v in &verdicts {
        writeln!(out, "{v}")?;
        if v.status == Status::Fail {
            failed = true;
            if let Some(cx) = &v.counterexample {
                print_counterexample(out, cx)?;
            }
        }
    }
    if a.oracle {
        let n = h.operations()?.len();
        if n > BRUTE_FORCE_LIMIT {
            writeln!(out, "oracle: SKIP ({n} operations, limit {BRUTE_FORCE_LIMIT})")?;
        } else {
            let fast = checker::check_atomicity(&h)?;
            let slow = checker::brute_force_linearizable(&h)?;
            if fast.passed() == slow.passed() {
                writeln!(out, "oracle: agree ({})", if slow.passed() { "linearizable" } else { "not linearizable" })?;
            } else {
                writeln!(out, "oracle: DISAGREE (atomicity {}, exhaustive {})", fast.passed(), slow.passed())?;
                failed = true;
            }
        }
    }
    Ok(if failed { EXIT_FAIL } else { EXIT_PASS })
}

fn cmd_demo(a: &DemoArgs, out: &mut dyn Write) -> Result<i32, Error> {
    match a.which {
        Demo::Rmw => demo_rmw(a, out),
        Demo::File => demo_file(a, out),
        Demo::Consensus => demo_consensus(a, out),
        Demo::Ranked => demo_ranked(out),
    }
}

fn verdict_line(out: &mut dyn Write, name: &str, ok: bool, detail: &str) -> Result<(), Error> {
    writeln!(out, "{name}: {} ({detail})", if ok { "PASS" } else { "FAIL" })?;
    Ok(())
}

/// `contend` clients run rmw on the initial version at the same instant.
fn demo_rmw(a: &DemoArgs, out: &mut dyn Write) -> Result<i32, Error> {
    if a.contend == 0 {
        return Err(Error::InvalidConfig("--contend must be at least 1".into()));
    }
    let cfg = SimConfig {
        seed: a.seed,
        replicas: 5,
        writers: a.contend,
        ops_per_client: 1,
        delay_bound: Some(8),
        ..SimConfig::default()
    };
    let workload = (1..=a.contend)
        .map(|i| vec![Step::now(Task::Rmw { f: ModifierFunction::append(format!("+{i}")), pause: 0 })])
        .collect();
    let run = vmwabd::simulate(&cfg, Some(workload), Value::from("base"))?;
    for op in run.app_history.operations()? {
        if let Some(Output::Rmw(r)) = &op.result {
            writeln!(
                out,
                "p{} rmw: {} value={} read={}@{} wrote@{}",
                op.proc.0,
                r.status.as_str(),
                r.value,
                r.oldval,
                r.read_tag,
                r.write_tag
            )?;
        }
    }
    let rep = check_rmw(&run.app_history, ModifierFunction::builtin)?;
    for v in &rep.violations {
        writeln!(out, "  violation: {v}")?;
    }
    verdict_line(
        out,
        "weak-rmw",
        rep.passed(),
        &format!("{} groups, {} solo, {} successes", rep.groups.len(), rep.solo, rep.successes),
    )?;
    let weak = checker::check_weak(&run.history)?;
    let all = weak.iter().all(|v| v.passed());
    for v in &weak {
        writeln!(out, "{v}")?;
    }
    Ok(if rep.passed() && all { EXIT_PASS } else { EXIT_FAIL })
}

/// `procs` clients each append a line to one shared file.
fn demo_file(a: &DemoArgs, out: &mut dyn Write) -> Result<i32, Error> {
    if a.procs == 0 {
        return Err(Error::InvalidConfig("--procs must be at least 1".into()));
    }
    let mut c = vmwabd::cluster(a.procs, 5, a.seed, Some(8), Value::default());
    let batch = (1..=a.procs as u64)
        .map(|i| (ProcessId(i), Step::now(Task::Edit { line: Value::from(format!("line-{i}\n").as_str()) })))
        .collect();
    let outcomes = c.run(batch)?;
    let mut ok = true;
    for (i, o) in outcomes.iter().enumerate() {
        if let TaskOutcome::Edit { applied, attempts, tag } = o {
            ok &= *applied;
            writeln!(out, "p{} edit: applied={applied} attempts={attempts} tag={tag}", i + 1)?;
        }
    }
    let (file, tag) = match c.run_one(ProcessId(1), Task::Get)? {
        TaskOutcome::Get(v, t) => (v, t),
        other => unreachable!("get returned {other:?}"),
    };
    writeln!(out, "file @{tag}:")?;
    for line in String::from_utf8_lossy(&file.0).lines() {
        writeln!(out, "  {line}")?;
    }
    let all_lines = (1..=a.procs).all(|i| String::from_utf8_lossy(&file.0).lines().any(|l| l == format!("line-{i}")));
    verdict_line(out, "file", ok && all_lines, &format!("{} lines expected", a.procs))?;
    let weak = checker::check_weak(c.history())?;
    for v in &weak {
        writeln!(out, "{v}")?;
    }
    Ok(if ok && all_lines && weak.iter().all(|v| v.passed()) { EXIT_PASS } else { EXIT_FAIL })
}

fn demo_consensus(a: &DemoArgs, out: &mut dyn Write) -> Result<i32, Error> {
    if a.procs == 0 {
        return Err(Error::InvalidConfig("--procs must be at least 1".into()));
    }
    let cfg = SimConfig {
        seed: a.seed,
        replicas: 1,
        writers: a.procs,
        ops_per_client: 1,
        ..SimConfig::default()
    };
    let run = consensus::simulate(&cfg, Some(consensus::proposal_workload(a.procs, 0)), Value::default())?;
    for op in run.app_history.operations()? {
        if let Some(Output::Propose { value }) = &op.result {
            writeln!(out, "p{} decided: {value}", op.proc.0)?;
        }
    }
    let correct = (1..=a.procs as u64).map(ProcessId).collect();
    let rep = consensus::check_consensus(&run.app_history, &correct)?;
    verdict_line(out, "agreement", rep.agreement, &format!("{} decided values", rep.decided.len()))?;
    verdict_line(out, "validity", rep.validity, &format!("{} proposals", rep.proposed.len()))?;
    verdict_line(out, "termination", rep.termination, &format!("{} processes", a.procs))?;
    let strong = checker::check_strong(&run.history)?;
    writeln!(out, "{strong}")?;
    Ok(if rep.passed() && strong.passed() { EXIT_PASS } else { EXIT_FAIL })
}

fn demo_ranked(out: &mut dyn Write) -> Result<i32, Error> {
    let schedule = ranked::lower_rank_commit_schedule();
    let mut ok = true;
    for (name, policy) in [("permissive", Policy::Permissive), ("strict", Policy::Strict)] {
        writeln!(out, "{name}:")?;
        let recs = ranked::run_schedule(&mut RankedRegister::new(Value::default(), policy), &schedule);
        for r in &recs {
            let line = match (&r.op, &r.output) {
                (RankedOp::Write { rank, value }, RankedOutput::Write(res, seen)) => {
                    format!("rr-write({rank}, {value}) -> {res:?} (highest {seen})")
                }
                (RankedOp::Read { rank }, RankedOutput::Read(got, v)) => format!("rr-read({rank}) -> ({got}, {v})"),
                _ => unreachable!("output matches op"),
            };
            writeln!(out, "  [{}..{}] p{} {line}", r.invoke, r.respond, r.proc)?;
        }
        let bad = ranked::check_ranked(&recs, &Value::default());
        for b in &bad {
            writeln!(out, "  violation: {b}")?;
        }
        ok &= bad.is_empty();
        verdict_line(out, "  safety+non-triviality", bad.is_empty(), &format!("{} operations", recs.len()))?;
        writeln!(out, "  lower-rank commit: {}", if ranked::has_lower_rank_commit(&recs) { "yes" } else { "no" })?;
    }
    Ok(if ok { EXIT_PASS } else { EXIT_FAIL })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut o = Vec::new();
        let mut e = Vec::new();
        let code = main_with(
            std::iter::once("coverable".to_string()).chain(args.iter().map(|s| s.to_string())),
            &mut o,
            &mut e,
        );
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn majority_violation_is_a_config_error() {
        let (code, _, err) = run_args(&["sim", "--crashes", "3", "--replicas", "5"]);
        assert_eq!(code, EXIT_USAGE, "{err}");
    }

    #[test]
    fn bad_flag_is_usage_error() {
        assert_eq!(run_args(&["sim", "--bogus"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["check", "f", "--props", "nope"]).0, EXIT_USAGE);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert_eq!(run_args(&["check", "/nonexistent/h.log"]).0, EXIT_IO);
    }

    #[test]
    fn sim_to_stdout_then_check() {
        let (code, text, _) = run_args(&["sim", "--writers", "2", "--readers", "1", "--ops", "4", "--seed", "5"]);
        assert_eq!(code, 0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.log");
        std::fs::write(&p, &text).unwrap();
        let (code, report, _) = run_args(&["check", p.to_str().unwrap()]);
        assert_eq!(code, 0, "{report}");
        assert_eq!(report.lines().count(), 5);
    }

    #[test]
    fn ranked_demo_prints_lower_rank_commit() {
        let (code, text, _) = run_args(&["demo", "ranked"]);
        assert_eq!(code, 0);
        assert!(text.contains("rr-write(r2, \"low\") -> Commit"), "{text}");
        assert!(text.contains("lower-rank commit: yes"));
    }
}
