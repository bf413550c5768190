use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("process id 0 is reserved and cannot write")]
    ReservedWriter,
    #[error("tag sequence number overflow")]
    TagOverflow,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("simulation did not quiesce; pending operations: {pending:?}")]
    Deadlock { pending: Vec<PendingOp> },
    #[error("malformed history: {0}")]
    MalformedHistory(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("history has {ops} operations, brute-force limit is {limit}")]
    OracleLimit { ops: usize, limit: usize },
    #[error("cannot decode message: {0}")]
    Decode(String),
    #[error("unknown process {0}")]
    UnknownProcess(u64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An operation that a live client had not finished when the simulation
/// ran out of events.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PendingOp {
    pub proc: u64,
    pub op_id: Option<u64>,
    pub queued: usize,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
