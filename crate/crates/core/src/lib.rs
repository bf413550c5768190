//! Coverable registers: versioned read/write objects where a write names
//! the version it revises and learns whether it changed the register.
//!
//! The crate contains a sequential specification, two message-passing
//! implementations (a multi-writer quorum register and a large-object
//! variant that separates metadata from data), a deterministic network
//! simulator to run them in, history checkers for atomicity and the
//! coverability properties, and the applications built on top: weak
//! read-modify-write, file objects, consensus and ranked registers.

pub mod apps;
pub mod checker;
pub mod cli;
pub mod client;
pub mod codec;
pub mod consensus;
pub mod error;
pub mod histgen;
pub mod history;
pub mod ldr;
pub mod ranked;
pub mod scenario;
pub mod seqreg;
pub mod simnet;
pub mod types;
pub mod vmwabd;

pub use error::{Error, Result};
pub use types::{
    tag_compare, tag_successor, CoverableRegister, Flag, ProcessId, RegisterState, Tag, Value,
    WriteOutcome, TAG0,
};
