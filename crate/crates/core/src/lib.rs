//! Cross-lingual transferability metrics computed from checkpoint
//! prediction logs.
//!
//! * [`data`]: pool types, JSONL/manifest loading and validation
//! * [`metrics`]: transfer error decomposition, transfer gap, IGap and curves
//! * [`ranking`]: transfer-direction ranking and representation baselines
//! * [`corpus`]: random-label and corrupted-label dataset construction
//! * [`simulator`]: planted-truth pools and their analytic expectations
//! * [`cli`]: the `igap` command-line front end and report emission

pub mod cli;
pub mod corpus;
pub mod data;
pub mod error;
pub mod keyed;
pub mod metrics;
pub mod ranking;
pub mod simulator;

pub use error::{Error, Result};
