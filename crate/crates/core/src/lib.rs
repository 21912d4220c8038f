//! Builds a library of agent nodes for a target domain and then improves it.
//!
//! The flow runs in two phases. Generation harvests domain knowledge with
//! scripted or live search, then asks a Designer model for a typed node
//! library and its wiring ([`harvest`], [`synthesis`]). Optimization runs the
//! library on a validation set ([`runtime`]), scores every step by how much it
//! raises the Executor's likelihood of the reference answer ([`reward`]), and
//! has the Designer rewrite the weakest node each epoch ([`optimizer`]).
//!
//! Model access goes through [`llm::Gateway`]; the bundled mock provider makes
//! every run reproducible offline.

pub mod canonical;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod harvest;
pub mod llm;
pub mod model;
pub mod optimizer;
pub mod parallel;
pub mod prompts;
pub mod reward;
pub mod runtime;
pub mod synthesis;

pub use error::{Error, Result};
