//! Benchmark harness for the lossless economic dispatch problem.
//!
//! The crate solves the classic single-period dispatch exactly (equal
//! incremental cost with clamping), builds the two few-shot prompt styles for
//! external chat models, parses their free-form replies, and scores every
//! answer against the exact optimum using cost relative error and constraint
//! violations. A record/replay store makes full benchmark runs deterministic
//! and offline; a classical GA provides a seeded reference for the
//! evolutionary prompting strategy.
//!
//! All types are immutable after construction and every operation here is a
//! pure function, safe to call concurrently.

pub mod benchmark;
pub mod config;
pub mod demo;
pub mod error;
pub mod ga;
pub mod gateway;
pub mod prompt;
pub mod solver;
pub mod system;

pub use error::{Error, Result};
pub use ga::{evolve, repair_balance, GaConfig, GaResult};
pub use prompt::{
    build_few_shot_set, parse_response, render_prompt, FewShotSet, ParsedResponse, PromptBundle,
    ScenarioSpec, Strategy,
};
pub use solver::{solve_ed, total_cost, violations, EdSolution};
pub use system::{load_system, Dispatch, GeneratorUnit, PowerSystem};
