//! Bounded explicit-state verification of concurrent mini-C programs.
//!
//! Interleavings are explored depth-first: threads in ascending ordinal,
//! nondeterministic values in ascending order. Every change of the running
//! thread costs one unit of the context bound, whatever caused it.

mod compile;
mod explore;
mod machine;
mod schedule;

pub use schedule::extract_schedule;

use crate::minic::{LineId, Program};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const DEFAULT_MAX_STATES: usize = 2_000_000;
pub const MAX_STATES_ENV: &str = "MCFL_MAX_STATES";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierConfig {
    pub context_bound: u32,
    pub loop_bound: u32,
    /// Inclusive interval used by `nondet()` without explicit bounds.
    pub nondet_domain: (i64, i64),
    pub deadlock_check: bool,
    pub max_states: usize,
    /// Report division or modulo by zero as a violation; when off such paths are dropped.
    pub division_check: bool,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig {
            context_bound: 4,
            loop_bound: 3,
            nondet_domain: (0, 3),
            deadlock_check: false,
            max_states: default_max_states(),
            division_check: true,
        }
    }
}

/// The state cap, honouring `MCFL_MAX_STATES` when set to a positive integer.
pub fn default_max_states() -> usize {
    std::env::var(MAX_STATES_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|v| *v > 0)
        .unwrap_or(DEFAULT_MAX_STATES)
}

impl VerifierConfig {
    pub fn check(&self) -> Result<(), VerifyError> {
        if self.nondet_domain.0 > self.nondet_domain.1 {
            return Err(VerifyError::InvalidConfig("nondet domain is empty".into()));
        }
        if self.loop_bound == 0 {
            return Err(VerifierConfig::bad("loop bound must be at least 1"));
        }
        if self.max_states == 0 {
            return Err(VerifierConfig::bad("state cap must be positive"));
        }
        Ok(())
    }

    fn bad(msg: &str) -> VerifyError {
        VerifyError::InvalidConfig(msg.into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("invalid verifier configuration: {0}")]
    InvalidConfig(String),
    #[error("trace mismatch at step {step}: {reason}")]
    TraceMismatch { step: usize, reason: String },
    #[error("unsupported schedule: {0}")]
    UnsupportedSchedule(String),
    #[error("execution needs more input values than were supplied")]
    InputExhausted,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopCount {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub call_path: Vec<LineId>,
    pub line: LineId,
    /// Iterations of this loop completed by the thread so far.
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step_index: usize,
    pub thread: usize,
    pub line: LineId,
    pub valuation: BTreeMap<String, i64>,
    /// Call sites leading to `line` when it lies in an inlined function.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub call_path: Vec<LineId>,
    /// Outcome of an `if`/`while` condition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<bool>,
    /// Enclosing loops, outer to inner.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loops: Vec<LoopCount>,
    /// Second half of a condition wait: the mutex is reacquired.
    #[serde(default, skip_serializing_if = "is_false")]
    pub resumed: bool,
    /// The thread terminated with this step.
    #[serde(default, skip_serializing_if = "is_false")]
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSwitchRecord {
    pub switch_index: usize,
    pub from_thread: usize,
    pub to_thread: usize,
    pub at_line: LineId,
    pub per_thread_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    Assertion { line: LineId },
    Deadlock { blocked: Vec<usize> },
    DivisionByZero { line: LineId },
}

impl Violation {
    pub fn is_deadlock(&self) -> bool {
        matches!(self, Violation::Deadlock { .. })
    }

    pub fn line(&self) -> Option<LineId> {
        match self {
            Violation::Assertion { line } | Violation::DivisionByZero { line } => Some(*line),
            Violation::Deadlock { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NondetChoice {
    pub step: usize,
    pub line: LineId,
    pub value: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub steps: Vec<TraceStep>,
    pub switches: Vec<ContextSwitchRecord>,
    pub violation: Violation,
    pub nondet_choices: Vec<NondetChoice>,
    /// Entry function of every thread, indexed by ordinal.
    pub threads: Vec<String>,
}

impl Counterexample {
    /// Shared (global) valuation after the last step.
    pub fn final_valuation(&self) -> &BTreeMap<String, i64> {
        &self.steps.last().expect("non-empty trace").valuation
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "counterexample", rename_all = "kebab-case")]
pub enum Outcome {
    SafeWithinBounds,
    Violation(Box<Counterexample>),
    ResourceExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub outcome: Outcome,
    /// Some path was cut because a loop exceeded the loop bound.
    pub bound_hit: bool,
    /// Number of states generated.
    pub states: usize,
}

impl VerificationResult {
    pub fn counterexample(&self) -> Option<&Counterexample> {
        match &self.outcome {
            Outcome::Violation(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_safe(&self) -> bool {
        self.outcome == Outcome::SafeWithinBounds
    }
}

pub fn verify(program: &Program, config: &VerifierConfig) -> Result<VerificationResult, VerifyError> {
    config.check()?;
    let compiled = compile::compile(program);
    Ok(explore::Explorer::new(&compiled, config).run())
}

/// Re-executes a counterexample's schedule and nondet choices exactly.
pub fn replay(program: &Program, cex: &Counterexample) -> Result<VerificationResult, VerifyError> {
    let compiled = compile::compile(program);
    explore::replay(&compiled, cex)
}

/// Final state of one deterministic run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Execution {
    pub end: ExecutionEnd,
    pub globals: BTreeMap<String, i64>,
    /// Valuation of `main`'s scalars (globals included).
    pub main_valuation: BTreeMap<String, i64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecutionEnd {
    Completed,
    Violation(Violation),
    /// An assumption failed, a table read was out of range, or a loop hit the bound.
    Infeasible,
}

/// Runs the program once, always scheduling the lowest enabled thread and
/// taking nondet values from `inputs` in order.
pub fn execute(program: &Program, inputs: &[i64], config: &VerifierConfig) -> Result<Execution, VerifyError> {
    config.check()?;
    let compiled = compile::compile(program);
    explore::execute(&compiled, inputs, config)
}
