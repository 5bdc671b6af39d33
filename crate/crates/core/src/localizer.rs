//! Fault localization driver: verify, fix the failing schedule, sequentialize,
//! instrument, then enumerate diagnoses by blocking each reported line.

use crate::instrumenter::{block_diag, eligible_lines, instrument, substitute, InstrumentError, InstrumentedProgram};
use crate::minic::{LineId, Program};
use crate::sequentializer::{sequentialize, LineOrigin, Schedule, SeqError, SequentialProgram};
use crate::verifier::{
    execute, extract_schedule, verify, Counterexample, ExecutionEnd, Outcome, VerifierConfig, VerifyError,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnosis {
    /// Line of the sequential program, i.e. the reported `diag` value.
    pub seq_line: i64,
    /// Original line the sequential line stands for; absent for out-of-domain values.
    pub original_line: Option<LineId>,
    pub origin: Option<LineOrigin>,
    pub witness_value: i64,
    /// 1-based blocking iteration that reported this diagnosis.
    pub iteration: usize,
    pub oracle_validated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    FaultsFound,
    NoCounterexample,
    Inconclusive,
    ResourceExhausted,
}

/// Stage durations in microseconds.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    pub verify_us: u64,
    pub sequentialize_us: u64,
    pub instrument_us: u64,
    pub diagnose_us: u64,
    pub validate_us: u64,
}

impl Timings {
    pub fn total_us(&self) -> u64 {
        self.verify_us + self.sequentialize_us + self.instrument_us + self.diagnose_us + self.validate_us
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub status: Status,
    pub found_error_count: usize,
    pub diagnoses: Vec<Diagnosis>,
    /// The first verification found a deadlock.
    pub deadlock: bool,
    /// Blocking iterations that reported a diag value.
    pub iterations: usize,
    pub diag_domain_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
    pub timings: Timings,
}

impl DiagnosisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    /// Every diagnosis validated and the method found faults.
    pub fn useful(&self) -> bool {
        self.status == Status::FaultsFound && self.diagnoses.iter().all(|d| d.oracle_validated)
    }

    /// Distinct original lines of the diagnoses.
    pub fn original_lines(&self) -> BTreeSet<LineId> {
        self.diagnoses.iter().filter_map(|d| d.original_line).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LocalizeError {
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Sequentialize(#[from] SeqError),
}

/// Intermediate artifacts of one localization run.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub schedule: Option<Schedule>,
    pub sequential: Option<SequentialProgram>,
    pub instrumented: Option<InstrumentedProgram>,
}

fn micros(t: Instant) -> u64 {
    t.elapsed().as_micros() as u64
}

fn diag_config(config: &VerifierConfig) -> VerifierConfig {
    VerifierConfig { context_bound: 0, deadlock_check: false, division_check: false, ..config.clone() }
}

/// True iff the sequential program with line `d` replaced by the constant
/// `witness` runs to completion without violating anything.
pub fn validate_diag(seq: &SequentialProgram, d: LineId, witness: i64, config: &VerifierConfig) -> bool {
    let p = substitute(&seq.program, d, witness);
    let cfg = VerifierConfig { context_bound: 0, deadlock_check: false, division_check: true, ..config.clone() };
    match execute(&p, &[], &cfg) {
        Ok(run) => run.end == ExecutionEnd::Completed,
        // A nondet draw remains on the path: every choice must pass.
        Err(VerifyError::InputExhausted) => {
            verify(&p, &cfg).map(|r| r.is_safe() && !r.bound_hit).unwrap_or(false)
        }
        Err(_) => false,
    }
}

/// Lines for which some value in the instrumented range avoids the failure:
/// the exhaustive counterpart of the blocking loop.
pub fn brute_force_lines(seq: &SequentialProgram, config: &VerifierConfig) -> BTreeSet<LineId> {
    let range = (config.nondet_domain.0.min(0), config.nondet_domain.1.max(1));
    let cfg = VerifierConfig { context_bound: 0, deadlock_check: false, division_check: true, ..config.clone() };
    if matches!(execute(&seq.program, &[], &cfg), Ok(run) if run.end == ExecutionEnd::Completed) {
        // The replay does not fail: there is nothing to repair.
        return BTreeSet::new();
    }
    eligible_lines(seq)
        .into_iter()
        .filter(|&l| (range.0..=range.1).any(|v| validate_diag(seq, l, v, config)))
        .collect()
}

/// Result of the initial search for a failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Search {
    Safe,
    Exhausted,
    /// `deadlock_detected`: the search with deadlock detection stopped at a
    /// deadlock; `cex` is then an assertion failure if one also exists.
    Found { cex: Counterexample, deadlock_detected: bool },
}

/// Verifies with deadlock detection on; after a deadlock, searches again
/// without it and prefers an assertion failure when there is one.
pub fn find_counterexample(program: &Program, config: &VerifierConfig) -> Result<Search, VerifyError> {
    let first = verify(program, &VerifierConfig { deadlock_check: true, ..config.clone() })?;
    let cex = match first.outcome {
        Outcome::SafeWithinBounds => return Ok(Search::Safe),
        Outcome::ResourceExhausted => return Ok(Search::Exhausted),
        Outcome::Violation(c) => *c,
    };
    if !cex.violation.is_deadlock() {
        return Ok(Search::Found { cex, deadlock_detected: false });
    }
    let cex = match verify(program, &VerifierConfig { deadlock_check: false, ..config.clone() })?.outcome {
        Outcome::Violation(c) => *c,
        _ => cex,
    };
    Ok(Search::Found { cex, deadlock_detected: true })
}

pub fn localize(program: &Program, config: &VerifierConfig) -> Result<DiagnosisReport, LocalizeError> {
    localize_with_artifacts(program, config).map(|(r, _)| r)
}

pub fn localize_with_artifacts(
    program: &Program,
    config: &VerifierConfig,
) -> Result<(DiagnosisReport, Artifacts), LocalizeError> {
    config.check()?;
    let mut art = Artifacts::default();
    let mut report = DiagnosisReport {
        status: Status::NoCounterexample,
        found_error_count: 0,
        diagnoses: Vec::new(),
        deadlock: false,
        iterations: 0,
        diag_domain_size: 0,
        note: None,
        counterexample: None,
        timings: Timings::default(),
    };

    let t = Instant::now();
    let search = find_counterexample(program, config)?;
    report.timings.verify_us = micros(t);
    let cex = match search {
        Search::Safe => return Ok((report, art)),
        Search::Exhausted => {
            report.status = Status::ResourceExhausted;
            return Ok((report, art));
        }
        Search::Found { cex, deadlock_detected } => {
            report.deadlock = deadlock_detected;
            cex
        }
    };
    report.counterexample = Some(cex.clone());

    let t = Instant::now();
    let schedule = match extract_schedule(&cex) {
        Ok(s) => s,
        Err(e) => return Ok((inconclusive(report, e.to_string()), art)),
    };
    let seq = match sequentialize(program, &schedule, cex.violation.is_deadlock()) {
        Ok(s) => s,
        Err(e @ (SeqError::UnsupportedSchedule(_) | SeqError::UnsupportedNondet(_) | SeqError::RuleGap { .. })) => {
            art.schedule = Some(schedule);
            return Ok((inconclusive(report, e.to_string()), art));
        }
        Err(e) => return Err(e.into()),
    };
    art.schedule = Some(schedule);
    report.timings.sequentialize_us = micros(t);

    let t = Instant::now();
    let mut instr = match instrument(&seq, config.nondet_domain) {
        Ok(i) => i,
        Err(InstrumentError::NothingToInstrument) => {
            art.sequential = Some(seq);
            return Ok((inconclusive(report, InstrumentError::NothingToInstrument.to_string()), art));
        }
    };
    report.timings.instrument_us = micros(t);
    report.diag_domain_size = instr.diag_domain.len();
    art.instrumented = Some(instr.clone());

    let dcfg = diag_config(config);
    let mut out_of_domain = false;
    while report.iterations < instr.diag_domain.len() {
        let t = Instant::now();
        let r = verify(&instr.program, &dcfg)?;
        report.timings.diagnose_us += micros(t);
        let c = match r.outcome {
            Outcome::SafeWithinBounds => break,
            Outcome::ResourceExhausted => {
                report.status = Status::ResourceExhausted;
                break;
            }
            Outcome::Violation(c) => c,
        };
        report.iterations += 1;
        let fin = c.final_valuation();
        let d = fin[&instr.diag_var];
        let witness = fin[&instr.value_var];
        let line = LineId(d as u32);
        if d < 0 || !instr.diag_domain.contains(&line) {
            report.diagnoses.push(Diagnosis {
                seq_line: d,
                original_line: None,
                origin: None,
                witness_value: witness,
                iteration: report.iterations,
                oracle_validated: false,
            });
            out_of_domain = true;
            break;
        }
        let t = Instant::now();
        let ok = validate_diag(&seq, line, witness, config);
        report.timings.validate_us += micros(t);
        let origin = seq.line_map.get(&line).copied();
        report.diagnoses.push(Diagnosis {
            seq_line: d,
            original_line: origin.and_then(|o| o.original()),
            origin,
            witness_value: witness,
            iteration: report.iterations,
            oracle_validated: ok,
        });
        instr = block_diag(instr, d);
    }
    art.sequential = Some(seq);
    art.instrumented = Some(instr);
    report.found_error_count = report.diagnoses.len();
    if report.status != Status::ResourceExhausted {
        report.status = if out_of_domain || report.diagnoses.is_empty() {
            Status::Inconclusive
        } else {
            Status::FaultsFound
        };
    }
    if out_of_domain {
        report.note = Some("diag value outside the diagnosis domain: the failure is not explained by a single line".into());
    } else if report.diagnoses.is_empty() && report.status == Status::Inconclusive {
        report.note = Some("no single-line replacement avoids the failure".into());
    }
    Ok((report, art))
}

fn inconclusive(mut report: DiagnosisReport, note: String) -> DiagnosisReport {
    report.status = Status::Inconclusive;
    report.note = Some(note);
    report
}
