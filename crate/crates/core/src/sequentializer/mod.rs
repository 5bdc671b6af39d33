//! Turns a concurrent program plus one failing schedule into a sequential
//! program that replays exactly that schedule.
//!
//! Output shape: globals, an `order` table of segment tags, and a `main` that
//! loops over the table and dispatches each tag to a copy of the thread code
//! that resumes where the previous segment of that thread stopped. Stages run
//! as layout → order control → thread-library rules → renumbering.

mod builder;
mod control;
mod layout;
mod rules;
mod unwind;

pub use control::inject_order_control;
pub use rules::apply_pthread_rules;
pub use unwind::{unwind_calls, Unwound};

use crate::minic::{LineId, ParseError, Program, Stmt, StmtKind};
use crate::verifier::LoopCount;
use builder::Builder;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// A program point just after a step of the counterexample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Position {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub call_path: Vec<LineId>,
    pub line: LineId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loops: Vec<LoopCount>,
    #[serde(default)]
    pub resumed: bool,
}

/// A maximal run of consecutive steps by one thread.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub thread: usize,
    pub from_line: LineId,
    pub to_line: LineId,
    /// Iteration counts of the loops enclosing the first step, keyed by
    /// `call/…/line` loop ids.
    pub loop_counters: BTreeMap<String, u32>,
    /// 1-based index of this segment among the thread's segments.
    pub occurrence: usize,
    pub tag: i64,
    /// Where the thread stood before this segment (`None`: thread start).
    pub start: Option<Position>,
    pub end: Position,
    pub first_step: usize,
    pub last_step: usize,
    /// The thread terminated within this segment.
    pub finished: bool,
}

/// Values drawn by one nondet assignment site of one thread, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NondetPin {
    pub thread: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub call_path: Vec<LineId>,
    pub line: LineId,
    pub values: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub segments: Vec<Segment>,
    pub order_tags: Vec<i64>,
    /// Number of segments of every thread that ran.
    pub per_thread_counts: BTreeMap<usize, usize>,
    /// Entry function of every created thread, by ordinal.
    pub threads: Vec<String>,
    pub pins: Vec<NondetPin>,
    pub ends_in_deadlock: bool,
}

impl Schedule {
    /// A one-segment schedule for a program that never creates threads.
    pub fn single(main_steps: usize) -> Schedule {
        let pos = Position { call_path: Vec::new(), line: LineId(0), branch: None, loops: Vec::new(), resumed: false };
        Schedule {
            segments: vec![Segment {
                thread: 0,
                from_line: LineId(0),
                to_line: LineId(0),
                loop_counters: BTreeMap::new(),
                occurrence: 1,
                tag: 11,
                start: None,
                end: pos,
                first_step: 0,
                last_step: main_steps.saturating_sub(1),
                finished: false,
            }],
            order_tags: vec![11],
            per_thread_counts: [(0, 1)].into(),
            threads: vec!["main".into()],
            pins: Vec::new(),
            ends_in_deadlock: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticReason {
    Framework,
    OrderControl,
    Loopcounter,
    MutexModel,
    CondModel,
    /// Replays a nondet value recorded in the counterexample.
    InputPin,
    UnwindCopy(LineId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum LineOrigin {
    Original(LineId),
    Synthetic(SyntheticReason),
}

impl LineOrigin {
    /// The original line this sequential line stands for, if any.
    pub fn original(&self) -> Option<LineId> {
        match self {
            LineOrigin::Original(l) | LineOrigin::Synthetic(SyntheticReason::UnwindCopy(l)) => Some(*l),
            LineOrigin::Synthetic(_) => None,
        }
    }
}

pub type LineMap = BTreeMap<LineId, LineOrigin>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopCounterInfo {
    pub name: String,
    pub thread: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub call_path: Vec<LineId>,
    pub line: LineId,
}

#[derive(Debug, Clone)]
pub struct SequentialProgram {
    pub program: Program,
    pub line_map: LineMap,
    /// Lines that must not be instrumented: replayed inputs and rewritten
    /// declarations, although they map to original lines.
    pub ineligible: BTreeSet<LineId>,
    pub order_var: String,
    pub order_index_var: String,
    pub loopcounters: Vec<LoopCounterInfo>,
    pub(crate) stage: Stage,
    pub(crate) builder: Builder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stage {
    Laid,
    Controlled,
    Purged,
    Final,
}

impl SequentialProgram {
    pub fn line_map_json(&self) -> String {
        serde_json::to_string_pretty(&self.line_map).expect("serializable")
    }

    /// Segment tag of every line inside a segment copy.
    pub fn segment_of_line(&self) -> BTreeMap<LineId, i64> {
        let mut out = BTreeMap::new();
        let main = self.program.main();
        main.body.iter().for_each(|s| {
            s.walk(&mut |s| {
                if let StmtKind::Switch { arms, .. } = &s.kind {
                    for arm in arms {
                        for st in &arm.body {
                            st.walk(&mut |inner: &Stmt| {
                                out.insert(inner.line, arm.label);
                            });
                        }
                    }
                }
            })
        });
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeqError {
    #[error("unsupported schedule: {0}")]
    UnsupportedSchedule(String),
    #[error("no transformation rule for {kind} at line {line}")]
    RuleGap { kind: &'static str, line: LineId },
    #[error("cannot place the order guard for segment {tag}: position {line} not found")]
    GuardPlacement { tag: i64, line: LineId },
    #[error("expression-level nondet at line {0} cannot be replayed sequentially")]
    UnsupportedNondet(LineId),
    #[error("schedule does not match the program: {0}")]
    ScheduleMismatch(String),
    #[error("stage {0} applied out of order")]
    Stage(&'static str),
    #[error("transformation produced an invalid program: {0}")]
    Invalid(ParseError),
}

/// Full pipeline: layout, order control, thread-library rules, renumbering.
pub fn sequentialize(program: &Program, schedule: &Schedule, deadlock: bool) -> Result<SequentialProgram, SeqError> {
    let laid = layout::layout(program, schedule)?;
    let controlled = inject_order_control(laid, schedule)?;
    let purged = rules::purge(controlled, deadlock)?;
    finalize(purged)
}

/// Renumbers lines densely and resolves the line map.
pub(crate) fn finalize(mut seq: SequentialProgram) -> Result<SequentialProgram, SeqError> {
    if seq.stage != Stage::Purged {
        return Err(SeqError::Stage("finalize"));
    }
    let remap = seq.program.renumber();
    let mut line_map = LineMap::new();
    let mut ineligible = BTreeSet::new();
    for (old, new) in &remap {
        let prov = seq.builder.prov(*old);
        line_map.insert(*new, prov.origin);
        if prov.ineligible {
            ineligible.insert(*new);
        }
    }
    crate::minic::validate(&seq.program).map_err(SeqError::Invalid)?;
    seq.line_map = line_map;
    seq.ineligible = ineligible;
    seq.stage = Stage::Final;
    Ok(seq)
}
