//! Diagnosis model: a nondeterministic `diag` selects one line whose value is
//! replaced, assertions become assumptions, and reaching the final
//! `assert(false)` means the chosen replacement avoids every failure.

use crate::minic::*;
use crate::sequentializer::SequentialProgram;
use serde::Serialize;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstrumentError {
    #[error("no assignment or condition is eligible for diagnosis")]
    NothingToInstrument,
}

#[derive(Debug, Clone, Serialize)]
pub struct InstrumentedProgram {
    #[serde(skip)]
    pub program: Program,
    /// Sequential lines whose value may be replaced.
    pub diag_domain: BTreeSet<LineId>,
    /// Diag values excluded by `assume(diag != v)`.
    pub blocked: BTreeSet<i64>,
    pub diag_var: String,
    /// Replacement value shared by all wrapped sites.
    pub value_var: String,
    pub value_range: (i64, i64),
}

/// Lines of `seq` whose assignment right-hand side or branch condition may be
/// replaced: they stand for original code and are not replayed inputs or
/// rewritten declarations.
pub fn eligible_lines(seq: &SequentialProgram) -> BTreeSet<LineId> {
    let mut out = BTreeSet::new();
    seq.program.walk(&mut |s| {
        let wrappable = matches!(s.kind, StmtKind::Assign { .. } | StmtKind::If { .. } | StmtKind::While { .. });
        let original = seq.line_map.get(&s.line).is_some_and(|o| o.original().is_some());
        if wrappable && original && !seq.ineligible.contains(&s.line) {
            out.insert(s.line);
        }
    });
    out
}

fn wrap(e: &mut Expr, diag: &str, value: &str, line: LineId) {
    let test = Expr::bin(BinOp::Eq, Expr::var(diag), Expr::Int(line.0 as i64));
    let orig = std::mem::replace(e, Expr::Int(0));
    *e = Expr::Cond(Box::new(test), Box::new(Expr::var(value)), Box::new(orig));
}

/// Builds the diagnosis model of a sequential program. `nondet_domain` bounds
/// the replacement value; it is widened to include 0 and 1 so that conditions
/// can take either branch.
pub fn instrument(seq: &SequentialProgram, nondet_domain: (i64, i64)) -> Result<InstrumentedProgram, InstrumentError> {
    let domain = eligible_lines(seq);
    let Some(&max) = domain.last() else {
        return Err(InstrumentError::NothingToInstrument);
    };
    let mut program = seq.program.clone();
    let mut fresh = FreshNames::for_program(&program);
    let diag = fresh.fresh("diag");
    let value = fresh.fresh("diag_value");
    let range = (nondet_domain.0.min(0), nondet_domain.1.max(1));
    let main = program.main_mut();
    for s in main.body.iter_mut() {
        s.walk_mut(&mut |s| {
            let line = s.line;
            let hit = domain.contains(&line);
            match &mut s.kind {
                StmtKind::Assign { value: e, .. } | StmtKind::If { cond: e, .. } | StmtKind::While { cond: e, .. }
                    if hit =>
                {
                    wrap(e, &diag, &value, line)
                }
                StmtKind::Assert(e) => s.kind = StmtKind::Assume(e.clone()),
                _ => {}
            }
        });
    }
    let l = LineId(0);
    let decl = |n: &str| Stmt::new(l, StmtKind::Decl(vec![Declarator { name: n.into(), init: None }]));
    let mut head = vec![
        decl(&diag),
        Stmt::new(l, StmtKind::Nondet { target: diag.clone(), range: Some((0, max.0 as i64)) }),
        decl(&value),
        Stmt::new(l, StmtKind::Nondet { target: value.clone(), range: Some(range) }),
    ];
    head.append(&mut main.body);
    head.push(Stmt::new(l, StmtKind::Assert(Expr::Bool(false))));
    main.body = head;
    // Globals are untouched; asserts there cannot occur.
    program.renumber();
    Ok(InstrumentedProgram {
        program,
        diag_domain: domain,
        blocked: BTreeSet::new(),
        diag_var: diag,
        value_var: value,
        value_range: range,
    })
}

/// Excludes `value` from further diagnosis by adding `assume(diag != value)`
/// right after the assignment of `diag`. Blocking a value twice is a no-op.
pub fn block_diag(mut instr: InstrumentedProgram, value: i64) -> InstrumentedProgram {
    if !instr.blocked.insert(value) {
        return instr;
    }
    let cond = Expr::bin(BinOp::Ne, Expr::var(&instr.diag_var), Expr::Int(value));
    let diag = instr.diag_var.clone();
    let body = &mut instr.program.main_mut().body;
    let at = body
        .iter()
        .position(|s| matches!(&s.kind, StmtKind::Nondet { target, .. } if *target == diag))
        .expect("diag is assigned in main")
        + 1;
    body.insert(at, Stmt::new(LineId(0), StmtKind::Assume(cond)));
    instr.program.renumber();
    instr
}

/// Replaces line `line`'s right-hand side or condition by a constant.
pub fn substitute(program: &Program, line: LineId, value: i64) -> Program {
    let mut p = program.clone();
    p.walk_mut(&mut |s| {
        if s.line == line {
            match &mut s.kind {
                StmtKind::Assign { value: e, .. } | StmtKind::If { cond: e, .. } | StmtKind::While { cond: e, .. } => {
                    *e = Expr::Int(value)
                }
                _ => {}
            }
        }
    });
    p
}
