//! Property tests over randomly generated concurrent programs.

mod common;

use common::gen::{self, GenParams};
use mcfl::instrumenter::{block_diag, instrument, substitute, InstrumentedProgram};
use mcfl::localizer::{localize_with_artifacts, Status};
use mcfl::minic::{line_table, parse, pretty_print, BinOp, Expr, LineId, ParseError, Program, Stmt, StmtKind};
use mcfl::sequentializer::{sequentialize, LineOrigin, Schedule, SequentialProgram, SyntheticReason};
use mcfl::verifier::{extract_schedule, replay, verify, Counterexample, VerifierConfig};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;
use std::collections::{BTreeMap, BTreeSet};

fn program(seed: u64, params: &GenParams) -> (String, Program) {
    let src = gen::program(&mut StdRng::seed_from_u64(seed), params);
    let p = parse(&src).unwrap_or_else(|e| panic!("{e}\n{src}"));
    (src, p)
}

fn cfg() -> VerifierConfig {
    common::config((0, 2))
}

fn failing(p: &Program, c: &VerifierConfig) -> Option<Counterexample> {
    verify(p, c).unwrap().counterexample().cloned()
}

fn all_lines(p: &Program) -> Vec<LineId> {
    let mut out = Vec::new();
    p.walk(&mut |s| out.push(s.line));
    out
}

fn lines_of(p: &Program, func: &str) -> BTreeSet<LineId> {
    let mut out = BTreeSet::new();
    if let Some(f) = p.function(func) {
        for s in &f.body {
            s.walk(&mut |s| {
                out.insert(s.line);
            });
        }
    }
    out
}

/// Checks the structural laws of a sequential program against its source
/// program and schedule.
fn check_sequential(p: &Program, sched: &Schedule, seq: &SequentialProgram) -> Result<(), String> {
    // Tags: (thread + 1) * 10 + per-thread occurrence, counted from 1.
    if sched.order_tags.len() != sched.segments.len() {
        return Err("one tag per segment".into());
    }
    let mut seen: BTreeMap<usize, i64> = BTreeMap::new();
    for (seg, tag) in sched.segments.iter().zip(&sched.order_tags) {
        let j = seen.entry(seg.thread).or_insert(0);
        *j += 1;
        if *j >= 10 || *tag != (seg.thread as i64 + 1) * 10 + *j {
            return Err(format!("tag {tag} for occurrence {j} of thread {}", seg.thread));
        }
    }
    let mut pthread = 0;
    seq.program.walk(&mut |s| pthread += s.kind.is_pthread() as usize);
    if pthread != 0 {
        return Err(format!("{pthread} thread-library statements survive"));
    }
    if seq.program.functions.len() != 1 || seq.program.functions[0].name != "main" {
        return Err("only main remains".into());
    }
    // Line map: total, and pointing into the original program.
    let original = line_table(p);
    for l in all_lines(&seq.program) {
        match seq.line_map.get(&l) {
            None => return Err(format!("line {l} has no origin")),
            Some(o) => {
                if let Some(ol) = o.original() {
                    if !original.contains_key(&ol) {
                        return Err(format!("line {l} maps to unknown line {ol}"));
                    }
                }
            }
        }
    }
    // Placement: original code of thread n only under outer case n + 1.
    for (line, tag) in seq.segment_of_line() {
        let thread = (tag / 10 - 1) as usize;
        let Some(func) = sched.threads.get(thread) else { continue };
        if let Some(LineOrigin::Original(ol)) = seq.line_map.get(&line) {
            if !lines_of(p, func).contains(ol) {
                return Err(format!("line {ol} of another function placed in case {}", tag / 10));
            }
        }
    }
    Ok(())
}

/// The inner cases entered while replaying, in order.
fn entered_cases(seq: &SequentialProgram, cx: &Counterexample) -> Vec<i64> {
    let seg = seq.segment_of_line();
    let mut out: Vec<i64> = Vec::new();
    let mut last_index = None;
    for s in &cx.steps {
        let idx = s.valuation.get(&seq.order_index_var).copied();
        if let Some(tag) = seg.get(&s.line) {
            if last_index != idx || out.is_empty() {
                out.push(*tag);
                last_index = idx;
            }
        }
    }
    out
}

fn count_stmts(p: &Program, f: impl Fn(&Stmt) -> bool) -> usize {
    let mut n = 0;
    p.walk(&mut |s| n += f(s) as usize);
    n
}

fn is_block_of(s: &Stmt, diag: &str) -> Option<i64> {
    match &s.kind {
        StmtKind::Assume(Expr::Binary(BinOp::Ne, a, b)) => match (&**a, &**b) {
            (Expr::Var(v), Expr::Int(k)) if v == diag => Some(*k),
            _ => None,
        },
        _ => None,
    }
}

fn check_instrumented(seq: &SequentialProgram, instr: &InstrumentedProgram) -> Result<(), String> {
    let p = &instr.program;
    let main = &p.main().body;
    let asserts = count_stmts(p, |s| matches!(s.kind, StmtKind::Assert(_)));
    let last_is_false = matches!(main.last().map(|s| &s.kind), Some(StmtKind::Assert(Expr::Bool(false))));
    if asserts != 1 || !last_is_false {
        return Err(format!("{asserts} assertions; final assert(false): {last_is_false}"));
    }
    let originals = count_stmts(&seq.program, |s| matches!(s.kind, StmtKind::Assert(_)));
    let assumes = count_stmts(p, |s| matches!(s.kind, StmtKind::Assume(_)));
    let blocks: Vec<i64> = main.iter().filter_map(|s| is_block_of(s, &instr.diag_var)).collect();
    let seq_assumes = count_stmts(&seq.program, |s| matches!(s.kind, StmtKind::Assume(_)));
    if assumes != seq_assumes + originals + instr.blocked.len() {
        return Err(format!("{assumes} assumptions for {originals} assertions and {} blocks", instr.blocked.len()));
    }
    if blocks.iter().copied().collect::<BTreeSet<_>>() != instr.blocked || blocks.len() != instr.blocked.len() {
        return Err(format!("blocks {blocks:?} vs {:?}", instr.blocked));
    }
    // diag: declared once, drawn first, blocks right after the draw.
    let decls = count_stmts(p, |s| matches!(&s.kind, StmtKind::Decl(ds) if ds.iter().any(|d| d.name == instr.diag_var)));
    let draw = main.iter().position(|s| matches!(&s.kind, StmtKind::Nondet { target, .. } if *target == instr.diag_var));
    let Some(draw) = draw else { return Err("diag is never drawn".into()) };
    if decls != 1 || draw != 1 {
        return Err(format!("diag declared {decls} times, drawn at {draw}"));
    }
    if main[draw + 1..draw + 1 + blocks.len()].iter().any(|s| is_block_of(s, &instr.diag_var).is_none()) {
        return Err("blocks do not follow the draw".into());
    }
    // Every eligible line is wrapped with its own number.
    let wrapped = |e: &Expr, l: LineId| {
        matches!(e, Expr::Cond(t, v, _)
            if matches!(&**t, Expr::Binary(BinOp::Eq, d, n) if **d == Expr::var(&instr.diag_var) && **n == Expr::Int(l.0 as i64))
            && **v == Expr::var(&instr.value_var))
    };
    let seq_lines = line_table(&seq.program);
    let mut found = BTreeSet::new();
    p.walk(&mut |s| match &s.kind {
        StmtKind::Assign { value: e, .. } | StmtKind::If { cond: e, .. } | StmtKind::While { cond: e, .. } => {
            if let Expr::Cond(t, _, _) = e {
                if let Expr::Binary(BinOp::Eq, _, n) = &**t {
                    if let Expr::Int(l) = **n {
                        if wrapped(e, LineId(l as u32)) {
                            found.insert(LineId(l as u32));
                        }
                    }
                }
            }
        }
        _ => {}
    });
    if found != instr.diag_domain || !found.iter().all(|l| seq_lines.contains_key(l)) {
        return Err(format!("wrapped {found:?}, domain {:?}", instr.diag_domain));
    }
    Ok(())
}

fn fix_diag(instr: &InstrumentedProgram, d: i64) -> Program {
    let mut p = instr.program.clone();
    for s in p.main_mut().body.iter_mut() {
        if matches!(&s.kind, StmtKind::Nondet { target, .. } if *target == instr.diag_var) {
            s.kind = StmtKind::Assign { target: instr.diag_var.clone(), value: Expr::Int(d) };
        }
    }
    p
}

fn pipeline(seed: u64) -> Option<(Program, Counterexample, Schedule, SequentialProgram)> {
    let (_, p) = program(seed, &GenParams::replay());
    let c = VerifierConfig { deadlock_check: seed % 3 == 0, ..cfg() };
    let cx = failing(&p, &c)?;
    let sched = extract_schedule(&cx).unwrap();
    let seq = sequentialize(&p, &sched, cx.violation.is_deadlock()).unwrap();
    Some((p, cx, sched, seq))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn print_then_parse_is_identity(seed in any::<u64>()) {
        let (_, p) = program(seed, &GenParams::replay());
        let text = pretty_print(&p);
        prop_assert_eq!(parse(&text).unwrap(), p);
    }

    #[test]
    fn line_ids_are_dense_in_source_order(seed in any::<u64>()) {
        let (_, p) = program(seed, &GenParams::replay());
        let lines: Vec<u32> = all_lines(&p).into_iter().map(|l| l.0).collect();
        let want: Vec<u32> = (1..=lines.len() as u32).collect();
        prop_assert_eq!(lines, want);
    }

    #[test]
    fn undeclared_identifiers_are_rejected(seed in any::<u64>(), in_worker in any::<bool>()) {
        let (src, _) = program(seed, &GenParams::replay());
        let anchor = if in_worker { "void worker1() {\n" } else { "int main() {\n" };
        let bad = src.replacen(anchor, &format!("{anchor}  g0 = missing_name + 1;\n"), 1);
        let rejected = matches!(parse(&bad), Err(ParseError::Undeclared { .. }));
        prop_assert!(rejected);
    }

    #[test]
    fn violations_replay_exactly(seed in any::<u64>()) {
        let (_, p) = program(seed, &GenParams::replay());
        let c = VerifierConfig { deadlock_check: seed % 2 == 0, ..cfg() };
        if let Some(cx) = failing(&p, &c) {
            let r = replay(&p, &cx).unwrap();
            prop_assert_eq!(r.counterexample(), Some(&cx));
        }
    }

    #[test]
    fn verification_is_deterministic(seed in any::<u64>()) {
        let (_, p) = program(seed, &GenParams::replay());
        prop_assert_eq!(verify(&p, &cfg()).unwrap(), verify(&p, &cfg()).unwrap());
    }

    #[test]
    fn switches_match_thread_changes(seed in any::<u64>()) {
        let (_, p) = program(seed, &GenParams::replay());
        if let Some(cx) = failing(&p, &cfg()) {
            let changes = cx.steps.windows(2).filter(|w| w[0].thread != w[1].thread).count();
            prop_assert_eq!(cx.switches.len(), changes);
            prop_assert!(changes <= cfg().context_bound as usize);
            let mut per: BTreeMap<usize, usize> = BTreeMap::new();
            for (i, s) in cx.switches.iter().enumerate() {
                let n = per.entry(s.from_thread).or_insert(0);
                *n += 1;
                prop_assert_eq!(s.per_thread_index, *n);
                prop_assert_eq!(s.switch_index, i + 1);
            }
            prop_assert!(cx.steps.windows(2).all(|w| w[0].step_index < w[1].step_index));
        }
    }

    #[test]
    fn sequential_programs_keep_their_laws(seed in any::<u64>()) {
        if let Some((p, cx, sched, seq)) = pipeline(seed) {
            prop_assert_eq!(check_sequential(&p, &sched, &seq), Ok(()));
            if !cx.violation.is_deadlock() {
                let sc = failing(&seq.program, &VerifierConfig { context_bound: 0, ..cfg() }).unwrap();
                prop_assert_eq!(entered_cases(&seq, &sc), sched.order_tags.clone());
            }
        }
    }

    #[test]
    fn instrumentation_has_the_expected_shape(seed in any::<u64>(), blocks in proptest::collection::vec(0i64..40, 0..4)) {
        if let Some((_, _, _, seq)) = pipeline(seed) {
            if let Ok(mut instr) = instrument(&seq, (0, 2)) {
                prop_assert_eq!(check_instrumented(&seq, &instr), Ok(()));
                for b in blocks {
                    instr = block_diag(instr, b);
                }
                prop_assert_eq!(check_instrumented(&seq, &instr), Ok(()));
            }
        }
    }

    #[test]
    fn instrumentation_is_faithful_off_diagnosis(seed in any::<u64>()) {
        if let Some((_, _, _, seq)) = pipeline(seed) {
            if let Ok(instr) = instrument(&seq, (0, 2)) {
                let c = VerifierConfig { context_bound: 0, deadlock_check: false, division_check: false, ..cfg() };
                // A run counts as passing only if it completes: no cut loop, no division by zero.
                let plain = verify(&seq.program, &VerifierConfig { division_check: true, ..c.clone() }).unwrap();
                let passes = plain.is_safe() && !plain.bound_hit;
                let reaches_end = !verify(&fix_diag(&instr, 0), &c).unwrap().is_safe();
                prop_assert_eq!(reaches_end, passes);
            }
        }
    }

    #[test]
    fn reports_are_consistent(seed in any::<u64>()) {
        let (_, p) = program(seed, &GenParams::small());
        let c = cfg();
        let (r, art) = localize_with_artifacts(&p, &c).unwrap();
        prop_assert_eq!(r.found_error_count, r.diagnoses.len());
        match r.status {
            Status::FaultsFound => prop_assert!(!r.diagnoses.is_empty()),
            Status::NoCounterexample => prop_assert!(r.diagnoses.is_empty() && r.counterexample.is_none()),
            _ => {}
        }
        prop_assert!(r.iterations <= r.diag_domain_size);
        let distinct: BTreeSet<i64> = r.diagnoses.iter().map(|d| d.seq_line).collect();
        prop_assert_eq!(distinct.len(), r.diagnoses.len());
        if let (Some(cx), Some(sched), Some(seq)) = (&r.counterexample, &art.schedule, &art.sequential) {
            let again = extract_schedule(cx).unwrap();
            prop_assert_eq!(&again, sched);
            prop_assert_eq!(check_sequential(&p, sched, seq), Ok(()));
            let seq_cfg = VerifierConfig { context_bound: 0, deadlock_check: false, ..c.clone() };
            for d in r.diagnoses.iter().filter(|d| d.original_line.is_some()) {
                let fixed = substitute(&seq.program, LineId(d.seq_line as u32), d.witness_value);
                let v = verify(&fixed, &seq_cfg).unwrap();
                prop_assert_eq!(d.oracle_validated, v.is_safe() && !v.bound_hit, "line {}", d.seq_line);
            }
        }
        if let Some(instr) = &art.instrumented {
            prop_assert!(r.diagnoses.iter().all(|d| d.original_line.is_none() || instr.diag_domain.contains(&LineId(d.seq_line as u32))));
        }
    }
}

#[test]
fn unwind_copies_point_to_callee_lines() {
    let src = std::fs::read_to_string(common::sample("fig5.mc")).unwrap();
    let p = parse(&src).unwrap();
    let u = mcfl::sequentializer::unwind_calls(&p);
    let callee = lines_of(&p, "f");
    for o in u.line_map.values() {
        if let LineOrigin::Synthetic(SyntheticReason::UnwindCopy(l)) = o {
            let call_site = matches!(line_table(&p)[l].kind, StmtKind::Call { .. });
            assert!(callee.contains(l) || call_site, "copy of line {l} is neither in f nor a call");
        }
    }
}
