//! Turns guard and loop-end markers into order guards and loop counters.

use super::builder::{Builder, LoopKey, Marker};
use super::*;
use crate::minic::*;
use std::collections::HashMap;

/// Replaces every guard marker by
/// `if (order[order_index] == tag && loopcounter_k == n) { break; }` and
/// counts loop iterations of the threads that have guards. A schedule without
/// mid-segment switches leaves the program unchanged.
pub fn inject_order_control(mut seq: SequentialProgram, schedule: &Schedule) -> Result<SequentialProgram, SeqError> {
    if seq.stage != Stage::Laid {
        return Err(SeqError::Stage("inject_order_control"));
    }
    let known: BTreeSet<i64> = schedule.order_tags.iter().copied().collect();
    let mut guarded = BTreeSet::new();
    let mut loops: Vec<LoopKey> = Vec::new();
    let markers = &seq.builder.markers;
    let mut bad_tag = None;
    seq.program.walk(&mut |s| match markers.get(&s.line) {
        Some(Marker::Guard { thread, tag, .. }) => {
            guarded.insert(*thread);
            if !known.contains(tag) {
                bad_tag = Some(*tag);
            }
        }
        Some(Marker::LoopEnd(key)) if !loops.contains(key) => loops.push(key.clone()),
        _ => {}
    });
    if let Some(tag) = bad_tag {
        return Err(SeqError::ScheduleMismatch(format!("guard for tag {tag} is not in the order table")));
    }
    loops.retain(|k| guarded.contains(&k.0));

    let mut fresh = FreshNames::for_program(&seq.program);
    let mut names: HashMap<LoopKey, String> = HashMap::new();
    for (i, key) in loops.iter().enumerate() {
        let name = fresh.fresh(&format!("loopcounter_{}", i + 1));
        let decl = StmtKind::Decl(vec![Declarator { name: name.clone(), init: Some(Expr::Int(0)) }]);
        let g = seq.builder.synthetic(decl, SyntheticReason::Loopcounter);
        seq.program.globals.push(g);
        seq.loopcounters.push(LoopCounterInfo { name: name.clone(), thread: key.0, call_path: key.1.clone(), line: key.2 });
        names.insert(key.clone(), name);
    }

    let ctx = Ctx { order: &seq.order_var, order_index: &seq.order_index_var, names: &names };
    let mut b = std::mem::take(&mut seq.builder);
    let mut missing = None;
    for f in &mut seq.program.functions {
        rewrite(&mut f.body, &mut b, &ctx, &mut missing);
    }
    seq.builder = b;
    if let Some((tag, line)) = missing {
        return Err(SeqError::GuardPlacement { tag, line });
    }
    seq.stage = Stage::Controlled;
    Ok(seq)
}

struct Ctx<'a> {
    order: &'a str,
    order_index: &'a str,
    names: &'a HashMap<LoopKey, String>,
}

fn rewrite(list: &mut Vec<Stmt>, b: &mut Builder, ctx: &Ctx<'_>, missing: &mut Option<(i64, LineId)>) {
    let old = std::mem::take(list);
    for mut s in old {
        match b.markers.remove(&s.line) {
            Some(Marker::Guard { tag, counter, .. }) => {
                let current = Expr::Index(ctx.order.into(), Box::new(Expr::var(ctx.order_index)));
                let mut cond = Expr::bin(BinOp::Eq, current, Expr::Int(tag));
                if let Some((key, n)) = counter {
                    match ctx.names.get(&key) {
                        Some(name) => {
                            let c = Expr::bin(BinOp::Eq, Expr::var(name), Expr::Int(n as i64));
                            cond = Expr::bin(BinOp::And, cond, c);
                        }
                        None => *missing = Some((tag, key.2)),
                    }
                }
                let brk = b.synthetic(StmtKind::Break, SyntheticReason::OrderControl);
                list.push(Stmt::new(s.line, StmtKind::If { cond, then_body: vec![brk], else_body: None }));
            }
            Some(Marker::LoopEnd(key)) => {
                if let Some(name) = ctx.names.get(&key) {
                    let value = Expr::bin(BinOp::Add, Expr::var(name), Expr::Int(1));
                    let inc = StmtKind::Assign { target: name.clone(), value };
                    list.push(b.synthetic(inc, SyntheticReason::Loopcounter));
                }
            }
            None => {
                for child in s.children_mut() {
                    rewrite(child, b, ctx, missing);
                }
                list.push(s);
            }
        }
    }
}
