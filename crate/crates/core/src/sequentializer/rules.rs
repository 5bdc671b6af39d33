//! Rewrite rules for thread-library statements.

use super::builder::Builder;
use super::*;
use crate::minic::*;

fn int_decl(names: &[String], init: Option<i64>) -> StmtKind {
    StmtKind::Decl(names.iter().map(|n| Declarator { name: n.clone(), init: init.map(Expr::Int) }).collect())
}

fn assign(target: &str, v: i64) -> StmtKind {
    StmtKind::Assign { target: target.into(), value: Expr::Int(v) }
}

/// Rewrites one statement. Ordinary statements come back unchanged (call
/// assignments are inlined separately); thread-library statements vanish,
/// except that for deadlock replay mutexes and condition variables become
/// integer flags.
pub fn apply_pthread_rules(stmt: &Stmt, deadlock: bool) -> Result<Vec<Stmt>, SeqError> {
    Ok(rewrite_kind(stmt, deadlock)?
        .map(|(k, _)| k)
        .map_or_else(|| vec![stmt.clone()], |k| k.into_iter().map(|k| Stmt::new(stmt.line, k)).collect()))
}

/// `None`: keep the statement. `Some`: replacement kinds and their reason.
fn rewrite_kind(stmt: &Stmt, deadlock: bool) -> Result<Option<(Vec<StmtKind>, SyntheticReason)>, SeqError> {
    use StmtKind as K;
    let k = &stmt.kind;
    if matches!(k, K::For { .. } | K::Switch { .. }) {
        return Err(SeqError::RuleGap { kind: k.name(), line: stmt.line });
    }
    if !k.is_pthread() {
        return Ok(None);
    }
    let mutex = SyntheticReason::MutexModel;
    let cond = SyntheticReason::CondModel;
    if !deadlock {
        return Ok(Some((Vec::new(), SyntheticReason::Framework)));
    }
    Ok(Some(match k {
        K::MutexDecl(ns) => (vec![int_decl(ns, Some(0))], mutex),
        K::Lock(m) => (vec![assign(m, 1)], mutex),
        K::Unlock(m) => (vec![assign(m, 0)], mutex),
        K::CondDecl(ns) => (vec![int_decl(ns, None)], cond),
        K::CondInit(c) => (vec![assign(c, 0)], cond),
        K::CondWait { cond: c, .. } => (vec![assign(c, 1)], cond),
        K::CondSignal(c) => (vec![assign(c, 0)], cond),
        _ => (Vec::new(), SyntheticReason::Framework),
    }))
}

fn purge_list(list: &mut Vec<Stmt>, b: &mut Builder, deadlock: bool, framework: bool) -> Result<(), SeqError> {
    let old = std::mem::take(list);
    for mut s in old {
        // The dispatch loop itself is framework code, not thread code.
        let is_framework = framework && matches!(s.kind, StmtKind::For { .. } | StmtKind::Switch { .. });
        if !is_framework {
            if let Some((kinds, reason)) = rewrite_kind(&s, deadlock)? {
                list.extend(kinds.into_iter().map(|k| b.synthetic(k, reason)));
                continue;
            }
        }
        for child in s.children_mut() {
            purge_list(child, b, deadlock, is_framework && framework)?;
        }
        list.push(s);
    }
    Ok(())
}

/// Applies the rules to globals and all thread code.
pub(crate) fn purge(mut seq: SequentialProgram, deadlock: bool) -> Result<SequentialProgram, SeqError> {
    if seq.stage != Stage::Controlled {
        return Err(SeqError::Stage("purge"));
    }
    let mut b = std::mem::take(&mut seq.builder);
    purge_list(&mut seq.program.globals, &mut b, deadlock, false)?;
    for f in &mut seq.program.functions {
        purge_list(&mut f.body, &mut b, deadlock, true)?;
    }
    seq.builder = b;
    seq.stage = Stage::Purged;
    Ok(seq)
}
