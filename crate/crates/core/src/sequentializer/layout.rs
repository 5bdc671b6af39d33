//! Framework skeleton: one dispatch case per segment, each holding the thread
//! code from where the previous segment stopped, with guard markers at the
//! point where the segment ends.

use super::builder::{Builder, LoopKey, Marker};
use super::unwind::{declared_locals, ReturnMode, SiteNode, TreeBuilder};
use super::*;
use crate::minic::*;
use std::collections::HashMap;

/// Most thread ordinals whose outer case label stays below the first tag.
const MAX_THREADS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Point {
    Start,
    After(LineId),
    ThenStart(LineId),
    ElseStart(LineId),
    BodyStart(LineId),
    BlockStart(LineId),
}

fn point_of(sites: &HashMap<(Vec<LineId>, LineId), SiteNode>, pos: &Position) -> Result<Point, SeqError> {
    let node = sites.get(&(pos.call_path.clone(), pos.line)).ok_or_else(|| {
        SeqError::ScheduleMismatch(format!("no statement for line {} (call path {:?})", pos.line, pos.call_path))
    })?;
    Ok(match (*node, pos.branch) {
        (SiteNode::If { id, .. }, Some(true)) => Point::ThenStart(id),
        (SiteNode::If { id, has_else: true }, Some(false)) => Point::ElseStart(id),
        (SiteNode::While(id), Some(true)) => Point::BodyStart(id),
        (SiteNode::Call { last_param: Some(p), .. }, _) => Point::After(p),
        (SiteNode::Call { block, last_param: None }, _) => Point::BlockStart(block),
        (SiteNode::Plain(id) | SiteNode::If { id, .. } | SiteNode::While(id), _) => Point::After(id),
    })
}

fn find(list: &[Stmt], id: LineId, frames: &mut Vec<(usize, usize)>) -> Option<usize> {
    for (i, s) in list.iter().enumerate() {
        if s.line == id {
            return Some(i);
        }
        for (ci, child) in s.children().into_iter().enumerate() {
            frames.push((i, ci));
            if let Some(k) = find(child, id, frames) {
                return Some(k);
            }
            frames.pop();
        }
    }
    None
}

/// Copies of everything that runs after `point`, climbing out of enclosing
/// blocks; an enclosing loop is re-entered through a copy of the loop itself.
fn continuation(b: &mut Builder, tree: &[Stmt], point: Point) -> Vec<Stmt> {
    let mut frames = Vec::new();
    let start = match point {
        Point::Start => 0,
        Point::After(x) => find(tree, x, &mut frames).expect("point in tree") + 1,
        Point::ThenStart(x) | Point::BodyStart(x) | Point::BlockStart(x) | Point::ElseStart(x) => {
            let k = find(tree, x, &mut frames).expect("point in tree");
            frames.push((k, usize::from(matches!(point, Point::ElseStart(_)))));
            0
        }
    };
    let mut lists: Vec<&[Stmt]> = vec![tree];
    for &(i, ci) in &frames {
        let parent = &lists[lists.len() - 1][i];
        lists.push(parent.children()[ci]);
    }
    let mut out: Vec<Stmt> = lists[frames.len()][start..].iter().map(|s| b.copy(s)).collect();
    for (j, &(i, ci)) in frames.iter().enumerate().rev() {
        let parent = &lists[j][i];
        if matches!(parent.kind, StmtKind::While { .. }) && ci == 0 {
            out.push(b.copy(parent));
        }
        out.extend(lists[j][i + 1..].iter().map(|s| b.copy(s)));
    }
    out
}

/// Inserts a fresh marker at every image of `point` in `list`; returns the count.
fn place(list: &mut Vec<Stmt>, b: &mut Builder, point: Point, mk: &dyn Fn(&mut Builder) -> Stmt) -> usize {
    let mut n = 0;
    let mut i = 0;
    while i < list.len() {
        for child in list[i].children_mut() {
            n += place(child, b, point, mk);
        }
        let node = b.node_of(list[i].line);
        let child = match point {
            Point::After(x) if x == node => {
                list.insert(i + 1, mk(b));
                n += 1;
                i += 1;
                None
            }
            Point::ThenStart(x) | Point::BodyStart(x) | Point::BlockStart(x) if x == node => Some(0),
            Point::ElseStart(x) if x == node => Some(1),
            _ => None,
        };
        if let Some(ci) = child {
            let m = mk(b);
            if let Some(l) = list[i].children_mut().into_iter().nth(ci) {
                l.insert(0, m);
                n += 1;
            }
        }
        i += 1;
    }
    n
}

pub(crate) fn layout(program: &Program, schedule: &Schedule) -> Result<SequentialProgram, SeqError> {
    let threads = &schedule.threads;
    if threads.first().map(String::as_str) != Some("main") {
        return Err(SeqError::ScheduleMismatch("thread 0 must run main".into()));
    }
    if threads.len() > MAX_THREADS {
        return Err(SeqError::UnsupportedSchedule(format!(
            "{} threads; at most {MAX_THREADS} are supported",
            threads.len()
        )));
    }
    let mut funcs = Vec::new();
    for name in threads {
        funcs.push(
            program.function(name).ok_or_else(|| SeqError::ScheduleMismatch(format!("unknown function {name}")))?,
        );
    }
    if let Some(s) = schedule.segments.iter().find(|s| s.thread >= threads.len()) {
        return Err(SeqError::ScheduleMismatch(format!("segment {} names unknown thread {}", s.tag, s.thread)));
    }
    let mut kinds: HashMap<LineId, &StmtKind> = HashMap::new();
    program.walk(&mut |s| {
        kinds.insert(s.line, &s.kind);
    });

    let mut used = std::collections::BTreeSet::new();
    used.extend(crate::minic::lexer::KEYWORDS.iter().map(|k| k.to_string()));
    for g in &program.globals {
        collect_stmt_names(&g.kind, &mut |n| {
            used.insert(n.to_string());
        });
    }
    used.extend(program.functions.iter().map(|f| f.name.clone()));
    used.extend(declared_locals(&program.main().body));
    let mut fresh = FreshNames::new(used);
    let order = fresh.fresh("order");
    let order_index = fresh.fresh("order_index");
    let k = schedule.order_tags.len() as i64;

    let mut b = Builder::default();
    let mut globals: Vec<Stmt> = program
        .globals
        .iter()
        .map(|g| {
            let mut g = g.clone();
            g.walk_mut(&mut |s| s.line = b.alloc(LineOrigin::Original(s.line), false));
            g
        })
        .collect();
    let order_decl = StmtKind::ArrayDecl { name: order.clone(), size: k as usize, init: schedule.order_tags.clone() };
    globals.push(b.synthetic(order_decl, SyntheticReason::Framework));

    let mut hoisted: Vec<String> = Vec::new();
    let mut arms: Vec<SwitchArm> = Vec::new();
    let last_tag = schedule.segments.last().map(|s| s.tag);
    for (n, func) in funcs.iter().enumerate() {
        let segs: Vec<&Segment> = schedule.segments.iter().filter(|s| s.thread == n).collect();
        let multi = segs.len() > 1;
        let mut rename = BTreeMap::new();
        if n > 0 {
            for x in declared_locals(&func.body) {
                let new = fresh.fresh(&format!("t{n}_{x}"));
                rename.insert(x, new);
            }
        }
        let mut tb = TreeBuilder::new(program, &mut b, &mut fresh, n);
        tb.hoist = multi.then(Vec::new);
        tb.strict_nondet = true;
        tb.loop_markers = true;
        tb.returns = if n == 0 {
            ReturnMode::Main { order_index: order_index.clone(), len: k }
        } else {
            ReturnMode::Thread
        };
        for p in schedule.pins.iter().filter(|p| p.thread == n) {
            tb.pins.insert((p.call_path.clone(), p.line), p.values.clone());
        }
        let tree = tb.entry(&func.body, &rename)?;
        let sites = std::mem::take(&mut tb.sites);
        hoisted.extend(tb.hoist.take().unwrap_or_default());
        globals.append(&mut tb.pin_globals);

        arms.push(SwitchArm { label: (n + 1) as i64, body: Vec::new() });
        if segs.is_empty() {
            // Created but never scheduled: kept for completeness, unreachable.
            let body: Vec<Stmt> = tree.iter().map(|s| b.copy(s)).collect();
            arms.push(case_arm(&mut b, ((n + 1) * 10 + 1) as i64, body));
            continue;
        }
        for seg in segs {
            let start = match &seg.start {
                None => Point::Start,
                Some(p) => point_of(&sites, p)?,
            };
            let mut body = continuation(&mut b, &tree, start);
            let exited = matches!(kinds.get(&seg.end.line), Some(StmtKind::Exit));
            let done = seg.finished && !exited;
            let violating_end = Some(seg.tag) == last_tag && !schedule.ends_in_deadlock;
            if !done && !violating_end {
                let end = point_of(&sites, &seg.end)?;
                let counter = guard_counter(n, &seg.end, &sites);
                let (thread, tag) = (n, seg.tag);
                let mk = move |b: &mut Builder| b.marker(Marker::Guard { thread, tag, counter: counter.clone() });
                let mut images = place(&mut body, &mut b, end, &mk);
                if start == end {
                    body.insert(0, mk(&mut b));
                    images += 1;
                }
                if images == 0 {
                    return Err(SeqError::GuardPlacement { tag: seg.tag, line: seg.end.line });
                }
            }
            arms.push(case_arm(&mut b, seg.tag, body));
        }
    }

    let mut main_body = Vec::new();
    for name in std::iter::once(&order_index).chain(&hoisted) {
        let decl = StmtKind::Decl(vec![Declarator { name: name.clone(), init: None }]);
        main_body.push(b.synthetic(decl, SyntheticReason::Framework));
    }
    let default = vec![b.synthetic(StmtKind::Break, SyntheticReason::Framework)];
    let dispatch = StmtKind::Switch {
        scrutinee: Expr::Index(order.clone(), Box::new(Expr::var(&order_index))),
        arms,
        default: Some(default),
    };
    let dispatch = b.synthetic(dispatch, SyntheticReason::Framework);
    let for_loop = StmtKind::For {
        var: order_index.clone(),
        init: Expr::Int(0),
        cond: Expr::bin(BinOp::Lt, Expr::var(&order_index), Expr::Int(k)),
        step: Expr::bin(BinOp::Add, Expr::var(&order_index), Expr::Int(1)),
        body: vec![dispatch],
    };
    main_body.push(b.synthetic(for_loop, SyntheticReason::Framework));
    let main = Function { name: "main".into(), ret: RetType::Int, params: Vec::new(), body: main_body };
    Ok(SequentialProgram {
        program: Program { globals, functions: vec![main] },
        line_map: LineMap::new(),
        ineligible: BTreeSet::new(),
        order_var: order,
        order_index_var: order_index,
        loopcounters: Vec::new(),
        stage: Stage::Laid,
        builder: b,
    })
}

fn case_arm(b: &mut Builder, tag: i64, body: Vec<Stmt>) -> SwitchArm {
    let block = b.synthetic(StmtKind::Block(body), SyntheticReason::Framework);
    let brk = b.synthetic(StmtKind::Break, SyntheticReason::Framework);
    SwitchArm { label: tag, body: vec![block, brk] }
}

/// Innermost enclosing loop of the end position and its iteration count; a
/// loop exit is counted by the next enclosing loop.
fn guard_counter(thread: usize, end: &Position, sites: &HashMap<(Vec<LineId>, LineId), SiteNode>) -> Option<(LoopKey, u32)> {
    let exits_loop = end.branch == Some(false)
        && matches!(sites.get(&(end.call_path.clone(), end.line)), Some(SiteNode::While(_)));
    end.loops
        .iter()
        .filter(|l| !(exits_loop && l.call_path == end.call_path && l.line == end.line))
        .last()
        .map(|l| ((thread, l.call_path.clone(), l.line), l.count))
}
