//! Inlining of call-assignments and construction of per-thread statement trees.

use super::builder::{Builder, LoopKey, Marker};
use super::{LineMap, LineOrigin, SeqError, SyntheticReason};
use crate::minic::*;
use std::collections::{BTreeMap, HashMap};

/// Where a step of the original program lands in a thread tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SiteNode {
    Plain(LineId),
    If { id: LineId, has_else: bool },
    While(LineId),
    /// Parameter binding of an inlined call.
    Call { block: LineId, last_param: Option<LineId> },
}

pub(crate) type SiteKey = (Vec<LineId>, LineId);

#[derive(Debug, Clone)]
pub(crate) enum ReturnMode {
    Keep,
    /// Thread function: `return` leaves the segment.
    Thread,
    /// `main`: the trailing return disappears, others end the dispatch loop.
    Main { order_index: String, len: i64 },
}

pub(crate) struct TreeBuilder<'a> {
    pub program: &'a Program,
    pub b: &'a mut Builder,
    pub fresh: &'a mut FreshNames,
    pub thread: usize,
    pub sites: HashMap<SiteKey, SiteNode>,
    /// Replace declarations by assignments and collect the names.
    pub hoist: Option<Vec<String>>,
    pub pins: HashMap<SiteKey, Vec<i64>>,
    pub pin_globals: Vec<Stmt>,
    pub returns: ReturnMode,
    /// Reject `nondet` inside expressions.
    pub strict_nondet: bool,
    pub loop_markers: bool,
}

fn origin(chain: &[LineId], line: LineId) -> LineOrigin {
    if chain.is_empty() {
        LineOrigin::Original(line)
    } else {
        LineOrigin::Synthetic(SyntheticReason::UnwindCopy(line))
    }
}

fn rename_kind(kind: &mut StmtKind, map: &BTreeMap<String, String>) {
    let r = |n: &mut String| {
        if let Some(m) = map.get(n) {
            *n = m.clone();
        }
    };
    match kind {
        StmtKind::Decl(ds) => {
            for d in ds {
                r(&mut d.name);
                if let Some(e) = &mut d.init {
                    e.rename(map);
                }
            }
        }
        StmtKind::Assign { target, value } => {
            r(target);
            value.rename(map);
        }
        StmtKind::Nondet { target, .. } => r(target),
        StmtKind::Call { target, args, .. } => {
            r(target);
            args.iter_mut().for_each(|a| a.rename(map));
        }
        StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => cond.rename(map),
        StmtKind::For { var, init, cond, step, .. } => {
            r(var);
            init.rename(map);
            cond.rename(map);
            step.rename(map);
        }
        StmtKind::Switch { scrutinee, .. } => scrutinee.rename(map),
        StmtKind::Assert(e) | StmtKind::Assume(e) | StmtKind::Return(Some(e)) => e.rename(map),
        StmtKind::ThreadDecl(ns) => ns.iter_mut().for_each(r),
        StmtKind::Create { handle, .. } => r(handle),
        StmtKind::Join(h) => r(h),
        _ => {}
    }
}

/// Names declared anywhere in a function body, in source order (handles included).
pub(crate) fn declared_locals(body: &[Stmt]) -> Vec<String> {
    let mut out = Vec::new();
    for s in body {
        s.walk(&mut |s| match &s.kind {
            StmtKind::Decl(ds) => out.extend(ds.iter().map(|d| d.name.clone())),
            StmtKind::ThreadDecl(ns) => out.extend(ns.iter().cloned()),
            _ => {}
        });
    }
    out
}

fn has_expr_nondet(kind: &StmtKind) -> bool {
    match kind {
        StmtKind::Decl(ds) => ds.iter().any(|d| d.init.as_ref().is_some_and(|e| e.contains_nondet())),
        StmtKind::Assign { value, .. } => value.contains_nondet(),
        StmtKind::Call { args, .. } => args.iter().any(|a| a.contains_nondet()),
        StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => cond.contains_nondet(),
        StmtKind::Assert(e) | StmtKind::Assume(e) | StmtKind::Return(Some(e)) => e.contains_nondet(),
        _ => false,
    }
}

impl<'a> TreeBuilder<'a> {
    pub fn new(program: &'a Program, b: &'a mut Builder, fresh: &'a mut FreshNames, thread: usize) -> Self {
        TreeBuilder {
            program,
            b,
            fresh,
            thread,
            sites: HashMap::new(),
            hoist: None,
            pins: HashMap::new(),
            pin_globals: Vec::new(),
            returns: ReturnMode::Keep,
            strict_nondet: false,
            loop_markers: false,
        }
    }

    /// Converts an entry function body; `rename` maps its locals.
    pub fn entry(&mut self, body: &[Stmt], rename: &BTreeMap<String, String>) -> Result<Vec<Stmt>, SeqError> {
        let trailing = body.last().filter(|s| matches!(s.kind, StmtKind::Return(_))).map(|s| s.line);
        self.list(body, &[], rename, 0, trailing)
    }

    fn list(
        &mut self,
        body: &[Stmt],
        chain: &[LineId],
        map: &BTreeMap<String, String>,
        loop_depth: usize,
        trailing: Option<LineId>,
    ) -> Result<Vec<Stmt>, SeqError> {
        let mut out = Vec::new();
        for s in body {
            self.stmt(s, chain, map, loop_depth, trailing, &mut out)?;
        }
        Ok(out)
    }

    fn site(&mut self, chain: &[LineId], line: LineId, node: SiteNode) {
        self.sites.insert((chain.to_vec(), line), node);
    }

    fn stmt(
        &mut self,
        s: &Stmt,
        chain: &[LineId],
        map: &BTreeMap<String, String>,
        loop_depth: usize,
        trailing: Option<LineId>,
        out: &mut Vec<Stmt>,
    ) -> Result<(), SeqError> {
        let line = s.line;
        let org = origin(chain, line);
        if self.strict_nondet && has_expr_nondet(&s.kind) {
            return Err(SeqError::UnsupportedNondet(line));
        }
        match &s.kind {
            StmtKind::Call { target, func, args } => {
                let callee = self.program.function(func).expect("validated callee");
                let mut inner = BTreeMap::new();
                for n in callee.params.iter().chain(declared_locals(&callee.body).iter()) {
                    inner.insert(n.clone(), self.fresh.fresh(n));
                }
                let mut target = target.clone();
                if let Some(m) = map.get(&target) {
                    target = m.clone();
                }
                let block_line = self.b.alloc(org, false);
                let mut items = Vec::new();
                let mut last_param = None;
                for (p, a) in callee.params.iter().zip(args) {
                    let mut a = a.clone();
                    a.rename(map);
                    let decl = StmtKind::Decl(vec![Declarator { name: inner[p].clone(), init: Some(a) }]);
                    let st = self.b.stmt(decl, LineOrigin::Synthetic(SyntheticReason::UnwindCopy(line)), true);
                    last_param = Some(self.decl_or_hoist(st, &mut items));
                }
                let mut inner_chain = chain.to_vec();
                inner_chain.push(line);
                let (ret, rest) = callee.body.split_last().expect("int function ends with return");
                items.extend(self.list(rest, &inner_chain, &inner, loop_depth, None)?);
                let StmtKind::Return(Some(e)) = &ret.kind else { unreachable!("validated return") };
                if self.strict_nondet && e.contains_nondet() {
                    return Err(SeqError::UnsupportedNondet(ret.line));
                }
                let mut value = e.clone();
                value.rename(&inner);
                let assign = self.b.stmt(StmtKind::Assign { target, value }, origin(&inner_chain, ret.line), false);
                self.site(&inner_chain, ret.line, SiteNode::Plain(assign.line));
                items.push(assign);
                self.site(chain, line, SiteNode::Call { block: block_line, last_param });
                out.push(Stmt::new(block_line, StmtKind::Block(items)));
            }
            StmtKind::If { cond, then_body, else_body } => {
                let id = self.b.alloc(org, false);
                let mut cond = cond.clone();
                cond.rename(map);
                let then_body = self.list(then_body, chain, map, loop_depth, None)?;
                let else_body = match else_body {
                    Some(e) => Some(self.list(e, chain, map, loop_depth, None)?),
                    None => None,
                };
                self.site(chain, line, SiteNode::If { id, has_else: else_body.is_some() });
                out.push(Stmt::new(id, StmtKind::If { cond, then_body, else_body }));
            }
            StmtKind::While { cond, body } => {
                let id = self.b.alloc(org, false);
                let mut cond = cond.clone();
                cond.rename(map);
                let mut body = self.list(body, chain, map, loop_depth + 1, None)?;
                if self.loop_markers {
                    let key: LoopKey = (self.thread, chain.to_vec(), line);
                    body.push(self.b.marker(Marker::LoopEnd(key)));
                }
                self.site(chain, line, SiteNode::While(id));
                out.push(Stmt::new(id, StmtKind::While { cond, body }));
            }
            StmtKind::Block(body) => {
                let id = self.b.alloc(org, false);
                let body = self.list(body, chain, map, loop_depth, None)?;
                out.push(Stmt::new(id, StmtKind::Block(body)));
            }
            StmtKind::For { .. } | StmtKind::Switch { .. } | StmtKind::Break => {
                if matches!(self.returns, ReturnMode::Keep) {
                    let mut c = s.clone();
                    c.line = self.b.alloc(org, false);
                    // Nested statements of these forms keep their structure.
                    let mut children_err = None;
                    for list in c.children_mut() {
                        let converted = self.list(list, chain, map, loop_depth, None);
                        match converted {
                            Ok(v) => *list = v,
                            Err(e) => children_err = Some(e),
                        }
                    }
                    if let Some(e) = children_err {
                        return Err(e);
                    }
                    rename_kind(&mut c.kind, map);
                    self.site(chain, line, SiteNode::Plain(c.line));
                    out.push(c);
                } else {
                    return Err(SeqError::RuleGap { kind: s.kind.name(), line });
                }
            }
            StmtKind::Return(_) => {
                let id = match &self.returns {
                    ReturnMode::Keep => {
                        let mut kind = s.kind.clone();
                        rename_kind(&mut kind, map);
                        let st = self.b.stmt(kind, org, false);
                        let id = st.line;
                        out.push(st);
                        id
                    }
                    ReturnMode::Thread => {
                        let st = self.b.stmt(StmtKind::Break, org, true);
                        let id = st.line;
                        out.push(st);
                        id
                    }
                    ReturnMode::Main { order_index, len } => {
                        if trailing == Some(line) {
                            return Ok(());
                        }
                        let (order_index, len) = (order_index.clone(), *len);
                        let set = self.b.synthetic(
                            StmtKind::Assign { target: order_index, value: Expr::Int(len) },
                            SyntheticReason::Framework,
                        );
                        let brk = self.b.synthetic(StmtKind::Break, SyntheticReason::Framework);
                        let st = self.b.stmt(StmtKind::Block(vec![set, brk]), org, true);
                        let id = st.line;
                        out.push(st);
                        id
                    }
                };
                self.site(chain, line, SiteNode::Plain(id));
            }
            StmtKind::Nondet { target, range } => {
                let mut target = target.clone();
                if let Some(m) = map.get(&target) {
                    target = m.clone();
                }
                let key = (chain.to_vec(), line);
                let last = match self.pins.get(&key).cloned() {
                    Some(values) if loop_depth == 0 => {
                        let st = self.b.stmt(StmtKind::Assign { target, value: Expr::Int(values[0]) }, org, true);
                        let id = st.line;
                        out.push(st);
                        id
                    }
                    Some(values) => {
                        let arr = self.fresh.fresh(&format!("pick_{}", self.pin_globals.len() / 2 + 1));
                        let idx = self.fresh.fresh(&format!("{arr}_index"));
                        let decl_arr = StmtKind::ArrayDecl { name: arr.clone(), size: values.len(), init: values };
                        let g1 = self.b.synthetic(decl_arr, SyntheticReason::InputPin);
                        let decl_idx = StmtKind::Decl(vec![Declarator { name: idx.clone(), init: Some(Expr::Int(0)) }]);
                        let g2 = self.b.synthetic(decl_idx, SyntheticReason::InputPin);
                        self.pin_globals.push(g1);
                        self.pin_globals.push(g2);
                        let read = Expr::Index(arr, Box::new(Expr::var(&idx)));
                        let st = self.b.stmt(StmtKind::Assign { target, value: read }, org, true);
                        out.push(st);
                        let inc = Expr::bin(BinOp::Add, Expr::var(&idx), Expr::Int(1));
                        let st = self.b.synthetic(StmtKind::Assign { target: idx, value: inc }, SyntheticReason::InputPin);
                        let id = st.line;
                        out.push(st);
                        id
                    }
                    None => {
                        let st = self.b.stmt(StmtKind::Nondet { target, range: *range }, org, false);
                        let id = st.line;
                        out.push(st);
                        id
                    }
                };
                self.site(chain, line, SiteNode::Plain(last));
            }
            StmtKind::Decl(_) => {
                let mut kind = s.kind.clone();
                rename_kind(&mut kind, map);
                let st = self.b.stmt(kind, org, false);
                let id = self.decl_or_hoist(st, out);
                self.site(chain, line, SiteNode::Plain(id));
            }
            _ => {
                let mut kind = s.kind.clone();
                rename_kind(&mut kind, map);
                let st = self.b.stmt(kind, org, false);
                self.site(chain, line, SiteNode::Plain(st.line));
                out.push(st);
            }
        }
        Ok(())
    }

    /// Emits a declaration, or — when hoisting — one assignment per declarator.
    /// Returns the line of the last emitted statement.
    fn decl_or_hoist(&mut self, st: Stmt, out: &mut Vec<Stmt>) -> LineId {
        let Some(hoisted) = &mut self.hoist else {
            let id = st.line;
            out.push(st);
            return id;
        };
        let StmtKind::Decl(ds) = st.kind else { unreachable!("declaration expected") };
        let prov = self.b.prov(st.line);
        let mut last = st.line;
        for (i, d) in ds.into_iter().enumerate() {
            hoisted.push(d.name.clone());
            let kind = StmtKind::Assign { target: d.name, value: d.init.unwrap_or(Expr::Int(0)) };
            // The first declarator keeps the statement's own line.
            let line = if i == 0 { st.line } else { self.b.alloc(prov.origin, true) };
            self.b.set_ineligible(line);
            out.push(Stmt::new(line, kind));
            last = line;
        }
        last
    }
}

/// A program with every call-assignment inlined, plus line provenance.
#[derive(Debug, Clone)]
pub struct Unwound {
    pub program: Program,
    pub line_map: LineMap,
}

/// Inlines every call-assignment as a block: parameters become fresh locals
/// initialized with the arguments, the callee's locals are freshly renamed,
/// and its `return e` becomes an assignment to the call target. Functions
/// that were only called are dropped.
pub fn unwind_calls(program: &Program) -> Unwound {
    let mut b = Builder::default();
    let mut used = std::collections::BTreeSet::new();
    for kw in crate::minic::lexer::KEYWORDS {
        used.insert(kw.to_string());
    }
    for g in &program.globals {
        collect_stmt_names(&g.kind, &mut |n| {
            used.insert(n.to_string());
        });
    }
    let entries: Vec<&Function> =
        program.functions.iter().filter(|f| f.name == "main" || f.ret == RetType::Void).collect();
    for f in &entries {
        used.insert(f.name.clone());
        used.extend(f.params.iter().cloned());
        used.extend(declared_locals(&f.body));
    }
    let mut fresh = FreshNames::new(used);
    let globals: Vec<Stmt> = program
        .globals
        .iter()
        .map(|g| {
            let mut g = g.clone();
            g.line = b.alloc(LineOrigin::Original(g.line), false);
            g
        })
        .collect();
    let mut functions = Vec::new();
    for f in entries {
        let mut tb = TreeBuilder::new(program, &mut b, &mut fresh, 0);
        let body = tb.entry(&f.body, &BTreeMap::new()).expect("keep mode accepts every statement");
        functions.push(Function { name: f.name.clone(), ret: f.ret, params: f.params.clone(), body });
    }
    let mut out = Program { globals, functions };
    let remap = out.renumber();
    let line_map = remap.iter().map(|(old, new)| (*new, b.prov(*old).origin)).collect();
    Unwound { program: out, line_map }
}
