//! Lowers a program into flat per-thread instruction lists. Calls are inlined,
//! so every instruction has a static site (call chain + statement line).

use crate::minic::*;
use std::collections::BTreeMap;
use std::rc::Rc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Slot {
    G(u32),
    L(u32),
}

#[derive(Debug, Clone)]
pub(crate) enum CExpr {
    Int(i64),
    Var(Slot),
    Index(u32, Box<CExpr>),
    Unary(UnOp, Box<CExpr>),
    Binary(BinOp, Box<CExpr>, Box<CExpr>),
    Cond(Box<CExpr>, Box<CExpr>, Box<CExpr>),
    Nondet(Option<(i64, i64)>),
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Decl(Vec<(Slot, Option<CExpr>)>),
    DeclHandles(Vec<Slot>),
    Assign(Slot, CExpr),
    Nondet(Slot, Option<(i64, i64)>),
    /// Parameter binding of an inlined call.
    Bind(Vec<(Slot, CExpr)>),
    Branch { cond: CExpr, else_pc: usize },
    While { cond: CExpr, exit_pc: usize, loop_idx: usize },
    ForInit(Slot, CExpr),
    ForCond { cond: CExpr, exit_pc: usize },
    ForStep { slot: Slot, value: CExpr, head: usize },
    Switch { scrutinee: CExpr, table: Vec<(i64, usize)>, default_pc: usize },
    Break(usize),
    Assert(CExpr),
    Assume(CExpr),
    /// `return` of a thread function or of `main`.
    Finish,
    Create { handle: Slot, code: usize },
    Join(Slot),
    Exit,
    Lock(u32),
    Unlock(u32),
    CondInit,
    CondWait { cond: u32, mutex: u32 },
    Reacquire(u32),
    CondSignal(u32),
    NoOp,
    // pseudo instructions: not steps
    Jump(usize),
    LoopEnter(usize),
    LoopBack { loop_idx: usize, head: usize },
    End,
}

#[derive(Debug, Clone)]
pub(crate) struct Instr {
    pub op: Op,
    pub chain: Rc<[LineId]>,
    pub line: LineId,
    /// Enclosing while loops, outer to inner, as indices into `Code::loops`.
    pub loops: Rc<[usize]>,
}

#[derive(Debug, Clone)]
pub(crate) struct LoopSite {
    pub chain: Rc<[LineId]>,
    pub line: LineId,
}

#[derive(Debug, Clone)]
pub(crate) struct Code {
    pub name: String,
    pub instrs: Vec<Instr>,
    /// Initial local values (handles start invalid).
    pub local_init: Vec<i64>,
    /// Integer locals of the entry function, reported in valuations.
    pub visible_locals: Vec<(String, u32)>,
    pub loops: Vec<LoopSite>,
}

#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    pub globals_init: Vec<i64>,
    pub visible_globals: Vec<(String, u32)>,
    pub tables: Vec<Vec<i64>>,
    pub n_mutex: usize,
    pub codes: Vec<Code>,
    pub main: usize,
    pub multi_threaded: bool,
}

#[derive(Debug, Clone, Copy)]
enum GKind {
    Int(u32),
    Handle(u32),
    Array(u32),
    Mutex(u32),
    Cond(u32),
    Other,
}

#[derive(Debug, Clone, Copy)]
enum LKind {
    Int(u32),
    Handle(u32),
}

pub(crate) fn compile(p: &Program) -> Compiled {
    let mut globals: BTreeMap<String, GKind> = BTreeMap::new();
    let mut init = Vec::new();
    let mut visible = Vec::new();
    let mut tables = Vec::new();
    let (mut n_mutex, mut n_cond) = (0u32, 0u32);
    for g in &p.globals {
        match &g.kind {
            StmtKind::Decl(ds) => {
                for d in ds {
                    let slot = init.len() as u32;
                    let v = match &d.init {
                        Some(e) => const_eval(e, &globals, &init, &tables),
                        None => 0,
                    };
                    init.push(v);
                    visible.push((d.name.clone(), slot));
                    globals.insert(d.name.clone(), GKind::Int(slot));
                }
            }
            StmtKind::ArrayDecl { name, init: vals, .. } => {
                globals.insert(name.clone(), GKind::Array(tables.len() as u32));
                tables.push(vals.clone());
            }
            StmtKind::ThreadDecl(ns) => {
                for n in ns {
                    globals.insert(n.clone(), GKind::Handle(init.len() as u32));
                    init.push(-1);
                }
            }
            StmtKind::MutexDecl(ns) => {
                for n in ns {
                    globals.insert(n.clone(), GKind::Mutex(n_mutex));
                    n_mutex += 1;
                }
            }
            StmtKind::CondDecl(ns) => {
                for n in ns {
                    globals.insert(n.clone(), GKind::Cond(n_cond));
                    n_cond += 1;
                }
            }
            StmtKind::AttrDecl(ns) | StmtKind::CondAttrDecl(ns) => {
                for n in ns {
                    globals.insert(n.clone(), GKind::Other);
                }
            }
            _ => {}
        }
    }
    // Entry points: main plus every parameterless void function.
    let entries: Vec<&Function> = p
        .functions
        .iter()
        .filter(|f| f.name == "main" || (f.ret == RetType::Void && f.params.is_empty()))
        .collect();
    let code_index: BTreeMap<String, usize> = entries.iter().enumerate().map(|(i, f)| (f.name.clone(), i)).collect();
    let mut multi_threaded = false;
    p.walk(&mut |s| {
        if matches!(s.kind, StmtKind::Create { .. }) {
            multi_threaded = true;
        }
    });
    let codes = entries
        .iter()
        .map(|f| {
            let mut c = FnCompiler {
                program: p,
                globals: &globals,
                code_index: &code_index,
                instrs: Vec::new(),
                n_locals: 0,
                local_init: Vec::new(),
                visible: Vec::new(),
                loops: Vec::new(),
                break_patches: Vec::new(),
            };
            let mut scope = vec![BTreeMap::new()];
            let chain: Rc<[LineId]> = Rc::from(Vec::new());
            let loops: Rc<[usize]> = Rc::from(Vec::new());
            c.block(&f.body, &mut scope, &chain, &loops, true);
            c.push(Op::End, &chain, LineId(0), &loops);
            Code {
                name: f.name.clone(),
                instrs: c.instrs,
                local_init: c.local_init,
                visible_locals: c.visible,
                loops: c.loops,
            }
        })
        .collect();
    Compiled {
        globals_init: init,
        visible_globals: visible,
        tables,
        n_mutex: n_mutex as usize,
        codes,
        main: code_index["main"],
        multi_threaded,
    }
}

fn const_eval(e: &Expr, globals: &BTreeMap<String, GKind>, init: &[i64], tables: &[Vec<i64>]) -> i64 {
    let c = resolve_global_only(e, globals);
    super::machine::eval_const(&c, init, tables).unwrap_or(0)
}

fn resolve_global_only(e: &Expr, globals: &BTreeMap<String, GKind>) -> CExpr {
    resolve(e, &[], globals)
}

fn resolve(e: &Expr, scope: &[BTreeMap<String, LKind>], globals: &BTreeMap<String, GKind>) -> CExpr {
    let r = |e: &Expr| Box::new(resolve(e, scope, globals));
    match e {
        Expr::Int(v) => CExpr::Int(*v),
        Expr::Bool(b) => CExpr::Int(*b as i64),
        Expr::Var(n) => CExpr::Var(lookup(n, scope, globals)),
        Expr::Index(n, i) => match globals.get(n) {
            Some(GKind::Array(t)) => CExpr::Index(*t, r(i)),
            _ => panic!("`{n}` is not an array (program not validated?)"),
        },
        Expr::Unary(op, a) => CExpr::Unary(*op, r(a)),
        Expr::Binary(op, a, b) => CExpr::Binary(*op, r(a), r(b)),
        Expr::Cond(c, a, b) => CExpr::Cond(r(c), r(a), r(b)),
        Expr::Nondet(range) => CExpr::Nondet(*range),
    }
}

fn lookup(n: &str, scope: &[BTreeMap<String, LKind>], globals: &BTreeMap<String, GKind>) -> Slot {
    for s in scope.iter().rev() {
        match s.get(n) {
            Some(LKind::Int(i)) | Some(LKind::Handle(i)) => return Slot::L(*i),
            None => {}
        }
    }
    match globals.get(n) {
        Some(GKind::Int(i)) | Some(GKind::Handle(i)) => Slot::G(*i),
        _ => panic!("unresolved variable `{n}` (program not validated?)"),
    }
}

struct FnCompiler<'a> {
    program: &'a Program,
    globals: &'a BTreeMap<String, GKind>,
    code_index: &'a BTreeMap<String, usize>,
    instrs: Vec<Instr>,
    n_locals: usize,
    local_init: Vec<i64>,
    visible: Vec<(String, u32)>,
    loops: Vec<LoopSite>,
    break_patches: Vec<Vec<usize>>,
}

type Scope = Vec<BTreeMap<String, LKind>>;

impl<'a> FnCompiler<'a> {
    fn push(&mut self, op: Op, chain: &Rc<[LineId]>, line: LineId, loops: &Rc<[usize]>) -> usize {
        self.instrs.push(Instr { op, chain: chain.clone(), line, loops: loops.clone() });
        self.instrs.len() - 1
    }

    fn pc(&self) -> usize {
        self.instrs.len()
    }

    fn new_local(&mut self, scope: &mut Scope, name: &str, handle: bool, top: bool) -> Slot {
        let i = self.n_locals as u32;
        self.n_locals += 1;
        self.local_init.push(if handle { -1 } else { 0 });
        let kind = if handle { LKind::Handle(i) } else { LKind::Int(i) };
        scope.last_mut().expect("scope").insert(name.to_string(), kind);
        if top && !handle {
            self.visible.push((name.to_string(), i));
        }
        Slot::L(i)
    }

    fn mutex(&self, n: &str) -> u32 {
        match self.globals.get(n) {
            Some(GKind::Mutex(i)) => *i,
            _ => panic!("`{n}` is not a mutex"),
        }
    }

    fn cond(&self, n: &str) -> u32 {
        match self.globals.get(n) {
            Some(GKind::Cond(i)) => *i,
            _ => panic!("`{n}` is not a condition variable"),
        }
    }

    /// `top` marks the entry function's own scope (not an inlined callee).
    fn block(&mut self, body: &[Stmt], scope: &mut Scope, chain: &Rc<[LineId]>, loops: &Rc<[usize]>, top: bool) {
        for s in body {
            self.stmt(s, scope, chain, loops, top);
        }
    }

    fn nested(&mut self, body: &[Stmt], scope: &mut Scope, chain: &Rc<[LineId]>, loops: &Rc<[usize]>, top: bool) {
        scope.push(BTreeMap::new());
        self.block(body, scope, chain, loops, top);
        scope.pop();
    }

    fn stmt(&mut self, s: &Stmt, scope: &mut Scope, chain: &Rc<[LineId]>, loops: &Rc<[usize]>, top: bool) {
        let line = s.line;
        let g = self.globals;
        match &s.kind {
            StmtKind::Decl(ds) => {
                let mut out = Vec::new();
                for d in ds {
                    let init = d.init.as_ref().map(|e| resolve(e, scope, g));
                    let slot = self.new_local(scope, &d.name, false, top);
                    out.push((slot, init));
                }
                self.push(Op::Decl(out), chain, line, loops);
            }
            StmtKind::ThreadDecl(ns) => {
                let slots = ns.iter().map(|n| self.new_local(scope, n, true, top)).collect();
                self.push(Op::DeclHandles(slots), chain, line, loops);
            }
            StmtKind::Assign { target, value } => {
                let op = Op::Assign(lookup(target, scope, g), resolve(value, scope, g));
                self.push(op, chain, line, loops);
            }
            StmtKind::Nondet { target, range } => {
                self.push(Op::Nondet(lookup(target, scope, g), *range), chain, line, loops);
            }
            StmtKind::Call { target, func, args } => {
                let callee = self.program.function(func).expect("validated callee");
                let target = lookup(target, scope, g);
                let args: Vec<CExpr> = args.iter().map(|a| resolve(a, scope, g)).collect();
                let mut inner: Scope = vec![BTreeMap::new()];
                let mut binds = Vec::new();
                for (p, a) in callee.params.iter().zip(args) {
                    binds.push((self.new_local(&mut inner, p, false, false), a));
                }
                self.push(Op::Bind(binds), chain, line, loops);
                let mut v: Vec<LineId> = chain.to_vec();
                v.push(line);
                let inner_chain: Rc<[LineId]> = Rc::from(v);
                let (last, rest) = callee.body.split_last().expect("int function ends with return");
                self.block(rest, &mut inner, &inner_chain, loops, false);
                match &last.kind {
                    StmtKind::Return(Some(e)) => {
                        let value = resolve(e, &inner, g);
                        self.push(Op::Assign(target, value), &inner_chain, last.line, loops);
                    }
                    _ => unreachable!("validated: int function ends with return"),
                }
            }
            StmtKind::If { cond, then_body, else_body } => {
                let at = self.push(Op::Branch { cond: resolve(cond, scope, g), else_pc: 0 }, chain, line, loops);
                self.nested(then_body, scope, chain, loops, top);
                let else_pc = match else_body {
                    Some(e) => {
                        let j = self.push(Op::Jump(0), chain, line, loops);
                        let else_pc = self.pc();
                        self.nested(e, scope, chain, loops, top);
                        let end = self.pc();
                        self.instrs[j].op = Op::Jump(end);
                        else_pc
                    }
                    None => self.pc(),
                };
                if let Op::Branch { else_pc: t, .. } = &mut self.instrs[at].op {
                    *t = else_pc;
                }
            }
            StmtKind::While { cond, body } => {
                let loop_idx = self.loops.len();
                self.loops.push(LoopSite { chain: chain.clone(), line });
                self.push(Op::LoopEnter(loop_idx), chain, line, loops);
                let head = self.push(Op::While { cond: resolve(cond, scope, g), exit_pc: 0, loop_idx }, chain, line, loops);
                let mut inner: Vec<usize> = loops.to_vec();
                inner.push(loop_idx);
                let inner: Rc<[usize]> = Rc::from(inner);
                // the condition step reports its own loop
                self.instrs[head].loops = inner.clone();
                self.nested(body, scope, chain, &inner, top);
                self.push(Op::LoopBack { loop_idx, head }, chain, line, &inner);
                let exit = self.pc();
                if let Op::While { exit_pc, .. } = &mut self.instrs[head].op {
                    *exit_pc = exit;
                }
            }
            StmtKind::For { var, init, cond, step, body } => {
                let slot = lookup(var, scope, g);
                self.push(Op::ForInit(slot, resolve(init, scope, g)), chain, line, loops);
                let head = self.push(Op::ForCond { cond: resolve(cond, scope, g), exit_pc: 0 }, chain, line, loops);
                self.nested(body, scope, chain, loops, top);
                self.push(Op::ForStep { slot, value: resolve(step, scope, g), head }, chain, line, loops);
                let exit = self.pc();
                if let Op::ForCond { exit_pc, .. } = &mut self.instrs[head].op {
                    *exit_pc = exit;
                }
            }
            StmtKind::Switch { scrutinee, arms, default } => {
                let at = self.push(
                    Op::Switch { scrutinee: resolve(scrutinee, scope, g), table: Vec::new(), default_pc: 0 },
                    chain,
                    line,
                    loops,
                );
                self.break_patches.push(Vec::new());
                scope.push(BTreeMap::new());
                let mut table = Vec::new();
                for a in arms {
                    table.push((a.label, self.pc()));
                    self.block(&a.body, scope, chain, loops, top);
                }
                let default_start = self.pc();
                if let Some(d) = default {
                    self.block(d, scope, chain, loops, top);
                }
                scope.pop();
                let end = self.pc();
                let default_pc = if default.is_some() { default_start } else { end };
                if let Op::Switch { table: t, default_pc: d, .. } = &mut self.instrs[at].op {
                    *t = table;
                    *d = default_pc;
                }
                for b in self.break_patches.pop().expect("switch frame") {
                    self.instrs[b].op = Op::Break(end);
                }
            }
            StmtKind::Break => {
                let at = self.push(Op::Break(0), chain, line, loops);
                self.break_patches.last_mut().expect("validated: break inside switch").push(at);
            }
            StmtKind::Block(body) => self.nested(body, scope, chain, loops, top),
            StmtKind::Assert(e) => {
                self.push(Op::Assert(resolve(e, scope, g)), chain, line, loops);
            }
            StmtKind::Assume(e) => {
                self.push(Op::Assume(resolve(e, scope, g)), chain, line, loops);
            }
            StmtKind::Return(_) => {
                // Only entry functions reach here; callee returns are inlined above.
                self.push(Op::Finish, chain, line, loops);
            }
            StmtKind::Create { handle, func } => {
                let op = Op::Create { handle: lookup(handle, scope, g), code: self.code_index[func.as_str()] };
                self.push(op, chain, line, loops);
            }
            StmtKind::Join(h) => {
                self.push(Op::Join(lookup(h, scope, g)), chain, line, loops);
            }
            StmtKind::Exit => {
                self.push(Op::Exit, chain, line, loops);
            }
            StmtKind::Lock(m) => {
                let m = self.mutex(m);
                self.push(Op::Lock(m), chain, line, loops);
            }
            StmtKind::Unlock(m) => {
                let m = self.mutex(m);
                self.push(Op::Unlock(m), chain, line, loops);
            }
            StmtKind::CondInit(c) => {
                self.cond(c);
                self.push(Op::CondInit, chain, line, loops);
            }
            StmtKind::CondWait { cond, mutex } => {
                let (c, m) = (self.cond(cond), self.mutex(mutex));
                self.push(Op::CondWait { cond: c, mutex: m }, chain, line, loops);
                self.push(Op::Reacquire(m), chain, line, loops);
            }
            StmtKind::CondSignal(c) => {
                let c = self.cond(c);
                self.push(Op::CondSignal(c), chain, line, loops);
            }
            StmtKind::ArrayDecl { .. }
            | StmtKind::AttrDecl(_)
            | StmtKind::CondAttrDecl(_)
            | StmtKind::MutexDecl(_)
            | StmtKind::CondDecl(_) => {
                self.push(Op::NoOp, chain, line, loops);
            }
        }
    }
}
