//! Abstract syntax for the mini-C language.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Per-statement line identity, dense and assigned in source order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LineId(pub u32);

impl fmt::Display for LineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Var(String),
    /// Read of a global table entry.
    Index(String, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Cond(Box<Expr>, Box<Expr>, Box<Expr>),
    /// `nondet()` draws from the verifier domain, `nondet(lo, hi)` from an explicit one.
    Nondet(Option<(i64, i64)>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Visits every variable or table name read by the expression.
    pub fn for_each_name<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Int(_) | Expr::Bool(_) | Expr::Nondet(_) => {}
            Expr::Var(n) => f(n),
            Expr::Index(n, i) => {
                f(n);
                i.for_each_name(f);
            }
            Expr::Unary(_, e) => e.for_each_name(f),
            Expr::Binary(_, a, b) => {
                a.for_each_name(f);
                b.for_each_name(f);
            }
            Expr::Cond(c, a, b) => {
                c.for_each_name(f);
                a.for_each_name(f);
                b.for_each_name(f);
            }
        }
    }

    pub fn contains_nondet(&self) -> bool {
        match self {
            Expr::Nondet(_) => true,
            Expr::Int(_) | Expr::Bool(_) | Expr::Var(_) => false,
            Expr::Index(_, i) => i.contains_nondet(),
            Expr::Unary(_, e) => e.contains_nondet(),
            Expr::Binary(_, a, b) => a.contains_nondet() || b.contains_nondet(),
            Expr::Cond(c, a, b) => c.contains_nondet() || a.contains_nondet() || b.contains_nondet(),
        }
    }

    /// Renames variable reads according to `map`; names not in the map are kept.
    pub fn rename(&mut self, map: &BTreeMap<String, String>) {
        match self {
            Expr::Var(n) => {
                if let Some(m) = map.get(n) {
                    *n = m.clone();
                }
            }
            Expr::Index(n, i) => {
                if let Some(m) = map.get(n) {
                    *n = m.clone();
                }
                i.rename(map);
            }
            Expr::Unary(_, e) => e.rename(map),
            Expr::Binary(_, a, b) => {
                a.rename(map);
                b.rename(map);
            }
            Expr::Cond(c, a, b) => {
                c.rename(map);
                a.rename(map);
                b.rename(map);
            }
            Expr::Int(_) | Expr::Bool(_) | Expr::Nondet(_) => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Declarator {
    pub name: String,
    pub init: Option<Expr>,
}

/// One `case N:` label of a switch together with the statements that follow it.
/// Control falls through into the next arm unless a `break` is executed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SwitchArm {
    pub label: i64,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StmtKind {
    Decl(Vec<Declarator>),
    /// Global read-only integer table.
    ArrayDecl { name: String, size: usize, init: Vec<i64> },
    Assign { target: String, value: Expr },
    Nondet { target: String, range: Option<(i64, i64)> },
    Call { target: String, func: String, args: Vec<Expr> },
    If { cond: Expr, then_body: Vec<Stmt>, else_body: Option<Vec<Stmt>> },
    While { cond: Expr, body: Vec<Stmt> },
    For { var: String, init: Expr, cond: Expr, step: Expr, body: Vec<Stmt> },
    Switch { scrutinee: Expr, arms: Vec<SwitchArm>, default: Option<Vec<Stmt>> },
    /// Leaves the innermost enclosing switch.
    Break,
    Block(Vec<Stmt>),
    Assert(Expr),
    Assume(Expr),
    Return(Option<Expr>),
    ThreadDecl(Vec<String>),
    AttrDecl(Vec<String>),
    CondAttrDecl(Vec<String>),
    Create { handle: String, func: String },
    Join(String),
    Exit,
    MutexDecl(Vec<String>),
    Lock(String),
    Unlock(String),
    CondDecl(Vec<String>),
    CondInit(String),
    CondWait { cond: String, mutex: String },
    CondSignal(String),
}

impl StmtKind {
    /// True for every statement form that belongs to the thread library
    /// (handles, attributes, mutexes, condition variables).
    pub fn is_pthread(&self) -> bool {
        matches!(
            self,
            StmtKind::ThreadDecl(_)
                | StmtKind::AttrDecl(_)
                | StmtKind::CondAttrDecl(_)
                | StmtKind::Create { .. }
                | StmtKind::Join(_)
                | StmtKind::Exit
                | StmtKind::MutexDecl(_)
                | StmtKind::Lock(_)
                | StmtKind::Unlock(_)
                | StmtKind::CondDecl(_)
                | StmtKind::CondInit(_)
                | StmtKind::CondWait { .. }
                | StmtKind::CondSignal(_)
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            StmtKind::Decl(_) => "declaration",
            StmtKind::ArrayDecl { .. } => "array-declaration",
            StmtKind::Assign { .. } => "assignment",
            StmtKind::Nondet { .. } => "nondet-assignment",
            StmtKind::Call { .. } => "call-assignment",
            StmtKind::If { .. } => "if",
            StmtKind::While { .. } => "while",
            StmtKind::For { .. } => "for",
            StmtKind::Switch { .. } => "switch",
            StmtKind::Break => "break",
            StmtKind::Block(_) => "block",
            StmtKind::Assert(_) => "assert",
            StmtKind::Assume(_) => "assume",
            StmtKind::Return(_) => "return",
            StmtKind::ThreadDecl(_) => "thread-declare",
            StmtKind::AttrDecl(_) => "attr-declare",
            StmtKind::CondAttrDecl(_) => "condattr-declare",
            StmtKind::Create { .. } => "thread-create",
            StmtKind::Join(_) => "thread-join",
            StmtKind::Exit => "thread-exit",
            StmtKind::MutexDecl(_) => "mutex-declare",
            StmtKind::Lock(_) => "mutex-lock",
            StmtKind::Unlock(_) => "mutex-unlock",
            StmtKind::CondDecl(_) => "cond-declare",
            StmtKind::CondInit(_) => "cond-init",
            StmtKind::CondWait { .. } => "cond-wait",
            StmtKind::CondSignal(_) => "cond-signal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Stmt {
    pub line: LineId,
    pub kind: StmtKind,
}

impl Stmt {
    pub fn new(line: LineId, kind: StmtKind) -> Stmt {
        Stmt { line, kind }
    }

    /// Direct child statement lists, in source order.
    pub fn children(&self) -> Vec<&Vec<Stmt>> {
        match &self.kind {
            StmtKind::If { then_body, else_body, .. } => {
                let mut v = vec![then_body];
                if let Some(e) = else_body {
                    v.push(e);
                }
                v
            }
            StmtKind::While { body, .. } | StmtKind::For { body, .. } | StmtKind::Block(body) => {
                vec![body]
            }
            StmtKind::Switch { arms, default, .. } => {
                let mut v: Vec<&Vec<Stmt>> = arms.iter().map(|a| &a.body).collect();
                if let Some(d) = default {
                    v.push(d);
                }
                v
            }
            _ => Vec::new(),
        }
    }

    pub fn children_mut(&mut self) -> Vec<&mut Vec<Stmt>> {
        match &mut self.kind {
            StmtKind::If { then_body, else_body, .. } => {
                let mut v = vec![then_body];
                if let Some(e) = else_body {
                    v.push(e);
                }
                v
            }
            StmtKind::While { body, .. } | StmtKind::For { body, .. } | StmtKind::Block(body) => {
                vec![body]
            }
            StmtKind::Switch { arms, default, .. } => {
                let mut v: Vec<&mut Vec<Stmt>> = arms.iter_mut().map(|a| &mut a.body).collect();
                if let Some(d) = default {
                    v.push(d);
                }
                v
            }
            _ => Vec::new(),
        }
    }

    /// Pre-order walk over this statement and all nested statements.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Stmt)) {
        f(self);
        for c in self.children() {
            for s in c {
                s.walk(f);
            }
        }
    }

    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut Stmt)) {
        f(self);
        for c in self.children_mut() {
            for s in c.iter_mut() {
                s.walk_mut(f);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RetType {
    Int,
    Void,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Function {
    pub name: String,
    pub ret: RetType,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Program {
    pub globals: Vec<Stmt>,
    /// All functions in source order, `main` included.
    pub functions: Vec<Function>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn main(&self) -> &Function {
        self.function("main").expect("validated program has main")
    }

    pub fn main_mut(&mut self) -> &mut Function {
        self.functions
            .iter_mut()
            .find(|f| f.name == "main")
            .expect("validated program has main")
    }

    /// Functions referenced by thread-create statements, in order of first reference.
    pub fn threads(&self) -> Vec<&Function> {
        let mut names: Vec<&str> = Vec::new();
        self.walk(&mut |s| {
            if let StmtKind::Create { func, .. } = &s.kind {
                if !names.contains(&func.as_str()) {
                    names.push(func);
                }
            }
        });
        names.iter().filter_map(|n| self.function(n)).collect()
    }

    /// Pre-order walk over globals, then every function body in source order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Stmt)) {
        for g in &self.globals {
            g.walk(f);
        }
        for func in &self.functions {
            for s in &func.body {
                s.walk(f);
            }
        }
    }

    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut Stmt)) {
        for g in &mut self.globals {
            g.walk_mut(f);
        }
        for func in &mut self.functions {
            for s in &mut func.body {
                s.walk_mut(f);
            }
        }
    }

    pub fn statement_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }

    pub fn max_line(&self) -> u32 {
        let mut m = 0;
        self.walk(&mut |s| m = m.max(s.line.0));
        m
    }

    /// Reassigns LineIds densely (1..N) in source order. Returns old → new.
    pub fn renumber(&mut self) -> BTreeMap<LineId, LineId> {
        let mut next = 0u32;
        let mut map = BTreeMap::new();
        self.walk_mut(&mut |s| {
            next += 1;
            map.insert(s.line, LineId(next));
            s.line = LineId(next);
        });
        map
    }

    /// Every identifier appearing anywhere in the program, functions included.
    pub fn identifiers(&self) -> std::collections::BTreeSet<String> {
        let mut out = std::collections::BTreeSet::new();
        for f in &self.functions {
            out.insert(f.name.clone());
            out.extend(f.params.iter().cloned());
        }
        self.walk(&mut |s| {
            collect_stmt_names(&s.kind, &mut |n| {
                out.insert(n.to_string());
            })
        });
        out
    }
}

/// Visits every identifier mentioned directly by a statement (not its children).
pub fn collect_stmt_names(kind: &StmtKind, f: &mut impl FnMut(&str)) {
    match kind {
        StmtKind::Decl(ds) => {
            for d in ds {
                f(&d.name);
                if let Some(e) = &d.init {
                    e.for_each_name(f);
                }
            }
        }
        StmtKind::ArrayDecl { name, .. } => f(name),
        StmtKind::Assign { target, value } => {
            f(target);
            value.for_each_name(f);
        }
        StmtKind::Nondet { target, .. } => f(target),
        StmtKind::Call { target, func, args } => {
            f(target);
            f(func);
            for a in args {
                a.for_each_name(f);
            }
        }
        StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => cond.for_each_name(f),
        StmtKind::For { var, init, cond, step, .. } => {
            f(var);
            init.for_each_name(f);
            cond.for_each_name(f);
            step.for_each_name(f);
        }
        StmtKind::Switch { scrutinee, .. } => scrutinee.for_each_name(f),
        StmtKind::Assert(e) | StmtKind::Assume(e) => e.for_each_name(f),
        StmtKind::Return(Some(e)) => e.for_each_name(f),
        StmtKind::ThreadDecl(ns)
        | StmtKind::AttrDecl(ns)
        | StmtKind::CondAttrDecl(ns)
        | StmtKind::MutexDecl(ns)
        | StmtKind::CondDecl(ns) => ns.iter().for_each(|n| f(n)),
        StmtKind::Create { handle, func } => {
            f(handle);
            f(func);
        }
        StmtKind::Join(n)
        | StmtKind::Lock(n)
        | StmtKind::Unlock(n)
        | StmtKind::CondInit(n)
        | StmtKind::CondSignal(n) => f(n),
        StmtKind::CondWait { cond, mutex } => {
            f(cond);
            f(mutex);
        }
        StmtKind::Break | StmtKind::Block(_) | StmtKind::Return(None) | StmtKind::Exit => {}
    }
}

/// Generates identifiers that collide with nothing already in use.
#[derive(Debug, Clone, Default)]
pub struct FreshNames {
    used: std::collections::BTreeSet<String>,
}

impl FreshNames {
    pub fn new(used: std::collections::BTreeSet<String>) -> FreshNames {
        FreshNames { used }
    }

    pub fn for_program(p: &Program) -> FreshNames {
        let mut used = p.identifiers();
        for kw in crate::minic::lexer::KEYWORDS {
            used.insert(kw.to_string());
        }
        FreshNames { used }
    }

    /// Returns `base` if unused, otherwise `base_1`, `base_2`, ...
    pub fn fresh(&mut self, base: &str) -> String {
        let mut candidate = base.to_string();
        let mut k = 1;
        while self.used.contains(&candidate) {
            candidate = format!("{base}_{k}");
            k += 1;
        }
        self.used.insert(candidate.clone());
        candidate
    }

    pub fn reserve(&mut self, name: &str) {
        self.used.insert(name.to_string());
    }
}
