//! Scope, typing and structural rules applied after parsing.

use super::ast::*;
use super::parser::Spans;
use super::ParseError;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Int,
    Array,
    Thread,
    Attr,
    CondAttr,
    Mutex,
    Cond,
}

impl Kind {
    fn describe(self) -> &'static str {
        match self {
            Kind::Int => "an int variable",
            Kind::Array => "an array",
            Kind::Thread => "a thread handle",
            Kind::Attr => "a thread attribute",
            Kind::CondAttr => "a condition attribute",
            Kind::Mutex => "a mutex",
            Kind::Cond => "a condition variable",
        }
    }
}

/// Validates a program whose statements carry no source positions
/// (for example one produced by a transformation).
pub fn validate(program: &Program) -> Result<(), ParseError> {
    check(program, &Spans::new())
}

pub(crate) fn check(program: &Program, spans: &Spans) -> Result<(), ParseError> {
    Checker { program, spans, globals: BTreeMap::new(), scopes: Vec::new(), locals_seen: BTreeSet::new() }.run()
}

struct Checker<'a> {
    program: &'a Program,
    spans: &'a Spans,
    globals: BTreeMap<String, Kind>,
    scopes: Vec<BTreeMap<String, Kind>>,
    locals_seen: BTreeSet<String>,
}

type CResult = Result<(), ParseError>;

impl<'a> Checker<'a> {
    fn pos(&self, line: LineId) -> (usize, usize) {
        self.spans.get(&line).copied().unwrap_or((0, 0))
    }

    fn semantic(&self, line: LineId, msg: impl Into<String>) -> ParseError {
        let (line, col) = self.pos(line);
        ParseError::Semantic { line, col, msg: msg.into() }
    }

    fn lookup(&self, name: &str) -> Option<Kind> {
        for s in self.scopes.iter().rev() {
            if let Some(k) = s.get(name) {
                return Some(*k);
            }
        }
        self.globals.get(name).copied()
    }

    fn expect_kind(&self, line: LineId, name: &str, want: Kind) -> CResult {
        match self.lookup(name) {
            None => {
                let (line, col) = self.pos(line);
                Err(ParseError::Undeclared { line, col, name: name.to_string() })
            }
            Some(k) if k == want => Ok(()),
            Some(k) => Err(self.semantic(line, format!("`{name}` is {}, expected {}", k.describe(), want.describe()))),
        }
    }

    fn expr(&self, line: LineId, e: &Expr) -> CResult {
        match e {
            Expr::Int(_) | Expr::Bool(_) => Ok(()),
            Expr::Nondet(Some((lo, hi))) if lo > hi => Err(self.semantic(line, format!("empty nondet range {lo}..{hi}"))),
            Expr::Nondet(_) => Ok(()),
            Expr::Var(n) => self.expect_kind(line, n, Kind::Int),
            Expr::Index(n, i) => {
                self.expect_kind(line, n, Kind::Array)?;
                self.expr(line, i)
            }
            Expr::Unary(_, a) => self.expr(line, a),
            Expr::Binary(_, a, b) => {
                self.expr(line, a)?;
                self.expr(line, b)
            }
            Expr::Cond(c, a, b) => {
                self.expr(line, c)?;
                self.expr(line, a)?;
                self.expr(line, b)
            }
        }
    }

    fn declare(&mut self, line: LineId, name: &str, kind: Kind) -> CResult {
        let global_scope = self.scopes.is_empty();
        let clash = self.lookup(name).is_some()
            || self.program.function(name).is_some()
            || (!global_scope && self.locals_seen.contains(name));
        if clash {
            let (line, col) = self.pos(line);
            return Err(ParseError::Shadowing { line, col, name: name.to_string() });
        }
        if global_scope {
            self.globals.insert(name.to_string(), kind);
        } else {
            self.locals_seen.insert(name.to_string());
            self.scopes.last_mut().expect("scope").insert(name.to_string(), kind);
        }
        Ok(())
    }

    fn run(mut self) -> CResult {
        let mut names = BTreeSet::new();
        for f in &self.program.functions {
            if !names.insert(f.name.as_str()) {
                let line = f.body.first().map(|s| s.line).unwrap_or(LineId(0));
                return Err(self.semantic(line, format!("function `{}` defined twice", f.name)));
            }
        }
        let Some(main) = self.program.function("main") else {
            return Err(ParseError::Semantic { line: 0, col: 0, msg: "program has no `main` function".into() });
        };
        if main.ret != RetType::Int || !main.params.is_empty() {
            return Err(ParseError::Semantic { line: 0, col: 0, msg: "`main` must be `int main()`".into() });
        }
        for g in &self.program.globals {
            self.global(g)?;
        }
        self.call_graph_acyclic()?;
        for f in &self.program.functions {
            self.function(f)?;
        }
        Ok(())
    }

    fn global(&mut self, g: &Stmt) -> CResult {
        match &g.kind {
            StmtKind::Decl(ds) => {
                for d in ds {
                    if let Some(e) = &d.init {
                        if e.contains_nondet() {
                            return Err(self.semantic(g.line, "global initializers must be deterministic"));
                        }
                        self.expr(g.line, e)?;
                    }
                    self.declare(g.line, &d.name, Kind::Int)?;
                }
                Ok(())
            }
            StmtKind::ArrayDecl { name, .. } => self.declare(g.line, name, Kind::Array),
            StmtKind::ThreadDecl(ns) => self.declare_all(g.line, ns, Kind::Thread),
            StmtKind::AttrDecl(ns) => self.declare_all(g.line, ns, Kind::Attr),
            StmtKind::CondAttrDecl(ns) => self.declare_all(g.line, ns, Kind::CondAttr),
            StmtKind::MutexDecl(ns) => self.declare_all(g.line, ns, Kind::Mutex),
            StmtKind::CondDecl(ns) => self.declare_all(g.line, ns, Kind::Cond),
            other => Err(self.semantic(g.line, format!("{} is not allowed at global scope", other.name()))),
        }
    }

    fn declare_all(&mut self, line: LineId, names: &[String], kind: Kind) -> CResult {
        for n in names {
            self.declare(line, n, kind)?;
        }
        Ok(())
    }

    fn call_graph_acyclic(&self) -> CResult {
        let mut edges: BTreeMap<&str, Vec<(&str, LineId)>> = BTreeMap::new();
        for f in &self.program.functions {
            let e = edges.entry(f.name.as_str()).or_default();
            for s in &f.body {
                s.walk(&mut |s| {
                    if let StmtKind::Call { func, .. } = &s.kind {
                        e.push((func.as_str(), s.line));
                    }
                });
            }
        }
        // 0 = unvisited, 1 = on stack, 2 = done
        fn dfs<'b>(
            n: &'b str,
            edges: &BTreeMap<&'b str, Vec<(&'b str, LineId)>>,
            state: &mut BTreeMap<&'b str, u8>,
        ) -> Option<(&'b str, LineId)> {
            state.insert(n, 1);
            for &(m, line) in edges.get(n).map(|v| v.as_slice()).unwrap_or(&[]) {
                match state.get(m).copied().unwrap_or(0) {
                    1 => return Some((m, line)),
                    0 => {
                        if let Some(hit) = dfs(m, edges, state) {
                            return Some(hit);
                        }
                    }
                    _ => {}
                }
            }
            state.insert(n, 2);
            None
        }
        let mut state = BTreeMap::new();
        for f in &self.program.functions {
            if state.get(f.name.as_str()).copied().unwrap_or(0) == 0 {
                if let Some((m, line)) = dfs(&f.name, &edges, &mut state) {
                    return Err(self.semantic(line, format!("recursive call to `{m}` is not supported")));
                }
            }
        }
        Ok(())
    }

    fn function(&mut self, f: &Function) -> CResult {
        self.locals_seen.clear();
        self.scopes = vec![BTreeMap::new()];
        let first = f.body.first().map(|s| s.line).unwrap_or(LineId(0));
        for p in &f.params {
            self.declare(first, p, Kind::Int)?;
        }
        if f.ret == RetType::Int && f.name != "main" {
            match f.body.last() {
                Some(Stmt { kind: StmtKind::Return(Some(_)), .. }) => {}
                _ => return Err(self.semantic(first, format!("function `{}` must end with `return <expr>;`", f.name))),
            }
            let mut returns = 0;
            for s in &f.body {
                s.walk(&mut |s| {
                    if matches!(s.kind, StmtKind::Return(_)) {
                        returns += 1;
                    }
                });
            }
            if returns != 1 {
                return Err(self.semantic(first, format!("function `{}` must have exactly one return, as its last statement", f.name)));
            }
        }
        let ctx = Ctx { func: f, switch_depth: 0 };
        self.stmts(&f.body, ctx)?;
        self.scopes.clear();
        Ok(())
    }

    fn stmts(&mut self, body: &[Stmt], ctx: Ctx<'_>) -> CResult {
        for s in body {
            self.stmt(s, ctx)?;
        }
        Ok(())
    }

    fn scoped(&mut self, body: &[Stmt], ctx: Ctx<'_>) -> CResult {
        self.scopes.push(BTreeMap::new());
        let r = self.stmts(body, ctx);
        self.scopes.pop();
        r
    }

    fn stmt(&mut self, s: &Stmt, ctx: Ctx<'_>) -> CResult {
        let line = s.line;
        match &s.kind {
            StmtKind::Decl(ds) => {
                for d in ds {
                    if let Some(e) = &d.init {
                        self.expr(line, e)?;
                    }
                    self.declare(line, &d.name, Kind::Int)?;
                }
            }
            StmtKind::ThreadDecl(ns) => self.declare_all(line, ns, Kind::Thread)?,
            StmtKind::ArrayDecl { .. }
            | StmtKind::AttrDecl(_)
            | StmtKind::CondAttrDecl(_)
            | StmtKind::MutexDecl(_)
            | StmtKind::CondDecl(_) => {
                return Err(self.semantic(line, format!("{} must be global", s.kind.name())));
            }
            StmtKind::Assign { target, value } => {
                self.expect_kind(line, target, Kind::Int)?;
                self.expr(line, value)?;
            }
            StmtKind::Nondet { target, range } => {
                self.expect_kind(line, target, Kind::Int)?;
                self.expr(line, &Expr::Nondet(*range))?;
            }
            StmtKind::Call { target, func, args } => {
                self.expect_kind(line, target, Kind::Int)?;
                let Some(callee) = self.program.function(func) else {
                    let (l, c) = self.pos(line);
                    return Err(ParseError::Undeclared { line: l, col: c, name: func.clone() });
                };
                if callee.name == "main" || callee.ret != RetType::Int {
                    return Err(self.semantic(line, format!("`{func}` cannot be called for a value")));
                }
                if callee.params.len() != args.len() {
                    return Err(self.semantic(
                        line,
                        format!("`{func}` takes {} argument(s), {} given", callee.params.len(), args.len()),
                    ));
                }
                for a in args {
                    self.expr(line, a)?;
                }
            }
            StmtKind::If { cond, then_body, else_body } => {
                self.expr(line, cond)?;
                self.scoped(then_body, ctx)?;
                if let Some(e) = else_body {
                    self.scoped(e, ctx)?;
                }
            }
            StmtKind::While { cond, body } => {
                self.expr(line, cond)?;
                self.scoped(body, ctx)?;
            }
            StmtKind::For { var, init, cond, step, body } => {
                self.expect_kind(line, var, Kind::Int)?;
                self.expr(line, init)?;
                self.expr(line, cond)?;
                self.expr(line, step)?;
                self.scoped(body, ctx)?;
            }
            StmtKind::Switch { scrutinee, arms, default } => {
                self.expr(line, scrutinee)?;
                let mut labels = BTreeSet::new();
                for a in arms {
                    if !labels.insert(a.label) {
                        return Err(self.semantic(line, format!("duplicate case label {}", a.label)));
                    }
                }
                // Arms share one scope, as in C.
                self.scopes.push(BTreeMap::new());
                let inner = Ctx { switch_depth: ctx.switch_depth + 1, ..ctx };
                let mut r = Ok(());
                for body in s.children() {
                    r = r.and_then(|_| self.stmts(body, inner));
                }
                self.scopes.pop();
                let _ = default;
                r?;
            }
            StmtKind::Break => {
                if ctx.switch_depth == 0 {
                    return Err(self.semantic(line, "`break` outside of a switch"));
                }
            }
            StmtKind::Block(body) => self.scoped(body, ctx)?,
            StmtKind::Assert(e) | StmtKind::Assume(e) => self.expr(line, e)?,
            StmtKind::Return(e) => match (ctx.func.ret, e) {
                (RetType::Int, Some(e)) => self.expr(line, e)?,
                (RetType::Int, None) => return Err(self.semantic(line, "`return` needs a value here")),
                (RetType::Void, None) => {}
                (RetType::Void, Some(_)) => return Err(self.semantic(line, "void function cannot return a value")),
            },
            StmtKind::Create { handle, func } => {
                self.expect_kind(line, handle, Kind::Thread)?;
                match self.program.function(func) {
                    Some(f) if f.ret == RetType::Void && f.params.is_empty() && f.name != "main" => {}
                    Some(_) => {
                        return Err(self.semantic(line, format!("thread function `{func}` must be `void {func}()`")));
                    }
                    None => {
                        let (l, c) = self.pos(line);
                        return Err(ParseError::UnknownThread { line: l, col: c, name: func.clone() });
                    }
                }
            }
            StmtKind::Join(h) => self.expect_kind(line, h, Kind::Thread)?,
            StmtKind::Exit => {}
            StmtKind::Lock(m) | StmtKind::Unlock(m) => self.expect_kind(line, m, Kind::Mutex)?,
            StmtKind::CondInit(c) | StmtKind::CondSignal(c) => self.expect_kind(line, c, Kind::Cond)?,
            StmtKind::CondWait { cond, mutex } => {
                self.expect_kind(line, cond, Kind::Cond)?;
                self.expect_kind(line, mutex, Kind::Mutex)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct Ctx<'f> {
    func: &'f Function,
    switch_depth: u32,
}
