//! Canonical pretty printer. Output reparses to a structurally equal program
//! with the same LineIds.

use super::ast::*;
use std::fmt::Write;

pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    expr(&mut s, e, 0);
    s
}

fn expr(out: &mut String, e: &Expr, parent: u8) {
    match e {
        Expr::Int(v) => {
            let _ = write!(out, "{v}");
        }
        Expr::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Expr::Var(n) => out.push_str(n),
        Expr::Index(n, i) => {
            out.push_str(n);
            out.push('[');
            expr(out, i, 0);
            out.push(']');
        }
        Expr::Unary(op, a) => {
            out.push(match op {
                UnOp::Neg => '-',
                UnOp::Not => '!',
            });
            match **a {
                // keep `-(3)` distinct from the literal `-3`
                Expr::Int(_) | Expr::Binary(..) => {
                    out.push('(');
                    expr(out, a, 0);
                    out.push(')');
                }
                _ => expr(out, a, 7),
            }
        }
        Expr::Binary(op, a, b) => {
            let p = op.precedence();
            let wrap = p < parent;
            if wrap {
                out.push('(');
            }
            expr(out, a, p);
            let _ = write!(out, " {} ", op.symbol());
            expr(out, b, p + 1);
            if wrap {
                out.push(')');
            }
        }
        Expr::Cond(c, a, b) => {
            out.push('(');
            expr(out, c, 1);
            out.push_str(" ? ");
            expr(out, a, 0);
            out.push_str(" : ");
            expr(out, b, 0);
            out.push(')');
        }
        Expr::Nondet(None) => out.push_str("nondet()"),
        Expr::Nondet(Some((lo, hi))) => {
            let _ = write!(out, "nondet({lo}, {hi})");
        }
    }
}

struct Printer {
    out: String,
    numbered: bool,
}

impl Printer {
    fn line(&mut self, id: Option<LineId>, depth: usize, text: &str) {
        if self.numbered {
            match id {
                Some(l) => {
                    let _ = write!(self.out, "{:>4}| ", l.0);
                }
                None => self.out.push_str("    | "),
            }
        }
        for _ in 0..depth {
            self.out.push_str("  ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn block(&mut self, body: &[Stmt], depth: usize) {
        for s in body {
            self.stmt(s, depth);
        }
    }

    fn stmt(&mut self, s: &Stmt, depth: usize) {
        let id = Some(s.line);
        let simple = |k: &StmtKind| -> Option<String> {
            Some(match k {
                StmtKind::Decl(ds) => {
                    let parts: Vec<String> = ds
                        .iter()
                        .map(|d| match &d.init {
                            Some(e) => format!("{} = {}", d.name, print_expr(e)),
                            None => d.name.clone(),
                        })
                        .collect();
                    format!("int {};", parts.join(", "))
                }
                StmtKind::ArrayDecl { name, size, init } => {
                    let vals: Vec<String> = init.iter().map(|v| v.to_string()).collect();
                    format!("int {name}[{size}] = {{{}}};", vals.join(", "))
                }
                StmtKind::Assign { target, value } => format!("{target} = {};", print_expr(value)),
                StmtKind::Nondet { target, range } => {
                    format!("{target} = {};", print_expr(&Expr::Nondet(*range)))
                }
                StmtKind::Call { target, func, args } => {
                    let a: Vec<String> = args.iter().map(print_expr).collect();
                    format!("{target} = {func}({});", a.join(", "))
                }
                StmtKind::Break => "break;".into(),
                StmtKind::Assert(e) => format!("assert({});", print_expr(e)),
                StmtKind::Assume(e) => format!("assume({});", print_expr(e)),
                StmtKind::Return(None) => "return;".into(),
                StmtKind::Return(Some(e)) => format!("return {};", print_expr(e)),
                StmtKind::ThreadDecl(ns) => format!("pthread_t {};", ns.join(", ")),
                StmtKind::AttrDecl(ns) => format!("pthread_attr_t {};", ns.join(", ")),
                StmtKind::CondAttrDecl(ns) => format!("pthread_condattr_t {};", ns.join(", ")),
                StmtKind::MutexDecl(ns) => format!("pthread_mutex_t {};", ns.join(", ")),
                StmtKind::CondDecl(ns) => format!("pthread_cond_t {};", ns.join(", ")),
                StmtKind::Create { handle, func } => format!("pthread_create({handle}, {func});"),
                StmtKind::Join(h) => format!("pthread_join({h});"),
                StmtKind::Exit => "pthread_exit();".into(),
                StmtKind::Lock(m) => format!("pthread_mutex_lock({m});"),
                StmtKind::Unlock(m) => format!("pthread_mutex_unlock({m});"),
                StmtKind::CondInit(c) => format!("pthread_cond_init({c});"),
                StmtKind::CondWait { cond, mutex } => format!("pthread_cond_wait({cond}, {mutex});"),
                StmtKind::CondSignal(c) => format!("pthread_cond_signal({c});"),
                _ => return None,
            })
        };
        if let Some(text) = simple(&s.kind) {
            self.line(id, depth, &text);
            return;
        }
        match &s.kind {
            StmtKind::If { cond, then_body, else_body } => {
                self.line(id, depth, &format!("if ({}) {{", print_expr(cond)));
                self.block(then_body, depth + 1);
                if let Some(e) = else_body {
                    self.line(None, depth, "} else {");
                    self.block(e, depth + 1);
                }
                self.line(None, depth, "}");
            }
            StmtKind::While { cond, body } => {
                self.line(id, depth, &format!("while ({}) {{", print_expr(cond)));
                self.block(body, depth + 1);
                self.line(None, depth, "}");
            }
            StmtKind::For { var, init, cond, step, body } => {
                self.line(
                    id,
                    depth,
                    &format!("for ({var} = {}; {}; {var} = {}) {{", print_expr(init), print_expr(cond), print_expr(step)),
                );
                self.block(body, depth + 1);
                self.line(None, depth, "}");
            }
            StmtKind::Switch { scrutinee, arms, default } => {
                self.line(id, depth, &format!("switch ({}) {{", print_expr(scrutinee)));
                for a in arms {
                    self.line(None, depth, &format!("case {}:", a.label));
                    self.block(&a.body, depth + 1);
                }
                if let Some(d) = default {
                    self.line(None, depth, "default:");
                    self.block(d, depth + 1);
                }
                self.line(None, depth, "}");
            }
            StmtKind::Block(body) => {
                self.line(id, depth, "{");
                self.block(body, depth + 1);
                self.line(None, depth, "}");
            }
            _ => unreachable!("simple statements handled above"),
        }
    }

    fn program(&mut self, p: &Program) {
        self.block(&p.globals, 0);
        for f in &p.functions {
            if !self.out.is_empty() {
                self.line(None, 0, "");
            }
            let params: Vec<String> = f.params.iter().map(|p| format!("int {p}")).collect();
            let ret = match f.ret {
                RetType::Int => "int",
                RetType::Void => "void",
            };
            self.line(None, 0, &format!("{ret} {}({}) {{", f.name, params.join(", ")));
            self.block(&f.body, 1);
            self.line(None, 0, "}");
        }
    }
}

pub fn print_stmt(s: &Stmt) -> String {
    let mut p = Printer { out: String::new(), numbered: false };
    p.stmt(s, 0);
    p.out
}

/// Canonical source text for a program.
pub fn pretty_print(p: &Program) -> String {
    let mut pr = Printer { out: String::new(), numbered: false };
    pr.program(p);
    pr.out
}

/// Like [`pretty_print`] but with each statement prefixed by its LineId.
/// The result is for display only.
pub fn pretty_print_numbered(p: &Program) -> String {
    let mut pr = Printer { out: String::new(), numbered: true };
    pr.program(p);
    pr.out
}
