//! Naive reference semantics: a direct AST interpreter that enumerates every
//! schedule and every nondet value within the context bound. It shares no
//! code with the verifier beyond the parser.
//!
//! Supported: integer and handle declarations, assignments, `nondet()`
//! statements, `if`, blocks, `assert`, `assume`, `return`, thread creation and
//! join, mutexes. No loops, calls or condition variables.

use mcfl::minic::{BinOp, Expr, LineId, Program, Stmt, StmtKind, UnOp};
use mcfl::verifier::{VerifierConfig, Violation};
use std::collections::{BTreeMap, BTreeSet, HashMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Found {
    Assertion(LineId),
    DivisionByZero(LineId),
    Deadlock,
}

impl Found {
    pub fn of(v: &Violation) -> Found {
        match v {
            Violation::Assertion { line } => Found::Assertion(*line),
            Violation::DivisionByZero { line } => Found::DivisionByZero(*line),
            Violation::Deadlock { .. } => Found::Deadlock,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Thread {
    /// Statements still to run, next one last.
    todo: Vec<Stmt>,
    locals: BTreeMap<String, i64>,
    done: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct State {
    globals: BTreeMap<String, i64>,
    owner: BTreeMap<String, Option<usize>>,
    threads: Vec<Thread>,
    over: bool,
}

enum Step {
    Next(State),
    Fail(Found),
    Pruned,
}

struct DivZero;

fn truth(b: bool) -> i64 {
    b as i64
}

fn eval(e: &Expr, th: &Thread, globals: &BTreeMap<String, i64>) -> Result<i64, DivZero> {
    let ev = |e: &Expr| eval(e, th, globals);
    Ok(match e {
        Expr::Int(v) => *v,
        Expr::Bool(b) => truth(*b),
        Expr::Var(n) => *th.locals.get(n).or_else(|| globals.get(n)).unwrap_or_else(|| panic!("unknown {n}")),
        Expr::Unary(UnOp::Neg, a) => ev(a)?.wrapping_neg(),
        Expr::Unary(UnOp::Not, a) => truth(ev(a)? == 0),
        Expr::Binary(BinOp::And, a, b) => truth(ev(a)? != 0 && ev(b)? != 0),
        Expr::Binary(BinOp::Or, a, b) => truth(ev(a)? != 0 || ev(b)? != 0),
        Expr::Binary(op, a, b) => {
            let (x, y) = (ev(a)?, ev(b)?);
            match op {
                BinOp::Add => x.wrapping_add(y),
                BinOp::Sub => x.wrapping_sub(y),
                BinOp::Mul => x.wrapping_mul(y),
                BinOp::Div | BinOp::Rem if y == 0 => return Err(DivZero),
                BinOp::Div => x.wrapping_div(y),
                BinOp::Rem => x.wrapping_rem(y),
                BinOp::Eq => truth(x == y),
                BinOp::Ne => truth(x != y),
                BinOp::Lt => truth(x < y),
                BinOp::Le => truth(x <= y),
                BinOp::Gt => truth(x > y),
                BinOp::Ge => truth(x >= y),
                BinOp::And | BinOp::Or => unreachable!(),
            }
        }
        Expr::Cond(c, a, b) => {
            if ev(c)? != 0 {
                ev(a)?
            } else {
                ev(b)?
            }
        }
        other => panic!("oracle does not support {other:?}"),
    })
}

fn push_body(todo: &mut Vec<Stmt>, body: &[Stmt]) {
    todo.extend(body.iter().rev().cloned());
}

pub struct Oracle<'p> {
    program: &'p Program,
    cfg: VerifierConfig,
    seen: HashMap<(State, usize), u32>,
    found: BTreeSet<Found>,
}

/// Every violation reachable within the configuration's context bound.
pub fn reachable_violations(program: &Program, cfg: &VerifierConfig) -> BTreeSet<Found> {
    let mut o = Oracle { program, cfg: cfg.clone(), seen: HashMap::new(), found: BTreeSet::new() };
    let init = o.initial();
    o.explore(init, 0, cfg.context_bound);
    o.found
}

impl Oracle<'_> {
    fn initial(&self) -> State {
        let mut st = State { globals: BTreeMap::new(), owner: BTreeMap::new(), threads: Vec::new(), over: false };
        let none = Thread { todo: vec![], locals: BTreeMap::new(), done: false };
        for g in &self.program.globals {
            match &g.kind {
                StmtKind::Decl(ds) => {
                    for d in ds {
                        let v = d.init.as_ref().map_or(0, |e| eval(e, &none, &st.globals).ok().unwrap());
                        st.globals.insert(d.name.clone(), v);
                    }
                }
                StmtKind::MutexDecl(ms) => {
                    for m in ms {
                        st.owner.insert(m.clone(), None);
                    }
                }
                other => panic!("oracle does not support global {other:?}"),
            }
        }
        self.spawn(&mut st, "main");
        st
    }

    fn spawn(&self, st: &mut State, func: &str) -> usize {
        let f = self.program.function(func).expect("thread function exists");
        let mut th = Thread { todo: Vec::new(), locals: BTreeMap::new(), done: false };
        push_body(&mut th.todo, &f.body);
        st.threads.push(th);
        let t = st.threads.len() - 1;
        settle(st, t);
        t
    }

    fn enabled(&self, st: &State, t: usize) -> bool {
        let th = &st.threads[t];
        match th.todo.last().map(|s| &s.kind) {
            Some(StmtKind::Lock(m)) => st.owner[m].is_none(),
            Some(StmtKind::Join(h)) => {
                let h = th.locals[h];
                h < 0 || h as usize >= st.threads.len() || st.threads[h as usize].done
            }
            _ => true,
        }
    }

    fn explore(&mut self, st: State, cur: usize, budget: u32) {
        if st.over {
            return;
        }
        let live: Vec<usize> = (0..st.threads.len()).filter(|&t| !st.threads[t].done).collect();
        if live.is_empty() {
            return;
        }
        let enabled: Vec<usize> = live.iter().copied().filter(|&t| self.enabled(&st, t)).collect();
        if enabled.is_empty() {
            if self.cfg.deadlock_check {
                self.found.insert(Found::Deadlock);
            }
            return;
        }
        let key = (st.clone(), cur);
        match self.seen.get(&key) {
            Some(&b) if b >= budget => return,
            _ => {
                self.seen.insert(key, budget);
            }
        }
        for t in enabled {
            let cost = (t != cur) as u32;
            if cost > budget {
                continue;
            }
            for next in self.step(&st, t) {
                match next {
                    Step::Next(s) => self.explore(s, t, budget - cost),
                    Step::Fail(f) => {
                        self.found.insert(f);
                    }
                    Step::Pruned => {}
                }
            }
        }
    }

    fn div_zero(&self, line: LineId) -> Step {
        if self.cfg.division_check {
            Step::Fail(Found::DivisionByZero(line))
        } else {
            Step::Pruned
        }
    }

    fn step(&self, st: &State, t: usize) -> Vec<Step> {
        let mut st = st.clone();
        let s = st.threads[t].todo.pop().expect("live thread has work");
        macro_rules! ev {
            ($e:expr) => {
                match eval($e, &st.threads[t], &st.globals) {
                    Ok(v) => v,
                    Err(DivZero) => return vec![self.div_zero(s.line)],
                }
            };
        }
        match &s.kind {
            StmtKind::Decl(ds) => {
                for d in ds {
                    let v = match &d.init {
                        Some(e) => ev!(e),
                        None => 0,
                    };
                    st.threads[t].locals.insert(d.name.clone(), v);
                }
            }
            StmtKind::ThreadDecl(hs) => {
                for h in hs {
                    st.threads[t].locals.insert(h.clone(), -1);
                }
            }
            StmtKind::Assign { target, value } => {
                let v = ev!(value);
                write(&mut st, t, target, v);
            }
            StmtKind::Nondet { target, range } => {
                let (lo, hi) = range.unwrap_or(self.cfg.nondet_domain);
                return (lo..=hi)
                    .map(|v| {
                        let mut s2 = st.clone();
                        write(&mut s2, t, target, v);
                        settle(&mut s2, t);
                        Step::Next(s2)
                    })
                    .collect();
            }
            StmtKind::If { cond, then_body, else_body } => {
                let body = if ev!(cond) != 0 { Some(then_body) } else { else_body.as_ref() };
                if let Some(b) = body {
                    push_body(&mut st.threads[t].todo, b);
                }
            }
            StmtKind::Assert(e) => {
                if ev!(e) == 0 {
                    return vec![Step::Fail(Found::Assertion(s.line))];
                }
            }
            StmtKind::Assume(e) => {
                if ev!(e) == 0 {
                    return vec![Step::Pruned];
                }
            }
            StmtKind::Return(_) => {
                st.threads[t].done = true;
                st.threads[t].todo.clear();
                if t == 0 {
                    st.over = true;
                }
                return vec![Step::Next(st)];
            }
            StmtKind::Create { handle, func } => {
                let id = self.spawn(&mut st, func);
                write(&mut st, t, handle, id as i64);
            }
            StmtKind::Join(_) => {}
            StmtKind::Lock(m) => {
                st.owner.insert(m.clone(), Some(t));
            }
            StmtKind::Unlock(m) => {
                st.owner.insert(m.clone(), None);
            }
            other => panic!("oracle does not support {other:?}"),
        }
        settle(&mut st, t);
        vec![Step::Next(st)]
    }
}

fn write(st: &mut State, t: usize, name: &str, v: i64) {
    if let Some(slot) = st.threads[t].locals.get_mut(name) {
        *slot = v;
    } else {
        *st.globals.get_mut(name).unwrap_or_else(|| panic!("unknown {name}")) = v;
    }
}

/// Opens blocks and marks a thread without work as done.
fn settle(st: &mut State, t: usize) {
    let th = &mut st.threads[t];
    while let Some(Stmt { kind: StmtKind::Block(_), .. }) = th.todo.last() {
        let Some(Stmt { kind: StmtKind::Block(b), .. }) = th.todo.pop() else { unreachable!() };
        push_body(&mut th.todo, &b);
    }
    if th.todo.is_empty() && !th.done {
        th.done = true;
        if t == 0 {
            st.over = true;
        }
    }
}
