//! Program state and single-step execution.

use super::compile::{CExpr, Compiled, Op, Slot};
use crate::minic::{BinOp, LineId, UnOp};
use std::collections::BTreeMap;

pub(crate) const NO_OWNER: i64 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum Status {
    Run,
    Wait { cond: u32, mutex: u32 },
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) struct Thread {
    pub code: u32,
    pub pc: u32,
    pub status: Status,
    pub locals: Vec<i64>,
    /// Completed iterations per loop site, never reset.
    pub loop_total: Vec<u32>,
    /// Completed iterations in the current activation of each loop.
    pub loop_act: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) struct State {
    pub globals: Vec<i64>,
    pub mutex: Vec<i64>,
    pub threads: Vec<Thread>,
    /// Set once `main` returns: the whole program has terminated.
    pub over: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum EvalErr {
    DivZero,
    OutOfRange,
    NeedChoice(i64, i64),
}

/// Supplies values for nondeterministic draws within one step.
pub(crate) struct Choices<'a> {
    pub vals: &'a [i64],
    pub used: usize,
    pub domain: (i64, i64),
}

impl Choices<'_> {
    fn draw(&mut self, range: Option<(i64, i64)>) -> Result<i64, EvalErr> {
        let (lo, hi) = range.unwrap_or(self.domain);
        match self.vals.get(self.used) {
            Some(v) => {
                self.used += 1;
                Ok(*v)
            }
            None => Err(EvalErr::NeedChoice(lo, hi)),
        }
    }
}

pub(crate) fn eval_const(e: &CExpr, globals: &[i64], tables: &[Vec<i64>]) -> Result<i64, EvalErr> {
    let mut ch = Choices { vals: &[], used: 0, domain: (0, 0) };
    eval(e, globals, &[], tables, &mut ch)
}

fn truth(v: i64) -> i64 {
    (v != 0) as i64
}

pub(crate) fn eval(
    e: &CExpr,
    globals: &[i64],
    locals: &[i64],
    tables: &[Vec<i64>],
    ch: &mut Choices<'_>,
) -> Result<i64, EvalErr> {
    let ev = |e: &CExpr, ch: &mut Choices<'_>| eval(e, globals, locals, tables, ch);
    Ok(match e {
        CExpr::Int(v) => *v,
        CExpr::Var(Slot::G(i)) => globals[*i as usize],
        CExpr::Var(Slot::L(i)) => locals[*i as usize],
        CExpr::Index(t, i) => {
            let idx = ev(i, ch)?;
            let table = &tables[*t as usize];
            if idx < 0 || idx as usize >= table.len() {
                return Err(EvalErr::OutOfRange);
            }
            table[idx as usize]
        }
        CExpr::Unary(UnOp::Neg, a) => ev(a, ch)?.wrapping_neg(),
        CExpr::Unary(UnOp::Not, a) => (ev(a, ch)? == 0) as i64,
        CExpr::Binary(BinOp::And, a, b) => {
            if ev(a, ch)? == 0 {
                0
            } else {
                truth(ev(b, ch)?)
            }
        }
        CExpr::Binary(BinOp::Or, a, b) => {
            if ev(a, ch)? != 0 {
                1
            } else {
                truth(ev(b, ch)?)
            }
        }
        CExpr::Binary(op, a, b) => {
            let x = ev(a, ch)?;
            let y = ev(b, ch)?;
            match op {
                BinOp::Add => x.wrapping_add(y),
                BinOp::Sub => x.wrapping_sub(y),
                BinOp::Mul => x.wrapping_mul(y),
                BinOp::Div | BinOp::Rem if y == 0 => return Err(EvalErr::DivZero),
                BinOp::Div => x.wrapping_div(y),
                BinOp::Rem => x.wrapping_rem(y),
                BinOp::Eq => (x == y) as i64,
                BinOp::Ne => (x != y) as i64,
                BinOp::Lt => (x < y) as i64,
                BinOp::Le => (x <= y) as i64,
                BinOp::Gt => (x > y) as i64,
                BinOp::Ge => (x >= y) as i64,
                BinOp::And | BinOp::Or => unreachable!(),
            }
        }
        CExpr::Cond(c, a, b) => {
            if ev(c, ch)? != 0 {
                ev(a, ch)?
            } else {
                ev(b, ch)?
            }
        }
        CExpr::Nondet(range) => ch.draw(*range)?,
    })
}

/// What happened when a thread took one step.
#[derive(Debug)]
pub(crate) enum StepEnd {
    Ok,
    Assertion(LineId),
    DivZero(LineId),
    /// Path is infeasible (assume failed, table index out of range, ...).
    Pruned,
    /// A loop exceeded the loop bound.
    BoundHit,
    NeedChoice(i64, i64),
}

/// Record of one executed step, sufficient to rebuild a trace entry.
#[derive(Debug, Clone)]
pub(crate) struct StepInfo {
    pub thread: usize,
    pub code: usize,
    pub instr: usize,
    pub branch: Option<bool>,
    /// Loop totals before the step, for the instruction's enclosing loops.
    pub loop_counts: Vec<u32>,
    pub finished: bool,
    pub drawn: Vec<i64>,
}

pub(crate) struct Machine<'c> {
    pub c: &'c Compiled,
    pub loop_bound: u32,
    pub division_check: bool,
    pub domain: (i64, i64),
}

impl<'c> Machine<'c> {
    pub fn initial(&self) -> State {
        let main = &self.c.codes[self.c.main];
        let mut st = State {
            globals: self.c.globals_init.clone(),
            mutex: vec![NO_OWNER; self.c.n_mutex],
            threads: vec![Thread {
                code: self.c.main as u32,
                pc: 0,
                status: Status::Run,
                locals: main.local_init.clone(),
                loop_total: vec![0; main.loops.len()],
                loop_act: vec![0; main.loops.len()],
            }],
            over: false,
        };
        self.settle(&mut st, 0);
        st
    }

    pub fn live(&self, st: &State) -> Vec<usize> {
        (0..st.threads.len()).filter(|&t| st.threads[t].status != Status::Done).collect()
    }

    pub fn enabled(&self, st: &State, t: usize) -> bool {
        let th = &st.threads[t];
        if th.status != Status::Run {
            return false;
        }
        let instr = &self.c.codes[th.code as usize].instrs[th.pc as usize];
        match &instr.op {
            Op::Lock(m) | Op::Reacquire(m) => st.mutex[*m as usize] == NO_OWNER,
            Op::Join(h) => {
                let h = read(st, t, *h);
                !(0..st.threads.len() as i64).contains(&h) || st.threads[h as usize].status == Status::Done
            }
            _ => true,
        }
    }

    /// Advances past pseudo instructions; marks the thread done at `End`.
    fn settle(&self, st: &mut State, t: usize) {
        loop {
            let th = &mut st.threads[t];
            if th.status == Status::Done {
                return;
            }
            let code = &self.c.codes[th.code as usize];
            match &code.instrs[th.pc as usize].op {
                Op::Jump(to) => th.pc = *to as u32,
                Op::LoopEnter(l) => {
                    th.loop_act[*l] = 0;
                    th.pc += 1;
                }
                Op::LoopBack { loop_idx, head } => {
                    th.loop_total[*loop_idx] += 1;
                    th.loop_act[*loop_idx] += 1;
                    th.pc = *head as u32;
                }
                Op::End => {
                    th.status = Status::Done;
                    if t == 0 {
                        st.over = true;
                    }
                    return;
                }
                _ => return,
            }
        }
    }

    /// Executes the next statement of thread `t` in place. `choices` supplies
    /// nondeterministic values; running out yields `NeedChoice`.
    pub fn step(&self, st: &mut State, t: usize, choices: &[i64]) -> (StepEnd, StepInfo) {
        let th = &st.threads[t];
        let code_idx = th.code as usize;
        let pc = th.pc as usize;
        let code = &self.c.codes[code_idx];
        let instr = &code.instrs[pc];
        let mut info = StepInfo {
            thread: t,
            code: code_idx,
            instr: pc,
            branch: None,
            loop_counts: instr.loops.iter().map(|l| th.loop_total[*l]).collect(),
            finished: false,
            drawn: Vec::new(),
        };
        let mut ch = Choices { vals: choices, used: 0, domain: self.domain };
        let end = self.exec(st, t, &instr.op, instr.line, &mut ch, &mut info);
        info.drawn = choices[..ch.used].to_vec();
        if matches!(end, StepEnd::Ok) {
            self.settle(st, t);
            info.finished = st.threads[t].status == Status::Done;
        }
        (end, info)
    }

    fn exec(&self, st: &mut State, t: usize, op: &Op, line: LineId, ch: &mut Choices<'_>, info: &mut StepInfo) -> StepEnd {
        macro_rules! ev {
            ($e:expr) => {
                match eval($e, &st.globals, &st.threads[t].locals, &self.c.tables, ch) {
                    Ok(v) => v,
                    Err(EvalErr::DivZero) if self.division_check => return StepEnd::DivZero(line),
                    Err(EvalErr::DivZero) | Err(EvalErr::OutOfRange) => return StepEnd::Pruned,
                    Err(EvalErr::NeedChoice(lo, hi)) => return StepEnd::NeedChoice(lo, hi),
                }
            };
        }
        let next = st.threads[t].pc + 1;
        match op {
            Op::Decl(ds) => {
                // Evaluate in order: later initializers may read earlier declarators.
                for (slot, init) in ds {
                    let v = match init {
                        Some(e) => ev!(e),
                        None => 0,
                    };
                    write(st, t, *slot, v);
                }
                st.threads[t].pc = next;
            }
            Op::DeclHandles(slots) => {
                for s in slots {
                    write(st, t, *s, -1);
                }
                st.threads[t].pc = next;
            }
            Op::Assign(slot, e) => {
                let v = ev!(e);
                write(st, t, *slot, v);
                st.threads[t].pc = next;
            }
            Op::Nondet(slot, range) => {
                let v = ev!(&CExpr::Nondet(*range));
                write(st, t, *slot, v);
                st.threads[t].pc = next;
            }
            Op::Bind(binds) => {
                let mut vals = Vec::with_capacity(binds.len());
                for (_, e) in binds {
                    vals.push(ev!(e));
                }
                for ((slot, _), v) in binds.iter().zip(vals) {
                    write(st, t, *slot, v);
                }
                st.threads[t].pc = next;
            }
            Op::Branch { cond, else_pc } => {
                let b = ev!(cond) != 0;
                info.branch = Some(b);
                st.threads[t].pc = if b { next } else { *else_pc as u32 };
            }
            Op::While { cond, exit_pc, loop_idx } => {
                let b = ev!(cond) != 0;
                info.branch = Some(b);
                if b {
                    if st.threads[t].loop_act[*loop_idx] >= self.loop_bound {
                        return StepEnd::BoundHit;
                    }
                    st.threads[t].pc = next;
                } else {
                    st.threads[t].pc = *exit_pc as u32;
                }
            }
            Op::ForInit(slot, e) | Op::ForStep { slot, value: e, .. } => {
                let v = ev!(e);
                write(st, t, *slot, v);
                st.threads[t].pc = match op {
                    Op::ForStep { head, .. } => *head as u32,
                    _ => next,
                };
            }
            Op::ForCond { cond, exit_pc } => {
                let b = ev!(cond) != 0;
                info.branch = Some(b);
                st.threads[t].pc = if b { next } else { *exit_pc as u32 };
            }
            Op::Switch { scrutinee, table, default_pc } => {
                let v = ev!(scrutinee);
                let to = table.iter().find(|(l, _)| *l == v).map(|(_, pc)| *pc).unwrap_or(*default_pc);
                st.threads[t].pc = to as u32;
            }
            Op::Break(to) => st.threads[t].pc = *to as u32,
            Op::Assert(e) => {
                if ev!(e) == 0 {
                    return StepEnd::Assertion(line);
                }
                st.threads[t].pc = next;
            }
            Op::Assume(e) => {
                if ev!(e) == 0 {
                    return StepEnd::Pruned;
                }
                st.threads[t].pc = next;
            }
            Op::Finish => {
                st.threads[t].status = Status::Done;
                if t == 0 {
                    st.over = true;
                }
            }
            Op::Exit => st.threads[t].status = Status::Done,
            Op::Create { handle, code } => {
                let ord = st.threads.len() as i64;
                let c = &self.c.codes[*code];
                st.threads.push(Thread {
                    code: *code as u32,
                    pc: 0,
                    status: Status::Run,
                    locals: c.local_init.clone(),
                    loop_total: vec![0; c.loops.len()],
                    loop_act: vec![0; c.loops.len()],
                });
                let new = st.threads.len() - 1;
                self.settle(st, new);
                write(st, t, *handle, ord);
                st.threads[t].pc = next;
            }
            Op::Join(_) | Op::CondInit | Op::NoOp => st.threads[t].pc = next,
            Op::Lock(m) | Op::Reacquire(m) => {
                st.mutex[*m as usize] = t as i64;
                st.threads[t].pc = next;
            }
            Op::Unlock(m) => {
                st.mutex[*m as usize] = NO_OWNER;
                st.threads[t].pc = next;
            }
            Op::CondWait { cond, mutex } => {
                st.mutex[*mutex as usize] = NO_OWNER;
                st.threads[t].status = Status::Wait { cond: *cond, mutex: *mutex };
                st.threads[t].pc = next;
            }
            Op::CondSignal(c) => {
                if let Some(w) = st.threads.iter_mut().find(|w| matches!(w.status, Status::Wait { cond, .. } if cond == *c)) {
                    w.status = Status::Run;
                }
                st.threads[t].pc = next;
            }
            Op::Jump(_) | Op::LoopEnter(_) | Op::LoopBack { .. } | Op::End => {
                unreachable!("pseudo instructions are settled eagerly")
            }
        }
        StepEnd::Ok
    }

    /// Integer scalars visible to thread `t`: globals plus its entry-function locals.
    pub fn valuation(&self, st: &State, t: usize) -> BTreeMap<String, i64> {
        let mut out: BTreeMap<String, i64> =
            self.c.visible_globals.iter().map(|(n, s)| (n.clone(), st.globals[*s as usize])).collect();
        let th = &st.threads[t];
        for (n, s) in &self.c.codes[th.code as usize].visible_locals {
            out.insert(n.clone(), th.locals[*s as usize]);
        }
        out
    }

    pub fn shared_valuation(&self, st: &State) -> BTreeMap<String, i64> {
        self.c.visible_globals.iter().map(|(n, s)| (n.clone(), st.globals[*s as usize])).collect()
    }
}

fn read(st: &State, t: usize, s: Slot) -> i64 {
    match s {
        Slot::G(i) => st.globals[i as usize],
        Slot::L(i) => st.threads[t].locals[i as usize],
    }
}

fn write(st: &mut State, t: usize, s: Slot, v: i64) {
    match s {
        Slot::G(i) => st.globals[i as usize] = v,
        Slot::L(i) => st.threads[t].locals[i as usize] = v,
    }
}
