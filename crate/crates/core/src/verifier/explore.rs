use super::compile::{Compiled, Op};
use super::machine::{Machine, State, StepEnd, StepInfo};
use super::*;
use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::rc::Rc;

struct PathEntry {
    info: StepInfo,
    post: Rc<State>,
}

enum SuccEnd {
    Continue,
    Violation(Violation),
}

struct Succ {
    state: Rc<State>,
    info: StepInfo,
    cur: usize,
    budget: u32,
    end: SuccEnd,
}

struct Frame {
    succs: Vec<Option<Succ>>,
    next: usize,
    depth: usize,
}

enum Node {
    Leaf,
    Deadlock(Vec<usize>),
    Frame(Frame),
    Exhausted,
}

pub(crate) struct Explorer<'c> {
    m: Machine<'c>,
    cfg: &'c VerifierConfig,
    states: usize,
    bound_hit: bool,
    visited: Option<HashMap<(u64, u64), u32>>,
}

fn fingerprint(st: &State, cur: usize) -> (u64, u64) {
    let mut a = DefaultHasher::new();
    (st, cur).hash(&mut a);
    let mut b = DefaultHasher::new();
    0x9e37_79b9_7f4a_7c15u64.hash(&mut b);
    (cur, st).hash(&mut b);
    (a.finish(), b.finish())
}

impl<'c> Explorer<'c> {
    pub fn new(c: &'c Compiled, cfg: &'c VerifierConfig) -> Self {
        Explorer {
            m: Machine { c, loop_bound: cfg.loop_bound, division_check: cfg.division_check, domain: cfg.nondet_domain },
            cfg,
            states: 0,
            bound_hit: false,
            visited: c.multi_threaded.then(HashMap::new),
        }
    }

    fn result(&self, outcome: Outcome) -> VerificationResult {
        VerificationResult { outcome, bound_hit: self.bound_hit, states: self.states }
    }

    pub fn run(mut self) -> VerificationResult {
        let init = Rc::new(self.m.initial());
        let mut path: Vec<PathEntry> = Vec::new();
        let mut stack = match self.expand(&init, 0, self.cfg.context_bound, 0) {
            Node::Frame(f) => vec![f],
            Node::Exhausted => return self.result(Outcome::ResourceExhausted),
            Node::Leaf => Vec::new(),
            Node::Deadlock(_) => unreachable!("main is enabled initially"),
        };
        while let Some(top) = stack.last_mut() {
            if top.next >= top.succs.len() {
                stack.pop();
                continue;
            }
            let succ = top.succs[top.next].take().expect("successor taken once");
            top.next += 1;
            path.truncate(top.depth);
            path.push(PathEntry { info: succ.info, post: succ.state.clone() });
            if let SuccEnd::Violation(v) = succ.end {
                let cex = build_cex(&self.m, &path, v);
                return self.result(Outcome::Violation(Box::new(cex)));
            }
            match self.expand(&succ.state, succ.cur, succ.budget, path.len()) {
                Node::Leaf => {}
                Node::Frame(f) => stack.push(f),
                Node::Exhausted => return self.result(Outcome::ResourceExhausted),
                Node::Deadlock(blocked) => {
                    let cex = build_cex(&self.m, &path, Violation::Deadlock { blocked });
                    return self.result(Outcome::Violation(Box::new(cex)));
                }
            }
        }
        self.result(Outcome::SafeWithinBounds)
    }

    fn expand(&mut self, st: &Rc<State>, cur: usize, budget: u32, depth: usize) -> Node {
        if st.over {
            return Node::Leaf;
        }
        let live = self.m.live(st);
        if live.is_empty() {
            return Node::Leaf;
        }
        let enabled: Vec<usize> = live.iter().copied().filter(|&t| self.m.enabled(st, t)).collect();
        if enabled.is_empty() {
            return if self.cfg.deadlock_check { Node::Deadlock(live) } else { Node::Leaf };
        }
        if let Some(visited) = &mut self.visited {
            let key = fingerprint(st, cur);
            match visited.get(&key) {
                Some(b) if *b >= budget => return Node::Leaf,
                _ => {
                    visited.insert(key, budget);
                }
            }
        }
        let mut succs = Vec::new();
        for t in enabled {
            let cost = (t != cur) as u32;
            if cost > budget {
                continue;
            }
            if !self.generate(st, t, &mut Vec::new(), budget - cost, &mut succs) {
                return Node::Exhausted;
            }
        }
        Node::Frame(Frame { succs, next: 0, depth })
    }

    /// Appends the successors of `t` stepping from `st`, branching on nondet draws.
    /// Returns false when the state cap is exceeded.
    fn generate(&mut self, st: &State, t: usize, choices: &mut Vec<i64>, budget: u32, out: &mut Vec<Option<Succ>>) -> bool {
        let mut s = st.clone();
        let (end, info) = self.m.step(&mut s, t, choices);
        self.states += 1;
        if self.states > self.cfg.max_states {
            return false;
        }
        let violation = match end {
            StepEnd::Ok => None,
            StepEnd::Assertion(line) => Some(Violation::Assertion { line }),
            StepEnd::DivZero(line) => Some(Violation::DivisionByZero { line }),
            StepEnd::Pruned => return true,
            StepEnd::BoundHit => {
                self.bound_hit = true;
                return true;
            }
            StepEnd::NeedChoice(lo, hi) => {
                for v in lo..=hi {
                    choices.push(v);
                    let ok = self.generate(st, t, choices, budget, out);
                    choices.pop();
                    if !ok {
                        return false;
                    }
                }
                return true;
            }
        };
        let end = match violation {
            Some(v) => SuccEnd::Violation(v),
            None => SuccEnd::Continue,
        };
        out.push(Some(Succ { state: Rc::new(s), info, cur: t, budget, end }));
        true
    }
}

fn trace_step(m: &Machine<'_>, index: usize, info: &StepInfo, post: &State) -> TraceStep {
    let code = &m.c.codes[info.code];
    let instr = &code.instrs[info.instr];
    TraceStep {
        step_index: index,
        thread: info.thread,
        line: instr.line,
        valuation: m.valuation(post, info.thread),
        call_path: instr.chain.to_vec(),
        branch: info.branch,
        loops: instr
            .loops
            .iter()
            .zip(&info.loop_counts)
            .map(|(l, c)| LoopCount { call_path: code.loops[*l].chain.to_vec(), line: code.loops[*l].line, count: *c })
            .collect(),
        resumed: matches!(instr.op, Op::Reacquire(_)),
        finished: info.finished,
    }
}

pub(crate) fn switches_of(steps: &[TraceStep]) -> Vec<ContextSwitchRecord> {
    let mut out = Vec::new();
    let mut per_thread: BTreeMap<usize, usize> = BTreeMap::new();
    for w in steps.windows(2) {
        if w[0].thread != w[1].thread {
            let n = per_thread.entry(w[0].thread).or_insert(0);
            *n += 1;
            out.push(ContextSwitchRecord {
                switch_index: out.len() + 1,
                from_thread: w[0].thread,
                to_thread: w[1].thread,
                at_line: w[0].line,
                per_thread_index: *n,
            });
        }
    }
    out
}

fn build_cex(m: &Machine<'_>, path: &[PathEntry], violation: Violation) -> Counterexample {
    let steps: Vec<TraceStep> = path.iter().enumerate().map(|(i, e)| trace_step(m, i, &e.info, &e.post)).collect();
    let nondet_choices = path
        .iter()
        .enumerate()
        .flat_map(|(i, e)| {
            let line = m.c.codes[e.info.code].instrs[e.info.instr].line;
            e.info.drawn.iter().map(move |v| NondetChoice { step: i, line, value: *v })
        })
        .collect();
    let last = &path.last().expect("non-empty path").post;
    let threads = last.threads.iter().map(|t| m.c.codes[t.code as usize].name.clone()).collect();
    Counterexample { switches: switches_of(&steps), steps, violation, nondet_choices, threads }
}

pub(crate) fn replay(c: &Compiled, cex: &Counterexample) -> Result<VerificationResult, VerifyError> {
    let m = Machine { c, loop_bound: u32::MAX, division_check: true, domain: (0, 0) };
    let mismatch = |step: usize, reason: String| VerifyError::TraceMismatch { step, reason };
    if cex.steps.is_empty() {
        return Err(mismatch(0, "empty trace".into()));
    }
    let mut st = m.initial();
    let mut path = Vec::new();
    let mut violation = None;
    for (i, ts) in cex.steps.iter().enumerate() {
        if st.over {
            return Err(mismatch(i, "program already terminated".into()));
        }
        if ts.thread >= st.threads.len() || !m.enabled(&st, ts.thread) {
            return Err(mismatch(i, format!("thread {} cannot run here", ts.thread)));
        }
        let choices: Vec<i64> = cex.nondet_choices.iter().filter(|c| c.step == i).map(|c| c.value).collect();
        let (end, info) = m.step(&mut st, ts.thread, &choices);
        let instr = &c.codes[info.code].instrs[info.instr];
        if instr.line != ts.line || *instr.chain != ts.call_path[..] {
            return Err(mismatch(i, format!("expected line {}, program is at line {}", ts.line, instr.line)));
        }
        if info.drawn.len() != choices.len() {
            return Err(mismatch(i, "nondet choices do not fit the step".into()));
        }
        match end {
            StepEnd::Ok => {}
            StepEnd::Assertion(line) => violation = Some(Violation::Assertion { line }),
            StepEnd::DivZero(line) => violation = Some(Violation::DivisionByZero { line }),
            other => return Err(mismatch(i, format!("step does not complete ({other:?})"))),
        }
        if m.valuation(&st, ts.thread) != ts.valuation {
            return Err(mismatch(i, "valuation differs".into()));
        }
        path.push(PathEntry { info, post: Rc::new(st.clone()) });
        if violation.is_some() && i + 1 != cex.steps.len() {
            return Err(mismatch(i, "violation before the end of the trace".into()));
        }
    }
    let violation = match violation {
        Some(v) => v,
        None => {
            let live = m.live(&st);
            let stuck = !st.over && !live.is_empty() && live.iter().all(|&t| !m.enabled(&st, t));
            if !stuck {
                return Err(mismatch(cex.steps.len(), "trace ends without a violation".into()));
            }
            Violation::Deadlock { blocked: live }
        }
    };
    if violation != cex.violation {
        return Err(mismatch(cex.steps.len(), format!("violation differs: {violation:?}")));
    }
    let rebuilt = build_cex(&m, &path, violation);
    Ok(VerificationResult { outcome: Outcome::Violation(Box::new(rebuilt)), bound_hit: false, states: path.len() })
}

pub(crate) fn execute(c: &Compiled, inputs: &[i64], cfg: &VerifierConfig) -> Result<Execution, VerifyError> {
    let m = Machine { c, loop_bound: cfg.loop_bound, division_check: cfg.division_check, domain: cfg.nondet_domain };
    let mut st = m.initial();
    let mut cur = 0;
    let mut pos = 0;
    let end = loop {
        if st.over {
            break ExecutionEnd::Completed;
        }
        let live = m.live(&st);
        let enabled: Vec<usize> = live.iter().copied().filter(|&t| m.enabled(&st, t)).collect();
        let Some(&first) = enabled.first() else {
            if !live.is_empty() && cfg.deadlock_check {
                break ExecutionEnd::Violation(Violation::Deadlock { blocked: live });
            }
            break ExecutionEnd::Completed;
        };
        let t = if enabled.contains(&cur) { cur } else { first };
        cur = t;
        let (end, info) = m.step(&mut st, t, &inputs[pos..]);
        pos += info.drawn.len();
        match end {
            StepEnd::Ok => {}
            StepEnd::Assertion(line) => break ExecutionEnd::Violation(Violation::Assertion { line }),
            StepEnd::DivZero(line) => break ExecutionEnd::Violation(Violation::DivisionByZero { line }),
            StepEnd::Pruned | StepEnd::BoundHit => break ExecutionEnd::Infeasible,
            StepEnd::NeedChoice(..) => return Err(VerifyError::InputExhausted),
        }
    };
    Ok(Execution { end, globals: m.shared_valuation(&st), main_valuation: m.valuation(&st, 0) })
}
