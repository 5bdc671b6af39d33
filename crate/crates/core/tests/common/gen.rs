//! Random concurrent mini-C programs: `main` starts one or two workers that
//! race on at most two shared integers.

use rand::rngs::StdRng;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct GenParams {
    /// Worker threads besides `main` (1 or 2).
    pub max_workers: usize,
    /// Statements per thread body, nested ones included.
    pub max_stmts: usize,
    pub shared: usize,
    pub nondet: bool,
    pub division: bool,
    pub locks: bool,
    pub loops: bool,
}

impl GenParams {
    pub fn small() -> GenParams {
        GenParams { max_workers: 2, max_stmts: 6, shared: 2, nondet: true, division: true, locks: true, loops: false }
    }

    pub fn replay() -> GenParams {
        GenParams { max_workers: 2, max_stmts: 8, shared: 2, nondet: true, division: true, locks: true, loops: true }
    }
}

struct Body<'a> {
    rng: &'a mut StdRng,
    p: &'a GenParams,
    prefix: char,
    next_local: usize,
    locals: Vec<String>,
    lines: Vec<String>,
    held: Vec<usize>,
}

impl Body<'_> {
    fn c(&mut self) -> i64 {
        self.rng.gen_range(0..4)
    }

    fn g(&mut self) -> String {
        format!("g{}", self.rng.gen_range(0..self.p.shared))
    }

    fn operand(&mut self) -> String {
        if !self.locals.is_empty() && self.rng.gen_bool(0.3) {
            let i = self.rng.gen_range(0..self.locals.len());
            self.locals[i].clone()
        } else {
            self.g()
        }
    }

    fn expr(&mut self) -> String {
        let a = self.operand();
        let c = self.c();
        match self.rng.gen_range(0..5) {
            0 => format!("{a} + {c}"),
            1 => format!("{a} - {c}"),
            2 => format!("{a} * 2"),
            3 => format!("{a} + {}", self.operand()),
            _ => c.to_string(),
        }
    }

    fn cond(&mut self) -> String {
        let a = self.operand();
        let c = self.c();
        let op = ["==", "!=", "<", ">"][self.rng.gen_range(0..4)];
        format!("{a} {op} {c}")
    }

    fn emit(&mut self, depth: usize, s: String) {
        self.lines.push(format!("{}{s}", "  ".repeat(depth + 1)));
    }

    fn fresh_local(&mut self) -> String {
        self.next_local += 1;
        format!("{}{}", self.prefix, self.next_local)
    }

    /// Emits at most `budget` statements; returns how many were used.
    fn block(&mut self, budget: usize, depth: usize) -> usize {
        let mut used = 0;
        let scope = self.locals.len();
        while used < budget {
            let n = self.stmt(budget - used, depth);
            if n == 0 {
                break;
            }
            used += n;
            if self.rng.gen_bool(0.15) {
                break;
            }
        }
        self.locals.truncate(scope);
        used
    }

    fn stmt(&mut self, budget: usize, depth: usize) -> usize {
        loop {
            match self.rng.gen_range(0..10) {
                0..=2 => {
                    let (g, e) = (self.g(), self.expr());
                    self.emit(depth, format!("{g} = {e};"));
                    return 1;
                }
                3 => {
                    let (l, g) = (self.fresh_local(), self.g());
                    self.emit(depth, format!("int {l} = {g};"));
                    self.locals.push(l);
                    return 1;
                }
                4 if budget >= 2 && depth < 2 => {
                    let c = self.cond();
                    self.emit(depth, format!("if ({c}) {{"));
                    let mut used = 1 + self.block(budget - 1, depth + 1);
                    if used < budget && self.rng.gen_bool(0.4) {
                        self.emit(depth, "} else {".into());
                        used += self.block(budget - used, depth + 1);
                    }
                    self.emit(depth, "}".into());
                    return used;
                }
                5 if self.p.locks && budget >= 2 && depth < 2 && self.held.len() < 2 => {
                    let m = self.rng.gen_range(0..2);
                    if self.held.contains(&m) {
                        continue;
                    }
                    self.emit(depth, format!("pthread_mutex_lock(m{m});"));
                    self.held.push(m);
                    let used = 2 + self.block(budget - 2, depth);
                    self.held.pop();
                    self.emit(depth, format!("pthread_mutex_unlock(m{m});"));
                    return used;
                }
                6 => {
                    let (g, c) = (self.g(), self.c());
                    self.emit(depth, format!("assert({g} != {c});"));
                    return 1;
                }
                7 if self.p.nondet && !self.locals.is_empty() => {
                    let i = self.rng.gen_range(0..self.locals.len());
                    let l = self.locals[i].clone();
                    self.emit(depth, format!("{l} = nondet();"));
                    return 1;
                }
                8 if self.p.division => {
                    let (g, h, c, k) = (self.g(), self.operand(), self.c(), self.c() + 1);
                    self.emit(depth, format!("{g} = {k} / ({h} - {c});"));
                    return 1;
                }
                9 if self.p.loops && budget >= 4 && depth < 2 => {
                    let i = self.fresh_local();
                    let n = self.rng.gen_range(1..3);
                    self.emit(depth, format!("int {i} = 0;"));
                    self.emit(depth, format!("while ({i} < {n}) {{"));
                    let used = 3 + self.block(budget - 3, depth + 1);
                    self.emit(depth + 1, format!("{i} = {i} + 1;"));
                    self.emit(depth, "}".into());
                    return used;
                }
                _ => {}
            }
        }
    }
}

fn body(rng: &mut StdRng, p: &GenParams, prefix: char, budget: usize) -> Vec<String> {
    let mut b = Body { rng, p, prefix, next_local: 0, locals: Vec::new(), lines: Vec::new(), held: Vec::new() };
    let n = b.rng.gen_range(1..=budget);
    b.block(n, 0);
    b.lines
}

/// Source text of one random program.
pub fn program(rng: &mut StdRng, p: &GenParams) -> String {
    let workers = rng.gen_range(1..=p.max_workers);
    let mut out = String::new();
    for g in 0..p.shared {
        out.push_str(&format!("int g{g} = {};\n", rng.gen_range(0..3)));
    }
    if p.locks {
        out.push_str("pthread_mutex_t m0, m1;\n");
    }
    for w in 1..=workers {
        out.push_str(&format!("\nvoid worker{w}() {{\n"));
        let prefix = (b'a' + w as u8) as char;
        for l in body(rng, p, prefix, p.max_stmts) {
            out.push_str(&l);
            out.push('\n');
        }
        out.push_str("}\n");
    }
    let handles: Vec<String> = (1..=workers).map(|w| format!("h{w}")).collect();
    out.push_str(&format!("\nint main() {{\n  pthread_t {};\n", handles.join(", ")));
    for w in 1..=workers {
        out.push_str(&format!("  pthread_create(h{w}, worker{w});\n"));
    }
    // Creates, joins and the final assertion take 2 * workers + 1 statements.
    let room = p.max_stmts.saturating_sub(2 * workers + 1);
    if room > 0 && rng.gen_bool(0.5) {
        for l in body(rng, p, 'z', room) {
            out.push_str(&l);
            out.push('\n');
        }
    }
    for w in 1..=workers {
        out.push_str(&format!("  pthread_join(h{w});\n"));
    }
    let g = rng.gen_range(0..p.shared);
    let c = rng.gen_range(0..5);
    out.push_str(&format!("  assert(g{g} != {c});\n  return 0;\n}}\n"));
    out
}
