use super::ast::*;
use super::lexer::{Tok, Token};
use super::ParseError;
use std::collections::BTreeMap;

/// Source position of every statement, keyed by its LineId.
pub type Spans = BTreeMap<LineId, (usize, usize)>;

pub struct Parser {
    toks: Vec<Token>,
    pos: usize,
    next_line: u32,
    spans: Spans,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    pub fn new(toks: Vec<Token>) -> Parser {
        Parser { toks, pos: 0, next_line: 0, spans: Spans::new() }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let (l, c) = self.here();
        Err(ParseError::syntax(l, c, msg))
    }

    fn describe(t: &Tok) -> String {
        match t {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Keyword(k) => format!("`{k}`"),
            Tok::Int(v) => format!("integer `{v}`"),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Keyword(q) if *q == k)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.err(format!("expected `{p}`, found {}", Self::describe(self.peek())))
        }
    }

    fn expect_kw(&mut self, k: &str) -> PResult<()> {
        if self.is_kw(k) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{k}`, found {}", Self::describe(self.peek())))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => self.err(format!("expected identifier, found {}", Self::describe(&other))),
        }
    }

    fn int_lit(&mut self) -> PResult<i64> {
        let neg = self.eat_punct("-");
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(if neg { v.wrapping_neg() } else { v })
            }
            other => self.err(format!("expected integer, found {}", Self::describe(&other))),
        }
    }

    fn new_line(&mut self, at: (usize, usize)) -> LineId {
        self.next_line += 1;
        let id = LineId(self.next_line);
        self.spans.insert(id, at);
        id
    }

    pub fn program(mut self) -> PResult<(Program, Spans)> {
        let mut program = Program::default();
        while *self.peek() != Tok::Eof {
            let at = self.here();
            if self.is_kw("void") || (self.is_kw("int") && matches!(self.peek_at(2), Tok::Punct("("))) {
                program.functions.push(self.function()?);
            } else if self.is_kw("int") && matches!(self.peek_at(2), Tok::Punct("[")) {
                self.bump();
                let name = self.ident()?;
                self.expect_punct("[")?;
                let size = match self.bump() {
                    Tok::Int(v) if v > 0 => v as usize,
                    _ => return Err(ParseError::syntax(at.0, at.1, "array size must be a positive integer")),
                };
                self.expect_punct("]")?;
                let mut init = Vec::new();
                if self.eat_punct("=") {
                    self.expect_punct("{")?;
                    if !self.is_punct("}") {
                        init.push(self.int_lit()?);
                        while self.eat_punct(",") {
                            init.push(self.int_lit()?);
                        }
                    }
                    self.expect_punct("}")?;
                }
                self.expect_punct(";")?;
                if init.len() > size {
                    return Err(ParseError::syntax(at.0, at.1, "too many initializers for array"));
                }
                init.resize(size, 0);
                let line = self.new_line(at);
                program.globals.push(Stmt::new(line, StmtKind::ArrayDecl { name, size, init }));
            } else {
                match self.declaration()? {
                    Some(s) => program.globals.push(s),
                    None => return self.err(format!("expected declaration or function, found {}", Self::describe(self.peek()))),
                }
            }
        }
        // LineIds are handed out in parse order; normalise to walk order (globals first).
        let remap = program.renumber();
        let spans = self.spans.into_iter().filter_map(|(k, v)| remap.get(&k).map(|n| (*n, v))).collect();
        Ok((program, spans))
    }

    fn function(&mut self) -> PResult<Function> {
        let ret = if self.is_kw("void") {
            self.bump();
            RetType::Void
        } else {
            self.expect_kw("int")?;
            RetType::Int
        };
        let name = self.ident()?;
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if self.is_kw("void") {
            self.bump();
        } else if !self.is_punct(")") {
            loop {
                self.expect_kw("int")?;
                params.push(self.ident()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        let body = self.block()?;
        Ok(Function { name, ret, params, body })
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_punct("{")?;
        let mut out = Vec::new();
        while !self.is_punct("}") {
            if *self.peek() == Tok::Eof {
                return self.err("unexpected end of input, expected `}`");
            }
            out.push(self.statement()?);
        }
        self.bump();
        Ok(out)
    }

    fn name_list(&mut self) -> PResult<Vec<String>> {
        let mut names = vec![self.ident()?];
        while self.eat_punct(",") {
            names.push(self.ident()?);
        }
        self.expect_punct(";")?;
        Ok(names)
    }

    /// Declarations that may appear at global or block scope.
    fn declaration(&mut self) -> PResult<Option<Stmt>> {
        let at = self.here();
        let kind = match self.peek() {
            Tok::Keyword("int") => {
                let line = self.new_line(at);
                self.bump();
                let mut ds = Vec::new();
                loop {
                    let name = self.ident()?;
                    let init = if self.eat_punct("=") { Some(self.expr()?) } else { None };
                    ds.push(Declarator { name, init });
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct(";")?;
                return Ok(Some(Stmt::new(line, StmtKind::Decl(ds))));
            }
            Tok::Keyword("pthread_t") => StmtKind::ThreadDecl as fn(Vec<String>) -> StmtKind,
            Tok::Keyword("pthread_attr_t") => StmtKind::AttrDecl,
            Tok::Keyword("pthread_condattr_t") => StmtKind::CondAttrDecl,
            Tok::Keyword("pthread_mutex_t") => StmtKind::MutexDecl,
            Tok::Keyword("pthread_cond_t") => StmtKind::CondDecl,
            _ => return Ok(None),
        };
        let line = self.new_line(at);
        self.bump();
        let names = self.name_list()?;
        Ok(Some(Stmt::new(line, kind(names))))
    }

    fn paren_args(&mut self, n: usize) -> PResult<Vec<String>> {
        self.expect_punct("(")?;
        let mut out = Vec::new();
        for i in 0..n {
            if i > 0 {
                self.expect_punct(",")?;
            }
            out.push(self.ident()?);
        }
        self.expect_punct(")")?;
        self.expect_punct(";")?;
        Ok(out)
    }

    fn statement(&mut self) -> PResult<Stmt> {
        if let Some(d) = self.declaration()? {
            return Ok(d);
        }
        let at = self.here();
        let line = self.new_line(at);
        let kind = match self.peek().clone() {
            Tok::Keyword("if") => {
                self.bump();
                self.expect_punct("(")?;
                let cond = self.expr()?;
                self.expect_punct(")")?;
                let then_body = self.block()?;
                let else_body = if self.is_kw("else") {
                    self.bump();
                    if self.is_kw("if") {
                        Some(vec![self.statement()?])
                    } else {
                        Some(self.block()?)
                    }
                } else {
                    None
                };
                StmtKind::If { cond, then_body, else_body }
            }
            Tok::Keyword("while") => {
                self.bump();
                self.expect_punct("(")?;
                let cond = self.expr()?;
                self.expect_punct(")")?;
                StmtKind::While { cond, body: self.block()? }
            }
            Tok::Keyword("for") => {
                self.bump();
                self.expect_punct("(")?;
                let var = self.ident()?;
                self.expect_punct("=")?;
                let init = self.expr()?;
                self.expect_punct(";")?;
                let cond = self.expr()?;
                self.expect_punct(";")?;
                let var2 = self.ident()?;
                if var2 != var {
                    return Err(ParseError::syntax(at.0, at.1, "for-loop step must assign the loop variable"));
                }
                self.expect_punct("=")?;
                let step = self.expr()?;
                self.expect_punct(")")?;
                StmtKind::For { var, init, cond, step, body: self.block()? }
            }
            Tok::Keyword("switch") => {
                self.bump();
                self.expect_punct("(")?;
                let scrutinee = self.expr()?;
                self.expect_punct(")")?;
                self.expect_punct("{")?;
                let mut arms: Vec<SwitchArm> = Vec::new();
                let mut default: Option<Vec<Stmt>> = None;
                loop {
                    if self.eat_punct("}") {
                        break;
                    }
                    if default.is_some() {
                        return self.err("`default` must be the last switch arm");
                    }
                    if self.is_kw("case") {
                        self.bump();
                        let label = self.int_lit()?;
                        self.expect_punct(":")?;
                        arms.push(SwitchArm { label, body: self.arm_body()? });
                    } else if self.is_kw("default") {
                        self.bump();
                        self.expect_punct(":")?;
                        default = Some(self.arm_body()?);
                    } else {
                        return self.err(format!("expected `case` or `default`, found {}", Self::describe(self.peek())));
                    }
                }
                StmtKind::Switch { scrutinee, arms, default }
            }
            Tok::Keyword("break") => {
                self.bump();
                self.expect_punct(";")?;
                StmtKind::Break
            }
            Tok::Punct("{") => StmtKind::Block(self.block()?),
            Tok::Keyword(k @ ("assert" | "assume")) => {
                self.bump();
                self.expect_punct("(")?;
                let e = self.expr()?;
                self.expect_punct(")")?;
                self.expect_punct(";")?;
                if k == "assert" {
                    StmtKind::Assert(e)
                } else {
                    StmtKind::Assume(e)
                }
            }
            Tok::Keyword("return") => {
                self.bump();
                if self.eat_punct(";") {
                    StmtKind::Return(None)
                } else {
                    let e = self.expr()?;
                    self.expect_punct(";")?;
                    StmtKind::Return(Some(e))
                }
            }
            Tok::Keyword("pthread_create") => {
                self.bump();
                let a = self.paren_args(2)?;
                StmtKind::Create { handle: a[0].clone(), func: a[1].clone() }
            }
            Tok::Keyword("pthread_join") => {
                self.bump();
                StmtKind::Join(self.paren_args(1)?.remove(0))
            }
            Tok::Keyword("pthread_exit") => {
                self.bump();
                self.paren_args(0)?;
                StmtKind::Exit
            }
            Tok::Keyword("pthread_mutex_lock") => {
                self.bump();
                StmtKind::Lock(self.paren_args(1)?.remove(0))
            }
            Tok::Keyword("pthread_mutex_unlock") => {
                self.bump();
                StmtKind::Unlock(self.paren_args(1)?.remove(0))
            }
            Tok::Keyword("pthread_cond_init") => {
                self.bump();
                StmtKind::CondInit(self.paren_args(1)?.remove(0))
            }
            Tok::Keyword("pthread_cond_wait") => {
                self.bump();
                let a = self.paren_args(2)?;
                StmtKind::CondWait { cond: a[0].clone(), mutex: a[1].clone() }
            }
            Tok::Keyword("pthread_cond_signal") => {
                self.bump();
                StmtKind::CondSignal(self.paren_args(1)?.remove(0))
            }
            Tok::Ident(target) => {
                self.bump();
                self.expect_punct("=")?;
                if let (Tok::Ident(func), Tok::Punct("(")) = (self.peek().clone(), self.peek_at(1).clone()) {
                    self.bump();
                    self.bump();
                    let mut args = Vec::new();
                    if !self.is_punct(")") {
                        args.push(self.expr()?);
                        while self.eat_punct(",") {
                            args.push(self.expr()?);
                        }
                    }
                    self.expect_punct(")")?;
                    self.expect_punct(";")?;
                    StmtKind::Call { target, func, args }
                } else {
                    let value = self.expr()?;
                    self.expect_punct(";")?;
                    match value {
                        Expr::Nondet(range) => StmtKind::Nondet { target, range },
                        value => StmtKind::Assign { target, value },
                    }
                }
            }
            other => return self.err(format!("expected statement, found {}", Self::describe(&other))),
        };
        Ok(Stmt::new(line, kind))
    }

    fn arm_body(&mut self) -> PResult<Vec<Stmt>> {
        let mut body = Vec::new();
        while !self.is_kw("case") && !self.is_kw("default") && !self.is_punct("}") {
            if *self.peek() == Tok::Eof {
                return self.err("unexpected end of input in switch");
            }
            body.push(self.statement()?);
        }
        Ok(body)
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        let cond = self.binary(1)?;
        if self.eat_punct("?") {
            let a = self.expr()?;
            self.expect_punct(":")?;
            let b = self.expr()?;
            return Ok(Expr::Cond(Box::new(cond), Box::new(a), Box::new(b)));
        }
        Ok(cond)
    }

    fn binop(&self) -> Option<BinOp> {
        let Tok::Punct(p) = self.peek() else { return None };
        Some(match *p {
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            "%" => BinOp::Rem,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "&&" => BinOp::And,
            "||" => BinOp::Or,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            if op.precedence() < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_punct("-") {
            // Fold negative literals so that printing `-3` round-trips.
            if let Tok::Int(v) = self.peek().clone() {
                self.bump();
                return Ok(Expr::Int(v.wrapping_neg()));
            }
            return Ok(Expr::Unary(UnOp::Neg, Box::new(self.unary()?)));
        }
        if self.eat_punct("!") {
            return Ok(Expr::Unary(UnOp::Not, Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Int(v))
            }
            Tok::Keyword("true") => {
                self.bump();
                Ok(Expr::Bool(true))
            }
            Tok::Keyword("false") => {
                self.bump();
                Ok(Expr::Bool(false))
            }
            Tok::Keyword("nondet") => {
                self.bump();
                self.expect_punct("(")?;
                if self.eat_punct(")") {
                    return Ok(Expr::Nondet(None));
                }
                let lo = self.int_lit()?;
                self.expect_punct(",")?;
                let hi = self.int_lit()?;
                self.expect_punct(")")?;
                Ok(Expr::Nondet(Some((lo, hi))))
            }
            Tok::Ident(name) => {
                self.bump();
                if self.is_punct("(") {
                    return self.err(format!("call to `{name}` is only allowed as the whole right-hand side of an assignment"));
                }
                if self.eat_punct("[") {
                    let idx = self.expr()?;
                    self.expect_punct("]")?;
                    return Ok(Expr::Index(name, Box::new(idx)));
                }
                Ok(Expr::Var(name))
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            other => self.err(format!("expected expression, found {}", Self::describe(&other))),
        }
    }
}
