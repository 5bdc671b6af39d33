//! The mini-C language: syntax tree, parser, semantic checks and canonical printer.
//!
//! Statements receive a [`LineId`] in source order when parsed. The printer emits
//! one statement per line so that printing and reparsing preserves the identities.

pub mod ast;
mod check;
pub mod lexer;
mod parser;
mod printer;

pub use ast::*;
pub use check::validate;
pub use printer::{pretty_print, pretty_print_numbered, print_expr, print_stmt};

use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: undeclared identifier `{name}`")]
    Undeclared { line: usize, col: usize, name: String },
    #[error("{line}:{col}: thread-create references unknown function `{name}`")]
    UnknownThread { line: usize, col: usize, name: String },
    #[error("{line}:{col}: `{name}` shadows an existing declaration")]
    Shadowing { line: usize, col: usize, name: String },
    #[error("{line}:{col}: {msg}")]
    Semantic { line: usize, col: usize, msg: String },
}

impl ParseError {
    pub(crate) fn syntax(line: usize, col: usize, msg: impl Into<String>) -> Self {
        ParseError::Syntax { line, col, msg: msg.into() }
    }
}

/// Parses and validates a program.
pub fn parse(source: &str) -> Result<Program, ParseError> {
    let tokens = lexer::tokenize(source)?;
    let (program, spans) = parser::Parser::new(tokens).program()?;
    check::check(&program, &spans)?;
    Ok(program)
}

/// Maps every statement's LineId to the statement.
pub fn line_table(program: &Program) -> BTreeMap<LineId, &Stmt> {
    let mut out = BTreeMap::new();
    program.walk(&mut |s| {
        out.insert(s.line, s);
    });
    out
}
