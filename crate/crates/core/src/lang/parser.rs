//! Hand-rolled lexer and recursive-descent parser for the KB file format.

use std::fmt;

use thiserror::Error;

use crate::model::{
    AnnotatedDisjunction, Atom, BodyLiteral, BuiltinOp, Clause, KnowledgeBase, Term,
};

#[derive(Debug, Error, PartialEq)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, col: usize, message: impl Into<String>) -> Self {
        ParseError {
            line,
            col,
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    LowerIdent(String),
    UpperIdent(String),
    Int(i64),
    Float(f64),
    Str(String),
    ColonDash,
    ColonColon,
    Comma,
    Semi,
    Dot,
    LParen,
    RParen,
    Ge,
    Le,
    Gt,
    Lt,
    Eq,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::LowerIdent(s) | Tok::UpperIdent(s) => write!(f, "`{s}`"),
            Tok::Int(i) => write!(f, "`{i}`"),
            Tok::Float(x) => write!(f, "`{x}`"),
            Tok::Str(s) => write!(f, "\"{s}\""),
            Tok::ColonDash => write!(f, "`:-`"),
            Tok::ColonColon => write!(f, "`::`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Dot => write!(f, "`.`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::Ge => write!(f, "`>=`"),
            Tok::Le => write!(f, "`=<`"),
            Tok::Gt => write!(f, "`>`"),
            Tok::Lt => write!(f, "`<`"),
            Tok::Eq => write!(f, "`=`"),
        }
    }
}

struct Lexer<'a> {
    src: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

type Spanned = (Tok, usize, usize);

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            src: text.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.src.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.line, self.col, msg)
    }

    fn tokenize(mut self) -> Result<Vec<Spanned>, ParseError> {
        let mut toks = Vec::new();
        while let Some(&c) = self.src.peek() {
            let (line, col) = (self.line, self.col);
            match c {
                ' ' | '\t' | '\r' | '\n' => {
                    self.bump();
                }
                '%' => {
                    while let Some(&c) = self.src.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                '"' => {
                    self.bump();
                    let mut s = String::new();
                    loop {
                        match self.src.peek() {
                            Some('"') => {
                                self.bump();
                                break;
                            }
                            Some('\n') | None => {
                                return Err(self.err("unterminated string literal"))
                            }
                            Some(_) => s.push(self.bump().unwrap()),
                        }
                    }
                    toks.push((Tok::Str(s), line, col));
                }
                '(' => {
                    self.bump();
                    toks.push((Tok::LParen, line, col));
                }
                ')' => {
                    self.bump();
                    toks.push((Tok::RParen, line, col));
                }
                ',' => {
                    self.bump();
                    toks.push((Tok::Comma, line, col));
                }
                ';' => {
                    self.bump();
                    toks.push((Tok::Semi, line, col));
                }
                '.' => {
                    self.bump();
                    toks.push((Tok::Dot, line, col));
                }
                ':' => {
                    self.bump();
                    match self.src.peek() {
                        Some(':') => {
                            self.bump();
                            toks.push((Tok::ColonColon, line, col));
                        }
                        Some('-') => {
                            self.bump();
                            toks.push((Tok::ColonDash, line, col));
                        }
                        _ => return Err(self.err("expected `::` or `:-`")),
                    }
                }
                '>' => {
                    self.bump();
                    if self.src.peek() == Some(&'=') {
                        self.bump();
                        toks.push((Tok::Ge, line, col));
                    } else {
                        toks.push((Tok::Gt, line, col));
                    }
                }
                '<' => {
                    self.bump();
                    if self.src.peek() == Some(&'=') {
                        self.bump();
                        toks.push((Tok::Le, line, col));
                    } else {
                        toks.push((Tok::Lt, line, col));
                    }
                }
                '=' => {
                    self.bump();
                    if self.src.peek() == Some(&'<') {
                        self.bump();
                        toks.push((Tok::Le, line, col));
                    } else {
                        toks.push((Tok::Eq, line, col));
                    }
                }
                '-' => {
                    self.bump();
                    match self.src.peek() {
                        Some(d) if d.is_ascii_digit() => {
                            let tok = self.lex_number(true, line, col)?;
                            toks.push(tok);
                        }
                        _ => return Err(self.err("stray `-`")),
                    }
                }
                d if d.is_ascii_digit() => {
                    let tok = self.lex_number(false, line, col)?;
                    toks.push(tok);
                }
                a if a.is_ascii_lowercase() => {
                    toks.push((Tok::LowerIdent(self.lex_ident()), line, col));
                }
                a if a.is_ascii_uppercase() || a == '_' => {
                    toks.push((Tok::UpperIdent(self.lex_ident()), line, col));
                }
                other => return Err(self.err(format!("unexpected character `{other}`"))),
            }
        }
        Ok(toks)
    }

    fn lex_ident(&mut self) -> String {
        let mut s = String::new();
        while let Some(&c) = self.src.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                s.push(self.bump().unwrap());
            } else {
                break;
            }
        }
        s
    }

    fn lex_number(&mut self, negative: bool, line: usize, col: usize) -> Result<Spanned, ParseError> {
        let mut digits = String::new();
        if negative {
            digits.push('-');
        }
        while let Some(&c) = self.src.peek() {
            if c.is_ascii_digit() {
                digits.push(self.bump().unwrap());
            } else {
                break;
            }
        }
        // a dot is part of the number only when a digit follows; otherwise it
        // terminates the statement
        let mut is_float = false;
        if self.src.peek() == Some(&'.') {
            let mut lookahead = self.src.clone();
            lookahead.next();
            if lookahead.peek().is_some_and(|c| c.is_ascii_digit()) {
                is_float = true;
                digits.push(self.bump().unwrap());
                while let Some(&c) = self.src.peek() {
                    if c.is_ascii_digit() {
                        digits.push(self.bump().unwrap());
                    } else {
                        break;
                    }
                }
            }
        }
        if is_float {
            let v: f64 = digits
                .parse()
                .map_err(|_| ParseError::new(line, col, "malformed number"))?;
            Ok((Tok::Float(v), line, col))
        } else {
            let v: i64 = digits
                .parse()
                .map_err(|_| ParseError::new(line, col, "integer out of range"))?;
            Ok((Tok::Int(v), line, col))
        }
    }
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _, _)| t)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|(_, l, c)| (*l, *c))
            .unwrap_or((1, 1))
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        let (line, col) = self.here();
        ParseError::new(line, col, msg)
    }

    fn next(&mut self, what: &str) -> Result<Tok, ParseError> {
        let tok = self
            .toks
            .get(self.pos)
            .map(|(t, _, _)| t.clone())
            .ok_or_else(|| self.err(format!("expected {what}, found end of input")))?;
        self.pos += 1;
        Ok(tok)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        let found = self.next(what)?;
        if found == tok {
            Ok(())
        } else {
            self.pos -= 1;
            Err(self.err(format!("expected {what}, found {found}")))
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn parse_probability(&mut self) -> Result<f64, ParseError> {
        let (line, col) = self.here();
        let p = match self.next("a probability")? {
            Tok::Float(v) => v,
            Tok::Int(v) => v as f64,
            other => {
                self.pos -= 1;
                return Err(self.err(format!("expected a probability, found {other}")));
            }
        };
        if !(0.0..=1.0).contains(&p) {
            return Err(ParseError::new(
                line,
                col,
                format!("probability {p} is outside [0, 1]"),
            ));
        }
        Ok(p)
    }

    fn parse_term(&mut self) -> Result<Term, ParseError> {
        match self.next("a term")? {
            Tok::LowerIdent(s) => Ok(Term::sym(s)),
            Tok::UpperIdent(s) => Ok(Term::var(s)),
            Tok::Int(i) => Ok(Term::int(i)),
            Tok::Str(s) => Ok(Term::str(s)),
            other => {
                self.pos -= 1;
                Err(self.err(format!("expected a term, found {other}")))
            }
        }
    }

    fn parse_atom(&mut self) -> Result<Atom, ParseError> {
        let name = match self.next("a predicate")? {
            Tok::LowerIdent(s) => s,
            other => {
                self.pos -= 1;
                return Err(self.err(format!("expected a predicate, found {other}")));
            }
        };
        let mut args = Vec::new();
        if self.eat(&Tok::LParen) {
            loop {
                args.push(self.parse_term()?);
                if self.eat(&Tok::Comma) {
                    continue;
                }
                self.expect(Tok::RParen, "`)`")?;
                break;
            }
        }
        Ok(Atom::new(name, args))
    }

    fn comparison_op(&mut self) -> Option<BuiltinOp> {
        let op = match self.peek()? {
            Tok::Ge => BuiltinOp::Ge,
            Tok::Le => BuiltinOp::Le,
            Tok::Gt => BuiltinOp::Gt,
            Tok::Lt => BuiltinOp::Lt,
            Tok::Eq => BuiltinOp::Eq,
            _ => return None,
        };
        self.pos += 1;
        Some(op)
    }

    fn parse_body_literal(&mut self) -> Result<BodyLiteral, ParseError> {
        // A literal is either `term <cmp> term`, a builtin call, or an atom.
        match self.peek() {
            Some(Tok::UpperIdent(_)) | Some(Tok::Int(_)) | Some(Tok::Str(_)) => {
                let lhs = self.parse_term()?;
                let op = self
                    .comparison_op()
                    .ok_or_else(|| self.err("expected a comparison operator"))?;
                let rhs = self.parse_term()?;
                Ok(BodyLiteral::Builtin {
                    op,
                    args: vec![lhs, rhs],
                })
            }
            _ => {
                let (line, col) = self.here();
                let atom = self.parse_atom()?;
                if let Some(op) = self.comparison_op() {
                    if !atom.args.is_empty() {
                        self.pos -= 1;
                        return Err(self.err("comparison operands must be plain terms"));
                    }
                    let rhs = self.parse_term()?;
                    return Ok(BodyLiteral::Builtin {
                        op,
                        args: vec![Term::sym(atom.predicate), rhs],
                    });
                }
                match atom.predicate.as_str() {
                    "endswith" => {
                        if atom.args.len() != 2 {
                            return Err(ParseError::new(
                                line,
                                col,
                                format!("endswith expects 2 arguments, found {}", atom.args.len()),
                            ));
                        }
                        Ok(BodyLiteral::Builtin {
                            op: BuiltinOp::EndsWith,
                            args: atom.args,
                        })
                    }
                    "charAt" => {
                        if atom.args.len() != 3 {
                            return Err(ParseError::new(
                                line,
                                col,
                                format!("charAt expects 3 arguments, found {}", atom.args.len()),
                            ));
                        }
                        Ok(BodyLiteral::Builtin {
                            op: BuiltinOp::CharAt,
                            args: atom.args,
                        })
                    }
                    _ => Ok(BodyLiteral::Atom(atom)),
                }
            }
        }
    }

    fn parse_body(&mut self) -> Result<Vec<BodyLiteral>, ParseError> {
        let mut body = vec![self.parse_body_literal()?];
        while self.eat(&Tok::Comma) {
            body.push(self.parse_body_literal()?);
        }
        Ok(body)
    }

    fn parse_statement(&mut self, kb: &mut KnowledgeBase) -> Result<(), ParseError> {
        let (line, col) = self.here();
        let labelled = matches!(self.peek(), Some(Tok::Float(_)) | Some(Tok::Int(_)));
        let prob = if labelled {
            let p = self.parse_probability()?;
            self.expect(Tok::ColonColon, "`::`")?;
            p
        } else {
            1.0
        };
        let head = self.parse_atom()?;
        if self.eat(&Tok::Semi) {
            // annotated disjunction
            let mut choices = vec![(prob, head)];
            loop {
                let p = self.parse_probability()?;
                self.expect(Tok::ColonColon, "`::`")?;
                choices.push((p, self.parse_atom()?));
                if !self.eat(&Tok::Semi) {
                    break;
                }
            }
            self.expect(Tok::Dot, "`.`")?;
            let ad = AnnotatedDisjunction::new(choices)
                .map_err(|e| ParseError::new(line, col, e.to_string()))?;
            kb.insert_disjunction(ad);
            return Ok(());
        }
        let body = if self.eat(&Tok::ColonDash) {
            self.parse_body()?
        } else {
            Vec::new()
        };
        self.expect(Tok::Dot, "`.`")?;
        let clause =
            Clause::new(prob, head, body).map_err(|e| ParseError::new(line, col, e.to_string()))?;
        kb.insert_clause(clause);
        Ok(())
    }
}

/// Parses a program into a knowledge base; duplicate statements collapse
/// under set semantics.
pub fn parse_program(text: &str) -> Result<KnowledgeBase, ParseError> {
    let toks = Lexer::new(text).tokenize()?;
    let mut parser = Parser { toks, pos: 0 };
    let mut kb = KnowledgeBase::new();
    while parser.peek().is_some() {
        parser.parse_statement(&mut kb)?;
    }
    Ok(kb)
}

/// Parses a single atom, e.g. a query given on a command line.
pub fn parse_atom(text: &str) -> Result<Atom, ParseError> {
    let toks = Lexer::new(text).tokenize()?;
    let mut parser = Parser { toks, pos: 0 };
    let atom = parser.parse_atom()?;
    if parser.peek().is_some() {
        return Err(parser.err("trailing input after atom"));
    }
    Ok(atom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Constant;

    #[test]
    fn parses_example_listing() {
        let kb = parse_program("0.2::a.\n0.3::b.\n0.5::a :- b.").unwrap();
        assert_eq!(kb.clauses().count(), 3);
        let rule = kb.clauses().find(|c| !c.is_fact()).unwrap();
        assert_eq!(rule.prob(), 0.5);
        assert_eq!(rule.head(), &Atom::prop("a"));
    }

    #[test]
    fn unlabelled_clause_defaults_to_one() {
        let kb = parse_program("a.").unwrap();
        let c = kb.clauses().next().unwrap();
        assert_eq!(c.prob(), 1.0);
        assert!(c.is_fact());
    }

    #[test]
    fn parses_annotated_disjunction() {
        let text = "0.25::word(one,\"APPLE\"); 0.25::word(one,\"PEACH\"); \
                    0.25::word(one,\"MANGO\"); 0.25::word(one,\"MELON\").";
        let kb = parse_program(text).unwrap();
        assert_eq!(kb.disjunctions().count(), 1);
        let ad = kb.disjunctions().next().unwrap();
        assert_eq!(ad.len(), 4);
        let first = ad.heads().next().unwrap();
        assert_eq!(
            first.args[1],
            Term::Constant(Constant::Str("APPLE".into()))
        );
    }

    #[test]
    fn parses_builtins() {
        let kb = parse_program(
            "0.9::pass_score(70).\n0.8::mark(tom,75).\n\
             1.0::pass(X) :- mark(X,M), pass_score(S), M >= S.",
        )
        .unwrap();
        let rule = kb.clauses().find(|c| !c.is_fact()).unwrap();
        assert_eq!(rule.body().len(), 3);
        assert!(matches!(
            rule.body()[2],
            BodyLiteral::Builtin {
                op: BuiltinOp::Ge,
                ..
            }
        ));
        let kb = parse_program("word(one,\"APPLE\") :- word(three,X), endswith(X,\"E\").").unwrap();
        let rule = kb.clauses().next().unwrap();
        assert!(matches!(
            rule.body()[1],
            BodyLiteral::Builtin {
                op: BuiltinOp::EndsWith,
                ..
            }
        ));
    }

    #[test]
    fn comments_are_ignored()  {
        let kb = parse_program("% a comment\n0.3::b. % trailing\n").unwrap();
        assert_eq!(kb.len(), 1);
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_program("0.3::b.\n0.5::").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("expected"));
    }

    #[test]
    fn probability_out_of_range_is_rejected() {
        let err = parse_program("1.5::a.").unwrap_err();
        assert!(err.message.contains("outside"));
    }

    #[test]
    fn disjunction_overflow_is_rejected() {
        let err = parse_program("0.7::a; 0.7::b.").unwrap_err();
        assert!(err.message.contains("exceeds 1"));
    }

    #[test]
    fn duplicate_statements_collapse() {
        let kb = parse_program("0.3::b.\n0.3::b.").unwrap();
        assert_eq!(kb.len(), 1);
    }

    #[test]
    fn charat_arity_is_checked() {
        let err = parse_program("a :- charAt(X,\"P\").").unwrap_err();
        assert!(err.message.contains("charAt expects 3"));
    }
}
