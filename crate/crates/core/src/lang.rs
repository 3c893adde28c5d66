//! Textual rule language.
//!
//! ```text
//! rule    = or ;
//! or      = and { "OR" and } ;
//! and     = unary { "AND" unary } ;
//! unary   = "NOT" unary | primary ;
//! primary = "[" or "]" | "(" or ")" | feature ;
//! feature = ident "." ident "." ident "(" string ")" ;
//! string  = "'" { char | "\" char } "'" | '"' { char | "\" char } '"' ;
//! ```
//!
//! Keywords are case-insensitive. A rule file holds `tag: <label>` on its
//! first line and the expression after it.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::rule::{Feature, Function, Operator, RuleError, RuleTree, Tag};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseError {
    pub message: String,
    /// Byte offset into the input.
    pub offset: usize,
    pub line: usize,
    pub column: usize,
    pub expected: Vec<String>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected {})", self.expected.join(", "))?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LangError {
    #[error("syntax error at {0}")]
    Syntax(#[from] ParseError),
    #[error("disjunct {index} has no positive feature")]
    AllNegative { index: usize },
    #[error("disjunct {index} has {len} features, more than the depth limit {max}")]
    TooDeep { index: usize, len: usize, max: usize },
    #[error("expression expands to more than {max} disjuncts")]
    TooManyDisjuncts { max: usize },
    #[error("expression is unsatisfiable")]
    Unsatisfiable,
    #[error(transparent)]
    Rule(#[from] RuleError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op", content = "args")]
pub enum RuleExpr {
    Atom(Feature),
    And(Vec<RuleExpr>),
    Or(Vec<RuleExpr>),
    Not(Box<RuleExpr>),
}

impl RuleExpr {
    pub fn eval(&self, truth: &mut impl FnMut(&Feature) -> bool) -> bool {
        match self {
            RuleExpr::Atom(f) => truth(f) != f.negated,
            RuleExpr::And(xs) => xs.iter().all(|x| x.eval(truth)),
            RuleExpr::Or(xs) => xs.iter().any(|x| x.eval(truth)),
            RuleExpr::Not(x) => !x.eval(truth),
        }
    }

    /// Negation pushed down to atoms (toggling their `negated` flag).
    pub fn nnf(&self) -> RuleExpr {
        self.nnf_with(false)
    }

    fn nnf_with(&self, neg: bool) -> RuleExpr {
        match self {
            RuleExpr::Atom(f) => RuleExpr::Atom(if neg { f.clone().negate() } else { f.clone() }),
            RuleExpr::Not(x) => x.nnf_with(!neg),
            RuleExpr::And(xs) => {
                let ys = xs.iter().map(|x| x.nnf_with(neg)).collect();
                if neg {
                    RuleExpr::Or(ys)
                } else {
                    RuleExpr::And(ys)
                }
            }
            RuleExpr::Or(xs) => {
                let ys = xs.iter().map(|x| x.nnf_with(neg)).collect();
                if neg {
                    RuleExpr::And(ys)
                } else {
                    RuleExpr::Or(ys)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Dot,
    LParen,
    RParen,
    LBrack,
    RBrack,
    And,
    Or,
    Not,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Str(_) => "string".into(),
            Tok::Dot => "`.`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrack => "`[`".into(),
            Tok::RBrack => "`]`".into(),
            Tok::And => "AND".into(),
            Tok::Or => "OR".into(),
            Tok::Not => "NOT".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    offset: usize,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

fn position(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, col)
}

fn error(src: &str, offset: usize, message: impl Into<String>, expected: &[&str]) -> ParseError {
    let (line, column) = position(src, offset);
    ParseError {
        message: message.into(),
        offset: offset.min(src.len()),
        line,
        column,
        expected: expected.iter().map(|s| s.to_string()).collect(),
    }
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str, start: usize) -> Result<Vec<Spanned>, ParseError> {
        let mut lx = Lexer { src, pos: start };
        let mut out = Vec::new();
        loop {
            let t = lx.next()?;
            let eof = t.tok == Tok::Eof;
            out.push(t);
            if eof {
                return Ok(out);
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn next(&mut self) -> Result<Spanned, ParseError> {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        let offset = self.pos;
        let Some(c) = self.peek() else {
            return Ok(Spanned { tok: Tok::Eof, offset });
        };
        let single = match c {
            '.' => Some(Tok::Dot),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBrack),
            ']' => Some(Tok::RBrack),
            _ => None,
        };
        if let Some(tok) = single {
            self.pos += 1;
            return Ok(Spanned { tok, offset });
        }
        if c == '\'' || c == '"' {
            self.pos += 1;
            let mut s = String::new();
            loop {
                match self.peek() {
                    None => return Err(error(self.src, offset, "unterminated string", &[&c.to_string()])),
                    Some('\\') => {
                        self.pos += 1;
                        let Some(e) = self.peek() else {
                            return Err(error(self.src, self.pos, "dangling escape", &["character"]));
                        };
                        s.push(e);
                        self.pos += e.len_utf8();
                    }
                    Some(q) if q == c => {
                        self.pos += 1;
                        break;
                    }
                    Some(x) => {
                        s.push(x);
                        self.pos += x.len_utf8();
                    }
                }
            }
            return Ok(Spanned { tok: Tok::Str(s), offset });
        }
        if c.is_alphanumeric() || c == '_' {
            let end = self.src[self.pos..]
                .char_indices()
                .find(|(_, ch)| !(ch.is_alphanumeric() || *ch == '_'))
                .map_or(self.src.len(), |(i, _)| self.pos + i);
            let word = &self.src[self.pos..end];
            self.pos = end;
            let tok = match word.to_ascii_uppercase().as_str() {
                "AND" => Tok::And,
                "OR" => Tok::Or,
                "NOT" => Tok::Not,
                _ => Tok::Ident(word.to_string()),
            };
            return Ok(Spanned { tok, offset });
        }
        Err(error(self.src, offset, format!("unexpected character `{c}`"), &[]))
    }
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Spanned>,
    i: usize,
}

const PRIMARY: &[&str] = &["feature", "`[`", "`(`", "NOT"];

impl<'a> Parser<'a> {
    fn peek(&self) -> &Spanned {
        &self.toks[self.i]
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.i].clone();
        if t.tok != Tok::Eof {
            self.i += 1;
        }
        t
    }

    fn fail<T>(&self, message: impl Into<String>, expected: &[&str]) -> Result<T, ParseError> {
        Err(error(self.src, self.peek().offset, message, expected))
    }

    fn unexpected<T>(&self, expected: &[&str]) -> Result<T, ParseError> {
        self.fail(format!("unexpected {}", self.peek().tok.describe()), expected)
    }

    fn or(&mut self) -> Result<RuleExpr, ParseError> {
        let mut xs = vec![self.and()?];
        while self.peek().tok == Tok::Or {
            self.bump();
            xs.push(self.and()?);
        }
        Ok(if xs.len() == 1 { xs.pop().unwrap() } else { RuleExpr::Or(xs) })
    }

    fn and(&mut self) -> Result<RuleExpr, ParseError> {
        let mut xs = vec![self.unary()?];
        while self.peek().tok == Tok::And {
            self.bump();
            xs.push(self.unary()?);
        }
        Ok(if xs.len() == 1 { xs.pop().unwrap() } else { RuleExpr::And(xs) })
    }

    fn unary(&mut self) -> Result<RuleExpr, ParseError> {
        if self.peek().tok == Tok::Not {
            self.bump();
            return Ok(RuleExpr::Not(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<RuleExpr, ParseError> {
        let close = match self.peek().tok {
            Tok::LBrack => Tok::RBrack,
            Tok::LParen => Tok::RParen,
            Tok::Ident(_) => return self.feature().map(RuleExpr::Atom),
            _ => return self.unexpected(PRIMARY),
        };
        self.bump();
        let inner = self.or()?;
        if self.peek().tok != close {
            let want = close.describe();
            return self.unexpected(&[want.as_str(), "AND", "OR"]);
        }
        self.bump();
        Ok(inner)
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize), ParseError> {
        match self.peek().tok.clone() {
            Tok::Ident(s) => {
                let off = self.bump().offset;
                Ok((s, off))
            }
            _ => self.unexpected(&[what]),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if self.peek().tok == tok {
            self.bump();
            Ok(())
        } else {
            let want = tok.describe();
            self.unexpected(&[want.as_str()])
        }
    }

    fn feature(&mut self) -> Result<Feature, ParseError> {
        let (dataset, _) = self.ident("dataset")?;
        self.expect(Tok::Dot)?;
        let (func, func_off) = self.ident("function")?;
        self.expect(Tok::Dot)?;
        let (op, op_off) = self.ident("operator")?;
        self.expect(Tok::LParen)?;
        let arg_off = self.peek().offset;
        let arg = match self.peek().tok.clone() {
            Tok::Str(s) => {
                self.bump();
                s
            }
            _ => return self.unexpected(&["string"]),
        };
        self.expect(Tok::RParen)?;
        let (function, operator) = resolve(&func, &op).map_err(|which| match which {
            Unknown::Function => error(self.src, func_off, format!("unknown function `{func}`"), FUNCTIONS),
            Unknown::Operator(allowed) => {
                error(self.src, op_off, format!("unknown operator `{op}` for function `{func}`"), allowed)
            }
        })?;
        Feature::new(dataset, function, operator, arg).map_err(|e| error(self.src, arg_off, e.to_string(), &[]))
    }
}

const FUNCTIONS: &[&str] =
    &["Keyword", "Hashtag", "Topic", "Category", "Entity", "entity_person", "entity_org", "entity_location"];

enum Unknown {
    Function,
    Operator(&'static [&'static str]),
}

fn resolve(func: &str, op: &str) -> Result<(Function, Operator), Unknown> {
    let f = func.to_ascii_lowercase();
    let o = op.to_ascii_lowercase();
    const TEXT_OPS: &[&str] = &["Contains", "Exact"];
    const GROUP_OPS: &[&str] = &["InGroup"];
    const ENTITY_OPS: &[&str] = &["Person", "Organization", "Location"];
    let text = |function| match o.as_str() {
        "contains" => Ok((function, Operator::Contains)),
        "exact" | "equals" => Ok((function, Operator::Exact)),
        _ => Err(Unknown::Operator(TEXT_OPS)),
    };
    let group = |function| match o.as_str() {
        "ingroup" | "in_group" | "contains" => Ok((function, Operator::InGroup)),
        _ => Err(Unknown::Operator(GROUP_OPS)),
    };
    match f.as_str() {
        "keyword" => text(Function::Keyword),
        "hashtag" => text(Function::Hashtag),
        "topic" => group(Function::Topic),
        "category" => group(Function::Category),
        "entity_person" | "person" => group(Function::EntityPerson),
        "entity_org" | "organization" | "organisation" => group(Function::EntityOrg),
        "entity_location" | "location" => group(Function::EntityLocation),
        "entity" => match o.as_str() {
            "person" => Ok((Function::EntityPerson, Operator::InGroup)),
            "organization" | "organisation" | "org" => Ok((Function::EntityOrg, Operator::InGroup)),
            "location" => Ok((Function::EntityLocation, Operator::InGroup)),
            _ => Err(Unknown::Operator(ENTITY_OPS)),
        },
        _ => Err(Unknown::Function),
    }
}

pub fn parse_rule(src: &str) -> Result<RuleExpr, ParseError> {
    parse_from(src, 0)
}

fn parse_from(src: &str, start: usize) -> Result<RuleExpr, ParseError> {
    let toks = Lexer::tokens(src, start)?;
    let mut p = Parser { src, toks, i: 0 };
    if p.peek().tok == Tok::Eof {
        return p.fail("empty rule", PRIMARY);
    }
    let e = p.or()?;
    if p.peek().tok != Tok::Eof {
        return p.unexpected(&["AND", "OR", "end of input"]);
    }
    Ok(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnfOptions {
    pub max_depth: usize,
    pub max_disjuncts: usize,
}

impl Default for DnfOptions {
    fn default() -> Self {
        Self { max_depth: 8, max_disjuncts: 4096 }
    }
}

/// Disjunctive normal form as literal sequences, in source order.
pub fn dnf_terms(expr: &RuleExpr, max_disjuncts: usize) -> Result<Vec<Vec<Feature>>, LangError> {
    fn go(e: &RuleExpr, max: usize) -> Result<Vec<Vec<Feature>>, LangError> {
        match e {
            RuleExpr::Atom(f) => Ok(vec![vec![f.clone()]]),
            RuleExpr::Not(_) => unreachable!("input is in negation normal form"),
            RuleExpr::Or(xs) => {
                let mut out = Vec::new();
                for x in xs {
                    out.extend(go(x, max)?);
                    if out.len() > max {
                        return Err(LangError::TooManyDisjuncts { max });
                    }
                }
                Ok(out)
            }
            RuleExpr::And(xs) => {
                let mut acc: Vec<Vec<Feature>> = vec![Vec::new()];
                for x in xs {
                    let rhs = go(x, max)?;
                    if acc.len().saturating_mul(rhs.len()) > max {
                        return Err(LangError::TooManyDisjuncts { max });
                    }
                    acc = acc
                        .iter()
                        .flat_map(|l| {
                            rhs.iter().map(move |r| {
                                let mut c = l.clone();
                                c.extend(r.iter().cloned());
                                c
                            })
                        })
                        .collect();
                }
                Ok(acc)
            }
        }
    }
    go(&expr.nnf(), max_disjuncts)
}

/// Normalizes `expr` into a rule tree: one path per surviving disjunct,
/// with common prefixes shared.
pub fn to_dnf(
    expr: &RuleExpr,
    rule_id: impl Into<String>,
    tag: Tag,
    cap: usize,
    opts: DnfOptions,
) -> Result<RuleTree, LangError> {
    let mut terms: Vec<Vec<Feature>> = Vec::new();
    for raw in dnf_terms(expr, opts.max_disjuncts)? {
        let mut conj: Vec<Feature> = Vec::with_capacity(raw.len());
        let mut contradictory = false;
        for f in raw {
            if conj.contains(&f) {
                continue;
            }
            if conj.iter().any(|g| g.positive() == f.positive()) {
                contradictory = true;
                break;
            }
            conj.push(f);
        }
        if contradictory {
            continue;
        }
        let same = |t: &Vec<Feature>| t.len() == conj.len() && conj.iter().all(|f| t.contains(f));
        if !terms.iter().any(same) {
            terms.push(conj);
        }
    }
    if terms.is_empty() {
        return Err(LangError::Unsatisfiable);
    }
    // A ∨ (A ∧ X) = A. Only prefix extensions need dropping, since a path
    // cannot end at an inner node of the tree.
    let kept: Vec<Vec<Feature>> =
        terms.iter().filter(|t| !terms.iter().any(|s| s.len() < t.len() && t.starts_with(s))).cloned().collect();
    for (index, t) in kept.iter().enumerate() {
        if t.iter().all(|f| f.negated) {
            return Err(LangError::AllNegative { index });
        }
        if t.len() > opts.max_depth {
            return Err(LangError::TooDeep { index, len: t.len(), max: opts.max_depth });
        }
    }
    Ok(RuleTree::from_paths(rule_id, tag, cap, &kept)?)
}

/// Fully bracketed DNF, paths in depth-first order.
pub fn render(rule: &RuleTree) -> String {
    rule.paths().iter().map(|p| format!("[{p}]")).collect::<Vec<_>>().join(" OR ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleFile {
    pub tag: Tag,
    pub expr: RuleExpr,
}

pub fn parse_rule_file(src: &str) -> Result<RuleFile, LangError> {
    let first_end = src.find('\n').unwrap_or(src.len());
    let first = &src[..first_end];
    let trimmed = first.trim_start();
    let lead = first.len() - trimmed.len();
    let Some(label) = trimmed.strip_prefix("tag:") else {
        return Err(error(src, lead, "rule file must start with `tag: <label>`", &["tag:"]).into());
    };
    let tag = Tag::new(label.trim()).map_err(|_| error(src, lead + 4, "empty tag label", &["label"]))?;
    let expr = parse_from(src, first_end)?;
    Ok(RuleFile { tag, expr })
}

pub fn render_rule_file(rule: &RuleTree) -> String {
    format!("tag: {}\n{}\n", rule.tag, render(rule))
}
