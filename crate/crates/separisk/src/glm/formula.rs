//! Model formula DSL for pooled logistic hazard models.
//!
//! Grammar: `formula := term ('+' term)*`, `term := factor ('*' factor)*`,
//! `factor := '1' | 'A' | 'k' | 'k^2' | 'k^3' | identifier`. `A` is the
//! treatment arm, `k` the interval index, identifiers are baseline
//! covariates. Column order follows the written order; every formula must
//! contain the plain intercept term `1`.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::GlmError;

/// Which hazard a design targets; decides the risk-set rows and outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeRole {
    EventY,
    CompetingD,
    CensorC,
}

impl fmt::Display for OutcomeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutcomeRole::EventY => write!(f, "event"),
            OutcomeRole::CompetingD => write!(f, "competing"),
            OutcomeRole::CensorC => write!(f, "censoring"),
        }
    }
}

/// One product term. Powers of `k` fold together during parsing (k*k == k^2)
/// and may not exceed 3; the intercept term has every field empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub a_pow: u8,
    pub k_pow: u8,
    pub covariates: Vec<String>,
}

impl Term {
    pub fn intercept() -> Self {
        Term {
            a_pow: 0,
            k_pow: 0,
            covariates: Vec::new(),
        }
    }

    pub fn is_intercept(&self) -> bool {
        self.a_pow == 0 && self.k_pow == 0 && self.covariates.is_empty()
    }

    fn canonical_key(&self) -> (u8, u8, Vec<String>) {
        let mut covs = self.covariates.clone();
        covs.sort();
        (self.a_pow, self.k_pow, covs)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_intercept() {
            return write!(f, "1");
        }
        let mut parts: Vec<String> = Vec::new();
        for _ in 0..self.a_pow {
            parts.push("A".into());
        }
        match self.k_pow {
            0 => {}
            1 => parts.push("k".into()),
            p => parts.push(format!("k^{}", p)),
        }
        parts.extend(self.covariates.iter().cloned());
        write!(f, "{}", parts.join("*"))
    }
}

/// Parsed design: ordered terms plus the outcome role that selects the
/// risk set when fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub role: OutcomeRole,
    pub terms: Vec<Term>,
    pub source: String,
}

impl DesignSpec {
    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn term_strings(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.to_string()).collect()
    }

    /// Covariate names referenced anywhere in the formula.
    pub fn covariate_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for t in &self.terms {
            for c in &t.covariates {
                if !names.contains(&c.as_str()) {
                    names.push(c);
                }
            }
        }
        names
    }
}

impl fmt::Display for DesignSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.terms.iter().map(|t| t.to_string()).collect();
        write!(f, "{}", parts.join(" + "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TokKind {
    Plus,
    Star,
    Caret,
    Ident,
    Number,
}

#[derive(Debug, Clone)]
struct Tok {
    kind: TokKind,
    offset: usize,
    text: String,
}

fn lex(text: &str) -> Result<Vec<Tok>, GlmError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' => {
                toks.push(Tok {
                    kind: TokKind::Plus,
                    offset: i,
                    text: "+".into(),
                });
                i += 1;
            }
            b'*' => {
                let start = i;
                while i < bytes.len() && bytes[i] == b'*' {
                    i += 1;
                }
                if i - start > 1 {
                    return Err(GlmError::ParseError {
                        offset: start,
                        message: "repeated `*` is not an operator; powers of k are written k^p"
                            .into(),
                    });
                }
                toks.push(Tok {
                    kind: TokKind::Star,
                    offset: start,
                    text: "*".into(),
                });
            }
            b'^' => {
                toks.push(Tok {
                    kind: TokKind::Caret,
                    offset: i,
                    text: "^".into(),
                });
                i += 1;
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                toks.push(Tok {
                    kind: TokKind::Number,
                    offset: start,
                    text: text[start..i].to_string(),
                });
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                toks.push(Tok {
                    kind: TokKind::Ident,
                    offset: start,
                    text: text[start..i].to_string(),
                });
            }
            _ => {
                return Err(GlmError::ParseError {
                    offset: i,
                    message: format!("unexpected character {:?}", b as char),
                })
            }
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, message: &str) -> GlmError {
        let offset = self.peek().map(|t| t.offset).unwrap_or(self.end);
        GlmError::ParseError {
            offset,
            message: message.into(),
        }
    }

    // factor := '1' | 'A' | 'k' ('^' digits)? | ident
    fn factor(&mut self) -> Result<(Factor, usize), GlmError> {
        let tok = self
            .next()
            .ok_or_else(|| self.err_here("expected a factor"))?;
        match tok.kind {
            TokKind::Number if tok.text == "1" => Ok((Factor::Intercept, tok.offset)),
            TokKind::Number => Err(GlmError::ParseError {
                offset: tok.offset,
                message: format!(
                    "unexpected number `{}`; only the intercept 1 is allowed",
                    tok.text
                ),
            }),
            TokKind::Ident if tok.text == "A" => Ok((Factor::Treatment, tok.offset)),
            TokKind::Ident if tok.text == "k" => {
                if matches!(self.peek(), Some(t) if t.kind == TokKind::Caret) {
                    self.next();
                    let exp = self
                        .next()
                        .ok_or_else(|| self.err_here("expected an exponent after ^"))?;
                    if exp.kind != TokKind::Number {
                        return Err(GlmError::ParseError {
                            offset: exp.offset,
                            message: "exponent must be a literal 1, 2 or 3".into(),
                        });
                    }
                    let p: u32 = exp.text.parse().map_err(|_| GlmError::ParseError {
                        offset: exp.offset,
                        message: "exponent out of range".into(),
                    })?;
                    if !(1..=3).contains(&p) {
                        return Err(GlmError::UnknownExponent {
                            offset: exp.offset,
                            power: p,
                        });
                    }
                    Ok((Factor::TimePow(p as u8), tok.offset))
                } else {
                    Ok((Factor::TimePow(1), tok.offset))
                }
            }
            TokKind::Ident => Ok((Factor::Covariate(tok.text), tok.offset)),
            _ => Err(GlmError::ParseError {
                offset: tok.offset,
                message: format!("expected a factor, found `{}`", tok.text),
            }),
        }
    }

    // term := factor ('*' factor)*
    fn term(&mut self) -> Result<(Term, usize), GlmError> {
        let (first, start) = self.factor()?;
        let mut factors = vec![(first, start)];
        while matches!(self.peek(), Some(t) if t.kind == TokKind::Star) {
            self.next();
            factors.push(self.factor()?);
        }
        let mut term = Term::intercept();
        for (f, off) in factors {
            match f {
                Factor::Intercept => {}
                Factor::Treatment => term.a_pow += 1,
                Factor::TimePow(p) => {
                    let total = term.k_pow as u32 + p as u32;
                    if total > 3 {
                        return Err(GlmError::UnknownExponent {
                            offset: off,
                            power: total,
                        });
                    }
                    term.k_pow = total as u8;
                }
                Factor::Covariate(name) => term.covariates.push(name),
            }
        }
        Ok((term, start))
    }
}

enum Factor {
    Intercept,
    Treatment,
    TimePow(u8),
    Covariate(String),
}

pub fn parse_formula(text: &str, role: OutcomeRole) -> Result<DesignSpec, GlmError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    if p.peek().is_none() {
        return Err(p.err_here("empty formula"));
    }
    let mut terms = Vec::new();
    let mut keys = HashSet::new();
    loop {
        let (term, start) = p.term()?;
        if !keys.insert(term.canonical_key()) {
            return Err(GlmError::ParseError {
                offset: start,
                message: format!("duplicate term `{}`", term),
            });
        }
        terms.push(term);
        match p.next() {
            None => break,
            Some(t) if t.kind == TokKind::Plus => {}
            Some(t) => {
                return Err(GlmError::ParseError {
                    offset: t.offset,
                    message: format!("expected `+` between terms, found `{}`", t.text),
                })
            }
        }
    }
    if !terms.iter().any(|t| t.is_intercept()) {
        return Err(GlmError::ParseError {
            offset: 0,
            message: "formula must include the intercept term 1".into(),
        });
    }
    Ok(DesignSpec {
        role,
        terms,
        source: text.to_string(),
    })
}
