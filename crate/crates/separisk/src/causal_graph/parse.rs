//! Line-oriented graph DSL.
//!
//! One edge per line, `src -> dst` for ordinary edges and `src !> dst` for
//! deterministic ones; `#` starts a comment; blank lines are skipped. The
//! macro line `expand K=n` generates the n-interval event-history skeleton:
//! `A_Y -> Yj` and `A_D -> Dj` for every interval, the within-interval
//! `Dj -> Yj` arrow, and the carry-forward arrows `Yj -> Y(j+1)`,
//! `Dj -> D(j+1)`, `Yj -> D(j+1)`. Extra structure (covariates, unmeasured
//! causes, censoring) is written as explicit edge lines around the macro.

use super::{Dag, GraphError};

/// Parses DSL text into a validated graph. Nodes are created on first
/// mention; empty input is a valid empty graph. Errors carry the 1-based
/// line and column of the offending token.
pub fn parse_graph(text: &str) -> Result<Dag, GraphError> {
    let mut nodes: Vec<String> = Vec::new();
    let mut edges: Vec<(String, String, bool)> = Vec::new();
    let mut seen_edges = std::collections::HashSet::new();

    let mut push_edge = |src: String,
                         dst: String,
                         det: bool,
                         line: usize,
                         column: usize|
     -> Result<(), GraphError> {
        if !seen_edges.insert((src.clone(), dst.clone())) {
            return Err(GraphError::ParseError {
                line,
                column,
                message: format!("duplicate edge {src} -> {dst}"),
            });
        }
        if src == dst {
            return Err(GraphError::ParseError {
                line,
                column,
                message: format!("edge {src} -> {dst} loops onto its own node"),
            });
        }
        for name in [&src, &dst] {
            if !nodes.iter().any(|n| n == name) {
                nodes.push(name.clone());
            }
        }
        edges.push((src, dst, det));
        Ok(())
    };

    for (line_idx, raw) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let tokens = scan(content, line_no)?;
        if tokens.is_empty() {
            continue;
        }
        match &tokens[0] {
            Token::Ident(word, _) if word == "expand" => {
                let k = parse_expand(&tokens, line_no)?;
                for j in 1..=k {
                    push_edge("A_Y".into(), format!("Y{j}"), false, line_no, 1)?;
                    push_edge("A_D".into(), format!("D{j}"), false, line_no, 1)?;
                    push_edge(format!("D{j}"), format!("Y{j}"), false, line_no, 1)?;
                }
                for j in 1..k {
                    push_edge(format!("Y{j}"), format!("Y{}", j + 1), false, line_no, 1)?;
                    push_edge(format!("D{j}"), format!("D{}", j + 1), false, line_no, 1)?;
                    push_edge(format!("Y{j}"), format!("D{}", j + 1), false, line_no, 1)?;
                }
            }
            _ => {
                let (src, dst, det, col) = parse_edge_line(&tokens, line_no)?;
                push_edge(src, dst, det, line_no, col)?;
            }
        }
    }
    Dag::new(nodes, edges)
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    /// Identifier or integer literal with its 1-based column.
    Ident(String, usize),
    Number(usize, usize),
    /// Edge operator; `true` marks the deterministic `!>` form.
    Arrow(bool, usize),
    Equals(usize),
}

impl Token {
    fn column(&self) -> usize {
        match self {
            Token::Ident(_, c) | Token::Number(_, c) | Token::Arrow(_, c) | Token::Equals(c) => *c,
        }
    }
}

fn scan(content: &str, line: usize) -> Result<Vec<Token>, GraphError> {
    let chars: Vec<char> = content.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            tokens.push(Token::Ident(chars[start..i].iter().collect(), col));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let value = text.parse().map_err(|_| GraphError::ParseError {
                line,
                column: col,
                message: format!("integer {text} is out of range"),
            })?;
            tokens.push(Token::Number(value, col));
        } else if (c == '-' || c == '!') && chars.get(i + 1) == Some(&'>') {
            tokens.push(Token::Arrow(c == '!', col));
            i += 2;
        } else if c == '=' {
            tokens.push(Token::Equals(col));
            i += 1;
        } else {
            return Err(GraphError::ParseError {
                line,
                column: col,
                message: format!("unexpected character '{c}'"),
            });
        }
    }
    Ok(tokens)
}

fn parse_edge_line(
    tokens: &[Token],
    line: usize,
) -> Result<(String, String, bool, usize), GraphError> {
    let fail = |column: usize, message: &str| GraphError::ParseError {
        line,
        column,
        message: message.to_string(),
    };
    let src = match tokens.first() {
        Some(Token::Ident(name, _)) => name.clone(),
        Some(t) => return Err(fail(t.column(), "expected a node name")),
        None => unreachable!("caller skips empty lines"),
    };
    let det = match tokens.get(1) {
        Some(Token::Arrow(det, _)) => *det,
        Some(t) => {
            return Err(fail(
                t.column(),
                "expected '->' or '!>' after the source node",
            ))
        }
        None => {
            return Err(fail(
                tokens[0].column(),
                "edge is missing '->' and a target node",
            ))
        }
    };
    let (dst, col) = match tokens.get(2) {
        Some(Token::Ident(name, c)) => (name.clone(), *c),
        Some(t) => return Err(fail(t.column(), "expected a node name after the arrow")),
        None => return Err(fail(tokens[1].column(), "edge is missing a target node")),
    };
    if let Some(t) = tokens.get(3) {
        return Err(fail(t.column(), "unexpected trailing input after the edge"));
    }
    Ok((src, dst, det, col))
}

fn parse_expand(tokens: &[Token], line: usize) -> Result<usize, GraphError> {
    let fail = |column: usize, message: &str| GraphError::ParseError {
        line,
        column,
        message: message.to_string(),
    };
    match tokens.get(1) {
        Some(Token::Ident(word, _)) if word == "K" => {}
        Some(t) => return Err(fail(t.column(), "expected K=<integer> after expand")),
        None => {
            return Err(fail(
                tokens[0].column(),
                "expected K=<integer> after expand",
            ))
        }
    }
    match tokens.get(2) {
        Some(Token::Equals(_)) => {}
        Some(t) => return Err(fail(t.column(), "expected '=' after expand K")),
        None => return Err(fail(tokens[1].column(), "expected '=' after expand K")),
    }
    let k = match tokens.get(3) {
        Some(Token::Number(k, _)) => *k,
        Some(t) => {
            return Err(fail(
                t.column(),
                "expected an integer horizon after expand K=",
            ))
        }
        None => {
            return Err(fail(
                tokens[2].column(),
                "expected an integer horizon after expand K=",
            ))
        }
    };
    if let Some(t) = tokens.get(4) {
        return Err(fail(t.column(), "unexpected trailing input after expand"));
    }
    if k == 0 {
        return Err(fail(
            tokens[3].column(),
            "expand horizon must be at least 1",
        ));
    }
    Ok(k)
}
