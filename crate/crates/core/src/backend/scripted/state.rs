//! The synthetic problem domain: one-variable linear equations and
//! inequalities, and counting problems (how many relations exist between two
//! finite sets, i.e. 2^(m*n)).
//!
//! States render to canonical text and parse back, because a trajectory's
//! steps carry only their rendered intermediate results; the scripted
//! backend re-derives the working state from the last rendered result.

use crate::numeric::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelOp {
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
}

impl RelOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            RelOp::Eq => "=",
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
        }
    }

    pub fn flipped(&self) -> RelOp {
        match self {
            RelOp::Eq => RelOp::Eq,
            RelOp::Lt => RelOp::Gt,
            RelOp::Le => RelOp::Ge,
            RelOp::Gt => RelOp::Lt,
            RelOp::Ge => RelOp::Le,
        }
    }

    pub fn is_inequality(&self) -> bool {
        *self != RelOp::Eq
    }

    fn parse(text: &str) -> Option<(RelOp, usize, usize)> {
        // Two-character symbols first so "<=" is not read as "<".
        const SYMBOLS: [(&str, RelOp); 5] = [
            ("<=", RelOp::Le),
            (">=", RelOp::Ge),
            ("<", RelOp::Lt),
            (">", RelOp::Gt),
            ("=", RelOp::Eq),
        ];
        for (symbol, op) in SYMBOLS {
            if let Some(pos) = text.find(symbol) {
                return Some((op, pos, pos + symbol.len()));
            }
        }
        None
    }
}

/// A working state in the synthetic domain.
#[derive(Debug, Clone, PartialEq)]
pub enum MathState {
    /// coeff * x + constant  op  rhs
    Relation {
        coeff: i64,
        constant: Rational,
        op: RelOp,
        rhs: Rational,
    },
    /// x  op  value
    Solved { op: RelOp, value: Rational },
    /// Two set sizes whose relation count is wanted.
    PairSizes { m: i64, n: i64 },
    /// The number of cells in the relation table; the answer is 2^count.
    PairCount { count: i64 },
    /// A final count answer.
    Count { value: i64 },
    /// Unrecognized text; no rule applies and rollouts from here diverge.
    Opaque(String),
}

impl MathState {
    /// Normalizing constructor: `1x + 0 op rhs` is already solved.
    pub fn relation(coeff: i64, constant: Rational, op: RelOp, rhs: Rational) -> MathState {
        if coeff == 1 && constant.is_zero() {
            MathState::Solved { op, value: rhs }
        } else {
            MathState::Relation {
                coeff,
                constant,
                op,
                rhs,
            }
        }
    }

    /// Canonical text form, used as the step's intermediate result.
    pub fn render(&self) -> String {
        match self {
            MathState::Relation {
                coeff,
                constant,
                op,
                rhs,
            } => {
                let head = match coeff {
                    1 => "x".to_string(),
                    -1 => "-x".to_string(),
                    c => format!("{c}x"),
                };
                let middle = if constant.is_zero() {
                    String::new()
                } else if constant.is_negative() {
                    format!(" - {}", constant.abs())
                } else {
                    format!(" + {constant}")
                };
                format!("{head}{middle} {} {rhs}", op.symbol())
            }
            MathState::Solved { op, value } => format!("x {} {value}", op.symbol()),
            MathState::PairSizes { m, n } => format!("sets of sizes {m} and {n}"),
            MathState::PairCount { count } => format!("{count} pairs"),
            MathState::Count { value } => value.to_string(),
            MathState::Opaque(text) => text.clone(),
        }
    }

    /// What a student writes if they stop here and commit an answer.
    pub fn conclude_render(&self) -> String {
        match self {
            MathState::PairCount { count } => count.to_string(),
            _ => self.render(),
        }
    }

    /// True when stopping here commits a definite value (a solved relation
    /// or a count), as opposed to abandoning mid-derivation.
    pub fn has_committed_value(&self) -> bool {
        matches!(
            self,
            MathState::Solved { .. } | MathState::PairCount { .. } | MathState::Count { .. }
        )
    }

    /// A state rollouts terminate on.
    pub fn is_answer(&self) -> bool {
        matches!(self, MathState::Solved { .. } | MathState::Count { .. })
    }

    /// Parses a rendered state back. Unrecognized text becomes `Opaque`.
    pub fn parse(text: &str) -> MathState {
        let t = collapse(text);
        if t.is_empty() {
            return MathState::Opaque(String::new());
        }
        if let Some(rest) = t.strip_suffix(" pairs") {
            if let Ok(count) = rest.trim().parse::<i64>() {
                return MathState::PairCount { count };
            }
        }
        if let Ok(value) = t.parse::<i64>() {
            return MathState::Count { value };
        }
        if let Some(state) = parse_linear(&t) {
            return state;
        }
        MathState::Opaque(t)
    }
}

fn collapse(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// `[coeff]x [+|- constant] op rhs`, e.g. "-2x + 4 < 10" or "x > -3".
fn parse_linear(t: &str) -> Option<MathState> {
    let (op, start, end) = RelOp::parse(t)?;
    let left = t[..start].trim();
    let right = t[end..].trim();
    let rhs = parse_rational(right)?;
    let (coeff, constant) = parse_left_side(left)?;
    Some(MathState::relation(coeff, constant, op, rhs))
}

fn parse_rational(text: &str) -> Option<Rational> {
    let t = text.replace(' ', "");
    Rational::parse(&t)
}

/// "x", "-x", "-2x", "3x + 4", "x - 7/2" and so on.
fn parse_left_side(left: &str) -> Option<(i64, Rational)> {
    let x_pos = left.find('x')?;
    let coeff_text = left[..x_pos].trim();
    let coeff: i64 = match coeff_text {
        "" | "+" => 1,
        "-" => -1,
        other => other.parse().ok()?,
    };
    let rest = left[x_pos + 1..].trim();
    let constant = if rest.is_empty() {
        Rational::zero()
    } else if let Some(body) = rest.strip_prefix('+') {
        parse_rational(body)?
    } else {
        let body = rest.strip_prefix('-')?;
        -(parse_rational(body)?)
    };
    Some((coeff, constant))
}

/// Parses a problem stem into its initial state. Stems come in three shapes:
/// "Solve for x: <relation>", "How many relations are there from a set with
/// M elements to a set with N elements?", and "A relation table has P cells
/// ... how many relations are possible?".
pub fn parse_stem(stem: &str) -> MathState {
    let t = collapse(stem);
    if t.is_empty() {
        return MathState::Opaque(String::new());
    }
    if t.contains("set with") && t.contains("elements") {
        let sizes = numbers_before(&t, "elements");
        if sizes.len() >= 2 {
            return MathState::PairSizes {
                m: sizes[0],
                n: sizes[1],
            };
        }
    }
    if t.contains("cells") {
        let counts = numbers_before(&t, "cells");
        if let Some(&count) = counts.first() {
            return MathState::PairCount { count };
        }
    }
    let body = t
        .strip_prefix("solve for x:")
        .or_else(|| t.strip_prefix("solve for x"))
        .or_else(|| t.strip_prefix("solve:"))
        .or_else(|| t.strip_prefix("solve"))
        .unwrap_or(&t)
        .trim();
    if let Some(state) = parse_linear(body) {
        return state;
    }
    MathState::Opaque(t)
}

/// Integers that immediately precede `keyword` in the token stream.
fn numbers_before(text: &str, keyword: &str) -> Vec<i64> {
    let tokens: Vec<&str> = text
        .split(|c: char| c.is_whitespace() || c == ',' || c == '?' || c == '.')
        .filter(|s| !s.is_empty())
        .collect();
    let mut out = Vec::new();
    for window in tokens.windows(2) {
        if window[1] == keyword {
            if let Ok(n) = window[0].parse::<i64>() {
                out.push(n);
            }
        }
    }
    out
}
