//! Answer-equivalence checking, the accuracy metric, and the group-level
//! aggregation protocol.
//!
//! Equivalence is a tiered pipeline: numeric forms (integers, fractions,
//! decimals, percentages) compare as exact rationals, simple relations
//! (`x > -3`) compare by canonical form, and anything else falls back to
//! normalized string equality. Out-of-subset expressions therefore compare
//! textually; that is a documented limitation, not an error.

use serde::Serialize;
use thiserror::Error;

use crate::domain::{AnswerText, QARecord};
use crate::numeric::Rational;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("prediction references unknown record id {0}")]
    UnknownRecordId(String),
    #[error("cannot evaluate an empty truth set")]
    EmptyEvaluation,
    #[error("recall needs a non-empty actual set")]
    EmptyActual,
}

/// Lowercase, trim, and collapse internal whitespace.
fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last_space = true;
    for ch in text.trim().chars() {
        if ch.is_whitespace() {
            if !last_space {
                out.push(' ');
                last_space = true;
            }
        } else {
            for c in ch.to_lowercase() {
                out.push(c);
            }
            last_space = false;
        }
    }
    out.trim_end().to_string()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ParsedNumber {
    Exact(Rational),
    Decimal(Rational),
}

impl ParsedNumber {
    fn value(&self) -> Rational {
        match self {
            ParsedNumber::Exact(r) | ParsedNumber::Decimal(r) => *r,
        }
    }

    fn is_decimal(&self) -> bool {
        matches!(self, ParsedNumber::Decimal(_))
    }
}

/// Integers, decimals, fractions p/q, and percentages of any of those.
fn parse_number(text: &str) -> Option<ParsedNumber> {
    let mut t = text.trim();
    let mut percent = false;
    if let Some(stripped) = t.strip_suffix('%') {
        percent = true;
        t = stripped.trim_end();
    }
    let parsed = if t.contains('.') {
        ParsedNumber::Decimal(Rational::parse_decimal(t)?)
    } else {
        ParsedNumber::Exact(Rational::parse(t)?)
    };
    if percent {
        let hundredth = Rational::new(1, 100).expect("nonzero denominator");
        let scaled = parsed.value() * hundredth;
        Some(match parsed {
            ParsedNumber::Exact(_) => ParsedNumber::Exact(scaled),
            ParsedNumber::Decimal(_) => ParsedNumber::Decimal(scaled),
        })
    } else {
        Some(parsed)
    }
}

/// Exact when both sides are exact forms; within 1e-9 relative when a
/// decimal is involved.
fn numbers_equivalent(a: ParsedNumber, b: ParsedNumber) -> bool {
    if a.is_decimal() || b.is_decimal() {
        a.value().approx_eq_rel(&b.value(), 1, 1_000_000_000)
    } else {
        a.value() == b.value()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RelationOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl RelationOp {
    fn mirrored(self) -> RelationOp {
        match self {
            RelationOp::Lt => RelationOp::Gt,
            RelationOp::Le => RelationOp::Ge,
            RelationOp::Gt => RelationOp::Lt,
            RelationOp::Ge => RelationOp::Le,
            RelationOp::Eq => RelationOp::Eq,
        }
    }
}

#[derive(Debug, PartialEq)]
struct Relation {
    variable: String,
    op: RelationOp,
    value: ParsedNumber,
}

/// Parses `var op value` or `value op var`, canonicalizing to the variable
/// on the left.
fn parse_relation(text: &str) -> Option<Relation> {
    const OPS: [(&str, RelationOp); 8] = [
        ("<=", RelationOp::Le),
        (">=", RelationOp::Ge),
        ("==", RelationOp::Eq),
        ("≤", RelationOp::Le),
        ("≥", RelationOp::Ge),
        ("<", RelationOp::Lt),
        (">", RelationOp::Gt),
        ("=", RelationOp::Eq),
    ];
    for (symbol, op) in OPS {
        if let Some(pos) = text.find(symbol) {
            let left = text[..pos].trim();
            let right = text[pos + symbol.len()..].trim();
            if left.is_empty() || right.is_empty() {
                return None;
            }
            let is_var = |s: &str| s.chars().all(|c| c.is_alphabetic()) && !s.is_empty();
            if is_var(left) {
                let value = parse_number(right)?;
                return Some(Relation {
                    variable: left.to_string(),
                    op,
                    value,
                });
            }
            if is_var(right) {
                let value = parse_number(left)?;
                return Some(Relation {
                    variable: right.to_string(),
                    op: op.mirrored(),
                    value,
                });
            }
            return None;
        }
    }
    None
}

/// The single source of truth for "same answer". Symmetric and reflexive by
/// construction.
pub fn answers_equivalent(a: &str, b: &str) -> bool {
    let na = normalize(a);
    let nb = normalize(b);
    if let (Some(x), Some(y)) = (parse_number(&na), parse_number(&nb)) {
        return numbers_equivalent(x, y);
    }
    if let (Some(x), Some(y)) = (parse_relation(&na), parse_relation(&nb)) {
        return x.variable == y.variable && x.op == y.op && numbers_equivalent(x.value, y.value);
    }
    na == nb
}

pub fn answer_texts_equivalent(a: &AnswerText, b: &AnswerText) -> bool {
    answers_equivalent(a.as_str(), b.as_str())
}

/// Fraction of truth records whose prediction matches the chosen answer.
/// A missing prediction counts as a non-match; a prediction for an unknown
/// record id is a hard error.
pub fn accuracy(
    predictions: &[(String, AnswerText)],
    truth: &[QARecord],
) -> Result<f64, EvalError> {
    if truth.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    for (id, _) in predictions {
        if !truth.iter().any(|r| &r.record_id == id) {
            return Err(EvalError::UnknownRecordId(id.clone()));
        }
    }
    let mut matches = 0usize;
    for record in truth {
        let predicted = predictions
            .iter()
            .find(|(id, _)| id == &record.record_id)
            .map(|(_, answer)| answer);
        if let Some(answer) = predicted {
            if answer_texts_equivalent(answer, &record.chosen_answer) {
                matches += 1;
            }
        }
    }
    Ok(matches as f64 / truth.len() as f64)
}

/// Merges answers into equivalence classes (greedy, first-seen representative)
/// and returns the top-k representatives by count. Ties break by earlier
/// first appearance, then by lexicographic representative.
pub fn top_k_by_equivalence(answers: &[AnswerText], k: usize) -> Vec<AnswerText> {
    struct Class {
        representative: AnswerText,
        count: usize,
        first_index: usize,
    }
    let mut classes: Vec<Class> = Vec::new();
    for (idx, answer) in answers.iter().enumerate() {
        match classes
            .iter_mut()
            .find(|c| answer_texts_equivalent(&c.representative, answer))
        {
            Some(class) => class.count += 1,
            None => classes.push(Class {
                representative: answer.clone(),
                count: 1,
                first_index: idx,
            }),
        }
    }
    classes.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then(a.first_index.cmp(&b.first_index))
            .then(a.representative.as_str().cmp(b.representative.as_str()))
    });
    classes
        .into_iter()
        .take(k)
        .map(|c| c.representative)
        .collect()
}

/// Applies [`top_k_by_equivalence`] per question, preserving question order.
pub fn aggregate_group(
    per_question: &[(String, Vec<AnswerText>)],
    k: usize,
) -> Vec<(String, Vec<AnswerText>)> {
    per_question
        .iter()
        .map(|(question_id, answers)| (question_id.clone(), top_k_by_equivalence(answers, k)))
        .collect()
}

/// Fraction of actual answers covered by some generated answer.
pub fn recall(generated: &[AnswerText], actual: &[AnswerText]) -> Result<f64, EvalError> {
    if actual.is_empty() {
        return Err(EvalError::EmptyActual);
    }
    let covered = actual
        .iter()
        .filter(|a| generated.iter().any(|g| answer_texts_equivalent(a, g)))
        .count();
    Ok(covered as f64 / actual.len() as f64)
}

/// Per-student accuracy plus both averaging conventions, labeled. Micro
/// weights every record equally; macro weights every student equally.
#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub per_student: Vec<StudentAccuracy>,
    pub macro_avg_accuracy: f64,
    pub micro_avg_accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudentAccuracy {
    pub student_id: String,
    pub n_records: usize,
    pub n_matched: usize,
    pub accuracy: f64,
}

pub fn evaluation_report(per_student: Vec<StudentAccuracy>) -> EvaluationReport {
    let total_records: usize = per_student.iter().map(|s| s.n_records).sum();
    let total_matched: usize = per_student.iter().map(|s| s.n_matched).sum();
    let micro = if total_records == 0 {
        0.0
    } else {
        total_matched as f64 / total_records as f64
    };
    let macro_avg = if per_student.is_empty() {
        0.0
    } else {
        per_student.iter().map(|s| s.accuracy).sum::<f64>() / per_student.len() as f64
    };
    EvaluationReport {
        per_student,
        macro_avg_accuracy: macro_avg,
        micro_avg_accuracy: micro,
    }
}
