//! The rewrite rules of the synthetic domain: the fixed correct solution
//! procedure, and a loadable pack of faulty variants, each with a trigger, a
//! rewrite, and a canonical one-sentence description of the misconception it
//! embodies.

use std::fmt;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use super::state::{MathState, RelOp};
use crate::domain::{ReasoningStep, ReasoningTrajectory, TrajectorySource};
use crate::numeric::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectKind {
    MoveConstant,
    DivideEquation,
    DivideInequality,
    CountPairs,
    PowerCount,
}

#[derive(Debug, Clone)]
pub struct CorrectStep {
    pub kind: CorrectKind,
    pub text: String,
    pub next: MathState,
}

fn div(value: Rational, by: i64) -> Rational {
    (value / Rational::integer(by)).expect("rule triggers exclude zero coefficients")
}

/// The next step of the flawless solution procedure, or `None` when the
/// state is already an answer (or unrecognized).
pub fn correct_next(state: &MathState) -> Option<CorrectStep> {
    match state {
        MathState::Relation {
            coeff,
            constant,
            op,
            rhs,
        } => {
            if !constant.is_zero() {
                let text = if constant.is_negative() {
                    format!("Add {} to both sides", constant.abs())
                } else {
                    format!("Subtract {constant} from both sides")
                };
                return Some(CorrectStep {
                    kind: CorrectKind::MoveConstant,
                    text,
                    next: MathState::relation(*coeff, Rational::zero(), *op, *rhs - *constant),
                });
            }
            if *coeff == 0 || *coeff == 1 {
                return None;
            }
            if op.is_inequality() {
                let (text, next_op) = if *coeff < 0 {
                    (
                        format!("Divide both sides by {coeff} and flip the inequality sign"),
                        op.flipped(),
                    )
                } else {
                    (format!("Divide both sides by {coeff}"), *op)
                };
                Some(CorrectStep {
                    kind: CorrectKind::DivideInequality,
                    text,
                    next: MathState::relation(1, Rational::zero(), next_op, div(*rhs, *coeff)),
                })
            } else {
                Some(CorrectStep {
                    kind: CorrectKind::DivideEquation,
                    text: format!("Divide both sides by {coeff}"),
                    next: MathState::relation(1, Rational::zero(), RelOp::Eq, div(*rhs, *coeff)),
                })
            }
        }
        MathState::PairSizes { m, n } => Some(CorrectStep {
            kind: CorrectKind::CountPairs,
            text: format!("Multiply the set sizes: {m} * {n} = {}", m * n),
            next: MathState::PairCount { count: m * n },
        }),
        MathState::PairCount { count } => {
            if *count < 0 || *count > 50 {
                return None;
            }
            let value = 1i64 << count;
            Some(CorrectStep {
                kind: CorrectKind::PowerCount,
                text: format!("Raise 2 to the number of pairs: 2^{count} = {value}"),
                next: MathState::Count { value },
            })
        }
        MathState::Solved { .. } | MathState::Count { .. } | MathState::Opaque(_) => None,
    }
}

/// The built-in faulty rewrites a pack entry can reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuggyBehavior {
    /// Divide an inequality by a negative coefficient, keeping the sign.
    DivideKeepOp,
    /// Divide an inequality by a positive coefficient but flip anyway.
    DivideFlipOnPositive,
    /// Divide an equation by a negative coefficient, dropping the sign.
    DivideDropSign,
    /// Move a multiplied coefficient across as if it were an added term.
    CoeffAsAddend,
    /// Move an added constant across without changing its sign.
    MoveConstantKeepSign,
    /// Add the set sizes instead of multiplying them.
    AddSizes,
    /// Double the pair count instead of raising two to it.
    DoubleCount,
    /// Square the pair count instead of raising two to it.
    SquareCount,
    /// Treat the pair count itself as the final answer.
    StopAtCount,
}

/// What applying a buggy rule does: a faulty step, or stopping outright.
#[derive(Debug, Clone, PartialEq)]
pub enum BuggyOutcome {
    Step { text: String, next: MathState },
    Stop,
}

impl BuggyBehavior {
    fn from_names(trigger: &str, rewrite: &str) -> Option<BuggyBehavior> {
        match (trigger, rewrite) {
            ("negative_coefficient_inequality", "divide_keep_op") => {
                Some(BuggyBehavior::DivideKeepOp)
            }
            ("positive_coefficient_inequality", "divide_flip_op") => {
                Some(BuggyBehavior::DivideFlipOnPositive)
            }
            ("negative_coefficient_equation", "divide_drop_sign") => {
                Some(BuggyBehavior::DivideDropSign)
            }
            ("bare_coefficient", "subtract_coefficient") => Some(BuggyBehavior::CoeffAsAddend),
            ("constant_term_present", "move_constant_keep_sign") => {
                Some(BuggyBehavior::MoveConstantKeepSign)
            }
            ("pair_of_set_sizes", "add_sizes") => Some(BuggyBehavior::AddSizes),
            ("pair_count", "double_count") => Some(BuggyBehavior::DoubleCount),
            ("pair_count", "square_count") => Some(BuggyBehavior::SquareCount),
            ("pair_count", "stop_here") => Some(BuggyBehavior::StopAtCount),
            _ => None,
        }
    }

    pub fn is_stop(&self) -> bool {
        matches!(self, BuggyBehavior::StopAtCount)
    }

    pub fn triggers(&self, state: &MathState) -> bool {
        match (self, state) {
            (BuggyBehavior::DivideKeepOp, MathState::Relation { coeff, op, .. }) => {
                *coeff < 0 && op.is_inequality()
            }
            (BuggyBehavior::DivideFlipOnPositive, MathState::Relation { coeff, op, .. }) => {
                *coeff > 1 && op.is_inequality()
            }
            (BuggyBehavior::DivideDropSign, MathState::Relation { coeff, op, .. }) => {
                *coeff < 0 && !op.is_inequality()
            }
            (
                BuggyBehavior::CoeffAsAddend,
                MathState::Relation {
                    coeff, constant, ..
                },
            ) => *coeff != 1 && constant.is_zero(),
            (BuggyBehavior::MoveConstantKeepSign, MathState::Relation { constant, .. }) => {
                !constant.is_zero()
            }
            (BuggyBehavior::AddSizes, MathState::PairSizes { .. }) => true,
            (
                BuggyBehavior::DoubleCount
                | BuggyBehavior::SquareCount
                | BuggyBehavior::StopAtCount,
                MathState::PairCount { .. },
            ) => true,
            _ => false,
        }
    }

    /// The marker phrase that identifies this behavior in a step's text.
    /// Stop behaviors produce no step, so they have no marker.
    pub fn text_marker(&self) -> Option<&'static str> {
        match self {
            BuggyBehavior::DivideKeepOp => Some("without flipping the inequality sign"),
            BuggyBehavior::DivideFlipOnPositive => Some("flipping the inequality sign anyway"),
            BuggyBehavior::DivideDropSign => Some("drop the negative sign"),
            BuggyBehavior::CoeffAsAddend => Some("move the coefficient"),
            BuggyBehavior::MoveConstantKeepSign => Some("without changing its sign"),
            BuggyBehavior::AddSizes => Some("add the set sizes"),
            BuggyBehavior::DoubleCount => Some("double the pair count"),
            BuggyBehavior::SquareCount => Some("square the pair count"),
            BuggyBehavior::StopAtCount => None,
        }
    }

    pub fn apply(&self, state: &MathState) -> Option<BuggyOutcome> {
        if !self.triggers(state) {
            return None;
        }
        match (self, state) {
            (
                BuggyBehavior::DivideKeepOp,
                MathState::Relation {
                    coeff,
                    constant,
                    op,
                    rhs,
                },
            ) => Some(BuggyOutcome::Step {
                text: format!("Divide both sides by {coeff} without flipping the inequality sign"),
                next: MathState::relation(1, div(*constant, *coeff), *op, div(*rhs, *coeff)),
            }),
            (
                BuggyBehavior::DivideFlipOnPositive,
                MathState::Relation {
                    coeff,
                    constant,
                    op,
                    rhs,
                },
            ) => Some(BuggyOutcome::Step {
                text: format!("Divide both sides by {coeff}, flipping the inequality sign anyway"),
                next: MathState::relation(
                    1,
                    div(*constant, *coeff),
                    op.flipped(),
                    div(*rhs, *coeff),
                ),
            }),
            (
                BuggyBehavior::DivideDropSign,
                MathState::Relation {
                    coeff,
                    constant,
                    op,
                    rhs,
                },
            ) => {
                let magnitude = coeff.abs();
                Some(BuggyOutcome::Step {
                    text: format!("Divide both sides by {magnitude} and drop the negative sign"),
                    next: MathState::relation(
                        1,
                        div(*constant, magnitude),
                        *op,
                        div(*rhs, magnitude),
                    ),
                })
            }
            (BuggyBehavior::CoeffAsAddend, MathState::Relation { coeff, op, rhs, .. }) => {
                Some(BuggyOutcome::Step {
                    text: format!(
                        "Move the coefficient {coeff} to the other side by subtracting it"
                    ),
                    next: MathState::relation(
                        1,
                        Rational::zero(),
                        *op,
                        *rhs - Rational::integer(*coeff),
                    ),
                })
            }
            (
                BuggyBehavior::MoveConstantKeepSign,
                MathState::Relation {
                    coeff,
                    constant,
                    op,
                    rhs,
                },
            ) => Some(BuggyOutcome::Step {
                text: format!(
                    "Move {} to the other side without changing its sign",
                    constant.abs()
                ),
                next: MathState::relation(*coeff, Rational::zero(), *op, *rhs + *constant),
            }),
            (BuggyBehavior::AddSizes, MathState::PairSizes { m, n }) => Some(BuggyOutcome::Step {
                text: format!("Add the set sizes: {m} + {n} = {}", m + n),
                next: MathState::PairCount { count: m + n },
            }),
            (BuggyBehavior::DoubleCount, MathState::PairCount { count }) => {
                Some(BuggyOutcome::Step {
                    text: format!("Double the pair count: 2 * {count} = {}", 2 * count),
                    next: MathState::Count { value: 2 * count },
                })
            }
            (BuggyBehavior::SquareCount, MathState::PairCount { count }) => {
                Some(BuggyOutcome::Step {
                    text: format!("Square the pair count: {count}^2 = {}", count * count),
                    next: MathState::Count {
                        value: count * count,
                    },
                })
            }
            (BuggyBehavior::StopAtCount, MathState::PairCount { .. }) => Some(BuggyOutcome::Stop),
            _ => None,
        }
    }
}

/// A loaded faulty rule: pack metadata plus its resolved behavior.
#[derive(Debug, Clone)]
pub struct BuggyRule {
    pub id: String,
    pub category: String,
    pub trigger: String,
    pub rewrite: String,
    /// Canonical misconception statement emitted by summarization.
    pub sentence: String,
    pub behavior: BuggyBehavior,
}

#[derive(Debug, Clone)]
pub struct CorrectRuleMeta {
    pub id: String,
    pub category: String,
    pub trigger: String,
    pub rewrite: String,
    pub kind: CorrectKind,
}

fn correct_kind_from_names(trigger: &str, rewrite: &str) -> Option<CorrectKind> {
    match (trigger, rewrite) {
        ("constant_term_present", "move_constant_across") => Some(CorrectKind::MoveConstant),
        ("equation_coefficient", "divide_both_sides") => Some(CorrectKind::DivideEquation),
        ("inequality_coefficient", "divide_both_sides_flip_if_negative") => {
            Some(CorrectKind::DivideInequality)
        }
        ("pair_of_set_sizes", "multiply_sizes") => Some(CorrectKind::CountPairs),
        ("pair_count", "two_to_the_power") => Some(CorrectKind::PowerCount),
        _ => None,
    }
}

#[derive(Debug, Error)]
pub enum PackError {
    #[error("rule pack parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("io error reading rule pack: {0}")]
    Io(#[from] std::io::Error),
    #[error("duplicate rule id {0}")]
    DuplicateId(String),
    #[error("rule {id}: unknown trigger/rewrite pair ({trigger}, {rewrite})")]
    UnknownBehavior {
        id: String,
        trigger: String,
        rewrite: String,
    },
    #[error("rule {0}: trigger matches no generator-producible state")]
    UntriggerableRule(String),
    #[error("rule pack has no buggy rules")]
    Empty,
}

#[derive(Debug, Deserialize)]
struct RawPack {
    #[serde(default)]
    correct: Vec<RawCorrect>,
    #[serde(default)]
    buggy: Vec<RawBuggy>,
}

#[derive(Debug, Deserialize)]
struct RawCorrect {
    id: String,
    category: String,
    trigger: String,
    rewrite: String,
}

#[derive(Debug, Deserialize)]
struct RawBuggy {
    id: String,
    category: String,
    trigger: String,
    rewrite: String,
    sentence: String,
}

/// How a reasoning step classifies against the pack, by its text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepClass {
    /// An arithmetic slip injected to pad proposals; not a pack rule.
    Slip,
    /// Index into the pack's buggy rules.
    Buggy(usize),
    /// Correct-procedure or unrecognized text.
    Other,
}

pub const SLIP_MARKER: &str = "slip on the arithmetic";

#[derive(Debug, Clone)]
pub struct RulePack {
    pub correct: Vec<CorrectRuleMeta>,
    pub buggy: Vec<BuggyRule>,
}

pub const DEFAULT_PACK_TOML: &str = include_str!("default_rulepack.toml");

impl RulePack {
    /// The shipped pack. Kept in a TOML fixture so alternative packs load
    /// through the same path.
    pub fn default_pack() -> RulePack {
        RulePack::from_toml(DEFAULT_PACK_TOML).expect("embedded rule pack is valid")
    }

    pub fn load(path: &Path) -> Result<RulePack, PackError> {
        let text = std::fs::read_to_string(path)?;
        RulePack::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<RulePack, PackError> {
        let raw: RawPack = toml::from_str(text)?;
        let mut seen = std::collections::HashSet::new();
        let mut correct = Vec::new();
        for rule in raw.correct {
            if !seen.insert(rule.id.clone()) {
                return Err(PackError::DuplicateId(rule.id));
            }
            let kind = correct_kind_from_names(&rule.trigger, &rule.rewrite).ok_or_else(|| {
                PackError::UnknownBehavior {
                    id: rule.id.clone(),
                    trigger: rule.trigger.clone(),
                    rewrite: rule.rewrite.clone(),
                }
            })?;
            correct.push(CorrectRuleMeta {
                id: rule.id,
                category: rule.category,
                trigger: rule.trigger,
                rewrite: rule.rewrite,
                kind,
            });
        }
        let mut buggy = Vec::new();
        for rule in raw.buggy {
            if !seen.insert(rule.id.clone()) {
                return Err(PackError::DuplicateId(rule.id));
            }
            let behavior =
                BuggyBehavior::from_names(&rule.trigger, &rule.rewrite).ok_or_else(|| {
                    PackError::UnknownBehavior {
                        id: rule.id.clone(),
                        trigger: rule.trigger.clone(),
                        rewrite: rule.rewrite.clone(),
                    }
                })?;
            buggy.push(BuggyRule {
                id: rule.id,
                category: rule.category,
                trigger: rule.trigger,
                rewrite: rule.rewrite,
                sentence: rule.sentence,
                behavior,
            });
        }
        if buggy.is_empty() {
            return Err(PackError::Empty);
        }
        // Every buggy trigger must fire on at least one generator-producible
        // state; a rule that can never trigger is a pack defect.
        for rule in &buggy {
            if !probe_states().iter().any(|s| rule.behavior.triggers(s)) {
                return Err(PackError::UntriggerableRule(rule.id.clone()));
            }
        }
        Ok(RulePack { correct, buggy })
    }

    pub fn category_for(&self, kind: CorrectKind) -> &str {
        self.correct
            .iter()
            .find(|r| r.kind == kind)
            .map(|r| r.category.as_str())
            .unwrap_or("general")
    }

    pub fn rule(&self, id: &str) -> Option<&BuggyRule> {
        self.buggy.iter().find(|r| r.id == id)
    }

    /// Faulty rewrites applicable to `state`, in pack order. Stop rules are
    /// excluded: stopping is the terminal child's job during search.
    pub fn applicable_rewrites(&self, state: &MathState) -> Vec<&BuggyRule> {
        self.buggy
            .iter()
            .filter(|r| !r.behavior.is_stop() && r.behavior.triggers(state))
            .collect()
    }

    /// All faulty rules applicable to `state`, including stop rules.
    pub fn applicable_all(&self, state: &MathState) -> Vec<&BuggyRule> {
        self.buggy
            .iter()
            .filter(|r| r.behavior.triggers(state))
            .collect()
    }

    pub fn classify_step(&self, step: &ReasoningStep) -> StepClass {
        let text = step.text.to_lowercase();
        if text.contains(SLIP_MARKER) {
            return StepClass::Slip;
        }
        for (idx, rule) in self.buggy.iter().enumerate() {
            if let Some(marker) = rule.behavior.text_marker() {
                if text.contains(marker) {
                    return StepClass::Buggy(idx);
                }
            }
        }
        StepClass::Other
    }

    /// The pack rules a trajectory embodies: one id per erroneous rule step,
    /// or the stop rule matching the stopped state for clean terminal stops.
    pub fn trajectory_rule_ids(&self, trajectory: &ReasoningTrajectory) -> Vec<String> {
        let mut ids = Vec::new();
        for step in &trajectory.steps {
            if step.erroneous() {
                if let StepClass::Buggy(idx) = self.classify_step(step) {
                    ids.push(self.buggy[idx].id.clone());
                }
            }
        }
        if ids.is_empty()
            && trajectory.source == TrajectorySource::TerminalStop
            && trajectory.steps.iter().all(|s| !s.erroneous())
        {
            if let Some(last) = trajectory.steps.last() {
                let stopped = MathState::parse(&last.intermediate_result);
                if let Some(rule) = self
                    .buggy
                    .iter()
                    .find(|r| r.behavior.is_stop() && r.behavior.triggers(&stopped))
                {
                    ids.push(rule.id.clone());
                }
            }
        }
        ids
    }
}

impl fmt::Display for StepClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepClass::Slip => f.write_str("slip"),
            StepClass::Buggy(idx) => write!(f, "buggy[{idx}]"),
            StepClass::Other => f.write_str("other"),
        }
    }
}

/// Representative states the problem generator can produce, used to verify
/// every pack rule is reachable.
fn probe_states() -> Vec<MathState> {
    vec![
        MathState::relation(-2, Rational::integer(4), RelOp::Lt, Rational::integer(10)),
        MathState::relation(2, Rational::integer(4), RelOp::Lt, Rational::integer(10)),
        MathState::relation(-2, Rational::integer(4), RelOp::Eq, Rational::integer(10)),
        MathState::relation(2, Rational::integer(-3), RelOp::Eq, Rational::integer(5)),
        MathState::relation(-2, Rational::zero(), RelOp::Lt, Rational::integer(6)),
        MathState::relation(2, Rational::zero(), RelOp::Gt, Rational::integer(6)),
        MathState::relation(-2, Rational::zero(), RelOp::Eq, Rational::integer(6)),
        MathState::relation(2, Rational::zero(), RelOp::Eq, Rational::integer(6)),
        MathState::PairSizes { m: 2, n: 3 },
        MathState::PairCount { count: 6 },
    ]
}
