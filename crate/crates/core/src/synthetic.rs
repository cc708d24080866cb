//! Synthetic students with known buggy-rule sets, and the corpus generator
//! that turns them into datasets in the exact on-disk format the pipeline
//! consumes. Because each student's misconceptions are injected, recovery
//! and generation quality are exactly checkable against ground truth.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::scripted::rules::{BuggyRule, RulePack};
use crate::backend::scripted::solve_with_rules;
use crate::backend::scripted::state::{parse_stem, MathState, RelOp};
use crate::domain::{AnswerText, QARecord, ReasoningTrajectory, StudentDataset};
use crate::eval::answers_equivalent;
use crate::mcts::derive_seed;
use crate::numeric::Rational;

/// A ground-truth student: a stable set of faulty rules applied wherever
/// they trigger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticStudent {
    pub student_id: String,
    pub buggy_rule_ids: Vec<String>,
    pub application_policy: ApplicationPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplicationPolicy {
    /// The rule fires every time its trigger matches.
    Always,
}

impl SyntheticStudent {
    pub fn new(student_id: impl Into<String>, buggy_rule_ids: Vec<String>) -> SyntheticStudent {
        SyntheticStudent {
            student_id: student_id.into(),
            buggy_rule_ids,
            application_policy: ApplicationPolicy::Always,
        }
    }

    pub fn validate(&self, pack: &RulePack) -> Result<(), SyntheticError> {
        if self.buggy_rule_ids.is_empty() {
            return Err(SyntheticError::BadConfig(format!(
                "student {} has no buggy rules",
                self.student_id
            )));
        }
        for id in &self.buggy_rule_ids {
            if pack.rule(id).is_none() {
                return Err(SyntheticError::UnknownRule(id.clone()));
            }
        }
        Ok(())
    }

    fn rules<'p>(&self, pack: &'p RulePack) -> Vec<&'p BuggyRule> {
        // Precedence among a student's rules follows pack order.
        pack.buggy
            .iter()
            .filter(|r| self.buggy_rule_ids.contains(&r.id))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("unknown buggy rule id {0}")]
    UnknownRule(String),
    #[error("invalid simulate config: {0}")]
    BadConfig(String),
    #[error(
        "could not fill any {role} records for student {student_id} within the attempt budget"
    )]
    InsufficientTemplates { student_id: String, role: String },
}

/// Deterministically solves a stem as the student would: their buggy rules
/// wherever triggered, the correct procedure elsewhere.
pub fn answer_question(
    student: &SyntheticStudent,
    stem: &str,
    pack: &RulePack,
) -> (ReasoningTrajectory, AnswerText) {
    let solve = solve_with_rules(&parse_stem(stem), &student.rules(pack));
    let answer = solve.final_answer.clone();
    (solve.into_trajectory(), answer)
}

/// A generated problem: canonical stem plus its correct answer.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub stem: String,
    pub correct_answer: AnswerText,
}

fn correct_answer_for(state: &MathState) -> AnswerText {
    solve_with_rules(state, &[]).final_answer
}

fn nonzero(rng: &mut ChaCha8Rng, magnitude: std::ops::RangeInclusive<i64>) -> i64 {
    let value = rng.random_range(magnitude);
    if rng.random_bool(0.5) {
        value
    } else {
        -value
    }
}

fn random_op(rng: &mut ChaCha8Rng) -> RelOp {
    match rng.random_range(0..4) {
        0 => RelOp::Lt,
        1 => RelOp::Le,
        2 => RelOp::Gt,
        _ => RelOp::Ge,
    }
}

/// Draws one problem. Kinds are weighted toward the short forms an
/// elementary-level corpus is dominated by.
pub fn sample_problem(rng: &mut ChaCha8Rng) -> Problem {
    let roll = rng.random_range(0..32u32);
    let state = match roll {
        // ax = c
        0..=5 => {
            let a = nonzero(rng, 2..=9);
            let v = nonzero(rng, 1..=9);
            MathState::relation(a, Rational::zero(), RelOp::Eq, Rational::integer(a * v))
        }
        // ax + b = c
        6 => {
            let a = nonzero(rng, 2..=9);
            let b = nonzero(rng, 1..=9);
            let v = nonzero(rng, 1..=9);
            MathState::relation(
                a,
                Rational::integer(b),
                RelOp::Eq,
                Rational::integer(a * v + b),
            )
        }
        // x + b = c
        7 | 8 => {
            let b = nonzero(rng, 1..=9);
            let v = nonzero(rng, 1..=9);
            MathState::relation(1, Rational::integer(b), RelOp::Eq, Rational::integer(v + b))
        }
        // ax op c
        9..=16 => {
            let a = nonzero(rng, 2..=9);
            let v = nonzero(rng, 1..=9);
            MathState::relation(
                a,
                Rational::zero(),
                random_op(rng),
                Rational::integer(a * v),
            )
        }
        // ax + b op c
        17 => {
            let a = nonzero(rng, 2..=9);
            let b = nonzero(rng, 1..=9);
            let v = nonzero(rng, 1..=9);
            MathState::relation(
                a,
                Rational::integer(b),
                random_op(rng),
                Rational::integer(a * v + b),
            )
        }
        // relation count from set sizes
        18..=21 => loop {
            let m = rng.random_range(2..=7);
            let n = rng.random_range(2..=7);
            // (m-2)(n-2) = 4 makes 2(m+n) = mn, which would let an
            // added-then-doubled count coincide with the pair count itself;
            // keep premature-stop answers reachable only by stopping.
            if (m - 2) * (n - 2) != 4 {
                break MathState::PairSizes { m, n };
            }
        },
        // relation count from a given cell count
        _ => MathState::PairCount {
            count: rng.random_range(4..=40),
        },
    };
    let stem = match &state {
        MathState::PairSizes { m, n } => {
            if rng.random_bool(0.5) {
                format!(
                    "How many relations are there from a set with {m} elements to a set with {n} elements?"
                )
            } else {
                format!(
                    "Count the relations from a set with {m} elements to a set with {n} elements."
                )
            }
        }
        MathState::PairCount { count } => format!(
            "A relation table has {count} cells, each either included or excluded. How many relations are possible?"
        ),
        other => format!("Solve for x: {}", other.render()),
    };
    Problem {
        correct_answer: correct_answer_for(&state),
        stem,
    }
}

/// The shared test questions used in group mode, derived from the corpus
/// seed alone.
pub fn shared_problems(seed: u64, count: usize) -> Vec<Problem> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "shared-test"));
    let mut problems: Vec<Problem> = Vec::new();
    let mut guard = 0;
    while problems.len() < count && guard < 10_000 {
        guard += 1;
        let problem = sample_problem(&mut rng);
        if problems.iter().all(|p| p.stem != problem.stem) {
            problems.push(problem);
        }
    }
    problems
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub n_students: usize,
    pub n_past: usize,
    pub n_test: usize,
    pub rules_per_student: usize,
    pub seed: u64,
    /// All students answer the same test questions (group-mode corpora).
    pub shared_test: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        // Corpus sizing mirrors the published per-student averages
        // (57 past / 10 test records).
        SimulateConfig {
            n_students: 20,
            n_past: 57,
            n_test: 10,
            rules_per_student: 1,
            seed: 42,
            shared_test: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub students: Vec<SyntheticStudent>,
    pub datasets: Vec<StudentDataset>,
    /// Dropped slots and other generation notes.
    pub notes: Vec<String>,
}

const ATTEMPTS_PER_SLOT: usize = 100;

/// Generates the full corpus: students with sampled rule sets, then per
/// student enough error records for the requested past/test counts.
pub fn generate_corpus(
    config: &SimulateConfig,
    pack: &RulePack,
) -> Result<SyntheticCorpus, SyntheticError> {
    if config.n_students == 0 || config.n_past == 0 || config.n_test == 0 {
        return Err(SyntheticError::BadConfig(
            "student and record counts must be positive".into(),
        ));
    }
    if config.rules_per_student == 0 || config.rules_per_student > pack.buggy.len() {
        return Err(SyntheticError::BadConfig(format!(
            "rules_per_student must be in 1..={}",
            pack.buggy.len()
        )));
    }
    let shared = config
        .shared_test
        .then(|| shared_problems(config.seed, config.n_test));
    let mut students = Vec::with_capacity(config.n_students);
    let mut datasets = Vec::with_capacity(config.n_students);
    let mut notes = Vec::new();
    for index in 0..config.n_students {
        let student_id = format!("s{:03}", index + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &student_id));
        let mut picks =
            index::sample(&mut rng, pack.buggy.len(), config.rules_per_student).into_vec();
        picks.sort_unstable();
        let rule_ids: Vec<String> = picks
            .into_iter()
            .map(|i| pack.buggy[i].id.clone())
            .collect();
        let student = SyntheticStudent::new(student_id, rule_ids);
        let (dataset, mut student_notes) = build_student_dataset(
            &student,
            pack,
            config.n_past,
            config.n_test,
            &mut rng,
            shared.as_deref(),
        )?;
        notes.append(&mut student_notes);
        students.push(student);
        datasets.push(dataset);
    }
    Ok(SyntheticCorpus {
        students,
        datasets,
        notes,
    })
}

/// Generates one student's dataset. Slots where the student keeps answering
/// correctly are retried with fresh stems (bounded per slot) or, for shared
/// test questions, dropped and reported.
pub fn build_student_dataset(
    student: &SyntheticStudent,
    pack: &RulePack,
    n_past: usize,
    n_test: usize,
    rng: &mut ChaCha8Rng,
    shared_test: Option<&[Problem]>,
) -> Result<(StudentDataset, Vec<String>), SyntheticError> {
    student.validate(pack)?;
    let mut notes = Vec::new();
    let mut used_stems: Vec<String> = shared_test
        .map(|problems| problems.iter().map(|p| p.stem.clone()).collect())
        .unwrap_or_default();

    let mut past_records = Vec::with_capacity(n_past);
    for slot in 0..n_past {
        match fill_slot(student, pack, rng, &mut used_stems) {
            Some((problem, answer)) => past_records.push(QARecord {
                record_id: format!("{}-p{:03}", student.student_id, slot + 1),
                student_id: student.student_id.clone(),
                stem: problem.stem,
                correct_answer: problem.correct_answer,
                chosen_answer: answer,
                options: None,
                timestamp: None,
            }),
            None => notes.push(format!(
                "student {} past slot {} dropped after {ATTEMPTS_PER_SLOT} attempts",
                student.student_id,
                slot + 1
            )),
        }
    }

    let mut test_records = Vec::with_capacity(n_test);
    match shared_test {
        Some(problems) => {
            for (slot, problem) in problems.iter().enumerate() {
                let (_, answer) = answer_question(student, &problem.stem, pack);
                if answers_equivalent(answer.as_str(), problem.correct_answer.as_str()) {
                    notes.push(format!(
                        "student {} answers shared test question {} correctly; slot dropped",
                        student.student_id,
                        slot + 1
                    ));
                    continue;
                }
                test_records.push(QARecord {
                    record_id: format!("{}-t{:03}", student.student_id, slot + 1),
                    student_id: student.student_id.clone(),
                    stem: problem.stem.clone(),
                    correct_answer: problem.correct_answer.clone(),
                    chosen_answer: answer,
                    options: None,
                    timestamp: None,
                });
            }
        }
        None => {
            for slot in 0..n_test {
                match fill_slot(student, pack, rng, &mut used_stems) {
                    Some((problem, answer)) => test_records.push(QARecord {
                        record_id: format!("{}-t{:03}", student.student_id, slot + 1),
                        student_id: student.student_id.clone(),
                        stem: problem.stem,
                        correct_answer: problem.correct_answer,
                        chosen_answer: answer,
                        options: None,
                        timestamp: None,
                    }),
                    None => notes.push(format!(
                        "student {} test slot {} dropped after {ATTEMPTS_PER_SLOT} attempts",
                        student.student_id,
                        slot + 1
                    )),
                }
            }
        }
    }

    if n_past > 0 && past_records.is_empty() {
        return Err(SyntheticError::InsufficientTemplates {
            student_id: student.student_id.clone(),
            role: "past".into(),
        });
    }
    if n_test > 0 && test_records.is_empty() && shared_test.is_none() {
        return Err(SyntheticError::InsufficientTemplates {
            student_id: student.student_id.clone(),
            role: "test".into(),
        });
    }

    Ok((
        StudentDataset {
            student_id: student.student_id.clone(),
            past_records,
            test_records,
        },
        notes,
    ))
}

/// One error record: fresh stems are drawn until the student's rules
/// actually produce a wrong answer.
fn fill_slot(
    student: &SyntheticStudent,
    pack: &RulePack,
    rng: &mut ChaCha8Rng,
    used_stems: &mut Vec<String>,
) -> Option<(Problem, AnswerText)> {
    for _ in 0..ATTEMPTS_PER_SLOT {
        let problem = sample_problem(rng);
        if used_stems.contains(&problem.stem) {
            continue;
        }
        let (_, answer) = answer_question(student, &problem.stem, pack);
        if answer.is_empty() || answers_equivalent(answer.as_str(), problem.correct_answer.as_str())
        {
            continue;
        }
        used_stems.push(problem.stem.clone());
        return Some((problem, answer));
    }
    None
}
