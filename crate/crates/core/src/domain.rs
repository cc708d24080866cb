//! Shared data types: QA records, reasoning trajectories, search trees,
//! misconception prototypes, and their serialized forms.
//!
//! Everything here is an immutable value object after construction; the only
//! behavior is validation and (de)serialization. Datasets are stored as
//! line-delimited JSON (one record per line), prototypes as one JSON document
//! per student.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::answers_equivalent;

/// Raw answer text. All equivalence logic lives in [`crate::eval`]; two
/// `AnswerText` values with different strings may still denote the same
/// answer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnswerText(pub String);

impl AnswerText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.trim().is_empty()
    }
}

impl fmt::Display for AnswerText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AnswerText {
    fn from(s: &str) -> Self {
        AnswerText(s.to_string())
    }
}

impl From<String> for AnswerText {
    fn from(s: String) -> Self {
        AnswerText(s)
    }
}

/// A normalized knowledge-concept label. Normalization is lowercasing,
/// punctuation stripping, and whitespace collapsing, so that the same concept
/// extracted twice always compares equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Concept(String);

impl Concept {
    /// Returns `None` if nothing is left after normalization.
    pub fn new(raw: &str) -> Option<Concept> {
        let label = normalize_concept_label(raw);
        if label.is_empty() {
            None
        } else {
            Some(Concept(label))
        }
    }

    pub fn label(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn normalize_concept_label(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut last_space = true;
    for ch in raw.chars() {
        if ch.is_alphanumeric() {
            for c in ch.to_lowercase() {
                out.push(c);
            }
            last_space = false;
        } else if ch.is_whitespace() && !last_space {
            out.push(' ');
            last_space = true;
        }
        // punctuation and symbols are dropped
    }
    out.trim_end().to_string()
}

/// One student-question interaction: the stem, the keyed answer, and the
/// (incorrect) option the student actually chose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QARecord {
    pub record_id: String,
    pub student_id: String,
    pub stem: String,
    pub correct_answer: AnswerText,
    pub chosen_answer: AnswerText,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<AnswerText>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<i64>,
}

/// A student's past records (the recovery corpus) and test records (the
/// generation targets).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentDataset {
    pub student_id: String,
    pub past_records: Vec<QARecord>,
    pub test_records: Vec<QARecord>,
}

/// A single reasoning move and the value/state it leaves behind.
///
/// `is_erroneous` is only known when the step came from the scripted backend
/// or from synthetic ground truth; remote-model steps leave it absent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReasoningStep {
    pub text: String,
    pub intermediate_result: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_erroneous: Option<bool>,
}

impl ReasoningStep {
    pub fn erroneous(&self) -> bool {
        self.is_erroneous == Some(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectorySource {
    /// Completed by rolling the reasoning out to a final answer.
    Simulation,
    /// Cut short: the current intermediate result was committed as the answer.
    TerminalStop,
}

/// An ordered sequence of reasoning steps ending in a final answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrajectory {
    pub steps: Vec<ReasoningStep>,
    pub final_answer: AnswerText,
    pub source: TrajectorySource,
}

impl ReasoningTrajectory {
    /// Compact single-string rendering used in prompts and raw summaries.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for (i, step) in self.steps.iter().enumerate() {
            out.push_str(&format!(
                "{}. {} => {}\n",
                i + 1,
                step.text,
                step.intermediate_result
            ));
        }
        out.push_str(&format!("answer: {}", self.final_answer));
        out
    }

    pub fn erroneous_step_count(&self) -> usize {
        self.steps.iter().filter(|s| s.erroneous()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Reasoning,
    Terminal,
}

/// A search-tree node as exported for traces and invariant checks. The live
/// engine keeps an arena; this is the value form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<ReasoningStep>,
    pub visit_count: u64,
    pub total_reward: f64,
    pub depth: u32,
    /// True once the node's children were generated through a step proposal
    /// (as opposed to never expanded, or expanded into a lone terminal child
    /// because no further step applies).
    pub expanded_via_proposal: bool,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn non_terminal_children(&self) -> impl Iterator<Item = &TreeNode> {
        self.children
            .iter()
            .filter(|c| c.kind == NodeKind::Reasoning)
    }

    pub fn is_fully_expanded(&self) -> bool {
        self.expanded_via_proposal && self.non_terminal_children().all(|c| c.visit_count > 0)
    }

    /// Walks the tree and returns one message per violated structural
    /// invariant. Empty means the tree is consistent.
    pub fn check_invariants(&self, branching: u32, alpha: f64) -> Vec<String> {
        let mut issues = Vec::new();
        self.check_node(branching, alpha, &mut issues);
        issues
    }

    fn check_node(&self, branching: u32, alpha: f64, issues: &mut Vec<String>) {
        if self.kind == NodeKind::Terminal && !self.children.is_empty() {
            issues.push(format!(
                "terminal node at depth {} has children",
                self.depth
            ));
        }
        if self.total_reward > self.visit_count as f64 * (1.0 + alpha) + 1e-9 {
            issues.push(format!(
                "reward bound violated at depth {}: Q={} V={}",
                self.depth, self.total_reward, self.visit_count
            ));
        }
        let child_visits: u64 = self.children.iter().map(|c| c.visit_count).sum();
        if self.visit_count < child_visits {
            issues.push(format!(
                "visit conservation violated at depth {}: V={} < sum(children)={}",
                self.depth, self.visit_count, child_visits
            ));
        }
        if self.expanded_via_proposal && self.is_fully_expanded() {
            let expected = branching as usize + 1;
            let no_terminal = self.children.iter().all(|c| c.kind == NodeKind::Reasoning);
            let ok = self.children.len() == expected
                || (no_terminal && self.children.len() == branching as usize);
            if !ok {
                issues.push(format!(
                    "fully expanded node at depth {} has {} children (branching {})",
                    self.depth,
                    self.children.len(),
                    branching
                ));
            }
        }
        for child in &self.children {
            if child.depth != self.depth + 1 {
                issues.push(format!(
                    "child depth {} does not follow parent depth {}",
                    child.depth, self.depth
                ));
            }
            child.check_node(branching, alpha, issues);
        }
    }
}

/// Search parameters. Defaults are the published settings: depth 5,
/// branching 3, exploration sqrt(2), 10 iterations, plausibility weight 0.2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub max_depth: u32,
    pub branching: u32,
    pub exploration_constant: f64,
    pub iterations: u32,
    pub plausibility_weight: f64,
    pub rollout_cap: u32,
    pub seed: u64,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            max_depth: 5,
            branching: 3,
            exploration_constant: std::f64::consts::SQRT_2,
            iterations: 10,
            plausibility_weight: 0.2,
            rollout_cap: 10,
            seed: 42,
        }
    }
}

impl SearchParams {
    /// Preset for reasoning-heavy material: deeper search, 20 iterations.
    pub fn reasoning_heavy() -> Self {
        SearchParams {
            iterations: 20,
            ..SearchParams::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.branching < 2 {
            return Err(format!("branching must be >= 2, got {}", self.branching));
        }
        if self.max_depth == 0 {
            return Err("max_depth must be positive".into());
        }
        if self.iterations == 0 {
            return Err("iterations must be positive".into());
        }
        if !self.exploration_constant.is_finite() || self.exploration_constant <= 0.0 {
            return Err("exploration_constant must be positive".into());
        }
        if !self.plausibility_weight.is_finite() || self.plausibility_weight < 0.0 {
            return Err("plausibility_weight must be non-negative".into());
        }
        if self.rollout_cap == 0 {
            return Err("rollout_cap must be positive".into());
        }
        Ok(())
    }
}

/// The two-part trajectory reward: binary answer match plus the weighted
/// plausibility judgment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reward {
    pub match_score: f64,
    pub plausibility: f64,
    pub total: f64,
}

impl Reward {
    pub fn new(matched: bool, plausibility: f64, alpha: f64) -> Reward {
        let r1 = if matched { 1.0 } else { 0.0 };
        let r2 = plausibility.clamp(0.0, 1.0);
        Reward {
            match_score: r1,
            plausibility: r2,
            total: r1 + alpha * r2,
        }
    }

    pub fn zero() -> Reward {
        Reward {
            match_score: 0.0,
            plausibility: 0.0,
            total: 0.0,
        }
    }

    pub fn is_match(&self) -> bool {
        self.match_score == 1.0
    }
}

/// One recovered misconception: the concept it falls under, the summarized
/// error pattern, and the trajectories that evidence it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisconceptionEntry {
    pub concept: Concept,
    pub misconception: String,
    pub supporting_trajectories: Vec<SupportingTrajectory>,
    pub support_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportingTrajectory {
    pub record_id: String,
    pub trajectory: ReasoningTrajectory,
}

/// A student's misconception prototype: concept -> misconception map plus the
/// records whose reasoning could not be recovered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisconceptionPrototype {
    pub student_id: String,
    pub entries: Vec<MisconceptionEntry>,
    pub unrecovered_record_ids: Vec<String>,
}

impl MisconceptionPrototype {
    pub fn lookup(&self, concept: &Concept) -> Option<&MisconceptionEntry> {
        self.entries.iter().find(|e| &e.concept == concept)
    }
}

/// A distractor generated for one test question, with the simulated
/// reasoning that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonalizedDistractor {
    pub question_record_id: String,
    pub distractor: AnswerText,
    pub rationale_trajectory: ReasoningTrajectory,
    pub used_misconceptions: Vec<Concept>,
}

/// A single invariant violation found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationIssue {
    pub record_id: Option<String>,
    pub rule: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.record_id {
            Some(id) => write!(f, "record {}: {}", id, self.rule),
            None => f.write_str(&self.rule),
        }
    }
}

/// Checks every dataset invariant and returns one issue per violation.
/// An empty result means the dataset is well formed.
pub fn validate_dataset(dataset: &StudentDataset) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let mut seen = HashSet::new();
    for (record, is_test) in dataset
        .past_records
        .iter()
        .map(|r| (r, false))
        .chain(dataset.test_records.iter().map(|r| (r, true)))
    {
        if !seen.insert(record.record_id.clone()) {
            issues.push(ValidationIssue {
                record_id: Some(record.record_id.clone()),
                rule: "duplicate record_id".into(),
            });
        }
        if answers_equivalent(
            record.chosen_answer.as_str(),
            record.correct_answer.as_str(),
        ) {
            let set = if is_test { "test" } else { "past" };
            issues.push(ValidationIssue {
                record_id: Some(record.record_id.clone()),
                rule: format!("{set} record is not an error record (chosen equals correct)"),
            });
        }
    }
    issues
}

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path} line {line}: {source}")]
    JsonLine {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("parse error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> DomainError {
    DomainError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes records as line-delimited JSON, one record per line.
pub fn write_records(path: &Path, records: &[QARecord]) -> Result<(), DomainError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
    }
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| DomainError::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        writeln!(file, "{line}").map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<QARecord>, DomainError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| DomainError::JsonLine {
            path: path.to_path_buf(),
            line: idx + 1,
            source: e,
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Loads a dataset directory (`past.jsonl` + `test.jsonl`, records carrying
/// their `student_id`) into per-student datasets, ordered by first
/// appearance in the past file.
pub fn load_dataset_dir(dir: &Path) -> Result<Vec<StudentDataset>, DomainError> {
    let past = read_records(&dir.join("past.jsonl"))?;
    let test = read_records(&dir.join("test.jsonl"))?;
    let mut order: Vec<String> = Vec::new();
    let mut datasets: Vec<StudentDataset> = Vec::new();
    for record in past {
        let sid = record.student_id.clone();
        let idx = match order.iter().position(|s| *s == sid) {
            Some(i) => i,
            None => {
                order.push(sid.clone());
                datasets.push(StudentDataset {
                    student_id: sid,
                    past_records: Vec::new(),
                    test_records: Vec::new(),
                });
                order.len() - 1
            }
        };
        datasets[idx].past_records.push(record);
    }
    for record in test {
        let sid = record.student_id.clone();
        let idx = match order.iter().position(|s| *s == sid) {
            Some(i) => i,
            None => {
                order.push(sid.clone());
                datasets.push(StudentDataset {
                    student_id: sid,
                    past_records: Vec::new(),
                    test_records: Vec::new(),
                });
                order.len() - 1
            }
        };
        datasets[idx].test_records.push(record);
    }
    Ok(datasets)
}

/// Writes datasets into `past.jsonl` and `test.jsonl` under `dir`.
pub fn write_dataset_dir(dir: &Path, datasets: &[StudentDataset]) -> Result<(), DomainError> {
    let past: Vec<QARecord> = datasets
        .iter()
        .flat_map(|d| d.past_records.iter().cloned())
        .collect();
    let test: Vec<QARecord> = datasets
        .iter()
        .flat_map(|d| d.test_records.iter().cloned())
        .collect();
    write_records(&dir.join("past.jsonl"), &past)?;
    write_records(&dir.join("test.jsonl"), &test)?;
    Ok(())
}

/// Writes one prototype as a pretty-printed JSON document named after the
/// student.
pub fn write_prototype(
    dir: &Path,
    prototype: &MisconceptionPrototype,
) -> Result<PathBuf, DomainError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(format!("{}.json", prototype.student_id));
    let body = serde_json::to_string_pretty(prototype).map_err(|e| DomainError::Json {
        path: path.clone(),
        source: e,
    })?;
    fs::write(&path, body + "\n").map_err(|e| io_err(&path, e))?;
    Ok(path)
}

pub fn read_prototype(path: &Path) -> Result<MisconceptionPrototype, DomainError> {
    let body = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&body).map_err(|e| DomainError::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, chosen: &str, correct: &str) -> QARecord {
        QARecord {
            record_id: id.to_string(),
            student_id: "s1".to_string(),
            stem: "Solve for x: -2x < 6".to_string(),
            correct_answer: correct.into(),
            chosen_answer: chosen.into(),
            options: None,
            timestamp: None,
        }
    }

    #[test]
    fn concept_normalization() {
        assert_eq!(Concept::new(" Fractions ").unwrap().label(), "fractions");
        assert_eq!(
            Concept::new("Inequality, Solving!").unwrap().label(),
            "inequality solving"
        );
        assert_eq!(Concept::new(" ;; "), None);
        assert_eq!(Concept::new("A   B").unwrap().label(), "a b");
    }

    #[test]
    fn validate_flags_non_error_test_record() {
        let ds = StudentDataset {
            student_id: "s1".into(),
            past_records: vec![],
            test_records: vec![record("r7", "x > -3", "x > -3")],
        };
        let issues = validate_dataset(&ds);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].record_id.as_deref(), Some("r7"));
        assert!(issues[0].rule.contains("not an error record"));
    }

    #[test]
    fn validate_accepts_well_formed_dataset() {
        let ds = StudentDataset {
            student_id: "s1".into(),
            past_records: vec![record("r1", "x < -3", "x > -3")],
            test_records: vec![record("r2", "x < 8", "x > -3")],
        };
        assert!(validate_dataset(&ds).is_empty());
    }

    #[test]
    fn validate_flags_duplicate_ids() {
        let ds = StudentDataset {
            student_id: "s1".into(),
            past_records: vec![
                record("r1", "x < -3", "x > -3"),
                record("r1", "x < 8", "x > -3"),
            ],
            test_records: vec![],
        };
        let issues = validate_dataset(&ds);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].rule, "duplicate record_id");
    }

    #[test]
    fn reward_total_recomputes() {
        let r = Reward::new(true, 0.8, 0.2);
        assert!((r.total - (r.match_score + 0.2 * r.plausibility)).abs() < 1e-12);
        assert!((r.total - 1.16).abs() < 1e-12);
        assert_eq!(Reward::new(false, 2.5, 0.2).plausibility, 1.0);
    }

    #[test]
    fn search_params_defaults_and_validation() {
        let p = SearchParams::default();
        assert_eq!(p.max_depth, 5);
        assert_eq!(p.branching, 3);
        assert_eq!(p.exploration_constant, std::f64::consts::SQRT_2);
        assert_eq!(p.iterations, 10);
        assert_eq!(p.plausibility_weight, 0.2);
        assert!(p.validate().is_ok());
        assert_eq!(SearchParams::reasoning_heavy().iterations, 20);

        let bad = SearchParams {
            branching: 1,
            ..SearchParams::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn record_round_trips_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("past.jsonl");
        let records = vec![record("r1", "x < -3", "x > -3")];
        write_records(&path, &records).unwrap();
        let loaded = read_records(&path).unwrap();
        assert_eq!(loaded, records);
    }

    #[test]
    fn dataset_dir_groups_by_student() {
        let dir = tempfile::tempdir().unwrap();
        let mut r1 = record("a-1", "x < -3", "x > -3");
        r1.student_id = "a".into();
        let mut r2 = record("b-1", "x < 8", "x > -3");
        r2.student_id = "b".into();
        let mut t1 = record("a-t1", "x < 8", "x > -3");
        t1.student_id = "a".into();
        write_records(&dir.path().join("past.jsonl"), &[r1.clone(), r2.clone()]).unwrap();
        write_records(&dir.path().join("test.jsonl"), &[t1.clone()]).unwrap();
        let datasets = load_dataset_dir(dir.path()).unwrap();
        assert_eq!(datasets.len(), 2);
        assert_eq!(datasets[0].student_id, "a");
        assert_eq!(datasets[0].past_records, vec![r1]);
        assert_eq!(datasets[0].test_records, vec![t1]);
        assert_eq!(datasets[1].student_id, "b");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn step_strategy() -> impl Strategy<Value = ReasoningStep> {
            (
                "[ -~]{0,24}",
                "[ -~]{0,16}",
                prop::option::of(any::<bool>()),
            )
                .prop_map(|(text, result, flag)| ReasoningStep {
                    text,
                    intermediate_result: result,
                    is_erroneous: flag,
                })
        }

        fn trajectory_strategy() -> impl Strategy<Value = ReasoningTrajectory> {
            (
                prop::collection::vec(step_strategy(), 0..4),
                "[ -~]{1,12}",
                prop_oneof![
                    Just(TrajectorySource::Simulation),
                    Just(TrajectorySource::TerminalStop)
                ],
            )
                .prop_map(|(steps, answer, source)| ReasoningTrajectory {
                    steps,
                    final_answer: answer.into(),
                    source,
                })
        }

        proptest! {
            #[test]
            fn record_serialization_round_trips(
                record_id in "[a-z0-9-]{1,12}",
                student_id in "[a-z0-9]{1,8}",
                stem in "[ -~]{0,40}",
                correct in "[ -~]{1,10}",
                chosen in "[ -~]{1,10}",
                options in prop::option::of(prop::collection::vec("[ -~]{1,6}", 0..4)),
                timestamp in prop::option::of(any::<i64>()),
            ) {
                let record = QARecord {
                    record_id,
                    student_id,
                    stem,
                    correct_answer: correct.into(),
                    chosen_answer: chosen.into(),
                    options: options.map(|o| o.into_iter().map(AnswerText::from).collect()),
                    timestamp,
                };
                let json = serde_json::to_string(&record).unwrap();
                prop_assert_eq!(serde_json::from_str::<QARecord>(&json).unwrap(), record);
            }

            #[test]
            fn trajectory_serialization_round_trips(trajectory in trajectory_strategy()) {
                let json = serde_json::to_string(&trajectory).unwrap();
                prop_assert_eq!(
                    serde_json::from_str::<ReasoningTrajectory>(&json).unwrap(),
                    trajectory
                );
            }

            #[test]
            fn reward_total_always_recomputes(
                matched in any::<bool>(),
                plausibility in -1.0f64..2.0,
                alpha in 0.0f64..1.0,
            ) {
                let reward = Reward::new(matched, plausibility, alpha);
                prop_assert!((reward.total
                    - (reward.match_score + alpha * reward.plausibility))
                    .abs() < 1e-12);
                prop_assert!(reward.plausibility >= 0.0 && reward.plausibility <= 1.0);
                prop_assert!(reward.total >= 0.0 && reward.total <= 1.0 + alpha);
            }
        }
    }

    #[test]
    fn prototype_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let proto = MisconceptionPrototype {
            student_id: "s1".into(),
            entries: vec![MisconceptionEntry {
                concept: Concept::new("inequality solving").unwrap(),
                misconception: "divides by a negative without flipping".into(),
                supporting_trajectories: vec![SupportingTrajectory {
                    record_id: "r1".into(),
                    trajectory: ReasoningTrajectory {
                        steps: vec![ReasoningStep {
                            text: "Divide both sides by -2 without flipping the inequality sign"
                                .into(),
                            intermediate_result: "x < -3".into(),
                            is_erroneous: Some(true),
                        }],
                        final_answer: "x < -3".into(),
                        source: TrajectorySource::Simulation,
                    },
                }],
                support_count: 1,
            }],
            unrecovered_record_ids: vec!["r2".into()],
        };
        let path = write_prototype(dir.path(), &proto).unwrap();
        let loaded = read_prototype(&path).unwrap();
        assert_eq!(loaded, proto);
    }
}
