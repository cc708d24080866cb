//! Stage 2: given a new question and a student's misconception prototype,
//! retrieve the relevant misconceptions and generate a personalized
//! distractor.

use serde::Serialize;
use thiserror::Error;

use crate::backend::{BackendError, ModelBackend};
use crate::domain::{
    AnswerText, Concept, MisconceptionPrototype, PersonalizedDistractor, QARecord,
};
use crate::eval::answers_equivalent;
use crate::mcts::derive_seed;
use crate::par::map_records;
use crate::prototype::UNIVERSAL_CONCEPT;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A test question as the generator sees it: no chosen answer. Generation
/// must not peek at what the student actually picked.
#[derive(Debug, Clone, Serialize)]
pub struct Question {
    pub record_id: String,
    pub stem: String,
    pub correct_answer: AnswerText,
}

impl From<&QARecord> for Question {
    fn from(record: &QARecord) -> Question {
        Question {
            record_id: record.record_id.clone(),
            stem: record.stem.clone(),
            correct_answer: record.correct_answer.clone(),
        }
    }
}

impl Question {
    /// Concept extraction takes a full record; the chosen answer of a new
    /// question is unknown, so it probes with an empty one.
    fn probe_record(&self, student_id: &str) -> QARecord {
        QARecord {
            record_id: self.record_id.clone(),
            student_id: student_id.to_string(),
            stem: self.stem.clone(),
            correct_answer: self.correct_answer.clone(),
            chosen_answer: AnswerText(String::new()),
            options: None,
            timestamp: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("generation failed for question {record_id}: {reason}")]
    GenerationFailure { record_id: String, reason: String },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GenOptions {
    /// Mirror of the build-side ablation: extract a single universal concept
    /// instead of calling the extractor.
    pub no_concept: bool,
}

/// Exact-match lookup of misconception texts for the question's concepts,
/// preserving question-concept order. Unmatched concepts contribute nothing.
pub fn retrieve_misconceptions(
    prototype: &MisconceptionPrototype,
    question_concepts: &[Concept],
) -> Vec<String> {
    let mut out = Vec::new();
    for concept in question_concepts {
        if let Some(entry) = prototype.lookup(concept) {
            out.push(entry.misconception.clone());
        }
    }
    out
}

/// Generates one personalized distractor. The output is validated to differ
/// from the correct answer, with one retry on violation.
pub fn generate(
    question: &Question,
    prototype: &MisconceptionPrototype,
    backend: &dyn ModelBackend,
    seed: u64,
    options: GenOptions,
) -> Result<PersonalizedDistractor, GenError> {
    let fail = |reason: String| GenError::GenerationFailure {
        record_id: question.record_id.clone(),
        reason,
    };
    let concepts = if options.no_concept {
        vec![Concept::new(UNIVERSAL_CONCEPT).expect("constant label")]
    } else {
        match backend.extract_concepts(&question.probe_record(&prototype.student_id)) {
            Ok(concepts) => concepts,
            Err(BackendError::EmptyExtraction) => Vec::new(),
            Err(err) => return Err(fail(err.to_string())),
        }
    };
    let used_misconceptions: Vec<Concept> = concepts
        .iter()
        .filter(|c| prototype.lookup(c).is_some())
        .cloned()
        .collect();
    let misconceptions = retrieve_misconceptions(prototype, &concepts);

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &question.record_id));
    let mut last_reason = String::new();
    for _ in 0..2 {
        match backend.predict_distractor(
            &question.stem,
            &question.correct_answer,
            &misconceptions,
            &mut rng,
        ) {
            Ok((answer, trajectory)) => {
                if answers_equivalent(answer.as_str(), question.correct_answer.as_str()) {
                    last_reason = "produced the correct answer".into();
                    continue;
                }
                return Ok(PersonalizedDistractor {
                    question_record_id: question.record_id.clone(),
                    distractor: answer,
                    rationale_trajectory: trajectory,
                    used_misconceptions,
                });
            }
            Err(err) => last_reason = err.to_string(),
        }
    }
    Err(fail(last_reason))
}

/// Batch outcome: generated lines plus per-question failures. A failure on
/// one question never aborts the batch.
#[derive(Debug, Clone, Serialize)]
pub struct GenerationBatch {
    pub student_id: String,
    pub generated: Vec<PersonalizedDistractor>,
    pub failures: Vec<GenerationFailureEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerationFailureEntry {
    pub record_id: String,
    pub reason: String,
}

pub fn generate_batch(
    questions: &[Question],
    prototype: &MisconceptionPrototype,
    backend: &dyn ModelBackend,
    seed: u64,
    options: GenOptions,
    workers: usize,
) -> GenerationBatch {
    let results = map_records(questions, workers, |question| {
        generate(question, prototype, backend, seed, options)
    });
    let mut generated = Vec::new();
    let mut failures = Vec::new();
    for (question, result) in questions.iter().zip(results) {
        match result {
            Ok(distractor) => generated.push(distractor),
            Err(err) => failures.push(GenerationFailureEntry {
                record_id: question.record_id.clone(),
                reason: err.to_string(),
            }),
        }
    }
    GenerationBatch {
        student_id: prototype.student_id.clone(),
        generated,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::scripted::ScriptedBackend;
    use crate::domain::{MisconceptionEntry, ReasoningTrajectory, TrajectorySource};

    fn prototype_with(concept: &str, misconception: &str) -> MisconceptionPrototype {
        MisconceptionPrototype {
            student_id: "s1".into(),
            entries: vec![MisconceptionEntry {
                concept: Concept::new(concept).unwrap(),
                misconception: misconception.into(),
                supporting_trajectories: vec![],
                support_count: 1,
            }],
            unrecovered_record_ids: vec![],
        }
    }

    #[test]
    fn retrieval_is_exact_match_in_question_order() {
        let mut prototype = prototype_with("inequality solving", "m1");
        prototype.entries.push(MisconceptionEntry {
            concept: Concept::new("transposition").unwrap(),
            misconception: "m2".into(),
            supporting_trajectories: vec![],
            support_count: 1,
        });
        let concepts = vec![
            Concept::new("transposition").unwrap(),
            Concept::new("inequality solving").unwrap(),
        ];
        assert_eq!(
            retrieve_misconceptions(&prototype, &concepts),
            vec!["m2", "m1"]
        );

        let none = vec![Concept::new("geometry").unwrap()];
        assert!(retrieve_misconceptions(&prototype, &none).is_empty());
    }

    #[test]
    fn generates_from_the_student_misconception() {
        let backend = ScriptedBackend::default();
        let prototype = prototype_with(
            "inequality solving",
            "divides both sides of an inequality by a negative number without flipping the inequality sign",
        );
        let question = Question {
            record_id: "q1".into(),
            stem: "Solve for x: -3x < 9".into(),
            correct_answer: "x > -3".into(),
        };
        let out = generate(&question, &prototype, &backend, 42, GenOptions::default()).unwrap();
        assert_eq!(out.distractor.as_str(), "x < -3");
        assert_eq!(out.used_misconceptions.len(), 1);
        assert!(!answers_equivalent(
            out.distractor.as_str(),
            question.correct_answer.as_str()
        ));
    }

    #[test]
    fn empty_retrieval_still_generates() {
        let backend = ScriptedBackend::default();
        let prototype = MisconceptionPrototype {
            student_id: "s1".into(),
            entries: vec![],
            unrecovered_record_ids: vec![],
        };
        let question = Question {
            record_id: "q1".into(),
            stem: "Solve for x: -3x < 9".into(),
            correct_answer: "x > -3".into(),
        };
        let out = generate(&question, &prototype, &backend, 42, GenOptions::default()).unwrap();
        assert!(out.used_misconceptions.is_empty());
        assert!(!answers_equivalent(out.distractor.as_str(), "x > -3"));
    }

    #[test]
    fn unanswerable_question_surfaces_as_failure_and_batch_continues() {
        let backend = ScriptedBackend::default();
        let prototype = prototype_with("inequality solving", "whatever");
        let questions = vec![
            Question {
                record_id: "q1".into(),
                stem: "not parseable at all".into(),
                correct_answer: "1".into(),
            },
            Question {
                record_id: "q2".into(),
                stem: "Solve for x: -3x < 9".into(),
                correct_answer: "x > -3".into(),
            },
        ];
        let batch = generate_batch(
            &questions,
            &prototype,
            &backend,
            42,
            GenOptions::default(),
            1,
        );
        assert_eq!(batch.generated.len(), 1);
        assert_eq!(batch.generated[0].question_record_id, "q2");
        assert_eq!(batch.failures.len(), 1);
        assert_eq!(batch.failures[0].record_id, "q1");
    }

    #[test]
    fn generation_is_deterministic_for_a_seed() {
        let backend = ScriptedBackend::default();
        let prototype = MisconceptionPrototype {
            student_id: "s1".into(),
            entries: vec![],
            unrecovered_record_ids: vec![],
        };
        let question = Question {
            record_id: "q9".into(),
            stem: "Solve for x: 4x + 2 < 10".into(),
            correct_answer: "x < 2".into(),
        };
        let a = generate(&question, &prototype, &backend, 7, GenOptions::default()).unwrap();
        let b = generate(&question, &prototype, &backend, 7, GenOptions::default()).unwrap();
        assert_eq!(a.distractor, b.distractor);
        assert_eq!(a.rationale_trajectory, b.rationale_trajectory);
    }

    fn _assert_trajectory_type(t: ReasoningTrajectory) -> TrajectorySource {
        t.source
    }
}
