//! Stage 1 orchestration: per-record concept extraction and trajectory
//! recovery, then per-concept summarization into the student's misconception
//! prototype.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::ModelBackend;
use crate::domain::{
    validate_dataset, Concept, MisconceptionEntry, MisconceptionPrototype, ReasoningTrajectory,
    SearchParams, StudentDataset, SupportingTrajectory, ValidationIssue,
};
use crate::mcts::{recover_with, SearchOptions, SearchStats};
use crate::par::map_records;

/// Ablation switches. Each one disables a single pipeline component:
/// `no_concept` replaces extraction with one universal concept, `no_terminal`
/// removes stop-nodes from the search, `no_eval` zeroes the plausibility
/// weight, and `no_summary` skips summarization in favor of raw trajectories.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    pub no_concept: bool,
    pub no_terminal: bool,
    pub no_eval: bool,
    pub no_summary: bool,
}

/// The concept label that stands in for extraction under `no_concept`.
pub const UNIVERSAL_CONCEPT: &str = "all";

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("dataset for student {student_id} is invalid: {issues:?}")]
    InvalidDataset {
        student_id: String,
        issues: Vec<ValidationIssue>,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct RecordReportEntry {
    pub record_id: String,
    pub matched: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub iterations_run: u32,
    pub nodes_created: usize,
}

/// Per-student build outcome counts, timings, and per-record detail.
#[derive(Debug, Clone, Serialize)]
pub struct BuildReport {
    pub student_id: String,
    pub n_past_records: usize,
    pub n_recovered: usize,
    pub n_unrecovered: usize,
    pub recovery_rate: f64,
    pub n_entries: usize,
    pub wall_time_ms: u128,
    pub per_record: Vec<RecordReportEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

struct RecordOutcome {
    record_id: String,
    concepts: Vec<Concept>,
    recovered: Option<(ReasoningTrajectory, f64)>,
    error: Option<String>,
    stats: SearchStats,
}

/// Groups `(concepts, payload)` pairs into per-concept lists. A payload
/// appears once under each of its concepts (duplicates within one record
/// collapse); concept order is first appearance.
pub fn group_by_concept<T: Clone>(pairs: &[(Vec<Concept>, T)]) -> Vec<(Concept, Vec<T>)> {
    let mut groups: Vec<(Concept, Vec<T>)> = Vec::new();
    for (concepts, payload) in pairs {
        let mut seen_here: Vec<&Concept> = Vec::new();
        for concept in concepts {
            if seen_here.contains(&concept) {
                continue;
            }
            seen_here.push(concept);
            match groups.iter_mut().find(|(c, _)| c == concept) {
                Some((_, list)) => list.push(payload.clone()),
                None => groups.push((concept.clone(), vec![payload.clone()])),
            }
        }
    }
    groups
}

/// Builds one student's misconception prototype from their past records.
/// Individual record failures are recorded and skipped; the build itself
/// only fails on an invalid dataset.
pub fn build_prototype(
    dataset: &StudentDataset,
    params: &SearchParams,
    backend: &dyn ModelBackend,
    flags: AblationFlags,
    workers: usize,
) -> Result<(MisconceptionPrototype, BuildReport), BuildError> {
    let started = Instant::now();
    let issues = validate_dataset(dataset);
    if !issues.is_empty() {
        return Err(BuildError::InvalidDataset {
            student_id: dataset.student_id.clone(),
            issues,
        });
    }

    let effective_params = SearchParams {
        plausibility_weight: if flags.no_eval {
            0.0
        } else {
            params.plausibility_weight
        },
        ..params.clone()
    };
    let options = SearchOptions {
        attach_terminal: !flags.no_terminal,
    };

    let outcomes: Vec<RecordOutcome> = map_records(&dataset.past_records, workers, |record| {
        let concepts = if flags.no_concept {
            Ok(vec![
                Concept::new(UNIVERSAL_CONCEPT).expect("constant label")
            ])
        } else {
            backend.extract_concepts(record)
        };
        let concepts = match concepts {
            Ok(concepts) => concepts,
            Err(err) => {
                return RecordOutcome {
                    record_id: record.record_id.clone(),
                    concepts: Vec::new(),
                    recovered: None,
                    error: Some(err.to_string()),
                    stats: SearchStats::default(),
                };
            }
        };
        match recover_with(record, &effective_params, backend, options) {
            Ok(result) => RecordOutcome {
                record_id: record.record_id.clone(),
                concepts,
                recovered: result
                    .matched
                    .then(|| {
                        result
                            .best_trajectory
                            .map(|t| (t, result.best_plausibility))
                    })
                    .flatten(),
                error: None,
                stats: result.stats,
            },
            Err(err) => {
                let stats = match &err {
                    crate::mcts::RecoverError::Backend { stats, .. } => stats.clone(),
                    _ => SearchStats::default(),
                };
                RecordOutcome {
                    record_id: record.record_id.clone(),
                    concepts,
                    recovered: None,
                    error: Some(err.to_string()),
                    stats,
                }
            }
        }
    });

    let mut warnings = Vec::new();
    let mut pairs: Vec<(Vec<Concept>, SupportingTrajectory)> = Vec::new();
    let mut unrecovered = Vec::new();
    let mut per_record = Vec::new();
    for outcome in &outcomes {
        per_record.push(RecordReportEntry {
            record_id: outcome.record_id.clone(),
            matched: outcome.recovered.is_some(),
            error: outcome.error.clone(),
            iterations_run: outcome.stats.iterations_run,
            nodes_created: outcome.stats.nodes_created,
        });
        match &outcome.recovered {
            Some((trajectory, _)) => pairs.push((
                outcome.concepts.clone(),
                SupportingTrajectory {
                    record_id: outcome.record_id.clone(),
                    trajectory: trajectory.clone(),
                },
            )),
            None => unrecovered.push(outcome.record_id.clone()),
        }
    }

    let mut entries = Vec::new();
    for (concept, supporting) in group_by_concept(&pairs) {
        let trajectories: Vec<ReasoningTrajectory> =
            supporting.iter().map(|s| s.trajectory.clone()).collect();
        let misconception = if flags.no_summary {
            raw_concatenation(&trajectories)
        } else {
            match backend.summarize(&concept, &trajectories) {
                Ok(text) => text,
                Err(err) => {
                    warnings.push(format!(
                        "summarize failed for concept '{concept}': {err}; stored raw trajectories"
                    ));
                    raw_concatenation(&trajectories)
                }
            }
        };
        entries.push(MisconceptionEntry {
            concept,
            misconception,
            support_count: supporting.len(),
            supporting_trajectories: supporting,
        });
    }

    let n_recovered = pairs.len();
    let report = BuildReport {
        student_id: dataset.student_id.clone(),
        n_past_records: dataset.past_records.len(),
        n_recovered,
        n_unrecovered: unrecovered.len(),
        recovery_rate: if dataset.past_records.is_empty() {
            0.0
        } else {
            n_recovered as f64 / dataset.past_records.len() as f64
        },
        n_entries: entries.len(),
        wall_time_ms: started.elapsed().as_millis(),
        per_record,
        warnings,
    };
    let prototype = MisconceptionPrototype {
        student_id: dataset.student_id.clone(),
        entries,
        unrecovered_record_ids: unrecovered,
    };
    Ok((prototype, report))
}

fn raw_concatenation(trajectories: &[ReasoningTrajectory]) -> String {
    trajectories
        .iter()
        .map(|t| t.render_text())
        .collect::<Vec<_>>()
        .join("\n---\n")
}
