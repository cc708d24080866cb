//! The model oracle behind every model-mediated operation: concept
//! extraction, step proposal, rollout, plausibility scoring, misconception
//! summarization, and distractor prediction.
//!
//! Two implementations exist. [`scripted::ScriptedBackend`] is a
//! deterministic rule-pack oracle over a synthetic arithmetic domain, used
//! for offline verification. [`remote::RemoteBackend`] speaks the common
//! chat-completion wire shape against any configurable endpoint, fronted by a
//! content-addressed response cache.

pub mod cache;
pub mod prompts;
pub mod remote;
pub mod scripted;

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AnswerText, Concept, QARecord, ReasoningStep, ReasoningTrajectory};

/// The joint output of one expansion call: the correct next step plus B-1
/// distinct erroneous alternatives, generated together so duplicates cannot
/// arise across separate calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepProposal {
    pub correct_step: ReasoningStep,
    pub erroneous_steps: Vec<ReasoningStep>,
}

impl StepProposal {
    /// Checks the structural contract: B-1 erroneous steps, pairwise distinct
    /// by (text, intermediate_result), none equal to the correct step.
    pub fn check(&self, branching: u32) -> Result<(), String> {
        if self.erroneous_steps.len() != branching as usize - 1 {
            return Err(format!(
                "expected {} erroneous steps, got {}",
                branching - 1,
                self.erroneous_steps.len()
            ));
        }
        let key = |s: &ReasoningStep| (s.text.clone(), s.intermediate_result.clone());
        let correct = key(&self.correct_step);
        for (i, step) in self.erroneous_steps.iter().enumerate() {
            if key(step) == correct {
                return Err("erroneous step equals the correct step".into());
            }
            for other in &self.erroneous_steps[i + 1..] {
                if key(step) == key(other) {
                    return Err("duplicate erroneous steps".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("remote backend unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("model returned no usable concept")]
    EmptyExtraction,
    #[error("no applicable step from the current state")]
    NoApplicableStep,
    #[error("step proposal could not be parsed: {0}")]
    MalformedProposal(String),
    #[error("rollout hit the step cap without reaching a final answer")]
    RolloutDivergence,
    #[error("model kept producing the correct answer")]
    DegenerateOutput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Scripted,
    Remote,
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackendKind::Scripted => f.write_str("scripted"),
            BackendKind::Remote => f.write_str("remote"),
        }
    }
}

/// Backend selection and remote-endpoint settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    /// Operation name -> template text. Missing operations use the built-in
    /// defaults from [`prompts`].
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub prompt_templates: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_timeout_s")]
    pub request_timeout_s: u64,
}

fn default_timeout_s() -> u64 {
    60
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Scripted,
            endpoint: None,
            model_name: None,
            prompt_templates: BTreeMap::new(),
            cache_dir: None,
            request_timeout_s: default_timeout_s(),
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.kind == BackendKind::Remote {
            if self.endpoint.as_deref().unwrap_or("").is_empty() {
                return Err("remote backend requires an endpoint".into());
            }
            if self.model_name.as_deref().unwrap_or("").is_empty() {
                return Err("remote backend requires a model_name".into());
            }
        }
        if self.request_timeout_s == 0 {
            return Err("request_timeout_s must be positive".into());
        }
        Ok(())
    }
}

/// The oracle interface. Implementations must tolerate concurrent calls from
/// independent record-recovery workers; all per-call randomness comes through
/// the caller-owned `rng`, so a fixed seed reproduces every output.
pub trait ModelBackend: Send + Sync {
    /// Extracts the knowledge concepts a record exercises (at least one), in
    /// normalized, deduplicated form.
    fn extract_concepts(&self, record: &QARecord) -> Result<Vec<Concept>, BackendError>;

    /// Jointly generates the correct next step and `branching - 1` distinct
    /// erroneous alternatives from the current partial trajectory.
    fn propose_children(
        &self,
        stem: &str,
        trajectory_so_far: &[ReasoningStep],
        branching: u32,
        rng: &mut dyn RngCore,
    ) -> Result<StepProposal, BackendError>;

    /// Extends the partial trajectory with at most `cap` further steps until
    /// a final answer is reached.
    fn rollout(
        &self,
        stem: &str,
        trajectory_so_far: &[ReasoningStep],
        cap: u32,
        rng: &mut dyn RngCore,
    ) -> Result<ReasoningTrajectory, BackendError>;

    /// Commits the latest intermediate result as a final answer without any
    /// further reasoning. May return empty text when there is nothing to
    /// commit (the caller treats that as a reward-zero trajectory).
    fn conclude(&self, stem: &str, trajectory_so_far: &[ReasoningStep]) -> AnswerText;

    /// How realistic the trajectory is as genuine student reasoning, in
    /// [0, 1]. Never fails; scoring problems degrade to 0.5.
    fn score_plausibility(
        &self,
        stem: &str,
        trajectory: &ReasoningTrajectory,
        correct_answer: &AnswerText,
        chosen_answer: &AnswerText,
    ) -> f64;

    /// Distills the trajectories associated with one concept into a
    /// generalized misconception statement.
    fn summarize(
        &self,
        concept: &Concept,
        trajectories: &[ReasoningTrajectory],
    ) -> Result<String, BackendError>;

    /// Simulates the student's faulty reasoning on a new question and returns
    /// an incorrect answer with the trajectory that explains it.
    fn predict_distractor(
        &self,
        stem: &str,
        correct_answer: &AnswerText,
        misconceptions: &[String],
        rng: &mut dyn RngCore,
    ) -> Result<(AnswerText, ReasoningTrajectory), BackendError>;
}
