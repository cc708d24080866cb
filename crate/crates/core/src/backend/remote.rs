//! The remote backend: chat-completion calls against a configurable
//! endpoint, with bounded retries, one repair re-prompt for unparseable
//! structured replies, and a content-addressed response cache.

use std::collections::BTreeMap;
use std::time::Duration;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    AnswerText, Concept, QARecord, ReasoningStep, ReasoningTrajectory, TrajectorySource,
};
use crate::eval::answers_equivalent;

use super::cache::ResponseCache;
use super::prompts::{
    self, OP_EXTRACT_CONCEPTS, OP_PREDICT_DISTRACTOR, OP_PROPOSE_CHILDREN, OP_ROLLOUT,
    OP_SCORE_PLAUSIBILITY, OP_SUMMARIZE,
};
use super::{BackendConfig, BackendError, ModelBackend, StepProposal};

/// Environment variable holding the bearer token for the remote endpoint.
pub const AUTH_TOKEN_ENV: &str = "PDGEN_API_TOKEN";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ChatResponseMessage {
    content: String,
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint returned malformed body: {0}")]
    MalformedBody(String),
}

/// One chat-completion round trip. Swappable so the backend's retry, repair,
/// and caching logic is testable without a network.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

/// HTTP transport speaking the `POST {endpoint}/chat/completions` shape.
pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    token: Option<String>,
}

impl HttpTransport {
    pub fn new(endpoint: &str, timeout_s: u64, token: Option<String>) -> HttpTransport {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(timeout_s)))
            .build();
        HttpTransport {
            agent: config.into(),
            url: format!("{}/chat/completions", endpoint.trim_end_matches('/')),
            token,
        }
    }
}

impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let body = serde_json::to_string(request)
            .map_err(|e| TransportError::MalformedBody(e.to_string()))?;
        let mut builder = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json");
        if let Some(token) = &self.token {
            builder = builder.header("authorization", &format!("Bearer {token}"));
        }
        let mut response = builder
            .send(&body)
            .map_err(|e| TransportError::Transport(e.to_string()))?;
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Transport(e.to_string()))?;
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| TransportError::MalformedBody(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| TransportError::MalformedBody("no choices in response".into()))
    }
}

/// Transport retry policy: total attempts and base backoff delay (doubled
/// per retry).
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        // One initial try plus three retries with exponential backoff.
        RetryPolicy {
            attempts: 4,
            base_delay: Duration::from_millis(200),
        }
    }
}

impl RetryPolicy {
    /// No delays, for tests.
    pub fn immediate(attempts: u32) -> RetryPolicy {
        RetryPolicy {
            attempts,
            base_delay: Duration::ZERO,
        }
    }
}

pub struct RemoteBackend {
    transport: Box<dyn ChatTransport>,
    model_name: String,
    templates: BTreeMap<String, String>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
}

impl RemoteBackend {
    pub fn from_config(config: &BackendConfig) -> Result<RemoteBackend, BackendError> {
        config.validate().map_err(BackendError::RemoteUnavailable)?;
        let endpoint = config.endpoint.as_deref().unwrap_or_default();
        let model_name = config.model_name.clone().unwrap_or_default();
        let token = std::env::var(AUTH_TOKEN_ENV).ok().filter(|t| !t.is_empty());
        let transport = HttpTransport::new(endpoint, config.request_timeout_s, token);
        let mut backend = RemoteBackend::with_transport(Box::new(transport), model_name);
        backend.templates.extend(config.prompt_templates.clone());
        if let Some(dir) = &config.cache_dir {
            backend.cache = Some(ResponseCache::new(dir));
        }
        Ok(backend)
    }

    pub fn with_transport(transport: Box<dyn ChatTransport>, model_name: String) -> RemoteBackend {
        RemoteBackend {
            transport,
            model_name,
            templates: prompts::default_templates(),
            cache: None,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> RemoteBackend {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> RemoteBackend {
        self.retry = retry;
        self
    }

    pub fn with_templates(mut self, overrides: BTreeMap<String, String>) -> RemoteBackend {
        self.templates.extend(overrides);
        self
    }

    fn template(&self, op: &str) -> String {
        self.templates.get(op).cloned().unwrap_or_default()
    }

    /// Cache lookup, then the transport with bounded retries.
    fn chat(
        &self,
        op: &str,
        messages: &[ChatMessage],
        temperature: f64,
    ) -> Result<String, BackendError> {
        let prompt = serde_json::to_string(messages).expect("messages serialize");
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.lookup(op, &self.model_name, &prompt) {
                return Ok(hit);
            }
        }
        let request = ChatRequest {
            model: self.model_name.clone(),
            messages: messages.to_vec(),
            temperature,
        };
        let mut last_error = String::new();
        for attempt in 0..self.retry.attempts {
            if attempt > 0 && !self.retry.base_delay.is_zero() {
                std::thread::sleep(self.retry.base_delay * 2u32.pow(attempt - 1));
            }
            match self.transport.complete(&request) {
                Ok(reply) => {
                    if let Some(cache) = &self.cache {
                        cache.store(op, &self.model_name, &prompt, &reply);
                    }
                    return Ok(reply);
                }
                Err(err) => last_error = err.to_string(),
            }
        }
        Err(BackendError::RemoteUnavailable(last_error))
    }

    /// One call, and on `parse` failure a single repair re-prompt carrying
    /// the bad reply back to the model.
    fn chat_with_repair<T>(
        &self,
        op: &str,
        base: Vec<ChatMessage>,
        temperature: f64,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, RepairFailure> {
        let reply = self
            .chat(op, &base, temperature)
            .map_err(RepairFailure::Backend)?;
        match parse(&reply) {
            Ok(value) => Ok(value),
            Err(reason) => {
                let mut repaired = base;
                repaired.push(ChatMessage::assistant(reply));
                repaired.push(ChatMessage::user(format!(
                    "The previous reply could not be used ({reason}). \
                     Reply again following the requested format exactly."
                )));
                let second = self
                    .chat(op, &repaired, temperature)
                    .map_err(RepairFailure::Backend)?;
                parse(&second).map_err(RepairFailure::StillMalformed)
            }
        }
    }
}

enum RepairFailure {
    Backend(BackendError),
    StillMalformed(String),
}

/// Pulls the contents of the first fenced block, tolerating a language tag;
/// falls back to the trimmed reply.
fn extract_fenced(reply: &str) -> &str {
    if let Some(start) = reply.find("```") {
        let after = &reply[start + 3..];
        let after = after.strip_prefix("json").unwrap_or(after);
        if let Some(end) = after.find("```") {
            return after[..end].trim();
        }
    }
    reply.trim()
}

#[derive(Debug, Deserialize)]
struct WireStep {
    text: String,
    result: String,
}

impl WireStep {
    fn into_step(self) -> ReasoningStep {
        ReasoningStep {
            text: self.text,
            intermediate_result: self.result,
            // Provenance unknown for model-produced steps.
            is_erroneous: None,
        }
    }
}

#[derive(Debug, Deserialize)]
struct WireProposal {
    correct: WireStep,
    #[serde(default)]
    erroneous: Vec<WireStep>,
}

#[derive(Debug, Deserialize)]
struct WireRollout {
    #[serde(default)]
    steps: Vec<WireStep>,
    final_answer: String,
}

#[derive(Debug, Deserialize)]
struct WirePrediction {
    #[serde(default)]
    steps: Vec<WireStep>,
    answer: String,
}

fn parse_rating(reply: &str) -> Result<f64, String> {
    for ch in reply.chars() {
        if ch.is_ascii_digit() {
            return match ch {
                '1'..='5' => {
                    let rating = ch.to_digit(10).unwrap() as f64;
                    Ok((rating - 1.0) / 4.0)
                }
                _ => Err(format!("rating digit {ch} outside 1-5")),
            };
        }
    }
    Err("no rating digit in reply".into())
}

fn trajectory_var(steps: &[ReasoningStep]) -> String {
    if steps.is_empty() {
        return "(no steps yet)".to_string();
    }
    steps
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {} => {}", i + 1, s.text, s.intermediate_result))
        .collect::<Vec<_>>()
        .join("\n")
}

impl ModelBackend for RemoteBackend {
    fn extract_concepts(&self, record: &QARecord) -> Result<Vec<Concept>, BackendError> {
        let prompt = prompts::render(
            &self.template(OP_EXTRACT_CONCEPTS),
            &[
                ("stem", record.stem.clone()),
                ("correct_answer", record.correct_answer.to_string()),
                ("chosen_answer", record.chosen_answer.to_string()),
            ],
        );
        let reply = self.chat(OP_EXTRACT_CONCEPTS, &[ChatMessage::user(prompt)], 0.0)?;
        let mut concepts = Vec::new();
        for part in reply.split([';', ',', '\n']) {
            if let Some(concept) = Concept::new(part) {
                if !concepts.contains(&concept) {
                    concepts.push(concept);
                }
            }
        }
        if concepts.is_empty() {
            Err(BackendError::EmptyExtraction)
        } else {
            Ok(concepts)
        }
    }

    fn propose_children(
        &self,
        stem: &str,
        trajectory_so_far: &[ReasoningStep],
        branching: u32,
        rng: &mut dyn RngCore,
    ) -> Result<StepProposal, BackendError> {
        let need = branching as usize - 1;
        let prompt = prompts::render(
            &self.template(OP_PROPOSE_CHILDREN),
            &[
                ("stem", stem.to_string()),
                ("trajectory", trajectory_var(trajectory_so_far)),
                ("branching", branching.to_string()),
                ("seed", rng.next_u64().to_string()),
            ],
        );
        let parse = |reply: &str| -> Result<StepProposal, String> {
            let body = extract_fenced(reply);
            let wire: WireProposal =
                serde_json::from_str(body).map_err(|e| format!("bad JSON: {e}"))?;
            let correct_step = wire.correct.into_step();
            let mut erroneous: Vec<ReasoningStep> = Vec::new();
            for step in wire.erroneous {
                let step = step.into_step();
                let clashes_correct = step.text == correct_step.text
                    && step.intermediate_result == correct_step.intermediate_result;
                let duplicate = erroneous.iter().any(|e| {
                    e.text == step.text && e.intermediate_result == step.intermediate_result
                });
                if !clashes_correct && !duplicate {
                    erroneous.push(step);
                }
            }
            if erroneous.len() < need {
                return Err(format!(
                    "need {need} distinct erroneous steps, got {}",
                    erroneous.len()
                ));
            }
            erroneous.truncate(need);
            Ok(StepProposal {
                correct_step,
                erroneous_steps: erroneous,
            })
        };
        self.chat_with_repair(
            OP_PROPOSE_CHILDREN,
            vec![ChatMessage::user(prompt)],
            0.7,
            parse,
        )
        .map_err(|failure| match failure {
            RepairFailure::Backend(err) => err,
            RepairFailure::StillMalformed(reason) => BackendError::MalformedProposal(reason),
        })
    }

    fn rollout(
        &self,
        stem: &str,
        trajectory_so_far: &[ReasoningStep],
        cap: u32,
        rng: &mut dyn RngCore,
    ) -> Result<ReasoningTrajectory, BackendError> {
        let prompt = prompts::render(
            &self.template(OP_ROLLOUT),
            &[
                ("stem", stem.to_string()),
                ("trajectory", trajectory_var(trajectory_so_far)),
                ("cap", cap.to_string()),
                ("seed", rng.next_u64().to_string()),
            ],
        );
        let parse = |reply: &str| -> Result<WireRollout, String> {
            let body = extract_fenced(reply);
            let wire: WireRollout =
                serde_json::from_str(body).map_err(|e| format!("bad JSON: {e}"))?;
            if wire.final_answer.trim().is_empty() {
                return Err("empty final answer".into());
            }
            Ok(wire)
        };
        let wire = self
            .chat_with_repair(OP_ROLLOUT, vec![ChatMessage::user(prompt)], 0.7, parse)
            .map_err(|failure| match failure {
                RepairFailure::Backend(err) => err,
                // An unusable completion means this path produced no answer.
                RepairFailure::StillMalformed(_) => BackendError::RolloutDivergence,
            })?;
        if wire.steps.len() > cap as usize {
            return Err(BackendError::RolloutDivergence);
        }
        let mut steps = trajectory_so_far.to_vec();
        steps.extend(wire.steps.into_iter().map(WireStep::into_step));
        Ok(ReasoningTrajectory {
            steps,
            final_answer: wire.final_answer.trim().to_string().into(),
            source: TrajectorySource::Simulation,
        })
    }

    fn conclude(&self, _stem: &str, trajectory_so_far: &[ReasoningStep]) -> AnswerText {
        // Committing the latest intermediate result is a local rendering,
        // not a model call.
        trajectory_so_far
            .last()
            .map(|s| s.intermediate_result.trim().to_string())
            .unwrap_or_default()
            .into()
    }

    fn score_plausibility(
        &self,
        stem: &str,
        trajectory: &ReasoningTrajectory,
        correct_answer: &AnswerText,
        chosen_answer: &AnswerText,
    ) -> f64 {
        let prompt = prompts::render(
            &self.template(OP_SCORE_PLAUSIBILITY),
            &[
                ("stem", stem.to_string()),
                ("trajectory", trajectory.render_text()),
                ("correct_answer", correct_answer.to_string()),
                ("chosen_answer", chosen_answer.to_string()),
            ],
        );
        let result = self.chat_with_repair(
            OP_SCORE_PLAUSIBILITY,
            vec![ChatMessage::user(prompt)],
            0.0,
            parse_rating,
        );
        match result {
            Ok(score) => score.clamp(0.0, 1.0),
            Err(RepairFailure::Backend(err)) => {
                eprintln!("warning: plausibility scoring unavailable ({err}); using 0.5");
                0.5
            }
            Err(RepairFailure::StillMalformed(reason)) => {
                eprintln!("warning: plausibility reply unusable ({reason}); using 0.5");
                0.5
            }
        }
    }

    fn summarize(
        &self,
        concept: &Concept,
        trajectories: &[ReasoningTrajectory],
    ) -> Result<String, BackendError> {
        let joined = trajectories
            .iter()
            .enumerate()
            .map(|(i, t)| format!("Trace {}:\n{}", i + 1, t.render_text()))
            .collect::<Vec<_>>()
            .join("\n\n");
        let prompt = prompts::render(
            &self.template(OP_SUMMARIZE),
            &[
                ("concept", concept.label().to_string()),
                ("trajectory", joined),
            ],
        );
        let reply = self.chat(OP_SUMMARIZE, &[ChatMessage::user(prompt)], 0.0)?;
        Ok(reply.trim().to_string())
    }

    fn predict_distractor(
        &self,
        stem: &str,
        correct_answer: &AnswerText,
        misconceptions: &[String],
        rng: &mut dyn RngCore,
    ) -> Result<(AnswerText, ReasoningTrajectory), BackendError> {
        let misconception_var = if misconceptions.is_empty() {
            "(none recorded; pick one realistic mistake for this question)".to_string()
        } else {
            misconceptions
                .iter()
                .map(|m| format!("- {m}"))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let parse = |reply: &str| -> Result<WirePrediction, String> {
            let body = extract_fenced(reply);
            let wire: WirePrediction =
                serde_json::from_str(body).map_err(|e| format!("bad JSON: {e}"))?;
            if wire.answer.trim().is_empty() {
                return Err("empty answer".into());
            }
            Ok(wire)
        };
        let mut produced_correct = 0;
        for _ in 0..2 {
            let prompt = prompts::render(
                &self.template(OP_PREDICT_DISTRACTOR),
                &[
                    ("stem", stem.to_string()),
                    ("correct_answer", correct_answer.to_string()),
                    ("misconceptions", misconception_var.clone()),
                    ("seed", rng.next_u64().to_string()),
                ],
            );
            let wire = self
                .chat_with_repair(
                    OP_PREDICT_DISTRACTOR,
                    vec![ChatMessage::user(prompt)],
                    0.7,
                    parse,
                )
                .map_err(|failure| match failure {
                    RepairFailure::Backend(err) => err,
                    RepairFailure::StillMalformed(reason) => {
                        BackendError::MalformedProposal(reason)
                    }
                })?;
            let answer = wire.answer.trim().to_string();
            if answers_equivalent(&answer, correct_answer.as_str()) {
                produced_correct += 1;
                continue;
            }
            let steps: Vec<ReasoningStep> =
                wire.steps.into_iter().map(WireStep::into_step).collect();
            return Ok((
                answer.clone().into(),
                ReasoningTrajectory {
                    steps,
                    final_answer: answer.into(),
                    source: TrajectorySource::Simulation,
                },
            ));
        }
        debug_assert!(produced_correct >= 1);
        Err(BackendError::DegenerateOutput)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::{Arc, Mutex};

    #[derive(Default)]
    struct TransportState {
        replies: Mutex<Vec<Result<String, TransportError>>>,
        calls: AtomicUsize,
        last_request: Mutex<Option<ChatRequest>>,
    }

    /// Serves canned replies in order; records every request.
    struct ScriptedTransport {
        state: Arc<TransportState>,
    }

    impl ScriptedTransport {
        fn new(
            replies: Vec<Result<String, TransportError>>,
        ) -> (ScriptedTransport, Arc<TransportState>) {
            let state = Arc::new(TransportState {
                replies: Mutex::new(replies),
                ..TransportState::default()
            });
            (
                ScriptedTransport {
                    state: Arc::clone(&state),
                },
                state,
            )
        }
    }

    impl ChatTransport for ScriptedTransport {
        fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
            self.state.calls.fetch_add(1, Ordering::SeqCst);
            *self.state.last_request.lock().unwrap() = Some(ChatRequest {
                model: request.model.clone(),
                messages: request.messages.to_vec(),
                temperature: request.temperature,
            });
            let mut replies = self.state.replies.lock().unwrap();
            if replies.is_empty() {
                Err(TransportError::Transport("out of scripted replies".into()))
            } else {
                replies.remove(0)
            }
        }
    }

    fn record() -> QARecord {
        QARecord {
            record_id: "r1".into(),
            student_id: "s1".into(),
            stem: "Solve for x: -2x < 6".into(),
            correct_answer: "x > -3".into(),
            chosen_answer: "x < -3".into(),
            options: None,
            timestamp: None,
        }
    }

    fn backend_with(replies: Vec<Result<String, TransportError>>) -> RemoteBackend {
        let (transport, _) = ScriptedTransport::new(replies);
        RemoteBackend::with_transport(Box::new(transport), "test-model".into())
            .with_retry(RetryPolicy::immediate(4))
    }

    #[test]
    fn extraction_normalizes_and_dedupes() {
        let backend = backend_with(vec![Ok(" Fractions ; fractions".into())]);
        let concepts = backend.extract_concepts(&record()).unwrap();
        assert_eq!(concepts.len(), 1);
        assert_eq!(concepts[0].label(), "fractions");
    }

    #[test]
    fn empty_extraction_is_an_error() {
        let backend = backend_with(vec![Ok(" ;; \n".into())]);
        assert!(matches!(
            backend.extract_concepts(&record()),
            Err(BackendError::EmptyExtraction)
        ));
    }

    #[test]
    fn transport_failures_retry_then_surface() {
        let (transport, state) = ScriptedTransport::new(vec![
            Err(TransportError::Transport("boom".into())),
            Err(TransportError::Transport("boom".into())),
            Err(TransportError::Transport("boom".into())),
            Err(TransportError::Transport("boom".into())),
        ]);
        let backend = RemoteBackend::with_transport(Box::new(transport), "m".into())
            .with_retry(RetryPolicy::immediate(4));
        let result = backend.extract_concepts(&record());
        assert!(matches!(result, Err(BackendError::RemoteUnavailable(_))));
        // All four attempts were spent.
        assert_eq!(state.calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn rating_maps_linearly() {
        assert_eq!(parse_rating("5"), Ok(1.0));
        assert_eq!(parse_rating("1"), Ok(0.0));
        assert_eq!(parse_rating("I would say 3 overall"), Ok(0.5));
        assert!(parse_rating("nope").is_err());
        assert!(parse_rating("9/10").is_err());
    }

    #[test]
    fn unusable_score_reply_degrades_to_half() {
        let backend = backend_with(vec![Ok("no idea".into()), Ok("still no".into())]);
        let trajectory = ReasoningTrajectory {
            steps: vec![],
            final_answer: "x < -3".into(),
            source: TrajectorySource::TerminalStop,
        };
        let score =
            backend.score_plausibility("stem", &trajectory, &"x > -3".into(), &"x < -3".into());
        assert_eq!(score, 0.5);
    }

    #[test]
    fn proposal_parses_fenced_json_and_repairs_once() {
        let good = r#"Here you go:
```json
{"correct": {"text": "divide", "result": "x > -3"},
 "erroneous": [{"text": "divide, no flip", "result": "x < -3"},
               {"text": "move -2", "result": "x < 8"}]}
```"#;
        let backend = backend_with(vec![Ok("garbage".into()), Ok(good.into())]);
        let proposal = backend
            .propose_children(
                "Solve for x: -2x < 6",
                &[],
                3,
                &mut ChaCha8Rng::seed_from_u64(1),
            )
            .unwrap();
        assert_eq!(proposal.erroneous_steps.len(), 2);
        assert_eq!(proposal.correct_step.is_erroneous, None);
        proposal.check(3).unwrap();
    }

    #[test]
    fn proposal_malformed_after_repair_errors() {
        let backend = backend_with(vec![Ok("garbage".into()), Ok("more garbage".into())]);
        assert!(matches!(
            backend.propose_children(
                "Solve for x: -2x < 6",
                &[],
                3,
                &mut ChaCha8Rng::seed_from_u64(1)
            ),
            Err(BackendError::MalformedProposal(_))
        ));
    }

    #[test]
    fn rollout_rejects_over_cap_and_missing_answers() {
        let over = r#"{"steps": [{"text":"a","result":"1"},{"text":"b","result":"2"},
                        {"text":"c","result":"3"}], "final_answer": "3"}"#;
        let backend = backend_with(vec![Ok(over.into())]);
        assert!(matches!(
            backend.rollout("stem", &[], 2, &mut ChaCha8Rng::seed_from_u64(1)),
            Err(BackendError::RolloutDivergence)
        ));

        let backend = backend_with(vec![Ok("junk".into()), Ok("junk".into())]);
        assert!(matches!(
            backend.rollout("stem", &[], 5, &mut ChaCha8Rng::seed_from_u64(1)),
            Err(BackendError::RolloutDivergence)
        ));
    }

    #[test]
    fn predict_degenerates_after_two_correct_answers() {
        let correct_reply = r#"{"steps": [], "answer": "x > -3"}"#;
        let backend = backend_with(vec![Ok(correct_reply.into()), Ok(correct_reply.into())]);
        assert!(matches!(
            backend.predict_distractor(
                "Solve for x: -2x < 6",
                &"x > -3".into(),
                &[],
                &mut ChaCha8Rng::seed_from_u64(1)
            ),
            Err(BackendError::DegenerateOutput)
        ));
    }

    #[test]
    fn predict_accepts_an_incorrect_answer() {
        let reply =
            r#"{"steps": [{"text":"divide, keep sign","result":"x < -3"}], "answer": "x < -3"}"#;
        let backend = backend_with(vec![Ok(reply.into())]);
        let (answer, trajectory) = backend
            .predict_distractor(
                "Solve for x: -2x < 6",
                &"x > -3".into(),
                &[],
                &mut ChaCha8Rng::seed_from_u64(1),
            )
            .unwrap();
        assert_eq!(answer.as_str(), "x < -3");
        assert_eq!(trajectory.steps.len(), 1);
        assert_eq!(trajectory.steps[0].is_erroneous, None);
    }

    #[test]
    fn cache_serves_repeat_calls_without_transport() {
        let dir = tempfile::tempdir().unwrap();
        let (transport, state) = ScriptedTransport::new(vec![Ok("algebra".into())]);
        let backend = RemoteBackend::with_transport(Box::new(transport), "m".into())
            .with_retry(RetryPolicy::immediate(1))
            .with_cache(ResponseCache::new(dir.path()));
        let first = backend.extract_concepts(&record()).unwrap();
        let second = backend.extract_concepts(&record()).unwrap();
        assert_eq!(first, second);
        // Second call never reached the transport.
        assert_eq!(state.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn sampling_ops_embed_the_seed_in_the_prompt() {
        let good = r#"{"correct": {"text": "a", "result": "1"},
                       "erroneous": [{"text": "b", "result": "2"}, {"text": "c", "result": "3"}]}"#;
        let (transport, state) = ScriptedTransport::new(vec![Ok(good.into())]);
        let backend = RemoteBackend::with_transport(Box::new(transport), "m".into())
            .with_retry(RetryPolicy::immediate(1));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let expected_seed = ChaCha8Rng::seed_from_u64(9).next_u64();
        backend.propose_children("stem", &[], 3, &mut rng).unwrap();
        let request = state.last_request.lock().unwrap();
        let content = &request.as_ref().unwrap().messages[0].content;
        assert!(content.contains(&format!("[variation {expected_seed}]")));
    }
}
