//! Prompt templates for the remote backend.
//!
//! Templates are plain text with `{name}` placeholders. The supported names
//! are `{stem}`, `{trajectory}`, `{correct_answer}`, `{chosen_answer}`,
//! `{concept}`, `{misconceptions}`, `{branching}`, plus `{cap}` and `{seed}`
//! for the sampling operations (the seed line keys otherwise-identical
//! prompts apart in the response cache). Any operation's template can be
//! overridden through the backend configuration.

use std::collections::BTreeMap;

pub const OP_EXTRACT_CONCEPTS: &str = "extract_concepts";
pub const OP_PROPOSE_CHILDREN: &str = "propose_children";
pub const OP_ROLLOUT: &str = "rollout";
pub const OP_SCORE_PLAUSIBILITY: &str = "score_plausibility";
pub const OP_SUMMARIZE: &str = "summarize";
pub const OP_PREDICT_DISTRACTOR: &str = "predict_distractor";

const EXTRACT_CONCEPTS_TEMPLATE: &str = "\
You are tagging a math question with the knowledge concepts it exercises.
Question: {stem}
Correct answer: {correct_answer}
The student answered: {chosen_answer}
List the distinct knowledge concepts needed to solve this question, separated
by semicolons. Reply with the concept list only.";

const PROPOSE_CHILDREN_TEMPLATE: &str = "\
You are reconstructing how a student works through a problem one step at a
time. Some students make realistic mistakes.
Problem: {stem}
Steps taken so far:
{trajectory}
Produce {branching} candidate next steps: exactly one correct step, and the
rest distinct, plausible but incorrect steps a struggling student might take
instead. Each step needs a short description and the resulting intermediate
state. Reply with only a fenced JSON block shaped like:
```json
{\"correct\": {\"text\": \"...\", \"result\": \"...\"}, \"erroneous\": [{\"text\": \"...\", \"result\": \"...\"}]}
```
[variation {seed}]";

const ROLLOUT_TEMPLATE: &str = "\
Continue the student's working to a final answer.
Problem: {stem}
Steps taken so far:
{trajectory}
Keep reasoning in the same style, carrying any earlier mistakes forward
consistently, until you reach a final answer. Use at most {cap} further
steps. Reply with only a fenced JSON block shaped like:
```json
{\"steps\": [{\"text\": \"...\", \"result\": \"...\"}], \"final_answer\": \"...\"}
```
[variation {seed}]";

const SCORE_PLAUSIBILITY_TEMPLATE: &str = "\
Rate how plausible the following reasoning is as the genuine working of a
student who got the question wrong. Judge its coherence (the steps follow
from one another) and its realism (the mistake is one a real student makes).
Question: {stem}
Correct answer: {correct_answer}
The student picked: {chosen_answer}
Candidate reasoning:
{trajectory}
Reply with a single integer rating from 1 (implausible) to 5 (very
plausible).";

const SUMMARIZE_TEMPLATE: &str = "\
The reasoning traces below are a single student's recurring mistakes on the
concept \"{concept}\".
{trajectory}
Summarize the student's misconception in one general sentence that abstracts
away from the specific numbers and questions. Reply with the sentence only.";

const PREDICT_DISTRACTOR_TEMPLATE: &str = "\
Simulate a specific student answering a new question incorrectly.
The student's known misconceptions:
{misconceptions}
New question: {stem}
Correct answer: {correct_answer}
Reason step by step the way this student would, applying their misconception,
and end with the incorrect final answer they would reach. The answer must not
equal the correct answer. Reply with only a fenced JSON block shaped like:
```json
{\"steps\": [{\"text\": \"...\", \"result\": \"...\"}], \"answer\": \"...\"}
```
[variation {seed}]";

pub fn default_templates() -> BTreeMap<String, String> {
    BTreeMap::from([
        (
            OP_EXTRACT_CONCEPTS.to_string(),
            EXTRACT_CONCEPTS_TEMPLATE.to_string(),
        ),
        (
            OP_PROPOSE_CHILDREN.to_string(),
            PROPOSE_CHILDREN_TEMPLATE.to_string(),
        ),
        (OP_ROLLOUT.to_string(), ROLLOUT_TEMPLATE.to_string()),
        (
            OP_SCORE_PLAUSIBILITY.to_string(),
            SCORE_PLAUSIBILITY_TEMPLATE.to_string(),
        ),
        (OP_SUMMARIZE.to_string(), SUMMARIZE_TEMPLATE.to_string()),
        (
            OP_PREDICT_DISTRACTOR.to_string(),
            PREDICT_DISTRACTOR_TEMPLATE.to_string(),
        ),
    ])
}

/// Replaces `{name}` placeholders. Unknown placeholders are left intact so a
/// template typo is visible in the rendered prompt instead of vanishing.
pub fn render(template: &str, vars: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_replaces_placeholders() {
        let rendered = render(
            "Q: {stem} B: {branching}",
            &[
                ("stem", "solve x".to_string()),
                ("branching", "3".to_string()),
            ],
        );
        assert_eq!(rendered, "Q: solve x B: 3");
    }

    #[test]
    fn defaults_cover_every_operation() {
        let templates = default_templates();
        for op in [
            OP_EXTRACT_CONCEPTS,
            OP_PROPOSE_CHILDREN,
            OP_ROLLOUT,
            OP_SCORE_PLAUSIBILITY,
            OP_SUMMARIZE,
            OP_PREDICT_DISTRACTOR,
        ] {
            assert!(templates.contains_key(op), "missing template for {op}");
        }
    }
}
