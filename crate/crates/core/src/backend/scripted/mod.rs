//! The deterministic scripted oracle: a rule-pack stand-in for the language
//! model over the synthetic arithmetic domain. Every output is a pure
//! function of the inputs and the caller's RNG state, which is what makes
//! end-to-end recovery exactly verifiable offline.

pub mod rules;
pub mod state;

use rand::seq::SliceRandom;
use rand::RngCore;

use crate::domain::{
    AnswerText, Concept, QARecord, ReasoningStep, ReasoningTrajectory, TrajectorySource,
};
use crate::eval::answers_equivalent;

use super::{BackendError, ModelBackend, StepProposal};
use rules::{correct_next, BuggyOutcome, BuggyRule, RulePack, StepClass, SLIP_MARKER};
use state::{parse_stem, MathState};

/// A student-style solve: correct steps except where a given faulty rule
/// fires, carried through to a final answer (or an early stop).
#[derive(Debug, Clone)]
pub struct StudentSolve {
    pub steps: Vec<ReasoningStep>,
    pub source: TrajectorySource,
    pub final_answer: AnswerText,
}

impl StudentSolve {
    pub fn into_trajectory(self) -> ReasoningTrajectory {
        ReasoningTrajectory {
            steps: self.steps,
            final_answer: self.final_answer,
            source: self.source,
        }
    }

    /// True when some faulty rule actually changed the solve.
    pub fn rule_fired(&self) -> bool {
        self.source == TrajectorySource::TerminalStop || self.steps.iter().any(|s| s.erroneous())
    }
}

/// Solves from `state0`, applying the first matching rule of `rules` wherever
/// one triggers and the correct procedure everywhere else.
pub fn solve_with_rules(state0: &MathState, rules: &[&BuggyRule]) -> StudentSolve {
    let mut steps = Vec::new();
    let mut state = state0.clone();
    for _ in 0..24 {
        if let Some(rule) = rules.iter().find(|r| r.behavior.triggers(&state)) {
            match rule
                .behavior
                .apply(&state)
                .expect("a triggered rule must apply")
            {
                BuggyOutcome::Stop => {
                    return StudentSolve {
                        final_answer: state.conclude_render().into(),
                        steps,
                        source: TrajectorySource::TerminalStop,
                    };
                }
                BuggyOutcome::Step { text, next } => {
                    steps.push(ReasoningStep {
                        text,
                        intermediate_result: next.render(),
                        is_erroneous: Some(true),
                    });
                    state = next;
                    continue;
                }
            }
        }
        if state.is_answer() {
            break;
        }
        match correct_next(&state) {
            Some(step) => {
                steps.push(ReasoningStep {
                    text: step.text,
                    intermediate_result: step.next.render(),
                    is_erroneous: Some(false),
                });
                state = step.next;
            }
            None => break,
        }
    }
    StudentSolve {
        final_answer: state.conclude_render().into(),
        steps,
        source: TrajectorySource::Simulation,
    }
}

pub struct ScriptedBackend {
    pack: RulePack,
}

impl Default for ScriptedBackend {
    fn default() -> Self {
        ScriptedBackend {
            pack: RulePack::default_pack(),
        }
    }
}

impl ScriptedBackend {
    pub fn new(pack: RulePack) -> ScriptedBackend {
        ScriptedBackend { pack }
    }

    pub fn pack(&self) -> &RulePack {
        &self.pack
    }

    fn current_state(&self, stem: &str, prefix: &[ReasoningStep]) -> MathState {
        match prefix.last() {
            Some(step) => MathState::parse(&step.intermediate_result),
            None => parse_stem(stem),
        }
    }

    /// An arithmetic-slip step: the correct move narrated with a perturbed
    /// result. Used to pad proposals when fewer than B-1 pack rules apply.
    fn slip_step(correct_next_state: &MathState, bump: i64) -> Option<ReasoningStep> {
        use crate::numeric::Rational;
        let perturbed = match correct_next_state {
            MathState::Solved { op, value } => MathState::Solved {
                op: *op,
                value: *value + Rational::integer(bump),
            },
            MathState::Relation {
                coeff,
                constant,
                op,
                rhs,
            } => MathState::Relation {
                coeff: *coeff,
                constant: *constant,
                op: *op,
                rhs: *rhs + Rational::integer(bump),
            },
            MathState::PairCount { count } => MathState::PairCount {
                count: count + bump,
            },
            MathState::Count { value } => MathState::Count {
                value: value + bump,
            },
            MathState::PairSizes { .. } | MathState::Opaque(_) => return None,
        };
        Some(ReasoningStep {
            text: format!("Compute the next step but {SLIP_MARKER}"),
            intermediate_result: perturbed.render(),
            is_erroneous: Some(true),
        })
    }
}

impl ModelBackend for ScriptedBackend {
    fn extract_concepts(&self, record: &QARecord) -> Result<Vec<Concept>, BackendError> {
        let mut state = parse_stem(&record.stem);
        let mut concepts: Vec<Concept> = Vec::new();
        for _ in 0..24 {
            match correct_next(&state) {
                Some(step) => {
                    if let Some(concept) = Concept::new(self.pack.category_for(step.kind)) {
                        if !concepts.contains(&concept) {
                            concepts.push(concept);
                        }
                    }
                    state = step.next;
                }
                None => break,
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
        if branching < 2 {
            return Err(BackendError::MalformedProposal(
                "branching must be at least 2".into(),
            ));
        }
        let state = self.current_state(stem, trajectory_so_far);
        let correct = correct_next(&state).ok_or(BackendError::NoApplicableStep)?;
        let correct_step = ReasoningStep {
            text: correct.text.clone(),
            intermediate_result: correct.next.render(),
            is_erroneous: Some(false),
        };

        let need = branching as usize - 1;
        let candidates = self.pack.applicable_rewrites(&state);
        let chosen: Vec<&BuggyRule> = if candidates.len() > need {
            let mut picks = rand::seq::index::sample(rng, candidates.len(), need).into_vec();
            picks.sort_unstable();
            picks.into_iter().map(|i| candidates[i]).collect()
        } else {
            candidates
        };

        let mut erroneous = Vec::with_capacity(need);
        for rule in chosen {
            if let Some(BuggyOutcome::Step { text, next }) = rule.behavior.apply(&state) {
                erroneous.push(ReasoningStep {
                    text,
                    intermediate_result: next.render(),
                    is_erroneous: Some(true),
                });
            }
        }
        let mut bump = 1;
        while erroneous.len() < need {
            let slip = Self::slip_step(&correct.next, bump)
                .ok_or_else(|| BackendError::MalformedProposal("cannot pad proposal".into()))?;
            let distinct = slip.intermediate_result != correct_step.intermediate_result
                && erroneous.iter().all(|e| {
                    e.text != slip.text || e.intermediate_result != slip.intermediate_result
                });
            if distinct {
                erroneous.push(slip);
            }
            bump += 1;
        }
        Ok(StepProposal {
            correct_step,
            erroneous_steps: erroneous,
        })
    }

    fn rollout(
        &self,
        stem: &str,
        trajectory_so_far: &[ReasoningStep],
        cap: u32,
        _rng: &mut dyn RngCore,
    ) -> Result<ReasoningTrajectory, BackendError> {
        let mut state = self.current_state(stem, trajectory_so_far);
        let mut steps = trajectory_so_far.to_vec();
        let mut added = 0u32;
        while !state.is_answer() {
            if added >= cap {
                return Err(BackendError::RolloutDivergence);
            }
            match correct_next(&state) {
                Some(step) => {
                    steps.push(ReasoningStep {
                        text: step.text,
                        intermediate_result: step.next.render(),
                        is_erroneous: Some(false),
                    });
                    state = step.next;
                    added += 1;
                }
                // A stuck non-answer state never terminates; report it as
                // divergence rather than looping to the cap.
                None => return Err(BackendError::RolloutDivergence),
            }
        }
        Ok(ReasoningTrajectory {
            steps,
            final_answer: state.conclude_render().into(),
            source: TrajectorySource::Simulation,
        })
    }

    fn conclude(&self, stem: &str, trajectory_so_far: &[ReasoningStep]) -> AnswerText {
        self.current_state(stem, trajectory_so_far)
            .conclude_render()
            .into()
    }

    fn score_plausibility(
        &self,
        stem: &str,
        trajectory: &ReasoningTrajectory,
        correct_answer: &AnswerText,
        _chosen_answer: &AnswerText,
    ) -> f64 {
        // A stop that commits nothing (mid-derivation state, not a value)
        // is incoherent as a student answer, whatever preceded it.
        if trajectory.source == TrajectorySource::TerminalStop {
            let stopped = trajectory
                .steps
                .last()
                .map(|s| MathState::parse(&s.intermediate_result))
                .unwrap_or_else(|| parse_stem(stem));
            if !stopped.has_committed_value() {
                return 0.3;
            }
        }
        let erroneous: Vec<&ReasoningStep> =
            trajectory.steps.iter().filter(|s| s.erroneous()).collect();
        let score: f64 = match erroneous.len() {
            // A single pack-rule error reads as a genuine, consistent
            // misconception; a lone arithmetic slip is far less convincing.
            1 => match self.pack.classify_step(erroneous[0]) {
                StepClass::Buggy(_) => 1.0,
                _ => 0.4,
            },
            0 => {
                if trajectory.source == TrajectorySource::TerminalStop {
                    // Clean prefix stopped on a committed value: the classic
                    // premature stop.
                    0.8
                } else if answers_equivalent(
                    trajectory.final_answer.as_str(),
                    correct_answer.as_str(),
                ) {
                    // Coherent flawless reasoning: realistic, just not an
                    // error trace.
                    0.8
                } else {
                    // No error yet a wrong answer: inconsistent.
                    0.3
                }
            }
            _ => 0.6,
        };
        score.clamp(0.0, 1.0)
    }

    fn summarize(
        &self,
        _concept: &Concept,
        trajectories: &[ReasoningTrajectory],
    ) -> Result<String, BackendError> {
        use std::collections::BTreeMap;
        let mut tally: BTreeMap<String, usize> = BTreeMap::new();
        for trajectory in trajectories {
            let mut ids = self.pack.trajectory_rule_ids(trajectory);
            ids.dedup();
            for id in ids {
                *tally.entry(id).or_insert(0) += 1;
            }
        }
        // BTreeMap iteration is id-ordered, so keeping strict improvements
        // resolves count ties toward the lexicographically smaller id.
        let mut winner: Option<(&String, usize)> = None;
        for (id, count) in &tally {
            if winner.map(|(_, best)| *count > best).unwrap_or(true) {
                winner = Some((id, *count));
            }
        }
        Ok(match winner {
            Some((id, _)) => self
                .pack
                .rule(id)
                .map(|r| r.sentence.clone())
                .unwrap_or_default(),
            None => {
                "makes arithmetic slips that change computed values without a consistent pattern"
                    .to_string()
            }
        })
    }

    fn predict_distractor(
        &self,
        stem: &str,
        correct_answer: &AnswerText,
        misconceptions: &[String],
        rng: &mut dyn RngCore,
    ) -> Result<(AnswerText, ReasoningTrajectory), BackendError> {
        let state0 = parse_stem(stem);
        if matches!(state0, MathState::Opaque(_)) {
            return Err(BackendError::DegenerateOutput);
        }

        // Rules named by the retrieved misconceptions, in retrieval order.
        let mut named: Vec<&BuggyRule> = Vec::new();
        for text in misconceptions {
            let lowered = text.to_lowercase();
            for rule in &self.pack.buggy {
                if lowered.contains(&rule.sentence.to_lowercase())
                    && !named.iter().any(|r| r.id == rule.id)
                {
                    named.push(rule);
                }
            }
        }
        // Fallback pool: every other applicable rule, in seeded-random order.
        let mut pool: Vec<&BuggyRule> = self
            .pack
            .buggy
            .iter()
            .filter(|r| !named.iter().any(|n| n.id == r.id))
            .collect();
        pool.shuffle(rng);

        let mut consecutive_correct = 0;
        for rule in named.into_iter().chain(pool) {
            let solve = solve_with_rules(&state0, &[rule]);
            if !solve.rule_fired() || solve.final_answer.is_empty() {
                continue;
            }
            if answers_equivalent(solve.final_answer.as_str(), correct_answer.as_str()) {
                consecutive_correct += 1;
                if consecutive_correct >= 2 {
                    return Err(BackendError::DegenerateOutput);
                }
                continue;
            }
            let answer = solve.final_answer.clone();
            return Ok((answer, solve.into_trajectory()));
        }
        Err(BackendError::DegenerateOutput)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn backend() -> ScriptedBackend {
        ScriptedBackend::default()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn record(stem: &str) -> QARecord {
        QARecord {
            record_id: "r1".into(),
            student_id: "s1".into(),
            stem: stem.into(),
            correct_answer: "x > -3".into(),
            chosen_answer: "x < -3".into(),
            options: None,
            timestamp: None,
        }
    }

    #[test]
    fn extracts_rule_categories_along_the_correct_path() {
        let b = backend();
        let concepts = b
            .extract_concepts(&record("Solve for x: -2x + 4 < 10"))
            .unwrap();
        let labels: Vec<&str> = concepts.iter().map(|c| c.label()).collect();
        assert_eq!(labels, vec!["transposition", "inequality solving"]);

        let single = b.extract_concepts(&record("Solve for x: -2x < 6")).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].label(), "inequality solving");

        assert!(matches!(
            b.extract_concepts(&record("what is love")),
            Err(BackendError::EmptyExtraction)
        ));
    }

    #[test]
    fn proposal_matches_worked_inequality_example() {
        // From "-2x < 6" with B=3: correct divide-and-flip to "x > -3";
        // the two applicable faulty rules give "x < -3" and "x < 8".
        let b = backend();
        let proposal = b
            .propose_children("Solve for x: -2x < 6", &[], 3, &mut rng(7))
            .unwrap();
        assert_eq!(proposal.correct_step.intermediate_result, "x > -3");
        assert!(proposal
            .correct_step
            .text
            .contains("flip the inequality sign"));
        let results: Vec<&str> = proposal
            .erroneous_steps
            .iter()
            .map(|s| s.intermediate_result.as_str())
            .collect();
        assert_eq!(results, vec!["x < -3", "x < 8"]);
        proposal.check(3).unwrap();
    }

    #[test]
    fn proposal_arity_follows_branching() {
        let b = backend();
        let p2 = b
            .propose_children("Solve for x: -2x < 6", &[], 2, &mut rng(7))
            .unwrap();
        assert_eq!(p2.erroneous_steps.len(), 1);
        // More slots than applicable rules: slips pad the remainder.
        let p5 = b
            .propose_children("Solve for x: -2x < 6", &[], 5, &mut rng(7))
            .unwrap();
        assert_eq!(p5.erroneous_steps.len(), 4);
        p5.check(5).unwrap();
        assert!(p5.erroneous_steps[2].text.contains(SLIP_MARKER));
    }

    #[test]
    fn proposal_is_deterministic_for_a_fixed_seed() {
        let b = backend();
        let a = b
            .propose_children("Solve for x: -2x + 4 < 10", &[], 3, &mut rng(11))
            .unwrap();
        let c = b
            .propose_children("Solve for x: -2x + 4 < 10", &[], 3, &mut rng(11))
            .unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn proposal_errors_on_final_states() {
        let b = backend();
        let prefix = vec![ReasoningStep {
            text: "Divide both sides by -2 and flip the inequality sign".into(),
            intermediate_result: "x > -3".into(),
            is_erroneous: Some(false),
        }];
        assert!(matches!(
            b.propose_children("Solve for x: -2x < 6", &prefix, 3, &mut rng(7)),
            Err(BackendError::NoApplicableStep)
        ));
    }

    #[test]
    fn rollout_completes_and_respects_identity() {
        let b = backend();
        // Empty prefix on "solve x + 1 = 3": one move step to x = 2.
        let t = b.rollout("solve x + 1 = 3", &[], 10, &mut rng(7)).unwrap();
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.final_answer.as_str(), "x = 2");
        assert_eq!(t.source, TrajectorySource::Simulation);

        // Prefix already at a final form adds zero steps.
        let prefix = vec![ReasoningStep {
            text: "Divide both sides by -2 without flipping the inequality sign".into(),
            intermediate_result: "x < -3".into(),
            is_erroneous: Some(true),
        }];
        let t = b
            .rollout("Solve for x: -2x < 6", &prefix, 10, &mut rng(7))
            .unwrap();
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.final_answer.as_str(), "x < -3");
    }

    #[test]
    fn rollout_divergence_on_pathological_prefix() {
        let b = backend();
        let prefix = vec![ReasoningStep {
            text: "scribble".into(),
            intermediate_result: "gibberish state".into(),
            is_erroneous: None,
        }];
        assert!(matches!(
            b.rollout("Solve for x: -2x < 6", &prefix, 10, &mut rng(7)),
            Err(BackendError::RolloutDivergence)
        ));
    }

    #[test]
    fn conclude_commits_the_intermediate_value() {
        let b = backend();
        // Stopping right after the pair count reads it as the answer.
        let prefix = vec![ReasoningStep {
            text: "Multiply the set sizes: 2 * 3 = 6".into(),
            intermediate_result: "6 pairs".into(),
            is_erroneous: Some(false),
        }];
        let stem =
            "How many relations are there from a set with 2 elements to a set with 3 elements?";
        assert_eq!(b.conclude(stem, &prefix).as_str(), "6");

        let solved = vec![ReasoningStep {
            text: "Subtract 1 from both sides".into(),
            intermediate_result: "x = 2".into(),
            is_erroneous: Some(false),
        }];
        assert_eq!(b.conclude("solve x + 1 = 3", &solved).as_str(), "x = 2");
        assert_eq!(b.conclude("", &[]).as_str(), "");
    }

    #[test]
    fn plausibility_proxy_table() {
        let b = backend();
        let correct: AnswerText = "x > -3".into();
        let chosen: AnswerText = "x < -3".into();
        let step = |text: &str, result: &str, err: bool| ReasoningStep {
            text: text.into(),
            intermediate_result: result.into(),
            is_erroneous: Some(err),
        };

        // One pack-rule error: 1.0.
        let one_rule = ReasoningTrajectory {
            steps: vec![step(
                "Divide both sides by -2 without flipping the inequality sign",
                "x < -3",
                true,
            )],
            final_answer: "x < -3".into(),
            source: TrajectorySource::Simulation,
        };
        assert_eq!(
            b.score_plausibility("Solve for x: -2x < 6", &one_rule, &correct, &chosen),
            1.0
        );

        // Two errors: 0.6.
        let two_errors = ReasoningTrajectory {
            steps: vec![
                step(
                    "Move 4 to the other side without changing its sign",
                    "-2x < 14",
                    true,
                ),
                step(
                    "Divide both sides by -2 without flipping the inequality sign",
                    "x < -7",
                    true,
                ),
            ],
            final_answer: "x < -7".into(),
            source: TrajectorySource::Simulation,
        };
        assert_eq!(
            b.score_plausibility("Solve for x: -2x + 4 < 10", &two_errors, &correct, &chosen),
            0.6
        );

        // Clean prefix stopped on a committed value: 0.8.
        let premature = ReasoningTrajectory {
            steps: vec![step("Multiply the set sizes: 2 * 3 = 6", "6 pairs", false)],
            final_answer: "6".into(),
            source: TrajectorySource::TerminalStop,
        };
        assert_eq!(
            b.score_plausibility("relations stem", &premature, &correct, &chosen),
            0.8
        );

        // Stop with nothing committed: inconsistent, 0.3.
        let abandoned = ReasoningTrajectory {
            steps: vec![step("Subtract 4 from both sides", "-2x < 6", false)],
            final_answer: "-2x < 6".into(),
            source: TrajectorySource::TerminalStop,
        };
        assert_eq!(
            b.score_plausibility("Solve for x: -2x + 4 < 10", &abandoned, &correct, &chosen),
            0.3
        );

        // One slip-style error: 0.4.
        let slip = ReasoningTrajectory {
            steps: vec![step(
                "Compute the next step but slip on the arithmetic",
                "x > -2",
                true,
            )],
            final_answer: "x > -2".into(),
            source: TrajectorySource::Simulation,
        };
        assert_eq!(
            b.score_plausibility("Solve for x: -2x < 6", &slip, &correct, &chosen),
            0.4
        );

        // A stop committing nothing is incoherent even after an error step.
        let abandoned_after_error = ReasoningTrajectory {
            steps: vec![step(
                "Move 4 to the other side without changing its sign",
                "-2x < 14",
                true,
            )],
            final_answer: "-2x < 14".into(),
            source: TrajectorySource::TerminalStop,
        };
        assert_eq!(
            b.score_plausibility(
                "Solve for x: -2x + 4 < 10",
                &abandoned_after_error,
                &correct,
                &chosen
            ),
            0.3
        );

        // Flawless complete reasoning reaching the correct answer: coherent.
        let flawless = ReasoningTrajectory {
            steps: vec![step(
                "Divide both sides by -2 and flip the inequality sign",
                "x > -3",
                false,
            )],
            final_answer: "x > -3".into(),
            source: TrajectorySource::Simulation,
        };
        assert_eq!(
            b.score_plausibility("Solve for x: -2x < 6", &flawless, &correct, &chosen),
            0.8
        );
    }

    #[test]
    fn summarize_majority_and_ties() {
        let b = backend();
        let concept = Concept::new("inequality solving").unwrap();
        let no_flip = ReasoningTrajectory {
            steps: vec![ReasoningStep {
                text: "Divide both sides by -2 without flipping the inequality sign".into(),
                intermediate_result: "x < -3".into(),
                is_erroneous: Some(true),
            }],
            final_answer: "x < -3".into(),
            source: TrajectorySource::Simulation,
        };
        let addend = ReasoningTrajectory {
            steps: vec![ReasoningStep {
                text: "Move the coefficient -2 to the other side by subtracting it".into(),
                intermediate_result: "x < 8".into(),
                is_erroneous: Some(true),
            }],
            final_answer: "x < 8".into(),
            source: TrajectorySource::Simulation,
        };

        let majority = b
            .summarize(
                &concept,
                &[no_flip.clone(), no_flip.clone(), addend.clone()],
            )
            .unwrap();
        assert_eq!(
            majority,
            "divides both sides of an inequality by a negative number without flipping the inequality sign"
        );

        let single = b
            .summarize(&concept, std::slice::from_ref(&addend))
            .unwrap();
        assert_eq!(
            single,
            "moves a multiplied coefficient across the relation as if it were an added term"
        );

        // Tie: coeff_as_addend < no_flip lexicographically.
        let tied = b.summarize(&concept, &[no_flip, addend]).unwrap();
        assert_eq!(
            tied,
            "moves a multiplied coefficient across the relation as if it were an added term"
        );
    }

    #[test]
    fn predict_applies_the_named_misconception() {
        let b = backend();
        let misconception =
            "divides both sides of an inequality by a negative number without flipping the inequality sign"
                .to_string();
        let (answer, trajectory) = b
            .predict_distractor(
                "Solve for x: -3x < 9",
                &"x > -3".into(),
                &[misconception],
                &mut rng(5),
            )
            .unwrap();
        assert_eq!(answer.as_str(), "x < -3");
        assert_eq!(trajectory.erroneous_step_count(), 1);
        assert_eq!(trajectory.final_answer, answer);
    }

    #[test]
    fn predict_falls_back_when_retrieval_is_empty_or_inapplicable() {
        let b = backend();
        let correct: AnswerText = "x > -3".into();
        let (a1, _) = b
            .predict_distractor("Solve for x: -3x < 9", &correct, &[], &mut rng(5))
            .unwrap();
        assert!(!answers_equivalent(a1.as_str(), correct.as_str()));
        // Same seed, same fallback choice.
        let (a2, _) = b
            .predict_distractor("Solve for x: -3x < 9", &correct, &[], &mut rng(5))
            .unwrap();
        assert_eq!(a1, a2);

        // A counting misconception cannot fire on an inequality stem.
        let inapplicable =
            "doubles the pair count instead of raising two to that power".to_string();
        let (a3, _) = b
            .predict_distractor(
                "Solve for x: -3x < 9",
                &correct,
                &[inapplicable],
                &mut rng(5),
            )
            .unwrap();
        assert!(!answers_equivalent(a3.as_str(), correct.as_str()));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn stem_strategy() -> impl Strategy<Value = String> {
            prop_oneof![
                (prop::sample::select(vec![-9i64, -7, -4, -2, 2, 3, 5, 8]), -9i64..9)
                    .prop_map(|(a, v)| format!("Solve for x: {}x = {}", a, a * v)),
                (
                    prop::sample::select(vec![-9i64, -3, -2, 2, 4, 7]),
                    prop::sample::select(vec![-8i64, -3, -1, 1, 4, 9]),
                    -9i64..9,
                    prop::sample::select(vec!["<", "<=", ">", ">="]),
                )
                    .prop_map(|(a, b, v, op)| {
                        let sign = if b < 0 { "-" } else { "+" };
                        format!("Solve for x: {}x {} {} {} {}", a, sign, b.abs(), op, a * v + b)
                    }),
                (2i64..=7, 2i64..=7).prop_map(|(m, n)| format!(
                    "How many relations are there from a set with {m} elements to a set with {n} elements?"
                )),
                (4i64..=40).prop_map(|p| format!(
                    "A relation table has {p} cells, each either included or excluded. How many relations are possible?"
                )),
            ]
        }

        proptest! {
            /// Output size is exactly B (one correct step plus B-1
            /// erroneous), pairwise distinct, for every reachable state.
            #[test]
            fn proposal_size_is_branching(
                stem in stem_strategy(),
                branching in 2u32..8,
                seed in any::<u64>(),
            ) {
                let b = ScriptedBackend::default();
                let proposal =
                    b.propose_children(&stem, &[], branching, &mut rng(seed)).unwrap();
                prop_assert!(proposal.check(branching).is_ok());
            }

            /// A fixed seed reproduces the proposal bit for bit.
            #[test]
            fn proposal_is_pure_in_inputs_and_seed(stem in stem_strategy(), seed in any::<u64>()) {
                let b = ScriptedBackend::default();
                let first = b.propose_children(&stem, &[], 3, &mut rng(seed)).unwrap();
                let second = b.propose_children(&stem, &[], 3, &mut rng(seed)).unwrap();
                prop_assert_eq!(first, second);
            }

            /// Plausibility stays in [0, 1] whatever the trajectory.
            #[test]
            fn plausibility_is_clamped(
                stem in stem_strategy(),
                texts in prop::collection::vec("[ -~]{0,20}", 0..4),
                terminal in any::<bool>(),
            ) {
                let b = ScriptedBackend::default();
                let steps: Vec<ReasoningStep> = texts
                    .into_iter()
                    .map(|text| ReasoningStep {
                        text,
                        intermediate_result: "x = 1".into(),
                        is_erroneous: Some(true),
                    })
                    .collect();
                let trajectory = ReasoningTrajectory {
                    steps,
                    final_answer: "x = 1".into(),
                    source: if terminal {
                        TrajectorySource::TerminalStop
                    } else {
                        TrajectorySource::Simulation
                    },
                };
                let score = b.score_plausibility(&stem, &trajectory, &"x = 2".into(), &"x = 1".into());
                prop_assert!((0.0..=1.0).contains(&score));
            }
        }
    }

    #[test]
    fn student_solve_carries_error_forward() {
        let pack = RulePack::default_pack();
        let rule = pack.rule("no_flip").unwrap();
        let solve = solve_with_rules(&parse_stem("Solve for x: -2x < 6"), &[rule]);
        assert_eq!(solve.final_answer.as_str(), "x < -3");
        assert!(solve.rule_fired());

        let stop = pack.rule("stop_at_count").unwrap();
        let solve = solve_with_rules(
            &parse_stem(
                "How many relations are there from a set with 2 elements to a set with 3 elements?",
            ),
            &[stop],
        );
        assert_eq!(solve.final_answer.as_str(), "6");
        assert_eq!(solve.source, TrajectorySource::TerminalStop);

        // A rule that never triggers leaves the solve fully correct.
        let solve = solve_with_rules(&parse_stem("solve x + 1 = 3"), &[rule]);
        assert_eq!(solve.final_answer.as_str(), "x = 2");
        assert!(!solve.rule_fired());
    }
}
