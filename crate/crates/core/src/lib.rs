//! Training-free personalized distractor generation.
//!
//! The pipeline has two stages. Stage one reconstructs the erroneous
//! reasoning behind a student's past wrong answers with Monte Carlo tree
//! search over model-proposed steps, and distills the recovered trajectories
//! into a per-concept misconception prototype. Stage two retrieves the
//! relevant misconceptions for a new question and simulates the student's
//! faulty reasoning to produce a distractor tailored to them.
//!
//! Model-mediated functions sit behind [`backend::ModelBackend`], with a
//! deterministic scripted implementation over a synthetic arithmetic domain
//! (so the whole pipeline verifies offline against ground truth) and a
//! remote chat-completion implementation for real models.

pub mod backend;
pub mod distractor;
pub mod domain;
pub mod eval;
pub mod mcts;
pub mod numeric;
pub mod par;
pub mod prototype;
pub mod synthetic;
