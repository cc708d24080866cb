//! Monte Carlo tree search over candidate reasoning trajectories.
//!
//! Given one error record, the search explores model-proposed reasoning
//! steps (one correct, B-1 faulty per expansion, plus the option to stop)
//! looking for the most plausible trajectory whose final answer equals the
//! student's chosen distractor. Each iteration scores both the simulated
//! full trajectory and the partial trajectory concluded at the selected
//! node, and propagates both rewards.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::backend::{BackendError, ModelBackend};
use crate::domain::{
    NodeKind, QARecord, ReasoningStep, ReasoningTrajectory, Reward, SearchParams, TrajectorySource,
    TreeNode,
};
use crate::eval::answers_equivalent;

/// UCT selection value. Unvisited children score infinite so every child is
/// tried once before any is revisited.
pub fn uct_score(child_visits: u64, child_total_reward: f64, parent_visits: u64, c: f64) -> f64 {
    if child_visits == 0 {
        return f64::INFINITY;
    }
    let exploitation = child_total_reward / child_visits as f64;
    let exploration = c * ((parent_visits as f64).ln() / child_visits as f64).sqrt();
    exploitation + exploration
}

/// Derives the per-record RNG from the global seed and the record id, so
/// results do not depend on worker scheduling. FNV-1a keeps the derivation
/// stable across platforms and releases.
pub fn record_rng(global_seed: u64, record_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(global_seed, record_id))
}

pub fn derive_seed(global_seed: u64, tag: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    for byte in global_seed.to_le_bytes().iter().chain(tag.as_bytes()) {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

/// Engine switches. `attach_terminal = false` is the terminal-node ablation:
/// no stop children are attached and no partial trajectories are concluded,
/// so only fully simulated trajectories are ever evaluated.
#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    pub attach_terminal: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            attach_terminal: true,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SearchStats {
    pub iterations_run: u32,
    pub nodes_created: usize,
    pub root_visits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredTrajectory {
    pub trajectory: ReasoningTrajectory,
    pub reward: Reward,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoveryResult {
    pub record_id: String,
    pub matched: bool,
    pub best_trajectory: Option<ReasoningTrajectory>,
    pub best_plausibility: f64,
    pub trajectory_log: Vec<ScoredTrajectory>,
    pub stats: SearchStats,
}

#[derive(Debug, Error)]
pub enum RecoverError {
    #[error("invalid search params: {0}")]
    InvalidParams(String),
    #[error("backend failure on record {record_id}: {source}")]
    Backend {
        record_id: String,
        stats: SearchStats,
        #[source]
        source: BackendError,
    },
}

/// Picks the best match from the trajectory log: among entries whose answer
/// matched, the highest plausibility wins; ties prefer fewer steps, then the
/// earliest logged entry.
pub fn select_best(log: &[ScoredTrajectory]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (idx, entry) in log.iter().enumerate() {
        if !entry.reward.is_match() {
            continue;
        }
        let better = match best {
            None => true,
            Some(current) => {
                let cur = &log[current];
                entry.reward.plausibility > cur.reward.plausibility
                    || (entry.reward.plausibility == cur.reward.plausibility
                        && entry.trajectory.steps.len() < cur.trajectory.steps.len())
            }
        };
        if better {
            best = Some(idx);
        }
    }
    best
}

pub fn recover(
    record: &QARecord,
    params: &SearchParams,
    backend: &dyn ModelBackend,
) -> Result<RecoveryResult, RecoverError> {
    recover_with(record, params, backend, SearchOptions::default())
}

pub fn recover_with(
    record: &QARecord,
    params: &SearchParams,
    backend: &dyn ModelBackend,
    options: SearchOptions,
) -> Result<RecoveryResult, RecoverError> {
    recover_traced(record, params, backend, options).map(|(result, _)| result)
}

/// Like [`recover_with`], also returning the final tree for trace export and
/// invariant checks.
pub fn recover_traced(
    record: &QARecord,
    params: &SearchParams,
    backend: &dyn ModelBackend,
    options: SearchOptions,
) -> Result<(RecoveryResult, TreeNode), RecoverError> {
    params.validate().map_err(RecoverError::InvalidParams)?;
    let search = Search {
        record,
        params,
        backend,
        options,
        nodes: vec![Node::root()],
        rng: record_rng(params.seed, &record.record_id),
        log: Vec::new(),
        log_index: HashMap::new(),
        iterations_run: 0,
    };
    search.run()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ProposalState {
    Unexpanded,
    Proposed,
    NoStep,
}

struct Node {
    kind: NodeKind,
    step: Option<ReasoningStep>,
    visits: u64,
    total_reward: f64,
    children: Vec<usize>,
    depth: u32,
    proposal: ProposalState,
}

impl Node {
    fn root() -> Node {
        Node {
            kind: NodeKind::Reasoning,
            step: None,
            visits: 0,
            total_reward: 0.0,
            children: Vec::new(),
            depth: 0,
            proposal: ProposalState::Unexpanded,
        }
    }

    fn child(kind: NodeKind, step: Option<ReasoningStep>, depth: u32) -> Node {
        Node {
            kind,
            step,
            visits: 0,
            total_reward: 0.0,
            children: Vec::new(),
            depth,
            proposal: ProposalState::Unexpanded,
        }
    }
}

enum LeafCase {
    Terminal,
    /// Depth cap reached, or a fully expanded node with nowhere to descend.
    DeadEnd,
    Expandable,
}

struct Search<'a> {
    record: &'a QARecord,
    params: &'a SearchParams,
    backend: &'a dyn ModelBackend,
    options: SearchOptions,
    nodes: Vec<Node>,
    rng: ChaCha8Rng,
    log: Vec<ScoredTrajectory>,
    log_index: HashMap<String, usize>,
    iterations_run: u32,
}

impl<'a> Search<'a> {
    fn run(mut self) -> Result<(RecoveryResult, TreeNode), RecoverError> {
        for _ in 0..self.params.iterations {
            if let Err(source) = self.iteration() {
                return Err(RecoverError::Backend {
                    record_id: self.record.record_id.clone(),
                    stats: self.stats(),
                    source,
                });
            }
            self.iterations_run += 1;
        }
        let best = select_best(&self.log);
        let result = RecoveryResult {
            record_id: self.record.record_id.clone(),
            matched: best.is_some(),
            best_trajectory: best.map(|i| self.log[i].trajectory.clone()),
            best_plausibility: best.map(|i| self.log[i].reward.plausibility).unwrap_or(0.0),
            trajectory_log: std::mem::take(&mut self.log),
            stats: self.stats(),
        };
        let tree = self.to_tree(0);
        Ok((result, tree))
    }

    fn stats(&self) -> SearchStats {
        SearchStats {
            iterations_run: self.iterations_run,
            nodes_created: self.nodes.len(),
            root_visits: self.nodes[0].visits,
        }
    }

    fn iteration(&mut self) -> Result<(), BackendError> {
        let mut path = self.select();
        let leaf = *path.last().expect("path contains the root");
        match self.classify(leaf) {
            LeafCase::Terminal => {
                let prefix = self.path_steps(&path);
                self.evaluate_stop(&path, &prefix);
                Ok(())
            }
            LeafCase::DeadEnd => {
                self.evaluate_dead_end(&path)?;
                Ok(())
            }
            LeafCase::Expandable => {
                let prefix = self.path_steps(&path);
                match self.expand(leaf, &prefix)? {
                    None => {
                        // The proposal found no applicable step and terminal
                        // children are disabled; evaluate the node as-is.
                        self.evaluate_dead_end(&path)?;
                        Ok(())
                    }
                    Some(child) => {
                        path.push(child);
                        if self.nodes[child].kind == NodeKind::Terminal {
                            let prefix = self.path_steps(&path);
                            self.evaluate_stop(&path, &prefix);
                            Ok(())
                        } else {
                            self.evaluate_expansion(&path)
                        }
                    }
                }
            }
        }
    }

    fn select(&self) -> Vec<usize> {
        let mut path = vec![0usize];
        let mut current = 0usize;
        loop {
            let node = &self.nodes[current];
            if node.kind == NodeKind::Terminal
                || node.depth >= self.params.max_depth
                || !self.is_fully_expanded(current)
                || node.children.is_empty()
            {
                break;
            }
            let parent_visits = node.visits.max(1);
            let mut best = node.children[0];
            let mut best_score = f64::NEG_INFINITY;
            // Ties resolve to the earlier child by creation order.
            for &child_id in &node.children {
                let child = &self.nodes[child_id];
                let score = uct_score(
                    child.visits,
                    child.total_reward,
                    parent_visits,
                    self.params.exploration_constant,
                );
                if score > best_score {
                    best_score = score;
                    best = child_id;
                }
            }
            path.push(best);
            current = best;
        }
        path
    }

    fn classify(&self, leaf: usize) -> LeafCase {
        let node = &self.nodes[leaf];
        if node.kind == NodeKind::Terminal {
            LeafCase::Terminal
        } else if node.depth >= self.params.max_depth {
            LeafCase::DeadEnd
        } else if !self.is_fully_expanded(leaf) {
            LeafCase::Expandable
        } else {
            LeafCase::DeadEnd
        }
    }

    /// A node is fully expanded once its children exist and every
    /// non-terminal child has been visited; the terminal child's visit state
    /// does not matter.
    fn is_fully_expanded(&self, id: usize) -> bool {
        let node = &self.nodes[id];
        if node.proposal == ProposalState::Unexpanded {
            return false;
        }
        node.children
            .iter()
            .map(|&c| &self.nodes[c])
            .filter(|c| c.kind == NodeKind::Reasoning)
            .all(|c| c.visits > 0)
    }

    /// Creates the node's children on first expansion (one proposal call,
    /// all children attached atomically), then returns a uniformly random
    /// unvisited non-terminal child, or the unvisited terminal child once
    /// all non-terminal children have been visited.
    fn expand(
        &mut self,
        id: usize,
        prefix: &[ReasoningStep],
    ) -> Result<Option<usize>, BackendError> {
        if self.nodes[id].proposal == ProposalState::Unexpanded {
            let depth = self.nodes[id].depth;
            match self.backend.propose_children(
                &self.record.stem,
                prefix,
                self.params.branching,
                &mut self.rng,
            ) {
                Ok(proposal) => {
                    let mut child_ids = Vec::with_capacity(proposal.erroneous_steps.len() + 2);
                    // Erroneous candidates come first: on tied UCT scores the
                    // search leans toward error branches, which is what it is
                    // hunting for.
                    for step in proposal
                        .erroneous_steps
                        .into_iter()
                        .chain(std::iter::once(proposal.correct_step))
                    {
                        child_ids.push(self.push_node(Node::child(
                            NodeKind::Reasoning,
                            Some(step),
                            depth + 1,
                        )));
                    }
                    if self.options.attach_terminal {
                        child_ids.push(self.push_node(Node::child(
                            NodeKind::Terminal,
                            None,
                            depth + 1,
                        )));
                    }
                    self.nodes[id].children = child_ids;
                    self.nodes[id].proposal = ProposalState::Proposed;
                }
                Err(BackendError::NoApplicableStep) => {
                    if self.options.attach_terminal {
                        let terminal =
                            self.push_node(Node::child(NodeKind::Terminal, None, depth + 1));
                        self.nodes[id].children = vec![terminal];
                    }
                    self.nodes[id].proposal = ProposalState::NoStep;
                }
                Err(other) => return Err(other),
            }
        }
        let unvisited: Vec<usize> = self.nodes[id]
            .children
            .iter()
            .copied()
            .filter(|&c| self.nodes[c].kind == NodeKind::Reasoning && self.nodes[c].visits == 0)
            .collect();
        if !unvisited.is_empty() {
            let pick = unvisited[self.rng.random_range(0..unvisited.len())];
            return Ok(Some(pick));
        }
        let terminal = self.nodes[id]
            .children
            .iter()
            .copied()
            .find(|&c| self.nodes[c].kind == NodeKind::Terminal && self.nodes[c].visits == 0);
        Ok(terminal)
    }

    /// Simulation from a freshly expanded reasoning child: score the rolled
    /// out trajectory, and in normal mode also the partial trajectory ending
    /// at the child, then propagate each reward in its own pass.
    fn evaluate_expansion(&mut self, path: &[usize]) -> Result<(), BackendError> {
        let prefix = self.path_steps(path);
        let full = match self.backend.rollout(
            &self.record.stem,
            &prefix,
            self.params.rollout_cap,
            &mut self.rng,
        ) {
            Ok(trajectory) => Some(trajectory),
            Err(BackendError::RolloutDivergence) => None,
            Err(other) => return Err(other),
        };
        let full_reward = match full {
            Some(trajectory) => {
                let reward = self.score(&trajectory);
                self.log_trajectory(trajectory, reward);
                reward
            }
            None => Reward::zero(),
        };
        if !self.options.attach_terminal {
            self.backprop(path, &[full_reward]);
            return Ok(());
        }
        let partial_reward = match self.conclude_trajectory(&prefix) {
            Some(trajectory) => {
                let reward = self.score(&trajectory);
                self.log_trajectory(trajectory, reward);
                reward
            }
            None => Reward::zero(),
        };
        self.backprop(path, &[full_reward, partial_reward]);
        Ok(())
    }

    /// A terminal selection: the partial and full trajectories coincide, so
    /// a single reward is propagated.
    fn evaluate_stop(&mut self, path: &[usize], prefix: &[ReasoningStep]) {
        let reward = match self.conclude_trajectory(prefix) {
            Some(trajectory) => {
                let reward = self.score(&trajectory);
                self.log_trajectory(trajectory, reward);
                reward
            }
            None => Reward::zero(),
        };
        self.backprop(path, &[reward]);
    }

    /// Depth-capped or childless leaves still consume the iteration: score
    /// the partial trajectory (or, under the terminal ablation, a rollout).
    fn evaluate_dead_end(&mut self, path: &[usize]) -> Result<(), BackendError> {
        let prefix = self.path_steps(path);
        if self.options.attach_terminal {
            self.evaluate_stop(path, &prefix);
            return Ok(());
        }
        let reward = match self.backend.rollout(
            &self.record.stem,
            &prefix,
            self.params.rollout_cap,
            &mut self.rng,
        ) {
            Ok(trajectory) => {
                let reward = self.score(&trajectory);
                self.log_trajectory(trajectory, reward);
                reward
            }
            Err(BackendError::RolloutDivergence) => Reward::zero(),
            Err(other) => return Err(other),
        };
        self.backprop(path, &[reward]);
        Ok(())
    }

    fn path_steps(&self, path: &[usize]) -> Vec<ReasoningStep> {
        path.iter()
            .filter_map(|&id| self.nodes[id].step.clone())
            .collect()
    }

    fn conclude_trajectory(&self, prefix: &[ReasoningStep]) -> Option<ReasoningTrajectory> {
        let answer = self.backend.conclude(&self.record.stem, prefix);
        if answer.is_empty() {
            return None;
        }
        Some(ReasoningTrajectory {
            steps: prefix.to_vec(),
            final_answer: answer,
            source: TrajectorySource::TerminalStop,
        })
    }

    fn score(&self, trajectory: &ReasoningTrajectory) -> Reward {
        let matched = answers_equivalent(
            trajectory.final_answer.as_str(),
            self.record.chosen_answer.as_str(),
        );
        let plausibility = self.backend.score_plausibility(
            &self.record.stem,
            trajectory,
            &self.record.correct_answer,
            &self.record.chosen_answer,
        );
        Reward::new(matched, plausibility, self.params.plausibility_weight)
    }

    /// Complete trajectories dedupe by (step texts, final answer), keeping
    /// the max-reward instance at its first-logged position.
    fn log_trajectory(&mut self, trajectory: ReasoningTrajectory, reward: Reward) {
        let mut key = String::new();
        for step in &trajectory.steps {
            key.push_str(&step.text);
            key.push('\u{1}');
            key.push_str(&step.intermediate_result);
            key.push('\u{2}');
        }
        key.push_str(trajectory.final_answer.as_str());
        match self.log_index.get(&key) {
            Some(&idx) => {
                if reward.total > self.log[idx].reward.total {
                    self.log[idx] = ScoredTrajectory { trajectory, reward };
                }
            }
            None => {
                self.log_index.insert(key, self.log.len());
                self.log.push(ScoredTrajectory { trajectory, reward });
            }
        }
    }

    fn backprop(&mut self, path: &[usize], rewards: &[Reward]) {
        for reward in rewards {
            for &id in path {
                self.nodes[id].visits += 1;
                self.nodes[id].total_reward += reward.total;
            }
        }
    }

    fn push_node(&mut self, node: Node) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    fn to_tree(&self, id: usize) -> TreeNode {
        let node = &self.nodes[id];
        TreeNode {
            kind: node.kind,
            step: node.step.clone(),
            visit_count: node.visits,
            total_reward: node.total_reward,
            depth: node.depth,
            expanded_via_proposal: node.proposal == ProposalState::Proposed,
            children: node.children.iter().map(|&c| self.to_tree(c)).collect(),
        }
    }
}
