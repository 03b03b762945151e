//! Continual learners over the ranking MDP: CLEAR (V-Trace with replay and
//! behavioral cloning), EWC (V-Trace with a Fisher penalty), and a naive
//! sequential V-Trace learner used as the forgetting baseline.

mod ewc;
mod replay;
mod train;
mod vtrace;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{Observation, PreparedBug};
use crate::error::{Error, Result};
use crate::nets::{LossStats, LossWeights, OptimizerKind};

pub use ewc::{ewc_fisher, Anchor, EwcState, ProbeSample};
pub use replay::ReplayBuffer;
pub use train::{
    clear_update, greedy_return, probe_samples, rollout, train_continual, vtrace_update, TaskData,
    TrainedAgent,
};
pub use vtrace::{vtrace_targets, VTraceConfig, VTraceTargets};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Clear,
    Ewc,
    Naive,
}

impl LearnerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::Clear => "clear",
            LearnerKind::Ewc => "ewc",
            LearnerKind::Naive => "naive",
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clear" => Ok(LearnerKind::Clear),
            "ewc" => Ok(LearnerKind::Ewc),
            "naive" => Ok(LearnerKind::Naive),
            _ => Err(Error::Config(format!("unknown learner `{s}` (clear, ewc, naive)"))),
        }
    }
}

/// One environment step as seen by the acting policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Features are rebuilt from the observation on demand.
    pub obs: Observation,
    pub action: usize,
    pub reward: f64,
    pub behavior_log_probs: Vec<f64>,
    pub behavior_value: f64,
    pub mask: Vec<bool>,
    pub done: bool,
}

/// A segment of at most `segment_length` consecutive transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    /// State after the last transition, `None` when that transition ended
    /// the episode.
    pub bootstrap: Option<Observation>,
    /// Behavior value of `bootstrap`, zero when terminal.
    pub bootstrap_value: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learner: LearnerKind,
    pub episodes_per_task: usize,
    pub cycles: usize,
    pub segment_length: usize,
    /// Trajectory segments per update, new plus replayed.
    pub batch_size: usize,
    pub replay_ratio: f64,
    pub buffer_capacity: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub clone_policy_coef: f64,
    pub clone_value_coef: f64,
    pub ewc_lambda: f64,
    /// Episodes rolled out under the final policy of a phase for the Fisher.
    pub fisher_episodes: usize,
    /// Train bugs per task whose greedy return is logged at phase ends.
    pub probe_bugs: usize,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    /// Rewards are clamped to `[-c, c]` inside the learner only; logged
    /// returns and the environment are unaffected.
    pub reward_clip: Option<f64>,
    pub optimizer: OptimizerKind,
    pub vtrace: VTraceConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learner: LearnerKind::Clear,
            episodes_per_task: 7500,
            cycles: 2,
            segment_length: 16,
            batch_size: 8,
            replay_ratio: 0.5,
            buffer_capacity: 5000,
            value_coef: 0.5,
            entropy_coef: 0.01,
            clone_policy_coef: 0.01,
            clone_value_coef: 0.005,
            ewc_lambda: 100.0,
            fisher_episodes: 10,
            probe_bugs: 20,
            learning_rate: 1e-3,
            max_grad_norm: 40.0,
            reward_clip: None,
            optimizer: OptimizerKind::Sgd,
            vtrace: VTraceConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes_per_task == 0 || self.cycles == 0 {
            return Err(Error::Config("episodes_per_task and cycles must be ≥ 1".into()));
        }
        if self.segment_length == 0 || self.batch_size == 0 {
            return Err(Error::Config("segment_length and batch_size must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.replay_ratio) {
            return Err(Error::Config(format!("replay_ratio {} outside [0, 1]", self.replay_ratio)));
        }
        if self.effective_replay_ratio() > 0.0 && self.new_per_update() == 0 {
            return Err(Error::Config("replay_ratio leaves no room for new segments".into()));
        }
        if !(self.learning_rate >= 0.0) || !(self.max_grad_norm > 0.0) {
            return Err(Error::Config("learning_rate must be ≥ 0 and max_grad_norm > 0".into()));
        }
        if self.reward_clip.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::Config("reward_clip must be finite and > 0".into()));
        }
        let coefs = [
            self.value_coef,
            self.entropy_coef,
            self.clone_policy_coef,
            self.clone_value_coef,
            self.ewc_lambda,
        ];
        if coefs.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::Config("loss coefficients must be finite and ≥ 0".into()));
        }
        if self.learner == LearnerKind::Ewc && self.fisher_episodes == 0 {
            return Err(Error::Config("ewc needs fisher_episodes ≥ 1".into()));
        }
        self.vtrace.validate()
    }

    /// Only CLEAR replays.
    pub fn effective_replay_ratio(&self) -> f64 {
        match self.learner {
            LearnerKind::Clear => self.replay_ratio,
            LearnerKind::Ewc | LearnerKind::Naive => 0.0,
        }
    }

    pub fn new_per_update(&self) -> usize {
        ((1.0 - self.effective_replay_ratio()) * self.batch_size as f64).ceil() as usize
    }

    pub fn replay_per_update(&self) -> usize {
        (self.effective_replay_ratio() * self.batch_size as f64).floor() as usize
    }

    pub fn loss_weights(&self) -> LossWeights {
        let cloning = self.learner == LearnerKind::Clear;
        LossWeights {
            value: self.value_coef,
            entropy: self.entropy_coef,
            clone_policy: if cloning { self.clone_policy_coef } else { 0.0 },
            clone_value: if cloning { self.clone_value_coef } else { 0.0 },
        }
    }
}

/// Deterministic record of one training run. Wall-clock times are kept out
/// of the serialized form so identical runs produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Library version that produced the run.
    pub version: String,
    /// Resolved experiment settings, filled in by the caller.
    #[serde(default)]
    pub config: BTreeMap<String, String>,
    pub learner: LearnerKind,
    pub seed: u64,
    pub task_names: Vec<String>,
    /// Task index trained in each phase.
    pub phase_tasks: Vec<usize>,
    /// `returns[i][j]`: greedy mean return on task `i`'s probe bugs at the
    /// end of phase `j`.
    pub returns: Vec<Vec<f64>>,
    /// Mean loss terms over the updates of each phase.
    pub losses: Vec<LossStats>,
    pub updates: Vec<usize>,
    pub episodes: usize,
    #[serde(skip)]
    pub phase_seconds: Vec<f64>,
}

impl TrainLog {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn training_seconds(&self) -> f64 {
        self.phase_seconds.iter().sum()
    }
}

pub(crate) fn episode_bug(bugs: &[Arc<PreparedBug>], counter: usize) -> &Arc<PreparedBug> {
    &bugs[counter % bugs.len()]
}
