//! Continual reinforcement learning for bug localization.
//!
//! A bug report and the top-`k` textually similar changesets form a ranking
//! MDP ([`env`]). Actor-critic agents ([`nets`]) learn that MDP cyclically
//! over stationary and non-stationary tasks using CLEAR or EWC
//! ([`learners`]), optionally with a reward bonus from a logistic model of
//! bug-inducing factors ([`factors`]). [`eval`] scores the resulting rankings
//! and the amount of forgetting between tasks.

pub mod corpus;
pub mod embed;
pub mod env;
mod error;
pub mod eval;
pub mod factors;
pub mod learners;
pub mod nets;
pub mod retrieval;
pub mod rng;

pub use corpus::{
    BugReport, CodeUnit, Corpus, Granularity, Regime, Split, SynthConfig, TaskSpec,
};
pub use embed::{Embedder, EmbedderConfig, Embedding};
pub use env::{EnvConfig, Observation, PreparedBug, RankingEnv, StepResult};
pub use error::{Error, Result};
pub use eval::{MetricsReport, RankedResult};
pub use factors::{FactorVector, LogisticModel, SelectionConfig};
pub use learners::{
    LearnerKind, ReplayBuffer, TrainConfig, TrainLog, TrainedAgent, Trajectory, Transition,
    VTraceConfig,
};
pub use nets::{ActorCriticParams, Gradients, NetConfig};
pub use retrieval::{Bm25Index, Bm25Params};
