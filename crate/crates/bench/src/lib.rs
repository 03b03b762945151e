//! Shared inputs for the benchmarks.

use std::sync::Arc;

use driftloc::corpus::{generate_synthetic_corpus, split_train_test};
use driftloc::env::{feature_len, prepare_task, task_index};
use driftloc::nets::init_params;
use driftloc::{
    ActorCriticParams, Bm25Index, Bm25Params, Corpus, Embedder, EmbedderConfig, EnvConfig, Granularity,
    NetConfig, PreparedBug, Regime, SynthConfig,
};

pub struct Fixture {
    pub corpus: Corpus,
    pub index: Bm25Index,
    pub bugs: Vec<Arc<PreparedBug>>,
    pub env: EnvConfig,
    pub params: ActorCriticParams,
}

/// The default 50-bug synthetic corpus, its stationary file task, and a
/// freshly initialised default-size network.
pub fn fixture() -> Fixture {
    let corpus = generate_synthetic_corpus(&SynthConfig::default(), 0).expect("synthetic corpus");
    let split = split_train_test(&corpus).expect("split");
    let env = EnvConfig { allow_reselect: false, ..EnvConfig::default() };
    let (regime, granularity) = (Regime::Stationary, Granularity::ChangesetFile);
    let index = task_index(&corpus, regime, granularity, Bm25Params::default(), env.index_paths).expect("index");
    let embedder = Embedder::from_config(&EmbedderConfig::default()).expect("embedder");
    let (bugs, _) = prepare_task(&corpus, &split.train, regime, granularity, &index, &embedder, &env).expect("task");
    let net = NetConfig::new(feature_len(env.k, 2 * embedder.dim()), env.k);
    let params = init_params(&net).expect("params");
    Fixture { corpus, index, bugs, env, params }
}
