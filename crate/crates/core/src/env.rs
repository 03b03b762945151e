//! The ranking MDP. An episode starts with the top-`k` BM25 candidates for a
//! bug report; every action moves one candidate into the ranked list.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Granularity, Regime};
use crate::embed::{combine, Embedder};
use crate::error::{Error, Result};
use crate::factors::{compute_factors, LogisticModel};
use crate::retrieval::{Bm25Index, Bm25Params};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub k: usize,
    /// `M` in the reward numerator.
    pub reward_scale: f64,
    pub gamma: f64,
    /// Step cap; `None` means `4 k`.
    pub max_steps: Option<usize>,
    pub allow_reselect: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regression_bonus: Option<LogisticModel>,
    /// Append the report title to the BM25 query.
    pub query_title: bool,
    /// Index unit paths along with their contents.
    pub index_paths: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            k: 31,
            reward_scale: 3.0,
            gamma: 0.99,
            max_steps: None,
            allow_reselect: true,
            regression_bonus: None,
            query_title: false,
            index_paths: true,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be ≥ 1".into()));
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return Err(Error::Config(format!("reward_scale {} must be positive", self.reward_scale)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        if self.max_steps == Some(0) {
            return Err(Error::Config("max_steps must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn step_cap(&self) -> usize {
        self.max_steps.unwrap_or(4 * self.k)
    }
}

/// Everything an episode needs about one bug, computed once per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedBug {
    pub bug_id: String,
    pub k: usize,
    /// Combined embedding width `2 d`.
    pub width: usize,
    /// Live candidates in BM25 order; slots past `unit_ids.len()` are padding.
    pub unit_ids: Vec<String>,
    /// `k * width` values, slot-major, zero for padding.
    pub embeddings: Vec<f64>,
    pub relevant: Vec<bool>,
    /// Bug probability of each slot's unit, zero without a regression model.
    pub bonus: Vec<f64>,
    /// Every linked unit of the task's regime and granularity on a
    /// ground-truth path, retrieved or not.
    pub relevant_ids: BTreeSet<String>,
}

impl PreparedBug {
    pub fn n_live(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn slot(&self, i: usize) -> &[f64] {
        &self.embeddings[i * self.width..(i + 1) * self.width]
    }
}

/// Index over one regime and granularity of a corpus.
pub fn task_index(
    corpus: &Corpus,
    regime: Regime,
    granularity: Granularity,
    params: Bm25Params,
    index_paths: bool,
) -> Result<Bm25Index> {
    let docs: Vec<(&str, String)> = corpus
        .pool(regime, granularity)
        .into_iter()
        .map(|u| {
            let text = if index_paths {
                format!("{}\n{}", u.path, u.content)
            } else {
                u.content.clone()
            };
            (u.id.as_str(), text)
        })
        .collect();
    Bm25Index::build(docs.iter().map(|(id, t)| (*id, t.as_str())), params)
}

/// BM25 top-k among the units linked to `bug_id` for this regime and
/// granularity, best first.
pub fn retrieve(
    corpus: &Corpus,
    bug_id: &str,
    regime: Regime,
    granularity: Granularity,
    index: &Bm25Index,
    cfg: &EnvConfig,
) -> Result<Vec<(String, f64)>> {
    let bug = corpus
        .bug(bug_id)
        .ok_or_else(|| Error::Validation(format!("unknown bug `{bug_id}`")))?;
    let linked = corpus.candidates(bug_id, regime, granularity);
    let allowed: BTreeSet<&str> = linked.iter().map(|u| u.id.as_str()).collect();
    let query = if cfg.query_title {
        format!("{}\n{}", bug.title, bug.description)
    } else {
        bug.description.clone()
    };
    Ok(index.query_top_k_filtered(&query, cfg.k, |id| allowed.contains(id)))
}

/// Retrieves, embeds and labels the candidates of `bug_id`.
pub fn prepare_bug(
    corpus: &Corpus,
    bug_id: &str,
    regime: Regime,
    granularity: Granularity,
    index: &Bm25Index,
    embedder: &Embedder,
    cfg: &EnvConfig,
) -> Result<PreparedBug> {
    let hits = retrieve(corpus, bug_id, regime, granularity, index, cfg)?;
    if hits.is_empty() {
        return Err(Error::Validation(format!("bug `{bug_id}` retrieves no candidates")));
    }
    prepare_hits(corpus, bug_id, regime, granularity, hits, embedder, cfg)
}

fn prepare_hits(
    corpus: &Corpus,
    bug_id: &str,
    regime: Regime,
    granularity: Granularity,
    hits: Vec<(String, f64)>,
    embedder: &Embedder,
    cfg: &EnvConfig,
) -> Result<PreparedBug> {
    let bug = corpus
        .bug(bug_id)
        .ok_or_else(|| Error::Validation(format!("unknown bug `{bug_id}`")))?;
    let linked = corpus.candidates(bug_id, regime, granularity);
    let units = corpus.unit_index();
    let report = embedder.embed_report(bug_id, &bug.description)?;
    let width = 2 * embedder.dim();
    let mut embeddings = vec![0.0; cfg.k * width];
    let mut relevant = vec![false; cfg.k];
    let mut bonus = vec![0.0; cfg.k];
    let mut unit_ids = Vec::with_capacity(hits.len());
    for (slot, (id, _)) in hits.into_iter().enumerate() {
        let unit = units[id.as_str()];
        let file = embedder.embed(&unit.id, &unit.content)?;
        embeddings[slot * width..(slot + 1) * width].copy_from_slice(&combine(&file, &report)?.values);
        relevant[slot] = bug.ground_truth_paths.contains(&unit.path);
        if let Some(model) = &cfg.regression_bonus {
            bonus[slot] = model.predict_bug_probability(&compute_factors(unit, corpus))?;
        }
        unit_ids.push(id);
    }
    let relevant_ids = linked
        .iter()
        .filter(|u| bug.ground_truth_paths.contains(&u.path))
        .map(|u| u.id.clone())
        .collect();

    Ok(PreparedBug {
        bug_id: bug_id.to_string(),
        k: cfg.k,
        width,
        unit_ids,
        embeddings,
        relevant,
        bonus,
        relevant_ids,
    })
}

/// Prepares every bug of a task. Bugs that retrieve no candidates are
/// returned by id in the second slot instead of failing the task.
pub fn prepare_task(
    corpus: &Corpus,
    bug_ids: &[String],
    regime: Regime,
    granularity: Granularity,
    index: &Bm25Index,
    embedder: &Embedder,
    cfg: &EnvConfig,
) -> Result<(Vec<Arc<PreparedBug>>, Vec<String>)> {
    let mut bugs = Vec::with_capacity(bug_ids.len());
    let mut skipped = Vec::new();
    for id in bug_ids {
        let hits = retrieve(corpus, id, regime, granularity, index, cfg)?;
        if hits.is_empty() {
            log::debug!("bug `{id}` retrieves no {regime} {granularity} candidates");
            skipped.push(id.clone());
            continue;
        }
        bugs.push(Arc::new(prepare_hits(corpus, id, regime, granularity, hits, embedder, cfg)?));
    }
    Ok((bugs, skipped))
}

/// Episode state. Candidate embeddings and labels live in the shared
/// [`PreparedBug`], so observations are cheap to clone and store.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub bug: Arc<PreparedBug>,
    /// Slot indices in ranking order.
    pub ranked: Vec<usize>,
    /// Starts at 1.
    pub t: usize,
}

impl Observation {
    pub fn initial(bug: Arc<PreparedBug>) -> Observation {
        Observation { bug, ranked: Vec::new(), t: 1 }
    }

    pub fn k(&self) -> usize {
        self.bug.k
    }

    pub fn is_ranked(&self, slot: usize) -> bool {
        self.ranked.contains(&slot)
    }

    pub fn relevance_mask(&self) -> &[bool] {
        &self.bug.relevant
    }

    pub fn feature_len(&self) -> usize {
        feature_len(self.bug.k, self.bug.width)
    }

    /// `true` marks slots the policy may not choose: padding always, and
    /// already-ranked slots when `reselect` is off.
    pub fn action_mask(&self, reselect: bool) -> Vec<bool> {
        let mut mask: Vec<bool> = (0..self.k()).map(|i| i >= self.bug.n_live()).collect();
        if !reselect {
            for &r in &self.ranked {
                mask[r] = true;
            }
        }
        mask
    }

    pub fn features(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.feature_len()];
        self.write_features(&mut out);
        out
    }

    /// Slot blocks (zeroed once ranked), ranked flags, then `(t - 1) / k`.
    pub fn write_features(&self, out: &mut [f64]) {
        let (k, w) = (self.k(), self.bug.width);
        debug_assert_eq!(out.len(), feature_len(k, w));
        out[..k * w].copy_from_slice(&self.bug.embeddings);
        out[k * w..].fill(0.0);
        for &r in &self.ranked {
            out[r * w..(r + 1) * w].fill(0.0);
            out[k * w + r] = 1.0;
        }
        out[k * w + k] = (self.t - 1) as f64 / k as f64;
    }
}

pub fn feature_len(k: usize, width: usize) -> usize {
    k * width + k + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub relevant_pick: bool,
    pub fresh: bool,
    pub distance: f64,
    pub bonus: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Mean gap between consecutive 1-based positions of relevant items; 1 when
/// fewer than two are ranked.
pub fn distance(positions: &[usize]) -> f64 {
    if positions.len() < 2 {
        return 1.0;
    }
    let span = positions[positions.len() - 1] - positions[0];
    span as f64 / (positions.len() - 1) as f64
}

/// Reward for taking `action` in `obs`.
pub fn compute_reward(obs: &Observation, action: usize, cfg: &EnvConfig) -> Result<(f64, StepInfo)> {
    let k = obs.k();
    if action >= k {
        return Err(Error::Validation(format!("action {action} outside [0, {k})")));
    }
    let bonus = if cfg.regression_bonus.is_some() { obs.bug.bonus[action] } else { 0.0 };
    let discount = ((obs.t + 1) as f64).log2();
    if action >= obs.bug.n_live() || obs.is_ranked(action) {
        let info = StepInfo { relevant_pick: false, fresh: false, distance: 1.0, bonus };
        return Ok((-discount + bonus, info));
    }

    let relevant = obs.bug.relevant[action];
    let positions: Vec<usize> = obs
        .ranked
        .iter()
        .chain(std::iter::once(&action))
        .enumerate()
        .filter(|&(_, &slot)| obs.bug.relevant[slot])
        .map(|(i, _)| i + 1)
        .collect();
    let d = distance(&positions);
    let gain = if relevant { cfg.reward_scale / (discount * d) } else { 0.0 };
    let info = StepInfo { relevant_pick: relevant, fresh: true, distance: d, bonus };
    Ok((gain + bonus, info))
}

/// Applies `action` to `obs` without checking termination.
pub fn transition(obs: &Observation, action: usize, cfg: &EnvConfig) -> Result<StepResult> {
    let (reward, info) = compute_reward(obs, action, cfg)?;
    let mut next = obs.clone();
    if info.fresh {
        next.ranked.push(action);
    }
    next.t += 1;
    let done = next.ranked.len() == next.bug.n_live() || next.t > cfg.step_cap();
    Ok(StepResult { observation: next, reward, done, info })
}

/// Stateful single-episode wrapper around [`transition`].
#[derive(Debug, Clone)]
pub struct RankingEnv {
    cfg: EnvConfig,
    obs: Option<Observation>,
    done: bool,
}

impl RankingEnv {
    pub fn new(cfg: EnvConfig) -> Result<RankingEnv> {
        cfg.validate()?;
        Ok(RankingEnv { cfg, obs: None, done: true })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn reset(&mut self, bug: Arc<PreparedBug>) -> Result<Observation> {
        if bug.k != self.cfg.k {
            return Err(Error::Dimension { expected: self.cfg.k, got: bug.k });
        }
        if bug.n_live() == 0 {
            return Err(Error::Validation(format!("bug `{}` has no candidates", bug.bug_id)));
        }
        let obs = Observation::initial(bug);
        self.obs = Some(obs.clone());
        self.done = false;
        Ok(obs)
    }

    pub fn observation(&self) -> Option<&Observation> {
        self.obs.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        let obs = match (&self.obs, self.done) {
            (Some(obs), false) => obs,
            _ => return Err(Error::EpisodeDone),
        };
        let result = transition(obs, action, &self.cfg)?;
        self.obs = Some(result.observation.clone());
        self.done = result.done;
        Ok(result)
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// A bug with the given relevance labels and distinct one-hot embeddings.
    pub fn bug(k: usize, relevant: &[bool]) -> Arc<PreparedBug> {
        let width = 4;
        let mut embeddings = vec![0.0; k * width];
        for (i, _) in relevant.iter().enumerate() {
            embeddings[i * width + i % width] = 1.0;
            embeddings[i * width + (i + 1) % width] = 0.5;
        }
        let mut rel = vec![false; k];
        rel[..relevant.len()].copy_from_slice(relevant);
        Arc::new(PreparedBug {
            bug_id: "b".into(),
            k,
            width,
            unit_ids: (0..relevant.len()).map(|i| format!("u{i}")).collect(),
            embeddings,
            relevant: rel,
            bonus: vec![0.0; k],
            relevant_ids: relevant
                .iter()
                .enumerate()
                .filter(|(_, &r)| r)
                .map(|(i, _)| format!("u{i}"))
                .collect(),
        })
    }
}
