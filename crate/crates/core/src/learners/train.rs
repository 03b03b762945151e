use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{
    episode_bug, ewc_fisher, vtrace_targets, EwcState, LearnerKind, ProbeSample, ReplayBuffer, TrainConfig,
    TrainLog, Trajectory, Transition,
};
use crate::env::{transition, EnvConfig, Observation, PreparedBug};
use crate::error::{Error, Result};
use crate::nets::{
    backward_with, forward, forward_batch, init_params, ActorCriticParams, Batch, Behavior, LossStats,
    NetConfig, Optimizer,
};
use crate::rng::{self, Rng};

const ACTING_STREAM: u64 = 0x6163_7420;

/// Prepared train bugs of one task.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub name: String,
    pub bugs: Vec<Arc<PreparedBug>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedAgent {
    pub learner: LearnerKind,
    pub params: ActorCriticParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ewc: Option<EwcState>,
}

impl TrainedAgent {
    /// Greedy ranking of every live slot, without re-selection.
    pub fn rank(&self, bug: &Arc<PreparedBug>, env_cfg: &EnvConfig) -> Result<Vec<usize>> {
        Ok(greedy_episode(&self.params, bug, env_cfg)?.0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<TrainedAgent> {
        let agent: TrainedAgent = serde_json::from_str(text)?;
        // Re-validates the parameter layout.
        ActorCriticParams::from_json(&serde_json::to_string(&agent.params)?)?;
        Ok(agent)
    }
}

fn sample_action(rng: &mut Rng, log_probs: &[f64], mask: &[bool]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, lp) in log_probs.iter().enumerate() {
        if mask[i] {
            continue;
        }
        acc += lp.exp();
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// One stochastic episode under `params`, split into segments of at most
/// `segment_length` transitions. Returns the segments and the episode return.
pub fn rollout(
    params: &ActorCriticParams,
    bug: &Arc<PreparedBug>,
    env_cfg: &EnvConfig,
    segment_length: usize,
    rng: &mut Rng,
) -> Result<(Vec<Trajectory>, f64)> {
    let mut obs = Observation::initial(bug.clone());
    let mut steps = Vec::new();
    let mut total = 0.0;
    let mut features = vec![0.0; obs.feature_len()];
    loop {
        obs.write_features(&mut features);
        let mask = obs.action_mask(env_cfg.allow_reselect);
        let out = forward(params, &features, &mask)?;
        let action = sample_action(rng, &out.log_probs, &mask);
        let step = transition(&obs, action, env_cfg)?;
        total += step.reward;
        steps.push(Transition {
            obs,
            action,
            reward: step.reward,
            behavior_log_probs: out.log_probs,
            behavior_value: out.value,
            mask,
            done: step.done,
        });
        obs = step.observation;
        if step.done {
            break;
        }
    }

    let mut segments: Vec<Trajectory> = Vec::new();
    let mut rest = steps.into_iter().peekable();
    while rest.peek().is_some() {
        let chunk: Vec<Transition> = rest.by_ref().take(segment_length).collect();
        let (bootstrap, bootstrap_value) = match rest.peek() {
            Some(next) => (Some(next.obs.clone()), next.behavior_value),
            None => (None, 0.0),
        };
        segments.push(Trajectory { transitions: chunk, bootstrap, bootstrap_value });
    }
    Ok((segments, total))
}

/// Greedy episode with re-selection disabled: the ranked slots and the return.
pub(crate) fn greedy_episode(params: &ActorCriticParams, bug: &Arc<PreparedBug>, env_cfg: &EnvConfig) -> Result<(Vec<usize>, f64)> {
    let cfg = EnvConfig { allow_reselect: false, ..env_cfg.clone() };
    let mut obs = Observation::initial(bug.clone());
    let mut features = vec![0.0; obs.feature_len()];
    let mut total = 0.0;
    loop {
        obs.write_features(&mut features);
        let mask = obs.action_mask(false);
        let action = forward(params, &features, &mask)?.greedy();
        let step = transition(&obs, action, &cfg)?;
        total += step.reward;
        obs = step.observation;
        if step.done {
            return Ok((obs.ranked, total));
        }
    }
}

pub fn greedy_return(params: &ActorCriticParams, bugs: &[Arc<PreparedBug>], env_cfg: &EnvConfig) -> Result<f64> {
    if bugs.is_empty() {
        return Err(Error::Validation("no probe bugs".into()));
    }
    let mut total = 0.0;
    for b in bugs {
        total += greedy_episode(params, b, env_cfg)?.1;
    }
    Ok(total / bugs.len() as f64)
}

/// Transitions collected under the current stochastic policy.
pub fn probe_samples(
    params: &ActorCriticParams,
    bugs: &[Arc<PreparedBug>],
    episodes: usize,
    env_cfg: &EnvConfig,
    rng: &mut Rng,
) -> Result<Vec<ProbeSample>> {
    let mut out = Vec::new();
    for e in 0..episodes {
        let (segments, _) = rollout(params, episode_bug(bugs, e), env_cfg, usize::MAX, rng)?;
        for t in segments.into_iter().flat_map(|s| s.transitions) {
            out.push((t.obs.features(), t.mask, t.action));
        }
    }
    Ok(out)
}

fn feature_matrix<'a>(dim: usize, observations: impl ExactSizeIterator<Item = &'a Observation>) -> DMatrix<f64> {
    let n = observations.len();
    let mut x = DMatrix::zeros(dim, n);
    let data = x.as_mut_slice();
    for (c, obs) in observations.enumerate() {
        obs.write_features(&mut data[c * dim..(c + 1) * dim]);
    }
    x
}

/// One V-Trace actor-critic step on `new` plus `replayed` segments, with
/// behavioral cloning on the replayed ones and an optional EWC penalty.
/// Returns the loss terms and the gradient norm before clipping.
pub fn vtrace_update(
    params: &mut ActorCriticParams,
    opt: &mut Optimizer,
    new: &[Trajectory],
    replayed: &[Trajectory],
    cfg: &TrainConfig,
    ewc: Option<&EwcState>,
) -> Result<(LossStats, f64)> {
    let dim = params.config.input_dim;
    let k = params.config.n_actions;
    let trajs: Vec<(&Trajectory, bool)> = new
        .iter()
        .map(|t| (t, false))
        .chain(replayed.iter().map(|t| (t, true)))
        .filter(|(t, _)| !t.is_empty())
        .collect();
    if trajs.is_empty() {
        return Err(Error::Validation("update without transitions".into()));
    }

    let steps: Vec<(&Transition, bool)> = trajs
        .iter()
        .flat_map(|&(t, replay)| t.transitions.iter().map(move |s| (s, replay)))
        .collect();
    let features = feature_matrix(dim, steps.iter().map(|(s, _)| &s.obs));
    let batch = Batch {
        features,
        masks: steps.iter().flat_map(|(s, _)| s.mask.iter().copied()).collect(),
        actions: steps.iter().map(|(s, _)| s.action).collect(),
        value_targets: Vec::new(),
        advantages: Vec::new(),
        behavior: steps
            .iter()
            .map(|&(s, replay)| {
                replay.then(|| Behavior { log_probs: s.behavior_log_probs.clone(), value: s.behavior_value })
            })
            .collect(),
    };

    let boot_obs: Vec<&Observation> = trajs.iter().filter_map(|(t, _)| t.bootstrap.as_ref()).collect();
    let boot_values: Vec<f64> = if boot_obs.is_empty() {
        Vec::new()
    } else {
        let x = feature_matrix(dim, boot_obs.iter().copied());
        let masks: Vec<bool> = boot_obs.iter().flat_map(|o| o.action_mask(true)).collect();
        debug_assert_eq!(masks.len(), boot_obs.len() * k);
        forward_batch(params, x, &masks)?.into_iter().map(|f| f.value).collect()
    };

    let targets = |values: &[f64], taken: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut vs = Vec::with_capacity(values.len());
        let mut adv = Vec::with_capacity(values.len());
        let (mut start, mut boot) = (0, 0);
        for (t, _) in &trajs {
            let n = t.len();
            let mut v: Vec<f64> = values[start..start + n].to_vec();
            v.push(if t.bootstrap.is_some() {
                boot += 1;
                boot_values[boot - 1]
            } else {
                0.0
            });
            let rewards: Vec<f64> = t
                .transitions
                .iter()
                .map(|s| match cfg.reward_clip {
                    Some(c) => s.reward.clamp(-c, c),
                    None => s.reward,
                })
                .collect();
            let log_rhos: Vec<f64> = t
                .transitions
                .iter()
                .zip(&taken[start..start + n])
                .map(|(s, lp)| lp - s.behavior_log_probs[s.action])
                .collect();
            let out = vtrace_targets(&rewards, &v, &log_rhos, &cfg.vtrace)?;
            vs.extend(out.vs);
            adv.extend(out.pg_advantages);
            start += n;
        }
        Ok((vs, adv))
    };

    let (stats, mut grads) = backward_with(params, &batch, &cfg.loss_weights(), targets)?;
    if let Some(ewc) = ewc {
        grads = ewc.penalized_grads(&grads, &params.flat)?;
    }
    let norm = opt.step(params, &grads, cfg.learning_rate, cfg.max_grad_norm)?;
    Ok((stats, norm))
}

/// CLEAR step: mixes `new` with segments replayed from `buffer`, updates,
/// then stores `new` in the buffer.
pub fn clear_update(
    params: &mut ActorCriticParams,
    opt: &mut Optimizer,
    new: Vec<Trajectory>,
    buffer: &mut ReplayBuffer,
    cfg: &TrainConfig,
) -> Result<(LossStats, f64)> {
    if new.is_empty() {
        return Err(Error::Validation("clear_update needs new trajectories".into()));
    }
    let n_replay = cfg.replay_per_update();
    if n_replay > 0 && buffer.is_empty() {
        log::debug!("replay buffer empty, update uses new experience only");
    }
    let replayed = buffer.sample(n_replay);
    let out = vtrace_update(params, opt, &new, &replayed, cfg, None)?;
    for t in new {
        buffer.insert(t);
    }
    Ok(out)
}

#[derive(Default)]
struct LossAccumulator {
    sum: LossStats,
    n: usize,
}

impl LossAccumulator {
    fn add(&mut self, s: &LossStats) {
        self.sum.total += s.total;
        self.sum.value += s.value;
        self.sum.policy += s.policy;
        self.sum.entropy += s.entropy;
        self.sum.clone_policy += s.clone_policy;
        self.sum.clone_value += s.clone_value;
        self.n += 1;
    }

    fn mean(&self) -> LossStats {
        let d = self.n.max(1) as f64;
        LossStats {
            total: self.sum.total / d,
            value: self.sum.value / d,
            policy: self.sum.policy / d,
            entropy: self.sum.entropy / d,
            clone_policy: self.sum.clone_policy / d,
            clone_value: self.sum.clone_value / d,
        }
    }
}

/// Trains one agent on `tasks` in order, `cycles` times over.
pub fn train_continual(
    tasks: &[TaskData],
    cfg: &TrainConfig,
    env_cfg: &EnvConfig,
    net_cfg: &NetConfig,
) -> Result<(TrainedAgent, TrainLog)> {
    cfg.validate()?;
    env_cfg.validate()?;
    if tasks.is_empty() {
        return Err(Error::Validation("no tasks to train on".into()));
    }
    if let Some(t) = tasks.iter().find(|t| t.bugs.is_empty()) {
        return Err(Error::Validation(format!("task `{}` has no usable bugs", t.name)));
    }
    let expected = crate::env::feature_len(env_cfg.k, tasks[0].bugs[0].width);
    if net_cfg.input_dim != expected || net_cfg.n_actions != env_cfg.k {
        return Err(Error::Config(format!(
            "network shape {}→{} does not match observations {}→{}",
            net_cfg.input_dim, net_cfg.n_actions, expected, env_cfg.k
        )));
    }

    let mut params = init_params(net_cfg)?;
    let mut opt = Optimizer::new(cfg.optimizer, params.len());
    let mut rng = rng::stream(cfg.seed, ACTING_STREAM);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, cfg.seed);
    let mut ewc = (cfg.learner == LearnerKind::Ewc).then(|| EwcState::new(cfg.ewc_lambda));
    let mut counters = vec![0usize; tasks.len()];
    let probes: Vec<&[Arc<PreparedBug>]> =
        tasks.iter().map(|t| &t.bugs[..cfg.probe_bugs.clamp(1, t.bugs.len())]).collect();

    let mut log = TrainLog {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: BTreeMap::new(),
        learner: cfg.learner,
        seed: cfg.seed,
        task_names: tasks.iter().map(|t| t.name.clone()).collect(),
        phase_tasks: Vec::new(),
        returns: vec![Vec::new(); tasks.len()],
        losses: Vec::new(),
        updates: Vec::new(),
        episodes: 0,
        phase_seconds: Vec::new(),
    };

    let n_new = cfg.new_per_update();
    for cycle in 0..cfg.cycles {
        for (ti, task) in tasks.iter().enumerate() {
            let started = Instant::now();
            let mut pending: Vec<Trajectory> = Vec::new();
            let mut losses = LossAccumulator::default();
            let mut update = |params: &mut ActorCriticParams, batch: Vec<Trajectory>| -> Result<()> {
                let (stats, _) = match cfg.learner {
                    LearnerKind::Clear => clear_update(params, &mut opt, batch, &mut buffer, cfg)?,
                    LearnerKind::Ewc => vtrace_update(params, &mut opt, &batch, &[], cfg, ewc.as_ref())?,
                    LearnerKind::Naive => vtrace_update(params, &mut opt, &batch, &[], cfg, None)?,
                };
                losses.add(&stats);
                Ok(())
            };
            for _ in 0..cfg.episodes_per_task {
                let bug = episode_bug(&task.bugs, counters[ti]);
                counters[ti] += 1;
                let (segments, _) = rollout(&params, bug, env_cfg, cfg.segment_length, &mut rng)?;
                pending.extend(segments);
                while pending.len() >= n_new {
                    let batch: Vec<Trajectory> = pending.drain(..n_new).collect();
                    update(&mut params, batch)?;
                }
            }
            if !pending.is_empty() {
                update(&mut params, std::mem::take(&mut pending))?;
            }
            log.episodes += cfg.episodes_per_task;

            if let Some(state) = ewc.as_mut() {
                let probe = probe_samples(&params, &task.bugs, cfg.fisher_episodes, env_cfg, &mut rng)?;
                let fisher = ewc_fisher(&params, &probe)?;
                state.add_anchor(&params, fisher)?;
            }
            for (i, probe) in probes.iter().enumerate() {
                log.returns[i].push(greedy_return(&params, probe, env_cfg)?);
            }
            log.phase_tasks.push(ti);
            log.losses.push(losses.mean());
            log.updates.push(losses.n);
            log.phase_seconds.push(started.elapsed().as_secs_f64());
            log::info!(
                "cycle {} task {}: loss {:.4}, returns {:?}",
                cycle + 1,
                task.name,
                losses.mean().total,
                log.returns.iter().map(|r| r.last().copied().unwrap_or(0.0)).collect::<Vec<_>>()
            );
        }
    }

    Ok((TrainedAgent { learner: cfg.learner, params, ewc }, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::fixtures::bug;
    use crate::env::feature_len;
    use crate::nets::{backward, Activation, LossWeights, OptimizerKind};

    fn env_cfg(k: usize) -> EnvConfig {
        EnvConfig { k, ..Default::default() }
    }

    fn net(k: usize, seed: u64) -> NetConfig {
        NetConfig {
            input_dim: feature_len(k, 4),
            hidden: vec![8],
            activation: Activation::Tanh,
            n_actions: k,
            init_seed: seed,
            init_scale: 1.0,
        }
    }

    fn tasks(k: usize) -> Vec<TaskData> {
        vec![
            TaskData { name: "a".into(), bugs: vec![bug(k, &[true, false, false, true]), bug(k, &[false, true, false])] },
            TaskData { name: "b".into(), bugs: vec![bug(k, &[false, false, true, false]), bug(k, &[true, true])] },
        ]
    }

    #[test]
    fn learns_to_rank_a_fixed_bug_first() {
        let k = 12;
        let mut rel = vec![false; 10];
        rel[4] = true;
        let task = TaskData { name: "a".into(), bugs: vec![bug(k, &rel)] };
        let ec = EnvConfig { allow_reselect: false, ..env_cfg(k) };
        for learner in [LearnerKind::Naive, LearnerKind::Clear, LearnerKind::Ewc] {
            let cfg = TrainConfig {
                learner,
                episodes_per_task: 500,
                cycles: 1,
                learning_rate: 3e-4,
                optimizer: OptimizerKind::rmsprop(),
                ..Default::default()
            };
            let mut n = net(k, 0);
            n.hidden = vec![32];
            let (agent, log) = train_continual(std::slice::from_ref(&task), &cfg, &ec, &n).unwrap();
            let ranked = agent.rank(&task.bugs[0], &ec).unwrap();
            assert_eq!(ranked[0], 4, "{learner}: {ranked:?}");
            assert_eq!(log.returns[0][0], 3.0);
        }
    }

    fn small_cfg(learner: LearnerKind) -> TrainConfig {
        TrainConfig {
            learner,
            episodes_per_task: 6,
            cycles: 2,
            segment_length: 3,
            batch_size: 4,
            fisher_episodes: 2,
            learning_rate: 0.01,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn rollout_segments_chain() {
        let params = init_params(&net(5, 1)).unwrap();
        let mut rng = rng::seeded(2);
        let b = bug(5, &[true, false, true, false]);
        let (segs, total) = rollout(&params, &b, &env_cfg(5), 3, &mut rng).unwrap();
        let flat: Vec<&Transition> = segs.iter().flat_map(|s| &s.transitions).collect();
        assert!(flat.last().unwrap().done);
        assert!(flat[..flat.len() - 1].iter().all(|t| !t.done));
        assert!((flat.iter().map(|t| t.reward).sum::<f64>() - total).abs() < 1e-12);
        for w in segs.windows(2) {
            assert_eq!(w[0].bootstrap.as_ref(), Some(&w[1].transitions[0].obs));
            assert_eq!(w[0].bootstrap_value, w[1].transitions[0].behavior_value);
        }
        assert!(segs.last().unwrap().bootstrap.is_none());
        assert!(segs.iter().all(|s| s.len() <= 3));
    }

    #[test]
    fn plain_update_matches_direct_composition() {
        let k = 5;
        let cfg = TrainConfig {
            replay_ratio: 0.0,
            entropy_coef: 0.0,
            clone_policy_coef: 0.0,
            clone_value_coef: 0.0,
            learning_rate: 0.05,
            ..small_cfg(LearnerKind::Clear)
        };
        let params = init_params(&net(k, 3)).unwrap();
        let mut rng = rng::seeded(4);
        let (segs, _) = rollout(&params, &bug(k, &[true, false, true, true]), &env_cfg(k), 3, &mut rng).unwrap();

        let mut via_clear = params.clone();
        let mut buffer = ReplayBuffer::new(10, 0);
        let mut opt = Optimizer::new(OptimizerKind::Sgd, params.len());
        clear_update(&mut via_clear, &mut opt, segs.clone(), &mut buffer, &cfg).unwrap();
        assert_eq!(buffer.len(), segs.len());

        // Oracle: targets from a separate forward pass, then a plain step.
        let mut values = Vec::new();
        let mut advs = Vec::new();
        let mut batch_feats = Vec::new();
        let mut masks = Vec::new();
        let mut actions = Vec::new();
        for s in &segs {
            let mut v: Vec<f64> = Vec::new();
            let mut log_rhos = Vec::new();
            for t in &s.transitions {
                let f = forward(&params, &t.obs.features(), &t.mask).unwrap();
                v.push(f.value);
                log_rhos.push(f.log_probs[t.action] - t.behavior_log_probs[t.action]);
                batch_feats.extend(t.obs.features());
                masks.extend(t.mask.iter().copied());
                actions.push(t.action);
            }
            v.push(match &s.bootstrap {
                Some(o) => forward(&params, &o.features(), &o.action_mask(true)).unwrap().value,
                None => 0.0,
            });
            let r: Vec<f64> = s.transitions.iter().map(|t| t.reward).collect();
            let out = vtrace_targets(&r, &v, &log_rhos, &cfg.vtrace).unwrap();
            values.extend(out.vs);
            advs.extend(out.pg_advantages);
        }
        let n = actions.len();
        let batch = Batch {
            features: DMatrix::from_column_slice(params.config.input_dim, n, &batch_feats),
            masks,
            actions,
            value_targets: values,
            advantages: advs,
            behavior: vec![None; n],
        };
        let w = LossWeights { value: cfg.value_coef, ..Default::default() };
        let (_, g) = backward(&params, &batch, &w).unwrap();
        let mut oracle = params.clone();
        crate::nets::apply_update(&mut oracle, &g, cfg.learning_rate, cfg.max_grad_norm).unwrap();
        let diff = via_clear.flat.iter().zip(&oracle.flat).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn zero_learning_rate_freezes_params() {
        let k = 5;
        let cfg = TrainConfig { learning_rate: 0.0, ..small_cfg(LearnerKind::Clear) };
        let params = init_params(&net(k, 3)).unwrap();
        let mut rng = rng::seeded(4);
        let (segs, _) = rollout(&params, &bug(k, &[true, false]), &env_cfg(k), 3, &mut rng).unwrap();
        let mut p = params.clone();
        let mut buffer = ReplayBuffer::new(10, 0);
        let mut opt = Optimizer::new(OptimizerKind::Sgd, p.len());
        clear_update(&mut p, &mut opt, segs.clone(), &mut buffer, &cfg).unwrap();
        clear_update(&mut p, &mut opt, segs, &mut buffer, &cfg).unwrap();
        assert_eq!(p, params);
        assert!(buffer.len() >= 2);
    }

    #[test]
    fn replay_of_current_policy_has_zero_kl() {
        let k = 5;
        let cfg = TrainConfig { learning_rate: 0.0, clone_policy_coef: 1.0, ..small_cfg(LearnerKind::Clear) };
        let params = init_params(&net(k, 3)).unwrap();
        let mut rng = rng::seeded(4);
        let (segs, _) = rollout(&params, &bug(k, &[true, false, true]), &env_cfg(k), 8, &mut rng).unwrap();
        let mut p = params.clone();
        let mut opt = Optimizer::new(OptimizerKind::Sgd, p.len());
        let (stats, _) = vtrace_update(&mut p, &mut opt, &segs, &segs, &cfg, None).unwrap();
        assert!(stats.clone_policy.abs() < 1e-9);
    }

    #[test]
    fn frozen_training_has_constant_returns() {
        let k = 5;
        let cfg = TrainConfig { learning_rate: 0.0, cycles: 1, episodes_per_task: 1, ..small_cfg(LearnerKind::Clear) };
        let (_, log) = train_continual(&tasks(k), &cfg, &env_cfg(k), &net(k, 1)).unwrap();
        for row in &log.returns {
            assert!(row.windows(2).all(|w| w[0] == w[1]));
        }
        assert_eq!(log.returns.len(), 2);
        assert_eq!(log.returns[0].len(), 2);
    }

    #[test]
    fn training_is_deterministic() {
        let k = 5;
        for learner in [LearnerKind::Clear, LearnerKind::Ewc, LearnerKind::Naive] {
            let cfg = small_cfg(learner);
            let a = train_continual(&tasks(k), &cfg, &env_cfg(k), &net(k, 1)).unwrap();
            let b = train_continual(&tasks(k), &cfg, &env_cfg(k), &net(k, 1)).unwrap();
            assert_eq!(a.0, b.0);
            assert_eq!(a.1.to_json().unwrap(), b.1.to_json().unwrap());
            assert_eq!(a.1.phase_tasks, [0, 1, 0, 1]);
            assert_eq!(a.0.ewc.is_some(), learner == LearnerKind::Ewc);
            if let Some(e) = &a.0.ewc {
                assert_eq!(e.anchors.len(), 4);
            }
        }
    }

    #[test]
    fn rejects_empty_task_and_bad_shapes() {
        let k = 5;
        let mut t = tasks(k);
        t[1].bugs.clear();
        let err = train_continual(&t, &small_cfg(LearnerKind::Naive), &env_cfg(k), &net(k, 1)).unwrap_err();
        assert!(err.to_string().contains("`b`"));
        let bad = NetConfig { input_dim: 3, ..net(k, 1) };
        assert!(train_continual(&tasks(k), &small_cfg(LearnerKind::Naive), &env_cfg(k), &bad).is_err());
    }

    #[test]
    fn agent_ranks_every_live_slot_once() {
        let k = 6;
        let agent = TrainedAgent { learner: LearnerKind::Naive, params: init_params(&net(k, 2)).unwrap(), ewc: None };
        let b = bug(k, &[true, false, true, false]);
        let mut ranked = agent.rank(&b, &env_cfg(k)).unwrap();
        ranked.sort_unstable();
        assert_eq!(ranked, [0, 1, 2, 3]);
        let back = TrainedAgent::from_json(&agent.to_json().unwrap()).unwrap();
        assert_eq!(back, agent);
    }
}
