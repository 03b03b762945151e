//! Fully connected actor-critic with a shared trunk, a softmax policy head
//! and a scalar value head. Parameters live in one flat vector so that
//! optimizers, clipping and EWC operate on a single indexed sequence.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Logit assigned to masked actions.
pub const MASKED_LOGIT: f64 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub n_actions: usize,
    pub init_seed: u64,
    pub init_scale: f64,
}

impl NetConfig {
    pub fn new(input_dim: usize, n_actions: usize) -> NetConfig {
        NetConfig {
            input_dim,
            hidden: vec![128, 64],
            activation: Activation::Tanh,
            n_actions,
            init_seed: 0,
            init_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.n_actions == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("network widths must be ≥ 1".into()));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config(format!("init_scale {} must be ≥ 0", self.init_scale)));
        }
        Ok(())
    }
}

/// Position of one dense layer inside the flat parameter vector. The weight
/// block is `rows x cols`, column-major, followed by `rows` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    offset: usize,
    rows: usize,
    cols: usize,
}

impl Dense {
    fn w_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.rows * self.cols
    }

    fn b_range(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.rows * self.cols;
        start..start + self.rows
    }

    fn end(&self) -> usize {
        self.offset + self.rows * (self.cols + 1)
    }
}

/// Trunk layers, then the policy head, then the value head.
fn layout(cfg: &NetConfig) -> Vec<Dense> {
    let mut out = Vec::with_capacity(cfg.hidden.len() + 2);
    let mut offset = 0;
    let mut cols = cfg.input_dim;
    let last = *cfg.hidden.last().unwrap_or(&cfg.input_dim);
    for rows in cfg.hidden.iter().copied().chain([cfg.n_actions, 1]) {
        let cols_here = if out.len() < cfg.hidden.len() { cols } else { last };
        let d = Dense { offset, rows, cols: cols_here };
        offset = d.end();
        out.push(d);
        cols = rows;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCriticParams {
    pub config: NetConfig,
    pub flat: Vec<f64>,
}

/// Same layout as [`ActorCriticParams::flat`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub flat: Vec<f64>,
}

impl Gradients {
    pub fn zeros(n: usize) -> Gradients {
        Gradients { flat: vec![0.0; n] }
    }

    pub fn norm(&self) -> f64 {
        self.flat.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) -> Result<()> {
        if other.flat.len() != self.flat.len() {
            return Err(Error::Dimension { expected: self.flat.len(), got: other.flat.len() });
        }
        for (a, b) in self.flat.iter_mut().zip(&other.flat) {
            *a += scale * b;
        }
        Ok(())
    }
}

/// Uniform weights in `±init_scale / sqrt(fan_in)`, zero biases.
pub fn init_params(cfg: &NetConfig) -> Result<ActorCriticParams> {
    cfg.validate()?;
    let layers = layout(cfg);
    let mut flat = vec![0.0; layers.last().map_or(0, Dense::end)];
    let mut rng = rng::stream(cfg.init_seed, 0x6e65_7473);
    for d in &layers {
        let bound = cfg.init_scale / (d.cols as f64).sqrt();
        for w in &mut flat[d.w_range()] {
            *w = if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 };
        }
    }
    Ok(ActorCriticParams { config: cfg.clone(), flat })
}

impl ActorCriticParams {
    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    fn view(&self, d: &Dense) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.flat[d.w_range()], d.rows, d.cols)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<ActorCriticParams> {
        let p: ActorCriticParams = serde_json::from_str(text)?;
        p.config.validate()?;
        let expected = layout(&p.config).last().map_or(0, Dense::end);
        if p.flat.len() != expected {
            return Err(Error::Dimension { expected, got: p.flat.len() });
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub logits: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub value: f64,
}

impl Forward {
    pub fn probs(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_probs.iter().map(|l| l.exp())
    }

    /// Highest-probability action, lowest index on ties.
    pub fn greedy(&self) -> usize {
        let mut best = 0;
        for (i, &l) in self.logits.iter().enumerate() {
            if l > self.logits[best] {
                best = i;
            }
        }
        best
    }
}

/// Activations kept for the backward pass. Column `i` of every matrix
/// belongs to sample `i`.
struct Tape {
    /// Input then each trunk layer's output.
    hidden: Vec<DMatrix<f64>>,
    logits: DMatrix<f64>,
    log_probs: DMatrix<f64>,
    values: Vec<f64>,
}

fn activate(z: &mut DMatrix<f64>, act: Activation) {
    match act {
        Activation::Tanh => z.apply(|v| *v = v.tanh()),
        Activation::Relu => z.apply(|v| *v = v.max(0.0)),
    }
}

fn log_softmax_masked(logits: &mut [f64], mask: &[bool], out: &mut [f64]) -> Result<()> {
    if mask.iter().all(|&m| m) {
        return Err(Error::Validation("every action is masked".into()));
    }
    for (l, &m) in logits.iter_mut().zip(mask) {
        if m {
            *l = MASKED_LOGIT;
        }
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    for (o, l) in out.iter_mut().zip(logits.iter()) {
        *o = l - lse;
    }
    Ok(())
}

fn run(params: &ActorCriticParams, x: DMatrix<f64>, masks: &[bool]) -> Result<Tape> {
    let cfg = &params.config;
    let n = x.ncols();
    if x.nrows() != cfg.input_dim {
        return Err(Error::Dimension { expected: cfg.input_dim, got: x.nrows() });
    }
    if masks.len() != n * cfg.n_actions {
        return Err(Error::Dimension { expected: n * cfg.n_actions, got: masks.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network input"));
    }
    let layers = layout(cfg);
    let (trunk, heads) = layers.split_at(cfg.hidden.len());
    let mut hidden = Vec::with_capacity(trunk.len() + 1);
    hidden.push(x);
    for d in trunk {
        let mut z = params.view(d) * hidden.last().unwrap();
        let b = &params.flat[d.b_range()];
        for mut col in z.column_iter_mut() {
            for (v, bi) in col.iter_mut().zip(b) {
                *v += bi;
            }
        }
        activate(&mut z, cfg.activation);
        hidden.push(z);
    }
    let top = hidden.last().unwrap();
    let (pol, val) = (&heads[0], &heads[1]);
    let mut logits = params.view(pol) * top;
    let bp = &params.flat[pol.b_range()];
    let mut log_probs = DMatrix::zeros(cfg.n_actions, n);
    for i in 0..n {
        let mut col: Vec<f64> = logits.column(i).iter().zip(bp).map(|(l, b)| l + b).collect();
        let mut out = vec![0.0; cfg.n_actions];
        log_softmax_masked(&mut col, &masks[i * cfg.n_actions..(i + 1) * cfg.n_actions], &mut out)?;
        logits.column_mut(i).copy_from_slice(&col);
        log_probs.column_mut(i).copy_from_slice(&out);
    }
    let bv = params.flat[val.b_range()][0];
    let values: Vec<f64> = (params.view(val) * top).iter().map(|v| v + bv).collect();
    Ok(Tape { hidden, logits, log_probs, values })
}

/// Single-sample forward pass. `mask[i] = true` excludes action `i`.
pub fn forward(params: &ActorCriticParams, features: &[f64], mask: &[bool]) -> Result<Forward> {
    let x = DMatrix::from_column_slice(features.len(), 1, features);
    let tape = run(params, x, mask)?;
    Ok(Forward {
        logits: tape.logits.column(0).iter().copied().collect(),
        log_probs: tape.log_probs.column(0).iter().copied().collect(),
        value: tape.values[0],
    })
}

/// Forward pass over the columns of `x`.
pub fn forward_batch(params: &ActorCriticParams, x: DMatrix<f64>, masks: &[bool]) -> Result<Vec<Forward>> {
    let tape = run(params, x, masks)?;
    Ok((0..tape.values.len())
        .map(|i| Forward {
            logits: tape.logits.column(i).iter().copied().collect(),
            log_probs: tape.log_probs.column(i).iter().copied().collect(),
            value: tape.values[i],
        })
        .collect())
}

/// Coefficients of the composite loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub value: f64,
    pub entropy: f64,
    pub clone_policy: f64,
    pub clone_value: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { value: 0.5, entropy: 0.0, clone_policy: 0.0, clone_value: 0.0 }
    }
}

/// Stored behavior outputs, present for replayed samples only.
#[derive(Debug, Clone, PartialEq)]
pub struct Behavior {
    pub log_probs: Vec<f64>,
    pub value: f64,
}

/// Training samples. Targets and advantages are constants of the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `input_dim x n`, one sample per column.
    pub features: DMatrix<f64>,
    /// `n * n_actions` flags, sample-major.
    pub masks: Vec<bool>,
    pub actions: Vec<usize>,
    pub value_targets: Vec<f64>,
    pub advantages: Vec<f64>,
    pub behavior: Vec<Option<Behavior>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub total: f64,
    pub value: f64,
    pub policy: f64,
    pub entropy: f64,
    pub clone_policy: f64,
    pub clone_value: f64,
}

/// Mean over samples of
///
/// ```text
/// w_v (V - v)^2 - A log pi(a) - w_e H(pi)
///   + w_cp KL(mu || pi) + w_cv (V - V_mu)^2      (replayed samples only)
/// ```
///
/// and its exact gradient.
pub fn backward(params: &ActorCriticParams, batch: &Batch, w: &LossWeights) -> Result<(LossStats, Gradients)> {
    backward_with(params, batch, w, |_, _| Ok((batch.value_targets.clone(), batch.advantages.clone())))
}

/// As [`backward`], with value targets and advantages computed by `targets`
/// from this pass's values and taken-action log-probabilities. The batch's
/// own `value_targets` and `advantages` are ignored.
pub fn backward_with<F>(params: &ActorCriticParams, batch: &Batch, w: &LossWeights, targets: F) -> Result<(LossStats, Gradients)>
where
    F: FnOnce(&[f64], &[f64]) -> Result<(Vec<f64>, Vec<f64>)>,
{
    let n = batch.len();
    if n == 0 {
        return Err(Error::Validation("empty batch".into()));
    }
    if batch.behavior.len() != n || batch.features.ncols() != n {
        return Err(Error::Validation("batch columns disagree in length".into()));
    }
    let cfg = &params.config;
    let k = cfg.n_actions;
    if let Some(&a) = batch.actions.iter().find(|&&a| a >= k) {
        return Err(Error::Validation(format!("action {a} out of range")));
    }
    let tape = run(params, batch.features.clone(), &batch.masks)?;
    let taken: Vec<f64> = (0..n).map(|i| tape.log_probs[(batch.actions[i], i)]).collect();
    let (value_targets, advantages) = targets(&tape.values, &taken)?;
    if value_targets.len() != n || advantages.len() != n {
        return Err(Error::Validation("loss targets disagree in length".into()));
    }
    if value_targets.iter().chain(&advantages).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("loss targets"));
    }
    let scale = 1.0 / n as f64;

    let mut stats = LossStats::default();
    let mut d_logits = DMatrix::zeros(k, n);
    let mut d_values = vec![0.0; n];
    for i in 0..n {
        let mask = &batch.masks[i * k..(i + 1) * k];
        let lp = tape.log_probs.column(i);
        let a = batch.actions[i];
        if mask[a] {
            return Err(Error::Validation(format!("sample {i}: action {a} is masked or out of range")));
        }
        let v = tape.values[i];
        let adv = advantages[i];
        let pi: Vec<f64> = lp.iter().zip(mask).map(|(l, &m)| if m { 0.0 } else { l.exp() }).collect();
        let entropy: f64 = -(0..k).filter(|&j| !mask[j]).map(|j| pi[j] * lp[j]).sum::<f64>();

        stats.value += w.value * (v - value_targets[i]).powi(2);
        stats.policy -= adv * lp[a];
        stats.entropy -= w.entropy * entropy;
        let mut dv = 2.0 * w.value * (v - value_targets[i]);
        let mut dz = d_logits.column_mut(i);
        for j in (0..k).filter(|&j| !mask[j]) {
            let onehot = if j == a { 1.0 } else { 0.0 };
            dz[j] = -adv * (onehot - pi[j]) + w.entropy * pi[j] * (lp[j] + entropy);
        }
        if let Some(b) = &batch.behavior[i] {
            if b.log_probs.len() != k {
                return Err(Error::Dimension { expected: k, got: b.log_probs.len() });
            }
            let mut kl = 0.0;
            for j in (0..k).filter(|&j| !mask[j]) {
                let mu = b.log_probs[j].exp();
                if mu > 0.0 {
                    kl += mu * (b.log_probs[j] - lp[j]);
                }
                dz[j] += w.clone_policy * (pi[j] - mu);
            }
            stats.clone_policy += w.clone_policy * kl;
            stats.clone_value += w.clone_value * (v - b.value).powi(2);
            dv += 2.0 * w.clone_value * (v - b.value);
        }
        d_values[i] = dv * scale;
        dz.scale_mut(scale);
    }
    stats.value *= scale;
    stats.policy *= scale;
    stats.entropy *= scale;
    stats.clone_policy *= scale;
    stats.clone_value *= scale;
    stats.total = stats.value + stats.policy + stats.entropy + stats.clone_policy + stats.clone_value;

    let grads = propagate(params, &tape, d_logits, &d_values);
    Ok((stats, grads))
}

/// Gradient of `log pi(action | features)` for one sample.
pub fn log_prob_grad(params: &ActorCriticParams, features: &[f64], mask: &[bool], action: usize) -> Result<Gradients> {
    let k = params.config.n_actions;
    let tape = run(params, DMatrix::from_column_slice(features.len(), 1, features), mask)?;
    if action >= k || mask[action] {
        return Err(Error::Validation(format!("action {action} is masked or out of range")));
    }
    let mut dz = DMatrix::zeros(k, 1);
    for j in (0..k).filter(|&j| !mask[j]) {
        let onehot = if j == action { 1.0 } else { 0.0 };
        dz[j] = onehot - tape.log_probs[j].exp();
    }
    Ok(propagate(params, &tape, dz, &[0.0]))
}

/// Back-propagates logit and value gradients through heads and trunk.
fn propagate(params: &ActorCriticParams, tape: &Tape, d_logits: DMatrix<f64>, d_values: &[f64]) -> Gradients {
    let cfg = &params.config;
    let layers = layout(cfg);
    let (trunk, heads) = layers.split_at(cfg.hidden.len());
    let (pol, val) = (&heads[0], &heads[1]);
    let mut g = vec![0.0; params.len()];
    let top = tape.hidden.last().unwrap();
    let dv = DMatrix::from_row_slice(1, d_values.len(), d_values);

    accumulate(&mut g, pol, &d_logits, top);
    accumulate(&mut g, val, &dv, top);
    if trunk.is_empty() {
        return Gradients { flat: g };
    }
    let mut dh = params.view(pol).tr_mul(&d_logits) + params.view(val).tr_mul(&dv);
    for (l, d) in trunk.iter().enumerate().rev() {
        let h = &tape.hidden[l + 1];
        match cfg.activation {
            Activation::Tanh => dh.zip_apply(h, |d, h| *d *= 1.0 - h * h),
            Activation::Relu => dh.zip_apply(h, |d, h| {
                if h <= 0.0 {
                    *d = 0.0
                }
            }),
        }
        accumulate(&mut g, d, &dh, &tape.hidden[l]);
        if l > 0 {
            dh = params.view(d).tr_mul(&dh);
        }
    }
    Gradients { flat: g }
}

/// `dW += dz * input^T`, `db += row sums of dz`.
fn accumulate(g: &mut [f64], d: &Dense, dz: &DMatrix<f64>, input: &DMatrix<f64>) {
    {
        let mut dw = DMatrixViewMut::from_slice(&mut g[d.w_range()], d.rows, d.cols);
        dw.gemm(1.0, dz, &input.transpose(), 1.0);
    }
    for (b, row) in g[d.b_range()].iter_mut().zip(dz.row_iter()) {
        *b += row.sum();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OptimizerKind {
    Sgd,
    RmsProp { decay: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn rmsprop() -> OptimizerKind {
        OptimizerKind::RmsProp { decay: 0.99, epsilon: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    mean_square: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, n_params: usize) -> Optimizer {
        let mean_square = match kind {
            OptimizerKind::Sgd => Vec::new(),
            OptimizerKind::RmsProp { .. } => vec![0.0; n_params],
        };
        Optimizer { kind, mean_square }
    }

    /// Clips `grads` to global norm `max_grad_norm`, then takes one step.
    /// Returns the norm before clipping.
    pub fn step(&mut self, params: &mut ActorCriticParams, grads: &Gradients, lr: f64, max_grad_norm: f64) -> Result<f64> {
        if grads.flat.len() != params.len() {
            return Err(Error::Dimension { expected: params.len(), got: grads.flat.len() });
        }
        if !(lr >= 0.0) {
            return Err(Error::Config(format!("learning rate {lr} must be ≥ 0")));
        }
        let norm = grads.norm();
        if !norm.is_finite() {
            return Err(Error::NonFinite("gradients"));
        }
        let clip = if norm > max_grad_norm { max_grad_norm / norm } else { 1.0 };
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.flat.iter_mut().zip(&grads.flat) {
                    *p -= lr * clip * g;
                }
            }
            OptimizerKind::RmsProp { decay, epsilon } => {
                for ((p, g), ms) in params.flat.iter_mut().zip(&grads.flat).zip(&mut self.mean_square) {
                    let g = clip * g;
                    *ms = decay * *ms + (1.0 - decay) * g * g;
                    *p -= lr * g / (ms.sqrt() + epsilon);
                }
            }
        }
        Ok(norm)
    }
}

/// One clipped SGD step.
pub fn apply_update(params: &mut ActorCriticParams, grads: &Gradients, lr: f64, max_grad_norm: f64) -> Result<f64> {
    Optimizer::new(OptimizerKind::Sgd, params.len()).step(params, grads, lr, max_grad_norm)
}
