use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::{log_prob_grad, ActorCriticParams, Gradients};

/// Parameters and Fisher diagonal saved at the end of one training phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub params: Vec<f64>,
    pub fisher: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwcState {
    pub lambda: f64,
    pub anchors: Vec<Anchor>,
}

/// One probe sample: features, action mask, and the action taken.
pub type ProbeSample = (Vec<f64>, Vec<bool>, usize);

impl EwcState {
    pub fn new(lambda: f64) -> EwcState {
        EwcState { lambda, anchors: Vec::new() }
    }

    pub fn add_anchor(&mut self, params: &ActorCriticParams, fisher: Vec<f64>) -> Result<()> {
        if fisher.len() != params.len() {
            return Err(Error::Dimension { expected: params.len(), got: fisher.len() });
        }
        self.anchors.push(Anchor { params: params.flat.clone(), fisher });
        Ok(())
    }

    /// `sum over anchors of (lambda / 2) F (theta - theta*)^2`.
    pub fn penalty(&self, params: &[f64]) -> f64 {
        self.anchors
            .iter()
            .map(|a| {
                a.fisher
                    .iter()
                    .zip(params.iter().zip(&a.params))
                    .map(|(f, (p, s))| f * (p - s).powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>()
            * self.lambda
            / 2.0
    }

    /// `base + sum over anchors of lambda F (theta - theta*)`.
    pub fn penalized_grads(&self, base: &Gradients, params: &[f64]) -> Result<Gradients> {
        if base.flat.len() != params.len() {
            return Err(Error::Dimension { expected: params.len(), got: base.flat.len() });
        }
        let mut out = base.clone();
        for a in &self.anchors {
            if a.params.len() != params.len() {
                return Err(Error::Dimension { expected: params.len(), got: a.params.len() });
            }
            for (j, g) in out.flat.iter_mut().enumerate() {
                *g += self.lambda * a.fisher[j] * (params[j] - a.params[j]);
            }
        }
        Ok(out)
    }
}

/// Empirical diagonal Fisher: mean squared gradient of `log pi(a | x)`.
pub fn ewc_fisher(params: &ActorCriticParams, probe: &[ProbeSample]) -> Result<Vec<f64>> {
    if probe.is_empty() {
        return Err(Error::Validation("empty Fisher probe set".into()));
    }
    let mut fisher = vec![0.0; params.len()];
    for (features, mask, action) in probe {
        let g = log_prob_grad(params, features, mask, *action)?;
        for (f, gi) in fisher.iter_mut().zip(&g.flat) {
            *f += gi * gi;
        }
    }
    let n = probe.len() as f64;
    fisher.iter_mut().for_each(|f| *f /= n);
    Ok(fisher)
}
