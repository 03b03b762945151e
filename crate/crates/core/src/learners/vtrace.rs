use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VTraceConfig {
    pub gamma: f64,
    pub rho_bar: f64,
    pub c_bar: f64,
}

impl Default for VTraceConfig {
    fn default() -> Self {
        VTraceConfig { gamma: 0.99, rho_bar: 1.0, c_bar: 1.0 }
    }
}

impl VTraceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        if !(self.c_bar >= 1.0 && self.rho_bar >= self.c_bar) {
            return Err(Error::Config(format!(
                "need rho_bar ≥ c_bar ≥ 1, got rho_bar = {}, c_bar = {}",
                self.rho_bar, self.c_bar
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VTraceTargets {
    pub vs: Vec<f64>,
    /// Truncated importance weights `rho_t`.
    pub rhos: Vec<f64>,
    pub pg_advantages: Vec<f64>,
}

/// V-Trace targets for one segment.
///
/// `values` holds `V(x_s)` for every step followed by the bootstrap value
/// (zero after a terminal step). `log_rhos` are `log pi(a_s) - log mu(a_s)`.
pub fn vtrace_targets(rewards: &[f64], values: &[f64], log_rhos: &[f64], cfg: &VTraceConfig) -> Result<VTraceTargets> {
    let n = rewards.len();
    if values.len() != n + 1 || log_rhos.len() != n {
        return Err(Error::Validation(format!(
            "V-Trace needs n rewards, n log-ratios and n + 1 values; got {n}, {}, {}",
            log_rhos.len(),
            values.len()
        )));
    }
    if log_rhos.iter().chain(values).chain(rewards).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("V-Trace inputs"));
    }
    let gamma = cfg.gamma;
    let rhos: Vec<f64> = log_rhos.iter().map(|l| cfg.rho_bar.min(l.exp())).collect();
    let cs: Vec<f64> = log_rhos.iter().map(|l| cfg.c_bar.min(l.exp())).collect();

    let mut vs = vec![0.0; n + 1];
    vs[n] = values[n];
    let mut acc = 0.0; // v_{s+1} - V(x_{s+1})
    for s in (0..n).rev() {
        let delta = rhos[s] * (rewards[s] + gamma * values[s + 1] - values[s]);
        acc = delta + gamma * cs[s] * acc;
        vs[s] = values[s] + acc;
    }
    let pg_advantages = (0..n)
        .map(|s| rhos[s] * (rewards[s] + gamma * vs[s + 1] - values[s]))
        .collect();
    vs.truncate(n);
    Ok(VTraceTargets { vs, rhos, pg_advantages })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    /// Discounted n-step return from `s` to the horizon, bootstrapped.
    fn n_step(rewards: &[f64], bootstrap: f64, gamma: f64, s: usize) -> f64 {
        let mut g = 0.0;
        let mut discount = 1.0;
        for r in &rewards[s..] {
            g += discount * r;
            discount *= gamma;
        }
        g + discount * bootstrap
    }

    #[test]
    fn on_policy_reduces_to_n_step_returns() {
        let mut rng = rng::seeded(1);
        let cfg = VTraceConfig::default();
        for _ in 0..200 {
            let n = rng.random_range(1..=32);
            let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let values: Vec<f64> = (0..=n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let out = vtrace_targets(&rewards, &values, &vec![0.0; n], &cfg).unwrap();
            for s in 0..n {
                let oracle = n_step(&rewards, values[n], cfg.gamma, s);
                assert!((out.vs[s] - oracle).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_rewards_and_values() {
        let out = vtrace_targets(&[0.0; 5], &[0.0; 6], &[0.3, -0.2, 0.0, 1.0, -4.0], &VTraceConfig::default()).unwrap();
        assert!(out.vs.iter().chain(&out.pg_advantages).all(|&v| v == 0.0));
    }

    #[test]
    fn single_step() {
        let cfg = VTraceConfig::default();
        let out = vtrace_targets(&[2.0], &[0.5, 3.0], &[0.0], &cfg).unwrap();
        assert!((out.vs[0] - (2.0 + 0.99 * 3.0)).abs() < 1e-12);
        assert!((out.pg_advantages[0] - (2.0 + 0.99 * 3.0 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn truncation_bounds_and_monotonicity() {
        let mut rng = rng::seeded(2);
        let log_rhos: Vec<f64> = (0..20).map(|_| rng.random_range(-3.0..3.0)).collect();
        let low = VTraceConfig { rho_bar: 1.0, ..Default::default() };
        let high = VTraceConfig { rho_bar: 2.0, ..Default::default() };
        let a = vtrace_targets(&[1.0; 20], &[0.0; 21], &log_rhos, &low).unwrap();
        let b = vtrace_targets(&[1.0; 20], &[0.0; 21], &log_rhos, &high).unwrap();
        for (x, y) in a.rhos.iter().zip(&b.rhos) {
            assert!(x <= y && *x <= 1.0 && *y <= 2.0);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let cfg = VTraceConfig::default();
        assert!(vtrace_targets(&[1.0], &[0.0], &[0.0], &cfg).is_err());
        assert!(vtrace_targets(&[1.0], &[0.0, 0.0], &[f64::INFINITY], &cfg).is_err());
        assert!(VTraceConfig { rho_bar: 0.5, c_bar: 1.0, gamma: 0.9 }.validate().is_err());
    }
}
