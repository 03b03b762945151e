use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::FactorVector;
use crate::error::{Error, Result};

pub const FIT_MAX_ITER: usize = 100;
/// Convergence tolerance on the largest coefficient change.
pub const FIT_TOL: f64 = 1e-8;
/// Ridge strength on the mean log-likelihood used when the data separate.
pub const RIDGE_FALLBACK: f64 = 1e-4;
/// A standardized coefficient beyond this is treated as divergence.
const DIVERGENCE: f64 = 30.0;

/// Logistic regression fit. Coefficient vectors carry the intercept first,
/// then one entry per feature, on the standardized scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub p_values: Vec<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Ridge strength of the fallback fit, 0 for a plain maximum-likelihood fit.
    pub ridge: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood of linear scores `eta` against 0/1 labels.
pub fn log_likelihood(eta: impl IntoIterator<Item = f64>, y: &[f64]) -> f64 {
    eta.into_iter()
        .zip(y)
        .map(|(e, &yi)| yi * e - softplus(e))
        .sum()
}

impl LogisticModel {
    /// Intercept-only model.
    pub fn constant(intercept: f64) -> LogisticModel {
        LogisticModel {
            feature_names: Vec::new(),
            weights: vec![intercept],
            standard_errors: vec![0.0],
            p_values: vec![0.0],
            means: Vec::new(),
            scales: Vec::new(),
            converged: true,
            iterations: 0,
            log_likelihood: 0.0,
            ridge: 0.0,
        }
    }

    /// Linear score for raw (unstandardized) feature values.
    pub fn score(&self, raw: &[f64]) -> f64 {
        self.weights[0]
            + raw
                .iter()
                .enumerate()
                .map(|(j, x)| self.weights[j + 1] * (x - self.means[j]) / self.scales[j])
                .sum::<f64>()
    }

    pub fn predict(&self, raw: &[f64]) -> f64 {
        // Clamp keeps the output strictly inside (0, 1) for extreme scores.
        sigmoid(self.score(raw)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
    }

    /// Probability that a unit with factors `f` is buggy, using the model's
    /// surviving features.
    pub fn predict_bug_probability(&self, f: &FactorVector) -> Result<f64> {
        let raw = self
            .feature_names
            .iter()
            .map(|n| {
                f.get(n)
                    .ok_or_else(|| Error::Config(format!("unknown factor `{n}` in model")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.predict(&raw))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: LogisticModel = serde_json::from_str(text)?;
        let p = m.feature_names.len();
        if m.weights.len() != p + 1
            || m.standard_errors.len() != p + 1
            || m.p_values.len() != p + 1
            || m.means.len() != p
            || m.scales.len() != p
        {
            return Err(Error::Validation("logistic model vector lengths disagree".into()));
        }
        Ok(m)
    }
}

/// Maximum-likelihood logistic regression by iteratively reweighted least
/// squares, with Wald standard errors and two-sided p-values.
///
/// Columns of `x` are standardized first when `standardize` is set. If the
/// unpenalized fit diverges (separable data) or fails to converge, the model
/// is refit with a small ridge penalty and returned with `converged = false`.
pub fn fit_logistic(x: &DMatrix<f64>, y: &[f64], names: &[String], standardize: bool) -> Result<LogisticModel> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::Dimension { expected: n, got: y.len() });
    }
    if names.len() != p {
        return Err(Error::Dimension { expected: p, got: names.len() });
    }
    if n <= p + 1 {
        return Err(Error::Validation(format!("need n > p + 1, got n = {n}, p = {p}")));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Validation("labels must be 0 or 1".into()));
    }

    let mut means = vec![0.0; p];
    let mut scales = vec![1.0; p];
    for j in 0..p {
        let col = x.column(j);
        let mean = col.mean();
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if sd <= 1e-12 * mean.abs().max(1.0) {
            return Err(Error::Validation(format!("column `{}` is constant", names[j])));
        }
        if standardize {
            means[j] = mean;
            scales[j] = sd;
        }
    }

    let mut design = DMatrix::from_element(n, p + 1, 1.0);
    for j in 0..p {
        for i in 0..n {
            design[(i, j + 1)] = (x[(i, j)] - means[j]) / scales[j];
        }
    }
    let y = DVector::from_column_slice(y);

    let (fit, ridge) = match newton(&design, &y, 0.0) {
        Some(fit) if fit.converged => (fit, 0.0),
        _ => {
            log::info!("logistic fit did not converge; refitting with ridge {RIDGE_FALLBACK}");
            let fit = newton(&design, &y, RIDGE_FALLBACK)
                .ok_or_else(|| Error::Numerical("ridge logistic fit failed".into()))?;
            (Fit { converged: false, ..fit }, RIDGE_FALLBACK)
        }
    };

    let cov = fit
        .hessian
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Numerical("information matrix is not positive definite".into()))?;
    let standard_errors: Vec<f64> = (0..=p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let p_values = fit
        .w
        .iter()
        .zip(&standard_errors)
        .map(|(w, se)| wald_p(*w, *se))
        .collect();

    Ok(LogisticModel {
        feature_names: names.to_vec(),
        weights: fit.w.iter().copied().collect(),
        standard_errors,
        p_values,
        means,
        scales,
        converged: fit.converged,
        iterations: fit.iterations,
        log_likelihood: log_likelihood((&design * &fit.w).iter().copied(), y.as_slice()),
        ridge,
    })
}

fn wald_p(w: f64, se: f64) -> f64 {
    if se == 0.0 || !se.is_finite() {
        return if w == 0.0 { 1.0 } else { 0.0 };
    }
    erfc((w / se).abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

struct Fit {
    w: DVector<f64>,
    hessian: DMatrix<f64>,
    converged: bool,
    iterations: usize,
}

/// Newton-Raphson on `LL(w) - n * ridge / 2 * |w[1..]|^2`.
fn newton(d: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> Option<Fit> {
    let (n, k) = d.shape();
    let penalty = ridge * n as f64;
    let objective = |w: &DVector<f64>| {
        log_likelihood((d * w).iter().copied(), y.as_slice())
            - 0.5 * penalty * w.iter().skip(1).map(|v| v * v).sum::<f64>()
    };
    let mut w = DVector::zeros(k);
    let mut current = objective(&w);
    let mut converged = false;
    let mut iterations = 0;
    let mut hessian = DMatrix::zeros(k, k);

    for it in 1..=FIT_MAX_ITER {
        iterations = it;
        let eta = d * &w;
        let mu = eta.map(sigmoid);
        let weights = mu.map(|m| m * (1.0 - m));
        let mut grad = d.transpose() * (y - &mu);
        let mut h = d.transpose() * DMatrix::from_fn(n, k, |i, j| d[(i, j)] * weights[i]);
        for j in 1..k {
            grad[j] -= penalty * w[j];
            h[(j, j)] += penalty;
        }
        hessian = h.clone();
        let step = h.cholesky()?.solve(&grad);

        // Step halving guards against overshoot on poorly conditioned data.
        let mut scale = 1.0;
        let mut next = &w + &step;
        let mut value = objective(&next);
        while value < current - 1e-12 * current.abs().max(1.0) && scale > 1e-6 {
            scale *= 0.5;
            next = &w + &step * scale;
            value = objective(&next);
        }
        let change = (&step * scale).amax();
        w = next;
        current = value;
        if w.amax() > DIVERGENCE && ridge == 0.0 {
            return None;
        }
        if change < FIT_TOL {
            converged = true;
            // Information at the final weights.
            let mu = (d * &w).map(sigmoid);
            let weights = mu.map(|m| m * (1.0 - m));
            let mut h = d.transpose() * DMatrix::from_fn(n, k, |i, j| d[(i, j)] * weights[i]);
            for j in 1..k {
                h[(j, j)] += penalty;
            }
            hessian = h;
            break;
        }
    }
    Some(Fit { w, hessian, converged, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("x{j}")).collect()
    }

    /// Non-separable 8-point fixture with its optimum inside [-5, 5]^2.
    fn eight_points() -> (DMatrix<f64>, Vec<f64>) {
        let xs = [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0];
        let ys = [0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        (DMatrix::from_column_slice(8, 1, &xs), ys.to_vec())
    }

    #[test]
    fn irls_matches_grid_search_oracle() {
        let (x, y) = eight_points();
        let model = fit_logistic(&x, &y, &names(1), false).unwrap();
        assert!(model.converged);
        // Brute-force grid over (intercept, slope) in [-5, 5]^2, step 0.01.
        let mut best = f64::NEG_INFINITY;
        for a in -500..=500 {
            for b in -500..=500 {
                let (a, b) = (a as f64 * 0.01, b as f64 * 0.01);
                let ll = log_likelihood(x.column(0).iter().map(|xi| a + b * xi), &y);
                best = best.max(ll);
            }
        }
        assert!(model.log_likelihood >= best - 1e-3, "{} vs {best}", model.log_likelihood);
        // Standardization does not move the optimum.
        let std_model = fit_logistic(&x, &y, &names(1), true).unwrap();
        assert!((std_model.log_likelihood - model.log_likelihood).abs() < 1e-9);
    }

    #[test]
    fn gradient_vanishes_at_converged_fit() {
        let mut rng = rng::seeded(11);
        let n = 300;
        let x = DMatrix::from_fn(n, 3, |_, _| StandardNormal.sample(&mut rng));
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let eta = 0.3 + 1.2 * x[(i, 0)] - 0.7 * x[(i, 2)];
                f64::from(rng.random::<f64>() < sigmoid(eta))
            })
            .collect();
        let m = fit_logistic(&x, &y, &names(3), true).unwrap();
        assert!(m.converged);
        let mut grad = [0.0; 4];
        for i in 0..n {
            let row: Vec<f64> = (0..3).map(|j| x[(i, j)]).collect();
            let r = y[i] - sigmoid(m.score(&row));
            grad[0] += r;
            for j in 0..3 {
                grad[j + 1] += r * (row[j] - m.means[j]) / m.scales[j];
            }
        }
        assert!(grad.iter().all(|g| g.abs() < 1e-6), "{grad:?}");
        assert!(m.p_values.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn independent_labels_give_large_p_values() {
        // Median over 20 seeds of the non-intercept p-values.
        let mut ps = Vec::new();
        for seed in 0..20 {
            let mut rng = rng::seeded(seed);
            let n = 200;
            let x = DMatrix::from_fn(n, 2, |_, _| StandardNormal.sample(&mut rng));
            let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.5))).collect();
            let m = fit_logistic(&x, &y, &names(2), true).unwrap();
            ps.extend_from_slice(&m.p_values[1..]);
        }
        ps.sort_by(f64::total_cmp);
        let median = 0.5 * (ps[ps.len() / 2 - 1] + ps[ps.len() / 2]);
        assert!(median > 0.2, "median p = {median}");
    }

    #[test]
    fn separable_feature_falls_back_to_ridge() {
        let n = 200;
        let y: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let x = DMatrix::from_column_slice(n, 1, &y);
        let m = fit_logistic(&x, &y, &names(1), true).unwrap();
        assert!(!m.converged);
        assert_eq!(m.ridge, RIDGE_FALLBACK);
        assert!(m.weights[1] > 0.0);
        assert!(m.p_values[1] < 0.05, "p = {}", m.p_values[1]);
    }

    #[test]
    fn constant_column_is_named() {
        let x = DMatrix::from_fn(10, 2, |i, j| if j == 1 { 3.0 } else { i as f64 });
        let y: Vec<f64> = (0..10).map(|i| (i % 2) as f64).collect();
        let err = fit_logistic(&x, &y, &["a".into(), "flat".into()], true).unwrap_err();
        assert!(err.to_string().contains("flat"), "{err}");
    }

    #[test]
    fn too_few_rows() {
        let x = DMatrix::from_fn(3, 2, |i, j| (i + j) as f64);
        assert!(fit_logistic(&x, &[0.0, 1.0, 0.0], &names(2), true).is_err());
    }

    #[test]
    fn p_values_follow_column_permutation() {
        let mut rng = rng::seeded(5);
        let n = 150;
        let x = DMatrix::from_fn(n, 3, |_, _| StandardNormal.sample(&mut rng));
        let y: Vec<f64> = (0..n)
            .map(|i| f64::from(rng.random::<f64>() < sigmoid(x[(i, 1)])))
            .collect();
        let a = fit_logistic(&x, &y, &names(3), true).unwrap();
        let perm = [2, 0, 1];
        let xp = DMatrix::from_fn(n, 3, |i, j| x[(i, perm[j])]);
        let b = fit_logistic(&xp, &y, &names(3), true).unwrap();
        for (j, &src) in perm.iter().enumerate() {
            assert!((b.p_values[j + 1] - a.p_values[src + 1]).abs() < 1e-9);
        }
    }

    #[test]
    fn prediction_examples() {
        let mut m = LogisticModel {
            feature_names: vec!["churn".into()],
            weights: vec![0.0, 0.0],
            standard_errors: vec![1.0, 1.0],
            p_values: vec![1.0, 1.0],
            means: vec![0.0],
            scales: vec![1.0],
            converged: true,
            iterations: 1,
            log_likelihood: 0.0,
            ridge: 0.0,
        };
        let f = FactorVector { churn: 0, ..Default::default() };
        assert_eq!(m.predict_bug_probability(&f).unwrap(), 0.5);
        m.weights[1] = 1.0;
        assert_eq!(m.predict_bug_probability(&f).unwrap(), 0.5);
        let mut last = 0.0;
        // Strictly increasing until the score nears the clamp.
        for churn in 0..30 {
            let p = m
                .predict_bug_probability(&FactorVector { churn, ..Default::default() })
                .unwrap();
            assert!(p > last && p < 1.0);
            last = p;
        }
        m.weights[1] = 1e6;
        let p = m.predict_bug_probability(&FactorVector { churn: 1000, ..Default::default() }).unwrap();
        assert!(p > 0.0 && p < 1.0);
        let round = LogisticModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(round, m);
    }
}
