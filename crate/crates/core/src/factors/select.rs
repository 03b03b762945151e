use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{compute_vif, fit_logistic, LogisticModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub p_threshold: f64,
    pub vif_max: f64,
    pub standardize: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            p_threshold: 0.05,
            vif_max: 2.5,
            standardize: true,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_threshold > 0.0 && self.p_threshold < 1.0) {
            return Err(Error::Config(format!("p_threshold {} outside (0, 1)", self.p_threshold)));
        }
        if self.vif_max <= 1.0 {
            return Err(Error::Config(format!("vif_max {} must exceed 1", self.vif_max)));
        }
        Ok(())
    }
}

fn columns(x: &DMatrix<f64>, keep: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), keep.len(), |i, j| x[(i, keep[j])])
}

/// Backward elimination: repeatedly drop the least significant feature with
/// `p >= p_threshold`, then repeatedly drop the most collinear feature with
/// `VIF > vif_max`. The two passes alternate until neither removes anything,
/// so the returned model satisfies both thresholds.
pub fn select_features(
    x: &DMatrix<f64>,
    y: &[f64],
    names: &[String],
    cfg: &SelectionConfig,
) -> Result<LogisticModel> {
    cfg.validate()?;
    let mut keep: Vec<usize> = (0..x.ncols()).collect();
    let fit = |keep: &[usize]| {
        let kept: Vec<String> = keep.iter().map(|&j| names[j].clone()).collect();
        fit_logistic(&columns(x, keep), y, &kept, cfg.standardize)
    };

    loop {
        let mut changed = false;

        loop {
            if keep.is_empty() {
                return Err(Error::Validation("no significant features".into()));
            }
            let model = fit(&keep)?;
            let worst = model.p_values[1..]
                .iter()
                .enumerate()
                .filter(|(_, &p)| p >= cfg.p_threshold)
                .max_by(|a, b| a.1.total_cmp(b.1));
            match worst {
                Some((j, p)) => {
                    log::debug!("dropping `{}` (p = {p:.4})", names[keep[j]]);
                    keep.remove(j);
                    changed = true;
                }
                None => break,
            }
        }

        while keep.len() >= 2 {
            let vif = compute_vif(&columns(x, &keep))?;
            let worst = vif
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > cfg.vif_max)
                .max_by(|a, b| a.1.total_cmp(b.1));
            match worst {
                Some((j, v)) => {
                    log::debug!("dropping `{}` (VIF = {v:.3})", names[keep[j]]);
                    keep.remove(j);
                    changed = true;
                }
                None => break,
            }
        }

        if !changed {
            return fit(&keep);
        }
    }
}
