//! Ranking metrics, the forgetting measure, and agent evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, PreparedBug};
use crate::error::{Error, Result};
use crate::learners::TrainedAgent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub bug_id: String,
    pub ranked_unit_ids: Vec<String>,
    /// Every relevant unit, including ones never retrieved.
    pub relevant_ids: BTreeSet<String>,
}

impl RankedResult {
    /// 1-based rank of the first relevant item.
    pub fn first_relevant_rank(&self) -> Option<usize> {
        self.ranked_unit_ids
            .iter()
            .position(|id| self.relevant_ids.contains(id))
            .map(|p| p + 1)
    }

    pub fn average_precision(&self) -> f64 {
        if self.relevant_ids.is_empty() {
            return 0.0;
        }
        let mut hits = 0;
        let mut sum = 0.0;
        for (i, id) in self.ranked_unit_ids.iter().enumerate() {
            if self.relevant_ids.contains(id) {
                hits += 1;
                sum += hits as f64 / (i + 1) as f64;
            }
        }
        sum / self.relevant_ids.len() as f64
    }
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

pub fn mrr(results: &[RankedResult]) -> f64 {
    mean(
        results.iter().map(|r| r.first_relevant_rank().map_or(0.0, |k| 1.0 / k as f64)),
        results.len(),
    )
}

pub fn map_metric(results: &[RankedResult]) -> f64 {
    mean(results.iter().map(RankedResult::average_precision), results.len())
}

pub fn top_at_k(results: &[RankedResult], k: usize) -> f64 {
    mean(
        results
            .iter()
            .map(|r| f64::from(u8::from(r.first_relevant_rank().is_some_and(|rank| rank <= k)))),
        results.len(),
    )
}

/// Normalized drop in each task's return right after a different task is
/// trained: `(r[i][j-1] - r[i][j]) / max_j |r[i][j]|`, where `j - 1` is the
/// last phase training task `i` that is followed by a phase training another
/// task. `None` for tasks never followed by a foreign phase.
pub fn forgetting(returns: &[Vec<f64>], phase_tasks: &[usize]) -> Result<Vec<Option<f64>>> {
    returns
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() != phase_tasks.len() {
                return Err(Error::Dimension { expected: phase_tasks.len(), got: row.len() });
            }
            let Some(p) = (0..phase_tasks.len().saturating_sub(1))
                .rev()
                .find(|&p| phase_tasks[p] == i && phase_tasks[p + 1] != i)
            else {
                return Ok(None);
            };
            let max = row.iter().map(|r| r.abs()).fold(0.0, f64::max);
            if max == 0.0 {
                return Err(Error::Numerical(format!("task {i} never earns a non-zero return")));
            }
            Ok(Some((row[p] - row[p + 1]) / max))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: String,
    pub mrr: f64,
    pub map: f64,
    pub top1: f64,
    pub top5: f64,
    pub top10: f64,
    pub n_bugs: usize,
    pub skipped_bugs: usize,
    /// Analytic MRR of a uniformly random order of each bug's candidates.
    pub random_mrr: f64,
    /// Forgetting per task name.
    pub forgetting: BTreeMap<String, f64>,
    /// Wall-clock seconds; reported beside the metrics rather than inside
    /// them so reports of identical runs compare equal byte for byte.
    #[serde(skip)]
    pub training_time_s: f64,
    #[serde(skip)]
    pub per_bug: Vec<RankedResult>,
}

impl MetricsReport {
    pub fn from_results(task: &str, results: Vec<RankedResult>, skipped: usize, random_mrr: f64) -> Result<Self> {
        if results.is_empty() {
            return Err(Error::Validation(format!("no bugs evaluated for `{task}`")));
        }
        Ok(MetricsReport {
            task: task.to_string(),
            mrr: mrr(&results),
            map: map_metric(&results),
            top1: top_at_k(&results, 1),
            top5: top_at_k(&results, 5),
            top10: top_at_k(&results, 10),
            n_bugs: results.len(),
            skipped_bugs: skipped,
            random_mrr,
            forgetting: BTreeMap::new(),
            training_time_s: 0.0,
            per_bug: results,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// `bug_id,first_relevant_rank,average_precision`; rank empty when no
    /// relevant item was ranked.
    pub fn per_bug_csv(&self) -> String {
        let mut out = String::from("bug_id,first_relevant_rank,average_precision\n");
        for r in &self.per_bug {
            let rank = r.first_relevant_rank().map(|k| k.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{:.6}", r.bug_id, rank, r.average_precision());
        }
        out
    }
}

/// Aligned plain-text table of several reports.
pub fn format_table(reports: &[MetricsReport]) -> String {
    let width = reports.iter().map(|r| r.task.len()).max().unwrap_or(4).max(4);
    let mut out = format!(
        "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>5}  {:>9}\n",
        "task", "MRR", "MAP", "top1", "top5", "top10", "bugs", "train(s)"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6.3}  {:>5}  {:>9.1}",
            r.task, r.mrr, r.map, r.top1, r.top5, r.top10, r.n_bugs, r.training_time_s
        );
    }
    out
}

/// Expected reciprocal rank of the first relevant item when `n` items with
/// `relevant` relevant ones are shuffled uniformly.
pub fn random_reciprocal_rank(n: usize, relevant: usize) -> f64 {
    if relevant == 0 || n == 0 {
        return 0.0;
    }
    // P(first relevant at r) = C(n - r, R - 1) / C(n, R), built as a running
    // product to stay in floating point range.
    let (n, big_r) = (n as f64, relevant as f64);
    let mut p = big_r / n; // r = 1
    let mut total = p;
    let mut r = 1.0;
    while r < n - big_r + 1.0 {
        // p(r + 1) / p(r) = (n - r - R + 1) / (n - r)
        p *= (n - r - big_r + 1.0) / (n - r);
        r += 1.0;
        total += p / r;
    }
    total
}

/// Mean of [`random_reciprocal_rank`] over bugs' live candidate pools.
pub fn random_mrr(bugs: &[Arc<PreparedBug>]) -> f64 {
    mean(
        bugs.iter().map(|b| {
            let relevant = b.relevant[..b.n_live()].iter().filter(|&&r| r).count();
            random_reciprocal_rank(b.n_live(), relevant)
        }),
        bugs.len(),
    )
}

/// Greedy full-ranking episode per bug, scored against every relevant unit.
pub fn evaluate_agent(
    agent: &TrainedAgent,
    task: &str,
    bugs: &[Arc<PreparedBug>],
    skipped: usize,
    env_cfg: &EnvConfig,
) -> Result<MetricsReport> {
    if bugs.is_empty() {
        return Err(Error::Validation(format!("empty test set for `{task}`")));
    }
    let results = bugs
        .iter()
        .map(|b| {
            let order = agent.rank(b, env_cfg)?;
            Ok(RankedResult {
                bug_id: b.bug_id.clone(),
                ranked_unit_ids: order.iter().map(|&s| b.unit_ids[s].clone()).collect(),
                relevant_ids: b.relevant_ids.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::from_results(task, results, skipped, random_mrr(bugs))
}



#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn results() -> impl Strategy<Value = Vec<RankedResult>> {
        prop::collection::vec(
            (
                (1..12usize).prop_flat_map(|n| {
                    Just((0..n).map(|i| format!("u{i}")).collect::<Vec<_>>()).prop_shuffle()
                }),
                prop::collection::btree_set(0usize..15, 0..6),
            )
                .prop_map(|(ids, rel)| RankedResult {
                    bug_id: "b".into(),
                    ranked_unit_ids: ids,
                    relevant_ids: rel.into_iter().map(|i| format!("u{i}")).collect(),
                }),
            1..8,
        )
    }

    proptest! {
        #[test]
        fn bounded_ordered_and_permutation_invariant(mut rs in results()) {
            let (m, a) = (mrr(&rs), map_metric(&rs));
            let t: Vec<f64> = [1, 5, 10].iter().map(|&k| top_at_k(&rs, k)).collect();
            for x in [m, a, t[0], t[1], t[2]] {
                prop_assert!((0.0..=1.0).contains(&x));
            }
            prop_assert!(t[0] <= t[1] && t[1] <= t[2]);
            rs.reverse();
            prop_assert!((mrr(&rs) - m).abs() < 1e-12);
            prop_assert!((map_metric(&rs) - a).abs() < 1e-12);
        }
    }
}
