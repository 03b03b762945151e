//! Bug reports, changeset code units, and the candidate links between them.

mod diff;
mod git;
mod synth;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use diff::{extract_hunks, DiffFile, Hunk, LineCounts};
pub use git::{mine_repository, MiningReport};
pub use synth::{generate_synthetic_corpus, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Stationary,
    NonStationary,
}

impl Regime {
    pub const ALL: [Regime; 2] = [Regime::Stationary, Regime::NonStationary];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Stationary => "stationary",
            Regime::NonStationary => "non_stationary",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    ChangesetFile,
    Hunk,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::ChangesetFile => "changeset_file",
            Granularity::Hunk => "hunk",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugReport {
    pub id: String,
    pub title: String,
    pub description: String,
    pub report_date: DateTime<Utc>,
    pub fix_commit: String,
    /// Committer timestamp of `fix_commit`.
    pub fix_date: DateTime<Utc>,
    pub ground_truth_paths: BTreeSet<String>,
}

/// A changeset-file or hunk at a specific commit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeUnit {
    pub id: String,
    pub path: String,
    pub content: String,
    pub granularity: Granularity,
    pub commit: String,
    pub commit_date: DateTime<Utc>,
    pub regime: Regime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_file_id: Option<String>,
    /// Unified diff of `commit` restricted to `path`, when known. Hunks carry
    /// their own body in `content` and leave this unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff: Option<String>,
}

impl CodeUnit {
    /// Added plus removed lines of the change that produced this unit.
    pub fn churn(&self) -> Option<usize> {
        match self.granularity {
            Granularity::Hunk => Some(LineCounts::of_hunk_body(&self.content).churn()),
            Granularity::ChangesetFile => self
                .diff
                .as_deref()
                .map(|d| LineCounts::of_diff(d).churn()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub bug_reports: Vec<BugReport>,
    pub code_units: Vec<CodeUnit>,
    /// Bug id to the unit ids that may be retrieved as candidates for it.
    /// The task's regime and granularity select a subset at episode time.
    pub links: BTreeMap<String, Vec<String>>,
    /// Bugs removed by [`Corpus::validate`] because none of their linked
    /// units touches a ground-truth path.
    #[serde(skip)]
    pub dropped_bugs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub regime: Regime,
    pub granularity: Granularity,
    pub bug_ids: Vec<String>,
}

impl TaskSpec {
    pub fn name(&self) -> String {
        format!("{}/{}", self.regime, self.granularity)
    }
}

/// Date-ordered 60:40 partition of a corpus' bugs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Corpus::from_json(&text)
}

impl Corpus {
    pub fn from_json(text: &str) -> Result<Corpus> {
        let corpus: Corpus = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        corpus.validate()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Checks structural invariants, then drops bugs whose links never reach
    /// a ground-truth path.
    pub fn validate(mut self) -> Result<Corpus> {
        let mut seen = BTreeSet::new();
        for bug in &self.bug_reports {
            if !seen.insert(bug.id.as_str()) {
                return Err(Error::Validation(format!("duplicate bug id `{}`", bug.id)));
            }
            if bug.ground_truth_paths.is_empty() {
                return Err(Error::Validation(format!(
                    "bug `{}` has no ground-truth paths",
                    bug.id
                )));
            }
            if bug.report_date >= bug.fix_date {
                return Err(Error::Validation(format!(
                    "bug `{}` reported at {} but fixed at {}",
                    bug.id, bug.report_date, bug.fix_date
                )));
            }
        }

        let mut units: HashMap<&str, &CodeUnit> = HashMap::new();
        for unit in &self.code_units {
            if units.insert(unit.id.as_str(), unit).is_some() {
                return Err(Error::Validation(format!("duplicate unit id `{}`", unit.id)));
            }
        }
        for unit in &self.code_units {
            match (unit.granularity, &unit.parent_file_id) {
                (Granularity::Hunk, None) => {
                    return Err(Error::Validation(format!(
                        "hunk `{}` has no parent_file_id",
                        unit.id
                    )))
                }
                (Granularity::ChangesetFile, Some(_)) => {
                    return Err(Error::Validation(format!(
                        "changeset file `{}` must not set parent_file_id",
                        unit.id
                    )))
                }
                (Granularity::Hunk, Some(parent)) if !units.contains_key(parent.as_str()) => {
                    return Err(Error::Validation(format!(
                        "hunk `{}` references missing parent `{parent}`",
                        unit.id
                    )))
                }
                _ => {}
            }
        }

        let mut dangling = Vec::new();
        for (bug, ids) in &self.links {
            if !seen.contains(bug.as_str()) {
                return Err(Error::Validation(format!("links reference unknown bug `{bug}`")));
            }
            dangling.extend(
                ids.iter()
                    .filter(|id| !units.contains_key(id.as_str()))
                    .map(|id| format!("{bug}→{id}")),
            );
        }
        if !dangling.is_empty() {
            return Err(Error::Validation(format!(
                "dangling links: {}",
                dangling.join(", ")
            )));
        }

        let mut dropped = Vec::new();
        for bug in &self.bug_reports {
            let hit = self.links.get(&bug.id).is_some_and(|ids| {
                ids.iter()
                    .any(|id| bug.ground_truth_paths.contains(&units[id.as_str()].path))
            });
            if !hit {
                dropped.push(bug.id.clone());
            }
        }
        if !dropped.is_empty() {
            log::warn!(
                "dropping {} bug(s) whose candidates never touch the ground truth: {}",
                dropped.len(),
                dropped.join(", ")
            );
            let gone: BTreeSet<&str> = dropped.iter().map(String::as_str).collect();
            self.bug_reports.retain(|b| !gone.contains(b.id.as_str()));
            self.links.retain(|b, _| !gone.contains(b.as_str()));
        }
        self.dropped_bugs = dropped;
        Ok(self)
    }

    pub fn bug(&self, id: &str) -> Option<&BugReport> {
        self.bug_reports.iter().find(|b| b.id == id)
    }

    pub fn unit_index(&self) -> HashMap<&str, &CodeUnit> {
        self.code_units.iter().map(|u| (u.id.as_str(), u)).collect()
    }

    /// Units of one regime and granularity.
    pub fn pool(&self, regime: Regime, granularity: Granularity) -> Vec<&CodeUnit> {
        self.code_units
            .iter()
            .filter(|u| u.regime == regime && u.granularity == granularity)
            .collect()
    }

    /// Linked candidate ids for a bug within one regime and granularity.
    pub fn candidates(&self, bug_id: &str, regime: Regime, granularity: Granularity) -> Vec<&CodeUnit> {
        let index = self.unit_index();
        self.links
            .get(bug_id)
            .map(|ids| {
                ids.iter()
                    .map(|id| index[id.as_str()])
                    .filter(|u| u.regime == regime && u.granularity == granularity)
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Bugs with at least one relevant candidate in the given regime and
    /// granularity, ordered by report date then id.
    pub fn task(&self, regime: Regime, granularity: Granularity, bug_ids: &[String]) -> TaskSpec {
        let wanted: BTreeSet<&str> = bug_ids.iter().map(String::as_str).collect();
        let ordered = sorted_by_date(self.bug_reports.iter().filter(|b| wanted.contains(b.id.as_str())));
        let bug_ids = ordered
            .into_iter()
            .filter(|b| {
                self.candidates(&b.id, regime, granularity)
                    .iter()
                    .any(|u| b.ground_truth_paths.contains(&u.path))
            })
            .map(|b| b.id.clone())
            .collect();
        TaskSpec { regime, granularity, bug_ids }
    }

    /// Number of earlier bug fixes, other than the one that produced `unit`,
    /// that changed `unit.path` before `unit.commit_date`.
    pub fn prior_fixes(&self, unit: &CodeUnit) -> usize {
        self.bug_reports
            .iter()
            .filter(|b| {
                b.fix_commit != unit.commit
                    && b.fix_date < unit.commit_date
                    && b.ground_truth_paths.contains(&unit.path)
            })
            .count()
    }
}

fn sorted_by_date<'a>(bugs: impl Iterator<Item = &'a BugReport>) -> Vec<&'a BugReport> {
    let mut bugs: Vec<&BugReport> = bugs.collect();
    bugs.sort_by(|a, b| a.report_date.cmp(&b.report_date).then_with(|| a.id.cmp(&b.id)));
    bugs
}

/// Sorts bugs by report date (ties by id) and assigns the first
/// `ceil(0.6 n)` to training.
pub fn split_train_test(corpus: &Corpus) -> Result<Split> {
    let n = corpus.bug_reports.len();
    if n < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 bug reports to split, got {n}"
        )));
    }
    let ordered = sorted_by_date(corpus.bug_reports.iter());
    // 60:40 in integer arithmetic avoids 0.6 * n rounding up spuriously.
    let n_train = (3 * n).div_ceil(5);
    let (train, test) = ordered.split_at(n_train);
    Ok(Split {
        train: train.iter().map(|b| b.id.clone()).collect(),
        test: test.iter().map(|b| b.id.clone()).collect(),
    })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use chrono::TimeZone;

    pub fn date(day: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2021, 3, day, 12, 0, 0).unwrap()
    }

    pub fn bug(id: &str, day: u32, paths: &[&str]) -> BugReport {
        BugReport {
            id: id.into(),
            title: format!("{id} title"),
            description: format!("{id} crashes"),
            report_date: date(day),
            fix_commit: format!("fix-{id}"),
            fix_date: date(day + 1),
            ground_truth_paths: paths.iter().map(|p| p.to_string()).collect(),
        }
    }

    pub fn unit(id: &str, path: &str, commit: &str, day: u32) -> CodeUnit {
        CodeUnit {
            id: id.into(),
            path: path.into(),
            content: format!("class {id} {{}}"),
            granularity: Granularity::ChangesetFile,
            commit: commit.into(),
            commit_date: date(day),
            regime: Regime::Stationary,
            parent_file_id: None,
            diff: None,
        }
    }

    /// Two bugs, six units, every link valid.
    pub fn small() -> Corpus {
        let units = vec![
            unit("u1", "A.java", "fix-b1", 2),
            unit("u2", "B.java", "fix-b1", 2),
            unit("u3", "C.java", "fix-b1", 2),
            unit("u4", "A.java", "fix-b2", 6),
            unit("u5", "D.java", "fix-b2", 6),
            unit("u6", "E.java", "fix-b2", 6),
        ];
        let mut links = BTreeMap::new();
        links.insert("b1".to_string(), vec!["u1".into(), "u2".into(), "u3".into()]);
        links.insert(
            "b2".to_string(),
            vec!["u1".into(), "u4".into(), "u5".into(), "u6".into()],
        );
        Corpus {
            bug_reports: vec![bug("b1", 1, &["A.java"]), bug("b2", 5, &["D.java"])],
            code_units: units,
            links,
            dropped_bugs: vec![],
        }
    }
}


#[cfg(test)]
mod proptests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn split_is_a_date_ordered_partition(days in prop::collection::vec(1u32..28, 2..40)) {
            let mut corpus = small();
            corpus.bug_reports = days
                .iter()
                .enumerate()
                .map(|(i, &d)| bug(&format!("b{i:03}"), d, &["A.java"]))
                .collect();
            let split = split_train_test(&corpus).unwrap();
            let all: BTreeSet<_> = split.train.iter().chain(&split.test).cloned().collect();
            prop_assert_eq!(all.len(), days.len());
            prop_assert_eq!(split.train.len() + split.test.len(), days.len());
            let date = |id: &String| corpus.bug(id).unwrap().report_date;
            let max_train = split.train.iter().map(date).max().unwrap();
            if let Some(min_test) = split.test.iter().map(date).min() {
                prop_assert!(max_train <= min_test);
            }
        }
    }
}
