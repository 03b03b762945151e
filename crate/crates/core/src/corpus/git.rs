//! Corpus mining from a git working copy.
//!
//! Only plumbing-level invocations of the system `git` executable are used,
//! always as `git -C <repo> ...`:
//!
//! | purpose                         | arguments                                                    |
//! |---------------------------------|--------------------------------------------------------------|
//! | resolve a commit                | `rev-parse --verify --quiet <rev>^{commit}`                  |
//! | committer date                  | `show -s --format=%cI <sha>`                                 |
//! | blob id of a file at a commit   | `rev-parse --verify --quiet <sha>:<path>`                    |
//! | file content at a commit        | `show <sha>:<path>`                                          |
//! | per-file diff of a commit       | `show --no-color --no-ext-diff --format= --unified=3 <sha> -- <path>` |
//! | history of a path               | `log --no-color --format=%H%x09%cI <sha> -- <path>`          |

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;

use chrono::{DateTime, Utc};

use super::{diff::extract_hunks, BugReport, CodeUnit, Corpus, Granularity, Regime};
use crate::error::{Error, Result};

/// What [`mine_repository`] skipped or flagged along the way.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MiningReport {
    /// `bug:commit:path` triples where the file did not exist at the commit.
    pub skipped_files: Vec<String>,
    /// Bugs whose report-to-fix window holds no change to a ground-truth file.
    pub no_drift_bugs: Vec<String>,
}

struct Git<'a> {
    repo: &'a Path,
}

impl Git<'_> {
    fn run(&self, args: &[&str]) -> Result<Option<String>> {
        let out = Command::new("git")
            .arg("-C")
            .arg(self.repo)
            .args(args)
            .output()
            .map_err(|e| Error::Git(format!("cannot run git: {e}")))?;
        if !out.status.success() {
            return Ok(None);
        }
        String::from_utf8(out.stdout)
            .map(Some)
            .map_err(|_| Error::Git(format!("non UTF-8 output from git {}", args.join(" "))))
    }

    fn resolve(&self, rev: &str) -> Result<Option<String>> {
        let revision = format!("{rev}^{{commit}}");
        Ok(self
            .run(&["rev-parse", "--verify", "--quiet", &revision])?
            .map(|s| s.trim().to_string()))
    }

    fn commit_date(&self, sha: &str) -> Result<DateTime<Utc>> {
        let raw = self
            .run(&["show", "-s", "--format=%cI", sha])?
            .ok_or_else(|| Error::Git(format!("cannot read date of {sha}")))?;
        parse_date(raw.trim())
    }

    fn blob(&self, sha: &str, path: &str) -> Result<Option<String>> {
        let revision = format!("{sha}:{path}");
        Ok(self
            .run(&["rev-parse", "--verify", "--quiet", &revision])?
            .map(|s| s.trim().to_string()))
    }

    fn content(&self, sha: &str, path: &str) -> Result<Option<String>> {
        self.run(&["show", &format!("{sha}:{path}")])
    }

    fn file_diff(&self, sha: &str, path: &str) -> Result<String> {
        Ok(self
            .run(&[
                "show",
                "--no-color",
                "--no-ext-diff",
                "--format=",
                "--unified=3",
                sha,
                "--",
                path,
            ])?
            .unwrap_or_default())
    }

    /// Commits reachable from `sha` that touch `path`, newest first.
    fn history(&self, sha: &str, path: &str) -> Result<Vec<(String, DateTime<Utc>)>> {
        let raw = self
            .run(&["log", "--no-color", "--format=%H%x09%cI", sha, "--", path])?
            .unwrap_or_default();
        raw.lines()
            .filter(|l| !l.is_empty())
            .map(|l| {
                let (h, d) = l
                    .split_once('\t')
                    .ok_or_else(|| Error::Git(format!("unexpected log line {l:?}")))?;
                Ok((h.to_string(), parse_date(d)?))
            })
            .collect()
    }
}

fn parse_date(s: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|d| d.with_timezone(&Utc))
        .map_err(|e| Error::Git(format!("bad date {s:?}: {e}")))
}

/// Builds a corpus from a repository and bug metadata whose fix commits
/// exist in it.
///
/// Stationary units are the ground-truth files at the fix commit.
/// Non-stationary units are the distinct versions of those files introduced
/// by commits strictly between the report date and the fix commit date; the
/// fix commit itself is excluded. Hunks come from each contributing commit's
/// diff of the file. Every bug is linked to all units dated no later than its
/// fix.
pub fn mine_repository(repo_path: &Path, bug_meta: &[BugReport]) -> Result<(Corpus, MiningReport)> {
    let git = Git { repo: repo_path };
    let mut report = MiningReport::default();
    let mut units: BTreeMap<String, CodeUnit> = BTreeMap::new();
    let mut bugs = Vec::with_capacity(bug_meta.len());

    for meta in bug_meta {
        let sha = git.resolve(&meta.fix_commit)?.ok_or_else(|| {
            Error::Git(format!(
                "bug `{}`: fix commit `{}` not found",
                meta.id, meta.fix_commit
            ))
        })?;
        let fix_date = git.commit_date(&sha)?;
        let mut bug = meta.clone();
        bug.fix_commit = sha.clone();
        bug.fix_date = fix_date;

        for path in &bug.ground_truth_paths {
            add_version(&git, &mut units, &mut report, &bug.id, &sha, fix_date, path, Regime::Stationary)?;
        }

        let mut drift = false;
        for path in &bug.ground_truth_paths {
            let mut seen_blobs = BTreeSet::new();
            // Oldest first so ids and ordering follow history.
            for (commit, date) in git.history(&sha, path)?.into_iter().rev() {
                if commit == sha || date <= bug.report_date || date >= fix_date {
                    continue;
                }
                let Some(blob) = git.blob(&commit, path)? else {
                    report.skipped_files.push(format!("{}:{commit}:{path}", bug.id));
                    log::info!("{path} absent at {commit}, skipped");
                    continue;
                };
                if !seen_blobs.insert(blob) {
                    continue;
                }
                drift = true;
                add_version(&git, &mut units, &mut report, &bug.id, &commit, date, path, Regime::NonStationary)?;
            }
        }
        if !drift {
            log::warn!("bug `{}` has no non-stationary versions", bug.id);
            report.no_drift_bugs.push(bug.id.clone());
        }
        bugs.push(bug);
    }

    let code_units: Vec<CodeUnit> = units.into_values().collect();
    let links = bugs
        .iter()
        .map(|b| {
            let ids = code_units
                .iter()
                .filter(|u| u.commit_date <= b.fix_date)
                .map(|u| u.id.clone())
                .collect();
            (b.id.clone(), ids)
        })
        .collect();
    let corpus = Corpus {
        bug_reports: bugs,
        code_units,
        links,
        dropped_bugs: Vec::new(),
    }
    .validate()?;
    Ok((corpus, report))
}

#[allow(clippy::too_many_arguments)]
fn add_version(
    git: &Git<'_>,
    units: &mut BTreeMap<String, CodeUnit>,
    report: &mut MiningReport,
    bug_id: &str,
    sha: &str,
    date: DateTime<Utc>,
    path: &str,
    regime: Regime,
) -> Result<()> {
    let prefix = match regime {
        Regime::Stationary => "s",
        Regime::NonStationary => "n",
    };
    let file_id = format!("{prefix}:{}:{path}", &sha[..sha.len().min(12)]);
    if units.contains_key(&file_id) {
        return Ok(());
    }
    let diff = git.file_diff(sha, path)?;
    let content = match git.content(sha, path)? {
        Some(c) => c,
        None => {
            // Deleted by this commit: the removed lines stand in for content.
            let removed: Vec<&str> = diff
                .lines()
                .filter(|l| l.starts_with('-') && !l.starts_with("---"))
                .map(|l| &l[1..])
                .collect();
            if removed.is_empty() {
                report.skipped_files.push(format!("{bug_id}:{sha}:{path}"));
                log::info!("{path} absent at {sha}, skipped");
                return Ok(());
            }
            removed.join("\n")
        }
    };
    let hunks = extract_hunks(&diff)?;
    for (i, hunk) in hunks.into_iter().enumerate() {
        let id = format!("{file_id}#h{i}");
        units.insert(
            id.clone(),
            CodeUnit {
                id,
                path: path.to_string(),
                content: hunk.body,
                granularity: Granularity::Hunk,
                commit: sha.to_string(),
                commit_date: date,
                regime,
                parent_file_id: Some(file_id.clone()),
                diff: None,
            },
        );
    }
    units.insert(
        file_id.clone(),
        CodeUnit {
            id: file_id,
            path: path.to_string(),
            content,
            granularity: Granularity::ChangesetFile,
            commit: sha.to_string(),
            commit_date: date,
            regime,
            parent_file_id: None,
            diff: (!diff.is_empty()).then_some(diff),
        },
    );
    Ok(())
}
