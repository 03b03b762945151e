use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;

use chrono::{DateTime, TimeZone, Utc};
use driftloc::corpus::{mine_repository, BugReport, Granularity, Regime};

fn day(d: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2021, 3, d, 12, 0, 0).unwrap()
}

fn git(repo: &Path, args: &[&str], date: Option<DateTime<Utc>>) -> String {
    let mut cmd = Command::new("git");
    cmd.arg("-C").arg(repo).args(args);
    cmd.env("GIT_CONFIG_NOSYSTEM", "1").env("HOME", repo);
    if let Some(d) = date {
        let stamp = d.to_rfc3339();
        cmd.env("GIT_AUTHOR_DATE", &stamp).env("GIT_COMMITTER_DATE", &stamp);
    }
    let out = cmd.output().expect("git runs");
    assert!(out.status.success(), "git {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap().trim().to_string()
}

struct Repo {
    dir: tempfile::TempDir,
}

impl Repo {
    fn new() -> Repo {
        let dir = tempfile::tempdir().unwrap();
        git(dir.path(), &["init", "-q"], None);
        git(dir.path(), &["config", "user.name", "Fixture"], None);
        git(dir.path(), &["config", "user.email", "fixture@example.org"], None);
        Repo { dir }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn commit(&self, files: &[(&str, &str)], when: DateTime<Utc>) -> String {
        for (name, text) in files {
            let p = self.path().join(name);
            fs::create_dir_all(p.parent().unwrap()).unwrap();
            fs::write(p, text).unwrap();
        }
        git(self.path(), &["add", "-A"], None);
        git(self.path(), &["commit", "-q", "-m", "change"], Some(when));
        git(self.path(), &["rev-parse", "HEAD"], None)
    }
}

fn meta(id: &str, reported: DateTime<Utc>, fix: &str, paths: &[&str]) -> BugReport {
    BugReport {
        id: id.into(),
        title: format!("{id} title"),
        description: "parser crashes on empty input".into(),
        report_date: reported,
        fix_commit: fix.into(),
        // Overwritten from the repository.
        fix_date: reported,
        ground_truth_paths: paths.iter().map(|p| p.to_string()).collect::<BTreeSet<_>>(),
    }
}

#[test]
fn fix_without_window_commits_gives_one_stationary_file() {
    let repo = Repo::new();
    repo.commit(&[("src/A.java", "class A {\n  int x;\n}\n")], day(1));
    let fix = repo.commit(&[("src/A.java", "class A {\n  int x = 0;\n}\n")], day(5));

    let (corpus, report) = mine_repository(repo.path(), &[meta("B1", day(3), &fix, &["src/A.java"])]).unwrap();
    let files: Vec<_> = corpus
        .code_units
        .iter()
        .filter(|u| u.granularity == Granularity::ChangesetFile)
        .collect();
    assert_eq!(files.len(), 1);
    assert_eq!(files[0].regime, Regime::Stationary);
    assert_eq!(files[0].content, "class A {\n  int x = 0;\n}\n");
    assert_eq!(files[0].commit, fix);
    assert_eq!(corpus.bug_reports[0].fix_date, day(5));
    assert_eq!(report.no_drift_bugs, vec!["B1".to_string()]);

    let hunks: Vec<_> = corpus
        .code_units
        .iter()
        .filter(|u| u.granularity == Granularity::Hunk)
        .collect();
    assert_eq!(hunks.len(), 1);
    assert_eq!(hunks[0].parent_file_id.as_deref(), Some(files[0].id.as_str()));
    assert!(hunks[0].content.contains("+  int x = 0;"));
}

#[test]
fn two_window_edits_give_two_non_stationary_versions() {
    let repo = Repo::new();
    repo.commit(&[("A.java", "v0\n"), ("B.java", "b0\n")], day(1));
    let w1 = repo.commit(&[("A.java", "v1\n")], day(4));
    // Touches only a file outside the ground truth.
    repo.commit(&[("B.java", "b1\n")], day(5));
    let w2 = repo.commit(&[("A.java", "v2\n")], day(6));
    let fix = repo.commit(&[("A.java", "fixed\n")], day(8));

    let (corpus, report) = mine_repository(repo.path(), &[meta("B1", day(3), &fix, &["A.java"])]).unwrap();
    let mut versions: Vec<(String, String)> = corpus
        .code_units
        .iter()
        .filter(|u| u.regime == Regime::NonStationary && u.granularity == Granularity::ChangesetFile)
        .map(|u| (u.commit.clone(), u.content.clone()))
        .collect();
    versions.sort();
    let mut expected = vec![(w1, "v1\n".to_string()), (w2, "v2\n".to_string())];
    expected.sort();
    assert_eq!(versions, expected);
    assert!(report.no_drift_bugs.is_empty());
    assert!(corpus.code_units.iter().all(|u| u.path == "A.java"));

    let bug = &corpus.bug_reports[0];
    for u in corpus.code_units.iter().filter(|u| u.regime == Regime::NonStationary) {
        assert!(bug.report_date < u.commit_date && u.commit_date < bug.fix_date);
    }
}

#[test]
fn commits_before_the_report_are_outside_the_window() {
    let repo = Repo::new();
    repo.commit(&[("A.java", "v0\n")], day(1));
    repo.commit(&[("A.java", "v1\n")], day(2));
    let fix = repo.commit(&[("A.java", "fixed\n")], day(8));
    let (corpus, report) = mine_repository(repo.path(), &[meta("B1", day(3), &fix, &["A.java"])]).unwrap();
    assert!(corpus.code_units.iter().all(|u| u.regime == Regime::Stationary));
    assert_eq!(report.no_drift_bugs, vec!["B1".to_string()]);
}

#[test]
fn window_commits_on_other_files_flag_the_bug() {
    let repo = Repo::new();
    repo.commit(&[("A.java", "a\n"), ("B.java", "b0\n")], day(1));
    repo.commit(&[("B.java", "b1\n")], day(4));
    let fix = repo.commit(&[("A.java", "a fixed\n")], day(6));
    let (_, report) = mine_repository(repo.path(), &[meta("JDT-1", day(3), &fix, &["A.java"])]).unwrap();
    assert_eq!(report.no_drift_bugs, vec!["JDT-1".to_string()]);
}

#[test]
fn unknown_fix_commit_names_bug_and_commit() {
    let repo = Repo::new();
    repo.commit(&[("A.java", "a\n")], day(1));
    let err = mine_repository(repo.path(), &[meta("B9", day(3), "deadbeef", &["A.java"])])
        .unwrap_err()
        .to_string();
    assert!(err.contains("B9") && err.contains("deadbeef"), "{err}");
}

#[test]
fn file_deleted_by_the_fix_keeps_removed_lines() {
    let repo = Repo::new();
    repo.commit(&[("A.java", "keep\n"), ("Old.java", "legacy one\nlegacy two\n")], day(1));
    fs::remove_file(repo.path().join("Old.java")).unwrap();
    let fix = repo.commit(&[], day(6));
    let (corpus, report) =
        mine_repository(repo.path(), &[meta("B1", day(3), &fix, &["Old.java"])]).unwrap();
    let file = corpus
        .code_units
        .iter()
        .find(|u| u.granularity == Granularity::ChangesetFile)
        .unwrap();
    assert_eq!(file.content, "legacy one\nlegacy two");
    assert!(report.skipped_files.is_empty());
}

#[test]
fn links_cover_units_dated_up_to_the_fix() {
    let repo = Repo::new();
    repo.commit(&[("A.java", "a0\n"), ("B.java", "b0\n")], day(1));
    let fix1 = repo.commit(&[("A.java", "a1\n")], day(4));
    repo.commit(&[("B.java", "b1\n")], day(10));
    let fix2 = repo.commit(&[("B.java", "b2\n")], day(12));
    let bugs = [meta("B1", day(2), &fix1, &["A.java"]), meta("B2", day(9), &fix2, &["B.java"])];
    let (corpus, _) = mine_repository(repo.path(), &bugs).unwrap();
    let index = corpus.unit_index();
    let b1_dates: Vec<_> = corpus.links["B1"].iter().map(|id| index[id.as_str()].commit_date).collect();
    assert!(b1_dates.iter().all(|d| *d <= day(4)));
    // B2 sees its own window version and both fixes.
    assert_eq!(
        corpus
            .candidates("B2", Regime::Stationary, Granularity::ChangesetFile)
            .len(),
        2
    );
    assert_eq!(
        corpus
            .candidates("B2", Regime::NonStationary, Granularity::ChangesetFile)
            .len(),
        1
    );
}
