//! Seeded synthetic corpora: a small Java-like project whose bug reports share
//! planted vocabulary with the files their fixes touch.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use similar::TextDiff;

use super::{diff::extract_hunks, BugReport, CodeUnit, Corpus, Granularity, Regime};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_bugs: usize,
    pub n_files: usize,
    pub vocab_size: usize,
    /// Fraction of a bug's planted tokens present in its fixed files.
    pub signal: f64,
    /// Fraction of tokens rewritten in each non-stationary version.
    pub drift: f64,
    pub planted_per_bug: usize,
    pub description_noise: usize,
    pub lines_per_file: usize,
    pub max_window_versions: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_bugs: 50,
            n_files: 60,
            vocab_size: 3000,
            signal: 0.9,
            drift: 0.3,
            planted_per_bug: 6,
            description_noise: 8,
            lines_per_file: 30,
            max_window_versions: 3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.signal) {
            return Err(Error::Config(format!("signal {} outside [0, 1]", self.signal)));
        }
        if !(0.0..=1.0).contains(&self.drift) {
            return Err(Error::Config(format!("drift {} outside [0, 1]", self.drift)));
        }
        if self.n_bugs == 0 || self.n_files == 0 || self.lines_per_file < 4 {
            return Err(Error::Config("n_bugs, n_files must be ≥ 1 and lines_per_file ≥ 4".into()));
        }
        let needed = COMMON_WORDS + self.n_bugs * self.planted_per_bug + 200;
        if self.vocab_size < needed {
            return Err(Error::Config(format!(
                "vocab_size {} too small, need at least {needed}",
                self.vocab_size
            )));
        }
        Ok(())
    }
}

const COMMON_WORDS: usize = 40;
const TOPIC_WORDS: usize = 24;
const SYNTH_STREAM: u64 = 0x5157_4e54;

/// Generated words that would read as keywords or template identifiers.
const RESERVED: &[&str] = &["case", "goto", "size"];

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Deterministic pronounceable word for a vocabulary index.
fn word(mut idx: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut out = String::new();
    // Two syllables minimum.
    for _ in 0..2 {
        let syl = idx % base;
        idx /= base;
        out.push(CONSONANTS[syl / VOWELS.len()] as char);
        out.push(VOWELS[syl % VOWELS.len()] as char);
    }
    while idx > 0 {
        let syl = idx % base;
        idx /= base;
        out.push(CONSONANTS[syl / VOWELS.len()] as char);
        out.push(VOWELS[syl % VOWELS.len()] as char);
    }
    out
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_ascii_uppercase().to_string() + c.as_str(),
        None => String::new(),
    }
}

struct SynthFile {
    path: String,
    class_token: String,
    topic: Vec<String>,
    proneness: f64,
    lines: Vec<String>,
}

fn statement(rng: &mut Rng, words: &[String], common: &[String]) -> String {
    let a = words.choose(rng).unwrap();
    let b = words.choose(rng).unwrap();
    let c = common.choose(rng).unwrap();
    match rng.random_range(0..8) {
        0 => format!("    if ({a} != null) {{ {b}.{c}(); }}"),
        1 => format!("    for (int i = 0; i < {a}.size(); i++) {{ {b}(i); }}"),
        2 => format!("    // {c} {a} {b}"),
        3 => format!("    while ({a}.{c}() && {b}) {{ {b} = false; }}"),
        4 => format!("    return {a} ? {b} : {c};"),
        _ => format!("    {a}.{c}({b});"),
    }
}

fn render(file: &SynthFile) -> String {
    let mut out = format!("class {} {{\n", file.path_class());
    for l in &file.lines {
        out.push_str(l);
        out.push('\n');
    }
    out.push_str("}\n");
    out
}

impl SynthFile {
    fn path_class(&self) -> &str {
        self.path
            .rsplit('/')
            .next()
            .and_then(|f| f.strip_suffix(".java"))
            .unwrap_or("Anon")
    }
}

fn unified(old: &str, new: &str, path: &str) -> String {
    TextDiff::from_lines(old, new)
        .unified_diff()
        .context_radius(3)
        .header(&format!("a/{path}"), &format!("b/{path}"))
        .to_string()
}

/// Replaces a fraction `drift` of identifier tokens with random vocabulary.
fn drift_text(rng: &mut Rng, text: &str, drift: f64, vocab: &[String]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut token = String::new();
    let flush = |token: &mut String, out: &mut String, rng: &mut Rng| {
        if token.is_empty() {
            return;
        }
        let keyword = matches!(
            token.as_str(),
            "if" | "for" | "while" | "return" | "class" | "int" | "null" | "false" | "size" | "i"
        );
        if !keyword && rng.random_bool(drift) {
            out.push_str(vocab.choose(rng).unwrap());
        } else {
            out.push_str(token);
        }
        token.clear();
    };
    for ch in text.chars() {
        if ch.is_ascii_alphanumeric() {
            token.push(ch);
        } else {
            flush(&mut token, &mut out, rng);
            out.push(ch);
        }
    }
    flush(&mut token, &mut out, rng);
    out
}

/// Generates a corpus that is a pure function of `(cfg, seed)`.
///
/// Every bug gets 1-2 ground-truth files, favoring bug-prone ones, and a set
/// of planted tokens. Its description carries all of them; the fixed files
/// carry `round(signal * planted)` of them in the added lines. Each ground
/// truth file also gets 1..=`max_window_versions` intermediate versions
/// between report and fix, each with a fraction `drift` of its tokens
/// rewritten. A baseline snapshot of every file exists in both regimes.
pub fn generate_synthetic_corpus(cfg: &SynthConfig, seed: u64) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = rng::stream(seed, SYNTH_STREAM);

    let vocab: Vec<String> = (0..)
        .map(word)
        .filter(|w| !RESERVED.contains(&w.as_str()))
        .take(cfg.vocab_size)
        .collect();
    let common = &vocab[..COMMON_WORDS];
    let mut rare: Vec<String> = vocab[COMMON_WORDS..].to_vec();
    rare.shuffle(&mut rng);
    let n_planted = cfg.n_bugs * cfg.planted_per_bug;
    let (planted_pool, topic_pool) = rare.split_at(n_planted);

    let modules = ["core", "ui", "io", "net", "model", "util"];
    let mut files: Vec<SynthFile> = (0..cfg.n_files)
        .map(|f| {
            let class_words: Vec<&String> = topic_pool.choose_multiple(&mut rng, 2).collect();
            let class = format!("{}{}{f}", capitalize(class_words[0]), capitalize(class_words[1]));
            let topic: Vec<String> = topic_pool
                .choose_multiple(&mut rng, TOPIC_WORDS)
                .cloned()
                .chain(class_words.into_iter().cloned())
                .collect();
            let module = modules[f % modules.len()];
            SynthFile {
                path: format!("src/main/java/org/synth/{module}/{class}.java"),
                class_token: class,
                topic,
                proneness: 0.0,
                lines: Vec::new(),
            }
        })
        .collect();
    // Zipf-like bug-proneness over a random file order.
    let mut order: Vec<usize> = (0..cfg.n_files).collect();
    order.shuffle(&mut rng);
    for (rank, &f) in order.iter().enumerate() {
        files[f].proneness = 1.0 / (rank as f64 + 1.0).powf(0.8);
    }
    for f in files.iter_mut() {
        f.lines = (0..cfg.lines_per_file)
            .map(|_| statement(&mut rng, &f.topic, common))
            .collect();
    }

    let base: DateTime<Utc> = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
    let mut units: Vec<CodeUnit> = Vec::new();

    // Baseline snapshot: the last small edit to each file before the study.
    for (f, file) in files.iter_mut().enumerate() {
        let before = render(file);
        let n_edit = rng.random_range(1..=2);
        for _ in 0..n_edit {
            let at = rng.random_range(0..file.lines.len());
            file.lines[at] = statement(&mut rng, &file.topic, common);
        }
        let after = render(file);
        let diff = unified(&before, &after, &file.path);
        let date = base + Duration::hours(f as i64);
        for regime in Regime::ALL {
            let tag = if regime == Regime::Stationary { "s" } else { "n" };
            push_file_unit(
                &mut units,
                format!("{tag}:base:{f:03}"),
                &file.path,
                after.clone(),
                diff.clone(),
                format!("base{f:03}"),
                date,
                regime,
            )?;
        }
    }

    let weights: Vec<f64> = files.iter().map(|f| f.proneness).collect();
    let max_weight = weights.iter().cloned().fold(0.0, f64::max);
    let mut bugs = Vec::with_capacity(cfg.n_bugs);
    for b in 0..cfg.n_bugs {
        let id = format!("BUG-{:04}", b + 1);
        let report_date = base + Duration::days(3 * (b as i64 + 2)) + Duration::hours(rng.random_range(0..12));
        let fix_date = report_date + Duration::days(rng.random_range(2..6)) + Duration::hours(rng.random_range(0..12));
        let fix_commit = format!("fix{:04}", b + 1);

        let n_gt = if rng.random_bool(0.7) { 1 } else { 2 };
        let mut gt: Vec<usize> = Vec::new();
        while gt.len() < n_gt {
            let f = weighted_pick(&mut rng, &weights);
            if !gt.contains(&f) {
                gt.push(f);
            }
        }
        gt.sort_unstable();

        let planted: Vec<String> = planted_pool[b * cfg.planted_per_bug..(b + 1) * cfg.planted_per_bug].to_vec();
        let n_keep = (cfg.signal * planted.len() as f64).round() as usize;

        let mut desc_words: Vec<String> = planted.clone();
        for _ in 0..cfg.description_noise {
            desc_words.push(vocab.choose(&mut rng).unwrap().clone());
        }
        for &f in &gt {
            if rng.random_bool(cfg.signal) {
                desc_words.push(files[f].class_token.clone());
            }
        }
        desc_words.shuffle(&mut rng);
        let description = format!("When {} the application fails.", desc_words.join(" "));
        let title = format!("Failure in {}", planted[..2.min(planted.len())].join(" "));

        for &f in &gt {
            let file = &mut files[f];
            let before = render(file);
            let mut kept = planted.clone();
            kept.shuffle(&mut rng);
            kept.truncate(n_keep);
            let at = rng.random_range(0..file.lines.len());
            let fix_lines: Vec<String> = kept
                .chunks(2)
                .map(|pair| match pair {
                    [a, b] => format!("    if ({a} == null) {{ {b}.reset(); }}"),
                    [a] => format!("    {a}.validate();"),
                    _ => unreachable!(),
                })
                .collect();
            let n_fix = fix_lines.len();
            for (j, l) in fix_lines.into_iter().enumerate() {
                file.lines.insert(at + j, l);
            }
            // Bug-prone files see larger fixes, edited around the fix block.
            let extra = 1 + (4.0 * file.proneness / max_weight * rng.random::<f64>()).round() as usize;
            for _ in 0..extra {
                let mut i = rng.random_range(0..file.lines.len() - n_fix);
                if i >= at {
                    i += n_fix;
                }
                file.lines[i] = statement(&mut rng, &file.topic, common);
            }
            let fixed = render(file);

            // Intermediate versions inside the (report, fix) window.
            let n_versions = rng.random_range(1..=cfg.max_window_versions.max(1));
            let window = (fix_date - report_date).num_minutes();
            let mut offsets: Vec<i64> = (0..n_versions).map(|_| rng.random_range(1..window)).collect();
            offsets.sort_unstable();
            offsets.dedup();
            let mut prev = before.clone();
            for (v, off) in offsets.into_iter().enumerate() {
                let content = drift_text(&mut rng, &fixed, cfg.drift, &vocab[COMMON_WORDS..]);
                let diff = unified(&prev, &content, &file.path);
                push_file_unit(
                    &mut units,
                    format!("n:{id}:{f:03}:v{v}"),
                    &file.path,
                    content.clone(),
                    diff,
                    format!("wip{:04}{v}", b + 1),
                    report_date + Duration::minutes(off),
                    Regime::NonStationary,
                )?;
                prev = content;
            }
            let diff = unified(&before, &fixed, &file.path);
            push_file_unit(
                &mut units,
                format!("s:{id}:{f:03}"),
                &file.path,
                fixed,
                diff,
                fix_commit.clone(),
                fix_date,
                Regime::Stationary,
            )?;
        }

        bugs.push(BugReport {
            id,
            title,
            description,
            report_date,
            fix_commit,
            fix_date,
            ground_truth_paths: gt.iter().map(|&f| files[f].path.clone()).collect::<BTreeSet<_>>(),
        });
    }

    let links: BTreeMap<String, Vec<String>> = bugs
        .iter()
        .map(|b| (b.id.clone(), snapshot_links(&units, b)))
        .collect();

    Corpus {
        bug_reports: bugs,
        code_units: units,
        links,
        dropped_bugs: Vec::new(),
    }
    .validate()
}

/// Candidates for one bug: in each regime, the latest version of every file
/// as of the fix, except that the bug's own ground-truth files contribute all
/// of their non-stationary versions from the report-to-fix window. Hunks
/// follow their parent file.
fn snapshot_links(units: &[CodeUnit], bug: &BugReport) -> Vec<String> {
    let mut latest: BTreeMap<(Regime, &str), &CodeUnit> = BTreeMap::new();
    let mut chosen: BTreeSet<&str> = BTreeSet::new();
    for u in units {
        if u.granularity != Granularity::ChangesetFile || u.commit_date > bug.fix_date {
            continue;
        }
        let in_window = u.regime == Regime::NonStationary
            && u.commit_date > bug.report_date
            && bug.ground_truth_paths.contains(&u.path);
        if in_window {
            chosen.insert(&u.id);
            continue;
        }
        let slot = latest.entry((u.regime, u.path.as_str())).or_insert(u);
        if u.commit_date > slot.commit_date {
            *slot = u;
        }
    }
    for ((regime, path), u) in &latest {
        let replaced = *regime == Regime::NonStationary
            && bug.ground_truth_paths.contains(*path)
            && units.iter().any(|w| {
                w.regime == Regime::NonStationary && w.path == *path && chosen.contains(w.id.as_str())
            });
        if !replaced {
            chosen.insert(&u.id);
        }
    }
    units
        .iter()
        .filter(|u| match &u.parent_file_id {
            Some(parent) => chosen.contains(parent.as_str()),
            None => chosen.contains(u.id.as_str()),
        })
        .map(|u| u.id.clone())
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn push_file_unit(
    units: &mut Vec<CodeUnit>,
    id: String,
    path: &str,
    content: String,
    diff: String,
    commit: String,
    date: DateTime<Utc>,
    regime: Regime,
) -> Result<()> {
    for (i, h) in extract_hunks(&diff)?.into_iter().enumerate() {
        units.push(CodeUnit {
            id: format!("{id}#h{i}"),
            path: path.to_string(),
            content: h.body,
            granularity: Granularity::Hunk,
            commit: commit.clone(),
            commit_date: date,
            regime,
            parent_file_id: Some(id.clone()),
            diff: None,
        });
    }
    units.push(CodeUnit {
        id,
        path: path.to_string(),
        content,
        granularity: Granularity::ChangesetFile,
        commit,
        commit_date: date,
        regime,
        parent_file_id: None,
        diff: Some(diff),
    });
    Ok(())
}

fn weighted_pick(rng: &mut Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}
