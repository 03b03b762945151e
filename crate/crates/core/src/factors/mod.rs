//! Bug-inducing factor metrics and the logistic model that turns them into a
//! reward bonus.

mod logistic;
mod select;
mod vif;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corpus::{CodeUnit, Corpus, Granularity, Regime};

pub use logistic::{fit_logistic, log_likelihood, sigmoid, LogisticModel, FIT_MAX_ITER, FIT_TOL, RIDGE_FALLBACK};
pub use select::{select_features, SelectionConfig};
pub use vif::compute_vif;

/// Names of the factor columns, in [`FactorVector::values`] order.
pub const FACTOR_NAMES: [&str; 5] = ["loc", "mloc", "vg", "pre", "churn"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorVector {
    pub loc: usize,
    pub mloc: usize,
    pub vg: usize,
    pub pre: usize,
    pub churn: usize,
}

impl FactorVector {
    pub fn values(&self) -> [f64; 5] {
        [
            self.loc as f64,
            self.mloc as f64,
            self.vg as f64,
            self.pre as f64,
            self.churn as f64,
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FACTOR_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values()[i])
    }
}

/// Source metrics of a piece of code: non-blank lines, non-blank non-comment
/// lines, and 1 + branching tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceMetrics {
    pub loc: usize,
    pub mloc: usize,
    pub vg: usize,
}

pub fn compute_factors(unit: &CodeUnit, corpus: &Corpus) -> FactorVector {
    let text = match unit.granularity {
        Granularity::Hunk => strip_diff_markers(&unit.content),
        Granularity::ChangesetFile => unit.content.clone(),
    };
    let m = source_metrics(&text);
    let churn = unit.churn().unwrap_or_else(|| {
        log::debug!("no diff stored for `{}`, churn = 0", unit.id);
        0
    });
    FactorVector {
        loc: m.loc,
        mloc: m.mloc,
        vg: m.vg,
        pre: corpus.prior_fixes(unit),
        churn,
    }
}

/// One row per (bug, linked stationary unit) over `bug_ids`, with the five
/// factors as columns in [`FACTOR_NAMES`] order. The label is 1 when the
/// unit's path is in that bug's ground truth.
pub fn factor_dataset(corpus: &Corpus, bug_ids: &[String], granularity: Granularity) -> (DMatrix<f64>, Vec<f64>) {
    let mut rows: Vec<[f64; 5]> = Vec::new();
    let mut y = Vec::new();
    for id in bug_ids {
        let Some(bug) = corpus.bug(id) else { continue };
        for unit in corpus.candidates(id, Regime::Stationary, granularity) {
            rows.push(compute_factors(unit, corpus).values());
            y.push(f64::from(bug.ground_truth_paths.contains(&unit.path)));
        }
    }
    let x = DMatrix::from_fn(rows.len(), FACTOR_NAMES.len(), |i, j| rows[i][j]);
    (x, y)
}

fn strip_diff_markers(body: &str) -> String {
    body.lines()
        .map(|l| match l.as_bytes().first() {
            Some(b'+' | b'-' | b' ') => &l[1..],
            _ => l,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn source_metrics(text: &str) -> SourceMetrics {
    let code = code_only(text);
    let mut loc = 0;
    let mut mloc = 0;
    let mut branches = 0;
    for (raw, code) in text.lines().zip(code.lines().chain(std::iter::repeat(""))) {
        if raw.trim().is_empty() {
            continue;
        }
        loc += 1;
        if !code.trim().is_empty() {
            mloc += 1;
        }
        branches += count_branches(code);
    }
    SourceMetrics { loc, mloc, vg: 1 + branches }
}

/// Same text with comments removed and string/char literal bodies blanked.
/// Line structure is preserved.
fn code_only(text: &str) -> String {
    #[derive(PartialEq)]
    enum State {
        Code,
        Line,
        Block,
        Str(char),
    }
    let mut out = String::with_capacity(text.len());
    let mut state = State::Code;
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match state {
            State::Code => match c {
                '/' if chars.peek() == Some(&'/') => {
                    chars.next();
                    state = State::Line;
                }
                '/' if chars.peek() == Some(&'*') => {
                    chars.next();
                    state = State::Block;
                }
                '#' => state = State::Line,
                '"' | '\'' => {
                    out.push(c);
                    state = State::Str(c);
                }
                _ => out.push(c),
            },
            State::Line => {
                if c == '\n' {
                    out.push('\n');
                    state = State::Code;
                }
            }
            State::Block => {
                if c == '\n' {
                    out.push('\n');
                } else if c == '*' && chars.peek() == Some(&'/') {
                    chars.next();
                    state = State::Code;
                }
            }
            State::Str(q) => {
                if c == '\\' {
                    chars.next();
                } else if c == q {
                    out.push(c);
                    state = State::Code;
                } else if c == '\n' {
                    // Unterminated literal ends at the line break.
                    out.push('\n');
                    state = State::Code;
                }
            }
        }
    }
    out
}

fn count_branches(code: &str) -> usize {
    const KEYWORDS: [&str; 5] = ["if", "for", "while", "case", "catch"];
    let mut n = code.matches("&&").count() + code.matches("||").count() + code.matches('?').count();
    n += code
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| KEYWORDS.contains(w))
        .count();
    n
}
