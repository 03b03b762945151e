//! Unified diff parsing (`git diff` / `git show` output) into hunks.

use crate::error::{Error, Result};

/// One `@@`-delimited block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hunk {
    /// Post-image path, or the pre-image path for a pure deletion.
    pub path: String,
    pub old_start: usize,
    pub old_len: usize,
    pub new_start: usize,
    pub new_len: usize,
    /// Body lines including their `+`, `-` or ` ` marker, newline-joined.
    pub body: String,
}

impl Hunk {
    pub fn counts(&self) -> LineCounts {
        LineCounts::of_hunk_body(&self.body)
    }
}

/// Per-file view of a diff.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffFile {
    pub path: String,
    pub hunks: Vec<Hunk>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LineCounts {
    pub added: usize,
    pub removed: usize,
    pub context: usize,
}

impl LineCounts {
    pub fn churn(&self) -> usize {
        self.added + self.removed
    }

    pub fn of_hunk_body(body: &str) -> LineCounts {
        let mut c = LineCounts::default();
        for line in body.lines() {
            match line.as_bytes().first() {
                Some(b'+') => c.added += 1,
                Some(b'-') => c.removed += 1,
                Some(b' ') | None => c.context += 1,
                _ => {}
            }
        }
        c
    }

    pub fn of_diff(diff: &str) -> LineCounts {
        match parse_diff(diff) {
            Ok(files) => files
                .iter()
                .flat_map(|f| &f.hunks)
                .map(Hunk::counts)
                .fold(LineCounts::default(), |a, b| LineCounts {
                    added: a.added + b.added,
                    removed: a.removed + b.removed,
                    context: a.context + b.context,
                }),
            Err(e) => {
                log::warn!("unparseable diff, churn counted as 0: {e}");
                LineCounts::default()
            }
        }
    }
}

/// Splits a unified diff into hunks, one per `@@` block.
pub fn extract_hunks(unified_diff: &str) -> Result<Vec<Hunk>> {
    Ok(parse_diff(unified_diff)?
        .into_iter()
        .flat_map(|f| f.hunks)
        .collect())
}

pub fn parse_diff(text: &str) -> Result<Vec<DiffFile>> {
    let lines: Vec<&str> = text.lines().collect();
    let mut files: Vec<DiffFile> = Vec::new();
    let mut old_path: Option<String> = None;
    let mut new_path: Option<String> = None;
    let mut i = 0;

    while i < lines.len() {
        let line = lines[i];
        if line.starts_with("diff --git ") {
            old_path = None;
            new_path = None;
            i += 1;
        } else if let Some(rest) = line.strip_prefix("--- ") {
            old_path = header_path(rest);
            i += 1;
        } else if let Some(rest) = line.strip_prefix("+++ ") {
            new_path = header_path(rest);
            i += 1;
        } else if line.starts_with("@@") {
            let lineno = i + 1;
            let (old_start, old_len, new_start, new_len) = parse_range_header(line, lineno)?;
            let path = new_path
                .clone()
                .or_else(|| old_path.clone())
                .ok_or_else(|| Error::Parse {
                    line: lineno,
                    msg: "hunk without ---/+++ file header".into(),
                })?;

            let (mut old_left, mut new_left) = (old_len, new_len);
            let mut body: Vec<&str> = Vec::new();
            i += 1;
            while i < lines.len() && (old_left > 0 || new_left > 0) {
                let l = lines[i];
                match l.as_bytes().first() {
                    Some(b'+') => new_left = new_left.saturating_sub(1),
                    Some(b'-') => old_left = old_left.saturating_sub(1),
                    Some(b' ') | None => {
                        old_left = old_left.saturating_sub(1);
                        new_left = new_left.saturating_sub(1);
                    }
                    Some(b'\\') => {
                        i += 1;
                        continue;
                    }
                    _ => {
                        return Err(Error::Parse {
                            line: i + 1,
                            msg: format!("unexpected line inside hunk: {l:?}"),
                        })
                    }
                }
                body.push(l);
                i += 1;
            }
            // Trailing "\ No newline at end of file" markers.
            while i < lines.len() && lines[i].starts_with('\\') {
                i += 1;
            }

            let hunk = Hunk {
                path: path.clone(),
                old_start,
                old_len,
                new_start,
                new_len,
                body: body.join("\n"),
            };
            match files.last_mut() {
                Some(f) if f.path == path => f.hunks.push(hunk),
                _ => files.push(DiffFile { path, hunks: vec![hunk] }),
            }
        } else {
            i += 1;
        }
    }
    Ok(files)
}

fn header_path(rest: &str) -> Option<String> {
    // "a/src/Foo.java\t2021-01-01 ..." -> "src/Foo.java"
    let raw = rest.split('\t').next().unwrap_or(rest).trim_end();
    if raw == "/dev/null" {
        return None;
    }
    let raw = raw
        .strip_prefix("a/")
        .or_else(|| raw.strip_prefix("b/"))
        .unwrap_or(raw);
    Some(raw.to_string())
}

fn parse_range_header(line: &str, lineno: usize) -> Result<(usize, usize, usize, usize)> {
    let err = |msg: &str| Error::Parse {
        line: lineno,
        msg: format!("{msg}: {line:?}"),
    };
    let inner = line
        .strip_prefix("@@ ")
        .and_then(|r| r.split_once(" @@"))
        .map(|(ranges, _)| ranges)
        .ok_or_else(|| err("malformed hunk header"))?;
    let mut parts = inner.split_whitespace();
    let old = parts
        .next()
        .and_then(|p| p.strip_prefix('-'))
        .ok_or_else(|| err("missing old range"))?;
    let new = parts
        .next()
        .and_then(|p| p.strip_prefix('+'))
        .ok_or_else(|| err("missing new range"))?;
    if parts.next().is_some() {
        return Err(err("unexpected token in hunk header"));
    }
    let range = |r: &str| -> Result<(usize, usize)> {
        let (start, len) = match r.split_once(',') {
            Some((s, l)) => (s, l),
            None => (r, "1"),
        };
        let start = start.parse().map_err(|_| err("bad range start"))?;
        let len = len.parse().map_err(|_| err("bad range length"))?;
        Ok((start, len))
    };
    let (os, ol) = range(old)?;
    let (ns, nl) = range(new)?;
    Ok((os, ol, ns, nl))
}
