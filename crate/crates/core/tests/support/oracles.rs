//! Brute-force reference implementations of statement extraction.
//!
//! Both mask comments and quoted text with spaces (keeping character
//! positions), then search the masked text naively: the Lean oracle recounts
//! bracket depth from the declaration start for every candidate cut.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

pub const LEAN_STOPS: [&str; 12] = [
    "by",
    "theorem",
    "lemma",
    "def",
    "example",
    "instance",
    "end",
    "namespace",
    "section",
    "open",
    "variable",
    "where",
];

pub const ISABELLE_STOPS: [&str; 20] = [
    "proof",
    "by",
    "using",
    "sorry",
    "oops",
    "apply",
    "unfolding",
    "including",
    "supply",
    "done",
    "theorem",
    "lemma",
    "corollary",
    "proposition",
    "definition",
    "fun",
    "function",
    "end",
    "abbreviation",
    "locale",
];

fn at(chars: &[char], i: usize, pat: &str) -> bool {
    let p: Vec<char> = pat.chars().collect();
    chars.len() >= i + p.len() && chars[i..i + p.len()] == p[..]
}

/// Index just past the nested region opening at `i`, if it closes.
fn skip_region(chars: &[char], i: usize, open: &str, close: &str) -> Option<usize> {
    let mut depth = 0;
    let mut j = i;
    while j < chars.len() {
        if at(chars, j, open) {
            depth += 1;
            j += open.chars().count();
        } else if at(chars, j, close) {
            depth -= 1;
            j += close.chars().count();
            if depth == 0 {
                return Some(j);
            }
        } else {
            j += 1;
        }
    }
    None
}

fn skip_string(chars: &[char], i: usize) -> Option<usize> {
    let mut j = i + 1;
    while j < chars.len() {
        match chars[j] {
            '\\' => j += 2,
            '"' => return Some(j + 1),
            _ => j += 1,
        }
    }
    None
}

fn blank(masked: &mut [char], from: usize, to: usize) {
    for c in &mut masked[from..to] {
        if *c != '\n' {
            *c = ' ';
        }
    }
}

fn mask_lean(chars: &[char]) -> Option<Vec<char>> {
    let mut masked = chars.to_vec();
    let mut i = 0;
    while i < chars.len() {
        if at(chars, i, "--") {
            let end = (i..chars.len()).find(|&j| chars[j] == '\n').unwrap_or(chars.len());
            blank(&mut masked, i, end);
            i = end;
        } else if at(chars, i, "/-") {
            let end = skip_region(chars, i, "/-", "-/")?;
            blank(&mut masked, i, end);
            i = end;
        } else if chars[i] == '"' {
            let end = skip_string(chars, i)?;
            blank(&mut masked, i, end);
            i = end;
        } else {
            i += 1;
        }
    }
    Some(masked)
}

fn mask_isabelle(chars: &[char]) -> Option<Vec<char>> {
    let mut masked = chars.to_vec();
    let mut i = 0;
    while i < chars.len() {
        let end = if at(chars, i, "(*") {
            skip_region(chars, i, "(*", "*)")?
        } else if chars[i] == '"' {
            skip_string(chars, i)?
        } else if chars[i] == '‹' {
            skip_region(chars, i, "‹", "›")?
        } else if at(chars, i, "\\<open>") {
            skip_region(chars, i, "\\<open>", "\\<close>")?
        } else {
            i += 1;
            continue;
        };
        blank(&mut masked, i, end);
        i = end;
    }
    Some(masked)
}

fn word_at(masked: &[char], i: usize, word: &str, ident: fn(char) -> bool) -> bool {
    let n = word.chars().count();
    at(masked, i, word) && (i == 0 || !ident(masked[i - 1])) && masked.get(i + n).is_none_or(|&c| !ident(c))
}

fn lean_ident(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '\'' | '.' | '!' | '?')
}

fn isabelle_ident(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '\'' | '.')
}

fn depth(masked: &[char]) -> i64 {
    masked
        .iter()
        .map(|c| match c {
            '(' | '[' | '{' | '⟨' | '⦃' => 1,
            ')' | ']' | '}' | '⟩' | '⦄' => -1,
            _ => 0,
        })
        .sum()
}

fn min_prefix_depth(masked: &[char]) -> i64 {
    (0..=masked.len()).map(|k| depth(&masked[..k])).min().unwrap_or(0)
}

fn slice(chars: &[char], from: usize, to: usize) -> String {
    chars[from..to].iter().collect::<String>().trim_end().to_string()
}

/// `Err(())` when the oracle finds no declaration, an unterminated region or
/// unbalanced brackets.
pub fn lean_oracle(source: &str) -> Result<String, ()> {
    let chars: Vec<char> = source.chars().collect();
    let masked = mask_lean(&chars).ok_or(())?;
    let start = (0..masked.len())
        .find(|&i| word_at(&masked, i, "theorem", lean_ident) || word_at(&masked, i, "lemma", lean_ident))
        .ok_or(())?;
    let body_from = start + if at(&masked, start, "theorem") { 7 } else { 5 };
    for i in body_from..=masked.len() {
        let prefix = &masked[start..i];
        if min_prefix_depth(prefix) < 0 {
            return Err(());
        }
        if depth(prefix) != 0 {
            continue;
        }
        let stop = at(&masked, i, ":=") || LEAN_STOPS.iter().any(|w| word_at(&masked, i, w, lean_ident));
        if stop {
            return Ok(slice(&chars, start, i));
        }
    }
    if depth(&masked[start..]) != 0 {
        return Err(());
    }
    Ok(slice(&chars, start, chars.len()))
}

pub fn isabelle_oracle(source: &str) -> Result<String, ()> {
    let chars: Vec<char> = source.chars().collect();
    let masked = mask_isabelle(&chars).ok_or(())?;
    let start = (0..masked.len())
        .find(|&i| word_at(&masked, i, "theorem", isabelle_ident) || word_at(&masked, i, "lemma", isabelle_ident))
        .ok_or(())?;
    let body_from = start + if at(&masked, start, "theorem") { 7 } else { 5 };
    let end = (body_from..masked.len())
        .find(|&i| ISABELLE_STOPS.iter().any(|w| word_at(&masked, i, w, isabelle_ident)))
        .unwrap_or(chars.len());
    Ok(slice(&chars, start, end))
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

/// (file name, contents) for every fixture with the given extension, sorted.
pub fn fixtures(sub: &str, ext: &str) -> Vec<(String, String)> {
    fixtures_in(&fixture_dir().join(sub), ext)
}

pub fn fixtures_in(dir: &Path, ext: &str) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = fs::read_dir(dir)
        .expect("fixture directory exists")
        .map(|e| e.expect("readable entry").path())
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some(ext))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read_to_string(&p).expect("readable fixture"),
            )
        })
        .collect();
    out.sort();
    out
}
