//! Multi-representation theorem corpus and proof-free statement extraction.
//!
//! A corpus root holds three sibling directories, one file per theorem in
//! each: `informal/<id>.txt`, `lean/<id>.lean` and `isabelle/<id>.thy`.
//! Only statements are kept. Lean and Isabelle sources are cut right before
//! the proof begins, using a small lexer that understands comments, strings
//! and bracket nesting rather than a full grammar for either language.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Benchmark split tag carried along with each entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Valid,
    Test,
    #[default]
    Unspecified,
}

impl Split {
    fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "valid" => Some(Split::Valid),
            "test" => Some(Split::Test),
            "unspecified" => Some(Split::Unspecified),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoremSources {
    pub id: String,
    pub informal: String,
    pub lean_statement: String,
    pub isabelle_statement: String,
    #[serde(default)]
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub entries: Vec<TheoremSources>,
    pub root: PathBuf,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&TheoremSources> {
        self.entries
            .binary_search_by(|e| e.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Stable digest of ids and statements, used to detect a store being
    /// resumed against a different corpus.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.entries {
            for part in [&e.id, &e.informal, &e.lean_statement, &e.isabelle_statement] {
                h.update((part.len() as u64).to_le_bytes());
                h.update(part.as_bytes());
            }
        }
        hex_digest(h)
    }
}

pub(crate) fn hex_digest(h: Sha256) -> String {
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Why a theorem id was left out of the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExclusionReason {
    MissingInformal,
    MissingLean,
    MissingIsabelle,
    EmptyInformal,
    Unreadable { file: String, error: String },
    Extraction(String),
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExclusionReason::MissingInformal => f.write_str("missing-informal"),
            ExclusionReason::MissingLean => f.write_str("missing-lean"),
            ExclusionReason::MissingIsabelle => f.write_str("missing-isabelle"),
            ExclusionReason::EmptyInformal => f.write_str("empty-informal"),
            ExclusionReason::Unreadable { file, error } => {
                write!(f, "unreadable {file}: {}", one_line(error))
            }
            ExclusionReason::Extraction(msg) => write!(f, "extraction: {}", one_line(msg)),
        }
    }
}

fn one_line(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub excluded: Vec<(String, ExclusionReason)>,
}

impl LoadReport {
    pub fn is_empty(&self) -> bool {
        self.excluded.is_empty()
    }

    /// `id<TAB>reason`, one line per excluded id.
    pub fn to_tsv(&self) -> String {
        self.excluded
            .iter()
            .map(|(id, reason)| format!("{id}\t{reason}\n"))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus root {0} does not exist or is not a directory")]
    MissingRoot(PathBuf),
    #[error("cannot list {path}: {source}")]
    List {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid split file line {line}: {text:?}")]
    SplitFile { line: usize, text: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractionError {
    #[error("no theorem or lemma declaration found")]
    NoDeclaration,
    #[error("unbalanced delimiter {found:?} at byte {offset}")]
    Unbalanced { found: String, offset: usize },
    #[error("unterminated {what} starting at byte {offset}")]
    Unterminated { what: &'static str, offset: usize },
}

const INFORMAL_DIR: &str = "informal";
const LEAN_DIR: &str = "lean";
const ISABELLE_DIR: &str = "isabelle";
/// Optional `id<TAB>valid|test` lines.
const SPLIT_FILE: &str = "splits.tsv";

/// Loads every theorem present in all three representation directories.
/// Incomplete, unreadable or unextractable ids end up in the load report.
pub fn load_corpus(root: &Path) -> Result<(Corpus, LoadReport), CorpusError> {
    if !root.is_dir() {
        return Err(CorpusError::MissingRoot(root.to_path_buf()));
    }
    let informal = list_ids(&root.join(INFORMAL_DIR), "txt")?;
    let lean = list_ids(&root.join(LEAN_DIR), "lean")?;
    let isabelle = list_ids(&root.join(ISABELLE_DIR), "thy")?;
    let splits = read_splits(&root.join(SPLIT_FILE))?;

    let all: BTreeSet<&String> = informal.keys().chain(lean.keys()).chain(isabelle.keys()).collect();
    let mut entries = Vec::new();
    let mut report = LoadReport::default();

    for id in all {
        let missing = if !informal.contains_key(id) {
            Some(ExclusionReason::MissingInformal)
        } else if !lean.contains_key(id) {
            Some(ExclusionReason::MissingLean)
        } else if !isabelle.contains_key(id) {
            Some(ExclusionReason::MissingIsabelle)
        } else {
            None
        };
        if let Some(reason) = missing {
            report.excluded.push((id.clone(), reason));
            continue;
        }
        match load_entry(id, &informal[id], &lean[id], &isabelle[id]) {
            Ok(mut entry) => {
                entry.split = splits.get(id).copied().unwrap_or_default();
                entries.push(entry);
            }
            Err(reason) => report.excluded.push((id.clone(), reason)),
        }
    }

    Ok((
        Corpus {
            entries,
            root: root.to_path_buf(),
        },
        report,
    ))
}

fn load_entry(id: &str, informal: &Path, lean: &Path, isabelle: &Path) -> Result<TheoremSources, ExclusionReason> {
    let read = |p: &Path| {
        fs::read_to_string(p).map_err(|e| ExclusionReason::Unreadable {
            file: p.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            error: e.to_string(),
        })
    };
    let informal = read(informal)?.trim().to_string();
    if informal.is_empty() {
        return Err(ExclusionReason::EmptyInformal);
    }
    let lean_statement =
        extract_lean_statement(&read(lean)?).map_err(|e| ExclusionReason::Extraction(format!("lean/{id}: {e}")))?;
    let isabelle_statement = extract_isabelle_statement(&read(isabelle)?)
        .map_err(|e| ExclusionReason::Extraction(format!("isabelle/{id}: {e}")))?;
    Ok(TheoremSources {
        id: id.to_string(),
        informal,
        lean_statement,
        isabelle_statement,
        split: Split::Unspecified,
    })
}

fn list_ids(dir: &Path, ext: &str) -> Result<BTreeMap<String, PathBuf>, CorpusError> {
    let mut out = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    let rd = fs::read_dir(dir).map_err(|source| CorpusError::List {
        path: dir.to_path_buf(),
        source,
    })?;
    for item in rd {
        let item = item.map_err(|source| CorpusError::List {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = item.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            if !stem.is_empty() {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

fn read_splits(path: &Path) -> Result<BTreeMap<String, Split>, CorpusError> {
    let mut out = BTreeMap::new();
    let Ok(text) = fs::read_to_string(path) else {
        return Ok(out);
    };
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = line
            .split_once('\t')
            .and_then(|(id, s)| Split::parse(s).map(|s| (id.trim().to_string(), s)));
        match parsed {
            Some((id, split)) => {
                out.insert(id, split);
            }
            None => {
                return Err(CorpusError::SplitFile {
                    line: n + 1,
                    text: line.to_string(),
                })
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Lean

const LEAN_DECL: &[&str] = &["theorem", "lemma"];
/// Depth-0 words that end a declaration without a proof.
const LEAN_STOP: &[&str] = &[
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

fn is_lean_ident(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '\'' | '.' | '!' | '?')
}

fn lean_closer(open: char) -> Option<char> {
    Some(match open {
        '(' => ')',
        '[' => ']',
        '{' => '}',
        '⟨' => '⟩',
        '⦃' => '⦄',
        _ => return None,
    })
}

fn is_lean_close(c: char) -> bool {
    matches!(c, ')' | ']' | '}' | '⟩' | '⦄')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LeanTok<'a> {
    Word(&'a str),
    Assign,
    Open(char),
    Close(char),
    Other,
}

/// Lean token stream with byte offsets; comments and string literals are skipped.
struct LeanLexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> LeanLexer<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn next_tok(&mut self) -> Option<Result<(usize, LeanTok<'a>), ExtractionError>> {
        loop {
            let rest = self.rest();
            let c = rest.chars().next()?;
            let start = self.pos;
            if c.is_whitespace() {
                self.pos += c.len_utf8();
                continue;
            }
            if rest.starts_with("--") {
                self.pos += rest.find('\n').unwrap_or(rest.len());
                continue;
            }
            if rest.starts_with("/-") {
                let mut depth = 0usize;
                let mut i = 0;
                let bytes = rest.as_bytes();
                loop {
                    if i + 1 >= bytes.len() {
                        return Some(Err(ExtractionError::Unterminated {
                            what: "block comment",
                            offset: start,
                        }));
                    }
                    if bytes[i] == b'/' && bytes[i + 1] == b'-' {
                        depth += 1;
                        i += 2;
                    } else if bytes[i] == b'-' && bytes[i + 1] == b'/' {
                        depth -= 1;
                        i += 2;
                        if depth == 0 {
                            break;
                        }
                    } else {
                        i += 1;
                    }
                }
                self.pos += i;
                continue;
            }
            if c == '"' {
                let mut escaped = false;
                let mut end = None;
                for (i, ch) in rest.char_indices().skip(1) {
                    if escaped {
                        escaped = false;
                    } else if ch == '\\' {
                        escaped = true;
                    } else if ch == '"' {
                        end = Some(i + 1);
                        break;
                    }
                }
                match end {
                    Some(e) => {
                        self.pos += e;
                        return Some(Ok((start, LeanTok::Other)));
                    }
                    None => {
                        return Some(Err(ExtractionError::Unterminated {
                            what: "string literal",
                            offset: start,
                        }))
                    }
                }
            }
            if rest.starts_with(":=") {
                self.pos += 2;
                return Some(Ok((start, LeanTok::Assign)));
            }
            if lean_closer(c).is_some() {
                self.pos += c.len_utf8();
                return Some(Ok((start, LeanTok::Open(c))));
            }
            if is_lean_close(c) {
                self.pos += c.len_utf8();
                return Some(Ok((start, LeanTok::Close(c))));
            }
            if is_lean_ident(c) {
                let len = rest
                    .char_indices()
                    .find(|&(_, ch)| !is_lean_ident(ch))
                    .map_or(rest.len(), |(i, _)| i);
                self.pos += len;
                return Some(Ok((start, LeanTok::Word(&rest[..len]))));
            }
            self.pos += c.len_utf8();
            return Some(Ok((start, LeanTok::Other)));
        }
    }
}

/// Cuts a Lean source down to its first `theorem`/`lemma` declaration,
/// stopping right before the depth-0 `:=` (or a depth-0 `by`).
pub fn extract_lean_statement(source: &str) -> Result<String, ExtractionError> {
    let mut lexer = LeanLexer::new(source);
    let start = loop {
        match lexer.next_tok() {
            None => return Err(ExtractionError::NoDeclaration),
            Some(Err(e)) => return Err(e),
            Some(Ok((off, LeanTok::Word(w)))) if LEAN_DECL.contains(&w) => break off,
            Some(Ok(_)) => {}
        }
    };

    let mut stack: Vec<char> = Vec::new();
    let mut end = source.len();
    while let Some(tok) = lexer.next_tok() {
        let (off, tok) = tok?;
        match tok {
            LeanTok::Open(c) => stack.push(c),
            LeanTok::Close(c) => match stack.pop() {
                Some(open) if lean_closer(open) == Some(c) => {}
                _ => {
                    return Err(ExtractionError::Unbalanced {
                        found: c.to_string(),
                        offset: off,
                    })
                }
            },
            LeanTok::Assign if stack.is_empty() => {
                end = off;
                break;
            }
            LeanTok::Word(w) if stack.is_empty() && (w == "by" || LEAN_STOP.contains(&w)) => {
                end = off;
                break;
            }
            _ => {}
        }
    }
    if end == source.len() {
        if let Some(open) = stack.last() {
            return Err(ExtractionError::Unbalanced {
                found: open.to_string(),
                offset: source.len(),
            });
        }
    }
    Ok(source[start..end].trim_end().to_string())
}

// ---------------------------------------------------------------------------
// Isabelle

const ISABELLE_DECL: &[&str] = &["theorem", "lemma"];
/// Words that start a proof (or the next declaration) when they occur unquoted.
const ISABELLE_STOP: &[&str] = &[
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

fn is_isabelle_ident(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '\'' | '.')
}

/// Visits unquoted Isabelle words, skipping `"..."` strings, cartouches and
/// `(* *)` comments. The callback returns `true` to stop.
fn scan_isabelle_words(
    src: &str,
    from: usize,
    mut f: impl FnMut(usize, &str) -> bool,
) -> Result<bool, ExtractionError> {
    let mut pos = from;
    while pos < src.len() {
        let rest = &src[pos..];
        let c = rest.chars().next().unwrap_or(' ');
        if rest.starts_with("(*") {
            pos += skip_nested(rest, "(*", "*)").ok_or(ExtractionError::Unterminated {
                what: "comment",
                offset: pos,
            })?;
        } else if c == '"' {
            let mut escaped = false;
            let mut end = None;
            for (i, ch) in rest.char_indices().skip(1) {
                if escaped {
                    escaped = false;
                } else if ch == '\\' {
                    escaped = true;
                } else if ch == '"' {
                    end = Some(i + 1);
                    break;
                }
            }
            pos += end.ok_or(ExtractionError::Unterminated {
                what: "quoted term",
                offset: pos,
            })?;
        } else if c == '‹' {
            pos += skip_nested(rest, "‹", "›").ok_or(ExtractionError::Unterminated {
                what: "cartouche",
                offset: pos,
            })?;
        } else if rest.starts_with("\\<open>") {
            pos += skip_nested(rest, "\\<open>", "\\<close>").ok_or(ExtractionError::Unterminated {
                what: "cartouche",
                offset: pos,
            })?;
        } else if is_isabelle_ident(c) {
            let len = rest
                .char_indices()
                .find(|&(_, ch)| !is_isabelle_ident(ch))
                .map_or(rest.len(), |(i, _)| i);
            if f(pos, &rest[..len]) {
                return Ok(true);
            }
            pos += len;
        } else {
            pos += c.len_utf8();
        }
    }
    Ok(false)
}

/// Length of the nested region opening at the start of `s`.
fn skip_nested(s: &str, open: &str, close: &str) -> Option<usize> {
    let mut depth = 0usize;
    let mut i = 0;
    while i < s.len() {
        let rest = &s[i..];
        if rest.starts_with(open) {
            depth += 1;
            i += open.len();
        } else if rest.starts_with(close) {
            depth -= 1;
            i += close.len();
            if depth == 0 {
                return Some(i);
            }
        } else {
            i += rest.chars().next().map_or(1, char::len_utf8);
        }
    }
    None
}

/// Cuts an Isabelle source down to its first `theorem`/`lemma` declaration,
/// stopping before the first unquoted proof keyword.
pub fn extract_isabelle_statement(source: &str) -> Result<String, ExtractionError> {
    let mut start = None;
    scan_isabelle_words(source, 0, |off, w| {
        if ISABELLE_DECL.contains(&w) {
            start = Some(off);
            true
        } else {
            false
        }
    })?;
    let start = start.ok_or(ExtractionError::NoDeclaration)?;

    let head_len = source[start..]
        .find(|c: char| !is_isabelle_ident(c))
        .unwrap_or(source.len() - start);
    let mut end = source.len();
    scan_isabelle_words(source, start + head_len, |off, w| {
        if ISABELLE_STOP.contains(&w) {
            end = off;
            true
        } else {
            false
        }
    })?;
    Ok(source[start..end].trim_end().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lean_strips_proof() {
        assert_eq!(
            extract_lean_statement("theorem foo : 1 + 1 = 2 := by decide").unwrap(),
            "theorem foo : 1 + 1 = 2"
        );
        assert_eq!(
            extract_lean_statement("theorem bar (x : ℕ) (h : x > 0) : x ≠ 0 := by omega").unwrap(),
            "theorem bar (x : ℕ) (h : x > 0) : x ≠ 0"
        );
    }

    #[test]
    fn lean_nested_assign_is_kept() {
        let src = "theorem baz (f : ℕ → ℕ) (h : f = fun x => x + 1)\n  (g : ℕ := 3) : f 1 = 2 := by\n  simp [h]";
        assert_eq!(
            extract_lean_statement(src).unwrap(),
            "theorem baz (f : ℕ → ℕ) (h : f = fun x => x + 1)\n  (g : ℕ := 3) : f 1 = 2"
        );
    }

    #[test]
    fn lean_drops_header_attributes_and_comments() {
        let src =
            "import Mathlib\nopen Real\n\n/-- doc := comment -/\n@[simp]\ntheorem t -- by here\n : True := trivial";
        assert_eq!(extract_lean_statement(src).unwrap(), "theorem t -- by here\n : True");
    }

    #[test]
    fn lean_by_without_assign() {
        assert_eq!(
            extract_lean_statement("lemma x : a = a\nby rfl").unwrap(),
            "lemma x : a = a"
        );
    }

    #[test]
    fn lean_errors() {
        assert_eq!(
            extract_lean_statement("def f := 1"),
            Err(ExtractionError::NoDeclaration)
        );
        assert!(matches!(
            extract_lean_statement("theorem t (x : ℕ)) : x = x := rfl"),
            Err(ExtractionError::Unbalanced { .. })
        ));
        assert!(matches!(
            extract_lean_statement("theorem t (x : ℕ : x = x"),
            Err(ExtractionError::Unbalanced { .. })
        ));
    }

    #[test]
    fn lean_keyword_in_identifier_is_not_a_decl() {
        let src = "def theorem_count := 3\ntheorem real_one : theorem_count = 3 := rfl";
        assert_eq!(
            extract_lean_statement(src).unwrap(),
            "theorem real_one : theorem_count = 3"
        );
    }

    #[test]
    fn isabelle_strips_proof() {
        assert_eq!(
            extract_isabelle_statement(r#"theorem t: "1+1 = (2::nat)" by simp"#).unwrap(),
            r#"theorem t: "1+1 = (2::nat)""#
        );
        assert_eq!(
            extract_isabelle_statement(r#"lemma l: fixes x::real assumes "x > 0" shows "x ≠ 0" using assms by auto"#)
                .unwrap(),
            r#"lemma l: fixes x::real assumes "x > 0" shows "x ≠ 0""#
        );
    }

    #[test]
    fn isabelle_quoted_by_is_ignored() {
        let src = "theory T imports Main begin\n(* lemma fake: \"x\" *)\ntheorem q:\n  shows \"f by = (sorry::nat)\"\nproof -\n  show ?thesis sorry\nqed\nend";
        assert_eq!(
            extract_isabelle_statement(src).unwrap(),
            "theorem q:\n  shows \"f by = (sorry::nat)\""
        );
    }

    #[test]
    fn isabelle_errors() {
        assert_eq!(
            extract_isabelle_statement("definition f where \"f = 1\""),
            Err(ExtractionError::NoDeclaration)
        );
        assert!(matches!(
            extract_isabelle_statement("lemma l: \"x = x"),
            Err(ExtractionError::Unterminated { .. })
        ));
    }

    #[test]
    fn load_report_tsv() {
        let r = LoadReport {
            excluded: vec![("c".into(), ExclusionReason::MissingIsabelle)],
        };
        assert_eq!(r.to_tsv(), "c\tmissing-isabelle\n");
    }
}
