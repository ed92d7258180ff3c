//! Chat transcripts for the three prompting stages, candidate extraction from
//! model answers, and checker-error classification.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TheoremSources;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranscriptError {
    #[error("message {0} has empty content")]
    EmptyContent(usize),
    #[error("system message at position {0}; only the first message may be a system message")]
    MisplacedSystem(usize),
    #[error("message {index} has role {found:?}, expected {expected:?}")]
    RoleOrder { index: usize, expected: Role, found: Role },
    #[error("transcript must end with a {0:?} message")]
    BadEnding(Role),
}

/// Ordered chat messages: an optional leading system message, then user and
/// assistant turns strictly alternating, starting with a user turn.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTranscript {
    messages: Vec<ChatMessage>,
}

impl ChatTranscript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_messages(messages: Vec<ChatMessage>) -> Result<Self, TranscriptError> {
        let t = Self { messages };
        t.validate()?;
        Ok(t)
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn last_role(&self) -> Option<Role> {
        self.messages.last().map(|m| m.role)
    }

    /// Appends a message, rejecting anything that would break the role order.
    pub fn push(&mut self, message: ChatMessage) -> Result<(), TranscriptError> {
        let index = self.messages.len();
        if message.content.is_empty() {
            return Err(TranscriptError::EmptyContent(index));
        }
        let expected = self.expected_next();
        if message.role == Role::System && index != 0 {
            return Err(TranscriptError::MisplacedSystem(index));
        }
        if message.role != Role::System && message.role != expected {
            return Err(TranscriptError::RoleOrder {
                index,
                expected,
                found: message.role,
            });
        }
        self.messages.push(message);
        Ok(())
    }

    fn expected_next(&self) -> Role {
        match self.messages.last().map(|m| m.role) {
            None | Some(Role::System) | Some(Role::Assistant) => Role::User,
            Some(Role::User) => Role::Assistant,
        }
    }

    pub fn validate(&self) -> Result<(), TranscriptError> {
        let mut rebuilt = ChatTranscript::new();
        for m in &self.messages {
            rebuilt.push(m.clone())?;
        }
        Ok(())
    }

    /// True when the transcript can be sent for completion.
    pub fn is_ready(&self) -> bool {
        self.last_role() == Some(Role::User)
    }

    /// Concatenation of all message contents, as a model echoing its input would see it.
    pub fn render_plain(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// Keeps the system message, the opening user message and the most recent
    /// `keep` failed attempts (assistant answer plus feedback turn). A note in
    /// the opening message records how many attempts were dropped.
    pub fn windowed(&self, keep: usize) -> ChatTranscript {
        let head = match self.messages.first() {
            Some(m) if m.role == Role::System => 2,
            _ => 1,
        };
        if self.messages.len() <= head {
            return self.clone();
        }
        let pairs = (self.messages.len() - head) / 2;
        if pairs <= keep {
            return self.clone();
        }
        let omitted = pairs - keep;
        let mut messages = self.messages[..head].to_vec();
        if let Some(opening) = messages.last_mut() {
            opening.content = format!("{}\n\n[{omitted} previous attempts omitted]", opening.content);
        }
        messages.extend_from_slice(&self.messages[head + 2 * omitted..]);
        ChatTranscript { messages }
    }
}

/// Checker failure classes targeted by the refined prompt, in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCategory {
    ComplexNumbers,
    FiniteSumOrProduct,
    PrimeNumbers,
    FloorFunction,
    Typing,
    Other,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 6] = [
        ErrorCategory::ComplexNumbers,
        ErrorCategory::FiniteSumOrProduct,
        ErrorCategory::PrimeNumbers,
        ErrorCategory::FloorFunction,
        ErrorCategory::Typing,
        ErrorCategory::Other,
    ];

    /// Categories that carry a guidance paragraph.
    pub const GUIDED: [ErrorCategory; 5] = [
        ErrorCategory::ComplexNumbers,
        ErrorCategory::FiniteSumOrProduct,
        ErrorCategory::PrimeNumbers,
        ErrorCategory::FloorFunction,
        ErrorCategory::Typing,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            ErrorCategory::ComplexNumbers => "complex_numbers",
            ErrorCategory::FiniteSumOrProduct => "finite_sum_or_product",
            ErrorCategory::PrimeNumbers => "prime_numbers",
            ErrorCategory::FloorFunction => "floor_function",
            ErrorCategory::Typing => "typing",
            ErrorCategory::Other => "other",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

/// Keywords per category. A keyword matches case-insensitively when it starts
/// at a word boundary, so `sum` hits "sum_f_R0" but not "assumption".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeywordSets(pub BTreeMap<ErrorCategory, Vec<String>>);

impl Default for KeywordSets {
    fn default() -> Self {
        let set = |words: &[&str]| words.iter().map(|w| w.to_string()).collect::<Vec<_>>();
        let mut m = BTreeMap::new();
        m.insert(
            ErrorCategory::ComplexNumbers,
            set(&["complex", "cplx", "cmod", "cexp", "imaginary", "ccomplex"]),
        );
        m.insert(
            ErrorCategory::FiniteSumOrProduct,
            set(&["sum", "bigop", "prod", "\\big", "finset", "fold_right", "fold_left"]),
        );
        m.insert(
            ErrorCategory::PrimeNumbers,
            set(&["prime", "coprime", "znumtheory", "rel_prime"]),
        );
        m.insert(
            ErrorCategory::FloorFunction,
            set(&["floor", "ceil", "int_part", "frac_part", "zfloor"]),
        );
        m.insert(
            ErrorCategory::Typing,
            set(&[
                "has type",
                "expected to have type",
                "type mismatch",
                "cannot be applied",
                "unable to unify",
                "cannot infer",
                "is not a type",
                "cannot coerce",
                "coercion",
                "ill-typed",
            ]),
        );
        KeywordSets(m)
    }
}

fn keyword_hit(haystack_lower: &str, keyword: &str) -> bool {
    let needle = keyword.to_lowercase();
    if needle.is_empty() {
        return false;
    }
    let mut from = 0;
    while let Some(i) = haystack_lower[from..].find(&needle) {
        let at = from + i;
        let boundary = haystack_lower[..at]
            .chars()
            .next_back()
            .is_none_or(|c| !c.is_alphanumeric());
        if boundary {
            return true;
        }
        from = at + needle.len();
    }
    false
}

/// First category, in enum order, whose keyword set matches; `Other` otherwise.
pub fn classify_error(message: &str, keywords: &KeywordSets) -> ErrorCategory {
    let lower = message.to_lowercase();
    ErrorCategory::ALL
        .into_iter()
        .filter(|c| *c != ErrorCategory::Other)
        .find(|c| {
            keywords
                .0
                .get(c)
                .is_some_and(|ks| ks.iter().any(|k| keyword_hit(&lower, k)))
        })
        .unwrap_or(ErrorCategory::Other)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodeExtractionError {
    #[error("response contains no code block and does not start with Theorem or Lemma")]
    NoCandidate,
    #[error("last code block in the response is empty")]
    EmptyBlock,
}

fn fence_len(line: &str) -> usize {
    line.trim_start().chars().take_while(|&c| c == '`').count()
}

/// Contents of the last fenced code block, without fences and language tag.
/// Without a fence, a response starting with `Theorem`/`Lemma` is taken whole.
pub fn extract_code(response: &str) -> Result<String, CodeExtractionError> {
    let mut blocks: Vec<Vec<&str>> = Vec::new();
    let mut open: Option<(usize, Vec<&str>)> = None;
    for line in response.lines() {
        let fence = fence_len(line);
        match open.take() {
            None => {
                if fence >= 3 {
                    open = Some((fence, Vec::new()));
                }
            }
            Some((width, mut body)) => {
                if fence >= width && line.trim().chars().all(|c| c == '`') {
                    blocks.push(body);
                } else {
                    body.push(line);
                    open = Some((width, body));
                }
            }
        }
    }
    if let Some((_, body)) = open {
        blocks.push(body);
    }
    if let Some(last) = blocks.last() {
        let text = last.join("\n").trim().to_string();
        return if text.is_empty() {
            Err(CodeExtractionError::EmptyBlock)
        } else {
            Ok(text)
        };
    }
    let trimmed = response.trim();
    if trimmed.starts_with("Theorem") || trimmed.starts_with("Lemma") {
        Ok(trimmed.to_string())
    } else {
        Err(CodeExtractionError::NoCandidate)
    }
}

/// Breaks any run of three or more backticks so embedded text cannot open a
/// code fence.
pub fn escape_fences(text: &str) -> String {
    text.replace("``", "`\u{200B}`")
}

/// Single-pass `{{name}}` substitution; substituted values are not rescanned.
pub fn render_template(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(i) = rest.find("{{") {
        out.push_str(&rest[..i]);
        let after = &rest[i + 2..];
        match after.find("}}") {
            Some(j) => {
                let name = after[..j].trim();
                match vars.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => out.push_str(&rest[i..i + 4 + j]),
                }
                rest = &after[j + 2..];
            }
            None => {
                out.push_str(&rest[i..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Error)]
#[error("cannot read template {path}: {source}")]
pub struct TemplateError {
    pub path: String,
    #[source]
    pub source: io::Error,
}

/// Prompt texts. Defaults are compiled in; a template directory may override
/// any of `system.txt`, `user.txt`, `feedback.txt` and `guidance/<category>.txt`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub system: String,
    pub user: String,
    pub feedback: String,
    pub guidance: BTreeMap<ErrorCategory, String>,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        let mut guidance = BTreeMap::new();
        guidance.insert(
            ErrorCategory::ComplexNumbers,
            include_str!("../templates/guidance/complex_numbers.txt").to_string(),
        );
        guidance.insert(
            ErrorCategory::FiniteSumOrProduct,
            include_str!("../templates/guidance/finite_sum_or_product.txt").to_string(),
        );
        guidance.insert(
            ErrorCategory::PrimeNumbers,
            include_str!("../templates/guidance/prime_numbers.txt").to_string(),
        );
        guidance.insert(
            ErrorCategory::FloorFunction,
            include_str!("../templates/guidance/floor_function.txt").to_string(),
        );
        guidance.insert(
            ErrorCategory::Typing,
            include_str!("../templates/guidance/typing.txt").to_string(),
        );
        Self {
            system: include_str!("../templates/system.txt").to_string(),
            user: include_str!("../templates/user.txt").to_string(),
            feedback: include_str!("../templates/feedback.txt").to_string(),
            guidance,
        }
    }
}

impl PromptTemplates {
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut t = Self::default();
        let read = |rel: &str, slot: &mut String| -> Result<(), TemplateError> {
            let path = dir.join(rel);
            match fs::read_to_string(&path) {
                Ok(s) => {
                    *slot = s;
                    Ok(())
                }
                Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(()),
                Err(source) => Err(TemplateError {
                    path: path.display().to_string(),
                    source,
                }),
            }
        };
        read("system.txt", &mut t.system)?;
        read("user.txt", &mut t.user)?;
        read("feedback.txt", &mut t.feedback)?;
        for cat in ErrorCategory::GUIDED {
            let slot = t.guidance.entry(cat).or_default();
            read(&format!("guidance/{}.txt", cat.slug()), slot)?;
        }
        Ok(t)
    }

    /// Combined guidance block for the refined prompt; empty when every
    /// paragraph is empty.
    pub fn guidance_block(&self) -> String {
        let paragraphs: Vec<&str> = ErrorCategory::GUIDED
            .iter()
            .filter_map(|c| self.guidance.get(c))
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .collect();
        if paragraphs.is_empty() {
            String::new()
        } else {
            format!("\nAvoid these common errors:\n\n{}", paragraphs.join("\n\n"))
        }
    }

    fn user_message(&self, sources: &TheoremSources, preamble: &str) -> String {
        let informal = escape_fences(&sources.informal);
        let lean = escape_fences(&sources.lean_statement);
        let isabelle = escape_fences(&sources.isabelle_statement);
        let preamble = escape_fences(preamble.trim());
        render_template(
            &self.user,
            &[
                ("informal", &informal),
                ("lean", &lean),
                ("isabelle", &isabelle),
                ("preamble", &preamble),
            ],
        )
        .trim_end()
        .to_string()
    }

    fn build(&self, sources: &TheoremSources, preamble: &str, guidance: &str) -> ChatTranscript {
        let system = render_template(&self.system, &[("guidance", guidance)])
            .trim_end()
            .to_string();
        ChatTranscript {
            messages: vec![
                ChatMessage::new(Role::System, system),
                ChatMessage::new(Role::User, self.user_message(sources, preamble)),
            ],
        }
    }

    /// One-shot prompt: task description plus the three source representations.
    pub fn stage1(&self, sources: &TheoremSources, preamble: &str) -> ChatTranscript {
        self.build(sources, preamble, "")
    }

    /// Same user turn as [`Self::stage1`], with the guidance paragraphs added
    /// to the system message.
    pub fn stage3(&self, sources: &TheoremSources, preamble: &str) -> ChatTranscript {
        self.build(sources, preamble, &self.guidance_block())
    }

    /// Appends a user turn quoting the rejected candidate and the checker
    /// message. `prior` must end with the model's failed answer.
    pub fn feedback_turn(
        &self,
        prior: &ChatTranscript,
        failed_code: &str,
        error_message: &str,
    ) -> Result<ChatTranscript, TranscriptError> {
        if prior.last_role() != Some(Role::Assistant) {
            return Err(TranscriptError::BadEnding(Role::Assistant));
        }
        let candidate = if failed_code.is_empty() {
            "(no statement could be extracted)"
        } else {
            failed_code
        };
        let content = render_template(&self.feedback, &[("candidate", candidate), ("error", error_message)])
            .trim_end()
            .to_string();
        let mut next = prior.clone();
        next.push(ChatMessage::new(Role::User, content))?;
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sources(id: &str, informal: &str) -> TheoremSources {
        TheoremSources {
            id: id.into(),
            informal: informal.into(),
            lean_statement: format!("theorem {id} : (2 : ℕ) + 2 = 4"),
            isabelle_statement: format!("theorem {id}: \"(2::nat) + 2 = 4\""),
            split: Default::default(),
        }
    }

    #[test]
    fn stage1_embeds_sources() {
        let t = PromptTemplates::default();
        let s = sources("mathd_1", "Show that two plus two is four.");
        let tr = t.stage1(&s, "Require Import Reals.");
        assert_eq!(tr.len(), 2);
        assert!(tr.is_ready());
        let user = &tr.messages()[1].content;
        assert!(user.contains(&s.informal));
        assert!(user.contains(&s.lean_statement));
        assert!(user.contains(&s.isabelle_statement));
        assert!(user.contains("Require Import Reals."));
        assert!(tr.messages()[0].content.contains("code block"));
    }

    #[test]
    fn stage3_adds_guidance_only_to_system() {
        let t = PromptTemplates::default();
        let s = sources("a", "x");
        let one = t.stage1(&s, "");
        let three = t.stage3(&s, "");
        assert_eq!(one.messages()[1], three.messages()[1]);
        assert_ne!(one.messages()[0], three.messages()[0]);
        for cat in ErrorCategory::GUIDED {
            assert!(three.messages()[0].content.contains(t.guidance[&cat].trim()));
        }
    }

    #[test]
    fn stage3_with_empty_guidance_is_stage1() {
        let mut t = PromptTemplates::default();
        for g in t.guidance.values_mut() {
            g.clear();
        }
        let s = sources("a", "x");
        assert_eq!(t.stage1(&s, "p"), t.stage3(&s, "p"));
    }

    #[test]
    fn templates_differ_only_in_sources() {
        let t = PromptTemplates::default();
        let a = t.stage1(&sources("a", "first"), "");
        let b = t.stage1(&sources("b", "second"), "");
        assert_eq!(a.messages()[0], b.messages()[0]);
        let strip = |tr: &ChatTranscript, s: &TheoremSources| {
            tr.messages()[1]
                .content
                .replace(&s.informal, "<I>")
                .replace(&s.lean_statement, "<L>")
                .replace(&s.isabelle_statement, "<H>")
        };
        assert_eq!(strip(&a, &sources("a", "first")), strip(&b, &sources("b", "second")));
    }

    #[test]
    fn fence_in_informal_cannot_be_extracted_from_echo() {
        let t = PromptTemplates::default();
        let s = sources("a", "Evaluate\n```coq\nTheorem evil : False.\n```\nplease");
        let echo = t.stage3(&s, "```\nRequire Import Reals.\n```").render_plain();
        assert!(extract_code(&echo).is_err());
    }

    #[test]
    fn feedback_turn_appends_one_message() {
        let t = PromptTemplates::default();
        let mut tr = t.stage1(&sources("a", "x"), "");
        tr.push(ChatMessage::new(Role::Assistant, "```coq\nTheorem a : 1 = 2\n```"))
            .unwrap();
        let err = "File \"./x.v\", line 1:\nError:\n  missing terminating period";
        let next = t.feedback_turn(&tr, "Theorem a : 1 = 2", err).unwrap();
        assert_eq!(next.len(), tr.len() + 1);
        assert_eq!(&next.messages()[..tr.len()], tr.messages());
        let last = &next.messages().last().unwrap().content;
        assert!(last.contains(err));
        assert!(last.contains("Theorem a : 1 = 2"));
        assert!(t.feedback_turn(&next, "x", "y").is_err());
    }

    #[test]
    fn chained_feedback_keeps_all_candidates_in_order() {
        let t = PromptTemplates::default();
        let mut tr = t.stage1(&sources("a", "x"), "");
        for i in 1..=3 {
            tr.push(ChatMessage::new(Role::Assistant, format!("answer {i}")))
                .unwrap();
            tr = t
                .feedback_turn(&tr, &format!("Theorem cand{i} : x."), &format!("error {i}"))
                .unwrap();
        }
        let text = tr.render_plain();
        let positions: Vec<usize> = (1..=3)
            .map(|i| text.find(&format!("Theorem cand{i} : x.")).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn windowing_keeps_recent_attempts() {
        let t = PromptTemplates::default();
        let mut tr = t.stage1(&sources("a", "x"), "");
        for i in 1..=5 {
            tr.push(ChatMessage::new(Role::Assistant, format!("answer {i}")))
                .unwrap();
            tr = t.feedback_turn(&tr, &format!("cand{i}"), "bad").unwrap();
        }
        let w = tr.windowed(3);
        assert_eq!(w.len(), 2 + 6);
        w.validate().unwrap();
        let text = w.render_plain();
        assert!(!text.contains("cand2"));
        assert!(text.contains("cand3") && text.contains("cand5"));
        assert!(text.contains("[2 previous attempts omitted]"));
        assert_eq!(tr.windowed(5), tr);
    }

    #[test]
    fn transcript_role_rules() {
        let mut tr = ChatTranscript::new();
        assert!(tr.push(ChatMessage::new(Role::Assistant, "x")).is_err());
        tr.push(ChatMessage::new(Role::System, "s")).unwrap();
        assert!(tr.push(ChatMessage::new(Role::System, "s")).is_err());
        assert!(tr.push(ChatMessage::new(Role::User, "")).is_err());
        tr.push(ChatMessage::new(Role::User, "u")).unwrap();
        assert!(tr.push(ChatMessage::new(Role::User, "u")).is_err());
    }

    #[test]
    fn extract_code_cases() {
        assert_eq!(
            extract_code("Here it is:\n```coq\nTheorem t : 1 = 1.\n```").unwrap(),
            "Theorem t : 1 = 1."
        );
        assert_eq!(
            extract_code("```lean\ntheorem x : True\n```\nso:\n```coq\nLemma y : True.\n```\n").unwrap(),
            "Lemma y : True."
        );
        assert_eq!(extract_code("I cannot do this."), Err(CodeExtractionError::NoCandidate));
        assert_eq!(extract_code("  Theorem t : 1 = 1.\n").unwrap(), "Theorem t : 1 = 1.");
        assert_eq!(extract_code("```\n\n```"), Err(CodeExtractionError::EmptyBlock));
        // truncated answer with an unclosed fence
        assert_eq!(
            extract_code("```coq\nTheorem t : 2 = 2.").unwrap(),
            "Theorem t : 2 = 2."
        );
    }

    #[test]
    fn classify_examples() {
        let k = KeywordSets::default();
        assert_eq!(
            classify_error("The term x has type R while it is expected to have type nat", &k),
            ErrorCategory::Typing
        );
        assert_eq!(classify_error("", &k), ErrorCategory::Other);
        assert_eq!(classify_error("No such assumption.", &k), ErrorCategory::Other);
        assert_eq!(
            classify_error("The reference floor was not found", &k),
            ErrorCategory::FloorFunction
        );
        // enum order breaks ties
        assert_eq!(
            classify_error("prime has type nat -> Prop while complex expected", &k),
            ErrorCategory::ComplexNumbers
        );
    }

    #[test]
    fn render_is_single_pass() {
        assert_eq!(
            render_template("a {{x}} b {{y}} {{z}}", &[("x", "{{y}}"), ("y", "Y")]),
            "a {{y}} b Y {{z}}"
        );
    }
}
