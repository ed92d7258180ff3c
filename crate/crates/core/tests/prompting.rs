use formalport::corpus::{Split, TheoremSources};
use formalport::prompting::{extract_code, ChatMessage, PromptTemplates, Role};
use proptest::prelude::*;

fn sources(id: &str, informal: &str) -> TheoremSources {
    TheoremSources {
        id: id.into(),
        informal: informal.into(),
        lean_statement: format!("theorem {id} (x : ℕ) (h : x = 2) : x + x = 4"),
        isabelle_statement: format!("theorem {id}: fixes x :: nat assumes \"x = 2\" shows \"x + x = 4\""),
        split: Split::Unspecified,
    }
}

const PREAMBLE: &str = "Require Import Reals.";

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof![
            "[a-zA-Z0-9 .,:=()]{1,12}",
            Just("```".to_string()),
            Just("```coq\n".to_string()),
            Just("\n".to_string()),
            Just("Theorem t : 1 = 1.".to_string()),
            Just("{{error}}".to_string()),
            Just("ℕ ≠ √".to_string()),
        ],
        1..12,
    )
    .prop_map(|parts| parts.concat())
}

proptest! {
    #[test]
    fn feedback_appends_exactly_one_turn(code in text(), err in text(), answers in prop::collection::vec(text(), 1..6)) {
        let t = PromptTemplates::default();
        let mut transcript = t.stage1(&sources("t", "informal"), PREAMBLE);
        for answer in &answers {
            transcript.push(ChatMessage::new(Role::Assistant, answer.clone())).unwrap();
            let next = t.feedback_turn(&transcript, &code, &err).unwrap();
            prop_assert_eq!(next.len(), transcript.len() + 1);
            prop_assert_eq!(&next.messages()[..transcript.len()], transcript.messages());
            let last = &next.messages()[transcript.len()];
            prop_assert_eq!(last.role, Role::User);
            prop_assert!(last.content.contains(code.trim_end()));
            prop_assert!(last.content.contains(err.trim_end()));
            prop_assert!(next.validate().is_ok());
            transcript = next;
        }
    }

    #[test]
    fn echoed_prompts_never_yield_a_candidate(informal in text()) {
        let t = PromptTemplates::default();
        let s = sources("t", &informal);
        for transcript in [t.stage1(&s, PREAMBLE), t.stage3(&s, PREAMBLE)] {
            prop_assert!(extract_code(&transcript.render_plain()).is_err());
            for m in transcript.messages() {
                prop_assert!(extract_code(&m.content).is_err());
            }
        }
    }

    #[test]
    fn templates_differ_only_in_sources(a in "[a-z]{3,8}", b in "[a-z]{3,8}", ia in text(), ib in text()) {
        let t = PromptTemplates::default();
        let (sa, sb) = (sources(&a, &ia), sources(&b, &ib));
        let strip = |s: &TheoremSources| {
            let mut out = t.stage1(s, PREAMBLE).render_plain();
            for field in [&s.lean_statement, &s.isabelle_statement] {
                out = out.replace(field.as_str(), "<SRC>");
            }
            out
        };
        let (ra, rb) = (strip(&sa), strip(&sb));
        let tail = |r: &str| r[r.find("<SRC>").unwrap()..].to_string();
        prop_assert_eq!(tail(&ra), tail(&rb));
        let system = |s: &TheoremSources| t.stage1(s, PREAMBLE).messages()[0].content.clone();
        prop_assert_eq!(system(&sa), system(&sb));
    }
}

#[test]
fn chained_feedback_keeps_every_candidate_in_order() {
    let t = PromptTemplates::default();
    let mut transcript = t.stage1(&sources("t", "Show it."), PREAMBLE);
    let candidates = ["Theorem t : (1 = 1.", "Theorem t : 1 = 1", "Theorem t : x = 1."];
    let errors = [
        "unbalanced delimiter",
        "missing terminating period",
        "The reference x was not found\nin the current environment.",
    ];
    for (c, e) in candidates.iter().zip(errors) {
        transcript
            .push(ChatMessage::new(Role::Assistant, format!("```coq\n{c}\n```")))
            .unwrap();
        transcript = t.feedback_turn(&transcript, c, e).unwrap();
    }
    let plain = transcript.render_plain();
    let mut from = 0;
    for c in candidates {
        let at = plain[from..].find(c).expect("candidate present");
        from += at + c.len();
    }
    assert!(plain.contains("The reference x was not found\nin the current environment."));
}

#[test]
fn refined_prompt_adds_guidance_to_the_system_turn_only() {
    let t = PromptTemplates::default();
    let s = sources("t", "Show it.");
    let (one, three) = (t.stage1(&s, PREAMBLE), t.stage3(&s, PREAMBLE));
    assert_eq!(one.messages()[1], three.messages()[1]);
    assert_ne!(one.messages()[0], three.messages()[0]);
    for paragraph in t.guidance.values() {
        assert!(three.messages()[0].content.contains(paragraph.trim()));
    }
    let mut silent = t.clone();
    for p in silent.guidance.values_mut() {
        p.clear();
    }
    assert_eq!(silent.stage3(&s, PREAMBLE), silent.stage1(&s, PREAMBLE));
}

#[test]
fn informal_fences_are_neutralized() {
    let t = PromptTemplates::default();
    let s = sources("t", "Consider\n```coq\nTheorem fake : False.\n```\nand prove it.");
    let user = t.stage1(&s, PREAMBLE).messages()[1].content.clone();
    assert!(!user.contains("```"));
    assert!(user.contains("Theorem fake : False."));
}
