mod common;

use common::props::{self, arb_budget, arb_bundle};
use dbgchat_core::prompt::{
    make_followup_prompt, make_initial_prompt, HistoryEntry, PromptBundle, TokenBudget,
    HISTORY_LEAD, REPL_PROMPT,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn never_exceeds_the_budget(b in arb_bundle(), max in arb_budget()) {
        props::check_within_budget(&b, max)?;
    }

    #[test]
    fn protected_text_is_byte_identical(b in arb_bundle(), max in arb_budget()) {
        props::check_protected_text(&b, max)?;
    }

    #[test]
    fn sections_keep_their_order(b in arb_bundle(), max in arb_budget()) {
        props::check_section_order(&b, max)?;
    }

    #[test]
    fn truncation_is_idempotent_and_ordered(b in arb_bundle(), max in arb_budget()) {
        props::check_truncation(&b, max)?;
    }
}

#[test]
fn followup_carries_only_recent_history() {
    let msgs = make_followup_prompt(&[HistoryEntry::new("p n", "$1 = 5")], "Why?");
    assert_eq!(msgs.len(), 1);
    assert_eq!(
        msgs[0].content,
        format!("{HISTORY_LEAD}\n```\n{REPL_PROMPT}p n\n$1 = 5\n```\n\nWhy?")
    );
    assert_eq!(make_followup_prompt(&[], "Why?")[0].content, "Why?");
}

#[test]
fn empty_sections_are_left_out() {
    let msgs = make_initial_prompt(&PromptBundle::new("hi"), TokenBudget::default()).unwrap();
    assert_eq!(msgs[1].content, "hi");
}
