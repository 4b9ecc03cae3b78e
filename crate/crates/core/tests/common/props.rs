//! Property checks shared by the per-area tests and the acceptance suite.
//! Each `check_*` takes one generated case.

use std::path::{Path, PathBuf};

use dbgchat_core::enrich::*;
use dbgchat_core::llm::ChatMessage;
use dbgchat_core::prompt::{
    fit_bundle, make_initial_prompt, HistoryEntry, PromptBundle, PromptError, StackBlock,
    TokenBudget, ERROR_LEAD, HISTORY_LEAD, INPUTS_LEAD, STACK_LEAD,
};
use dbgchat_core::sanitizer::{sanitize, SanitizerPolicy};
use dbgchat_core::session::{Frame, SessionError, VariableBinding};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use super::render_oracle::{
    node_depth, reference_render, text_depth, to_gdb, top_level_items, Node,
};
use super::sanitizer_oracle::{Oracle, OraclePolicy};

type Check = Result<(), TestCaseError>;

// ---- value rendering and stacks ----

pub fn binding_for(node: &Node) -> VariableBinding {
    let ty = match node {
        Node::Int(_) => "int",
        Node::Struct(_) => "struct s",
        Node::Array(_) => "int [8]",
    };
    VariableBinding::new("v", ty, &to_gdb(node))
}

pub fn check_rendering(node: &Node) -> Check {
    let r = render_value(&binding_for(node), &mut NoEvaluator);
    prop_assert_eq!(r.text, reference_render(node));
    Ok(())
}

pub fn check_depth_bound(node: &Node) -> Check {
    let r = render_value(&binding_for(node), &mut NoEvaluator);
    // Elements dropped by the width rule can hide deeper levels, so the
    // rendered depth is only bounded, not equal.
    prop_assert!(text_depth(&r.text) <= node_depth(node).min(MAX_DEPTH));
    prop_assert!(r.depth_reached <= MAX_DEPTH);
    if node_depth(node) > MAX_DEPTH {
        prop_assert!(r.text.contains(ELLIPSIS));
    }
    Ok(())
}

pub fn check_width_rule(items: &[i64]) -> Check {
    let node = Node::Array(items.iter().copied().map(Node::Int).collect());
    let r = render_value(&binding_for(&node), &mut NoEvaluator);
    let shown = top_level_items(&r.text);
    let n = items.len();
    if n <= WIDTH_HEAD + WIDTH_TAIL {
        let expected: Vec<String> = items.iter().map(|i| i.to_string()).collect();
        prop_assert_eq!(shown, expected);
    } else {
        prop_assert_eq!(shown.len(), WIDTH_HEAD + WIDTH_TAIL + 1);
        for i in 0..WIDTH_HEAD {
            prop_assert_eq!(&shown[i], &items[i].to_string());
        }
        prop_assert_eq!(&shown[WIDTH_HEAD], ELLIPSIS);
        for i in 0..WIDTH_TAIL {
            prop_assert_eq!(
                &shown[WIDTH_HEAD + 1 + i],
                &items[n - WIDTH_TAIL + i].to_string()
            );
        }
    }
    Ok(())
}

pub fn arb_items() -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(-50i64..50, 1..40)
}

/// A stopped program made up from a list of frames.
pub struct FakeStack {
    pub frames: Vec<Frame>,
    pub total: usize,
}

impl StackSource for FakeStack {
    fn stack_depth(&mut self) -> Result<usize, SessionError> {
        Ok(self.total)
    }
    fn backtrace(&mut self) -> Result<Vec<Frame>, SessionError> {
        Ok(self.frames.clone())
    }
    fn frame_variables(&mut self, _index: usize) -> Result<Vec<VariableBinding>, SessionError> {
        Ok(vec![VariableBinding::new("x", "int", "1")])
    }
    fn evaluate_in_frame(&mut self, _i: usize, _e: &str) -> Result<String, SessionError> {
        Err(SessionError::EvaluationError("none".into()))
    }
    fn global_type(&mut self, _name: &str) -> Option<String> {
        None
    }
    fn function_line(&mut self, _function: &str) -> Option<u32> {
        None
    }
}

fn frame(index: usize, user: bool, src: &Path) -> Frame {
    Frame {
        index,
        function: format!("f{index}"),
        file: if user {
            Some(src.to_path_buf())
        } else {
            Some(PathBuf::from("/nonexistent/libc/x.c"))
        },
        line: Some(3),
        pc: None,
    }
}

/// Which frames are user code (innermost first) and how many frames lie
/// beyond the listed ones.
pub fn arb_backtrace() -> impl Strategy<Value = (Vec<bool>, usize)> {
    (prop::collection::vec(any::<bool>(), 0..40), 0usize..5)
}

pub fn check_frames_conserved(kinds: &[bool], extra: usize) -> Check {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("prog.c");
    std::fs::write(
        &src,
        (1..=20).map(|i| format!("line {i}\n")).collect::<String>(),
    )
    .unwrap();
    let frames: Vec<Frame> = kinds
        .iter()
        .enumerate()
        .map(|(i, &u)| frame(i, u, &src))
        .collect();
    let total = frames.len() + extra;
    let mut fake = FakeStack { frames, total };
    let stack = build_enriched_stack(&mut fake, &EnrichOptions::new(dir.path())).unwrap();

    prop_assert_eq!(stack.total_frames, total);
    prop_assert_eq!(stack.shown_frames() + stack.hidden_frames(), total);
    prop_assert_eq!(stack.shown_frames(), kinds.iter().filter(|&&u| u).count());
    // No empty or adjacent skip markers.
    for pair in stack.entries.windows(2) {
        let both = matches!(
            (&pair[0], &pair[1]),
            (StackEntry::Elided { .. }, StackEntry::Elided { .. })
        );
        prop_assert!(!both);
    }
    for e in &stack.entries {
        if let StackEntry::Elided { hidden } = e {
            prop_assert!(*hidden > 0);
        }
    }
    // The innermost user frame is the only current one and the last shown.
    let shown: Vec<&EnrichedFrame> = stack
        .entries
        .iter()
        .filter_map(|e| match e {
            StackEntry::Frame(f) => Some(f),
            _ => None,
        })
        .collect();
    prop_assert_eq!(
        shown.iter().filter(|f| f.current).count(),
        usize::from(!shown.is_empty())
    );
    if let Some(last) = shown.last() {
        prop_assert!(last.current);
        prop_assert_eq!(Some(last.frame.index), kinds.iter().position(|&u| u));
    }
    // Outermost first.
    let order: Vec<usize> = shown.iter().map(|f| f.frame.index).collect();
    let mut sorted = order.clone();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    prop_assert_eq!(order, sorted);
    Ok(())
}

// ---- prompts ----

/// Tokens as ceil(bytes / 4), computed over the concatenated messages.
pub fn tokens(messages: &[ChatMessage]) -> usize {
    let bytes: usize = messages.iter().map(|m| m.content.len()).sum();
    bytes.div_ceil(4)
}

/// Smallest possible prompt: instructions, error and user text only.
pub fn floor_tokens(b: &PromptBundle) -> usize {
    let mut user = 0;
    if !b.error.is_empty() {
        user += ERROR_LEAD.len() + 1 + b.error.len() + usize::from(!b.error.ends_with('\n')) + 1;
    }
    user += b.user_text.len();
    (b.instructions.len() + user).div_ceil(4)
}

pub fn arb_bundle() -> impl Strategy<Value = PromptBundle> {
    let block = ("[a-z =>0-9]{1,200}", 1usize..4).prop_map(|(t, frames)| StackBlock {
        text: format!("{t}\n"),
        frames,
    });
    (
        prop::collection::vec(block, 0..12),
        prop::collection::vec("[a-z0-9 ]{0,12}", 0..4),
        prop::option::of("[a-z0-9\n]{0,300}"),
        "[a-z ]{0,120}",
        prop::collection::vec(("[a-z ]{1,20}", "[a-z0-9 \n]{0,300}"), 0..10),
        "[a-z ?]{1,200}",
    )
        .prop_map(|(stack, args, stdin, error, history, user)| {
            let mut b = PromptBundle::new(user)
                .with_inputs(args, stdin)
                .with_error(error);
            b.stack = stack;
            b.history = history
                .into_iter()
                .map(|(c, o)| HistoryEntry::new(c, o))
                .collect();
            b
        })
}

pub fn arb_budget() -> impl Strategy<Value = usize> {
    prop_oneof![200usize..600, 600usize..3000, Just(16_000)]
}

pub fn check_within_budget(b: &PromptBundle, max: usize) -> Check {
    match make_initial_prompt(b, TokenBudget::new(max)) {
        Ok(msgs) => prop_assert!(tokens(&msgs) <= max),
        Err(PromptError::BudgetImpossible { needed, budget }) => {
            prop_assert_eq!(budget, max);
            prop_assert_eq!(needed, floor_tokens(b));
            prop_assert!(needed > max);
        }
    }
    if floor_tokens(b) <= max {
        prop_assert!(make_initial_prompt(b, TokenBudget::new(max)).is_ok());
    }
    Ok(())
}

pub fn check_protected_text(b: &PromptBundle, max: usize) -> Check {
    if let Ok(msgs) = make_initial_prompt(b, TokenBudget::new(max)) {
        prop_assert_eq!(msgs.len(), 2);
        prop_assert_eq!(&msgs[0].content, &b.instructions);
        prop_assert!(msgs[1].content.ends_with(&b.user_text));
        if !b.error.is_empty() {
            let expected = format!("{ERROR_LEAD}\n{}\n", b.error);
            prop_assert!(msgs[1].content.contains(&expected));
        }
    }
    Ok(())
}

pub fn check_section_order(b: &PromptBundle, max: usize) -> Check {
    if let Ok(msgs) = make_initial_prompt(b, TokenBudget::new(max)) {
        let text = &msgs[1].content;
        let positions: Vec<usize> = [STACK_LEAD, INPUTS_LEAD, ERROR_LEAD, HISTORY_LEAD]
            .iter()
            .filter_map(|lead| text.find(lead))
            .chain(std::iter::once(text.len() - b.user_text.len()))
            .collect();
        prop_assert!(positions.windows(2).all(|w| w[0] < w[1]), "{:?}", positions);
    }
    Ok(())
}

pub fn check_truncation(b: &PromptBundle, max: usize) -> Check {
    let budget = TokenBudget::new(max);
    if let Ok(fitted) = fit_bundle(b, budget) {
        prop_assert_eq!(fit_bundle(&fitted, budget).unwrap(), fitted.clone());
        // History is dropped oldest first.
        prop_assert!(b.history.ends_with(&fitted.history));
        // Inputs only go once history is gone.
        if fitted.args != b.args || fitted.stdin != b.stdin {
            prop_assert!(fitted.history.is_empty());
        }
        // The stack is only cut once history and inputs are gone, and the
        // frames it stands for are conserved.
        if fitted.stack != b.stack {
            prop_assert!(fitted.history.is_empty() && fitted.args.is_empty());
            if !fitted.stack.is_empty() {
                let total = |s: &[StackBlock]| s.iter().map(|x| x.frames).sum::<usize>();
                prop_assert_eq!(total(&fitted.stack), total(&b.stack));
                prop_assert_eq!(fitted.stack.last(), b.stack.last());
            }
        }
        if tokens(&make_initial_prompt(b, TokenBudget::new(usize::MAX)).unwrap()) <= max {
            prop_assert_eq!(&fitted, b);
        }
    }
    Ok(())
}

// ---- sanitizer ----

pub const FUNCS: &[&str] = &["strlen", "abs", "free", "unlink", "f", "g_len"];

pub fn arb_command() -> impl Strategy<Value = String> {
    let word = prop::sample::select(vec![
        "p", "print", "p/x", "bt", "up", "down", "frame", "info", "x/4x", "list", "ptype", "set",
        "call", "continue", "next", "kill", "shell", "display", "whatis",
    ]);
    let atom = prop_oneof![
        prop::sample::select(vec![
            "x",
            "len",
            "n",
            "stats[0]",
            "node->next",
            "*p",
            "$pc",
            "42"
        ])
        .prop_map(str::to_string),
        prop::sample::select(FUNCS.to_vec()).prop_map(|f| format!("{f}(x)")),
        Just("(int)(x)".to_string()),
        Just("(*fp)(1)".to_string()),
        Just("\"a(b)=c\"".to_string()),
        Just("sizeof(x)".to_string()),
    ];
    let op = prop::sample::select(vec![
        " + ", " == ", " = ", " != ", " <= ", "++", " += ", " - ", ", ",
    ]);
    (
        word,
        prop::collection::vec((atom, op), 0..3),
        prop::option::of("[a-z]{1,3}"),
    )
        .prop_map(|(w, parts, tail)| {
            let mut s = w.to_string();
            if !parts.is_empty() {
                s.push(' ');
            }
            for (i, (a, o)) in parts.iter().enumerate() {
                s.push_str(a);
                if i + 1 < parts.len() {
                    s.push_str(o);
                }
            }
            if let Some(t) = tail {
                s.push(' ');
                s.push_str(&t);
            }
            s
        })
}

/// Two whitelists, the first a subset of the second.
pub fn arb_whitelists() -> impl Strategy<Value = (Vec<String>, Vec<String>)> {
    (
        prop::sample::subsequence(FUNCS.to_vec(), 0..=FUNCS.len()),
        prop::sample::subsequence(FUNCS.to_vec(), 0..=FUNCS.len()),
    )
        .prop_map(|(a, b)| {
            let small: Vec<String> = a.iter().map(|s| s.to_string()).collect();
            let mut big = small.clone();
            big.extend(b.iter().map(|s| s.to_string()));
            (small, big)
        })
}

/// Monotonicity (strict ⊆ smaller whitelist ⊆ larger whitelist), unsafe
/// allowing everything, and agreement with the reference.
pub fn check_policy_order(cmd: &str, small: &[String], big: &[String], oracle: &Oracle) -> Check {
    let strict = SanitizerPolicy::native_strict();
    let w_small = SanitizerPolicy::whitelist(small.to_vec());
    let w_big = SanitizerPolicy::whitelist(big.to_vec());
    let unsafe_p = SanitizerPolicy::from_flags(true, None);
    let allowed = |p: &SanitizerPolicy| sanitize(cmd, p).is_allow();
    if allowed(&strict) {
        prop_assert!(allowed(&w_small));
    }
    if allowed(&w_small) {
        prop_assert!(allowed(&w_big));
    }
    prop_assert!(allowed(&unsafe_p));
    prop_assert_eq!(
        allowed(&strict),
        oracle.allows(cmd, &OraclePolicy::Strict),
        "strict {}",
        cmd
    );
    prop_assert_eq!(
        allowed(&w_big),
        oracle.allows(cmd, &OraclePolicy::Whitelist(big.iter().cloned().collect())),
        "whitelist {:?} {}",
        big,
        cmd
    );
    Ok(())
}
