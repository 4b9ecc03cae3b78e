//! Prompt assembly under a token budget.
//!
//! An initial prompt is a system message with the instructions and a user
//! message with, in order: the enriched stack, the program inputs, the
//! error, the command history and the user's text. Empty inputs and
//! history are left out. When the prompt is too large, history goes first
//! (oldest entries first), then the inputs, then stack frames from the
//! outer end; instructions, error and user text are never touched.

use std::fmt::Write as _;

use thiserror::Error;

use crate::enrich::{EnrichedStack, StackEntry};
use crate::llm::ChatMessage;
use crate::session::{StopEvent, StopReason};

pub const DEFAULT_MAX_TOKENS: usize = 16_000;
pub const REPL_PROMPT: &str = "(ChatDBG) ";

pub const STACK_LEAD: &str = "The program has this stack trace:";
pub const INPUTS_LEAD: &str = "The program was run with these inputs:";
pub const ERROR_LEAD: &str = "The program encountered the following error:";
pub const HISTORY_LEAD: &str =
    "This is the history of some debugger commands I ran and the results:";

/// Deterministic size estimate: one token per four bytes, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.len().div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenBudget {
    pub max_tokens: usize,
}

impl Default for TokenBudget {
    fn default() -> Self {
        TokenBudget {
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

impl TokenBudget {
    pub fn new(max_tokens: usize) -> Self {
        TokenBudget { max_tokens }
    }

    /// Estimated size of a message list.
    pub fn estimate(messages: &[ChatMessage]) -> usize {
        let joined: String = messages.iter().map(|m| m.content.as_str()).collect();
        estimate_tokens(&joined)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("prompt needs at least {needed} tokens but the budget is {budget}")]
    BudgetImpossible { needed: usize, budget: usize },
}

/// One displayed piece of the stack and how many frames it stands for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackBlock {
    pub text: String,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryEntry {
    pub command: String,
    pub output: String,
}

impl HistoryEntry {
    pub fn new(command: impl Into<String>, output: impl Into<String>) -> Self {
        HistoryEntry {
            command: command.into(),
            output: output.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptBundle {
    pub instructions: String,
    /// Outermost first; the last block holds the stopped frame.
    pub stack: Vec<StackBlock>,
    pub args: Vec<String>,
    pub stdin: Option<String>,
    pub error: String,
    pub history: Vec<HistoryEntry>,
    pub user_text: String,
}

impl PromptBundle {
    pub fn new(user_text: impl Into<String>) -> Self {
        PromptBundle {
            instructions: instructions_text(),
            user_text: user_text.into(),
            ..Default::default()
        }
    }

    pub fn with_stack(mut self, stack: &EnrichedStack) -> Self {
        self.stack = stack_blocks(stack);
        self
    }

    pub fn with_inputs(mut self, args: Vec<String>, stdin: Option<String>) -> Self {
        self.args = args;
        self.stdin = stdin;
        self
    }

    pub fn with_error(mut self, error: impl Into<String>) -> Self {
        self.error = error.into();
        self
    }

    pub fn with_history(mut self, history: Vec<HistoryEntry>) -> Self {
        self.history = history;
        self
    }

    pub fn stack_text(&self) -> String {
        self.stack
            .iter()
            .map(|b| b.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn inputs_text(&self) -> String {
        let mut out = String::new();
        if !self.args.is_empty() {
            let quoted: Vec<String> = self
                .args
                .iter()
                .map(|a| shlex::try_quote(a).map_or_else(|_| a.clone(), |q| q.into_owned()))
                .collect();
            let _ = writeln!(out, "Command-line arguments: {}", quoted.join(" "));
        }
        if let Some(stdin) = self.stdin.as_deref().filter(|s| !s.is_empty()) {
            let _ = write!(out, "Standard input:\n```\n{}", stdin);
            if !stdin.ends_with('\n') {
                out.push('\n');
            }
            out.push_str("```\n");
        }
        out
    }

    pub fn history_text(&self) -> String {
        history_text(&self.history)
    }
}

/// Blocks for a prompt, one per stack entry.
pub fn stack_blocks(stack: &EnrichedStack) -> Vec<StackBlock> {
    stack
        .entries
        .iter()
        .zip(stack.blocks())
        .map(|(entry, text)| StackBlock {
            text,
            frames: match entry {
                StackEntry::Frame(_) => 1,
                StackEntry::Elided { hidden } => *hidden,
            },
        })
        .collect()
}

/// `(ChatDBG) command` followed by its output, for each entry.
pub fn history_text(history: &[HistoryEntry]) -> String {
    let mut out = String::new();
    for e in history {
        let _ = writeln!(out, "{REPL_PROMPT}{}", e.command);
        if !e.output.is_empty() {
            out.push_str(&e.output);
            if !e.output.ends_with('\n') {
                out.push('\n');
            }
        }
    }
    out
}

fn fenced(body: &str) -> String {
    let mut out = String::from("```\n");
    out.push_str(body);
    if !body.ends_with('\n') {
        out.push('\n');
    }
    out.push_str("```\n");
    out
}

/// The user message for an initial prompt.
fn initial_user_text(b: &PromptBundle) -> String {
    let mut sections: Vec<String> = Vec::new();
    if !b.stack.is_empty() {
        sections.push(format!("{STACK_LEAD}\n{}", fenced(&b.stack_text())));
    }
    let inputs = b.inputs_text();
    if !inputs.is_empty() {
        sections.push(format!("{INPUTS_LEAD}\n{inputs}"));
    }
    if !b.error.is_empty() {
        let mut e = format!("{ERROR_LEAD}\n{}", b.error);
        if !e.ends_with('\n') {
            e.push('\n');
        }
        sections.push(e);
    }
    if !b.history.is_empty() {
        sections.push(format!("{HISTORY_LEAD}\n{}", fenced(&b.history_text())));
    }
    sections.push(b.user_text.clone());
    sections.join("\n")
}

fn render(b: &PromptBundle) -> Vec<ChatMessage> {
    vec![
        ChatMessage::system(b.instructions.clone()),
        ChatMessage::user(initial_user_text(b)),
    ]
}

fn size(b: &PromptBundle) -> usize {
    TokenBudget::estimate(&render(b))
}

pub fn omitted_note(frames: usize) -> String {
    format!("[... {frames} frame(s) omitted to fit the prompt budget]\n")
}

/// The bundle reduced until its prompt fits. A bundle that already fits
/// is returned unchanged.
pub fn fit_bundle(bundle: &PromptBundle, budget: TokenBudget) -> Result<PromptBundle, PromptError> {
    let max = budget.max_tokens;
    if size(bundle) <= max {
        return Ok(bundle.clone());
    }
    let minimal = PromptBundle {
        stack: Vec::new(),
        args: Vec::new(),
        stdin: None,
        history: Vec::new(),
        ..bundle.clone()
    };
    let needed = size(&minimal);
    if needed > max {
        return Err(PromptError::BudgetImpossible {
            needed,
            budget: max,
        });
    }

    let mut b = bundle.clone();
    while !b.history.is_empty() && size(&b) > max {
        b.history.remove(0);
    }
    if size(&b) > max {
        b.args.clear();
        b.stdin = None;
    }
    if size(&b) > max {
        trim_stack(&mut b, max);
    }
    Ok(b)
}

/// Replaces frames with an omission note, starting just inside the
/// outermost frame and moving inward, then the outermost frame itself.
/// The stopped frame goes last, taking the whole section with it.
fn trim_stack(b: &mut PromptBundle, max: usize) {
    let original = std::mem::take(&mut b.stack);
    let n = original.len();
    if n == 0 {
        return;
    }
    let mut order: Vec<usize> = (1..n.saturating_sub(1)).collect();
    if n > 1 {
        order.push(0);
    }
    let mut removed = vec![false; n];
    let assemble = |removed: &[bool]| -> Vec<StackBlock> {
        let mut out: Vec<StackBlock> = Vec::new();
        let mut pending = 0usize;
        for (i, block) in original.iter().enumerate() {
            if removed[i] {
                pending += block.frames;
                continue;
            }
            if pending > 0 {
                out.push(StackBlock {
                    text: omitted_note(pending),
                    frames: pending,
                });
                pending = 0;
            }
            out.push(block.clone());
        }
        if pending > 0 {
            out.push(StackBlock {
                text: omitted_note(pending),
                frames: pending,
            });
        }
        out
    };
    for idx in order {
        removed[idx] = true;
        b.stack = assemble(&removed);
        if size(b) <= max {
            return;
        }
    }
    b.stack.clear();
}

pub fn make_initial_prompt(
    bundle: &PromptBundle,
    budget: TokenBudget,
) -> Result<Vec<ChatMessage>, PromptError> {
    Ok(render(&fit_bundle(bundle, budget)?))
}

/// A later chat turn: the commands run since the last send, then the text.
pub fn make_followup_prompt(history: &[HistoryEntry], user_text: &str) -> Vec<ChatMessage> {
    let content = if history.is_empty() {
        user_text.to_string()
    } else {
        format!(
            "{HISTORY_LEAD}\n{}\n{user_text}",
            fenced(&history_text(history))
        )
    };
    vec![ChatMessage::user(content)]
}

/// Instructions for native targets. The tool paragraphs name each tool
/// exactly once.
pub fn instructions_text() -> String {
    [
        "You are a debugging assistant. You will be given a stack trace for an error in a \
         native C or C++ program and answer questions related to the root cause of the error.",
        "Call the `debug` function to run GDB commands on the stopped program. You may run the \
         following commands: bt, up, down, frame, p expression, list, info, x. Use it to print \
         any variable value or expression that you believe may contribute to the error.",
        "Call the `code` function to see the source code surrounding a location, given in the \
         form filename:lineno.",
        "Call the `definition` function with a location filename:lineno and a symbol name to \
         get the definition of the first occurrence of that symbol on that line. Unless it is \
         from a common, widely-used library, you MUST look up exactly once any symbol that is \
         referenced in code leading up to the error.",
        "Call the provided functions as many times as you would like.",
        "The root cause of any error is likely due to a problem in the source code from the \
         user. Explain why each variable contributing to the error has been set to the value \
         that it has. Continue with your explanations until you reach the root cause of the \
         error. Your answer may be as long as necessary.",
        "End your answer with a section titled \"Recommendation\" that contains one of:\n\
         * a fix if you have identified the root cause\n\
         * a numbered list of 1-3 suggestions for how to continue debugging if you have not",
    ]
    .join("\n\n")
}

/// Describes a stop for the prompt. Assertion failures add the sentence
/// telling the model to take the assertion as given.
pub fn error_section(stop: &StopEvent) -> String {
    let mut out = String::new();
    match &stop.reason {
        StopReason::Exited(code) => {
            let _ = writeln!(out, "{}", stop.detail);
            if *code == 0 {
                out.push_str("The program exited normally; no error has occurred yet.\n");
            }
            return out;
        }
        _ => {
            let _ = writeln!(out, "{}", stop.detail);
        }
    }
    if let Some(frame) = &stop.frame {
        match frame.location() {
            Some((file, line)) => {
                let name = file.file_name().map_or_else(
                    || file.display().to_string(),
                    |n| n.to_string_lossy().into_owned(),
                );
                let _ = writeln!(
                    out,
                    "The program stopped in {} at {name}:{line}.",
                    frame.function
                );
            }
            None => {
                let _ = writeln!(out, "The program stopped in {}.", frame.function);
            }
        }
    }
    if stop.reason == StopReason::AssertionFailure {
        let code = match &stop.assertion {
            Some(expr) => format!("assert({expr})"),
            None => "assertion".to_string(),
        };
        let _ = writeln!(out, "The code `{code}` is correct and must not be changed.");
    }
    out
}
