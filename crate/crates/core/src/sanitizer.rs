//! Vetting of debugger commands issued by the model.
//!
//! Outside unsafe mode a command must start with an allowed read-only
//! command word, must not call functions in the target (unless
//! whitelisted) and must not assign to target state.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

/// Read-only commands the model may issue.
pub const NATIVE_COMMANDS: &[&str] = &[
    "bt",
    "backtrace",
    "where",
    "up",
    "down",
    "frame",
    "f",
    "p",
    "print",
    "list",
    "l",
    "info",
    "x",
    "ptype",
    "whatis",
];

/// Commands that would resume, restart or leave the stopped target.
pub const RESUMING_COMMANDS: &[&str] = &[
    "run",
    "r",
    "start",
    "starti",
    "continue",
    "c",
    "cont",
    "fg",
    "next",
    "n",
    "nexti",
    "ni",
    "step",
    "s",
    "stepi",
    "si",
    "finish",
    "fin",
    "until",
    "u",
    "advance",
    "jump",
    "j",
    "signal",
    "queue-signal",
    "kill",
    "k",
    "attach",
    "detach",
    "disconnect",
    "shell",
    "!",
    "pipe",
    "|",
    "quit",
    "q",
    "return",
];

/// Words that look like calls but are operators or debugger keywords.
const NON_CALL_KEYWORDS: &[&str] = &[
    "sizeof",
    "alignof",
    "_Alignof",
    "typeof",
    "__typeof__",
    "__alignof__",
    "decltype",
    "if",
    "while",
    "for",
    "switch",
    "return",
];

/// Type words that may appear inside a cast.
const TYPE_WORDS: &[&str] = &[
    "char", "short", "int", "long", "float", "double", "signed", "unsigned", "void", "const",
    "volatile", "struct", "union", "enum", "_Bool", "bool",
];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Mode {
    NativeStrict,
    Whitelist(BTreeSet<String>),
    Unsafe,
}

/// Construct with [`SanitizerPolicy::native_strict`],
/// [`SanitizerPolicy::whitelist`] or [`SanitizerPolicy::from_flags`];
/// unsafe mode is reachable only through the latter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SanitizerPolicy {
    mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Allow,
    Deny(String),
}

impl Verdict {
    pub fn is_allow(&self) -> bool {
        matches!(self, Verdict::Allow)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Allow => f.write_str("allow"),
            Verdict::Deny(reason) => write!(f, "deny: {reason}"),
        }
    }
}

/// Set of command words allowed by a mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CommandSet {
    Only(BTreeSet<String>),
    /// Everything is allowed.
    Any,
}

impl CommandSet {
    pub fn contains(&self, word: &str) -> bool {
        match self {
            CommandSet::Only(set) => set.contains(word),
            CommandSet::Any => true,
        }
    }
}

impl SanitizerPolicy {
    pub fn native_strict() -> Self {
        SanitizerPolicy {
            mode: Mode::NativeStrict,
        }
    }

    pub fn whitelist<I, S>(functions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SanitizerPolicy {
            mode: Mode::Whitelist(functions.into_iter().map(Into::into).collect()),
        }
    }

    /// Reads a whitelist file: one function name per line; blank lines and
    /// `#` comments are ignored.
    pub fn whitelist_file(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::whitelist(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        ))
    }

    /// The policy selected by command-line flags. `unsafe_flag` wins over
    /// everything; the two are mutually exclusive at the CLI level.
    pub fn from_flags(unsafe_flag: bool, whitelist: Option<SanitizerPolicy>) -> Self {
        if unsafe_flag {
            SanitizerPolicy { mode: Mode::Unsafe }
        } else {
            whitelist.unwrap_or_else(Self::native_strict)
        }
    }

    pub fn is_unsafe(&self) -> bool {
        self.mode == Mode::Unsafe
    }

    pub fn describe(&self) -> String {
        match &self.mode {
            Mode::NativeStrict => "strict (no function calls)".into(),
            Mode::Whitelist(s) if s.is_empty() => "whitelist (empty)".into(),
            Mode::Whitelist(s) => format!(
                "whitelist ({})",
                s.iter().cloned().collect::<Vec<_>>().join(", ")
            ),
            Mode::Unsafe => "unsafe (no checks)".into(),
        }
    }

    pub fn allowed_command_prefixes(&self) -> CommandSet {
        match self.mode {
            Mode::Unsafe => CommandSet::Any,
            _ => CommandSet::Only(NATIVE_COMMANDS.iter().map(|s| s.to_string()).collect()),
        }
    }
}

/// Decides whether `command` may run. Pure in `(command, policy)`.
pub fn sanitize(command: &str, policy: &SanitizerPolicy) -> Verdict {
    if policy.is_unsafe() {
        return Verdict::Allow;
    }
    let command = command.trim();
    if command.is_empty() {
        return Verdict::Deny("empty command".into());
    }
    if command.contains(['\n', '\r']) {
        return Verdict::Deny("multi-line command".into());
    }
    let word = command_word(command);
    if RESUMING_COMMANDS.contains(&word) {
        return Verdict::Deny(format!("resumes or leaves the target: {word}"));
    }
    let expression = split_command(command).1;
    for call in call_forms(expression) {
        let allowed = match (&policy.mode, &call) {
            (Mode::Whitelist(set), Some(name)) => set.contains(name),
            _ => false,
        };
        if !allowed {
            return Verdict::Deny(match call {
                Some(name) => format!("function call: {name}"),
                None => "function call through an expression".into(),
            });
        }
    }
    if !policy.allowed_command_prefixes().contains(word) {
        return Verdict::Deny(format!("command not allowed: {word}"));
    }
    if let Some(op) = assignment(expression) {
        return Verdict::Deny(format!("modifies program state: {op}"));
    }
    Verdict::Allow
}

/// First word of a command, with `/fmt` suffixes removed (`p/x` → `p`).
pub fn command_word(command: &str) -> &str {
    split_command(command.trim_start()).0
}

/// Splits off the command name and any `/fmt` suffix; the remainder is
/// the argument text.
fn split_command(command: &str) -> (&str, &str) {
    if command.starts_with(['!', '|']) {
        return (&command[..1], &command[1..]);
    }
    let name_len = command
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '-' || c == '_'))
        .unwrap_or(command.len());
    let (name, mut rest) = command.split_at(name_len);
    if let Some(fmt) = rest.strip_prefix('/') {
        let n = fmt
            .find(|c: char| !c.is_ascii_alphanumeric())
            .unwrap_or(fmt.len());
        rest = &fmt[n..];
    }
    (name, rest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok<'a> {
    Ident(&'a str),
    Open,
    Close,
    Op(&'a str),
    Other,
}

/// Tokens outside string and char literals.
fn tokens(s: &str) -> Vec<Tok<'_>> {
    let b = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        if c == b'"' || c == b'\'' {
            i += 1;
            while i < b.len() && b[i] != c {
                if b[i] == b'\\' {
                    i += 1;
                }
                i += 1;
            }
            i += 1;
            out.push(Tok::Other);
        } else if c.is_ascii_alphabetic() || c == b'_' || c == b'$' {
            let start = i;
            i += 1;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_' || b[i] == b'$') {
                i += 1;
            }
            out.push(Tok::Ident(&s[start..i]));
        } else if c.is_ascii_digit() {
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'.') {
                i += 1;
            }
            out.push(Tok::Other);
        } else if c == b'(' {
            out.push(Tok::Open);
            i += 1;
        } else if c == b')' {
            out.push(Tok::Close);
            i += 1;
        } else if c.is_ascii_whitespace() {
            i += 1;
        } else {
            let start = i;
            while i < b.len() && b"=!<>+-*/%&|^~".contains(&b[i]) {
                i += 1;
            }
            if i == start {
                i += 1;
                out.push(Tok::Other);
            } else {
                out.push(Tok::Op(&s[start..i]));
            }
        }
    }
    out
}

/// Every call form in `command`: `Some(name)` for `name(`, `None` for a
/// call on a parenthesized expression such as `(*fp)(1)`.
fn call_forms(command: &str) -> Vec<Option<String>> {
    let toks = tokens(command);
    let mut calls = Vec::new();
    for (i, t) in toks.iter().enumerate() {
        if toks.get(i + 1) != Some(&Tok::Open) {
            continue;
        }
        match t {
            Tok::Ident(name) => {
                if !NON_CALL_KEYWORDS.contains(name) && !TYPE_WORDS.contains(name) {
                    calls.push(Some(name.to_string()));
                }
            }
            Tok::Close if !is_cast_group(&toks[..=i]) => calls.push(None),
            _ => {}
        }
    }
    calls
}

/// Whether the parenthesized group ending the slice holds only a type
/// name, making a following `(` the start of the cast operand.
fn is_cast_group(toks: &[Tok<'_>]) -> bool {
    let mut depth = 0;
    let mut start = None;
    for (i, t) in toks.iter().enumerate().rev() {
        match t {
            Tok::Close => depth += 1,
            Tok::Open => {
                depth -= 1;
                if depth == 0 {
                    start = Some(i);
                    break;
                }
            }
            _ => {}
        }
    }
    let Some(start) = start else {
        return false;
    };
    let inner = &toks[start + 1..toks.len() - 1];
    let mut saw_type = false;
    for (k, t) in inner.iter().enumerate() {
        match t {
            Tok::Ident(w) if TYPE_WORDS.contains(w) || w.ends_with("_t") => saw_type = true,
            // struct/union/enum tags
            Tok::Ident(_)
                if k > 0 && matches!(inner[k - 1], Tok::Ident("struct" | "union" | "enum")) => {}
            Tok::Op(op) if op.chars().all(|c| c == '*') => {}
            _ => return false,
        }
    }
    saw_type
}

/// The first assignment-like operator in the command, if any.
fn assignment(command: &str) -> Option<String> {
    tokens(command).into_iter().find_map(|t| match t {
        Tok::Op(op) if assigns(op) => Some(op.to_string()),
        _ => None,
    })
}

fn assigns(op: &str) -> bool {
    if op.contains("++") || op.contains("--") || op.contains("<<=") || op.contains(">>=") {
        return true;
    }
    let mut rest = op.to_string();
    for cmp in ["==", "!=", "<=", ">="] {
        rest = rest.replace(cmp, " ");
    }
    rest.contains('=')
}
