//! The enriched stack: user frames with source and variables, library
//! frames collapsed into skip markers.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::source::{source_window, DEFAULT_RADIUS};
use super::value::{render_value, Evaluator, RenderedValue};
use crate::session::{is_identifier, DebuggerSession, Frame, SessionError, VariableBinding};

pub const MAX_GLOBALS: usize = 10;

/// What the enricher needs from a stopped debugger.
pub trait StackSource {
    fn stack_depth(&mut self) -> Result<usize, SessionError>;
    /// Innermost first; may hold fewer frames than `stack_depth`.
    fn backtrace(&mut self) -> Result<Vec<Frame>, SessionError>;
    fn frame_variables(&mut self, index: usize) -> Result<Vec<VariableBinding>, SessionError>;
    fn evaluate_in_frame(&mut self, index: usize, expression: &str)
        -> Result<String, SessionError>;
    /// Declared type of a global or file-static variable.
    fn global_type(&mut self, name: &str) -> Option<String>;
    fn function_line(&mut self, function: &str) -> Option<u32>;
}

impl StackSource for DebuggerSession {
    fn stack_depth(&mut self) -> Result<usize, SessionError> {
        DebuggerSession::stack_depth(self)
    }

    fn backtrace(&mut self) -> Result<Vec<Frame>, SessionError> {
        DebuggerSession::backtrace(self)
    }

    fn frame_variables(&mut self, index: usize) -> Result<Vec<VariableBinding>, SessionError> {
        DebuggerSession::frame_variables(self, index)
    }

    fn evaluate_in_frame(
        &mut self,
        index: usize,
        expression: &str,
    ) -> Result<String, SessionError> {
        DebuggerSession::evaluate_in_frame(self, index, expression)
    }

    fn global_type(&mut self, name: &str) -> Option<String> {
        self.global_variable(name).map(|(ty, _)| ty)
    }

    fn function_line(&mut self, function: &str) -> Option<u32> {
        DebuggerSession::function_line(self, function)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedBinding {
    pub name: String,
    pub declared_type: String,
    pub value: RenderedValue,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnrichedFrame {
    pub frame: Frame,
    /// File as shown in the header, relative to the workspace when inside it.
    pub display_path: String,
    pub source_window: Option<String>,
    pub bindings: Vec<RenderedBinding>,
    pub globals: Option<Vec<RenderedBinding>>,
    /// The innermost frame shown; its header carries the `> ` marker.
    pub current: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StackEntry {
    Frame(EnrichedFrame),
    Elided { hidden: usize },
}

/// Entries run outermost first, so the stopped frame comes last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnrichedStack {
    pub entries: Vec<StackEntry>,
    pub total_frames: usize,
}

impl EnrichedStack {
    pub fn shown_frames(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e, StackEntry::Frame(_)))
            .count()
    }

    pub fn hidden_frames(&self) -> usize {
        self.entries
            .iter()
            .map(|e| match e {
                StackEntry::Elided { hidden } => *hidden,
                StackEntry::Frame(_) => 0,
            })
            .sum()
    }

    /// One text block per entry, in display order.
    pub fn blocks(&self) -> Vec<String> {
        self.entries.iter().map(render_entry).collect()
    }

    pub fn render(&self) -> String {
        self.blocks().join("\n")
    }
}

pub fn elision_marker(hidden: usize) -> String {
    format!("[... skipping {hidden} hidden frame(s)]\n")
}

fn render_entry(entry: &StackEntry) -> String {
    match entry {
        StackEntry::Elided { hidden } => elision_marker(*hidden),
        StackEntry::Frame(f) => render_frame(f),
    }
}

fn render_frame(f: &EnrichedFrame) -> String {
    let mut out = String::new();
    let marker = if f.current { "> " } else { "" };
    let line = f.frame.line.unwrap_or(0);
    let _ = writeln!(
        out,
        "{marker}{}({line}){}()",
        f.display_path, f.frame.function
    );
    if let Some(window) = &f.source_window {
        out.push_str(window);
    }
    let mut section = |title: &str, bindings: &[RenderedBinding]| {
        if bindings.is_empty() {
            return;
        }
        let _ = writeln!(out, "\n   {title}:");
        for b in bindings {
            let _ = writeln!(
                out,
                "     {}: {} = {}",
                b.name, b.declared_type, b.value.text
            );
        }
    };
    section("Variables in this frame", &f.bindings);
    if let Some(globals) = &f.globals {
        section("Global variables", globals);
    }
    out
}

#[derive(Debug, Clone)]
pub struct EnrichOptions {
    pub workspace_root: PathBuf,
    pub radius: u32,
}

impl EnrichOptions {
    pub fn new(workspace_root: impl Into<PathBuf>) -> Self {
        EnrichOptions {
            workspace_root: workspace_root.into(),
            radius: DEFAULT_RADIUS,
        }
    }
}

/// A frame counts as user code when its source file exists under the
/// workspace root.
pub fn is_user_frame(frame: &Frame, workspace_root: &Path) -> bool {
    let Some((file, _)) = frame.location() else {
        return false;
    };
    let root = normalize(workspace_root);
    normalize(file).starts_with(&root) && file.exists()
}

fn normalize(p: &Path) -> PathBuf {
    p.canonicalize().unwrap_or_else(|_| p.to_path_buf())
}

fn display_path(file: &Path, workspace_root: &Path) -> String {
    let root = normalize(workspace_root);
    match normalize(file).strip_prefix(&root) {
        Ok(rel) => format!("./{}", rel.display()),
        Err(_) => file.display().to_string(),
    }
}

struct FrameEvaluator<'a, S: StackSource + ?Sized> {
    source: &'a mut S,
    index: usize,
}

impl<S: StackSource + ?Sized> Evaluator for FrameEvaluator<'_, S> {
    fn evaluate(&mut self, expression: &str) -> Option<String> {
        self.source.evaluate_in_frame(self.index, expression).ok()
    }
}

pub fn build_enriched_stack(
    source: &mut (impl StackSource + ?Sized),
    options: &EnrichOptions,
) -> Result<EnrichedStack, SessionError> {
    let total = source.stack_depth()?;
    let frames = source.backtrace()?;
    let user: Vec<bool> = frames
        .iter()
        .map(|f| is_user_frame(f, &options.workspace_root))
        .collect();
    let innermost_user = user.iter().position(|&u| u);
    let outermost_user = user.iter().rposition(|&u| u);

    // Built innermost first, reversed at the end.
    let mut entries: Vec<StackEntry> = Vec::new();
    let mut hidden = 0usize;
    for (pos, frame) in frames.iter().enumerate() {
        if !user[pos] {
            hidden += 1;
            continue;
        }
        if hidden > 0 {
            entries.push(StackEntry::Elided { hidden });
            hidden = 0;
        }
        let enriched = enrich_frame(
            source,
            frame,
            options,
            Some(pos) == innermost_user,
            Some(pos) == outermost_user,
        );
        entries.push(StackEntry::Frame(enriched));
    }
    hidden += total.saturating_sub(frames.len());
    if hidden > 0 {
        entries.push(StackEntry::Elided { hidden });
    }
    entries.reverse();
    Ok(EnrichedStack {
        entries,
        total_frames: total.max(frames.len()),
    })
}

fn enrich_frame(
    source: &mut (impl StackSource + ?Sized),
    frame: &Frame,
    options: &EnrichOptions,
    current: bool,
    outermost: bool,
) -> EnrichedFrame {
    let (file, line) = frame.location().expect("user frames have locations");
    let source_window = source_window(file, line, options.radius).ok();
    // Compiler-provided statics such as __PRETTY_FUNCTION__ are noise.
    let raw: Vec<VariableBinding> = source
        .frame_variables(frame.index)
        .unwrap_or_default()
        .into_iter()
        .filter(|b| !b.name.starts_with("__"))
        .collect();
    let locals: HashSet<String> = raw.iter().map(|b| b.name.clone()).collect();
    let bindings = render_all(source, frame.index, &raw);
    let globals = if outermost {
        let found = referenced_globals(source, frame, &locals);
        (!found.is_empty()).then(|| render_all(source, frame.index, &found))
    } else {
        None
    };
    EnrichedFrame {
        frame: frame.clone(),
        display_path: display_path(file, &options.workspace_root),
        source_window,
        bindings,
        globals,
        current,
    }
}

fn render_all(
    source: &mut (impl StackSource + ?Sized),
    index: usize,
    bindings: &[VariableBinding],
) -> Vec<RenderedBinding> {
    bindings
        .iter()
        .map(|b| {
            let mut eval = FrameEvaluator {
                source: &mut *source,
                index,
            };
            RenderedBinding {
                name: b.name.clone(),
                declared_type: b.declared_type.clone(),
                value: render_value(b, &mut eval),
            }
        })
        .collect()
}

/// Globals named in the frame's function up to the current line: every
/// identifier that is not a local, not a keyword and not called, which
/// the debug information knows as a variable.
fn referenced_globals(
    source: &mut (impl StackSource + ?Sized),
    frame: &Frame,
    locals: &HashSet<String>,
) -> Vec<VariableBinding> {
    let Some((file, line)) = frame.location() else {
        return Vec::new();
    };
    let Ok(text) = std::fs::read_to_string(file) else {
        return Vec::new();
    };
    let start = source
        .function_line(&frame.function)
        .filter(|&s| s <= line)
        .unwrap_or(line);
    let body: Vec<&str> = text
        .lines()
        .skip(start as usize - 1)
        .take((line - start + 1) as usize)
        .collect();
    let mut seen: HashSet<String> = HashSet::new();
    let mut out = Vec::new();
    for name in identifiers(&body.join("\n")) {
        if out.len() == MAX_GLOBALS {
            break;
        }
        if name == frame.function
            || locals.contains(&name)
            || C_KEYWORDS.contains(&name.as_str())
            || !seen.insert(name.clone())
        {
            continue;
        }
        let Some(ty) = source.global_type(&name) else {
            continue;
        };
        let Ok(value) = source.evaluate_in_frame(frame.index, &name) else {
            continue;
        };
        out.push(VariableBinding::new(&name, &ty, &value));
    }
    out
}

/// Identifiers in C source outside comments and literals, excluding
/// those directly followed by `(` and member names after `.` or `->`.
fn identifiers(code: &str) -> Vec<String> {
    let chars: Vec<char> = code.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c == '/' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            while i + 1 < chars.len() && !(chars[i] == '*' && chars[i + 1] == '/') {
                i += 1;
            }
            i += 2;
        } else if c == '"' || c == '\'' {
            i += 1;
            while i < chars.len() && chars[i] != c {
                if chars[i] == '\\' {
                    i += 1;
                }
                i += 1;
            }
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let before: String = chars[..start].iter().rev().take(2).collect();
            let member = before.starts_with('.') || before == ">-";
            let mut j = i;
            while j < chars.len() && chars[j] == ' ' {
                j += 1;
            }
            let called = chars.get(j) == Some(&'(');
            if !member && !called && is_identifier(&word) {
                out.push(word);
            }
        } else if c.is_ascii_digit() {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '.') {
                i += 1;
            }
        } else {
            i += 1;
        }
    }
    out
}

const C_KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
    "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef",
    "union", "unsigned", "void", "volatile", "while", "bool", "true", "false", "NULL", "size_t",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifier_scan_skips_calls_members_and_literals() {
        let ids = identifiers("x = f(a, b->c) + s.d; /* g */ // h\n \"k\" 'q' 3.5e2 y");
        assert_eq!(ids, vec!["x", "a", "b", "s", "y"]);
    }

    #[test]
    fn marker_form() {
        assert_eq!(elision_marker(4), "[... skipping 4 hidden frame(s)]\n");
    }
}
