//! The `code` and `definition` tools.
//!
//! `definition` asks a language server (clangd) first. When no server is
//! running, or it has nothing to say, the debugger's symbol tables are
//! consulted. When the server offers several targets the first one is
//! used; clangd lists the definition body ahead of declarations when it
//! knows both.

pub mod lsp;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::enrich::{source_window, SourceError, DEFAULT_RADIUS};
use crate::session::DebuggerSession;
use lsp::{ChildTransport, LspClient, LspError, LspTransport, Position};

/// Source files opened in the language server at startup, at most.
pub const MAX_OPEN_FILES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NavError {
    #[error("source unavailable: {0}")]
    SourceUnavailable(String),
    #[error("bad location `{0}`: expected file:line")]
    BadLocSyntax(String),
    #[error("`{symbol}` does not appear on line {loc}")]
    SymbolNotOnLine { symbol: String, loc: String },
    #[error("no definition found for `{0}`")]
    DefinitionNotFound(String),
    #[error("cannot look up `{symbol}`: {reason}")]
    LspUnavailable { symbol: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceLoc {
    pub file: PathBuf,
    pub line: u32,
}

impl SourceLoc {
    pub fn new(file: impl Into<PathBuf>, line: u32) -> Self {
        SourceLoc {
            file: file.into(),
            line,
        }
    }

    pub fn parse(text: &str) -> Result<Self, NavError> {
        let bad = || NavError::BadLocSyntax(text.to_string());
        let (file, line) = text.trim().rsplit_once(':').ok_or_else(bad)?;
        let line: u32 = line.trim().parse().map_err(|_| bad())?;
        if file.is_empty() || line == 0 {
            return Err(bad());
        }
        Ok(SourceLoc::new(file, line))
    }
}

impl FromStr for SourceLoc {
    type Err = NavError;
    fn from_str(s: &str) -> Result<Self, NavError> {
        SourceLoc::parse(s)
    }
}

impl fmt::Display for SourceLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file.display(), self.line)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolver {
    LanguageServer,
    Debugger,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Definition {
    pub location: SourceLoc,
    pub source: String,
    pub resolver: Resolver,
}

impl Definition {
    /// The text handed back to the model.
    pub fn render(&self) -> String {
        format!("{}\n{}", self.location, self.source)
    }
}

/// Where the debugger thinks a symbol is defined.
pub trait SymbolLookup {
    fn lookup(&mut self, symbol: &str) -> Option<(PathBuf, u32)>;
}

impl SymbolLookup for DebuggerSession {
    fn lookup(&mut self, symbol: &str) -> Option<(PathBuf, u32)> {
        self.lookup_symbol(symbol)
    }
}

/// Locations, `code` and `definition`, relative to one workspace.
pub struct Navigator {
    root: PathBuf,
    radius: u32,
    lsp: Option<LspClient>,
    /// Why there is no server, for error messages.
    lsp_status: String,
}

impl Navigator {
    /// A navigator without a language server.
    pub fn new(root: &Path) -> Self {
        Navigator {
            root: root.to_path_buf(),
            radius: DEFAULT_RADIUS,
            lsp: None,
            lsp_status: "no language server configured".into(),
        }
    }

    pub fn with_radius(mut self, radius: u32) -> Self {
        self.radius = radius;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn has_language_server(&self) -> bool {
        self.lsp.is_some()
    }

    pub fn language_server_status(&self) -> &str {
        &self.lsp_status
    }

    /// Connects over `transport`, runs the handshake and opens the
    /// workspace's C and C++ sources. On failure the navigator keeps
    /// working without a server and the error is returned for reporting.
    pub fn attach(&mut self, transport: Box<dyn LspTransport>) -> Result<(), LspError> {
        let mut client = LspClient::new(transport, &self.root);
        let started = client.initialize().and_then(|_| {
            for file in workspace_sources(&self.root, MAX_OPEN_FILES) {
                client.open_document(&file)?;
            }
            client.wait_until_parsed()
        });
        match started {
            Ok(()) => {
                self.lsp = Some(client);
                self.lsp_status = "language server running".into();
                Ok(())
            }
            Err(e) => {
                client.shutdown();
                self.lsp_status = e.to_string();
                Err(e)
            }
        }
    }

    /// Starts clangd (from `$DBGCHAT_CLANGD`, else `clangd` on PATH).
    pub fn start_clangd(&mut self) -> Result<(), LspError> {
        let program = std::env::var_os("DBGCHAT_CLANGD")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("clangd"));
        let transport = match ChildTransport::spawn(&program, &clangd_args(), &self.root) {
            Ok(t) => t,
            Err(e) => {
                self.lsp_status = e.to_string();
                return Err(e);
            }
        };
        self.attach(Box::new(transport))
    }

    pub fn shutdown(&mut self) {
        if let Some(mut c) = self.lsp.take() {
            c.shutdown();
        }
        self.lsp_status = "language server stopped".into();
    }

    fn resolve(&self, file: &Path) -> PathBuf {
        if file.is_absolute() {
            file.to_path_buf()
        } else {
            self.root.join(file)
        }
    }

    /// The `code` tool: a numbered window around `loc`.
    pub fn code(&self, loc: &str) -> Result<String, NavError> {
        let loc = SourceLoc::parse(loc)?;
        self.window(&loc)
    }

    fn window(&self, loc: &SourceLoc) -> Result<String, NavError> {
        source_window(&self.resolve(&loc.file), loc.line, self.radius).map_err(|e| match e {
            SourceError::SourceUnavailable(m) => NavError::SourceUnavailable(m),
        })
    }

    /// The `definition` tool.
    pub fn definition(
        &mut self,
        loc: &str,
        symbol: &str,
        fallback: Option<&mut dyn SymbolLookup>,
    ) -> Result<Definition, NavError> {
        let loc = SourceLoc::parse(loc)?;
        let symbol = symbol.trim();
        let path = self.resolve(&loc.file);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| NavError::SourceUnavailable(format!("{}: {e}", path.display())))?;
        let line_text = text.lines().nth(loc.line as usize - 1).ok_or_else(|| {
            NavError::SourceUnavailable(format!("{} has no line {}", loc.file.display(), loc.line))
        })?;
        let column = symbol_column(line_text, symbol).ok_or_else(|| NavError::SymbolNotOnLine {
            symbol: symbol.to_string(),
            loc: loc.to_string(),
        })?;

        let mut server_answered = false;
        if let Some(client) = self.lsp.as_mut() {
            let pos = Position {
                line: loc.line - 1,
                character: column,
            };
            match client.definition(&path, pos) {
                Ok(targets) => {
                    server_answered = true;
                    if let Some(t) = targets.first() {
                        let location = SourceLoc::new(self.display_path(&t.path), t.start.line + 1);
                        let source = self.window(&location)?;
                        return Ok(Definition {
                            location,
                            source,
                            resolver: Resolver::LanguageServer,
                        });
                    }
                }
                Err(e) => self.lsp_status = e.to_string(),
            }
        }
        if let Some((file, line)) = fallback.and_then(|f| f.lookup(symbol)) {
            let location = SourceLoc::new(self.display_path(&file), line);
            if let Ok(source) = self.window(&location) {
                return Ok(Definition {
                    location,
                    source,
                    resolver: Resolver::Debugger,
                });
            }
        }
        if server_answered {
            Err(NavError::DefinitionNotFound(symbol.to_string()))
        } else {
            Err(NavError::LspUnavailable {
                symbol: symbol.to_string(),
                reason: self.lsp_status.clone(),
            })
        }
    }

    /// Paths under the workspace are shown relative to it.
    fn display_path(&self, path: &Path) -> PathBuf {
        let canon = |p: &Path| p.canonicalize().unwrap_or_else(|_| p.to_path_buf());
        let (p, r) = (canon(path), canon(&self.root));
        p.strip_prefix(&r).map(Path::to_path_buf).unwrap_or(p)
    }
}

impl Drop for Navigator {
    fn drop(&mut self) {
        self.shutdown();
    }
}

pub fn clangd_args() -> Vec<String> {
    [
        "--log=error",
        "--background-index=false",
        "--pch-storage=memory",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

/// UTF-16 column of the first whole-identifier occurrence of `symbol`.
pub fn symbol_column(line: &str, symbol: &str) -> Option<u32> {
    if symbol.is_empty() {
        return None;
    }
    let is_ident = |c: char| c.is_ascii_alphanumeric() || c == '_';
    let mut from = 0;
    while let Some(off) = line[from..].find(symbol) {
        let start = from + off;
        let end = start + symbol.len();
        let before_ok = !line[..start].chars().next_back().is_some_and(is_ident)
            || !symbol.starts_with(is_ident);
        let after_ok =
            !line[end..].chars().next().is_some_and(is_ident) || !symbol.ends_with(is_ident);
        if before_ok && after_ok {
            return Some(line[..start].encode_utf16().count() as u32);
        }
        from = start + symbol.chars().next().map_or(1, char::len_utf8);
    }
    None
}

/// C and C++ sources under `root`, sorted, skipping hidden directories.
pub fn workspace_sources(root: &Path, limit: usize) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut dirs = vec![root.to_path_buf()];
    while let Some(dir) = dirs.pop() {
        let Ok(entries) = std::fs::read_dir(&dir) else {
            continue;
        };
        let mut entries: Vec<_> = entries.flatten().map(|e| e.path()).collect();
        entries.sort();
        for p in entries {
            let hidden = p
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with('.'));
            if hidden {
                continue;
            }
            if p.is_dir() {
                dirs.push(p);
            } else if matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("c" | "cc" | "cpp" | "cxx")
            ) {
                out.push(p);
            }
        }
    }
    out.sort();
    out.truncate(limit);
    out
}
