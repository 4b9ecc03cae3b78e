//! Recorded debugger exchanges for deterministic replay.
//!
//! A cassette is a JSON-lines file. The first line is a header naming the
//! directory the recording was made in, so a replay can relocate paths:
//!
//! ```text
//! {"cassette":1,"root":"/tmp/dbgchat-fixtures"}
//! {"command":"","lines":["=thread-group-added,id=\"i1\"","(gdb) "]}
//! {"command":"-stack-list-frames","lines":["^done,stack=[...]","(gdb) "]}
//! {"target_output":"segv: ...\n"}
//! ```
//!
//! The empty command holds the lines GDB printed before the first command.
//! Result records are stored without their token; replay re-tokenizes.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MiError;

pub const CASSETTE_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum Entry {
    Header { cassette: u32, root: Option<String> },
    Exchange { command: String, lines: Vec<String> },
    TargetOutput { target_output: String },
}

#[derive(Debug, Clone, Default)]
pub struct Cassette {
    pub root: Option<String>,
    pub exchanges: Vec<(String, Vec<String>)>,
    pub target_outputs: Vec<String>,
}

impl Cassette {
    pub fn load(path: &Path) -> Result<Self, MiError> {
        let text = fs::read_to_string(path)
            .map_err(|e| MiError::Cassette(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, MiError> {
        let mut cassette = Cassette::default();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: Entry = serde_json::from_str(line)
                .map_err(|e| MiError::Cassette(format!("line {}: {e}", n + 1)))?;
            match entry {
                Entry::Header { cassette: v, root } => {
                    if v != CASSETTE_VERSION {
                        return Err(MiError::Cassette(format!("unsupported version {v}")));
                    }
                    cassette.root = root;
                }
                Entry::Exchange { command, lines } => cassette.exchanges.push((command, lines)),
                Entry::TargetOutput { target_output } => {
                    cassette.target_outputs.push(target_output)
                }
            }
        }
        Ok(cassette)
    }

    /// Rewrites every occurrence of the recording root to `root`.
    pub fn relocate(mut self, root: &str) -> Self {
        let Some(from) = self.root.take() else {
            self.root = Some(root.to_string());
            return self;
        };
        let fix = |s: &mut String| {
            if s.contains(&from) {
                *s = s.replace(&from, root);
            }
        };
        for (cmd, lines) in &mut self.exchanges {
            fix(cmd);
            lines.iter_mut().for_each(fix);
        }
        self.target_outputs.iter_mut().for_each(fix);
        self.root = Some(root.to_string());
        self
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |e: &Entry| {
            out.push_str(&serde_json::to_string(e).expect("cassette entries serialize"));
            out.push('\n');
        };
        push(&Entry::Header {
            cassette: CASSETTE_VERSION,
            root: self.root.clone(),
        });
        for (command, lines) in &self.exchanges {
            push(&Entry::Exchange {
                command: command.clone(),
                lines: lines.clone(),
            });
        }
        for t in &self.target_outputs {
            push(&Entry::TargetOutput {
                target_output: t.clone(),
            });
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), MiError> {
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }
}

/// Key used to match a sent command against recorded ones. Argument
/// setup embeds a per-run capture path, so it matches by command name.
pub(crate) fn match_key(command: &str) -> String {
    if command.starts_with(SET_ARGS_PREFIX) {
        SET_ARGS_PREFIX.to_string()
    } else {
        command.to_string()
    }
}

pub(crate) const SET_ARGS_PREFIX: &str = "-interpreter-exec console \"set args";

/// Serves recorded responses. Each command's responses are handed out in
/// recording order; once exhausted the last one repeats.
#[derive(Debug)]
pub(crate) struct ReplayServer {
    responses: HashMap<String, (Vec<Vec<String>>, usize)>,
    target_output: String,
}

impl ReplayServer {
    pub(crate) fn new(cassette: Cassette) -> (Self, Vec<String>) {
        let mut responses: HashMap<String, (Vec<Vec<String>>, usize)> = HashMap::new();
        let mut startup = Vec::new();
        for (command, lines) in cassette.exchanges {
            if command.is_empty() {
                startup.extend(lines);
                continue;
            }
            responses
                .entry(match_key(&command))
                .or_default()
                .0
                .push(lines);
        }
        let target_output = cassette.target_outputs.last().cloned().unwrap_or_default();
        (
            ReplayServer {
                responses,
                target_output,
            },
            startup,
        )
    }

    pub(crate) fn respond(&mut self, token: Option<u64>, command: &str) -> Vec<String> {
        let Some((list, next)) = self.responses.get_mut(&match_key(command)) else {
            let msg = super::quote_c_string(&format!("no recorded response for: {command}"));
            let tok = token.map(|t| t.to_string()).unwrap_or_default();
            return vec![format!("{tok}^error,msg={msg}"), "(gdb) ".to_string()];
        };
        let idx = (*next).min(list.len() - 1);
        *next += 1;
        list[idx]
            .iter()
            .map(|line| match (token, line.starts_with('^')) {
                (Some(t), true) => format!("{t}{line}"),
                _ => line.clone(),
            })
            .collect()
    }

    pub(crate) fn target_output(&self) -> String {
        self.target_output.clone()
    }
}
