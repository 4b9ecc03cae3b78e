use std::path::PathBuf;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Parser;

use dbgchat_core::enrich::DEFAULT_RADIUS;
use dbgchat_core::llm::{ModelConfig, DEFAULT_API_KEY_ENV, DEFAULT_BASE_URL};
use dbgchat_core::mi::DebuggerConfig;
use dbgchat_core::prompt::DEFAULT_MAX_TOKENS;
use dbgchat_core::session::SessionConfig;

/// Debug a native program with the help of a language model.
#[derive(Debug, Parser)]
#[command(name = "dbgchat", version)]
pub struct Config {
    /// Program to debug (built with -g).
    pub target: PathBuf,

    /// Arguments passed to the program.
    #[arg(last = true)]
    pub args: Vec<String>,

    #[arg(long, default_value = "gpt-4o")]
    pub model: String,

    /// Base URL of a chat-completions compatible API.
    #[arg(long, default_value = DEFAULT_BASE_URL)]
    pub base_url: String,

    /// Environment variable holding the API key.
    #[arg(long, default_value = DEFAULT_API_KEY_ENV)]
    pub api_key_env: String,

    #[arg(long)]
    pub temperature: Option<f64>,

    /// Root of the user's sources; frames outside it are treated as library code.
    #[arg(long)]
    pub workspace_root: Option<PathBuf>,

    /// Let the model run any debugger command, including function calls.
    #[arg(long = "unsafe", conflicts_with = "whitelist")]
    pub unsafe_mode: bool,

    /// File of function names (one per line) the model may call.
    #[arg(long, value_name = "PATH")]
    pub whitelist: Option<PathBuf>,

    /// Play model turns from a script file instead of calling an API.
    #[arg(long, value_name = "PATH")]
    pub script: Option<PathBuf>,

    /// Write a line-delimited JSON log of the session.
    #[arg(long, value_name = "PATH")]
    pub log: Option<PathBuf>,

    /// Token budget for the initial prompt.
    #[arg(long, default_value_t = DEFAULT_MAX_TOKENS)]
    pub budget: usize,

    /// Lines of source shown on each side of a location.
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    pub radius: u32,

    /// File fed to the program as standard input.
    #[arg(long, value_name = "PATH")]
    pub stdin: Option<PathBuf>,

    /// Do not start clangd; `definition` uses debug information only.
    #[arg(long)]
    pub no_lsp: bool,

    /// Seconds to wait for each debugger command.
    #[arg(long, default_value_t = 30)]
    pub command_timeout: u64,

    #[arg(long, hide = true, value_name = "PATH")]
    pub record_cassette: Option<PathBuf>,

    #[arg(
        long,
        hide = true,
        value_name = "PATH",
        conflicts_with = "record_cassette"
    )]
    pub replay_cassette: Option<PathBuf>,
}

impl Config {
    pub fn workspace_root(&self) -> Result<PathBuf> {
        let root = match &self.workspace_root {
            Some(p) => p.clone(),
            None => std::env::current_dir().context("reading the current directory")?,
        };
        std::fs::canonicalize(&root).with_context(|| format!("workspace root {}", root.display()))
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            model: self.model.clone(),
            base_url: self.base_url.clone(),
            api_key_env: self.api_key_env.clone(),
            temperature: self.temperature,
            ..ModelConfig::default()
        }
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            debugger: DebuggerConfig {
                command_timeout: Duration::from_secs(self.command_timeout),
                stdin_path: self.stdin.clone(),
                record: self.record_cassette.is_some(),
                ..DebuggerConfig::default()
            },
            ..SessionConfig::default()
        }
    }
}
