//! `dbgchat`: run a native program under GDB and ask questions about the
//! crash at the interactive prompt.

mod config;

use std::io::{BufRead, IsTerminal, Write};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use dbgchat_core::llm::{ChatBackend, RemoteBackend, ScriptedBackend};
use dbgchat_core::mi::{Cassette, DebuggerHandle};
use dbgchat_core::nav::Navigator;
use dbgchat_core::prompt::REPL_PROMPT;
use dbgchat_core::sanitizer::SanitizerPolicy;
use dbgchat_core::session::DebuggerSession;
use dbgchat_core::wheel::{Console, InputOutcome, OutputKind, Wheel, WheelOptions};

use config::Config;

/// Writes to stdout; notices go to stderr so stdout stays a clean transcript.
struct Terminal;

impl Console for Terminal {
    fn emit(&mut self, kind: OutputKind, text: &str) {
        match kind {
            OutputKind::Notice => {
                eprint!("{text}");
            }
            _ => {
                let mut out = std::io::stdout().lock();
                let _ = out.write_all(text.as_bytes());
                let _ = out.flush();
            }
        }
    }
}

fn backend(cfg: &Config) -> Result<Box<dyn ChatBackend>> {
    match &cfg.script {
        Some(path) => Ok(Box::new(ScriptedBackend::load(path)?)),
        None => Ok(Box::new(RemoteBackend::from_env(cfg.model_config())?)),
    }
}

fn session(cfg: &Config) -> Result<DebuggerSession> {
    let workspace = cfg.workspace_root()?;
    if let Some(path) = &cfg.replay_cassette {
        let cassette = Cassette::load(path)
            .with_context(|| format!("loading {}", path.display()))?
            .relocate(&workspace.to_string_lossy());
        let mut s =
            DebuggerSession::from_handle(DebuggerHandle::replay(cassette), cfg.session_config());
        s.set_target_args(cfg.args.clone());
        return Ok(s);
    }
    DebuggerSession::launch(&cfg.target, &cfg.args, cfg.session_config())
        .with_context(|| format!("starting the debugger on {}", cfg.target.display()))
}

fn run(cfg: Config) -> Result<()> {
    let backend = backend(&cfg)?;
    let policy = match &cfg.whitelist {
        Some(path) => SanitizerPolicy::from_flags(
            false,
            Some(
                SanitizerPolicy::whitelist_file(path)
                    .with_context(|| format!("reading {}", path.display()))?,
            ),
        ),
        None => SanitizerPolicy::from_flags(cfg.unsafe_mode, None),
    };
    let workspace = cfg.workspace_root()?;
    let mut session = session(&cfg)?;
    session.run_to_stop().context("running the target")?;

    let mut navigator = Navigator::new(&workspace).with_radius(cfg.radius);
    if !cfg.no_lsp {
        if let Err(e) = navigator.start_clangd() {
            eprintln!("(definition lookups will use the debugger only: {e})");
        }
    }

    let mut options = WheelOptions::new(&workspace);
    options.radius = cfg.radius;
    options.budget.max_tokens = cfg.budget;
    let mut wheel = Wheel::new(session, navigator, backend, policy, options);
    if let Some(path) = &cfg.log {
        let file =
            std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        wheel.set_log(Box::new(std::io::BufWriter::new(file)));
    }
    let cancel = wheel.cancel_flag();
    ctrlc::set_handler(move || cancel.store(true, std::sync::atomic::Ordering::SeqCst))
        .context("installing the interrupt handler")?;

    wheel.focus_user_frame();
    let mut term = Terminal;
    term.emit(OutputKind::Debugger, &wheel.stop_report());
    term.emit(OutputKind::Debugger, "\n");

    let echo_input = !std::io::stdin().is_terminal();
    let mut lines = std::io::stdin().lock().lines();
    loop {
        term.emit(OutputKind::Debugger, REPL_PROMPT);
        let Some(line) = lines.next() else {
            term.emit(OutputKind::Debugger, "\n");
            break;
        };
        let line = line.context("reading input")?;
        if echo_input {
            term.emit(OutputKind::Debugger, &format!("{line}\n"));
        }
        if wheel.handle_input(&line, &mut term) == InputOutcome::Quit {
            break;
        }
    }

    if let Some(path) = &cfg.record_cassette {
        if let Some(mut cassette) = wheel.session.handle_mut().take_recording() {
            cassette.root = Some(workspace.to_string_lossy().into_owned());
            cassette.save(path)?;
        }
    }
    wheel.shutdown();
    Ok(())
}

fn main() -> ExitCode {
    let cfg = Config::parse();
    match run(cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
