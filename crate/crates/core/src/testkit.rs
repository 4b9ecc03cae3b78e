//! Helpers shared by the test suites and the corpus recorder: compiling
//! the bundled C fixtures and replaying their recorded sessions.

use std::path::{Path, PathBuf};
use std::process::Command;

use crate::llm::{ChatBackend, ScriptItem};
use crate::mi::{Cassette, DebuggerHandle, MiError};
use crate::nav::lsp::{LspError, ReplayTransport, Transcript};
use crate::nav::Navigator;
use crate::prompt::REPL_PROMPT;
use crate::sanitizer::SanitizerPolicy;
use crate::session::{DebuggerSession, SessionConfig};
use crate::session::{Frame, SessionError, StopEvent};
use crate::wheel::{BufferConsole, Console, OutputKind, Wheel, WheelOptions};

/// Directory the recordings were made in; replay rewrites it to
/// [`fixtures_dir`].
pub const RECORD_ROOT: &str = "/tmp/dbgchat-fixtures";

/// The crash fixtures, each a single C file in [`fixtures_dir`].
pub const CRASH_FIXTURES: [&str; 3] = ["segv", "divzero", "assert_demo"];

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

pub fn on_path(program: &str) -> bool {
    Command::new(program)
        .arg("--version")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

/// Whether live debugger tests can run here.
pub fn live_tools_available() -> bool {
    on_path("gdb") && on_path("cc")
}

/// Compiles `fixtures_dir()/<name>.c` into `out_dir/<name>` with debug
/// information, copying the source next to the binary first so the
/// recorded paths point into `out_dir`.
pub fn compile_fixture(name: &str, out_dir: &Path) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let src = out_dir.join(format!("{name}.c"));
    std::fs::copy(fixtures_dir().join(format!("{name}.c")), &src)?;
    let exe = out_dir.join(name);
    let status = Command::new("cc")
        .args(["-g", "-O0", "-fno-omit-frame-pointer", "-o"])
        .arg(&exe)
        .arg(&src)
        .current_dir(out_dir)
        .status()?;
    if !status.success() {
        return Err(std::io::Error::other(format!("cc failed for {name}")));
    }
    Ok(exe)
}

pub fn cassette_path(name: &str) -> PathBuf {
    data_dir().join(format!("{name}.cassette.jsonl"))
}

/// Loads a recorded cassette with paths moved into [`fixtures_dir`].
pub fn load_cassette(name: &str) -> Result<Cassette, MiError> {
    let fixtures = fixtures_dir();
    Ok(Cassette::load(&cassette_path(name))?.relocate(&fixtures.to_string_lossy()))
}

/// A session answering from the recording of fixture `name`.
pub fn replay_session(name: &str) -> Result<DebuggerSession, MiError> {
    let handle = DebuggerHandle::replay(load_cassette(name)?);
    Ok(DebuggerSession::from_handle(
        handle,
        SessionConfig::default(),
    ))
}

/// The bundled navigation project.
pub fn navproj_dir() -> PathBuf {
    fixtures_dir().join("navproj")
}

/// The recorded clangd session on [`navproj_dir`], relocated.
pub fn nav_transcript() -> Result<Transcript, LspError> {
    let root = navproj_dir();
    Ok(Transcript::load(&data_dir().join("navproj.lsp.jsonl"))?.relocate(&root.to_string_lossy()))
}

/// A navigator on [`navproj_dir`] answering from the recorded session.
pub fn replay_navigator() -> Result<Navigator, LspError> {
    let mut nav = Navigator::new(&navproj_dir());
    nav.attach(Box::new(ReplayTransport::new(nav_transcript()?)))?;
    Ok(nav)
}

/// A recorded dialog: which fixture, which script, and what the user types.
#[derive(Debug, Clone, Copy)]
pub struct Scenario {
    pub name: &'static str,
    pub fixture: &'static str,
    pub script: &'static str,
    pub inputs: &'static [&'static str],
}

/// One user debugger command, one question, several tool calls, then an
/// answer ending in a recommendation.
pub const MARBLES_SCENARIO: Scenario = Scenario {
    name: "dialog_marbles",
    fixture: "assert_demo",
    script: "marbles",
    inputs: &["p n", "Why doesn't stats have 5 elements?"],
};

pub const DENIED_SCENARIO: Scenario = Scenario {
    name: "dialog_denied",
    fixture: "segv",
    script: "denied",
    inputs: &["bt", "Why does this crash?"],
};

pub const PROSE_SCENARIO: Scenario = Scenario {
    name: "dialog_prose",
    fixture: "divzero",
    script: "prose",
    inputs: &["What went wrong?"],
};

pub const SCENARIOS: [Scenario; 3] = [MARBLES_SCENARIO, DENIED_SCENARIO, PROSE_SCENARIO];

pub fn script_path(name: &str) -> PathBuf {
    data_dir().join("scripts").join(format!("{name}.json"))
}

/// Chat turns used by the stop-state checks. Each turn mixes commands
/// that move around the stack with commands the sanitizer refuses.
pub fn stop_state_turns(count: usize) -> Vec<Vec<ScriptItem>> {
    let commands: &[&[&str]] = &[
        &["up", "p $pc"],
        &["bt", "frame 1", "info frame"],
        &["down", "continue"],
        &["next", "p 1 + 1"],
        &["call abort()", "frame 2", "info locals"],
        &["step", "finish", "up 2"],
        &["p $sp = 0", "kill", "x/4x $sp"],
        &["return", "jump 1", "until", "list"],
    ];
    let call = |c: &str| ScriptItem::ToolCall {
        name: "debug".into(),
        arguments: serde_json::json!({ "command": c }),
    };
    let mut turns = Vec::new();
    for i in 0..count {
        let mut first: Vec<ScriptItem> = commands[i % commands.len()]
            .iter()
            .map(|c| call(c))
            .collect();
        first.insert(0, ScriptItem::Text(format!("Turn {}.", i + 1)));
        turns.push(first);
        turns.push(vec![ScriptItem::Text(format!(
            "Done with turn {}.\n\n## Recommendation\n\n1. Keep looking.\n",
            i + 1
        ))]);
    }
    turns
}

pub const STOP_STATE_TURNS_PER_FIXTURE: usize = 34;

/// The state a chat turn must not change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopSnapshot {
    pub stop: Option<StopEvent>,
    pub selected_frame: Option<usize>,
    pub innermost: Option<Frame>,
}

pub fn snapshot(session: &mut DebuggerSession) -> StopSnapshot {
    StopSnapshot {
        stop: session.last_stop().cloned(),
        selected_frame: session.selected_frame().ok(),
        innermost: session.backtrace().ok().and_then(|f| f.into_iter().next()),
    }
}

/// Builds the loop around a session that has not yet been run.
pub fn wheel_for(
    mut session: DebuggerSession,
    workspace: &Path,
    backend: Box<dyn ChatBackend>,
) -> Result<Wheel, SessionError> {
    session.run_to_stop()?;
    let mut wheel = Wheel::new(
        session,
        Navigator::new(workspace),
        backend,
        SanitizerPolicy::native_strict(),
        WheelOptions::new(workspace),
    );
    wheel.focus_user_frame();
    Ok(wheel)
}

/// A loop over the recorded session `cassette`, driven by `backend`.
pub fn replay_wheel(cassette: &str, backend: Box<dyn ChatBackend>) -> Result<Wheel, SessionError> {
    let session = replay_session(cassette)?;
    wheel_for(session, &fixtures_dir(), backend)
}

/// Plays `inputs` through `wheel`, returning the console output.
pub fn play(wheel: &mut Wheel, inputs: &[&str]) -> BufferConsole {
    let mut console = BufferConsole::default();
    for line in inputs {
        console.emit(OutputKind::Debugger, &format!("{REPL_PROMPT}{line}\n"));
        wheel.handle_input(line, &mut console);
    }
    console
}
