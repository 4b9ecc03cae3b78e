//! Regenerates the recorded fixtures under `tests/data` from live tools.
//!
//! ```text
//! cargo run -p dbgchat-core --example record_fixtures -- [mi|dialogs|stopstate|lsp|all]
//! ```
//!
//! Everything is recorded under `/tmp/dbgchat-fixtures` so the files are
//! stable across checkouts; the tests relocate that prefix.

use std::path::{Path, PathBuf};
use std::process::Command;

use dbgchat_core::enrich::{build_enriched_stack, EnrichOptions};
use dbgchat_core::llm::ScriptedBackend;
use dbgchat_core::mi::DebuggerConfig;
use dbgchat_core::nav::lsp::{ChildTransport, RecordingTransport, Transcript};
use dbgchat_core::nav::{clangd_args, Navigator};
use dbgchat_core::session::{DebuggerSession, SessionConfig};
use dbgchat_core::testkit::*;
use dbgchat_core::wheel::Wheel;

/// (location, symbol) pairs queried when recording the navigation project.
const NAV_QUERIES: &[(&str, &str)] = &[
    ("main.c:9", "perimeter"),
    ("main.c:10", "area"),
    ("main.c:13", "global_scale"),
    ("main.c:19", "make_point"),
    ("main.c:7", "polygon"),
    ("main.c:36", "Point"),
    ("main.c:48", "MAX_POINTS"),
    ("main.c:41", "build_square"),
    ("main.c:45", "summarize"),
    ("gen/parse.c:10", "TOK_NUMBER"),
    ("gen/parse.c:11", "yylval"),
];

fn copy_dir(from: &Path, to: &Path) {
    let _ = std::fs::remove_dir_all(to);
    let status = Command::new("cp")
        .arg("-r")
        .arg(from)
        .arg(to)
        .status()
        .unwrap();
    assert!(status.success());
}

fn record_lsp() {
    let root = PathBuf::from(RECORD_ROOT).join("navproj");
    std::fs::create_dir_all(RECORD_ROOT).unwrap();
    copy_dir(&fixtures_dir().join("navproj"), &root);
    let version = Command::new("clangd").arg("--version").output().unwrap();
    let version = String::from_utf8_lossy(&version.stdout)
        .lines()
        .next()
        .unwrap_or("")
        .to_string();
    let child = ChildTransport::spawn(Path::new("clangd"), &clangd_args(), &root).unwrap();
    let recorder = RecordingTransport::new(child);
    let log = recorder.log();
    let mut nav = Navigator::new(&root);
    nav.attach(Box::new(recorder)).unwrap();
    for (loc, symbol) in NAV_QUERIES {
        match nav.definition(loc, symbol, None) {
            Ok(d) => println!("{loc} {symbol} -> {}", d.location),
            Err(e) => println!("{loc} {symbol} -> {e}"),
        }
    }
    nav.shutdown();
    let steps = log.lock().unwrap().clone();
    let t = Transcript {
        root: Some(root.to_string_lossy().into_owned()),
        server: Some(version),
        steps,
    };
    let out = data_dir().join("navproj.lsp.jsonl");
    std::fs::write(&out, t.to_jsonl()).unwrap();
    println!("wrote {}", out.display());
}

/// Console commands run after the stack is built, to widen the corpus.
const CORPUS_COMMANDS: &[&str] = &[
    "bt",
    "info frame",
    "info locals",
    "info args",
    "up",
    "info locals",
    "down",
    "list",
    "ptype main",
    "whatis main",
    "p $pc",
    "x/8xb $sp",
    "info registers rip",
    "p nosuchvar",
    "info sharedlibrary",
    "frame 1",
    "info source",
];

fn corpus_path(fixture: &str) -> PathBuf {
    PathBuf::from(RECORD_ROOT)
        .join("corpus")
        .join(format!("{fixture}.mi"))
}

fn launch(fixture: &str, corpus: bool) -> DebuggerSession {
    let exe = compile_fixture(fixture, Path::new(RECORD_ROOT)).unwrap();
    let config = SessionConfig {
        debugger: DebuggerConfig {
            record: true,
            transcript_path: corpus.then(|| corpus_path(fixture)),
            ..DebuggerConfig::default()
        },
        ..SessionConfig::default()
    };
    DebuggerSession::launch(&exe, &[], config).unwrap()
}

fn save(session: &mut DebuggerSession, name: &str) {
    let mut cassette = session.handle_mut().take_recording().unwrap();
    cassette.root = Some(RECORD_ROOT.to_string());
    cassette.save(&cassette_path(name)).unwrap();
    println!("wrote {}", cassette_path(name).display());
}

fn save_wheel(mut wheel: Wheel, name: &str) {
    save(&mut wheel.session, name);
    wheel.shutdown();
}

fn record_mi() {
    let _ = std::fs::remove_dir_all(PathBuf::from(RECORD_ROOT).join("corpus"));
    std::fs::create_dir_all(PathBuf::from(RECORD_ROOT).join("corpus")).unwrap();
    for fixture in CRASH_FIXTURES {
        let mut s = launch(fixture, true);
        s.run_to_stop().unwrap();
        let stack = build_enriched_stack(&mut s, &EnrichOptions::new(RECORD_ROOT)).unwrap();
        std::fs::write(
            data_dir().join(format!("{fixture}.stack.txt")),
            stack.render(),
        )
        .unwrap();
        save(&mut s, fixture);
        for c in CORPUS_COMMANDS {
            s.execute_console(c).unwrap();
        }
        s.shutdown();
    }
    record_dialogs(true);
    let out_dir = data_dir().join("mi_corpus");
    std::fs::create_dir_all(&out_dir).unwrap();
    for fixture in CRASH_FIXTURES {
        let out = out_dir.join(format!("{fixture}.mi"));
        std::fs::copy(corpus_path(fixture), &out).unwrap();
        let n = std::fs::read_to_string(&out).unwrap().lines().count();
        println!("wrote {} ({n} lines)", out.display());
    }
}

fn record_dialogs(corpus: bool) {
    for sc in SCENARIOS {
        let backend = ScriptedBackend::load(&script_path(sc.script)).unwrap();
        let session = launch(sc.fixture, corpus);
        let mut wheel = wheel_for(session, Path::new(RECORD_ROOT), Box::new(backend)).unwrap();
        let console = play(&mut wheel, sc.inputs);
        println!("--- {}\n{}", sc.name, console.text());
        save_wheel(wheel, sc.name);
    }
}

fn record_stop_state() {
    for fixture in CRASH_FIXTURES {
        let backend = ScriptedBackend::new(stop_state_turns(STOP_STATE_TURNS_PER_FIXTURE));
        let session = launch(fixture, false);
        let mut wheel = wheel_for(session, Path::new(RECORD_ROOT), Box::new(backend)).unwrap();
        let mut changed = 0;
        for i in 0..STOP_STATE_TURNS_PER_FIXTURE {
            let before = snapshot(&mut wheel.session);
            play(&mut wheel, &[&format!("question {}", i + 1)]);
            if snapshot(&mut wheel.session) != before {
                changed += 1;
            }
        }
        println!("{fixture}: {changed} turn(s) changed the stop state");
        save_wheel(wheel, &format!("stopstate_{fixture}"));
    }
}

fn main() {
    let what = std::env::args().nth(1).unwrap_or_else(|| "all".into());
    if what == "mi" || what == "all" {
        record_mi();
    }
    if what == "dialogs" {
        record_dialogs(false);
    }
    if what == "stopstate" || what == "all" {
        record_stop_state();
    }
    if what == "lsp" || what == "all" {
        record_lsp();
    }
}
