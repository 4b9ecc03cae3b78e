mod common;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use common::dialog::{
    audit_echoes, audit_history, has_recommendation_heading, run_scenario, run_with,
};

use dbgchat_core::llm::{
    validate_conversation, ChatBackend, ChatMessage, CompletionEvent, LlmError, Role, ScriptItem,
    ScriptedBackend, ToolCallRequest, ToolSpec,
};
use dbgchat_core::prompt::{HISTORY_LEAD, REPL_PROMPT};
use dbgchat_core::testkit::*;
use dbgchat_core::wheel::{InputOutcome, TurnEnd};
use serde_json::{json, Value};

#[test]
fn marbles_dialog_is_byte_identical_across_runs() {
    let a = run_scenario(MARBLES_SCENARIO);
    let b = run_scenario(MARBLES_SCENARIO);
    assert_eq!(a.log, b.log);
    assert_eq!(a.console, b.console);

    assert_eq!(a.of_kind("debugger_command").len(), 1);
    assert_eq!(a.of_kind("prompt").len(), 1);
    let results = a.of_kind("tool_result");
    assert!(results.len() >= 3);
    assert!(results
        .iter()
        .any(|r| r["name"] == "debug" && r["call"] == "p len" && r["output"] == "150"));
    let last = a.of_kind("assistant").pop().unwrap();
    assert!(has_recommendation_heading(last["text"].as_str().unwrap()));
    assert_eq!(a.of_kind("turn_end")[0]["end"], "Answered");
    audit_echoes(&a).unwrap();
}

#[test]
fn marbles_history_discipline() {
    let run = run_scenario(MARBLES_SCENARIO);
    audit_history(&run, &[("p n", "5")]).unwrap();
    let prompt = &run.of_kind("prompt")[0]["messages"];
    let user = prompt[1]["content"].as_str().unwrap();
    // The command typed before the question is in the prompt, once.
    let expected = format!("{HISTORY_LEAD}\n```\n{REPL_PROMPT}p n\n5\n```\n");
    assert_eq!(user.matches(&expected).count(), 1);
    assert!(user.ends_with("Why doesn't stats have 5 elements?"));
    // Model-issued commands never enter the user's history.
    assert!(run.wheel.history.is_empty());
}

#[test]
fn followups_carry_only_new_commands() {
    let backend = ScriptedBackend::new(vec![
        vec![ScriptItem::Text("first".into())],
        vec![ScriptItem::Text("second".into())],
    ]);
    let run = run_with(
        "dialog_marbles",
        Box::new(backend),
        &["p n", "Why?", "p len", "And now?", "Still?"],
    );
    let prompts = run.of_kind("prompt");
    assert_eq!(prompts.len(), 3);
    assert_eq!(prompts[0]["messages"].as_array().unwrap().len(), 2);
    let second = prompts[1]["messages"][0]["content"].as_str().unwrap();
    assert_eq!(
        second,
        format!("{HISTORY_LEAD}\n```\n{REPL_PROMPT}p len\n150\n```\n\nAnd now?")
    );
    assert_eq!(prompts[2]["messages"][0]["content"], "Still?");
    // The script ran out on the third question.
    let ends: Vec<_> = run
        .of_kind("turn_end")
        .iter()
        .map(|e| e["end"].clone())
        .collect();
    assert_eq!(ends[..2], [json!("Answered"), json!("Answered")]);
    assert!(ends[2].as_str().unwrap().starts_with("Error"));
}

#[test]
fn denied_call_is_reported_not_run() {
    let run = run_scenario(DENIED_SCENARIO);
    let results = run.of_kind("tool_result");
    assert_eq!(results[0]["call"], "call unlink(\"x\")");
    assert_eq!(results[0]["denied"], true);
    assert_eq!(results[0]["executed"], false);
    assert_eq!(
        results[0]["output"],
        "Command denied: function call: unlink"
    );
    assert_eq!(results[1]["output"], "0x0");
    assert!(run
        .console
        .contains("call unlink(\"x\") \u{2192}\n    Command denied: function call: unlink\n"));
    audit_echoes(&run).unwrap();
}

#[test]
fn prose_only_dialog() {
    let run = run_scenario(PROSE_SCENARIO);
    assert!(run.echoes.is_empty());
    let end = &run.of_kind("turn_end")[0];
    assert_eq!(
        (end["end"].as_str(), end["tool_calls"].as_u64()),
        (Some("Answered"), Some(0))
    );
    assert!(has_recommendation_heading(&run.console));
    let prompt = &run.of_kind("prompt")[0]["messages"][1]["content"];
    assert!(!prompt.as_str().unwrap().contains(HISTORY_LEAD));
}

#[test]
fn tool_cap_stops_the_turn() {
    let calls: Vec<ScriptItem> = (0..20)
        .map(|_| ScriptItem::ToolCall {
            name: "debug".into(),
            arguments: json!({"command": "p n"}),
        })
        .collect();
    let backend = ScriptedBackend::new(vec![calls]);
    let mut wheel = replay_wheel("dialog_marbles", Box::new(backend)).unwrap();
    let mut console = dbgchat_core::wheel::BufferConsole::default();
    let InputOutcome::Chat(summary) = wheel.handle_input("Why?", &mut console) else {
        panic!()
    };
    assert_eq!(summary.tool_calls, 16);
    assert_eq!(summary.end, TurnEnd::ToolCap);
    let not_run = wheel
        .dialog
        .messages
        .iter()
        .filter(|m| m.role == Role::Tool && m.content.starts_with("Not run"))
        .count();
    assert_eq!(not_run, 4);
    validate_conversation(&wheel.dialog.messages, wheel.tools()).unwrap();
}

#[test]
fn unknown_and_malformed_calls() {
    let backend = ScriptedBackend::new(vec![
        vec![
            ScriptItem::ToolCall {
                name: "shell".into(),
                arguments: json!({"command": "rm -rf /"}),
            },
            ScriptItem::ToolCall {
                name: "debug".into(),
                arguments: json!({"cmd": "bt"}),
            },
        ],
        vec![ScriptItem::Text("ok".into())],
    ]);
    let run = run_with("dialog_marbles", Box::new(backend), &["Why?"]);
    assert!(run
        .console
        .contains("(ignored call to unknown tool `shell`)"));
    let results = run.of_kind("tool_result");
    assert_eq!(results.len(), 1);
    assert!(results[0]["output"]
        .as_str()
        .unwrap()
        .starts_with("Invalid call:"));
    assert_eq!(results[0]["executed"], false);
    validate_conversation(&run.wheel.dialog.messages, run.wheel.tools()).unwrap();
}

/// Emits two calls and presses Ctrl-C while doing so.
struct Interrupting {
    flag: Arc<Mutex<Option<Arc<AtomicBool>>>>,
}

impl ChatBackend for Interrupting {
    fn complete(
        &mut self,
        _: &[ChatMessage],
        _: &[ToolSpec],
        cancel: &AtomicBool,
        on_event: &mut dyn FnMut(CompletionEvent),
    ) -> Result<(), LlmError> {
        if cancel.load(Ordering::SeqCst) {
            return Err(LlmError::Interrupted);
        }
        for i in 0..2 {
            let mut arguments = std::collections::BTreeMap::new();
            arguments.insert("command".to_string(), "p n".to_string());
            on_event(CompletionEvent::ToolCall(ToolCallRequest {
                id: format!("c{i}"),
                name: "debug".into(),
                arguments,
            }));
        }
        if let Some(f) = self.flag.lock().unwrap().as_ref() {
            f.store(true, Ordering::SeqCst);
        }
        on_event(CompletionEvent::Done("tool_calls".into()));
        Ok(())
    }

    fn describe(&self) -> Value {
        json!({"backend": "interrupting"})
    }
}

#[test]
fn interrupt_aborts_the_turn_but_not_the_session() {
    let flag = Arc::new(Mutex::new(None));
    let backend = Interrupting { flag: flag.clone() };
    let mut wheel = replay_wheel("dialog_marbles", Box::new(backend)).unwrap();
    *flag.lock().unwrap() = Some(wheel.cancel_flag());
    let mut console = dbgchat_core::wheel::BufferConsole::default();
    let InputOutcome::Chat(summary) = wheel.handle_input("Why?", &mut console) else {
        panic!()
    };
    assert_eq!(summary.end, TurnEnd::Interrupted);
    assert_eq!(summary.tool_calls, 0);
    validate_conversation(&wheel.dialog.messages, wheel.tools()).unwrap();
    // The session is still usable.
    assert_eq!(
        wheel.handle_input("p n", &mut console),
        InputOutcome::Debugger
    );
    assert!(console.text().ends_with("5\n"));
}

#[test]
fn stop_state_survives_scripted_turns() {
    let mut turns = 0;
    for fixture in CRASH_FIXTURES {
        let backend = ScriptedBackend::new(stop_state_turns(STOP_STATE_TURNS_PER_FIXTURE));
        let mut wheel = replay_wheel(&format!("stopstate_{fixture}"), Box::new(backend)).unwrap();
        for i in 0..STOP_STATE_TURNS_PER_FIXTURE {
            let before = snapshot(&mut wheel.session);
            assert!(before.stop.is_some() && before.innermost.is_some());
            play(&mut wheel, &[&format!("question {}", i + 1)]);
            assert_eq!(
                snapshot(&mut wheel.session),
                before,
                "{fixture} turn {}",
                i + 1
            );
            turns += 1;
        }
    }
    assert!(turns >= 100);
}

#[test]
fn quit_and_empty_lines() {
    let backend = ScriptedBackend::new(vec![]);
    let mut wheel = replay_wheel("dialog_prose", Box::new(backend)).unwrap();
    let mut console = dbgchat_core::wheel::BufferConsole::default();
    assert_eq!(wheel.handle_input("   ", &mut console), InputOutcome::Empty);
    for q in ["quit", "q", "exit"] {
        assert_eq!(wheel.handle_input(q, &mut console), InputOutcome::Quit);
    }
    assert!(console.items.is_empty());
}
