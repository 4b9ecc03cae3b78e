//! Playing recorded dialogs and auditing what they produced.

use std::io::Write;
use std::sync::{Arc, Mutex};

use dbgchat_core::llm::{validate_conversation, ChatBackend, ScriptedBackend};
use dbgchat_core::prompt::{HISTORY_LEAD, REPL_PROMPT};
use dbgchat_core::testkit::*;
use dbgchat_core::wheel::{format_echo, OutputKind, Wheel};
use serde_json::Value;

#[derive(Clone, Default)]
pub struct SharedBuf(Arc<Mutex<Vec<u8>>>);

impl Write for SharedBuf {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

impl SharedBuf {
    pub fn text(&self) -> String {
        String::from_utf8(self.0.lock().unwrap().clone()).unwrap()
    }
}

pub struct Run {
    pub wheel: Wheel,
    pub console: String,
    pub echoes: Vec<String>,
    pub log: String,
}

impl Run {
    pub fn events(&self) -> Vec<Value> {
        self.log
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    }

    pub fn of_kind(&self, kind: &str) -> Vec<Value> {
        self.events()
            .into_iter()
            .filter(|e| e["event"] == kind)
            .collect()
    }
}

pub fn run_with(cassette: &str, backend: Box<dyn ChatBackend>, inputs: &[&str]) -> Run {
    let mut wheel = replay_wheel(cassette, backend).unwrap();
    let log = SharedBuf::default();
    wheel.set_log(Box::new(log.clone()));
    let console = play(&mut wheel, inputs);
    let echoes = console
        .items
        .iter()
        .filter(|(k, _)| *k == OutputKind::Echo)
        .map(|(_, t)| t.clone())
        .collect();
    Run {
        wheel,
        console: console.text(),
        echoes,
        log: log.text(),
    }
}

pub fn run_scenario(sc: Scenario) -> Run {
    let backend = ScriptedBackend::load(&script_path(sc.script)).unwrap();
    run_with(sc.name, Box::new(backend), sc.inputs)
}

pub fn has_recommendation_heading(text: &str) -> bool {
    text.lines()
        .any(|l| l.starts_with('#') && l.trim_start_matches('#').trim() == "Recommendation")
}

/// Every executed or refused call is echoed exactly once, in order, with
/// the output the model received; every call gets exactly one answer.
pub fn audit_echoes(run: &Run) -> Result<(), String> {
    let results = run.of_kind("tool_result");
    let shown: Vec<String> = results
        .iter()
        .filter(|r| {
            let note = r["output"].as_str().unwrap_or("");
            !note.starts_with("Not run") && !note.starts_with("Interrupted")
        })
        .map(|r| {
            format_echo(
                r["call"].as_str().unwrap_or(""),
                r["output"].as_str().unwrap_or(""),
            )
        })
        .collect();
    if run.echoes != shown {
        return Err(format!("echoes {:?} != results {:?}", run.echoes, shown));
    }
    let mut cursor = 0;
    for echo in &run.echoes {
        let at = run.console[cursor..]
            .find(echo.as_str())
            .ok_or_else(|| format!("echo missing from console: {echo:?}"))?;
        cursor += at + echo.len();
    }
    let called: Vec<String> = run
        .of_kind("assistant")
        .iter()
        .flat_map(|a| a["tool_calls"].as_array().cloned().unwrap_or_default())
        .map(|c| c["id"].as_str().unwrap_or("").to_string())
        .collect();
    let answered: Vec<String> = results
        .iter()
        .map(|r| r["id"].as_str().unwrap_or("").to_string())
        .collect();
    if called != answered {
        return Err(format!("calls {called:?} answered as {answered:?}"));
    }
    validate_conversation(&run.wheel.dialog.messages, run.wheel.tools()).map_err(|e| e.to_string())
}

/// User commands typed before a question reach the next prompt exactly
/// once, and nothing the model ran is recorded as user history.
pub fn audit_history(run: &Run, typed: &[(&str, &str)]) -> Result<(), String> {
    let prompts = run.of_kind("prompt");
    let first = prompts.first().ok_or("no prompt was sent")?;
    let messages = first["messages"]
        .as_array()
        .ok_or("prompt without messages")?;
    let user = messages
        .last()
        .and_then(|m| m["content"].as_str())
        .unwrap_or("");
    let mut section = format!("{HISTORY_LEAD}\n```\n");
    for (cmd, out) in typed {
        section.push_str(&format!("{REPL_PROMPT}{cmd}\n{out}\n"));
    }
    section.push_str("```\n");
    if user.matches(&section).count() != 1 {
        return Err(format!(
            "history section {section:?} not found once in the prompt"
        ));
    }
    if !run.wheel.history.is_empty() {
        return Err(format!(
            "{} entries left in history after sending",
            run.wheel.history.len()
        ));
    }
    Ok(())
}
