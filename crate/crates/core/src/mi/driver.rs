use std::collections::VecDeque;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use tempfile::NamedTempFile;

use super::cassette::{Cassette, ReplayServer};
use super::record::{parse_mi_line, quote_c_string, MiRecord, StreamKind};
use super::MiError;

pub const DEFAULT_COMMAND_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone)]
pub struct DebuggerConfig {
    pub gdb_path: PathBuf,
    pub command_timeout: Duration,
    pub handshake_timeout: Duration,
    /// Raw protocol output is appended here when set.
    pub transcript_path: Option<PathBuf>,
    /// Fed to the target as standard input. Defaults to `/dev/null`.
    pub stdin_path: Option<PathBuf>,
    /// Keep every exchange so it can be saved as a cassette.
    pub record: bool,
}

impl Default for DebuggerConfig {
    fn default() -> Self {
        DebuggerConfig {
            gdb_path: std::env::var_os("DBGCHAT_GDB")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("gdb")),
            command_timeout: DEFAULT_COMMAND_TIMEOUT,
            handshake_timeout: Duration::from_secs(10),
            transcript_path: None,
            stdin_path: None,
            record: false,
        }
    }
}

/// Everything GDB printed in response to one command, ending with the prompt.
#[derive(Debug, Clone)]
pub struct MiOutput {
    pub token: u64,
    pub records: Vec<MiRecord>,
    /// Console-stream text, concatenated.
    pub console: String,
}

impl MiOutput {
    /// The result record answering this command.
    pub fn result(&self) -> Option<&MiRecord> {
        self.records
            .iter()
            .find(|r| r.kind() == super::RecordKind::Result && r.token() == Some(self.token))
    }

    pub fn result_class(&self) -> Option<&str> {
        self.result().and_then(MiRecord::class)
    }

    pub fn error_message(&self) -> Option<String> {
        let r = self.result()?;
        (r.class() == Some("error")).then(|| {
            r.payload()
                .and_then(|p| p.get_str("msg"))
                .unwrap_or("")
                .to_string()
        })
    }

    pub fn log_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            if let MiRecord::Stream {
                kind: StreamKind::Log,
                text,
            } = r
            {
                out.push_str(text);
            }
        }
        out
    }
}

enum Backend {
    Live {
        child: Child,
        stdin: ChildStdin,
        lines: Receiver<String>,
        capture: NamedTempFile,
    },
    Replay {
        server: ReplayServer,
        queue: VecDeque<String>,
    },
}

/// A running debugger speaking the machine interface.
///
/// Commands are strictly serialized: `send_command` takes `&mut self` and
/// does not return until the answering prompt has been read.
pub struct DebuggerHandle {
    backend: Backend,
    next_token: u64,
    live: bool,
    timeout: Duration,
    recording: Option<Cassette>,
}

impl std::fmt::Debug for DebuggerHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DebuggerHandle")
            .field("pid", &self.pid())
            .field("live", &self.live)
            .field("next_token", &self.next_token)
            .finish()
    }
}

/// Starts GDB on `executable`. The target is loaded but not started; its
/// output goes to a capture file readable through
/// [`DebuggerHandle::captured_output`].
pub fn spawn_debugger(
    executable: &Path,
    target_args: &[String],
    config: &DebuggerConfig,
) -> Result<DebuggerHandle, MiError> {
    if !executable.is_file() {
        return Err(MiError::TargetNotFound(executable.to_path_buf()));
    }
    let executable = fs::canonicalize(executable)?;

    let mut child = Command::new(&config.gdb_path)
        .args(["-q", "-nx", "--interpreter=mi"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .process_group(0)
        .spawn()
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => {
                MiError::DebuggerNotFound(config.gdb_path.clone())
            }
            _ => MiError::Io(e),
        })?;
    let stdin = child.stdin.take().expect("piped stdin");
    let stdout = child.stdout.take().expect("piped stdout");

    let mut transcript = match &config.transcript_path {
        Some(p) => Some(OpenOptions::new().create(true).append(true).open(p)?),
        None => None,
    };
    let (tx, rx) = mpsc::channel();
    thread::Builder::new()
        .name("gdb-reader".into())
        .spawn(move || {
            let mut reader = BufReader::new(stdout);
            let mut buf = Vec::new();
            loop {
                buf.clear();
                match reader.read_until(b'\n', &mut buf) {
                    Ok(0) | Err(_) => break,
                    Ok(_) => {}
                }
                if let Some(t) = transcript.as_mut() {
                    let _ = t.write_all(&buf);
                }
                while matches!(buf.last(), Some(b'\n' | b'\r')) {
                    buf.pop();
                }
                if tx.send(String::from_utf8_lossy(&buf).into_owned()).is_err() {
                    break;
                }
            }
            if let Some(t) = transcript.as_mut() {
                let _ = t.flush();
            }
        })?;

    let capture = NamedTempFile::with_prefix("dbgchat-target-")?;
    let mut handle = DebuggerHandle {
        backend: Backend::Live {
            child,
            stdin,
            lines: rx,
            capture,
        },
        next_token: 1,
        live: true,
        timeout: config.command_timeout,
        recording: config.record.then(|| Cassette {
            exchanges: vec![(String::new(), Vec::new())],
            ..Cassette::default()
        }),
    };

    handle
        .await_prompt(config.handshake_timeout)
        .map_err(|e| match e {
            MiError::Timeout(_) | MiError::DebuggerExited => MiError::ProtocolHandshakeFailed,
            other => other,
        })?;

    for setting in [
        "-gdb-set confirm off",
        "-gdb-set pagination off",
        "-gdb-set width 0",
        "-gdb-set height 0",
    ] {
        handle.send_command(setting)?;
    }
    let load = handle.send_command(&format!(
        "-file-exec-and-symbols {}",
        quote_c_string(&executable.to_string_lossy())
    ))?;
    if let Some(msg) = load.error_message() {
        return Err(MiError::TargetLoadFailed(msg));
    }

    let capture_path = handle.capture_path().expect("live handle").to_path_buf();
    let stdin_path = config
        .stdin_path
        .clone()
        .unwrap_or_else(|| PathBuf::from("/dev/null"));
    let mut words: Vec<String> = target_args
        .iter()
        .map(|a| shell_quote(a))
        .collect::<Result<_, _>>()?;
    words.push(format!("< {}", shell_quote(&stdin_path.to_string_lossy())?));
    words.push(format!(
        "> {} 2>&1",
        shell_quote(&capture_path.to_string_lossy())?
    ));
    let out = handle.send_command(&format!("set args {}", words.join(" ")))?;
    if let Some(msg) = out.error_message() {
        return Err(MiError::TargetLoadFailed(msg));
    }
    Ok(handle)
}

fn shell_quote(s: &str) -> Result<String, MiError> {
    shlex::try_quote(s)
        .map(|q| q.into_owned())
        .map_err(|_| MiError::InvalidCommand(format!("argument cannot be quoted: {s:?}")))
}

impl DebuggerHandle {
    /// A handle answering from recorded exchanges instead of a process.
    pub fn replay(cassette: Cassette) -> DebuggerHandle {
        let (server, startup) = ReplayServer::new(cassette);
        let mut handle = DebuggerHandle {
            backend: Backend::Replay {
                server,
                queue: startup.into(),
            },
            next_token: 1,
            live: true,
            timeout: DEFAULT_COMMAND_TIMEOUT,
            recording: None,
        };
        let _ = handle.await_prompt(Duration::ZERO);
        handle
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn is_live(&self) -> bool {
        self.live
    }

    pub fn is_replay(&self) -> bool {
        matches!(self.backend, Backend::Replay { .. })
    }

    pub fn pid(&self) -> Option<u32> {
        match &self.backend {
            Backend::Live { child, .. } => Some(child.id()),
            Backend::Replay { .. } => None,
        }
    }

    fn capture_path(&self) -> Option<&Path> {
        match &self.backend {
            Backend::Live { capture, .. } => Some(capture.path()),
            Backend::Replay { .. } => None,
        }
    }

    /// Everything the target has written to stdout and stderr so far.
    pub fn captured_output(&mut self) -> String {
        let text = match &self.backend {
            Backend::Live { capture, .. } => fs::read(capture.path())
                .map(|b| String::from_utf8_lossy(&b).into_owned())
                .unwrap_or_default(),
            Backend::Replay { server, .. } => server.target_output(),
        };
        if let Some(rec) = self.recording.as_mut() {
            rec.target_outputs.push(text.clone());
        }
        text
    }

    /// Sends one command and collects records through the prompt that
    /// follows its result. Text not starting with `-` is run through the
    /// console interpreter.
    pub fn send_command(&mut self, command: &str) -> Result<MiOutput, MiError> {
        if !self.live {
            return Err(MiError::DebuggerExited);
        }
        if command.contains(['\n', '\r']) {
            return Err(MiError::InvalidCommand(
                "commands must be a single line".into(),
            ));
        }
        let wire = if command.starts_with('-') {
            command.to_string()
        } else {
            format!("-interpreter-exec console {}", quote_c_string(command))
        };
        let token = self.next_token;
        self.next_token += 1;

        if let Some(rec) = self.recording.as_mut() {
            rec.exchanges.push((wire.clone(), Vec::new()));
        }
        match &mut self.backend {
            Backend::Live { stdin, .. } => {
                let res = writeln!(stdin, "{token}{wire}").and_then(|_| stdin.flush());
                if res.is_err() {
                    self.live = false;
                    return Err(MiError::DebuggerExited);
                }
            }
            Backend::Replay { server, queue } => {
                queue.extend(server.respond(Some(token), &wire));
            }
        }

        let deadline = Instant::now() + self.timeout;
        let mut records = Vec::new();
        let mut answered = false;
        loop {
            let rec = parse_mi_line(&self.next_line(deadline)?);
            if rec.kind() == super::RecordKind::Result && rec.token() == Some(token) {
                answered = true;
                if rec.class() == Some("exit") {
                    self.live = false;
                    records.push(rec);
                    break;
                }
            }
            let done = answered && rec == MiRecord::Prompt;
            records.push(rec);
            if done {
                break;
            }
        }
        let console = records
            .iter()
            .filter_map(|r| match r {
                MiRecord::Stream {
                    kind: StreamKind::Console,
                    text,
                } => Some(text.as_str()),
                _ => None,
            })
            .collect();
        Ok(MiOutput {
            token,
            records,
            console,
        })
    }

    /// Reads records until one satisfies `pred`. Returns the records read,
    /// the matching one last.
    pub fn wait_for(
        &mut self,
        pred: impl Fn(&MiRecord) -> bool,
        timeout: Duration,
    ) -> Result<Vec<MiRecord>, MiError> {
        let deadline = Instant::now() + timeout;
        let mut records = Vec::new();
        loop {
            let rec = parse_mi_line(&self.next_line(deadline)?);
            let hit = pred(&rec);
            records.push(rec);
            if hit {
                return Ok(records);
            }
        }
    }

    fn await_prompt(&mut self, timeout: Duration) -> Result<Vec<MiRecord>, MiError> {
        self.wait_for(|r| *r == MiRecord::Prompt, timeout)
    }

    fn next_line(&mut self, deadline: Instant) -> Result<String, MiError> {
        let line = match &mut self.backend {
            Backend::Live { lines, .. } => {
                let wait = deadline.saturating_duration_since(Instant::now());
                match lines.recv_timeout(wait) {
                    Ok(l) => l,
                    Err(RecvTimeoutError::Timeout) => {
                        return Err(MiError::Timeout(self.timeout));
                    }
                    Err(RecvTimeoutError::Disconnected) => {
                        self.live = false;
                        return Err(MiError::DebuggerExited);
                    }
                }
            }
            Backend::Replay { queue, .. } => match queue.pop_front() {
                Some(l) => l,
                None => return Err(MiError::Timeout(self.timeout)),
            },
        };
        if let Some(rec) = self.recording.as_mut() {
            if let Some((_, lines)) = rec.exchanges.last_mut() {
                lines.push(strip_token(&line));
            }
        }
        Ok(line)
    }

    /// The exchanges seen so far, if recording was requested.
    pub fn take_recording(&mut self) -> Option<Cassette> {
        self.recording.take()
    }

    /// Asks GDB to exit and reaps it, killing it if it lingers.
    pub fn shutdown(&mut self) {
        if let Backend::Live { child, stdin, .. } = &mut self.backend {
            if self.live {
                let _ = writeln!(stdin, "-gdb-exit").and_then(|_| stdin.flush());
            }
            let deadline = Instant::now() + Duration::from_secs(2);
            loop {
                match child.try_wait() {
                    Ok(Some(_)) => break,
                    Ok(None) if Instant::now() < deadline => {
                        thread::sleep(Duration::from_millis(10))
                    }
                    _ => {
                        let _ = child.kill();
                        let _ = child.wait();
                        break;
                    }
                }
            }
        }
        self.live = false;
    }
}

impl Drop for DebuggerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn strip_token(line: &str) -> String {
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 && line[digits..].starts_with('^') {
        line[digits..].to_string()
    } else {
        line.to_string()
    }
}

/// Reads a raw protocol transcript into lines.
pub fn read_transcript(path: &Path) -> std::io::Result<Vec<String>> {
    let text = fs::read(path)?;
    Ok(String::from_utf8_lossy(&text)
        .lines()
        .map(str::to_string)
        .collect())
}
