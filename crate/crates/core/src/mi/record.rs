//! Records of the GDB/MI output stream.
//!
//! Every output line maps to exactly one [`MiRecord`]. Parsing is total:
//! anything that does not fit the grammar comes back as
//! [`MiRecord::Unparsed`], which reports itself as a log-stream record.

use std::fmt::{self, Write as _};

/// A value in a result record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MiValue {
    Const(String),
    Tuple(MiTuple),
    /// `[v, v, ...]`
    List(Vec<MiValue>),
    /// `[name=v, name=v, ...]`. GDB emits these for frame and breakpoint
    /// tables; the names are kept so the line re-serializes faithfully.
    ResultList(Vec<(String, MiValue)>),
}

/// Ordered `name=value` pairs. Keys may repeat; order is as received.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MiTuple(pub Vec<(String, MiValue)>);

impl MiTuple {
    pub fn get(&self, key: &str) -> Option<&MiValue> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.get(key).and_then(MiValue::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &MiValue)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }
}

impl MiValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            MiValue::Const(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_tuple(&self) -> Option<&MiTuple> {
        match self {
            MiValue::Tuple(t) => Some(t),
            _ => None,
        }
    }

    /// Elements of either list form, dropping result-list names.
    pub fn items(&self) -> Vec<&MiValue> {
        match self {
            MiValue::List(items) => items.iter().collect(),
            MiValue::ResultList(items) => items.iter().map(|(_, v)| v).collect(),
            _ => Vec::new(),
        }
    }

    /// Shorthand for `self.as_tuple()?.get(key)`.
    pub fn get(&self, key: &str) -> Option<&MiValue> {
        self.as_tuple().and_then(|t| t.get(key))
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.get(key).and_then(MiValue::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecordKind {
    Result,
    AsyncExec,
    AsyncStatus,
    AsyncNotify,
    ConsoleStream,
    TargetStream,
    LogStream,
    Prompt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AsyncKind {
    /// `*`
    Exec,
    /// `+`
    Status,
    /// `=`
    Notify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamKind {
    /// `~`
    Console,
    /// `@`
    Target,
    /// `&`
    Log,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MiRecord {
    Result {
        token: Option<u64>,
        class: String,
        payload: MiTuple,
    },
    Async {
        kind: AsyncKind,
        token: Option<u64>,
        class: String,
        payload: MiTuple,
    },
    Stream {
        kind: StreamKind,
        text: String,
    },
    Prompt,
    /// A line outside the grammar, kept verbatim. Reported as a log stream.
    Unparsed(String),
}

impl MiRecord {
    pub fn kind(&self) -> RecordKind {
        match self {
            MiRecord::Result { .. } => RecordKind::Result,
            MiRecord::Async { kind, .. } => match kind {
                AsyncKind::Exec => RecordKind::AsyncExec,
                AsyncKind::Status => RecordKind::AsyncStatus,
                AsyncKind::Notify => RecordKind::AsyncNotify,
            },
            MiRecord::Stream { kind, .. } => match kind {
                StreamKind::Console => RecordKind::ConsoleStream,
                StreamKind::Target => RecordKind::TargetStream,
                StreamKind::Log => RecordKind::LogStream,
            },
            MiRecord::Prompt => RecordKind::Prompt,
            MiRecord::Unparsed(_) => RecordKind::LogStream,
        }
    }

    pub fn token(&self) -> Option<u64> {
        match self {
            MiRecord::Result { token, .. } | MiRecord::Async { token, .. } => *token,
            _ => None,
        }
    }

    pub fn class(&self) -> Option<&str> {
        match self {
            MiRecord::Result { class, .. } | MiRecord::Async { class, .. } => Some(class),
            _ => None,
        }
    }

    pub fn payload(&self) -> Option<&MiTuple> {
        match self {
            MiRecord::Result { payload, .. } | MiRecord::Async { payload, .. } => Some(payload),
            _ => None,
        }
    }

    pub fn is_unparsed(&self) -> bool {
        matches!(self, MiRecord::Unparsed(_))
    }

    /// True for `*stopped` async records.
    pub fn is_stopped(&self) -> bool {
        matches!(self, MiRecord::Async { kind: AsyncKind::Exec, class, .. } if class == "stopped")
    }

    /// Renders the record in wire form, without a trailing newline.
    pub fn serialize(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for MiRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MiRecord::Result {
                token,
                class,
                payload,
            } => write_record(f, *token, '^', class, payload),
            MiRecord::Async {
                kind,
                token,
                class,
                payload,
            } => {
                let sigil = match kind {
                    AsyncKind::Exec => '*',
                    AsyncKind::Status => '+',
                    AsyncKind::Notify => '=',
                };
                write_record(f, *token, sigil, class, payload)
            }
            MiRecord::Stream { kind, text } => {
                let sigil = match kind {
                    StreamKind::Console => '~',
                    StreamKind::Target => '@',
                    StreamKind::Log => '&',
                };
                f.write_char(sigil)?;
                f.write_str(&quote_c_string(text))
            }
            MiRecord::Prompt => f.write_str("(gdb) "),
            MiRecord::Unparsed(raw) => f.write_str(raw),
        }
    }
}

fn write_record(
    f: &mut fmt::Formatter<'_>,
    token: Option<u64>,
    sigil: char,
    class: &str,
    payload: &MiTuple,
) -> fmt::Result {
    if let Some(t) = token {
        write!(f, "{t}")?;
    }
    f.write_char(sigil)?;
    f.write_str(class)?;
    for (name, value) in &payload.0 {
        write!(f, ",{name}=")?;
        write_value(f, value)?;
    }
    Ok(())
}

fn write_value(f: &mut fmt::Formatter<'_>, value: &MiValue) -> fmt::Result {
    match value {
        MiValue::Const(s) => f.write_str(&quote_c_string(s)),
        MiValue::Tuple(t) => {
            f.write_char('{')?;
            write_results(f, &t.0)?;
            f.write_char('}')
        }
        MiValue::List(items) => {
            f.write_char('[')?;
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    f.write_char(',')?;
                }
                write_value(f, v)?;
            }
            f.write_char(']')
        }
        MiValue::ResultList(items) => {
            f.write_char('[')?;
            write_results(f, items)?;
            f.write_char(']')
        }
    }
}

fn write_results(f: &mut fmt::Formatter<'_>, items: &[(String, MiValue)]) -> fmt::Result {
    for (i, (name, v)) in items.iter().enumerate() {
        if i > 0 {
            f.write_char(',')?;
        }
        write!(f, "{name}=")?;
        write_value(f, v)?;
    }
    Ok(())
}

/// Quotes `text` as an MI c-string, escaping the way GDB does.
pub fn quote_c_string(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for b in text.bytes() {
        match b {
            b'"' => out.push_str("\\\""),
            b'\\' => out.push_str("\\\\"),
            b'\n' => out.push_str("\\n"),
            b'\t' => out.push_str("\\t"),
            b'\r' => out.push_str("\\r"),
            0x07 => out.push_str("\\a"),
            0x08 => out.push_str("\\b"),
            0x0c => out.push_str("\\f"),
            0x0b => out.push_str("\\v"),
            0x1b => out.push_str("\\e"),
            0x20..=0x7e => out.push(b as char),
            _ => {
                let _ = write!(out, "\\{b:03o}");
            }
        }
    }
    out.push('"');
    out
}

/// Parses one output line (without its newline). Never fails.
pub fn parse_mi_line(line: &str) -> MiRecord {
    let trimmed = line.strip_suffix('\r').unwrap_or(line);
    if trimmed.trim_end() == "(gdb)" {
        return MiRecord::Prompt;
    }
    let mut p = Parser::new(trimmed);
    match p.record() {
        Some(rec) if p.at_end() => rec,
        _ => MiRecord::Unparsed(line.to_string()),
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(s: &'a str) -> Self {
        Parser {
            src: s.as_bytes(),
            pos: 0,
        }
    }

    fn at_end(&self) -> bool {
        self.pos == self.src.len()
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.pos += 1;
        Some(b)
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn record(&mut self) -> Option<MiRecord> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        let token = if self.pos > start {
            let digits = std::str::from_utf8(&self.src[start..self.pos]).ok()?;
            Some(digits.parse::<u64>().ok()?)
        } else {
            None
        };
        let sigil = self.bump()?;
        match sigil {
            b'^' | b'*' | b'+' | b'=' => {
                let class = self.class()?;
                let payload = self.trailing_results()?;
                Some(match sigil {
                    b'^' => MiRecord::Result {
                        token,
                        class,
                        payload,
                    },
                    b'*' => MiRecord::Async {
                        kind: AsyncKind::Exec,
                        token,
                        class,
                        payload,
                    },
                    b'+' => MiRecord::Async {
                        kind: AsyncKind::Status,
                        token,
                        class,
                        payload,
                    },
                    _ => MiRecord::Async {
                        kind: AsyncKind::Notify,
                        token,
                        class,
                        payload,
                    },
                })
            }
            b'~' | b'@' | b'&' if token.is_none() => {
                let text = self.c_string()?;
                let kind = match sigil {
                    b'~' => StreamKind::Console,
                    b'@' => StreamKind::Target,
                    _ => StreamKind::Log,
                };
                Some(MiRecord::Stream { kind, text })
            }
            _ => None,
        }
    }

    fn class(&mut self) -> Option<String> {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b == b',' {
                break;
            }
            if !(b.is_ascii_alphanumeric() || b == b'-' || b == b'_') {
                return None;
            }
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        Some(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn trailing_results(&mut self) -> Option<MiTuple> {
        let mut items = Vec::new();
        while self.eat(b',') {
            items.push(self.result()?);
        }
        Some(MiTuple(items))
    }

    fn result(&mut self) -> Option<(String, MiValue)> {
        let name = self.variable()?;
        if !self.eat(b'=') {
            return None;
        }
        Some((name, self.value()?))
    }

    fn variable(&mut self) -> Option<String> {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b.is_ascii_alphanumeric() || b == b'-' || b == b'_' || b == b'.' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos == start {
            return None;
        }
        Some(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn value(&mut self) -> Option<MiValue> {
        match self.peek()? {
            b'"' => self.c_string().map(MiValue::Const),
            b'{' => {
                self.pos += 1;
                let mut items = Vec::new();
                if !self.eat(b'}') {
                    loop {
                        items.push(self.result()?);
                        if self.eat(b'}') {
                            break;
                        }
                        if !self.eat(b',') {
                            return None;
                        }
                    }
                }
                Some(MiValue::Tuple(MiTuple(items)))
            }
            b'[' => {
                self.pos += 1;
                if self.eat(b']') {
                    return Some(MiValue::List(Vec::new()));
                }
                // A list holds either values or results; the first item decides.
                if matches!(self.peek(), Some(b'"' | b'{' | b'[')) {
                    let mut items = Vec::new();
                    loop {
                        items.push(self.value()?);
                        if self.eat(b']') {
                            break;
                        }
                        if !self.eat(b',') {
                            return None;
                        }
                    }
                    Some(MiValue::List(items))
                } else {
                    let mut items = Vec::new();
                    loop {
                        items.push(self.result()?);
                        if self.eat(b']') {
                            break;
                        }
                        if !self.eat(b',') {
                            return None;
                        }
                    }
                    Some(MiValue::ResultList(items))
                }
            }
            _ => None,
        }
    }

    fn c_string(&mut self) -> Option<String> {
        if !self.eat(b'"') {
            return None;
        }
        let mut bytes = Vec::new();
        loop {
            let b = self.bump()?;
            match b {
                b'"' => break,
                b'\\' => {
                    let e = self.bump()?;
                    match e {
                        b'n' => bytes.push(b'\n'),
                        b't' => bytes.push(b'\t'),
                        b'r' => bytes.push(b'\r'),
                        b'a' => bytes.push(0x07),
                        b'b' => bytes.push(0x08),
                        b'f' => bytes.push(0x0c),
                        b'v' => bytes.push(0x0b),
                        b'e' => bytes.push(0x1b),
                        b'0'..=b'7' => {
                            let mut v = u32::from(e - b'0');
                            for _ in 0..2 {
                                match self.peek() {
                                    Some(d @ b'0'..=b'7') => {
                                        self.pos += 1;
                                        v = v * 8 + u32::from(d - b'0');
                                    }
                                    _ => break,
                                }
                            }
                            bytes.push((v & 0xff) as u8);
                        }
                        b'x' => {
                            let mut v = 0u32;
                            let mut n = 0;
                            while let Some(d) = self.peek().and_then(|c| (c as char).to_digit(16)) {
                                if n == 2 {
                                    break;
                                }
                                self.pos += 1;
                                v = v * 16 + d;
                                n += 1;
                            }
                            if n == 0 {
                                return None;
                            }
                            bytes.push(v as u8);
                        }
                        other => bytes.push(other),
                    }
                }
                _ => bytes.push(b),
            }
        }
        Some(String::from_utf8_lossy(&bytes).into_owned())
    }
}
