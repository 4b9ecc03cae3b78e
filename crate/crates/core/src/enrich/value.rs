//! Parsing GDB's value text and re-rendering it within fixed bounds.
//!
//! Aggregates show at most [`WIDTH_HEAD`] leading and [`WIDTH_TAIL`]
//! trailing elements; nesting past [`MAX_DEPTH`] collapses to `...`.
//! Top-level pointers are followed once and shown as `ptr → value`.

use crate::session::VariableBinding;

pub const MAX_DEPTH: usize = 3;
pub const WIDTH_HEAD: usize = 3;
pub const WIDTH_TAIL: usize = 3;
pub const ELLIPSIS: &str = "...";
/// Longest string annotation kept verbatim after a pointer.
const MAX_STRING_CHARS: usize = 80;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedValue {
    pub text: String,
    pub truncated: bool,
    /// Aggregate and dereference levels actually shown; scalars are 0.
    pub depth_reached: usize,
}

/// Source of extra values, typically the debugger evaluating in the
/// binding's frame. Returning `None` means "not available".
pub trait Evaluator {
    fn evaluate(&mut self, expression: &str) -> Option<String>;
}

impl<F: FnMut(&str) -> Option<String>> Evaluator for F {
    fn evaluate(&mut self, expression: &str) -> Option<String> {
        self(expression)
    }
}

/// An evaluator that knows nothing.
pub struct NoEvaluator;

impl Evaluator for NoEvaluator {
    fn evaluate(&mut self, _: &str) -> Option<String> {
        None
    }
}

/// A parsed value. Runs of identical elements keep their repeat count
/// rather than being expanded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GdbValue {
    Scalar(String),
    /// `{...}` with named fields (struct/union) or bare elements (array).
    Aggregate {
        items: Vec<Item>,
        truncated: bool,
    },
    /// A char array printed as string and char segments.
    Chars {
        runs: Vec<(String, u64)>,
        truncated: bool,
    },
    /// `0x...`, optionally followed by `<symbol+off>` and the characters
    /// GDB shows for char pointers.
    Pointer {
        address: String,
        symbol: Option<String>,
        /// The character data exactly as printed.
        chars: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Item {
    pub name: Option<String>,
    pub value: GdbValue,
    pub repeat: u64,
}

impl GdbValue {
    fn is_aggregate(&self) -> bool {
        matches!(self, GdbValue::Aggregate { .. } | GdbValue::Chars { .. })
    }

    /// Number of logical elements of an aggregate.
    pub fn len(&self) -> u64 {
        match self {
            GdbValue::Aggregate { items, .. } => items.iter().map(|i| i.repeat).sum(),
            GdbValue::Chars { runs, .. } => runs.iter().map(|(_, n)| n).sum(),
            _ => 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn parse_value(text: &str) -> GdbValue {
    let mut p = ValueParser {
        s: text.as_bytes(),
        src: text,
        pos: 0,
    };
    match p.value(true) {
        Some(v) => {
            p.ws();
            if p.pos == p.s.len() {
                v
            } else {
                GdbValue::Scalar(text.trim().to_string())
            }
        }
        None => GdbValue::Scalar(text.trim().to_string()),
    }
}

struct ValueParser<'a> {
    s: &'a [u8],
    src: &'a str,
    pos: usize,
}

impl<'a> ValueParser<'a> {
    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n')) {
            self.pos += 1;
        }
    }

    fn eat_str(&mut self, lit: &str) -> bool {
        if self.rest().starts_with(lit) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    /// `top` allows a bare run of string/char segments (a char array).
    fn value(&mut self, top: bool) -> Option<GdbValue> {
        self.ws();
        match self.peek()? {
            b'{' => self.aggregate(),
            b'"' | b'\'' if top => self.chars(),
            b'"' => {
                let s = self.quoted(b'"')?;
                let truncated = self.eat_str("...");
                Some(GdbValue::Chars {
                    runs: split_chars(&s),
                    truncated,
                })
            }
            b'(' => {
                // `(type *) 0x...` prefix
                let close = self.matching(b'(', b')')?;
                self.pos = close + 1;
                self.value(top)
            }
            b'<' => {
                let close = self.matching(b'<', b'>')?;
                let text = self.src[self.pos..=close].to_string();
                self.pos = close + 1;
                Some(GdbValue::Scalar(text))
            }
            _ if self.rest().starts_with("0x") => self.pointer(),
            _ => self.scalar(),
        }
    }

    fn matching(&self, open: u8, close: u8) -> Option<usize> {
        let mut depth = 0usize;
        let mut i = self.pos;
        let mut quote: Option<u8> = None;
        while i < self.s.len() {
            let b = self.s[i];
            if let Some(q) = quote {
                if b == b'\\' {
                    i += 1;
                } else if b == q {
                    quote = None;
                }
            } else if b == b'"' || (b == b'\'' && open != b'<') {
                quote = Some(b);
            } else if b == open {
                depth += 1;
            } else if b == close {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            i += 1;
        }
        None
    }

    fn quoted(&mut self, q: u8) -> Option<String> {
        let start = self.pos;
        self.pos += 1;
        while let Some(b) = self.peek() {
            self.pos += 1;
            if b == b'\\' {
                self.pos += 1;
            } else if b == q {
                return Some(self.src.get(start + 1..self.pos - 1)?.to_string());
            }
        }
        None
    }

    fn repeats(&mut self) -> Option<u64> {
        let save = self.pos;
        self.ws();
        if self.eat_str("<repeats ") {
            let digits: String = self
                .rest()
                .chars()
                .take_while(char::is_ascii_digit)
                .collect();
            self.pos += digits.len();
            if self.eat_str(" times>") {
                return digits.parse().ok();
            }
        }
        self.pos = save;
        None
    }

    fn chars(&mut self) -> Option<GdbValue> {
        let mut runs = Vec::new();
        let mut truncated = false;
        loop {
            self.ws();
            match self.peek()? {
                b'"' => {
                    let s = self.quoted(b'"')?;
                    runs.extend(split_chars(&s));
                }
                b'\'' => {
                    let c = self.quoted(b'\'')?;
                    let n = self.repeats().unwrap_or(1);
                    runs.push((c, n));
                }
                _ => return None,
            }
            if self.eat_str("...") {
                truncated = true;
            }
            let save = self.pos;
            if self.eat_str(", ") && matches!(self.peek(), Some(b'"' | b'\'')) {
                continue;
            }
            self.pos = save;
            break;
        }
        Some(GdbValue::Chars { runs, truncated })
    }

    fn aggregate(&mut self) -> Option<GdbValue> {
        self.pos += 1;
        let mut items = Vec::new();
        let mut truncated = false;
        self.ws();
        if self.peek() == Some(b'}') {
            self.pos += 1;
            return Some(GdbValue::Aggregate { items, truncated });
        }
        loop {
            self.ws();
            let name = self.field_name();
            let value = self.value(name.is_some())?;
            let repeat = self.repeats().unwrap_or(1);
            items.push(Item {
                name,
                value,
                repeat,
            });
            if self.eat_str("...") {
                truncated = true;
            }
            self.ws();
            match self.peek()? {
                b',' => self.pos += 1,
                b'}' => {
                    self.pos += 1;
                    return Some(GdbValue::Aggregate { items, truncated });
                }
                _ => return None,
            }
        }
    }

    /// `name = `, `<Base> = ` or `[idx] = ` ahead of a field value.
    fn field_name(&mut self) -> Option<String> {
        let rest = self.rest();
        let end = match rest.as_bytes().first()? {
            b'<' | b'[' => {
                let close = if rest.starts_with('<') { '>' } else { ']' };
                rest.find(close)? + 1
            }
            c if c.is_ascii_alphabetic() || *c == b'_' => rest
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                .unwrap_or(rest.len()),
            _ => return None,
        };
        if rest[end..].starts_with(" = ") {
            let name = rest[..end].to_string();
            self.pos += end + 3;
            Some(name)
        } else {
            None
        }
    }

    fn pointer(&mut self) -> Option<GdbValue> {
        let len = self.rest()[2..]
            .find(|c: char| !c.is_ascii_hexdigit())
            .map(|n| n + 2)
            .unwrap_or(self.rest().len());
        let address = self.rest()[..len].to_string();
        self.pos += len;
        let mut symbol = None;
        let mut chars = None;
        let save = self.pos;
        if self.eat_str(" <") {
            self.pos -= 1;
            let close = self.matching(b'<', b'>')?;
            symbol = Some(self.src[self.pos..=close].to_string());
            self.pos = close + 1;
        } else {
            self.pos = save;
        }
        let save = self.pos;
        if self.eat_str(" ") && matches!(self.peek(), Some(b'"' | b'\'')) {
            let start = self.pos;
            self.chars()?;
            chars = Some(self.src[start..self.pos].to_string());
        } else {
            self.pos = save;
        }
        Some(GdbValue::Pointer {
            address,
            symbol,
            chars,
        })
    }

    fn scalar(&mut self) -> Option<GdbValue> {
        let start = self.pos;
        let mut depth = 0i32;
        while let Some(b) = self.peek() {
            match b {
                b'\'' | b'"' => {
                    self.quoted(b)?;
                    continue;
                }
                b'(' | b'[' | b'{' => depth += 1,
                b')' | b']' => depth -= 1,
                b'}' if depth == 0 => break,
                b'}' => depth -= 1,
                b',' if depth == 0 => break,
                b'<' if depth == 0 && self.rest().starts_with("<repeats ") => break,
                _ => {}
            }
            if self.rest().starts_with("...") && depth == 0 {
                break;
            }
            self.pos += 1;
        }
        let text = self.src[start..self.pos].trim_end();
        if text.is_empty() {
            return None;
        }
        Some(GdbValue::Scalar(text.to_string()))
    }
}

/// Splits string-literal contents into per-character runs, keeping escape
/// sequences as single characters.
fn split_chars(s: &str) -> Vec<(String, u64)> {
    let mut out: Vec<(String, u64)> = Vec::new();
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        let mut unit = String::from(c);
        if c == '\\' {
            if let Some(n) = chars.next() {
                unit.push(n);
                if n.is_ascii_digit() {
                    for _ in 0..2 {
                        match chars.peek() {
                            Some(d) if d.is_ascii_digit() => {
                                unit.push(*d);
                                chars.next();
                            }
                            _ => break,
                        }
                    }
                }
            }
        }
        match out.last_mut() {
            Some((last, n)) if *last == unit => *n += 1,
            _ => out.push((unit, 1)),
        }
    }
    out
}

/// Declared length of an array type such as `char [150]` or `int [3][4]`.
pub fn array_length(declared_type: &str) -> Option<u64> {
    let open = declared_type.find('[')?;
    let close = declared_type[open..].find(']')? + open;
    declared_type[open + 1..close].trim().parse().ok()
}

struct Renderer {
    truncated: bool,
    depth_reached: usize,
}

impl Renderer {
    fn value(&mut self, v: &GdbValue, level: usize) -> String {
        match v {
            GdbValue::Scalar(s) => s.clone(),
            GdbValue::Pointer {
                address,
                symbol,
                chars,
            } => {
                let mut out = address.clone();
                if let Some(sym) = symbol {
                    out = format!("{out} {sym}");
                }
                if let Some(c) = chars {
                    out = format!("{out} {}", clip_string(c, &mut self.truncated));
                }
                out
            }
            GdbValue::Aggregate { .. } | GdbValue::Chars { .. } if level > MAX_DEPTH => {
                self.truncated = true;
                ELLIPSIS.to_string()
            }
            GdbValue::Aggregate { items, truncated } => {
                self.depth_reached = self.depth_reached.max(level);
                if *truncated {
                    self.truncated = true;
                }
                let named = items.iter().any(|i| i.name.is_some());
                let parts = self.elements(items, level, None);
                if named {
                    format!("{{{}}}", parts.join(", "))
                } else {
                    format!("[{}]", parts.join(", "))
                }
            }
            GdbValue::Chars { runs, truncated } => {
                self.depth_reached = self.depth_reached.max(level);
                if *truncated {
                    self.truncated = true;
                }
                let items: Vec<Item> = runs
                    .iter()
                    .map(|(c, n)| Item {
                        name: None,
                        value: GdbValue::Scalar(format!("'{c}'")),
                        repeat: *n,
                    })
                    .collect();
                format!("[{}]", self.elements(&items, level, None).join(", "))
            }
        }
    }

    /// Renders elements with the head/tail width rule. `tail` supplies
    /// elements GDB did not print, when the caller could fetch them.
    fn elements(&mut self, items: &[Item], level: usize, tail: Option<Vec<String>>) -> Vec<String> {
        let n: u64 = items.iter().map(|i| i.repeat).sum();
        let max = (WIDTH_HEAD + WIDTH_TAIL) as u64;
        let pick = |idx: u64| -> &Item {
            let mut seen = 0;
            for it in items {
                seen += it.repeat;
                if idx < seen {
                    return it;
                }
            }
            unreachable!("index within logical length")
        };
        let render_item = |this: &mut Self, it: &Item| -> String {
            let v = this.value(&it.value, level + 1);
            match &it.name {
                Some(name) => format!("{name} = {v}"),
                None => v,
            }
        };
        if let Some(tail) = tail {
            let mut parts: Vec<String> = (0..n.min(WIDTH_HEAD as u64))
                .map(|i| render_item(self, pick(i)))
                .collect();
            parts.push(ELLIPSIS.to_string());
            parts.extend(tail);
            self.truncated = true;
            return parts;
        }
        if n <= max {
            return (0..n).map(|i| render_item(self, pick(i))).collect();
        }
        self.truncated = true;
        let mut parts: Vec<String> = (0..WIDTH_HEAD as u64)
            .map(|i| render_item(self, pick(i)))
            .collect();
        parts.push(ELLIPSIS.to_string());
        parts.extend((n - WIDTH_TAIL as u64..n).map(|i| render_item(self, pick(i))));
        parts
    }
}

/// Renders a parsed value with no dereferencing, starting at depth 1.
pub fn render_parsed(value: &GdbValue) -> RenderedValue {
    let mut r = Renderer {
        truncated: false,
        depth_reached: 0,
    };
    let text = r.value(value, 1);
    RenderedValue {
        text,
        truncated: r.truncated,
        depth_reached: r.depth_reached,
    }
}

/// Renders a variable for the enriched stack. Pointers are followed one
/// level through `evaluator`; null or unreadable pointers stay as bare
/// addresses. Never fails: unparseable text is passed through.
pub fn render_value(binding: &VariableBinding, evaluator: &mut dyn Evaluator) -> RenderedValue {
    let parsed = parse_value(&binding.raw_value);
    let mut r = Renderer {
        truncated: false,
        depth_reached: 0,
    };

    if binding.is_pointer {
        if let GdbValue::Pointer {
            address,
            symbol,
            chars,
        } = &parsed
        {
            let head = match symbol {
                Some(sym) => format!("{address} {sym}"),
                None => address.clone(),
            };
            let text = if is_null(address) {
                address.clone()
            } else if let Some(c) = chars {
                r.depth_reached = 1;
                let shown = if c.starts_with('"') && !c.contains("<repeats ") {
                    clip_string(c, &mut r.truncated)
                } else {
                    r.value(&parse_value(c), 2)
                };
                format!("{head} → {shown}")
            } else if binding.declared_type.contains("(*)") {
                head
            } else {
                match evaluator.evaluate(&format!("*{}", binding.name)) {
                    Some(pointee) => {
                        r.depth_reached = 1;
                        let shown = r.value(&parse_value(&pointee), 2);
                        format!("{head} → {shown}")
                    }
                    None => head,
                }
            };
            return RenderedValue {
                text,
                truncated: r.truncated,
                depth_reached: r.depth_reached,
            };
        }
    }

    // GDB stops printing long arrays early; fetch the real tail when the
    // declared length says there is more.
    if let (Some(declared), true) = (array_length(&binding.declared_type), parsed.is_aggregate()) {
        let shown = parsed.len();
        let cut = match &parsed {
            GdbValue::Aggregate { truncated, .. } | GdbValue::Chars { truncated, .. } => *truncated,
            _ => false,
        };
        if cut && declared > shown && declared > (WIDTH_HEAD + WIDTH_TAIL) as u64 {
            let tail: Option<Vec<String>> = (declared - WIDTH_TAIL as u64..declared)
                .map(|i| {
                    evaluator
                        .evaluate(&format!("{}[{i}]", binding.name))
                        .map(|v| tail_element(&parsed, &v, &mut r))
                })
                .collect();
            if let Some(tail) = tail {
                r.depth_reached = 1;
                let items = as_items(&parsed);
                let parts = r.elements(&items, 1, Some(tail));
                let text = match &parsed {
                    GdbValue::Aggregate { items, .. } if items.iter().any(|i| i.name.is_some()) => {
                        format!("{{{}}}", parts.join(", "))
                    }
                    _ => format!("[{}]", parts.join(", ")),
                };
                return RenderedValue {
                    text,
                    truncated: true,
                    depth_reached: r.depth_reached,
                };
            }
        }
    }

    let text = r.value(&parsed, 1);
    RenderedValue {
        text,
        truncated: r.truncated,
        depth_reached: r.depth_reached,
    }
}

fn as_items(v: &GdbValue) -> Vec<Item> {
    match v {
        GdbValue::Aggregate { items, .. } => items.clone(),
        GdbValue::Chars { runs, .. } => runs
            .iter()
            .map(|(c, n)| Item {
                name: None,
                value: GdbValue::Scalar(format!("'{c}'")),
                repeat: *n,
            })
            .collect(),
        _ => Vec::new(),
    }
}

/// An element fetched separately, shaped like its printed siblings.
fn tail_element(parent: &GdbValue, raw: &str, r: &mut Renderer) -> String {
    match parent {
        // Single chars evaluate as `82 'R'`.
        GdbValue::Chars { .. } => match raw.find('\'') {
            Some(i) => raw[i..].to_string(),
            None => raw.to_string(),
        },
        _ => r.value(&parse_value(raw), 2),
    }
}

fn is_null(address: &str) -> bool {
    address.trim_start_matches("0x").chars().all(|c| c == '0')
}

fn clip_string(s: &str, truncated: &mut bool) -> String {
    if s.chars().count() <= MAX_STRING_CHARS {
        return s.to_string();
    }
    *truncated = true;
    let body: String = s.chars().take(MAX_STRING_CHARS - 1).collect();
    format!("{body}\"{ELLIPSIS}")
}
