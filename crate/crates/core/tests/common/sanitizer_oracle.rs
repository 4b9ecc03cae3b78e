//! Regex-based reference sanitizer and the verdict table loader.

use std::collections::BTreeSet;
use std::path::PathBuf;

use dbgchat_core::sanitizer::SanitizerPolicy;
use regex::Regex;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OraclePolicy {
    Strict,
    Whitelist(BTreeSet<String>),
    Unsafe,
}

impl OraclePolicy {
    pub fn parse(spec: &str) -> OraclePolicy {
        match spec {
            "strict" => OraclePolicy::Strict,
            "unsafe" => OraclePolicy::Unsafe,
            _ => {
                let names = spec.strip_prefix("whitelist:").expect("policy column");
                OraclePolicy::Whitelist(
                    names
                        .split(',')
                        .filter(|n| !n.is_empty())
                        .map(str::to_string)
                        .collect(),
                )
            }
        }
    }

    pub fn to_policy(&self) -> SanitizerPolicy {
        match self {
            OraclePolicy::Strict => SanitizerPolicy::native_strict(),
            OraclePolicy::Whitelist(s) => SanitizerPolicy::whitelist(s.iter().cloned()),
            OraclePolicy::Unsafe => SanitizerPolicy::from_flags(true, None),
        }
    }
}

pub struct Case {
    pub line: usize,
    pub policy: OraclePolicy,
    pub command: String,
    pub allow: bool,
}

pub fn table_path() -> PathBuf {
    dbgchat_core::testkit::data_dir().join("sanitizer_cases.tsv")
}

pub fn load_table() -> Vec<Case> {
    let text = std::fs::read_to_string(table_path()).expect("verdict table");
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty())
        .map(|(n, l)| {
            let cols: Vec<&str> = l.split('\t').collect();
            assert_eq!(cols.len(), 3, "line {}: {l:?}", n + 1);
            Case {
                line: n + 1,
                policy: OraclePolicy::parse(cols[0]),
                command: cols[1].to_string(),
                allow: match cols[2] {
                    "allow" => true,
                    "deny" => false,
                    other => panic!("line {}: verdict {other:?}", n + 1),
                },
            }
        })
        .collect()
}

const ALLOWED: &[&str] = &[
    "bt",
    "backtrace",
    "where",
    "up",
    "down",
    "frame",
    "f",
    "p",
    "print",
    "list",
    "l",
    "info",
    "x",
    "ptype",
    "whatis",
];
const KEYWORDS: &[&str] = &[
    "sizeof",
    "alignof",
    "_Alignof",
    "typeof",
    "__typeof__",
    "__alignof__",
    "decltype",
    "if",
    "while",
    "for",
    "switch",
    "return",
    "char",
    "short",
    "int",
    "long",
    "float",
    "double",
    "signed",
    "unsigned",
    "void",
    "const",
    "volatile",
    "struct",
    "union",
    "enum",
    "_Bool",
    "bool",
];

pub struct Oracle {
    word: Regex,
    literal: Regex,
    call: Regex,
    paren_call: Regex,
    cast_call: Regex,
    assign: Regex,
}

impl Oracle {
    pub fn new() -> Oracle {
        Oracle {
            word: Regex::new(r"^\s*([A-Za-z0-9_-]*)(/[A-Za-z0-9]*)?").unwrap(),
            literal: Regex::new(r#""(\\.|[^"\\])*"|'(\\.|[^'\\])*'"#).unwrap(),
            call: Regex::new(r"([A-Za-z_$][A-Za-z0-9_$]*)\s*\(").unwrap(),
            paren_call: Regex::new(r"\)\s*\(").unwrap(),
            cast_call: Regex::new(
                r"\(\s*((struct|union|enum)\s+\w+|const|volatile|unsigned|signed|char|short|int|long|float|double|void|_Bool|bool|\w+_t)(\s+((struct|union|enum)\s+\w+|const|volatile|unsigned|signed|char|short|int|long|float|double|void|_Bool|bool|\w+_t))*[\s*]*\)\s*\(",
            )
            .unwrap(),
            assign: Regex::new(r"(^|[^=!<>])=([^=]|$)|\+\+|--|<<=|>>=").unwrap(),
        }
    }

    pub fn allows(&self, command: &str, policy: &OraclePolicy) -> bool {
        let whitelist = match policy {
            OraclePolicy::Unsafe => return true,
            OraclePolicy::Strict => BTreeSet::new(),
            OraclePolicy::Whitelist(s) => s.clone(),
        };
        let command = command.trim();
        if command.is_empty() || command.starts_with('!') || command.starts_with('|') {
            return false;
        }
        let caps = self.word.captures(command).unwrap();
        let word = caps.get(1).unwrap().as_str();
        if !ALLOWED.contains(&word) {
            return false;
        }
        let rest = &command[caps.get(0).unwrap().end()..];
        let expr = self.literal.replace_all(rest, "0");
        for c in self.call.captures_iter(&expr) {
            let name = &c[1];
            if !KEYWORDS.contains(&name) && !whitelist.contains(name) {
                return false;
            }
        }
        let paren_calls = self.paren_call.find_iter(&expr).count();
        let casts = self.cast_call.find_iter(&expr).count();
        if paren_calls > casts {
            return false;
        }
        !self.assign.is_match(&expr)
    }
}
