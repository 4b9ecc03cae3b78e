//! A value model, its GDB print syntax, and a reference renderer for the
//! depth and width rules.

use proptest::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Int(i64),
    Struct(Vec<(String, Node)>),
    Array(Vec<Node>),
}

/// GDB prints runs of this many equal elements as `<repeats N times>`.
const REPEAT_THRESHOLD: usize = 10;

/// The value as `print` shows it with default settings.
pub fn to_gdb(node: &Node) -> String {
    match node {
        Node::Int(n) => n.to_string(),
        Node::Struct(fields) => {
            let parts: Vec<String> = fields
                .iter()
                .map(|(k, v)| format!("{k} = {}", to_gdb(v)))
                .collect();
            format!("{{{}}}", parts.join(", "))
        }
        Node::Array(items) => {
            let mut parts = Vec::new();
            let mut i = 0;
            while i < items.len() {
                let mut j = i;
                while j < items.len() && items[j] == items[i] {
                    j += 1;
                }
                let run = j - i;
                if run >= REPEAT_THRESHOLD {
                    parts.push(format!("{} <repeats {run} times>", to_gdb(&items[i])));
                } else {
                    for item in &items[i..j] {
                        parts.push(to_gdb(item));
                    }
                }
                i = j;
            }
            format!("{{{}}}", parts.join(", "))
        }
    }
}

/// Rendering by the rules: depth counts aggregate levels from 1; levels
/// past 3 become `...`; more than 6 elements keep the first and last 3.
pub fn reference_render(node: &Node) -> String {
    render_at(node, 1)
}

fn render_at(node: &Node, level: usize) -> String {
    match node {
        Node::Int(n) => n.to_string(),
        _ if level > 3 => "...".to_string(),
        Node::Struct(fields) => {
            let parts: Vec<String> = fields
                .iter()
                .map(|(k, v)| format!("{k} = {}", render_at(v, level + 1)))
                .collect();
            format!("{{{}}}", limit(parts).join(", "))
        }
        Node::Array(items) => {
            let parts: Vec<String> = items.iter().map(|v| render_at(v, level + 1)).collect();
            format!("[{}]", limit(parts).join(", "))
        }
    }
}

fn limit(parts: Vec<String>) -> Vec<String> {
    if parts.len() <= 6 {
        return parts;
    }
    let n = parts.len();
    let mut out: Vec<String> = parts[..3].to_vec();
    out.push("...".into());
    out.extend(parts[n - 3..].iter().cloned());
    out
}

/// Aggregate nesting of the model.
pub fn node_depth(node: &Node) -> usize {
    match node {
        Node::Int(_) => 0,
        Node::Struct(f) => 1 + f.iter().map(|(_, v)| node_depth(v)).max().unwrap_or(0),
        Node::Array(a) => 1 + a.iter().map(node_depth).max().unwrap_or(0),
    }
}

/// Deepest bracket nesting in rendered text.
pub fn text_depth(text: &str) -> usize {
    let (mut depth, mut max) = (0usize, 0usize);
    for c in text.chars() {
        match c {
            '{' | '[' => {
                depth += 1;
                max = max.max(depth);
            }
            '}' | ']' => depth = depth.saturating_sub(1),
            _ => {}
        }
    }
    max
}

/// Splits the top-level aggregate's elements.
pub fn top_level_items(text: &str) -> Vec<String> {
    let inner = &text[1..text.len() - 1];
    let mut items = Vec::new();
    let mut depth = 0;
    let mut cur = String::new();
    for c in inner.chars() {
        match c {
            '{' | '[' => depth += 1,
            '}' | ']' => depth -= 1,
            _ => {}
        }
        if c == ',' && depth == 0 {
            items.push(cur.trim().to_string());
            cur.clear();
        } else {
            cur.push(c);
        }
    }
    if !cur.trim().is_empty() {
        items.push(cur.trim().to_string());
    }
    items
}

pub fn arb_node() -> impl Strategy<Value = Node> {
    let leaf = (-1000i64..1000).prop_map(Node::Int);
    leaf.prop_recursive(6, 200, 12, |inner| {
        prop_oneof![
            // Runs of equal elements exercise the repeat syntax.
            (
                inner.clone(),
                1usize..25,
                prop::collection::vec(inner.clone(), 0..12)
            )
                .prop_map(|(first, run, rest)| {
                    let mut items = vec![first; run];
                    items.extend(rest);
                    Node::Array(items)
                }),
            prop::collection::vec(inner, 1..9).prop_map(|vals| {
                Node::Struct(
                    vals.into_iter()
                        .enumerate()
                        .map(|(i, v)| (format!("f{i}"), v))
                        .collect(),
                )
            }),
        ]
    })
}
