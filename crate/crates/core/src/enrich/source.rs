//! Numbered source listings around a line.

use std::fs;
use std::path::Path;

use thiserror::Error;

/// Lines shown on each side of the current line; the window is
/// `line - radius ..= line + radius - 1`, so the default shows 10 lines.
pub const DEFAULT_RADIUS: u32 = 5;

pub const CURRENT_LINE_MARKER: &str = "---> ";
const PLAIN_MARGIN: &str = "     ";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SourceError {
    #[error("source unavailable: {0}")]
    SourceUnavailable(String),
}

/// Reads `file` and renders the window around `line`.
pub fn source_window(file: &Path, line: u32, radius: u32) -> Result<String, SourceError> {
    let bytes = fs::read(file)
        .map_err(|e| SourceError::SourceUnavailable(format!("{}: {e}", file.display())))?;
    let text = String::from_utf8_lossy(&bytes);
    window_from_text(&text, line, radius).ok_or_else(|| {
        SourceError::SourceUnavailable(format!("{}: no line {line}", file.display()))
    })
}

/// Renders a window over already-loaded text. `None` when `line` is not
/// in the text.
pub fn window_from_text(text: &str, line: u32, radius: u32) -> Option<String> {
    let lines: Vec<&str> = text.lines().collect();
    let total = lines.len() as u32;
    if line == 0 || line > total {
        return None;
    }
    let (first, last) = window_bounds(line, radius.max(1), total);
    let width = last.to_string().len();
    let mut out = String::new();
    for n in first..=last {
        let margin = if n == line {
            CURRENT_LINE_MARKER
        } else {
            PLAIN_MARGIN
        };
        let code = lines[n as usize - 1].trim_end();
        let row = format!("{margin}{n:>width$} {code}");
        out.push_str(row.trim_end());
        out.push('\n');
    }
    Some(out)
}

/// First and last line shown. A window that would cross a file edge is
/// shifted inward so it keeps its full size when the file allows.
pub fn window_bounds(line: u32, radius: u32, total: u32) -> (u32, u32) {
    let size = 2 * radius;
    let mut first = line.saturating_sub(radius).max(1);
    let mut last = first + size - 1;
    if last > total {
        last = total;
        first = total.saturating_sub(size - 1).max(1);
    }
    if line < first {
        first = line;
    }
    (first, last)
}
