//! Enriched stack traces: bounded value rendering, source windows and
//! library-frame elision.

mod source;
mod stack;
mod value;

pub use source::{
    source_window, window_bounds, window_from_text, SourceError, CURRENT_LINE_MARKER,
    DEFAULT_RADIUS,
};
pub use stack::{
    build_enriched_stack, elision_marker, is_user_frame, EnrichOptions, EnrichedFrame,
    EnrichedStack, RenderedBinding, StackEntry, StackSource, MAX_GLOBALS,
};
pub use value::{
    array_length, parse_value, render_parsed, render_value, Evaluator, GdbValue, Item, NoEvaluator,
    RenderedValue, ELLIPSIS, MAX_DEPTH, WIDTH_HEAD, WIDTH_TAIL,
};
