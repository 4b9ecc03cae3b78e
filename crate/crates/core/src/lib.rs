//! Core of `dbgchat`: drives GDB over its machine interface, builds
//! enriched stack traces and prompts, and lets a language model issue
//! vetted debugger commands as tool calls.

pub mod enrich;
pub mod llm;
pub mod mi;
pub mod nav;
pub mod prompt;
pub mod sanitizer;
pub mod session;
#[doc(hidden)]
pub mod testkit;
pub mod wheel;
