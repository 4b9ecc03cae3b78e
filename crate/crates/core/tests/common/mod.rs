//! Oracles and helpers shared by the integration tests and the acceptance
//! suite. Each oracle is written from the rules, independently of the
//! library code it checks.
#![allow(dead_code)]

pub mod dialog;
pub mod navproj;
pub mod props;
pub mod render_oracle;
pub mod sanitizer_oracle;
