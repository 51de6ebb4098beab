//! Syntax-customized caption generation, end to end: given a video feature
//! sequence and an exemplar sentence, generate a caption that expresses the
//! video's semantics while imitating the exemplar's constituency-parse
//! syntax. Includes the numeric core, parse-tree tooling, the model, the
//! training objective, and the full evaluation stack.

pub mod config;
pub mod corpus;
pub mod decoder;
pub mod encoders;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numcore;
pub mod syntree;
pub mod training;

pub use error::{CoreError, Result};
