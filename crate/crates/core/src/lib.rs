//! Natural-language camera operation: a quantized trajectory tokenizer, a cross-modal
//! trajectory transformer, scene anchoring, and plan-driven trajectory composition.

pub mod anchor;
pub mod camera;
pub mod dataset;
pub mod error;
pub mod gpt;
pub mod nn;
pub mod planner;
pub mod tokenizer;

pub use error::{Error, Result};
