//! HTTP service and CLI plumbing around `chatcam-core`.

pub mod config;
pub mod server;

pub use config::{Config, EmbeddingConfig, GptProfile, ServiceConfig, TrainingConfig};
pub use server::{router, AppState};
