//! HTTP service and CLI over the core engine.

pub mod app;
pub mod cli;
pub mod error;
pub mod http;
pub mod llm;

pub use app::{App, Settings};
pub use error::GatewayError;
