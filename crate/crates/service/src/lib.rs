//! HTTP service around steering sessions: datasets, sessions, suggestions,
//! previews, apply/undo, projection and drill-down, persisted as JSON under
//! a data directory.

pub mod app;
pub mod config;
pub mod error;
pub mod store;

pub use app::{router, AppState};
pub use config::ServiceConfig;
