//! HTTP/NDJSON gateway for pacing sessions and the remote chat backend.

pub mod remote;
pub mod server;

pub use remote::{Backoff, HttpChatBackend, RemoteConfig};
pub use server::{bind, router, serve, serve_with_shutdown, AppState, GatewayError, ServerConfig};
