//! Session service and command-line front end for the `scenemask` engine.

pub mod commands;
pub mod embed_client;
pub mod http;
pub mod pool;
pub mod session;

pub use session::{ServiceConfig, ServiceError, SessionManager};
