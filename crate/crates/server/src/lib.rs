//! Multi-vehicle simulation sessions and their TCP front end.

pub mod client;
pub mod config;
pub mod protocol;
pub mod realtime;
pub mod server;
pub mod session;

pub use client::{Client, ClientError};
pub use config::{ConfigError, Mode, SessionConfig, UavConfig, UavKind};
pub use realtime::{RealtimeRunner, SharedSession};
pub use server::{Registry, Server, ServerHandle};
pub use session::{Session, SessionError, Status, StepReport, TaggedFrame, UavSnapshot};
