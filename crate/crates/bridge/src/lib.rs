//! WebSocket and HTTP front end for the workbench.
//!
//! One simulation loop owns the [`session::Session`]; every connection talks
//! to it through an ordered command queue and listens on a shared broadcast.

pub mod jobs;
pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{ClientMessage, ErrorCode, Phase, ServerMessage};
pub use server::{router, serve, spawn_loop, BridgeHandle};
pub use session::{Job, Outcome, Session};
