//! Robot tending workbench: visual-servoing teaching of gross motion and
//! region-limited residual reinforcement learning for contact-rich insertion,
//! run against a deterministic quasi-static contact simulator.

pub mod config;
pub mod control;
pub mod error;
pub mod eval;
pub mod persist;
pub mod rrrl;
pub mod servo;
pub mod simenv;
pub mod transforms;
pub mod workflow;

pub use error::*;
pub use simenv::{check_success, contact_wrench, SceneConfig, SimState, Wrench};
pub use transforms::{FrameTag, Pose};
