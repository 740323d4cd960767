use thiserror::Error;

use crate::transforms::FrameTag;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("invalid pose: quaternion norm {norm} is not unit")]
    NonUnitQuaternion { norm: f64 },
    #[error("invalid pose: non-finite component")]
    NonFinite,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("initial penetration: contact force {force} N at start pose")]
    InitialPenetration { force: f64 },
    #[error("step called with dt {got} but the scene physics step is {expected}")]
    DtMismatch { expected: f64, got: f64 },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("frame mismatch: expected {expected:?}, got {got:?}")]
    FrameMismatch { expected: FrameTag, got: FrameTag },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServoError {
    #[error("point behind camera (depth {depth} m)")]
    BehindCamera { depth: f64 },
    #[error("degenerate features: interaction matrix rank {rank} < 6")]
    DegenerateFeatures { rank: usize },
    #[error("feature sets differ in size ({current} vs {reference})")]
    FeatureMismatch { current: usize, reference: usize },
    #[error("pose estimate did not converge after {iterations} iterations (last step {last_step:e})")]
    NonConvergence { iterations: usize, last_step: f64 },
    #[error("wrong phase: {op} not allowed in {phase}")]
    WrongPhase { op: &'static str, phase: String },
    #[error("object not visible: {0}")]
    ObjectNotVisible(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RlError {
    #[error("action index {index} out of range for a set of {size}")]
    ActionOutOfRange { index: usize, size: usize },
    #[error("non-finite network input")]
    NonFiniteInput,
    #[error("replay memory holds {size} transitions, batch needs {batch}")]
    UnderfullMemory { size: usize, batch: usize },
    #[error("non-finite loss {loss} (max |td| {max_td}, max |q| {max_q})")]
    NonFiniteLoss { loss: f64, max_td: f64, max_q: f64 },
    #[error("invalid rrrl config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("policy snapshot failed: {0}")]
    Snapshot(String),
    #[error("aborted")]
    Aborted,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("config validation failed: {0}")]
    Validation(String),
    #[error("config io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("artifact io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("artifact parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("policy version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("missing artifact: {0}")]
    Missing(String),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid benchmark: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Rl(#[from] RlError),
}
