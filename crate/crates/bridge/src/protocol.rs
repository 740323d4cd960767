//! Wire messages. Every frame is one JSON object tagged by `type`.

use serde::{Deserialize, Serialize};
use tending_core::eval::{Group, Method, Report};
use tending_core::Pose;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
// Unit variants are written `{}` so deny_unknown_fields also covers them.
pub enum ClientMessage {
    Hello {},
    CaptureDgp {},
    CaptureDvsp {},
    StartFollow {},
    DragObject {
        pose: Pose,
    },
    FinishTeaching {},
    StartTraining {
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        episodes: Option<usize>,
    },
    StartExecution {
        method: Method,
        group: Group,
        trials: usize,
    },
    Abort {},
}

/// Session phase: the teaching phases plus the two long-running jobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Idle,
    DgpCaptured,
    Following,
    Finished,
    Training,
    Executing,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Not valid JSON, unknown tag, or a malformed field.
    BadMessage,
    /// Valid message that the current phase does not accept.
    WrongPhase,
    /// A required artifact such as the trained policy is absent.
    MissingArtifact,
    /// The command was accepted but the operation failed.
    Failed,
    /// A job stopped on request.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServerMessage {
    State {
        t: f64,
        ee_pose: Pose,
        peg_pose: Pose,
        object_pose: Pose,
        wrench: [f64; 6],
        phase: Phase,
        alpha: u8,
        max_force: f64,
    },
    Progress {
        episode: usize,
        #[serde(rename = "return")]
        episode_return: f64,
        success_rate: f64,
    },
    TeachDone {
        dfp: Pose,
        duration: f64,
    },
    TrainDone {
        policy_path: String,
    },
    ExecDone {
        report: Report,
    },
    Error {
        code: ErrorCode,
        detail: String,
    },
    Ack {
        seq: u64,
    },
}

impl ServerMessage {
    pub fn error(code: ErrorCode, detail: impl Into<String>) -> Self {
        ServerMessage::Error {
            code,
            detail: detail.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

pub fn parse_client(text: &str) -> Result<ClientMessage, String> {
    serde_json::from_str(text).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_are_snake_case() {
        assert_eq!(parse_client(r#"{"type":"capture_dgp"}"#).unwrap(), ClientMessage::CaptureDgp {});
        assert_eq!(ServerMessage::Ack { seq: 3 }.to_json(), r#"{"type":"ack","seq":3}"#);
    }

    #[test]
    fn unknown_tags_and_fields_are_rejected() {
        assert!(parse_client(r#"{"type":"fly"}"#).is_err());
        assert!(parse_client(r#"{"type":"abort","now":true}"#).is_err());
        assert!(parse_client(r#"{"type":"drag_object","pose":[0,0,0,2,0,0,0]}"#).is_err());
    }

    #[test]
    fn optional_episode_count() {
        let m = parse_client(r#"{"type":"start_training","seed":4}"#).unwrap();
        assert_eq!(m, ClientMessage::StartTraining { seed: 4, episodes: None });
    }

    #[test]
    fn method_accepts_short_pure() {
        let m = parse_client(r#"{"type":"start_execution","method":"pure","group":"perfect","trials":2}"#).unwrap();
        assert!(matches!(m, ClientMessage::StartExecution { method: Method::PureReplay, .. }));
    }
}
