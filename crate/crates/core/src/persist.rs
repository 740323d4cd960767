//! Artifact files: policies (JSON), record streams (JSON lines), taught
//! trajectories and demonstration scripts.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::ArtifactError;
use crate::rrrl::{Policy, POLICY_VERSION};
use crate::servo::{DemoKeyframe, TeachPhase, TeachSession};
use crate::transforms::Pose;

fn io_err(path: &Path, source: std::io::Error) -> ArtifactError {
    ArtifactError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, message: impl ToString) -> ArtifactError {
    ArtifactError::Parse {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

/// Writes to a sibling temp file and renames, so readers never see a
/// half-written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ArtifactError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(path, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes).map_err(|e| io_err(path, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn read_to_string(path: &Path) -> Result<String, ArtifactError> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(ArtifactError::Missing(path.display().to_string()))
        }
        Err(e) => Err(io_err(path, e)),
    }
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ArtifactError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| parse_err(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, ArtifactError> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e))
}

pub fn save_policy(path: &Path, policy: &Policy) -> Result<(), ArtifactError> {
    save_json(path, policy)
}

/// Loads a policy, checking the format version before anything else.
pub fn load_policy(path: &Path) -> Result<Policy, ArtifactError> {
    let text = read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    let found = value
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| parse_err(path, "missing integer field `version`"))?;
    if found != u64::from(POLICY_VERSION) {
        return Err(ArtifactError::VersionMismatch {
            found: found.min(u64::from(u32::MAX)) as u32,
            expected: POLICY_VERSION,
        });
    }
    let policy: Policy = serde_json::from_value(value).map_err(|e| parse_err(path, e))?;
    policy.network.check_shape().map_err(|m| parse_err(path, m))?;
    if policy.network.layer_sizes != policy.config.layer_sizes() {
        return Err(parse_err(path, "layer_sizes disagree with config"));
    }
    Ok(policy)
}

/// Serializes `records` one JSON document per line.
pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), ArtifactError> {
    write_atomic(path, to_jsonl(records).as_bytes())
}

/// Parses JSON lines, skipping blank lines. Errors name the 1-based line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ArtifactError> {
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ArtifactError::Missing(path.display().to_string()),
        _ => io_err(path, e),
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| parse_err(path, format!("line {}: {e}", i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

/// Appends one record to a JSON-lines file.
pub fn append_jsonl<T: Serialize>(path: &Path, record: &T) -> Result<(), ArtifactError> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    let mut line = serde_json::to_string(record).map_err(|e| parse_err(path, e))?;
    line.push('\n');
    f.write_all(line.as_bytes()).map_err(|e| io_err(path, e))
}

/// One recorded EE pose of a demonstration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub ee_pose: Pose,
}

/// Last line of a trajectory file.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryFooter {
    pub dgp: Pose,
    pub dvsp: Pose,
    pub dfp: Pose,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(untagged)]
enum TrajectoryLine {
    Point(TrajectoryPoint),
    Footer(TrajectoryFooter),
}

/// A finished demonstration as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TaughtTrajectory {
    pub points: Vec<TrajectoryPoint>,
    pub footer: TrajectoryFooter,
}

impl TaughtTrajectory {
    /// Fails unless the session is finished.
    pub fn from_session(session: &TeachSession) -> Option<TaughtTrajectory> {
        if session.phase != TeachPhase::Finished {
            return None;
        }
        Some(TaughtTrajectory {
            points: session
                .trajectory
                .iter()
                .map(|&(t, ee_pose)| TrajectoryPoint { t, ee_pose })
                .collect(),
            footer: TrajectoryFooter {
                dgp: session.b_x_dgp?,
                dvsp: session.b_x_dvsp?,
                dfp: session.dfp?,
                duration: session.duration,
            },
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut lines: Vec<TrajectoryLine> = self.points.iter().copied().map(TrajectoryLine::Point).collect();
        lines.push(TrajectoryLine::Footer(self.footer));
        to_jsonl(&lines)
    }
}

pub fn write_trajectory(path: &Path, traj: &TaughtTrajectory) -> Result<(), ArtifactError> {
    write_atomic(path, traj.to_jsonl().as_bytes())
}

/// Reads a trajectory file: points with strictly increasing `t`, then
/// exactly one footer as the last record.
pub fn read_trajectory(path: &Path) -> Result<TaughtTrajectory, ArtifactError> {
    let lines: Vec<TrajectoryLine> = read_jsonl(path)?;
    let mut points = Vec::with_capacity(lines.len());
    let mut footer = None;
    for (i, line) in lines.into_iter().enumerate() {
        if footer.is_some() {
            return Err(parse_err(path, format!("record {} follows the footer", i + 1)));
        }
        match line {
            TrajectoryLine::Point(p) => {
                if points.last().is_some_and(|q: &TrajectoryPoint| p.t <= q.t) {
                    return Err(parse_err(path, format!("record {}: timestamps must increase", i + 1)));
                }
                points.push(p);
            }
            TrajectoryLine::Footer(f) => footer = Some(f),
        }
    }
    let footer = footer.ok_or_else(|| parse_err(path, "missing footer record {dgp, dvsp, dfp, duration}"))?;
    Ok(TaughtTrajectory { points, footer })
}

/// Reads a demonstration script: at least one keyframe, `t` non-decreasing.
pub fn read_demo_script(path: &Path) -> Result<Vec<DemoKeyframe>, ArtifactError> {
    let frames: Vec<DemoKeyframe> = read_jsonl(path)?;
    if frames.is_empty() {
        return Err(parse_err(path, "demonstration script has no keyframes"));
    }
    if let Some(i) = frames.windows(2).position(|w| w[1].t < w[0].t) {
        return Err(parse_err(path, format!("record {}: time goes backwards", i + 2)));
    }
    Ok(frames)
}
