//! The single workbench configuration document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::ControlConfig;
use crate::error::ConfigError;
use crate::rrrl::RrrlConfig;
use crate::servo::{CameraModel, TeachConfig};
use crate::simenv::SceneConfig;

/// Default artifact locations, relative to the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArtifactPaths {
    pub traj: PathBuf,
    pub policy: PathBuf,
    pub report: PathBuf,
    pub training_log: PathBuf,
}

impl Default for ArtifactPaths {
    fn default() -> Self {
        Self {
            traj: "artifacts/traj.jsonl".into(),
            policy: "artifacts/policy.json".into(),
            report: "artifacts/report.json".into(),
            training_log: "artifacts/train_log.jsonl".into(),
        }
    }
}

impl ArtifactPaths {
    fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("traj", &self.traj),
            ("policy", &self.policy),
            ("report", &self.report),
            ("training_log", &self.training_log),
        ] {
            if p.as_os_str().is_empty() || p.file_name().is_none() {
                return Err(format!("paths.{name} must name a file"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkbenchConfig {
    pub scene: SceneConfig,
    pub control: ControlConfig,
    pub camera: CameraModel,
    pub teach: TeachConfig,
    pub rrrl: RrrlConfig,
    pub paths: ArtifactPaths,
}

impl WorkbenchConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = |r: Result<(), String>| r.map_err(ConfigError::Validation);
        self.scene.validate().map_err(|e| ConfigError::Validation(e.to_string()))?;
        v(self.control.validate())?;
        v(self.camera.validate())?;
        v(self.teach.validate())?;
        self.rrrl.validate().map_err(|e| ConfigError::Validation(e.to_string()))?;
        v(self.paths.validate())
    }

    /// Parses and validates; absent keys take their defaults.
    pub fn from_json(text: &str) -> Result<WorkbenchConfig, ConfigError> {
        let config: WorkbenchConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

pub fn load_config(path: &Path) -> Result<WorkbenchConfig, ConfigError> {
    WorkbenchConfig::from_json(&std::fs::read_to_string(path)?)
}

pub fn save_config(path: &Path, config: &WorkbenchConfig) -> Result<(), ConfigError> {
    crate::persist::write_atomic(path, config.to_json().as_bytes()).map_err(|e| match e {
        crate::error::ArtifactError::Io { source, .. } => ConfigError::Io(source),
        other => ConfigError::Validation(other.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(WorkbenchConfig::from_json("{}").unwrap(), WorkbenchConfig::default());
    }

    #[test]
    fn negative_clearance_names_the_invariant() {
        let err = WorkbenchConfig::from_json(r#"{"scene": {"hole_radius": 0.01}}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Validation(_)));
        assert!(err.to_string().contains("positive clearance"), "{err}");
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = WorkbenchConfig::from_json("{\n  \"scene\": {\n    \"hole_radius\": ,\n  }\n}").unwrap_err();
        match err {
            ConfigError::Parse { line, column, .. } => assert_eq!((line, column), (3, 20)),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = WorkbenchConfig::from_json(r#"{"scene": {"hole_radus": 0.02}}"#).unwrap_err();
        assert!(err.to_string().contains("hole_radus"), "{err}");
    }

    #[test]
    fn save_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let mut c = WorkbenchConfig::default();
        c.scene.friction_mu = 0.123_456_789_012_345_67;
        c.rrrl.episodes = 7;
        save_config(&path, &c).unwrap();
        assert_eq!(load_config(&path).unwrap(), c);
    }
}
