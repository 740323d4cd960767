//! Pipeline steps shared by the command line and the bridge.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use crate::config::WorkbenchConfig;
use crate::error::{ArtifactError, EvalError, ServoError};
use crate::eval::Report;
use crate::persist::{save_policy, write_atomic, write_jsonl, TaughtTrajectory};
use crate::rrrl::{train, InsertionTask, RrrlConfig, TrainOptions, TrainOutcome};
use crate::servo::{pick_and_place_script, run_scripted_demo, DemoKeyframe, TeachRig, TeachSession};
use crate::transforms::Pose;

/// Height of the goal above the hole surface: the taught final pose hovers
/// just above the entrance.
pub const DFP_HOVER: f64 = 0.001;

/// Where the demonstration object rests before teaching, relative to the hole.
pub fn object_rest_pose(config: &WorkbenchConfig) -> Pose {
    config
        .scene
        .pose_above_hole(DFP_HOVER)
        .translated(&Vector3::new(-0.1, 0.08, 0.0))
}

/// The goal the demonstration is meant to reach.
pub fn intended_dfp(config: &WorkbenchConfig) -> Pose {
    config.scene.pose_above_hole(DFP_HOVER)
}

/// Carry the object from its rest pose to just above the hole in 4 s.
pub fn default_demo_script(config: &WorkbenchConfig) -> Vec<DemoKeyframe> {
    pick_and_place_script(&object_rest_pose(config), &intended_dfp(config), 0.05, 4.0)
}

pub fn teach_rig(config: &WorkbenchConfig, seed: u64) -> TeachRig {
    TeachRig::new(
        config.camera.clone(),
        config.teach.clone(),
        config.control.constraint_box.clone(),
        Pose::identity(),
        seed,
    )
}

/// Headless teaching from a script. `seed` drives the feature noise.
pub fn teach(
    config: &WorkbenchConfig,
    script: &[DemoKeyframe],
    seed: u64,
) -> Result<(TeachSession, TaughtTrajectory), ServoError> {
    let mut rig = teach_rig(config, seed);
    let session = run_scripted_demo(&mut rig, script)?;
    let traj = TaughtTrajectory::from_session(&session).expect("scripted demo ends finished");
    Ok((session, traj))
}

/// Insertion task whose goal is the taught final pose.
pub fn insertion_task(config: &WorkbenchConfig, dfp: &Pose) -> InsertionTask {
    InsertionTask {
        scene: config.scene.clone(),
        control: config.control.clone(),
        true_dfp: *dfp,
    }
}

/// Trains and writes the policy, plus the episode log when `log` is given.
pub fn train_and_save(
    task: &InsertionTask,
    config: &RrrlConfig,
    seed: u64,
    policy_path: &Path,
    log: Option<&Path>,
    opts: &mut TrainOptions,
) -> Result<TrainOutcome, EvalError> {
    let out = train(task, config, seed, opts)?;
    save_policy(policy_path, &out.policy)?;
    if let Some(log) = log {
        write_jsonl(log, &out.log)?;
    }
    Ok(out)
}

/// The markdown rendering lives next to the JSON with an `.md` extension.
pub fn markdown_path(json_path: &Path) -> PathBuf {
    json_path.with_extension("md")
}

pub fn write_report(json_path: &Path, report: &Report) -> Result<(), ArtifactError> {
    write_atomic(json_path, report.to_json().as_bytes())?;
    write_atomic(&markdown_path(json_path), report.to_markdown().as_bytes())
}
