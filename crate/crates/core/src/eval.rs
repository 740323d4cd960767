//! Benchmarks: the random-policy action-set study and the execution-phase
//! comparison of pure replay, spiral search and the learned policy.

use std::fmt::Write as _;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{run_replay_descent, run_spiral_search};
use crate::error::{ArtifactError, EvalError, RlError};
use crate::rrrl::{execute, sample_uncertain_dfp, ActionSet, InsertionEpisode, InsertionTask, Policy, RrrlConfig};
use crate::simenv::SimState;
use crate::transforms::Pose;

/// Trials per action set in the study.
pub const ACTION_STUDY_TRIALS: usize = 200;
/// Decision-step cap per trial in the study.
pub const ACTION_STUDY_STEPS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[serde(alias = "pure")]
    PureReplay,
    Spiral,
    Rrrl,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::PureReplay, Method::Spiral, Method::Rrrl];

    pub fn name(&self) -> &'static str {
        match self {
            Method::PureReplay => "pure_replay",
            Method::Spiral => "spiral",
            Method::Rrrl => "rrrl",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    /// The taught goal as is.
    Perfect,
    /// The taught goal shifted by a random planar error per trial.
    Uncertainty,
}

impl Group {
    pub fn name(&self) -> &'static str {
        match self {
            Group::Perfect => "perfect",
            Group::Uncertainty => "uncertainty",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub method: Method,
    pub group: Group,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub success: bool,
    /// Largest filtered sensed force component, N.
    pub max_force: f64,
    /// Largest commanded force component, N. Zero for position-only methods.
    pub max_commanded_force: f64,
    /// Applied goal error, m.
    pub goal_error: f64,
    /// Simulated time until success or budget end, s.
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub method: Method,
    pub group: Group,
    pub seed: u64,
    pub successes: usize,
    pub trials: usize,
    pub max_force_overall: f64,
    /// Wilson 95 % interval of the success rate.
    pub wilson: [f64; 2],
    pub records: Vec<TrialRecord>,
}

impl BenchmarkResult {
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.trials.max(1) as f64
    }
}

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> [f64; 2] {
    if trials == 0 {
        return [0.0, 1.0];
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    [(centre - half).max(0.0), (centre + half).min(1.0)]
}

pub fn wilson95(successes: usize, trials: usize) -> [f64; 2] {
    wilson_interval(successes, trials, 1.959_963_984_540_054)
}

/// Whether interval `a` lies strictly above interval `b`.
pub fn separated_above(a: [f64; 2], b: [f64; 2]) -> bool {
    a[0] > b[1]
}

/// Independent generator for one trial.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64 + 1);
    rng
}

/// Goal for one trial and the simulator seed.
fn trial_goal(task: &InsertionTask, range: [f64; 2], group: Group, seed: u64, trial: usize) -> (Pose, u64) {
    let mut rng = trial_rng(seed, trial);
    let goal = match group {
        Group::Perfect => task.true_dfp,
        Group::Uncertainty => sample_uncertain_dfp(&task.scene, &task.true_dfp, range, &mut rng),
    };
    (goal, rng.random())
}

/// Everything the execution benchmark needs besides the spec.
#[derive(Debug, Clone)]
pub struct ExecutionSetup {
    pub task: InsertionTask,
    /// Goal-error range, step budget and decision period.
    pub rrrl: RrrlConfig,
    /// Required for the learned method.
    pub policy: Option<Policy>,
}

impl ExecutionSetup {
    /// Time budget shared by all methods, s.
    pub fn budget(&self) -> f64 {
        self.rrrl.k_max as f64 * self.rrrl.decision_period
    }
}

fn run_trial(setup: &ExecutionSetup, spec: &BenchmarkSpec, trial: usize) -> Result<TrialRecord, RlError> {
    let task = &setup.task;
    let (goal, sim_seed) = trial_goal(task, setup.rrrl.delta_p_range, spec.group, spec.seed, trial);
    let goal_error = (goal.position() - task.true_dfp.position()).norm();
    let dt = task.scene.physics_dt;
    let steps = (setup.budget() / dt).round() as usize;
    let (success, max_force, max_commanded_force, duration) = match spec.method {
        Method::Rrrl => {
            let policy = setup.policy.as_ref().expect("checked before the trials");
            let r = execute(task, policy, &goal, sim_seed)?;
            let t = r.steps as f64 * policy.config.decision_period;
            (r.success, r.max_force, r.max_commanded_force, t)
        }
        Method::PureReplay | Method::Spiral => {
            let mut sim = SimState::reset(&task.scene, &goal, sim_seed)?;
            let run = if spec.method == Method::Spiral {
                run_spiral_search(&mut sim, &task.scene, &task.control, &goal, steps)?
            } else {
                run_replay_descent(&mut sim, &task.scene, &task.control, &goal, steps)?
            };
            let commanded = if spec.method == Method::Spiral {
                task.control.spiral.push_force
            } else {
                0.0
            };
            (run.success, sim.max_abs_force_seen, commanded, sim.time(&task.scene))
        }
    };
    Ok(TrialRecord {
        trial,
        success,
        max_force,
        max_commanded_force,
        goal_error,
        duration,
    })
}

/// Runs independent trials in parallel and merges them in trial order.
pub fn run_execution_benchmark(spec: &BenchmarkSpec, setup: &ExecutionSetup) -> Result<BenchmarkResult, EvalError> {
    if spec.trials == 0 {
        return Err(EvalError::InvalidSpec("trials > 0".into()));
    }
    if spec.method == Method::Rrrl && setup.policy.is_none() {
        return Err(ArtifactError::Missing("trained policy for the rrrl method".into()).into());
    }
    let records: Vec<TrialRecord> = (0..spec.trials)
        .into_par_iter()
        .map(|i| run_trial(setup, spec, i))
        .collect::<Result<_, _>>()?;
    let successes = records.iter().filter(|r| r.success).count();
    let max_force_overall = records.iter().map(|r| r.max_force).fold(0.0, f64::max);
    Ok(BenchmarkResult {
        method: spec.method,
        group: spec.group,
        seed: spec.seed,
        successes,
        trials: spec.trials,
        max_force_overall,
        wilson: wilson95(successes, spec.trials),
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSetRow {
    pub action_set: ActionSet,
    pub successes: usize,
    pub trials: usize,
    pub rate: f64,
    pub wilson: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSetStudy {
    pub seed: u64,
    pub max_steps: usize,
    pub rows: Vec<ActionSetRow>,
}

impl ActionSetStudy {
    pub fn row(&self, set: ActionSet) -> Option<&ActionSetRow> {
        self.rows.iter().find(|r| r.action_set == set)
    }
}

fn random_policy_trial(task: &InsertionTask, config: &RrrlConfig, seed: u64, trial: usize) -> Result<bool, RlError> {
    let mut rng = trial_rng(seed, trial);
    let goal = sample_uncertain_dfp(&task.scene, &task.true_dfp, config.delta_p_range, &mut rng);
    let mut ep = InsertionEpisode::start(task, config, goal, rng.random())?;
    let n = config.action_set.len();
    while !ep.done() {
        ep.step(|_| Ok(rng.random_range(0..n)))?;
    }
    Ok(ep.success())
}

/// Uniform-random switched policy over each action set: the same goal errors
/// and simulator seeds for every set.
pub fn compare_action_sets(task: &InsertionTask, base: &RrrlConfig, seed: u64) -> Result<ActionSetStudy, EvalError> {
    let mut rows = Vec::with_capacity(ActionSet::ALL.len());
    for set in ActionSet::ALL {
        let config = RrrlConfig {
            action_set: set,
            k_max: ACTION_STUDY_STEPS,
            ..base.clone()
        };
        let wins: Vec<bool> = (0..ACTION_STUDY_TRIALS)
            .into_par_iter()
            .map(|i| random_policy_trial(task, &config, seed, i))
            .collect::<Result<_, _>>()?;
        let successes = wins.iter().filter(|w| **w).count();
        rows.push(ActionSetRow {
            action_set: set,
            successes,
            trials: ACTION_STUDY_TRIALS,
            rate: successes as f64 / ACTION_STUDY_TRIALS as f64,
            wilson: wilson95(successes, ACTION_STUDY_TRIALS),
        });
    }
    Ok(ActionSetStudy {
        seed,
        max_steps: ACTION_STUDY_STEPS,
        rows,
    })
}

/// Report document: JSON beside a markdown rendering.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_sets: Option<ActionSetStudy>,
    #[serde(default)]
    pub execution: Vec<BenchmarkResult>,
}

pub fn emit_report(execution: &[BenchmarkResult], action_sets: Option<&ActionSetStudy>) -> Report {
    Report {
        action_sets: action_sets.cloned(),
        execution: execution.to_vec(),
    }
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut md = String::from("# Benchmark report\n");
        if let Some(study) = &self.action_sets {
            let _ = write!(
                md,
                "\n## Action sets (random policy, {} steps, seed {})\n\n| action set | successes | rate % | 95 % interval |\n|---|---|---|---|\n",
                study.max_steps, study.seed
            );
            for r in &study.rows {
                let _ = writeln!(
                    md,
                    "| {} | {}/{} | {} | [{}, {}] |",
                    r.action_set.name(),
                    r.successes,
                    r.trials,
                    pct(r.rate),
                    pct(r.wilson[0]),
                    pct(r.wilson[1])
                );
            }
        }
        if !self.execution.is_empty() {
            md.push_str("\n## Execution\n\n| method | group | successes | 95 % interval | max force N |\n|---|---|---|---|---|\n");
            for r in &self.execution {
                let _ = writeln!(
                    md,
                    "| {} | {} | {}/{} | [{}, {}] | {:.2} |",
                    r.method.name(),
                    r.group.name(),
                    r.successes,
                    r.trials,
                    pct(r.wilson[0]),
                    pct(r.wilson[1]),
                    r.max_force_overall
                );
            }
        }
        md
    }
}

/// Outcome of pressing a held peg sideways into the bore wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CupShift {
    /// Lateral contact force at the end, N.
    pub force: f64,
    /// Recorded EE target minus the peg position, laterally, m.
    pub shift: f64,
    /// `force / cup_lateral_stiffness`, m.
    pub predicted: f64,
}

/// Teaching by pressing: the peg sits in the bore and the EE target is pushed
/// `overtravel` past the wall contact along `direction` (hole frame, planar),
/// then held until the filter settles. The recorded target is the EE command.
pub fn pressed_teaching_shift(
    task: &InsertionTask,
    direction: [f64; 2],
    overtravel: f64,
    hold_time: f64,
) -> Result<CupShift, RlError> {
    let scene = &task.scene;
    let rot = scene.hole_pose.orientation();
    let axis = rot * Vector3::z();
    let dir = rot * Vector3::new(direction[0], direction[1], 0.0).normalize();
    let inside = scene.pose_above_hole(0.0).translated(&(-axis * 0.005));
    let mut sim = SimState::reset(scene, &inside, 0)?;
    let target = inside.translated(&(dir * (scene.clearance() + overtravel)));
    let steps = (hold_time / scene.physics_dt).round() as usize;
    for _ in 0..steps {
        sim.step(scene, &target, scene.physics_dt)?;
    }
    Ok(lateral_shift(task, &sim, &target))
}

/// The contact-free path: the peg follows the EE target in free space.
pub fn free_teaching_shift(task: &InsertionTask, target: &Pose, hold_time: f64) -> Result<CupShift, RlError> {
    let scene = &task.scene;
    let mut sim = SimState::reset(scene, target, 0)?;
    let steps = (hold_time / scene.physics_dt).round() as usize;
    for _ in 0..steps {
        sim.step(scene, target, scene.physics_dt)?;
    }
    Ok(lateral_shift(task, &sim, target))
}

fn lateral_shift(task: &InsertionTask, sim: &SimState, target: &Pose) -> CupShift {
    let scene = &task.scene;
    let axis = scene.hole_pose.orientation() * Vector3::z();
    let planar = |v: Vector3<f64>| v - axis * v.dot(&axis);
    let shift = planar(target.position() - sim.peg_pose.position()).norm();
    let f_base = sim.ee_command_pose.orientation() * sim.filtered_wrench.force;
    let force = planar(f_base).norm();
    CupShift {
        force,
        shift,
        predicted: force / scene.cup_lateral_stiffness,
    }
}
