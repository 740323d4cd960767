use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::td_update;
use super::network::{Adam, QNetwork};
use super::replay::{PrioritizedReplay, Transition};
use super::{alpha_switch, epsilon_greedy, hybrid_action, normalize_state, reward, Policy, RrrlConfig};
use crate::control::{fixed_policy_step, run_command, ControlConfig};
use crate::error::RlError;
use crate::persist::save_policy;
use crate::simenv::{SceneConfig, SimState, Wrench};
use crate::transforms::{translation_distance, FrameTag, Pose};

/// Everything needed to spawn insertion episodes: the plant and the true goal.
#[derive(Debug, Clone, PartialEq)]
pub struct InsertionTask {
    pub scene: SceneConfig,
    pub control: ControlConfig,
    /// Desired final pose without error.
    pub true_dfp: Pose,
}

/// Goal corrupted by a planar error of uniform magnitude in `range` and
/// uniform direction, in the hole plane.
pub fn sample_uncertain_dfp<R: Rng + ?Sized>(
    scene: &SceneConfig,
    dfp: &Pose,
    range: [f64; 2],
    rng: &mut R,
) -> Pose {
    let mag = if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    };
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let offset = scene.hole_pose.orientation() * Vector3::new(mag * phi.cos(), mag * phi.sin(), 0.0);
    dfp.translated(&offset)
}

/// One decision step as seen by the learner and the logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub alpha: u8,
    /// Distance from the command pose to the uncertain goal at the decision instant, m.
    pub distance: f64,
    /// Chosen action when the learned policy was active.
    pub action: Option<usize>,
    pub reward: f64,
    pub success: bool,
    pub s: [f64; 6],
    pub s_next: [f64; 6],
    /// Largest commanded force component of this step, N.
    pub commanded_force: f64,
}

/// A single rollout of the switched policy.
pub struct InsertionEpisode {
    task: InsertionTask,
    config: RrrlConfig,
    pub uncertain_dfp: Pose,
    pub sim: SimState,
    k: usize,
    obs: [f64; 6],
    success: bool,
}

impl InsertionEpisode {
    /// Starts with the end effector at the uncertain goal.
    pub fn start(
        task: &InsertionTask,
        config: &RrrlConfig,
        uncertain_dfp: Pose,
        seed: u64,
    ) -> Result<Self, RlError> {
        let mut sim = SimState::reset(&task.scene, &uncertain_dfp, seed)?;
        let obs = sim.sensor_read(&task.scene).to_array();
        Ok(Self {
            task: task.clone(),
            config: config.clone(),
            uncertain_dfp,
            sim,
            k: 0,
            obs,
            success: false,
        })
    }

    pub fn step_index(&self) -> usize {
        self.k
    }

    pub fn observation(&self) -> [f64; 6] {
        self.obs
    }

    pub fn alpha(&self) -> u8 {
        alpha_switch(&self.sim.ee_command_pose, &self.uncertain_dfp, self.config.region_radius)
    }

    pub fn done(&self) -> bool {
        self.success || self.k >= self.config.k_max
    }

    pub fn success(&self) -> bool {
        self.success
    }

    /// Runs one decision period. `choose` is consulted only inside the region.
    pub fn step(&mut self, choose: impl FnOnce(&[f64; 6]) -> Result<usize, RlError>) -> Result<StepRecord, RlError> {
        let cp = self.sim.ee_command_pose;
        let distance = translation_distance(&cp, &self.uncertain_dfp);
        let alpha = self.alpha();
        let s = self.obs;
        let (action, a_rl) = if alpha == 1 {
            let a = choose(&s)?;
            (Some(a), self.config.action_set.wrench(a, self.config.force_amplitude)?)
        } else {
            (None, Wrench::zero(FrameTag::E))
        };
        let a_h = fixed_policy_step(&cp, &self.uncertain_dfp, self.task.control.fixed_policy_max_step);
        let cmd = hybrid_action(alpha, &cp, &a_h, &a_rl);
        let commanded_force = if alpha == 1 { a_rl.max_abs_force() } else { 0.0 };
        let steps = (self.config.decision_period / self.task.scene.physics_dt).round() as usize;
        let run = run_command(&mut self.sim, &self.task.scene, &self.task.control, &cmd, steps)?;
        self.success = run.success;
        let r = reward(
            run.success,
            self.k,
            self.config.k_max,
            &self.sim.ee_command_pose,
            &self.task.true_dfp,
        );
        self.obs = self.sim.sensor_read(&self.task.scene).to_array();
        let record = StepRecord {
            k: self.k,
            alpha,
            distance,
            action,
            reward: r,
            success: run.success,
            s,
            s_next: self.obs,
            commanded_force,
        };
        self.k += 1;
        Ok(record)
    }
}

/// Outcome of a greedy rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub steps: usize,
    /// Largest filtered sensed force component, N.
    pub max_force: f64,
    pub max_commanded_force: f64,
    /// Command pose to true goal distance at the end, m.
    pub final_error: f64,
    pub trace: Vec<StepRecord>,
}

/// Greedy switched rollout of a trained policy from an uncertain goal.
pub fn execute(
    task: &InsertionTask,
    policy: &Policy,
    uncertain_dfp: &Pose,
    seed: u64,
) -> Result<EpisodeResult, RlError> {
    let config = &policy.config;
    let mut ep = InsertionEpisode::start(task, config, *uncertain_dfp, seed)?;
    let mut trace = Vec::new();
    while !ep.done() {
        trace.push(ep.step(|s| policy.act(s))?);
    }
    Ok(EpisodeResult {
        success: ep.success(),
        steps: ep.step_index(),
        max_force: ep.sim.max_abs_force_seen,
        max_commanded_force: trace.iter().map(|r| r.commanded_force).fold(0.0, f64::max),
        final_error: translation_distance(&ep.sim.ee_command_pose, &task.true_dfp),
        trace,
    })
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub steps: usize,
    pub success: bool,
    pub max_force: f64,
}

#[derive(Default)]
pub struct TrainOptions {
    /// Where to write a policy snapshot every `snapshot_every` episodes.
    pub snapshot_path: Option<PathBuf>,
    /// Checked between decision steps; training stops with `Aborted`.
    pub abort: Option<Arc<AtomicBool>>,
    pub progress: Option<Box<dyn FnMut(&EpisodeLog) + Send>>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: Policy,
    pub log: Vec<EpisodeLog>,
}

/// Per-episode generator: independent of how many draws the learner made.
fn episode_rng(seed: u64, episode: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode as u64 + 1);
    rng
}

/// Double DQN with proportional prioritized replay on the switched policy.
/// Only steps taken by the learned policy are stored.
pub fn train(
    task: &InsertionTask,
    config: &RrrlConfig,
    seed: u64,
    opts: &mut TrainOptions,
) -> Result<TrainOutcome, RlError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = QNetwork::random(&config.layer_sizes(), &mut rng);
    let mut target = net.clone();
    let mut opt = Adam::new(net.num_params(), config.learn_rate);
    let mut memory = PrioritizedReplay::new(config.replay_capacity, config.per_alpha);
    let mut log = Vec::with_capacity(config.episodes);
    let mut decisions = 0usize;
    let (amp, arm) = (config.force_amplitude, config.torque_reference_arm);

    for episode in 0..config.episodes {
        let mut ep_rng = episode_rng(seed, episode);
        let uncertain = sample_uncertain_dfp(&task.scene, &task.true_dfp, config.delta_p_range, &mut ep_rng);
        let mut ep = InsertionEpisode::start(task, config, uncertain, ep_rng.random())?;
        let epsilon = config.epsilon_schedule.at(episode);
        let beta = config.beta_at(episode);
        let mut ret = 0.0;
        while !ep.done() {
            if opts.abort.as_ref().is_some_and(|a| a.load(Ordering::Relaxed)) {
                return Err(RlError::Aborted);
            }
            let rec = ep.step(|s| {
                let q = net.forward(&normalize_state(s, amp, arm))?;
                Ok(epsilon_greedy(&q, epsilon, &mut rng))
            })?;
            ret += rec.reward;
            decisions += 1;
            if let Some(a) = rec.action {
                memory.push(Transition {
                    s: normalize_state(&rec.s, amp, arm),
                    a,
                    r: rec.reward,
                    s_next: normalize_state(&rec.s_next, amp, arm),
                    terminal: rec.success,
                });
            }
            if memory.len() >= config.warmup.max(config.batch_size) {
                for _ in 0..config.updates_per_step {
                    let sample = memory.sample(config.batch_size, beta, &mut rng)?;
                    let out = td_update(
                        &mut net,
                        &target,
                        &sample.transitions,
                        &sample.weights,
                        config.discount,
                        &mut opt,
                    )?;
                    memory.update_priorities(&sample.indices, &out.priorities);
                }
            }
            if decisions % config.target_sync_steps == 0 {
                target = net.clone();
            }
        }
        let entry = EpisodeLog {
            episode,
            episode_return: ret,
            steps: ep.step_index(),
            success: ep.success(),
            max_force: ep.sim.max_abs_force_seen,
        };
        if let Some(progress) = opts.progress.as_mut() {
            progress(&entry);
        }
        log.push(entry);
        if let Some(path) = &opts.snapshot_path {
            if config.snapshot_every > 0 && (episode + 1) % config.snapshot_every == 0 {
                let snap = Policy::new(net.clone(), config.clone(), seed);
                save_policy(path, &snap).map_err(|e| RlError::Snapshot(e.to_string()))?;
            }
        }
    }
    Ok(TrainOutcome {
        policy: Policy::new(net, config.clone(), seed),
        log,
    })
}
