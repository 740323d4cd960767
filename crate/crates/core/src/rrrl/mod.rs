//! Region-limited residual RL: a learned force policy inside a region around
//! the uncertain goal, a fixed position policy outside it.

mod agent;
mod env;
pub mod network;
pub mod replay;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::control::PlantCommand;
use crate::error::RlError;
use crate::simenv::Wrench;
use crate::transforms::{translation_distance, FrameTag, Pose};

pub use agent::{td_targets, td_update, TdOutcome};
pub use env::{
    execute, sample_uncertain_dfp, train, EpisodeLog, EpisodeResult, InsertionEpisode, InsertionTask,
    StepRecord, TrainOptions, TrainOutcome,
};
pub use network::{argmax, Adam, QNetwork};
pub use replay::{PrioritizedReplay, ReplaySample, SumTree, Transition};

pub const POLICY_VERSION: u32 = 1;

/// Discrete force action sets used by the policy and the action-set study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSet {
    /// Twelve signed unit-axis wrench actions.
    Operational,
    /// Downward push with a signed force along the tool x axis only.
    SingleAxis,
    /// Downward push with signed forces on both lateral axes.
    Diagonal,
}

impl ActionSet {
    pub const ALL: [ActionSet; 3] = [ActionSet::Operational, ActionSet::SingleAxis, ActionSet::Diagonal];

    pub fn len(&self) -> usize {
        match self {
            ActionSet::Operational => 12,
            ActionSet::SingleAxis => 2,
            ActionSet::Diagonal => 4,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActionSet::Operational => "operational",
            ActionSet::SingleAxis => "single_axis",
            ActionSet::Diagonal => "diagonal",
        }
    }

    /// Desired tool-frame wrench of action `a`.
    pub fn wrench(&self, a: usize, amplitude: f64) -> Result<Wrench, RlError> {
        if a >= self.len() {
            return Err(RlError::ActionOutOfRange {
                index: a,
                size: self.len(),
            });
        }
        let f = amplitude;
        let mut w = [0.0; 6];
        match self {
            ActionSet::Operational => {
                w[a / 2] = if a % 2 == 0 { f } else { -f };
            }
            ActionSet::SingleAxis => {
                w[0] = if a == 0 { f } else { -f };
                w[2] = f;
            }
            ActionSet::Diagonal => {
                w[0] = if a < 2 { f } else { -f };
                w[1] = if a % 2 == 0 { f } else { -f };
                w[2] = f;
            }
        }
        Ok(Wrench::from_array(w, FrameTag::E))
    }
}

/// The four diagonal actions `[±F, ±F, +F, 0, 0, 0]`.
pub fn action_to_wrench(a: usize, amplitude: f64) -> Result<Wrench, RlError> {
    ActionSet::Diagonal.wrench(a, amplitude)
}

/// 1 inside the open ball of radius `d` around the goal, else 0.
pub fn alpha_switch(cp: &Pose, dfp: &Pose, d: f64) -> u8 {
    u8::from(translation_distance(cp, dfp) < d)
}

/// Selects the plant command: the learned wrench inside the region, the
/// fixed position step otherwise.
pub fn hybrid_action(alpha: u8, cp: &Pose, a_h: &Vector3<f64>, a_rl: &Wrench) -> PlantCommand {
    if alpha == 1 {
        PlantCommand::Force(*a_rl)
    } else {
        PlantCommand::Position(cp.translated(a_h))
    }
}

/// Time-discounted success bonus, or the negative distance to the goal in meters.
pub fn reward(success: bool, k: usize, k_max: usize, cp: &Pose, dfp: &Pose) -> f64 {
    if success {
        1.0 - k as f64 / k_max as f64
    } else {
        -translation_distance(cp, dfp)
    }
}

/// Network input: forces divided by the action amplitude, torques by the
/// amplitude times a reference lever arm, so both land near unit scale.
pub fn normalize_state(s: &[f64; 6], amplitude: f64, lever: f64) -> [f64; 6] {
    std::array::from_fn(|i| if i < 3 { s[i] / amplitude } else { s[i] / (amplitude * lever) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_episodes: usize,
}

impl EpsilonSchedule {
    pub fn at(&self, episode: usize) -> f64 {
        if self.anneal_episodes == 0 {
            return self.end;
        }
        let frac = (episode as f64 / self.anneal_episodes as f64).min(1.0);
        self.start + (self.end - self.start) * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RrrlConfig {
    /// Radius D of the region where the learned policy acts, m.
    pub region_radius: f64,
    pub force_amplitude: f64,
    /// Lever arm used to scale torque inputs, m.
    pub torque_reference_arm: f64,
    pub action_set: ActionSet,
    pub epsilon_schedule: EpsilonSchedule,
    pub replay_capacity: usize,
    pub episodes: usize,
    pub k_max: usize,
    pub batch_size: usize,
    pub discount: f64,
    /// Gradient updates per decision step (C1).
    pub updates_per_step: usize,
    /// Decision steps between target network syncs (C2).
    pub target_sync_steps: usize,
    /// Stored transitions required before learning starts.
    pub warmup: usize,
    pub learn_rate: f64,
    pub per_alpha: f64,
    /// Importance-sampling exponent, annealed linearly over training.
    pub per_beta_schedule: [f64; 2],
    pub decision_period: f64,
    /// Goal error magnitude range, m.
    pub delta_p_range: [f64; 2],
    pub hidden_layers: Vec<usize>,
    /// Episodes between policy snapshots.
    pub snapshot_every: usize,
}

impl Default for RrrlConfig {
    fn default() -> Self {
        Self {
            region_radius: 0.015,
            force_amplitude: 10.0,
            torque_reference_arm: 0.015,
            action_set: ActionSet::Diagonal,
            epsilon_schedule: EpsilonSchedule {
                start: 1.0,
                end: 0.1,
                anneal_episodes: 100,
            },
            replay_capacity: 20_000,
            episodes: 200,
            k_max: 50,
            batch_size: 64,
            discount: 0.5,
            updates_per_step: 8,
            target_sync_steps: 200,
            warmup: 500,
            learn_rate: 1e-3,
            per_alpha: 0.6,
            per_beta_schedule: [0.4, 1.0],
            decision_period: 0.1,
            delta_p_range: [0.002, 0.004],
            hidden_layers: vec![64, 64],
            snapshot_every: 10,
        }
    }
}

impl RrrlConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: &str| Err(RlError::InvalidConfig(m.to_string()));
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad("0 < discount <= 1");
        }
        if !(self.delta_p_range[0] >= 0.0 && self.delta_p_range[0] <= self.delta_p_range[1]) {
            return bad("0 <= delta_p_range[0] <= delta_p_range[1]");
        }
        if !(self.region_radius >= 2.0 * self.delta_p_range[1]) {
            return bad("region_radius >= 2 * max goal error");
        }
        if self.replay_capacity < self.batch_size || self.batch_size == 0 {
            return bad("replay_capacity >= batch_size > 0");
        }
        if !(self.force_amplitude > 0.0
            && self.torque_reference_arm > 0.0
            && self.learn_rate > 0.0
            && self.decision_period > 0.0)
        {
            return bad("force_amplitude, torque_reference_arm, learn_rate and decision_period > 0");
        }
        if self.k_max == 0 || self.target_sync_steps == 0 {
            return bad("k_max and target_sync_steps > 0");
        }
        let e = &self.epsilon_schedule;
        if !((0.0..=1.0).contains(&e.start) && (0.0..=1.0).contains(&e.end)) {
            return bad("epsilon in [0, 1]");
        }
        if !(self.per_alpha >= 0.0 && self.per_beta_schedule.iter().all(|b| (0.0..=1.0).contains(b))) {
            return bad("per_alpha >= 0 and per_beta in [0, 1]");
        }
        if self.hidden_layers.iter().any(|&h| h == 0) {
            return bad("hidden layer sizes > 0");
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![6];
        sizes.extend(&self.hidden_layers);
        sizes.push(self.action_set.len());
        sizes
    }

    pub fn beta_at(&self, episode: usize) -> f64 {
        let [b0, b1] = self.per_beta_schedule;
        let frac = if self.episodes <= 1 {
            1.0
        } else {
            (episode as f64 / (self.episodes - 1) as f64).min(1.0)
        };
        b0 + (b1 - b0) * frac
    }
}

/// A trained (or snapshotted) policy as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub version: u32,
    #[serde(flatten)]
    pub network: QNetwork,
    pub config: RrrlConfig,
    pub seed: u64,
}

impl Policy {
    pub fn new(network: QNetwork, config: RrrlConfig, seed: u64) -> Self {
        Self {
            version: POLICY_VERSION,
            network,
            config,
            seed,
        }
    }

    /// Greedy action for a raw tool-frame wrench reading.
    pub fn act(&self, s: &[f64; 6]) -> Result<usize, RlError> {
        let c = &self.config;
        let q = self.network.forward(&normalize_state(s, c.force_amplitude, c.torque_reference_arm))?;
        Ok(argmax(&q))
    }
}

/// Epsilon-greedy choice over the network's action values.
pub fn epsilon_greedy<R: Rng + ?Sized>(q: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..q.len())
    } else {
        argmax(q)
    }
}
