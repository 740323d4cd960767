//! The bridge state machine. Owned by the simulation loop; never shared.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use tending_core::config::WorkbenchConfig;
use tending_core::eval::{trial_rng, BenchmarkSpec, ExecutionSetup, Method, Report};
use tending_core::persist::{write_trajectory, TaughtTrajectory};
use tending_core::rrrl::{sample_uncertain_dfp, InsertionEpisode, InsertionTask, Policy, RrrlConfig};
use tending_core::servo::{dvsp_from_dgp, TeachRig, TeachSession};
use tending_core::workflow::{insertion_task, object_rest_pose, teach_rig};
use tending_core::Pose;

use crate::protocol::{parse_client, ClientMessage, ErrorCode, Phase, ServerMessage};

/// Long-running work the loop must start off-thread after a command.
pub enum Job {
    Train {
        task: InsertionTask,
        config: RrrlConfig,
        seed: u64,
        policy_path: PathBuf,
        log_path: PathBuf,
        abort: Arc<AtomicBool>,
    },
    Execute {
        spec: BenchmarkSpec,
        setup: ExecutionSetup,
        report_path: PathBuf,
    },
}

/// Replies for the sender plus an optional job.
#[derive(Default)]
pub struct Outcome {
    pub replies: Vec<ServerMessage>,
    pub job: Option<Job>,
}

impl Outcome {
    fn reply(msg: ServerMessage) -> Self {
        Self {
            replies: vec![msg],
            job: None,
        }
    }
}

pub struct Session {
    config: WorkbenchConfig,
    root: PathBuf,
    phase: Phase,
    seq: u64,
    rig: TeachRig,
    teach: TeachSession,
    object_pose: Pose,
    following: bool,
    teach_started: f64,
    t: f64,
    dfp: Option<Pose>,
    policy: Option<Policy>,
    live: Option<InsertionEpisode>,
    abort: Arc<AtomicBool>,
}

impl Session {
    /// Artifact paths in `config.paths` are resolved against `root`.
    pub fn new(config: WorkbenchConfig, root: &Path) -> Self {
        let rig = teach_rig(&config, 0);
        let object_pose = object_rest_pose(&config);
        let mut rig = rig;
        rig.ee_pose = object_pose;
        Self {
            config,
            root: root.to_path_buf(),
            phase: Phase::Idle,
            seq: 0,
            rig,
            teach: TeachSession::new(),
            object_pose,
            following: false,
            teach_started: 0.0,
            t: 0.0,
            dfp: None,
            policy: None,
            live: None,
            abort: Arc::new(AtomicBool::new(false)),
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn config(&self) -> &WorkbenchConfig {
        &self.config
    }

    pub fn artifact_path(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    pub fn policy(&self) -> Option<&Policy> {
        self.policy.as_ref()
    }

    fn ack(&mut self) -> ServerMessage {
        self.seq += 1;
        ServerMessage::Ack { seq: self.seq }
    }

    fn wrong_phase(&self, what: &str) -> Outcome {
        Outcome::reply(ServerMessage::error(
            ErrorCode::WrongPhase,
            format!("{what} not allowed in {}", self.phase),
        ))
    }

    /// Parses one text frame and handles it. `now` is wall-clock seconds.
    pub fn handle_text(&mut self, text: &str, now: f64) -> Outcome {
        match parse_client(text) {
            Ok(msg) => self.handle_command(msg, now),
            Err(e) => Outcome::reply(ServerMessage::error(ErrorCode::BadMessage, e)),
        }
    }

    pub fn handle_command(&mut self, msg: ClientMessage, now: f64) -> Outcome {
        use ClientMessage as C;
        match (msg, self.phase) {
            (C::Hello {}, _) => Outcome::reply(self.ack()),
            (C::CaptureDgp {}, Phase::Idle) => {
                self.rig.ee_pose = self.object_pose;
                self.teach = TeachSession::new();
                self.teach.capture_dgp(&self.rig).expect("fresh session is idle");
                self.teach_started = now;
                self.phase = Phase::DgpCaptured;
                Outcome::reply(self.ack())
            }
            (C::CaptureDvsp {}, Phase::DgpCaptured) => {
                let dgp = self.teach.b_x_dgp.expect("captured");
                let held = self.rig.ee_pose;
                self.rig.ee_pose = dvsp_from_dgp(&dgp, self.config.teach.dvsp_height);
                match self.teach.capture_dvsp(&mut self.rig, &self.object_pose) {
                    Ok(()) => {
                        self.phase = Phase::Following;
                        self.following = false;
                        Outcome::reply(self.ack())
                    }
                    Err(e) => {
                        self.rig.ee_pose = held;
                        Outcome::reply(ServerMessage::error(ErrorCode::Failed, e.to_string()))
                    }
                }
            }
            (C::StartFollow {}, Phase::Following) => {
                self.following = true;
                Outcome::reply(self.ack())
            }
            (C::DragObject { pose }, Phase::Following) => {
                self.object_pose = pose;
                Outcome::reply(self.ack())
            }
            (C::FinishTeaching {}, Phase::Following) => match self.teach.finish(&mut self.rig, &self.object_pose) {
                Ok(dfp) => {
                    let duration = (now - self.teach_started).max(0.0);
                    self.teach.duration = duration;
                    self.phase = Phase::Finished;
                    self.following = false;
                    self.dfp = Some(dfp);
                    let traj = TaughtTrajectory::from_session(&self.teach).expect("finished");
                    let path = self.artifact_path(&self.config.paths.traj);
                    let ack = self.ack();
                    let mut replies = vec![ack, ServerMessage::TeachDone { dfp, duration }];
                    if let Err(e) = write_trajectory(&path, &traj) {
                        replies.push(ServerMessage::error(ErrorCode::Failed, e.to_string()));
                    }
                    Outcome { replies, job: None }
                }
                Err(e) => Outcome::reply(ServerMessage::error(ErrorCode::Failed, e.to_string())),
            },
            (C::StartTraining { seed, episodes }, Phase::Finished) => {
                let mut config = self.config.rrrl.clone();
                if let Some(m) = episodes {
                    if m == 0 {
                        return Outcome::reply(ServerMessage::error(ErrorCode::BadMessage, "episodes > 0"));
                    }
                    config.episodes = m;
                }
                self.abort = Arc::new(AtomicBool::new(false));
                self.phase = Phase::Training;
                let job = Job::Train {
                    task: insertion_task(&self.config, &self.dfp.expect("finished")),
                    config,
                    seed,
                    policy_path: self.artifact_path(&self.config.paths.policy),
                    log_path: self.artifact_path(&self.config.paths.training_log),
                    abort: self.abort.clone(),
                };
                Outcome {
                    replies: vec![self.ack()],
                    job: Some(job),
                }
            }
            (C::StartExecution { method, group, trials }, Phase::Finished) => {
                if trials == 0 {
                    return Outcome::reply(ServerMessage::error(ErrorCode::BadMessage, "trials > 0"));
                }
                if method == Method::Rrrl && self.policy.is_none() {
                    return Outcome::reply(ServerMessage::error(
                        ErrorCode::MissingArtifact,
                        "no trained policy in this session",
                    ));
                }
                let task = insertion_task(&self.config, &self.dfp.expect("finished"));
                let spec = BenchmarkSpec {
                    method,
                    group,
                    trials,
                    seed: 0,
                };
                if method == Method::Rrrl {
                    let policy = self.policy.as_ref().expect("checked");
                    let goal = match group {
                        tending_core::eval::Group::Perfect => task.true_dfp,
                        tending_core::eval::Group::Uncertainty => sample_uncertain_dfp(
                            &task.scene,
                            &task.true_dfp,
                            policy.config.delta_p_range,
                            &mut trial_rng(spec.seed, 0),
                        ),
                    };
                    self.live = InsertionEpisode::start(&task, &policy.config, goal, 0).ok();
                }
                let setup = ExecutionSetup {
                    task,
                    rrrl: self.config.rrrl.clone(),
                    policy: self.policy.clone(),
                };
                self.phase = Phase::Executing;
                Outcome {
                    replies: vec![self.ack()],
                    job: Some(Job::Execute {
                        spec,
                        setup,
                        report_path: self.artifact_path(&self.config.paths.report),
                    }),
                }
            }
            (C::Abort {}, Phase::Training) => {
                self.abort.store(true, Ordering::Relaxed);
                Outcome::reply(self.ack())
            }
            (C::Abort {}, Phase::Executing) => self.wrong_phase("abort"),
            (C::Abort {}, _) => {
                self.phase = Phase::Idle;
                self.teach = TeachSession::new();
                self.following = false;
                self.object_pose = object_rest_pose(&self.config);
                self.rig.ee_pose = self.object_pose;
                Outcome::reply(self.ack())
            }
            (msg, _) => self.wrong_phase(message_name(&msg)),
        }
    }

    /// Advances the live view by `dt` seconds: servo steps while following,
    /// one decision step of the live rollout while executing.
    pub fn tick(&mut self, dt: f64) {
        self.t += dt;
        match self.phase {
            Phase::Following if self.following => {
                let servo_dt = self.config.teach.servo_dt;
                let n = ((dt / servo_dt).round() as usize).max(1);
                for _ in 0..n {
                    // an invisible object pauses recording
                    if self.teach.follow_step(&mut self.rig, &self.object_pose, servo_dt).is_err() {
                        break;
                    }
                }
            }
            Phase::Executing => {
                if let (Some(ep), Some(policy)) = (self.live.as_mut(), self.policy.as_ref()) {
                    if !ep.done() {
                        let _ = ep.step(|s| policy.act(s));
                    }
                }
            }
            _ => {}
        }
    }

    pub fn state_message(&self) -> ServerMessage {
        let (ee_pose, peg_pose, wrench, alpha, max_force) = match (&self.live, self.phase) {
            (Some(ep), Phase::Executing) => (
                ep.sim.ee_command_pose,
                ep.sim.peg_pose,
                ep.sim.filtered_wrench.to_array(),
                if ep.done() { 0 } else { ep.alpha() },
                ep.sim.max_abs_force_seen,
            ),
            _ => (self.rig.ee_pose, self.object_pose, [0.0; 6], 0, 0.0),
        };
        ServerMessage::State {
            t: self.t,
            ee_pose,
            peg_pose,
            object_pose: if self.phase == Phase::Executing { peg_pose } else { self.object_pose },
            wrench,
            phase: self.phase,
            alpha,
            max_force,
        }
    }

    /// Training ended; returns the broadcast.
    pub fn training_finished(&mut self, result: Result<(Policy, PathBuf), String>) -> ServerMessage {
        self.phase = Phase::Finished;
        match result {
            Ok((policy, path)) => {
                self.policy = Some(policy);
                ServerMessage::TrainDone {
                    policy_path: path.display().to_string(),
                }
            }
            Err(e) if self.abort.load(Ordering::Relaxed) => ServerMessage::error(ErrorCode::Aborted, e),
            Err(e) => ServerMessage::error(ErrorCode::Failed, e),
        }
    }

    /// Execution ended; returns the broadcast.
    pub fn execution_finished(&mut self, result: Result<Report, String>) -> ServerMessage {
        self.phase = Phase::Finished;
        self.live = None;
        match result {
            Ok(report) => ServerMessage::ExecDone { report },
            Err(e) => ServerMessage::error(ErrorCode::Failed, e),
        }
    }
}

fn message_name(msg: &ClientMessage) -> &'static str {
    match msg {
        ClientMessage::Hello {} => "hello",
        ClientMessage::CaptureDgp {} => "capture_dgp",
        ClientMessage::CaptureDvsp {} => "capture_dvsp",
        ClientMessage::StartFollow {} => "start_follow",
        ClientMessage::DragObject { .. } => "drag_object",
        ClientMessage::FinishTeaching {} => "finish_teaching",
        ClientMessage::StartTraining { .. } => "start_training",
        ClientMessage::StartExecution { .. } => "start_execution",
        ClientMessage::Abort {} => "abort",
    }
}
