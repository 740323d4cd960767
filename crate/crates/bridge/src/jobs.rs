//! Blocking job runners. The server runs them on worker threads; tests call
//! them directly.

use std::collections::VecDeque;
use std::path::PathBuf;

use tending_core::eval::{emit_report, run_execution_benchmark, Report};
use tending_core::rrrl::{EpisodeLog, Policy, TrainOptions};
use tending_core::workflow::{train_and_save, write_report};

use crate::protocol::ServerMessage;
use crate::session::Job;

/// Window of recent episodes behind `success_rate` in progress messages.
pub const PROGRESS_WINDOW: usize = 20;

pub enum JobEvent {
    Progress(ServerMessage),
    Trained(Result<(Policy, PathBuf), String>),
    Executed(Result<Report, String>),
}

/// Tracks the windowed success rate over a stream of episode logs.
#[derive(Default)]
pub struct ProgressTracker {
    recent: VecDeque<bool>,
}

impl ProgressTracker {
    pub fn record(&mut self, log: &EpisodeLog) -> ServerMessage {
        if self.recent.len() == PROGRESS_WINDOW {
            self.recent.pop_front();
        }
        self.recent.push_back(log.success);
        let wins = self.recent.iter().filter(|s| **s).count();
        ServerMessage::Progress {
            episode: log.episode,
            episode_return: log.episode_return,
            success_rate: wins as f64 / self.recent.len() as f64,
        }
    }
}

/// Runs `job` to completion on the calling thread. The last event is always
/// `Trained` or `Executed`.
pub fn run_job<F>(job: Job, emit: F)
where
    F: FnMut(JobEvent) + Send + Clone + 'static,
{
    match job {
        Job::Train {
            task,
            config,
            seed,
            policy_path,
            log_path,
            abort,
        } => {
            let mut progress_emit = emit.clone();
            let mut tracker = ProgressTracker::default();
            let mut opts = TrainOptions {
                snapshot_path: None,
                abort: Some(abort),
                progress: Some(Box::new(move |log: &EpisodeLog| {
                    progress_emit(JobEvent::Progress(tracker.record(log)))
                })),
            };
            let result = train_and_save(&task, &config, seed, &policy_path, Some(&log_path), &mut opts)
                .map(|out| (out.policy, policy_path))
                .map_err(|e| e.to_string());
            let mut emit = emit;
            emit(JobEvent::Trained(result));
        }
        Job::Execute {
            spec,
            setup,
            report_path,
        } => {
            let result = run_execution_benchmark(&spec, &setup)
                .map_err(|e| e.to_string())
                .and_then(|res| {
                    let report = emit_report(&[res], None);
                    write_report(&report_path, &report).map_err(|e| e.to_string())?;
                    Ok(report)
                });
            let mut emit = emit;
            emit(JobEvent::Executed(result));
        }
    }
}
