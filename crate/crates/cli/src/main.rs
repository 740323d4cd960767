use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tending_core::config::{load_config, WorkbenchConfig};
use tending_core::eval::{
    compare_action_sets, emit_report, run_execution_benchmark, BenchmarkSpec, ExecutionSetup, Group, Method,
};
use tending_core::persist::{load_policy, read_demo_script, read_trajectory, write_trajectory};
use tending_core::rrrl::TrainOptions;
use tending_core::workflow::{insertion_task, intended_dfp, markdown_path, teach, train_and_save, write_report};
use tending_core::{ArtifactError, ConfigError, EvalError, RlError};

#[derive(Parser)]
#[command(name = "tending", version, about = "Teach, train and evaluate a peg-insertion tending skill")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scripted demonstration and write the taught trajectory.
    Teach {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        demo_script: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seeds the camera feature noise.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the insertion policy toward the taught final pose.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-episode training log (JSON lines).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Benchmark one insertion method and write a report.
    Execute {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        /// Required for `--method rrrl`.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, value_enum)]
        group: GroupArg,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Random-policy success rates for the three action sets.
    CompareActions {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Start the WebSocket bridge. Artifacts go under the working directory.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Pure,
    Spiral,
    Rrrl,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Pure => Method::PureReplay,
            MethodArg::Spiral => Method::Spiral,
            MethodArg::Rrrl => Method::Rrrl,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupArg {
    Perfect,
    Uncertainty,
}

impl From<GroupArg> for Group {
    fn from(g: GroupArg) -> Group {
        match g {
            GroupArg::Perfect => Group::Perfect,
            GroupArg::Uncertainty => Group::Uncertainty,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Artifact(String),
    Runtime(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Artifact(_) => 3,
            Failure::Runtime(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) | Failure::Artifact(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<ArtifactError> for Failure {
    fn from(e: ArtifactError) -> Self {
        Failure::Artifact(e.to_string())
    }
}

impl From<RlError> for Failure {
    fn from(e: RlError) -> Self {
        match e {
            RlError::InvalidConfig(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Artifact(a) => a.into(),
            EvalError::Rl(r) => r.into(),
            EvalError::InvalidSpec(m) => Failure::Config(m),
        }
    }
}

fn config(path: &Path) -> Result<WorkbenchConfig, Failure> {
    Ok(load_config(path)?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Teach {
            config: c,
            demo_script,
            out,
            seed,
        } => {
            let config = config(&c)?;
            let script = read_demo_script(&demo_script)?;
            let (_, traj) = teach(&config, &script, seed).map_err(|e| Failure::Runtime(e.to_string()))?;
            write_trajectory(&out, &traj)?;
            let p = traj.footer.dfp.position();
            println!(
                "taught {} poses, DFP at ({:.4}, {:.4}, {:.4}) m",
                traj.points.len(),
                p.x,
                p.y,
                p.z
            );
        }
        Command::Train {
            config: c,
            traj,
            out,
            seed,
            log,
        } => {
            let config = config(&c)?;
            let traj = read_trajectory(&traj)?;
            let task = insertion_task(&config, &traj.footer.dfp);
            let result = train_and_save(&task, &config.rrrl, seed, &out, log.as_deref(), &mut TrainOptions::default())?;
            let tail = &result.log[result.log.len().saturating_sub(20)..];
            let wins = tail.iter().filter(|l| l.success).count();
            println!(
                "trained {} episodes, last {} succeeded {wins}, policy at {}",
                result.log.len(),
                tail.len(),
                out.display()
            );
        }
        Command::Execute {
            config: c,
            traj,
            policy,
            method,
            group,
            trials,
            out,
            seed,
        } => {
            let config = config(&c)?;
            let traj = read_trajectory(&traj)?;
            let method = Method::from(method);
            let policy = match (&policy, method) {
                (Some(p), Method::Rrrl) => Some(load_policy(p)?),
                (None, Method::Rrrl) => {
                    return Err(Failure::Artifact("--method rrrl needs --policy".into()));
                }
                _ => None,
            };
            let setup = ExecutionSetup {
                task: insertion_task(&config, &traj.footer.dfp),
                rrrl: config.rrrl.clone(),
                policy,
            };
            let spec = BenchmarkSpec {
                method,
                group: group.into(),
                trials,
                seed,
            };
            let result = run_execution_benchmark(&spec, &setup)?;
            println!(
                "{} / {}: {}/{} succeeded, max force {:.2} N",
                method.name(),
                spec.group.name(),
                result.successes,
                result.trials,
                result.max_force_overall
            );
            write_report(&out, &emit_report(&[result], None))?;
            println!("report at {} and {}", out.display(), markdown_path(&out).display());
        }
        Command::CompareActions { config: c, seed, out } => {
            let config = config(&c)?;
            let task = insertion_task(&config, &intended_dfp(&config));
            let study = compare_action_sets(&task, &config.rrrl, seed)?;
            for r in &study.rows {
                println!("{}: {}/{}", r.action_set.name(), r.successes, r.trials);
            }
            write_report(&out, &emit_report(&[], Some(&study)))?;
        }
        Command::Serve { config: c, port } => {
            let config = config(&c)?;
            let root = std::env::current_dir().map_err(|e| Failure::Runtime(e.to_string()))?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Runtime(e.to_string()))?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
                println!("bridge listening on http://{}", listener.local_addr()?);
                tending_bridge::serve(listener, config, root).await
            })
            .map_err(|e| Failure::Runtime(e.to_string()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
