use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use gustbench::batch::{eval_dir, run_batch, BatchSpec};
use gustbench::server::{ServeOptions, Server};
use gustbench::session::{serve_stream, Session, SessionDefaults};
use gustbench_core::config::{builtin_names, ScenarioConfig};
use gustbench_core::control::ControllerKind;
use gustbench_core::metrics::render_table;

#[derive(Parser)]
#[command(name = "gustbench", version, about = "Quadrotor gate-traversal simulator under fan-jet wind")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve environments to trainers over TCP, or over stdin/stdout.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: String,
        #[arg(long, default_value_t = 64)]
        max_sessions: usize,
        /// Serve a single session on stdin/stdout instead of TCP.
        #[arg(long)]
        stdio: bool,
        /// Scenario used when a client resets without configuring.
        #[arg(long, env = "GUSTBENCH_CONFIG", default_value = "training")]
        scenario: String,
        #[arg(long)]
        controller: Option<ControllerKind>,
    },
    /// Fly a batch of trials and write trajectory logs plus a summary.
    Run {
        #[arg(long, env = "GUSTBENCH_CONFIG")]
        scenario: String,
        /// Defaults to the scenario's controller.
        #[arg(long)]
        controller: Option<ControllerKind>,
        /// scripted:hover, scripted:straight, scripted:fixed:VX,VY,VZ or a weights file.
        #[arg(long, default_value = "scripted:straight")]
        policy: String,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Seed of the first trial; later trials count up from it.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to runs/<scenario>_<controller>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate the trajectory logs in a directory into a results table.
    Eval { dir: PathBuf },
    /// Inspect the built-in scenarios.
    Scenario {
        #[command(subcommand)]
        action: ScenarioCommand,
    },
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// List built-in scenarios.
    List,
    /// Print a scenario with every default filled in.
    Show { name: String },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve {
            bind,
            max_sessions,
            stdio,
            scenario,
            controller,
        } => {
            let defaults = SessionDefaults { scenario, controller };
            if stdio {
                let mut session = Session::new(0, defaults);
                serve_stream(BufReader::new(std::io::stdin().lock()), BufWriter::new(std::io::stdout().lock()), &mut session)?;
                return Ok(());
            }
            let server = Server::bind(bind.as_str(), ServeOptions { max_sessions, defaults })?;
            eprintln!("listening on {}", server.local_addr()?);
            server.run()?;
        }
        Command::Run {
            scenario,
            controller,
            policy,
            trials,
            seed,
            out,
        } => {
            if trials == 0 {
                bail!("--trials must be at least 1");
            }
            let cfg = ScenarioConfig::resolve(&scenario)?;
            let kind = controller.unwrap_or(cfg.controller);
            let out = out.unwrap_or_else(|| PathBuf::from(format!("runs/{}_{kind}", cfg.name)));
            let spec = BatchSpec {
                scenario,
                controller,
                policy,
                trials,
                seed,
            };
            let result = run_batch(&spec, &out)?;
            print!("{}", render_table(&result.reports));
            eprintln!("wrote {} logs to {}", result.logs.len(), out.display());
        }
        Command::Eval { dir } => {
            let reports = eval_dir(&dir).with_context(|| format!("evaluating {}", dir.display()))?;
            print!("{}", render_table(&reports));
        }
        Command::Scenario { action } => match action {
            ScenarioCommand::List => {
                for name in builtin_names() {
                    let cfg = ScenarioConfig::builtin(name)?;
                    println!("{name:<10} {:>2} gates  {}", cfg.gate_count(), cfg.description);
                }
            }
            ScenarioCommand::Show { name } => print!("{}", ScenarioConfig::resolve(&name)?.to_toml()),
        },
    }
    Ok(())
}
