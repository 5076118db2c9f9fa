use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deemon_cli::*;
use deemon_target::TargetServer;

#[derive(Parser)]
#[command(
    name = "deemon",
    version,
    about = "Find CSRF vulnerabilities from recorded web application traces"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Directory holding every stage artifact.
    #[arg(long, global = true, default_value = "deemon-workspace")]
    workspace: PathBuf,
    /// Trace manifest [default: <workspace>/traces/deemon-trace-manifest.json]
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Graph snapshot [default: <workspace>/graph.json]
    #[arg(long, global = true)]
    graph: Option<PathBuf>,
    /// Base URL of the target application.
    #[arg(long, global = true)]
    target: Option<String>,
    /// Sensor base URL [default: <target>/__sensor]
    #[arg(long, global = true)]
    sensor: Option<String>,
    /// Recorded sessions per user.
    #[arg(long, global = true, default_value_t = 2)]
    sessions: u64,
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// JSON file with heuristic settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Import recorded traces into a new graph.
    Ingest,
    /// Build abstractions, the state machine and the data-flow model.
    Build,
    /// Find relevant state-changing requests and generate tests.
    Mine,
    /// Run the generated tests against the target.
    Test,
    /// Print the report of the last test run.
    Report,
    /// Boot a mock target, record traces and run every stage.
    Demo {
        /// Bundled scenario name or scenario file.
        #[arg(long, default_value = "bankapp")]
        scenario: String,
    },
    /// Serve a mock target until interrupted.
    Serve {
        #[arg(long, default_value = "bankapp")]
        scenario: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Record workflow traces from a running mock target.
    Record {
        #[arg(long, default_value = "bankapp")]
        scenario: String,
    },
}

fn config(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::new(&common.workspace);
    cfg.manifest = common.manifest.clone();
    cfg.graph = common.graph.clone();
    cfg.target = common.target.clone();
    cfg.sensor = common.sensor.clone();
    cfg.sessions = common.sessions;
    cfg.seed = common.seed;
    if let Some(path) = &common.config {
        cfg.heuristics = Heuristics::load(path)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<i32> {
    let cfg = config(&cli.common)?;
    match cli.command {
        Command::Ingest => {
            for s in ingest(&cfg)? {
                println!(
                    "imported session {} of {}: {} events, {} nodes, {} edges",
                    s.session, s.user, s.events, s.nodes, s.edges
                );
            }
            println!("wrote {}", cfg.graph_path().display());
        }
        Command::Build => {
            let summary = build(&cfg)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary serializes")
            );
        }
        Command::Mine => {
            let (report, tests) = mine(&cfg)?;
            let s = report.summary;
            println!(
                "requests {} / state-changing {} / relevant {}",
                s.reqs, s.sc_reqs, s.rel_sc_reqs
            );
            for t in &tests {
                println!("{} {}", t.id, t.operation);
            }
        }
        Command::Test => {
            let report = test(&cfg)?;
            print!("{}", report.to_text());
            return Ok(verdict_code(&report));
        }
        Command::Report => {
            let report = report(&cfg)?;
            print!("{}", report.to_text());
            return Ok(verdict_code(&report));
        }
        Command::Demo { scenario } => {
            let scenario = load_scenario(&scenario)?;
            let outcome = demo(&cfg, &scenario)?;
            let s = outcome.mining.summary;
            println!(
                "recorded {} sessions of scenario {}",
                outcome.imports.len(),
                scenario.name
            );
            println!(
                "model: {} states, {} clusters, {} variables",
                outcome.build.states_after, outcome.build.clusters, outcome.build.variables
            );
            println!(
                "requests {} / state-changing {} / relevant {}",
                s.reqs, s.sc_reqs, s.rel_sc_reqs
            );
            println!("artifacts in {}\n", cfg.workspace.display());
            print!("{}", outcome.report.to_text());
            return Ok(verdict_code(&outcome.report));
        }
        Command::Serve { scenario, port } => {
            let scenario = load_scenario(&scenario)?;
            let server = TargetServer::start(scenario, port, cfg.seed)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            println!(
                "serving on {} (sensor {})",
                server.base_url(),
                server.sensor_url()
            );
            server.wait();
        }
        Command::Record { scenario } => {
            let scenario = load_scenario(&scenario)?;
            let path = record(&cfg, &scenario)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(EXIT_CLEAN)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("deemon: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
