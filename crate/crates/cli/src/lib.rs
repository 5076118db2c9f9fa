//! Pipeline stages behind the `deemon` command. Each stage reads and writes
//! files in a workspace directory:
//!
//! | stage    | reads                      | writes                                 |
//! |----------|----------------------------|----------------------------------------|
//! | `record` | running target             | `traces/` (manifest and JSONL triples) |
//! | `ingest` | trace manifest             | `graph.json`                           |
//! | `build`  | `graph.json`               | `graph.json`, `build-summary.json`     |
//! | `mine`   | `graph.json`               | `candidates.json`, `tests.json`        |
//! | `test`   | `tests.json`, target       | `deemon-report.json`, `.txt`           |
//! | `report` | `deemon-report.json`       | standard output                        |

use std::path::{Path, PathBuf};

use deemon_core::labels::STATE;
use deemon_core::miner::{
    generate_tests, mine as mine_graph, MinerConfig, MiningReport, TestCase, TimestampHeuristic,
};
use deemon_core::model::{build_model, BuildSummary, ModelConfig};
use deemon_core::parse::AbstractionConfig;
use deemon_core::trace::{import_manifest, ImportSummary, MANIFEST_FILE};
use deemon_core::Graph;
use deemon_engine::{run_suite, SuiteOptions, TargetHandle, VulnerabilityReport, REPORT_FILE};
use deemon_target::{
    bundled, record_traces, RecordOptions, ScenarioConfig, TargetServer, SENSOR_PREFIX,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_VULNERABLE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub const GRAPH_FILE: &str = "graph.json";
pub const BUILD_SUMMARY_FILE: &str = "build-summary.json";
pub const CANDIDATES_FILE: &str = "candidates.json";
pub const TESTS_FILE: &str = "tests.json";
pub const REPORT_TEXT_FILE: &str = "deemon-report.txt";
pub const TRACES_DIR: &str = "traces";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("missing {what} {}: {hint}", path.display())]
    Missing {
        what: &'static str,
        path: PathBuf,
        hint: &'static str,
    },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Missing { .. } => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Tunable heuristics, loaded from the `--config` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heuristics {
    #[serde(default)]
    pub abstraction: AbstractionConfig,
    #[serde(default)]
    pub timestamps: TimestampHeuristic,
    /// Path suffixes of static resources left out of recorded traces.
    #[serde(default = "default_static_extensions")]
    pub static_extensions: Vec<String>,
}

fn default_static_extensions() -> Vec<String> {
    RecordOptions::default().static_extensions
}

impl Default for Heuristics {
    fn default() -> Self {
        Heuristics {
            abstraction: AbstractionConfig::default(),
            timestamps: TimestampHeuristic::default(),
            static_extensions: default_static_extensions(),
        }
    }
}

impl Heuristics {
    pub fn load(path: &Path) -> Result<Heuristics> {
        let text = std::fs::read_to_string(path).map_err(|_| CliError::Missing {
            what: "config file",
            path: path.to_owned(),
            hint: "check the --config path",
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub workspace: PathBuf,
    pub manifest: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub target: Option<String>,
    pub sensor: Option<String>,
    pub sessions: u64,
    pub seed: u64,
    pub heuristics: Heuristics,
}

impl RunConfig {
    pub fn new(workspace: impl Into<PathBuf>) -> Self {
        RunConfig {
            workspace: workspace.into(),
            manifest: None,
            graph: None,
            target: None,
            sensor: None,
            sessions: 2,
            seed: 7,
            heuristics: Heuristics::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sessions < 2 {
            return Err(CliError::Usage(format!(
                "--sessions must be at least 2 to tell values apart, got {}",
                self.sessions
            )));
        }
        Ok(())
    }

    pub fn traces_dir(&self) -> PathBuf {
        self.workspace.join(TRACES_DIR)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.manifest
            .clone()
            .unwrap_or_else(|| self.traces_dir().join(MANIFEST_FILE))
    }

    pub fn graph_path(&self) -> PathBuf {
        self.graph
            .clone()
            .unwrap_or_else(|| self.workspace.join(GRAPH_FILE))
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.workspace.join(name)
    }

    pub fn sensor_url(&self) -> Option<String> {
        self.sensor.clone().or_else(|| {
            self.target
                .as_ref()
                .map(|t| format!("{}{SENSOR_PREFIX}", t.trim_end_matches('/')))
        })
    }

    fn miner_config(&self) -> MinerConfig {
        MinerConfig {
            timestamps: self.heuristics.timestamps.clone(),
            abstraction: self.heuristics.abstraction.clone(),
        }
    }

    fn record_options(&self) -> RecordOptions {
        RecordOptions {
            sessions: self.sessions,
            user: None,
            seed: self.seed,
            static_extensions: self.heuristics.static_extensions.clone(),
        }
    }
}

fn require(path: &Path, what: &'static str, hint: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing {
            what,
            path: path.to_owned(),
            hint,
        })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(runtime)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    std::fs::write(path, text + "\n").map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn load_graph(cfg: &RunConfig) -> Result<Graph> {
    let path = cfg.graph_path();
    require(&path, "graph snapshot", "run `deemon ingest` first")?;
    Graph::load(&path).map_err(runtime)
}

/// A bundled scenario by name, or a scenario file.
pub fn load_scenario(name_or_path: &str) -> Result<ScenarioConfig> {
    if let Some(config) = bundled(name_or_path) {
        return Ok(config);
    }
    let path = Path::new(name_or_path);
    require(
        path,
        "scenario",
        "name a bundled scenario (bankapp, bankapp-misprotected, admin) or a JSON file",
    )?;
    ScenarioConfig::load(path).map_err(|e| CliError::Usage(e.to_string()))
}

/// Records traces from a running target into the workspace.
pub fn record(cfg: &RunConfig, scenario: &ScenarioConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let target = cfg
        .target
        .as_ref()
        .ok_or_else(|| CliError::Usage("record needs --target".into()))?;
    let sensor = cfg.sensor_url().expect("target is set");
    let (path, _) = record_traces(
        target,
        &sensor,
        scenario,
        &cfg.record_options(),
        &cfg.traces_dir(),
    )
    .map_err(runtime)?;
    Ok(path)
}

/// Imports the traces of the manifest into a new graph.
pub fn ingest(cfg: &RunConfig) -> Result<Vec<ImportSummary>> {
    let manifest = cfg.manifest_path();
    require(
        &manifest,
        "trace manifest",
        "record traces first or pass --manifest",
    )?;
    let mut graph = Graph::new();
    let summaries = import_manifest(&mut graph, &manifest).map_err(runtime)?;
    let path = cfg.graph_path();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(runtime)?;
    }
    graph.save(&path).map_err(runtime)?;
    Ok(summaries)
}

/// Builds the model into the graph. Rebuilding changes nothing.
pub fn build(cfg: &RunConfig) -> Result<BuildSummary> {
    let mut graph = load_graph(cfg)?;
    let model = ModelConfig {
        abstraction: cfg.heuristics.abstraction.clone(),
    };
    let summary = build_model(&mut graph, &model).map_err(runtime)?;
    graph.save(&cfg.graph_path()).map_err(runtime)?;
    write_json(&cfg.artifact(BUILD_SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Mines candidate operations and generates their tests.
pub fn mine(cfg: &RunConfig) -> Result<(MiningReport, Vec<TestCase>)> {
    let graph = load_graph(cfg)?;
    if graph.label_count(STATE) == 0 {
        return Err(CliError::Missing {
            what: "model in graph",
            path: cfg.graph_path(),
            hint: "run `deemon build` first",
        });
    }
    let miner = cfg.miner_config();
    let report = mine_graph(&graph, &miner).map_err(runtime)?;
    let tests = generate_tests(&graph, &report.candidates, &miner).map_err(runtime)?;
    write_json(&cfg.artifact(CANDIDATES_FILE), &report)?;
    write_json(&cfg.artifact(TESTS_FILE), &tests)?;
    Ok((report, tests))
}

/// Runs the generated tests against the target and writes the report.
pub fn test(cfg: &RunConfig) -> Result<VulnerabilityReport> {
    let tests_path = cfg.artifact(TESTS_FILE);
    require(&tests_path, "test cases", "run `deemon mine` first")?;
    let target = cfg
        .target
        .as_ref()
        .ok_or_else(|| CliError::Usage("test needs --target".into()))?;
    let tests: Vec<TestCase> = read_json(&tests_path)?;
    let handle =
        TargetHandle::probe(target, &cfg.sensor_url().expect("target is set")).map_err(runtime)?;
    let options = SuiteOptions {
        abstraction: cfg.heuristics.abstraction.clone(),
    };
    let report = run_suite(&handle, &tests, &options);
    std::fs::write(cfg.artifact(REPORT_FILE), report.to_json()).map_err(runtime)?;
    std::fs::write(cfg.artifact(REPORT_TEXT_FILE), report.to_text()).map_err(runtime)?;
    Ok(report)
}

/// Reads back the report of the last test run.
pub fn report(cfg: &RunConfig) -> Result<VulnerabilityReport> {
    let path = cfg.artifact(REPORT_FILE);
    require(&path, "report", "run `deemon test` first")?;
    let text = std::fs::read_to_string(&path).map_err(runtime)?;
    VulnerabilityReport::from_json(&text).map_err(runtime)
}

/// Exit status for a finished test run.
pub fn verdict_code(report: &VulnerabilityReport) -> i32 {
    if report.exploitable_count() > 0 {
        EXIT_VULNERABLE
    } else {
        EXIT_CLEAN
    }
}

/// Everything `demo` produced, stage by stage.
#[derive(Debug)]
pub struct DemoOutcome {
    pub imports: Vec<ImportSummary>,
    pub build: BuildSummary,
    pub mining: MiningReport,
    pub tests: Vec<TestCase>,
    pub report: VulnerabilityReport,
}

/// Boots the scenario on a free port and runs every stage against it.
pub fn demo(cfg: &RunConfig, scenario: &ScenarioConfig) -> Result<DemoOutcome> {
    cfg.validate()?;
    let server = TargetServer::start(scenario.clone(), 0, cfg.seed).map_err(runtime)?;
    let mut cfg = cfg.clone();
    cfg.manifest = None;
    cfg.target = Some(server.base_url());
    cfg.sensor = Some(server.sensor_url());
    record(&cfg, scenario)?;
    let imports = ingest(&cfg)?;
    let build = build(&cfg)?;
    let (mining, tests) = mine(&cfg)?;
    let report = test(&cfg)?;
    server.stop();
    Ok(DemoOutcome {
        imports,
        build,
        mining,
        tests,
        report,
    })
}
