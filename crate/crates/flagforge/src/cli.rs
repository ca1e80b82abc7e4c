//! Command-line front end. Every workflow is one subcommand; `--json`
//! switches any of them to a single machine-readable JSON document on
//! stdout with diagnostics on stderr only.
//!
//! Exit codes are stable: 0 success, 1 contract error (bad arguments,
//! unknown ids, malformed input), 2 environment error (no compiler,
//! unreachable server, I/O).

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::bundled;
use crate::crowd::{self, CrowdClient, CrowdServer, ScenarioKey};
use crate::error::{Error, Result};
use crate::explorer::{Explorer, RecordPolicy, SamplingMode, Scenario};
use crate::flagspace::{self, FlagSpace, SamplingPolicy};
use crate::learn::{self, LabeledDataset, ModelKind, ModelSpec, ReductionMode};
use crate::pipeline::{self, Backend, CompilerEnv, Pipeline, PipelineRequest};
use crate::reducer::{PruneConfig, Reducer};
use crate::registry::{DatasetMeta, Registry, WorkloadKind, WorkloadMeta};
use crate::store::{self, PlatformInfo, Store};
use crate::uid::mix_seed;

#[derive(Parser)]
#[command(name = "flagforge", version, about = "Compiler flag autotuning workbench")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Repository root (env FLAGFORGE_REPO, default ./flagforge-repo)
    #[arg(long, global = true)]
    repo: Option<PathBuf>,

    /// Emit a single JSON document on stdout
    #[arg(long, global = true)]
    json: bool,

    /// RNG seed (env FLAGFORGE_SEED)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Trust threshold for comparisons
    #[arg(long, global = true)]
    threshold: Option<f64>,

    /// Crowd server URL (env FLAGFORGE_SERVER)
    #[arg(long, global = true)]
    server: Option<String>,

    /// Pick a specific detected compiler by id (e.g. gcc-7.1.0)
    #[arg(long, global = true)]
    compiler: Option<String>,

    /// Prompt when several compilers match instead of taking the newest
    #[arg(long, global = true)]
    interactive: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Manage workloads
    Workload {
        #[command(subcommand)]
        command: WorkloadCommand,
    },
    /// Manage datasets
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Detect installed compilers
    Detect,
    /// Compile and run one flag assignment
    Run {
        #[arg(long)]
        workload: String,
        #[arg(long, default_value = "run")]
        cmd: String,
        #[arg(long, default_value = "", allow_hyphen_values = true)]
        flags: String,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
        /// Keep the scratch build directory
        #[arg(long)]
        keep: bool,
    },
    /// Explore random flag combinations and record results
    Autotune(AutotuneArgs),
    /// Autotune recording only failed pipelines
    Fuzz(AutotuneArgs),
    /// Remove non-contributing flags from a recorded solution
    Reduce {
        #[arg(long)]
        entry: String,
        #[arg(long)]
        point: String,
        /// Accept removals without re-running when the binary MD5 is unchanged
        #[arg(long)]
        md5_shortcut: bool,
        /// Explicitly switch off every untouched boolean flag afterwards
        #[arg(long)]
        invert: bool,
        /// Flag name never removed
        #[arg(long)]
        keep: Option<String>,
        /// Prune conditions JSON file ({"conditions": {...}, "tolerance": ...})
        #[arg(long)]
        prune_file: Option<PathBuf>,
        /// Minimize a failure-reproducing point instead
        #[arg(long)]
        failure: bool,
        /// Report per-flag contributions instead of reducing
        #[arg(long)]
        contribution: bool,
        #[arg(long)]
        deterministic: bool,
    },
    /// Re-execute a stored point and report differences
    Replay {
        #[arg(long)]
        entry: String,
        #[arg(long)]
        point: String,
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
    },
    /// Inspect and export stored experiments
    Experiment {
        #[command(subcommand)]
        command: ExperimentCommand,
    },
    /// Export (time, size, flags, frontier) tuples for plotting
    PlotData {
        #[arg(long)]
        entry: String,
    },
    /// Crowd-tuning client and server
    Crowd {
        #[command(subcommand)]
        command: CrowdCommand,
    },
    /// Apply a shared solution to a workload and report the speedup
    Benchmark {
        #[arg(long)]
        workload: String,
        #[arg(long)]
        solution_uid: String,
        #[arg(long, default_value = "run")]
        cmd: String,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
    },
    /// Train, evaluate and prune optimization predictors
    Model {
        #[command(subcommand)]
        command: ModelCommand,
    },
}

#[derive(Args)]
struct AutotuneArgs {
    #[arg(long)]
    workload: String,
    #[arg(long, default_value = "run")]
    cmd: String,
    /// Default 10, or whatever a scenario file says
    #[arg(long)]
    iterations: Option<usize>,
    /// Default 3, or whatever a scenario file says
    #[arg(long)]
    repetitions: Option<usize>,
    /// Scenario id, or path to a scenario JSON file
    #[arg(long, default_value = "flags-time-size")]
    scenario: String,
    #[arg(long)]
    dataset: Option<String>,
    /// Also sample parametric (--param style) flags
    #[arg(long)]
    parametric_flags: bool,
    /// Also sample cpu-specific flags
    #[arg(long)]
    cpu_flags: bool,
    /// Also sample the base optimization level
    #[arg(long)]
    base_flags: bool,
    #[arg(long)]
    include_probability: Option<f64>,
    /// Record only the Pareto frontier
    #[arg(long)]
    frontier_only: bool,
    /// Enumerate every boolean combination instead of sampling
    #[arg(long)]
    exhaustive: bool,
    /// Name hint recorded as the scenario id of the entry
    #[arg(long)]
    record: Option<String>,
}

#[derive(Subcommand)]
enum WorkloadCommand {
    /// Register a workload from a meta JSON file, or install a bundled one
    Add {
        #[arg(long, conflicts_with = "bundled")]
        file: Option<PathBuf>,
        /// Install a bundled workload (available: mini-corners)
        #[arg(long)]
        bundled: Option<String>,
    },
    List,
    Show { id: String },
}

#[derive(Subcommand)]
enum DatasetCommand {
    Add {
        #[arg(long)]
        file: PathBuf,
    },
    List,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    List,
    Show { entry: String },
    Export {
        entry: String,
        /// Comma-separated columns (point,time,time_pm,size,compile_time,flags,frontier,failure)
        #[arg(long, default_value = "point,time,time_pm,size,flags,frontier")]
        columns: String,
    },
    /// Alias of the top-level replay command
    Replay {
        #[arg(long)]
        entry: String,
        #[arg(long)]
        point: String,
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
    },
}

#[derive(Subcommand)]
enum CrowdCommand {
    /// Run the aggregation server
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        margin: f64,
    },
    /// Replay shared top solutions plus fresh random ones and submit reactions
    Tune {
        #[arg(long)]
        workload: String,
        #[arg(long, default_value = "run")]
        cmd: String,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long, default_value_t = 5)]
        iterations: usize,
        #[arg(long, default_value = "flags-time")]
        scenario: String,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
        #[arg(long)]
        participant: Option<String>,
    },
    /// Query the top solutions for a scenario key
    Top {
        #[arg(long, default_value = "flags-time")]
        scenario: String,
        #[arg(long)]
        compiler: String,
        #[arg(long)]
        platform: Option<String>,
        #[arg(long, default_value_t = 10)]
        n: usize,
    },
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Train a classifier and write it to a file
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "knn")]
        model: String,
        #[arg(long)]
        depth: Option<u32>,
        /// Comma-separated feature ids (ft1,ft2,...); default: all present
        #[arg(long)]
        features: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-out cross-validation accuracy
    Cv {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "knn")]
        model: String,
        #[arg(long)]
        depth: Option<u32>,
        #[arg(long)]
        features: Option<String>,
    },
    /// Predict the best optimization for a feature vector
    Predict {
        #[arg(long)]
        model_file: PathBuf,
        /// JSON file {"ft1": ..} or a registered workload id
        #[arg(long)]
        features: String,
    },
    /// Sweep decision-tree depths and report the best
    AutotuneDepth {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "1,2,3,4,5,6,8,10,12,15")]
        depths: String,
        #[arg(long)]
        features: Option<String>,
    },
    /// Greedy feature-set reduction
    ReduceFeatures {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "knn")]
        model: String,
        #[arg(long)]
        depth: Option<u32>,
        #[arg(long, default_value = "greedy_remove")]
        mode: String,
        #[arg(long)]
        features: Option<String>,
    },
    /// Build a reaction matrix from stored entries
    BuildMatrix {
        /// Comma-separated entry uids; default: every stored entry
        #[arg(long)]
        entries: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pair a reaction matrix with registry feature files into a dataset
    MakeDataset {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        margin: f64,
    },
}

/// Resolved global configuration: flags beat env vars beat config.json.
#[derive(Debug, Clone)]
pub struct GlobalConfig {
    pub repo_root: PathBuf,
    pub trust_threshold: f64,
    pub seed: u64,
    pub server: Option<String>,
    pub compiler: Option<String>,
    pub interactive: bool,
    pub json: bool,
}

impl GlobalConfig {
    fn resolve(args: &GlobalArgs) -> Result<GlobalConfig> {
        let repo_root = args
            .repo
            .clone()
            .or_else(|| std::env::var_os("FLAGFORGE_REPO").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("flagforge-repo"));

        #[derive(serde::Deserialize, Default)]
        struct FileConfig {
            threshold: Option<f64>,
            seed: Option<u64>,
            server: Option<String>,
            compiler: Option<String>,
        }
        let file: FileConfig = match std::fs::read_to_string(repo_root.join("config.json")) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| Error::invalid(format!("config.json: {e}")))?,
            Err(_) => FileConfig::default(),
        };

        let seed = args
            .seed
            .or_else(|| std::env::var("FLAGFORGE_SEED").ok().and_then(|s| s.parse().ok()))
            .or(file.seed)
            .unwrap_or(0);
        let trust_threshold = args.threshold.or(file.threshold).unwrap_or(0.05);
        if !(0.0..1.0).contains(&trust_threshold) || trust_threshold == 0.0 {
            return Err(Error::contract("threshold must lie in (0,1)"));
        }
        let server = args
            .server
            .clone()
            .or_else(|| std::env::var("FLAGFORGE_SERVER").ok())
            .or(file.server);
        Ok(GlobalConfig {
            repo_root,
            trust_threshold,
            seed,
            server,
            compiler: args.compiler.clone().or(file.compiler),
            interactive: args.interactive,
            json: args.json,
        })
    }
}

struct App {
    config: GlobalConfig,
    registry: Registry,
    store: Store,
}

impl App {
    fn open(config: GlobalConfig) -> Result<App> {
        let registry = Registry::open(&config.repo_root)?;
        let store = Store::open(&config.repo_root)?;
        Ok(App { config, registry, store })
    }

    fn stats(&self) -> crate::stats::StatsConfig {
        crate::stats::StatsConfig::with_threshold(self.config.trust_threshold)
    }

    /// Seed for this invocation's uid stream: the configured seed mixed
    /// with a persistent per-repo invocation counter, so repeated commands
    /// against the same repository never regenerate an existing uid while
    /// a fixed seed and command sequence stay reproducible.
    fn uid_seed(&self) -> Result<u64> {
        let path = self.config.repo_root.join(".uidstate");
        let _lock = crate::registry::MutationLock::acquire(
            self.config.repo_root.join(".uidstate.lock"),
        )?;
        let counter: u64 = std::fs::read_to_string(&path)
            .ok()
            .and_then(|t| t.trim().parse().ok())
            .unwrap_or(0);
        std::fs::write(&path, format!("{}\n", counter + 1))?;
        Ok(mix_seed(self.config.seed, counter))
    }

    /// Synthetic workloads run on the synthetic backend with a space built
    /// from their own effect names; real ones need a detected compiler.
    fn backend_and_space(&self, workload_id: &str) -> Result<(Backend, FlagSpace)> {
        let workload = self.registry.workload(workload_id)?;
        match workload.kind {
            WorkloadKind::Synthetic => {
                let spec = workload.synthetic.as_ref().expect("validated at registration");
                let names: Vec<&str> =
                    spec.flag_effects.keys().map(|s| s.as_str()).filter(|n| !n.starts_with('-')).collect();
                Ok((Backend::Synthetic, crate::testutil::boolean_space(&names)))
            }
            WorkloadKind::Real => {
                let env = self.select_compiler()?;
                let space =
                    flagspace::load_flagspace(&env.family, &env.version, Some(&self.compiler_dir()))?;
                Ok((Backend::Real(env), space))
            }
        }
    }

    fn compiler_dir(&self) -> PathBuf {
        self.config.repo_root.join("compiler")
    }

    fn select_compiler(&self) -> Result<CompilerEnv> {
        let envs = pipeline::detect_compilers(&pipeline::default_probe_dirs());
        if envs.is_empty() {
            return Err(Error::environment("no gcc or clang found on PATH"));
        }
        if let Some(wanted) = &self.config.compiler {
            return envs
                .iter()
                .find(|e| &e.id == wanted)
                .cloned()
                .ok_or_else(|| Error::environment(format!("compiler {wanted} not detected")));
        }
        if self.config.interactive && envs.len() > 1 {
            eprintln!("several compilers detected:");
            for (i, env) in envs.iter().enumerate() {
                eprintln!("  [{i}] {} ({})", env.id, env.path.display());
            }
            eprint!("select: ");
            std::io::stderr().flush().ok();
            let mut line = String::new();
            std::io::stdin().read_line(&mut line)?;
            let index: usize = line
                .trim()
                .parse()
                .map_err(|_| Error::contract("selection must be an index"))?;
            return envs
                .get(index)
                .cloned()
                .ok_or_else(|| Error::contract("selection out of range"));
        }
        // non-interactive: newest version wins
        Ok(envs
            .iter()
            .max_by_key(|e| flagspace::version_key(&e.version))
            .cloned()
            .expect("non-empty"))
    }
}

/// Parse argv, run the subcommand, and map errors to exit codes.
pub fn dispatch(args: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders help/version on stdout with success
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let json = cli.global.json;
    match run(cli) {
        Ok(output) => {
            if json {
                print_stdout(&serde_json::to_string_pretty(&output.json).unwrap_or_default());
            } else if !output.human.is_empty() {
                print_stdout(output.human.trim_end());
            }
            0
        }
        Err(e) => {
            if json {
                print_stdout(
                    &serde_json::json!({"error": e.to_string(), "exit_code": e.exit_code()})
                        .to_string(),
                );
            }
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Write a line to stdout, tolerating a closed pipe (e.g. `... | head`).
fn print_stdout(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
    let _ = out.flush();
}

struct Output {
    json: Value,
    human: String,
}

impl Output {
    fn new(json: Value, human: impl Into<String>) -> Output {
        Output { json, human: human.into() }
    }
}

fn run(cli: Cli) -> Result<Output> {
    let config = GlobalConfig::resolve(&cli.global)?;
    let app = App::open(config)?;
    match cli.command {
        Command::Workload { command } => workload_command(&app, command),
        Command::Dataset { command } => dataset_command(&app, command),
        Command::Detect => detect_command(),
        Command::Run { workload, cmd, flags, dataset, repetitions, keep } => {
            run_command(&app, &workload, &cmd, &flags, dataset.as_deref(), repetitions, keep)
        }
        Command::Autotune(args) => autotune_command(&app, args, false),
        Command::Fuzz(args) => autotune_command(&app, args, true),
        Command::Reduce {
            entry,
            point,
            md5_shortcut,
            invert,
            keep,
            prune_file,
            failure,
            contribution,
            deterministic,
        } => reduce_command(
            &app,
            &entry,
            &point,
            md5_shortcut,
            invert,
            keep,
            prune_file,
            failure,
            contribution,
            deterministic,
        ),
        Command::Replay { entry, point, tolerance } => {
            replay_command(&app, &entry, &point, tolerance)
        }
        Command::Experiment { command } => experiment_command(&app, command),
        Command::PlotData { entry } => {
            let csv = app.store.export_table(&entry, &["time", "size", "flags", "frontier"])?;
            Ok(Output::new(json!({"entry": entry, "csv": csv}), csv))
        }
        Command::Crowd { command } => crowd_command(&app, command),
        Command::Benchmark { workload, solution_uid, cmd, dataset, repetitions } => {
            benchmark_command(&app, &workload, &solution_uid, &cmd, dataset.as_deref(), repetitions)
        }
        Command::Model { command } => model_command(&app, command),
    }
}

fn workload_command(app: &App, command: WorkloadCommand) -> Result<Output> {
    match command {
        WorkloadCommand::Add { file, bundled } => {
            let id = match (file, bundled) {
                (Some(path), None) => {
                    let text = std::fs::read_to_string(&path)?;
                    let meta: WorkloadMeta = serde_json::from_str(&text)
                        .map_err(|e| Error::invalid(format!("workload meta: {e}")))?;
                    app.registry.register_workload(&meta)?
                }
                (None, Some(name)) if name == bundled::MINI_CORNERS_ID => {
                    bundled::install_mini_corners(&app.registry)?
                }
                (None, Some(name)) => {
                    return Err(Error::contract(format!("no bundled workload named {name}")))
                }
                _ => return Err(Error::contract("pass exactly one of --file or --bundled")),
            };
            Ok(Output::new(json!({"workload": id}), format!("registered workload {id}")))
        }
        WorkloadCommand::List => {
            let ids = app.registry.list_workloads()?;
            Ok(Output::new(json!({ "workloads": ids }), ids.join("\n")))
        }
        WorkloadCommand::Show { id } => {
            let meta = app.registry.workload(&id)?;
            let text = serde_json::to_string_pretty(&meta)?;
            Ok(Output::new(serde_json::to_value(&meta)?, text))
        }
    }
}

fn dataset_command(app: &App, command: DatasetCommand) -> Result<Output> {
    match command {
        DatasetCommand::Add { file } => {
            let text = std::fs::read_to_string(&file)?;
            let meta: DatasetMeta = serde_json::from_str(&text)
                .map_err(|e| Error::invalid(format!("dataset meta: {e}")))?;
            let id = app.registry.register_dataset(&meta)?;
            Ok(Output::new(json!({"dataset": id}), format!("registered dataset {id}")))
        }
        DatasetCommand::List => {
            let ids = app.registry.list_datasets()?;
            Ok(Output::new(json!({ "datasets": ids }), ids.join("\n")))
        }
    }
}

fn detect_command() -> Result<Output> {
    let envs = pipeline::detect_compilers(&pipeline::default_probe_dirs());
    let human = envs
        .iter()
        .map(|e| format!("{}\t{}\t{}", e.id, e.version, e.path.display()))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Output::new(serde_json::to_value(&envs)?, human))
}

fn run_command(
    app: &App,
    workload: &str,
    cmd: &str,
    flags: &str,
    dataset: Option<&str>,
    repetitions: usize,
    keep: bool,
) -> Result<Output> {
    let (backend, space) = app.backend_and_space(workload)?;
    let assignment = space.parse(flags)?;
    let _lock =
        crate::registry::MutationLock::acquire(app.store.root().join(".machine.lock"))?;
    let pipeline = Pipeline::new(&app.registry, &space);
    let result = pipeline.execute(&PipelineRequest {
        workload: workload.to_string(),
        dataset: dataset.map(String::from),
        command_key: cmd.to_string(),
        assignment,
        backend,
        repetitions,
        timeout_secs: 60.0,
        seed: app.config.seed,
        keep_artifacts: keep,
    })?;
    let characteristics = result.characteristics(&app.stats())?;
    let human = match (&characteristics, result.failure) {
        (Some(chars), _) => {
            let time = &chars["execution_time"];
            format!(
                "time {:.4}s (min {:.4}, max {:.4}) size {} bytes md5 {}",
                time.expected,
                time.min,
                time.max,
                result.binary_size,
                result.binary_md5.as_deref().unwrap_or("-")
            )
        }
        (None, Some(kind)) => format!("pipeline failed: {kind}"),
        (None, None) => "pipeline produced no data".to_string(),
    };
    Ok(Output::new(
        json!({"result": result, "characteristics": characteristics}),
        human,
    ))
}

fn autotune_command(app: &App, args: AutotuneArgs, fuzz: bool) -> Result<Output> {
    let (backend, space) = app.backend_and_space(&args.workload)?;
    let mut scenario = load_scenario(&args, app.config.seed)?;
    if fuzz {
        scenario.record_policy = RecordPolicy::FailuresOnly;
    }
    let mut explorer =
        Explorer::new(&app.registry, &app.store, &space, backend, app.uid_seed()?);
    explorer.stats = app.stats();
    let entry_uid =
        explorer.autotune(&scenario, &args.workload, args.dataset.as_deref(), &args.cmd)?;
    let entry = app.store.load_entry(&entry_uid)?;
    let human = format!(
        "entry {entry_uid}: {} point(s) recorded for {}",
        entry.points.len(),
        args.workload
    );
    Ok(Output::new(
        json!({"entry": entry_uid, "points": entry.points.len(), "scenario": scenario.scenario_id}),
        human,
    ))
}

fn load_scenario(args: &AutotuneArgs, seed: u64) -> Result<Scenario> {
    let mut scenario = if args.scenario.ends_with(".json") {
        let text = std::fs::read_to_string(&args.scenario)?;
        serde_json::from_str::<Scenario>(&text)
            .map_err(|e| Error::invalid(format!("scenario file: {e}")))?
    } else {
        let id = args.record.clone().unwrap_or_else(|| args.scenario.clone());
        Scenario::new(&id, 10, 3)
    };
    // command-line knobs override the file only when given
    if let Some(iterations) = args.iterations {
        scenario.iterations = iterations;
    }
    if let Some(repetitions) = args.repetitions {
        scenario.repetitions = repetitions;
    }
    if let Some(p) = args.include_probability {
        scenario.sampling.include_probability = p;
    }
    scenario.sampling.enable_parametric |= args.parametric_flags;
    scenario.sampling.enable_cpu |= args.cpu_flags;
    scenario.sampling.enable_base |= args.base_flags;
    scenario.sampling.seed = seed;
    if args.frontier_only {
        scenario.record_policy = RecordPolicy::FrontierOnly;
    }
    if args.exhaustive {
        scenario.sampling_mode = SamplingMode::Exhaustive;
    }
    Ok(scenario)
}

#[allow(clippy::too_many_arguments)]
fn reduce_command(
    app: &App,
    entry: &str,
    point: &str,
    md5_shortcut: bool,
    invert: bool,
    keep: Option<String>,
    prune_file: Option<PathBuf>,
    failure: bool,
    contribution: bool,
    deterministic: bool,
) -> Result<Output> {
    let entry_meta = app.store.load_entry(entry)?;
    let (backend, space) = app.backend_and_space(&entry_meta.workload)?;
    let mut config = match prune_file {
        Some(path) => {
            let text = std::fs::read_to_string(&path)?;
            serde_json::from_str::<PruneConfig>(&text)
                .map_err(|e| Error::invalid(format!("prune file: {e}")))?
        }
        None => PruneConfig::default(),
    };
    config.use_md5_shortcut |= md5_shortcut;
    config.invert |= invert;
    config.deterministic_order |= deterministic;
    if keep.is_some() {
        config.keep_key = keep;
    }
    config.seed = app.config.seed;

    let mut reducer = Reducer::new(&app.registry, &app.store, &space, backend, app.uid_seed()?);
    reducer.stats = app.stats();
    if contribution {
        let report = reducer.contribution(entry, point, config.tolerance)?;
        let mut human = String::new();
        for row in &report.rows {
            human.push_str(&format!(
                "{}\t{:?}\t{}\n",
                row.flag,
                row.verdict,
                row.deltas
                    .iter()
                    .map(|(k, v)| format!("{k} {:+.2}%", v * 100.0))
                    .collect::<Vec<_>>()
                    .join("  ")
            ));
        }
        return Ok(Output::new(serde_json::to_value(&report)?, human));
    }
    // --invert chains an inversion pass after the reduction
    let outcome = if failure {
        reducer.minimize_failure(entry, point, &config)?
    } else {
        reducer.reduce(entry, point, &config)?
    };
    let human = format!(
        "reduced to: {}\nremoved {} flag(s), {} measurement(s), {} md5 shortcut(s)\nnew point {}",
        outcome.rendered,
        outcome.removed.len(),
        outcome.measurements,
        outcome.md5_shortcuts,
        outcome.point_uid
    );
    Ok(Output::new(serde_json::to_value(&outcome)?, human))
}

fn replay_command(app: &App, entry: &str, point: &str, tolerance: f64) -> Result<Output> {
    let entry_meta = app.store.load_entry(entry)?;
    let (backend, space) = app.backend_and_space(&entry_meta.workload)?;
    let _lock =
        crate::registry::MutationLock::acquire(app.store.root().join(".machine.lock"))?;
    let report = store::replay(&app.store, &app.registry, &space, backend, entry, point, tolerance)?;
    let mut human = String::new();
    for row in &report.rows {
        human.push_str(&format!(
            "{}: {} -> {} ({:+.2}%) {}\n",
            row.characteristic,
            row.original,
            row.replayed,
            row.relative_difference * 100.0,
            if row.pass { "ok" } else { "DIFFERS" }
        ));
    }
    if report.behavioral_difference {
        human.push_str(&format!(
            "behavior changed: {:?} -> {:?}\n",
            report.original_failure, report.replayed_failure
        ));
    }
    human.push_str(if report.pass { "replay: PASS" } else { "replay: FAIL" });
    Ok(Output::new(serde_json::to_value(&report)?, human))
}

fn experiment_command(app: &App, command: ExperimentCommand) -> Result<Output> {
    match command {
        ExperimentCommand::List => {
            let entries = app.store.list_entries()?;
            let human = entries
                .iter()
                .map(|e| {
                    format!(
                        "{}\t{}\t{}\t{} point(s)",
                        e.entry_uid,
                        e.scenario_id,
                        e.workload,
                        e.points.len()
                    )
                })
                .collect::<Vec<_>>()
                .join("\n");
            let listing: Vec<Value> = entries
                .iter()
                .map(|e| {
                    json!({
                        "entry": e.entry_uid,
                        "scenario": e.scenario_id,
                        "workload": e.workload,
                        "points": e.points.len(),
                    })
                })
                .collect();
            Ok(Output::new(Value::Array(listing), human))
        }
        ExperimentCommand::Show { entry } => {
            let meta = app.store.load_entry(&entry)?;
            let text = serde_json::to_string_pretty(&meta)?;
            Ok(Output::new(serde_json::to_value(&meta)?, text))
        }
        ExperimentCommand::Export { entry, columns } => {
            let column_names: Vec<&str> = columns.split(',').map(str::trim).collect();
            let csv = app.store.export_table(&entry, &column_names)?;
            Ok(Output::new(json!({"entry": entry, "csv": csv}), csv))
        }
        ExperimentCommand::Replay { entry, point, tolerance } => {
            replay_command(app, &entry, &point, tolerance)
        }
    }
}

fn crowd_command(app: &App, command: CrowdCommand) -> Result<Output> {
    match command {
        CrowdCommand::Serve { port, store, margin } => {
            let server = CrowdServer::open(store, margin)?;
            let running = server.serve(&format!("0.0.0.0:{port}"))?;
            eprintln!("crowd server listening on {}", running.addr);
            // blocks until killed
            loop {
                std::thread::sleep(std::time::Duration::from_secs(3600));
            }
        }
        CrowdCommand::Tune {
            workload,
            cmd,
            dataset,
            iterations,
            scenario,
            repetitions,
            participant,
        } => {
            let server_url = app
                .config
                .server
                .clone()
                .ok_or_else(|| Error::environment("no crowd server configured (--server)"))?;
            let (backend, space) = app.backend_and_space(&workload)?;
            let key = ScenarioKey::new(
                &scenario,
                &backend
                    .compiler()
                    .map(|c| c.id.clone())
                    .unwrap_or_else(|| "synthetic".to_string()),
                &PlatformInfo::detect().class(),
            );
            let client = CrowdClient::new(&server_url);
            let mut explorer =
                Explorer::new(&app.registry, &app.store, &space, backend, app.uid_seed()?);
            explorer.stats = app.stats();
            let participant = participant
                .unwrap_or_else(|| format!("anon-{}", crate::uid::UidGen::new(app.config.seed ^ 0xA11CE).next_uid()));
            let outcome = crowd::crowdtune(
                &mut explorer,
                &client,
                &key,
                &workload,
                dataset.as_deref(),
                &cmd,
                iterations,
                &participant,
                repetitions,
                mix_seed(app.config.seed, 0xC0FFEE),
            )?;
            let human = format!(
                "replayed {} shared solution(s), {} fresh iteration(s); {} reaction(s) reported{}{}",
                outcome.replayed_solutions,
                outcome.fresh_iterations,
                outcome.report.reactions.len(),
                if outcome.report.candidate.is_some() { "; new candidate submitted" } else { "" },
                if outcome.submitted { "" } else { "; server unreachable, report queued" },
            );
            Ok(Output::new(
                json!({
                    "entry": outcome.entry_uid,
                    "submitted": outcome.submitted,
                    "report": outcome.report,
                }),
                human,
            ))
        }
        CrowdCommand::Top { scenario, compiler, platform, n } => {
            let server_url = app
                .config
                .server
                .clone()
                .ok_or_else(|| Error::environment("no crowd server configured (--server)"))?;
            let platform = platform.unwrap_or_else(|| PlatformInfo::detect().class());
            let key = ScenarioKey::new(&scenario, &compiler, &platform);
            let client = CrowdClient::new(&server_url);
            let top = client.top(&key, n)?;
            let human = top
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    format!(
                        "{}. {} best={} worst={} high={:.2} flags: {}",
                        i + 1,
                        s.solution_uid,
                        s.best_species,
                        s.worst_species,
                        s.highest_improvement,
                        s.assignment_text
                    )
                })
                .collect::<Vec<_>>()
                .join("\n");
            Ok(Output::new(serde_json::to_value(&top)?, human))
        }
    }
}

fn benchmark_command(
    app: &App,
    workload: &str,
    solution_uid: &str,
    cmd: &str,
    dataset: Option<&str>,
    repetitions: usize,
) -> Result<Output> {
    let server_url = app
        .config
        .server
        .clone()
        .ok_or_else(|| Error::environment("no crowd server configured (--server)"))?;
    let (backend, space) = app.backend_and_space(workload)?;
    let client = CrowdClient::new(&server_url);
    let mut explorer =
        Explorer::new(&app.registry, &app.store, &space, backend, app.uid_seed()?);
    explorer.stats = app.stats();
    let _lock =
        crate::registry::MutationLock::acquire(app.store.root().join(".machine.lock"))?;
    let (solution, speedup) = crowd::client::benchmark_solution(
        &mut explorer,
        &client,
        solution_uid,
        workload,
        dataset,
        cmd,
        repetitions,
        app.config.seed,
    )?;
    let human = format!(
        "solution {} ({}) speedup over baseline: {:.3}x",
        solution.solution_uid, solution.assignment_text, speedup
    );
    Ok(Output::new(
        json!({"solution": solution, "speedup": speedup}),
        human,
    ))
}

fn parse_feature_list(text: Option<&str>, dataset: &LabeledDataset) -> Result<Vec<u32>> {
    match text {
        Some(text) => text
            .split(',')
            .map(|t| learn::parse_feature_id(t.trim()))
            .collect(),
        None => Ok(dataset.feature_ids()),
    }
}

fn parse_model_kind(model: &str, depth: Option<u32>) -> Result<ModelKind> {
    match model {
        "knn" | "nearest-neighbor" | "nearest_neighbor" => Ok(ModelKind::NearestNeighbor),
        "tree" | "decision-tree" | "decision_tree" => {
            Ok(ModelKind::DecisionTree { max_depth: depth })
        }
        other => Err(Error::contract(format!("unknown model kind {other:?}"))),
    }
}

fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::invalid(format!("dataset file: {e}")))
}

fn model_command(app: &App, command: ModelCommand) -> Result<Output> {
    match command {
        ModelCommand::Train { dataset, model, depth, features, out } => {
            let data = load_dataset(&dataset)?;
            let feature_set = parse_feature_list(features.as_deref(), &data)?;
            let spec = ModelSpec { kind: parse_model_kind(&model, depth)?, feature_set, seed: 0 };
            let trained = learn::train(&spec, &data)?;
            let accuracy = learn::in_sample_accuracy(&trained, &data);
            crate::registry::write_json_atomic(&out, &trained)?;
            let rules = trained.export_rules();
            Ok(Output::new(
                json!({"model": out, "in_sample_accuracy": accuracy, "rules": rules}),
                format!("in-sample accuracy {accuracy:.3}\n{rules}"),
            ))
        }
        ModelCommand::Cv { dataset, model, depth, features } => {
            let data = load_dataset(&dataset)?;
            let feature_set = parse_feature_list(features.as_deref(), &data)?;
            let spec = ModelSpec { kind: parse_model_kind(&model, depth)?, feature_set, seed: 0 };
            let accuracy = learn::loo_cv(&spec, &data)?;
            Ok(Output::new(
                json!({"cv_accuracy": accuracy, "items": data.len()}),
                format!("leave-one-out accuracy {accuracy:.3} over {} items", data.len()),
            ))
        }
        ModelCommand::Predict { model_file, features } => {
            let text = std::fs::read_to_string(&model_file)?;
            let model: learn::Model = serde_json::from_str(&text)
                .map_err(|e| Error::invalid(format!("model file: {e}")))?;
            let vector = if features.ends_with(".json") {
                let text = std::fs::read_to_string(&features)?;
                learn::FeatureVector::from_json("query", &text)?
            } else {
                app.registry.load_feature_vector(&features)?
            };
            let label = learn::predict(&model, &vector);
            Ok(Output::new(
                json!({"label": label, "workload": vector.workload}),
                format!("predicted optimization: {label}"),
            ))
        }
        ModelCommand::AutotuneDepth { dataset, depths, features } => {
            let data = load_dataset(&dataset)?;
            let feature_set = parse_feature_list(features.as_deref(), &data)?;
            let depth_list: Vec<u32> = depths
                .split(',')
                .map(|d| {
                    d.trim()
                        .parse()
                        .map_err(|_| Error::contract(format!("bad depth {d:?}")))
                })
                .collect::<Result<_>>()?;
            let (best, curve) = learn::autotune_depth(&data, &depth_list, &feature_set)?;
            let human = curve
                .iter()
                .map(|p| {
                    format!(
                        "depth {:>2}: cv {:.3} in-sample {:.3}",
                        p.depth, p.cv_accuracy, p.in_sample_accuracy
                    )
                })
                .collect::<Vec<_>>()
                .join("\n");
            Ok(Output::new(
                json!({"best_depth": best, "curve": curve}),
                format!("{human}\nbest depth: {best}"),
            ))
        }
        ModelCommand::ReduceFeatures { dataset, model, depth, mode, features } => {
            let data = load_dataset(&dataset)?;
            let feature_set = parse_feature_list(features.as_deref(), &data)?;
            let spec = ModelSpec { kind: parse_model_kind(&model, depth)?, feature_set, seed: 0 };
            let mode = match mode.as_str() {
                "greedy_remove" | "remove" => ReductionMode::GreedyRemove,
                "greedy_add" | "add" => ReductionMode::GreedyAdd,
                other => return Err(Error::contract(format!("unknown mode {other:?}"))),
            };
            let (kept, accuracy) = learn::reduce_features(&spec, &data, mode)?;
            let names: Vec<String> = kept.iter().map(|id| learn::feature_name(*id)).collect();
            Ok(Output::new(
                json!({"features": names, "cv_accuracy": accuracy}),
                format!("kept features: {} (cv accuracy {accuracy:.3})", names.join(",")),
            ))
        }
        ModelCommand::BuildMatrix { entries, out } => {
            let entry_uids: Vec<String> = match entries {
                Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
                None => app
                    .store
                    .list_entries()?
                    .into_iter()
                    .map(|e| e.entry_uid)
                    .collect(),
            };
            let matrix = learn::ReactionMatrix::from_entries(
                &app.store,
                &entry_uids,
                app.config.trust_threshold,
            )?;
            crate::registry::write_json_atomic(&out, &matrix)?;
            Ok(Output::new(
                json!({"workloads": matrix.rows.len(), "solutions": matrix.solutions.len(), "out": out}),
                format!(
                    "matrix: {} workload(s) x {} solution(s)",
                    matrix.rows.len(),
                    matrix.solutions.len()
                ),
            ))
        }
        ModelCommand::MakeDataset { matrix, out, margin } => {
            let text = std::fs::read_to_string(&matrix)?;
            let matrix: learn::ReactionMatrix = serde_json::from_str(&text)
                .map_err(|e| Error::invalid(format!("matrix file: {e}")))?;
            let mut features = Vec::new();
            for workload in matrix.rows.keys() {
                match app.registry.load_feature_vector(workload) {
                    Ok(fv) => features.push(fv),
                    Err(e) => eprintln!("skipping {workload}: {e}"),
                }
            }
            let dataset = learn::dataset_from_matrix(&matrix, features, margin)?;
            crate::registry::write_json_atomic(&out, &dataset)?;
            let labels: Vec<String> = dataset
                .items
                .iter()
                .map(|i| format!("{} -> {}", i.features.workload, i.label))
                .collect();
            Ok(Output::new(
                json!({"items": dataset.len(), "out": out}),
                labels.join("\n"),
            ))
        }
    }
}
