// SPDX-License-Identifier: Apache-2.0

//! `katena`: validate, plan, deploy, upgrade and destroy applications
//! described by a model file, and count tokens in deployment scripts.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use katena_core::chain::{ChainBackend, MockChain, RpcAuth, RpcBackend, RpcConfig};
use katena_core::graph::{
    build_dependency_graph, deployment_plan, destroy_plan, upgrade_plan, DeploymentPlan, Step,
};
use katena_core::model::secrets::Secrets;
use katena_core::model::{
    parse_inputs, parse_model, validate_model, ArtifactStore, DeploymentModel, Endpoint, NodeProps,
    ValidationReport,
};
use katena_core::orchestrator::{
    record_path_for, Clock, DeploymentRecord, EntryStatus, ExecError, ExecOptions, ExecutionReport,
    Executor, RecordStore, StepStatus,
};
use katena_core::toolkit::{count_file, Language};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  the model does not parse or fails validation
  2  no plan exists (hard dependency cycle, unknown node, live dependents)
  3  execution failed (endpoint unreachable, transaction rejected, record locked)
  4  usage error (bad arguments, unreadable files, missing deployment record)";

#[derive(Debug, Parser)]
#[command(name = "katena", version, about = "Declarative deployment of smart-contract applications", after_help = EXIT_CODES)]
struct Cli {
    /// Application model (YAML)
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// YAML map of input values for `get_input` references
    #[arg(long, global = true)]
    inputs: Option<PathBuf>,
    /// Secrets file (YAML map, must not be readable by other users)
    #[arg(long, global = true, env = "KATENA_SECRETS")]
    secrets: Option<PathBuf>,
    /// Directory of compiled artifacts [default: <model dir>/artifacts]
    #[arg(long, global = true)]
    artifacts: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = BackendKind::Mock)]
    backend: BackendKind,
    /// JSON-RPC endpoint; overrides the model's network
    #[arg(long, global = true)]
    rpc_url: Option<String>,
    /// Run the steps of each layer concurrently
    #[arg(long, global = true)]
    parallel: bool,
    /// Machine-readable output
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    /// In-memory chain persisted beside the model
    Mock,
    /// JSON-RPC node or provider
    Rpc,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the model against the metamodel and its artifacts
    Validate,
    /// Print the deployment plan
    Plan,
    /// Deploy everything not yet deployed
    Deploy,
    /// Redeploy a node and everything that depends on it
    Upgrade { node: String },
    /// Destroy a deployed contract
    Destroy { node: String },
    /// Inspect the deployment record
    Record {
        #[command(subcommand)]
        command: RecordCommand,
    },
    /// Effort metrics for deployment scripts
    Metrics {
        #[command(subcommand)]
        command: MetricsCommand,
    },
}

#[derive(Debug, Subcommand)]
enum RecordCommand {
    Show,
}

#[derive(Debug, Subcommand)]
enum MetricsCommand {
    /// Number of tokens in a model or script
    Not {
        file: PathBuf,
        /// yaml or js [default: from the file extension]
        #[arg(long)]
        lang: Option<String>,
    },
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Plan(String),
    Execution(String),
    Usage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Plan(_) => 2,
            Failure::Execution(_) => 3,
            Failure::Usage(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m)
            | Failure::Plan(m)
            | Failure::Execution(m)
            | Failure::Usage(m) => m,
        }
    }
}

impl From<ExecError> for Failure {
    fn from(e: ExecError) -> Self {
        match e {
            ExecError::Secret(_) | ExecError::NoKey(_) | ExecError::NoWallet(_) => {
                Failure::Usage(e.to_string())
            }
            ExecError::Plan(_) => Failure::Plan(e.to_string()),
            _ => Failure::Execution(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn print_json(value: &impl serde::Serialize) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("output serializes")
    );
}

fn read(path: &Path, what: &str) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {what} {}: {e}", path.display())))
}

struct Project {
    path: PathBuf,
    model: DeploymentModel,
    artifacts: ArtifactStore,
}

impl Project {
    fn load(cli: &Cli) -> Result<Self, Failure> {
        let path = cli
            .model
            .clone()
            .ok_or_else(|| Failure::Usage("--model is required for this command".into()))?;
        let text = read(&path, "model")?;
        let inputs = match &cli.inputs {
            Some(p) => parse_inputs(&read(p, "inputs")?)
                .map_err(|e| Failure::Usage(format!("inputs {}: {e}", p.display())))?,
            None => Default::default(),
        };
        let model = parse_model(&text, &inputs)
            .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
        let dir = cli
            .artifacts
            .clone()
            .unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).join("artifacts"));
        Ok(Project {
            path,
            model,
            artifacts: ArtifactStore::from_dir(dir),
        })
    }

    fn record_path(&self) -> PathBuf {
        record_path_for(&self.path)
    }

    fn mock_path(&self) -> PathBuf {
        let stem = self
            .path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        self.path.with_file_name(format!("{stem}.katena-mock.json"))
    }

    fn validate(&self) -> ValidationReport {
        validate_model(&self.model, &self.artifacts)
    }

    /// Validation gate for commands that go on to execute.
    fn require_valid(&self) -> Outcome {
        let report = self.validate();
        for w in &report.warnings {
            eprintln!("warning: {}", w.message);
        }
        if report.is_ok() {
            return Ok(());
        }
        for v in &report.violations {
            eprintln!("error [{:?}]: {}", v.code, v.message);
        }
        Err(Failure::Validation(format!(
            "{} validation error(s)",
            report.violations.len()
        )))
    }

    fn plan(&self) -> Result<DeploymentPlan, Failure> {
        let graph = build_dependency_graph(&self.model);
        deployment_plan(&graph, &self.model).map_err(|e| Failure::Plan(e.to_string()))
    }

    fn existing_record(&self, store: &RecordStore) -> Result<DeploymentRecord, Failure> {
        store.load()?.ok_or_else(|| {
            Failure::Usage(format!(
                "no deployment record at {}; run deploy first",
                self.record_path().display()
            ))
        })
    }
}

fn load_secrets(cli: &Cli) -> Result<Secrets, Failure> {
    match &cli.secrets {
        Some(path) => Secrets::load(path).map_err(|e| Failure::Usage(e.to_string())),
        None => Ok(Secrets::default()),
    }
}

enum Backend {
    Mock { chain: MockChain, state: PathBuf },
    Rpc(RpcBackend),
}

impl Backend {
    fn open(cli: &Cli, project: &Project, secrets: &Secrets) -> Result<Self, Failure> {
        match cli.backend {
            BackendKind::Mock => {
                let state = project.mock_path();
                let chain = if state.exists() {
                    MockChain::restore(&read(&state, "mock chain state")?)
                        .map_err(|e| Failure::Usage(format!("{}: {e}", state.display())))?
                } else {
                    MockChain::new()
                };
                Ok(Backend::Mock { chain, state })
            }
            BackendKind::Rpc => {
                let mut config = match &cli.rpc_url {
                    Some(url) => RpcConfig::new(url.clone()),
                    None => rpc_config_from_model(&project.model, secrets)?,
                };
                config.url = config.url.trim_end_matches('/').to_string();
                RpcBackend::new(config)
                    .map(Backend::Rpc)
                    .map_err(|e| Failure::Execution(e.to_string()))
            }
        }
    }

    fn chain(&self) -> &dyn ChainBackend {
        match self {
            Backend::Mock { chain, .. } => chain,
            Backend::Rpc(rpc) => rpc,
        }
    }

    fn clock(&self) -> Clock {
        match self {
            Backend::Mock { .. } => Clock::Logical,
            Backend::Rpc(_) => Clock::System,
        }
    }

    /// Saves mock state so the next invocation sees the same chain.
    fn persist(&self) -> Outcome {
        if let Backend::Mock { chain, state } = self {
            std::fs::write(state, chain.snapshot() + "\n")
                .map_err(|e| Failure::Execution(format!("cannot save {}: {e}", state.display())))?;
        }
        Ok(())
    }
}

/// Endpoint of the model's single network, with a provider secret appended
/// to the URL.
fn rpc_config_from_model(model: &DeploymentModel, secrets: &Secrets) -> Result<RpcConfig, Failure> {
    let mut networks = model.nodes.values().filter(|n| n.kind.is_network());
    let (Some(net), None) = (networks.next(), networks.next()) else {
        return Err(Failure::Usage(
            "the model does not name exactly one network; pass --rpc-url".into(),
        ));
    };
    let NodeProps::Network(props) = &net.props else {
        return Err(Failure::Usage(format!(
            "network `{}` has no endpoint",
            net.name
        )));
    };
    let mut config = RpcConfig::new(props.url());
    if let Endpoint::Provider {
        secret: Some(secret),
        ..
    } = &props.endpoint
    {
        let key = secrets
            .resolve(secret, &model.inputs)
            .map_err(|e| Failure::Usage(e.to_string()))?;
        config.auth = RpcAuth::UrlSuffix(key);
    }
    Ok(config)
}

fn describe(step: &Step) -> String {
    match step {
        Step::DeployLibrary { node } => format!("deploy library {node}"),
        Step::LinkAndDeploy { node, libraries } => {
            format!("link {} and deploy {node}", libraries.join(", "))
        }
        Step::DeployContract { node } => format!("deploy {node}"),
        Step::CallWire {
            node,
            function,
            target,
        } => format!("call {node}.{function}({target})"),
        Step::DiamondCutAdd { diamond, facet } => format!("cut {facet} into {diamond}"),
        Step::DiamondCutReplace { diamond, facet } => format!("recut {facet} in {diamond}"),
        Step::DiamondCutRemove { diamond, facet } => format!("cut {facet} out of {diamond}"),
        Step::ConfigureOffChain { node } => format!("configure {node}"),
        Step::Destroy { node, function, .. } => format!("destroy {node} via {function}"),
    }
}

fn finish(cli: &Cli, backend: &Backend, report: ExecutionReport) -> Outcome {
    backend.persist()?;
    if cli.json {
        print_json(&report);
    } else {
        for outcome in &report.steps {
            let status = match outcome.status {
                StepStatus::Executed => "done",
                StepStatus::Skipped => "skip",
                StepStatus::Failed => "FAIL",
            };
            match &outcome.detail {
                Some(d) => println!("{status:>4}  {} ({d})", describe(&outcome.step)),
                None => println!("{status:>4}  {}", describe(&outcome.step)),
            }
        }
        println!(
            "{}: {} executed, {} skipped of {} steps",
            report.operation, report.executed, report.skipped, report.attempted
        );
    }
    match report.failed {
        Some(f) => Err(Failure::Execution(format!(
            "step {} ({}) failed: {}",
            f.index,
            describe(&f.step),
            f.error
        ))),
        None => Ok(()),
    }
}

fn options(cli: &Cli, backend: &Backend) -> ExecOptions {
    ExecOptions {
        parallel: cli.parallel,
        clock: backend.clock(),
    }
}

fn cmd_validate(cli: &Cli) -> Outcome {
    let project = Project::load(cli)?;
    let report = project.validate();
    if cli.json {
        print_json(&report);
    } else {
        for v in report.violations.iter().chain(&report.warnings) {
            println!("{:?} [{:?}] {}", v.severity, v.code, v.message);
        }
        if report.is_ok() {
            println!(
                "{}: valid ({} node(s))",
                project.path.display(),
                project.model.nodes.len()
            );
        }
    }
    if report.is_ok() {
        Ok(())
    } else {
        Err(Failure::Validation(format!(
            "{} validation error(s)",
            report.violations.len()
        )))
    }
}

fn cmd_plan(cli: &Cli) -> Outcome {
    let project = Project::load(cli)?;
    let plan = project.plan()?;
    if cli.json {
        println!("{}", plan.to_canonical_json());
        return Ok(());
    }
    for (i, layer) in plan.layers.iter().enumerate() {
        println!("layer {i}:");
        for step in layer {
            println!("  {}", describe(step));
        }
    }
    for w in &plan.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn cmd_deploy(cli: &Cli) -> Outcome {
    let project = Project::load(cli)?;
    let plan = project.plan()?;
    project.require_valid()?;
    let secrets = load_secrets(cli)?;
    let store = RecordStore::open(project.record_path())?;
    let prior = store.load()?;
    let backend = Backend::open(cli, &project, &secrets)?;
    let report = Executor::new(
        &project.model,
        &project.artifacts,
        backend.chain(),
        &secrets,
    )
    .with_store(&store)
    .with_options(options(cli, &backend))
    .execute_deploy(&plan, prior);
    finish(cli, &backend, report?)
}

fn cmd_upgrade(cli: &Cli, node: &str) -> Outcome {
    let project = Project::load(cli)?;
    let graph = build_dependency_graph(&project.model);
    let plan =
        upgrade_plan(&graph, &project.model, node).map_err(|e| Failure::Plan(e.to_string()))?;
    project.require_valid()?;
    let secrets = load_secrets(cli)?;
    let store = RecordStore::open(project.record_path())?;
    let record = project.existing_record(&store)?;
    let backend = Backend::open(cli, &project, &secrets)?;
    let report = Executor::new(
        &project.model,
        &project.artifacts,
        backend.chain(),
        &secrets,
    )
    .with_store(&store)
    .with_options(options(cli, &backend))
    .execute_upgrade(&plan, record);
    finish(cli, &backend, report?)
}

fn cmd_destroy(cli: &Cli, node: &str) -> Outcome {
    let project = Project::load(cli)?;
    let secrets = load_secrets(cli)?;
    let store = RecordStore::open(project.record_path())?;
    let record = project.existing_record(&store)?;
    let destroyed: BTreeSet<String> = record
        .entries
        .iter()
        .filter(|(_, e)| e.status == EntryStatus::Destroyed)
        .map(|(n, _)| n.clone())
        .collect();
    let graph = build_dependency_graph(&project.model);
    let steps = destroy_plan(&graph, &project.model, node, &destroyed)
        .map_err(|e| Failure::Plan(e.to_string()))?;
    let backend = Backend::open(cli, &project, &secrets)?;
    let report = Executor::new(
        &project.model,
        &project.artifacts,
        backend.chain(),
        &secrets,
    )
    .with_store(&store)
    .with_options(options(cli, &backend))
    .execute_destroy(&steps, record);
    finish(cli, &backend, report?)
}

fn cmd_record_show(cli: &Cli) -> Outcome {
    let path = cli
        .model
        .as_deref()
        .map(record_path_for)
        .ok_or_else(|| Failure::Usage("--model is required for this command".into()))?;
    if !path.exists() {
        return Err(Failure::Usage(format!(
            "no deployment record at {}",
            path.display()
        )));
    }
    let record: DeploymentRecord = serde_json::from_str(&read(&path, "record")?)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    if cli.json {
        println!("{}", record.to_json());
        return Ok(());
    }
    for (name, entry) in &record.entries {
        println!("{name:<24} {} {:?}", entry.address, entry.status);
    }
    for wire in record.wiring.values() {
        println!(
            "{}.{}({}) -> {}",
            wire.source, wire.function, wire.target, wire.target_address
        );
    }
    for (name, diamond) in &record.diamonds {
        for (facet, route) in &diamond.facets {
            println!(
                "{name} routes {} selector(s) to {facet}",
                route.selectors.len()
            );
        }
    }
    for name in record.offchain.keys() {
        println!("{name} configured");
    }
    Ok(())
}

fn cmd_not(cli: &Cli, file: &Path, lang: Option<&str>) -> Outcome {
    let language = match lang {
        Some(l) => l
            .parse::<Language>()
            .map_err(|e| Failure::Usage(e.to_string()))?,
        None => Language::for_path(file).ok_or_else(|| {
            Failure::Usage(format!(
                "cannot tell the language of {}; pass --lang",
                file.display()
            ))
        })?,
    };
    let count = count_file(file, language)
        .map_err(|e| Failure::Usage(format!("{}: {e}", file.display())))?;
    if cli.json {
        print_json(&count);
    } else {
        println!("{}: {} tokens ({language})", file.display(), count.tokens);
    }
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Validate => cmd_validate(cli),
        Command::Plan => cmd_plan(cli),
        Command::Deploy => cmd_deploy(cli),
        Command::Upgrade { node } => cmd_upgrade(cli, node),
        Command::Destroy { node } => cmd_destroy(cli, node),
        Command::Record {
            command: RecordCommand::Show,
        } => cmd_record_show(cli),
        Command::Metrics {
            command: MetricsCommand::Not { file, lang },
        } => cmd_not(cli, file, lang.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}
