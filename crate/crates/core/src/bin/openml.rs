//! `openml`: list, download, run and share machine-learning experiments.

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use openml::bench::{run_bench, BenchError, BenchOptions, CASE_STUDY, STUDY_TAG};
use openml::client::{
    Client, ClientError, CountRange, DataFilter, FlowFilter, Paging, PopulateRequest, RunSelector, StatusFilter,
    TaskFilter,
};
use openml::config::{self, Config, ConfigError, ConfigOverrides, ConfigStore, HOME_ENV};
use openml::learners::{LearnerError, LearnerSpec};
use openml::mockhub::{fixture, fixture_state, HubError, MockHub};
use openml::model::{DataId, EntityKind, FlowId, RunId, Task, TaskId, UserId};
use openml::runner::{run_task, RunnerError, PREDICTIVE_ACCURACY};
use openml::table::{self, parse_status, render_table, Tabular};

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error(transparent)]
    Hub(#[from] HubError),
    #[error(transparent)]
    Table(#[from] table::TableError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{0}")]
    Usage(String),
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "openml", version, about = "Client for an OpenML-style experiment hub")]
struct Cli {
    /// Directory holding `.openml/` (config and cache).
    #[arg(long, global = true, env = HOME_ENV)]
    home: Option<PathBuf>,
    /// Hub URL for this invocation only.
    #[arg(long, global = true)]
    server: Option<String>,
    /// API key for this invocation only.
    #[arg(long, global = true)]
    apikey: Option<String>,
    /// Talk to an in-process mock hub with the bundled fixture.
    #[arg(long, global = true)]
    mock: bool,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Show or change the stored configuration.
    #[command(subcommand)]
    Config(ConfigCmd),
    /// List objects on the hub.
    #[command(subcommand)]
    List(ListCmd),
    /// Download one object (cached) and describe it.
    Get {
        kind: Kind,
        id: u64,
        /// Print the description as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run a learner on a task locally, optionally uploading the run.
    Run(RunArgs),
    /// Add a tag to an object.
    Tag { kind: Kind, id: u64, tag: String },
    /// Remove a tag you added.
    Untag { kind: Kind, id: u64, tag: String },
    #[command(subcommand)]
    Cache(CacheCmd),
    /// Run a benchmark suite and write results.csv, summary.md and accuracy.svg.
    Bench(BenchArgs),
    /// Serve the mock hub over HTTP until interrupted.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8181")]
        bind: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Dataset,
    Task,
    Flow,
    Run,
}

impl From<Kind> for EntityKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Dataset => EntityKind::Dataset,
            Kind::Task => EntityKind::Task,
            Kind::Flow => EntityKind::Flow,
            Kind::Run => EntityKind::Run,
        }
    }
}

#[derive(Debug, Subcommand)]
enum ConfigCmd {
    /// Print the effective configuration.
    Show,
    /// Store one value in the config file.
    Set { key: String, value: String },
}

#[derive(Debug, Args)]
struct Output {
    /// Print CSV instead of a table.
    #[arg(long, conflicts_with = "json")]
    csv: bool,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct PageArgs {
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    offset: Option<usize>,
}

impl PageArgs {
    fn paging(&self) -> Paging {
        Paging { limit: self.limit, offset: self.offset }
    }
}

#[derive(Debug, Args)]
struct Counts {
    /// Number of classes, `n` or `lo..hi`.
    #[arg(long)]
    classes: Option<CountRange>,
    #[arg(long)]
    instances: Option<CountRange>,
    #[arg(long)]
    features: Option<CountRange>,
    /// Number of missing values.
    #[arg(long)]
    missing: Option<CountRange>,
}

#[derive(Debug, Args)]
struct RunFilter {
    #[arg(long)]
    task: Option<u64>,
    #[arg(long)]
    flow: Option<u64>,
    #[arg(long)]
    uploader: Option<u64>,
    #[arg(long)]
    tag: Option<String>,
    #[command(flatten)]
    page: PageArgs,
}

impl RunFilter {
    fn selector(&self) -> RunSelector {
        RunSelector {
            task: self.task.map(TaskId),
            flow: self.flow.map(FlowId),
            uploader: self.uploader.map(UserId),
            tag: self.tag.clone(),
            paging: self.page.paging(),
        }
    }
}

#[derive(Debug, Subcommand)]
enum ListCmd {
    Datasets {
        #[arg(long)]
        tag: Option<String>,
        #[arg(long)]
        name: Option<String>,
        /// active (default), deactivated, in_preparation or all.
        #[arg(long)]
        status: Option<String>,
        #[command(flatten)]
        counts: Counts,
        #[command(flatten)]
        page: PageArgs,
        #[command(flatten)]
        out: Output,
    },
    Tasks {
        #[arg(long = "type")]
        task_type: Option<String>,
        #[command(flatten)]
        counts: Counts,
        #[arg(long)]
        data_tag: Option<String>,
        #[arg(long)]
        tag: Option<String>,
        #[arg(long)]
        estimation_procedure: Option<String>,
        #[command(flatten)]
        page: PageArgs,
        #[command(flatten)]
        out: Output,
    },
    Flows {
        #[arg(long)]
        tag: Option<String>,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        uploader: Option<u64>,
        #[command(flatten)]
        page: PageArgs,
        #[command(flatten)]
        out: Output,
    },
    Runs {
        #[command(flatten)]
        filter: RunFilter,
        #[command(flatten)]
        out: Output,
    },
    /// Run evaluations with the learner label and aggregate measures.
    Evals {
        #[command(flatten)]
        filter: RunFilter,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    task: u64,
    /// tree, bagged-tree, forest or majority (or a full flow name).
    #[arg(long)]
    learner: String,
    /// Hyperparameter setting `name=value` (repeatable).
    #[arg(long = "param", value_parser = parse_param)]
    params: Vec<(String, String)>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Upload the flow and run to the hub.
    #[arg(long)]
    upload: bool,
    /// Tag for the uploaded run (repeatable).
    #[arg(long = "tag", requires = "upload")]
    tags: Vec<String>,
    /// Confirm the upload when the config asks for confirmation.
    #[arg(long)]
    yes: bool,
}

fn parse_param(text: &str) -> std::result::Result<(String, String), String> {
    let (k, v) = text.split_once('=').ok_or_else(|| format!("expected name=value, got '{text}'"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[derive(Debug, Subcommand)]
enum CacheCmd {
    /// Delete every cached object.
    Clear,
    /// Show cached ids per kind.
    Status,
    /// Download objects into the cache (comma-separated ids).
    Populate {
        #[arg(long, value_delimiter = ',')]
        datasets: Vec<u64>,
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<u64>,
        #[arg(long, value_delimiter = ',')]
        flows: Vec<u64>,
        #[arg(long, value_delimiter = ',')]
        runs: Vec<u64>,
    },
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, default_value = CASE_STUDY)]
    suite: String,
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Worker threads for the grid.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Use the configured hub and cache instead of a private mock hub.
    #[arg(long)]
    remote: bool,
    /// Skip uploading and verification.
    #[arg(long)]
    no_upload: bool,
    /// Confirm uploads to a remote hub when the config asks for confirmation.
    #[arg(long)]
    yes: bool,
}

struct Session {
    config: Config,
    store: ConfigStore,
    _hub: Option<MockHub>,
}

impl Session {
    fn open(cli: &Cli) -> Result<Self> {
        let home = cli.home.clone().unwrap_or_else(config::home_dir);
        let store = ConfigStore::load(&home)?;
        let mut overrides = ConfigOverrides { server_url: cli.server.clone(), apikey: cli.apikey.clone(), ..Default::default() };
        let hub = if cli.mock {
            let hub = MockHub::start()?;
            overrides.server_url = Some(hub.url());
            if overrides.apikey.is_none() && store.get().apikey.is_none() {
                overrides.apikey = Some(fixture::TEST_KEY.to_string());
            }
            Some(hub)
        } else {
            None
        };
        let config = (*store.set_session(&overrides)?).clone();
        Ok(Session { config, store, _hub: hub })
    }

    fn client(&self) -> Result<Client> {
        Ok(Client::new(&self.config)?)
    }

    fn confirm_upload(&self, yes: bool) -> Result<()> {
        if self.config.confirm_upload && !yes {
            return Err(CliError::Usage("uploads need --yes while confirm_upload is true".into()));
        }
        Ok(())
    }
}

fn emit<T: Tabular + Serialize>(rows: &[T], out: &Output) -> Result<()> {
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    if out.csv {
        table::write_csv(rows, &mut lock)?;
    } else if out.json {
        serde_json::to_writer_pretty(&mut lock, rows).map_err(io::Error::from)?;
        writeln!(lock)?;
    } else {
        write!(lock, "{}", render_table(rows))?;
    }
    Ok(())
}

fn list(session: &Session, cmd: &ListCmd) -> Result<()> {
    let client = session.client()?;
    match cmd {
        ListCmd::Datasets { tag, name, status, counts, page, out } => {
            let status = match status.as_deref() {
                None => StatusFilter::Active,
                Some("all") => StatusFilter::All,
                Some(s) => StatusFilter::Only(parse_status(s).ok_or_else(|| CliError::Usage(format!("unknown status '{s}'")))?),
            };
            let filter = DataFilter {
                tag: tag.clone(),
                name: name.clone(),
                status,
                number_of_classes: counts.classes,
                number_of_instances: counts.instances,
                number_of_features: counts.features,
                number_of_missing_values: counts.missing,
                paging: page.paging(),
            };
            emit(&client.list_datasets(&filter)?, out)
        }
        ListCmd::Tasks { task_type, counts, data_tag, tag, estimation_procedure, page, out } => {
            let filter = TaskFilter {
                task_type: task_type.clone(),
                number_of_classes: counts.classes,
                number_of_instances: counts.instances,
                number_of_features: counts.features,
                number_of_missing_values: counts.missing,
                data_tag: data_tag.clone(),
                tag: tag.clone(),
                estimation_procedure: estimation_procedure.clone(),
                paging: page.paging(),
            };
            emit(&client.list_tasks(&filter)?, out)
        }
        ListCmd::Flows { tag, name, uploader, page, out } => {
            let filter =
                FlowFilter { tag: tag.clone(), name: name.clone(), uploader: uploader.map(UserId), paging: page.paging() };
            emit(&client.list_flows(&filter)?, out)
        }
        ListCmd::Runs { filter, out } => emit(&client.list_runs(&filter.selector())?, out),
        ListCmd::Evals { filter, out } => emit(&client.list_run_evaluations(&filter.selector())?, out),
    }
}

fn describe_task(task: &Task) -> String {
    let ep = &task.estimation_procedure;
    format!(
        "OpenML Task {} :: (Data ID = {})\n  Task Type           : {}\n  Data Set            : {}\n  Target Feature      : {}\n  Estimation Procedure: {} ({} x {} folds)\n  Evaluation Measure  : {}",
        task.task_id,
        task.data_id,
        task.task_type.as_str(),
        task.data_name,
        task.target_feature,
        ep.name,
        ep.repeats,
        ep.folds,
        task.evaluation_measure
    )
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

fn get(session: &Session, kind: Kind, id: u64, as_json: bool) -> Result<()> {
    let client = session.client()?;
    let text = match kind {
        Kind::Dataset => {
            let ds = client.get_dataset(DataId(id))?;
            if as_json { json(&ds.description) } else { ds.to_string() }
        }
        Kind::Task => {
            let t = client.get_task(TaskId(id))?;
            if as_json { json(&t) } else { describe_task(&t) }
        }
        Kind::Flow => {
            let f = client.get_flow(FlowId(id))?;
            if as_json { json(&f) } else { f.to_string() }
        }
        Kind::Run => {
            let r = client.get_run(RunId(id))?;
            if as_json { json(&r) } else { r.to_string() }
        }
    };
    println!("{text}");
    Ok(())
}

fn run(session: &Session, args: &RunArgs) -> Result<()> {
    if args.upload {
        session.confirm_upload(args.yes)?;
    }
    let client = session.client()?;
    let mut learner = LearnerSpec::by_name(&args.learner)?;
    for (k, v) in &args.params {
        learner.set_str(k, v)?;
    }
    let task = client.get_task(TaskId(args.task))?;
    let data = client.get_dataset(task.data_id)?;
    let mut result = run_task(&task, &data, &learner, args.seed)?;
    if args.upload {
        result.flow_id = client.upload_flow(&learner)?.flow_id;
        result.tags.extend(args.tags.iter().cloned());
        let id = client.upload_run(&result)?;
        result = client.get_run(id)?;
    }
    println!("{result}");
    if let Some(acc) = result.aggregate(PREDICTIVE_ACCURACY) {
        println!("\nlocal {PREDICTIVE_ACCURACY}: {acc:.4} ({})", learner.label());
    }
    Ok(())
}

fn tag(session: &Session, kind: Kind, id: u64, tag: &str, add: bool) -> Result<()> {
    let client = session.client()?;
    let resp = if add { client.tag(kind.into(), id, tag)? } else { client.untag(kind.into(), id, tag)? };
    let tags: Vec<&str> = resp.tags.iter().map(String::as_str).collect();
    println!("{} {}: tags [{}]", EntityKind::from(kind), resp.id, tags.join(", "));
    Ok(())
}

fn cache(session: &Session, cmd: &CacheCmd) -> Result<()> {
    let client = session.client()?;
    match cmd {
        CacheCmd::Clear => {
            client.clear_cache()?;
            println!("cache cleared: {}", client.cache().root().display());
        }
        CacheCmd::Status => {
            let status = client.cache_status()?;
            println!("cache: {}", client.cache().root().display());
            for kind in EntityKind::ALL {
                let ids: Vec<String> = status.ids(kind).iter().map(u64::to_string).collect();
                println!("  {:<8} {:>4}  {}", kind.plural(), ids.len(), ids.join(" "));
            }
        }
        CacheCmd::Populate { datasets, tasks, flows, runs } => {
            let req = PopulateRequest {
                datasets: datasets.iter().copied().map(DataId).collect(),
                tasks: tasks.iter().copied().map(TaskId).collect(),
                flows: flows.iter().copied().map(FlowId).collect(),
                runs: runs.iter().copied().map(RunId).collect(),
            };
            let report = client.populate_cache(&req)?;
            println!("fetched {}, already cached {}", report.fetched, report.already_cached);
        }
    }
    Ok(())
}

fn bench(session: &Session, args: &BenchArgs) -> Result<()> {
    let opts = BenchOptions {
        suite: args.suite.clone(),
        seed: args.seed,
        jobs: args.jobs,
        out_dir: args.out.clone(),
        upload: !args.no_upload,
        tag: STUDY_TAG.into(),
    };
    let report = if args.remote {
        if opts.upload {
            session.confirm_upload(args.yes)?;
        }
        run_bench(&session.client()?, &opts)?
    } else {
        let hub = MockHub::start()?;
        let scratch = tempfile::tempdir()?;
        let mut cfg = Config::defaults(scratch.path());
        cfg.server_url = hub.url();
        cfg.cachedir = scratch.path().join("cache");
        cfg.apikey = Some(config::ApiKey::parse(fixture::TEST_KEY)?);
        run_bench(&Client::new(&cfg)?, &opts)?
    };
    println!(
        "{} tasks x {} learners in {:.1} s; {} runs uploaded, {} verified",
        report.tasks.len(),
        report.learners.len(),
        report.elapsed.as_secs_f64(),
        report.uploaded.len(),
        report.verified
    );
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn serve(bind: &str) -> Result<()> {
    let hub = MockHub::start_on(bind, fixture_state().clone())?;
    println!("mock hub listening on {}", hub.url());
    println!("read-only key {}, test key {}", fixture::READ_ONLY_KEY, fixture::TEST_KEY);
    hub.wait();
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Serve { bind } => serve(bind),
        Command::Config(cmd) => {
            let session = Session::open(cli)?;
            match cmd {
                ConfigCmd::Show => print!("{}", session.config.render()),
                ConfigCmd::Set { key, value } => {
                    let home = session.store.home().to_path_buf();
                    let mut overrides = ConfigOverrides::default();
                    overrides.set(key, value)?;
                    let next = config::load_config(&home)?.apply(&overrides)?;
                    let path = config::save_config(&next, &home)?;
                    println!("{key} saved to {}", path.display());
                }
            }
            Ok(())
        }
        command => {
            let session = Session::open(cli)?;
            match command {
                Command::List(cmd) => list(&session, cmd),
                Command::Get { kind, id, json } => get(&session, *kind, *id, *json),
                Command::Run(args) => run(&session, args),
                Command::Tag { kind, id, tag: t } => tag(&session, *kind, *id, t, true),
                Command::Untag { kind, id, tag: t } => tag(&session, *kind, *id, t, false),
                Command::Cache(cmd) => cache(&session, cmd),
                Command::Bench(args) => bench(&session, args),
                Command::Config(_) | Command::Serve { .. } => unreachable!("handled above"),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
