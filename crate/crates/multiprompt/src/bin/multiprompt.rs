//! Command-line surface over the multiprompt library. Exit codes:
//! 0 success, 2 validation failure, 3 backend failure, 4 incomplete
//! run.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use multiprompt::backend::{Backend, BackendSpec};
use multiprompt::budget::{greedy_max_search, randomized_avg_estimate, SearchSchedule};
use multiprompt::config::HarnessConfig;
use multiprompt::ingest;
use multiprompt::paraphrase::{
    agreement_report, generate, AnnotatedPool, GenerationJob, MetaPrompts, Verdict, VerdictEntry,
};
use multiprompt::report::{build_report, export, render_summary, ExportFormat, ReportError};
use multiprompt::runner::{self, scorer_for, RunConfig, RunnerError, TemplateSelection};
use multiprompt::template::{validate_pool, Instance, Method, TaskSpec};

const EXIT_VALIDATION: u8 = 2;
const EXIT_BACKEND: u8 = 3;
const EXIT_INCOMPLETE: u8 = 4;

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }
}

type CliResult = Result<(), CliError>;

impl From<RunnerError> for CliError {
    fn from(err: RunnerError) -> Self {
        let code = match &err {
            RunnerError::Backend { .. } => EXIT_BACKEND,
            _ => EXIT_VALIDATION,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(err: ReportError) -> Self {
        let code = match &err {
            ReportError::IncompleteRun { .. } | ReportError::MissingRunFile(_, _) => {
                EXIT_INCOMPLETE
            }
            ReportError::Runner(RunnerError::Backend { .. }) => EXIT_BACKEND,
            _ => EXIT_VALIDATION,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

impl From<multiprompt::backend::BackendError> for CliError {
    fn from(err: multiprompt::backend::BackendError) -> Self {
        Self {
            code: EXIT_BACKEND,
            message: err.to_string(),
        }
    }
}

impl From<multiprompt::budget::BudgetError> for CliError {
    fn from(err: multiprompt::budget::BudgetError) -> Self {
        let code = match &err {
            multiprompt::budget::BudgetError::Runner(RunnerError::Backend { .. }) => EXIT_BACKEND,
            _ => EXIT_VALIDATION,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

impl From<multiprompt::ingest::IngestError> for CliError {
    fn from(err: multiprompt::ingest::IngestError) -> Self {
        Self::validation(err.to_string())
    }
}

impl From<multiprompt::paraphrase::ParaphraseError> for CliError {
    fn from(err: multiprompt::paraphrase::ParaphraseError) -> Self {
        let code = match &err {
            multiprompt::paraphrase::ParaphraseError::Backend(_) => EXIT_BACKEND,
            _ => EXIT_VALIDATION,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

impl From<multiprompt::config::ConfigError> for CliError {
    fn from(err: multiprompt::config::ConfigError) -> Self {
        Self::validation(err.to_string())
    }
}

#[derive(Parser)]
#[command(name = "multiprompt", version, about = "Multi-prompt LLM evaluation harness")]
struct Cli {
    /// Default seed for commands that accept one.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// key=value configuration file for analysis options.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Workspace root for resolving task ids.
    #[arg(long, global = true, default_value = ".")]
    workspace: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Template-pool maintenance.
    #[command(subcommand)]
    Pool(PoolCommand),
    /// Evaluate models over a pool and persist the record log.
    Run(RunArgs),
    /// Print the per-model metric table of a run.
    Metrics { run_dir: PathBuf },
    /// Print the ranking-stability table of a run.
    Stats { run_dir: PathBuf },
    /// Print a human-readable report of a run.
    Report { run_dir: PathBuf },
    /// Export a run's report as CSV or JSON files.
    Export(ExportArgs),
    /// Greedy budgeted search for the best-performing template.
    SearchMax(SearchMaxArgs),
    /// Randomized budgeted estimate of the average performance.
    EstimateAvg(EstimateAvgArgs),
}

#[derive(Subcommand)]
enum PoolCommand {
    /// Check a pool against its task schema.
    Validate(PoolTaskArgs),
    /// Generate paraphrase templates with a generator model.
    Gen(GenArgs),
    /// Record one annotator's verdict on a template.
    Annotate(AnnotateArgs),
    /// Inter-annotator accuracy and Cohen's kappa.
    Agreement(AgreementArgs),
}

#[derive(Args)]
struct PoolTaskArgs {
    #[arg(long)]
    task: String,
    #[arg(long)]
    pool: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    task: String,
    #[arg(long)]
    pool: PathBuf,
    /// Generation method: rephrase, cot, or gradual.
    #[arg(long)]
    method: GenMethod,
    #[arg(long, default_value_t = 200)]
    count: usize,
    /// JSONL file of backend specs; the first entry (or --model) is
    /// the generator.
    #[arg(long)]
    generator: PathBuf,
    #[arg(long)]
    model: Option<String>,
    /// Instance file used to fill the {examples} slot.
    #[arg(long)]
    instances: Option<PathBuf>,
    /// Directory of meta-prompt override files.
    #[arg(long)]
    meta_prompts: Option<PathBuf>,
    /// Where to write the extended pool (defaults to --pool in place).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenMethod {
    Rephrase,
    Cot,
    Gradual,
}

impl From<GenMethod> for Method {
    fn from(m: GenMethod) -> Self {
        match m {
            GenMethod::Rephrase => Method::Rephrase,
            GenMethod::Cot => Method::Cot,
            GenMethod::Gradual => Method::Gradual,
        }
    }
}

#[derive(Args)]
struct AnnotateArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    template_id: String,
    #[arg(long)]
    annotator: String,
    #[arg(long)]
    verdict: VerdictArg,
    /// Verdict log (defaults to <pool>.annotations.jsonl).
    #[arg(long)]
    annotations: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VerdictArg {
    Valid,
    Invalid,
}

#[derive(Args)]
struct AgreementArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    annotator_a: String,
    #[arg(long)]
    annotator_b: String,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    task: String,
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    instances: PathBuf,
    /// JSONL file of backend specs, one model per line.
    #[arg(long)]
    models: PathBuf,
    /// Instance subsample size.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    run_id: Option<String>,
    /// Restrict to these template ids (comma separated).
    #[arg(long, value_delimiter = ',')]
    templates: Vec<String>,
    /// Permit unreviewed templates (unfiltered-pool analyses).
    #[arg(long)]
    allow_unreviewed: bool,
}

#[derive(Args)]
struct ExportArgs {
    run_dir: PathBuf,
    #[arg(long, value_enum)]
    format: ExportFormatArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct SearchMaxArgs {
    #[arg(long)]
    task: String,
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    instances: PathBuf,
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    model: Option<String>,
    /// Elimination ladder, e.g. "all:10,100:10,10:rest".
    #[arg(long, default_value = "all:10,100:10,10:rest")]
    schedule: String,
    #[arg(long)]
    allow_unreviewed: bool,
}

#[derive(Args)]
struct EstimateAvgArgs {
    #[arg(long)]
    task: String,
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    instances: PathBuf,
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long)]
    allow_unreviewed: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult {
    let config = match &cli.config {
        Some(path) => HarnessConfig::from_file(path)?,
        None => HarnessConfig::default(),
    };
    match &cli.command {
        Command::Pool(PoolCommand::Validate(args)) => pool_validate(cli, args),
        Command::Pool(PoolCommand::Gen(args)) => pool_gen(cli, args),
        Command::Pool(PoolCommand::Annotate(args)) => pool_annotate(args),
        Command::Pool(PoolCommand::Agreement(args)) => pool_agreement(args),
        Command::Run(args) => run_command(cli, &config, args),
        Command::Metrics { run_dir } => {
            let report = build_report(run_dir, &config.report)?;
            let dir = ScratchDir::new()?;
            let paths = export(&report, ExportFormat::Csv, dir.path())?;
            let text = std::fs::read_to_string(&paths[0])
                .map_err(|e| CliError::validation(e.to_string()))?;
            print!("{text}");
            Ok(())
        }
        Command::Stats { run_dir } => {
            let report = build_report(run_dir, &config.report)?;
            let dir = ScratchDir::new()?;
            let paths = export(&report, ExportFormat::Csv, dir.path())?;
            let text = std::fs::read_to_string(&paths[3])
                .map_err(|e| CliError::validation(e.to_string()))?;
            print!("{text}");
            Ok(())
        }
        Command::Report { run_dir } => {
            let report = build_report(run_dir, &config.report)?;
            print!("{}", render_summary(&report));
            Ok(())
        }
        Command::Export(args) => {
            let report = build_report(&args.run_dir, &config.report)?;
            let format = match args.format {
                ExportFormatArg::Csv => ExportFormat::Csv,
                ExportFormatArg::Json => ExportFormat::Json,
            };
            let paths = export(&report, format, &args.out)?;
            for path in paths {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::SearchMax(args) => search_max(cli, &config, args),
        Command::EstimateAvg(args) => estimate_avg(cli, &config, args),
    }
}

/// Scratch directory so the table commands can reuse the exporters.
struct ScratchDir(PathBuf);

impl ScratchDir {
    fn new() -> Result<Self, CliError> {
        let mut path = std::env::temp_dir();
        path.push(format!(
            "multiprompt-{}-{:x}",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap_or_default()
                .as_nanos()
        ));
        std::fs::create_dir_all(&path).map_err(|e| CliError::validation(e.to_string()))?;
        Ok(Self(path))
    }

    fn path(&self) -> &Path {
        &self.0
    }
}

impl Drop for ScratchDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

/// `--task` takes either a path to a task file or an id resolved under
/// the workspace.
fn resolve_task(cli: &Cli, task: &str) -> Result<TaskSpec, CliError> {
    let direct = Path::new(task);
    if direct.is_file() {
        return Ok(ingest::load_task(direct)?);
    }
    let in_workspace = cli.workspace.join("tasks").join(format!("{task}.json"));
    if in_workspace.is_file() {
        return Ok(ingest::load_task(&in_workspace)?);
    }
    Err(CliError::validation(format!(
        "cannot resolve task {task}: no such file and {} does not exist",
        in_workspace.display()
    )))
}

fn load_backend_specs(path: &Path) -> Result<Vec<BackendSpec>, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::validation(e.to_string()))?;
    let mut specs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let spec: BackendSpec = serde_json::from_str(line)
            .map_err(|e| CliError::validation(format!("{}:{}: {e}", path.display(), idx + 1)))?;
        spec.validate()?;
        specs.push(spec);
    }
    if specs.is_empty() {
        return Err(CliError::validation(format!(
            "{} holds no backend specs",
            path.display()
        )));
    }
    Ok(specs)
}

fn pick_backend(specs: Vec<BackendSpec>, model: &Option<String>) -> Result<BackendSpec, CliError> {
    match model {
        None => Ok(specs.into_iter().next().expect("non-empty")),
        Some(id) => specs
            .into_iter()
            .find(|s| &s.model_id == id)
            .ok_or_else(|| CliError::validation(format!("no backend spec for model {id}"))),
    }
}

fn pool_validate(cli: &Cli, args: &PoolTaskArgs) -> CliResult {
    let task = resolve_task(cli, &args.task)?;
    let pool = ingest::load_pool(&args.pool)?;
    let violations = validate_pool(&pool, &task);
    if violations.is_empty() {
        println!("pool ok: {} templates", pool.len());
        Ok(())
    } else {
        for violation in &violations {
            println!("{violation}");
        }
        Err(CliError::validation(format!(
            "{} violation(s)",
            violations.len()
        )))
    }
}

fn format_exemplars(instances: &[Instance]) -> String {
    instances
        .iter()
        .take(3)
        .map(|i| {
            let fields = i
                .field_values
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(", ");
            format!("input: {fields} -> output: {}", i.gold[0])
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn pool_gen(cli: &Cli, args: &GenArgs) -> CliResult {
    let task = resolve_task(cli, &args.task)?;
    let pool = ingest::load_pool(&args.pool)?;
    let spec = pick_backend(load_backend_specs(&args.generator)?, &args.model)?;
    let backend = Backend::from_spec(&spec)?;
    let seeds: Vec<_> = pool.iter().filter(|t| t.is_original()).cloned().collect();
    if seeds.is_empty() {
        return Err(CliError::validation(
            "pool has no original templates to seed generation",
        ));
    }
    let exemplar_text = match &args.instances {
        Some(path) => format_exemplars(&ingest::load_instances(path, &task)?),
        None => String::new(),
    };
    let meta_prompts = match &args.meta_prompts {
        Some(dir) => Some(MetaPrompts::load_overrides(dir)?),
        None => None,
    };
    let job = GenerationJob {
        task,
        seed_templates: seeds,
        method: args.method.into(),
        target_count: args.count,
        exemplar_text,
        meta_prompts,
    };
    let outcome = generate(&job, &backend, &pool)?;
    let mut extended = pool;
    extended.extend(outcome.accepted.iter().cloned());
    let out = args.out.as_ref().unwrap_or(&args.pool);
    ingest::save_pool(out, &extended)?;
    println!(
        "accepted {} template(s), rejected {}, parse failures {}; pool now {} -> {}",
        outcome.accepted.len(),
        outcome.rejected.len(),
        outcome.parse_failures,
        extended.len(),
        out.display()
    );
    Ok(())
}

fn annotations_path(pool: &Path, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        let mut os = pool.as_os_str().to_owned();
        os.push(".annotations.jsonl");
        PathBuf::from(os)
    })
}

fn load_verdicts(path: &Path) -> Result<Vec<VerdictEntry>, CliError> {
    if !path.is_file() {
        return Ok(Vec::new());
    }
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::validation(e.to_string()))?;
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        entries.push(serde_json::from_str(line).map_err(|e| {
            CliError::validation(format!("{}:{}: {e}", path.display(), idx + 1))
        })?);
    }
    Ok(entries)
}

fn pool_annotate(args: &AnnotateArgs) -> CliResult {
    let templates = ingest::load_pool(&args.pool)?;
    let ann_path = annotations_path(&args.pool, &args.annotations);
    let verdicts = load_verdicts(&ann_path)?;
    let mut pool = AnnotatedPool::with_verdicts(templates, verdicts);
    let verdict = match args.verdict {
        VerdictArg::Valid => Verdict::Valid,
        VerdictArg::Invalid => Verdict::Invalid,
    };
    pool.annotate(&args.template_id, &args.annotator, verdict)?;
    ingest::save_pool(&args.pool, &pool.templates)?;
    let lines: Vec<String> = pool
        .verdicts
        .iter()
        .map(|v| serde_json::to_string(v).expect("verdict serializes"))
        .collect();
    std::fs::write(&ann_path, lines.join("\n") + "\n")
        .map_err(|e| CliError::validation(e.to_string()))?;
    println!(
        "{}: {} by {}",
        args.template_id,
        match args.verdict {
            VerdictArg::Valid => "valid",
            VerdictArg::Invalid => "invalid",
        },
        args.annotator
    );
    Ok(())
}

fn pool_agreement(args: &AgreementArgs) -> CliResult {
    let templates = ingest::load_pool(&args.pool)?;
    let ann_path = annotations_path(&args.pool, &args.annotations);
    let verdicts = load_verdicts(&ann_path)?;
    let pool = AnnotatedPool::with_verdicts(templates, verdicts);
    let report = agreement_report(&pool, &args.annotator_a, &args.annotator_b)?;
    println!(
        "n={} accuracy={:.4} kappa={}",
        report.n,
        report.accuracy,
        report
            .kappa
            .map(|k| format!("{k:.4}"))
            .unwrap_or_else(|| "undefined".into())
    );
    Ok(())
}

fn run_command(cli: &Cli, config: &HarnessConfig, args: &RunArgs) -> CliResult {
    let task = resolve_task(cli, &args.task)?;
    let pool = ingest::load_pool(&args.pool)?;
    let instances = ingest::load_instances(&args.instances, &task)?;
    let backends = load_backend_specs(&args.models)?;
    let run_id = args
        .run_id
        .clone()
        .unwrap_or_else(|| format!("{}-seed{}", task.task_id, cli.seed));
    let run_config = RunConfig {
        run_id,
        task_id: task.task_id.clone(),
        backends,
        template_selection: if args.templates.is_empty() {
            TemplateSelection::AllValid
        } else {
            TemplateSelection::Explicit(args.templates.clone())
        },
        instance_sample_size: args.n,
        sampling_seed: cli.seed,
        scorer_id: task.scorer_id.clone(),
        allow_unreviewed: args.allow_unreviewed || config.allow_unreviewed,
        failure_policy: config.failure_policy,
        score_options: config.score,
    };
    let output = runner::run(&run_config, &task, &pool, &instances, &args.out)?;
    println!(
        "run {}: {} templates x {} models over {} instances ({} cell(s) resumed)",
        run_config.run_id,
        output.matrix.n_templates(),
        output.matrix.n_models(),
        output.sampled_instance_ids.len(),
        output.resumed_cells,
    );
    println!("records: {}", output.records_path.display());
    Ok(())
}

fn search_max(cli: &Cli, config: &HarnessConfig, args: &SearchMaxArgs) -> CliResult {
    let task = resolve_task(cli, &args.task)?;
    let pool = ingest::load_pool(&args.pool)?;
    let instances = ingest::load_instances(&args.instances, &task)?;
    let spec = pick_backend(load_backend_specs(&args.models)?, &args.model)?;
    let backend = Backend::from_spec(&spec)?;
    let schedule = SearchSchedule::parse(&args.schedule)?;
    let scorer = scorer_for(&task.scorer_id, config.score)?;
    let runnable = runnable_pool(&pool, args.allow_unreviewed || config.allow_unreviewed);
    let outcome = greedy_max_search(
        &backend,
        &runnable,
        &instances,
        &schedule,
        cli.seed,
        scorer.as_ref(),
    )?;
    println!(
        "best template: {} (estimated max {:.4}, {} call(s))",
        outcome.best_template_id, outcome.estimated_max, outcome.calls_made
    );
    for stage in &outcome.audit {
        println!(
            "stage {}: {} entrant(s) on {} instance(s); top: {}",
            stage.stage,
            stage.entrants,
            stage.instances_used,
            stage
                .survivors
                .iter()
                .take(3)
                .map(|(id, mean)| format!("{id}={mean:.4}"))
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    Ok(())
}

fn estimate_avg(cli: &Cli, config: &HarnessConfig, args: &EstimateAvgArgs) -> CliResult {
    let task = resolve_task(cli, &args.task)?;
    let pool = ingest::load_pool(&args.pool)?;
    let instances = ingest::load_instances(&args.instances, &task)?;
    let spec = pick_backend(load_backend_specs(&args.models)?, &args.model)?;
    let backend = Backend::from_spec(&spec)?;
    let scorer = scorer_for(&task.scorer_id, config.score)?;
    let runnable = runnable_pool(&pool, args.allow_unreviewed || config.allow_unreviewed);
    let estimate = randomized_avg_estimate(
        &backend,
        &runnable,
        &instances,
        args.reps,
        cli.seed,
        scorer.as_ref(),
    )?;
    println!(
        "estimated avg {:.4} over {} repetition(s)",
        estimate.estimate, args.reps
    );
    for (idx, rep) in estimate.per_rep.iter().enumerate() {
        println!("rep {idx}: {rep:.4}");
    }
    Ok(())
}

fn runnable_pool(
    pool: &[multiprompt::InstructionTemplate],
    allow_unreviewed: bool,
) -> Vec<multiprompt::InstructionTemplate> {
    pool.iter()
        .filter(|t| match t.validity {
            multiprompt::Validity::Valid => true,
            multiprompt::Validity::Unreviewed => allow_unreviewed,
            multiprompt::Validity::Invalid => false,
        })
        .cloned()
        .collect()
}
