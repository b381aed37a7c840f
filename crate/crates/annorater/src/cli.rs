//! Command-line entry points, one subcommand per pipeline stage.
//!
//! Exit codes: 0 success, 1 invalid input, 2 I/O failure or exhausted API
//! retries. Failures print one diagnostic line on stderr.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use annorater_core::metrics::{evaluate, MetricsError};
use annorater_core::rater::{
    build_examples, fit, parse_proportions, proportion_sweep, repeated_holdout, ClassifierSpec, Features,
    ModelFile, RaterError, DEFAULT_GAP,
};
use annorater_core::report::{
    emit_report, from_structured, to_structured, ConfusionSection, InputDigest, Report, ReportBundle,
    ReportError, ReportFormat,
};
use annorater_core::{Dataset, EvaluationSet};
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::gateway::{
    embed_batch, run_annotation_job, Backend, BackendConfig, BackendKind, GatewayError, MockRules,
};
use crate::store::{self, StoreError};

#[derive(Debug, Parser)]
#[command(name = "annorater", version, about = "LLM annotation, evaluation and agreement rating")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Send every pending item to the model and append outcomes to a store.
    Annotate(AnnotateArgs),
    /// Compute one embedding per dataset item.
    Embed(EmbedArgs),
    /// Score stored annotations against the gold labels.
    Evaluate(EvaluateArgs),
    /// Estimate how well embeddings predict model/human agreement.
    Rate(RateArgs),
    /// Rater performance as a function of the labeled proportion.
    Sweep(SweepArgs),
    /// Merge result files and render them.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Remote,
    Mock,
}

impl From<BackendArg> for BackendKind {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Remote => BackendKind::Remote,
            BackendArg::Mock => BackendKind::Mock,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassifierArg {
    Logreg,
    Forest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Md,
    Json,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub task: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub backend: BackendArg,
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
    #[arg(long)]
    pub seed: u64,
    /// Rule table for the mock backend; defaults to answering the first label.
    #[arg(long)]
    pub mock_rules: Option<PathBuf>,
    /// Overrides the task's retry budget.
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub backend: BackendArg,
    /// Required for the mock backend; checked against remote output.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    /// Embedding model name sent to a remote backend.
    #[arg(long, default_value = "text-embedding-ada-002")]
    pub model: String,
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
    #[arg(long, default_value_t = 3)]
    pub max_retries: u32,
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub task: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also report accuracy counting unparsable responses as wrong.
    #[arg(long)]
    pub strict_unparsable: bool,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub eval: EvaluateArgs,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, value_enum, default_value_t = ClassifierArg::Logreg)]
    pub classifier: ClassifierArg,
    #[arg(long, default_value_t = 100)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    #[arg(long)]
    pub seed: u64,
    /// Also fit on every example and save the model here.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub rate: RateArgs,
    /// `start:stop:step` or a comma-separated list.
    #[arg(long, default_value = "0.1:1.0:0.1")]
    pub proportions: String,
    #[arg(long, default_value_t = DEFAULT_GAP)]
    pub gap: f64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long = "in", num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Md)]
    pub format: FormatArg,
    /// Defaults to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Failed(_) => 2,
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        if e.is_io() {
            CliError::Failed(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Store(s) => s.into(),
            GatewayError::Config(_) | GatewayError::Template(_) | GatewayError::Embedding(_) => {
                CliError::Invalid(e.to_string())
            }
            GatewayError::ApiFailure { .. } | GatewayError::Auth(_) | GatewayError::DimensionMismatch { .. } => {
                CliError::Failed(e.to_string())
            }
        }
    }
}

impl From<RaterError> for CliError {
    fn from(e: RaterError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let line = e.to_string().replace('\n', " ");
            eprintln!("annorater: {line}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Annotate(a) => cmd_annotate(&a),
        Command::Embed(a) => cmd_embed(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Rate(a) => cmd_rate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Failed(format!("starting async runtime: {e}")))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

pub fn cmd_annotate(a: &AnnotateArgs) -> Result<(), CliError> {
    let dataset = store::load_dataset(&a.dataset, &a.task)?;
    let task = &dataset.task;
    let mut cfg = match BackendKind::from(a.backend) {
        BackendKind::Mock => BackendConfig::mock(task.model_name.clone(), a.seed),
        BackendKind::Remote => BackendConfig::remote(task.model_name.clone(), a.seed),
    };
    cfg.temperature = task.temperature;
    cfg.concurrency = a.concurrency;
    cfg.max_retries = a.max_retries.unwrap_or(task.max_retries);
    cfg.timeout = Duration::from_secs(a.timeout_secs);
    let rules = match &a.mock_rules {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
            MockRules::from_json(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?
        }
        None => MockRules::answering(task.labels[0].raw()),
    };
    let backend = Backend::from_config(&cfg, rules)?;
    let summary = runtime()?.block_on(run_annotation_job(&dataset, &backend, &cfg, &a.out))?;
    println!(
        "annotated {} items: {} parsed, {} unparsable, {} api_error ({} submitted, {} requests)",
        dataset.items.len(),
        summary.n_parsed,
        summary.n_unparsable,
        summary.n_api_failed,
        summary.n_submitted,
        summary.requests
    );
    if summary.n_api_failed > 0 {
        return Err(CliError::Failed(format!(
            "{} item(s) exhausted their retries; rerun to resume",
            summary.n_api_failed
        )));
    }
    Ok(())
}

pub fn cmd_embed(a: &EmbedArgs) -> Result<(), CliError> {
    let items = store::load_items(&a.dataset)?;
    let mut cfg = match BackendKind::from(a.backend) {
        BackendKind::Mock => BackendConfig::mock(a.model.clone(), a.seed),
        BackendKind::Remote => BackendConfig::remote(a.model.clone(), a.seed),
    };
    cfg.concurrency = a.concurrency;
    cfg.max_retries = a.max_retries;
    cfg.timeout = Duration::from_secs(a.timeout_secs);
    let backend = Backend::from_config(&cfg, MockRules::answering(""))?;
    let table = runtime()?.block_on(embed_batch(&items, &backend, &cfg, a.dim))?;
    store::write_embeddings(&a.out, &table)?;
    println!("embedded {} items at dimension {}", table.len(), table.dim());
    Ok(())
}

/// Dataset, its evaluation set and the digests of the files they came from.
struct Evaluated {
    dataset: Dataset,
    eval_set: EvaluationSet,
    digests: Vec<InputDigest>,
}

fn load_evaluation(a: &EvaluateArgs) -> Result<Evaluated, CliError> {
    let dataset = store::load_dataset(&a.dataset, &a.task)?;
    let records = store::load_annotations(&a.annotations)?;
    let eval_set = store::join_evaluation(&dataset, &records)?;
    let digests = vec![
        store::file_digest(&a.task, "task")?,
        store::file_digest(&a.dataset, "dataset")?,
        store::annotation_digest(&a.annotations)?,
    ];
    Ok(Evaluated {
        dataset,
        eval_set,
        digests,
    })
}

fn base_report(a: &EvaluateArgs) -> Result<(Report, Evaluated), CliError> {
    let ev = load_evaluation(a)?;
    let (dataset_metrics, cm) = evaluate(&ev.eval_set, a.strict_unparsable)?;
    let report = Report {
        task_name: ev.dataset.task.name.clone(),
        generated_from: ev.digests.clone(),
        dataset_metrics,
        confusion: ConfusionSection::from(&cm),
        rater: None,
        sweep: None,
    };
    Ok((report, ev))
}

fn write_report(path: &Path, report: &Report) -> Result<(), CliError> {
    let mut text = to_structured(report);
    text.push('\n');
    write_file(path, &text)
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let (report, ev) = base_report(a)?;
    write_report(&a.out, &report)?;
    let m = &report.dataset_metrics;
    println!(
        "{}: {} pairs, accuracy {:.4}, weighted F1 {:.4}, parse rate {:.4} ({} unparsable, {} api_error, {} missing)",
        report.task_name,
        m.n_pairs,
        m.accuracy,
        m.w_f1,
        m.parse_rate,
        ev.eval_set.n_unparsable,
        ev.eval_set.n_api_failed,
        ev.eval_set.n_missing
    );
    Ok(())
}

fn classifier_spec(c: ClassifierArg) -> ClassifierSpec {
    match c {
        ClassifierArg::Logreg => ClassifierSpec::logistic(),
        ClassifierArg::Forest => ClassifierSpec::forest(),
    }
}

fn rater_inputs(a: &RateArgs) -> Result<(Report, Vec<annorater_core::rater::RaterExample>), CliError> {
    let (mut report, ev) = base_report(&a.eval)?;
    let embeddings = store::load_embeddings(&a.embeddings)?;
    report.generated_from.push(store::file_digest(&a.embeddings, "embeddings")?);
    let examples = build_examples(&ev.eval_set, &embeddings)?;
    Ok((report, examples))
}

pub fn cmd_rate(a: &RateArgs) -> Result<(), CliError> {
    let (mut report, examples) = rater_inputs(a)?;
    let spec = classifier_spec(a.classifier);
    let result = repeated_holdout(&examples, &spec, a.repeats, a.split, a.seed)?;
    println!(
        "{}: rater accuracy {:.4} ± {:.4}, F1 {:.4} ± {:.4} over {} repeats",
        report.task_name, result.accuracy_mean, result.accuracy_std, result.f1_mean, result.f1_std, result.n_repeats
    );
    report.rater = Some(result);
    write_report(&a.eval.out, &report)?;
    if let Some(path) = &a.model_out {
        let data = Features::from_examples(&examples)?;
        data.check_two_classes()?;
        let model = fit(&spec, &data, a.seed)?;
        let file = ModelFile {
            spec,
            dim: data.dim,
            seed: a.seed,
            n_train: data.n,
            model,
        };
        let text = serde_json::to_string_pretty(&file).expect("models serialize");
        write_file(path, &(text + "\n"))?;
    }
    Ok(())
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<(), CliError> {
    let proportions = parse_proportions(&a.proportions)?;
    let (mut report, examples) = rater_inputs(&a.rate)?;
    let spec = classifier_spec(a.rate.classifier);
    let sweep = proportion_sweep(&examples, &spec, &proportions, a.rate.repeats, a.rate.split, a.gap, a.rate.seed)?;
    match sweep.min_sufficient {
        Some(p) => println!("{}: minimum sufficient proportion {p}", report.task_name),
        None => println!("{}: no proportion within the gap", report.task_name),
    }
    report.sweep = Some(sweep);
    write_report(&a.rate.eval.out, &report)
}

pub fn cmd_report(a: &ReportArgs) -> Result<(), CliError> {
    let mut fragments = Vec::with_capacity(a.inputs.len());
    for path in &a.inputs {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
        let report: Report =
            from_structured(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        fragments.push(report);
    }
    let bundle = ReportBundle::merge(fragments)?;
    let format = match a.format {
        FormatArg::Md => ReportFormat::HumanReadable,
        FormatArg::Json => ReportFormat::Structured,
    };
    let mut text = emit_report(&bundle, format);
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match &a.out {
        Some(path) => write_file(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
