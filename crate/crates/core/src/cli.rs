//! The `cosmix` command line: configuration file plus flag overrides, one
//! subcommand per pipeline stage, and reproducible output directories.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::Thresholds;
use crate::featsel::{select_by_threshold, select_top_n, term_entropy};
use crate::ingest::{ingest_path, read_corpus_jsonl, write_corpus_jsonl, Document, EpochScheme, ExclusionRules};
use crate::mixture::{
    average_lambda_over_k, classify, load_model, save_model, CalibrationTarget, ClusteringResult, EmOptions,
    MixtureModel,
};
use crate::pipeline::{
    fit_static, prepare, run_dynamic, Criterion, DynamicOptions, FitOptions, LambdaChoice, MatchIdf, PrepOptions,
    Prepared, StaticFit, TermSelection,
};
use crate::report::{emit_reports, ReportOptions};
use crate::testkit::{generate, PlantedScenario};
use crate::textprep::{apply_idf, DocTermMatrix, StopwordPolicy, Weighting};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

const HISTOGRAM_BINS: usize = 20;

/// A failure tagged with the stage it happened in.
#[derive(Debug)]
pub struct CliError {
    pub stage: &'static str,
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)
    }
}

impl std::error::Error for CliError {}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(stage: &'static str, message: impl Into<String>) -> CliError {
    CliError {
        stage,
        code: EXIT_USAGE,
        message: message.into(),
    }
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
}

impl<T> Stage<T> for crate::Result<T> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|e| CliError {
            stage,
            code: if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_DATA },
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    /// `.jsonl` files are corpora, everything else is ingested.
    #[default]
    Auto,
    Corpus,
    Bibliography,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LambdaModeConfig {
    /// Average calibrated lambdas over `lambda_k_range`, then hold fixed.
    #[default]
    Averaged,
    /// Re-solve at every EM iteration.
    Resolve,
    /// Use `lambda` as given.
    Fixed,
}

/// Everything a run depends on. Read from TOML; command-line flags win.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    pub format: InputFormat,
    /// `label:start-end,...`; the default decades when absent.
    pub epochs: Option<String>,
    /// Restrict `fit`/`sweep`/`prep` to one epoch label.
    pub epoch: Option<String>,
    /// Keep every parsed record (no exclusion rules).
    pub keep_all_records: bool,
    /// Domain stopword file replacing the built-in list.
    pub stopwords: Option<PathBuf>,
    pub entropy_threshold: Option<f64>,
    pub top_n: Option<usize>,
    pub alpha: f64,
    pub k: Option<usize>,
    pub k_range: Option<[usize; 2]>,
    pub lambda_mode: LambdaModeConfig,
    pub lambda: Option<f64>,
    pub lambda_k_range: [usize; 2],
    pub criterion: Criterion,
    pub seed: u64,
    pub n_runs: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub dashed: f64,
    pub solid: f64,
    pub match_idf: MatchIdf,
    pub top_terms: usize,
    /// Per-epoch k for `dynamic`, keyed by epoch label.
    pub epoch_k: BTreeMap<String, usize>,
    #[serde(skip_serializing)]
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let em = EmOptions::default();
        let th = Thresholds::default();
        RunConfig {
            inputs: Vec::new(),
            format: InputFormat::Auto,
            epochs: None,
            epoch: None,
            keep_all_records: false,
            stopwords: None,
            entropy_threshold: None,
            top_n: None,
            alpha: 0.05,
            k: None,
            k_range: None,
            lambda_mode: LambdaModeConfig::Averaged,
            lambda: None,
            lambda_k_range: [2, 20],
            criterion: Criterion::Aic,
            seed: 0,
            n_runs: 5,
            max_iter: em.max_iter,
            tol: em.tol,
            dashed: th.dashed,
            solid: th.solid,
            match_idf: MatchIdf::SourceIdf,
            top_terms: 5,
            epoch_k: BTreeMap::new(),
            output: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_toml(raw: &str) -> CliResult<Self> {
        toml::from_str(raw).map_err(|e| usage("config", format!("bad configuration: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let raw = fs::read_to_string(path).map_err(|e| usage("config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&raw)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(usage("config", m));
        if self.entropy_threshold.is_some() && self.top_n.is_some() {
            return bad("set either entropy_threshold or top_n, not both".into());
        }
        if let Some(t) = self.entropy_threshold {
            if !(0.0..=1.0).contains(&t) {
                return bad(format!("entropy_threshold {t} outside [0, 1]"));
            }
        }
        if self.top_n == Some(0) {
            return bad("top_n must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} outside (0, 1)", self.alpha));
        }
        if self.k.is_some() && self.k_range.is_some() {
            return bad("set either k or k_range, not both".into());
        }
        for [lo, hi] in [self.k_range, Some(self.lambda_k_range)].into_iter().flatten() {
            if lo < 2 || lo > hi {
                return bad(format!("k range {lo}..{hi} is empty or starts below 2"));
            }
        }
        if self.k.is_some_and(|k| k < 2) {
            return bad("k must be at least 2".into());
        }
        if self.lambda_mode == LambdaModeConfig::Fixed && !self.lambda.is_some_and(|l| l > 0.0 && l.is_finite()) {
            return bad("lambda_mode = \"fixed\" needs a positive lambda".into());
        }
        if self.n_runs == 0 || self.max_iter == 0 {
            return bad("n_runs and max_iter must be positive".into());
        }
        Thresholds::new(self.dashed, self.solid).map_err(|e| usage("config", e.to_string()))?;
        Ok(())
    }

    fn selection(&self) -> TermSelection {
        match (self.entropy_threshold, self.top_n) {
            (_, Some(n)) => TermSelection::TopN(n),
            (Some(t), None) => TermSelection::Threshold(t),
            (None, None) => TermSelection::default(),
        }
    }

    fn ks(&self) -> Vec<usize> {
        match (self.k, self.k_range) {
            (Some(k), _) => vec![k],
            (None, Some([lo, hi])) => (lo..=hi).collect(),
            (None, None) => (2..=20).collect(),
        }
    }

    fn prep_options(&self) -> CliResult<PrepOptions> {
        let stopwords = match &self.stopwords {
            Some(p) => {
                let raw = fs::read_to_string(p).map_err(|e| CliError {
                    stage: "prep",
                    code: EXIT_DATA,
                    message: format!("{}: {e}", p.display()),
                })?;
                StopwordPolicy::with_domain_file(&raw)
            }
            None => StopwordPolicy::default(),
        };
        Ok(PrepOptions {
            stopwords,
            selection: self.selection(),
            reweight_after_selection: false,
        })
    }

    fn fit_options(&self) -> CliResult<FitOptions> {
        let lambda = match self.lambda_mode {
            LambdaModeConfig::Averaged => LambdaChoice::Averaged {
                ks: (self.lambda_k_range[0]..=self.lambda_k_range[1]).collect(),
            },
            LambdaModeConfig::Resolve => LambdaChoice::Resolve,
            LambdaModeConfig::Fixed => LambdaChoice::Fixed(self.lambda.expect("validated")),
        };
        Ok(FitOptions {
            target: CalibrationTarget::new(self.alpha).stage("config")?,
            ks: self.ks(),
            lambda,
            criterion: self.criterion,
            n_runs: self.n_runs,
            seed: self.seed,
            em: EmOptions {
                max_iter: self.max_iter,
                tol: self.tol,
            },
        })
    }

    fn scheme(&self) -> CliResult<EpochScheme> {
        match &self.epochs {
            Some(s) => EpochScheme::parse(s).map_err(|e| usage("config", e.to_string())),
            None => Ok(EpochScheme::default()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cosmix", version, about = "Cosine-distance mixture clustering of abstracts and topic evolution")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse bibliography files or text directories into a JSONL corpus.
    Ingest(IngestArgs),
    /// Build the raw and weighted document-term matrices of a corpus.
    Prep(RunArgs),
    /// Select terms of a raw-count matrix by entropy and weight them by IDF.
    Select(SelectArgs),
    /// Calibrate lambda from the target rate over a range of k.
    Calibrate(CalibrateArgs),
    /// Fit the mixture and write model, assignments and reports.
    Fit(RunArgs),
    /// Fit every k of a range under a shared lambda and tabulate AIC/BIC.
    Sweep(RunArgs),
    /// Fit every epoch and build the evolution graph.
    Dynamic(RunArgs),
    /// Classify a matrix with a saved model and write reports.
    Report(ReportArgs),
    /// Generate a planted-topic corpus from a scenario file.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// `.bib`/`.ris` files or directories.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output corpus (JSONL).
    #[arg(short, long)]
    pub out: PathBuf,
    /// Epoch scheme `label:start-end,...`.
    #[arg(long)]
    pub epochs: Option<String>,
    /// Keep every record (no exclusion rules).
    #[arg(long)]
    pub keep_all: bool,
}

/// Flags shared by the configuration-driven commands.
#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Corpus (.jsonl) or bibliography inputs.
    #[arg(long = "input")]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub epoch: Option<String>,
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long, conflicts_with = "top_n")]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub top_n: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, conflicts_with = "k_range")]
    pub k: Option<usize>,
    /// Inclusive range such as `2-20`.
    #[arg(long, value_parser = parse_range)]
    pub k_range: Option<[usize; 2]>,
    #[arg(long, value_enum)]
    pub lambda_mode: Option<LambdaModeConfig>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_parser = parse_range)]
    pub lambda_k_range: Option<[usize; 2]>,
    #[arg(long, value_enum)]
    pub criterion: Option<CriterionArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_runs: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub dashed: Option<f64>,
    #[arg(long)]
    pub solid: Option<f64>,
    #[arg(long, value_enum)]
    pub match_idf: Option<MatchIdfArg>,
    #[arg(long)]
    pub top_terms: Option<usize>,
    /// Output directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum CriterionArg {
    Aic,
    Bic,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum MatchIdfArg {
    SourceIdf,
    TargetIdf,
    RawCounts,
}

fn parse_range(s: &str) -> Result<[usize; 2], String> {
    let (a, b) = s
        .split_once(['-', ':'])
        .or_else(|| s.split_once(".."))
        .ok_or_else(|| format!("expected LO-HI, got {s:?}"))?;
    let lo = a.trim().parse().map_err(|_| format!("bad range start {a:?}"))?;
    let hi = b.trim_start_matches('.').trim().parse().map_err(|_| format!("bad range end {b:?}"))?;
    Ok([lo, hi])
}

impl RunArgs {
    /// Configuration file (if any) with these flags applied on top.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if !self.inputs.is_empty() {
            c.inputs = self.inputs.clone();
        }
        if let Some(v) = self.format {
            c.format = v;
        }
        if let Some(v) = &self.epochs {
            c.epochs = Some(v.clone());
        }
        if let Some(v) = &self.epoch {
            c.epoch = Some(v.clone());
        }
        if let Some(v) = &self.stopwords {
            c.stopwords = Some(v.clone());
        }
        if let Some(v) = self.threshold {
            c.entropy_threshold = Some(v);
            c.top_n = None;
        }
        if let Some(v) = self.top_n {
            c.top_n = Some(v);
            c.entropy_threshold = None;
        }
        if let Some(v) = self.alpha {
            c.alpha = v;
        }
        if let Some(v) = self.k {
            c.k = Some(v);
            c.k_range = None;
        }
        if let Some(v) = self.k_range {
            c.k_range = Some(v);
            c.k = None;
        }
        if let Some(v) = self.lambda_mode {
            c.lambda_mode = v;
        }
        if let Some(v) = self.lambda {
            c.lambda = Some(v);
            if self.lambda_mode.is_none() {
                c.lambda_mode = LambdaModeConfig::Fixed;
            }
        }
        if let Some(v) = self.lambda_k_range {
            c.lambda_k_range = v;
        }
        if let Some(v) = self.criterion {
            c.criterion = match v {
                CriterionArg::Aic => Criterion::Aic,
                CriterionArg::Bic => Criterion::Bic,
            };
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.n_runs {
            c.n_runs = v;
        }
        if let Some(v) = self.max_iter {
            c.max_iter = v;
        }
        if let Some(v) = self.tol {
            c.tol = v;
        }
        if let Some(v) = self.dashed {
            c.dashed = v;
        }
        if let Some(v) = self.solid {
            c.solid = v;
        }
        if let Some(v) = self.match_idf {
            c.match_idf = match v {
                MatchIdfArg::SourceIdf => MatchIdf::SourceIdf,
                MatchIdfArg::TargetIdf => MatchIdf::TargetIdf,
                MatchIdfArg::RawCounts => MatchIdf::RawCounts,
            };
        }
        if let Some(v) = self.top_terms {
            c.top_terms = v;
        }
        if let Some(v) = &self.out {
            c.output = v.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Raw-count matrix file.
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, conflicts_with = "top_n", required_unless_present = "top_n")]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub top_n: Option<usize>,
    /// Output matrix (IDF-weighted, selected columns).
    #[arg(short, long)]
    pub out: PathBuf,
    /// Entropy histogram CSV.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Weighted matrix file.
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, value_parser = parse_range, default_value = "2-20")]
    pub k_range: [usize; 2],
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub n_runs: usize,
    /// Per-k CSV output; printed to stdout when absent.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Weighted matrix over the model's vocabulary.
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub top_terms: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scenario JSON.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Without a scenario: one epoch of `k` topics.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 100)]
    pub docs_per_topic: usize,
    #[arg(long, default_value_t = 200)]
    pub terms: usize,
    #[arg(long, default_value_t = 0.6)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output corpus (JSONL).
    #[arg(short, long)]
    pub out: PathBuf,
    /// Ground truth (labels and planted edges) as JSON.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

/// Parse arguments, run, and return the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("config", "--threads must be at least 1"));
        }
        // a global pool may already exist (tests); the first configuration wins
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::debug!("rayon pool already initialised");
        }
    }
    match cli.command {
        Command::Ingest(a) => cmd_ingest(&a),
        Command::Prep(a) => cmd_prep(&a.resolve()?),
        Command::Select(a) => cmd_select(&a),
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Fit(a) => cmd_fit(&a.resolve()?, "fit"),
        Command::Sweep(a) => {
            let c = a.resolve()?;
            if c.k.is_some() {
                return Err(usage("config", "sweep needs a k range, not a single k"));
            }
            cmd_fit(&c, "sweep")
        }
        Command::Dynamic(a) => cmd_dynamic(&a.resolve()?),
        Command::Report(a) => cmd_report(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

/// Files written by a command, with their SHA-256, in write order.
#[derive(Debug, Default)]
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Outputs {
    fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| io_err("output", dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err("output", parent, e))?;
        }
        fs::write(&p, contents).map_err(|e| io_err("output", &p, e))?;
        self.record(name)
    }

    /// Hash a file that something else already wrote.
    fn record(&mut self, name: &str) -> CliResult<()> {
        let p = self.path(name);
        let bytes = fs::read(&p).map_err(|e| io_err("output", &p, e))?;
        self.files.push((name.to_string(), hex(&Sha256::digest(&bytes))));
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn io_err(stage: &'static str, path: &Path, e: std::io::Error) -> CliError {
    CliError {
        stage,
        code: EXIT_DATA,
        message: format!("{}: {e}", path.display()),
    }
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

#[derive(Debug, Serialize)]
struct Manifest<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    config: &'a RunConfig,
    summary: T,
    outputs: BTreeMap<String, String>,
}

fn write_manifest<T: Serialize>(out: &mut Outputs, command: &str, config: &RunConfig, summary: T) -> CliResult<()> {
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config,
        summary,
        outputs: out.files.iter().cloned().collect(),
    };
    let p = out.path("run.json");
    fs::write(&p, json(&m)).map_err(|e| io_err("output", &p, e))
}

fn load_documents(config: &RunConfig) -> CliResult<Vec<Document>> {
    if config.inputs.is_empty() {
        return Err(usage("config", "no inputs given"));
    }
    let as_corpus = match config.format {
        InputFormat::Corpus => true,
        InputFormat::Bibliography => false,
        InputFormat::Auto => config
            .inputs
            .iter()
            .all(|p| p.extension().is_some_and(|e| e == "jsonl")),
    };
    if as_corpus {
        let mut docs = Vec::new();
        for p in &config.inputs {
            for mut d in read_corpus_jsonl(p).stage("ingest")? {
                d.doc_id = docs.len();
                docs.push(d);
            }
        }
        Ok(docs)
    } else {
        let rules = if config.keep_all_records {
            ExclusionRules::none()
        } else {
            ExclusionRules::default()
        };
        let ing = ingest_path(&config.inputs, &rules, &config.scheme()?).stage("ingest")?;
        for (p, d) in &ing.diagnostics {
            log::warn!("{}:{}: {}", p.display(), d.line, d.message);
        }
        Ok(ing.corpus.documents)
    }
}

fn epoch_slice(docs: Vec<Document>, epoch: Option<&str>) -> CliResult<Vec<Document>> {
    let Some(label) = epoch else { return Ok(docs) };
    let kept: Vec<Document> = docs.into_iter().filter(|d| d.epoch.as_deref() == Some(label)).collect();
    if kept.is_empty() {
        return Err(CliError {
            stage: "ingest",
            code: EXIT_DATA,
            message: format!("no documents in epoch {label:?}"),
        });
    }
    Ok(kept)
}

fn cmd_ingest(a: &IngestArgs) -> CliResult<()> {
    let scheme = match &a.epochs {
        Some(s) => EpochScheme::parse(s).map_err(|e| usage("config", e.to_string()))?,
        None => EpochScheme::default(),
    };
    let rules = if a.keep_all {
        ExclusionRules::none()
    } else {
        ExclusionRules::default()
    };
    let ing = ingest_path(&a.inputs, &rules, &scheme).stage("ingest")?;
    for (p, d) in &ing.diagnostics {
        eprintln!("warning: {}:{} (byte {}): {}", p.display(), d.line, d.offset, d.message);
    }
    for w in &ing.corpus.warnings {
        log::warn!("{w}");
    }
    if ing.corpus.documents.is_empty() {
        return Err(CliError {
            stage: "ingest",
            code: EXIT_DATA,
            message: "no documents survived parsing and filtering".into(),
        });
    }
    write_corpus_jsonl(&ing.corpus.documents, &a.out).stage("ingest")?;
    println!(
        "{} records parsed, {} kept, {} diagnostics",
        ing.records_parsed,
        ing.corpus.documents.len(),
        ing.diagnostics.len()
    );
    Ok(())
}

fn prepared(config: &RunConfig) -> CliResult<Prepared> {
    let docs = epoch_slice(load_documents(config)?, config.epoch.as_deref())?;
    prepare(&docs, &config.prep_options()?).stage("prep")
}

fn matrix_file(out: &mut Outputs, name: &str, m: &DocTermMatrix) -> CliResult<()> {
    m.write(&out.path(name)).stage("output")?;
    out.record(name)
}

#[derive(Serialize)]
struct PrepSummary {
    n_docs: usize,
    raw_terms: usize,
    selected_terms: usize,
    empty_docs: Vec<usize>,
    zeroed_docs: Vec<usize>,
}

fn write_prep(out: &mut Outputs, p: &Prepared) -> CliResult<PrepSummary> {
    matrix_file(out, "raw_matrix.txt", &p.raw)?;
    matrix_file(out, "matrix.txt", &p.matrix)?;
    if let Some(h) = &p.entropy {
        out.write("entropy_histogram.csv", &h.histogram_csv(HISTOGRAM_BINS))?;
        let mut s = String::from("term,entropy\n");
        for (t, v) in h.vocabulary().terms().iter().zip(&h.h) {
            let _ = writeln!(s, "{t},{v}");
        }
        out.write("entropy.csv", &s)?;
    }
    Ok(PrepSummary {
        n_docs: p.matrix.n_docs(),
        raw_terms: p.raw.n_terms(),
        selected_terms: p.matrix.n_terms(),
        empty_docs: p.empty_docs.clone(),
        zeroed_docs: p.zeroed_docs.clone(),
    })
}

fn cmd_prep(config: &RunConfig) -> CliResult<()> {
    let p = prepared(config)?;
    let mut out = Outputs::new(&config.output)?;
    let summary = write_prep(&mut out, &p)?;
    write_manifest(&mut out, "prep", config, summary)
}

fn cmd_select(a: &SelectArgs) -> CliResult<()> {
    let raw = DocTermMatrix::read(&a.matrix).stage("select")?;
    if raw.weighting() != Weighting::RawCount {
        return Err(CliError {
            stage: "select",
            code: EXIT_DATA,
            message: "entropy selection expects a raw-count matrix".into(),
        });
    }
    let profile = term_entropy(&raw).stage("select")?;
    let selected = match (a.threshold, a.top_n) {
        (Some(t), _) => select_by_threshold(&raw, &profile, t),
        (None, Some(n)) => select_top_n(&raw, &profile, n),
        (None, None) => unreachable!("clap requires one"),
    }
    .stage("select")?;
    let weighted = apply_idf(&selected).stage("select")?;
    weighted.write(&a.out).stage("select")?;
    if let Some(h) = &a.histogram {
        fs::write(h, profile.histogram_csv(HISTOGRAM_BINS)).map_err(|e| io_err("select", h, e))?;
    }
    println!("{} of {} terms kept", weighted.n_terms(), raw.n_terms());
    Ok(())
}

fn cmd_calibrate(a: &CalibrateArgs) -> CliResult<()> {
    let target = CalibrationTarget::new(a.alpha).map_err(|e| usage("config", e.to_string()))?;
    let [lo, hi] = a.k_range;
    if lo < 2 || lo > hi {
        return Err(usage("config", format!("k range {lo}..{hi} is empty or starts below 2")));
    }
    let m = DocTermMatrix::read(&a.matrix).stage("calibrate")?;
    let ks: Vec<usize> = (lo..=hi).collect();
    let avg = average_lambda_over_k(&m, &ks, target, a.n_runs.max(1), a.seed).stage("calibrate")?;
    let mut s = String::from("k,lambda,skipped\n");
    for at in &avg.per_k {
        let _ = writeln!(
            s,
            "{},{},{}",
            at.k,
            at.lambda.map(|l| l.to_string()).unwrap_or_default(),
            at.skipped.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    let _ = writeln!(s, "mean,{},", avg.lambda_bar);
    match &a.out {
        Some(p) => fs::write(p, &s).map_err(|e| io_err("calibrate", p, e))?,
        None => print!("{s}"),
    }
    Ok(())
}

fn posteriors_csv(result: &ClusteringResult, doc_ids: &[usize]) -> String {
    let k = result.posteriors.k();
    let mut s = String::from("doc_id,cluster");
    for i in 0..k {
        let _ = write!(s, ",p_{i}");
    }
    s.push('\n');
    for (j, &id) in doc_ids.iter().enumerate() {
        let _ = write!(s, "{id},{}", result.hard_labels[j]);
        for p in result.posteriors.row(j) {
            let _ = write!(s, ",{p}");
        }
        s.push('\n');
    }
    s
}

fn trace_csv(trace: &[f64]) -> String {
    let mut s = String::from("iteration,partial_loglik\n");
    for (i, v) in trace.iter().enumerate() {
        let _ = writeln!(s, "{},{v}", i + 1);
    }
    s
}

fn lambda_csv(fit: &StaticFit) -> String {
    let mut s = String::from("k,lambda,skipped\n");
    for at in &fit.lambda_per_k {
        let _ = writeln!(
            s,
            "{},{},{}",
            at.k,
            at.lambda.map(|l| l.to_string()).unwrap_or_default(),
            at.skipped.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    s
}

#[derive(Serialize)]
struct FitSummary {
    n_docs: usize,
    n_terms: usize,
    seed: u64,
    lambda_bar: Option<f64>,
    k: usize,
    lambda: f64,
    iterations: usize,
    converged: bool,
    partial_loglik: f64,
    failed_k: Vec<(usize, String)>,
}

/// Model, assignments, trace and reports of one fit into `prefix`.
fn write_fit(out: &mut Outputs, prefix: &str, p: &Prepared, fit: &StaticFit, config: &RunConfig) -> CliResult<()> {
    let best = fit.best();
    let dir = out.path(prefix);
    fs::create_dir_all(&dir).map_err(|e| io_err("output", &dir, e))?;
    let model_name = format!("{prefix}model.json");
    save_model(&best.model, &out.path(&model_name)).stage("output")?;
    out.record(&model_name)?;
    out.write(&format!("{prefix}posteriors.csv"), &posteriors_csv(&best.result, &p.doc_ids))?;
    out.write(&format!("{prefix}loglik_trace.csv"), &trace_csv(&best.result.loglik_trace))?;
    if !fit.lambda_per_k.is_empty() {
        out.write(&format!("{prefix}lambda.csv"), &lambda_csv(fit))?;
    }
    if !fit.criteria.is_empty() {
        out.write(&format!("{prefix}criteria.csv"), &fit.criteria_csv())?;
    }
    let files = emit_reports(
        &best.model,
        &best.result,
        &p.matrix,
        &ReportOptions {
            top_terms: config.top_terms,
            doc_ids: Some(p.doc_ids.clone()),
            seed: config.seed,
        },
        &dir,
    )
    .stage("report")?;
    for f in [files.json, files.balloons] {
        let name = f.strip_prefix(&out.dir).expect("inside output dir").to_string_lossy().into_owned();
        out.record(&name)?;
    }
    Ok(())
}

fn cmd_fit(config: &RunConfig, command: &str) -> CliResult<()> {
    let p = prepared(config)?;
    let fit = fit_static(&p.matrix, &config.fit_options()?).stage(if command == "sweep" { "sweep" } else { "fit" })?;
    let mut out = Outputs::new(&config.output)?;
    matrix_file(&mut out, "matrix.txt", &p.matrix)?;
    if let Some(h) = &p.entropy {
        out.write("entropy_histogram.csv", &h.histogram_csv(HISTOGRAM_BINS))?;
    }
    write_fit(&mut out, "", &p, &fit, config)?;
    let best = fit.best();
    let summary = FitSummary {
        n_docs: p.matrix.n_docs(),
        n_terms: p.matrix.n_terms(),
        seed: config.seed,
        lambda_bar: fit.lambda_bar,
        k: best.k,
        lambda: best.model.lambda,
        iterations: best.result.n_iterations,
        converged: best.result.converged,
        partial_loglik: best.result.partial_loglik,
        failed_k: fit.failed.clone(),
    };
    println!(
        "k={} lambda={} iterations={} partial_loglik={}",
        best.k, best.model.lambda, best.result.n_iterations, best.result.partial_loglik
    );
    write_manifest(&mut out, command, config, summary)
}

#[derive(Serialize)]
struct EpochSummary {
    label: String,
    n_docs: usize,
    n_terms: usize,
    k: usize,
    lambda: f64,
    iterations: usize,
    converged: bool,
}

#[derive(Serialize)]
struct DynamicSummary {
    seed: u64,
    epochs: Vec<EpochSummary>,
    shared_terms: Vec<usize>,
    edges: usize,
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn cmd_dynamic(config: &RunConfig) -> CliResult<()> {
    let docs = load_documents(config)?;
    let mut order: Vec<String> = match &config.epochs {
        Some(_) => config.scheme()?.labels(),
        None => Vec::new(),
    };
    for d in &docs {
        if let Some(e) = &d.epoch {
            if !order.contains(e) {
                order.push(e.clone());
            }
        }
    }
    let untagged = docs.iter().filter(|d| d.epoch.is_none()).count();
    if untagged > 0 {
        log::warn!("{untagged} documents without an epoch are left out");
    }
    let epochs: Vec<(String, Vec<Document>)> = order
        .into_iter()
        .map(|label| {
            let ds: Vec<Document> = docs.iter().filter(|d| d.epoch.as_deref() == Some(&label)).cloned().collect();
            (label, ds)
        })
        .filter(|(_, ds)| !ds.is_empty())
        .collect();
    if epochs.len() < 2 {
        return Err(CliError {
            stage: "dynamic",
            code: EXIT_DATA,
            message: format!("dynamic analysis needs documents in at least 2 epochs, found {}", epochs.len()),
        });
    }
    let epoch_ks = if config.epoch_k.is_empty() {
        None
    } else {
        Some(
            epochs
                .iter()
                .map(|(l, _)| config.epoch_k.get(l).map_or_else(|| config.ks(), |&k| vec![k]))
                .collect(),
        )
    };
    let opts = DynamicOptions {
        prep: config.prep_options()?,
        fit: config.fit_options()?,
        epoch_ks,
        match_idf: config.match_idf,
        thresholds: Thresholds::new(config.dashed, config.solid).stage("config")?,
        label_terms: 3,
    };
    let run = run_dynamic(&epochs, &opts).stage("dynamic")?;
    let mut out = Outputs::new(&config.output)?;
    let mut summaries = Vec::new();
    for (t, e) in run.epochs.iter().enumerate() {
        let prefix = format!("epoch_{t}_{}/", file_label(&e.label));
        write_fit(&mut out, &prefix, &e.prepared, &e.fit, config)?;
        let best = e.fit.best();
        summaries.push(EpochSummary {
            label: e.label.clone(),
            n_docs: e.prepared.matrix.n_docs(),
            n_terms: e.prepared.matrix.n_terms(),
            k: best.k,
            lambda: best.model.lambda,
            iterations: best.result.n_iterations,
            converged: best.result.converged,
        });
    }
    for (t, p) in run.projections.iter().enumerate() {
        out.write(&format!("migration_{t}_{}.csv", t + 1), &p.migration.to_csv())?;
    }
    out.write("graph.dot", &run.graph.to_dot())?;
    out.write("graph.json", &(run.graph.to_json().stage("output")? + "\n"))?;
    println!(
        "{} epochs, {} edges",
        run.graph.epochs.len(),
        run.graph.edges.len()
    );
    let summary = DynamicSummary {
        seed: config.seed,
        epochs: summaries,
        shared_terms: run.projections.iter().map(|p| p.shared_terms).collect(),
        edges: run.graph.edges.len(),
    };
    write_manifest(&mut out, "dynamic", config, summary)
}

fn cmd_report(a: &ReportArgs) -> CliResult<()> {
    let model: MixtureModel = load_model(&a.model).stage("report")?;
    let m = DocTermMatrix::read(&a.matrix).stage("report")?;
    let result = classify(&model, &m).stage("report")?;
    let files = emit_reports(
        &model,
        &result,
        &m,
        &ReportOptions {
            top_terms: a.top_terms,
            doc_ids: None,
            seed: a.seed,
        },
        &a.out,
    )
    .stage("report")?;
    println!("{}\n{}", files.json.display(), files.balloons.display());
    Ok(())
}

#[derive(Serialize)]
struct Truth<'a> {
    epochs: Vec<TruthEpoch<'a>>,
    edges: &'a [crate::testkit::TruthEdge],
}

#[derive(Serialize)]
struct TruthEpoch<'a> {
    label: &'a str,
    topics: &'a [String],
    doc_ids: Vec<usize>,
    labels: &'a [usize],
}

fn cmd_synth(a: &SynthArgs) -> CliResult<()> {
    let scenario = match &a.scenario {
        Some(p) => {
            let raw = fs::read_to_string(p).map_err(|e| io_err("synth", p, e))?;
            PlantedScenario::from_json(&raw).stage("synth")?
        }
        None => PlantedScenario::static_topics(a.k, a.docs_per_topic, a.terms, a.separation),
    };
    let g = generate(&scenario, a.seed).stage("synth")?;
    write_corpus_jsonl(&g.documents(), &a.out).stage("synth")?;
    if let Some(p) = &a.truth {
        let t = Truth {
            epochs: g
                .epochs
                .iter()
                .map(|e| TruthEpoch {
                    label: &e.label,
                    topics: &e.topics,
                    doc_ids: e.documents.iter().map(|d| d.doc_id).collect(),
                    labels: &e.labels,
                })
                .collect(),
            edges: &g.truth,
        };
        fs::write(p, json(&t)).map_err(|e| io_err("synth", p, e))?;
    }
    println!("{} documents in {} epochs", g.documents().len(), g.epochs.len());
    Ok(())
}
