//! Command-line driver.
//!
//! Output layout, per command (`--out DIR`):
//!
//! ```text
//! gen-data  db.ftr db.lbl query.ftr query.lbl [val.ftr val.lbl] split.toml
//! train     config.toml model.mdl db.cod history.csv metrics.csv [query.cod]
//! encode    the code file named by --out
//! eval      metrics.csv pr_radius.csv [topk.csv]
//! bench     config.toml timing.csv metrics.csv
//! sweep     config.toml sweep.csv
//! ```
//!
//! Feature and label inputs ending in `.csv` are read as CSV; anything else
//! as the binary formats of [`crate::dataio`]. Exit status is 0 on success,
//! 2 for configuration errors, 3 for data errors and 4 for numeric failures.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataio::{self, Features};
use crate::encoder::{encode_queries, Encoder, OptimizerKind};
use crate::error::Error;
use crate::eval::{
    mean_average_precision, precision_recall_by_radius, rank_by_hamming, topk_precision_curve, write_curve_csv,
    MetricsTable, Relevance,
};
use crate::hashcore::CodeMatrix;
use crate::simgraph::LabelMatrix;
use crate::solver::{
    complexity_probe, train, train_symmetric_baseline, write_history_csv, BaselineConfig, ProbeConfig, TrainConfig,
    TrainData, TrainError, TrainMode,
};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn config(message: impl fmt::Display) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.to_string(),
        }
    }

    fn data(message: impl fmt::Display) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.to_string(),
        }
    }

    /// Validation problems are configuration errors, shape and parse
    /// problems are data errors.
    fn from_lib(e: Error) -> Self {
        let code = match e {
            Error::Validation(_) => EXIT_CONFIG,
            Error::NonFinite(_) => EXIT_NUMERIC,
            Error::Dimension { .. } | Error::Format(_) | Error::Io(_) => EXIT_DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "adsh", version, about = "Asymmetric deep supervised hashing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a clustered synthetic dataset and split it.
    GenData(GenDataArgs),
    /// Train an encoder and database codes.
    Train(RunArgs),
    /// Hash feature rows with a trained encoder.
    Encode(EncodeArgs),
    /// Evaluate query codes against database codes.
    Eval(EvalArgs),
    /// Time outer iterations against database size.
    Bench(BenchArgs),
    /// Train and evaluate over a grid of gamma and query counts.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 10)]
    pub clusters: usize,
    #[arg(long, default_value_t = 200)]
    pub per_cluster: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Held-out query rows.
    #[arg(long, default_value_t = 100)]
    pub queries: usize,
    #[arg(long, default_value_t = 0)]
    pub validation: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Training settings as read from a TOML file. Every key is optional;
/// unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub query_features: Option<PathBuf>,
    pub query_labels: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub code_len: Option<usize>,
    pub gamma: Option<f64>,
    pub query_count: Option<usize>,
    pub outer_iters: Option<usize>,
    pub inner_iters: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub optimizer: Option<OptimizerName>,
    pub seed: Option<u64>,
    pub mode: Option<TrainMode>,
    pub imbalance_weighting: Option<bool>,
    pub hidden: Option<Vec<usize>>,
    pub map_cutoff: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    Sgd,
    Adam,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(self, over: RunConfig) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { RunConfig { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(
            features,
            labels,
            query_features,
            query_labels,
            out,
            code_len,
            gamma,
            query_count,
            outer_iters,
            inner_iters,
            batch_size,
            learning_rate,
            optimizer,
            seed,
            mode,
            imbalance_weighting,
            hidden,
            map_cutoff
        )
    }

    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            code_len: self.code_len.unwrap_or(d.code_len),
            gamma: self.gamma.unwrap_or(d.gamma),
            query_count: self.query_count.unwrap_or(d.query_count),
            outer_iters: self.outer_iters.unwrap_or(d.outer_iters),
            inner_iters: self.inner_iters.unwrap_or(d.inner_iters),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            optimizer: match self.optimizer {
                Some(OptimizerName::Adam) => OptimizerKind::adam(),
                Some(OptimizerName::Sgd) => OptimizerKind::Sgd,
                None => d.optimizer,
            },
            seed: self.seed.unwrap_or(d.seed),
            mode: self.mode.unwrap_or(d.mode),
            imbalance_weighting: self.imbalance_weighting.unwrap_or(d.imbalance_weighting),
            hidden: self.hidden.clone().unwrap_or(d.hidden),
        }
    }

    /// Every training key filled in from `cfg`, for echoing.
    pub fn effective(&self, cfg: &TrainConfig) -> Self {
        Self {
            code_len: Some(cfg.code_len),
            gamma: Some(cfg.gamma),
            query_count: Some(cfg.query_count),
            outer_iters: Some(cfg.outer_iters),
            inner_iters: Some(cfg.inner_iters),
            batch_size: Some(cfg.batch_size),
            learning_rate: Some(cfg.learning_rate),
            optimizer: Some(match cfg.optimizer {
                OptimizerKind::Sgd => OptimizerName::Sgd,
                OptimizerKind::Adam { .. } => OptimizerName::Adam,
            }),
            seed: Some(cfg.seed),
            mode: Some(cfg.mode),
            imbalance_weighting: Some(cfg.imbalance_weighting),
            hidden: Some(cfg.hidden.clone()),
            ..self.clone()
        }
    }
}

fn parse_mode(s: &str) -> Result<TrainMode, String> {
    match s {
        "asymmetric_sampled" | "sampled" => Ok(TrainMode::AsymmetricSampled),
        "asymmetric_separate_queries" | "separate" => Ok(TrainMode::AsymmetricSeparateQueries),
        "symmetric_baseline" | "symmetric" => Ok(TrainMode::SymmetricBaseline),
        _ => Err(format!(
            "unknown mode {s:?}; expected asymmetric_sampled, asymmetric_separate_queries or symmetric_baseline"
        )),
    }
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// TOML file with any of the training keys; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Database features.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Database labels.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Query features: training queries in separate-query mode, held-out
    /// evaluation queries otherwise.
    #[arg(long)]
    pub query_features: Option<PathBuf>,
    #[arg(long)]
    pub query_labels: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Number of sampled query rows.
    #[arg(long)]
    pub omega: Option<usize>,
    #[arg(long)]
    pub bits: Option<usize>,
    #[arg(long)]
    pub tout: Option<usize>,
    #[arg(long)]
    pub tin: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerName>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<TrainMode>,
    #[arg(long)]
    pub weighting: Option<bool>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Evaluate MAP over the top R results only.
    #[arg(long)]
    pub map_cutoff: Option<usize>,
}

impl RunArgs {
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        Ok(base.overlay(RunConfig {
            features: self.features.clone(),
            labels: self.labels.clone(),
            query_features: self.query_features.clone(),
            query_labels: self.query_labels.clone(),
            out: self.out.clone(),
            code_len: self.bits,
            gamma: self.gamma,
            query_count: self.omega,
            outer_iters: self.tout,
            inner_iters: self.tin,
            batch_size: self.batch,
            learning_rate: self.lr,
            optimizer: self.optimizer,
            seed: self.seed,
            mode: self.mode,
            imbalance_weighting: self.weighting,
            hidden: self.hidden.clone(),
            map_cutoff: self.map_cutoff,
        }))
    }
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Output code file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub query_codes: PathBuf,
    #[arg(long)]
    pub db_codes: PathBuf,
    #[arg(long)]
    pub query_labels: PathBuf,
    /// Database labels.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub map_cutoff: Option<usize>,
    /// Write precision@k for k up to this value.
    #[arg(long)]
    pub topk: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Database sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [2000, 4000, 8000, 16000])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub omega: usize,
    #[arg(long, default_value_t = 16)]
    pub bits: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [64])]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Skip the all-pairs symmetric trainer.
    #[arg(long)]
    pub no_baseline: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Gamma values, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub gammas: Vec<f64>,
    /// Query counts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub omegas: Vec<usize>,
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::GenData(a) => cmd_gen_data(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Encode(a) => cmd_encode(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn with_path<T>(path: &Path, r: crate::error::Result<T>) -> CliResult<T> {
    r.map_err(|e| {
        let mut err = CliError::from_lib(e);
        err.code = EXIT_DATA;
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })
}

pub fn load_features(path: &Path) -> CliResult<Features<f64>> {
    let r = open(path)?;
    with_path(path, if is_csv(path) { dataio::read_features_csv(r) } else { dataio::read_features(r) })
}

pub fn load_labels(path: &Path) -> CliResult<LabelMatrix> {
    let r = open(path)?;
    with_path(path, if is_csv(path) { dataio::read_labels_csv(r) } else { dataio::read_labels(r) })
}

pub fn load_codes(path: &Path) -> CliResult<CodeMatrix> {
    with_path(path, dataio::read_codes(open(path)?))
}

pub fn load_model(path: &Path) -> CliResult<Encoder<f64>> {
    with_path(path, dataio::read_model(open(path)?))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn write_io(path: &Path, r: std::io::Result<()>) -> CliResult {
    r.map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn make_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult {
    write_io(path, fs::write(path, text))
}

fn require<'a>(v: &'a Option<PathBuf>, what: &str) -> CliResult<&'a PathBuf> {
    v.as_ref().ok_or_else(|| CliError::config(format!("missing {what}")))
}

fn cmd_gen_data(a: &GenDataArgs) -> CliResult {
    let (features, labels) = dataio::gen_synthetic_clusters::<f64>(a.clusters, a.per_cluster, a.dim, a.noise, a.seed)
        .map_err(CliError::config)?;
    let split = dataio::split(features.rows(), a.queries, a.validation, a.seed).map_err(CliError::config)?;
    make_dir(&a.out)?;
    let mut parts = vec![("db", &split.database), ("query", &split.query)];
    if !split.validation.is_empty() {
        parts.push(("val", &split.validation));
    }
    for (name, idx) in parts {
        let p = a.out.join(format!("{name}.ftr"));
        write_io(&p, dataio::write_features(create(&p)?, &features.select(idx)))?;
        let p = a.out.join(format!("{name}.lbl"));
        write_io(&p, dataio::write_labels(create(&p)?, &labels.select(idx)))?;
    }
    let summary = format!(
        "clusters = {}\nper_cluster = {}\ndim = {}\nnoise = {}\nseed = {}\ndatabase = {}\nquery = {}\nvalidation = {}\n",
        a.clusters,
        a.per_cluster,
        a.dim,
        a.noise,
        a.seed,
        split.database.len(),
        split.query.len(),
        split.validation.len()
    );
    write_text(&a.out.join("split.toml"), &summary)
}

fn train_error(e: TrainError<f64>) -> CliError {
    match e {
        TrainError::Invalid(e) => CliError::from_lib(e),
        e @ TrainError::Numeric { .. } => CliError {
            code: EXIT_NUMERIC,
            message: e.to_string(),
        },
    }
}

struct Trained {
    model: Encoder<f64>,
    db_codes: CodeMatrix,
    history: Vec<crate::solver::HistoryRecord>,
}

struct Dataset {
    db: Features<f64>,
    db_labels: LabelMatrix,
    queries: Option<(Features<f64>, LabelMatrix)>,
}

fn load_dataset(rc: &RunConfig) -> CliResult<Dataset> {
    let db = load_features(require(&rc.features, "--features")?)?;
    let db_labels = load_labels(require(&rc.labels, "--labels")?)?;
    let queries = match (&rc.query_features, &rc.query_labels) {
        (Some(f), Some(l)) => Some((load_features(f)?, load_labels(l)?)),
        (None, None) => None,
        _ => return Err(CliError::config("--query-features and --query-labels go together")),
    };
    Ok(Dataset { db, db_labels, queries })
}

fn fit(ds: &Dataset, cfg: &TrainConfig) -> CliResult<Trained> {
    if cfg.mode == TrainMode::SymmetricBaseline {
        let bc = BaselineConfig {
            train: cfg.clone(),
            train_points: None,
            time_budget: None,
        };
        let out = train_symmetric_baseline(ds.db.view(), &ds.db_labels, &bc, |_, _, _| {})
            .map_err(CliError::from_lib)?;
        return Ok(Trained {
            model: out.model,
            db_codes: out.db_codes,
            history: out.history,
        });
    }
    cfg.validate().map_err(CliError::config)?;
    let mut data = TrainData::new(ds.db.view(), &ds.db_labels);
    if cfg.mode == TrainMode::AsymmetricSeparateQueries {
        let (qf, ql) = ds
            .queries
            .as_ref()
            .ok_or_else(|| CliError::config("separate-query mode needs --query-features and --query-labels"))?;
        data = data.with_queries(qf.view(), ql);
    }
    let state = train(&data, cfg).map_err(train_error)?;
    Ok(Trained {
        db_codes: state.codes(),
        model: state.model,
        history: state.history,
    })
}

/// MAP of held-out queries, when there are any.
fn query_map(
    model: &Encoder<f64>,
    db_codes: &CodeMatrix,
    ds: &Dataset,
    cutoff: Option<usize>,
) -> CliResult<Option<(CodeMatrix, f64)>> {
    let Some((qf, ql)) = &ds.queries else {
        return Ok(None);
    };
    let qcodes = encode_queries(model, qf.view()).map_err(CliError::from_lib)?;
    let ranking = rank_by_hamming(&qcodes, db_codes).map_err(CliError::from_lib)?;
    let rel = Relevance::from_labels(ql, &ds.db_labels);
    let map = mean_average_precision(&ranking, &rel, cutoff).map_err(CliError::from_lib)?;
    Ok(Some((qcodes, map)))
}

fn echo_config(dir: &Path, rc: &RunConfig) -> CliResult {
    let text = toml::to_string(rc).map_err(CliError::config)?;
    write_text(&dir.join("config.toml"), &text)
}

fn cmd_train(a: &RunArgs) -> CliResult {
    let rc = a.resolve()?;
    let cfg = rc.train_config();
    let out = require(&rc.out, "--out")?.clone();
    if rc.map_cutoff == Some(0) {
        return Err(CliError::config("--map-cutoff must be at least 1"));
    }
    let ds = load_dataset(&rc)?;
    make_dir(&out)?;
    echo_config(&out, &rc.effective(&cfg))?;
    let t = fit(&ds, &cfg)?;

    let p = out.join("model.mdl");
    write_io(&p, dataio::write_model(create(&p)?, &t.model))?;
    let p = out.join("db.cod");
    write_io(&p, dataio::write_codes(create(&p)?, &t.db_codes))?;
    let p = out.join("history.csv");
    write_io(&p, write_history_csv(create(&p)?, &t.history))?;

    let mut metrics = MetricsTable::default();
    metrics.push("seed", "", cfg.seed);
    if let Some(last) = t.history.last() {
        metrics.push("final_objective", "", last.objective);
        metrics.push("train_seconds", "", last.seconds);
    }
    if let Some((qcodes, map)) = query_map(&t.model, &t.db_codes, &ds, rc.map_cutoff)? {
        let p = out.join("query.cod");
        write_io(&p, dataio::write_codes(create(&p)?, &qcodes))?;
        metrics.push("map", cutoff_param(rc.map_cutoff), map);
    }
    metrics.push_metadata(rc.map_cutoff);
    let p = out.join("metrics.csv");
    metrics.write_csv(create(&p)?).map_err(CliError::from_lib)
}

fn cutoff_param(cutoff: Option<usize>) -> String {
    cutoff.map_or("cutoff=none".into(), |r| format!("cutoff={r}"))
}

fn cmd_encode(a: &EncodeArgs) -> CliResult {
    let model = load_model(&a.model)?;
    let features = load_features(&a.features)?;
    let codes = encode_queries(&model, features.view()).map_err(|e| {
        let mut err = CliError::from_lib(e);
        if err.code != EXIT_NUMERIC {
            err.code = EXIT_DATA;
        }
        err
    })?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        make_dir(dir)?;
    }
    write_io(&a.out, dataio::write_codes(create(&a.out)?, &codes))
}

fn cmd_eval(a: &EvalArgs) -> CliResult {
    if a.map_cutoff == Some(0) {
        return Err(CliError::config("--map-cutoff must be at least 1"));
    }
    let qcodes = load_codes(&a.query_codes)?;
    let dbcodes = load_codes(&a.db_codes)?;
    let ql = load_labels(&a.query_labels)?;
    let dbl = load_labels(&a.labels)?;
    let data_err = |e: Error| {
        let mut err = CliError::from_lib(e);
        err.code = EXIT_DATA;
        err
    };
    if qcodes.rows() != ql.len() || dbcodes.rows() != dbl.len() {
        return Err(CliError::data("code and label row counts differ"));
    }
    let rel = Relevance::from_labels(&ql, &dbl);
    let ranking = rank_by_hamming(&qcodes, &dbcodes).map_err(data_err)?;
    let map = mean_average_precision(&ranking, &rel, a.map_cutoff).map_err(data_err)?;
    make_dir(&a.out)?;

    let mut metrics = MetricsTable::default();
    metrics.push("map", cutoff_param(a.map_cutoff), map);
    if let Some(k) = a.topk {
        let curve = topk_precision_curve(&ranking, &rel, k).map_err(CliError::from_lib)?;
        metrics.push("precision_at_k", format!("k={k}"), curve[k - 1]);
        let points: Vec<(f64, f64)> = curve.iter().enumerate().map(|(i, &p)| ((i + 1) as f64, p)).collect();
        let p = a.out.join("topk.csv");
        write_curve_csv(create(&p)?, ["k", "precision"], &points).map_err(CliError::from_lib)?;
    }
    let pr = precision_recall_by_radius(&qcodes, &dbcodes, &rel).map_err(data_err)?;
    let points: Vec<(f64, f64)> = pr.iter().map(|p| (p.recall, p.precision)).collect();
    let p = a.out.join("pr_radius.csv");
    write_curve_csv(create(&p)?, ["recall", "precision"], &points).map_err(CliError::from_lib)?;
    metrics.push_metadata(a.map_cutoff);
    let p = a.out.join("metrics.csv");
    metrics.write_csv(create(&p)?).map_err(CliError::from_lib)
}

fn cmd_bench(a: &BenchArgs) -> CliResult {
    let cfg = ProbeConfig {
        sizes: a.sizes.clone(),
        query_count: a.omega,
        code_len: a.bits,
        dim: a.dim,
        hidden: a.hidden.clone(),
        repeats: a.repeats,
        include_baseline: !a.no_baseline,
        seed: a.seed,
        ..ProbeConfig::default()
    };
    let report = complexity_probe(&cfg).map_err(CliError::from_lib)?;
    make_dir(&a.out)?;
    let sizes: Vec<String> = a.sizes.iter().map(|s| s.to_string()).collect();
    write_text(
        &a.out.join("config.toml"),
        &format!(
            "sizes = [{}]\nquery_count = {}\ncode_len = {}\ndim = {}\nhidden = {:?}\nrepeats = {}\nbaseline = {}\nseed = {}\n",
            sizes.join(", "),
            a.omega,
            a.bits,
            a.dim,
            a.hidden,
            a.repeats,
            !a.no_baseline,
            a.seed
        ),
    )?;
    write_text(&a.out.join("timing.csv"), &report.to_csv())?;
    let mut metrics = MetricsTable::default();
    metrics.push("slope", "adsh_outer", report.adsh_slope);
    metrics.push("slope", "adsh_vstep", report.vstep_slope);
    if let Some(b) = report.baseline_slope {
        metrics.push("slope", "baseline_epoch", b);
    }
    let p = a.out.join("metrics.csv");
    metrics.write_csv(create(&p)?).map_err(CliError::from_lib)?;
    println!("{}", report.to_csv().trim_end());
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> CliResult {
    let rc = a.run.resolve()?;
    let out = require(&rc.out, "--out")?.clone();
    let ds = load_dataset(&rc)?;
    if ds.queries.is_none() {
        return Err(CliError::config("sweep needs --query-features and --query-labels"));
    }
    make_dir(&out)?;
    echo_config(&out, &rc.effective(&rc.train_config()))?;
    let mut rows = String::from("gamma,omega,map,seconds\n");
    for &gamma in &a.gammas {
        for &omega in &a.omegas {
            let mut cfg = rc.train_config();
            cfg.gamma = gamma;
            cfg.query_count = omega;
            cfg.batch_size = cfg.batch_size.min(omega);
            let t = fit(&ds, &cfg)?;
            let (_, map) = query_map(&t.model, &t.db_codes, &ds, rc.map_cutoff)?.expect("queries present");
            let secs = t.history.last().map_or(0.0, |r| r.seconds);
            rows += &format!("{gamma},{omega},{map:.6},{secs:.3}\n");
        }
    }
    let p = out.join("sweep.csv");
    let mut w = create(&p)?;
    write_io(&p, w.write_all(rows.as_bytes()).and_then(|_| w.flush()))
}
