//! Experiment sweeps: configuration, seeded execution on a worker pool,
//! result persistence and gain tables.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{mpsc, Arc};
use std::thread;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, Bucketized, DataKind, DistributionSpec};
use crate::error::{Error, Result};
use crate::estimation::{estimate_from_counts, Estimator, IbuConfig, SupportCounts};
use crate::mechanism::Mechanism;
use crate::metrics::{self, aggregate, ExperimentResult, GainRecord};
use crate::oneshot::accumulate_support;
use crate::rng::{derive_seed, seeded, str_word};
use crate::types::{
    Budget, DomainSize, LongitudinalBudget, MechanismId, MechanismSpec, PrivacyBudget,
};

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_JSON: &str = "results.json";
pub const PARTIAL: &str = "results.partial.jsonl";
pub const ESTIMATES_JSON: &str = "estimates.json";
pub const GAINS_CSV: &str = "gains.csv";
pub const GAINS_JSON: &str = "gains.json";

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Implementation choices recorded in every output file.
pub const DESIGN_FLAGS: &[&str] = &[
    "gain=computed_on_run_averaged_metrics",
    "observed=support_counts_normalized_to_one",
    "ibu_channel=square_support_channel",
    "ibu_err_func=max_abs",
    "mi_all_zero_after_clip=uniform",
    "binning=equal_width_over_sample_range",
    "gaussian_sigma=10",
    "rounding=nearest_ties_even",
    "omega_clamp=1..k-1,g_min=2",
    "the_theta=golden_section_tol_1e-6",
    "the_support=server_side",
    "hash=splitmix64_multiply_shift",
    "longitudinal_estimation=effective_support_pair",
    "rng=chacha8",
];

/// Sort key written with every result file.
pub const SORT_KEY: &str = "mechanism,eps_inf,eps,n,k,distribution,run,estimator";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EstimatorChoice {
    Mi,
    Ibu,
    #[default]
    Both,
}

impl EstimatorChoice {
    pub fn estimators(self) -> Vec<Estimator> {
        match self {
            EstimatorChoice::Mi => vec![Estimator::Mi],
            EstimatorChoice::Ibu => vec![Estimator::Ibu],
            EstimatorChoice::Both => vec![Estimator::Mi, Estimator::Ibu],
        }
    }
}

impl TryFrom<String> for EstimatorChoice {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mi" => Ok(EstimatorChoice::Mi),
            "ibu" => Ok(EstimatorChoice::Ibu),
            "both" => Ok(EstimatorChoice::Both),
            _ => Err(Error::Config(format!(
                "estimators must be MI, IBU or both, got {s:?}"
            ))),
        }
    }
}

impl From<EstimatorChoice> for String {
    fn from(e: EstimatorChoice) -> String {
        match e {
            EstimatorChoice::Mi => "MI".into(),
            EstimatorChoice::Ibu => "IBU".into(),
            EstimatorChoice::Both => "both".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

fn default_dir() -> PathBuf {
    PathBuf::from("results")
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_dir(),
            format: OutputFormat::Csv,
        }
    }
}

/// A numeric CSV column used as an additional population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    pub column: String,
    #[serde(default = "comma")]
    pub delimiter: char,
}

fn comma() -> char {
    ','
}

fn half() -> f64 {
    0.5
}

fn twenty() -> usize {
    20
}

/// A sweep definition, read from TOML.
///
/// One-shot mechanisms run at every value of `eps`; longitudinal ones at
/// every `eps_inf` with `eps_1 = eps_ratio * eps_inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mechanisms: Vec<MechanismId>,
    #[serde(default)]
    pub estimators: EstimatorChoice,
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub eps_inf: Vec<f64>,
    #[serde(default = "half")]
    pub eps_ratio: f64,
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    #[serde(default)]
    pub distributions: Vec<String>,
    #[serde(default)]
    pub csv: Vec<CsvSource>,
    #[serde(default = "twenty")]
    pub runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub ibu: IbuConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub record_estimates: bool,
}

impl FromStr for ExperimentConfig {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    text.parse()
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: &str| Err(Error::Config(m.to_string()));
        if self.mechanisms.is_empty() {
            return cfg_err("mechanisms must not be empty");
        }
        if self.n.is_empty() || self.k.is_empty() {
            return cfg_err("n and k must not be empty");
        }
        if self.runs < 1 {
            return cfg_err("runs must be at least 1");
        }
        if self.n.contains(&0) {
            return cfg_err("every n must be at least 1");
        }
        if self.workers == Some(0) {
            return cfg_err("workers must be at least 1");
        }
        if self.ibu.max_iter < 1 || !(self.ibu.tol >= 0.0 && self.ibu.tol.is_finite()) {
            return cfg_err("ibu.max_iter must be >= 1 and ibu.tol finite and >= 0");
        }
        for d in &self.distributions {
            if DataKind::synthetic_from_label(d).is_none() {
                return Err(Error::Config(format!("unknown distribution {d:?}")));
            }
        }
        if self.distributions.is_empty() && self.csv.is_empty() {
            return cfg_err("no distributions or csv sources given");
        }
        if self.mechanisms.iter().any(|m| !m.is_longitudinal()) && self.eps.is_empty() {
            return cfg_err("one-shot mechanisms need a non-empty eps list");
        }
        if self.mechanisms.iter().any(|m| m.is_longitudinal()) {
            if self.eps_inf.is_empty() {
                return cfg_err("longitudinal mechanisms need a non-empty eps_inf list");
            }
            if !(self.eps_ratio > 0.0 && self.eps_ratio <= 1.0) {
                return cfg_err("eps_ratio must lie in (0, 1]");
            }
        }
        for &k in &self.k {
            for (id, budget) in self.settings()? {
                Mechanism::new(MechanismSpec::new(id, DomainSize::new(k)?, budget)?)?;
            }
        }
        Ok(())
    }

    /// Every (mechanism, budget) pair of the sweep, in config order.
    pub fn settings(&self) -> Result<Vec<(MechanismId, Budget)>> {
        let mut out = Vec::new();
        for &id in &self.mechanisms {
            if id.is_longitudinal() {
                for &ei in &self.eps_inf {
                    out.push((
                        id,
                        Budget::Longitudinal(LongitudinalBudget::new(ei, ei * self.eps_ratio)?),
                    ));
                }
            } else {
                for &e in &self.eps {
                    out.push((id, Budget::OneShot(PrivacyBudget::new(e)?)));
                }
            }
        }
        Ok(out)
    }

    fn distribution_labels(&self) -> Vec<String> {
        self.distributions
            .iter()
            .filter_map(|d| DataKind::synthetic_from_label(d))
            .map(|d| d.label())
            .chain(self.csv.iter().map(|c| format!("csv:{}", c.column)))
            .collect()
    }
}

/// `(eps, eps_inf)` as written in result rows; `eps` is ε1 for
/// longitudinal budgets.
pub fn budget_columns(budget: &Budget) -> (f64, Option<f64>) {
    match budget {
        Budget::OneShot(e) => (e.get(), None),
        Budget::Longitudinal(b) => (b.eps_1(), Some(b.eps_inf())),
    }
}

/// One (run, sweep point) unit of work.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub mechanism: MechanismId,
    pub budget: Budget,
    pub n: usize,
    pub k: usize,
    pub distribution: String,
    pub source: usize,
    pub run: usize,
    pub seed: u64,
}

/// Seed of one task, a function of the base seed and every sweep coordinate.
pub fn task_seed(
    base_seed: u64,
    id: MechanismId,
    budget: &Budget,
    n: usize,
    k: usize,
    distribution: &str,
    run: usize,
) -> u64 {
    let (eps, eps_inf) = budget_columns(budget);
    derive_seed(
        base_seed,
        &[
            str_word(id.as_str()),
            eps.to_bits(),
            eps_inf.map_or(0, f64::to_bits),
            n as u64,
            k as u64,
            str_word(distribution),
            run as u64,
        ],
    )
}

pub fn plan(cfg: &ExperimentConfig) -> Result<Vec<Task>> {
    let labels = cfg.distribution_labels();
    let mut tasks = Vec::new();
    for (id, budget) in cfg.settings()? {
        for &n in &cfg.n {
            for &k in &cfg.k {
                for (source, label) in labels.iter().enumerate() {
                    for run in 0..cfg.runs {
                        tasks.push(Task {
                            mechanism: id,
                            budget,
                            n,
                            k,
                            distribution: label.clone(),
                            source,
                            run,
                            seed: task_seed(cfg.base_seed, id, &budget, n, k, label, run),
                        });
                    }
                }
            }
        }
    }
    Ok(tasks)
}

/// Population source, with CSV columns read once up front.
#[derive(Debug, Clone)]
pub enum Source {
    Synthetic(DataKind),
    Column(Arc<Vec<f64>>),
}

pub fn prepare_sources(cfg: &ExperimentConfig) -> Result<Vec<Source>> {
    let mut out: Vec<Source> = cfg
        .distributions
        .iter()
        .filter_map(|d| DataKind::synthetic_from_label(d))
        .map(Source::Synthetic)
        .collect();
    for c in &cfg.csv {
        out.push(Source::Column(Arc::new(data::read_csv_column(
            &c.path,
            &c.column,
            c.delimiter,
        )?)));
    }
    Ok(out)
}

/// Estimates of one task, kept when `record_estimates` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub mechanism: MechanismId,
    pub estimator: Estimator,
    pub eps: f64,
    pub eps_inf: Option<f64>,
    pub n: usize,
    pub k: usize,
    pub distribution: String,
    pub run: usize,
    pub truth: Vec<f64>,
    pub estimate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskOutput {
    pub rows: Vec<ExperimentResult>,
    pub estimates: Vec<EstimateRecord>,
}

/// Generate the population, obfuscate every user once and estimate with
/// each configured estimator from the same support counts.
pub fn execute_task(
    task: &Task,
    source: &Source,
    estimators: &[Estimator],
    ibu: &IbuConfig,
    keep_estimates: bool,
) -> Result<TaskOutput> {
    let mut rng = seeded(task.seed);
    let samples = match source {
        Source::Synthetic(kind) => data::sample(
            &DistributionSpec::new(kind.clone(), task.n, task.k)?,
            &mut rng,
        )?,
        Source::Column(values) => data::subsample(values, task.n, &mut rng),
    };
    let Bucketized { indices, truth, .. } = data::bucketize(&samples, task.k)?;
    let mechanism = Mechanism::new(MechanismSpec::new(
        task.mechanism,
        DomainSize::new(task.k)?,
        task.budget,
    )?)?;
    let mut counts = vec![0u64; task.k];
    for &v in &indices {
        let report = mechanism.client(v, &mut rng)?;
        accumulate_support(&report, mechanism.params(), &mut counts)?;
    }
    let counts = SupportCounts::new(counts, indices.len());
    let (eps, eps_inf) = budget_columns(&task.budget);
    let mut out = TaskOutput::default();
    for &estimator in estimators {
        let est = estimate_from_counts(&counts, mechanism.params(), estimator, ibu)?;
        out.rows.push(ExperimentResult {
            mechanism: task.mechanism,
            estimator,
            eps,
            eps_inf,
            n: task.n,
            k: task.k,
            distribution: task.distribution.clone(),
            run: task.run,
            seed: task.seed,
            mse: metrics::mse(&truth, &est.distribution)?,
            mae: metrics::mae(&truth, &est.distribution)?,
            iterations: est.iterations,
        });
        if keep_estimates {
            out.estimates.push(EstimateRecord {
                mechanism: task.mechanism,
                estimator,
                eps,
                eps_inf,
                n: task.n,
                k: task.k,
                distribution: task.distribution.clone(),
                run: task.run,
                truth: truth.probs().to_vec(),
                estimate: est.distribution.into_probs(),
            });
        }
    }
    Ok(out)
}

fn mechanism_rank(id: MechanismId) -> usize {
    MechanismId::all()
        .position(|m| m == id)
        .unwrap_or(usize::MAX)
}

fn cmp_opt(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(x), Some(y)) => x.total_cmp(&y),
    }
}

/// Ordering by [`SORT_KEY`].
pub fn compare_rows(a: &ExperimentResult, b: &ExperimentResult) -> Ordering {
    mechanism_rank(a.mechanism)
        .cmp(&mechanism_rank(b.mechanism))
        .then(cmp_opt(a.eps_inf, b.eps_inf))
        .then(a.eps.total_cmp(&b.eps))
        .then(a.n.cmp(&b.n))
        .then(a.k.cmp(&b.k))
        .then(a.distribution.cmp(&b.distribution))
        .then(a.run.cmp(&b.run))
        .then(a.estimator.cmp(&b.estimator))
}

fn compare_estimates(a: &EstimateRecord, b: &EstimateRecord) -> Ordering {
    mechanism_rank(a.mechanism)
        .cmp(&mechanism_rank(b.mechanism))
        .then(cmp_opt(a.eps_inf, b.eps_inf))
        .then(a.eps.total_cmp(&b.eps))
        .then(a.n.cmp(&b.n))
        .then(a.k.cmp(&b.k))
        .then(a.distribution.cmp(&b.distribution))
        .then(a.run.cmp(&b.run))
        .then(a.estimator.cmp(&b.estimator))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

pub fn default_workers() -> usize {
    thread::available_parallelism().map_or(1, |n| n.get())
}

/// Execute every task in memory, without persistence. Rows come back in
/// [`SORT_KEY`] order.
pub fn run_in_memory(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<ExperimentResult>> {
    cfg.validate()?;
    let tasks = plan(cfg)?;
    let sources = prepare_sources(cfg)?;
    let estimators = cfg.estimators.estimators();
    let outputs: Vec<TaskOutput> = pool(workers)?.install(|| {
        tasks
            .par_iter()
            .map(|t| execute_task(t, &sources[t.source], &estimators, &cfg.ibu, false))
            .collect::<Result<_>>()
    })?;
    let mut rows: Vec<ExperimentResult> = outputs.into_iter().flat_map(|o| o.rows).collect();
    rows.sort_by(compare_rows);
    Ok(rows)
}

/// Run-time overrides, typically from the command line or environment.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub rows: Vec<ExperimentResult>,
    pub results_path: PathBuf,
}

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    sort_key: &'static str,
    design: &'a [&'a str],
    config: serde_json::Value,
}

/// The config as recorded in output files. Output location and worker
/// count do not affect results and are left out.
fn recorded_config(cfg: &ExperimentConfig) -> serde_json::Value {
    let mut v = serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null);
    if let Some(obj) = v.as_object_mut() {
        obj.remove("workers");
        obj.remove("output");
        obj.insert(
            "output_format".into(),
            serde_json::to_value(cfg.output.format).unwrap_or_default(),
        );
    }
    v
}

fn metadata(cfg: &ExperimentConfig) -> Metadata<'static> {
    Metadata {
        tool: "ldpfo",
        version: VERSION,
        sort_key: SORT_KEY,
        design: DESIGN_FLAGS,
        config: recorded_config(cfg),
    }
}

fn metadata_header(cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# ldpfo {VERSION}");
    let _ = writeln!(s, "# config: {}", recorded_config(cfg));
    for flag in DESIGN_FLAGS {
        let _ = writeln!(s, "# design: {flag}");
    }
    let _ = writeln!(s, "# sort: {SORT_KEY}");
    s
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Io(e.to_string())
}

/// Run the sweep on a worker pool. Rows are appended to a partial file as
/// tasks finish; the sorted result file replaces it at the end.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    cfg.validate()?;
    let dir = opts
        .output_dir
        .clone()
        .unwrap_or_else(|| cfg.output.dir.clone());
    let workers = opts.workers.or(cfg.workers).unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    let tasks = plan(cfg)?;
    let sources = prepare_sources(cfg)?;
    let estimators = cfg.estimators.estimators();
    fs::create_dir_all(&dir)?;
    let partial_path = dir.join(PARTIAL);
    let mut partial = BufWriter::new(File::create(&partial_path)?);

    let (tx, rx) = mpsc::channel::<TaskOutput>();
    let writer = thread::spawn(
        move || -> Result<(Vec<ExperimentResult>, Vec<EstimateRecord>)> {
            let mut rows = Vec::new();
            let mut estimates = Vec::new();
            for out in rx {
                for r in &out.rows {
                    serde_json::to_writer(&mut partial, r).map_err(json_err)?;
                    partial.write_all(b"\n")?;
                }
                partial.flush()?;
                rows.extend(out.rows);
                estimates.extend(out.estimates);
            }
            Ok((rows, estimates))
        },
    );

    let keep = cfg.record_estimates;
    let outcome = pool(workers)?.install(|| {
        tasks.par_iter().try_for_each_with(tx, |tx, t| {
            let out = execute_task(t, &sources[t.source], &estimators, &cfg.ibu, keep)?;
            tx.send(out)
                .map_err(|_| Error::Io("result writer stopped".into()))
        })
    });
    let written = writer
        .join()
        .map_err(|_| Error::Io("result writer panicked".into()))?;
    outcome?;
    let (mut rows, mut estimates) = written?;
    rows.sort_by(compare_rows);
    estimates.sort_by(compare_estimates);

    let results_path = match cfg.output.format {
        OutputFormat::Csv => {
            let path = dir.join(RESULTS_CSV);
            write_rows_csv(&path, &metadata_header(cfg), &rows)?;
            path
        }
        OutputFormat::Json => {
            let path = dir.join(RESULTS_JSON);
            let doc = serde_json::json!({ "metadata": metadata(cfg), "results": rows });
            write_json(&path, &doc)?;
            path
        }
    };
    if keep {
        let doc = serde_json::json!({ "metadata": metadata(cfg), "estimates": estimates });
        write_json(&dir.join(ESTIMATES_JSON), &doc)?;
    }
    fs::remove_file(&partial_path)?;
    Ok(RunSummary { rows, results_path })
}

fn write_json(path: &Path, doc: &serde_json::Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, doc).map_err(json_err)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_rows_csv<T: Serialize>(path: &Path, header: &str, rows: &[T]) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    file.write_all(header.as_bytes())?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Read results from a directory (`results.csv` or `results.json`) or from
/// a file path.
pub fn read_results(input: &Path) -> Result<Vec<ExperimentResult>> {
    let path = if input.is_dir() {
        let csv = input.join(RESULTS_CSV);
        let json = input.join(RESULTS_JSON);
        if csv.is_file() {
            csv
        } else if json.is_file() {
            json
        } else {
            return Err(Error::NoResults(input.display().to_string()));
        }
    } else if input.is_file() {
        input.to_path_buf()
    } else {
        return Err(Error::NoResults(input.display().to_string()));
    };
    if path.extension().is_some_and(|e| e == "json") {
        #[derive(Deserialize)]
        struct Doc {
            results: Vec<ExperimentResult>,
        }
        let doc: Doc = serde_json::from_reader(File::open(&path)?)
            .map_err(|e| Error::CsvParse(e.to_string()))?;
        return Ok(doc.results);
    }
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(&path)
        .map_err(|e| Error::CsvParse(e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::CsvParse(e.to_string())))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mse,
    Mae,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Mae => "mae",
        }
    }

    fn gain(self, g: &GainRecord) -> f64 {
        match self {
            Metric::Mse => g.gamma_mse,
            Metric::Mae => g.gamma_mae,
        }
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mse" => Ok(Metric::Mse),
            "mae" => Ok(Metric::Mae),
            _ => Err(Error::Config(format!(
                "metric must be mse or mae, got {s:?}"
            ))),
        }
    }
}

/// Gain table of one mechanism family: rows are distributions, columns are
/// mechanism × metric. Each cell averages Γ over the remaining sweep
/// coordinates; `NaN` marks combinations absent from the results.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTable {
    pub family: &'static str,
    pub mechanisms: Vec<MechanismId>,
    pub metrics: Vec<Metric>,
    pub distributions: Vec<String>,
    /// `cells[row][mech * metrics.len() + metric]`.
    pub cells: Vec<Vec<f64>>,
    /// Per row and metric, the average over mechanisms.
    pub row_avg: Vec<Vec<f64>>,
    /// Per column, the average over distributions.
    pub col_avg: Vec<f64>,
    /// Per metric, the average over all cells.
    pub overall: Vec<f64>,
}

fn nan_mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, c) = xs
        .into_iter()
        .filter(|x| !x.is_nan())
        .fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if c == 0 {
        f64::NAN
    } else {
        s / c as f64
    }
}

pub fn gain_tables(gains: &[GainRecord], metrics: &[Metric]) -> Vec<GainTable> {
    let mut tables = Vec::new();
    for (family, longitudinal) in [("one-shot", false), ("longitudinal", true)] {
        let family_gains: Vec<&GainRecord> = gains
            .iter()
            .filter(|g| g.mechanism.is_longitudinal() == longitudinal)
            .collect();
        if family_gains.is_empty() {
            continue;
        }
        let mechanisms: Vec<MechanismId> = MechanismId::all()
            .filter(|m| family_gains.iter().any(|g| g.mechanism == *m))
            .collect();
        let mut distributions: Vec<String> = family_gains
            .iter()
            .map(|g| g.distribution.clone())
            .collect();
        distributions.sort();
        distributions.dedup();
        let mut sums: BTreeMap<(usize, usize), Vec<&GainRecord>> = BTreeMap::new();
        for g in &family_gains {
            let r = distributions
                .iter()
                .position(|d| *d == g.distribution)
                .unwrap_or(0);
            let c = mechanisms
                .iter()
                .position(|m| *m == g.mechanism)
                .unwrap_or(0);
            sums.entry((r, c)).or_default().push(g);
        }
        let m = metrics.len();
        let cells: Vec<Vec<f64>> = (0..distributions.len())
            .map(|r| {
                (0..mechanisms.len() * m)
                    .map(|col| match sums.get(&(r, col / m)) {
                        Some(gs) => nan_mean(gs.iter().map(|g| metrics[col % m].gain(g))),
                        None => f64::NAN,
                    })
                    .collect()
            })
            .collect();
        let row_avg = cells
            .iter()
            .map(|row| {
                (0..m)
                    .map(|j| nan_mean(row.iter().skip(j).step_by(m).copied()))
                    .collect()
            })
            .collect();
        let col_avg = (0..mechanisms.len() * m)
            .map(|c| nan_mean(cells.iter().map(|row| row[c])))
            .collect();
        let overall = (0..m)
            .map(|j| {
                nan_mean(
                    cells
                        .iter()
                        .flat_map(|row| row.iter().skip(j).step_by(m).copied()),
                )
            })
            .collect();
        tables.push(GainTable {
            family,
            mechanisms,
            metrics: metrics.to_vec(),
            distributions,
            cells,
            row_avg,
            col_avg,
            overall,
        });
    }
    tables
}

impl GainTable {
    fn column_names(&self) -> Vec<String> {
        let mut cols: Vec<String> = self
            .mechanisms
            .iter()
            .flat_map(|id| {
                self.metrics
                    .iter()
                    .map(move |m| format!("{}_{}", id.as_str(), m.name()))
            })
            .collect();
        cols.extend(self.metrics.iter().map(|m| format!("avg_{}", m.name())));
        cols
    }

    /// Full-precision CSV with an `avg` row and `avg_*` columns.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["distribution".to_string()];
        header.extend(self.column_names());
        w.write_record(&header).map_err(csv_err)?;
        let fmt = |x: f64| {
            if x.is_nan() {
                String::new()
            } else {
                x.to_string()
            }
        };
        for (r, d) in self.distributions.iter().enumerate() {
            let mut rec = vec![d.clone()];
            rec.extend(
                self.cells[r]
                    .iter()
                    .chain(&self.row_avg[r])
                    .map(|&x| fmt(x)),
            );
            w.write_record(&rec).map_err(csv_err)?;
        }
        let mut rec = vec!["avg".to_string()];
        rec.extend(self.col_avg.iter().chain(&self.overall).map(|&x| fmt(x)));
        w.write_record(&rec).map_err(csv_err)?;
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.to_string()))?)
            .map_err(|e| Error::Io(e.to_string()))
    }
}

impl fmt::Display for GainTable {
    /// Integer-rounded gains in percent.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cols = self.column_names();
        let label_w = self
            .distributions
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(12);
        let cell = |x: f64| {
            if x.is_nan() {
                "-".to_string()
            } else {
                format!("{:.0}", x)
            }
        };
        writeln!(f, "{} gain (%)", self.family)?;
        write!(f, "{:<label_w$}", "distribution")?;
        for c in &cols {
            write!(f, " {:>w$}", c, w = c.len().max(4))?;
        }
        writeln!(f)?;
        let widths: Vec<usize> = cols.iter().map(|c| c.len().max(4)).collect();
        let line = |f: &mut fmt::Formatter<'_>, label: &str, vals: Vec<f64>| -> fmt::Result {
            write!(f, "{label:<label_w$}")?;
            for (v, w) in vals.into_iter().zip(&widths) {
                write!(f, " {:>w$}", cell(v), w = *w)?;
            }
            writeln!(f)
        };
        for (r, d) in self.distributions.iter().enumerate() {
            line(
                f,
                d,
                self.cells[r]
                    .iter()
                    .chain(&self.row_avg[r])
                    .copied()
                    .collect(),
            )?;
        }
        line(
            f,
            "avg",
            self.col_avg.iter().chain(&self.overall).copied().collect(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct SummaryOutput {
    pub gains: Vec<GainRecord>,
    pub tables: Vec<GainTable>,
}

/// Aggregate results into gain records and family tables, writing
/// `gains.csv`, `gains.json` and one `table_<family>.csv` per family to
/// `out_dir`.
pub fn summarize(input: &Path, metric: Option<Metric>, out_dir: &Path) -> Result<SummaryOutput> {
    let rows = read_results(input)?;
    if rows.is_empty() {
        return Err(Error::NoResults(input.display().to_string()));
    }
    let gains = aggregate(&rows)?;
    let metrics = metric.map_or_else(|| vec![Metric::Mse, Metric::Mae], |m| vec![m]);
    let tables = gain_tables(&gains, &metrics);
    fs::create_dir_all(out_dir)?;
    write_rows_csv(&out_dir.join(GAINS_CSV), "", &gains)?;
    write_json(
        &out_dir.join(GAINS_JSON),
        &serde_json::json!({ "design": DESIGN_FLAGS, "gains": gains }),
    )?;
    for t in &tables {
        fs::write(out_dir.join(format!("table_{}.csv", t.family)), t.to_csv()?)?;
    }
    Ok(SummaryOutput { gains, tables })
}
