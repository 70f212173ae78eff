//! Experiment orchestration: load, split once, optionally equalize, train
//! every requested algorithm, evaluate, and assemble a comparison report.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use histeq_rec_core::equalize::{self, EqualizationMap, UnseenLevel};
use histeq_rec_core::evaluate::{evaluate_accuracy, evaluate_fairness, EvalReport, EvalSpace};
use histeq_rec_core::{ratings, split, train, Regularizer, SparseRatings, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::formats::{self, ComodaColumns};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    #[value(name = "movielens-1m")]
    #[serde(rename = "movielens-1m")]
    Movielens1m,
    ComodaCsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Mf,
    #[value(name = "kl_uniform")]
    KlUniform,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Mf => "mf",
            Algorithm::KlUniform => "kl_uniform",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EqualizeMode {
    On,
    Off,
    Both,
}

impl EqualizeMode {
    fn cells(self) -> &'static [bool] {
        match self {
            EqualizeMode::On => &[true],
            EqualizeMode::Off => &[false],
            EqualizeMode::Both => &[false, true],
        }
    }
}

/// Which ratings the equalization map is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EqualizeFit {
    TrainOnly,
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvalSpaces {
    Original,
    Equalized,
    Both,
}

impl EvalSpaces {
    fn spaces(self) -> &'static [EvalSpace] {
        match self {
            EvalSpaces::Original => &[EvalSpace::Original],
            EvalSpaces::Equalized => &[EvalSpace::Equalized],
            EvalSpaces::Both => &[EvalSpace::Original, EvalSpace::Equalized],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub format: DatasetFormat,
    /// Only meaningful for CoMoDa files.
    pub columns: ComodaColumns,
}

/// Every knob of one experiment. Output paths are not part of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub subsample: Option<usize>,
    pub test_fraction: f64,
    pub seed: u64,
    pub equalize: EqualizeMode,
    pub equalize_fit: EqualizeFit,
    /// Scale of the equalized values; `None` uses the dataset's top level.
    pub r_max: Option<f64>,
    pub unseen_level: UnseenLevel,
    pub algorithms: Vec<Algorithm>,
    pub rank: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub init_scale: f64,
    pub kl_weight: f64,
    pub kl_bandwidth: f64,
    pub eval_space: EvalSpaces,
    pub top_k: usize,
    pub tail_fraction: f64,
}

impl ExperimentConfig {
    /// Harness defaults for a dataset. None of them are tuned values.
    pub fn new(path: impl Into<PathBuf>, format: DatasetFormat) -> Self {
        let train = TrainConfig::default();
        ExperimentConfig {
            dataset: DatasetSpec { path: path.into(), format, columns: ComodaColumns::default() },
            subsample: None,
            test_fraction: 0.2,
            seed: 42,
            equalize: EqualizeMode::Both,
            equalize_fit: EqualizeFit::TrainOnly,
            r_max: None,
            unseen_level: UnseenLevel::Reject,
            algorithms: vec![Algorithm::Mf, Algorithm::KlUniform],
            rank: train.rank,
            epochs: train.epochs,
            learning_rate: train.learning_rate,
            l2: train.l2,
            init_scale: train.init_scale,
            kl_weight: 1.0,
            kl_bandwidth: 0.5,
            eval_space: EvalSpaces::Both,
            top_k: 10,
            tail_fraction: 0.8,
        }
    }

    pub fn train_config(&self, algorithm: Algorithm) -> TrainConfig {
        let regularizer = match algorithm {
            Algorithm::Mf => Regularizer::None,
            Algorithm::KlUniform => Regularizer::KlUniform { weight: self.kl_weight, bandwidth: self.kl_bandwidth },
        };
        TrainConfig {
            rank: self.rank,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            l2: self.l2,
            regularizer,
            seed: self.seed,
            init_scale: self.init_scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Core(histeq_rec_core::Error::Config(msg)));
        if self.algorithms.is_empty() {
            return bad("no algorithms requested".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test fraction {} outside (0, 1)", self.test_fraction));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction < 1.0) {
            return bad(format!("tail fraction {} outside (0, 1)", self.tail_fraction));
        }
        if self.top_k == 0 {
            return bad("top-k must be at least 1".into());
        }
        if self.subsample == Some(0) {
            return bad("subsample size must be at least 1".into());
        }
        if let Some(r_max) = self.r_max {
            if !(r_max > 0.0 && r_max.is_finite()) {
                return bad(format!("r_max {r_max} must be positive"));
            }
        }
        if self.eval_space == EvalSpaces::Equalized && self.equalize == EqualizeMode::Off {
            return bad("equalized-space evaluation needs equalized cells".into());
        }
        let mut seen = self.algorithms.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.algorithms.len() {
            return bad("algorithm listed twice".into());
        }
        for &a in &self.algorithms {
            self.train_config(a).validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config is always serializable");
        hex::encode(Sha256::digest(&bytes))
    }
}

pub fn load_dataset(spec: &DatasetSpec) -> Result<SparseRatings> {
    match spec.format {
        DatasetFormat::Movielens1m => formats::load_movielens_1m(&spec.path),
        DatasetFormat::ComodaCsv => formats::load_comoda_csv(&spec.path, &spec.columns),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_users: usize,
    pub n_items: usize,
    pub n_observations: usize,
    pub levels: Vec<f64>,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub seed: u64,
    pub config_hash: String,
    pub dataset: DatasetSummary,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub algorithm: Algorithm,
    pub equalized: bool,
    pub equalize_fit: Option<EqualizeFit>,
    pub train_config: TrainConfig,
    pub eval: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub algorithm: Algorithm,
    pub equalized: bool,
    pub train_mse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub provenance: Provenance,
    pub config: ExperimentConfig,
    pub equalization_map: Option<EqualizationMap>,
    pub rows: Vec<ReportRow>,
    pub loss_traces: Vec<LossTrace>,
}

const NOTE: &str = "hyperparameters are harness defaults or user-supplied values, not published settings; \
the kl_uniform algorithm is a soft-binned KL-to-uniform stand-in for KL-regularized MF";

/// Loads the configured dataset and runs every cell.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ComparisonReport> {
    config.validate()?;
    let ratings = load_dataset(&config.dataset)?;
    run_on(config, &ratings)
}

/// Runs every cell on already-loaded ratings.
pub fn run_on(config: &ExperimentConfig, ratings: &SparseRatings) -> Result<ComparisonReport> {
    config.validate()?;
    let sampled;
    let ratings = match config.subsample {
        Some(n) => {
            sampled = ratings::subsample(ratings, n, config.seed)?;
            &sampled
        }
        None => ratings,
    };
    let split = split(ratings, config.test_fraction, config.seed)?;
    let r_max = config.r_max.unwrap_or(ratings.levels()[ratings.levels().len() - 1]);

    let mut rows = Vec::new();
    let mut loss_traces = Vec::new();
    let mut fitted_map = None;
    for &equalized in config.equalize.cells() {
        let map = if equalized {
            let source = match config.equalize_fit {
                EqualizeFit::TrainOnly => &split.train,
                EqualizeFit::Joint => ratings,
            };
            Some(equalize::fit(source, r_max).map_err(|e| cell_error("equalize", equalized, e.into()))?)
        } else {
            None
        };
        let train_set = match &map {
            Some(map) => equalize::apply(map, &split.train, config.unseen_level)
                .map_err(|e| cell_error("equalize", equalized, e.into()))?,
            None => split.train.clone(),
        };
        for &algorithm in &config.algorithms {
            let train_config = config.train_config(algorithm);
            let on_err = |e: histeq_rec_core::Error| cell_error(algorithm.as_str(), equalized, e.into());
            let trained = train(&train_set, &train_config).map_err(on_err)?;
            let fairness =
                evaluate_fairness(&trained.model, &split.train, &split.test, config.top_k, config.tail_fraction)
                    .map_err(on_err)?;
            for &space in config.eval_space.spaces() {
                // Equalized-scale accuracy is only defined for models trained on
                // that scale.
                if space == EvalSpace::Equalized && map.is_none() {
                    continue;
                }
                let accuracy =
                    evaluate_accuracy(&trained.model, map.as_ref(), &split.test, space, config.unseen_level)
                        .map_err(on_err)?;
                rows.push(ReportRow {
                    algorithm,
                    equalized,
                    equalize_fit: equalized.then_some(config.equalize_fit),
                    train_config,
                    eval: EvalReport::new(space, accuracy, fairness),
                });
            }
            loss_traces.push(LossTrace { algorithm, equalized, train_mse: trained.loss_trace });
        }
        if map.is_some() {
            fitted_map = map;
        }
    }

    Ok(ComparisonReport {
        provenance: Provenance {
            tool: concat!("histeq-rec ", env!("CARGO_PKG_VERSION")).into(),
            seed: config.seed,
            config_hash: config.hash(),
            dataset: DatasetSummary {
                n_users: ratings.n_users(),
                n_items: ratings.n_items(),
                n_observations: ratings.len(),
                levels: ratings.levels().to_vec(),
                n_train: split.train.len(),
                n_test: split.test.len(),
            },
            note: NOTE.into(),
        },
        config: config.clone(),
        equalization_map: fitted_map,
        rows,
        loss_traces,
    })
}

fn cell_error(algorithm: &str, equalized: bool, source: Error) -> Error {
    let cell = format!("{algorithm}/{}", if equalized { "equalized" } else { "raw" });
    Error::Cell { cell, source: Box::new(source) }
}

impl ComparisonReport {
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}

/// Writes `contents` next to `path` and renames it into place.
fn write_atomically(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    let result = fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(contents).and_then(|_| f.sync_all()))
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn write_report(report: &ComparisonReport, path: &Path) -> Result<()> {
    write_atomically(path, report.to_json()?.as_bytes())
}

pub fn read_report(path: &Path) -> Result<ComparisonReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Files written by [`emit_plot_data`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotFiles {
    pub metrics: PathBuf,
    pub loss: PathBuf,
}

impl PlotFiles {
    pub fn for_prefix(prefix: &Path) -> Self {
        let with = |suffix: &str| {
            let mut name = prefix.as_os_str().to_owned();
            name.push(suffix);
            PathBuf::from(name)
        };
        PlotFiles { metrics: with(".metrics.csv"), loss: with(".loss.csv") }
    }
}

/// Metric names as they appear in the long-format CSV, qualified by the
/// evaluation space of their row.
fn row_metrics(eval: &EvalReport) -> [(String, f64); 5] {
    let space = eval.eval_space.as_str();
    [
        (format!("{space}.mae"), eval.mae),
        (format!("{space}.rmse"), eval.rmse),
        (format!("{space}.exposure_gini"), eval.exposure_gini),
        (format!("{space}.popularity_corr"), eval.popularity_corr),
        (format!("{space}.tail_share"), eval.tail_share),
    ]
}

/// Writes `<prefix>.metrics.csv` (`algorithm,equalized,metric,value`) and
/// `<prefix>.loss.csv` (`algorithm,equalized,epoch,train_mse`). Values carry
/// 17 significant digits.
pub fn emit_plot_data(report: &ComparisonReport, prefix: &Path) -> Result<PlotFiles> {
    if report.rows.is_empty() {
        return Err(Error::Core(histeq_rec_core::Error::Domain("report has no rows".into())));
    }
    let files = PlotFiles::for_prefix(prefix);
    let mut metrics = String::from("algorithm,equalized,metric,value\n");
    for row in &report.rows {
        for (name, value) in row_metrics(&row.eval) {
            metrics.push_str(&format!("{},{},{},{:.16e}\n", row.algorithm.as_str(), row.equalized, name, value));
        }
    }
    let mut loss = String::from("algorithm,equalized,epoch,train_mse\n");
    for trace in &report.loss_traces {
        for (epoch, mse) in trace.train_mse.iter().enumerate() {
            loss.push_str(&format!("{},{},{},{:.16e}\n", trace.algorithm.as_str(), trace.equalized, epoch + 1, mse));
        }
    }
    write_atomically(&files.metrics, metrics.as_bytes())?;
    write_atomically(&files.loss, loss.as_bytes())?;
    Ok(files)
}
