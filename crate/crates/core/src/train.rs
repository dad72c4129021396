//! Trial orchestration: per-trial training, per-year RMSE and the
//! multi-trial experiment with mean and sample standard deviation.
//!
//! An experiment directory holds
//!
//! ```text
//! config.resolved.txt     every key with its effective value
//! splits/trial{i}.json    the split plan of each trial
//! <kind>/trial{i}.ckpt    trained parameters
//! <kind>/trial{i}.json    trial report plus test predictions
//! report.csv              per-year mean ± std per model
//! report.json             the same with per-trial values and provenance
//! ```
//!
//! Report files contain no timings, so reruns reproduce them byte for byte.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec;
use crate::error::{Error, Result};
use crate::graph::{
    apply_normalization, build_temporal_sample, fit_normalization, GraphFile, NormScope, TemporalGraphSample,
    TARGET_YEARS,
};
use crate::ingest::{make_splits, Dataset, SplitPlan, ThicknessRecord, MIN_USABLE_LAYERS};
use crate::kv::KeyValues;
use crate::model::{
    self, checkpoint, scaled_laplacian, AdamConfig, AdamState, Architecture, ModelInput, ModelKind, ModelParams,
};
use crate::rng::{derive_seed, keyed_rng, STREAM_DROPOUT, STREAM_INIT, STREAM_SHUFFLE, STREAM_TRIAL};
use crate::synth::persistence_baseline;

pub const DEFAULT_EPOCHS: usize = 150;
pub const DEFAULT_TRIALS: usize = 5;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
/// Row label of the persistence baseline in experiment reports.
pub const PERSISTENCE: &str = "persistence";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub kinds: Vec<ModelKind>,
    pub epochs: usize,
    pub lr: f64,
    pub dropout: f64,
    pub cheb_k: usize,
    pub hidden: usize,
    /// One untied cell per time step instead of a single shared cell.
    pub stacked: bool,
    pub seed: u64,
    pub norm_scope: NormScope,
    pub trials: usize,
    pub train_fraction: f64,
    pub min_layers: usize,
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kinds: ModelKind::ALL.to_vec(),
            epochs: DEFAULT_EPOCHS,
            lr: AdamConfig::default().lr,
            dropout: model::params::DEFAULT_DROPOUT,
            cheb_k: model::params::DEFAULT_CHEB_K,
            hidden: model::params::DEFAULT_HIDDEN,
            stacked: false,
            seed: 0,
            norm_scope: NormScope::Train,
            trials: DEFAULT_TRIALS,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            min_layers: MIN_USABLE_LAYERS,
            dataset: PathBuf::new(),
            out_dir: PathBuf::new(),
        }
    }
}

fn parse_kinds(text: &str) -> Result<Vec<ModelKind>> {
    let mut kinds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let kind: ModelKind = part.parse()?;
        if kinds.contains(&kind) {
            return Err(Error::Invalid(format!("model {kind} listed twice")));
        }
        kinds.push(kind);
    }
    if kinds.is_empty() {
        return Err(Error::Invalid("model list is empty".into()));
    }
    Ok(kinds)
}

impl TrainConfig {
    /// Parse a config file. Relative paths are resolved against `base_dir`.
    pub fn from_kv_text(text: &str, base_dir: &Path) -> Result<Self> {
        let mut kv = KeyValues::parse(text, "train config")?;
        let mut c = TrainConfig::default();
        if let Some(m) = kv.take_string("model") {
            c.kinds = parse_kinds(&m)?;
        }
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = kv.take(stringify!($field))? {
                    c.$field = v;
                }
            )*};
        }
        take!(epochs, lr, dropout, cheb_k, hidden, stacked, seed, norm_scope, trials, train_fraction, min_layers);
        let resolve = |p: String| {
            let p = PathBuf::from(p);
            if p.is_relative() {
                base_dir.join(p)
            } else {
                p
            }
        };
        c.dataset = kv
            .take_string("dataset")
            .map(resolve)
            .ok_or_else(|| Error::Invalid("train config is missing `dataset`".into()))?;
        c.out_dir = kv
            .take_string("out_dir")
            .map(resolve)
            .ok_or_else(|| Error::Invalid("train config is missing `out_dir`".into()))?;
        kv.finish()?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_kv_text(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.kinds.is_empty() {
            return bad("model list is empty".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.cheb_k == 0 || self.hidden == 0 {
            return bad("cheb_k and hidden must be at least 1".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction));
        }
        Ok(())
    }

    /// Hyperparameters only; paths are left out so the hash does not depend
    /// on where the data lives.
    pub fn hyperparameter_text(&self) -> String {
        let kinds: Vec<&str> = self.kinds.iter().map(|k| k.as_str()).collect();
        format!(
            "model = {}\nepochs = {}\nlr = {}\ndropout = {}\ncheb_k = {}\nhidden = {}\nstacked = {}\nseed = {}\n\
             norm_scope = {}\ntrials = {}\ntrain_fraction = {}\nmin_layers = {}\n",
            kinds.join(","),
            self.epochs,
            self.lr,
            self.dropout,
            self.cheb_k,
            self.hidden,
            self.stacked,
            self.seed,
            self.norm_scope,
            self.trials,
            self.train_fraction,
            self.min_layers
        )
    }

    pub fn to_kv_text(&self) -> String {
        format!(
            "{}dataset = {}\nout_dir = {}\n",
            self.hyperparameter_text(),
            self.dataset.display(),
            self.out_dir.display()
        )
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.hyperparameter_text().as_bytes())
    }

    pub fn architecture(&self, kind: ModelKind) -> Architecture {
        Architecture::standard(kind, self.cheb_k, self.hidden, self.stacked, self.dropout)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-year and pooled RMSE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rmse {
    pub per_year: Vec<f64>,
    pub total: f64,
}

/// Root mean squared error per target column over every node of every
/// sample, plus the pooled value over all entries.
pub fn evaluate_rmse(preds: &[Array2<f64>], targets: &[Array2<f64>]) -> Result<Rmse> {
    if preds.len() != targets.len() {
        return Err(Error::shape("evaluate_rmse", format!("{} samples", targets.len()), preds.len()));
    }
    if preds.is_empty() {
        return Err(Error::Invalid("evaluate_rmse needs at least one sample".into()));
    }
    let years = targets[0].ncols();
    let mut sums = vec![0.0; years];
    let mut count = 0usize;
    for (p, t) in preds.iter().zip(targets) {
        if p.dim() != t.dim() || t.ncols() != years {
            return Err(Error::shape(
                "evaluate_rmse",
                format!("{}x{years}", t.nrows()),
                format!("{}x{}", p.nrows(), p.ncols()),
            ));
        }
        for (row_p, row_t) in p.rows().into_iter().zip(t.rows()) {
            for y in 0..years {
                let e = row_p[y] - row_t[y];
                sums[y] += e * e;
            }
        }
        count += t.nrows();
    }
    let n = count as f64;
    let per_year = sums.iter().map(|s| (s / n).sqrt()).collect();
    let total = (sums.iter().sum::<f64>() / (n * years as f64)).sqrt();
    Ok(Rmse { per_year, total })
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// A normalized sample paired with its model-ready inputs.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub segment_id: String,
    pub normalized: TemporalGraphSample,
    pub laplacian: Array2<f64>,
    pub targets: Array2<f64>,
}

impl PreparedSample {
    pub fn new(normalized: TemporalGraphSample) -> Result<Self> {
        let laplacian = scaled_laplacian(&normalized.adjacency)?.matrix;
        Ok(PreparedSample {
            segment_id: normalized.segment_id.clone(),
            targets: normalized.targets.clone(),
            laplacian,
            normalized,
        })
    }

    pub fn input(&self, kind: ModelKind) -> ModelInput {
        match kind {
            ModelKind::GcnLstm => ModelInput {
                frames: self.normalized.frames.clone(),
                laplacian: Some(self.laplacian.clone()),
            },
            ModelKind::Lstm => ModelInput {
                frames: self.normalized.frames.clone(),
                laplacian: None,
            },
            ModelKind::Gcn => ModelInput {
                frames: vec![crate::graph::StaticGraphSample::from(&self.normalized).features],
                laplacian: Some(self.laplacian.clone()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub model: ModelKind,
    pub trial_index: usize,
    pub seed: u64,
    pub epochs: usize,
    pub years: Vec<i32>,
    /// Test-set RMSE per target year, oldest first, in pixels.
    pub per_year_rmse: Vec<f64>,
    pub total_rmse: f64,
    /// RMSE of the final model on its own training samples.
    pub train_rmse: f64,
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub parameter_count: usize,
    pub parameter_hash: String,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Predictions of one test sample, `N x 5`, oldest year first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub segment_id: String,
    pub predicted: Vec<Vec<f64>>,
    pub truth: Vec<Vec<f64>>,
}

/// Everything `report --trial` needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFile {
    pub report: TrialReport,
    pub predictions: Vec<SamplePrediction>,
}

impl TrialFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        codec::write_atomic(path, &json_bytes(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&codec::read_file(path)?)?)
    }
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub params: ModelParams,
    pub file: TrialFile,
}

pub fn predict_all(params: &ModelParams, samples: &[PreparedSample]) -> Result<Vec<Array2<f64>>> {
    samples.iter().map(|s| model::predict(params, &s.input(params.arch.kind))).collect()
}

/// Train one model from its seeded initialization and evaluate it on the
/// test samples with dropout off.
pub fn run_trial(
    config: &TrainConfig,
    kind: ModelKind,
    trial_index: usize,
    trial_seed: u64,
    first_target_year: i32,
    train: &[PreparedSample],
    test: &[PreparedSample],
) -> Result<TrialOutcome> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Invalid("a trial needs at least one training and one test sample".into()));
    }
    let started = Instant::now();
    let arch = config.architecture(kind);
    let mut init_rng = keyed_rng(trial_seed, &[STREAM_INIT, u64::from(kind.code())]);
    let mut params = ModelParams::init(arch, &mut init_rng)?;
    let mut adam = AdamState::new(
        &params,
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
    );
    let train_inputs: Vec<ModelInput> = train.iter().map(|s| s.input(kind)).collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut shuffle_rng = keyed_rng(trial_seed, &[STREAM_SHUFFLE, epoch as u64]);
        order.sort_unstable();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (position, &i) in order.iter().enumerate() {
            let mut dropout_rng = keyed_rng(trial_seed, &[STREAM_DROPOUT, epoch as u64, position as u64]);
            let (loss, _, grads) =
                model::loss_and_gradients(&params, &train_inputs[i], &train[i].targets, Some(&mut dropout_rng))?;
            if !loss.is_finite() {
                return Err(Error::DivergedTraining {
                    epoch,
                    sample: i,
                    loss,
                });
            }
            adam.update(&mut params, &grads);
            loss_sum += loss;
        }
        let mean = loss_sum / train.len() as f64;
        log::debug!("{kind} trial {trial_index} epoch {epoch}: loss {mean:.6}");
        epoch_losses.push(mean);
    }

    let train_targets: Vec<Array2<f64>> = train.iter().map(|s| s.targets.clone()).collect();
    let train_rmse = evaluate_rmse(&predict_all(&params, train)?, &train_targets)?.total;
    let preds = predict_all(&params, test)?;
    let targets: Vec<Array2<f64>> = test.iter().map(|s| s.targets.clone()).collect();
    let rmse = evaluate_rmse(&preds, &targets)?;
    let years = (0..TARGET_YEARS as i32).map(|y| first_target_year + y).collect();
    let report = TrialReport {
        model: kind,
        trial_index,
        seed: trial_seed,
        epochs: config.epochs,
        years,
        per_year_rmse: rmse.per_year,
        total_rmse: rmse.total,
        train_rmse,
        epoch_losses,
        parameter_count: params.parameter_count(),
        parameter_hash: params.fingerprint(),
        wall_time: started.elapsed(),
    };
    let predictions = test
        .iter()
        .zip(&preds)
        .map(|(s, p)| SamplePrediction {
            segment_id: s.segment_id.clone(),
            predicted: rows(p),
            truth: rows(&s.targets),
        })
        .collect();
    Ok(TrialOutcome {
        params,
        file: TrialFile { report, predictions },
    })
}

/// Build, normalize and order the samples of one split: training samples
/// first, then test samples, each in plan order.
pub fn build_split_graphs(
    records: &[ThicknessRecord],
    plan: &SplitPlan,
    scope: NormScope,
    first_target_year: i32,
) -> Result<GraphFile> {
    let by_id: HashMap<&str, &ThicknessRecord> = records.iter().map(|r| (r.segment_id.as_str(), r)).collect();
    let lookup = |id: &String| {
        by_id
            .get(id.as_str())
            .copied()
            .ok_or_else(|| Error::Invalid(format!("split references unknown segment {id}")))
            .and_then(build_temporal_sample)
    };
    let train = plan.train_ids.iter().map(lookup).collect::<Result<Vec<_>>>()?;
    let test = plan.test_ids.iter().map(lookup).collect::<Result<Vec<_>>>()?;
    let fitted_on = format!("{scope}:trial{}", plan.trial_index);
    let stats = match scope {
        NormScope::Train => fit_normalization(&train, fitted_on)?,
        NormScope::All => {
            let all: Vec<_> = train.iter().chain(&test).cloned().collect();
            fit_normalization(&all, fitted_on)?
        }
    };
    let samples = train
        .iter()
        .chain(&test)
        .map(|s| apply_normalization(s, &stats))
        .collect::<Result<Vec<_>>>()?;
    Ok(GraphFile {
        stats,
        train_count: train.len(),
        first_target_year,
        samples,
    })
}

/// Aggregate of one model (or the persistence baseline) over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub trials: Vec<usize>,
    pub per_year_rmse: Vec<Vec<f64>>,
    pub total_rmse: Vec<f64>,
    pub per_year_mean: Vec<f64>,
    pub per_year_std: Vec<f64>,
    pub total_mean: f64,
    pub total_std: f64,
}

impl ModelSummary {
    pub fn from_trials(model: &str, trials: &[(usize, Rmse)]) -> Self {
        let years = trials.first().map_or(TARGET_YEARS, |(_, r)| r.per_year.len());
        let (per_year_mean, per_year_std) = (0..years)
            .map(|y| mean_std(&trials.iter().map(|(_, r)| r.per_year[y]).collect::<Vec<_>>()))
            .unzip();
        let totals: Vec<f64> = trials.iter().map(|(_, r)| r.total).collect();
        let (total_mean, total_std) = mean_std(&totals);
        ModelSummary {
            model: model.to_owned(),
            trials: trials.iter().map(|(i, _)| *i).collect(),
            per_year_rmse: trials.iter().map(|(_, r)| r.per_year.clone()).collect(),
            total_rmse: totals,
            per_year_mean,
            per_year_std,
            total_mean,
            total_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub model: String,
    pub trial_index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub config_hash: String,
    pub dataset_hash: String,
    pub config: BTreeMap<String, String>,
    pub usable_records: usize,
    pub years: Vec<i32>,
    pub models: Vec<ModelSummary>,
    pub failures: Vec<TrialFailure>,
}

fn fmt_cell(mean: f64, std: f64) -> String {
    format!("{mean:.3} ± {std:.3}")
}

impl ExperimentReport {
    pub fn model(&self, name: &str) -> Option<&ModelSummary> {
        self.models.iter().find(|m| m.model == name)
    }

    /// Per-year table, one row per model, cells `mean ± std` in pixels.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model");
        for y in &self.years {
            let _ = write!(out, ",{y}");
        }
        out.push_str(",total,trials\n");
        for m in &self.models {
            out.push_str(&m.model);
            for (mean, std) in m.per_year_mean.iter().zip(&m.per_year_std) {
                let _ = write!(out, ",{}", fmt_cell(*mean, *std));
            }
            let _ = writeln!(out, ",{},{}", fmt_cell(m.total_mean, m.total_std), m.trials.len());
        }
        out
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        json_bytes(self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&codec::read_file(path)?)?)
    }
}

/// Trial seed shared by every model kind of that trial.
pub fn trial_seed(seed: u64, trial_index: usize) -> u64 {
    derive_seed(seed, &[STREAM_TRIAL, trial_index as u64])
}

/// Run every configured model on every trial split and write the experiment
/// directory. A failing trial does not stop the others; its error is listed
/// in the report, which is still written, and the first such error is
/// returned.
pub fn run_experiment(config: &TrainConfig, dataset: &Dataset) -> Result<ExperimentReport> {
    config.validate()?;
    let records: Vec<ThicknessRecord> = dataset
        .thickness_records()?
        .into_iter()
        .filter(|r| r.layer_count() >= config.min_layers.max(MIN_USABLE_LAYERS))
        .collect();
    let ids: Vec<&str> = records.iter().map(|r| r.segment_id.as_str()).collect();
    let plans = make_splits(&ids, config.trials, config.train_fraction, config.seed)?;
    let first_target_year = dataset.surface_year - TARGET_YEARS as i32;
    let out = &config.out_dir;
    std::fs::create_dir_all(out.join("splits")).map_err(|e| Error::io(out, e))?;
    for kind in &config.kinds {
        let dir = out.join(kind.as_str());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    codec::write_atomic(&out.join("config.resolved.txt"), config.to_kv_text().as_bytes())?;
    log::info!("config hash {}, {} usable records", config.hash(), records.len());

    let mut results: BTreeMap<String, Vec<(usize, Rmse)>> = BTreeMap::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for plan in &plans {
        plan.save(&out.join("splits").join(format!("trial{}.json", plan.trial_index)))?;
        let seed = trial_seed(config.seed, plan.trial_index);
        log::info!("trial {} seed {seed}: {} train, {} test", plan.trial_index, plan.train_ids.len(), plan.test_ids.len());
        let graphs = build_split_graphs(&records, plan, config.norm_scope, first_target_year)?;
        let prepared = graphs
            .samples
            .into_iter()
            .map(PreparedSample::new)
            .collect::<Result<Vec<_>>>()?;
        let (train, test) = prepared.split_at(graphs.train_count);

        let raw_test: Vec<TemporalGraphSample> = plan
            .test_ids
            .iter()
            .map(|id| {
                let r = records.iter().find(|r| &r.segment_id == id).expect("split ids come from records");
                build_temporal_sample(r)
            })
            .collect::<Result<_>>()?;
        let baseline: Vec<Array2<f64>> = raw_test.iter().map(persistence_baseline).collect();
        let truth: Vec<Array2<f64>> = raw_test.iter().map(|s| s.targets.clone()).collect();
        results
            .entry(PERSISTENCE.to_owned())
            .or_default()
            .push((plan.trial_index, evaluate_rmse(&baseline, &truth)?));

        for &kind in &config.kinds {
            match run_trial(config, kind, plan.trial_index, seed, first_target_year, train, test) {
                Ok(outcome) => {
                    let dir = out.join(kind.as_str());
                    checkpoint::save(&outcome.params, &dir.join(format!("trial{}.ckpt", plan.trial_index)))?;
                    outcome.file.save(&dir.join(format!("trial{}.json", plan.trial_index)))?;
                    let r = &outcome.file.report;
                    log::info!(
                        "{kind} trial {}: total RMSE {:.3} px ({:.1?})",
                        plan.trial_index,
                        r.total_rmse,
                        r.wall_time
                    );
                    results.entry(kind.as_str().to_owned()).or_default().push((
                        plan.trial_index,
                        Rmse {
                            per_year: r.per_year_rmse.clone(),
                            total: r.total_rmse,
                        },
                    ));
                }
                Err(e) => {
                    log::error!("{kind} trial {} failed: {e}", plan.trial_index);
                    failures.push(TrialFailure {
                        model: kind.as_str().to_owned(),
                        trial_index: plan.trial_index,
                        error: e.to_string(),
                    });
                    first_error.get_or_insert(e);
                }
            }
        }
    }

    let mut models: Vec<ModelSummary> = config
        .kinds
        .iter()
        .filter_map(|k| results.get(k.as_str()).map(|r| ModelSummary::from_trials(k.as_str(), r)))
        .collect();
    if let Some(r) = results.get(PERSISTENCE) {
        models.push(ModelSummary::from_trials(PERSISTENCE, r));
    }
    let config_map = config
        .hyperparameter_text()
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect();
    let report = ExperimentReport {
        version: env!("CARGO_PKG_VERSION").to_owned(),
        config_hash: config.hash(),
        dataset_hash: sha256_hex(&dataset.to_bytes()?),
        config: config_map,
        usable_records: records.len(),
        years: (0..TARGET_YEARS as i32).map(|y| first_target_year + y).collect(),
        models,
        failures,
    };
    codec::write_atomic(&out.join("report.csv"), report.to_csv().as_bytes())?;
    codec::write_atomic(&out.join("report.json"), &report.to_json()?)?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rmse_examples() {
        let t = Array2::from_elem((4, 5), 2.0);
        let r = evaluate_rmse(&[t.clone()], &[t.clone()]).unwrap();
        assert_eq!(r.per_year, vec![0.0; 5]);
        assert_eq!(r.total, 0.0);

        let mut p = t.clone();
        p.column_mut(0).mapv_inplace(|v| v + 3.0);
        let r = evaluate_rmse(&[p], &[t]).unwrap();
        assert_eq!(r.per_year, vec![3.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((r.total - 3.0 / 5f64.sqrt()).abs() < 1e-15);

        let r = evaluate_rmse(&[array![[1.0], [2.0]]], &[array![[0.0], [0.0]]]).unwrap();
        assert!((r.per_year[0] - 2.5f64.sqrt()).abs() < 1e-15);
        assert!(evaluate_rmse(&[array![[1.0]]], &[array![[1.0, 2.0]]]).is_err());
    }

    #[test]
    fn sample_std() {
        assert_eq!(mean_std(&[4.0; 5]), (4.0, 0.0));
        let (m, s) = mean_std(&[4.0, 5.0, 6.0, 5.0, 4.0]);
        assert!((m - 4.8).abs() < 1e-12);
        assert!((s - 0.836_660_026_534_075_6).abs() < 1e-12);
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn config_parsing() {
        let c = TrainConfig::from_kv_text(
            "model = gcn_lstm, lstm\nepochs = 3\ndataset = d.fgds\nout_dir = /tmp/x\nnorm_scope = all",
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(c.kinds, vec![ModelKind::GcnLstm, ModelKind::Lstm]);
        assert_eq!(c.epochs, 3);
        assert_eq!(c.dataset, PathBuf::from("/base/d.fgds"));
        assert_eq!(c.out_dir, PathBuf::from("/tmp/x"));
        assert_eq!(c.norm_scope, NormScope::All);
        let again = TrainConfig::from_kv_text(&c.to_kv_text(), Path::new("/elsewhere")).unwrap();
        assert_eq!(again, c);

        assert!(TrainConfig::from_kv_text("epochs = 3\nout_dir = x", Path::new(".")).is_err());
        assert!(TrainConfig::from_kv_text("dataset = d\nout_dir = x\nlearning_rate = 1", Path::new(".")).is_err());
        assert!(TrainConfig::from_kv_text("dataset = d\nout_dir = x\nmodel = rnn", Path::new(".")).is_err());
    }

    #[test]
    fn csv_layout() {
        let summary = ModelSummary::from_trials(
            "gcn_lstm",
            &[
                (0, Rmse { per_year: vec![1.0; 5], total: 4.0 }),
                (1, Rmse { per_year: vec![2.0; 5], total: 5.0 }),
            ],
        );
        let report = ExperimentReport {
            version: "0".into(),
            config_hash: String::new(),
            dataset_hash: String::new(),
            config: BTreeMap::new(),
            usable_records: 2,
            years: (2007..2012).collect(),
            models: vec![summary],
            failures: vec![],
        };
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("model,2007,2008,2009,2010,2011,total,trials"));
        assert_eq!(
            lines.next(),
            Some("gcn_lstm,1.500 ± 0.707,1.500 ± 0.707,1.500 ± 0.707,1.500 ± 0.707,1.500 ± 0.707,4.500 ± 0.707,2")
        );
    }
}
