//! Mini-batch training of the dual encoder and the logit_scale
//! initialization sweep.

mod optim;

pub use optim::{optimizer_step, OptimizerState};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ConsolidatedDataset, Splits};
use crate::error::{Error, Result};
use crate::gradcore::{Matrix, Tape};
use crate::inference;
use crate::metrics::{self, MetricReport, MetricReportDoc, ScoredPredictions};
use crate::model::{DualEncoderModel, ModelConfig, TokenizedText, Vocabulary};
use crate::par::{self, Execution};

/// Positive-class weight `p_j`: one value for all classes or one per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PosWeight {
    Uniform(f64),
    PerClass(Vec<f64>),
}

impl PosWeight {
    pub fn resolve(&self, n_classes: usize) -> Result<Vec<f64>> {
        let w = match self {
            PosWeight::Uniform(v) => vec![*v; n_classes],
            PosWeight::PerClass(v) if v.len() == n_classes => v.clone(),
            PosWeight::PerClass(v) => {
                return Err(Error::Config(format!(
                    "{} positive weights for {n_classes} classes",
                    v.len()
                )))
            }
        };
        if w.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::Config("positive weights must be > 0".into()));
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub pos_weight: PosWeight,
    pub logit_scale_init: f64,
    pub logit_scale_frozen: bool,
    /// K of the GAP@K reported per epoch, capped at the class count.
    pub gap_k: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 30,
            learning_rate: 1e-3,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            pos_weight: PosWeight::Uniform(10.0),
            logit_scale_init: crate::model::DEFAULT_LOGIT_SCALE_INIT,
            logit_scale_frozen: false,
            gap_k: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.eps > 0.0)
        {
            return Err(Error::Config("invalid optimizer constants".into()));
        }
        if self.gap_k == 0 {
            return Err(Error::Config("gap_k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation: MetricReport,
    pub logit_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReportDoc {
    pub epoch: usize,
    pub train_loss: f64,
    pub logit_scale: f64,
    pub validation: MetricReportDoc,
}

impl EpochReport {
    pub fn to_doc(&self, class_ids: &[u32]) -> EpochReportDoc {
        EpochReportDoc {
            epoch: self.epoch,
            train_loss: self.train_loss,
            logit_scale: self.logit_scale,
            validation: self.validation.to_doc(class_ids),
        }
    }
}

/// Features and labels a training run reads. Training rows use
/// `training_truth` (possibly noisy); validation uses the dataset's truth.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub dataset: &'a ConsolidatedDataset,
    pub training_truth: &'a Matrix,
    pub splits: &'a Splits,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation macro mAP (the
    /// initial model when no epoch ran).
    pub model: DualEncoderModel,
    pub vocab: Vocabulary,
    pub history: Vec<EpochReport>,
    pub best_epoch: Option<usize>,
}

impl TrainOutcome {
    pub fn best_report(&self) -> Option<&EpochReport> {
        self.best_epoch.map(|e| &self.history[e])
    }
}

pub fn label_texts(
    dataset: &ConsolidatedDataset,
    vocab: &Vocabulary,
) -> Result<Vec<TokenizedText>> {
    dataset
        .labels
        .label_texts()?
        .iter()
        .map(|t| vocab.encode(t))
        .collect()
}

/// Metrics of `model` on `rows` of the dataset against `truth`. Ranks by
/// scaled logits, which order like the probabilities but never saturate
/// into ties.
pub fn evaluate_rows(
    model: &DualEncoderModel,
    texts: &[TokenizedText],
    dataset: &ConsolidatedDataset,
    truth: &Matrix,
    rows: &[usize],
    gap_k: usize,
) -> Result<MetricReport> {
    let (features, truth) = dataset.rows(rows, truth);
    let scores = inference::scaled_logits(model, &features, texts)?;
    let k = gap_k.min(truth.cols());
    metrics::evaluate(&ScoredPredictions::new(scores, truth)?, &[k])
}

pub fn train(
    data: TrainData<'_>,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let TrainData {
        dataset,
        training_truth,
        splits,
    } = data;
    if splits.train.is_empty() {
        return Err(Error::Input("training split is empty".into()));
    }
    if training_truth.shape() != dataset.truth.shape() {
        return Err(Error::Dimension(format!(
            "training truth {:?} vs dataset truth {:?}",
            training_truth.shape(),
            dataset.truth.shape()
        )));
    }
    let corpus = dataset.labels.corpus();
    let vocab = Vocabulary::build(corpus.iter().map(String::as_str));
    let texts = label_texts(dataset, &vocab)?;
    let pos_weights = config.pos_weight.resolve(dataset.labels.len())?;

    let mut mc = model_config.clone();
    mc.d_in = dataset.features.cols();
    mc.vocab_size = vocab.len();
    mc.logit_scale_init = config.logit_scale_init;
    let mut model = DualEncoderModel::init(mc)?;
    let mut state = OptimizerState::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order = splits.train.clone();

    let mut best = model.clone();
    let mut best_epoch = None;
    let mut history: Vec<EpochReport> = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let (features, targets) = dataset.rows(batch, training_truth);
            let mut tape = Tape::new();
            let ids = model.bind(&mut tape);
            let logit_scale = model.logit_scale();
            let diverged = |message: String| Error::Diverged {
                epoch,
                batch: b,
                logit_scale,
                message,
            };
            let loss = model
                .loss(&mut tape, &ids, &features, &texts, &targets, &pos_weights)
                .map_err(|e| diverged(e.to_string()))?;
            let value = tape.value(loss)[(0, 0)];
            if !value.is_finite() {
                return Err(diverged(format!("loss {value}")));
            }
            let grads = tape.backward(loss)?.into_matrices();
            optimizer_step(&mut model, &grads, &mut state, config)
                .map_err(|e| diverged(e.to_string()))?;
            loss_sum += value * batch.len() as f64;
        }

        let validation = evaluate_rows(
            &model,
            &texts,
            dataset,
            &dataset.truth,
            &splits.val,
            config.gap_k,
        )?;
        let improved = best_epoch
            .is_none_or(|e: usize| validation.macro_map > history[e].validation.macro_map);
        history.push(EpochReport {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            validation,
            logit_scale: model.logit_scale(),
        });
        if improved {
            best = model.clone();
            best_epoch = Some(epoch);
        }
    }

    Ok(TrainOutcome {
        model: best,
        vocab,
        history,
        best_epoch,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPoint {
    pub logit_scale_init: f64,
    #[serde(default)]
    pub frozen: bool,
}

/// One row of a sweep table; metrics are those of the best validation epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub logit_scale_init: f64,
    pub frozen: bool,
    pub final_logit_scale: Option<f64>,
    pub macro_map: Option<f64>,
    pub gap_at_k: Option<f64>,
    pub best_epoch: Option<usize>,
    pub error: Option<String>,
}

/// One full training run per grid point, everything else fixed. A failing
/// cell records its error and the remaining cells still run.
pub fn temperature_sweep(
    data: TrainData<'_>,
    model_config: &ModelConfig,
    config: &TrainConfig,
    grid: &[SweepPoint],
) -> Result<Vec<SweepRow>> {
    temperature_sweep_with(data, model_config, config, grid, Execution::default())
}

pub fn temperature_sweep_with(
    data: TrainData<'_>,
    model_config: &ModelConfig,
    config: &TrainConfig,
    grid: &[SweepPoint],
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    Ok(par::map_slice(exec, grid, |point| {
        let cfg = TrainConfig {
            logit_scale_init: point.logit_scale_init,
            logit_scale_frozen: point.frozen,
            ..config.clone()
        };
        let mut row = SweepRow {
            logit_scale_init: point.logit_scale_init,
            frozen: point.frozen,
            final_logit_scale: None,
            macro_map: None,
            gap_at_k: None,
            best_epoch: None,
            error: None,
        };
        match train(data, model_config, &cfg) {
            Ok(outcome) => {
                row.final_logit_scale = Some(outcome.model.logit_scale());
                row.best_epoch = outcome.best_epoch;
                if let Some(r) = outcome.best_report() {
                    row.macro_map = Some(r.validation.macro_map);
                    row.gap_at_k = r.validation.gap_at_k.first().map(|&(_, v)| v);
                }
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    }))
}
