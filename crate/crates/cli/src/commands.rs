use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use mumic_core::data::io::{
    read_features, read_ground_truth, read_json, write_annotations, write_ground_truth, write_json,
    DatasetFiles, SplitManifest,
};
use mumic_core::data::{
    consolidate as consolidate_votes, propagate_hierarchy, stratified_split, synth_generate,
    ConsolidatedDataset, LabelSet, Splits, SynthConfig,
};
use mumic_core::gradcore::Matrix;
use mumic_core::inference::{self, ThresholdTable};
use mumic_core::metrics::{self, ScoredPredictions};
use mumic_core::model::{Checkpoint, DualEncoderModel, Vocabulary};
use mumic_core::trainer::{self, TrainData};
use serde::Serialize;

use crate::config::{self, require_files, Part};

pub struct Context {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

impl Context {
    fn load<T: serde::de::DeserializeOwned + Default>(&self) -> Result<T> {
        config::load(self.config.as_deref())
    }

    /// Creates the output directory; called after inputs are checked.
    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_model(path: &Path) -> Result<(DualEncoderModel, Vocabulary)> {
    let ckpt =
        Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    Ok(DualEncoderModel::from_checkpoint(&ckpt)?)
}

fn load_split(path: &Path, dataset: &ConsolidatedDataset) -> Result<Splits> {
    let manifest: SplitManifest = read_json(path)?;
    Ok(manifest.to_splits(&dataset.image_ids)?)
}

fn rows_of(part: Part, splits: Option<&Splits>, n: usize) -> Result<Vec<usize>> {
    let all = || (0..n).collect();
    Ok(match (part, splits) {
        (Part::All, _) => all(),
        (_, None) => bail!("part {part:?} needs a split manifest"),
        (Part::Train, Some(s)) => s.train.clone(),
        (Part::Val, Some(s)) => s.val.clone(),
        (Part::Test, Some(s)) => s.test.clone(),
    })
}

pub fn synth(ctx: &Context) -> Result<()> {
    let mut cfg: SynthConfig = ctx.load()?;
    if let Some(s) = ctx.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let out = ctx.out_dir()?;
    let data = synth_generate(&cfg)?;
    DatasetFiles {
        labels: out.join("labels.csv"),
        features: out.join("features.csv"),
        ground_truth: out.join("ground_truth.jsonl"),
    }
    .write(&data.dataset)?;
    write_annotations(&out.join("annotations.jsonl"), &data.records)?;
    if let Some(c) = &data.compositional {
        #[derive(Serialize)]
        struct Held<'a> {
            name: &'a str,
            members: [u32; 2],
            prompt: String,
            positive_image_ids: Vec<&'a str>,
        }
        let held = Held {
            name: &c.name,
            members: c.members,
            prompt: format!("{} {}", mumic_core::data::PROMPT_PREFIX, c.name),
            positive_image_ids: c
                .truth
                .iter()
                .zip(&data.dataset.image_ids)
                .filter(|&(&y, _)| y == 1.0)
                .map(|(_, id)| id.as_str())
                .collect(),
        };
        write_json(&out.join("compositional.json"), &held)?;
    }
    println!(
        "wrote {} images, {} classes to {}",
        data.dataset.len(),
        data.dataset.labels.len(),
        out.display()
    );
    Ok(())
}

pub fn consolidate(ctx: &Context) -> Result<()> {
    let cfg: config::ConsolidateConfig = ctx.load()?;
    require_files([cfg.labels.as_path(), &cfg.features, &cfg.annotations])?;
    let out = ctx.out_dir()?;
    let labels = LabelSet::read_csv(&cfg.labels)?;
    let (ids, _) = read_features(&cfg.features)?;
    let records = mumic_core::data::io::read_annotations(&cfg.annotations)?;
    let truth = propagate_hierarchy(&consolidate_votes(&ids, &records, &labels)?, &labels)?;
    write_ground_truth(&out.join("consolidated.jsonl"), &ids, &truth, &labels)?;
    let positives = truth.as_slice().iter().filter(|&&y| y == 1.0).count();
    println!(
        "{} records -> {positives} positive labels over {} images",
        records.len(),
        ids.len()
    );
    Ok(())
}

pub fn split(ctx: &Context) -> Result<()> {
    let mut cfg: config::SplitConfig = ctx.load()?;
    if let Some(s) = ctx.seed {
        cfg.ratios.seed = s;
    }
    cfg.ratios.validate()?;
    require_files(cfg.data.all())?;
    let out = ctx.out_dir()?;
    let dataset = cfg.data.files().read()?;
    let splits = stratified_split(&dataset.truth, &cfg.ratios)?;
    write_json(
        &out.join("split.json"),
        &SplitManifest::from_splits(&splits, &dataset.image_ids),
    )?;
    println!(
        "train {} / val {} / test {}",
        splits.train.len(),
        splits.val.len(),
        splits.test.len()
    );
    Ok(())
}

struct Prepared {
    cfg: config::TrainRunConfig,
    dataset: ConsolidatedDataset,
    training_truth: Matrix,
    splits: Splits,
}

impl Prepared {
    fn data(&self) -> TrainData<'_> {
        TrainData {
            dataset: &self.dataset,
            training_truth: &self.training_truth,
            splits: &self.splits,
        }
    }
}

fn prepare_training(ctx: &Context) -> Result<Prepared> {
    let mut cfg: config::TrainRunConfig = ctx.load()?;
    if let Some(s) = ctx.seed {
        cfg.model.seed = s;
        cfg.train.seed = s;
    }
    cfg.train.validate()?;
    if cfg.histogram_bins == 0 {
        bail!("histogram_bins must be at least 1");
    }
    require_files(cfg.inputs())?;
    ctx.out_dir()?;
    let dataset = cfg.data.files().read()?;
    let training_truth = match &cfg.training_truth {
        Some(p) => read_ground_truth(p, &dataset.image_ids, &dataset.labels)?,
        None => dataset.truth.clone(),
    };
    let splits = load_split(&cfg.split, &dataset)?;
    Ok(Prepared {
        cfg,
        dataset,
        training_truth,
        splits,
    })
}

pub fn train(ctx: &Context) -> Result<()> {
    let p = prepare_training(ctx)?;
    let outcome = trainer::train(p.data(), &p.cfg.model, &p.cfg.train)?;
    let class_ids = p.dataset.labels.class_ids();
    mumic_core::data::io::write_jsonl(
        &ctx.path("history.jsonl"),
        outcome.history.iter().map(|r| r.to_doc(&class_ids)),
    )?;
    outcome
        .model
        .to_checkpoint(&outcome.vocab)
        .save(&ctx.path("model.json"))?;

    let texts = trainer::label_texts(&p.dataset, &outcome.vocab)?;
    let rows = if p.splits.val.is_empty() {
        &p.splits.train
    } else {
        &p.splits.val
    };
    let (features, truth) = p.dataset.rows(rows, &p.dataset.truth);
    let logits = inference::scaled_logits(&outcome.model, &features, &texts)?;
    let bins = inference::logit_histogram(&logits, &truth, p.cfg.histogram_bins)?;
    inference::write_histogram(&ctx.path("logit_histogram.csv"), &bins)?;

    match outcome.best_report() {
        Some(best) => {
            write_json(&ctx.path("report.json"), &best.to_doc(&class_ids))?;
            println!(
                "best epoch {}: val macro mAP {:.4}, GAP {:.4}, logit_scale {:.4}",
                best.epoch, best.validation.macro_map, best.validation.gap, best.logit_scale
            );
        }
        None => println!("no epochs run; saved the initial model"),
    }
    Ok(())
}

pub fn sweep(ctx: &Context) -> Result<()> {
    let p = prepare_training(ctx)?;
    let rows = trainer::temperature_sweep(p.data(), &p.cfg.model, &p.cfg.train, &p.cfg.grid)?;
    let path = ctx.path("sweep.csv");
    let mut w =
        csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    for r in &rows {
        w.serialize(r)?;
        match (r.macro_map, &r.error) {
            (Some(m), _) => println!(
                "logit_scale_init {:.3}{}: macro mAP {m:.4}",
                r.logit_scale_init,
                if r.frozen { " (frozen)" } else { "" }
            ),
            (None, Some(e)) => println!("logit_scale_init {:.3}: failed: {e}", r.logit_scale_init),
            (None, None) => println!("logit_scale_init {:.3}: no epochs", r.logit_scale_init),
        }
    }
    w.flush()?;
    Ok(())
}

/// Scores from a predictions file aligned to the dataset; omitted entries
/// rank last.
fn scores_from_predictions(path: &Path, dataset: &ConsolidatedDataset) -> Result<Matrix> {
    let lines = inference::read_predictions(path)?;
    let rows: HashMap<&str, usize> = dataset
        .image_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut scores = Matrix::from_fn(dataset.len(), dataset.labels.len(), |_, _| {
        f64::NEG_INFINITY
    });
    for line in lines {
        let i = *rows
            .get(line.image_id.as_str())
            .with_context(|| format!("{}: unknown image {:?}", path.display(), line.image_id))?;
        for (c, s) in line.scores {
            scores[(i, dataset.labels.column(c)?)] = s;
        }
    }
    Ok(scores)
}

pub fn eval(ctx: &Context) -> Result<()> {
    let cfg: config::EvalConfig = ctx.load()?;
    let mut inputs = cfg.data.all().to_vec();
    inputs.push(cfg.predictions.as_deref().unwrap_or(&cfg.checkpoint));
    inputs.extend(cfg.split.as_deref());
    require_files(inputs)?;
    if cfg.gap_k == 0 {
        bail!("gap_k must be at least 1");
    }
    ctx.out_dir()?;
    let dataset = cfg.data.files().read()?;
    let splits = cfg
        .split
        .as_deref()
        .map(|p| load_split(p, &dataset))
        .transpose()?;
    let rows = rows_of(cfg.part, splits.as_ref(), dataset.len())?;
    let scores = match &cfg.predictions {
        Some(p) => scores_from_predictions(p, &dataset)?.select_rows(&rows),
        None => {
            let (model, vocab) = load_model(&cfg.checkpoint)?;
            let texts = trainer::label_texts(&dataset, &vocab)?;
            inference::scaled_logits(&model, &dataset.features.select_rows(&rows), &texts)?
        }
    };
    let truth = dataset.truth.select_rows(&rows);
    let k = cfg.gap_k.min(truth.cols());
    let report = metrics::evaluate(&ScoredPredictions::new(scores, truth)?, &[k])?;
    let doc = report.to_doc(&dataset.labels.class_ids());
    write_json(&ctx.path("metrics.json"), &doc)?;
    print_json(&doc)
}

fn class_texts(
    labels: &LabelSet,
    vocab: &Vocabulary,
) -> Result<Vec<mumic_core::model::TokenizedText>> {
    labels
        .label_texts()?
        .iter()
        .map(|t| Ok(vocab.encode(t)?))
        .collect()
}

pub fn predict(ctx: &Context) -> Result<()> {
    let cfg: config::PredictConfig = ctx.load()?;
    let mut inputs = vec![cfg.checkpoint.as_path(), &cfg.labels, &cfg.features];
    inputs.extend(cfg.thresholds.as_deref());
    require_files(inputs)?;
    ctx.out_dir()?;
    let (model, vocab) = load_model(&cfg.checkpoint)?;
    let labels = LabelSet::read_csv(&cfg.labels)?;
    let (ids, features) = read_features(&cfg.features)?;
    let probs = inference::predict_tokenized(&model, &features, &class_texts(&labels, &vocab)?)?;
    let class_ids = labels.class_ids();
    let thresholds = match &cfg.thresholds {
        Some(p) => {
            let table = ThresholdTable::read_csv(p)?;
            let listed: Vec<u32> = table.rows.iter().map(|r| r.class_id).collect();
            if listed != class_ids {
                bail!(
                    "{}: threshold classes {listed:?} differ from labels {class_ids:?}",
                    p.display()
                );
            }
            Some(table.thresholds())
        }
        None => None,
    };
    let lines = inference::prediction_lines(&ids, &probs, &class_ids, thresholds.as_deref())?;
    inference::write_predictions(&ctx.path("predictions.jsonl"), &lines)?;
    let kept: usize = lines.iter().map(|l| l.scores.len()).sum();
    println!(
        "{} images, {kept} of {} scores kept",
        ids.len(),
        ids.len() * class_ids.len()
    );
    Ok(())
}

pub fn zeroshot(ctx: &Context) -> Result<()> {
    let cfg: config::ZeroShotConfig = ctx.load()?;
    if cfg.prompts.is_empty() {
        bail!("no prompts given");
    }
    require_files([cfg.checkpoint.as_path(), &cfg.features])?;
    ctx.out_dir()?;
    let (model, vocab) = load_model(&cfg.checkpoint)?;
    let (ids, features) = read_features(&cfg.features)?;
    let keys: Vec<u32> = cfg.prompts.keys().copied().collect();
    let prompts: Vec<&String> = cfg.prompts.values().collect();
    let probs = inference::zero_shot(&model, &vocab, &features, &prompts)?;
    let lines = inference::prediction_lines(&ids, &probs, &keys, None)?;
    inference::write_predictions(&ctx.path("zeroshot.jsonl"), &lines)?;
    println!("scored {} prompts on {} images", keys.len(), ids.len());
    Ok(())
}

pub fn thresholds(ctx: &Context) -> Result<()> {
    let cfg: config::ThresholdsConfig = ctx.load()?;
    let mut inputs = cfg.data.all().to_vec();
    inputs.extend([cfg.checkpoint.as_path(), &cfg.split]);
    require_files(inputs)?;
    ctx.out_dir()?;
    let dataset = cfg.data.files().read()?;
    let splits = load_split(&cfg.split, &dataset)?;
    let (model, vocab) = load_model(&cfg.checkpoint)?;
    let texts = trainer::label_texts(&dataset, &vocab)?;
    let class_ids = dataset.labels.class_ids();
    if let Some(c) = cfg.per_class_recall.keys().find(|c| !class_ids.contains(c)) {
        bail!("per_class_recall names unknown class {c}");
    }
    let targets: Vec<f64> = class_ids
        .iter()
        .map(|c| {
            cfg.per_class_recall
                .get(c)
                .copied()
                .unwrap_or(cfg.target_recall)
        })
        .collect();
    let score = |rows: &[usize]| -> Result<(Matrix, Matrix)> {
        let (features, truth) = dataset.rows(rows, &dataset.truth);
        Ok((
            inference::predict_tokenized(&model, &features, &texts)?,
            truth,
        ))
    };
    let (val_scores, val_truth) = score(&splits.val)?;
    let (test_scores, test_truth) = score(&splits.test)?;
    let table = inference::select_thresholds(&val_scores, &val_truth, &class_ids, &targets)?;
    let on_test = inference::apply_thresholds(&table, &test_scores, &test_truth)?;
    table.write_csv(&ctx.path("thresholds.csv"))?;
    on_test.write_csv(&ctx.path("thresholds_test.csv"))?;

    #[derive(Serialize)]
    struct Summary {
        validation: inference::ThresholdSummary,
        test: inference::ThresholdSummary,
        undefined_classes: Vec<u32>,
    }
    let t = table.thresholds();
    let summary = Summary {
        validation: inference::threshold_summary(&t, &val_scores, &val_truth)?,
        test: inference::threshold_summary(&t, &test_scores, &test_truth)?,
        undefined_classes: table.undefined_classes(),
    };
    write_json(&ctx.path("threshold_summary.json"), &summary)?;
    print_json(&summary)
}

pub fn export_embeddings(ctx: &Context) -> Result<()> {
    let cfg: config::ExportConfig = ctx.load()?;
    require_files([cfg.checkpoint.as_path(), &cfg.features])?;
    ctx.out_dir()?;
    let (model, _) = load_model(&cfg.checkpoint)?;
    let (ids, features) = read_features(&cfg.features)?;
    let emb = inference::export_embeddings(&model, &ids, &features, &ctx.path("embeddings.csv"))?;
    println!("{} embeddings of dimension {}", emb.rows(), emb.cols());
    Ok(())
}
