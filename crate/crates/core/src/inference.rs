//! Scoring with a trained model: probabilities, zero-shot prompts, the
//! pair-prompt baseline, per-class thresholds and embedding export.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::io::{read_jsonl, write_jsonl};
use crate::error::{Error, Result};
use crate::gradcore::{dot, l2_norm, Matrix};
use crate::loss::fused::sigmoid;
use crate::model::{DualEncoderModel, TokenizedText, Vocabulary};

/// Scaled similarity logits `raw · exp(logit_scale)` of every image against
/// every text.
pub fn scaled_logits(
    model: &DualEncoderModel,
    features: &Matrix,
    texts: &[TokenizedText],
) -> Result<Matrix> {
    if texts.is_empty() {
        return Err(Error::Input("no label texts to score".into()));
    }
    let img = model.encode_images(features)?;
    let txt = model.encode_texts(texts)?;
    Ok(model.similarity(&img, &txt)?.scaled)
}

pub fn predict_tokenized(
    model: &DualEncoderModel,
    features: &Matrix,
    texts: &[TokenizedText],
) -> Result<Matrix> {
    Ok(scaled_logits(model, features, texts)?.map(sigmoid))
}

/// Probabilities `σ(raw · exp(logit_scale))`; unknown words in the prompts
/// map to the unknown token.
pub fn predict<S: AsRef<str>>(
    model: &DualEncoderModel,
    vocab: &Vocabulary,
    features: &Matrix,
    prompts: &[S],
) -> Result<Matrix> {
    let texts = prompts
        .iter()
        .map(|p| vocab.encode(p.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    predict_tokenized(model, features, &texts)
}

/// Scores unseen prompts. A prompt made only of unknown words is an error.
pub fn zero_shot<S: AsRef<str>>(
    model: &DualEncoderModel,
    vocab: &Vocabulary,
    features: &Matrix,
    prompts: &[S],
) -> Result<Matrix> {
    let texts = prompts
        .iter()
        .map(|p| vocab.encode_known(p.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    predict_tokenized(model, features, &texts)
}

pub const BASELINE_NEGATIVE_PROMPT: &str = "a photo";

/// Second component of a two-way softmax, `exp(b) / (exp(a) + exp(b))`.
pub fn pair_probability(a: f64, b: f64) -> f64 {
    sigmoid(b - a)
}

/// Per class, softmax over the prompts ("a photo", "a photo of {name}") and
/// keep the probability of the second.
pub fn clip_pair_baseline<S: AsRef<str>>(
    model: &DualEncoderModel,
    vocab: &Vocabulary,
    features: &Matrix,
    class_names: &[S],
) -> Result<Matrix> {
    if class_names.is_empty() {
        return Err(Error::Input("no class names".into()));
    }
    let mut texts = vec![vocab.encode(BASELINE_NEGATIVE_PROMPT)?];
    for name in class_names {
        texts.push(vocab.encode(&format!("a photo of {}", name.as_ref()))?);
    }
    let logits = scaled_logits(model, features, &texts)?;
    Ok(Matrix::from_fn(
        features.rows(),
        class_names.len(),
        |i, j| pair_probability(logits[(i, 0)], logits[(i, j + 1)]),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub class_id: u32,
    /// Predictions with `score >= threshold` are kept. `None` when the
    /// class has no positives in the reference split.
    pub threshold: Option<f64>,
    pub recall: Option<f64>,
    pub drop_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    pub rows: Vec<ThresholdRow>,
}

impl ThresholdTable {
    pub fn thresholds(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.threshold).collect()
    }

    pub fn undefined_classes(&self) -> Vec<u32> {
        self.rows
            .iter()
            .filter(|r| r.threshold.is_none())
            .map(|r| r.class_id)
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        w.write_record(["class_id", "threshold", "recall", "drop_fraction"])?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        for r in &self.rows {
            w.write_record([
                r.class_id.to_string(),
                opt(r.threshold),
                opt(r.recall),
                r.drop_fraction.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        let mut rows = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: k + 2,
                message,
            };
            if rec.len() != 4 {
                return Err(bad(format!("{} fields, expected 4", rec.len())));
            }
            let num = |s: &str| -> Result<f64> {
                s.trim()
                    .parse()
                    .map_err(|_| bad(format!("not a number: {s:?}")))
            };
            let opt = |s: &str| -> Result<Option<f64>> {
                if s.trim().is_empty() {
                    Ok(None)
                } else {
                    num(s).map(Some)
                }
            };
            rows.push(ThresholdRow {
                class_id: rec[0]
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("bad class id {:?}", &rec[0])))?,
                threshold: opt(&rec[1])?,
                recall: opt(&rec[2])?,
                drop_fraction: num(&rec[3])?,
            });
        }
        Ok(Self { rows })
    }
}

/// Per class, the largest threshold that keeps at least `target_recall[j]`
/// of the class's positives.
pub fn select_thresholds(
    scores: &Matrix,
    truth: &Matrix,
    class_ids: &[u32],
    target_recall: &[f64],
) -> Result<ThresholdTable> {
    let l = scores.cols();
    if truth.shape() != scores.shape() || class_ids.len() != l || target_recall.len() != l {
        return Err(Error::Dimension(format!(
            "scores {:?}, truth {:?}, {} class ids, {} targets",
            scores.shape(),
            truth.shape(),
            class_ids.len(),
            target_recall.len()
        )));
    }
    if let Some(t) = target_recall.iter().find(|&&t| !(t > 0.0 && t <= 1.0)) {
        return Err(Error::Config(format!("target recall {t} outside (0, 1]")));
    }
    let rows = (0..l)
        .map(|j| {
            let col = scores.column(j);
            let mut pos: Vec<f64> = (0..col.len())
                .filter(|&i| truth[(i, j)] == 1.0)
                .map(|i| col[i])
                .collect();
            let threshold = if pos.is_empty() {
                None
            } else {
                pos.sort_by(|a, b| b.total_cmp(a));
                let np = pos.len();
                let k = (1..=np)
                    .find(|&k| k as f64 / np as f64 >= target_recall[j])
                    .unwrap_or(np);
                Some(pos[k - 1])
            };
            threshold_row(class_ids[j], threshold, &col, &truth.column(j))
        })
        .collect();
    Ok(ThresholdTable { rows })
}

fn threshold_row(
    class_id: u32,
    threshold: Option<f64>,
    scores: &[f64],
    truth: &[f64],
) -> ThresholdRow {
    let Some(t) = threshold else {
        return ThresholdRow {
            class_id,
            threshold: None,
            recall: None,
            drop_fraction: 0.0,
        };
    };
    let np = truth.iter().filter(|&&y| y == 1.0).count();
    let kept_pos = scores
        .iter()
        .zip(truth)
        .filter(|&(&s, &y)| y == 1.0 && s >= t)
        .count();
    let dropped = scores.iter().filter(|&&s| s < t).count();
    ThresholdRow {
        class_id,
        threshold: Some(t),
        recall: (np > 0).then(|| kept_pos as f64 / np as f64),
        drop_fraction: if scores.is_empty() {
            0.0
        } else {
            dropped as f64 / scores.len() as f64
        },
    }
}

/// Recall and drop fraction of fixed thresholds on another split.
pub fn apply_thresholds(
    table: &ThresholdTable,
    scores: &Matrix,
    truth: &Matrix,
) -> Result<ThresholdTable> {
    if truth.shape() != scores.shape() || table.rows.len() != scores.cols() {
        return Err(Error::Dimension(format!(
            "{} thresholds for scores {:?} and truth {:?}",
            table.rows.len(),
            scores.shape(),
            truth.shape()
        )));
    }
    let rows = table
        .rows
        .iter()
        .enumerate()
        .map(|(j, r)| threshold_row(r.class_id, r.threshold, &scores.column(j), &truth.column(j)))
        .collect();
    Ok(ThresholdTable { rows })
}

/// Overall effect of per-class thresholds: recall over all positives and
/// the fraction of all (image, class) entries below their threshold.
/// Classes without a threshold keep everything.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub recall: f64,
    pub drop_fraction: f64,
}

pub fn threshold_summary(
    thresholds: &[Option<f64>],
    scores: &Matrix,
    truth: &Matrix,
) -> Result<ThresholdSummary> {
    if truth.shape() != scores.shape() || thresholds.len() != scores.cols() {
        return Err(Error::Dimension("thresholds do not match scores".into()));
    }
    let (mut np, mut kept_pos, mut dropped) = (0usize, 0usize, 0usize);
    for i in 0..scores.rows() {
        for (j, t) in thresholds.iter().enumerate() {
            let keep = t.is_none_or(|t| scores[(i, j)] >= t);
            if truth[(i, j)] == 1.0 {
                np += 1;
                kept_pos += usize::from(keep);
            }
            dropped += usize::from(!keep);
        }
    }
    let total = scores.len();
    Ok(ThresholdSummary {
        recall: if np == 0 {
            1.0
        } else {
            kept_pos as f64 / np as f64
        },
        drop_fraction: if total == 0 {
            0.0
        } else {
            dropped as f64 / total as f64
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionLine {
    pub image_id: String,
    pub scores: BTreeMap<u32, f64>,
}

/// One line per image. With thresholds, entries below their class
/// threshold are left out.
pub fn prediction_lines(
    image_ids: &[String],
    probabilities: &Matrix,
    class_ids: &[u32],
    thresholds: Option<&[Option<f64>]>,
) -> Result<Vec<PredictionLine>> {
    if image_ids.len() != probabilities.rows() || class_ids.len() != probabilities.cols() {
        return Err(Error::Dimension(format!(
            "{} images and {} classes for probabilities {:?}",
            image_ids.len(),
            class_ids.len(),
            probabilities.shape()
        )));
    }
    if thresholds.is_some_and(|t| t.len() != class_ids.len()) {
        return Err(Error::Dimension("one threshold per class expected".into()));
    }
    Ok(image_ids
        .iter()
        .enumerate()
        .map(|(i, id)| PredictionLine {
            image_id: id.clone(),
            scores: class_ids
                .iter()
                .enumerate()
                .filter(|&(j, _)| {
                    thresholds
                        .and_then(|t| t[j])
                        .is_none_or(|t| probabilities[(i, j)] >= t)
                })
                .map(|(j, &c)| (c, probabilities[(i, j)]))
                .collect(),
        })
        .collect())
}

pub fn write_predictions(path: &Path, lines: &[PredictionLine]) -> Result<()> {
    write_jsonl(path, lines)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionLine>> {
    read_jsonl(path)
}

pub fn write_embeddings(path: &Path, image_ids: &[String], embeddings: &Matrix) -> Result<()> {
    if image_ids.len() != embeddings.rows() {
        return Err(Error::Dimension(format!(
            "{} ids for {} embeddings",
            image_ids.len(),
            embeddings.rows()
        )));
    }
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let mut header = vec!["image_id".to_string()];
    header.extend((0..embeddings.cols()).map(|k| format!("e{k}")));
    w.write_record(&header)?;
    for (i, id) in image_ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(embeddings.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: &Path) -> Result<(Vec<String>, Matrix)> {
    crate::data::io::read_features(path)
}

/// Unit-norm image embeddings written as `image_id,e0,...`.
pub fn export_embeddings(
    model: &DualEncoderModel,
    image_ids: &[String],
    features: &Matrix,
    path: &Path,
) -> Result<Matrix> {
    let emb = model.encode_images(features)?;
    write_embeddings(path, image_ids, &emb)?;
    Ok(emb)
}

/// Mean cosine of class members to their normalized class centroid versus
/// the same for non-members, averaged over classes with at least one member
/// and one non-member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSeparation {
    pub intra: f64,
    pub inter: f64,
}

pub fn embedding_separation(embeddings: &Matrix, truth: &Matrix) -> Result<EmbeddingSeparation> {
    if embeddings.rows() != truth.rows() {
        return Err(Error::Dimension(
            "embeddings and truth differ in rows".into(),
        ));
    }
    let d = embeddings.cols();
    let (mut intra, mut inter, mut classes) = (0.0, 0.0, 0usize);
    for j in 0..truth.cols() {
        let members: Vec<usize> = (0..truth.rows())
            .filter(|&i| truth[(i, j)] == 1.0)
            .collect();
        if members.is_empty() || members.len() == truth.rows() {
            continue;
        }
        let mut c = vec![0.0; d];
        for &i in &members {
            c.iter_mut()
                .zip(embeddings.row(i))
                .for_each(|(a, b)| *a += b);
        }
        let n = l2_norm(&c);
        if n == 0.0 {
            continue;
        }
        c.iter_mut().for_each(|v| *v /= n);
        let (mut sm, mut so, mut nm) = (0.0, 0.0, 0usize);
        for i in 0..truth.rows() {
            let cos = dot(embeddings.row(i), &c);
            if truth[(i, j)] == 1.0 {
                sm += cos;
                nm += 1;
            } else {
                so += cos;
            }
        }
        intra += sm / nm as f64;
        inter += so / (truth.rows() - nm) as f64;
        classes += 1;
    }
    if classes == 0 {
        return Err(Error::Undefined(
            "no class has both members and non-members".into(),
        ));
    }
    Ok(EmbeddingSeparation {
        intra: intra / classes as f64,
        inter: inter / classes as f64,
    })
}

/// Counts of scaled logits per bin, split by ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// `bins` equal-width bins spanning the observed logit range.
pub fn logit_histogram(logits: &Matrix, truth: &Matrix, bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 || logits.shape() != truth.shape() || logits.is_empty() {
        return Err(Error::Input(
            "histogram needs bins > 0 and matching, non-empty inputs".into(),
        ));
    }
    let lo = logits
        .as_slice()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let hi = logits
        .as_slice()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo {
        (hi - lo) / bins as f64
    } else {
        1.0
    };
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            lower: lo + b as f64 * width,
            upper: if b + 1 == bins {
                hi.max(lo + width)
            } else {
                lo + (b + 1) as f64 * width
            },
            positives: 0,
            negatives: 0,
        })
        .collect();
    for (&z, &y) in logits.as_slice().iter().zip(truth.as_slice()) {
        let b = (((z - lo) / width) as usize).min(bins - 1);
        if y == 1.0 {
            out[b].positives += 1;
        } else {
            out[b].negatives += 1;
        }
    }
    Ok(out)
}

pub fn write_histogram(path: &Path, bins: &[HistogramBin]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    for b in bins {
        w.serialize(b)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn setup() -> (DualEncoderModel, Vocabulary, Matrix) {
        let vocab = Vocabulary::build([
            "a photo with pool",
            "a photo with beach",
            "a photo with bed near pool",
        ]);
        let model = DualEncoderModel::init(ModelConfig {
            d_in: 5,
            d_i: 6,
            d_t: 6,
            d_e: 4,
            vocab_size: vocab.len(),
            seed: 3,
            ..ModelConfig::default()
        })
        .unwrap();
        let x = Matrix::from_fn(8, 5, |i, j| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
        (model, vocab, x)
    }

    #[test]
    fn sigmoid_of_zero_and_saturation() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(1.0 - sigmoid(100.0) < 1e-15);
    }

    #[test]
    fn batch_equals_single_rows() {
        let (m, v, x) = setup();
        let prompts = ["a photo with pool", "a photo with beach"];
        let all = predict(&m, &v, &x, &prompts).unwrap();
        for i in 0..x.rows() {
            let one = predict(&m, &v, &x.select_rows(&[i]), &prompts).unwrap();
            assert_eq!(one.row(0), all.row(i));
        }
        assert!(all.as_slice().iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn zero_shot_reproduces_trained_column_and_rejects_oov() {
        let (m, v, x) = setup();
        let trained = predict(&m, &v, &x, &["a photo with pool", "a photo with beach"]).unwrap();
        let zs = zero_shot(&m, &v, &x, &["a photo with beach"]).unwrap();
        assert_eq!(zs.column(0), trained.column(1));
        let perm = zero_shot(&m, &v, &x, &["bed near pool with a photo"]).unwrap();
        let orig = zero_shot(&m, &v, &x, &["a photo with bed near pool"]).unwrap();
        assert_eq!(perm, orig);
        match zero_shot(&m, &v, &x, &["volcano glacier"]) {
            Err(Error::OutOfVocabulary(p)) => assert_eq!(p, "volcano glacier"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pair_probability_is_softmax() {
        assert_eq!(pair_probability(1.3, 1.3), 0.5);
        assert!(1.0 - pair_probability(0.0, 20.0) < 1e-8);
        for &(a, b) in &[(0.3f64, -1.2f64), (5.0, 7.5), (-30.0, 2.0)] {
            let explicit = b.exp() / (a.exp() + b.exp());
            assert!((pair_probability(a, b) - explicit).abs() < 1e-12);
            assert!((pair_probability(a + 17.0, b + 17.0) - pair_probability(a, b)).abs() < 1e-12);
        }
        let (m, v, x) = setup();
        let p = clip_pair_baseline(&m, &v, &x, &["pool", "beach"]).unwrap();
        assert_eq!(p.shape(), (8, 2));
        assert!(p.as_slice().iter().all(|&q| q > 0.0 && q < 1.0));
        assert!(clip_pair_baseline::<&str>(&m, &v, &x, &[]).is_err());
    }

    #[test]
    fn thresholds_full_recall_and_separated() {
        let scores = Matrix::from_rows(&[
            vec![0.9, 0.1],
            vec![0.8, 0.7],
            vec![0.2, 0.6],
            vec![0.1, 0.2],
        ])
        .unwrap();
        let truth = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            vec![0.0, 0.0],
        ])
        .unwrap();
        let t = select_thresholds(&scores, &truth, &[4, 9], &[1.0, 1.0]).unwrap();
        assert_eq!(t.rows[0].threshold, Some(0.8));
        assert_eq!(t.rows[0].recall, Some(1.0));
        assert_eq!(t.rows[0].drop_fraction, 0.5);
        assert_eq!(t.rows[1].threshold, Some(0.7));
        assert_eq!(t.rows[1].drop_fraction, 0.75);
        let s = threshold_summary(&t.thresholds(), &scores, &truth).unwrap();
        assert_eq!(s.recall, 1.0);
        assert_eq!(s.drop_fraction, 5.0 / 8.0);
    }

    #[test]
    fn thresholds_monotone_and_undefined() {
        let scores = Matrix::from_fn(10, 2, |i, j| ((i * 13 + j * 5) % 10) as f64 / 10.0);
        let truth = Matrix::from_fn(10, 2, |i, j| f64::from(u8::from(j == 0 && i % 3 == 0)));
        let mut last = f64::INFINITY;
        for target in [0.2, 0.5, 0.75, 1.0] {
            let t = select_thresholds(&scores, &truth, &[0, 1], &[target, target]).unwrap();
            let th = t.rows[0].threshold.unwrap();
            assert!(th <= last);
            assert!(t.rows[0].recall.unwrap() >= target);
            last = th;
            assert_eq!(t.undefined_classes(), vec![1]);
        }
        assert!(select_thresholds(&scores, &truth, &[0, 1], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn threshold_csv_round_trip_and_prediction_filter() {
        let table = ThresholdTable {
            rows: vec![
                ThresholdRow {
                    class_id: 3,
                    threshold: Some(0.25),
                    recall: Some(1.0),
                    drop_fraction: 0.5,
                },
                ThresholdRow {
                    class_id: 7,
                    threshold: None,
                    recall: None,
                    drop_fraction: 0.0,
                },
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        table.write_csv(&p).unwrap();
        assert_eq!(ThresholdTable::read_csv(&p).unwrap(), table);

        let probs = Matrix::from_rows(&[vec![0.2, 0.1], vec![0.3, 0.9]]).unwrap();
        let ids = vec!["a".to_string(), "b".to_string()];
        let lines = prediction_lines(&ids, &probs, &[3, 7], Some(&table.thresholds())).unwrap();
        assert_eq!(lines[0].scores.keys().copied().collect::<Vec<_>>(), vec![7]);
        assert_eq!(lines[1].scores.len(), 2);
        let q = dir.path().join("p.jsonl");
        write_predictions(&q, &lines).unwrap();
        assert_eq!(read_predictions(&q).unwrap(), lines);
    }

    #[test]
    fn embeddings_unit_norm_and_stable() {
        let (m, _, x) = setup();
        let ids: Vec<String> = (0..8).map(|i| format!("i{i}")).collect();
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        let emb = export_embeddings(&m, &ids, &x, &a).unwrap();
        export_embeddings(&m, &ids, &x, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        for i in 0..emb.rows() {
            assert!((l2_norm(emb.row(i)) - 1.0).abs() < 1e-10);
        }
        let (rid, back) = read_embeddings(&a).unwrap();
        assert_eq!(rid, ids);
        assert_eq!(back, emb);
    }

    #[test]
    fn histogram_counts_everything() {
        let z = Matrix::from_rows(&[vec![-2.0, 0.0], vec![1.0, 2.0]]).unwrap();
        let y = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let h = logit_histogram(&z, &y, 4).unwrap();
        assert_eq!(h.iter().map(|b| b.positives).sum::<usize>(), 2);
        assert_eq!(h.iter().map(|b| b.negatives).sum::<usize>(), 2);
        assert_eq!(h[0].negatives, 1);
        assert_eq!(h[3].positives, 2);
    }
}
