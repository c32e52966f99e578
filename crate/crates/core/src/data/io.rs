//! File formats:
//! - labels: CSV `class_id,name,description,category,parent_id,prompt_mode,agreement_threshold`
//! - annotations: JSONL, one [`AnnotationRecord`] per line
//! - features: CSV `image_id,f0,f1,...`
//! - ground truth: JSONL `{"image_id": ..., "positive_class_ids": [...]}`
//! - split manifest: JSON `{"train": [ids], "val": [ids], "test": [ids]}`

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::labels::csv_to_parse;
use super::{AnnotationRecord, ConsolidatedDataset, LabelSet, Splits};
use crate::error::{Error, Result};
use crate::gradcore::Matrix;

/// Parses one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let records: Vec<AnnotationRecord> = read_jsonl(path)?;
    for r in &records {
        r.validate()?;
    }
    Ok(records)
}

pub fn write_annotations(path: &Path, records: &[AnnotationRecord]) -> Result<()> {
    write_jsonl(path, records)
}

pub fn write_features(path: &Path, image_ids: &[String], features: &Matrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_to_parse(path, e))?;
    let mut header = vec!["image_id".to_string()];
    header.extend((0..features.cols()).map(|k| format!("f{k}")));
    w.write_record(&header)?;
    for (i, id) in image_ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(features.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<(Vec<String>, Matrix)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_to_parse(path, e))?;
    let headers = r.headers().map_err(|e| csv_to_parse(path, e))?.clone();
    if headers.get(0) != Some("image_id") || headers.len() < 2 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "expected header image_id,f0,...".into(),
        });
    }
    let d = headers.len() - 1;
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_to_parse(path, e))?;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: k + 2,
            message,
        };
        if rec.len() != d + 1 {
            return Err(bad(format!("{} fields, expected {}", rec.len(), d + 1)));
        }
        ids.push(rec[0].to_string());
        for field in rec.iter().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| bad(format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(bad(format!("non-finite feature {field}")));
            }
            data.push(v);
        }
    }
    let n = ids.len();
    Ok((ids, Matrix::from_vec(n, d, data)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthLine {
    pub image_id: String,
    pub positive_class_ids: Vec<u32>,
}

pub fn write_ground_truth(
    path: &Path,
    image_ids: &[String],
    truth: &Matrix,
    labels: &LabelSet,
) -> Result<()> {
    let ids = labels.class_ids();
    write_jsonl(
        path,
        image_ids.iter().enumerate().map(|(i, id)| GroundTruthLine {
            image_id: id.clone(),
            positive_class_ids: (0..truth.cols())
                .filter(|&j| truth[(i, j)] == 1.0)
                .map(|j| ids[j])
                .collect(),
        }),
    )
}

/// Reads ground truth aligned to `image_ids`; every image must appear once.
pub fn read_ground_truth(path: &Path, image_ids: &[String], labels: &LabelSet) -> Result<Matrix> {
    let lines: Vec<GroundTruthLine> = read_jsonl(path)?;
    let rows = row_index(image_ids);
    let mut truth = Matrix::zeros(image_ids.len(), labels.len());
    let mut seen = vec![false; image_ids.len()];
    for line in lines {
        let i = *rows.get(line.image_id.as_str()).ok_or_else(|| {
            Error::Input(format!(
                "{}: unknown image {:?}",
                path.display(),
                line.image_id
            ))
        })?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::Input(format!(
                "{}: image {:?} listed twice",
                path.display(),
                line.image_id
            )));
        }
        for c in line.positive_class_ids {
            truth[(i, labels.column(c)?)] = 1.0;
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::Input(format!(
            "{}: no ground truth for image {:?}",
            path.display(),
            image_ids[i]
        )));
    }
    Ok(truth)
}

fn row_index(image_ids: &[String]) -> HashMap<&str, usize> {
    image_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitManifest {
    pub fn from_splits(splits: &Splits, image_ids: &[String]) -> Self {
        let names = |rows: &[usize]| rows.iter().map(|&i| image_ids[i].clone()).collect();
        Self {
            train: names(&splits.train),
            val: names(&splits.val),
            test: names(&splits.test),
        }
    }

    pub fn to_splits(&self, image_ids: &[String]) -> Result<Splits> {
        let rows = row_index(image_ids);
        let resolve = |ids: &[String]| -> Result<Vec<usize>> {
            ids.iter()
                .map(|id| {
                    rows.get(id.as_str())
                        .copied()
                        .ok_or_else(|| Error::Input(format!("split lists unknown image {id:?}")))
                })
                .collect()
        };
        Ok(Splits {
            train: resolve(&self.train)?,
            val: resolve(&self.val)?,
            test: resolve(&self.test)?,
        })
    }
}

/// Paths of one dataset on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFiles<P> {
    pub labels: P,
    pub features: P,
    pub ground_truth: P,
}

impl<P: AsRef<Path>> DatasetFiles<P> {
    pub fn write(&self, dataset: &ConsolidatedDataset) -> Result<()> {
        dataset.labels.write_csv(self.labels.as_ref())?;
        write_features(
            self.features.as_ref(),
            &dataset.image_ids,
            &dataset.features,
        )?;
        write_ground_truth(
            self.ground_truth.as_ref(),
            &dataset.image_ids,
            &dataset.truth,
            &dataset.labels,
        )
    }

    pub fn read(&self) -> Result<ConsolidatedDataset> {
        let labels = LabelSet::read_csv(self.labels.as_ref())?;
        let (ids, features) = read_features(self.features.as_ref())?;
        let truth = read_ground_truth(self.ground_truth.as_ref(), &ids, &labels)?;
        ConsolidatedDataset::new(ids, features, truth, labels)
    }
}
