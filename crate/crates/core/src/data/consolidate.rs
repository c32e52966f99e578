use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::labels::LabelSet;
use crate::error::{Error, Result};
use crate::gradcore::Matrix;

pub const DEFAULT_VOTES_TOTAL: u32 = 5;

/// Votes cast by annotators on one (image, class) question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub class_id: u32,
    pub votes_positive: u32,
    #[serde(default = "default_votes_total")]
    pub votes_total: u32,
}

fn default_votes_total() -> u32 {
    DEFAULT_VOTES_TOTAL
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<()> {
        if self.votes_total == 0 || self.votes_positive > self.votes_total {
            return Err(Error::Input(format!(
                "{} votes for class {} on {}: {}/{}",
                if self.votes_total == 0 {
                    "no"
                } else {
                    "too many"
                },
                self.class_id,
                self.image_id,
                self.votes_positive,
                self.votes_total
            )));
        }
        Ok(())
    }

    pub fn voting_rate(&self) -> f64 {
        f64::from(self.votes_positive) / f64::from(self.votes_total)
    }
}

/// Binary labels from voting rates: positive iff the rate reaches the
/// class's agreement threshold. Pairs without a record are negative;
/// repeated records for one pair have their votes pooled. Hierarchy is
/// not applied here, see [`propagate_hierarchy`].
pub fn consolidate(
    image_ids: &[String],
    records: &[AnnotationRecord],
    labels: &LabelSet,
) -> Result<Matrix> {
    let rows: HashMap<&str, usize> = image_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut votes = vec![(0u32, 0u32); image_ids.len() * labels.len()];
    for r in records {
        r.validate()?;
        let j = labels.column(r.class_id)?;
        let i = *rows
            .get(r.image_id.as_str())
            .ok_or_else(|| Error::Input(format!("unknown image id {:?}", r.image_id)))?;
        let v = &mut votes[i * labels.len() + j];
        v.0 += r.votes_positive;
        v.1 += r.votes_total;
    }
    let thresholds: Vec<f64> = labels
        .labels()
        .iter()
        .map(|l| l.agreement_threshold)
        .collect();
    let l = labels.len();
    Ok(Matrix::from_fn(image_ids.len(), l, |i, j| {
        let (pos, total) = votes[i * l + j];
        let positive = total > 0 && f64::from(pos) / f64::from(total) >= thresholds[j];
        f64::from(u8::from(positive))
    }))
}

/// Marks every ancestor of a positive class positive. Idempotent; never
/// removes a positive.
pub fn propagate_hierarchy(matrix: &Matrix, labels: &LabelSet) -> Result<Matrix> {
    if matrix.cols() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} columns for {} labels",
            matrix.cols(),
            labels.len()
        )));
    }
    let mut out = matrix.clone();
    for i in 0..out.rows() {
        for j in 0..out.cols() {
            if matrix[(i, j)] == 1.0 {
                for &a in labels.ancestors(j) {
                    out[(i, a)] = 1.0;
                }
            }
        }
    }
    Ok(out)
}

pub fn is_hierarchy_closed(matrix: &Matrix, labels: &LabelSet) -> bool {
    (0..matrix.rows()).all(|i| {
        (0..matrix.cols()).all(|j| {
            matrix[(i, j)] != 1.0 || labels.ancestors(j).iter().all(|&a| matrix[(i, a)] == 1.0)
        })
    })
}
