//! Labels, annotation consolidation, hierarchy closure, stratified splits,
//! the synthetic corpus, and their file formats.

mod consolidate;
pub mod io;
mod labels;
mod split;
mod synth;

pub use consolidate::{
    consolidate, is_hierarchy_closed, propagate_hierarchy, AnnotationRecord, DEFAULT_VOTES_TOTAL,
};
pub use labels::{
    build_label_text, LabelDef, LabelSet, PromptMode, DEFAULT_AGREEMENT_THRESHOLD, PROMPT_PREFIX,
};
pub use split::{proportional_counts, strata, stratified_split, SplitSpec, Splits};
pub use synth::{synth_generate, CompositionalClass, SynthConfig, SyntheticData};

use crate::error::{Error, Result};
use crate::gradcore::Matrix;

/// Images with features and hierarchy-closed binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsolidatedDataset {
    pub image_ids: Vec<String>,
    pub features: Matrix,
    pub truth: Matrix,
    pub labels: LabelSet,
}

impl ConsolidatedDataset {
    pub fn new(
        image_ids: Vec<String>,
        features: Matrix,
        truth: Matrix,
        labels: LabelSet,
    ) -> Result<Self> {
        let n = image_ids.len();
        if features.rows() != n || truth.rows() != n || truth.cols() != labels.len() {
            return Err(Error::Dimension(format!(
                "{n} images, features {:?}, truth {:?}, {} labels",
                features.shape(),
                truth.shape(),
                labels.len()
            )));
        }
        if !is_hierarchy_closed(&truth, &labels) {
            return Err(Error::Input("ground truth is not hierarchy-closed".into()));
        }
        Ok(Self {
            image_ids,
            features,
            truth,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.image_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_ids.is_empty()
    }

    /// Rows `indices` of features and of `truth` (which may differ from
    /// `self.truth`, e.g. noisy training labels).
    pub fn rows(&self, indices: &[usize], truth: &Matrix) -> (Matrix, Matrix) {
        (
            self.features.select_rows(indices),
            truth.select_rows(indices),
        )
    }
}
