use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_AGREEMENT_THRESHOLD: f64 = 0.6;
pub const PROMPT_PREFIX: &str = "a photo with";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    #[default]
    Name,
    Description,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDef {
    pub class_id: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub category: String,
    #[serde(default)]
    pub parent_id: Option<u32>,
    #[serde(default)]
    pub prompt_mode: PromptMode,
    #[serde(default = "default_threshold")]
    pub agreement_threshold: f64,
}

fn default_threshold() -> f64 {
    DEFAULT_AGREEMENT_THRESHOLD
}

impl LabelDef {
    pub fn new(class_id: u32, name: impl Into<String>) -> Self {
        Self {
            class_id,
            name: name.into(),
            description: String::new(),
            category: String::new(),
            parent_id: None,
            prompt_mode: PromptMode::Name,
            agreement_threshold: DEFAULT_AGREEMENT_THRESHOLD,
        }
    }
}

/// `"a photo with {name}"` or `"a photo with {description}"`.
pub fn build_label_text(label: &LabelDef) -> Result<String> {
    if label.name.trim().is_empty() {
        return Err(Error::Input(format!(
            "class {} has an empty name",
            label.class_id
        )));
    }
    let body = match label.prompt_mode {
        PromptMode::Name => &label.name,
        PromptMode::Description => {
            if label.description.trim().is_empty() {
                return Err(Error::Input(format!(
                    "class {} uses its description but has none",
                    label.class_id
                )));
            }
            &label.description
        }
    };
    Ok(format!("{PROMPT_PREFIX} {body}"))
}

/// Validated label definitions, ordered by class id. Column `j` of every
/// label matrix refers to `labels()[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    labels: Vec<LabelDef>,
    index: HashMap<u32, usize>,
    /// Ancestor column indices of each column, nearest first.
    ancestors: Vec<Vec<usize>>,
}

impl LabelSet {
    pub fn new(mut labels: Vec<LabelDef>) -> Result<Self> {
        labels.sort_by_key(|l| l.class_id);
        let mut index = HashMap::with_capacity(labels.len());
        for (j, l) in labels.iter().enumerate() {
            if index.insert(l.class_id, j).is_some() {
                return Err(Error::Input(format!("duplicate class id {}", l.class_id)));
            }
            if l.name.trim().is_empty() {
                return Err(Error::Input(format!(
                    "class {} has an empty name",
                    l.class_id
                )));
            }
            if !(0.0..=1.0).contains(&l.agreement_threshold) {
                return Err(Error::Input(format!(
                    "class {} agreement threshold {} outside [0, 1]",
                    l.class_id, l.agreement_threshold
                )));
            }
        }
        for l in &labels {
            if let Some(p) = l.parent_id {
                if !index.contains_key(&p) {
                    return Err(Error::UnknownClass(p));
                }
            }
        }
        let mut ancestors = Vec::with_capacity(labels.len());
        for (j, l) in labels.iter().enumerate() {
            let mut chain = Vec::new();
            let mut cur = l.parent_id;
            while let Some(p) = cur {
                let k = index[&p];
                if k == j || chain.contains(&k) {
                    return Err(Error::Cycle(l.class_id));
                }
                chain.push(k);
                cur = labels[k].parent_id;
            }
            ancestors.push(chain);
        }
        Ok(Self {
            labels,
            index,
            ancestors,
        })
    }

    pub fn labels(&self) -> &[LabelDef] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn column(&self, class_id: u32) -> Result<usize> {
        self.index
            .get(&class_id)
            .copied()
            .ok_or(Error::UnknownClass(class_id))
    }

    pub fn class_ids(&self) -> Vec<u32> {
        self.labels.iter().map(|l| l.class_id).collect()
    }

    pub fn ancestors(&self, column: usize) -> &[usize] {
        &self.ancestors[column]
    }

    pub fn label_texts(&self) -> Result<Vec<String>> {
        self.labels.iter().map(build_label_text).collect()
    }

    /// Every text the vocabulary should know: both prompt forms of every class.
    pub fn corpus(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(2 * self.labels.len());
        for l in &self.labels {
            out.push(format!("{PROMPT_PREFIX} {}", l.name));
            if !l.description.is_empty() {
                out.push(format!("{PROMPT_PREFIX} {}", l.description));
            }
        }
        out
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_to_parse(path, e))?;
        let mut labels = Vec::new();
        for rec in reader.deserialize::<LabelDef>() {
            labels.push(rec.map_err(|e| csv_to_parse(path, e))?);
        }
        Self::new(labels)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_to_parse(path, e))?;
        for l in &self.labels {
            w.serialize(l)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn csv_to_parse(path: &Path, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            let msg = e.to_string();
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                _ => Error::Input(msg),
            }
        }
        _ => Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        },
    }
}
