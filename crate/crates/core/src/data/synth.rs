//! Synthetic multi-label corpus.
//!
//! Each class owns a random prototype direction. An image's features are
//! the sum of the prototypes of its (hierarchy-closed) positive classes
//! plus isotropic Gaussian noise. Annotation votes are generated from a
//! copy of the labels in which every entry was flipped with probability
//! `flip_noise_rate`; consolidating those votes yields the noisy training
//! truth, while the clean truth is kept for evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::consolidate::{consolidate, propagate_hierarchy, AnnotationRecord};
use super::labels::{LabelDef, LabelSet, PromptMode};
use super::ConsolidatedDataset;
use crate::error::{Error, Result};
use crate::gradcore::{l2_norm, Matrix};

const NAMES: [&str; 40] = [
    "pool",
    "beach",
    "bed",
    "balcony",
    "garden",
    "restaurant",
    "mountain",
    "sauna",
    "kitchen",
    "bathroom",
    "breakfast",
    "terrace",
    "lobby",
    "gym",
    "spa",
    "parking",
    "bar",
    "fireplace",
    "lake",
    "tennis",
    "castle",
    "desk",
    "sofa",
    "bicycle",
    "snow",
    "forest",
    "harbor",
    "market",
    "church",
    "bridge",
    "vineyard",
    "playground",
    "library",
    "cinema",
    "museum",
    "canal",
    "desert",
    "waterfall",
    "lighthouse",
    "skyline",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_images: usize,
    pub n_classes: usize,
    pub d_in: usize,
    /// Levels of the class tree rooted at class 0; 1 means no hierarchy.
    pub hierarchy_depth: usize,
    pub hierarchy_fanout: usize,
    /// Per-class draw probability before hierarchy closure. Empty selects
    /// an even spread between 0.06 and 0.3.
    pub label_frequencies: Vec<f64>,
    /// Prototype norm relative to the expected norm of the feature noise.
    pub signal_to_noise: f64,
    /// Approximate cosine between the prototypes of two classes sharing a
    /// parent.
    pub sibling_similarity: f64,
    pub flip_noise_rate: f64,
    pub votes_total: u32,
    /// Every `k`-th class is prompted by its description; 0 disables.
    pub description_every: usize,
    /// Two class ids whose conjunction forms a held-out class.
    pub compositional_pair: Option<[u32; 2]>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_images: 2000,
            n_classes: 12,
            d_in: 64,
            hierarchy_depth: 2,
            hierarchy_fanout: 3,
            label_frequencies: Vec::new(),
            signal_to_noise: 3.0,
            sibling_similarity: 0.0,
            flip_noise_rate: 0.1,
            votes_total: 5,
            description_every: 4,
            compositional_pair: Some([9, 10]),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn frequencies(&self) -> Vec<f64> {
        if !self.label_frequencies.is_empty() {
            return self.label_frequencies.clone();
        }
        let l = self.n_classes;
        (0..l)
            .map(|j| {
                if l == 1 {
                    0.2
                } else {
                    0.06 + 0.24 * j as f64 / (l - 1) as f64
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_images == 0 || self.n_classes == 0 || self.d_in == 0 {
            return Err(Error::Config(
                "n_images, n_classes and d_in must be positive".into(),
            ));
        }
        let f = self.frequencies();
        if f.len() != self.n_classes || f.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::Config(
                "label_frequencies must hold one value in (0, 1) per class".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.flip_noise_rate) {
            return Err(Error::Config("flip_noise_rate outside [0, 1]".into()));
        }
        if self.votes_total == 0 || self.hierarchy_depth == 0 {
            return Err(Error::Config(
                "votes_total and hierarchy_depth must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.sibling_similarity) {
            return Err(Error::Config("sibling_similarity outside [0, 1)".into()));
        }
        if !(self.signal_to_noise >= 0.0) {
            return Err(Error::Config("signal_to_noise must be non-negative".into()));
        }
        if let Some([a, b]) = self.compositional_pair {
            let l = self.n_classes as u32;
            if a == b || a >= l || b >= l {
                return Err(Error::Config(format!(
                    "compositional pair [{a}, {b}] must name two distinct classes"
                )));
            }
        }
        Ok(())
    }
}

/// Held-out class whose positives are the images carrying both members of
/// a class pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionalClass {
    pub name: String,
    pub members: [u32; 2],
    pub truth: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    /// Features with the clean, hierarchy-closed truth.
    pub dataset: ConsolidatedDataset,
    /// Consolidated votes of the noisy annotation, hierarchy-closed.
    pub training_truth: Matrix,
    pub records: Vec<AnnotationRecord>,
    pub compositional: Option<CompositionalClass>,
    pub prototypes: Matrix,
}

fn class_name(j: usize) -> String {
    NAMES
        .get(j)
        .map_or_else(|| format!("class{j}"), |s| s.to_string())
}

fn build_labels(config: &SynthConfig) -> Result<LabelSet> {
    let l = config.n_classes;
    let mut parents = vec![None; l];
    let mut level = vec![0usize];
    let mut next = 1usize;
    for _ in 1..config.hierarchy_depth {
        let mut below = Vec::new();
        for &p in &level {
            for _ in 0..config.hierarchy_fanout {
                if next < l {
                    parents[next] = Some(p as u32);
                    below.push(next);
                    next += 1;
                }
            }
        }
        level = below;
    }
    let labels = (0..l)
        .map(|j| {
            let name = class_name(j);
            let mut def = LabelDef::new(j as u32, name.clone());
            def.description = format!("{name} in its surroundings");
            def.category = if parents[j].is_some() || parents.contains(&Some(j as u32)) {
                "hierarchy".into()
            } else {
                "scene".into()
            };
            def.parent_id = parents[j];
            if config.description_every > 0
                && j % config.description_every == config.description_every - 1
            {
                def.prompt_mode = PromptMode::Description;
            }
            def
        })
        .collect();
    LabelSet::new(labels)
}

pub fn synth_generate(config: &SynthConfig) -> Result<SyntheticData> {
    config.validate()?;
    let labels = build_labels(config)?;
    let (n, l, d) = (config.n_images, config.n_classes, config.d_in);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let norm = config.signal_to_noise * (d as f64).sqrt();
    let unit = |m: &mut Matrix, j: usize, scale: f64| {
        let r = l2_norm(m.row(j));
        m.row_mut(j).iter_mut().for_each(|v| *v *= scale / r);
    };
    let mut prototypes = Matrix::from_fn(l, d, |_, _| rng.sample(StandardNormal));
    // one shared direction per parent; siblings mix it with their own
    let mut family = Matrix::from_fn(l, d, |_, _| rng.sample(StandardNormal));
    let s = config.sibling_similarity;
    for j in 0..l {
        unit(&mut prototypes, j, 1.0);
        unit(&mut family, j, 1.0);
    }
    for (j, def) in labels.labels().iter().enumerate() {
        if let Some(p) = def.parent_id {
            let f = family.row(p as usize).to_vec();
            let (own, shared) = ((1.0 - s).sqrt(), s.sqrt());
            prototypes
                .row_mut(j)
                .iter_mut()
                .zip(f)
                .for_each(|(v, f)| *v = own * *v + shared * f);
        }
        unit(&mut prototypes, j, norm);
    }

    let freq = config.frequencies();
    let drawn = Matrix::from_fn(n, l, |_, j| f64::from(u8::from(rng.gen_bool(freq[j]))));
    let truth = propagate_hierarchy(&drawn, &labels)?;

    let mut features = Matrix::from_fn(n, d, |_, _| rng.sample(StandardNormal));
    for i in 0..n {
        for j in 0..l {
            if truth[(i, j)] == 1.0 {
                let p = prototypes.row(j).to_vec();
                features
                    .row_mut(i)
                    .iter_mut()
                    .zip(p)
                    .for_each(|(f, v)| *f += v);
            }
        }
    }

    // one global factor so entries have unit mean square
    let rms =
        (features.as_slice().iter().map(|v| v * v).sum::<f64>() / features.len() as f64).sqrt();
    let features = features.scale(1.0 / rms);

    let image_ids: Vec<String> = (0..n).map(|i| format!("img{i:05}")).collect();
    let mut records = Vec::new();
    let total = config.votes_total;
    for (i, id) in image_ids.iter().enumerate() {
        for (j, def) in labels.labels().iter().enumerate() {
            let mut positive = truth[(i, j)] == 1.0;
            if config.flip_noise_rate > 0.0 && rng.gen_bool(config.flip_noise_rate) {
                positive = !positive;
            }
            // smallest vote count that clears the class threshold
            let cut = (0..=total)
                .find(|&v| f64::from(v) / f64::from(total) >= def.agreement_threshold)
                .unwrap_or(total + 1);
            let votes = if positive {
                rng.gen_range(cut.min(total)..=total)
            } else if cut == 0 {
                0
            } else {
                rng.gen_range(0..cut)
            };
            if votes > 0 {
                records.push(AnnotationRecord {
                    image_id: id.clone(),
                    class_id: def.class_id,
                    votes_positive: votes,
                    votes_total: total,
                });
            }
        }
    }
    let training_truth =
        propagate_hierarchy(&consolidate(&image_ids, &records, &labels)?, &labels)?;

    let compositional = config.compositional_pair.map(|[a, b]| {
        let (ja, jb) = (a as usize, b as usize);
        CompositionalClass {
            name: format!("{} and {}", class_name(ja), class_name(jb)),
            members: [a, b],
            truth: (0..n)
                .map(|i| f64::from(u8::from(truth[(i, ja)] == 1.0 && truth[(i, jb)] == 1.0)))
                .collect(),
        }
    });

    Ok(SyntheticData {
        dataset: ConsolidatedDataset::new(image_ids, features, truth, labels)?,
        training_truth,
        records,
        compositional,
        prototypes,
    })
}
