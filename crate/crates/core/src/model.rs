//! Dual encoder: image features and tokenized label-texts are encoded
//! separately, projected into a shared space, L2-normalized and compared
//! by cosine similarity scaled with a learnable `exp(logit_scale)`.
//!
//! Image side: `n_layers_img` affine+tanh layers over precomputed features.
//! Text side: token-embedding lookup, mean pooling, `n_layers_txt`
//! affine+tanh layers. Projections `proj.image` / `proj.text` carry no bias.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradcore::{Matrix, NodeId, Tape};

/// `ln(100)`: temperature never drops below 0.01.
pub const DEFAULT_LOGIT_SCALE_MAX: f64 = 4.605_170_185_988_092;
pub const DEFAULT_LOGIT_SCALE_INIT: f64 = 3.652;
pub const UNKNOWN_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d_in: usize,
    pub d_i: usize,
    pub d_t: usize,
    pub d_e: usize,
    pub vocab_size: usize,
    pub n_layers_img: usize,
    pub n_layers_txt: usize,
    pub logit_scale_init: f64,
    pub logit_scale_max: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_in: 64,
            d_i: 32,
            d_t: 32,
            d_e: 16,
            vocab_size: 0,
            n_layers_img: 1,
            n_layers_txt: 1,
            logit_scale_init: DEFAULT_LOGIT_SCALE_INIT,
            logit_scale_max: DEFAULT_LOGIT_SCALE_MAX,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_in", self.d_in),
            ("d_i", self.d_i),
            ("d_t", self.d_t),
            ("d_e", self.d_e),
            ("vocab_size", self.vocab_size),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.n_layers_img == 0 && self.d_i != self.d_in {
            return Err(Error::Config(
                "without image layers d_i must equal d_in".into(),
            ));
        }
        if !(self.logit_scale_max.is_finite() && self.logit_scale_max >= 0.0) {
            return Err(Error::Config(format!(
                "logit_scale_max {} must be finite and non-negative",
                self.logit_scale_max
            )));
        }
        if !(0.0..=self.logit_scale_max).contains(&self.logit_scale_init) {
            return Err(Error::Config(format!(
                "logit_scale_init {} outside [0, {}]",
                self.logit_scale_init, self.logit_scale_max
            )));
        }
        Ok(())
    }
}

/// Lowercase words split on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Token table built from the label-text corpus. Id 0 is the unknown token.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Tokens are numbered in order of first appearance.
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a str>) -> Self {
        let mut tokens = vec![UNKNOWN_TOKEN.to_string()];
        let mut index = HashMap::from([(UNKNOWN_TOKEN.to_string(), 0)]);
        for text in corpus {
            for t in tokenize(text) {
                if !index.contains_key(&t) {
                    index.insert(t.clone(), tokens.len());
                    tokens.push(t);
                }
            }
        }
        Self { tokens, index }
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(UNKNOWN_TOKEN) {
            return Err(Error::Input(format!(
                "vocabulary must start with {UNKNOWN_TOKEN}"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Input(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Unknown words map to the unknown token.
    pub fn encode(&self, text: &str) -> Result<TokenizedText> {
        let ids: Vec<usize> = tokenize(text)
            .iter()
            .map(|t| self.id(t).unwrap_or(0))
            .collect();
        if ids.is_empty() {
            return Err(Error::Input(format!("prompt {text:?} has no tokens")));
        }
        Ok(TokenizedText {
            ids,
            source: text.to_string(),
        })
    }

    /// Like [`encode`](Self::encode) but rejects prompts in which every
    /// word is unknown.
    pub fn encode_known(&self, text: &str) -> Result<TokenizedText> {
        let t = self.encode(text)?;
        if t.ids.iter().all(|&i| i == 0) {
            return Err(Error::OutOfVocabulary(text.to_string()));
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedText {
    pub ids: Vec<usize>,
    pub source: String,
}

/// Cosine similarities and their temperature-scaled version.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityLogits {
    pub raw: Matrix,
    pub scaled: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    /// Whether decoupled weight decay applies (false for biases and gains).
    pub decay: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualEncoderModel {
    config: ModelConfig,
    params: Vec<Param>,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Matrix {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_fn(fan_in, fan_out, |_, _| rng.gen_range(-a..a))
}

impl DualEncoderModel {
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Vec::new();
        let weight = |name: String, value: Matrix| Param {
            name,
            value,
            decay: true,
        };

        let mut width = config.d_in;
        let mut img = Vec::new();
        for l in 0..config.n_layers_img {
            img.push(weight(
                format!("img.{l}.weight"),
                glorot(&mut rng, width, config.d_i),
            ));
            img.push(Param {
                name: format!("img.{l}.bias"),
                value: Matrix::zeros(1, config.d_i),
                decay: false,
            });
            width = config.d_i;
        }
        params.extend(img);

        // the unknown token starts at zero so unseen words add nothing
        let mut table = glorot(&mut rng, config.vocab_size, config.d_t);
        if config.vocab_size > 0 {
            table.row_mut(0).fill(0.0);
        }
        params.push(weight("txt.embedding".into(), table));
        for l in 0..config.n_layers_txt {
            params.push(weight(
                format!("txt.{l}.weight"),
                glorot(&mut rng, config.d_t, config.d_t),
            ));
            params.push(Param {
                name: format!("txt.{l}.bias"),
                value: Matrix::zeros(1, config.d_t),
                decay: false,
            });
        }
        params.push(weight(
            "proj.image".into(),
            glorot(&mut rng, config.d_i, config.d_e),
        ));
        params.push(weight(
            "proj.text".into(),
            glorot(&mut rng, config.d_t, config.d_e),
        ));
        params.push(Param {
            name: "logit_scale".into(),
            value: Matrix::scalar(config.logit_scale_init),
            decay: false,
        });
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    fn logit_scale_index(&self) -> usize {
        self.params.len() - 1
    }

    fn embedding_index(&self) -> usize {
        2 * self.config.n_layers_img
    }

    pub fn logit_scale(&self) -> f64 {
        self.params[self.logit_scale_index()].value[(0, 0)]
    }

    pub fn set_logit_scale(&mut self, value: f64) {
        let k = self.logit_scale_index();
        self.params[k].value[(0, 0)] = value;
    }

    pub fn is_logit_scale(&self, param_index: usize) -> bool {
        param_index == self.logit_scale_index()
    }

    /// Forces `logit_scale` into `[0, logit_scale_max]`.
    pub fn clamp_logit_scale(&mut self) {
        let v = self.logit_scale().clamp(0.0, self.config.logit_scale_max);
        self.set_logit_scale(v);
    }

    /// Registers every parameter on `tape`, returning node ids in the same
    /// order as [`params`](Self::params).
    pub fn bind(&self, tape: &mut Tape) -> Vec<NodeId> {
        self.params
            .iter()
            .map(|p| tape.parameter(p.value.clone()))
            .collect()
    }

    pub fn logit_scale_node(&self, ids: &[NodeId]) -> NodeId {
        ids[self.logit_scale_index()]
    }

    /// Row-normalized image embeddings `[n, d_e]`.
    pub fn image_embeddings(
        &self,
        tape: &mut Tape,
        ids: &[NodeId],
        features: &Matrix,
    ) -> Result<NodeId> {
        if features.cols() != self.config.d_in {
            return Err(Error::Dimension(format!(
                "features have {} columns, model expects {}",
                features.cols(),
                self.config.d_in
            )));
        }
        if !features.is_finite() {
            return Err(Error::Numeric("non-finite image feature".into()));
        }
        let mut h = tape.constant(features.clone());
        for l in 0..self.config.n_layers_img {
            let a = tape.affine(h, ids[2 * l], ids[2 * l + 1])?;
            h = tape.tanh_act(a);
        }
        let proj = ids[self.embedding_index() + 1 + 2 * self.config.n_layers_txt];
        let e = tape.matmul(h, proj)?;
        tape.row_l2_normalize(e)
    }

    /// Row-normalized label-text embeddings `[n_c, d_e]`.
    pub fn text_embeddings(
        &self,
        tape: &mut Tape,
        ids: &[NodeId],
        texts: &[TokenizedText],
    ) -> Result<NodeId> {
        let mut flat = Vec::new();
        let mut lengths = Vec::with_capacity(texts.len());
        for t in texts {
            if t.ids.is_empty() {
                return Err(Error::Input(format!("label-text {:?} is empty", t.source)));
            }
            // pooled in id order so token permutations give bitwise equal sums
            let mut sorted = t.ids.clone();
            sorted.sort_unstable();
            flat.extend(sorted);
            lengths.push(t.ids.len());
        }
        let e = self.embedding_index();
        let tokens = tape.gather_rows(ids[e], &flat)?;
        let mut h = tape.mean_pool_rows(tokens, &lengths)?;
        for l in 0..self.config.n_layers_txt {
            let a = tape.affine(h, ids[e + 1 + 2 * l], ids[e + 2 + 2 * l])?;
            h = tape.tanh_act(a);
        }
        let proj = ids[e + 2 + 2 * self.config.n_layers_txt];
        let out = tape.matmul(h, proj)?;
        tape.row_l2_normalize(out)
    }

    /// Raw cosine similarity node `[n, n_c]`.
    pub fn raw_similarity(
        &self,
        tape: &mut Tape,
        ids: &[NodeId],
        features: &Matrix,
        texts: &[TokenizedText],
    ) -> Result<NodeId> {
        let img = self.image_embeddings(tape, ids, features)?;
        let txt = self.text_embeddings(tape, ids, texts)?;
        tape.matmul_t(img, txt)
    }

    /// Mean tempered BCE of a batch, recorded on `tape`.
    pub fn loss(
        &self,
        tape: &mut Tape,
        ids: &[NodeId],
        features: &Matrix,
        texts: &[TokenizedText],
        targets: &Matrix,
        pos_weights: &[f64],
    ) -> Result<NodeId> {
        let raw = self.raw_similarity(tape, ids, features, texts)?;
        crate::loss::tempered_bce(tape, raw, self.logit_scale_node(ids), targets, pos_weights)
    }

    pub fn encode_images(&self, features: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let ids = self.bind(&mut tape);
        let e = self.image_embeddings(&mut tape, &ids, features)?;
        Ok(tape.value(e).clone())
    }

    pub fn encode_texts(&self, texts: &[TokenizedText]) -> Result<Matrix> {
        let mut tape = Tape::new();
        let ids = self.bind(&mut tape);
        let e = self.text_embeddings(&mut tape, &ids, texts)?;
        Ok(tape.value(e).clone())
    }

    pub fn similarity(&self, image_emb: &Matrix, text_emb: &Matrix) -> Result<SimilarityLogits> {
        let raw = image_emb.matmul_t(text_emb)?;
        let scaled = raw.scale(self.logit_scale().exp());
        Ok(SimilarityLogits { raw, scaled })
    }

    pub fn to_checkpoint(&self, vocab: &Vocabulary) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            vocab: vocab.tokens().to_vec(),
            parameters: self
                .params
                .iter()
                .map(|p| NamedArray {
                    name: p.name.clone(),
                    rows: p.value.rows(),
                    cols: p.value.cols(),
                    values: p.value.as_slice().to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<(Self, Vocabulary)> {
        let vocab = Vocabulary::from_tokens(ckpt.vocab.clone())?;
        if vocab.len() != ckpt.config.vocab_size {
            return Err(Error::Input(format!(
                "checkpoint vocabulary has {} tokens, config says {}",
                vocab.len(),
                ckpt.config.vocab_size
            )));
        }
        let mut model = Self::init(ckpt.config.clone())?;
        if model.params.len() != ckpt.parameters.len() {
            return Err(Error::Input(format!(
                "checkpoint has {} parameters, expected {}",
                ckpt.parameters.len(),
                model.params.len()
            )));
        }
        for (p, a) in model.params.iter_mut().zip(&ckpt.parameters) {
            if p.name != a.name || p.value.shape() != (a.rows, a.cols) {
                return Err(Error::Input(format!(
                    "checkpoint parameter {} {}x{} does not match {} {:?}",
                    a.name,
                    a.rows,
                    a.cols,
                    p.name,
                    p.value.shape()
                )));
            }
            p.value = Matrix::from_vec(a.rows, a.cols, a.values.clone())?;
        }
        Ok((model, vocab))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedArray {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

/// On-disk model: config, vocabulary and every parameter as a flat list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab: Vec<String>,
    pub parameters: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
