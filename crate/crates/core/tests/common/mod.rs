//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use mumic_core::gradcore::Matrix;
use mumic_core::model::{DualEncoderModel, ModelConfig, TokenizedText, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: [&str; 8] = [
    "pool", "beach", "bed", "garden", "sauna", "view", "lake", "bar",
];

/// A random small model, batch and label set, as (params, closure inputs).
pub struct Case {
    pub model: DualEncoderModel,
    pub features: Matrix,
    pub texts: Vec<TokenizedText>,
    pub targets: Matrix,
    pub pos_weights: Vec<f64>,
}

pub fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=6);
    let l = rng.gen_range(1..=4);
    let prompts: Vec<String> = (0..l)
        .map(|_| {
            let k = rng.gen_range(1..=3);
            let words: Vec<&str> = (0..k)
                .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
                .collect();
            format!("a photo with {}", words.join(" "))
        })
        .collect();
    let vocab = Vocabulary::build(prompts.iter().map(String::as_str));
    let d_in = rng.gen_range(1..=6);
    let n_layers_img = rng.gen_range(1..=2);
    let config = ModelConfig {
        d_in,
        d_i: rng.gen_range(2..=6),
        d_t: rng.gen_range(2..=6),
        d_e: rng.gen_range(2..=8),
        vocab_size: vocab.len(),
        n_layers_img,
        n_layers_txt: 1,
        logit_scale_init: rng.gen_range(0.0..4.6),
        seed,
        ..ModelConfig::default()
    };
    let model = DualEncoderModel::init(config).unwrap();
    Case {
        model,
        features: Matrix::from_fn(n, d_in, |_, _| rng.gen_range(-1.5..1.5)),
        texts: prompts.iter().map(|p| vocab.encode(p).unwrap()).collect(),
        targets: Matrix::from_fn(n, l, |_, _| f64::from(u8::from(rng.gen_bool(0.4)))),
        pos_weights: (0..l).map(|_| rng.gen_range(1.0..10.0)).collect(),
    }
}

/// Position of item `i` in a descending ranking where ties go to the lower
/// index, counted by comparing against every other item.
fn rank_of(scores: &[f64], i: usize) -> usize {
    scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| s > scores[i] || (s == scores[i] && j < i))
        .count()
        + 1
}

/// Area under the step PR curve by walking positives in rank order and
/// counting the positives ranked at or above each one.
pub fn brute_ap(scores: &[f64], hits: &[bool], positives_total: usize) -> Option<f64> {
    if positives_total == 0 {
        return None;
    }
    let mut positives: Vec<(usize, usize)> = (0..scores.len())
        .filter(|&i| hits[i])
        .map(|i| (rank_of(scores, i), i))
        .collect();
    positives.sort_unstable();
    let mut area = 0.0;
    for &(rank, i) in &positives {
        let tp = positives
            .iter()
            .filter(|&&(r, j)| r < rank || j == i)
            .count();
        area += (tp as f64 / rank as f64) * (1.0 / positives_total as f64);
    }
    Some(area)
}

pub struct OracleMetrics {
    pub ap: Vec<Option<f64>>,
    pub macro_map: Option<f64>,
    pub weighted_map: Option<f64>,
    pub gap: Option<f64>,
    pub gap_at_k: Vec<Option<f64>>,
}

pub fn brute_metrics(scores: &Matrix, truth: &Matrix) -> OracleMetrics {
    let (n, l) = scores.shape();
    let hit = |i: usize, j: usize| truth[(i, j)] == 1.0;
    let total: usize = (0..n).map(|i| (0..l).filter(|&j| hit(i, j)).count()).sum();
    let ap: Vec<Option<f64>> = (0..l)
        .map(|j| {
            let col: Vec<f64> = (0..n).map(|i| scores[(i, j)]).collect();
            let h: Vec<bool> = (0..n).map(|i| hit(i, j)).collect();
            brute_ap(&col, &h, h.iter().filter(|&&b| b).count())
        })
        .collect();
    let defined: Vec<f64> = ap.iter().flatten().copied().collect();
    let macro_map =
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    let mut num = 0.0;
    let mut den = 0usize;
    for j in 0..l {
        let np = (0..n).filter(|&i| hit(i, j)).count();
        if let Some(a) = ap[j] {
            num += a * np as f64;
            den += np;
        }
    }
    let weighted_map = (den > 0).then(|| num / den as f64);

    let flat: Vec<f64> = (0..n)
        .flat_map(|i| (0..l).map(move |j| (i, j)))
        .map(|(i, j)| scores[(i, j)])
        .collect();
    let flat_hits: Vec<bool> = (0..n)
        .flat_map(|i| (0..l).map(move |j| (i, j)))
        .map(|(i, j)| hit(i, j))
        .collect();
    let gap = brute_ap(&flat, &flat_hits, total);

    let gap_at_k = (1..=l)
        .map(|k| {
            let mut pool = Vec::new();
            let mut pool_hits = Vec::new();
            for i in 0..n {
                let row: Vec<f64> = (0..l).map(|j| scores[(i, j)]).collect();
                for j in 0..l {
                    if rank_of(&row, j) <= k {
                        pool.push(row[j]);
                        pool_hits.push(hit(i, j));
                    }
                }
            }
            brute_ap(&pool, &pool_hits, total)
        })
        .collect();
    OracleMetrics {
        ap,
        macro_map,
        weighted_map,
        gap,
        gap_at_k,
    }
}

/// Every binary `n × l` matrix, enumerated by bit pattern.
pub fn all_truths(n: usize, l: usize) -> impl Iterator<Item = Matrix> {
    (0u32..1 << (n * l))
        .map(move |bits| Matrix::from_fn(n, l, |i, j| f64::from((bits >> (i * l + j)) & 1)))
}

/// Random scores; every third matrix draws from a few levels to force ties.
pub fn random_scores(rng: &mut ChaCha8Rng, n: usize, l: usize, index: usize) -> Matrix {
    if index % 3 == 2 {
        Matrix::from_fn(n, l, |_, _| f64::from(rng.gen_range(0..3u8)) / 2.0)
    } else {
        Matrix::from_fn(n, l, |_, _| rng.gen_range(0.0..1.0))
    }
}

/// Runs the library metrics against the oracle on every truth assignment
/// of every shape with `n·l <= max_cells`, `matrices` score draws per shape.
/// Returns the number of comparisons or the first mismatch.
pub fn compare_metrics_exhaustively(
    max_cells: usize,
    matrices: usize,
    seed: u64,
) -> Result<usize, String> {
    use mumic_core::metrics::{evaluate, ScoredPredictions};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut count = 0;
    for n in 1..=max_cells {
        for l in 1..=max_cells / n {
            let draws: Vec<Matrix> = (0..matrices)
                .map(|m| random_scores(&mut rng, n, l, m))
                .collect();
            for truth in all_truths(n, l) {
                for scores in &draws {
                    let o = brute_metrics(scores, &truth);
                    let ks: Vec<usize> = (1..=l).collect();
                    let preds = ScoredPredictions::new(scores.clone(), truth.clone()).unwrap();
                    let got = evaluate(&preds, &ks);
                    let ctx = || format!("n={n} l={l} scores={scores:?} truth={truth:?}");
                    match (got, o.macro_map) {
                        (Err(_), None) => {
                            if o.gap.is_some() {
                                return Err(format!(
                                    "library failed but oracle defined: {}",
                                    ctx()
                                ));
                            }
                        }
                        (Ok(r), Some(m)) => {
                            let same = r.ap_per_class == o.ap
                                && r.macro_map == m
                                && Some(r.weighted_map) == o.weighted_map
                                && Some(r.gap) == o.gap
                                && r.gap_at_k.iter().map(|&(_, v)| Some(v)).collect::<Vec<_>>()
                                    == o.gap_at_k;
                            if !same {
                                return Err(format!("mismatch: {}", ctx()));
                            }
                        }
                        (Ok(_), None) => {
                            return Err(format!("oracle undefined, library not: {}", ctx()))
                        }
                        (Err(e), Some(_)) => return Err(format!("library error {e}: {}", ctx())),
                    }
                    count += 1;
                }
            }
        }
    }
    Ok(count)
}
