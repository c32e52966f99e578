use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradcore::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let r = [self.train, self.val, self.test];
        if r.iter().any(|&v| !(v > 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios {}/{}/{} must be positive and sum to 1",
                self.train, self.val, self.test
            )));
        }
        Ok(())
    }
}

/// Row indices of each part, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratum of every row: the column of its least frequent positive label
/// (ties to the lower column), or `None` for rows without positives.
/// Frequencies are counted over the whole matrix.
pub fn strata(truth: &Matrix) -> Vec<Option<usize>> {
    let freq: Vec<usize> = (0..truth.cols())
        .map(|j| (0..truth.rows()).filter(|&i| truth[(i, j)] == 1.0).count())
        .collect();
    (0..truth.rows())
        .map(|i| {
            (0..truth.cols())
                .filter(|&j| truth[(i, j)] == 1.0)
                .min_by_key(|&j| (freq[j], j))
        })
        .collect()
}

/// Largest-remainder apportionment of `m` items over `ratios`.
pub fn proportional_counts(m: usize, ratios: [f64; 3]) -> [usize; 3] {
    let quotas = ratios.map(|r| r * m as f64);
    let mut counts = quotas.map(|q| q.floor() as usize);
    let mut left = m - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa)
    });
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    counts
}

/// Stratified three-way split. Each stratum is shuffled with the configured
/// seed and cut proportionally, so every stratum's share is within one
/// item of its quota in each part.
pub fn stratified_split(truth: &Matrix, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let mut groups: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
    for (i, s) in strata(truth).into_iter().enumerate() {
        groups.entry(s).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Splits::default();
    for (_, mut rows) in groups {
        rows.shuffle(&mut rng);
        let [a, b, _] = proportional_counts(rows.len(), [spec.train, spec.val, spec.test]);
        out.train.extend_from_slice(&rows[..a]);
        out.val.extend_from_slice(&rows[a..a + b]);
        out.test.extend_from_slice(&rows[a + b..]);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}
