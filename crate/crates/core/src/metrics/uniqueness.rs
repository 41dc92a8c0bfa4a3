use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{roc, MetricError, RocCurve, ScoreSet};
use crate::geometry::{similarity, EmbeddingVector};
use crate::rng;
use crate::scalar::Scalar;
use crate::toy::{ToyWorld, ToyWorldConfig, ToyWorldError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniquenessOptions {
    /// Pair budget per impostor population; `None` keeps every pair.
    pub pair_cap: Option<usize>,
    pub seed: u64,
}

impl Default for UniquenessOptions {
    fn default() -> Self {
        Self { pair_cap: Some(1_000_000), seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniquenessResult<T> {
    pub ref_roc: RocCurve<T>,
    pub sy_se_roc: RocCurve<T>,
    pub sy_sy_roc: RocCurve<T>,
    pub sy_se_pairs: usize,
    pub sy_se_total: usize,
    pub sy_sy_pairs: usize,
    pub sy_sy_total: usize,
    pub subsampled: bool,
}

/// `k`-th unordered pair `(i, j)`, `i < j`, in lexicographic order over `m` items.
fn unordered_pair(k: usize, m: usize) -> (usize, usize) {
    // pairs before row i: i*(2m - i - 1)/2
    let before = |i: usize| i * (2 * m - i - 1) / 2;
    let (mut lo, mut hi) = (0, m - 1);
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if before(mid) <= k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, lo + 1 + k - before(lo))
}

/// Canonical pair indices, or a seeded sorted subsample of them.
fn pair_indices(total: usize, cap: Option<usize>, seed: u64, domain: &str) -> Vec<usize> {
    match cap {
        Some(cap) if total > cap => {
            let mut r = rng::stream(seed, domain, &[total as u64, cap as u64]);
            let mut picked = index::sample(&mut r, total, cap).into_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..total).collect(),
    }
}

fn sims<T: Scalar>(
    pairs: &[usize],
    f: impl Fn(usize) -> (usize, usize) + Sync,
    a: &[EmbeddingVector<T>],
    b: &[EmbeddingVector<T>],
) -> Result<Vec<T>, MetricError> {
    pairs
        .par_iter()
        .map(|&k| {
            let (i, j) = f(k);
            similarity(&a[i], &b[j]).map_err(|e| MetricError::Embedding(e.to_string()))
        })
        .collect()
}

/// Three ROCs sharing the reference genuine scores: the reference impostors,
/// Sy×Se cross pairs, and unordered Sy pairs.
pub fn uniqueness_experiment<T: Scalar>(
    sy: &[EmbeddingVector<T>],
    se: &[EmbeddingVector<T>],
    ref_scores: &ScoreSet<T>,
    options: &UniquenessOptions,
) -> Result<UniquenessResult<T>, MetricError> {
    if sy.is_empty() {
        return Err(MetricError::EmptyPopulation("Sy"));
    }
    if se.is_empty() {
        return Err(MetricError::EmptyPopulation("Se"));
    }
    if sy.len() < 2 {
        return Err(MetricError::EmptyPopulation("Sy-Sy pairs"));
    }
    let ref_roc = roc(ref_scores)?;

    let (m, n) = (sy.len(), se.len());
    let sy_se_total = m * n;
    let cross = pair_indices(sy_se_total, options.pair_cap, options.seed, "uniqueness/sy-se");
    let cross_scores = sims(&cross, |k| (k / n, k % n), sy, se)?;

    let sy_sy_total = m * (m - 1) / 2;
    let within = pair_indices(sy_sy_total, options.pair_cap, options.seed, "uniqueness/sy-sy");
    let within_scores = sims(&within, |k| unordered_pair(k, m), sy, sy)?;

    let subsampled = cross.len() < sy_se_total || within.len() < sy_sy_total;
    Ok(UniquenessResult {
        ref_roc,
        sy_se_roc: roc(&ScoreSet::new(ref_scores.genuine.clone(), cross_scores))?,
        sy_sy_roc: roc(&ScoreSet::new(ref_scores.genuine.clone(), within_scores))?,
        sy_se_pairs: cross.len(),
        sy_se_total,
        sy_sy_pairs: within.len(),
        sy_sy_total,
        subsampled,
    })
}

/// Genuine: every same-label pair. Impostor: every cross-label pair.
pub fn cohort_scores<T: Scalar>(samples: &[(usize, EmbeddingVector<T>)]) -> Result<ScoreSet<T>, MetricError> {
    let mut scores = ScoreSet::default();
    for (i, (li, a)) in samples.iter().enumerate() {
        for (lj, b) in &samples[i + 1..] {
            let s = similarity(a, b).map_err(|e| MetricError::Embedding(e.to_string()))?;
            if li == lj {
                scores.genuine.push(s);
            } else {
                scores.impostor.push(s);
            }
        }
    }
    Ok(scores)
}

/// Noise level of the reference cohort.
pub const COHORT_NOISE: f64 = 0.05;

/// A labelled toy cohort: `samples_per_identity` captures of each of
/// `n_identities` random identities. Captures differ by a random attribute
/// state and the (boosted) embedding noise.
pub fn toy_reference_cohort(
    config: &ToyWorldConfig,
    n_identities: usize,
    samples_per_identity: usize,
    seed: u64,
) -> Result<Vec<(usize, EmbeddingVector<f64>)>, ToyWorldError> {
    let world = ToyWorld::new(ToyWorldConfig { noise_scale: COHORT_NOISE, ..config.clone() })?;
    let d = world.latent_dim();
    let axes = world.attribute_axes();
    let mut out = Vec::with_capacity(n_identities * samples_per_identity);
    for id in 0..n_identities {
        let mut r = rng::stream(seed, "cohort/identity", &[id as u64]);
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut r)).collect();
        let w = world.toy_mapping(&z)?;
        for k in 0..samples_per_identity {
            let mut r = rng::stream(seed, "cohort/capture", &[id as u64, k as u64]);
            let mut capture = w.clone();
            for axis in 0..axes.ncols() {
                let jitter: f64 = StandardNormal.sample(&mut r);
                for (c, a) in capture.iter_mut().zip(axes.column(axis).iter()) {
                    *c += jitter * a;
                }
            }
            let e = world.toy_embed(&world.toy_synthesize(&capture)?)?;
            out.push((id, EmbeddingVector::new(e).map_err(|_| ToyWorldError::ZeroVector)?));
        }
    }
    Ok(out)
}
