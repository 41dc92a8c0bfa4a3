//! Reference identities under an inter-class threshold, and their covariate
//! variations.
//!
//! Candidate `a` of identity `i` is drawn from its own seeded stream, so the
//! accepted set depends only on the seed and the threshold, never on how many
//! candidates are evaluated per oracle round-trip.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::directions::DirectionBank;
use crate::geometry::{
    cosine_distance, offset_to_distance, project_to_hyperplane, Attribute, EmbeddingVector, GeometryError, LatentVector,
    SemanticDirection, EXPRESSIONS, NEUTRAL,
};
use crate::manifest::{Covariate, DatasetManifest, IdentitySummary, ManifestHeader, ManifestRecord, EMBEDDING_FILE, LATENT_FILE};
use crate::oracle::{Oracle, OracleError};
use crate::rng;

/// Returned by [`closest_distance`] when there is nothing to compare against;
/// larger than any cosine distance.
pub const NO_PREVIOUS: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub n_identities: usize,
    /// Minimum embedding cosine distance between references; 0 disables.
    pub ict: f64,
    pub n_var: usize,
    pub max_attempts_per_identity: usize,
    pub seed: u64,
    /// Candidates evaluated per oracle round-trip. Does not affect results.
    #[serde(skip_serializing)]
    pub candidate_batch: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self { n_identities: 64, ict: 0.1, n_var: 7, max_attempts_per_identity: 10_000, seed: 0, candidate_batch: 8 }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GenerationError> {
        let bad = |m: String| Err(GenerationError::InvalidConfig(m));
        if self.n_identities < 1 {
            return bad("n_identities must be >= 1".into());
        }
        if !(0.0..=2.0).contains(&self.ict) {
            return bad(format!("ict {} outside [0, 2]", self.ict));
        }
        if self.n_var < 2 {
            return bad(format!("n_var {} < 2", self.n_var));
        }
        if self.max_attempts_per_identity < 1 {
            return bad("max_attempts_per_identity must be >= 1".into());
        }
        if self.candidate_batch < 1 {
            return bad("candidate_batch must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("identity {identity_id}: no candidate exceeded the threshold after {attempts} attempts (best distance {best_distance})")]
    MaxAttemptsExceeded { identity_id: usize, attempts: usize, best_distance: f64 },
    #[error("direction bank has no {0} direction")]
    MissingDirection(Attribute),
    #[error("{0} is not a left-right covariate")]
    NotLeftRight(Attribute),
    #[error("oracle latent dimension {oracle} does not match bank dimension {bank}")]
    DimensionMismatch { oracle: usize, bank: usize },
    #[error("checkpoints must be strictly ascending and positive")]
    BadCheckpoints,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticIdentity {
    pub identity_id: usize,
    pub reference_latent: LatentVector<f64>,
    pub reference_embedding: EmbeddingVector<f64>,
    pub attempts_used: usize,
    pub closest_distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariationRecord {
    pub identity_id: usize,
    pub covariate: Covariate,
    pub parameter: f64,
    pub latent: LatentVector<f64>,
}

/// Frontal pose, frontal light, neutral expression.
///
/// Projects onto the pose and illumination hyperplanes, then moves along the
/// neutral-to-smile normal to the mean distance of the neutral population.
pub fn neutralize(w: &LatentVector<f64>, bank: &DirectionBank) -> Result<LatentVector<f64>, GenerationError> {
    let smile = bank
        .get(Attribute::ExpressionPair(NEUTRAL, 1))
        .ok_or(GenerationError::MissingDirection(Attribute::ExpressionPair(NEUTRAL, 1)))?;
    let w = project_to_hyperplane(w, bank.pose())?;
    let w = project_to_hyperplane(&w, bank.illumination())?;
    Ok(offset_to_distance(&w, smile, -smile.scale_neg())?)
}

/// Smallest cosine distance from `embedding` to any previous reference.
pub fn nearest_distance(embedding: &EmbeddingVector<f64>, previous: &[SyntheticIdentity]) -> Result<f64, GeometryError> {
    previous.iter().try_fold(NO_PREVIOUS, |best, p| Ok(best.min(cosine_distance(embedding, &p.reference_embedding)?)))
}

/// Embeds `w` through the oracle and compares it to the cached embeddings of
/// `previous`.
pub fn closest_distance<O: Oracle + ?Sized>(
    w: &LatentVector<f64>,
    previous: &[SyntheticIdentity],
    oracle: &mut O,
) -> Result<f64, GenerationError> {
    let e = oracle.embed_latents(&[w.values().to_vec()])?.remove(0);
    Ok(nearest_distance(&EmbeddingVector::new(e)?, previous)?)
}

fn candidate_z(seed: u64, identity_id: usize, attempt: usize, dim: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, "identity/candidate", &[identity_id as u64, attempt as u64]);
    (0..dim).map(|_| r.sample(StandardNormal)).collect()
}

fn check_oracle<O: Oracle + ?Sized>(oracle: &mut O, bank: &DirectionBank) -> Result<usize, GenerationError> {
    let info = oracle.info()?;
    if info.latent_dim != bank.latent_dim() {
        return Err(GenerationError::DimensionMismatch { oracle: info.latent_dim, bank: bank.latent_dim() });
    }
    Ok(info.embedding_dim)
}

/// Rejection-samples the next reference identity (id = `previous.len()`).
pub fn new_identity<O: Oracle + ?Sized>(
    previous: &[SyntheticIdentity],
    config: &GenerationConfig,
    bank: &DirectionBank,
    oracle: &mut O,
) -> Result<SyntheticIdentity, GenerationError> {
    config.validate()?;
    let identity_id = previous.len();
    let dim = bank.latent_dim();
    let mut best_distance = f64::NEG_INFINITY;
    let mut attempt = 0;
    while attempt < config.max_attempts_per_identity {
        let batch = config.candidate_batch.min(config.max_attempts_per_identity - attempt);
        let z: Vec<Vec<f64>> = (attempt..attempt + batch).map(|a| candidate_z(config.seed, identity_id, a, dim)).collect();
        let w = oracle.map(&z)?;
        let refs = w
            .into_iter()
            .map(|v| neutralize(&LatentVector::w(v)?, bank))
            .collect::<Result<Vec<_>, GenerationError>>()?;
        let raw: Vec<Vec<f64>> = refs.iter().map(|r| r.values().to_vec()).collect();
        let embeddings = oracle
            .embed_latents(&raw)?
            .into_iter()
            .map(EmbeddingVector::new)
            .collect::<Result<Vec<_>, _>>()?;
        let distances: Vec<f64> = embeddings.par_iter().map(|e| nearest_distance(e, previous)).collect::<Result<_, _>>()?;
        for (k, ((latent, embedding), distance)) in refs.into_iter().zip(embeddings).zip(distances).enumerate() {
            if config.ict == 0.0 || distance > config.ict {
                return Ok(SyntheticIdentity {
                    identity_id,
                    reference_latent: latent,
                    reference_embedding: embedding,
                    attempts_used: attempt + k + 1,
                    closest_distance: distance,
                });
            }
            best_distance = best_distance.max(distance);
        }
        attempt += batch;
    }
    Err(GenerationError::MaxAttemptsExceeded { identity_id, attempts: attempt, best_distance })
}

fn linspace_symmetric(extent: f64, n: usize) -> Vec<f64> {
    let last = (n - 1) as f64;
    (0..n).map(|k| extent * ((2.0 * k as f64 - last) / last)).collect()
}

/// `n_var` edits of `w_ref` along `dir`, evenly spaced over `[-D, D]` with
/// `D = max(scale_neg, scale_pos)`.
pub fn lr_variations(
    identity_id: usize,
    w_ref: &LatentVector<f64>,
    dir: &SemanticDirection<f64>,
    n_var: usize,
) -> Result<Vec<VariationRecord>, GenerationError> {
    if n_var < 2 {
        return Err(GenerationError::InvalidConfig(format!("n_var {n_var} < 2")));
    }
    let covariate = match dir.attribute() {
        Attribute::Pose => Covariate::Pose,
        Attribute::Illumination => Covariate::Illumination,
        other => return Err(GenerationError::NotLeftRight(other)),
    };
    let extent = dir.scale_neg().max(dir.scale_pos());
    linspace_symmetric(extent, n_var)
        .into_iter()
        .map(|d| Ok(VariationRecord { identity_id, covariate, parameter: d, latent: w_ref.add_scaled(d, dir.normal())? }))
        .collect()
}

/// One variation per non-neutral expression `j`, placed at the mean distance
/// of the expression-`j` population from the `(0, j)` hyperplane.
pub fn expr_variations(identity_id: usize, w_ref: &LatentVector<f64>, bank: &DirectionBank) -> Result<Vec<VariationRecord>, GenerationError> {
    (1..EXPRESSIONS.len() as u8)
        .map(|j| {
            let attribute = Attribute::ExpressionPair(NEUTRAL, j);
            let dir = bank.get(attribute).ok_or(GenerationError::MissingDirection(attribute))?;
            Ok(VariationRecord {
                identity_id,
                covariate: Covariate::Expression,
                parameter: j as f64,
                latent: offset_to_distance(w_ref, dir, dir.scale_pos())?,
            })
        })
        .collect()
}

/// Reference record followed by pose, illumination and expression variations.
pub fn identity_variations(identity: &SyntheticIdentity, bank: &DirectionBank, n_var: usize) -> Result<Vec<VariationRecord>, GenerationError> {
    let id = identity.identity_id;
    let w_ref = &identity.reference_latent;
    let mut out = vec![VariationRecord { identity_id: id, covariate: Covariate::Reference, parameter: 0.0, latent: w_ref.clone() }];
    out.extend(lr_variations(id, w_ref, bank.pose(), n_var)?);
    out.extend(lr_variations(id, w_ref, bank.illumination(), n_var)?);
    out.extend(expr_variations(id, w_ref, bank)?);
    Ok(out)
}

/// Failed generation run: the error plus everything generated before it.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct GenerationFailure {
    #[source]
    pub error: GenerationError,
    pub partial: Option<Box<DatasetManifest>>,
}

impl From<GenerationError> for GenerationFailure {
    fn from(error: GenerationError) -> Self {
        Self { error, partial: None }
    }
}

fn assemble<O: Oracle + ?Sized>(
    identities: &[SyntheticIdentity],
    config: &GenerationConfig,
    bank: &DirectionBank,
    oracle: &mut O,
    embedding_dim: usize,
    failure: Option<String>,
) -> Result<DatasetManifest, GenerationError> {
    let mut records = Vec::new();
    let mut latents = Vec::new();
    let mut embeddings = Vec::new();
    for identity in identities {
        let variations = identity_variations(identity, bank, config.n_var)?;
        // the reference embedding was computed at acceptance time
        let edited: Vec<Vec<f64>> = variations[1..].iter().map(|v| v.latent.values().to_vec()).collect();
        let mut embedded = vec![identity.reference_embedding.values().to_vec()];
        for e in oracle.embed_latents(&edited)? {
            embedded.push(EmbeddingVector::new(e)?.into_values());
        }
        for (v, e) in variations.into_iter().zip(embedded) {
            let row = records.len();
            records.push(ManifestRecord {
                sample_id: row,
                identity_id: v.identity_id,
                covariate: v.covariate,
                parameter: v.parameter,
                latent_row: row,
                embedding_row: row,
            });
            latents.push(v.latent.into_values());
            embeddings.push(e);
        }
    }
    let header = ManifestHeader {
        latent_dim: bank.latent_dim(),
        embedding_dim,
        seed: config.seed,
        config: config.clone(),
        bank_fingerprint: bank.fingerprint(),
        complete: failure.is_none(),
        failure,
        identities: identities
            .iter()
            .map(|i| IdentitySummary { identity_id: i.identity_id, attempts_used: i.attempts_used, closest_distance: i.closest_distance })
            .collect(),
        latent_file: LATENT_FILE.into(),
        embedding_file: EMBEDDING_FILE.into(),
    };
    Ok(DatasetManifest { header, records, latents, embeddings })
}

/// Generates all reference identities, then their variations, and embeds
/// every record.
///
/// If a reference cannot be placed within the attempt budget, the identities
/// accepted so far are still assembled into a manifest flagged incomplete and
/// returned inside the failure.
pub fn generate_dataset<O: Oracle + ?Sized>(
    config: &GenerationConfig,
    bank: &DirectionBank,
    oracle: &mut O,
) -> Result<DatasetManifest, GenerationFailure> {
    config.validate()?;
    let embedding_dim = check_oracle(oracle, bank)?;
    let mut identities: Vec<SyntheticIdentity> = Vec::with_capacity(config.n_identities);
    while identities.len() < config.n_identities {
        match new_identity(&identities, config, bank, oracle) {
            Ok(identity) => identities.push(identity),
            Err(error @ GenerationError::MaxAttemptsExceeded { .. }) => {
                let partial = assemble(&identities, config, bank, oracle, embedding_dim, Some(error.to_string()))?;
                return Err(GenerationFailure { error, partial: Some(Box::new(partial)) });
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(assemble(&identities, config, bank, oracle, embedding_dim, None)?)
}

/// Generates only reference identities, reporting cumulative attempts after
/// each one. Used for runtime scaling studies.
pub fn generate_references<O: Oracle + ?Sized>(
    config: &GenerationConfig,
    bank: &DirectionBank,
    oracle: &mut O,
    mut on_accept: impl FnMut(&SyntheticIdentity, usize),
) -> Result<Vec<SyntheticIdentity>, GenerationError> {
    config.validate()?;
    check_oracle(oracle, bank)?;
    let mut identities = Vec::with_capacity(config.n_identities);
    let mut total = 0;
    while identities.len() < config.n_identities {
        let identity = new_identity(&identities, config, bank, oracle)?;
        total += identity.attempts_used;
        on_accept(&identity, total);
        identities.push(identity);
    }
    Ok(identities)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::signed_distance;

    fn dir(attribute: Attribute, d: usize, k: usize, neg: f64, pos: f64) -> SemanticDirection<f64> {
        let mut n = vec![0.0; d];
        n[k] = 1.0;
        SemanticDirection::new(attribute, n, 0.0, neg, pos).unwrap()
    }

    fn axis_bank(d: usize) -> DirectionBank {
        let pairs = (1..=5u8).map(|j| dir(Attribute::ExpressionPair(0, j), d, 1 + j as usize, 0.4 + j as f64 * 0.1, 0.6 + j as f64 * 0.1));
        DirectionBank::new(dir(Attribute::Pose, d, 0, 1.0, 1.2), dir(Attribute::Illumination, d, 1, 0.8, 0.7), pairs).unwrap()
    }

    fn w(v: &[f64]) -> LatentVector<f64> {
        LatentVector::w(v.to_vec()).unwrap()
    }

    #[test]
    fn neutralize_hand_example() {
        // 2-d: pose along x, smile along y with d^0 = 0.5
        let pose = dir(Attribute::Pose, 2, 0, 1.0, 1.0);
        let illum = dir(Attribute::Illumination, 2, 0, 1.0, 1.0);
        let smile = dir(Attribute::ExpressionPair(0, 1), 2, 1, 0.5, 0.5);
        let others = (2..=5u8).map(|j| dir(Attribute::ExpressionPair(0, j), 2, 1, 0.5, 0.5));
        let bank = DirectionBank::new(pose, illum, std::iter::once(smile).chain(others)).unwrap();
        assert_eq!(neutralize(&w(&[3.0, 2.0]), &bank).unwrap().values(), &[0.0, -0.5]);
    }

    #[test]
    fn neutralize_sets_distances_and_is_idempotent() {
        let bank = axis_bank(10);
        let x = w(&[1.0, -2.0, 0.3, 0.4, 0.5, -0.6, 0.7, 0.8, 0.9, 1.0]);
        let n = neutralize(&x, &bank).unwrap();
        assert!(signed_distance(&n, bank.pose()).unwrap().abs() < 1e-9);
        assert!(signed_distance(&n, bank.illumination()).unwrap().abs() < 1e-9);
        assert!((signed_distance(&n, bank.smile()).unwrap() + bank.smile().scale_neg()).abs() < 1e-9);
        let twice = neutralize(&n, &bank).unwrap();
        assert!(n.values().iter().zip(twice.values()).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn lr_variation_examples() {
        let d = dir(Attribute::Pose, 2, 0, 1.0, 0.5);
        let recs = lr_variations(0, &w(&[0.0, 0.0]), &d, 3).unwrap();
        let lat: Vec<&[f64]> = recs.iter().map(|r| r.latent.values()).collect();
        assert_eq!(lat, vec![&[-1.0, 0.0][..], &[0.0, 0.0][..], &[1.0, 0.0][..]]);
        let two = lr_variations(0, &w(&[0.0, 0.0]), &d, 2).unwrap();
        assert_eq!(two.iter().map(|r| r.parameter).collect::<Vec<_>>(), vec![-1.0, 1.0]);
        assert!(lr_variations(0, &w(&[0.0, 0.0]), &d, 1).is_err());
        let smile = dir(Attribute::ExpressionPair(0, 1), 2, 1, 1.0, 1.0);
        assert!(matches!(lr_variations(0, &w(&[0.0, 0.0]), &smile, 3), Err(GenerationError::NotLeftRight(_))));
    }

    #[test]
    fn linspace_is_symmetric() {
        for n in 2..30 {
            let v = linspace_symmetric(1.37, n);
            assert_eq!(v.len(), n);
            assert_eq!(v[0], -1.37);
            assert_eq!(v[n - 1], 1.37);
            for k in 0..n {
                assert_eq!(v[k], -v[n - 1 - k]);
            }
            assert_eq!(v.contains(&0.0), n % 2 == 1);
            let step = v[1] - v[0];
            assert!(v.windows(2).all(|p| (p[1] - p[0] - step).abs() < 1e-12));
        }
    }

    #[test]
    fn expr_variation_examples() {
        let d = 2;
        let pairs = (1..=5u8).map(|j| dir(Attribute::ExpressionPair(0, j), d, 1, 0.3, 0.7));
        let bank = DirectionBank::new(dir(Attribute::Pose, d, 0, 1.0, 1.0), dir(Attribute::Illumination, d, 0, 1.0, 1.0), pairs).unwrap();
        let recs = expr_variations(3, &w(&[4.0, -0.2]), &bank).unwrap();
        assert_eq!(recs.len(), 5);
        assert_eq!(recs[0].latent.values(), &[4.0, 0.7]);
        assert_eq!(recs.iter().map(|r| r.parameter).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(recs.iter().all(|r| r.identity_id == 3 && r.covariate == Covariate::Expression));
    }

    #[test]
    fn config_validation() {
        assert!(GenerationConfig { n_var: 1, ..Default::default() }.validate().is_err());
        assert!(GenerationConfig { ict: 2.5, ..Default::default() }.validate().is_err());
        assert!(GenerationConfig { n_identities: 0, ..Default::default() }.validate().is_err());
        assert!(GenerationConfig::default().validate().is_ok());
    }
}
