//! Attribute direction discovery: project labelled observables into `W`, fit
//! one linear SVM per attribute, record mean-distance editing scales.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::geometry::{check_dim, Attribute, GeometryError, LatentVector, SemanticDirection, EXPRESSIONS, NEUTRAL, SMILE};
use crate::oracle::{Oracle, OracleError};
use crate::projection::{project_observables, ProjectionError, ProjectionOptions};
use crate::rng::hex_digest;
use crate::scalar::Scalar;
use crate::svm::{self, SvmConfig};
use crate::toy::{Class, ToyWorld, ToyWorldError};

#[derive(Debug, Error)]
pub enum DiscoveryError {
    #[error("class {class:?} has {count} samples; at least 2 are required")]
    EmptyClass { class: Class, count: usize },
    #[error("all training latents are identical")]
    DegenerateData,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{attribute}: {source}")]
    Attribute {
        attribute: Attribute,
        #[source]
        source: Box<DiscoveryError>,
    },
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("corpus: {0}")]
    Corpus(String),
    #[error("invalid direction bank: {0}")]
    InvalidBank(String),
    #[error("bank file: {0}")]
    Io(#[from] std::io::Error),
    #[error("bank file: {0}")]
    Json(#[from] serde_json::Error),
}

impl DiscoveryError {
    fn tagged(self, attribute: Attribute) -> Self {
        DiscoveryError::Attribute { attribute, source: Box::new(self) }
    }
}

/// Fits a semantic direction separating class A (negative side) from class B.
pub fn fit_direction<T: Scalar>(
    attribute: Attribute,
    latents_a: &[LatentVector<T>],
    latents_b: &[LatentVector<T>],
    config: &SvmConfig<T>,
) -> Result<SemanticDirection<T>, DiscoveryError> {
    for (class, list) in [(Class::A, latents_a), (Class::B, latents_b)] {
        if list.len() < 2 {
            return Err(DiscoveryError::EmptyClass { class, count: list.len() });
        }
    }
    let dim = latents_a[0].dim();
    for l in latents_a.iter().chain(latents_b) {
        check_dim(dim, l.dim())?;
    }
    let first = latents_a[0].values();
    if latents_a.iter().chain(latents_b).all(|l| l.values() == first) {
        return Err(DiscoveryError::DegenerateData);
    }
    let a: Vec<&[T]> = latents_a.iter().map(|l| l.values()).collect();
    let b: Vec<&[T]> = latents_b.iter().map(|l| l.values()).collect();
    let plane = svm::fit(&a, &b, config);
    let unscaled = SemanticDirection::from_hyperplane(attribute, &plane.weights, plane.bias, T::zero(), T::zero())
        .map_err(|_| DiscoveryError::DegenerateData)?;
    let scale_neg = mean_abs_distance(&unscaled, &a)?;
    let scale_pos = mean_abs_distance(&unscaled, &b)?;
    Ok(unscaled.with_scales(scale_neg, scale_pos)?)
}

fn mean_abs_distance<T: Scalar>(h: &SemanticDirection<T>, points: &[&[T]]) -> Result<T, GeometryError> {
    let mut total = T::zero();
    for p in points {
        total = total + h.distance_of(p)?.abs();
    }
    Ok(total / T::from_count(points.len()))
}

/// All semantic directions for one latent space.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionBank {
    latent_dim: usize,
    pose: SemanticDirection<f64>,
    illumination: SemanticDirection<f64>,
    expression_pairs: BTreeMap<(u8, u8), SemanticDirection<f64>>,
}

impl DirectionBank {
    pub fn new(
        pose: SemanticDirection<f64>,
        illumination: SemanticDirection<f64>,
        expression_pairs: impl IntoIterator<Item = SemanticDirection<f64>>,
    ) -> Result<Self, DiscoveryError> {
        let latent_dim = pose.dim();
        let invalid = |m: String| Err(DiscoveryError::InvalidBank(m));
        if pose.attribute() != Attribute::Pose || illumination.attribute() != Attribute::Illumination {
            return invalid("pose/illumination slots hold the wrong attribute".into());
        }
        let mut pairs = BTreeMap::new();
        for dir in expression_pairs {
            let Attribute::ExpressionPair(i, j) = dir.attribute() else {
                return invalid(format!("{} is not an expression pair", dir.attribute()));
            };
            if pairs.insert((i, j), dir).is_some() {
                return invalid(format!("duplicate direction expression_{i}_{j}"));
            }
        }
        for j in 1..EXPRESSIONS.len() as u8 {
            if !pairs.contains_key(&(NEUTRAL, j)) {
                return invalid(format!("missing direction expression_0_{j}"));
            }
        }
        if illumination.dim() != latent_dim || pairs.values().any(|d| d.dim() != latent_dim) {
            return invalid("directions disagree on latent dimension".into());
        }
        Ok(Self { latent_dim, pose, illumination, expression_pairs: pairs })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn pose(&self) -> &SemanticDirection<f64> {
        &self.pose
    }

    pub fn illumination(&self) -> &SemanticDirection<f64> {
        &self.illumination
    }

    /// Neutral-to-smile direction used for expression neutralization.
    pub fn smile(&self) -> &SemanticDirection<f64> {
        &self.expression_pairs[&(NEUTRAL, SMILE)]
    }

    pub fn get(&self, attribute: Attribute) -> Option<&SemanticDirection<f64>> {
        match attribute {
            Attribute::Pose => Some(&self.pose),
            Attribute::Illumination => Some(&self.illumination),
            Attribute::ExpressionPair(i, j) => self.expression_pairs.get(&(i, j)),
        }
    }

    /// Pose, illumination, then expression pairs in `(i, j)` order.
    pub fn directions(&self) -> impl Iterator<Item = &SemanticDirection<f64>> {
        [&self.pose, &self.illumination].into_iter().chain(self.expression_pairs.values())
    }

    pub fn len(&self) -> usize {
        2 + self.expression_pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bank serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DiscoveryError> {
        let file: BankFile = serde_json::from_str(text)?;
        let mut dirs = Vec::with_capacity(file.directions.len());
        for d in file.directions {
            if d.normal.len() != file.latent_dim {
                return Err(DiscoveryError::InvalidBank(format!("{} has dimension {}", d.attribute, d.normal.len())));
            }
            dirs.push(SemanticDirection::new(d.attribute, d.normal, d.bias, d.scale_neg, d.scale_pos)?);
        }
        let take = |dirs: &mut Vec<SemanticDirection<f64>>, a: Attribute| {
            let pos = dirs.iter().position(|d| d.attribute() == a);
            pos.map(|p| dirs.remove(p)).ok_or_else(|| DiscoveryError::InvalidBank(format!("missing direction {a}")))
        };
        let pose = take(&mut dirs, Attribute::Pose)?;
        let illumination = take(&mut dirs, Attribute::Illumination)?;
        Self::new(pose, illumination, dirs)
    }

    pub fn save(&self, path: &Path) -> Result<(), DiscoveryError> {
        let mut text = self.to_json();
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DiscoveryError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        hex_digest(self.to_json().as_bytes())
    }
}

/// 17 significant digits, which round-trips every f64.
fn float17(v: f64) -> Box<RawValue> {
    RawValue::from_string(format!("{v:.16e}")).expect("formatted float is valid JSON")
}

struct DirectionJson<'a>(&'a SemanticDirection<f64>);

impl Serialize for DirectionJson<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let d = self.0;
        let mut s = serializer.serialize_struct("Direction", 5)?;
        s.serialize_field("attribute", &d.attribute())?;
        s.serialize_field("normal", &d.normal().iter().map(|&v| float17(v)).collect::<Vec<_>>())?;
        s.serialize_field("bias", &float17(d.bias()))?;
        s.serialize_field("scale_neg", &float17(d.scale_neg()))?;
        s.serialize_field("scale_pos", &float17(d.scale_pos()))?;
        s.end()
    }
}

impl Serialize for DirectionBank {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("DirectionBank", 2)?;
        s.serialize_field("latent_dim", &self.latent_dim)?;
        s.serialize_field("directions", &self.directions().map(DirectionJson).collect::<Vec<_>>())?;
        s.end()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BankFile {
    latent_dim: usize,
    directions: Vec<DirectionRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DirectionRecord {
    attribute: Attribute,
    normal: Vec<f64>,
    bias: f64,
    scale_neg: f64,
    scale_pos: f64,
}

/// Source of labelled observables for direction fitting.
///
/// Subsets follow the acquisition protocol of a controlled face database:
/// pose directions come from neutral-expression, frontal-light captures;
/// illumination from neutral, frontal-view captures; expression pairs from
/// frontal-view, frontal-light captures.
pub trait LabeledCorpus {
    fn observables(&self, attribute: Attribute, class: Class) -> Result<Vec<Vec<f64>>, DiscoveryError>;
}

/// Labelled populations sampled from a toy world.
pub struct ToyCorpus<'a> {
    pub world: &'a ToyWorld,
    pub per_class: usize,
}

impl LabeledCorpus for ToyCorpus<'_> {
    fn observables(&self, attribute: Attribute, class: Class) -> Result<Vec<Vec<f64>>, DiscoveryError> {
        let samples = self.world.make_labeled_corpus(attribute, class, self.per_class).map_err(|e: ToyWorldError| DiscoveryError::Corpus(e.to_string()))?;
        Ok(samples.into_iter().map(|(o, _)| o).collect())
    }
}

/// Which expression pairs to fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSet {
    /// `(0, j)` for `j = 1..=5`.
    #[default]
    FromNeutral,
    /// Every `(i, j)` with `i < j`.
    All,
}

impl PairSet {
    pub fn attributes(self) -> Vec<Attribute> {
        let mut out = vec![Attribute::Pose, Attribute::Illumination];
        let n = EXPRESSIONS.len() as u8;
        for i in 0..n {
            for j in i + 1..n {
                if i == NEUTRAL || self == PairSet::All {
                    out.push(Attribute::ExpressionPair(i, j));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiscoveryOptions {
    pub projection: ProjectionOptions,
    pub svm: SvmConfig<f64>,
    pub pairs: PairSet,
}


/// Projects every labelled subset, then fits all directions (in parallel).
pub fn discover_all_directions<O: Oracle + ?Sized, C: LabeledCorpus + ?Sized>(
    oracle: &mut O,
    corpus: &C,
    options: &DiscoveryOptions,
) -> Result<DirectionBank, DiscoveryError> {
    let attributes = options.pairs.attributes();
    let mut jobs = Vec::with_capacity(attributes.len());
    for &attribute in &attributes {
        let mut project = |class| -> Result<Vec<LatentVector<f64>>, DiscoveryError> {
            let obs = corpus.observables(attribute, class)?;
            let projected = project_observables(oracle, &obs, &options.projection)?;
            Ok(projected.into_iter().map(|p| p.latent).collect())
        };
        let a = project(Class::A).map_err(|e| e.tagged(attribute))?;
        let b = project(Class::B).map_err(|e| e.tagged(attribute))?;
        jobs.push((attribute, a, b));
    }
    let fitted: Vec<SemanticDirection<f64>> = jobs
        .par_iter()
        .map(|(attribute, a, b)| fit_direction(*attribute, a, b, &options.svm).map_err(|e| e.tagged(*attribute)))
        .collect::<Result<_, _>>()?;
    let mut it = fitted.into_iter();
    let pose = it.next().expect("pose fitted first");
    let illumination = it.next().expect("illumination fitted second");
    DirectionBank::new(pose, illumination, it)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng;
    use crate::scalar::dot;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn cloud(seed: u64, centre: f64, n: usize, d: usize) -> Vec<LatentVector<f64>> {
        let mut r = rng::stream(seed, "cloud", &[]);
        (0..n)
            .map(|_| {
                let mut v: Vec<f64> = (0..d).map(|_| 0.3 * r.sample::<f64, _>(StandardNormal)).collect();
                v[0] += centre;
                LatentVector::w(v).unwrap()
            })
            .collect()
    }

    fn unit_dir(attribute: Attribute, d: usize, k: usize, scale: f64) -> SemanticDirection<f64> {
        let mut n = vec![0.0; d];
        n[k] = 1.0;
        SemanticDirection::new(attribute, n, 0.0, scale, scale).unwrap()
    }

    pub(crate) fn axis_bank(d: usize) -> DirectionBank {
        let pairs = (1..=5).map(|j| unit_dir(Attribute::ExpressionPair(0, j), d, 1 + j as usize, 0.5 + j as f64 * 0.1));
        DirectionBank::new(unit_dir(Attribute::Pose, d, 0, 1.0), unit_dir(Attribute::Illumination, d, 1, 0.8), pairs).unwrap()
    }

    #[test]
    fn recovers_axis_of_separated_clouds() {
        let a = cloud(1, -1.5, 500, 32);
        let b = cloud(2, 1.5, 500, 32);
        let h = fit_direction(Attribute::Pose, &a, &b, &SvmConfig::default()).unwrap();
        assert!(h.normal()[0].abs() >= 0.99, "{:?}", h.normal()[0]);
        assert!(h.normal()[0] > 0.0);
        assert!((h.scale_neg() - 1.5).abs() < 0.1 && (h.scale_pos() - 1.5).abs() < 0.1);
    }

    #[test]
    fn scales_are_mean_absolute_distances() {
        let a = cloud(3, -1.0, 50, 8);
        let b = cloud(4, 1.2, 60, 8);
        let h = fit_direction(Attribute::Pose, &a, &b, &SvmConfig::default()).unwrap();
        let brute = |pts: &[LatentVector<f64>]| {
            pts.iter().map(|p| (dot(p.values(), h.normal()) + h.bias()).abs()).sum::<f64>() / pts.len() as f64
        };
        assert!((h.scale_neg() - brute(&a)).abs() <= 1e-12 * brute(&a));
        assert!((h.scale_pos() - brute(&b)).abs() <= 1e-12 * brute(&b));
    }

    #[test]
    fn swapping_classes_flips_the_direction() {
        let a = cloud(5, -1.0, 40, 6);
        let b = cloud(6, 1.0, 30, 6);
        let cfg = SvmConfig::default();
        let h = fit_direction(Attribute::Pose, &a, &b, &cfg).unwrap();
        let g = fit_direction(Attribute::Pose, &b, &a, &cfg).unwrap();
        assert_eq!(g, h.flipped());
    }

    #[test]
    fn degenerate_and_empty_inputs() {
        let p = LatentVector::w(vec![1.0, 2.0]).unwrap();
        let same = vec![p.clone(), p.clone()];
        assert!(matches!(fit_direction(Attribute::Pose, &same, &same, &SvmConfig::default()), Err(DiscoveryError::DegenerateData)));
        assert!(matches!(
            fit_direction(Attribute::Pose, &same[..1], &same, &SvmConfig::default()),
            Err(DiscoveryError::EmptyClass { class: Class::A, count: 1 })
        ));
        let other = vec![LatentVector::w(vec![1.0, 2.0, 3.0]).unwrap(); 2];
        assert!(matches!(fit_direction(Attribute::Pose, &same, &other, &SvmConfig::default()), Err(DiscoveryError::Geometry(_))));
    }

    #[test]
    fn pair_sets() {
        assert_eq!(PairSet::FromNeutral.attributes().len(), 7);
        assert_eq!(PairSet::All.attributes().len(), 2 + 15);
    }

    #[test]
    fn bank_requires_neutral_pairs() {
        let d = 8;
        let pairs = (1..=4).map(|j| unit_dir(Attribute::ExpressionPair(0, j), d, 1 + j as usize, 1.0));
        assert!(DirectionBank::new(unit_dir(Attribute::Pose, d, 0, 1.0), unit_dir(Attribute::Illumination, d, 1, 1.0), pairs).is_err());
    }

    #[test]
    fn bank_json_round_trip() {
        let mut bank = axis_bank(9);
        let tilted = SemanticDirection::from_hyperplane(Attribute::Pose, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9], -0.3, 1.0 / 3.0, 2.0f64.sqrt()).unwrap();
        bank.pose = tilted;
        let text = bank.to_json();
        assert!(text.contains("\"attribute\": \"expression_0_5\""));
        assert!(text.contains("3.3333333333333331e-1"));
        let back = DirectionBank::from_json(&text).unwrap();
        assert_eq!(back, bank);
        assert_eq!(back.to_json(), text);
        assert_eq!(back.fingerprint(), bank.fingerprint());
    }

    #[test]
    fn bank_json_rejects_bad_files() {
        let text = axis_bank(9).to_json();
        let broken = text.replacen("\"latent_dim\": 9", "\"latent_dim\": 10", 1);
        assert!(DirectionBank::from_json(&broken).is_err());
        let no_pose = text.replacen("\"pose\"", "\"expression_1_2\"", 1);
        assert!(DirectionBank::from_json(&no_pose).is_err());
    }
}
