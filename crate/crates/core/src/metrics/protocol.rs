use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{MetricError, ScoreSet};
use crate::geometry::{similarity, EmbeddingVector};
use crate::manifest::{Covariate, DatasetManifest};

/// Enrolment is always the reference; the probe varies in one covariate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Protocol {
    /// Illumination.
    U,
    /// Expression.
    E,
    /// Pose.
    P,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::U, Protocol::E, Protocol::P];

    pub fn covariate(self) -> Covariate {
        match self {
            Protocol::U => Covariate::Illumination,
            Protocol::E => Covariate::Expression,
            Protocol::P => Covariate::Pose,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::U => "U",
            Protocol::E => "E",
            Protocol::P => "P",
        })
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "U" | "ILLUMINATION" => Ok(Protocol::U),
            "E" | "EXPRESSION" => Ok(Protocol::E),
            "P" | "POSE" => Ok(Protocol::P),
            _ => Err(format!("unknown protocol {s:?} (expected U, E or P)")),
        }
    }
}

fn unit(values: &[f64]) -> Result<EmbeddingVector<f64>, MetricError> {
    EmbeddingVector::new(values.to_vec()).map_err(|e| MetricError::Embedding(e.to_string()))
}

/// Genuine: each reference against its own identity's probes. Impostor: each
/// reference against every other identity's probes. Both in identity order.
pub fn build_protocol_scores(manifest: &DatasetManifest, protocol: Protocol) -> Result<ScoreSet<f64>, MetricError> {
    let covariate = protocol.covariate();
    let mut references = BTreeMap::new();
    for r in manifest.references() {
        references.insert(r.identity_id, unit(manifest.embedding(r))?);
    }
    let mut probes: BTreeMap<usize, Vec<EmbeddingVector<f64>>> = BTreeMap::new();
    for r in manifest.records.iter().filter(|r| r.covariate == covariate) {
        probes.entry(r.identity_id).or_default().push(unit(manifest.embedding(r))?);
    }
    if probes.is_empty() {
        return Err(MetricError::CovariateAbsent(covariate.as_str()));
    }
    if let Some(id) = probes.keys().find(|id| !references.contains_key(id)) {
        return Err(MetricError::MissingReference(*id));
    }
    let sim = |a: &EmbeddingVector<f64>, b: &EmbeddingVector<f64>| similarity(a, b).map_err(|e| MetricError::Embedding(e.to_string()));
    let mut scores = ScoreSet::default();
    for (id, reference) in &references {
        for (other, list) in &probes {
            let target = if other == id { &mut scores.genuine } else { &mut scores.impostor };
            for p in list {
                target.push(sim(reference, p)?);
            }
        }
    }
    Ok(scores)
}
