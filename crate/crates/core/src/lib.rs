//! Synthetic identity datasets by latent-space editing, and verification
//! benchmarks over them.
//!
//! Generators and embedders sit behind the [`Oracle`] trait. The built-in
//! [`ToyWorld`] is a deterministic linear stand-in with known ground truth;
//! external models speak a JSON-lines protocol over a subprocess.

pub mod directions;
pub mod geometry;
pub mod identity;
pub mod manifest;
pub mod metrics;
pub mod oracle;
pub mod projection;
pub mod report;
pub mod rng;
pub mod runtime;
pub mod scalar;
pub mod scaling;
pub mod svm;
pub mod toy;
pub mod vecfile;

pub use directions::{discover_all_directions, fit_direction, DirectionBank, DiscoveryError, DiscoveryOptions, PairSet, ToyCorpus};
pub use geometry::{cosine_distance, offset_to_distance, project_to_hyperplane, signed_distance, similarity, Attribute, GeometryError, LatentSpace};
pub use identity::{generate_dataset, neutralize, new_identity, GenerationConfig, GenerationError, GenerationFailure};
pub use manifest::{Covariate, DatasetManifest, ManifestError};
pub use metrics::{fnmr_at_fmr, mgs, roc, sep, MetricError, Protocol};
pub use oracle::{Oracle, OracleEndpoint, OracleError, OracleInfo, OracleSpec};
pub use runtime::{fit_runtime_model, RuntimeFitError};
pub use scalar::Scalar;
pub use toy::{ToyWorld, ToyWorldConfig, ToyWorldError};
pub use vecfile::{read_vectors, write_vectors, VectorFileError, VectorMatrix};

pub type LatentVector = geometry::LatentVector<f64>;
pub type EmbeddingVector = geometry::EmbeddingVector<f64>;
pub type SemanticDirection = geometry::SemanticDirection<f64>;
pub type ScoreSet = metrics::ScoreSet<f64>;
pub type ScoreSummary = metrics::ScoreSummary<f64>;
pub type MetricResult = metrics::MetricResult<f64>;
pub type RocCurve = metrics::RocCurve<f64>;
pub type RuntimeModel = runtime::RuntimeModel<f64>;

pub type LatentVectorF32 = geometry::LatentVector<f32>;
pub type EmbeddingVectorF32 = geometry::EmbeddingVector<f32>;
pub type ScoreSetF32 = metrics::ScoreSet<f32>;

/// Exact summaries for MGS/SEP.
pub type Rational = num_rational::Rational64;
pub type RationalSummary = metrics::ScoreSummary<Rational>;
