//! Deterministic linear generator + embedder with known attribute axes.
//!
//! Latents map to `W` by a fixed rotation, observables are a second fixed
//! rotation of `W`, and embeddings keep the component of `W` orthogonal to the
//! seven attribute axes (plus a `leakage` fraction of the attribute part and a
//! small hash-seeded noise). Every semantic direction therefore has a ground
//! truth the pipeline can be checked against.
//!
//! Axis layout: 0 = pose, 1 = illumination, `1 + j` = expression `j` for
//! `j = 1..=5`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Attribute, EXPRESSIONS};
use crate::oracle::{Oracle, OracleError, OracleInfo};
use crate::rng;

pub const ATTRIBUTE_AXES: usize = 7;

/// Standard deviation of the isotropic spread around labelled corpus centres.
pub const CORPUS_SPREAD: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToyWorldError {
    #[error("invalid toy world config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("zero vector")]
    ZeroVector,
    #[error("unknown attribute {0}")]
    UnknownAttribute(Attribute),
    #[error("labelled corpus needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyWorldConfig {
    pub latent_dim: usize,
    pub n_attribute_axes: usize,
    /// Fraction of the attribute component that leaks into embeddings.
    pub leakage: f64,
    pub noise_scale: f64,
    /// Attribute coordinate of labelled populations (class A at `-offset`,
    /// class B at `+offset`).
    pub class_offset: f64,
    /// Per-axis override of `class_offset`, in axis order.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attribute_offsets: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for ToyWorldConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            n_attribute_axes: ATTRIBUTE_AXES,
            leakage: 0.05,
            noise_scale: 0.01,
            class_offset: 1.5,
            attribute_offsets: None,
            seed: 0,
        }
    }
}

impl ToyWorldConfig {
    pub fn validate(&self) -> Result<(), ToyWorldError> {
        let bad = |m: String| Err(ToyWorldError::InvalidConfig(m));
        if self.n_attribute_axes != ATTRIBUTE_AXES {
            return bad(format!("n_attribute_axes must be {ATTRIBUTE_AXES}"));
        }
        if self.latent_dim <= self.n_attribute_axes {
            return bad(format!("latent_dim {} must exceed n_attribute_axes {}", self.latent_dim, self.n_attribute_axes));
        }
        if !(0.0..=1.0).contains(&self.leakage) {
            return bad(format!("leakage {} outside [0, 1]", self.leakage));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad(format!("noise_scale {} must be finite and >= 0", self.noise_scale));
        }
        if !(self.class_offset > 0.0 && self.class_offset.is_finite()) {
            return bad(format!("class_offset {} must be finite and > 0", self.class_offset));
        }
        if let Some(offsets) = &self.attribute_offsets {
            if offsets.len() != self.n_attribute_axes || offsets.iter().any(|&o| !(o > 0.0 && o.is_finite())) {
                return bad("attribute_offsets needs one finite positive value per axis".into());
            }
        }
        Ok(())
    }

    pub fn axis_offset(&self, axis: usize) -> f64 {
        self.attribute_offsets.as_ref().map_or(self.class_offset, |o| o[axis])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Class {
    A,
    B,
}

impl Class {
    /// SVM label: A → −1, B → +1.
    pub fn label(self) -> f64 {
        match self {
            Class::A => -1.0,
            Class::B => 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ToyWorld {
    config: ToyWorldConfig,
    /// `d × 7`, orthonormal columns.
    attribute_axes: DMatrix<f64>,
    mapping: DMatrix<f64>,
    mixing: DMatrix<f64>,
    embed_map: DMatrix<f64>,
}

fn gaussian_matrix(rows: usize, cols: usize, seed: u64, domain: &str) -> DMatrix<f64> {
    let mut r = rng::stream(seed, domain, &[rows as u64, cols as u64]);
    // column-major fill
    DMatrix::from_fn(rows, cols, |_, _| r.sample(StandardNormal))
}

fn orthonormal(rows: usize, cols: usize, seed: u64, domain: &str) -> DMatrix<f64> {
    gaussian_matrix(rows, cols, seed, domain).qr().q()
}

fn to_dvector(v: &[f64], expected: usize) -> Result<DVector<f64>, ToyWorldError> {
    if v.len() != expected {
        return Err(ToyWorldError::DimensionMismatch { expected, actual: v.len() });
    }
    Ok(DVector::from_column_slice(v))
}

impl ToyWorld {
    pub fn new(config: ToyWorldConfig) -> Result<Self, ToyWorldError> {
        config.validate()?;
        let d = config.latent_dim;
        let seed = config.seed;
        Ok(Self {
            attribute_axes: orthonormal(d, config.n_attribute_axes, seed, "toy/axes"),
            mapping: orthonormal(d, d, seed, "toy/mapping"),
            mixing: orthonormal(d, d, seed, "toy/mixing"),
            embed_map: orthonormal(d, d, seed, "toy/embed"),
            config,
        })
    }

    pub fn config(&self) -> &ToyWorldConfig {
        &self.config
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    /// Unit ground-truth axis `k` in `W`.
    pub fn axis(&self, k: usize) -> Vec<f64> {
        self.attribute_axes.column(k).iter().copied().collect()
    }

    pub fn attribute_axes(&self) -> &DMatrix<f64> {
        &self.attribute_axes
    }

    pub fn mixing_map(&self) -> &DMatrix<f64> {
        &self.mixing
    }

    /// Ground-truth unit normal for an attribute, oriented toward class B.
    pub fn ground_truth_direction(&self, attribute: Attribute) -> Result<Vec<f64>, ToyWorldError> {
        let (a, b) = (self.class_coordinates(attribute, Class::A)?, self.class_coordinates(attribute, Class::B)?);
        let diff = DVector::from_iterator(ATTRIBUTE_AXES, b.iter().zip(&a).map(|(x, y)| x - y));
        let v = &self.attribute_axes * diff;
        Ok(v.normalize().iter().copied().collect())
    }

    /// Attribute-axis coordinates of the centre of a labelled population.
    ///
    /// Expression `e` has all five expression coordinates at `-offset` except
    /// coordinate `e` (for `e ≥ 1`) at `+offset`; neutral has none raised.
    pub fn class_coordinates(&self, attribute: Attribute, class: Class) -> Result<[f64; ATTRIBUTE_AXES], ToyWorldError> {
        if !attribute.is_valid() {
            return Err(ToyWorldError::UnknownAttribute(attribute));
        }
        let mut c = [0.0; ATTRIBUTE_AXES];
        let sign = class.label();
        match attribute {
            Attribute::Pose => c[0] = sign * self.config.axis_offset(0),
            Attribute::Illumination => c[1] = sign * self.config.axis_offset(1),
            Attribute::ExpressionPair(i, j) => {
                let expr = match class {
                    Class::A => i,
                    Class::B => j,
                };
                for e in 1..EXPRESSIONS.len() {
                    let axis = 1 + e;
                    let raised = e == expr as usize;
                    c[axis] = if raised { 1.0 } else { -1.0 } * self.config.axis_offset(axis);
                }
            }
        }
        Ok(c)
    }

    pub fn toy_mapping(&self, z: &[f64]) -> Result<Vec<f64>, ToyWorldError> {
        let z = to_dvector(z, self.latent_dim())?;
        Ok((&self.mapping * z).iter().copied().collect())
    }

    pub fn toy_unmap(&self, w: &[f64]) -> Result<Vec<f64>, ToyWorldError> {
        let w = to_dvector(w, self.latent_dim())?;
        Ok(self.mapping.tr_mul(&w).iter().copied().collect())
    }

    pub fn toy_synthesize(&self, w: &[f64]) -> Result<Vec<f64>, ToyWorldError> {
        let w = to_dvector(w, self.latent_dim())?;
        Ok((&self.mixing * w).iter().copied().collect())
    }

    /// Exact inverse of [`Self::toy_synthesize`].
    pub fn toy_project(&self, o: &[f64]) -> Result<Vec<f64>, ToyWorldError> {
        let o = to_dvector(o, self.latent_dim())?;
        Ok(self.mixing.tr_mul(&o).iter().copied().collect())
    }

    pub fn toy_embed(&self, o: &[f64]) -> Result<Vec<f64>, ToyWorldError> {
        let w = DVector::from_vec(self.toy_project(o)?);
        let coords = self.attribute_axes.tr_mul(&w);
        let w_attr = &self.attribute_axes * coords;
        let w_id = &w - &w_attr;
        let mut e = &self.embed_map * (w_id + w_attr * self.config.leakage);
        if self.config.noise_scale > 0.0 {
            let bits: Vec<u64> = w.iter().map(|v| v.to_bits()).collect();
            let mut r = rng::stream(self.config.seed, "toy/noise", &bits);
            for v in e.iter_mut() {
                let n: f64 = r.sample(StandardNormal);
                *v += self.config.noise_scale * n;
            }
        }
        let n = e.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(ToyWorldError::ZeroVector);
        }
        Ok((e / n).iter().copied().collect())
    }

    /// `n` observables of one labelled population, deterministic in
    /// `(seed, attribute, class, n)`.
    pub fn make_labeled_corpus(&self, attribute: Attribute, class: Class, n: usize) -> Result<Vec<(Vec<f64>, Class)>, ToyWorldError> {
        if n < 2 {
            return Err(ToyWorldError::TooFewSamples(n));
        }
        let centre = DVector::from_column_slice(&self.class_coordinates(attribute, class)?);
        let centre = &self.attribute_axes * centre;
        let (code_a, code_b) = match attribute {
            Attribute::Pose => (0, 0),
            Attribute::Illumination => (1, 0),
            Attribute::ExpressionPair(i, j) => (2 + i as u64, j as u64),
        };
        let mut r = rng::stream(self.config.seed, "toy/corpus", &[code_a, code_b, class as u64, n as u64]);
        let d = self.latent_dim();
        let samples = (0..n)
            .map(|_| {
                let spread = DVector::from_fn(d, |_, _| CORPUS_SPREAD * r.sample::<f64, _>(StandardNormal));
                let w = &centre + spread;
                ((&self.mixing * w).iter().copied().collect(), class)
            })
            .collect();
        Ok(samples)
    }

    /// Wire-free view of the toy world as an oracle description.
    pub fn oracle_info(&self) -> OracleInfo {
        let d = self.latent_dim();
        OracleInfo { latent_dim: d, observable_dim: d, embedding_dim: d, linear_synthesis: true }
    }
}

fn batch(input: &[Vec<f64>], f: impl Fn(&[f64]) -> Result<Vec<f64>, ToyWorldError>) -> Result<Vec<Vec<f64>>, OracleError> {
    input.iter().map(|v| f(v).map_err(OracleError::from)).collect()
}

impl Oracle for ToyWorld {
    fn info(&mut self) -> Result<OracleInfo, OracleError> {
        Ok(self.oracle_info())
    }

    fn map(&mut self, z: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OracleError> {
        batch(z, |v| self.toy_mapping(v))
    }

    fn synthesize(&mut self, w: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OracleError> {
        batch(w, |v| self.toy_synthesize(v))
    }

    fn embed(&mut self, observables: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OracleError> {
        batch(observables, |v| self.toy_embed(v))
    }
}
