//! Latent vectors, identity embeddings and attribute hyperplanes.
//!
//! A [`SemanticDirection`] is an oriented hyperplane `{w : n·w + b = 0}` with a
//! unit normal `n`. Its two scales record how far, on average, each labelled
//! population sits from the plane; they bound the edits applied later.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{dot, norm, Scalar};

/// Tolerance on `‖normal‖ = 1` for semantic directions.
pub const NORMAL_TOLERANCE: f64 = 1e-9;
/// Tolerance on `‖e‖ = 1` for embeddings returned by an embedder.
pub const EMBEDDING_TOLERANCE: f64 = 1e-6;

/// Names of the six expressions, indexed 0..=5.
pub const EXPRESSIONS: [&str; 6] = ["neutral", "smile", "disgust", "scream", "squint", "surprise"];
pub const NEUTRAL: u8 = 0;
pub const SMILE: u8 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("vector contains a non-finite component")]
    NonFinite,
    #[error("embedding norm {0} is not 1")]
    NotUnitNorm(f64),
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("direction normal norm {0} is not 1")]
    BadNormal(f64),
    #[error("direction scales must be finite and non-negative")]
    BadScale,
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<(), GeometryError> {
    if expected == actual {
        Ok(())
    } else {
        Err(GeometryError::DimensionMismatch { expected, actual })
    }
}

fn check_finite<T: Scalar>(values: &[T]) -> Result<(), GeometryError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(GeometryError::NonFinite)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LatentSpace {
    Z,
    W,
}

/// A point in the generator's input (`Z`) or intermediate (`W`) latent space.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentVector<T> {
    space: LatentSpace,
    values: Vec<T>,
}

impl<T: Scalar> LatentVector<T> {
    pub fn new(space: LatentSpace, values: Vec<T>) -> Result<Self, GeometryError> {
        check_finite(&values)?;
        Ok(Self { space, values })
    }

    pub fn w(values: Vec<T>) -> Result<Self, GeometryError> {
        Self::new(LatentSpace::W, values)
    }

    pub fn z(values: Vec<T>) -> Result<Self, GeometryError> {
        Self::new(LatentSpace::Z, values)
    }

    pub fn zeros(space: LatentSpace, dim: usize) -> Self {
        Self { space, values: vec![T::zero(); dim] }
    }

    pub fn space(&self) -> LatentSpace {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// `self + alpha·direction`, same space.
    pub fn add_scaled(&self, alpha: T, direction: &[T]) -> Result<Self, GeometryError> {
        check_dim(self.dim(), direction.len())?;
        let values: Vec<T> = self.values.iter().zip(direction).map(|(&x, &d)| x + alpha * d).collect();
        Self::new(self.space, values)
    }
}

/// Unit-norm identity embedding produced by a face embedder.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> EmbeddingVector<T> {
    /// Wraps values that are already unit norm (within [`EMBEDDING_TOLERANCE`]).
    pub fn new(values: Vec<T>) -> Result<Self, GeometryError> {
        check_finite(&values)?;
        let n = norm(&values).to_f64().unwrap_or(f64::NAN);
        if (n - 1.0).abs() > EMBEDDING_TOLERANCE {
            return Err(GeometryError::NotUnitNorm(n));
        }
        Ok(Self { values })
    }

    pub fn normalize(mut values: Vec<T>) -> Result<Self, GeometryError> {
        check_finite(&values)?;
        let n = norm(&values);
        if n == T::zero() {
            return Err(GeometryError::ZeroVector);
        }
        values.iter_mut().for_each(|v| *v = *v / n);
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

/// Which covariate a hyperplane separates.
///
/// For `ExpressionPair(i, j)` the class-B side (positive distances) is
/// expression `j`; pairs are always stored with `i < j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Attribute {
    Pose,
    Illumination,
    ExpressionPair(u8, u8),
}

impl Attribute {
    pub fn expression_pair(i: u8, j: u8) -> Result<Self, GeometryError> {
        if i < j && (j as usize) < EXPRESSIONS.len() {
            Ok(Attribute::ExpressionPair(i, j))
        } else {
            Err(GeometryError::UnknownAttribute(format!("expression_{i}_{j}")))
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            Attribute::ExpressionPair(i, j) => i < j && (j as usize) < EXPRESSIONS.len(),
            _ => true,
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Attribute::Pose => f.write_str("pose"),
            Attribute::Illumination => f.write_str("illumination"),
            Attribute::ExpressionPair(i, j) => write!(f, "expression_{i}_{j}"),
        }
    }
}

impl FromStr for Attribute {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pose" => return Ok(Attribute::Pose),
            "illumination" => return Ok(Attribute::Illumination),
            _ => {}
        }
        let unknown = || GeometryError::UnknownAttribute(s.to_string());
        let rest = s.strip_prefix("expression_").ok_or_else(unknown)?;
        let (i, j) = rest.split_once('_').ok_or_else(unknown)?;
        let i: u8 = i.parse().map_err(|_| unknown())?;
        let j: u8 = j.parse().map_err(|_| unknown())?;
        Attribute::expression_pair(i, j).map_err(|_| unknown())
    }
}

impl Serialize for Attribute {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Attribute {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Oriented attribute hyperplane with per-population editing scales.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticDirection<T> {
    attribute: Attribute,
    normal: Vec<T>,
    bias: T,
    scale_neg: T,
    scale_pos: T,
}

impl<T: Scalar> SemanticDirection<T> {
    pub fn new(attribute: Attribute, normal: Vec<T>, bias: T, scale_neg: T, scale_pos: T) -> Result<Self, GeometryError> {
        check_finite(&normal)?;
        let n = norm(&normal).to_f64().unwrap_or(f64::NAN);
        if (n - 1.0).abs() > NORMAL_TOLERANCE {
            return Err(GeometryError::BadNormal(n));
        }
        if !bias.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        for s in [scale_neg, scale_pos] {
            if !s.is_finite() || s < T::zero() {
                return Err(GeometryError::BadScale);
            }
        }
        Ok(Self { attribute, normal, bias, scale_neg, scale_pos })
    }

    /// Builds a direction from an unnormalized hyperplane `raw·w + raw_bias = 0`.
    pub fn from_hyperplane(attribute: Attribute, raw: &[T], raw_bias: T, scale_neg: T, scale_pos: T) -> Result<Self, GeometryError> {
        let n = norm(raw);
        if n == T::zero() || !n.is_finite() {
            return Err(GeometryError::ZeroVector);
        }
        let normal = raw.iter().map(|&v| v / n).collect();
        Self::new(attribute, normal, raw_bias / n, scale_neg, scale_pos)
    }

    pub fn attribute(&self) -> Attribute {
        self.attribute
    }

    pub fn normal(&self) -> &[T] {
        &self.normal
    }

    pub fn bias(&self) -> T {
        self.bias
    }

    pub fn scale_neg(&self) -> T {
        self.scale_neg
    }

    pub fn scale_pos(&self) -> T {
        self.scale_pos
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    pub fn with_scales(mut self, scale_neg: T, scale_pos: T) -> Result<Self, GeometryError> {
        for s in [scale_neg, scale_pos] {
            if !s.is_finite() || s < T::zero() {
                return Err(GeometryError::BadScale);
            }
        }
        self.scale_neg = scale_neg;
        self.scale_pos = scale_pos;
        Ok(self)
    }

    /// Same hyperplane seen from the other side: normal and bias negated,
    /// scales swapped.
    pub fn flipped(&self) -> Self {
        Self {
            attribute: self.attribute,
            normal: self.normal.iter().map(|&v| -v).collect(),
            bias: -self.bias,
            scale_neg: self.scale_pos,
            scale_pos: self.scale_neg,
        }
    }

    /// Signed distance of raw coordinates to the hyperplane.
    pub fn distance_of(&self, values: &[T]) -> Result<T, GeometryError> {
        check_dim(self.dim(), values.len())?;
        Ok(dot(values, &self.normal) + self.bias)
    }
}

/// `wᵀn + b`; positive on the `scale_pos` side.
pub fn signed_distance<T: Scalar>(w: &LatentVector<T>, h: &SemanticDirection<T>) -> Result<T, GeometryError> {
    h.distance_of(w.values())
}

/// Orthogonal projection of `w` onto the hyperplane of `h`.
pub fn project_to_hyperplane<T: Scalar>(w: &LatentVector<T>, h: &SemanticDirection<T>) -> Result<LatentVector<T>, GeometryError> {
    let s = signed_distance(w, h)?;
    let values = w.values().iter().zip(h.normal()).map(|(&x, &n)| x - s * n).collect();
    LatentVector::new(w.space(), values)
}

/// Moves `w` along the normal of `h` until its signed distance equals `target`.
pub fn offset_to_distance<T: Scalar>(w: &LatentVector<T>, h: &SemanticDirection<T>, target: T) -> Result<LatentVector<T>, GeometryError> {
    if !target.is_finite() {
        return Err(GeometryError::NonFinite);
    }
    let s = signed_distance(w, h)?;
    w.add_scaled(target - s, h.normal())
}

/// `1 − aᵀb`, clamped to `[0, 2]`.
pub fn cosine_distance<T: Scalar>(a: &EmbeddingVector<T>, b: &EmbeddingVector<T>) -> Result<T, GeometryError> {
    check_dim(a.dim(), b.dim())?;
    let two = T::one() + T::one();
    Ok((T::one() - dot(a.values(), b.values())).max(T::zero()).min(two))
}

/// Similarity score used by every verification metric: `1 − cosine_distance`.
pub fn similarity<T: Scalar>(a: &EmbeddingVector<T>, b: &EmbeddingVector<T>) -> Result<T, GeometryError> {
    Ok(T::one() - cosine_distance(a, b)?)
}
