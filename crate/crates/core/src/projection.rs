//! Recovering `W` latents for observables through an oracle.
//!
//! Damped Gauss–Newton from the zero latent with a fixed step: each iteration
//! moves `step · J⁺·(o − synth(w))`, where `J` is a forward-difference
//! Jacobian of the synthesis map. For oracles that declare linear synthesis
//! the Jacobian is measured once and is exact, so the residual shrinks by
//! exactly `1 − step` per iteration.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{GeometryError, LatentVector};
use crate::oracle::{Oracle, OracleError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionOptions {
    /// Relative L2 reconstruction error at which a projection is accepted.
    pub tol: f64,
    pub max_iters: usize,
    /// Fraction of the Gauss–Newton step taken per iteration, in (0, 1].
    pub step: f64,
    /// Finite-difference increment for non-linear oracles.
    pub fd_step: f64,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iters: 100, step: 0.5, fd_step: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionResult {
    pub latent: LatentVector<f64>,
    /// `‖synth(w) − o‖ / ‖o‖` (absolute when `o = 0`).
    pub reconstruction_error: f64,
    pub iterations: usize,
}

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("projection of observable {index} did not reach tolerance {tol} after {iterations} iterations (error {})", best.reconstruction_error)]
    NonConvergence { index: usize, tol: f64, iterations: usize, best: Box<ProjectionResult> },
    #[error("invalid projection options: {0}")]
    InvalidOptions(String),
    #[error("observable {index}: expected dimension {expected}, got {actual}")]
    DimensionMismatch { index: usize, expected: usize, actual: usize },
    #[error("synthesis Jacobian is rank deficient")]
    Singular,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn jacobian<O: Oracle + ?Sized>(oracle: &mut O, at: &[f64], h: f64) -> Result<DMatrix<f64>, OracleError> {
    let d = at.len();
    let mut probes = Vec::with_capacity(d + 1);
    probes.push(at.to_vec());
    for k in 0..d {
        let mut p = at.to_vec();
        p[k] += h;
        probes.push(p);
    }
    let out = oracle.synthesize(&probes)?;
    let base = DVector::from_column_slice(&out[0]);
    let m = base.len();
    Ok(DMatrix::from_fn(m, d, |i, k| (out[k + 1][i] - base[i]) / h))
}

fn pseudo_inverse(j: DMatrix<f64>) -> Result<DMatrix<f64>, ProjectionError> {
    let svd = j.svd(true, true);
    let max_sv = svd.singular_values.max();
    let eps = max_sv * 1e-12 * svd.singular_values.len() as f64;
    if svd.singular_values.iter().any(|&s| s <= eps) {
        return Err(ProjectionError::Singular);
    }
    svd.pseudo_inverse(eps).map_err(|_| ProjectionError::Singular)
}

fn rel_error(residual: &DVector<f64>, target_norm: f64) -> f64 {
    let r = residual.norm();
    if target_norm > 0.0 {
        r / target_norm
    } else {
        r
    }
}

/// Projects a batch of observables; one `synthesize` call per iteration covers
/// every still-unconverged observable.
pub fn project_observables<O: Oracle + ?Sized>(
    oracle: &mut O,
    observables: &[Vec<f64>],
    options: &ProjectionOptions,
) -> Result<Vec<ProjectionResult>, ProjectionError> {
    let positive = |v: f64| v > 0.0;
    if !positive(options.tol) || !(positive(options.step) && options.step <= 1.0) || !positive(options.fd_step) {
        return Err(ProjectionError::InvalidOptions(format!("{options:?}")));
    }
    let info = oracle.info()?;
    let (d, m) = (info.latent_dim, info.observable_dim);
    for (index, o) in observables.iter().enumerate() {
        if o.len() != m {
            return Err(ProjectionError::DimensionMismatch { index, expected: m, actual: o.len() });
        }
    }
    let targets: Vec<DVector<f64>> = observables.iter().map(|o| DVector::from_column_slice(o)).collect();
    let norms: Vec<f64> = targets.iter().map(|t| t.norm()).collect();
    let zero = vec![0.0; d];
    let shared_pinv = if info.linear_synthesis {
        // exact for a linear map regardless of the increment
        Some(pseudo_inverse(jacobian(oracle, &zero, 1.0)?)?)
    } else {
        None
    };

    let mut latents: Vec<DVector<f64>> = vec![DVector::zeros(d); observables.len()];
    let mut best: Vec<Option<(f64, DVector<f64>, usize)>> = vec![None; observables.len()];
    let mut done: Vec<Option<ProjectionResult>> = vec![None; observables.len()];

    for iteration in 0..=options.max_iters {
        let active: Vec<usize> = (0..observables.len()).filter(|&i| done[i].is_none()).collect();
        if active.is_empty() {
            break;
        }
        let current: Vec<Vec<f64>> = active.iter().map(|&i| latents[i].iter().copied().collect()).collect();
        let synthesized = oracle.synthesize(&current)?;
        for (slot, &i) in active.iter().enumerate() {
            let residual = &targets[i] - DVector::from_column_slice(&synthesized[slot]);
            let err = rel_error(&residual, norms[i]);
            if best[i].as_ref().is_none_or(|(e, _, _)| err < *e) {
                best[i] = Some((err, latents[i].clone(), iteration));
            }
            if err <= options.tol {
                let latent = LatentVector::w(latents[i].iter().copied().collect())?;
                done[i] = Some(ProjectionResult { latent, reconstruction_error: err, iterations: iteration });
                continue;
            }
            if iteration == options.max_iters {
                let (err, w, at) = best[i].take().expect("best recorded above");
                let best = ProjectionResult { latent: LatentVector::w(w.iter().copied().collect())?, reconstruction_error: err, iterations: at };
                return Err(ProjectionError::NonConvergence { index: i, tol: options.tol, iterations: iteration, best: Box::new(best) });
            }
            let pinv = match &shared_pinv {
                Some(p) => p.clone(),
                None => {
                    let at: Vec<f64> = latents[i].iter().copied().collect();
                    pseudo_inverse(jacobian(oracle, &at, options.fd_step)?)?
                }
            };
            latents[i] += (pinv * residual) * options.step;
        }
    }
    Ok(done.into_iter().map(|r| r.expect("every observable converged or returned early")).collect())
}

pub fn project_observable<O: Oracle + ?Sized>(
    oracle: &mut O,
    observable: &[f64],
    options: &ProjectionOptions,
) -> Result<ProjectionResult, ProjectionError> {
    let mut out = project_observables(oracle, &[observable.to_vec()], options)?;
    Ok(out.pop().expect("one result per observable"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::OracleInfo;
    use crate::toy::{ToyWorld, ToyWorldConfig};

    fn world() -> ToyWorld {
        ToyWorld::new(ToyWorldConfig { latent_dim: 12, ..Default::default() }).unwrap()
    }

    #[test]
    fn recovers_toy_latents() {
        let mut w = world();
        let truth: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin() * 2.0).collect();
        let o = w.toy_synthesize(&truth).unwrap();
        let opts = ProjectionOptions { tol: 1e-9, ..Default::default() };
        let r = project_observable(&mut w, &o, &opts).unwrap();
        let err = truth.iter().zip(r.latent.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
            / truth.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(err < 1e-6);
        assert!(r.reconstruction_error <= 1e-9);
    }

    #[test]
    fn zero_observable_is_a_fixed_point() {
        let mut w = world();
        let r = project_observable(&mut w, &[0.0; 12], &ProjectionOptions::default()).unwrap();
        assert_eq!(r.latent.values(), &[0.0; 12]);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn forced_failure_carries_best_so_far() {
        let mut w = world();
        let o = w.toy_synthesize(&[1.0; 12]).unwrap();
        let opts = ProjectionOptions { tol: 1e-12, max_iters: 1, ..Default::default() };
        match project_observable(&mut w, &o, &opts) {
            Err(ProjectionError::NonConvergence { best, iterations, .. }) => {
                assert_eq!(iterations, 1);
                assert!((best.reconstruction_error - 0.5).abs() < 1e-9);
            }
            other => panic!("expected NonConvergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_input() {
        let mut w = world();
        assert!(matches!(
            project_observable(&mut w, &[1.0; 12], &ProjectionOptions { tol: 0.0, ..Default::default() }),
            Err(ProjectionError::InvalidOptions(_))
        ));
        assert!(matches!(
            project_observable(&mut w, &[1.0; 5], &ProjectionOptions::default()),
            Err(ProjectionError::DimensionMismatch { .. })
        ));
    }

    /// Smooth non-linear synthesis: o = w + 0.1·tanh(w), declared non-linear.
    struct Bent;

    impl Oracle for Bent {
        fn info(&mut self) -> Result<OracleInfo, OracleError> {
            Ok(OracleInfo { latent_dim: 3, observable_dim: 3, embedding_dim: 3, linear_synthesis: false })
        }
        fn map(&mut self, z: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OracleError> {
            Ok(z.to_vec())
        }
        fn synthesize(&mut self, w: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OracleError> {
            Ok(w.iter().map(|v| v.iter().map(|x| x + 0.1 * x.tanh()).collect()).collect())
        }
        fn embed(&mut self, o: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OracleError> {
            Ok(o.to_vec())
        }
    }

    #[test]
    fn converges_on_nonlinear_oracles() {
        let truth = [0.8, -1.2, 0.3];
        let o = Bent.synthesize(&[truth.to_vec()]).unwrap().remove(0);
        let r = project_observable(&mut Bent, &o, &ProjectionOptions { tol: 1e-8, ..Default::default() }).unwrap();
        assert!(truth.iter().zip(r.latent.values()).all(|(a, b)| (a - b).abs() < 1e-6));
    }
}
