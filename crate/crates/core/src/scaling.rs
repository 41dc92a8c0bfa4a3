//! Cost of generating references as the identity count grows, per ICT.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::directions::DirectionBank;
use crate::identity::{generate_references, GenerationConfig, GenerationError};
use crate::oracle::Oracle;
use crate::runtime::{fit_runtime_model, RuntimeFitError, RuntimeModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSample {
    pub identities: usize,
    pub cumulative_attempts: usize,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSeries {
    pub ict: f64,
    pub samples: Vec<ScalingSample>,
    /// Set when the attempt budget ran out before the last checkpoint.
    pub truncated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl ScalingSeries {
    /// Fit on the attempts count, which unlike wall time does not depend on
    /// the machine.
    pub fn fit_attempts(&self) -> Result<RuntimeModel<f64>, RuntimeFitError> {
        let pts: Vec<(f64, f64)> = self.samples.iter().map(|s| (s.identities as f64, s.cumulative_attempts as f64)).collect();
        fit_runtime_model(&pts)
    }
}

/// One reference-generation run per ICT value, all from the same seed,
/// sampled at each checkpoint identity count.
pub fn measure_scaling<O: Oracle + ?Sized>(
    base: &GenerationConfig,
    ict_values: &[f64],
    checkpoints: &[usize],
    oracle: &mut O,
    bank: &DirectionBank,
) -> Result<Vec<ScalingSeries>, GenerationError> {
    if checkpoints.is_empty() || checkpoints[0] == 0 || checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(GenerationError::BadCheckpoints);
    }
    let last = *checkpoints.last().expect("non-empty");
    let mut out = Vec::with_capacity(ict_values.len());
    for &ict in ict_values {
        let config = GenerationConfig { ict, n_identities: last, ..base.clone() };
        let start = Instant::now();
        let mut samples = Vec::new();
        let mut next = 0;
        let run = generate_references(&config, bank, oracle, |_, total| {
            next += 1;
            if checkpoints.contains(&next) {
                samples.push(ScalingSample { identities: next, cumulative_attempts: total, wall_seconds: start.elapsed().as_secs_f64() });
            }
        });
        let (truncated, failure) = match run {
            Ok(_) => (false, None),
            Err(e @ GenerationError::MaxAttemptsExceeded { .. }) => (true, Some(e.to_string())),
            Err(e) => return Err(e),
        };
        out.push(ScalingSeries { ict, samples, truncated, failure });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::directions::tests::axis_bank;
    use crate::toy::{ToyWorld, ToyWorldConfig};

    #[test]
    fn zero_ict_costs_one_attempt_per_identity() {
        let mut world = ToyWorld::new(ToyWorldConfig { latent_dim: 12, ..Default::default() }).unwrap();
        let bank = axis_bank(12);
        let base = GenerationConfig { seed: 5, ..Default::default() };
        let series = measure_scaling(&base, &[0.0], &[10, 20], &mut world, &bank).unwrap();
        assert_eq!(series.len(), 1);
        let got: Vec<_> = series[0].samples.iter().map(|s| (s.identities, s.cumulative_attempts)).collect();
        assert_eq!(got, vec![(10, 10), (20, 20)]);
        assert!(!series[0].truncated);
    }

    #[test]
    fn checkpoints_must_ascend() {
        let mut world = ToyWorld::new(ToyWorldConfig { latent_dim: 12, ..Default::default() }).unwrap();
        let bank = axis_bank(12);
        for bad in [vec![], vec![0, 3], vec![5, 5], vec![6, 2]] {
            let r = measure_scaling(&GenerationConfig::default(), &[0.1], &bad, &mut world, &bank);
            assert!(matches!(r, Err(GenerationError::BadCheckpoints)));
        }
    }

    #[test]
    fn exhausted_budget_truncates() {
        let mut world = ToyWorld::new(ToyWorldConfig { latent_dim: 12, ..Default::default() }).unwrap();
        let bank = axis_bank(12);
        let base = GenerationConfig { max_attempts_per_identity: 1, seed: 1, ..Default::default() };
        let series = measure_scaling(&base, &[1.9], &[2, 4], &mut world, &bank).unwrap();
        assert!(series[0].truncated);
        assert!(series[0].samples.is_empty());
    }
}
