//! Verification metrics over genuine/impostor similarity scores.
//!
//! Scores are similarities (higher = more alike) and a comparison is a match
//! when `score >= threshold`.

mod protocol;
mod uniqueness;

use std::cmp::Ordering;

use num_traits::Signed;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use protocol::{build_protocol_scores, Protocol};
pub use uniqueness::{cohort_scores, toy_reference_cohort, uniqueness_experiment, UniquenessOptions, UniquenessResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("empty genuine score set")]
    EmptyGenuine,
    #[error("empty impostor set")]
    EmptyImpostor,
    #[error("score set contains a non-finite value")]
    NonFinite,
    #[error("FMR target must lie in (0, 1]")]
    InvalidTarget,
    #[error("division by zero in {0}")]
    DivisionByZero(&'static str),
    #[error("manifest has no {0} variations")]
    CovariateAbsent(&'static str),
    #[error("manifest has no reference for identity {0}")]
    MissingReference(usize),
    #[error("empty embedding population: {0}")]
    EmptyPopulation(&'static str),
    #[error("embedding error: {0}")]
    Embedding(String),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet<T> {
    pub genuine: Vec<T>,
    pub impostor: Vec<T>,
}

impl<T: Scalar> ScoreSet<T> {
    pub fn new(genuine: Vec<T>, impostor: Vec<T>) -> Self {
        Self { genuine, impostor }
    }

    /// Both populations non-empty and finite.
    pub fn check(&self) -> Result<(), MetricError> {
        if self.genuine.is_empty() {
            return Err(MetricError::EmptyGenuine);
        }
        if self.impostor.is_empty() {
            return Err(MetricError::EmptyImpostor);
        }
        if self.genuine.iter().chain(&self.impostor).any(|v| !v.is_finite()) {
            return Err(MetricError::NonFinite);
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,score\n");
        for g in &self.genuine {
            out.push_str(&format!("genuine,{g}\n"));
        }
        for i in &self.impostor {
            out.push_str(&format!("impostor,{i}\n"));
        }
        out
    }
}

/// Mean genuine and impostor similarity of one protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary<T> {
    pub mean_genuine: T,
    pub mean_impostor: T,
}

pub fn summarize<T: Scalar>(scores: &ScoreSet<T>) -> Result<ScoreSummary<T>, MetricError> {
    scores.check()?;
    let mean = |v: &[T]| v.iter().copied().sum::<T>() / T::from_count(v.len());
    Ok(ScoreSummary { mean_genuine: mean(&scores.genuine), mean_impostor: mean(&scores.impostor) })
}

/// Relative difference of mean genuine similarity, synthetic vs real:
/// `(μ_GS − μ_GR) / |μ_GR|`.
///
/// Generic over any signed number type, so it can be evaluated exactly on
/// rationals.
pub fn mgs<T: Signed + Clone>(syn: &ScoreSummary<T>, real: &ScoreSummary<T>) -> Result<T, MetricError> {
    let denom = real.mean_genuine.abs();
    if denom.is_zero() {
        return Err(MetricError::DivisionByZero("MGS"));
    }
    Ok((syn.mean_genuine.clone() - real.mean_genuine.clone()) / denom)
}

/// Ratio of genuine–impostor mean separations, synthetic over real:
/// `|μ_GS − μ_IS| / |μ_GR − μ_IR|`.
pub fn sep<T: Signed + Clone>(syn: &ScoreSummary<T>, real: &ScoreSummary<T>) -> Result<T, MetricError> {
    let denom = (real.mean_genuine.clone() - real.mean_impostor.clone()).abs();
    if denom.is_zero() {
        return Err(MetricError::DivisionByZero("SEP"));
    }
    Ok((syn.mean_genuine.clone() - syn.mean_impostor.clone()).abs() / denom)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricResult<T> {
    pub fmr_target: T,
    /// `-inf` when every comparison is accepted.
    pub threshold: T,
    pub fnmr: T,
    pub achieved_fmr: T,
}

fn sorted<T: Scalar>(v: &[T]) -> Vec<T> {
    let mut out = v.to_vec();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    out
}

/// Number of sorted values `>= t`.
fn count_at_or_above<T: Scalar>(sorted: &[T], t: T) -> usize {
    sorted.len() - sorted.partition_point(|&v| v < t)
}

fn rate<T: Scalar>(count: usize, total: usize) -> T {
    T::from_count(count) / T::from_count(total)
}

/// FNMR at the smallest threshold whose FMR does not exceed `fmr_target`.
///
/// Candidate thresholds are `-inf`, every distinct impostor score, and the
/// value just above the largest impostor score (FMR 0).
pub fn fnmr_at_fmr<T: Scalar>(scores: &ScoreSet<T>, fmr_target: T) -> Result<MetricResult<T>, MetricError> {
    scores.check()?;
    if !(fmr_target > T::zero() && fmr_target <= T::one()) {
        return Err(MetricError::InvalidTarget);
    }
    let imp = sorted(&scores.impostor);
    let n = imp.len();
    let (threshold, achieved_fmr) = if fmr_target >= T::one() {
        (T::neg_infinity(), T::one())
    } else {
        let mut found = None;
        for i in 0..n {
            if i > 0 && imp[i] == imp[i - 1] {
                continue;
            }
            let fmr = rate::<T>(n - i, n);
            if fmr <= fmr_target {
                found = Some((imp[i], fmr));
                break;
            }
        }
        found.unwrap_or((imp[n - 1].next_up(), T::zero()))
    };
    let rejected = scores.genuine.iter().filter(|&&g| g < threshold).count();
    Ok(MetricResult { fmr_target, threshold, fnmr: rate(rejected, scores.genuine.len()), achieved_fmr })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint<T> {
    pub threshold: T,
    pub fmr: T,
    /// True match rate, `1 − FNMR`.
    pub tpr: T,
}

/// Points ordered by increasing threshold, from `(1, 1)` at the lowest score
/// to `(0, 0)` just above the highest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve<T> {
    pub points: Vec<RocPoint<T>>,
}

impl<T: Scalar> RocCurve<T> {
    /// Best true match rate among operating points with FMR `<= fmr`.
    pub fn tpr_at_fmr(&self, fmr: T) -> T {
        self.points.iter().filter(|p| p.fmr <= fmr).map(|p| p.tpr).fold(T::zero(), T::max)
    }
}

pub fn roc<T: Scalar>(scores: &ScoreSet<T>) -> Result<RocCurve<T>, MetricError> {
    scores.check()?;
    let gen = sorted(&scores.genuine);
    let imp = sorted(&scores.impostor);
    let mut thresholds: Vec<T> = sorted(&[gen.as_slice(), imp.as_slice()].concat());
    thresholds.dedup();
    let top = *thresholds.last().expect("non-empty");
    thresholds.push(top.next_up());
    let points = thresholds
        .into_iter()
        .map(|t| RocPoint {
            threshold: t,
            fmr: rate(count_at_or_above(&imp, t), imp.len()),
            tpr: rate(count_at_or_above(&gen, t), gen.len()),
        })
        .collect();
    Ok(RocCurve { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use num_rational::Rational64;
    use proptest::prelude::*;
    use rand::Rng;

    /// Independent oracle: enumerate every candidate threshold and pick the
    /// smallest one meeting the target.
    fn brute_force(scores: &ScoreSet<f64>, target: f64) -> MetricResult<f64> {
        let max_imp = scores.impostor.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut candidates: Vec<f64> = vec![f64::NEG_INFINITY, max_imp.next_up()];
        candidates.extend(scores.impostor.iter().copied());
        candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        candidates.dedup();
        for t in candidates {
            let fmr = scores.impostor.iter().filter(|&&s| s >= t).count() as f64 / scores.impostor.len() as f64;
            if fmr <= target {
                let fnmr = scores.genuine.iter().filter(|&&s| s < t).count() as f64 / scores.genuine.len() as f64;
                return MetricResult { fmr_target: target, threshold: t, fnmr, achieved_fmr: fmr };
            }
        }
        unreachable!("the candidate above every impostor always qualifies")
    }

    fn hand_example() -> ScoreSet<f64> {
        ScoreSet::new(vec![0.25, 0.4, 0.5, 0.6], vec![0.1, 0.2, 0.3])
    }

    #[test]
    fn fnmr_hand_example() {
        let r = fnmr_at_fmr(&hand_example(), 1.0 / 3.0).unwrap();
        assert_eq!(r.threshold, 0.3);
        assert_eq!(r.fnmr, 0.25);
        assert_eq!(r.achieved_fmr, 1.0 / 3.0);
    }

    #[test]
    fn fnmr_separable_and_full_acceptance() {
        let s = ScoreSet::new(vec![0.9, 0.95], vec![0.1, 0.2, 0.3]);
        let r = fnmr_at_fmr(&s, 1e-3).unwrap();
        assert_eq!(r.fnmr, 0.0);
        assert!(r.threshold > 0.3 && r.threshold < 0.3 + 1e-15);
        assert_eq!(r.achieved_fmr, 0.0);

        let r = fnmr_at_fmr(&hand_example(), 1.0).unwrap();
        assert_eq!(r.threshold, f64::NEG_INFINITY);
        assert_eq!((r.fnmr, r.achieved_fmr), (0.0, 1.0));
    }

    #[test]
    fn fnmr_errors() {
        assert_eq!(fnmr_at_fmr(&ScoreSet::new(vec![0.5], vec![]), 0.1), Err(MetricError::EmptyImpostor));
        assert_eq!(fnmr_at_fmr(&ScoreSet::new(vec![], vec![0.5]), 0.1), Err(MetricError::EmptyGenuine));
        assert_eq!(fnmr_at_fmr(&hand_example(), 0.0), Err(MetricError::InvalidTarget));
        assert_eq!(fnmr_at_fmr(&hand_example(), 1.5), Err(MetricError::InvalidTarget));
        assert_eq!(fnmr_at_fmr(&ScoreSet::new(vec![f64::NAN], vec![0.1]), 0.1), Err(MetricError::NonFinite));
    }

    #[test]
    fn fnmr_matches_brute_force_on_random_sets() {
        let mut r = rng::stream(11, "fnmr", &[]);
        for case in 0..1000 {
            let ng = r.random_range(1..=200);
            let ni = r.random_range(1..=200);
            // coarse grid forces ties
            let levels = if case % 2 == 0 { 20 } else { 100_000 };
            let mut draw = |shift: i64| (r.random_range(0..levels) + shift) as f64 / levels as f64;
            let genuine = (0..ng).map(|_| draw(levels / 4)).collect();
            let impostor = (0..ni).map(|_| draw(0)).collect();
            let s = ScoreSet::new(genuine, impostor);
            let target = [1e-3, 0.01, 0.1, 1.0 / 3.0, 0.5, 1.0][case % 6];
            assert_eq!(fnmr_at_fmr(&s, target).unwrap(), brute_force(&s, target), "case {case}");
        }
    }

    #[test]
    fn fnmr_in_single_precision() {
        let s = ScoreSet::<f32>::new(vec![0.25, 0.4, 0.5, 0.6], vec![0.1, 0.2, 0.3]);
        let r = fnmr_at_fmr(&s, 1.0 / 3.0).unwrap();
        assert_eq!((r.threshold, r.fnmr), (0.3, 0.25));
    }

    #[test]
    fn roc_endpoints_and_shapes() {
        let c = roc(&hand_example()).unwrap();
        let first = &c.points[0];
        let last = c.points.last().unwrap();
        assert_eq!((first.fmr, first.tpr), (1.0, 1.0));
        assert_eq!((last.fmr, last.tpr), (0.0, 0.0));
        assert_eq!(c.points.len(), 7 + 1);

        let separated = roc(&ScoreSet::new(vec![0.8, 0.9], vec![0.1, 0.2])).unwrap();
        assert!(separated.points.iter().any(|p| p.fmr == 0.0 && p.tpr == 1.0));
        assert_eq!(separated.tpr_at_fmr(0.0), 1.0);

        let same = vec![0.1, 0.2, 0.3, 0.4];
        let diag = roc(&ScoreSet::new(same.clone(), same)).unwrap();
        assert!(diag.points.iter().all(|p| p.fmr == p.tpr));
        assert_eq!(roc(&ScoreSet::<f64>::new(vec![], vec![0.1])), Err(MetricError::EmptyGenuine));
    }

    #[test]
    fn mgs_sep_examples() {
        let s = |g: f64, i: f64| ScoreSummary { mean_genuine: g, mean_impostor: i };
        assert!((mgs(&s(0.5, 0.0), &s(0.4, 0.0)).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(mgs(&s(0.4, 0.0), &s(0.4, 0.0)).unwrap(), 0.0);
        assert!((mgs(&s(0.48, 0.0), &s(0.6, 0.0)).unwrap() + 0.2).abs() < 1e-15);
        assert!((sep(&s(0.8, 0.2), &s(0.9, 0.1)).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(sep(&s(0.7, 0.3), &s(0.7, 0.3)).unwrap(), 1.0);
        assert_eq!(sep(&s(0.5, 0.5), &s(0.9, 0.1)).unwrap(), 0.0);
        assert_eq!(mgs(&s(0.5, 0.0), &s(0.0, 0.0)), Err(MetricError::DivisionByZero("MGS")));
        assert_eq!(sep(&s(0.5, 0.0), &s(0.3, 0.3)), Err(MetricError::DivisionByZero("SEP")));
    }

    #[test]
    fn mgs_sep_are_exact_on_rationals() {
        let q = |n: i64, d: i64| Rational64::new(n, d);
        let s = |g, i| ScoreSummary { mean_genuine: g, mean_impostor: i };
        assert_eq!(mgs(&s(q(1, 2), q(0, 1)), &s(q(2, 5), q(0, 1))).unwrap(), q(1, 4));
        assert_eq!(mgs(&s(q(12, 25), q(0, 1)), &s(q(3, 5), q(0, 1))).unwrap(), q(-1, 5));
        assert_eq!(sep(&s(q(4, 5), q(1, 5)), &s(q(9, 10), q(1, 10))).unwrap(), q(3, 4));
    }

    proptest! {
        #[test]
        fn roc_is_monotone(gen in prop::collection::vec(-1.0f64..1.0, 1..60), imp in prop::collection::vec(-1.0f64..1.0, 1..60)) {
            let c = roc(&ScoreSet::new(gen, imp)).unwrap();
            for w in c.points.windows(2) {
                prop_assert!(w[0].threshold < w[1].threshold);
                prop_assert!(w[0].fmr >= w[1].fmr);
                prop_assert!(w[0].tpr >= w[1].tpr);
            }
        }

        #[test]
        fn roc_invariant_under_increasing_transform(gen in prop::collection::vec(-1.0f64..1.0, 1..40), imp in prop::collection::vec(-1.0f64..1.0, 1..40)) {
            let base = roc(&ScoreSet::new(gen.clone(), imp.clone())).unwrap();
            let f = |v: &Vec<f64>| v.iter().map(|x| (3.0 * x).exp() + 2.0).collect::<Vec<_>>();
            let warped = roc(&ScoreSet::new(f(&gen), f(&imp))).unwrap();
            let rates = |c: &RocCurve<f64>| c.points.iter().map(|p| (p.fmr, p.tpr)).collect::<Vec<_>>();
            prop_assert_eq!(rates(&base), rates(&warped));
        }

        #[test]
        fn fmr_never_exceeds_target(imp in prop::collection::vec(0.0f64..1.0, 1..80), target in 0.001f64..1.0) {
            let r = fnmr_at_fmr(&ScoreSet::new(vec![0.5], imp), target).unwrap();
            prop_assert!(r.achieved_fmr <= target);
            prop_assert!((0.0..=1.0).contains(&r.fnmr));
        }
    }
}
