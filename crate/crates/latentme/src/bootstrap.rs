//! Row-level (optionally clustered) bootstrap for the corrected estimator.
//!
//! Each replicate resamples basis groups with replacement and re-runs the
//! full pipeline — scores are re-standardized, split correlations and the
//! correction factor re-estimated — so the intervals carry the uncertainty in
//! the correction itself, not just in the slope. Replicate seeds derive from
//! (seed, replicate index), so results are independent of scheduling.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::core::Column;
use crate::correction::{corrected_estimator, EstimatorConfig};
use crate::error::{Error, Result};
use crate::measurement::{IndicatorMatrix, Method};
use crate::partition::{sample_partitions, PartitionPlan};
use crate::rng::task_rng;

/// Fraction of failed replicates above which the bootstrap errors out.
const MAX_FAILURE_SHARE: f64 = 0.20;

/// Bootstrap settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Number of replicates (≥ 2).
    pub n_boot: usize,
    /// Resampling-unit label per row. Distinct labels resample independently;
    /// rows sharing a label move together (cluster bootstrap). Length N.
    pub basis: Vec<u64>,
    pub seed: u64,
    /// Confidence levels for percentile intervals, each in (0, 1).
    pub ci_levels: Vec<f64>,
    /// Also redraw the partition plan inside each replicate.
    pub resample_partitions: bool,
}

impl BootstrapConfig {
    /// Plain iid row bootstrap: basis = row indices.
    pub fn rows(n: usize, n_boot: usize, seed: u64) -> Self {
        Self {
            n_boot,
            basis: (0..n as u64).collect(),
            seed,
            ci_levels: vec![0.95],
            resample_partitions: false,
        }
    }
}

/// Replicate estimates and interval summaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Successful replicate estimates, in replicate-index order.
    pub replicates: Vec<f64>,
    /// Sample standard deviation of the replicates.
    pub standard_error: f64,
    /// Percentile interval per requested level.
    pub percentile_cis: Vec<(f64, (f64, f64))>,
    pub n_failed: usize,
}

impl BootstrapResult {
    /// The interval for a given level, if it was requested.
    pub fn ci(&self, level: f64) -> Option<(f64, f64)> {
        self.percentile_cis
            .iter()
            .find(|(l, _)| (l - level).abs() < 1e-12)
            .map(|(_, ci)| *ci)
    }
}

/// Type-7 (linear interpolation) empirical quantile of unsorted data.
pub(crate) fn quantile_type7(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile_sorted(&sorted, p)
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Equal-tailed percentile interval by linear interpolation.
pub fn percentile_ci(replicates: &[f64], level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::OutOfRange {
            what: "confidence level",
            value: level,
            lo: 0.0,
            hi: 1.0,
        });
    }
    if replicates.len() < 2 {
        return Err(Error::TooFewRows {
            n: replicates.len(),
            min: 2,
        });
    }
    let mut sorted = replicates.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tail = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&sorted, tail), quantile_sorted(&sorted, 1.0 - tail)))
}

/// Row indices of one resample: draw groups with replacement, keeping all
/// rows of a drawn group together.
fn resample_indices(basis: &[u64], rng: &mut impl Rng) -> Vec<usize> {
    // Groups ordered by first appearance so the draw is deterministic.
    let mut order: Vec<u64> = Vec::new();
    let mut members: std::collections::HashMap<u64, Vec<usize>> = std::collections::HashMap::new();
    for (row, &label) in basis.iter().enumerate() {
        members
            .entry(label)
            .or_insert_with(|| {
                order.push(label);
                Vec::new()
            })
            .push(row);
    }
    let g = order.len();
    let mut rows = Vec::with_capacity(basis.len());
    for _ in 0..g {
        let pick = order[rng.gen_range(0..g)];
        rows.extend_from_slice(&members[&pick]);
    }
    rows
}

/// Bootstrap the corrected estimator.
pub fn bootstrap_corrected(
    y: &Column,
    w: &IndicatorMatrix,
    method: Method,
    plan: &PartitionPlan,
    cfg: &BootstrapConfig,
    est: &EstimatorConfig,
) -> Result<BootstrapResult> {
    if cfg.n_boot < 2 {
        return Err(Error::InvalidConfig {
            reason: format!("n_boot = {} (need at least 2)", cfg.n_boot),
        });
    }
    if cfg.basis.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: cfg.basis.len(),
            right: y.len(),
        });
    }
    for &level in &cfg.ci_levels {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::OutOfRange {
                what: "confidence level",
                value: level,
                lo: 0.0,
                hi: 1.0,
            });
        }
    }
    // The base fit must be valid before resampling.
    corrected_estimator(y, w, method, plan, est)?;

    let m = w.m();
    let outcomes: Vec<Option<f64>> = (0..cfg.n_boot)
        .into_par_iter()
        .map(|rep| {
            let mut rng = task_rng(cfg.seed, &[0xb007, rep as u64]);
            let rows = resample_indices(&cfg.basis, &mut rng);
            let y_rep = match Column::new(y.label(), rows.iter().map(|&i| y.values()[i]).collect())
            {
                Ok(col) => col,
                Err(_) => return None,
            };
            let w_rep = w.select_rows(&rows);
            let plan_rep;
            let plan_ref = if cfg.resample_partitions {
                plan_rep = match sample_partitions(
                    m,
                    plan.len(),
                    crate::rng::derive_seed(cfg.seed, &[0x9a27, rep as u64]),
                ) {
                    Ok(p) => p,
                    Err(_) => return None,
                };
                &plan_rep
            } else {
                plan
            };
            corrected_estimator(&y_rep, &w_rep, method, plan_ref, est)
                .ok()
                .map(|fit| fit.point_estimate)
        })
        .collect();

    let replicates: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let n_failed = cfg.n_boot - replicates.len();
    if (n_failed as f64) > MAX_FAILURE_SHARE * cfg.n_boot as f64 {
        return Err(Error::TooManyFailures {
            failed: n_failed,
            total: cfg.n_boot,
            max_share: MAX_FAILURE_SHARE * 100.0,
        });
    }

    let standard_error = crate::core::sample_sd(&replicates);
    let percentile_cis = cfg
        .ci_levels
        .iter()
        .map(|&level| percentile_ci(&replicates, level).map(|ci| (level, ci)))
        .collect::<Result<Vec<_>>>()?;

    Ok(BootstrapResult {
        replicates,
        standard_error,
        percentile_cis,
        n_failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{ols_fit, HcKind};
    use crate::partition::Partition;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn percentile_ci_known_sequence() {
        let replicates: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let (lo, hi) = percentile_ci(&replicates, 0.5).unwrap();
        assert_abs_diff_eq!(lo, 25.75, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 75.25, epsilon = 1e-12);
    }

    #[test]
    fn percentile_ci_degenerate_and_symmetric() {
        let constant = vec![2.5; 40];
        let (lo, hi) = percentile_ci(&constant, 0.9).unwrap();
        assert_eq!((lo, hi), (2.5, 2.5));

        // Symmetric sample: interval symmetric about the median.
        let symmetric: Vec<f64> = (-50..=50).map(|i| i as f64 / 10.0).collect();
        let (lo, hi) = percentile_ci(&symmetric, 0.8).unwrap();
        assert_abs_diff_eq!(lo + hi, 0.0, epsilon = 1e-10);

        assert!(matches!(
            percentile_ci(&constant, 1.0),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn wider_levels_widen_intervals() {
        let mut rng = crate::rng::task_rng(12, &[0]);
        let dist = Normal::new(0.0, 1.0).unwrap();
        let sample: Vec<f64> = (0..500).map(|_| dist.sample(&mut rng)).collect();
        let narrow = percentile_ci(&sample, 0.5).unwrap();
        let wide = percentile_ci(&sample, 0.95).unwrap();
        assert!(wide.0 <= narrow.0 && wide.1 >= narrow.1);
    }

    #[test]
    fn cluster_resampling_keeps_groups_together() {
        let basis = vec![0, 0, 1, 1, 2, 2];
        let mut rng = crate::rng::task_rng(1, &[0]);
        for _ in 0..20 {
            let rows = resample_indices(&basis, &mut rng);
            assert_eq!(rows.len(), 6);
            for pair in rows.chunks(2) {
                // Each drawn group contributes both of its rows, in order.
                assert_eq!(pair[0] + 1, pair[1]);
                assert_eq!(basis[pair[0]], basis[pair[1]]);
            }
        }
    }

    fn strong_signal_fixture(n: usize, seed: u64) -> (Column, IndicatorMatrix) {
        let mut rng = crate::rng::task_rng(seed, &[0]);
        let dist = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        // Duplicated halves: measurement error free, split correlation 1.
        let data = DMatrix::from_fn(n, 4, |i, j| x[i] * [1.0, 0.8, 1.0, 0.8][j]);
        let labels = (0..4).map(|j| format!("c{j}")).collect();
        let w = IndicatorMatrix::from_dense(data, labels).unwrap();
        // Moderate slope: replicate-level re-standardization of the scores
        // adds variance of order β²/2n, which must stay small next to the
        // classical slope variance for the oracle comparison below.
        let y = Column::new(
            "y",
            x.iter()
                .map(|&xi| 0.3 * xi + 1.0 * dist.sample(&mut rng))
                .collect::<Vec<f64>>(),
        )
        .unwrap();
        (y, w)
    }

    #[test]
    fn zero_measurement_error_matches_classical_se() {
        let n = 600;
        let (y, w) = strong_signal_fixture(n, 33);
        let plan = PartitionPlan {
            partitions: vec![Partition::new(4, &[0, 1]).unwrap()],
            mode: crate::partition::PlanMode::Exhaustive,
            seed: 0,
            cap: 1000,
        };
        let est = EstimatorConfig::default();
        let cfg = BootstrapConfig::rows(n, 400, 91);
        let result = bootstrap_corrected(&y, &w, Method::Sum, &plan, &cfg, &est).unwrap();
        assert_eq!(result.n_failed, 0);

        let scores = crate::measurement::sum_score(&w).unwrap();
        let classical = ols_fit(&y, &scores.to_column("s"), HcKind::Hc1)
            .unwrap()
            .slope_variance_classical()
            .sqrt();
        let ratio = result.standard_error / classical;
        assert!(
            (ratio - 1.0).abs() < 0.15,
            "bootstrap se {} vs classical {}",
            result.standard_error,
            classical
        );
    }

    #[test]
    fn identical_seed_identical_replicates() {
        let n = 120;
        let (y, w) = strong_signal_fixture(n, 44);
        let plan = crate::partition::enumerate_balanced_partitions(4, 100).unwrap();
        let est = EstimatorConfig::default();
        let cfg = BootstrapConfig::rows(n, 50, 7);
        let a = bootstrap_corrected(&y, &w, Method::Sum, &plan, &cfg, &est).unwrap();
        let b = bootstrap_corrected(&y, &w, Method::Sum, &plan, &cfg, &est).unwrap();
        assert_eq!(a.replicates, b.replicates);
        assert_eq!(a.standard_error.to_bits(), b.standard_error.to_bits());
    }

    #[test]
    fn lopsided_indicator_fails_enough_replicates() {
        // One indicator with a single positive row: resamples that miss the
        // row make the column constant, so IRT replicates fail often enough
        // to trip the failure guard.
        let n = 40;
        let mut rng = crate::rng::task_rng(55, &[0]);
        let dist = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let data = DMatrix::from_fn(n, 4, |i, j| {
            if j == 3 {
                if i == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                f64::from(x[i] + 0.3 * dist.sample(&mut rng) > 0.0)
            }
        });
        let labels = (0..4).map(|j| format!("c{j}")).collect();
        let w = IndicatorMatrix::from_dense(data, labels).unwrap();
        let y = Column::new("y", x).unwrap();
        let plan = crate::partition::enumerate_balanced_partitions(4, 100).unwrap();
        let est = EstimatorConfig::default();
        let cfg = BootstrapConfig::rows(n, 60, 13);
        assert!(matches!(
            bootstrap_corrected(&y, &w, Method::Irt, &plan, &cfg, &est),
            Err(Error::TooManyFailures { .. })
        ));
    }
}
