//! Data-generating process and Monte Carlo grid harness.
//!
//! Indicators follow the probit ideal-point model
//! Pr(W_ij = 1) = Φ(x_i η_j + α_j) and the outcome follows
//! y_i = β₀ + x_i β_X + ε_i. Cells of an (N, M) grid replicate the full
//! pipeline — simulate, score, estimate — and aggregate each estimator's
//! absolute bias, standard deviation, RMSE, and interval coverage.
//!
//! Replicate seeds derive from (grid seed, n, m, replicate), so any cell's
//! results are reproducible in isolation and independent of scheduling.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_corrected, quantile_type7, BootstrapConfig};
use crate::core::{ols_fit, Column, HcKind};
use crate::correction::{corrected_estimator, method_of_composition, EstimatorConfig};
use crate::error::{Error, Result};
use crate::measurement::{score_with, EmConfig, IndicatorMatrix, Method};
use crate::norm;
use crate::partition::{partition_count, sample_partitions};
use crate::rng::{derive_seed, task_rng};

/// Where the latent trait values come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XSource {
    /// Redraw X ~ N(0, 1) each replicate (then standardize the sample).
    StandardNormal,
    /// Subsample a fixed pool of trait values without replacement.
    FixedPool,
}

/// True parameter values for the data-generating process.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DgpSpec {
    pub beta0: f64,
    pub beta_x: f64,
    pub sigma_eps2: f64,
    /// Item discriminations η_j for the full indicator pool.
    pub discrimination: Vec<f64>,
    /// Item difficulties α_j.
    pub difficulty: Vec<f64>,
    pub x_source: XSource,
    /// Standardized trait pool, required when `x_source` is `FixedPool`.
    pub fixed_pool: Option<Vec<f64>>,
}

impl DgpSpec {
    /// Size of the indicator pool.
    pub fn pool_size(&self) -> usize {
        self.discrimination.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_eps2 > 0.0) {
            return Err(Error::InvalidConfig {
                reason: "sigma_eps2 must be positive".into(),
            });
        }
        if self.discrimination.is_empty()
            || self.discrimination.len() != self.difficulty.len()
        {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "item parameter lengths differ: {} discriminations, {} difficulties",
                    self.discrimination.len(),
                    self.difficulty.len()
                ),
            });
        }
        match (self.x_source, &self.fixed_pool) {
            (XSource::FixedPool, None) => Err(Error::InvalidConfig {
                reason: "x_source = fixed_pool requires a fixed_pool".into(),
            }),
            (XSource::FixedPool, Some(pool)) => {
                if pool.len() < 2 {
                    return Err(Error::InvalidConfig {
                        reason: "fixed_pool needs at least 2 values".into(),
                    });
                }
                let mean = crate::core::mean(pool);
                let sd = crate::core::sample_sd(pool);
                if mean.abs() > 1e-6 || (sd - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidConfig {
                        reason: format!(
                            "fixed_pool must be standardized (mean {mean:.2e}, sd {sd:.6})"
                        ),
                    });
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// A 30-item synthetic calibration: discriminations ramp over a moderate
    /// range and difficulties spread symmetrically, shuffled against each
    /// other so random item subsets stay balanced. The regression parameters
    /// put the true slope at 0.40 with a residual variance that makes the
    /// true-predictor slope estimable to about ±0.01 at N = 1000.
    pub fn synthetic_pool30() -> Self {
        let m = 30;
        let discrimination: Vec<f64> = (0..m)
            .map(|j| 0.50 + 0.60 * j as f64 / (m - 1) as f64)
            .collect();
        // Difficulties on a ramp visited in stride-7 order (7 is coprime to
        // 30), decoupling difficulty from discrimination.
        let difficulty: Vec<f64> = (0..m)
            .map(|j| {
                let pos = (j * 7) % m;
                -1.1 + 2.2 * pos as f64 / (m - 1) as f64
            })
            .collect();
        Self {
            beta0: 0.5,
            beta_x: 0.40,
            sigma_eps2: 0.09,
            discrimination,
            difficulty,
            x_source: XSource::StandardNormal,
            fixed_pool: None,
        }
    }
}

/// Draw latent trait values for one replicate, standardized in-sample.
pub fn draw_traits(dgp: &DgpSpec, n: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = task_rng(seed, &[0x0a]);
    let mut x: Vec<f64> = match dgp.x_source {
        XSource::StandardNormal => {
            let dist = Normal::new(0.0, 1.0).expect("unit normal");
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        }
        XSource::FixedPool => {
            let pool = dgp.fixed_pool.as_ref().ok_or(Error::InvalidConfig {
                reason: "fixed_pool missing".into(),
            })?;
            if n > pool.len() {
                return Err(Error::InvalidConfig {
                    reason: format!("n = {n} exceeds fixed pool of {}", pool.len()),
                });
            }
            let mut indices: Vec<usize> = (0..pool.len()).collect();
            indices.shuffle(&mut rng);
            indices[..n].iter().map(|&i| pool[i]).collect()
        }
    };
    crate::core::standardize_slice(&mut x, "latent traits")?;
    Ok(x)
}

/// Simulate the indicator matrix for standardized traits `x`, drawing `m`
/// items from the pool uniformly without replacement.
pub fn simulate_indicators(
    x: &[f64],
    dgp: &DgpSpec,
    m: usize,
    seed: u64,
) -> Result<IndicatorMatrix> {
    dgp.validate()?;
    let pool = dgp.pool_size();
    if m == 0 || m > pool {
        return Err(Error::InvalidConfig {
            reason: format!("m = {m} items requested from a pool of {pool}"),
        });
    }
    let mut rng = task_rng(seed, &[0x0b]);
    let mut items: Vec<usize> = (0..pool).collect();
    items.shuffle(&mut rng);
    items.truncate(m);
    items.sort_unstable();

    let n = x.len();
    let mut data = nalgebra::DMatrix::zeros(n, m);
    for (jj, &j) in items.iter().enumerate() {
        let eta = dgp.discrimination[j];
        let alpha = dgp.difficulty[j];
        for i in 0..n {
            let p = norm::cdf(x[i] * eta + alpha);
            data[(i, jj)] = f64::from(rng.gen::<f64>() < p);
        }
    }
    let labels = items.iter().map(|j| format!("item{j}")).collect();
    IndicatorMatrix::from_dense(data, labels)
}

/// Simulate the outcome y = β₀ + xβ_X + ε with ε ~ N(0, σ²_ε).
pub fn simulate_outcome(x: &[f64], dgp: &DgpSpec, seed: u64) -> Result<Column> {
    dgp.validate()?;
    let mut rng = task_rng(seed, &[0x0c]);
    let dist = Normal::new(0.0, dgp.sigma_eps2.sqrt()).expect("eps distribution");
    Column::new(
        "y",
        x.iter()
            .map(|&xi| dgp.beta0 + xi * dgp.beta_x + dist.sample(&mut rng))
            .collect::<Vec<f64>>(),
    )
}

/// Estimators the harness can run in a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    TrueXOls,
    NaiveOls,
    UncorrectedIv,
    Corrected,
    Moc,
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Estimator::TrueXOls => "true_x_ols",
            Estimator::NaiveOls => "naive_ols",
            Estimator::UncorrectedIv => "uncorrected_iv",
            Estimator::Corrected => "corrected",
            Estimator::Moc => "moc",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true_x_ols" => Ok(Estimator::TrueXOls),
            "naive_ols" => Ok(Estimator::NaiveOls),
            "uncorrected_iv" => Ok(Estimator::UncorrectedIv),
            "corrected" => Ok(Estimator::Corrected),
            "moc" => Ok(Estimator::Moc),
            other => Err(Error::InvalidConfig {
                reason: format!("unknown estimator '{other}'"),
            }),
        }
    }
}

/// Grid layout and per-replicate estimation settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_values: Vec<usize>,
    pub m_values: Vec<usize>,
    pub replications: usize,
    /// Partitions sampled per replicate (clamped to the number that exist).
    pub partitions_per_rep: usize,
    pub estimators: Vec<Estimator>,
    pub seed: u64,
    /// Measurement method for estimated scores.
    pub method: Method,
    /// Bootstrap replicates for corrected-estimator intervals; 0 disables
    /// them (coverage is then reported only for the closed-form intervals).
    #[serde(default)]
    pub n_boot: usize,
    #[serde(default = "default_ci_level")]
    pub ci_level: f64,
    #[serde(default = "default_moc_draws")]
    pub moc_draws: usize,
}

fn default_ci_level() -> f64 {
    0.95
}

fn default_moc_draws() -> usize {
    200
}

impl GridSpec {
    pub fn validate(&self, dgp: &DgpSpec) -> Result<()> {
        dgp.validate()?;
        if self.replications < 1 {
            return Err(Error::InvalidConfig {
                reason: "replications must be at least 1".into(),
            });
        }
        if self.n_values.is_empty() || self.m_values.is_empty() || self.estimators.is_empty() {
            return Err(Error::InvalidConfig {
                reason: "n_values, m_values, and estimators must be nonempty".into(),
            });
        }
        if let Some(&m) = self.m_values.iter().find(|&&m| m > dgp.pool_size() || m < 2) {
            return Err(Error::InvalidConfig {
                reason: format!("m = {m} outside 2..={} (the item pool)", dgp.pool_size()),
            });
        }
        if self.partitions_per_rep < 1 {
            return Err(Error::InvalidConfig {
                reason: "partitions_per_rep must be at least 1".into(),
            });
        }
        if self.estimators.contains(&Estimator::Moc) && self.method != Method::Irt {
            return Err(Error::InvalidConfig {
                reason: "the moc estimator requires method = irt (posterior spreads)".into(),
            });
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidConfig {
                reason: format!("ci_level = {} outside (0, 1)", self.ci_level),
            });
        }
        if self.estimators.contains(&Estimator::Moc) && self.moc_draws < 100 {
            return Err(Error::InvalidConfig {
                reason: "moc_draws must be at least 100".into(),
            });
        }
        Ok(())
    }
}

/// Aggregated performance of one estimator in one (N, M) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellMetrics {
    pub estimator: Estimator,
    pub n: usize,
    pub m: usize,
    pub abs_bias: f64,
    /// Population (divide-by-R) standard deviation of the replicate
    /// estimates, so that rmse² = abs_bias² + sd² holds exactly.
    pub sd: f64,
    pub rmse: f64,
    pub coverage: Option<f64>,
    pub mean_estimate: f64,
}

/// Absolute bias, sample standard deviation, and RMSE of estimates around a
/// known truth. RMSE uses population (divide-by-R) second moments, so
/// rmse² = bias² + sd²·(R−1)/R with the sample sd reported here.
pub fn error_decompose(estimates: &[f64], truth: f64) -> (f64, f64, f64) {
    let r = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / r;
    let abs_bias = (mean - truth).abs();
    let sd = crate::core::sample_sd(estimates);
    let mse = estimates.iter().map(|e| (e - truth) * (e - truth)).sum::<f64>() / r;
    (abs_bias, sd, mse.sqrt())
}

/// Fraction of intervals containing the truth.
pub fn coverage(intervals: &[(f64, f64)], truth: f64) -> f64 {
    if intervals.is_empty() {
        return f64::NAN;
    }
    let hits = intervals
        .iter()
        .filter(|(lo, hi)| *lo <= truth && truth <= *hi)
        .count();
    hits as f64 / intervals.len() as f64
}

/// One replicate's estimates and intervals, keyed by estimator order.
struct Replicate {
    estimates: Vec<f64>,
    intervals: Vec<Option<(f64, f64)>>,
}

fn z_for_level(level: f64) -> f64 {
    norm::quantile(0.5 + level / 2.0)
}

fn run_replicate(
    dgp: &DgpSpec,
    n: usize,
    m: usize,
    spec: &GridSpec,
    rep: usize,
) -> Result<Replicate> {
    let path = |stage: u64| derive_seed(spec.seed, &[n as u64, m as u64, rep as u64, stage]);
    let x = draw_traits(dgp, n, path(0))?;
    let w = simulate_indicators(&x, dgp, m, path(1))?;
    let y = simulate_outcome(&x, dgp, path(2))?;

    let em = EmConfig::default();
    let needs_scores = spec.estimators.iter().any(|e| {
        matches!(
            e,
            Estimator::NaiveOls | Estimator::Moc
        )
    });
    let scores = if needs_scores {
        Some(score_with(&w, spec.method, &em)?)
    } else {
        None
    };

    let needs_partitions = spec
        .estimators
        .iter()
        .any(|e| matches!(e, Estimator::Corrected | Estimator::UncorrectedIv));
    let corrected_fit = if needs_partitions {
        let k = spec
            .partitions_per_rep
            .min(partition_count(m).min(usize::MAX as u128) as usize);
        let plan = sample_partitions(m, k, path(3))?;
        let est = EstimatorConfig {
            em: em.clone(),
            hc: HcKind::Hc1,
            moc: None,
        };
        Some((
            corrected_estimator(&y, &w, spec.method, &plan, &est)?,
            plan,
            est,
        ))
    } else {
        None
    };

    let z = z_for_level(spec.ci_level);
    let mut estimates = Vec::with_capacity(spec.estimators.len());
    let mut intervals = Vec::with_capacity(spec.estimators.len());
    for estimator in &spec.estimators {
        match estimator {
            Estimator::TrueXOls => {
                let fit = ols_fit(&y, &Column::new("x", x.clone())?, HcKind::Hc1)?;
                let se = fit.slope_variance_hc().max(0.0).sqrt();
                estimates.push(fit.slope());
                intervals.push(Some((fit.slope() - z * se, fit.slope() + z * se)));
            }
            Estimator::NaiveOls => {
                let scores = scores.as_ref().expect("scores computed");
                let fit = ols_fit(&y, &scores.to_column("scores"), HcKind::Hc1)?;
                let se = fit.slope_variance_hc().max(0.0).sqrt();
                estimates.push(fit.slope());
                intervals.push(Some((fit.slope() - z * se, fit.slope() + z * se)));
            }
            Estimator::UncorrectedIv => {
                let (fit, _, _) = corrected_fit.as_ref().expect("corrected fit computed");
                estimates.push(fit.uncorrected_iv_median);
                intervals.push(None);
            }
            Estimator::Corrected => {
                let (fit, plan, est) = corrected_fit.as_ref().expect("corrected fit computed");
                estimates.push(fit.point_estimate);
                if spec.n_boot >= 2 {
                    let cfg = BootstrapConfig {
                        n_boot: spec.n_boot,
                        basis: (0..n as u64).collect(),
                        seed: path(5),
                        ci_levels: vec![spec.ci_level],
                        resample_partitions: false,
                    };
                    let boot = bootstrap_corrected(&y, &w, spec.method, plan, &cfg, est)?;
                    intervals.push(boot.ci(spec.ci_level));
                } else {
                    intervals.push(None);
                }
            }
            Estimator::Moc => {
                let scores = scores.as_ref().expect("scores computed");
                let moc =
                    method_of_composition(&y, scores, spec.moc_draws, path(4), HcKind::Hc1)?;
                estimates.push(moc.point_estimate);
                let tail = (1.0 - spec.ci_level) / 2.0;
                intervals.push(Some((
                    quantile_type7(&moc.draws, tail),
                    quantile_type7(&moc.draws, 1.0 - tail),
                )));
            }
        }
    }
    Ok(Replicate {
        estimates,
        intervals,
    })
}

/// Run all replications for one (N, M) cell and aggregate per estimator.
/// The cell fails if more than 10% of replicates fail.
pub fn run_cell(dgp: &DgpSpec, n: usize, m: usize, spec: &GridSpec) -> Result<Vec<CellMetrics>> {
    spec.validate(dgp)?;
    let outcomes: Vec<Result<Replicate>> = (0..spec.replications)
        .into_par_iter()
        .map(|rep| run_replicate(dgp, n, m, spec, rep))
        .collect();
    let successes: Vec<Replicate> = outcomes.into_iter().filter_map(|r| r.ok()).collect();
    let failed = spec.replications - successes.len();
    if failed as f64 > 0.10 * spec.replications as f64 {
        return Err(Error::TooManyFailures {
            failed,
            total: spec.replications,
            max_share: 10.0,
        });
    }
    if successes.len() < 2 {
        return Err(Error::TooFewRows {
            n: successes.len(),
            min: 2,
        });
    }

    let mut rows = Vec::with_capacity(spec.estimators.len());
    for (idx, estimator) in spec.estimators.iter().enumerate() {
        let estimates: Vec<f64> = successes.iter().map(|r| r.estimates[idx]).collect();
        let intervals: Vec<(f64, f64)> = successes
            .iter()
            .filter_map(|r| r.intervals[idx])
            .collect();
        let r = estimates.len() as f64;
        let mean_estimate = estimates.iter().sum::<f64>() / r;
        let (abs_bias, _, rmse) = error_decompose(&estimates, dgp.beta_x);
        // Population sd so the metrics satisfy rmse² = bias² + sd² exactly.
        let sd_pop = (estimates
            .iter()
            .map(|e| (e - mean_estimate) * (e - mean_estimate))
            .sum::<f64>()
            / r)
            .sqrt();
        rows.push(CellMetrics {
            estimator: *estimator,
            n,
            m,
            abs_bias,
            sd: sd_pop,
            rmse,
            coverage: if intervals.len() == successes.len() {
                Some(coverage(&intervals, dgp.beta_x))
            } else {
                None
            },
            mean_estimate,
        });
    }
    Ok(rows)
}

/// Run the full n × m grid. Deterministic given the grid seed.
pub fn run_grid(dgp: &DgpSpec, spec: &GridSpec) -> Result<Vec<CellMetrics>> {
    spec.validate(dgp)?;
    let mut table = Vec::new();
    for &n in &spec.n_values {
        for &m in &spec.m_values {
            table.extend(run_cell(dgp, n, m, spec)?);
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::pearson_slice;
    use approx::assert_abs_diff_eq;

    fn small_dgp() -> DgpSpec {
        DgpSpec::synthetic_pool30()
    }

    #[test]
    fn dgp_validation() {
        let mut dgp = small_dgp();
        dgp.sigma_eps2 = 0.0;
        assert!(dgp.validate().is_err());
        let mut dgp = small_dgp();
        dgp.x_source = XSource::FixedPool;
        assert!(dgp.validate().is_err());
        dgp.fixed_pool = Some(vec![1.0, 2.0, 3.0]);
        assert!(dgp.validate().is_err(), "unstandardized pool rejected");
        let mut pool: Vec<f64> = (0..50).map(|i| i as f64).collect();
        crate::core::standardize_slice(&mut pool, "pool").unwrap();
        dgp.fixed_pool = Some(pool);
        assert!(dgp.validate().is_ok());
    }

    #[test]
    fn flat_items_match_marginal_rates() {
        // η = 0 leaves column means at Φ(α) within binomial error.
        let mut dgp = small_dgp();
        let m = dgp.pool_size();
        dgp.discrimination = vec![0.0; m];
        let n = 100_000;
        let x = draw_traits(&dgp, n, 1).unwrap();
        let w = simulate_indicators(&x, &dgp, m, 2).unwrap();
        for j in 0..m {
            let rate: f64 = (0..n).map(|i| w.value(i, j)).sum::<f64>() / n as f64;
            // Columns are sorted by pool index, so difficulty j maps directly.
            let expected = norm::cdf(dgp.difficulty[j]);
            let se = (expected * (1.0 - expected) / n as f64).sqrt();
            assert!(
                (rate - expected).abs() < 3.0 * se + 1e-9,
                "column {j}: rate {rate} vs {expected}"
            );
        }
    }

    #[test]
    fn steep_items_threshold_the_trait() {
        // η = 10 makes each item a near-deterministic threshold at x = 0:
        // responses agree with 1{x > 0} except in a thin band around zero.
        let mut dgp = small_dgp();
        dgp.discrimination = vec![10.0; 4];
        dgp.difficulty = vec![0.0; 4];
        let n = 20_000;
        let x = draw_traits(&dgp, n, 3).unwrap();
        let w = simulate_indicators(&x, &dgp, 4, 4).unwrap();
        for j in 0..4 {
            let agree = (0..n)
                .filter(|&i| w.value(i, j) == f64::from(x[i] > 0.0))
                .count() as f64
                / n as f64;
            assert!(agree > 0.95, "column {j} agreement with threshold: {agree}");
        }
    }

    #[test]
    fn indicator_simulation_is_deterministic() {
        let dgp = small_dgp();
        let x = draw_traits(&dgp, 200, 5).unwrap();
        let a = simulate_indicators(&x, &dgp, 12, 6).unwrap();
        let b = simulate_indicators(&x, &dgp, 12, 6).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noiseless_outcome_recovers_slope_exactly() {
        let mut dgp = small_dgp();
        dgp.sigma_eps2 = 1e-18;
        let x = draw_traits(&dgp, 500, 7).unwrap();
        let y = simulate_outcome(&x, &dgp, 8).unwrap();
        let fit = ols_fit(&y, &Column::new("x", x).unwrap(), HcKind::Hc1).unwrap();
        assert_abs_diff_eq!(fit.slope(), dgp.beta_x, epsilon = 1e-8);
    }

    #[test]
    fn null_slope_stays_near_zero() {
        let mut dgp = small_dgp();
        dgp.beta_x = 0.0;
        let n = 10_000;
        let x = draw_traits(&dgp, n, 9).unwrap();
        let y = simulate_outcome(&x, &dgp, 10).unwrap();
        let fit = ols_fit(&y, &Column::new("x", x).unwrap(), HcKind::Hc1).unwrap();
        let se = fit.slope_variance_classical().sqrt();
        assert!(fit.slope().abs() < 3.0 * se, "slope {}", fit.slope());
    }

    #[test]
    fn error_decompose_examples() {
        let (bias, sd, rmse) = error_decompose(&[0.4, 0.4, 0.4], 0.4);
        assert_abs_diff_eq!(bias, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sd, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rmse, 0.0, epsilon = 1e-15);
        let (bias, _, rmse) = error_decompose(&[0.3, 0.5], 0.4);
        assert_abs_diff_eq!(bias, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rmse, 0.1, epsilon = 1e-15);
        let (bias, sd, rmse) = error_decompose(&[0.5, 0.5], 0.4);
        assert_abs_diff_eq!(bias, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(sd, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rmse, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn coverage_examples() {
        assert_abs_diff_eq!(
            coverage(&[(-1e9, 1e9), (-1e9, 1e9)], 0.4),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(coverage(&[(1.0, 2.0), (3.0, 4.0)], 0.4), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(coverage(&[(0.0, 1.0), (2.0, 3.0)], 0.4), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn true_x_estimator_is_unbiased_and_tight() {
        let dgp = small_dgp();
        let spec = GridSpec {
            n_values: vec![1000],
            m_values: vec![6],
            replications: 200,
            partitions_per_rep: 4,
            estimators: vec![Estimator::TrueXOls],
            seed: 77,
            method: Method::Sum,
            n_boot: 0,
            ci_level: 0.95,
            moc_draws: 200,
        };
        let rows = run_cell(&dgp, 1000, 6, &spec).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert!(row.abs_bias < 0.01, "bias {}", row.abs_bias);
        assert!(row.rmse < 0.02 && row.rmse > 0.003, "rmse {}", row.rmse);
        // Internal identity between the reported metrics.
        assert_abs_diff_eq!(
            row.rmse * row.rmse,
            row.abs_bias * row.abs_bias + row.sd * row.sd,
            epsilon = 1e-8
        );
        // Coverage of the closed-form interval is near nominal.
        assert!(row.coverage.unwrap() > 0.9);
    }

    #[test]
    fn grid_row_count_and_determinism() {
        let dgp = small_dgp();
        let spec = GridSpec {
            n_values: vec![100, 200],
            m_values: vec![6, 12],
            replications: 20,
            partitions_per_rep: 4,
            estimators: vec![Estimator::TrueXOls, Estimator::NaiveOls],
            seed: 5150,
            method: Method::Sum,
            n_boot: 0,
            ci_level: 0.95,
            moc_draws: 200,
        };
        let a = run_grid(&dgp, &spec).unwrap();
        assert_eq!(a.len(), 8); // 4 cells × 2 estimators
        let b = run_grid(&dgp, &spec).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.mean_estimate.to_bits(), y.mean_estimate.to_bits());
            assert_eq!(x.rmse.to_bits(), y.rmse.to_bits());
        }
    }

    #[test]
    fn moc_requires_irt_method() {
        let dgp = small_dgp();
        let spec = GridSpec {
            n_values: vec![100],
            m_values: vec![6],
            replications: 5,
            partitions_per_rep: 4,
            estimators: vec![Estimator::Moc],
            seed: 1,
            method: Method::Sum,
            n_boot: 0,
            ci_level: 0.95,
            moc_draws: 200,
        };
        assert!(matches!(
            run_grid(&dgp, &spec),
            Err(Error::InvalidConfig { .. })
        ));
    }

    #[test]
    fn naive_attenuation_tracks_split_correlation() {
        // The attenuation chain behind the correction: a naive OLS slope on
        // split-half scores is attenuated to β·1/√(1+σ²_U), and the split
        // correlation estimates 1/(1+σ²_U), so the mean half-score slope over
        // β matches the square root of the mean split correlation.
        let dgp = small_dgp();
        let n = 1000;
        let m = 12;
        let reps = 200;
        let em = EmConfig::default();
        let mut slope_sum = 0.0;
        let mut slope_count = 0.0;
        let mut cor_sum = 0.0;
        let mut cor_count = 0.0;
        for rep in 0..reps {
            let path = |stage: u64| derive_seed(4242, &[n as u64, m as u64, rep, stage]);
            let x = draw_traits(&dgp, n, path(0)).unwrap();
            let w = simulate_indicators(&x, &dgp, m, path(1)).unwrap();
            let y = simulate_outcome(&x, &dgp, path(2)).unwrap();
            let scores = score_with(&w, Method::Sum, &em).unwrap();
            let plan = sample_partitions(m, 4, path(3)).unwrap();
            for p in &plan.partitions {
                let split = crate::partition::split_scores_with_reference(
                    &w, p, Method::Sum, &em, &scores,
                )
                .unwrap();
                for half in [&split.half_a, &split.half_b] {
                    slope_sum += ols_fit(&y, &half.to_column("half"), HcKind::Hc1)
                        .unwrap()
                        .slope();
                    slope_count += 1.0;
                }
                cor_sum += split.correlation;
                cor_count += 1.0;
            }
        }
        let ratio = slope_sum / slope_count / dgp.beta_x;
        let root_cor = (cor_sum / cor_count).sqrt();
        assert!(
            (ratio - root_cor).abs() < 0.03,
            "half slope/β = {ratio:.4}, √cor = {root_cor:.4}"
        );
    }
}
