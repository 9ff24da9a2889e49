//! Measurement-error corrections for regression slopes on latent predictors.
//!
//! With a predictor standardized to sample variance 1, measurement error of
//! variance σ²_U attenuates the OLS slope by 1/√(1+σ²_U) rather than the
//! classical 1/(1+σ²_U). The correlation between two split-half estimates of
//! the trait estimates 1/(1+σ²_U), so dividing the split-based OLS slope by
//! √cor (equivalently, multiplying the split-sample 2SLS slope by √cor)
//! removes the attenuation. Estimates are averaged within each partition and
//! aggregated by the median across partitions.

use serde::{Deserialize, Serialize};

use crate::core::{ols_fit, tsls_fit, Column, HcKind, WEAK_F_THRESHOLD};
use crate::error::{Error, Result, Warning};
use crate::measurement::{score_with, EmConfig, IndicatorMatrix, LatentScores, Method};
use crate::partition::{split_scores_with_reference, Partition, PartitionPlan};
use crate::rng::task_rng;
use rand_distr::{Distribution, Normal};

/// Attenuation factor for a classical (same-scale) noisy predictor: 1/(1+σ²).
pub fn attenuation_factor_standard(sigma_u2: f64) -> f64 {
    1.0 / (1.0 + sigma_u2)
}

/// Attenuation factor for a standardized latent predictor: 1/√(1+σ²).
/// Exactly the square root of [`attenuation_factor_standard`].
pub fn attenuation_factor_latent(sigma_u2: f64) -> f64 {
    1.0 / (1.0 + sigma_u2).sqrt()
}

/// Recover the measurement error variance implied by a split correlation:
/// σ²_U = 1/cor − 1.
pub fn estimate_error_variance(split_correlation: f64) -> Result<f64> {
    if !(split_correlation > 0.0 && split_correlation <= 1.0) {
        return Err(Error::OutOfRange {
            what: "split correlation",
            value: split_correlation,
            lo: 0.0,
            hi: 1.0,
        });
    }
    Ok(1.0 / split_correlation - 1.0)
}

/// Slope skew factor when the two halves have unequal error variances:
/// ((1+σ²₂)/(1+σ²₁))^¼.
pub fn skew_factor(sigma1_2: f64, sigma2_2: f64) -> f64 {
    ((1.0 + sigma2_2) / (1.0 + sigma1_2)).powf(0.25)
}

/// Skew factor after averaging the two within-partition directions:
/// (r + 1/r)/2 with r the single-direction factor. At least 1, with equality
/// only when the variances agree.
pub fn averaged_skew_factor(sigma1_2: f64, sigma2_2: f64) -> f64 {
    let r = skew_factor(sigma1_2, sigma2_2);
    0.5 * (r + 1.0 / r)
}

/// Split-half score pair with the diagnostics the estimators need.
#[derive(Debug, Clone)]
pub struct SplitEstimates {
    pub xhat1: LatentScores,
    pub xhat2: LatentScores,
    /// Cor(X̂₁, X̂₂), in (0, 1].
    pub correlation: f64,
    /// First-stage F regressing X̂₁ on X̂₂.
    pub f_stat_1on2: f64,
    /// First-stage F regressing X̂₂ on X̂₁.
    pub f_stat_2on1: f64,
}

/// Corrected OLS pair for one partition: each directional slope divided by
/// √cor, then averaged.
pub fn corrected_ols_pair(
    y: &Column,
    s: &SplitEstimates,
    hc: HcKind,
) -> Result<(f64, f64, f64)> {
    let root = s.correlation.sqrt();
    let b1 = ols_fit(y, &s.xhat1.to_column("xhat1"), hc)?.slope() / root;
    let b2 = ols_fit(y, &s.xhat2.to_column("xhat2"), hc)?.slope() / root;
    Ok((b1, b2, 0.5 * (b1 + b2)))
}

/// Corrected IV pair for one partition: each directional 2SLS slope (the
/// other half as instrument) multiplied by √cor, then averaged. Identical to
/// the corrected OLS pair up to floating-point error, with the directions
/// crossed: the IV estimate using X̂₁ equals the OLS estimate using X̂₂.
pub fn corrected_iv_pair(
    y: &Column,
    s: &SplitEstimates,
    hc: HcKind,
) -> Result<(f64, f64, f64, Vec<Warning>)> {
    let root = s.correlation.sqrt();
    let x1 = s.xhat1.to_column("xhat1");
    let x2 = s.xhat2.to_column("xhat2");
    let fit1 = tsls_fit(y, &x1, &x2, hc)?;
    let fit2 = tsls_fit(y, &x2, &x1, hc)?;
    let mut warnings = Vec::new();
    warnings.extend(fit1.warnings.iter().cloned());
    warnings.extend(fit2.warnings.iter().cloned());
    Ok((fit1.slope() * root, fit2.slope() * root, 0.5 * (fit1.slope() + fit2.slope()) * root, warnings))
}

/// Per-partition record inside a [`CorrectedFit`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionEstimate {
    pub partition: Partition,
    /// Corrected slope using X̂₁ as the predictor.
    pub beta_using_x1: f64,
    /// Corrected slope using X̂₂ as the predictor.
    pub beta_using_x2: f64,
    pub pair_average: f64,
    pub correlation: f64,
    /// Uncorrected split-sample IV pair average for this partition.
    pub uncorrected_iv_average: f64,
    pub f_stat_1on2: f64,
    pub f_stat_2on1: f64,
}

/// Method-of-composition draws and summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MocResult {
    pub draws: Vec<f64>,
    /// Mean of the draws.
    pub point_estimate: f64,
    /// Percentile summaries of the draws at 2.5%, 50%, and 97.5%.
    pub quantiles: Vec<(f64, f64)>,
    pub t: usize,
}

/// Output of the corrected estimator with its baselines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectedFit {
    pub per_partition: Vec<PartitionEstimate>,
    /// Median of the per-partition pair averages.
    pub point_estimate: f64,
    /// Naive OLS slope on full-indicator scores.
    pub naive_ols: f64,
    /// Median over partitions of within-partition uncorrected IV averages.
    pub uncorrected_iv_median: f64,
    /// Mean over all directional uncorrected IV estimates.
    pub uncorrected_iv_mean: f64,
    pub moc: Option<MocResult>,
    pub diagnostics: Vec<Warning>,
}

/// Settings for [`corrected_estimator`].
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub em: EmConfig,
    pub hc: HcKind,
    /// Run the method of composition with this many draws and seed
    /// (requires the IRT method, which produces posterior spreads).
    pub moc: Option<(usize, u64)>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            em: EmConfig::default(),
            hc: HcKind::default(),
            moc: None,
        }
    }
}

/// Median; an even count averages the two central order statistics.
pub(crate) fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// The split-half corrected estimator with naive OLS and uncorrected IV
/// baselines.
///
/// Partitions that fail (degenerate half, non-positive split correlation) are
/// excluded and recorded in `diagnostics`; only if every partition fails does
/// the fit error.
pub fn corrected_estimator(
    y: &Column,
    w: &IndicatorMatrix,
    method: Method,
    plan: &PartitionPlan,
    cfg: &EstimatorConfig,
) -> Result<CorrectedFit> {
    if plan.is_empty() {
        return Err(Error::InvalidConfig {
            reason: "partition plan is empty".into(),
        });
    }
    if y.len() != w.n() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: w.n(),
        });
    }
    let full = score_with(w, method, &cfg.em)?;
    let naive_ols = ols_fit(y, &full.to_column("scores"), cfg.hc)?.slope();

    let mut per_partition = Vec::with_capacity(plan.len());
    let mut diagnostics: Vec<Warning> = full.warnings.clone();
    let mut uncorrected_directional = Vec::with_capacity(2 * plan.len());

    for (idx, partition) in plan.partitions.iter().enumerate() {
        match partition_estimate(y, w, partition, method, cfg, &full) {
            Ok((estimate, mut warnings, raw1, raw2)) => {
                for warning in warnings.iter_mut() {
                    match warning {
                        Warning::WeakInstrument { partition, .. }
                        | Warning::WeakSplit { partition, .. } => *partition = idx,
                        _ => {}
                    }
                }
                diagnostics.extend(warnings);
                uncorrected_directional.push(raw1);
                uncorrected_directional.push(raw2);
                per_partition.push(estimate);
            }
            Err(err) => diagnostics.push(Warning::PartitionSkipped {
                partition: idx,
                reason: err.to_string(),
            }),
        }
    }

    if per_partition.is_empty() {
        return Err(Error::AllPartitionsFailed { n: plan.len() });
    }

    let pair_averages: Vec<f64> = per_partition.iter().map(|p| p.pair_average).collect();
    let uncorrected_averages: Vec<f64> = per_partition
        .iter()
        .map(|p| p.uncorrected_iv_average)
        .collect();

    let moc = match cfg.moc {
        Some((draws, seed)) => Some(method_of_composition(y, &full, draws, seed, cfg.hc)?),
        None => None,
    };

    Ok(CorrectedFit {
        point_estimate: median(&pair_averages),
        naive_ols,
        uncorrected_iv_median: median(&uncorrected_averages),
        uncorrected_iv_mean: uncorrected_directional.iter().sum::<f64>()
            / uncorrected_directional.len() as f64,
        per_partition,
        moc,
        diagnostics,
    })
}

/// One partition's corrected estimate, plus the two directional uncorrected
/// IV slopes for the baseline aggregates.
fn partition_estimate(
    y: &Column,
    w: &IndicatorMatrix,
    partition: &Partition,
    method: Method,
    cfg: &EstimatorConfig,
    full: &LatentScores,
) -> Result<(PartitionEstimate, Vec<Warning>, f64, f64)> {
    let split = split_scores_with_reference(w, partition, method, &cfg.em, full)?;
    let mut warnings = split.warnings.clone();

    let x1 = split.half_a.to_column("xhat1");
    let x2 = split.half_b.to_column("xhat2");
    let fit1 = tsls_fit(y, &x1, &x2, cfg.hc)?;
    let fit2 = tsls_fit(y, &x2, &x1, cfg.hc)?;
    for fit in [&fit1, &fit2] {
        if fit.first_stage_f.unwrap_or(f64::INFINITY) < WEAK_F_THRESHOLD {
            warnings.push(Warning::WeakInstrument {
                partition: 0,
                f_stat: fit.first_stage_f.unwrap(),
            });
        }
    }
    let root = split.correlation.sqrt();
    let beta_using_x1 = fit1.slope() * root;
    let beta_using_x2 = fit2.slope() * root;
    let estimate = PartitionEstimate {
        partition: partition.clone(),
        beta_using_x1,
        beta_using_x2,
        pair_average: 0.5 * (beta_using_x1 + beta_using_x2),
        correlation: split.correlation,
        uncorrected_iv_average: 0.5 * (fit1.slope() + fit2.slope()),
        f_stat_1on2: fit1.first_stage_f.unwrap(),
        f_stat_2on1: fit2.first_stage_f.unwrap(),
    };
    Ok((estimate, warnings, fit1.slope(), fit2.slope()))
}

/// Method of composition on posterior draws of the latent scores.
///
/// Each of the `t` iterations draws X⁽ᵗ⁾ᵢ ~ N(scoreᵢ, posterior_sdᵢ),
/// standardizes the draw to the identified scale, fits OLS, and draws β⁽ᵗ⁾
/// from N(slope, HC slope variance). The point estimate is the draw mean.
pub fn method_of_composition(
    y: &Column,
    scores: &LatentScores,
    t: usize,
    seed: u64,
    hc: HcKind,
) -> Result<MocResult> {
    let posterior_sd = scores.posterior_sd.as_ref().ok_or(Error::MissingPosterior {
        method: scores.method.to_string(),
    })?;
    if t < 100 {
        return Err(Error::InvalidConfig {
            reason: format!("method of composition needs at least 100 draws, got {t}"),
        });
    }
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let n = scores.scores.len();
    let mut draws = Vec::with_capacity(t);
    for iter in 0..t {
        let mut rng = task_rng(seed, &[0x6d0c, iter as u64]);
        let mut sampled: Vec<f64> = (0..n)
            .map(|i| scores.scores[i] + posterior_sd[i] * unit.sample(&mut rng))
            .collect();
        // Draws are identified the same way as the point estimates; a draw
        // with zero spread reduces to the scores themselves.
        if crate::core::standardize_slice(&mut sampled, "posterior draw").is_err() {
            draws.push(f64::NAN);
            continue;
        }
        let fit = ols_fit(y, &Column::new("draw", sampled)?, hc)?;
        let beta = fit.slope() + fit.slope_variance_hc().max(0.0).sqrt() * unit.sample(&mut rng);
        draws.push(beta);
    }
    let draws: Vec<f64> = draws.into_iter().filter(|d| d.is_finite()).collect();
    if draws.len() < 2 {
        return Err(Error::TooFewRows {
            n: draws.len(),
            min: 2,
        });
    }
    let point_estimate = draws.iter().sum::<f64>() / draws.len() as f64;
    let quantiles = [0.025, 0.5, 0.975]
        .iter()
        .map(|&level| {
            (
                level,
                crate::bootstrap::quantile_type7(&draws, level),
            )
        })
        .collect();
    Ok(MocResult {
        point_estimate,
        quantiles,
        t,
        draws,
    })
}
