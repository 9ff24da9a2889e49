//! Two-parameter probit item-response model fit by marginal-likelihood EM.
//!
//! The model is Pr(W_ij = 1) = Φ(x_i η_j + α_j) with a standard-normal latent
//! prior. The E-step integrates the latent trait over Gauss–Hermite nodes;
//! the M-step maximizes the expected complete-data log-likelihood item by
//! item with Fisher scoring. A diffuse normal penalty on the item parameters
//! keeps separated items finite. Identical response patterns are collapsed
//! before the E-step, which makes small-M fits cheap regardless of N.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};
use crate::measurement::quadrature::GaussHermite;
use crate::measurement::{
    orient_nonnegative, IndicatorMatrix, LatentScores, Method, ORIENTATION_ROW_MEAN,
};
use crate::norm;

/// EM settings for the probit item-response fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmConfig {
    /// Gauss–Hermite node count (≥ 5).
    pub quadrature_points: usize,
    pub max_iterations: usize,
    /// Relative change in penalized log-likelihood that counts as converged.
    pub tolerance: f64,
    /// Standard deviation of the normal penalty on η_j and α_j.
    pub prior_sd_items: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            quadrature_points: 21,
            max_iterations: 500,
            tolerance: 1e-6,
            prior_sd_items: 5.0,
        }
    }
}

impl EmConfig {
    fn validate(&self) -> Result<()> {
        if self.quadrature_points < 5 {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "quadrature_points = {} (need at least 5)",
                    self.quadrature_points
                ),
            });
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig {
                reason: "tolerance must be positive".into(),
            });
        }
        if !(self.prior_sd_items > 0.0) {
            return Err(Error::InvalidConfig {
                reason: "prior_sd_items must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Fitted item parameters and the EM trace.
#[derive(Debug, Clone)]
pub struct IrtModel {
    /// Discrimination η_j, oriented consistently with the returned scores.
    pub discrimination: Vec<f64>,
    /// Difficulty α_j.
    pub difficulty: Vec<f64>,
    /// Penalized marginal log-likelihood after each iteration; nondecreasing.
    pub log_likelihood_trace: Vec<f64>,
    pub converged: bool,
}

/// Kahan compensated summation.
struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    fn new() -> Self {
        Self { sum: 0.0, carry: 0.0 }
    }

    fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum
    }
}

/// Collapsed response patterns: unique rows with multiplicities.
struct Patterns {
    /// Indices of positive responses per pattern.
    ones: Vec<Vec<u16>>,
    counts: Vec<f64>,
    row_to_pattern: Vec<usize>,
}

fn collapse_patterns(w: &IndicatorMatrix) -> Patterns {
    let n = w.n();
    let m = w.m();
    let mut index: HashMap<Vec<u8>, usize> = HashMap::new();
    let mut ones: Vec<Vec<u16>> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    let mut row_to_pattern = Vec::with_capacity(n);
    for i in 0..n {
        let key: Vec<u8> = (0..m).map(|j| w.value(i, j) as u8).collect();
        let id = *index.entry(key.clone()).or_insert_with(|| {
            ones.push(
                key.iter()
                    .enumerate()
                    .filter(|(_, &v)| v == 1)
                    .map(|(j, _)| j as u16)
                    .collect(),
            );
            counts.push(0.0);
            ones.len() - 1
        });
        counts[id] += 1.0;
        row_to_pattern.push(id);
    }
    Patterns {
        ones,
        counts,
        row_to_pattern,
    }
}

/// Per-item expected-data probit objective and its Fisher scoring update.
struct ItemStep<'a> {
    nodes: &'a [f64],
    /// Expected respondents at each node.
    node_totals: &'a [f64],
    /// Expected positive responses at each node for this item.
    node_ones: &'a [f64],
    prior_precision: f64,
}

impl ItemStep<'_> {
    fn objective(&self, eta: f64, alpha: f64) -> f64 {
        let mut value = 0.0;
        for (q, &x) in self.nodes.iter().enumerate() {
            let z = eta * x + alpha;
            value += self.node_ones[q] * norm::log_cdf(z)
                + (self.node_totals[q] - self.node_ones[q]) * norm::log_cdf(-z);
        }
        value - 0.5 * self.prior_precision * (eta * eta + alpha * alpha)
    }

    /// One Fisher-scoring step with halving so the objective never decreases.
    fn update(&self, eta: f64, alpha: f64) -> (f64, f64) {
        let mut eta = eta;
        let mut alpha = alpha;
        for _ in 0..25 {
            let mut g_eta = -self.prior_precision * eta;
            let mut g_alpha = -self.prior_precision * alpha;
            let mut h_ee = self.prior_precision;
            let mut h_ea = 0.0;
            let mut h_aa = self.prior_precision;
            for (q, &x) in self.nodes.iter().enumerate() {
                let z = eta * x + alpha;
                let p = norm::cdf(z).clamp(1e-12, 1.0 - 1e-12);
                let d = norm::pdf(z);
                let score = d * (self.node_ones[q] - self.node_totals[q] * p) / (p * (1.0 - p));
                g_eta += score * x;
                g_alpha += score;
                let info = self.node_totals[q] * d * d / (p * (1.0 - p));
                h_ee += info * x * x;
                h_ea += info * x;
                h_aa += info;
            }
            let grad_norm = g_eta.abs().max(g_alpha.abs());
            if grad_norm < 1e-10 {
                break;
            }
            let det = h_ee * h_aa - h_ea * h_ea;
            if det.abs() < 1e-300 {
                break;
            }
            let step_eta = (h_aa * g_eta - h_ea * g_alpha) / det;
            let step_alpha = (h_ee * g_alpha - h_ea * g_eta) / det;

            let current = self.objective(eta, alpha);
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..20 {
                let cand_eta = eta + scale * step_eta;
                let cand_alpha = alpha + scale * step_alpha;
                if self.objective(cand_eta, cand_alpha) >= current - 1e-12 {
                    eta = cand_eta;
                    alpha = cand_alpha;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted || scale * grad_norm < 1e-12 {
                break;
            }
        }
        (eta, alpha)
    }
}

/// Fit the probit item-response model and return standardized posterior-mean
/// scores with their posterior spreads.
pub fn irt_em_fit(w: &IndicatorMatrix, cfg: &EmConfig) -> Result<(IrtModel, LatentScores)> {
    cfg.validate()?;
    w.require_complete()?;
    let n = w.n();
    let m = w.m();
    for j in 0..m {
        if !w.is_binary(j) {
            let (row, value) = (0..n)
                .map(|i| (i, w.value(i, j)))
                .find(|(_, v)| *v != 0.0 && *v != 1.0)
                .expect("non-binary column has an offending value");
            return Err(Error::NotBinary {
                label: w.labels()[j].clone(),
                row,
                value,
            });
        }
        let total: f64 = (0..n).map(|i| w.value(i, j)).sum();
        if total == 0.0 || total == n as f64 {
            return Err(Error::AllSameResponse {
                label: w.labels()[j].clone(),
            });
        }
    }

    let patterns = collapse_patterns(w);
    let u = patterns.ones.len();
    let gh = GaussHermite::new(cfg.quadrature_points);
    let q = gh.len();
    let log_weights: Vec<f64> = gh.weights.iter().map(|w| w.ln()).collect();

    // Starting values: difficulty from marginal rates, discrimination from the
    // item's correlation with the standardized row sum.
    let row_sums: Vec<f64> = (0..n)
        .map(|i| (0..m).map(|j| w.value(i, j)).sum::<f64>())
        .collect();
    let mut eta = vec![0.5; m];
    let mut alpha = vec![0.0; m];
    for j in 0..m {
        let col: Vec<f64> = (0..n).map(|i| w.value(i, j)).collect();
        let rate = crate::core::mean(&col).clamp(0.02, 0.98);
        alpha[j] = norm::quantile(rate);
        if let Ok(r) = crate::core::pearson_slice(&col, &row_sums) {
            let anchored = if r.abs() < 0.05 { 0.05 * r.signum().max(0.0).max(-1.0) } else { r };
            eta[j] = if anchored == 0.0 { 0.05 } else { anchored };
        }
    }

    let prior_precision = 1.0 / (cfg.prior_sd_items * cfg.prior_sd_items);
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;

    // Reused E-step buffers.
    let mut log_p = vec![0.0; m * q];
    let mut log_1mp = vec![0.0; m * q];
    let mut delta = vec![0.0; m * q];
    let mut posterior = vec![0.0; u * q];
    let mut node_totals = vec![0.0; q];
    let mut node_ones = vec![0.0; m * q];

    for _ in 0..cfg.max_iterations {
        // E-step: item probabilities at each node, then pattern posteriors.
        let mut base = vec![0.0; q];
        for j in 0..m {
            for (k, &x) in gh.nodes.iter().enumerate() {
                let z = eta[j] * x + alpha[j];
                let lp = norm::log_cdf(z);
                let l1 = norm::log_cdf(-z);
                log_p[j * q + k] = lp;
                log_1mp[j * q + k] = l1;
                delta[j * q + k] = lp - l1;
                base[k] += l1;
            }
        }

        node_totals.iter_mut().for_each(|v| *v = 0.0);
        node_ones.iter_mut().for_each(|v| *v = 0.0);
        let mut loglik = KahanSum::new();

        for (p_idx, ones) in patterns.ones.iter().enumerate() {
            let count = patterns.counts[p_idx];
            let row = &mut posterior[p_idx * q..(p_idx + 1) * q];
            let mut peak = f64::NEG_INFINITY;
            for k in 0..q {
                let mut ll = base[k];
                for &j in ones {
                    ll += delta[j as usize * q + k];
                }
                let g = log_weights[k] + ll;
                row[k] = g;
                if g > peak {
                    peak = g;
                }
            }
            let mut total = 0.0;
            for value in row.iter_mut() {
                *value = (*value - peak).exp();
                total += *value;
            }
            for value in row.iter_mut() {
                *value /= total;
            }
            loglik.add(count * (peak + total.ln()));

            for k in 0..q {
                let wgt = count * row[k];
                node_totals[k] += wgt;
                for &j in ones {
                    node_ones[j as usize * q + k] += wgt;
                }
            }
        }

        let penalty: f64 = eta
            .iter()
            .zip(&alpha)
            .map(|(e, a)| 0.5 * prior_precision * (e * e + a * a))
            .sum();
        let objective = loglik.total() - penalty;
        let done = trace
            .last()
            .map(|prev| (objective - prev).abs() / (prev.abs() + 1.0) < cfg.tolerance)
            .unwrap_or(false);
        trace.push(objective);
        if done {
            converged = true;
            break;
        }

        // M-step: each item separately.
        for j in 0..m {
            let step = ItemStep {
                nodes: &gh.nodes,
                node_totals: &node_totals,
                node_ones: &node_ones[j * q..(j + 1) * q],
                prior_precision,
            };
            let (e, a) = step.update(eta[j], alpha[j]);
            eta[j] = e;
            alpha[j] = a;
        }
    }

    // Posterior summaries per pattern, mapped back to rows.
    let mut pattern_mean = vec![0.0; u];
    let mut pattern_sd = vec![0.0; u];
    for p_idx in 0..u {
        let row = &posterior[p_idx * q..(p_idx + 1) * q];
        let mean: f64 = row.iter().zip(&gh.nodes).map(|(p, x)| p * x).sum();
        let second: f64 = row.iter().zip(&gh.nodes).map(|(p, x)| p * x * x).sum();
        pattern_mean[p_idx] = mean;
        pattern_sd[p_idx] = (second - mean * mean).max(0.0).sqrt();
    }
    let mut scores: Vec<f64> = patterns
        .row_to_pattern
        .iter()
        .map(|&p_idx| pattern_mean[p_idx])
        .collect();
    let raw_sd = crate::core::sample_sd(&scores);
    crate::core::standardize_slice(&mut scores, "irt posterior means")?;
    // Keep posterior spreads on the same (rescaled) axis as the scores.
    let posterior_sd: Vec<f64> = patterns
        .row_to_pattern
        .iter()
        .map(|&p_idx| pattern_sd[p_idx] / raw_sd)
        .collect();

    let row_means: Vec<f64> = (0..n).map(|i| row_sums[i] / m as f64).collect();
    if orient_nonnegative(&mut scores, &row_means) {
        for e in eta.iter_mut() {
            *e = -*e;
        }
    }

    let mut warnings = Vec::new();
    if !converged {
        warnings.push(Warning::EmNotConverged {
            iterations: trace.len(),
        });
    }

    Ok((
        IrtModel {
            discrimination: eta,
            difficulty: alpha,
            log_likelihood_trace: trace,
            converged,
        },
        LatentScores {
            scores,
            orientation_reference: ORIENTATION_ROW_MEAN.to_string(),
            posterior_sd: Some(posterior_sd),
            method: Method::Irt,
            warnings,
        },
    ))
}
