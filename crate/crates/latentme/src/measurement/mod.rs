//! Latent-trait scoring: additive sum score, first principal component, and a
//! probit item-response model fit by marginal-likelihood EM.
//!
//! Every method returns scores standardized to mean 0, sample sd 1, oriented
//! so they correlate nonnegatively with the standardized row mean of the
//! indicators. That orientation anchor is method-independent, which keeps
//! scores comparable across methods and across indicator subsets.

mod irt;
pub mod quadrature;

pub use irt::{irt_em_fit, EmConfig, IrtModel};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::core::{pearson_slice, standardize_slice, Column};
use crate::error::{Error, Result, Warning};

/// An N×M matrix of indicator responses with a missingness mask.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorMatrix {
    data: DMatrix<f64>,
    missing: DMatrix<bool>,
    binary: Vec<bool>,
    labels: Vec<String>,
}

impl IndicatorMatrix {
    /// Build from per-row optional values; `None` marks a missing cell.
    /// Columns whose observed values are all in {0, 1} are flagged binary.
    pub fn from_rows(rows: &[Vec<Option<f64>>], labels: Vec<String>) -> Result<Self> {
        let n = rows.len();
        let m = labels.len();
        if n < 2 {
            return Err(Error::TooFewRows { n, min: 2 });
        }
        if m < 1 {
            return Err(Error::InvalidConfig {
                reason: "indicator matrix needs at least one column".into(),
            });
        }
        let mut data = DMatrix::zeros(n, m);
        let mut missing = DMatrix::from_element(n, m, false);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::LengthMismatch {
                    left: row.len(),
                    right: m,
                });
            }
            for (j, cell) in row.iter().enumerate() {
                match cell {
                    Some(v) if v.is_finite() => data[(i, j)] = *v,
                    Some(_) => {
                        return Err(Error::NonFinite {
                            label: labels[j].clone(),
                            row: i,
                        })
                    }
                    None => {
                        missing[(i, j)] = true;
                        data[(i, j)] = f64::NAN;
                    }
                }
            }
        }
        let binary = detect_binary(&data, &missing);
        Ok(Self {
            data,
            missing,
            binary,
            labels,
        })
    }

    /// Build from a dense matrix with no missing cells.
    pub fn from_dense(data: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let (n, m) = data.shape();
        if n < 2 {
            return Err(Error::TooFewRows { n, min: 2 });
        }
        if m < 1 || labels.len() != m {
            return Err(Error::InvalidConfig {
                reason: format!("{} labels for {} columns", labels.len(), m),
            });
        }
        for j in 0..m {
            for i in 0..n {
                if !data[(i, j)].is_finite() {
                    return Err(Error::NonFinite {
                        label: labels[j].clone(),
                        row: i,
                    });
                }
            }
        }
        let missing = DMatrix::from_element(n, m, false);
        let binary = detect_binary(&data, &missing);
        Ok(Self {
            data,
            missing,
            binary,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn m(&self) -> usize {
        self.data.ncols()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn is_binary(&self, col: usize) -> bool {
        self.binary[col]
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.data[(row, col)]
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.missing[(row, col)]
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    /// Error if any cell is missing; complete data is a precondition for scoring.
    pub fn require_complete(&self) -> Result<()> {
        for i in 0..self.n() {
            for j in 0..self.m() {
                if self.missing[(i, j)] {
                    return Err(Error::MissingValues {
                        row: i,
                        label: self.labels[j].clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// New matrix keeping the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let n = self.n();
        let mut data = DMatrix::zeros(n, cols.len());
        let mut missing = DMatrix::from_element(n, cols.len(), false);
        for (jj, &j) in cols.iter().enumerate() {
            for i in 0..n {
                data[(i, jj)] = self.data[(i, j)];
                missing[(i, jj)] = self.missing[(i, j)];
            }
        }
        Self {
            data,
            missing,
            binary: cols.iter().map(|&j| self.binary[j]).collect(),
            labels: cols.iter().map(|&j| self.labels[j].clone()).collect(),
        }
    }

    /// New matrix keeping the given rows, in the given order (repeats allowed,
    /// as in bootstrap resampling).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let m = self.m();
        let mut data = DMatrix::zeros(rows.len(), m);
        let mut missing = DMatrix::from_element(rows.len(), m, false);
        for (ii, &i) in rows.iter().enumerate() {
            for j in 0..m {
                data[(ii, j)] = self.data[(i, j)];
                missing[(ii, j)] = self.missing[(i, j)];
            }
        }
        Self {
            data,
            missing,
            binary: self.binary.clone(),
            labels: self.labels.clone(),
        }
    }

    /// Mean of observed values over all cells of each row.
    fn row_means(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| {
                let mut sum = 0.0;
                let mut count = 0usize;
                for j in 0..self.m() {
                    if !self.missing[(i, j)] {
                        sum += self.data[(i, j)];
                        count += 1;
                    }
                }
                if count == 0 {
                    0.0
                } else {
                    sum / count as f64
                }
            })
            .collect()
    }
}

fn detect_binary(data: &DMatrix<f64>, missing: &DMatrix<bool>) -> Vec<bool> {
    (0..data.ncols())
        .map(|j| {
            (0..data.nrows()).all(|i| {
                missing[(i, j)] || data[(i, j)] == 0.0 || data[(i, j)] == 1.0
            })
        })
        .collect()
}

/// Which measurement model produced a set of scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sum,
    Pca,
    Irt,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Sum => write!(f, "sum"),
            Method::Pca => write!(f, "pca"),
            Method::Irt => write!(f, "irt"),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sum" => Ok(Method::Sum),
            "pca" => Ok(Method::Pca),
            "irt" => Ok(Method::Irt),
            other => Err(Error::InvalidConfig {
                reason: format!("unknown method '{other}' (expected sum, pca, or irt)"),
            }),
        }
    }
}

/// Standardized latent-trait estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentScores {
    /// Scores with sample mean 0 and sample sd 1.
    pub scores: Vec<f64>,
    /// What the sign was anchored to.
    pub orientation_reference: String,
    /// Per-unit posterior spreads, on the same scale as `scores` (IRT only).
    pub posterior_sd: Option<Vec<f64>>,
    pub method: Method,
    pub warnings: Vec<Warning>,
}

impl LatentScores {
    /// View the scores as a regression column.
    pub fn to_column(&self, label: &str) -> Column {
        Column::new(label, self.scores.clone()).expect("scores are finite and standardized")
    }
}

/// Flip `scores` (and discrimination-like companions) so the correlation with
/// `reference` is nonnegative. An exactly zero or undefined correlation keeps
/// the current sign. Returns true when a flip happened.
pub(crate) fn orient_nonnegative(scores: &mut [f64], reference: &[f64]) -> bool {
    match pearson_slice(scores, reference) {
        Ok(c) if c < 0.0 => {
            for s in scores.iter_mut() {
                *s = -*s;
            }
            true
        }
        _ => false,
    }
}

pub(crate) const ORIENTATION_ROW_MEAN: &str = "indicator_row_mean";

fn finish_scores(
    mut raw: Vec<f64>,
    w: &IndicatorMatrix,
    method: Method,
    warnings: Vec<Warning>,
) -> Result<LatentScores> {
    standardize_slice(&mut raw, "latent scores")?;
    orient_nonnegative(&mut raw, &w.row_means());
    Ok(LatentScores {
        scores: raw,
        orientation_reference: ORIENTATION_ROW_MEAN.to_string(),
        posterior_sd: None,
        method,
        warnings,
    })
}

/// Standardized row sums of the indicators.
pub fn sum_score(w: &IndicatorMatrix) -> Result<LatentScores> {
    w.require_complete()?;
    let raw: Vec<f64> = (0..w.n())
        .map(|i| (0..w.m()).map(|j| w.value(i, j)).sum())
        .collect();
    finish_scores(raw, w, Method::Sum, Vec::new())
}

/// Which second-moment matrix PCA decomposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcaKind {
    /// Column-standardized indicators (correlation matrix). Appropriate when
    /// indicators are on heterogeneous scales.
    #[default]
    Correlation,
    /// Centered but unscaled indicators (covariance matrix).
    Covariance,
}

/// Standardized projection onto the leading principal component.
pub fn pca_first_component(w: &IndicatorMatrix, kind: PcaKind) -> Result<LatentScores> {
    w.require_complete()?;
    let n = w.n();
    let m = w.m();
    let mut warnings = Vec::new();
    if n <= m {
        warnings.push(Warning::SmallSamplePca { rows: n, cols: m });
    }

    let mut centered = DMatrix::zeros(n, m);
    for j in 0..m {
        let col: Vec<f64> = (0..n).map(|i| w.value(i, j)).collect();
        let mu = crate::core::mean(&col);
        match kind {
            PcaKind::Correlation => {
                let sd = crate::core::sample_sd(&col);
                if sd <= 0.0 {
                    return Err(Error::ZeroVariance {
                        label: w.labels()[j].clone(),
                    });
                }
                for i in 0..n {
                    centered[(i, j)] = (col[i] - mu) / sd;
                }
            }
            PcaKind::Covariance => {
                for i in 0..n {
                    centered[(i, j)] = col[i] - mu;
                }
            }
        }
    }

    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = nalgebra::SymmetricEigen::new(cov);
    let (lead, lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, &v)| (i, v))
        .expect("at least one eigenvalue");
    if lambda <= 1e-12 {
        return Err(Error::DegenerateSpectrum { eigenvalue: lambda });
    }
    let axis = eig.eigenvectors.column(lead);
    let raw: Vec<f64> = (0..n)
        .map(|i| (0..m).map(|j| centered[(i, j)] * axis[j]).sum())
        .collect();
    finish_scores(raw, w, Method::Pca, warnings)
}

/// Score the matrix with the chosen method. The EM configuration is only
/// consulted for [`Method::Irt`].
pub fn score_with(w: &IndicatorMatrix, method: Method, em: &EmConfig) -> Result<LatentScores> {
    match method {
        Method::Sum => sum_score(w),
        Method::Pca => pca_first_component(w, PcaKind::default()),
        Method::Irt => irt_em_fit(w, em).map(|(_, scores)| scores),
    }
}

/// Result of listwise deletion, keeping the original row indices of survivors.
#[derive(Debug, Clone)]
pub struct CompleteCases {
    pub indicators: IndicatorMatrix,
    pub outcome: Column,
    /// Indices into the original rows, in order.
    pub kept_rows: Vec<usize>,
}

/// Drop every row with a missing indicator or missing outcome.
pub fn listwise_delete(
    w: &IndicatorMatrix,
    outcome: &[Option<f64>],
    outcome_label: &str,
) -> Result<CompleteCases> {
    if outcome.len() != w.n() {
        return Err(Error::LengthMismatch {
            left: outcome.len(),
            right: w.n(),
        });
    }
    let kept: Vec<usize> = (0..w.n())
        .filter(|&i| {
            outcome[i].map_or(false, |v| v.is_finite())
                && (0..w.m()).all(|j| !w.is_missing(i, j))
        })
        .collect();
    if kept.len() < 10 {
        return Err(Error::TooFewRows {
            n: kept.len(),
            min: 10,
        });
    }
    let indicators = w.select_rows(&kept);
    let outcome = Column::new(
        outcome_label,
        kept.iter().map(|&i| outcome[i].unwrap()).collect(),
    )?;
    Ok(CompleteCases {
        indicators,
        outcome,
        kept_rows: kept,
    })
}
