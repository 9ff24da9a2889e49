//! Numeric primitives shared by every estimator: standardization, Pearson
//! correlation, bivariate and multiple OLS with classical and
//! heteroskedasticity-consistent covariance, and single-instrument 2SLS.
//!
//! Conventions: sample moments use the n−1 denominator throughout, so
//! standardized columns, correlations, and the split-based correction factors
//! stay mutually consistent. Covariance matrices are built symmetric.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};

/// Relative tolerance for rank detection in pivoted decompositions.
const RANK_TOL: f64 = 1e-10;

/// Correlation floor below which an instrument is treated as irrelevant.
pub const INSTRUMENT_COR_FLOOR: f64 = 1e-6;

/// First-stage F threshold below which an instrument is flagged weak.
pub const WEAK_F_THRESHOLD: f64 = 10.0;

/// A named column of finite real values.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    values: Vec<f64>,
    label: String,
}

impl Column {
    /// Build a column, rejecting non-finite entries and length < 2.
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if values.len() < 2 {
            return Err(Error::TooFewRows {
                n: values.len(),
                min: 2,
            });
        }
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { label, row });
        }
        Ok(Self { values, label })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Heteroskedasticity-consistent covariance variant.
///
/// HC0 is the plain sandwich; HC1 applies the n/(n−p) small-sample factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HcKind {
    Hc0,
    #[default]
    Hc1,
}

/// A fitted linear regression (OLS or 2SLS).
#[derive(Debug, Clone)]
pub struct RegressionFit {
    /// Intercept estimate.
    pub intercept: f64,
    /// Slope estimates, one per non-intercept regressor.
    pub slopes: Vec<f64>,
    /// Residual variance, RSS / (n − p).
    pub residual_variance: f64,
    /// Classical covariance of (intercept, slopes).
    pub vcov_classical: DMatrix<f64>,
    /// Heteroskedasticity-consistent covariance of (intercept, slopes).
    pub vcov_hc: DMatrix<f64>,
    /// Which HC variant `vcov_hc` holds.
    pub hc_kind: HcKind,
    /// Rows used in the fit.
    pub n: usize,
    /// First-stage F statistic (2SLS only).
    pub first_stage_f: Option<f64>,
    /// Non-fatal diagnostics (e.g. weak instrument).
    pub warnings: Vec<Warning>,
}

impl RegressionFit {
    /// Slope of the single regressor; panics if the fit is not bivariate.
    pub fn slope(&self) -> f64 {
        assert_eq!(self.slopes.len(), 1, "slope() requires a bivariate fit");
        self.slopes[0]
    }

    /// Classical variance of the single slope.
    pub fn slope_variance_classical(&self) -> f64 {
        self.vcov_classical[(1, 1)]
    }

    /// HC variance of the single slope.
    pub fn slope_variance_hc(&self) -> f64 {
        self.vcov_hc[(1, 1)]
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with the n−1 denominator, from centered sums.
pub(crate) fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    ss / (values.len() as f64 - 1.0)
}

pub(crate) fn sample_sd(values: &[f64]) -> f64 {
    sample_variance(values).sqrt()
}

/// Standardize in place to mean 0 and sample standard deviation 1.
pub(crate) fn standardize_slice(values: &mut [f64], label: &str) -> Result<()> {
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    let var = ss / (values.len() as f64 - 1.0);
    if var <= 0.0 || !var.is_finite() {
        return Err(Error::ZeroVariance {
            label: label.to_string(),
        });
    }
    let sd = var.sqrt();
    for v in values.iter_mut() {
        *v = (*v - m) / sd;
    }
    Ok(())
}

/// Rescale a column to mean 0 and sample standard deviation 1 (n−1 denominator).
pub fn standardize(x: &Column) -> Result<Column> {
    let mut values = x.values.clone();
    standardize_slice(&mut values, &x.label)?;
    Ok(Column {
        values,
        label: x.label.clone(),
    })
}

pub(crate) fn pearson_slice(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let ma = mean(a);
    let mb = mean(b);
    let mut saa = 0.0;
    let mut sbb = 0.0;
    let mut sab = 0.0;
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        saa += dx * dx;
        sbb += dy * dy;
        sab += dx * dy;
    }
    if saa <= 0.0 {
        return Err(Error::ZeroVariance {
            label: "first argument".to_string(),
        });
    }
    if sbb <= 0.0 {
        return Err(Error::ZeroVariance {
            label: "second argument".to_string(),
        });
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation of two equal-length columns; result clamped to [−1, 1].
pub fn pearson_correlation(a: &Column, b: &Column) -> Result<f64> {
    pearson_slice(a.values(), b.values())
}

/// 2×2 symmetric inverse of [[a, b], [b, d]].
fn inv2(a: f64, b: f64, d: f64) -> (f64, f64, f64) {
    let det = a * d - b * b;
    (d / det, -b / det, a / det)
}

/// Sandwich A⁻¹ M A⁻¹ for 2×2 symmetric A (given as its inverse) and M.
fn sandwich2(ainv: (f64, f64, f64), m: (f64, f64, f64)) -> DMatrix<f64> {
    let (ia, ib, id) = ainv;
    let (m00, m01, m11) = m;
    // B = A⁻¹ M
    let b00 = ia * m00 + ib * m01;
    let b01 = ia * m01 + ib * m11;
    let b10 = ib * m00 + id * m01;
    let b11 = ib * m01 + id * m11;
    // V = B A⁻¹, symmetrized
    let v00 = b00 * ia + b01 * ib;
    let v01 = b00 * ib + b01 * id;
    let v10 = b10 * ia + b11 * ib;
    let v11 = b10 * ib + b11 * id;
    let off = 0.5 * (v01 + v10);
    DMatrix::from_row_slice(2, 2, &[v00, off, off, v11])
}

/// Ordinary least squares of y on a single regressor with intercept.
///
/// Both classical and HC covariances are computed in closed form; this is the
/// hot path for the partition and composition loops.
pub fn ols_fit(y: &Column, x: &Column, hc: HcKind) -> Result<RegressionFit> {
    let n = y.len();
    if x.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: x.len(),
        });
    }
    if n < 3 {
        return Err(Error::TooFewRows { n, min: 3 });
    }
    let xv = x.values();
    let yv = y.values();
    let mx = mean(xv);
    let my = mean(yv);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (xi, yi) in xv.iter().zip(yv) {
        let dx = xi - mx;
        sxx += dx * dx;
        sxy += dx * (yi - my);
    }
    // Constant x is collinear with the intercept.
    let sum_x2: f64 = xv.iter().map(|v| v * v).sum();
    if sxx <= RANK_TOL * sum_x2.max(f64::MIN_POSITIVE) {
        return Err(Error::RankDeficient { rank: 1, cols: 2 });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;

    let mut rss = 0.0;
    let mut m00 = 0.0; // Σ e²
    let mut m01 = 0.0; // Σ x e²
    let mut m11 = 0.0; // Σ x² e²
    for (xi, yi) in xv.iter().zip(yv) {
        let e = yi - intercept - slope * xi;
        let e2 = e * e;
        rss += e2;
        m00 += e2;
        m01 += xi * e2;
        m11 += xi * xi * e2;
    }
    let dof = (n - 2) as f64;
    let sigma2 = rss / dof;

    // A = X'X = [[n, Σx], [Σx, Σx²]]
    let sum_x: f64 = xv.iter().sum();
    let ainv = inv2(n as f64, sum_x, sum_x2);
    let vcov_classical = {
        let (ia, ib, id) = ainv;
        DMatrix::from_row_slice(2, 2, &[sigma2 * ia, sigma2 * ib, sigma2 * ib, sigma2 * id])
    };
    let mut vcov_hc = sandwich2(ainv, (m00, m01, m11));
    if hc == HcKind::Hc1 {
        vcov_hc *= n as f64 / dof;
    }

    Ok(RegressionFit {
        intercept,
        slopes: vec![slope],
        residual_variance: sigma2,
        vcov_classical,
        vcov_hc,
        hc_kind: hc,
        n,
        first_stage_f: None,
        warnings: Vec::new(),
    })
}

/// OLS of y on several regressors with intercept, via column-pivoted QR.
pub fn ols_fit_multi(y: &Column, xs: &[Column], hc: HcKind) -> Result<RegressionFit> {
    let n = y.len();
    let p = xs.len() + 1;
    for x in xs {
        if x.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: x.len(),
            });
        }
    }
    if n < p + 2 {
        return Err(Error::TooFewRows { n, min: p + 2 });
    }
    let mut design = DMatrix::zeros(n, p);
    for i in 0..n {
        design[(i, 0)] = 1.0;
        for (j, x) in xs.iter().enumerate() {
            design[(i, j + 1)] = x.values()[i];
        }
    }
    // Pivoted QR detects rank; the solve itself goes through the normal
    // equations, which is fine at the small p used here.
    let qr = design.clone().col_piv_qr();
    let r = qr.r();
    let rmax = (0..p).map(|j| r[(j, j)].abs()).fold(0.0_f64, f64::max);
    let rank = (0..p).filter(|&j| r[(j, j)].abs() > RANK_TOL * rmax).count();
    if rank < p {
        return Err(Error::RankDeficient { rank, cols: p });
    }
    let yvec = nalgebra::DVector::from_column_slice(y.values());
    let xtx = design.transpose() * &design;
    let xtx_inv = xtx
        .try_inverse()
        .ok_or(Error::RankDeficient { rank, cols: p })?;
    let beta = &xtx_inv * design.transpose() * &yvec;

    let fitted = &design * &beta;
    let resid = &yvec - &fitted;
    let rss: f64 = resid.iter().map(|e| e * e).sum();
    let dof = (n - p) as f64;
    let sigma2 = rss / dof;
    let vcov_classical = symmetrize(&xtx_inv * sigma2);

    // X' diag(e²) X
    let mut meat = DMatrix::zeros(p, p);
    for i in 0..n {
        let e2 = resid[i] * resid[i];
        for a in 0..p {
            for b in 0..p {
                meat[(a, b)] += design[(i, a)] * e2 * design[(i, b)];
            }
        }
    }
    let mut vcov_hc = symmetrize(&xtx_inv * meat * &xtx_inv);
    if hc == HcKind::Hc1 {
        vcov_hc *= n as f64 / dof;
    }

    Ok(RegressionFit {
        intercept: beta[0],
        slopes: beta.iter().skip(1).copied().collect(),
        residual_variance: sigma2,
        vcov_classical,
        vcov_hc,
        hc_kind: hc,
        n,
        first_stage_f: None,
        warnings: Vec::new(),
    })
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Two-stage least squares of y on x with single instrument z (intercept
/// included). The slope reduces to Cov(y, z) / Cov(x, z); the first-stage F
/// comes from the regression of x on z and a weak-instrument warning is
/// attached when it drops below 10.
pub fn tsls_fit(y: &Column, x: &Column, z: &Column, hc: HcKind) -> Result<RegressionFit> {
    let n = y.len();
    if x.len() != n || z.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: x.len().min(z.len()),
        });
    }
    if n < 3 {
        return Err(Error::TooFewRows { n, min: 3 });
    }
    let cor_xz = pearson_slice(x.values(), z.values())?;
    if cor_xz.abs() <= INSTRUMENT_COR_FLOOR {
        return Err(Error::InstrumentIrrelevant {
            cor: cor_xz,
            floor: INSTRUMENT_COR_FLOOR,
        });
    }

    let xv = x.values();
    let yv = y.values();
    let zv = z.values();
    let mx = mean(xv);
    let my = mean(yv);
    let mz = mean(zv);
    let mut szz = 0.0;
    let mut szx = 0.0;
    let mut szy = 0.0;
    for i in 0..n {
        let dz = zv[i] - mz;
        szz += dz * dz;
        szx += dz * (xv[i] - mx);
        szy += dz * (yv[i] - my);
    }
    let slope = szy / szx;
    let intercept = my - slope * mx;

    // First stage: x on z. With one instrument F = t² of the z coefficient.
    let first_f = {
        let r2 = (szx * szx) / (szz * {
            let mut sxx = 0.0;
            for xi in xv {
                let dx = xi - mx;
                sxx += dx * dx;
            }
            sxx
        });
        r2 * (n as f64 - 2.0) / (1.0 - r2).max(f64::EPSILON)
    };

    // Sandwich around A = Z'W with W = [1, x], Z = [1, z].
    let sum_x: f64 = xv.iter().sum();
    let sum_z: f64 = zv.iter().sum();
    let sum_zx: f64 = zv.iter().zip(xv).map(|(a, b)| a * b).sum();
    // A is not symmetric; invert [[n, Σx], [Σz, Σzx]] directly.
    let det = n as f64 * sum_zx - sum_x * sum_z;
    let ainv = [
        [sum_zx / det, -sum_x / det],
        [-sum_z / det, n as f64 / det],
    ];

    let mut rss = 0.0;
    let mut m00 = 0.0;
    let mut m01 = 0.0;
    let mut m11 = 0.0;
    let mut szz_plain = 0.0;
    let mut sz1 = 0.0;
    for i in 0..n {
        let e = yv[i] - intercept - slope * xv[i];
        let e2 = e * e;
        rss += e2;
        m00 += e2;
        m01 += zv[i] * e2;
        m11 += zv[i] * zv[i] * e2;
        szz_plain += zv[i] * zv[i];
        sz1 += zv[i];
    }
    let dof = (n - 2) as f64;
    let sigma2 = rss / dof;

    // Classical: σ² A⁻¹ (Z'Z) A⁻ᵀ; HC: A⁻¹ (Z'diag(e²)Z) A⁻ᵀ.
    let ztz = [[n as f64, sz1], [sz1, szz_plain]];
    let meat_hc = [[m00, m01], [m01, m11]];
    let classical = iv_sandwich(&ainv, &ztz);
    let vcov_classical = DMatrix::from_row_slice(
        2,
        2,
        &[
            sigma2 * classical[0][0],
            sigma2 * classical[0][1],
            sigma2 * classical[0][1],
            sigma2 * classical[1][1],
        ],
    );
    let hc_raw = iv_sandwich(&ainv, &meat_hc);
    let factor = if hc == HcKind::Hc1 { n as f64 / dof } else { 1.0 };
    let vcov_hc = DMatrix::from_row_slice(
        2,
        2,
        &[
            factor * hc_raw[0][0],
            factor * hc_raw[0][1],
            factor * hc_raw[0][1],
            factor * hc_raw[1][1],
        ],
    );

    let mut warnings = Vec::new();
    if first_f < WEAK_F_THRESHOLD {
        warnings.push(Warning::WeakInstrument {
            partition: 0,
            f_stat: first_f,
        });
    }

    Ok(RegressionFit {
        intercept,
        slopes: vec![slope],
        residual_variance: sigma2,
        vcov_classical,
        vcov_hc,
        hc_kind: hc,
        n,
        first_stage_f: Some(first_f),
        warnings,
    })
}

/// A⁻¹ M A⁻ᵀ for 2×2 A⁻¹ and symmetric M, symmetrized.
fn iv_sandwich(ainv: &[[f64; 2]; 2], m: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut b = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                b[i][j] += ainv[i][k] * m[k][j];
            }
        }
    }
    let mut v = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                v[i][j] += b[i][k] * ainv[j][k];
            }
        }
    }
    let off = 0.5 * (v[0][1] + v[1][0]);
    [[v[0][0], off], [off, v[1][1]]]
}
