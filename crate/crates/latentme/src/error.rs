//! Error and warning types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by estimation, measurement, and resampling routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A column is constant (zero sample variance) where variation is required.
    #[error("column '{label}' has zero variance")]
    ZeroVariance { label: String },

    /// Input contains NaN or infinite entries.
    #[error("column '{label}' contains a non-finite value at row {row}")]
    NonFinite { label: String, row: usize },

    /// Joint operations received columns of different lengths.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// Too few rows for the requested operation.
    #[error("too few rows: {n} (need at least {min})")]
    TooFewRows { n: usize, min: usize },

    /// The regression design matrix is rank deficient.
    #[error("design matrix is rank deficient (rank {rank} of {cols} columns)")]
    RankDeficient { rank: usize, cols: usize },

    /// Instrument and regressor are uncorrelated beyond the relevance floor.
    #[error("instrument is irrelevant: |cor(x, z)| = {cor:.3e} below floor {floor:.1e}")]
    InstrumentIrrelevant { cor: f64, floor: f64 },

    /// Indicator column declared binary contains values other than 0/1.
    #[error("column '{label}' is not binary (found {value} at row {row})")]
    NotBinary {
        label: String,
        row: usize,
        value: f64,
    },

    /// A binary indicator column has a single response value.
    #[error("column '{label}' has the same response for every row")]
    AllSameResponse { label: String },

    /// Indicator data still contains missing cells where complete data is required.
    #[error("indicator matrix has missing cells (row {row}, column '{label}'); run listwise deletion first")]
    MissingValues { row: usize, label: String },

    /// The leading PCA eigenvalue is not strictly positive.
    #[error("degenerate spectrum: leading eigenvalue {eigenvalue:.3e} is not strictly positive")]
    DegenerateSpectrum { eigenvalue: f64 },

    /// Split-half scores are non-positively correlated.
    #[error("split correlation {cor:.4} is not positive; halves do not measure a common trait")]
    NegativeSplitCorrelation { cor: f64 },

    /// Exhaustive partition enumeration would exceed the configured cap.
    #[error("{count} balanced partitions exceed cap {cap}; use sampling instead")]
    ExceedsCap { count: u128, cap: usize },

    /// More distinct partitions requested than exist.
    #[error("requested {k} partitions but only {total} distinct ones exist")]
    KTooLarge { k: usize, total: u128 },

    /// A scalar argument is outside its valid range.
    #[error("{what} = {value} is outside ({lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// Posterior spreads are required but the measurement method does not produce them.
    #[error("method of composition requires posterior spreads; method '{method}' does not produce them")]
    MissingPosterior { method: String },

    /// Every partition in a plan failed to produce a valid split.
    #[error("all {n} partitions failed to produce valid split estimates")]
    AllPartitionsFailed { n: usize },

    /// More than the tolerated share of bootstrap replicates failed.
    #[error("{failed} of {total} bootstrap replicates failed (more than {max_share:.0}%)")]
    TooManyFailures {
        failed: usize,
        total: usize,
        max_share: f64,
    },

    /// A configuration value is invalid.
    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },
}

/// Non-fatal diagnostics attached to fits and reports.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Warning {
    /// First-stage F statistic fell below the weak-instrument threshold.
    WeakInstrument { partition: usize, f_stat: f64 },
    /// Split correlation is positive but very small.
    WeakSplit { partition: usize, correlation: f64 },
    /// A partition was excluded from aggregation.
    PartitionSkipped { partition: usize, reason: String },
    /// PCA was run with fewer rows than columns.
    SmallSamplePca { rows: usize, cols: usize },
    /// EM stopped at the iteration cap before meeting tolerance.
    EmNotConverged { iterations: usize },
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::WeakInstrument { partition, f_stat } => write!(
                f,
                "weak instrument in partition {partition}: first-stage F = {f_stat:.2} < 10"
            ),
            Warning::WeakSplit {
                partition,
                correlation,
            } => write!(
                f,
                "weak split in partition {partition}: correlation = {correlation:.4} < 0.05"
            ),
            Warning::PartitionSkipped { partition, reason } => {
                write!(f, "partition {partition} skipped: {reason}")
            }
            Warning::SmallSamplePca { rows, cols } => {
                write!(f, "PCA with {rows} rows for {cols} columns; N > M is recommended")
            }
            Warning::EmNotConverged { iterations } => {
                write!(f, "EM did not converge within {iterations} iterations")
            }
        }
    }
}
