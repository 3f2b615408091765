//! Crate-wide error type.
//!
//! Variants are grouped so the CLI can map them onto its exit-code contract:
//! everything except `Io` is a validation/configuration failure (exit 2),
//! `Io` is an input/output failure (exit 3).

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid argument, file content, or configuration.
    #[error("validation: {0}")]
    Validation(String),

    /// Underlying I/O failure with the path involved.
    #[error("i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Parse failure in one of the text formats (CSV, config, sidecar).
    #[error("parse error in {path} line {line}: {what}")]
    Parse {
        path: PathBuf,
        line: usize,
        what: String,
    },

    /// Energy outside the attenuation table range.
    #[error("energy {energy_kev} keV outside table range [{min_kev}, {max_kev}]")]
    EnergyOutOfRange {
        energy_kev: f64,
        min_kev: f64,
        max_kev: f64,
    },

    /// Raster dimensions do not match.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Phantom generation failed to place a contained cavity.
    #[error("cavity rejection exceeded {attempts} attempts (degenerate ranges)")]
    GenerationFailure { attempts: u32 },

    /// GLM input has only one outcome class.
    #[error("degenerate data: all observations share one outcome")]
    DegenerateData,

    /// GLM coefficients diverge with deviance still decreasing.
    #[error("complete separation detected (|coefficient| > {0})")]
    Separation(f64),

    /// Design matrix is rank deficient (collinear covariates).
    #[error("rank-deficient design matrix: {0}")]
    RankDeficient(String),

    /// POD fit has non-positive size coefficient; detectability does not grow.
    #[error("no detectability growth: size coefficient {beta} <= 0")]
    NoDetectabilityGrowth { beta: f64 },

    /// Root bracketing for s90/95 failed.
    #[error("no band crossing inside bracket [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },

    /// Fit not converged where a converged fit is required.
    #[error("fit did not converge")]
    NotConverged,

    /// No valid pixels under a mask.
    #[error("all mask pixels invalid: {0}")]
    EmptyMask(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures the CLI reports as exit code 3 rather than 2.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
