//! Crate-wide error type.

use crate::config::ValidationReport;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Configuration rejected by `config::validate`.
    #[error("invalid configuration:\n{0}")]
    InvalidConfig(ValidationReport),

    #[error("sample-rate mismatch: {left} Hz vs {right} Hz")]
    SampleRateMismatch { left: f64, right: f64 },

    #[error("window [{t0:.6}, {t1:.6}] s outside trace extent [{lo:.6}, {hi:.6}] s")]
    WindowOutOfBounds { t0: f64, t1: f64, lo: f64, hi: f64 },

    #[error("band {center} ± {half_width} Hz not inside (0, {nyquist}) Hz")]
    BandOutsideNyquist {
        center: f64,
        half_width: f64,
        nyquist: f64,
    },

    /// Iterative fit ran out of iterations; `best` carries the best-so-far
    /// parameter vector in the same order the fit was posed.
    #[error("fit did not converge after {iterations} iterations (residual norm {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("time step too coarse: drawn step of {step_um:.3} um exceeds droplet radius {radius_um:.3} um")]
    TimeStepTooCoarse { step_um: f64, radius_um: f64 },

    /// Input is structurally valid but analytically unusable
    /// (all windows invalid, zero mean, fewer points than required, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
