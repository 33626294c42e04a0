use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate Rabi vector ({context}): cone angle undefined")]
    DegenerateGeometry { context: String },

    #[error("projected DM operator is not of C_z S_z form (residual {residual:.3e})")]
    ProjectionNotDiagonal { residual: f64 },

    #[error("operator decomposition residual {residual:.3e} exceeds {tolerance:.1e}")]
    DecompositionResidual { residual: f64, tolerance: f64 },

    #[error(
        "time step {dt_ps:.4e} ps violates resolution bound {limit_ps:.4e} ps on segment {segment}"
    )]
    StepSize {
        segment: usize,
        dt_ps: f64,
        limit_ps: f64,
    },

    #[error(
        "norm drift {drift:.3e} at t = {t_ps:.3} ps (dt = {dt_ps:.3e} ps); reduce the step size"
    )]
    NormDrift { drift: f64, t_ps: f64, dt_ps: f64 },

    #[error(
        "step refinement did not converge after {halvings} halvings (last change {change:.3e})"
    )]
    NoConvergence { halvings: usize, change: f64 },

    #[error("state left the instantaneous eigenstate: overlap {overlap:.4} < {required}")]
    Leakage { overlap: f64, required: f64 },

    #[error("eigenstate path too coarse: consecutive overlap {overlap:.5} < 0.999")]
    PathResolution { overlap: f64 },

    #[error("net unitary is not diagonal: off-diagonal {offdiag:.3e} (adiabaticity r = {r:.3e})")]
    NonAdiabatic { offdiag: f64, r: f64 },

    #[error("no ratio solution for delta gamma = {0}")]
    NoSolution(f64),

    #[error("delta gamma = {0} lies on the boundary; the ratio is unbounded")]
    RatioBoundary(f64),

    #[error("{path}:{line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },

    #[error("sequence line {line}: {message}")]
    Sequence { line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
