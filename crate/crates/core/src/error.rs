use thiserror::Error;

pub type Result<T> = std::result::Result<T, BeamError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeamError {
    #[error("domain error: {0}")]
    Domain(String),

    /// The boundary trace of this mode vanishes, so no control can reach it.
    #[error("mode {mode} carries data (|coefficient| = {magnitude:e}) but its boundary trace vanishes")]
    UncontrollableMode { mode: usize, magnitude: f64 },

    /// Neumann data with a nonzero mean cannot be steered to rest.
    #[error("inadmissible Neumann data: mean displacement residual {residual_u0:e}, mean velocity residual {residual_u1:e}")]
    InadmissibleData { residual_u0: f64, residual_u1: f64 },

    /// Two collided moment constraints demand different values.
    #[error("resonance defect: lambda+_{m} = lambda-_{n} but targets differ by {defect:e} (relative {relative:e})")]
    ResonanceDefect {
        m: usize,
        n: usize,
        defect: f64,
        relative: f64,
    },

    #[error("numerical rank deficiency at {precision_bits} bits: pivot {pivot:e} at index {index} (autoscale trace {trace:?})")]
    NumericalRankDeficiency {
        precision_bits: u32,
        index: usize,
        pivot: f64,
        trace: Vec<u32>,
    },

    #[error("rational branch ratio r = {0}: eigenvalue branches collide, condensation index is infinite")]
    RationalResonance(String),

    #[error("oracle integration unstable at step {step}: norm grew to {norm:e}")]
    OracleInstability { step: usize, norm: f64 },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl BeamError {
    pub fn domain(msg: impl Into<String>) -> Self {
        BeamError::Domain(msg.into())
    }

    /// Short machine-readable name used in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            BeamError::Domain(_) => "Domain",
            BeamError::UncontrollableMode { .. } => "UncontrollableMode",
            BeamError::InadmissibleData { .. } => "InadmissibleData",
            BeamError::ResonanceDefect { .. } => "ResonanceDefect",
            BeamError::NumericalRankDeficiency { .. } => "NumericalRankDeficiency",
            BeamError::RationalResonance(_) => "RationalResonance",
            BeamError::OracleInstability { .. } => "OracleInstability",
            BeamError::Internal(_) => "Internal",
            BeamError::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for BeamError {
    fn from(e: std::io::Error) -> Self {
        BeamError::Io(e.to_string())
    }
}

impl From<csv::Error> for BeamError {
    fn from(e: csv::Error) -> Self {
        BeamError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for BeamError {
    fn from(e: serde_json::Error) -> Self {
        BeamError::Io(e.to_string())
    }
}
