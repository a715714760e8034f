use thiserror::Error;

pub type Result<T> = std::result::Result<T, WalkError>;

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("flux {p}/{q} is not a reduced fraction with q > 0")]
    NotCoprime { p: i64, q: i64 },

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: String,
        reason: String,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("gauge field not single-valued on periodic axis {axis}: {detail}")]
    Incommensurate { axis: char, detail: String },

    #[error("gapless at cut: eigenvalue at quasienergy {energy} lies {distance:e} from the branch cut; shift the cut")]
    GaplessAtCut { energy: f64, distance: f64 },

    #[error("band group {group} not isolated: separation {gap:e} at k = ({kx}, {ky})")]
    NotIsolated {
        group: String,
        gap: f64,
        kx: f64,
        ky: f64,
    },

    #[error("energy {energy} is not inside a bulk gap")]
    NotInGap { energy: f64 },

    #[error("quantization residual {residual:e} for {what}")]
    Quantization { what: String, residual: f64 },

    #[error("|det h| = {value:e} on the winding contour: gap closes")]
    DeterminantVanishes { value: f64 },

    #[error("topological charge methods disagree at K = ({kx}, {ky}): {detail}")]
    ChargeMismatch { kx: f64, ky: f64, detail: String },

    #[error("ambiguous edge classification at ky = {ky}: weight {weight}; refine the ky grid")]
    AmbiguousEdge { ky: f64, weight: f64 },

    #[error("leakage {leakage:e} exceeds {limit:e} at step {step}")]
    Leakage { leakage: f64, limit: f64, step: usize },

    #[error("wave packet overflows the lattice: {0}")]
    PacketOverflow(String),

    #[error("split-step result not grid converged: {coarse:e} vs {fine:e}")]
    NotConverged { coarse: f64, fine: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl WalkError {
    pub(crate) fn param(name: &'static str, value: impl ToString, reason: impl Into<String>) -> Self {
        WalkError::InvalidParameter {
            name,
            value: value.to_string(),
            reason: reason.into(),
        }
    }
}
