use thiserror::Error;

pub type Result<T> = std::result::Result<T, VortexError>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum VortexError {
    #[error("singular kernel evaluation: zero separation with zero blob radius")]
    SingularKernel,

    #[error("vortices {i} and {j} coincide")]
    CoincidentPositions { i: usize, j: usize },

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("total circulation is zero")]
    ZeroCirculation,

    #[error("near collision at t={time}: vortices {i} and {j} at separation {separation:e}")]
    NearCollision {
        time: f64,
        i: usize,
        j: usize,
        separation: f64,
    },

    #[error("step size underflow at t={time}: h={step:e}")]
    StepSizeUnderflow { time: f64, step: f64 },

    #[error("circulations violate the harmonic condition: residual {residual:e}")]
    HarmonicViolation { residual: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("insufficient samples: need {need}, got {got}")]
    InsufficientSamples { need: usize, got: usize },

    #[error("degenerate axis: endpoints coincide")]
    DegenerateAxis,

    #[error("blow-up guard tripped at t={time}: particle speed {speed:e} exceeds {bound:e}")]
    BlowUp { time: f64, speed: f64, bound: f64 },

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl VortexError {
    pub fn class(&self) -> ErrorClass {
        use VortexError::*;
        match self {
            InvalidSystem(_) | InvalidArgument(_) | ZeroCirculation | HarmonicViolation { .. }
            | InsufficientSamples { .. } | DegenerateAxis | Json(_) | CoincidentPositions { .. } => {
                ErrorClass::Validation
            }
            SingularKernel | NearCollision { .. } | StepSizeUnderflow { .. }
            | NonConvergence { .. } | DegenerateConfiguration(_) | BlowUp { .. } => {
                ErrorClass::Numerical
            }
            Format(_) | Io(_) => ErrorClass::Io,
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        use VortexError::*;
        match self {
            SingularKernel => "singular_kernel",
            CoincidentPositions { .. } => "coincident_positions",
            InvalidSystem(_) => "invalid_system",
            InvalidArgument(_) => "invalid_argument",
            ZeroCirculation => "zero_circulation",
            NearCollision { .. } => "near_collision",
            StepSizeUnderflow { .. } => "step_size_underflow",
            HarmonicViolation { .. } => "harmonic_violation",
            NonConvergence { .. } => "non_convergence",
            DegenerateConfiguration(_) => "degenerate_configuration",
            InsufficientSamples { .. } => "insufficient_samples",
            DegenerateAxis => "degenerate_axis",
            BlowUp { .. } => "blow_up",
            Format(_) => "format",
            Json(_) => "json",
            Io(_) => "io",
        }
    }
}
