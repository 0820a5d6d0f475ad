use thiserror::Error;

/// Errors produced by every tier of the simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid cutoff {0}: at least 2 Fock levels are required")]
    InvalidCutoff(usize),

    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("step size underflow at t = {t:.6e} (dt = {dt:.3e}); the system is too stiff for the explicit integrator")]
    StiffnessFailure { t: f64, dt: f64 },

    #[error("steady state is not unique or could not be isolated (residual {residual:.3e})")]
    DegenerateSteadyState { residual: f64 },

    #[error("Fock cutoff too small: population {population:.3e} on level {level} exceeds {tolerance:.1e}")]
    CutoffTooSmall { level: usize, population: f64, tolerance: f64 },

    #[error("negative diffusion: lambda_minus = {lambda_minus:.6e} (outside Fokker-Planck validity)")]
    NegativeDiffusion { lambda_minus: f64 },

    #[error("trajectory diverged at t = {t:.6e} (|state| = {norm:.3e})")]
    Blowup { t: f64, norm: f64 },

    #[error("no finite Hopf threshold: gamma ({gamma}) must exceed q ({q})")]
    NoHopfThreshold { gamma: f64, q: f64 },

    #[error("resource budget exceeded: {0}")]
    ResourceBudget(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used for failed sweep records.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::InvalidCutoff(_) => "invalid-cutoff",
            Error::InvalidSpace(_) => "invalid-space",
            Error::InvalidParams(_) => "invalid-params",
            Error::InvalidState(_) => "invalid-state",
            Error::StiffnessFailure { .. } => "stiffness-failure",
            Error::DegenerateSteadyState { .. } => "degenerate-steady-state",
            Error::CutoffTooSmall { .. } => "cutoff-too-small",
            Error::NegativeDiffusion { .. } => "negative-diffusion",
            Error::Blowup { .. } => "blowup",
            Error::NoHopfThreshold { .. } => "no-hopf-threshold",
            Error::ResourceBudget(_) => "resource-budget",
            Error::Numerical(_) => "numerical-failure",
            Error::Io(_) => "io",
            Error::Csv(_) => "io",
            Error::Json(_) => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
