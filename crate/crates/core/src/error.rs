use thiserror::Error;

/// Errors produced anywhere in the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration lies outside its valid domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid motion plan: {0}")]
    Plan(String),

    #[error("motion plan has no segments")]
    EmptyPlan,

    #[error("insertion clamped to [0, {limit_mm}] mm in segment {segment} at t = {t_s} s")]
    Clamped { segment: usize, t_s: f64, limit_mm: f64 },

    /// Consecutive cutter poses moved farther than the sweep can resolve.
    #[error("under-sampled sweep: cutter moved {step_mm:.4} mm between samples {index} and {next} (limit {limit_mm:.4} mm)", next = .index + 1)]
    UnderSampled { index: usize, step_mm: f64, limit_mm: f64 },

    #[error("no removed material: {0}")]
    EmptyCavity(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("ambiguous centerline: {0}")]
    AmbiguousCenterline(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("mask file: {0}")]
    MaskFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input rather than by the run itself.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Plan(_)
                | Error::EmptyPlan
                | Error::Scenario(_)
                | Error::Parse { .. }
                | Error::MaskFormat(_)
                | Error::Degenerate(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
