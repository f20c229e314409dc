use thiserror::Error;

use crate::potential::Potential;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step control failed on [{from}, {to}]: {reason}")]
    StepControl { from: f64, to: f64, reason: String },

    #[error("not elliptic: trace {trace} lies outside (-2, 2)")]
    NotElliptic { trace: f64 },

    #[error("energy {energy} is too close to a band edge (discriminant {discriminant}); evaluate in the band interior")]
    EdgeProximity { energy: f64, discriminant: f64 },

    #[error("band count {found} exceeds the a priori bound {bound}")]
    BandCount { found: usize, bound: usize },

    #[error("connector mismatch {mismatch} is not below epsilon {epsilon}")]
    Connector { mismatch: f64, epsilon: f64 },

    #[error("inconsistent block layout: {0}")]
    Layout(String),

    #[error("gap search exhausted after {tries} tries; best minimal gap {best_gap}")]
    GapSearchExhausted {
        tries: usize,
        best_gap: f64,
        best: Box<Potential>,
    },

    #[error("cover verification failed: energies [{lo}, {hi}] are not covered")]
    CoverFailure { lo: f64, hi: f64 },

    #[error("cover does not yield a positive Lyapunov floor (grid minimum {minimum})")]
    NoLyapunovFloor { minimum: f64 },

    #[error("N too small: need N >= {minimum} (l = {ell}, N' = {nprime})")]
    NTooSmall {
        minimum: usize,
        ell: usize,
        nprime: usize,
    },

    #[error("bound fails at {failed} of {total} energies")]
    BoundViolated { failed: usize, total: usize },

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with stage tags stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &str) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
