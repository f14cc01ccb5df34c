use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The argument of the complex logarithm sits on (or within tolerance of)
    /// the closed negative real axis.
    #[error("complex logarithm argument {0} lies on the branch cut")]
    BranchCut(Complex64),

    #[error("at delta = {delta} Hz: {source}")]
    AtDetuning {
        delta: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("singular linear system (condition estimate {0:e})")]
    Singular(f64),

    #[error("quadrature did not converge after {subdivisions} subdivisions (error estimate {error:e})")]
    Quadrature { subdivisions: usize, error: f64 },

    #[error("feature extraction failed ({feature}): {reason}")]
    Extraction {
        feature: &'static str,
        reason: String,
    },

    #[error("fit: {0}")]
    Fit(String),

    #[error("spectrum {index}: {source}")]
    InSpectrum {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_detuning(self, delta: f64) -> Self {
        Error::AtDetuning {
            delta,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_spectrum(self, index: usize) -> Self {
        Error::InSpectrum {
            index,
            source: Box::new(self),
        }
    }

    /// Strips detuning/spectrum annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtDetuning { source, .. } | Error::InSpectrum { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors raised while evaluating the physical model
    /// (domain violations, branch cuts, singular solves).
    pub fn is_model_error(&self) -> bool {
        matches!(
            self.root(),
            Error::Domain(_) | Error::BranchCut(_) | Error::Singular(_) | Error::InvalidParameter(_)
        )
    }
}
