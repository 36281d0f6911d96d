use thiserror::Error;

/// Coarse failure category, used by callers (e.g. the CLI) to map errors
/// onto process exit codes without matching every variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed or inconsistent input data.
    Validation,
    /// A numerical procedure broke down or a well-posedness check failed.
    Numeric,
    /// The requested isolated subsystem does not exist for this coupling.
    InfeasibleIsolation,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("{name} must be symmetric: asymmetry norm {asymmetry:.3e} exceeds {tol:.1e}")]
    Asymmetric {
        name: String,
        asymmetry: f64,
        tol: f64,
    },

    #[error("{name} is not positive semi-definite: eigenvalue {eigenvalue:.6e} below -{tol:.3e}")]
    NotPsd {
        name: String,
        eigenvalue: f64,
        tol: f64,
    },

    #[error("output selector is not a row-selection of a permutation matrix: {reason}")]
    InvalidSelector { reason: String },

    #[error("argument out of domain: {context}")]
    Domain { context: String },

    #[error("invalid time grid: {context}")]
    Grid { context: String },

    #[error("{context}: rank {actual} below required {expected}")]
    RankDeficient {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("isolation order {requested} exceeds d = n - rank M = {available}")]
    InfeasibleIsolation { requested: usize, available: usize },

    #[error("no isolated subsystem exists: the coupling matrix has full column rank (d = 0)")]
    NoIsolation,

    #[error("singular linear system in {context}: condition number {condition:.3e}")]
    Pole { context: String, condition: f64 },

    #[error("reference scale ||F sqrt(P)||^2 = {ref_scale:.3e} vanishes; deviation analysis is trivial")]
    TrivialCase { ref_scale: f64 },

    #[error("P + i*Theta has eigenvalue {eigenvalue:.6e} < -1e-10; P is not a valid second-moment matrix")]
    UnphysicalState { eigenvalue: f64 },

    #[error("||G sqrt(P)|| = {g_norm:.3e} vanishes; the square-root asymptote is undefined")]
    InapplicableAsymptote { g_norm: f64 },

    #[error("gradient equation residual {residual:.3e} exceeds tolerance {tol:.3e} after solve")]
    OptimalityViolation { residual: f64, tol: f64 },

    #[error("numerical failure in {context}")]
    Numeric { context: String },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Dimension { .. }
            | Error::Asymmetric { .. }
            | Error::NotPsd { .. }
            | Error::InvalidSelector { .. }
            | Error::Domain { .. }
            | Error::Grid { .. }
            | Error::RankDeficient { .. }
            | Error::TrivialCase { .. }
            | Error::UnphysicalState { .. }
            | Error::InapplicableAsymptote { .. } => ErrorClass::Validation,
            Error::InfeasibleIsolation { .. } | Error::NoIsolation => {
                ErrorClass::InfeasibleIsolation
            }
            Error::Pole { .. } | Error::OptimalityViolation { .. } | Error::Numeric { .. } => {
                ErrorClass::Numeric
            }
        }
    }

    pub(crate) fn dimension(
        context: impl Into<String>,
        expected: impl Into<String>,
        actual: impl Into<String>,
    ) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.into(),
            actual: actual.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
