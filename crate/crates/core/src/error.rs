use thiserror::Error;

/// Every failure mode of the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument {re}{im:+}i is within 1e-12 of a pole of the gamma function")]
    Pole { re: f64, im: f64 },
    #[error("argument outside the supported domain: {0}")]
    Domain(String),
    #[error("{what} did not converge (best estimate {value:e}, error estimate {err_est:e})")]
    NonConvergence {
        what: String,
        value: f64,
        err_est: f64,
    },
    #[error("integrand tail does not decay as declared: {0}")]
    TailViolation(String),
    #[error("nested integration supports at most 3 dimensions, got {0}")]
    Dimension(usize),
    #[error("time ordering violated: {0}")]
    Order(String),
    #[error("not implemented: {0}")]
    NotImplemented(String),
    #[error("method not applicable: {0}")]
    MethodDomain(String),
    #[error("a + c = {0} is outside the strip (0, 2)")]
    Strip(f64),
    #[error("parameter out of range: {0}")]
    Range(String),
    #[error("bad time grid: {0}")]
    Grid(String),
    #[error("route not applicable: {0}")]
    RouteDomain(String),
    #[error("unknown identity {0}")]
    UnknownIdentity(String),
    #[error("effective sample size {ess:.1} is below 1% of {n} paths")]
    DegenerateWeights { ess: f64, n: usize },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn no_conv(what: impl Into<String>, value: f64, err_est: f64) -> Self {
        Error::NonConvergence {
            what: what.into(),
            value,
            err_est,
        }
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Pole { .. } => "pole",
            Error::Domain(_) => "domain",
            Error::NonConvergence { .. } => "non_convergence",
            Error::TailViolation(_) => "tail_violation",
            Error::Dimension(_) => "dimension",
            Error::Order(_) => "order",
            Error::NotImplemented(_) => "not_implemented",
            Error::MethodDomain(_) => "method_domain",
            Error::Strip(_) => "strip",
            Error::Range(_) => "range",
            Error::Grid(_) => "grid",
            Error::RouteDomain(_) => "route_domain",
            Error::UnknownIdentity(_) => "unknown_identity",
            Error::DegenerateWeights { .. } => "degenerate_weights",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
