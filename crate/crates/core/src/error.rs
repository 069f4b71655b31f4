use thiserror::Error;

/// Failure modes of the numerical pipeline.
///
/// Every fallible operation reports through this enum so callers can tell
/// configuration mistakes apart from genuine numerical breakdowns.
#[derive(Debug, Error)]
pub enum Error {
    /// A point left the coordinate domain of the chart.
    #[error("point outside chart domain: {0}")]
    OutsideDomain(String),

    /// The metric failed its signature or regularity check.
    #[error("metric degenerate or wrong signature: {0}")]
    BadMetric(String),

    /// The two-point geodesic solve did not converge to a unique solution.
    #[error("geodesic boundary value problem failed: {0}")]
    Geodesic(String),

    /// An ODE integration could not reach the requested accuracy.
    #[error("ode integration failed: {0}")]
    Ode(String),

    /// A quadrature did not converge within its evaluation budget.
    #[error("quadrature failed: {0}")]
    Quadrature(String),

    /// Argument hit the branch cut or a pole of a special function.
    #[error("special function domain error: {0}")]
    SpecialFunction(String),

    /// An eigenvalue cluster could not be separated reliably.
    #[error("spectral analysis failed: {0}")]
    Spectral(String),

    /// Initial or boundary data for a transport equation is inconsistent.
    #[error("invalid transport data: {0}")]
    TransportData(String),

    /// A caller supplied an invalid parameter combination.
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
