use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} out of range: {bound}")]
    ParameterOutOfRange {
        name: &'static str,
        value: f64,
        bound: String,
    },

    #[error("unsupported schedule `{0}`")]
    UnsupportedSchedule(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite integrand value at sample {index}")]
    PoisonedEstimate { index: usize },

    #[error("pathwise gradient requested but the test function has no derivative")]
    MissingDerivative,

    #[error("test function is not cylindrical over coordinates 1..={j_max}")]
    NotCylindrical { j_max: usize },

    #[error("inconclusive result: {0}")]
    Inconclusive(String),

    #[error("quadrature did not converge: achieved error {achieved:.3e}, requested {requested:.3e}")]
    QuadratureNoConvergence { achieved: f64, requested: f64 },

    #[error(
        "Picard iteration for the state equation did not converge after {sweeps} sweeps \
         (last residual {last_residual:.3e}, [F]_Lip*(T-t0) = {lip_times_horizon:.4})"
    )]
    NonContraction {
        sweeps: usize,
        last_residual: f64,
        lip_times_horizon: f64,
    },

    #[error("control value with norm {norm} lies outside the ball of radius {radius}")]
    Inadmissible { norm: f64, radius: f64 },

    #[error(
        "HJB fixed-point iteration diverging: empirical contraction factor {empirical:.4}, \
         analytic factor with unit gradient constant {analytic_unit_c:.4}"
    )]
    HjbDivergence { empirical: f64, analytic_unit_c: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("state path {path}: {source}")]
    Path {
        path: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed solution file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 1.0 && alpha < 2.0 {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange {
            name: "alpha",
            value: alpha,
            bound: "must lie in the open interval (1, 2)".into(),
        })
    }
}

pub(crate) fn check_nonnegative(name: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange {
            name,
            value,
            bound: "must be finite and >= 0".into(),
        })
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange {
            name,
            value,
            bound: "must be finite and > 0".into(),
        })
    }
}
