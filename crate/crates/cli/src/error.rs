use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical non-convergence: {0}")]
    NonConvergence(String),
    #[error("acceptance failure: {0}")]
    Acceptance(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Self::Other(_) => 1,
            Self::Config(_) => 2,
            Self::NonConvergence(_) => 3,
            Self::Acceptance(_) => 4,
        })
    }
}

impl From<levy_hjb::Error> for CliError {
    fn from(e: levy_hjb::Error) -> Self {
        use levy_hjb::Error as E;
        match e {
            E::HjbDivergence { .. } | E::NonContraction { .. } | E::QuadratureNoConvergence { .. } => {
                Self::NonConvergence(e.to_string())
            }
            E::Path { ref source, .. } if matches!(**source, E::NonContraction { .. }) => Self::NonConvergence(e.to_string()),
            other => Self::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Other(e.to_string())
    }
}
