//! CLI error taxonomy and exit-code mapping.

use homog_core::HomogError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Malformed config text (JSON syntax, unknown fields, wrong types).
    #[error("parse error: {0}")]
    Parse(String),
    /// Well-formed config violating an invariant.
    #[error("config error: {0}")]
    Config(String),
    /// Domain error from the solver core.
    #[error(transparent)]
    Solver(#[from] HomogError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// 2 = config error, 3 = solver failure, 4 = I/O error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Config(_) => 2,
            CliError::Solver(e) => match e {
                HomogError::NoConvergence { .. }
                | HomogError::NotSPD(_)
                | HomogError::FormulaMismatch(_) => 3,
                // Everything else reflects bad input data.
                _ => 2,
            },
            CliError::Io(_) => 4,
        }
    }

    /// Stable machine-readable name.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Parse(_) => "ParseError",
            CliError::Config(_) => "ValidationError",
            CliError::Io(_) => "IoError",
            CliError::Solver(e) => match e {
                HomogError::InvalidResolution(_) => "InvalidResolution",
                HomogError::SolidTouchesBoundary(_) => "SolidTouchesBoundary",
                HomogError::ContrastViolation(_) => "ContrastViolation",
                HomogError::InconsistentConstraints(_) => "InconsistentConstraints",
                HomogError::NoConvergence { .. } => "NoConvergence",
                HomogError::IncompatibleFlux(_) => "IncompatibleFlux",
                HomogError::NotSPD(_) => "NotSPD",
                HomogError::UnderResolved(_) => "UnderResolved",
                HomogError::FormulaMismatch(_) => "FormulaMismatch",
                HomogError::ValidationError(_) => "ValidationError",
            },
        }
    }

    /// Machine-readable JSON printed to stderr on failure.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}
