use qvdp_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] Error),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    /// 1 usage or I/O, 2 numerical failure, 3 resource budget.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 1,
            CliError::Core(e) => match e {
                Error::ResourceBudget(_) => 3,
                Error::InvalidCutoff(_)
                | Error::InvalidSpace(_)
                | Error::InvalidParams(_)
                | Error::InvalidState(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_) => 1,
                _ => 2,
            },
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Core(e) => e.tag(),
        }
    }

    /// One-line JSON report for standard error.
    pub fn report(&self) -> String {
        serde_json::json!({
            "error": self.tag(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}
