use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error(transparent)]
    Core(#[from] d2d_cache::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// The invariant suite found violations.
    #[error("{0} invariant check(s) failed")]
    Validation(usize),
}

impl HarnessError {
    pub fn category(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Core(e) => e.category(),
            HarnessError::Io(_) => "io",
            HarnessError::Csv(_) => "csv",
            HarnessError::Json(_) => "json",
            HarnessError::Validation(_) => "validation",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" | "parameter" => 2,
            "domain" | "range" => 3,
            "numerical" => 4,
            "validation" => 5,
            _ => 1,
        }
    }
}
