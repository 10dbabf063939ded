use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("action space too large: K = {links} exceeds the configured cap of {cap}")]
    Capacity { links: usize, cap: usize },

    #[error("quadrature did not converge after {intervals} subintervals (estimate {estimate:e}, error {error:e})")]
    Quadrature {
        estimate: f64,
        error: f64,
        intervals: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("regret accounting: {0}")]
    Accounting(String),

    #[error("{}", format_config_error(.message, *.line))]
    Config { message: String, line: Option<usize> },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_config_error(message: &str, line: Option<usize>) -> String {
    match line {
        Some(line) => format!("config line {line}: {message}"),
        None => format!("config: {message}"),
    }
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>, line: Option<usize>) -> Self {
        Error::Config {
            message: msg.into(),
            line,
        }
    }
}
