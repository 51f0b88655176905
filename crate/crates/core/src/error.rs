use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error classes, used by the command line to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("degenerate embedding: {0}")]
    Degenerate(String),
    #[error("localization graph is disconnected: {}", describe_components(.components))]
    Disconnected { components: Vec<Vec<usize>> },
    #[error("experiment failed: {0}")]
    Experiment(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Numerical(_)
            | Error::Degenerate(_)
            | Error::Disconnected { .. }
            | Error::Experiment(_) => ErrorCategory::Numerical,
            _ => ErrorCategory::Usage,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

fn describe_components(components: &[Vec<usize>]) -> String {
    let mut parts: Vec<String> = components
        .iter()
        .take(8)
        .map(|c| {
            let shown: Vec<String> = c.iter().take(5).map(|v| v.to_string()).collect();
            let more = if c.len() > 5 { ", ..." } else { "" };
            format!("{} vertices {{{}{}}}", c.len(), shown.join(", "), more)
        })
        .collect();
    if components.len() > 8 {
        parts.push(format!("and {} more", components.len() - 8));
    }
    format!("{} components: {}", components.len(), parts.join("; "))
}
