use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the domain of a link inverse.
    #[error("value {value} is outside the domain of the {link} link inverse")]
    Domain { value: f64, link: &'static str },

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("degenerate estimate: {0}")]
    DegenerateEstimate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Configuration validation failure; one message per offending field.
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// CLI exit status: 3 for unreadable or malformed data, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Schema(_) | Error::Io(_) => 3,
            _ => 2,
        }
    }
}
