use std::io;

/// Errors produced anywhere in the simulator.
///
/// The variant names double as the machine-readable `kind` field emitted by
/// the CLI on failure.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("layout error: {0}")]
    Layout(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("degenerate tail: {0}")]
    DegenerateTail(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("size error: {0}")]
    Size(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::Config(_) => "config",
            Error::Layout(_) => "layout",
            Error::Numeric(_) => "numeric",
            Error::Protocol(_) => "protocol",
            Error::DegenerateTail(_) => "degenerate_tail",
            Error::Domain(_) => "domain",
            Error::Size(_) => "size",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
