use thiserror::Error;

/// A configuration value failed validation. `key` names the offending field
/// exactly as it appears in config files.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid config key `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("unexpected end of input")]
    Truncated,
    #[error("unsupported format tag {0:#04x}")]
    FormatTag(u8),
    #[error("unknown {what} discriminant {value}")]
    Discriminant { what: &'static str, value: u8 },
    #[error("{0} trailing bytes after value")]
    TrailingBytes(usize),
    #[error("bad file magic")]
    Magic,
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for CodecError {
    fn from(e: std::io::Error) -> Self {
        CodecError::Io(e.to_string())
    }
}
