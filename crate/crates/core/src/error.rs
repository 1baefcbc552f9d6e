use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("no usable data: {0}")]
    EmptyData(String),

    #[error("out of bounds: {0}")]
    Bounds(String),

    #[error("invalid latent code: {0}")]
    InvalidCode(String),

    /// A request that is well-formed but cannot be satisfied. `fields` names
    /// the offending inputs so clients can highlight them.
    #[error("{message}")]
    Constraint {
        message: String,
        fields: Vec<String>,
    },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn constraint(message: impl Into<String>, fields: &[&str]) -> Self {
        Error::Constraint {
            message: message.into(),
            fields: fields.iter().map(|f| f.to_string()).collect(),
        }
    }

    /// Stable machine-readable identifier used by the HTTP and C interfaces.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Format(_) => "format",
            Error::EmptyData(_) => "empty_data",
            Error::Bounds(_) => "bounds",
            Error::InvalidCode(_) => "invalid_code",
            Error::Constraint { .. } => "constraint",
            Error::NotFound(_) => "not_found",
            Error::Io(_) => "io",
        }
    }

    pub fn fields(&self) -> &[String] {
        match self {
            Error::Constraint { fields, .. } => fields,
            _ => &[],
        }
    }
}

impl Clone for Error {
    fn clone(&self) -> Self {
        match self {
            Error::Format(m) => Error::Format(m.clone()),
            Error::EmptyData(m) => Error::EmptyData(m.clone()),
            Error::Bounds(m) => Error::Bounds(m.clone()),
            Error::InvalidCode(m) => Error::InvalidCode(m.clone()),
            Error::Constraint { message, fields } => Error::Constraint {
                message: message.clone(),
                fields: fields.clone(),
            },
            Error::NotFound(m) => Error::NotFound(m.clone()),
            Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), e.to_string())),
        }
    }
}
