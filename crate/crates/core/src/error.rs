use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    Dimension {
        expected: (u32, u32),
        found: (u32, u32),
    },
    #[error("grid must have at least one row and one column")]
    EmptyGrid,
    #[error("operation requires a non-empty mask")]
    EmptyMask,
    #[error("invalid run-length encoding: {0}")]
    InvalidRle(String),
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("frame {frame}: no predicted masks available")]
    MissingPredictions { frame: u64 },
    #[error("frame {frame}, instance {instance}: approximate mask missing")]
    MissingApprox { frame: u64, instance: u64 },
    #[error("{location}: field `{field}`: {reason}")]
    Validation {
        location: String,
        field: String,
        reason: String,
    },
    #[error("scene generation failed: {0}")]
    Generation(String),
    #[error("trainer hook failed: {0}")]
    Hook(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed TOML: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn validation(
        location: impl Into<String>,
        field: impl Into<String>,
        reason: impl Into<String>,
    ) -> Self {
        Error::Validation {
            location: location.into(),
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by malformed inputs rather than the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Hook(_))
    }
}
