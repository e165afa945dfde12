use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("weather: {0}")]
    Weather(String),

    #[error("no records in window")]
    NoRecordsInWindow,

    #[error("extrapolation not supported: {0}")]
    Extrapolation(String),

    #[error("missing value for {attribute} between {start} and {end}")]
    MissingBracket {
        attribute: String,
        start: String,
        end: String,
    },

    #[error("image: {0}")]
    Image(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("model: {0}")]
    Model(String),

    #[error("training: {0}")]
    Training(String),

    #[error("evaluation: {0}")]
    Eval(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Codec(#[from] image::ImageError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable category, used by the CLI error report.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Weather(_) | Error::NoRecordsInWindow => "weather",
            Error::Extrapolation(_) => "extrapolation",
            Error::MissingBracket { .. } => "missing_value",
            Error::Image(_) | Error::Codec(_) => "image",
            Error::Dataset(_) => "dataset",
            Error::Model(_) => "model",
            Error::Training(_) => "training",
            Error::Eval(_) => "evaluation",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => "parse",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// CSV reader whose open failure is reported as an I/O error on `path`.
pub(crate) fn csv_reader(path: &std::path::Path) -> Result<csv::Reader<std::fs::File>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(f))
}

pub(crate) fn csv_writer(path: &std::path::Path) -> Result<csv::Writer<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}
