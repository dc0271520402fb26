use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("duplicate global_cell_id `{0}`")]
    DuplicateCellId(String),
    #[error("malformed csv: {0}")]
    Csv(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("preprocessor applied before fit")]
    Unfitted,
    #[error("loss became non-finite at epoch {epoch}; lower the learning rate (currently {lr})")]
    NonFiniteLoss { epoch: usize, lr: f64 },
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("model file: {0}")]
    Model(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable short name used in machine-readable diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Argument(_) => "argument",
            Error::Config(_) => "config",
            Error::MissingColumn(_) => "missing_column",
            Error::DuplicateCellId(_) => "duplicate_cell_id",
            Error::Csv(_) => "csv",
            Error::SchemaMismatch(_) => "schema_mismatch",
            Error::Unfitted => "unfitted",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::Undefined(_) => "undefined_metric",
            Error::Model(_) => "model",
            Error::Io(_) => "io",
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(_) => match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                _ => unreachable!(),
            },
            _ => Error::Csv(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Model(e.to_string())
    }
}
