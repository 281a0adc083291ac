use std::fmt;

/// A failure tagged with the process exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or configuration (exit 2).
    Usage(anyhow::Error),
    /// Unreadable, malformed or inconsistent input (exit 3).
    Data(anyhow::Error),
    /// Non-finite values during training or inference (exit 4).
    Numeric(anyhow::Error),
}

pub type Outcome<T> = Result<T, Failure>;

impl Failure {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Self::Usage(anyhow::anyhow!("{msg}"))
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Self::Data(anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Data(_) => 3,
            Self::Numeric(_) => 4,
        }
    }

    fn map(self, f: impl FnOnce(anyhow::Error) -> anyhow::Error) -> Self {
        match self {
            Self::Usage(e) => Self::Usage(f(e)),
            Self::Data(e) => Self::Data(f(e)),
            Self::Numeric(e) => Self::Numeric(f(e)),
        }
    }

    pub fn inner(&self) -> &anyhow::Error {
        match self {
            Self::Usage(e) | Self::Data(e) | Self::Numeric(e) => e,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.inner())
    }
}

impl std::error::Error for Failure {}

impl From<coad_core::Error> for Failure {
    fn from(e: coad_core::Error) -> Self {
        use coad_core::Error as E;
        match e {
            E::NonFinite(_) => Self::Numeric(e.into()),
            E::Config(_) | E::Frame { .. } | E::NotDivisible { .. } => Self::Usage(e.into()),
            _ => Self::Data(e.into()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Data(e.into())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Self::Data(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::Data(e.into())
    }
}

pub trait Context<T> {
    fn context(self, msg: impl fmt::Display + Send + Sync + 'static) -> Outcome<T>;
}

impl<T, E: Into<Failure>> Context<T> for Result<T, E> {
    fn context(self, msg: impl fmt::Display + Send + Sync + 'static) -> Outcome<T> {
        self.map_err(|e| e.into().map(|inner| inner.context(msg)))
    }
}
