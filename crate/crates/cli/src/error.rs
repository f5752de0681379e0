//! Failure classes and their exit codes.

use std::fmt;
use std::process::ExitCode;

use binllm::codec::CodeDumpError;
use binllm::collab::CollabError;
use binllm::dataset::DatasetError;
use binllm::eval::EvalError;
use binllm::promptgen::PromptError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Class {
    /// Bad flags, bad configuration values, missing prerequisites.
    User,
    /// Input files that are missing, malformed or unusable.
    Data,
    /// A broken invariant inside the toolkit.
    Internal,
}

impl Class {
    pub fn exit_code(self) -> ExitCode {
        match self {
            Class::User => ExitCode::from(1),
            Class::Data => ExitCode::from(2),
            Class::Internal => ExitCode::from(3),
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub class: Class,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn user(error: impl Into<anyhow::Error>) -> Self {
        Self {
            class: Class::User,
            error: error.into(),
        }
    }

    pub fn data(error: impl Into<anyhow::Error>) -> Self {
        Self {
            class: Class::Data,
            error: error.into(),
        }
    }

    pub fn internal(error: impl Into<anyhow::Error>) -> Self {
        Self {
            class: Class::Internal,
            error: error.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CliResult<T> = Result<T, Failure>;

pub fn io_failure(path: &std::path::Path, e: std::io::Error) -> Failure {
    Failure::data(anyhow::anyhow!("cannot access {}: {e}", path.display()))
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Config(_) => Failure::user(e),
            _ => Failure::data(e),
        }
    }
}

impl From<CollabError> for Failure {
    fn from(e: CollabError) -> Self {
        match e {
            CollabError::Config(_) | CollabError::ZeroDimension { .. } | CollabError::Codec(_) => Failure::user(e),
            CollabError::DegenerateLabels(_) | CollabError::IndexOutOfRange { .. } | CollabError::WidthMismatch(..) => {
                Failure::data(e)
            }
            CollabError::NonFinite => Failure::internal(e),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Collab(inner) => inner.into(),
            EvalError::Codec(_) => Failure::user(e),
            _ => Failure::data(e),
        }
    }
}

impl From<PromptError> for Failure {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::PlaceholderCount { .. }
            | PromptError::UnknownPlaceholder(_)
            | PromptError::CannotStripIdField(_)
            | PromptError::Codec(_) => Failure::user(e),
            PromptError::TagCount(..) => Failure::internal(e),
            _ => Failure::data(e),
        }
    }
}

impl From<CodeDumpError> for Failure {
    fn from(e: CodeDumpError) -> Self {
        match e {
            CodeDumpError::Codec(_) => Failure::user(e),
            _ => Failure::data(e),
        }
    }
}
