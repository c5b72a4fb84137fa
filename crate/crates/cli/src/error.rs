use std::path::Path;

use thiserror::Error;

/// Pipeline stage named in runtime error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Corpus,
    Trackers,
    Train,
    Decode,
    Eval,
    Analyze,
    Serve,
    Chat,
    Manifest,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Corpus => "corpus",
            Stage::Trackers => "trackers",
            Stage::Train => "train",
            Stage::Decode => "decode",
            Stage::Eval => "eval",
            Stage::Analyze => "analyze",
            Stage::Serve => "serve",
            Stage::Chat => "chat",
            Stage::Manifest => "manifest",
        })
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Missing or invalid inputs; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Failure while running; exit code 1.
    #[error("{stage}: {message}")]
    Runtime { stage: Stage, message: String },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn at(stage: Stage, err: impl std::fmt::Display) -> Self {
        CliError::Runtime {
            stage,
            message: err.to_string(),
        }
    }

    pub fn io(stage: Stage, path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::at(stage, format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime { .. } => 1,
        }
    }
}

/// Attach a stage to core errors.
pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T, CliError>;
}

impl<T, E: std::fmt::Display> StageExt<T> for Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T, CliError> {
        self.map_err(|e| CliError::at(stage, e))
    }
}
