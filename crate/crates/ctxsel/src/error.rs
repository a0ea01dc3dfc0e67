use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] ctxsel_core::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt file: {0}")]
    Corruption(String),
    #[error("checkpoint format version {found} needs migration to version {expected}")]
    Migration { found: u32, expected: u32 },
    #[error("malformed {what}: {detail}")]
    Format { what: String, detail: String },
    #[error("scene {scene}{}: {source}", iteration.map(|i| format!(", iteration {i}")).unwrap_or_default())]
    Scene { scene: usize, iteration: Option<usize>, source: Box<Error> },
}

impl Error {
    pub fn io(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
        move |source| Error::Io { path: path.to_path_buf(), source }
    }

    pub fn format(what: &str, detail: impl Into<String>) -> Error {
        Error::Format { what: what.to_string(), detail: detail.into() }
    }

    pub fn in_scene(self, scene: usize, iteration: Option<usize>) -> Error {
        Error::Scene { scene, iteration, source: Box::new(self) }
    }

    /// Process exit code: 2 config, 3 numeric, 4 capacity, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use ctxsel_core::Error as C;
        match self {
            Error::Config(_) => 2,
            Error::Scene { source, .. } => source.exit_code(),
            Error::Core(e) => match e {
                C::Config(_) | C::Precondition(_) | C::Sequencing { .. } | C::GroupSize(_) => 2,
                C::Numeric(_) | C::Domain(_) | C::DegenerateVector | C::InvalidSegment(_) | C::NoValidPairs => 3,
                C::Capacity(_) | C::Budget { .. } => 4,
                C::Shape(_) | C::EmptyContext | C::Consistency(_) => 1,
            },
            Error::Io { .. } | Error::Corruption(_) | Error::Migration { .. } | Error::Format { .. } => 1,
        }
    }
}
