use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("numerical error{}: {detail}", at_iteration(.iteration))]
    Numerical {
        iteration: Option<usize>,
        detail: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("memory bank holds {size} entries but {required} are required")]
    Gating { size: usize, required: usize },

    #[error("gradient check failed at parameter {index}: {detail}")]
    GradCheck { index: usize, detail: String },

    #[error("{path}:{line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn at_iteration(iteration: &Option<usize>) -> String {
    iteration.map_or_else(String::new, |i| format!(" at iteration {i}"))
}

impl Error {
    /// Attaches an iteration index to numerical errors.
    pub fn at(self, iteration: usize) -> Self {
        match self {
            Error::Numerical { detail, .. } => Error::Numerical {
                iteration: Some(iteration),
                detail,
            },
            other => other,
        }
    }

    pub(crate) fn shape(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
