use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated a documented precondition.
    InvalidArgument(String),
    /// The mask has no foreground voxel.
    EmptyMask,
    /// All regression features are identical.
    DegenerateFit,
    /// A correlation was requested for a constant input.
    UndefinedCorrelation,
    /// A jackknife segmenter was evaluated on a case it was trained on.
    Leakage { case_id: String },
    /// Shape generation produced an unusable mask.
    Generation(String),
    /// Training produced a non-finite loss.
    Diverged { iteration: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Short machine-readable identifier of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::EmptyMask => "empty_mask",
            Error::DegenerateFit => "degenerate_fit",
            Error::UndefinedCorrelation => "undefined_correlation",
            Error::Leakage { .. } => "jackknife_leakage",
            Error::Generation(_) => "generation",
            Error::Diverged { .. } => "diverged",
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::EmptyMask => f.write_str("mask has no foreground voxel"),
            Error::DegenerateFit => f.write_str("regression features have zero variance"),
            Error::UndefinedCorrelation => f.write_str("correlation undefined for constant input"),
            Error::Leakage { case_id } => {
                write!(f, "case {case_id} was evaluated by a segmenter trained on it")
            }
            Error::Generation(msg) => write!(f, "shape generation failed: {msg}"),
            Error::Diverged { iteration } => write!(f, "training diverged at iteration {iteration}"),
        }
    }
}

impl core::error::Error for Error {}
