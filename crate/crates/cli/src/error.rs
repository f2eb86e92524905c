//! Exit codes: 1 for failures during computation, 2 for bad input.

use std::fmt;

use cpsw_core::bounds::BoundError;
use cpsw_core::config::ConfigError;
use cpsw_core::datasets::DatasetError;
use cpsw_core::experiment::ExperimentError;
use cpsw_core::graph::GraphError;
use cpsw_core::learner::LearnerError;
use cpsw_core::propensity::PropensityError;
use cpsw_core::report::ReportError;
use cpsw_core::scm::ScmError;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
        }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        CliError::Usage(msg.to_string())
    }

    pub fn failed(msg: impl fmt::Display) -> Self {
        CliError::Failed(msg.to_string())
    }

    /// Filesystem error while producing output.
    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Failed(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failed(m) => f.write_str(m),
        }
    }
}

fn classify(usage: bool, e: impl fmt::Display) -> CliError {
    if usage {
        CliError::usage(e)
    } else {
        CliError::failed(e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::usage(e)
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        classify(e.is_usage(), e)
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        ExperimentError::Dataset(e).into()
    }
}

impl From<LearnerError> for CliError {
    fn from(e: LearnerError) -> Self {
        classify(matches!(e, LearnerError::ConfigInvalid(_)), e)
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::usage(e)
    }
}

impl From<ScmError> for CliError {
    fn from(e: ScmError) -> Self {
        let computational = matches!(
            e,
            ScmError::DomainTooLarge { .. } | ScmError::ZeroConditioningEvent | ScmError::PositivityViolation(_)
        );
        classify(!computational, e)
    }
}

impl From<BoundError> for CliError {
    fn from(e: BoundError) -> Self {
        classify(!matches!(e, BoundError::Csv(_)), e)
    }
}

impl From<PropensityError> for CliError {
    fn from(e: PropensityError) -> Self {
        classify(matches!(e, PropensityError::Csv(_) | PropensityError::InvalidArgument(_)), e)
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        let usage = match &e {
            ReportError::NoRuns(_) | ReportError::Json { .. } => true,
            ReportError::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            ReportError::Csv(_) => false,
        };
        classify(usage, e)
    }
}
