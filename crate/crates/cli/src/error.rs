use thiserror::Error;
use tlgs::baselines::BaselineError;
use tlgs::cv::CvError;
use tlgs::data::DataError;
use tlgs::mcmc::SamplerError;
use tlgs::sim::SimError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Cv(#[from] CvError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{failed} of {total} estimates failed")]
    Estimates {
        failed: usize,
        total: usize,
        numerical: bool,
    },
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// 2 for user or config errors, 3 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        let numerical = match self {
            CliError::Cv(e) => cv_numerical(e),
            CliError::Sim(SimError::Cv(e)) => cv_numerical(e),
            CliError::Sim(SimError::Baseline(BaselineError::Cv(e))) => cv_numerical(e),
            CliError::Data(DataError::NonConvergence { .. }) => true,
            CliError::Estimates { numerical, .. } => *numerical,
            _ => false,
        };
        if numerical {
            3
        } else {
            2
        }
    }
}

fn cv_numerical(e: &CvError) -> bool {
    matches!(
        e,
        CvError::Sampler {
            source: SamplerError::NumericalFailure(_),
            ..
        }
    )
}
