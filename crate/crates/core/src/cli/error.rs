use thiserror::Error;

use crate::ablation::AblationError;
use crate::block::{BlockError, TrainError};
use crate::eval::EvalError;
use crate::io::IoError;
use crate::pose::PoseError;
use crate::synth::SynthError;

#[derive(Debug, Error, PartialEq)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Numerical(_) => "numerical",
        }
    }

    /// `error=<kind> code=<n> message=<text>` on one line.
    pub fn line(&self) -> String {
        let msg: String = self
            .to_string()
            .chars()
            .map(|c| if c == '\n' || c == '\r' { ' ' } else { c })
            .collect();
        format!("error={} code={} message={}", self.kind(), self.exit_code(), msg.trim())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<BlockError> for CliError {
    fn from(e: BlockError) -> Self {
        match e {
            BlockError::NonFiniteLoss | BlockError::NonFiniteParams => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            TrainError::NonFiniteLoss { .. } => CliError::Numerical(e.to_string()),
            TrainError::Block(b) => b.into(),
        }
    }
}

impl From<PoseError> for CliError {
    fn from(e: PoseError) -> Self {
        match e {
            PoseError::DegenerateConfiguration | PoseError::NonFiniteResidual => CliError::Numerical(e.to_string()),
            PoseError::InvalidIntrinsics => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<AblationError> for CliError {
    fn from(e: AblationError) -> Self {
        match e {
            AblationError::Synth(e) => e.into(),
            AblationError::Train(e) => e.into(),
            AblationError::Block(e) => e.into(),
            AblationError::Eval(e) => e.into(),
            AblationError::UnknownId(_) => CliError::Data(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::{Arch, DreamParams};

    #[test]
    fn codes_follow_error_class() {
        let nf = TrainError::NonFiniteLoss {
            epoch: 3,
            last_finite: Box::new(DreamParams::zeros(Arch::OneFc, 1, 0)),
        };
        assert_eq!(CliError::from(nf).exit_code(), 4);
        assert_eq!(CliError::from(TrainError::InvalidConfig("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(PoseError::DegenerateConfiguration).exit_code(), 4);
        assert_eq!(CliError::from(PoseError::InsufficientLandmarks(3)).exit_code(), 3);
        assert_eq!(CliError::from(IoError::Format("bad".into())).exit_code(), 3);
    }

    #[test]
    fn single_line() {
        let e = CliError::Data("two\nlines".into());
        assert_eq!(e.line(), "error=data code=3 message=two lines");
    }
}
