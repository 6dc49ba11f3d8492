use std::process::ExitCode;

use thiserror::Error;
use wbsrc_core::cic::CicError;
use wbsrc_core::io::IoError;
use wbsrc_core::{AnalysisError, HalfbandError, SrcError, StreamError};

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_INFEASIBLE: u8 = 4;
pub const EXIT_VERIFY: u8 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(IoError),
    #[error(transparent)]
    Infeasible(HalfbandError),
    #[error("verification failed: {0}")]
    Verify(String),
    #[error(transparent)]
    Core(wbsrc_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Verify(_) => EXIT_VERIFY,
            CliError::Core(_) => EXIT_FAILURE,
        })
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io(IoError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn halfband(e: HalfbandError) -> CliError {
    match e {
        HalfbandError::InvalidSpec(m) => CliError::Usage(m),
        e @ HalfbandError::DesignInfeasible { .. } => CliError::Infeasible(e),
        e => CliError::Core(e.into()),
    }
}

fn cic(e: CicError) -> CliError {
    match e {
        CicError::InvalidConfig(m) => CliError::Usage(m),
        e => CliError::Core(e.into()),
    }
}

fn src(e: SrcError) -> CliError {
    match e {
        e @ SrcError::UnsupportedFactor { .. } => CliError::Usage(e.to_string()),
        SrcError::Halfband(e) => halfband(e),
        SrcError::Cic(e) => cic(e),
        e => CliError::Core(e.into()),
    }
}

impl From<SrcError> for CliError {
    fn from(e: SrcError) -> Self {
        src(e)
    }
}

impl From<HalfbandError> for CliError {
    fn from(e: HalfbandError) -> Self {
        halfband(e)
    }
}

impl From<CicError> for CliError {
    fn from(e: CicError) -> Self {
        cic(e)
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Src(e) => src(e),
            e => CliError::Core(e.into()),
        }
    }
}

impl From<StreamError> for CliError {
    fn from(e: StreamError) -> Self {
        CliError::Core(e.into())
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Io(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification() {
        let e: CliError = wbsrc_core::plan_factor(81).unwrap_err().into();
        assert!(matches!(e, CliError::Usage(ref m) if m.contains("80") && m.contains("160")));
        let e: CliError = HalfbandError::DesignInfeasible {
            order: 10,
            achieved_db: 30.0,
            target_db: 70.0,
        }
        .into();
        assert!(matches!(e, CliError::Infeasible(_)));
        let e: CliError = SrcError::Halfband(HalfbandError::InvalidSpec("x".into())).into();
        assert!(matches!(e, CliError::Usage(_)));
    }
}
