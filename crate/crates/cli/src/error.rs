use countcopula::error::ErrorKind;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Model(#[from] countcopula::Error),
}

impl CliError {
    /// 2 for configuration problems, 3 for data problems, 4 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        let kind = match self {
            CliError::Config(_) => ErrorKind::Config,
            CliError::Data(_) => ErrorKind::Data,
            CliError::Model(e) => e.kind(),
        };
        match kind {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Data("x".into()).exit_code(), 3);
        assert_eq!(CliError::from(countcopula::Error::ImpossibleData(4)).exit_code(), 3);
        assert_eq!(CliError::from(countcopula::Error::NonCausal).exit_code(), 4);
        assert_eq!(CliError::from(countcopula::Error::Definiteness(2)).exit_code(), 4);
    }
}
