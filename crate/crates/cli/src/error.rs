use std::fmt;
use std::process::ExitCode;

/// Exit codes: 2 config/validation, 3 I/O or missing file, 4 bad or
/// version-mismatched file format, 1 anything else.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: msg.into(),
        }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: msg.into(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<tinyradar::Error> for CliError {
    fn from(e: tinyradar::Error) -> Self {
        use tinyradar::Error as E;
        let code = match &e {
            E::Io(_) => 3,
            E::Format(_) | E::Length { .. } => 4,
            E::Validation(_)
            | E::Build { .. }
            | E::EmptyResult(_)
            | E::Aliasing { .. }
            | E::Unsupported(_) => 2,
            E::Numeric(_) | E::State(_) | E::Overflow(_) => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}
