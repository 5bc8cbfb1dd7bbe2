use std::fmt;

pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const NUMERICAL: u8 = 3;

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub type Result<T> = std::result::Result<T, Failure>;

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure {
            code: DATA,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Failure {
            code: NUMERICAL,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<dkn::Error> for Failure {
    fn from(e: dkn::Error) -> Self {
        use dkn::Error::*;
        let code = match &e {
            NonFinite(_) | Diverged { .. } | Constraint(_) => NUMERICAL,
            Shape { .. } | Format { .. } | Io { .. } | Invalid(_) => DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}
