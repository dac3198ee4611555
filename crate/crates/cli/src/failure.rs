use std::process::ExitCode;

use serde_json::json;

use hhseg_core::Error;

/// Exit 2: bad input or configuration. Exit 3: the setup admits no feasible
/// labeling. Exit 1: anything else.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Core(e) => match e {
                Error::InvalidArgument(_) | Error::Format(_) | Error::Io { .. } | Error::InvalidScribbles(_) => 2,
                Error::Infeasible { .. } => 3,
                Error::NotSubmodular { .. } | Error::Internal(_) => 1,
            },
        }
    }

    /// One JSON object describing the failure.
    pub fn to_json(&self) -> serde_json::Value {
        let e = match self {
            Failure::Usage(msg) => return json!({ "error": "usage", "message": msg }),
            Failure::Core(e) => e,
        };
        let message = e.to_string();
        match e {
            Error::InvalidArgument(_) => json!({ "error": "invalid_argument", "message": message }),
            Error::Format(_) => json!({ "error": "format", "message": message }),
            Error::Io { path, .. } => json!({ "error": "io", "message": message, "path": path }),
            Error::InvalidScribbles(issues) => {
                json!({ "error": "invalid_scribbles", "message": message, "issues": issues })
            }
            Error::Infeasible { violations } => {
                json!({ "error": "infeasible", "message": message, "violations": violations })
            }
            Error::NotSubmodular { p, q } => {
                json!({ "error": "not_submodular", "message": message, "p": p, "q": q })
            }
            Error::Internal(_) => json!({ "error": "internal", "message": message }),
        }
    }

    pub fn report(&self) -> ExitCode {
        eprintln!("hhseg: {}", self.to_json());
        ExitCode::from(self.exit_code())
    }
}
