use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorClass {
    Config,
    Dataset,
    Simulation,
    Io,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Dataset => 3,
            ErrorClass::Simulation => 4,
            ErrorClass::Io => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorClass::Config => "config",
            ErrorClass::Dataset => "dataset",
            ErrorClass::Simulation => "simulation",
            ErrorClass::Io => "io",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, thiserror::Error)]
pub struct CliError {
    pub class: ErrorClass,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.class.name(), self.message)
    }
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            class: ErrorClass::Config,
            message: message.into(),
        }
    }

    pub fn dataset(message: impl Into<String>) -> Self {
        Self {
            class: ErrorClass::Dataset,
            message: message.into(),
        }
    }

    pub fn simulation(message: impl Into<String>) -> Self {
        Self {
            class: ErrorClass::Simulation,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            class: ErrorClass::Io,
            message: message.into(),
        }
    }

    /// One-line JSON record for stderr.
    pub fn record(&self) -> String {
        serde_json::json!({ "error_class": self.class, "message": self.message }).to_string()
    }
}

macro_rules! simulation_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::simulation(e.to_string())
            }
        }
    )*};
}

simulation_errors!(
    elastic_pwm::AnalyticError,
    elastic_pwm::TransientError,
    elastic_pwm::SignalError,
    elastic_pwm::ConverterError,
    elastic_pwm::PerceptronError
);

impl From<elastic_pwm::NnError> for CliError {
    fn from(e: elastic_pwm::NnError) -> Self {
        use elastic_pwm::NnError::*;
        match e {
            Topology | LearningRate(_) | Config(_) => CliError::config(e.to_string()),
            EmptyDataset | Dimension { .. } => CliError::dataset(e.to_string()),
            Diverged { .. } => CliError::simulation(e.to_string()),
        }
    }
}

impl From<elastic_pwm::MnistError> for CliError {
    fn from(e: elastic_pwm::MnistError) -> Self {
        CliError::dataset(e.to_string())
    }
}
