use giet::affine::AffineError;
use giet::cocycle::CocycleError;
use giet::combinatorics::CombinatoricsError;
use giet::giem::GiemError;
use giet::rigidity::RigidityError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("precision: {0}")]
    Precision(String),
    #[error("combinatorics diverge at step {step}: {detail}")]
    Divergence { step: usize, detail: String },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Hypothesis(_) => 2,
            CliError::Precision(_) => 3,
            CliError::Divergence { .. } => 4,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Hypothesis(_) => "hypothesis",
            CliError::Precision(_) => "precision",
            CliError::Divergence { .. } => "combinatorics_divergence",
            CliError::Other(_) => "other",
        }
    }

    pub fn detail(&self) -> ErrorDetail {
        ErrorDetail {
            kind: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
            step: match self {
                CliError::Divergence { step, .. } => Some(*step),
                _ => None,
            },
        }
    }
}

#[derive(Serialize)]
pub struct ErrorDetail {
    pub kind: &'static str,
    pub exit_code: i32,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
}

impl From<CombinatoricsError> for CliError {
    fn from(e: CombinatoricsError) -> Self {
        match e {
            CombinatoricsError::Reducible(_) | CombinatoricsError::Infeasible { .. } => CliError::Hypothesis(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<GiemError> for CliError {
    fn from(e: GiemError) -> Self {
        match e {
            GiemError::Precision { .. } | GiemError::Connection { .. } => CliError::Precision(e.to_string()),
            GiemError::Invalid(_) => CliError::Hypothesis(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<CocycleError> for CliError {
    fn from(e: CocycleError) -> Self {
        match e {
            CocycleError::Genus(_) => CliError::Hypothesis(e.to_string()),
            CocycleError::Combinatorics(c) => c.into(),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<AffineError> for CliError {
    fn from(e: AffineError) -> Self {
        match e {
            AffineError::Nonlinearity(_) | AffineError::Tiling { .. } => CliError::Hypothesis(e.to_string()),
            AffineError::Giem(g) => g.into(),
            AffineError::Cocycle(c) => c.into(),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<RigidityError> for CliError {
    fn from(e: RigidityError) -> Self {
        match e {
            RigidityError::Combinatorics { step, detail } => CliError::Divergence { step, detail },
            RigidityError::Giem(g) => g.into(),
            RigidityError::Affine(a) => a.into(),
            _ => CliError::Other(e.to_string()),
        }
    }
}
