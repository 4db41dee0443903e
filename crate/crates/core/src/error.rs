use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate rotation: {0}")]
    DegenerateRotation(&'static str),
    #[error("matrix is not a rotation (orthonormality error {0:.3e})")]
    InvalidRotation(f64),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("frame count mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("index {index} out of range for size {size}")]
    Index { index: usize, size: usize },
    #[error("training diverged at step {step} (loss {loss})")]
    TrainingDiverged { step: usize, loss: f64 },
    #[error("sequence of length {len} exceeds context {context}")]
    ContextOverflow { len: usize, context: usize },
    #[error("unknown tokens: {}", .0.join(", "))]
    UnknownToken(Vec<String>),
    #[error("empty text")]
    EmptyText,
    #[error("scene has no images")]
    EmptyScene,
    #[error("embedding provider is not differentiable")]
    NotDifferentiable,
    #[error("embedding unavailable: {0}")]
    EmbeddingUnavailable(String),
    #[error("cannot parse query near \"{span}\"")]
    UnparsableQuery { span: String },
    #[error("remote planner unavailable: {0}")]
    RemotePlannerUnavailable(String),
    #[error("plan validation failed: {0}")]
    PlanValidationFailed(String),
    #[error("infeasible composition: {0}")]
    InfeasibleComposition(String),
    #[error("scene required for anchor step")]
    SceneRequired,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("plan step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code, used by the HTTP layer.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DegenerateRotation(_) => "DegenerateRotation",
            Error::InvalidRotation(_) => "InvalidRotation",
            Error::InvalidTrajectory(_) => "InvalidTrajectory",
            Error::LengthMismatch(..) => "LengthMismatch",
            Error::Shape(_) => "ShapeError",
            Error::Index { .. } => "IndexError",
            Error::TrainingDiverged { .. } => "TrainingDiverged",
            Error::ContextOverflow { .. } => "ContextOverflow",
            Error::UnknownToken(_) => "UnknownToken",
            Error::EmptyText => "UnparsableQuery",
            Error::EmptyScene => "EmptyScene",
            Error::NotDifferentiable => "NotDifferentiable",
            Error::EmbeddingUnavailable(_) => "EmbeddingUnavailable",
            Error::UnparsableQuery { .. } => "UnparsableQuery",
            Error::RemotePlannerUnavailable(_) => "RemotePlannerUnavailable",
            Error::PlanValidationFailed(_) => "PlanValidationFailed",
            Error::InfeasibleComposition(_) => "InfeasibleComposition",
            Error::SceneRequired => "SceneRequired",
            Error::Checkpoint(_) => "CheckpointError",
            Error::Config(_) => "ConfigError",
            Error::AtStep { source, .. } => source.code(),
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
        }
    }

    /// Strips step tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for errors caused by the request rather than the server.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self.root(),
            Error::UnknownToken(_)
                | Error::EmptyText
                | Error::EmptyScene
                | Error::UnparsableQuery { .. }
                | Error::InfeasibleComposition(_)
                | Error::SceneRequired
                | Error::ContextOverflow { .. }
                | Error::PlanValidationFailed(_)
        )
    }

    pub(crate) fn at_step(self, step: usize) -> Error {
        Error::AtStep { step, source: Box::new(self) }
    }
}
