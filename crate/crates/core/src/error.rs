use thiserror::Error;

#[derive(Debug, Error)]
pub enum SreError {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("singular design")]
    SingularDesign,

    #[error("rank-deficient projected design")]
    RankDeficientProjection,

    #[error("weak instrument (first-stage F = {f_stat:.3})")]
    WeakInstrument { f_stat: f64 },

    #[error("weight matrix is not symmetric positive semi-definite")]
    NotPositiveSemiDefinite,

    #[error("singular penalized system")]
    SingularBracket,

    #[error("non-finite objective at theta = {0:?}")]
    NonFiniteObjective(Vec<f64>),

    #[error("insufficient transitions: {0} usable periods")]
    InsufficientTransitions(usize),

    #[error("infeasible simulation: {0}")]
    Simulation(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<SreError>,
    },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<SreError>,
    },

    #[error("trial {trial}: {source}")]
    Trial {
        trial: u64,
        #[source]
        source: Box<SreError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SreError {
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        SreError::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    pub fn in_fold(self, fold: usize) -> Self {
        SreError::Fold {
            fold,
            source: Box::new(self),
        }
    }

    pub fn in_trial(self, trial: u64) -> Self {
        SreError::Trial {
            trial,
            source: Box::new(self),
        }
    }

    /// Innermost error, with stage/fold/trial wrappers removed.
    pub fn root(&self) -> &SreError {
        match self {
            SreError::Stage { source, .. }
            | SreError::Fold { source, .. }
            | SreError::Trial { source, .. } => source.root(),
            other => other,
        }
    }

    /// Short machine-readable kind, used for CLI error lines and FFI codes.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            SreError::EmptyDataset => "empty_dataset",
            SreError::InvalidArgument(_) => "invalid_argument",
            SreError::DimensionMismatch { .. } => "dimension_mismatch",
            SreError::NonFinite(_) => "non_finite",
            SreError::SingularDesign => "singular_design",
            SreError::RankDeficientProjection => "rank_deficient_projection",
            SreError::WeakInstrument { .. } => "weak_instrument",
            SreError::NotPositiveSemiDefinite => "not_psd",
            SreError::SingularBracket => "singular_bracket",
            SreError::NonFiniteObjective(_) => "non_finite_objective",
            SreError::InsufficientTransitions(_) => "insufficient_transitions",
            SreError::Simulation(_) => "simulation",
            SreError::Config(_) => "config",
            SreError::Io(_) => "io",
            SreError::Stage { .. } | SreError::Fold { .. } | SreError::Trial { .. } => {
                unreachable!("root() strips wrappers")
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, SreError>;
