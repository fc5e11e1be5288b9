use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("vector is not on the unit sphere (norm {norm})")]
    NotUnitNorm { norm: f64 },

    #[error("degenerate location: norm {norm} is too small to define a direction")]
    DegenerateLocation { norm: f64 },

    #[error("empty sample")]
    EmptySample,

    #[error("near-singular parameterization: gamma = {gamma}")]
    NearSingular { gamma: f64 },

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("sampler setup failed: {0}")]
    SamplerSetup(String),

    #[error("design matrix error: {0}")]
    Design(String),

    #[error("convergence quality: {0}")]
    ConvergenceQuality(String),

    #[error("optimizer inconsistency: {0}")]
    OptimizerInconsistency(String),

    #[error("{hypothesis} fit failed: {source}")]
    HypothesisFit {
        hypothesis: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("training failed: {0}")]
    Training(String),

    #[error("numerical failure in row {row}: all component log-densities are -inf")]
    Underflow { row: usize },

    #[error("component {component} collapsed (total responsibility {mass})")]
    ComponentCollapse { component: usize, mass: f64 },

    #[error("mixture fit failed: {0}")]
    MixtureFit(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NearSingular { .. }
                | Error::Initialization(_)
                | Error::SamplerSetup(_)
                | Error::ConvergenceQuality(_)
                | Error::OptimizerInconsistency(_)
                | Error::HypothesisFit { .. }
                | Error::Underflow { .. }
                | Error::ComponentCollapse { .. }
                | Error::MixtureFit(_)
                | Error::DegenerateLocation { .. }
        )
    }
}
