use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("matrix is singular or badly conditioned: {0}")]
    Singular(&'static str),
    #[error("matrix is not positive (semi)definite: {0}")]
    NotPositiveDefinite(&'static str),
    #[error("gain design failed: {0}")]
    GainDesign(String),
    #[error("pair (A, H) is not observable")]
    Unobservable,
    #[error("invalid decoupling partition: {0}")]
    InvalidPartition(String),
    #[error("merged weight of model {0} vanished")]
    TrackStarvation(usize),
    #[error("all model likelihoods underflowed")]
    DegenerateLikelihood,
    #[error("particle weights degenerated: {0}")]
    Degeneracy(&'static str),
    #[error("information sum is not positive definite")]
    InconsistentInputs,
    #[error("correlated fusion denominator is singular")]
    DegenerateCorrelation,
    #[error("no convergence after {0} steps")]
    NonConvergence(usize),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
}
