use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("tensor dims {dims:?} hold {expected} values but data has {found}")]
    TensorLength {
        dims: Vec<usize>,
        expected: usize,
        found: usize,
    },
    #[error("tensor contains a non-finite value")]
    NonFinite,
    #[error("layer `{from}` -> `{to}`: {reason}")]
    LayerComposition {
        from: String,
        to: String,
        reason: String,
    },
    #[error("input shape mismatch: expected {expected:?}, found {found:?}")]
    InputShape {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("no layer named `{0}`")]
    UnknownLayer(String),
    #[error("unknown loss `{0}`")]
    UnknownLoss(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("loss became non-finite at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("{points} points cannot form {clusters} clusters")]
    TooFewPoints { points: usize, clusters: usize },
    #[error("split needs at least 3 subjects, found {found}")]
    TooFewSubjects { found: usize },
    #[error("dataset holds a single class; nothing to balance toward")]
    SingleClass,
    #[error("clusters {clusters:?} have no assigned points")]
    EmptyClusters { clusters: Vec<usize> },
    #[error("prototype set is empty")]
    NoPrototypes,
    #[error("covariance rank {achievable} is below the requested {requested} components")]
    RankDeficient { requested: usize, achievable: usize },
}
