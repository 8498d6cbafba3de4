use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node subtype `{0}`")]
    UnknownSubtype(String),
    #[error("edge references a node that does not exist: {0}")]
    DanglingEdge(String),
    #[error("relation {0} has no possible endpoints")]
    EmptyTypePartition(String),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("edge {source_node}->{target} does not match relation {relation}")]
    RelationTypeMismatch {
        relation: String,
        source_node: usize,
        target: usize,
    },
    #[error("graph is not heterogeneous: |A| + |R| = {0}")]
    NotHeterogeneous(usize),
    #[error("graph must contain at least one node")]
    EmptyGraph,

    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),
    #[error("window of length {len} is shorter than the required {required}")]
    WindowTooShort { len: usize, required: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("attention needs at least one neighbor")]
    EmptyNeighborhood,
    #[error("missing parameter `{0}`")]
    MissingParams(String),
    #[error("invalid model variant: {0}")]
    InvalidVariant(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("operating-condition grid is empty")]
    EmptyGrid,
    #[error("signal has zero power")]
    ZeroPowerSignal,
    #[error("series of length {len} is too short (need {required})")]
    SeriesTooShort { len: usize, required: usize },
    #[error("group {key} has {len} windows, fewer than {min}")]
    GroupTooSmall { key: u32, len: usize, min: usize },

    #[error("loss diverged at epoch {epoch}, iteration {iteration} (lr {lr:e}, last loss {loss})")]
    DivergedLoss {
        epoch: usize,
        iteration: usize,
        lr: f64,
        loss: f64,
    },
    #[error("true values have zero range")]
    DegenerateRange,
    #[error("true value {0} is too close to zero for a percentage error")]
    NearZeroTruth(f64),
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("category `{0}` has no samples")]
    EmptyCategory(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
