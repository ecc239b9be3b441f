use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The document did not match the expected JSON shape.
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },

    /// A well-formed value broke a domain invariant.
    #[error("invalid `{field}`: {reason}")]
    Invariant { field: String, reason: String },

    #[error("cannot place {nodes} distinct nodes on a lattice of {points} points")]
    ImpossiblePlacement { nodes: usize, points: usize },

    #[error("correlation interval ({lo}, {hi}) does not intersect (0, 1)")]
    EmptyCorrelationInterval { lo: f64, hi: f64 },

    #[error("action {action} is not feasible in the current state")]
    InfeasibleAction { action: String },

    #[error("search space of {sequences:.3e} action sequences exceeds the limit of {limit:.0e}")]
    SearchSpaceTooLarge { sequences: f64, limit: f64 },

    #[error(
        "{nodes} nodes is too many for an exact tour search (max {max}); \
         enable the greedy-nearest fallback instead"
    )]
    TourTooLarge { nodes: usize, max: usize },

    #[error("q-table was trained for scenario {expected}, but the given scenario hashes to {found}")]
    ScenarioMismatch { expected: String, found: String },

    #[error("{0}")]
    Unsupported(String),

    #[error("cannot plot an empty table")]
    EmptyTable,

    #[error("instance with seed {seed} failed: {source}")]
    Instance {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invariant(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invariant {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
