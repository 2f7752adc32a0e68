use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("range error: {0}")]
    Range(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("resource error: {0}")]
    Resource(String),

    /// The initial state of an amplitude-estimation run does not live in a
    /// two-dimensional invariant subspace of the walk.
    #[error("contract error: {0}")]
    Contract(String),

    /// The measured probability is not below the prior bound (δ ≥ 0).
    #[error(
        "prior violation{}{}: inverted estimate {estimate} is not below P0 = {p0}",
        .node.map(|n| format!(" at node {n}")).unwrap_or_default(),
        .group.map(|g| format!(" in group {g}")).unwrap_or_default()
    )]
    PriorViolation {
        estimate: f64,
        p0: f64,
        group: Option<usize>,
        node: Option<usize>,
    },

    #[error("degenerate ground space: gap {gap:e} is below {threshold:e}")]
    Degenerate { gap: f64, threshold: f64 },

    #[error("reference state has zero overlap with the ground state (|a0| = {overlap:e})")]
    Overlap { overlap: f64 },

    #[error("spectral gap collapses to {gap:e} at x = {x}")]
    GapCollapse { x: f64, gap: f64 },

    #[error("energy is not analytic inside the contour: {0}")]
    NonAnalytic(String),
}

impl Error {
    /// Attach a group index to a prior violation raised by a per-group estimate.
    pub fn in_group(self, index: usize) -> Self {
        match self {
            Error::PriorViolation {
                estimate,
                p0,
                node,
                ..
            } => Error::PriorViolation {
                estimate,
                p0,
                group: Some(index),
                node,
            },
            other => other,
        }
    }

    pub fn at_node(self, index: usize) -> Self {
        match self {
            Error::PriorViolation {
                estimate, p0, group, ..
            } => Error::PriorViolation {
                estimate,
                p0,
                group,
                node: Some(index),
            },
            other => other,
        }
    }

    pub fn is_prior_violation(&self) -> bool {
        matches!(self, Error::PriorViolation { .. })
    }
}
