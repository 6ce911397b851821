use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed process specification: {0}")]
    Malformed(String),

    /// Offending type is 1-based, `rule` is the position within that type's
    /// rule list when a single rule is to blame.
    #[error("type {type_id}{}: {detail}", rule.map(|r| format!(" rule {r}")).unwrap_or_default())]
    NotAProbability {
        type_id: usize,
        rule: Option<usize>,
        detail: String,
    },

    #[error("mean matrix is not primitive: no positive power up to M^{checked_up_to}")]
    NotPrimitive { checked_up_to: usize },

    #[error("process is not critical: spectral radius {0}")]
    NotCritical(f64),

    #[error("degenerate process: every particle has at most one child, so H vanishes identically")]
    DegenerateH,

    #[error("power iteration did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("I - R1 is singular; the eigen data does not describe a primitive critical process")]
    SingularResolvent,

    #[error("I - lambda M is singular at lambda = {0}")]
    SingularSystem(f64),

    #[error("tree {tree_index} exceeded the node cap of {cap}")]
    CapExceeded { tree_index: u64, cap: u64 },

    #[error("empty sample")]
    EmptySample,

    #[error("type {0} was never observed in the sample")]
    TypeNeverObserved(usize),

    #[error("rule {type_id} -> {offspring:?} is not in the support of the process")]
    UnknownRule { type_id: usize, offspring: Vec<u32> },

    #[error("C_g = 0: the additive function has zero Q-mean and the N^-2 scaling degenerates")]
    ZeroCg,

    #[error("censored fraction {fraction:.4} exceeds the limit {limit}")]
    ExcessiveCensoring { fraction: f64, limit: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
