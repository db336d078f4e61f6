use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} must lie in {expected}")]
    Parameter {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("{value} is outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("{what} index {index} out of range (len {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("outcomes not sorted by descending value at position {position}")]
    Unsorted { position: usize },

    #[error("outcome probabilities sum to {sum}, expected 1")]
    NotADistribution { sum: f64 },

    #[error("all decision weights are zero")]
    DegenerateDistribution,

    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("realized reward {reward} < 1 for agent {agent} at state {state}")]
    RewardBelowOne {
        agent: usize,
        state: usize,
        reward: f64,
    },

    #[error("value iteration did not converge in {sweeps} sweeps (residual {residual:e})")]
    NonConvergence { sweeps: usize, residual: f64 },

    #[error(
        "gradient iteration refused: R_max / R_min^(2 - alpha) * alpha * discount = {bound} >= 1"
    )]
    GradientCondition { bound: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("correlation undefined for constant input")]
    UndefinedCorrelation,

    #[error("invalid demonstration: {0}")]
    InvalidDemonstration(String),

    #[error("learning diverged at epoch {epoch}")]
    Divergence { epoch: usize },
}
