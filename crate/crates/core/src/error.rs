use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension N = {0} (need N >= {1})")]
    InvalidDimension(u32, u32),
    #[error("invalid exponent p = {0} (need p > 1)")]
    InvalidExponent(f64),
    #[error("degenerate quadratic for N = 10; single root p = {root}")]
    DegenerateQuadratic { root: f64 },
    #[error("infeasible bootstrap chain: {0}")]
    InfeasibleChain(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("incompatible grids")]
    IncompatibleGrid,
    #[error("kernel matrix with {n} nodes exceeds the configured cap of {cap}")]
    MemoryBudgetExceeded { n: usize, cap: usize },
    #[error("degenerate eigenvalue weight (u vanishes identically)")]
    DegenerateWeight,
    #[error("eigensolver failed after {iterations} iterations (last relative change {last_change:e})")]
    EigensolverFailure { iterations: usize, last_change: f64 },
    #[error("setup error: {0}")]
    Setup(String),
    #[error("degenerate quantity: {0}")]
    Degenerate(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
