use thiserror::Error;

/// Errors raised by model construction and the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("levels {first} and {second} share the slope {slope}")]
    DuplicateSlope {
        first: usize,
        second: usize,
        slope: f64,
    },

    #[error("coupling matrix is not symmetric at ({row}, {col}): {upper} vs {lower}")]
    AsymmetricCoupling {
        row: usize,
        col: usize,
        upper: f64,
        lower: f64,
    },

    #[error("coupling matrix has nonzero diagonal entry {value} at level {level}")]
    NonzeroDiagonal { level: usize, value: f64 },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("arctangent evaluated at the branch point {0}i")]
    BranchPoint(f64),

    #[error(
        "resonant triple (alpha={alpha}, beta={beta}, gamma={gamma}): \
         alpha+beta=0 or alpha+gamma=0 and the integral diverges"
    )]
    ResonantInput { alpha: f64, beta: f64, gamma: f64 },

    #[error("indices (j={j}, k={k}, l={l}, p={p}) do not satisfy p=j or l=k")]
    NotResonant {
        j: usize,
        k: usize,
        l: usize,
        p: usize,
    },

    #[error("index out of range or misordered: {0}")]
    Index(String),

    #[error("{what} did not converge (reached {reached:e}, wanted {wanted:e})")]
    ConvergenceFailure {
        what: &'static str,
        reached: f64,
        wanted: f64,
    },

    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("propagator lost unitarity: |W^+W - 1| = {deviation:e} (limit {limit:e})")]
    NonUnitaryDrift { deviation: f64, limit: f64 },

    #[error("infinite-time limit not reached: ladder levels differ by {spread:e} (budget {budget:e})")]
    NoConvergence { spread: f64, budget: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
