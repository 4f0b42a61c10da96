use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("problem needs {required} qubits but the budget is {budget}")]
    QubitBudget { required: usize, budget: usize },

    #[error("expected a bitstring or vector of length {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("brute force over {n} variables exceeds the enumeration cap of {cap}")]
    EnumerationCap { n: usize, cap: usize },

    #[error("constraint {0} has no nonzero coefficients")]
    EmptyConstraint(usize),

    #[error("constraint support of {t} qubits exceeds the cap of {cap}")]
    SupportCap { t: usize, cap: usize },

    #[error("invalid penalty: {0}")]
    InvalidPenalty(String),

    #[error("slack encoding needs an integer bound, constraint {index} has {bound}")]
    NonIntegerBound { index: usize, bound: String },

    #[error("ansatz expects {expected} parameters, got {actual}")]
    ParameterCount { expected: usize, actual: usize },

    #[error("qubit index {index} out of range for {n} qubits")]
    InvalidQubit { index: usize, n: usize },

    #[error("diagonal length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("loss became non-finite ({value}) after {evals} evaluations")]
    NonFiniteLoss { value: f64, evals: usize },

    #[error("optimality gap undefined for a zero optimal objective")]
    ZeroOptimum,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
