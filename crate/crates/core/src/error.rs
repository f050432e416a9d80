use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("scheduling variable {index} = {value} outside [{lower}, {upper}]")]
    DomainViolation {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("algebraic loop is singular (condition estimate {condition:.3e})")]
    AlgebraicLoop { condition: f64 },

    #[error("weights off the simplex (sum {sum}, min {min})")]
    OffSimplex { sum: f64, min: f64 },

    #[error("LMI assembly: {0}")]
    Assembly(String),

    #[error("variable `{0}` registered twice")]
    DuplicateVariable(String),

    #[error("no value supplied for variable `{0}`")]
    MissingVariable(String),

    #[error("problem has {unknowns} scalar unknowns, limit is {limit}")]
    ProblemTooLarge { unknowns: usize, limit: usize },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("recovery of `{what}` failed (condition {condition:.3e})")]
    Recovery { what: String, condition: f64 },

    #[error("region level 1 - eta0 is empty for eta0 = {0}")]
    EmptyRegion(f64),

    #[error("configuration: {0}")]
    Config(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("bisection: {0}")]
    Bisection(String),

    #[error("run {index}: {source}")]
    Run {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
