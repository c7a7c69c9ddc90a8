use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("generator {value} out of range 1..={d}")]
    InvalidGenerator { value: u32, d: u32 },
    #[error("word is not reduced or malformed: {0}")]
    InvalidWord(String),
    #[error("ends coincide, meeting height is infinite")]
    EqualEnds,
    #[error("invalid geodesic: {0}")]
    InvalidGeodesic(String),
    #[error("plaquette word does not reduce to the identity")]
    PlaquetteInconsistent,
    #[error("cells lie in different components")]
    Unreachable,
    #[error("region is empty or disconnected")]
    DisconnectedRegion,
    #[error("slope is zero, no supporting geodesic")]
    ZeroSlope,
    #[error("monodromy is an involution, the supporting geodesic is not unique")]
    EllipticMonodromy,
    #[error("configuration is not supported on the reference geodesic")]
    NotSupported,
    #[error("slope {0} is not realizable at this period")]
    UnrealizableSlope(String),
    #[error("only the standard geodesic is supported here")]
    UnsupportedGeodesic,
    #[error("partial height violates the extension condition")]
    ConditionViolated,
    #[error("site is not an extremum")]
    NotExtremum,
    #[error("site is fixed")]
    FixedSite,
    #[error("component is not an excursion of the current configuration")]
    NotAnExcursion,
    #[error("site is not a local minimum")]
    NotMinimum,
    #[error("work budget of {0} nodes exceeded")]
    BudgetExceeded(u64),
    #[error("no boundary data exists for these parameters")]
    EmptyBoundaryClass,
    #[error("conditioning class is empty")]
    EmptyConditionClass,
    #[error("invalid boundary profile: {0}")]
    InvalidBoundary(String),
    #[error("no admissible extension passes validation")]
    Infeasible,
    #[error("invariant violated: {0}")]
    InvariantViolated(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status: 3 for an exhausted budget, 2 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BudgetExceeded(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}
