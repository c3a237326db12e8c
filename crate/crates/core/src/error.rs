use thiserror::Error;

/// Errors produced by the geometric, modulus and uniformization routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("EmptySet: point set must be nonempty")]
    EmptySet,
    #[error("DegenerateMobius: |ad - bc| = {0:e}")]
    DegenerateMobius(f64),
    #[error("InvalidShape: {0}")]
    InvalidShape(String),
    #[error("TrivialComponent: {0} is a point")]
    TrivialComponent(String),
    #[error("InvalidParameter: {0}")]
    InvalidParameter(String),
    #[error("OverlappingComponents: {0} and {1}")]
    OverlappingComponents(String, String),
    #[error("UnboundedComplement: {0}")]
    UnboundedComplement(String),
    #[error("ZeroDistance: {0}")]
    ZeroDistance(String),
    #[error("UnknownComponent: {0}")]
    UnknownComponent(String),
    #[error("InvalidR0: {0}")]
    InvalidR0(String),
    #[error("NoSeparatingCycle: {0}")]
    NoSeparatingCycle(String),
    #[error("InvalidWalk: {0}")]
    InvalidWalk(String),
    #[error("EmptyFamily: {0}")]
    EmptyFamily(String),
    #[error("MaxIterExceeded after {iterations} iterations, EL in [{lower}, {upper}]")]
    MaxIterExceeded {
        iterations: usize,
        lower: f64,
        upper: f64,
    },
    #[error("NonSimpleCurve: {0}")]
    NonSimpleCurve(String),
    #[error("ConvergenceFailure: achieved roundness {0:e}")]
    ConvergenceFailure(f64),
    #[error("MaxRoundsExceeded: best roundness {0:e}")]
    MaxRoundsExceeded(f64),
    #[error("ComponentCollision: {0} and {1}")]
    ComponentCollision(String, String),
    #[error("OutsideDomain: ({0}, {1})")]
    OutsideDomain(f64, f64),
    #[error("InsufficientStages: {0}")]
    InsufficientStages(String),
    #[error("Parse: {0}")]
    Parse(String),
    #[error("Io: {0}")]
    Io(String),
}

impl Error {
    /// Short name of the variant, used on CLI diagnostic lines.
    pub fn name(&self) -> &'static str {
        match self {
            Error::EmptySet => "EmptySet",
            Error::DegenerateMobius(_) => "DegenerateMobius",
            Error::InvalidShape(_) => "InvalidShape",
            Error::TrivialComponent(_) => "TrivialComponent",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::OverlappingComponents(..) => "OverlappingComponents",
            Error::UnboundedComplement(_) => "UnboundedComplement",
            Error::ZeroDistance(_) => "ZeroDistance",
            Error::UnknownComponent(_) => "UnknownComponent",
            Error::InvalidR0(_) => "InvalidR0",
            Error::NoSeparatingCycle(_) => "NoSeparatingCycle",
            Error::InvalidWalk(_) => "InvalidWalk",
            Error::EmptyFamily(_) => "EmptyFamily",
            Error::MaxIterExceeded { .. } => "MaxIterExceeded",
            Error::NonSimpleCurve(_) => "NonSimpleCurve",
            Error::ConvergenceFailure(_) => "ConvergenceFailure",
            Error::MaxRoundsExceeded(_) => "MaxRoundsExceeded",
            Error::ComponentCollision(..) => "ComponentCollision",
            Error::OutsideDomain(..) => "OutsideDomain",
            Error::InsufficientStages(_) => "InsufficientStages",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
