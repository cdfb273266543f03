use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("region contains no atom of the reference measure")]
    EmptyRegion,

    #[error("letter {letter} out of range for a model with {maps} maps")]
    LetterOutOfRange { letter: usize, maps: usize },

    #[error("atom cap exceeded: {atoms} atoms requested, cap is {cap}")]
    AtomCapExceeded { atoms: u128, cap: usize },

    #[error("ball around {center:?} at radius {radius} has zero mass, cannot raise to q = {q}")]
    ZeroMassNegativeMoment { center: Vec<f64>, radius: f64, q: f64 },

    #[error("too few scales: {have} usable, at least {need} required")]
    TooFewScales { have: usize, need: usize },

    #[error("sample net is empty")]
    EmptyNet,

    #[error("no atom of the reference measure within rho = {rho} of net center {center:?}")]
    BareNetCenter { center: Vec<f64>, rho: f64 },

    #[error("target exponent unreachable at this depth: t = {t} not certified for j <= {j_max}")]
    UnreachableExponent { t: f64, j_max: u32 },

    #[error("mixture weights sum to {0}, expected 1")]
    WeightSum(f64),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("support condition violated by atoms {atoms:?}: {reason}")]
    SupportViolation { atoms: Vec<usize>, reason: String },

    #[error("combined support of {atoms} atoms exceeds the cap of {cap}")]
    SupportCapExceeded { atoms: usize, cap: usize },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("atom {atom:?} lies outside the bounding box")]
    OutsideBoundingBox { atom: Vec<f64> },

    #[error("no grid cell carries mu-mass >= {floor}")]
    NoQualifyingCell { floor: f64 },

    #[error("atom-resolution guard: {0}")]
    ResolutionGuard(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
