use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Distribution or law parameters violate a construction invariant.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// Argument outside an operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Calibration objective has no sign change on the search interval.
    #[error("no root: {0}")]
    NoRoot(String),

    /// Rejection sampler exhausted its attempt budget.
    #[error("rejection budget of {attempts} attempts exceeded (acceptance rate ~{acceptance_rate:.3e})")]
    RejectionBudget { attempts: u64, acceptance_rate: f64 },

    /// Population exceeded the hard cap; carries the trajectory up to the cap.
    #[error("population cap {cap} exceeded at generation {generation}")]
    PopulationCap {
        cap: u64,
        generation: usize,
        partial: Vec<u64>,
    },

    /// Exhaustive enumeration would exceed its budget.
    #[error("enumeration budget exceeded: {0}")]
    EnumerationBudget(String),

    /// Doob transform started where the harmonic function vanishes.
    #[error("degenerate start: {0}")]
    DegenerateStart(String),

    /// Conditioning event has probability zero.
    #[error("impossible conditioning: {0}")]
    ImpossibleConditioning(String),

    /// Generation index outside the environment horizon.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// Operation restricted to a specific distribution kind.
    #[error("kind mismatch: {0}")]
    KindMismatch(String),

    /// Tree of insufficient height for the requested operation.
    #[error("tree height {height} below requested generation {requested}")]
    HeightTooSmall { height: usize, requested: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
