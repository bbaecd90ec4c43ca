use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse grouping used by the command-line front end to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    Config,
    Physics,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("Mathieu stability violated: q_radial = {q:.4} (must be < {limit})")]
    StabilityViolation { q: f64, limit: f64 },
    #[error("frequency ordering violated: need omega_x < min(omega_y, omega_z), got {axial} vs {radial}")]
    OrderingViolation { axial: f64, radial: f64 },
    #[error("ions {i} and {j} coincide (distance {distance:e})")]
    CoincidentIons { i: usize, j: usize, distance: f64 },
    #[error("time step {dt} exceeds the limit {max}")]
    TimestepTooLarge { dt: f64, max: f64 },
    #[error("non-finite coordinate at t = {time}")]
    NonFinite { time: f64 },
    #[error("relaxation did not converge after {iterations} iterations (|grad| = {gradient_norm:e})")]
    NoConvergence { iterations: usize, gradient_norm: f64 },
    #[error("ambiguous structure: {flips} alternation flips")]
    AmbiguousStructure { flips: usize },
    #[error("negative curvature {eigenvalue:e}: configuration is a saddle")]
    NegativeCurvature { eigenvalue: f64 },
    #[error("kink lost at control value {control}")]
    KinkLost { control: f64 },
    #[error("mode {index} has zero frequency")]
    ZeroFrequencyMode { index: usize },
    #[error("orbit left the kink basin at amplitude {amplitude}")]
    OrbitUnstable { amplitude: f64 },
    #[error("kink not formed at bond {bond}")]
    KinkNotFormed { bond: usize },
    #[error("kink escaped to the {side} end of the crystal")]
    KinkEscaped { side: Side },
    #[error("descent not overdamped: kinetic energy {kinetic:e} exceeds {limit:e}")]
    NotOverdamped { kinetic: f64, limit: f64 },
    #[error("kink stuck at {position} away from the center")]
    KinkStuck { position: f64 },
    #[error("descent paths do not reach the center")]
    InsufficientOverlap,
    #[error("crystal did not settle within the time budget")]
    NotCrystallized,
    #[error("trajectory covers {covered} but the exposure needs {required}")]
    ExposureUnderrun { covered: f64, required: f64 },
    #[error("spot regions of ions {i} and {j} overlap")]
    OverlappingSpots { i: usize, j: usize },
    #[error("expected {expected} spots, found {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Left => f.write_str("left"),
            Side::Right => f.write_str("right"),
        }
    }
}

impl Error {
    pub fn family(&self) -> ErrorFamily {
        match self {
            Error::InvalidParameter(_) | Error::Config(_) => ErrorFamily::Config,
            Error::Io(_) | Error::Json(_) => ErrorFamily::Io,
            _ => ErrorFamily::Physics,
        }
    }
}
