use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("slow curve has no fold points (f_x never changes sign along M)")]
    NoFolds,
    #[error("slow curve has {found} fold points, expected exactly two")]
    TooManyFolds { found: usize },
    #[error("slow-curve branch lost at y = {y}: no bracket for the root in x")]
    BranchLost { y: f64 },
    #[error("integration exceeded {max_steps} steps at y = {y} (eps = {eps})")]
    StepLimitExceeded { max_steps: usize, y: f64, eps: f64 },
    #[error("non-finite state at y = {y}")]
    NonFiniteState { y: f64 },
    #[error("no fixed point on winding branch {n}")]
    NoBracket { n: i64 },
    #[error("slope-one point not found inside the canard segment at eps = {eps}")]
    SlopeOneNotFound { eps: f64 },
    #[error("bracket [{lo}, {hi}] is invalid: {reason}")]
    BracketInvalid { lo: f64, hi: f64, reason: String },
    #[error("window solution lies below the working floor eps = {floor}")]
    WindowBelowFloor { floor: f64 },
    #[error("y = {y} is outside the validity strip [{lo}, {hi}]")]
    OutOfStrip { y: f64, lo: f64, hi: f64 },
    #[error("balance equation has no sign change on ({lo}, {hi})")]
    NoRoot { lo: f64, hi: f64 },
    #[error("trajectory never leaves the tube around the unstable branch")]
    NeverExits,
    #[error("system fails genericity: {0}")]
    NotGeneric(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// True for failures caused by the numerics (step budget, overflow) rather
    /// than by the configuration or by a legal "nothing found" outcome.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::StepLimitExceeded { .. } | Error::NonFiniteState { .. })
    }
}
