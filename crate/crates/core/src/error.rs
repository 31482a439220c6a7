use crate::lattice::Sector;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("frequency matching violated: ω_e0 + ω_o0 = {sum} but ω_p = {pump}")]
    FrequencyMismatch { sum: f64, pump: f64 },

    #[error("phase-matching weight requested for two modes of sector {0}")]
    SameSector(Sector),

    #[error("ensemble was generated for grid {found:#018x}, expected {expected:#018x}")]
    GridMismatch { expected: u64, found: u64 },

    #[error("{what}: expected length {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("delay {delay} is not a whole number of time steps of {step}")]
    DelayNotRepresentable { delay: f64, step: f64 },

    #[error("detection window {window} is not a whole number of time steps of {step}")]
    WindowMisaligned { window: f64, step: f64 },

    #[error("degenerate fit: every angle pair has the same sin²(φ₁+φ₂)")]
    DegenerateFit,

    #[error("malformed ensemble dump: {0}")]
    BadDump(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
