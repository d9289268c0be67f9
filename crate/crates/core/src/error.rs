use thiserror::Error;

/// Errors raised by the study toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("eigen-solver did not converge within {max_iterations} iterations ({context})")]
    EigenNonConvergence {
        max_iterations: usize,
        context: &'static str,
    },

    #[error(
        "mode {mode} has a zero generator entry in its shape; it is unobservable at the generator"
    )]
    Normalization { mode: usize },

    #[error("mode pairing failed: {0}")]
    Pairing(String),

    #[error("numeric divergence: signal `{signal}` at t = {time:.6} s")]
    Divergence { signal: String, time: f64 },

    #[error(
        "power flow did not converge after {iterations} iterations: max mismatch {mismatch:.3e} pu at bus `{bus}`"
    )]
    PowerFlow {
        iterations: usize,
        mismatch: f64,
        bus: String,
    },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("invalid measurement window: {0}")]
    InvalidWindow(String),

    #[error("no detectable component at {freq_hz} Hz (envelope below {floor:e})")]
    NoComponent { freq_hz: f64, floor: f64 },

    #[error("settle error: {0}")]
    Settle(String),

    #[error("coverage error: modal frequency {freq_hz:.3} Hz lies outside the scanned range [{lo:.3}, {hi:.3}] Hz")]
    Coverage { freq_hz: f64, lo: f64, hi: f64 },

    #[error("unrealizable phase shift {deg:.2} deg: lead-lag blocks cover |phase| < 90 deg only")]
    UnrealizablePhase { deg: f64 },

    #[error("tuning failed: {0}")]
    Tuning(String),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error("journal: {0}")]
    Journal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
