use thiserror::Error;

/// Errors produced by the laboratory's operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Input lies outside the documented domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller-side contract (counts, unit norms, invariants) was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Scales must be dyadic so that partitions tile exactly.
    #[error("scale {0:e} is not an admissible dyadic value ({1})")]
    NonDyadicScale(f64, &'static str),

    /// Atom rejected by a cap partition, with the measured distance.
    #[error("atom outside the scale-{scale:e} neighborhood: deviation {deviation:e}")]
    AtomRejected { deviation: f64, scale: f64 },

    /// A parametrization or derivative flag degenerated.
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    /// Multilinear cap selection failed the transversality requirement.
    #[error("cap selection not transverse: volume {volume:e} <= nu = {nu:e}")]
    NotTransverse { volume: f64, nu: f64 },

    /// A selected cap carries no atoms, so its norm vanishes.
    #[error("cap {0} received no atoms")]
    EmptyCap(usize),

    /// Refinement did not stabilize the reported quantity.
    #[error("quadrature did not converge after {0} refinements")]
    QuadratureDiverged(usize),

    /// Guard against runaway enumeration or memory use.
    #[error("computation budget exceeded: {0}")]
    BudgetExceeded(String),

    /// Two distinct exact sums were assigned the same quantized key.
    #[error("sum-key collision between {a:?} and {b:?} at quantization {scale:e}")]
    KeyCollision { a: Vec<f64>, b: Vec<f64>, scale: f64 },

    /// The requested quantity is undefined for these parameters.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
