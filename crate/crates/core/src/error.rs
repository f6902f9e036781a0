use thiserror::Error;

/// Errors produced by sector construction, operator algebra, and the
/// disorder-averaging / cumulant machinery.
#[derive(Debug, Error)]
pub enum Error {
    #[error("charge {charge} out of range for {modes} modes")]
    ChargeOutOfRange { charge: i64, modes: u32 },

    #[error("mode count {modes} exceeds the exact-diagonalization cap {cap}")]
    ModeCapExceeded { modes: u32, cap: u32 },

    #[error("monomial index list is not strictly increasing: {0:?}")]
    NonCanonicalIndexList(Vec<u32>),

    #[error("monomial index {index} out of range for {modes} modes")]
    ModeIndexOutOfRange { index: u32, modes: u32 },

    #[error("interaction order q = {0} must be even and at least 2")]
    InvalidInteractionOrder(u32),

    #[error("interaction order q = {q} needs q/2 <= N = {modes}")]
    InteractionOrderTooLarge { q: u32, modes: u32 },

    #[error("operator sectors do not match: {0}")]
    SectorMismatch(String),

    #[error("codomain charge {charge} out of [0, {modes}]")]
    CodomainOutOfRange { charge: i64, modes: u32 },

    #[error("operator is not Hermitian: max entrywise deviation {deviation:.3e} > {tolerance:.3e}")]
    NonHermitian { deviation: f64, tolerance: f64 },

    #[error("state vector is not normalized: |norm - 1| = {0:.3e}")]
    UnnormalizedState(f64),

    #[error("spectral reconstruction residual {residual:.3e} exceeds {tolerance:.3e}")]
    SpectralReconstruction { residual: f64, tolerance: f64 },

    #[error("imaginary residue {0:.3e} above tolerance on a real-valued result")]
    ImaginaryResidue(f64),

    #[error("state {0:#x} not contained in the requested sector")]
    StateNotInSector(u32),

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: u64, got: u64 },

    #[error("time grid must start at 0 and increase strictly")]
    InvalidTimeGrid,

    #[error("moment order {0} not supported (even orders 2, 4, 6)")]
    UnsupportedMomentOrder(u32),

    #[error("exact enumeration of order {order} at N = {modes} exceeds the budget (cap N <= {cap}); use the Monte-Carlo path")]
    EnumerationBudget { order: u32, modes: u32, cap: u32 },

    #[error("no closed form for the order-{order} eigenvalue of size ({m},{n})")]
    UnsupportedAnalyticEigenvalue { order: u32, m: u32, n: u32 },

    #[error("size-({m},{n}) representative has zero norm on the charge-{charge} sector: eigenvalue undefined")]
    DegenerateRepresentative { m: u32, n: u32, charge: u32 },

    #[error("observable does not conserve charge")]
    NotChargeConserving,

    #[error("operator has components outside the constructed size basis (residual {0:.3e})")]
    MissingSizeComponents(f64),

    #[error("no eigenvalue for order {order}, size ({m},{n}), N = {modes}, Q = {charge}")]
    MissingEigenvalue { order: u32, m: u32, n: u32, modes: u32, charge: u32 },

    #[error("size-basis seeds must be ordered by nondecreasing total size")]
    UnorderedSizeSeeds,

    #[error("half filling requires an even mode count, got {0}")]
    OddModeCount(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
