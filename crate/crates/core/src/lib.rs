//! Disorder-averaged quench dynamics of the complex SYK_q model in
//! fixed-charge sectors.
//!
//! The crate provides, bottom to top:
//!
//! - [`fock`]: bitmask Fock states of N fermion modes, enumeration of
//!   fixed-charge sectors, and fermionic monomial application with exact
//!   sign tracking.
//! - [`operators`]: dense complex operators between charge sectors and the
//!   charge-constrained Hilbert–Schmidt product `Tr_Q(A†B)`.
//! - [`hamiltonian`]: Gaussian disorder realizations of the SYK_q couplings
//!   and assembly of the sector Hamiltonian
//!   `H = K_q Σ J_{I;J} c†_{i1}…c†_{i_{q/2}} c_{j1}…c_{j_{q/2}}`.
//! - [`evolution`]: exact-diagonalization quench dynamics and Monte-Carlo
//!   disorder averaging with streaming, worker-count-independent statistics.
//! - [`opsize`]: the orthonormal operator-size basis (Gram–Schmidt under the
//!   sector Hilbert–Schmidt product) and size-coefficient dynamics.
//! - [`cumulant`]: Wick-contraction moment superoperators of the averaged
//!   Liouvillian, the cumulant recursion, closed-form and numerical cumulant
//!   eigenvalues, and reconstruction of averaged observables from the
//!   resulting dynamical functions.
//!
//! Everything is deterministic given a master seed: per-sample seeds are
//! derived by a fixed 64-bit mix, and all parallel reductions use a fixed
//! chunk topology so results do not depend on the worker count.

pub mod cumulant;
pub mod error;
pub mod evolution;
pub mod fock;
pub mod hamiltonian;
pub mod operators;
pub mod opsize;
pub mod output;
pub mod stats;

/// Complex double, the scalar type of all operator matrices.
pub type C64 = nalgebra::Complex<f64>;
/// Dense complex matrix (column-major).
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex vector.
pub type CVec = nalgebra::DVector<C64>;

/// Largest mode count for which Fock-space enumeration (and hence exact
/// diagonalization) is permitted by default. The half-filled sector at this
/// cap has dimension binomial(16, 8) = 12870. Beyond it only the analytic
/// cumulant paths remain available.
pub const DEFAULT_MODE_CAP: u32 = 16;

pub use error::Error;
pub use evolution::{
    diagonalize, disorder_average_dynamics, heisenberg_expectation, heisenberg_operator,
    neel_state, DisorderRunParams, DynamicsTrace, SpectralDecomposition,
};
pub use fock::{build_sector, FockState, SectorBasis};
pub use hamiltonian::{build_hamiltonian, kq_prefactor, mix_seed, sample_couplings, CouplingTable};
pub use operators::{hs_inner_q, SectorOperator};
pub use opsize::{SizeBasisElement, SizeLabel};
pub use cumulant::{
    extract_cumulant, lambda_analytic, lambda_numeric, moment_apply, CumulantEigenvalue,
    DynamicalFunction, EigenvalueMethod, MultiIndex,
};
