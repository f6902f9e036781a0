//! SYK_q disorder realizations and sector Hamiltonians.
//!
//! One realization is a table of complex Gaussian couplings `J_{I;J}` keyed
//! by pairs of strictly increasing `q/2`-tuples, with the Hermiticity
//! constraint `J_{J;I} = conj(J_{I;J})` built in structurally: only the
//! canonical half of each pair is stored, the partner is materialized on
//! demand. Off-diagonal entries have independent real and imaginary parts of
//! variance `J²/2` each (so `E[J_α] = 0`, `E[J_α²] = 0`, `E[|J_α|²] = J²`);
//! diagonal entries (`I = J`) are real with variance `J²`.
//!
//! The sector Hamiltonian is
//! `H = K_q Σ_{I,J} J_{I;J} c†_{i1}…c†_{i_{q/2}} c_{j1}…c_{j_{q/2}}`
//! with `K_q = √((q/2)!(q/2-1)!/N^{q-1})`, summed over all ordered pairs
//! including `I = J`.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cumulant::{multi_indices, MultiIndex};
use crate::error::{Error, Result};
use crate::fock::SectorBasis;
use crate::operators::SectorOperator;
use crate::{C64, CMat};

/// One disorder realization of the SYK_q couplings.
#[derive(Debug, Clone)]
pub struct CouplingTable {
    n: u32,
    q: u32,
    coupling: f64,
    /// Canonical entries, sorted by multi-index; `I <= J` lexicographically.
    entries: Vec<(MultiIndex, C64)>,
}

impl CouplingTable {
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    /// Coupling strength `J` (energy units).
    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    /// Amplitude of an arbitrary ordered pair; the non-canonical half is the
    /// conjugate of its stored partner.
    pub fn amplitude(&self, alpha: &MultiIndex) -> Option<C64> {
        if alpha.is_canonical() {
            self.lookup(alpha)
        } else {
            self.lookup(&alpha.conjugate()).map(|z| z.conj())
        }
    }

    fn lookup(&self, alpha: &MultiIndex) -> Option<C64> {
        self.entries
            .binary_search_by(|(k, _)| k.cmp(alpha))
            .ok()
            .map(|i| self.entries[i].1)
    }

    /// All ordered pairs `(α, J_α)`, conjugate halves materialized.
    pub fn ordered_entries(&self) -> impl Iterator<Item = (MultiIndex, C64)> + '_ {
        multi_indices(self.n, self.q).into_iter().map(|alpha| {
            let amp = self.amplitude(&alpha).expect("enumeration covers the table");
            (alpha, amp)
        })
    }

    /// Canonical stored half only.
    pub fn canonical_entries(&self) -> &[(MultiIndex, C64)] {
        &self.entries
    }
}

/// Fixed 64-bit mix deriving per-sample seeds from a master seed, so samples
/// are reproducible independently of scheduling order.
pub fn mix_seed(master_seed: u64, sample_index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(sample_index))
}

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draw one disorder realization. Deterministic for a fixed seed; entries are
/// linear in `coupling`, so rescaling `J` rescales the table exactly.
pub fn sample_couplings(n: u32, q: u32, coupling: f64, seed: u64) -> Result<CouplingTable> {
    if q < 2 || !q.is_multiple_of(2) {
        return Err(Error::InvalidInteractionOrder(q));
    }
    if q / 2 > n {
        return Err(Error::InteractionOrderTooLarge { q, modes: n });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut normal = || <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
    let mut entries = Vec::new();
    for alpha in multi_indices(n, q) {
        if !alpha.is_canonical() {
            continue;
        }
        let amp = if alpha.is_diagonal() {
            C64::new(coupling * normal(), 0.0)
        } else {
            let scale = coupling / 2f64.sqrt();
            C64::new(scale * normal(), scale * normal())
        };
        entries.push((alpha, amp));
    }
    entries.sort_by(|(a, _), (b, _)| a.cmp(b));
    Ok(CouplingTable { n, q, coupling, entries })
}

/// Interaction prefactor `K_q = √((q/2)!(q/2-1)!/N^{q-1})`. `q` must be even
/// and at least 2.
pub fn kq_prefactor(q: u32, n: u32) -> f64 {
    assert!(q >= 2 && q.is_multiple_of(2), "q must be even and >= 2");
    let p = (q / 2) as u64;
    let fact = |k: u64| (1..=k).map(|x| x as f64).product::<f64>();
    (fact(p) * fact(p - 1) / (n as f64).powi(q as i32 - 1)).sqrt()
}

/// Assemble the sector Hamiltonian of a realization. Hermitian by
/// construction: each canonical entry and its conjugate partner are written
/// as mirrored matrix elements in the same accumulation order.
pub fn build_hamiltonian(table: &CouplingTable, basis: &SectorBasis) -> Result<SectorOperator> {
    if table.n != basis.n() {
        return Err(Error::SectorMismatch(format!(
            "coupling table has N = {}, sector has N = {}",
            table.n,
            basis.n()
        )));
    }
    let dim = basis.dim();
    let kq = kq_prefactor(table.q, table.n);
    let mut matrix = CMat::zeros(dim, dim);
    for (alpha, amp) in table.canonical_entries() {
        let weight = C64::new(kq, 0.0) * amp;
        for (col, &s) in basis.states().iter().enumerate() {
            if let Some((img, sign)) = alpha.apply(s) {
                let row = basis.index_of(img).expect("monomial conserves charge");
                let value = weight * sign as f64;
                matrix[(row, col)] += value;
                if !alpha.is_diagonal() {
                    // Conjugate partner: adjoint(h_α) = h_{conj α}, entry for
                    // entry, so the mirrored element keeps Hermiticity exact.
                    matrix[(col, row)] += value.conj();
                }
            }
        }
    }
    SectorOperator::from_matrix(basis.clone(), basis.clone(), matrix)
}
