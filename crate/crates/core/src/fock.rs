//! Fixed-charge Fock-space enumeration and fermionic monomial application.
//!
//! A [`FockState`] is a bitmask over modes `1..=N`: bit `i - 1` set means
//! mode `i` is occupied. Creation and annihilation operators use the
//! Jordan–Wigner sign convention counting occupied modes *below* the acted
//! index: `c_i |s⟩ = (-1)^{#occ(j < i)} |s ∖ i⟩` when mode `i` is occupied,
//! and analogously for `c†_i`. Any consistent convention yields the same
//! sector matrices for charge-conserving Hamiltonians; this is the standard
//! lexicographic choice.
//!
//! Monomials `c†_{i1}…c†_{ip} c_{j1}…c_{jp'}` with strictly increasing index
//! lists are applied right to left as written, i.e. `c_{jp'}` acts first.

use crate::error::{Error, Result};
use crate::DEFAULT_MODE_CAP;

/// Occupation bitmask over modes `1..=N` (bit `i - 1` ↔ mode `i`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FockState(pub u32);

impl FockState {
    /// Number of occupied modes.
    pub fn charge(self) -> u32 {
        self.0.count_ones()
    }

    /// Whether mode `i` (1-indexed) is occupied.
    pub fn occupied(self, mode: u32) -> bool {
        self.0 & (1 << (mode - 1)) != 0
    }

    /// Parity sign `(-1)^{#occupied modes with index < mode}`.
    fn sign_below(self, mode: u32) -> i8 {
        let below = self.0 & ((1u32 << (mode - 1)) - 1);
        if below.count_ones().is_multiple_of(2) {
            1
        } else {
            -1
        }
    }

    /// The Néel mask `|1010…⟩` occupying the odd modes 1, 3, 5, … of `n`.
    pub fn neel(n: u32) -> FockState {
        let mut mask = 0u32;
        let mut mode = 1;
        while mode <= n {
            mask |= 1 << (mode - 1);
            mode += 2;
        }
        FockState(mask)
    }
}

/// All charge-`Q` Fock states of `N` modes, sorted ascending as integers,
/// with dense-index lookup.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    n: u32,
    charge: u32,
    states: Vec<FockState>,
}

impl SectorBasis {
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn charge(&self) -> u32 {
        self.charge
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[FockState] {
        &self.states
    }

    pub fn state(&self, index: usize) -> FockState {
        self.states[index]
    }

    /// Dense index of `state` within the sector, if it belongs to it.
    pub fn index_of(&self, state: FockState) -> Option<usize> {
        self.states.binary_search(&state).ok()
    }

    /// Same mode count and charge.
    pub fn same_sector(&self, other: &SectorBasis) -> bool {
        self.n == other.n && self.charge == other.charge
    }
}

/// Enumerate the charge-`charge` sector of `n` modes under the default
/// exact-diagonalization cap ([`DEFAULT_MODE_CAP`]).
pub fn build_sector(n: u32, charge: i64) -> Result<SectorBasis> {
    build_sector_with_cap(n, charge, DEFAULT_MODE_CAP)
}

/// Enumerate a sector under an explicit mode cap.
pub fn build_sector_with_cap(n: u32, charge: i64, cap: u32) -> Result<SectorBasis> {
    if n == 0 || n > cap {
        return Err(Error::ModeCapExceeded { modes: n, cap });
    }
    if charge < 0 || charge > n as i64 {
        return Err(Error::ChargeOutOfRange { charge, modes: n });
    }
    let charge = charge as u32;
    let states: Vec<FockState> = (0u32..1 << n)
        .filter(|s| s.count_ones() == charge)
        .map(FockState)
        .collect();
    Ok(SectorBasis { n, charge, states })
}

pub(crate) fn check_index_list(list: &[u32], n: u32) -> Result<()> {
    for w in list.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::NonCanonicalIndexList(list.to_vec()));
        }
    }
    if let Some(&m) = list.last() {
        if m > n || list[0] == 0 {
            return Err(Error::ModeIndexOutOfRange {
                index: if list[0] == 0 { 0 } else { m },
                modes: n,
            });
        }
    }
    Ok(())
}

/// Apply `c†_{i1}…c†_{ip} c_{j1}…c_{jp'}` to a state, rightmost factor first.
///
/// `creations` and `annihilations` must be strictly increasing 1-indexed mode
/// lists within `1..=n`. Returns the image state with its accumulated sign,
/// or `None` if any factor annihilates the intermediate state.
pub fn apply_monomial(
    creations: &[u32],
    annihilations: &[u32],
    state: FockState,
    n: u32,
) -> Result<Option<(FockState, i8)>> {
    check_index_list(creations, n)?;
    check_index_list(annihilations, n)?;
    Ok(apply_monomial_unchecked(creations, annihilations, state))
}

/// [`apply_monomial`] without index-list validation; used on prevalidated
/// multi-indices in hot loops.
pub(crate) fn apply_monomial_unchecked(
    creations: &[u32],
    annihilations: &[u32],
    state: FockState,
) -> Option<(FockState, i8)> {
    let mut s = state;
    let mut sign = 1i8;
    for &j in annihilations.iter().rev() {
        if !s.occupied(j) {
            return None;
        }
        sign *= s.sign_below(j);
        s = FockState(s.0 & !(1 << (j - 1)));
    }
    for &i in creations.iter().rev() {
        if s.occupied(i) {
            return None;
        }
        sign *= s.sign_below(i);
        s = FockState(s.0 | 1 << (i - 1));
    }
    Some((s, sign))
}
