//! Dense operator algebra between charge sectors.
//!
//! A [`SectorOperator`] maps a fixed-charge domain sector into a (possibly
//! different) codomain sector of the same mode count; rectangular operators
//! such as `c†_1` are first class. Overlaps use the charge-constrained
//! Hilbert–Schmidt product `⟨⟨A|B⟩⟩_Q = Tr_Q(A†B)`, i.e. the trace restricted
//! to the common *domain* sector. Unlike the full trace, this product is not
//! cyclic for rectangular operators, and nothing here relies on cyclicity.

use crate::error::{Error, Result};
use crate::fock::{apply_monomial_unchecked, build_sector_with_cap, SectorBasis};
use crate::{C64, CMat, CVec};

/// Entrywise tolerance for Hermiticity checks on observables.
pub const HERMITICITY_TOL: f64 = 1e-10;

/// Dense complex operator from a charge-`Q_in` sector to a charge-`Q_out`
/// sector of the same `N` modes. The matrix has shape
/// `dim(codomain) × dim(domain)`.
#[derive(Debug, Clone)]
pub struct SectorOperator {
    domain: SectorBasis,
    codomain: SectorBasis,
    matrix: CMat,
}

impl SectorOperator {
    /// Wrap an explicit matrix; shape must match the sector dimensions.
    pub fn from_matrix(domain: SectorBasis, codomain: SectorBasis, matrix: CMat) -> Result<Self> {
        if domain.n() != codomain.n() {
            return Err(Error::SectorMismatch(format!(
                "domain has N = {}, codomain N = {}",
                domain.n(),
                codomain.n()
            )));
        }
        if matrix.nrows() != codomain.dim() || matrix.ncols() != domain.dim() {
            return Err(Error::SectorMismatch(format!(
                "matrix is {}x{}, sectors need {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                codomain.dim(),
                domain.dim()
            )));
        }
        Ok(SectorOperator { domain, codomain, matrix })
    }

    pub fn zeros(domain: SectorBasis, codomain: SectorBasis) -> Result<Self> {
        let m = CMat::zeros(codomain.dim(), domain.dim());
        Self::from_matrix(domain, codomain, m)
    }

    /// The identity on a sector.
    pub fn identity(basis: &SectorBasis) -> Self {
        SectorOperator {
            domain: basis.clone(),
            codomain: basis.clone(),
            matrix: CMat::identity(basis.dim(), basis.dim()),
        }
    }

    /// The number operator `n̂_mode` on a sector (diagonal 0/1 matrix).
    pub fn number_operator(mode: u32, basis: &SectorBasis) -> Self {
        let dim = basis.dim();
        let mut m = CMat::zeros(dim, dim);
        for (k, &s) in basis.states().iter().enumerate() {
            if s.occupied(mode) {
                m[(k, k)] = C64::new(1.0, 0.0);
            }
        }
        SectorOperator { domain: basis.clone(), codomain: basis.clone(), matrix: m }
    }

    pub fn domain(&self) -> &SectorBasis {
        &self.domain
    }

    pub fn codomain(&self) -> &SectorBasis {
        &self.codomain
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn matrix_mut(&mut self) -> &mut CMat {
        &mut self.matrix
    }

    pub fn is_square(&self) -> bool {
        self.domain.same_sector(&self.codomain)
    }

    /// Hermitian conjugate; swaps domain and codomain.
    pub fn adjoint(&self) -> SectorOperator {
        SectorOperator {
            domain: self.codomain.clone(),
            codomain: self.domain.clone(),
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn scale(&self, factor: C64) -> SectorOperator {
        SectorOperator {
            domain: self.domain.clone(),
            codomain: self.codomain.clone(),
            matrix: &self.matrix * factor,
        }
    }

    pub fn add(&self, other: &SectorOperator) -> Result<SectorOperator> {
        self.check_same_sectors(other)?;
        Ok(SectorOperator {
            domain: self.domain.clone(),
            codomain: self.codomain.clone(),
            matrix: &self.matrix + &other.matrix,
        })
    }

    pub fn sub(&self, other: &SectorOperator) -> Result<SectorOperator> {
        self.check_same_sectors(other)?;
        Ok(SectorOperator {
            domain: self.domain.clone(),
            codomain: self.codomain.clone(),
            matrix: &self.matrix - &other.matrix,
        })
    }

    /// Operator composition `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &SectorOperator) -> Result<SectorOperator> {
        if !self.domain.same_sector(&other.codomain) {
            return Err(Error::SectorMismatch(format!(
                "compose: inner sectors differ (Q = {} vs {})",
                self.domain.charge(),
                other.codomain.charge()
            )));
        }
        Ok(SectorOperator {
            domain: other.domain.clone(),
            codomain: self.codomain.clone(),
            matrix: &self.matrix * &other.matrix,
        })
    }

    /// Max entrywise deviation from Hermiticity (square operators).
    pub fn hermiticity_deviation(&self) -> f64 {
        let adj = self.matrix.adjoint();
        (&self.matrix - adj).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn check_hermitian(&self, tolerance: f64) -> Result<()> {
        if !self.is_square() {
            return Err(Error::SectorMismatch(
                "Hermiticity requires a square operator".into(),
            ));
        }
        let dev = self.hermiticity_deviation();
        if dev > tolerance {
            return Err(Error::NonHermitian { deviation: dev, tolerance });
        }
        Ok(())
    }

    fn check_same_sectors(&self, other: &SectorOperator) -> Result<()> {
        if !self.domain.same_sector(&other.domain) || !self.codomain.same_sector(&other.codomain) {
            return Err(Error::SectorMismatch(format!(
                "sectors ({} -> {}) vs ({} -> {})",
                self.domain.charge(),
                self.codomain.charge(),
                other.domain.charge(),
                other.codomain.charge()
            )));
        }
        Ok(())
    }
}

/// Matrix of the monomial `c†_{i1}…c†_{ip} c_{j1}…c_{jp'}` on `domain`,
/// mapping into the charge `Q_in + |I| - |J|` sector. Exactly zero or one
/// nonzero entry per column.
pub fn monomial_operator(
    creations: &[u32],
    annihilations: &[u32],
    domain: &SectorBasis,
) -> Result<SectorOperator> {
    let n = domain.n();
    crate::fock::check_index_list(creations, n)?;
    crate::fock::check_index_list(annihilations, n)?;
    let out_charge =
        domain.charge() as i64 + creations.len() as i64 - annihilations.len() as i64;
    if out_charge < 0 || out_charge > n as i64 {
        return Err(Error::CodomainOutOfRange { charge: out_charge, modes: n });
    }
    let codomain = build_sector_with_cap(n, out_charge, n)?;
    let mut matrix = CMat::zeros(codomain.dim(), domain.dim());
    for (col, &s) in domain.states().iter().enumerate() {
        if let Some((img, sign)) = apply_monomial_unchecked(creations, annihilations, s) {
            let row = codomain
                .index_of(img)
                .expect("image charge matches codomain by construction");
            matrix[(row, col)] = C64::new(sign as f64, 0.0);
        }
    }
    Ok(SectorOperator { domain: domain.clone(), codomain, matrix })
}

/// The staggered magnetization `R̂ = Σ_i (-1)^{i+1} n̂_i` (mode 1 weighted +1),
/// diagonal and real on every sector.
pub fn staggered_magnetization(basis: &SectorBasis) -> SectorOperator {
    let dim = basis.dim();
    let mut m = CMat::zeros(dim, dim);
    for (k, &s) in basis.states().iter().enumerate() {
        let mut value = 0.0;
        for mode in 1..=basis.n() {
            if s.occupied(mode) {
                value += if mode % 2 == 1 { 1.0 } else { -1.0 };
            }
        }
        m[(k, k)] = C64::new(value, 0.0);
    }
    SectorOperator { domain: basis.clone(), codomain: basis.clone(), matrix: m }
}

/// Charge-constrained Hilbert–Schmidt product `⟨⟨A|B⟩⟩_Q = Tr_Q(A†B)`.
///
/// Both operators must share domain and codomain sectors; the trace runs over
/// the domain sector. Conjugate-symmetric and positive on nonzero operators.
pub fn hs_inner_q(a: &SectorOperator, b: &SectorOperator) -> Result<C64> {
    if !a.domain.same_sector(&b.domain) || !a.codomain.same_sector(&b.codomain) {
        return Err(Error::SectorMismatch(format!(
            "hs_inner_q: ({} -> {}) vs ({} -> {})",
            a.domain.charge(),
            a.codomain.charge(),
            b.domain.charge(),
            b.codomain.charge()
        )));
    }
    Ok(hs_dot(&a.matrix, &b.matrix))
}

/// `Tr(A†B) = Σ_ij conj(A_ij) B_ij` on raw matrices of equal shape.
pub(crate) fn hs_dot(a: &CMat, b: &CMat) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x.conj() * y;
    }
    acc
}

/// Hilbert–Schmidt norm `√⟨⟨A|A⟩⟩_Q`.
pub fn hs_norm(a: &SectorOperator) -> f64 {
    hs_dot(&a.matrix, &a.matrix).re.sqrt()
}

/// Expectation value `⟨ψ|W|ψ⟩` of a Hermitian square operator in a
/// normalized sector state. The imaginary residue must stay below
/// [`HERMITICITY_TOL`] and is discarded.
pub fn expectation(state: &CVec, w: &SectorOperator) -> Result<f64> {
    w.check_hermitian(HERMITICITY_TOL)?;
    if state.len() != w.domain.dim() {
        return Err(Error::SectorMismatch(format!(
            "state length {} vs sector dimension {}",
            state.len(),
            w.domain.dim()
        )));
    }
    let norm_dev = (state.norm() - 1.0).abs();
    if norm_dev > HERMITICITY_TOL {
        return Err(Error::UnnormalizedState(norm_dev));
    }
    let value = state.dotc(&(&w.matrix * state));
    if value.im.abs() > HERMITICITY_TOL {
        return Err(Error::ImaginaryResidue(value.im.abs()));
    }
    Ok(value.re)
}
