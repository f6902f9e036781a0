//! Orthonormal operator-size basis and size-resolved coefficient dynamics.
//!
//! An operator built from `m` creation and `n` annihilation factors on
//! distinct sites has size `(m, n)`. Strings involving number operators mix
//! sizes (each `n̂_i` overlaps the identity on a fixed-charge sector), so
//! fixed-size operators are produced by Gram–Schmidt against all lower sizes
//! under the charge-constrained Hilbert–Schmidt product. Elements whose
//! residual norm falls below [`RESIDUAL_DROP_TOL`] are dropped (degenerate
//! sector) and reported, not fatal.

use crate::error::{Error, Result};
use crate::evolution::phase_bilinear;
use crate::fock::SectorBasis;
use crate::hamiltonian::{build_hamiltonian, mix_seed, sample_couplings};
use crate::operators::{expectation, hs_inner_q, hs_norm, SectorOperator};
use crate::stats::{parallel_welford, Welford};
use crate::{C64, CMat, CVec};

/// Residual norm below which a Gram–Schmidt seed is considered degenerate.
pub const RESIDUAL_DROP_TOL: f64 = 1e-8;

/// Operator size `(m, n)`: creation and annihilation factor counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SizeLabel {
    pub m: u32,
    pub n: u32,
}

impl SizeLabel {
    pub fn new(m: u32, n: u32) -> Self {
        SizeLabel { m, n }
    }

    pub fn total(self) -> u32 {
        self.m + self.n
    }
}

impl std::fmt::Display for SizeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.m, self.n)
    }
}

/// Raw seed for the orthogonalization: an operator together with the size it
/// is meant to represent once lower-size components are projected out.
#[derive(Debug, Clone)]
pub struct SizeBasisSeed {
    pub op: SectorOperator,
    pub size: SizeLabel,
    pub descriptor: String,
}

/// Unit-norm fixed-size basis operator.
#[derive(Debug, Clone)]
pub struct SizeBasisElement {
    pub op: SectorOperator,
    pub size: SizeLabel,
    pub descriptor: String,
}

/// Result of [`orthonormalize_size_basis`]: emitted elements plus the
/// descriptors of degenerate seeds that were dropped.
#[derive(Debug, Clone)]
pub struct OrthonormalizedBasis {
    pub elements: Vec<SizeBasisElement>,
    pub dropped: Vec<String>,
}

/// Modified Gram–Schmidt under `⟨⟨·|·⟩⟩_Q`. Seeds must share sectors and be
/// ordered by nondecreasing total size.
pub fn orthonormalize_size_basis(seeds: Vec<SizeBasisSeed>) -> Result<OrthonormalizedBasis> {
    for pair in seeds.windows(2) {
        if pair[1].size.total() < pair[0].size.total() {
            return Err(Error::UnorderedSizeSeeds);
        }
        if !pair[0].op.domain().same_sector(pair[1].op.domain())
            || !pair[0].op.codomain().same_sector(pair[1].op.codomain())
        {
            return Err(Error::SectorMismatch(
                "size-basis seeds must share domain and codomain sectors".into(),
            ));
        }
    }
    let mut elements: Vec<SizeBasisElement> = Vec::with_capacity(seeds.len());
    let mut dropped = Vec::new();
    for seed in seeds {
        let mut v = seed.op;
        for e in &elements {
            let overlap = hs_inner_q(&e.op, &v)?;
            v = v.sub(&e.op.scale(overlap))?;
        }
        let norm = hs_norm(&v);
        if norm < RESIDUAL_DROP_TOL {
            dropped.push(seed.descriptor);
            continue;
        }
        elements.push(SizeBasisElement {
            op: v.scale(C64::new(1.0 / norm, 0.0)),
            size: seed.size,
            descriptor: seed.descriptor,
        });
    }
    Ok(OrthonormalizedBasis { elements, dropped })
}

/// Seeds for all diagonal operators up to size `(max_size, max_size)`:
/// the identity, every `n̂_i`, and every product `n̂_{i1}…n̂_{ik}` over
/// distinct sites, ordered by size. The seed count grows like
/// `Σ_k binomial(N, k)`; callers opting into larger sizes bear that cost.
pub fn diagonal_size_seeds(basis: &SectorBasis, max_size: u32) -> Vec<SizeBasisSeed> {
    use itertools::Itertools;
    let mut seeds = vec![SizeBasisSeed {
        op: SectorOperator::identity(basis),
        size: SizeLabel::new(0, 0),
        descriptor: "identity".into(),
    }];
    for k in 1..=max_size.min(basis.n()) {
        for combo in (1..=basis.n()).combinations(k as usize) {
            let mut op = SectorOperator::number_operator(combo[0], basis);
            for &mode in &combo[1..] {
                op = op
                    .compose(&SectorOperator::number_operator(mode, basis))
                    .expect("same sector");
            }
            let sites = combo.iter().map(|m| m.to_string()).collect::<Vec<_>>().join("-");
            seeds.push(SizeBasisSeed {
                op,
                size: SizeLabel::new(k, k),
                descriptor: format!("diag_n{sites}"),
            });
        }
    }
    seeds
}

/// The four standard unit-norm test operators: diagonal and off-diagonal
/// representatives of sizes (1,1) and (2,2) on the lowest sites.
///
/// At half filling the diagonal pair takes the closed forms
/// `𝒩 (n̂_1 - 1/2)` and `𝒩 (n̂_1 n̂_2 - (n̂_1+n̂_2)/2 + N/(4(N-1)))`; away from
/// half filling the same operators are produced by the generic Gram–Schmidt
/// route and `generic_route` is set.
#[derive(Debug, Clone)]
pub struct StandardTestOperators {
    pub elements: Vec<SizeBasisElement>,
    pub generic_route: bool,
}

impl StandardTestOperators {
    pub fn by_descriptor(&self, descriptor: &str) -> Option<&SizeBasisElement> {
        self.elements.iter().find(|e| e.descriptor == descriptor)
    }
}

pub const DIAG_1_1: &str = "diag_1_1";
pub const DIAG_2_2: &str = "diag_2_2";
pub const OFFDIAG_1_1: &str = "offdiag_1_1";
pub const OFFDIAG_2_2: &str = "offdiag_2_2";

pub fn standard_test_operators(basis: &SectorBasis) -> Result<StandardTestOperators> {
    let n = basis.n();
    if n < 4 {
        return Err(Error::ModeIndexOutOfRange { index: 4, modes: n });
    }
    let half_filling = basis.charge() * 2 == n;
    if half_filling {
        let one = SectorOperator::identity(basis);
        let n1 = SectorOperator::number_operator(1, basis);
        let n2 = SectorOperator::number_operator(2, basis);

        let diag11 = n1.sub(&one.scale(C64::new(0.5, 0.0)))?;
        let constant = n as f64 / (4.0 * (n as f64 - 1.0));
        let diag22 = n1
            .compose(&n2)?
            .sub(&n1.add(&n2)?.scale(C64::new(0.5, 0.0)))?
            .add(&one.scale(C64::new(constant, 0.0)))?;
        let hop = crate::operators::monomial_operator(&[1], &[2], basis)?;
        let off11 = hop.add(&hop.adjoint())?;
        let pair = crate::operators::monomial_operator(&[1, 2], &[3, 4], basis)?;
        let off22 = pair.add(&pair.adjoint())?;

        let normalize = |op: SectorOperator, size, descriptor: &str| {
            let norm = hs_norm(&op);
            SizeBasisElement {
                op: op.scale(C64::new(1.0 / norm, 0.0)),
                size,
                descriptor: descriptor.into(),
            }
        };
        Ok(StandardTestOperators {
            elements: vec![
                normalize(diag11, SizeLabel::new(1, 1), DIAG_1_1),
                normalize(diag22, SizeLabel::new(2, 2), DIAG_2_2),
                normalize(off11, SizeLabel::new(1, 1), OFFDIAG_1_1),
                normalize(off22, SizeLabel::new(2, 2), OFFDIAG_2_2),
            ],
            generic_route: false,
        })
    } else {
        let hop = crate::operators::monomial_operator(&[1], &[2], basis)?;
        let pair = crate::operators::monomial_operator(&[1, 2], &[3, 4], basis)?;
        let seeds = vec![
            SizeBasisSeed {
                op: SectorOperator::identity(basis),
                size: SizeLabel::new(0, 0),
                descriptor: "identity".into(),
            },
            SizeBasisSeed {
                op: SectorOperator::number_operator(1, basis),
                size: SizeLabel::new(1, 1),
                descriptor: DIAG_1_1.into(),
            },
            SizeBasisSeed {
                op: SectorOperator::number_operator(2, basis),
                size: SizeLabel::new(1, 1),
                descriptor: "diag_n2".into(),
            },
            SizeBasisSeed {
                op: hop.add(&hop.adjoint())?,
                size: SizeLabel::new(1, 1),
                descriptor: OFFDIAG_1_1.into(),
            },
            SizeBasisSeed {
                op: SectorOperator::number_operator(1, basis)
                    .compose(&SectorOperator::number_operator(2, basis))?,
                size: SizeLabel::new(2, 2),
                descriptor: DIAG_2_2.into(),
            },
            SizeBasisSeed {
                op: pair.add(&pair.adjoint())?,
                size: SizeLabel::new(2, 2),
                descriptor: OFFDIAG_2_2.into(),
            },
        ];
        let basis_out = orthonormalize_size_basis(seeds)?;
        let wanted = [DIAG_1_1, DIAG_2_2, OFFDIAG_1_1, OFFDIAG_2_2];
        let elements: Vec<SizeBasisElement> = basis_out
            .elements
            .into_iter()
            .filter(|e| wanted.contains(&e.descriptor.as_str()))
            .collect();
        if elements.len() != 4 {
            return Err(Error::DegenerateRepresentative {
                m: 2,
                n: 2,
                charge: basis.charge(),
            });
        }
        Ok(StandardTestOperators { elements, generic_route: true })
    }
}

/// Expansion coefficient `c(t) = ⟨⟨T|W(t)⟩⟩_Q` of a Heisenberg operator onto
/// a size-basis element.
pub fn size_coefficient(element: &SizeBasisElement, wt: &SectorOperator) -> Result<C64> {
    hs_inner_q(&element.op, wt)
}

/// Parameters of a disorder-averaged size-coefficient run.
#[derive(Debug, Clone)]
pub struct GrowthParams {
    pub n: u32,
    pub charge: u32,
    pub q: u32,
    pub coupling: f64,
    pub samples: u64,
    pub master_seed: u64,
    pub times: Vec<f64>,
    /// Emit raw single-realization curves for the first `dump_singles`
    /// sample indices.
    pub dump_singles: u64,
}

/// Per-element complex coefficient trace.
#[derive(Debug, Clone)]
pub struct CoefficientTrace {
    pub descriptor: String,
    pub size: SizeLabel,
    pub re_mean: Vec<f64>,
    pub re_stderr: Vec<f64>,
    pub im_mean: Vec<f64>,
    pub im_stderr: Vec<f64>,
    pub samples: u64,
}

/// `Δ(t) = |avg(c(t)/c(0)) - avg(⟨W(t)⟩/⟨W(0)⟩)|` for the designated
/// coefficient, with its per-sample-difference standard error and the
/// quadrature combination of the two normalized-curve errors.
#[derive(Debug, Clone)]
pub struct DeltaTrace {
    pub delta: Vec<f64>,
    pub stderr: Vec<f64>,
    pub combined_stderr: Vec<f64>,
}

/// One raw realization (first `dump_singles` samples).
#[derive(Debug, Clone)]
pub struct SingleRealizationCurves {
    pub sample_index: u64,
    /// `values[element][time]`.
    pub values: Vec<Vec<C64>>,
}

#[derive(Debug, Clone)]
pub struct GrowthProfile {
    pub times: Vec<f64>,
    pub coefficients: Vec<CoefficientTrace>,
    pub delta: Option<DeltaTrace>,
    pub singles: Vec<SingleRealizationCurves>,
}

/// Disorder-averaged dynamics of the size coefficients of `observable` onto
/// `elements`, all evolved per realization from the same spectral data.
///
/// When `delta_element` names an element index and `psi0` is given, the
/// normalized-coefficient vs normalized-expectation difference is tracked
/// sample by sample (both normalizations are disorder-independent `t = 0`
/// values and must be nonzero).
pub fn growth_profile(
    params: &GrowthParams,
    elements: &[SizeBasisElement],
    observable: &SectorOperator,
    psi0: Option<&CVec>,
    delta_element: Option<usize>,
    progress: Option<&crate::evolution::ProgressFn>,
) -> Result<GrowthProfile> {
    if params.samples < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: params.samples });
    }
    if params.times.is_empty() || params.times[0] != 0.0 {
        return Err(Error::InvalidTimeGrid);
    }
    let basis = crate::fock::build_sector(params.n, params.charge as i64)?;
    if observable.domain().dim() != basis.dim() || !observable.is_square() {
        return Err(Error::SectorMismatch("observable must be square on the run sector".into()));
    }
    for e in elements {
        if !e.op.domain().same_sector(observable.domain())
            || !e.op.codomain().same_sector(observable.codomain())
        {
            return Err(Error::SectorMismatch(
                "size-basis elements must live on the observable's sector".into(),
            ));
        }
    }
    // t = 0 coefficients are disorder-independent.
    let coeff0: Vec<C64> = elements
        .iter()
        .map(|e| hs_inner_q(&e.op, observable))
        .collect::<Result<_>>()?;
    let (delta_c0, delta_r0) = match (delta_element, psi0) {
        (Some(k), Some(psi)) => {
            let c0 = coeff0[k];
            let r0 = expectation(psi, observable)?;
            if c0.norm() < 1e-12 || r0.abs() < 1e-12 {
                return Err(Error::DegenerateRepresentative {
                    m: elements[k].size.m,
                    n: elements[k].size.n,
                    charge: params.charge,
                });
            }
            (Some(c0), Some(r0))
        }
        _ => (None, None),
    };

    let n_times = params.times.len();
    let n_el = elements.len();
    let with_delta = delta_c0.is_some();
    let width = 2 * n_el * n_times + if with_delta { 3 * n_times } else { 0 };
    let singles = std::sync::Mutex::new(Vec::new());
    let counter = std::sync::atomic::AtomicU64::new(0);

    let acc = parallel_welford(params.samples, width, |index| {
        let seed = mix_seed(params.master_seed, index);
        let table = sample_couplings(params.n, params.q, params.coupling, seed)?;
        let h = build_hamiltonian(&table, &basis)?;
        let spec = crate::evolution::diagonalize(&h)?;
        let u = &spec.eigenvectors;
        let w_eig = u.adjoint() * observable.matrix() * u;
        let dim = basis.dim();

        let mut values = vec![0.0f64; width];
        let mut single_values: Vec<Vec<C64>> = Vec::new();
        let keep_single = index < params.dump_singles;
        for (k, element) in elements.iter().enumerate() {
            let t_eig = u.adjoint() * element.op.matrix() * u;
            // c(t) = Σ_{jl} conj(T̃_{jl}) W̃_{jl} e^{i(E_j - E_l)t}
            let kmat = CMat::from_fn(dim, dim, |j, l| t_eig[(j, l)].conj() * w_eig[(j, l)]);
            let mut curve = Vec::with_capacity(n_times);
            for (it, &t) in params.times.iter().enumerate() {
                // t = 0 goes through the same spectral path as every other
                // grid point, so its spread reflects round-off honestly.
                let c = phase_bilinear(&kmat, &spec.eigenvalues, t);
                values[(2 * k) * n_times + it] = c.re;
                values[(2 * k + 1) * n_times + it] = c.im;
                if keep_single {
                    curve.push(c);
                }
            }
            if keep_single {
                single_values.push(curve);
            }
        }
        if let (Some(c0), Some(r0), Some(psi)) = (delta_c0, delta_r0, psi0) {
            let k = delta_element.expect("delta_element set when c0 is");
            let r_curve = crate::evolution::heisenberg_expectation(
                &spec,
                psi,
                observable,
                &params.times,
            )?;
            let base = 2 * n_el * n_times;
            for it in 0..n_times {
                // Both normalized curves are 1 at t = 0 by construction.
                let (nc, nr) = if params.times[it] == 0.0 {
                    (1.0, 1.0)
                } else {
                    (values[(2 * k) * n_times + it] / c0.re, r_curve[it] / r0)
                };
                values[base + it] = nc - nr;
                values[base + n_times + it] = nc;
                values[base + 2 * n_times + it] = nr;
            }
        }
        if keep_single {
            singles
                .lock()
                .expect("singles mutex")
                .push(SingleRealizationCurves { sample_index: index, values: single_values });
        }
        if let Some(report) = progress {
            let done = counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            report(done);
        }
        Ok(values)
    })?;

    let coefficients = elements
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let re = &acc[(2 * k) * n_times..(2 * k + 1) * n_times];
            let im = &acc[(2 * k + 1) * n_times..(2 * k + 2) * n_times];
            CoefficientTrace {
                descriptor: e.descriptor.clone(),
                size: e.size,
                re_mean: re.iter().map(Welford::mean).collect(),
                re_stderr: re.iter().map(Welford::stderr).collect(),
                im_mean: im.iter().map(Welford::mean).collect(),
                im_stderr: im.iter().map(Welford::stderr).collect(),
                samples: params.samples,
            }
        })
        .collect();

    let delta = if with_delta {
        let base = 2 * n_el * n_times;
        let diff = &acc[base..base + n_times];
        let nc = &acc[base + n_times..base + 2 * n_times];
        let nr = &acc[base + 2 * n_times..base + 3 * n_times];
        Some(DeltaTrace {
            delta: diff.iter().map(|w| w.mean().abs()).collect(),
            stderr: diff.iter().map(Welford::stderr).collect(),
            combined_stderr: nc
                .iter()
                .zip(nr)
                .map(|(a, b)| (a.stderr().powi(2) + b.stderr().powi(2)).sqrt())
                .collect(),
        })
    } else {
        None
    };

    let mut singles = singles.into_inner().expect("singles mutex");
    singles.sort_by_key(|s| s.sample_index);
    Ok(GrowthProfile { times: params.times.clone(), coefficients, delta, singles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::build_sector;
    use crate::operators::{monomial_operator, staggered_magnetization};
    use approx::assert_abs_diff_eq;

    fn max_matrix_dev(a: &SectorOperator, b: &SectorOperator) -> f64 {
        (a.matrix() - b.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn gs_number_operator_at_half_filling() {
        let basis = build_sector(6, 3).unwrap();
        let dim = basis.dim() as f64;
        let seeds = vec![
            SizeBasisSeed {
                op: SectorOperator::identity(&basis),
                size: SizeLabel::new(0, 0),
                descriptor: "identity".into(),
            },
            SizeBasisSeed {
                op: SectorOperator::number_operator(1, &basis),
                size: SizeLabel::new(1, 1),
                descriptor: "n1".into(),
            },
        ];
        let out = orthonormalize_size_basis(seeds).unwrap();
        assert!(out.dropped.is_empty());
        // 𝒩 (n̂_1 - 1/2) with 𝒩 = 2/√dim.
        let expected = SectorOperator::number_operator(1, &basis)
            .sub(&SectorOperator::identity(&basis).scale(C64::new(0.5, 0.0)))
            .unwrap()
            .scale(C64::new(2.0 / dim.sqrt(), 0.0));
        assert!(max_matrix_dev(&out.elements[1].op, &expected) < 1e-12);
    }

    #[test]
    fn gs_pair_density_matches_closed_form() {
        // Seed n̂_1 n̂_2 at half filling reproduces
        // n̂_1 n̂_2 - (n̂_1 + n̂_2)/2 + N/(4(N-1)) up to normalization.
        let basis = build_sector(8, 4).unwrap();
        let n1 = SectorOperator::number_operator(1, &basis);
        let n2 = SectorOperator::number_operator(2, &basis);
        let one = SectorOperator::identity(&basis);
        let seeds = vec![
            SizeBasisSeed { op: one.clone(), size: SizeLabel::new(0, 0), descriptor: "1".into() },
            SizeBasisSeed { op: n1.clone(), size: SizeLabel::new(1, 1), descriptor: "n1".into() },
            SizeBasisSeed { op: n2.clone(), size: SizeLabel::new(1, 1), descriptor: "n2".into() },
            SizeBasisSeed {
                op: n1.compose(&n2).unwrap(),
                size: SizeLabel::new(2, 2),
                descriptor: "n1n2".into(),
            },
        ];
        let out = orthonormalize_size_basis(seeds).unwrap();
        let got = &out.elements[3].op;
        let closed = n1
            .compose(&n2)
            .unwrap()
            .sub(&n1.add(&n2).unwrap().scale(C64::new(0.5, 0.0)))
            .unwrap()
            .add(&one.scale(C64::new(8.0 / (4.0 * 7.0), 0.0)))
            .unwrap();
        let norm = hs_norm(&closed);
        assert!(max_matrix_dev(got, &closed.scale(C64::new(1.0 / norm, 0.0))) < 1e-12);
    }

    #[test]
    fn gs_off_diagonal_seed_is_kept_as_is() {
        let basis = build_sector(6, 3).unwrap();
        let hop = monomial_operator(&[1], &[2], &basis).unwrap();
        let mut seeds = diagonal_size_seeds(&basis, 1);
        seeds.push(SizeBasisSeed {
            op: hop.clone(),
            size: SizeLabel::new(1, 1),
            descriptor: "hop".into(),
        });
        let out = orthonormalize_size_basis(seeds).unwrap();
        let got = out.elements.iter().find(|e| e.descriptor == "hop").unwrap();
        let norm = hs_norm(&hop);
        assert!(max_matrix_dev(&got.op, &hop.scale(C64::new(1.0 / norm, 0.0))) < 1e-12);
    }

    #[test]
    fn gs_is_order_independent_for_disjoint_equal_size_seeds() {
        let basis = build_sector(6, 3).unwrap();
        let n1 = SizeBasisSeed {
            op: SectorOperator::number_operator(1, &basis),
            size: SizeLabel::new(1, 1),
            descriptor: "n1".into(),
        };
        let hop_op = monomial_operator(&[2], &[3], &basis).unwrap();
        let hop = SizeBasisSeed {
            op: hop_op.add(&hop_op.adjoint()).unwrap(),
            size: SizeLabel::new(1, 1),
            descriptor: "hop".into(),
        };
        let one = SizeBasisSeed {
            op: SectorOperator::identity(&basis),
            size: SizeLabel::new(0, 0),
            descriptor: "1".into(),
        };
        let a = orthonormalize_size_basis(vec![one.clone(), n1.clone(), hop.clone()]).unwrap();
        let b = orthonormalize_size_basis(vec![one, hop, n1]).unwrap();
        for e in &a.elements {
            let f = b.elements.iter().find(|x| x.descriptor == e.descriptor).unwrap();
            assert!(max_matrix_dev(&e.op, &f.op) < 1e-10, "{}", e.descriptor);
        }
    }

    #[test]
    fn gs_drops_degenerate_seeds() {
        let basis = build_sector(4, 0).unwrap();
        let seeds = vec![
            SizeBasisSeed {
                op: SectorOperator::identity(&basis),
                size: SizeLabel::new(0, 0),
                descriptor: "identity".into(),
            },
            SizeBasisSeed {
                op: SectorOperator::number_operator(1, &basis),
                size: SizeLabel::new(1, 1),
                descriptor: "n1".into(),
            },
        ];
        let out = orthonormalize_size_basis(seeds).unwrap();
        assert_eq!(out.elements.len(), 1);
        assert_eq!(out.dropped, vec!["n1".to_string()]);
    }

    #[test]
    fn diagonal_basis_is_orthonormal() {
        let basis = build_sector(6, 3).unwrap();
        let out = orthonormalize_size_basis(diagonal_size_seeds(&basis, 2)).unwrap();
        for (i, a) in out.elements.iter().enumerate() {
            for (j, b) in out.elements.iter().enumerate() {
                let ip = hs_inner_q(&a.op, &b.op).unwrap();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (ip - C64::new(expect, 0.0)).norm() < 1e-10,
                    "({i},{j}): {ip}"
                );
            }
        }
    }

    #[test]
    fn standard_operators_at_half_filling() {
        let basis = build_sector(8, 4).unwrap();
        let ops = standard_test_operators(&basis).unwrap();
        assert!(!ops.generic_route);
        assert_eq!(ops.elements.len(), 4);

        // Unit norms and mutual orthogonality.
        for (i, a) in ops.elements.iter().enumerate() {
            assert_abs_diff_eq!(hs_norm(&a.op), 1.0, epsilon = 1e-10);
            for b in ops.elements.iter().skip(i + 1) {
                assert!(hs_inner_q(&a.op, &b.op).unwrap().norm() < 1e-10);
            }
        }

        // T^(diag)_{1,1} has diagonal entries ±𝒩/2.
        let t11 = ops.by_descriptor(DIAG_1_1).unwrap();
        let scale = 2.0 / (basis.dim() as f64).sqrt() / 2.0;
        for k in 0..basis.dim() {
            assert_abs_diff_eq!(t11.op.matrix()[(k, k)].re.abs(), scale, epsilon = 1e-12);
        }

        // Generic Gram–Schmidt route reproduces the closed half-filling forms.
        let hop = monomial_operator(&[1], &[2], &basis).unwrap();
        let pair = monomial_operator(&[1, 2], &[3, 4], &basis).unwrap();
        let n1 = SectorOperator::number_operator(1, &basis);
        let n2 = SectorOperator::number_operator(2, &basis);
        let seeds = vec![
            SizeBasisSeed {
                op: SectorOperator::identity(&basis),
                size: SizeLabel::new(0, 0),
                descriptor: "identity".into(),
            },
            SizeBasisSeed { op: n1.clone(), size: SizeLabel::new(1, 1), descriptor: DIAG_1_1.into() },
            SizeBasisSeed { op: n2.clone(), size: SizeLabel::new(1, 1), descriptor: "diag_n2".into() },
            SizeBasisSeed {
                op: hop.add(&hop.adjoint()).unwrap(),
                size: SizeLabel::new(1, 1),
                descriptor: OFFDIAG_1_1.into(),
            },
            SizeBasisSeed {
                op: n1.compose(&n2).unwrap(),
                size: SizeLabel::new(2, 2),
                descriptor: DIAG_2_2.into(),
            },
            SizeBasisSeed {
                op: pair.add(&pair.adjoint()).unwrap(),
                size: SizeLabel::new(2, 2),
                descriptor: OFFDIAG_2_2.into(),
            },
        ];
        let generic = orthonormalize_size_basis(seeds).unwrap();
        for e in &ops.elements {
            let g = generic
                .elements
                .iter()
                .find(|x| x.descriptor == e.descriptor)
                .unwrap();
            assert!(max_matrix_dev(&e.op, &g.op) < 1e-10, "{}", e.descriptor);
        }
    }

    #[test]
    fn standard_operators_generic_route() {
        let basis = build_sector(8, 3).unwrap();
        let ops = standard_test_operators(&basis).unwrap();
        assert!(ops.generic_route);
        for e in &ops.elements {
            assert_abs_diff_eq!(hs_norm(&e.op), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn size_coefficient_examples() {
        let basis = build_sector(8, 4).unwrap();
        let ops = standard_test_operators(&basis).unwrap();
        let r = staggered_magnetization(&basis);

        // R̂ is purely size (1,1)-diagonal: zero overlap with (2,2) and with
        // the off-diagonal (1,1) element.
        let c22 = size_coefficient(ops.by_descriptor(DIAG_2_2).unwrap(), &r).unwrap();
        assert!(c22.norm() < 1e-10);
        let c11_off = size_coefficient(ops.by_descriptor(OFFDIAG_1_1).unwrap(), &r).unwrap();
        assert!(c11_off.norm() < 1e-10);

        // ⟨⟨T^(diag)_{1,1}|R̂⟩⟩ = √dim · N / (2(N-1)) = 4√70/7 at N = 8.
        let c11 = size_coefficient(ops.by_descriptor(DIAG_1_1).unwrap(), &r).unwrap();
        let expected = (70.0f64).sqrt() * 8.0 / (2.0 * 7.0);
        assert_abs_diff_eq!(c11.re, expected, epsilon = 1e-10);
        assert_abs_diff_eq!(c11.re, 4.0 * (70.0f64).sqrt() / 7.0, epsilon = 1e-10);
        assert!(c11.im.abs() < 1e-12);
    }

    #[test]
    fn growth_profile_plumbing() {
        let basis = build_sector(6, 3).unwrap();
        let ops = standard_test_operators(&basis).unwrap();
        let r = staggered_magnetization(&basis);
        let psi = crate::evolution::neel_state(&basis).unwrap();
        let params = GrowthParams {
            n: 6,
            charge: 3,
            q: 4,
            coupling: 1.0,
            samples: 24,
            master_seed: 9,
            times: crate::evolution::time_grid(1.0, 0.5).unwrap(),
            dump_singles: 3,
        };
        let delta_idx = ops
            .elements
            .iter()
            .position(|e| e.descriptor == DIAG_1_1)
            .unwrap();
        let profile = growth_profile(
            &params,
            &ops.elements,
            &r,
            Some(&psi),
            Some(delta_idx),
            None,
        )
        .unwrap();
        assert_eq!(profile.coefficients.len(), 4);
        assert_eq!(profile.singles.len(), 3);

        // t = 0 coefficients agree with the deterministic overlap up to the
        // spectral round trip.
        let c11 = &profile.coefficients[delta_idx];
        let expected = size_coefficient(&ops.elements[delta_idx], &r).unwrap();
        assert!((c11.re_mean[0] - expected.re).abs() < 1e-10);
        assert!(c11.re_stderr[0] < 1e-12);

        let delta = profile.delta.unwrap();
        assert!(delta.delta[0] < 1e-12);
        assert!(delta.stderr[0] < 1e-12);

        for s in &profile.singles {
            assert!((s.values[delta_idx][0].re - expected.re).abs() < 1e-10);
        }

        // Individual realizations develop size-(2,2) components at t > 0
        // even though the disorder average stays at zero.
        let diag22 = ops
            .elements
            .iter()
            .position(|e| e.descriptor == DIAG_2_2)
            .unwrap();
        let grown = profile
            .singles
            .iter()
            .map(|s| s.values[diag22].last().unwrap().norm())
            .fold(0.0f64, f64::max);
        assert!(grown > 1e-4, "no single-realization growth seen ({grown:.2e})");
    }
}
