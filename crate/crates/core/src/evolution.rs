//! Exact-diagonalization quench dynamics and Monte-Carlo disorder averaging.
//!
//! A single realization is propagated spectrally: `ψ(t) = U e^{-iEt} U† ψ0`,
//! so `⟨W(t)⟩ = Σ_{jl} conj(φ_j) W̃_{jl} φ_l e^{i(E_j - E_l)t}` with
//! `φ = U†ψ0` and `W̃ = U†WU`. Disorder averages stream per-sample curves
//! through Welford accumulators with a fixed chunk topology
//! ([`crate::stats::parallel_welford`]), so traces are reproducible for a
//! given master seed independently of worker count.

use serde::Serialize;
use std::sync::Once;

use crate::error::{Error, Result};
use crate::fock::{build_sector, FockState, SectorBasis};
use crate::hamiltonian::{build_hamiltonian, mix_seed, sample_couplings};
use crate::operators::{expectation, SectorOperator, HERMITICITY_TOL};
use crate::stats::{parallel_welford, Welford};
use crate::{C64, CMat, CVec};

/// Relative bound on `max|H - U diag(E) U†|` after diagonalization.
pub const SPECTRAL_RECONSTRUCTION_TOL: f64 = 1e-10;

static FAER_SERIAL: Once = Once::new();

/// Eigendecomposition of a Hermitian sector operator; eigenvalues ascending,
/// eigenvectors as columns of a unitary matrix.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMat,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Trace of the decomposed operator.
    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }
}

/// Diagonalize a Hermitian square sector operator.
///
/// The eigensolver runs single-threaded so that results are bitwise
/// reproducible no matter how the surrounding sample loop is parallelized.
pub fn diagonalize(h: &SectorOperator) -> Result<SpectralDecomposition> {
    h.check_hermitian(HERMITICITY_TOL)?;
    FAER_SERIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
    let m = h.matrix();
    let dim = m.nrows();
    let fm = faer::Mat::<faer::c64>::from_fn(dim, dim, |i, j| m[(i, j)]);
    let evd = fm
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::SectorMismatch(format!("eigensolver failed: {e:?}")))?;
    let mut order: Vec<usize> = (0..dim).collect();
    let raw: Vec<f64> = (0..dim).map(|i| evd.S()[i].re).collect();
    order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| raw[i]).collect();
    let u = evd.U();
    let eigenvectors = CMat::from_fn(dim, dim, |i, j| u[(i, order[j])]);

    // Reconstruction bound, relative to the largest entry of H.
    let mut residual = 0.0f64;
    let mut scale = 0.0f64;
    let diag = CMat::from_fn(dim, dim, |i, j| {
        if i == j {
            C64::new(eigenvalues[i], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let rec = &eigenvectors * diag * eigenvectors.adjoint();
    for (a, b) in rec.iter().zip(m.iter()) {
        residual = residual.max((a - b).norm());
        scale = scale.max(b.norm());
    }
    let tolerance = SPECTRAL_RECONSTRUCTION_TOL * scale;
    if residual > tolerance {
        return Err(Error::SpectralReconstruction { residual, tolerance });
    }
    Ok(SpectralDecomposition { eigenvalues, eigenvectors })
}

/// The Néel state `|1010…⟩` (odd modes occupied) as a sector state vector.
/// The sector charge must equal ⌈N/2⌉.
pub fn neel_state(basis: &SectorBasis) -> Result<CVec> {
    let mask = FockState::neel(basis.n());
    let index = basis
        .index_of(mask)
        .ok_or(Error::StateNotInSector(mask.0))?;
    let mut psi = CVec::zeros(basis.dim());
    psi[index] = C64::new(1.0, 0.0);
    Ok(psi)
}

/// A specific Fock basis state as a sector state vector.
pub fn fock_basis_state(basis: &SectorBasis, state: FockState) -> Result<CVec> {
    let index = basis
        .index_of(state)
        .ok_or(Error::StateNotInSector(state.0))?;
    let mut psi = CVec::zeros(basis.dim());
    psi[index] = C64::new(1.0, 0.0);
    Ok(psi)
}

/// Evaluate `⟨ψ(t)|W|ψ(t)⟩` on a time grid. At `t = 0` the value is computed
/// directly from `ψ0`, without the spectral round trip.
pub fn heisenberg_expectation(
    spec: &SpectralDecomposition,
    psi0: &CVec,
    w: &SectorOperator,
    times: &[f64],
) -> Result<Vec<f64>> {
    w.check_hermitian(HERMITICITY_TOL)?;
    let dim = spec.dim();
    if w.domain().dim() != dim || psi0.len() != dim {
        return Err(Error::SectorMismatch(
            "spectral data, state, and observable must share one sector".into(),
        ));
    }
    let u = &spec.eigenvectors;
    let phi = u.adjoint() * psi0;
    let w_eig = u.adjoint() * w.matrix() * u;
    // Weighted matrix K_{jl} = conj(φ_j) W̃_{jl} φ_l, so that
    // ⟨W(t)⟩ = Σ_{jl} K_{jl} e^{i(E_j - E_l)t}.
    let kmat = CMat::from_fn(dim, dim, |j, l| phi[j].conj() * w_eig[(j, l)] * phi[l]);
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if t == 0.0 {
            out.push(expectation(psi0, w)?);
            continue;
        }
        let value = phase_bilinear(&kmat, &spec.eigenvalues, t);
        if value.im.abs() > HERMITICITY_TOL {
            return Err(Error::ImaginaryResidue(value.im.abs()));
        }
        out.push(value.re);
    }
    Ok(out)
}

/// `Σ_{jl} K_{jl} e^{i(E_j - E_l)t}` via one matrix–vector product.
pub(crate) fn phase_bilinear(kmat: &CMat, energies: &[f64], t: f64) -> C64 {
    let dim = energies.len();
    let phases: Vec<C64> = energies
        .iter()
        .map(|&e| C64::new(0.0, e * t).exp())
        .collect();
    let mut value = C64::new(0.0, 0.0);
    for l in 0..dim {
        let col = kmat.column(l);
        let mut partial = C64::new(0.0, 0.0);
        for (x, phase) in col.iter().zip(&phases) {
            partial += x * phase;
        }
        value += partial * phases[l].conj();
    }
    value
}

/// The Heisenberg operator `W(t) = e^{iHt} W e^{-iHt}`.
pub fn heisenberg_operator(
    spec: &SpectralDecomposition,
    w: &SectorOperator,
    t: f64,
) -> Result<SectorOperator> {
    if !w.is_square() || w.domain().dim() != spec.dim() {
        return Err(Error::SectorMismatch(
            "Heisenberg evolution needs a square operator on the spectral sector".into(),
        ));
    }
    if t == 0.0 {
        return Ok(w.clone());
    }
    let u = &spec.eigenvectors;
    let mut w_eig = u.adjoint() * w.matrix() * u;
    let dim = spec.dim();
    let phases: Vec<C64> = spec
        .eigenvalues
        .iter()
        .map(|&e| C64::new(0.0, e * t).exp())
        .collect();
    for j in 0..dim {
        for l in 0..dim {
            w_eig[(j, l)] *= phases[j] * phases[l].conj();
        }
    }
    let matrix = u * w_eig * u.adjoint();
    SectorOperator::from_matrix(w.domain().clone(), w.codomain().clone(), matrix)
}

/// Uniform grid `0, dt, 2·dt, …` up to and including `t_max` (within
/// round-off of the step count).
pub fn time_grid(t_max: f64, dt: f64) -> Result<Vec<f64>> {
    if dt.is_nan() || dt <= 0.0 || t_max.is_nan() || t_max < 0.0 {
        return Err(Error::InvalidTimeGrid);
    }
    let count = (t_max / dt + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| i as f64 * dt).collect())
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || times[0] != 0.0 {
        return Err(Error::InvalidTimeGrid);
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidTimeGrid);
    }
    Ok(())
}

/// Run manifest attached to every disorder-averaged trace.
#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    #[serde(rename = "N")]
    pub n: u32,
    #[serde(rename = "Q")]
    pub charge: u32,
    pub q: u32,
    #[serde(rename = "J")]
    pub coupling: f64,
    pub master_seed: u64,
    pub observable: String,
    pub initial_state: String,
}

/// Time grid with streaming mean and standard error over disorder samples.
#[derive(Debug, Clone)]
pub struct DynamicsTrace {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub samples: u64,
    pub meta: RunMeta,
}

/// Parameters of a disorder-averaged quench run.
#[derive(Debug, Clone)]
pub struct DisorderRunParams {
    pub n: u32,
    pub charge: u32,
    pub q: u32,
    pub coupling: f64,
    pub samples: u64,
    pub master_seed: u64,
    pub times: Vec<f64>,
    pub observable_tag: String,
    pub initial_state_tag: String,
}

/// Per-sample progress callback (receives the number of completed samples).
pub type ProgressFn = dyn Fn(u64) + Sync;

/// Disorder-averaged quench dynamics of one observable; see
/// [`disorder_average_multi`] for several observables in one sweep.
pub fn disorder_average_dynamics(
    params: &DisorderRunParams,
    observable: &SectorOperator,
    psi0: &CVec,
    progress: Option<&ProgressFn>,
) -> Result<DynamicsTrace> {
    let mut traces =
        disorder_average_multi(params, std::slice::from_ref(observable), psi0, progress)?;
    Ok(traces.pop().expect("one observable in, one trace out"))
}

/// Disorder-averaged quench dynamics of several observables sharing one
/// per-sample pipeline: couplings → Hamiltonian → spectrum → expectations.
pub fn disorder_average_multi(
    params: &DisorderRunParams,
    observables: &[SectorOperator],
    psi0: &CVec,
    progress: Option<&ProgressFn>,
) -> Result<Vec<DynamicsTrace>> {
    if params.samples < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: params.samples });
    }
    check_times(&params.times)?;
    let basis = build_sector(params.n, params.charge as i64)?;
    for w in observables {
        if w.domain().dim() != basis.dim() || !w.is_square() {
            return Err(Error::SectorMismatch(
                "observables must be square on the run sector".into(),
            ));
        }
        w.check_hermitian(HERMITICITY_TOL)?;
    }
    if psi0.len() != basis.dim() {
        return Err(Error::SectorMismatch("initial state not on the run sector".into()));
    }
    let n_times = params.times.len();
    let n_obs = observables.len();
    let width = n_times * n_obs;
    let counter = std::sync::atomic::AtomicU64::new(0);

    let acc = parallel_welford(params.samples, width, |index| {
        let seed = mix_seed(params.master_seed, index);
        let table = sample_couplings(params.n, params.q, params.coupling, seed)?;
        let h = build_hamiltonian(&table, &basis)?;
        let spec = diagonalize(&h)?;
        let mut values = Vec::with_capacity(width);
        for w in observables {
            values.extend(heisenberg_expectation(&spec, psi0, w, &params.times)?);
        }
        if let Some(report) = progress {
            let done = counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            report(done);
        }
        Ok(values)
    })?;

    let traces = observables
        .iter()
        .enumerate()
        .map(|(k, _)| {
            let slice = &acc[k * n_times..(k + 1) * n_times];
            DynamicsTrace {
                times: params.times.clone(),
                mean: slice.iter().map(Welford::mean).collect(),
                stderr: slice.iter().map(Welford::stderr).collect(),
                samples: params.samples,
                meta: RunMeta {
                    n: params.n,
                    charge: params.charge,
                    q: params.q,
                    coupling: params.coupling,
                    master_seed: params.master_seed,
                    observable: if n_obs == 1 {
                        params.observable_tag.clone()
                    } else {
                        format!("{}#{k}", params.observable_tag)
                    },
                    initial_state: params.initial_state_tag.clone(),
                },
            }
        })
        .collect();
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{hs_norm, staggered_magnetization, SectorOperator};
    use approx::assert_abs_diff_eq;

    fn sample_h(n: u32, charge: i64, seed: u64) -> (SectorBasis, SectorOperator) {
        let basis = build_sector(n, charge).unwrap();
        let table = sample_couplings(n, 4, 1.0, seed).unwrap();
        let h = build_hamiltonian(&table, &basis).unwrap();
        (basis, h)
    }

    #[test]
    fn diagonalize_zero_and_identity() {
        let basis = build_sector(6, 1).unwrap();
        let table = sample_couplings(6, 4, 1.0, 1).unwrap();
        let h = build_hamiltonian(&table, &basis).unwrap();
        let spec = diagonalize(&h).unwrap();
        assert!(spec.eigenvalues.iter().all(|&e| e == 0.0));

        let one = SectorOperator::identity(&basis);
        let spec = diagonalize(&one).unwrap();
        for &e in &spec.eigenvalues {
            assert_abs_diff_eq!(e, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn eigenvalue_sum_matches_trace() {
        let (basis, h) = sample_h(8, 4, 21);
        let spec = diagonalize(&h).unwrap();
        let trace: f64 = (0..basis.dim()).map(|k| h.matrix()[(k, k)].re).sum();
        assert_abs_diff_eq!(spec.trace(), trace, epsilon = 1e-9);
        for w in spec.eigenvalues.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn diagonalize_rejects_non_hermitian() {
        let basis = build_sector(4, 2).unwrap();
        let hop = crate::operators::monomial_operator(&[1], &[2], &basis).unwrap();
        assert!(matches!(diagonalize(&hop), Err(Error::NonHermitian { .. })));
    }

    #[test]
    fn neel_examples() {
        let basis = build_sector(8, 4).unwrap();
        let psi = neel_state(&basis).unwrap();
        let index = basis.index_of(FockState(0b0101_0101)).unwrap();
        assert_eq!(psi[index], C64::new(1.0, 0.0));
        assert_abs_diff_eq!(psi.norm(), 1.0, epsilon = 1e-15);

        let r = staggered_magnetization(&basis);
        assert_abs_diff_eq!(expectation(&psi, &r).unwrap(), 4.0, epsilon = 1e-12);
        let n2 = SectorOperator::number_operator(2, &basis);
        assert_abs_diff_eq!(expectation(&psi, &n2).unwrap(), 0.0, epsilon = 1e-12);

        // Wrong sector: the Néel occupation needs Q = ⌈N/2⌉.
        let odd = build_sector(8, 3).unwrap();
        assert!(matches!(neel_state(&odd), Err(Error::StateNotInSector(_))));
    }

    #[test]
    fn heisenberg_expectation_basics() {
        let (basis, h) = sample_h(8, 4, 5);
        let spec = diagonalize(&h).unwrap();
        let psi = neel_state(&basis).unwrap();
        let r = staggered_magnetization(&basis);
        let times = [0.0, 0.3, 1.0];
        let vals = heisenberg_expectation(&spec, &psi, &r, &times).unwrap();
        assert_eq!(vals[0], expectation(&psi, &r).unwrap());

        let one = SectorOperator::identity(&basis);
        for v in heisenberg_expectation(&spec, &psi, &one, &times).unwrap() {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-10);
        }
    }

    // Energy and charge are conserved along every realization.
    #[test]
    fn conservation_checks() {
        let (basis, h) = sample_h(8, 4, 33);
        let spec = diagonalize(&h).unwrap();
        let psi = neel_state(&basis).unwrap();
        let times: Vec<f64> = (0..20).map(|i| i as f64 * 0.15).collect();
        let energies = heisenberg_expectation(&spec, &psi, &h, &times).unwrap();
        for &e in &energies[1..] {
            assert_abs_diff_eq!(e, energies[0], epsilon = 1e-9);
        }
        let mut total_number = SectorOperator::number_operator(1, &basis);
        for mode in 2..=8 {
            total_number = total_number
                .add(&SectorOperator::number_operator(mode, &basis))
                .unwrap();
        }
        for v in heisenberg_expectation(&spec, &psi, &total_number, &times).unwrap() {
            assert_abs_diff_eq!(v, 4.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn heisenberg_operator_properties() {
        let (basis, h) = sample_h(6, 3, 9);
        let spec = diagonalize(&h).unwrap();
        let r = staggered_magnetization(&basis);

        let rt0 = heisenberg_operator(&spec, &r, 0.0).unwrap();
        assert_eq!(rt0.matrix(), r.matrix());

        let rt = heisenberg_operator(&spec, &r, 1.7).unwrap();
        assert_abs_diff_eq!(hs_norm(&rt), hs_norm(&r), epsilon = 1e-9);

        let ht = heisenberg_operator(&spec, &h, 2.3).unwrap();
        let dev = (ht.matrix() - h.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-9, "H(t) deviated by {dev:.3e}");
    }

    // Long-time average of a single realization against the diagonal
    // ensemble computed from the same spectral data. At this sector size the
    // residual temporal fluctuations are sizable, so the short window is
    // compared against its own rms and a long window against an absolute
    // band well below the initial value.
    #[test]
    fn diagonal_ensemble_oracle() {
        let (basis, h) = sample_h(8, 4, 77);
        let spec = diagonalize(&h).unwrap();
        let psi = neel_state(&basis).unwrap();
        let r = staggered_magnetization(&basis);
        let u = &spec.eigenvectors;
        let phi = u.adjoint() * &psi;
        let r_eig = u.adjoint() * r.matrix() * u;
        let diagonal_ensemble: f64 = (0..basis.dim())
            .map(|k| phi[k].norm_sqr() * r_eig[(k, k)].re)
            .sum();

        let window = |t0: f64, t1: f64, points: usize| {
            let mut times = vec![0.0];
            times.extend((0..points).map(|i| t0 + (t1 - t0) * i as f64 / (points - 1) as f64));
            let vals = heisenberg_expectation(&spec, &psi, &r, &times).unwrap();
            let late = &vals[1..];
            let avg = late.iter().sum::<f64>() / late.len() as f64;
            let rms = (late
                .iter()
                .map(|v| (v - diagonal_ensemble).powi(2))
                .sum::<f64>()
                / late.len() as f64)
                .sqrt();
            (avg, rms)
        };
        let (avg_short, rms_short) = window(10.0, 20.0, 41);
        assert!(
            (avg_short - diagonal_ensemble).abs() <= 1.5 * rms_short,
            "short-window average {avg_short} vs diagonal ensemble {diagonal_ensemble} (rms {rms_short})"
        );
        let (avg_long, _) = window(10.0, 210.0, 801);
        assert!(
            (avg_long - diagonal_ensemble).abs() < 0.08,
            "long-window average {avg_long} vs diagonal ensemble {diagonal_ensemble}"
        );
    }

// temporary probe appended as a test
    fn small_params(samples: u64) -> DisorderRunParams {
        DisorderRunParams {
            n: 6,
            charge: 3,
            q: 4,
            coupling: 1.0,
            samples,
            master_seed: 1234,
            times: time_grid(1.0, 0.25).unwrap(),
            observable_tag: "R".into(),
            initial_state_tag: "neel".into(),
        }
    }

    #[test]
    fn disorder_average_initial_point_is_exact() {
        let params = small_params(8);
        let basis = build_sector(6, 3).unwrap();
        let r = staggered_magnetization(&basis);
        let psi = neel_state(&basis).unwrap();
        let trace = disorder_average_dynamics(&params, &r, &psi, None).unwrap();
        assert_eq!(trace.mean[0], 3.0);
        assert_eq!(trace.stderr[0], 0.0);
        assert_eq!(trace.samples, 8);
    }

    #[test]
    fn disorder_average_is_worker_count_independent() {
        let params = small_params(10);
        let basis = build_sector(6, 3).unwrap();
        let r = staggered_magnetization(&basis);
        let psi = neel_state(&basis).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| disorder_average_dynamics(&params, &r, &psi, None).unwrap())
        };
        let a = run(1);
        let b = run(3);
        for (x, y) in a.mean.iter().zip(&b.mean) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        for (x, y) in a.stderr.iter().zip(&b.stderr) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn disorder_average_validates_input() {
        let mut params = small_params(1);
        let basis = build_sector(6, 3).unwrap();
        let r = staggered_magnetization(&basis);
        let psi = neel_state(&basis).unwrap();
        assert!(matches!(
            disorder_average_dynamics(&params, &r, &psi, None),
            Err(Error::InsufficientSamples { .. })
        ));
        params.samples = 4;
        params.times = vec![0.5, 1.0];
        assert!(matches!(
            disorder_average_dynamics(&params, &r, &psi, None),
            Err(Error::InvalidTimeGrid)
        ));
    }

    #[test]
    fn time_grid_shape() {
        let grid = time_grid(3.0, 0.05).unwrap();
        assert_eq!(grid.len(), 61);
        assert_eq!(grid[0], 0.0);
        assert_abs_diff_eq!(grid[60], 3.0, epsilon = 1e-12);
        assert!(time_grid(1.0, 0.0).is_err());
    }
}
