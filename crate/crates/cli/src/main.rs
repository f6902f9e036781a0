//! `syk`: reproducible disorder-averaged SYK quench experiments.
//!
//! Subcommands: `ed-quench`, `size-dynamics`, `cumulant-compare`, `validate`,
//! `magnitudes`. Every run writes its outputs plus a `manifest.json` into a
//! fresh timestamped subdirectory of `--out`; re-running with the same
//! parameters and seed reproduces the CSV files byte for byte, independent of
//! `--threads`.
//!
//! Exit codes: 0 success, 1 validation failure, 2 bad configuration,
//! 3 resource cap exceeded.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use syk_core::cumulant::{
    lambda_analytic, lambda_numeric, magnitude_table, reconstruct_observable, CumulantEigenvalue,
    NumericMethod, Order6Budget, RepresentativeKind,
};
use syk_core::evolution::{
    disorder_average_multi, fock_basis_state, neel_state, time_grid, DisorderRunParams,
};
use syk_core::fock::{build_sector, FockState, SectorBasis};
use syk_core::operators::{staggered_magnetization, SectorOperator};
use syk_core::opsize::{
    diagonal_size_seeds, growth_profile, orthonormalize_size_basis, standard_test_operators,
    GrowthParams, SizeLabel,
};
use syk_core::output::{
    write_coefficient_csv, write_couplings_csv, write_delta_csv, write_eigenvalue_csv,
    write_magnitude_csv, write_manifest, write_reconstruction_csv, write_trace_csv, Manifest,
};
use syk_core::{CVec, Error, DEFAULT_MODE_CAP};

const EXIT_VALIDATION: i32 = 1;
const EXIT_CONFIG: i32 = 2;
const EXIT_RESOURCE: i32 = 3;

#[derive(Parser)]
#[command(name = "syk", version, about = "Disorder-averaged SYK quench dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Disorder-averaged quench trace of one observable (exact diagonalization).
    EdQuench(RunArgs),
    /// Disorder-averaged operator-size coefficients of the observable.
    SizeDynamics(RunArgs),
    /// ED average vs cumulant reconstructions for R and R² at several truncations.
    CumulantCompare(RunArgs),
    /// Compare closed-form cumulant eigenvalues against exact enumeration.
    Validate(ValidateArgs),
    /// Cumulant magnitude hierarchy |λ^(2k)(N, N/2)|/(2k)! over a range of N.
    Magnitudes(MagnitudeArgs),
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Mode count N.
    #[arg(long)]
    n: Option<u32>,
    /// Sector charge Q (default ⌈N/2⌉).
    #[arg(long)]
    charge: Option<u32>,
    /// Interaction order q (even).
    #[arg(long)]
    q: Option<u32>,
    /// Coupling strength J.
    #[arg(long)]
    coupling: Option<f64>,
    /// Disorder realizations.
    #[arg(long)]
    samples: Option<u64>,
    /// Master seed; per-sample seeds derive from it deterministically.
    #[arg(long)]
    seed: Option<u64>,
    /// Final time in units of 1/J.
    #[arg(long)]
    tmax: Option<f64>,
    /// Grid step in units of 1/J.
    #[arg(long)]
    dt: Option<f64>,
    /// Cumulant truncation order (2, 4, or 6).
    #[arg(long)]
    order: Option<u32>,
    /// Observable: R, R2, or diag:<path.json>.
    #[arg(long)]
    observable: Option<String>,
    /// Initial state: neel, or fock:<occupation string, mode 1 first>.
    #[arg(long)]
    initial_state: Option<String>,
    /// Worker threads (results are thread-count independent).
    #[arg(long)]
    threads: Option<usize>,
    /// Output root; each run gets a fresh timestamped subdirectory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file with the same keys; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Emit the first k single-realization coefficient curves (size-dynamics).
    #[arg(long)]
    dump_singles: Option<u64>,
    /// Also write the sample-0 coupling table as CSV.
    #[arg(long, default_value_t = false)]
    dump_couplings: bool,
}

#[derive(Args, Clone)]
struct ValidateArgs {
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct MagnitudeArgs {
    /// Smallest even N.
    #[arg(long, default_value_t = 6)]
    n_min: u32,
    /// Largest even N.
    #[arg(long, default_value_t = 14)]
    n_max: u32,
    /// Monte-Carlo samples for order-6 eigenvalues beyond the enumeration cap.
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Skip order-6 rows entirely.
    #[arg(long, default_value_t = false)]
    skip_order6: bool,
    /// Largest N for which the order-6 Monte-Carlo path is attempted.
    #[arg(long, default_value_t = 8)]
    order6_mc_max_n: u32,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// JSON config file: same keys as the flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    n: Option<u32>,
    charge: Option<u32>,
    q: Option<u32>,
    coupling: Option<f64>,
    samples: Option<u64>,
    seed: Option<u64>,
    tmax: Option<f64>,
    dt: Option<f64>,
    order: Option<u32>,
    observable: Option<String>,
    initial_state: Option<String>,
    threads: Option<usize>,
    out: Option<PathBuf>,
    dump_singles: Option<u64>,
}

/// Fully resolved run configuration (flags > config file > defaults).
#[derive(Debug, Clone)]
struct RunConfig {
    command: &'static str,
    n: u32,
    charge: u32,
    q: u32,
    coupling: f64,
    samples: u64,
    master_seed: u64,
    t_max: f64,
    dt: f64,
    truncation: u32,
    observable: String,
    initial_state: String,
    threads: Option<usize>,
    out_dir: PathBuf,
    dump_singles: u64,
    dump_couplings: bool,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Core(Error),
    ValidationFailed(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::ValidationFailed(_) => EXIT_VALIDATION,
            CliError::Core(e) => match e {
                Error::ModeCapExceeded { .. } | Error::EnumerationBudget { .. } => EXIT_RESOURCE,
                _ => EXIT_CONFIG,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Config(m) => format!("configuration error: {m}"),
            CliError::ValidationFailed(m) => format!("validation failed: {m}"),
            CliError::Core(e) => format!("error: {e}"),
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::EdQuench(args) => resolve(args, "ed-quench").and_then(cmd_ed_quench),
        Command::SizeDynamics(args) => resolve(args, "size-dynamics").and_then(cmd_size_dynamics),
        Command::CumulantCompare(args) => {
            resolve(args, "cumulant-compare").and_then(cmd_cumulant_compare)
        }
        Command::Validate(args) => cmd_validate(args),
        Command::Magnitudes(args) => cmd_magnitudes(args),
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("{}", e.message());
            std::process::exit(e.exit_code());
        }
    }
}

fn resolve(args: RunArgs, command: &'static str) -> Result<RunConfig, CliError> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let n = args
        .n
        .or(file.n)
        .ok_or_else(|| CliError::Config("--n is required".into()))?;
    if n == 0 {
        return Err(CliError::Config("--n must be positive".into()));
    }
    if n > DEFAULT_MODE_CAP {
        // Exact-diagonalization paths are infeasible beyond the cap.
        return Err(CliError::Core(Error::ModeCapExceeded { modes: n, cap: DEFAULT_MODE_CAP }));
    }
    let charge = args.charge.or(file.charge).unwrap_or(n.div_ceil(2));
    if charge > n {
        return Err(CliError::Config(format!("charge {charge} out of range for N = {n}")));
    }
    let q = args.q.or(file.q).unwrap_or(4);
    if q < 2 || !q.is_multiple_of(2) || q / 2 > n {
        return Err(CliError::Config(format!("invalid interaction order q = {q}")));
    }
    let coupling = args.coupling.or(file.coupling).unwrap_or(1.0);
    if coupling.is_nan() || coupling <= 0.0 {
        return Err(CliError::Config("coupling must be positive".into()));
    }
    let samples = args.samples.or(file.samples).unwrap_or(2000);
    if samples < 2 {
        return Err(CliError::Config("need at least 2 samples".into()));
    }
    let t_max = args.tmax.or(file.tmax).unwrap_or(3.0);
    let dt = args.dt.or(file.dt).unwrap_or(0.05);
    if dt.is_nan() || dt <= 0.0 || t_max.is_nan() || t_max < dt {
        return Err(CliError::Config("need dt > 0 and tmax >= dt".into()));
    }
    let truncation = args.order.or(file.order).unwrap_or(4);
    if !matches!(truncation, 2 | 4 | 6) {
        return Err(CliError::Config(format!("truncation order {truncation} not in {{2, 4, 6}}")));
    }
    Ok(RunConfig {
        command,
        n,
        charge,
        q,
        coupling,
        samples,
        master_seed: args.seed.or(file.seed).unwrap_or(2026),
        t_max,
        dt,
        truncation,
        observable: args.observable.or(file.observable).unwrap_or_else(|| "R".into()),
        initial_state: args
            .initial_state
            .or(file.initial_state)
            .unwrap_or_else(|| "neel".into()),
        threads: args.threads.or(file.threads),
        out_dir: args.out.or(file.out).unwrap_or_else(|| PathBuf::from("runs")),
        dump_singles: args.dump_singles.or(file.dump_singles).unwrap_or(0),
        dump_couplings: args.dump_couplings,
    })
}

fn install_threads(threads: Option<usize>) {
    if let Some(t) = threads {
        // Ignore the error when a pool already exists (e.g. repeated calls in
        // tests); results do not depend on the pool size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
}

/// Fresh timestamped output directory under the configured root.
fn make_out_dir(root: &Path, command: &str) -> Result<PathBuf, CliError> {
    let stamp = chrono::Utc::now().format("%Y%m%d-%H%M%S");
    let mut candidate = root.join(format!("{command}-{stamp}"));
    let mut counter = 1;
    while candidate.exists() {
        counter += 1;
        candidate = root.join(format!("{command}-{stamp}-{counter}"));
    }
    std::fs::create_dir_all(&candidate)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", candidate.display())))?;
    Ok(candidate)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        CliError::Config(format!("cannot write {}: {e}", path.display()))
    })?))
}

#[derive(Debug, Deserialize)]
struct DiagTerm {
    sites: Vec<u32>,
    coeff: f64,
}

fn parse_observable(spec: &str, basis: &SectorBasis) -> Result<SectorOperator, CliError> {
    match spec {
        "R" => Ok(staggered_magnetization(basis)),
        "R2" => {
            let r = staggered_magnetization(basis);
            Ok(r.compose(&r).expect("same sector"))
        }
        other => {
            let path = other.strip_prefix("diag:").ok_or_else(|| {
                CliError::Config(format!("unknown observable '{other}' (use R, R2, diag:<path>)"))
            })?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {path}: {e}")))?;
            let terms: Vec<DiagTerm> = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("bad observable spec {path}: {e}")))?;
            let mut op = SectorOperator::identity(basis).scale(syk_core::C64::new(0.0, 0.0));
            for term in terms {
                let mut product = SectorOperator::identity(basis);
                for &site in &term.sites {
                    if site == 0 || site > basis.n() {
                        return Err(CliError::Config(format!("site {site} out of range")));
                    }
                    product = product
                        .compose(&SectorOperator::number_operator(site, basis))
                        .expect("same sector");
                }
                op = op
                    .add(&product.scale(syk_core::C64::new(term.coeff, 0.0)))
                    .expect("same sector");
            }
            Ok(op)
        }
    }
}

fn parse_initial_state(spec: &str, basis: &SectorBasis) -> Result<CVec, CliError> {
    if spec == "neel" {
        return neel_state(basis).map_err(CliError::Core);
    }
    let occupation = spec.strip_prefix("fock:").ok_or_else(|| {
        CliError::Config(format!("unknown initial state '{spec}' (use neel or fock:<bits>)"))
    })?;
    if occupation.len() != basis.n() as usize {
        return Err(CliError::Config(format!(
            "occupation string '{occupation}' must have N = {} characters",
            basis.n()
        )));
    }
    let mut mask = 0u32;
    for (i, c) in occupation.chars().enumerate() {
        match c {
            '1' => mask |= 1 << i,
            '0' => {}
            _ => return Err(CliError::Config("occupation string must be 0/1".into())),
        }
    }
    fock_basis_state(basis, FockState(mask)).map_err(CliError::Core)
}

fn progress(command: &'static str, total: u64) -> impl Fn(u64) + Sync {
    move |done: u64| {
        if done.is_multiple_of(100) || done == total {
            eprint!("\r{command}: {done}/{total} samples");
            let _ = std::io::stderr().flush();
            if done == total {
                eprintln!();
            }
        }
    }
}

fn base_manifest(config: &RunConfig) -> Manifest {
    Manifest {
        command: config.command.into(),
        n: config.n,
        charge: config.charge,
        q: config.q,
        coupling: config.coupling,
        master_seed: config.master_seed,
        samples: config.samples,
        t_max: config.t_max,
        dt: config.dt,
        observable: config.observable.clone(),
        initial_state: config.initial_state.clone(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        notices: Vec::new(),
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_ed_quench(config: RunConfig) -> Result<(), CliError> {
    install_threads(config.threads);
    let basis = build_sector(config.n, config.charge as i64)?;
    let observable = parse_observable(&config.observable, &basis)?;
    let psi0 = parse_initial_state(&config.initial_state, &basis)?;
    let times = time_grid(config.t_max, config.dt)?;
    let params = DisorderRunParams {
        n: config.n,
        charge: config.charge,
        q: config.q,
        coupling: config.coupling,
        samples: config.samples,
        master_seed: config.master_seed,
        times,
        observable_tag: config.observable.clone(),
        initial_state_tag: config.initial_state.clone(),
    };
    let report = progress("ed-quench", config.samples);
    let trace =
        disorder_average_multi(&params, std::slice::from_ref(&observable), &psi0, Some(&report))?
            .pop()
            .expect("one trace");

    let dir = make_out_dir(&config.out_dir, config.command)?;
    write_trace_csv(create(&dir.join("trace.csv"))?, &trace)?;
    if config.dump_couplings {
        let table = syk_core::sample_couplings(
            config.n,
            config.q,
            config.coupling,
            syk_core::mix_seed(config.master_seed, 0),
        )?;
        write_couplings_csv(create(&dir.join("couplings_sample0.csv"))?, &table)?;
    }
    write_manifest(create(&dir.join("manifest.json"))?, &base_manifest(&config))?;
    println!("{}", dir.display());
    Ok(())
}

fn cmd_size_dynamics(config: RunConfig) -> Result<(), CliError> {
    install_threads(config.threads);
    let basis = build_sector(config.n, config.charge as i64)?;
    let observable = parse_observable(&config.observable, &basis)?;
    let psi0 = parse_initial_state(&config.initial_state, &basis)?;
    let ops = standard_test_operators(&basis)?;
    let times = time_grid(config.t_max, config.dt)?;
    let params = GrowthParams {
        n: config.n,
        charge: config.charge,
        q: config.q,
        coupling: config.coupling,
        samples: config.samples,
        master_seed: config.master_seed,
        times,
        dump_singles: config.dump_singles,
    };
    // Δ(t) needs nonzero t = 0 amplitudes; only attempted for the diagonal
    // (1,1) element and skipped when the overlap vanishes (e.g. for R²).
    let delta_idx = ops.elements.iter().position(|e| e.descriptor == "diag_1_1");
    let delta_possible = delta_idx
        .map(|k| {
            syk_core::hs_inner_q(&ops.elements[k].op, &observable)
                .map(|c| c.norm() > 1e-9)
                .unwrap_or(false)
        })
        .unwrap_or(false);
    let report = progress("size-dynamics", config.samples);
    let profile = growth_profile(
        &params,
        &ops.elements,
        &observable,
        Some(&psi0),
        if delta_possible { delta_idx } else { None },
        Some(&report),
    )?;

    let dir = make_out_dir(&config.out_dir, config.command)?;
    for trace in &profile.coefficients {
        let name = format!("coeff_{}_{}_{}.csv", trace.descriptor, trace.size.m, trace.size.n);
        write_coefficient_csv(create(&dir.join(name))?, &profile.times, trace)?;
    }
    if let Some(delta) = &profile.delta {
        write_delta_csv(create(&dir.join("delta.csv"))?, &profile.times, delta)?;
    }
    if !profile.singles.is_empty() {
        for (k, trace) in profile.coefficients.iter().enumerate() {
            let name = format!("singles_{}_{}_{}.csv", trace.descriptor, trace.size.m, trace.size.n);
            let mut w = create(&dir.join(name))?;
            writeln!(w, "t,sample,re,im").map_err(Error::from)?;
            for single in &profile.singles {
                for (i, &t) in profile.times.iter().enumerate() {
                    let v = single.values[k][i];
                    writeln!(
                        w,
                        "{},{},{},{}",
                        syk_core::output::format_float(t),
                        single.sample_index,
                        syk_core::output::format_float(v.re),
                        syk_core::output::format_float(v.im)
                    )
                    .map_err(Error::from)?;
                }
            }
        }
    }
    let mut manifest = base_manifest(&config);
    if ops.generic_route {
        manifest.notices.push(
            "test operators built by the generic Gram-Schmidt route (sector away from half filling)"
                .into(),
        );
    }
    if !delta_possible {
        manifest
            .notices
            .push("delta trace skipped: observable has no diagonal (1,1) amplitude".into());
    }
    write_manifest(create(&dir.join("manifest.json"))?, &manifest)?;
    println!("{}", dir.display());
    Ok(())
}

/// Best available eigenvalue for one (order, size): closed form when it
/// exists (q = 4), exact enumeration within the budget, Monte Carlo beyond.
fn resolve_eigenvalue(
    order: u32,
    size: SizeLabel,
    config: &RunConfig,
    mc_seed_offset: u64,
) -> Result<CumulantEigenvalue, CliError> {
    if config.q == 4 {
        if let Ok(ev) = lambda_analytic(order, size, config.n, config.charge) {
            return Ok(ev);
        }
    }
    let kind = if size.m == size.n && size.m == 1 {
        RepresentativeKind::Diagonal
    } else {
        RepresentativeKind::OffDiagonal
    };
    match lambda_numeric(
        order,
        size,
        config.n,
        config.charge,
        config.q,
        kind,
        NumericMethod::ExactEnumeration,
    ) {
        Ok(ev) => Ok(ev),
        Err(Error::EnumerationBudget { .. }) => Ok(lambda_numeric(
            order,
            size,
            config.n,
            config.charge,
            config.q,
            kind,
            NumericMethod::MonteCarlo {
                samples: config.samples.max(1000),
                master_seed: config.master_seed ^ mc_seed_offset,
                batches: 20,
            },
        )?),
        Err(e) => Err(e.into()),
    }
}

fn cmd_cumulant_compare(config: RunConfig) -> Result<(), CliError> {
    install_threads(config.threads);
    let basis = build_sector(config.n, config.charge as i64)?;
    let r = staggered_magnetization(&basis);
    let r2 = r.compose(&r).expect("same sector");
    let psi0 = parse_initial_state(&config.initial_state, &basis)?;
    let times = time_grid(config.t_max, config.dt)?;

    let params = DisorderRunParams {
        n: config.n,
        charge: config.charge,
        q: config.q,
        coupling: config.coupling,
        samples: config.samples,
        master_seed: config.master_seed,
        times: times.clone(),
        observable_tag: "R,R2".into(),
        initial_state_tag: config.initial_state.clone(),
    };
    let report = progress("cumulant-compare", config.samples);
    let traces =
        disorder_average_multi(&params, &[r.clone(), r2.clone()], &psi0, Some(&report))?;

    // Truncations 2..=--order; the order-6 eigenvalues join only when
    // resolved to better than 10% relative error.
    let truncations: Vec<u32> = (1..=config.truncation / 2).map(|k| 2 * k).collect();
    let mut notices = Vec::new();
    let mut table: Vec<CumulantEigenvalue> = Vec::new();
    for size in [SizeLabel::new(1, 1), SizeLabel::new(2, 2)] {
        for &order in &truncations {
            let ev = resolve_eigenvalue(order, size, &config, 0x6e6 + order as u64)?;
            if order == 6 && ev.stderr > 0.1 * ev.value.abs() {
                notices.push(format!(
                    "order-6 eigenvalue for size {size} excluded: stderr {:.2e} above 10% of |{:.2e}|",
                    ev.stderr, ev.value
                ));
            } else {
                table.push(ev);
            }
        }
    }

    let size_basis = orthonormalize_size_basis(diagonal_size_seeds(&basis, 2))?;
    let dir = make_out_dir(&config.out_dir, config.command)?;
    for (tag, observable, trace) in
        [("R", &r, &traces[0]), ("R2", &r2, &traces[1])]
    {
        write_trace_csv(create(&dir.join(format!("ed_{tag}.csv")))?, trace)?;
        for &truncation in &truncations {
            match reconstruct_observable(observable, &psi0, &size_basis.elements, &table, truncation)
            {
                Ok(rec) => {
                    let jt: Vec<f64> = times.iter().map(|t| t * config.coupling).collect();
                    let values: Vec<f64> = jt.iter().map(|&x| rec.eval_jt(x)).collect();
                    write_reconstruction_csv(
                        create(&dir.join(format!("recon_{tag}_order{truncation}.csv")))?,
                        &times,
                        &values,
                        truncation,
                    )?;
                }
                Err(Error::MissingEigenvalue { order, .. }) => {
                    notices.push(format!(
                        "reconstruction of {tag} at truncation {truncation} skipped: no order-{order} eigenvalue"
                    ));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    write_eigenvalue_csv(create(&dir.join("eigenvalues.csv"))?, &table)?;
    let mut manifest = base_manifest(&config);
    manifest.observable = "R,R2".into();
    manifest.notices = notices;
    write_manifest(create(&dir.join("manifest.json"))?, &manifest)?;
    println!("{}", dir.display());
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    install_threads(args.threads);
    let families = [
        (2u32, SizeLabel::new(1, 0), RepresentativeKind::OffDiagonal),
        (2, SizeLabel::new(1, 1), RepresentativeKind::Diagonal),
        (2, SizeLabel::new(2, 1), RepresentativeKind::OffDiagonal),
        (2, SizeLabel::new(2, 2), RepresentativeKind::OffDiagonal),
        (4, SizeLabel::new(1, 1), RepresentativeKind::Diagonal),
    ];
    let mut rows = Vec::new();
    let mut max_dev = 0.0f64;
    for n in [4u32, 6, 8] {
        for &(order, size, kind) in &families {
            for charge in 0..=n {
                let numeric = match lambda_numeric(
                    order,
                    size,
                    n,
                    charge,
                    4,
                    kind,
                    NumericMethod::ExactEnumeration,
                ) {
                    Ok(ev) => ev,
                    Err(Error::DegenerateRepresentative { .. })
                    | Err(Error::CodomainOutOfRange { .. }) => continue,
                    Err(e) => return Err(e.into()),
                };
                let analytic = lambda_analytic(order, size, n, charge)?;
                let dev = (numeric.value - analytic.value).abs();
                max_dev = max_dev.max(dev);
                println!(
                    "order {order} size {size} N={n} Q={charge}: analytic {:+.12e} enumerated {:+.12e} dev {dev:.3e}",
                    analytic.value, numeric.value
                );
                rows.push((order, size, n, charge, analytic.value, numeric.value, dev));
            }
        }
    }
    println!("checked {} grid points, max |deviation| = {max_dev:.3e}", rows.len());

    let root = args.out.unwrap_or_else(|| PathBuf::from("runs"));
    let dir = make_out_dir(&root, "validate")?;
    let mut w = create(&dir.join("validate_report.csv"))?;
    writeln!(w, "order,m,n,N,Q,analytic,enumerated,deviation").map_err(Error::from)?;
    for (order, size, n, charge, analytic, numeric, dev) in &rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            order,
            size.m,
            size.n,
            n,
            charge,
            syk_core::output::format_float(*analytic),
            syk_core::output::format_float(*numeric),
            syk_core::output::format_float(*dev)
        )
        .map_err(Error::from)?;
    }
    let manifest = Manifest {
        command: "validate".into(),
        n: 8,
        charge: 0,
        q: 4,
        coupling: 1.0,
        master_seed: 0,
        samples: 0,
        t_max: 0.0,
        dt: 0.0,
        observable: "cumulant eigenvalues".into(),
        initial_state: "-".into(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        notices: vec![format!("grid N in {{4,6,8}}, max deviation {max_dev:.3e}")],
    };
    write_manifest(create(&dir.join("manifest.json"))?, &manifest)?;
    println!("{}", dir.display());
    if max_dev > 1e-9 {
        return Err(CliError::ValidationFailed(format!(
            "max deviation {max_dev:.3e} exceeds 1e-9"
        )));
    }
    Ok(())
}

fn cmd_magnitudes(args: MagnitudeArgs) -> Result<(), CliError> {
    install_threads(args.threads);
    if !args.n_min.is_multiple_of(2) || !args.n_max.is_multiple_of(2) || args.n_min > args.n_max {
        return Err(CliError::Config("need even n_min <= n_max".into()));
    }
    let n_values: Vec<u32> = (args.n_min..=args.n_max).step_by(2).collect();
    let budget = if args.skip_order6 {
        Order6Budget::Skip
    } else {
        Order6Budget::Auto {
            mc_samples: args.samples.unwrap_or(2000),
            master_seed: args.seed.unwrap_or(2026),
            mc_max_modes: args.order6_mc_max_n,
        }
    };
    let rows = magnitude_table(&n_values, budget)?;
    for r in &rows {
        println!(
            "N={} order {}: {:.6e} ({}, stderr {:.2e})",
            r.n, r.order, r.magnitude, r.method, r.stderr
        );
    }
    let root = args.out.unwrap_or_else(|| PathBuf::from("runs"));
    let dir = make_out_dir(&root, "magnitudes")?;
    write_magnitude_csv(create(&dir.join("magnitudes.csv"))?, &rows)?;
    let manifest = Manifest {
        command: "magnitudes".into(),
        n: args.n_max,
        charge: args.n_max / 2,
        q: 4,
        coupling: 1.0,
        master_seed: args.seed.unwrap_or(2026),
        samples: args.samples.unwrap_or(2000),
        t_max: 0.0,
        dt: 0.0,
        observable: "lambda_{1,1} magnitudes".into(),
        initial_state: "-".into(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        notices: vec![format!("N in [{}, {}]", args.n_min, args.n_max)],
    };
    write_manifest(create(&dir.join("manifest.json"))?, &manifest)?;
    println!("{}", dir.display());
    Ok(())
}
