//! `nhgeo` command-line front end.
//!
//! Exit codes: 0 ok, 2 config, 3 numerical failure, 4 bound violation.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::bounds::{
    absorptive_re_im_report, check_absorptive_psd, check_chern_chain, check_optical_weight_bound, local_curvature_report,
    psd_report, qgt_inequality_report, BoundName, BoundReport, Family,
};
use crate::config::{ConfigError, Overrides, RunConfig, ENV_PREFIX};
use crate::error::Error;
use crate::geometry::{scan_geometry, GeometryGrid};
use crate::lindblad::{
    commuting_absorptive_spectrum, commuting_instance, decompose_antihermitian, effective_hamiltonian, positivity_scan,
    split_hamiltonian, KeldyshSet,
};
use crate::models::{mesh_point, BlochModel, KPoint, ModelSpec};
use crate::report::{
    bound_csv, geometry_csv, matrix_summary, sweep_csv, to_json, write_file, GeometryDocument, LindbladSummary, ReportError,
    RunReport, Timing,
};
use crate::response::{optical_weight_grid, weight_row};
use crate::spectra::{eigensystem, BandOrdering};
use crate::topology::chern_result;

/// Uniform loss added to every level of the commuting response instance.
pub const BATH_BROADENING: f64 = 0.05;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_BOUND: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "nhgeo", version, about = "Quantum geometry and response bounds of non-Hermitian Bloch bands")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration (also NHGEO_CONFIG).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Brillouin-zone mesh, e.g. 64x64.
    #[arg(long, global = true)]
    pub grid: Option<String>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Band index.
    #[arg(long, global = true)]
    pub band: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Geometry on the mesh: CSV and JSON.
    Scan,
    /// Chern number and the bound chain.
    Chern,
    /// Every bound checker; exits 4 on a violation.
    Bounds,
    /// Optical weight against its topological lower bound, per Gamma.
    OpticalWeight,
    /// Jump decomposition, Keldysh self-energy and bubble positivity.
    LindbladCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Scan => "scan",
            Command::Chern => "chern",
            Command::Bounds => "bounds",
            Command::OpticalWeight => "optical-weight",
            Command::LindbladCheck => "lindblad-check",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Numerical(#[from] Error),
    #[error(transparent)]
    Output(#[from] ReportError),
    #[error("bound violated: {0}")]
    Bound(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output(_) => EXIT_CONFIG,
            CliError::Numerical(Error::InvalidParams(_)) => EXIT_CONFIG,
            CliError::Numerical(Error::BoundViolation { .. }) | CliError::Bound(_) => EXIT_BOUND,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

/// Parses arguments, loads the configuration and runs one command.
pub fn run<I, T>(args: I, env: Vec<(String, String)>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                return EXIT_CONFIG;
            }
            let _ = write!(stdout, "{e}");
            return EXIT_OK;
        }
    };
    let config_path = cli.config.clone().or_else(|| {
        env.iter().find(|(k, _)| k.as_str() == format!("{ENV_PREFIX}CONFIG")).map(|(_, v)| PathBuf::from(v))
    });
    let overrides = Overrides { out: cli.out, grid: cli.grid, threads: cli.threads, band: cli.band };
    let result = RunConfig::load(config_path.as_deref(), env, &overrides)
        .map_err(CliError::from)
        .and_then(|cfg| execute(cli.command, &cfg, stdout));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if let CliError::Numerical(Error::ExceptionalMesh { points, .. }) = &e {
                for (kx, ky) in points {
                    let _ = writeln!(stderr, "  k = ({kx:.16e}, {ky:.16e})");
                }
            }
            e.exit_code()
        }
    }
}

/// Runs `command` inside a pool sized by the configuration.
pub fn execute(command: Command, cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.execution.threads)
        .build()
        .map_err(|e| ConfigError::Invalid(format!("thread pool: {e}")))?;
    let threads = pool.current_num_threads();
    let start = Instant::now();
    let mut lines = Vec::new();
    let outcome = pool.install(|| match command {
        Command::Scan => cmd_scan(cfg, &mut lines),
        Command::Chern => cmd_chern(cfg, &mut lines),
        Command::Bounds => cmd_bounds(cfg, &mut lines),
        Command::OpticalWeight => cmd_optical_weight(cfg, &mut lines),
        Command::LindbladCheck => cmd_lindblad_check(cfg, &mut lines),
    });
    for l in &lines {
        let _ = writeln!(stdout, "{l}");
    }
    let (report, failure) = outcome?;
    if let Some(mut report) = report {
        report.timing = Timing { wall_seconds: start.elapsed().as_secs_f64(), threads };
        write_file(&cfg.execution.out, "report.json", &to_json(&report))?;
    }
    match failure {
        Some(msg) => Err(CliError::Bound(msg)),
        None => Ok(()),
    }
}

/// Report to write (if any) and a bound-failure message.
type Outcome = Result<(Option<RunReport>, Option<String>), CliError>;

fn build_model(cfg: &RunConfig) -> Result<Box<dyn BlochModel>, CliError> {
    let model = cfg.model.build(cfg.derivative)?;
    if cfg.band >= model.dim() {
        return Err(ConfigError::Invalid(format!("band {} out of range for a {}-band model", cfg.band, model.dim())).into());
    }
    Ok(model)
}

fn scan(cfg: &RunConfig, model: &dyn BlochModel) -> Result<GeometryGrid, CliError> {
    Ok(scan_geometry(model, cfg.band, cfg.ordering, cfg.grid.nx, cfg.grid.ny)?)
}

pub fn cmd_scan(cfg: &RunConfig, lines: &mut Vec<String>) -> Outcome {
    let model = build_model(cfg)?;
    let grid = scan(cfg, &*model)?;
    let out = &cfg.execution.out;
    write_file(out, "geometry.csv", &geometry_csv(&grid).render())?;
    write_file(out, "geometry.json", &to_json(&GeometryDocument::new(cfg, grid)))?;
    lines.push(format!("scanned {}x{} mesh, band {}: geometry.csv, geometry.json", cfg.grid.nx, cfg.grid.ny, cfg.band));
    Ok((None, None))
}

pub fn cmd_chern(cfg: &RunConfig, lines: &mut Vec<String>) -> Outcome {
    let model = build_model(cfg)?;
    let grid = scan(cfg, &*model)?;
    let chern = chern_result(&*model, &grid, cfg.ordering)?;
    let chain = check_chern_chain(&chern);
    lines.push(format!("C_NH = {}", chern.chern_plaquette));
    lines.push(format!(
        "2pi|C| = {:.6} <= int|F| = {:.6} <= int(|Q_xy|+|Q_yx|) = {:.6}  (curvature sum C = {:.6}{:+.2e}i)",
        2.0 * std::f64::consts::PI * chern.chern_plaquette.unsigned_abs() as f64,
        chern.curvature_abs_integral,
        chern.qgt_bound_integral,
        chern.chern_curvature,
        chern.chern_curvature_imag,
    ));
    let failure = failure_message(std::slice::from_ref(&chain));
    let mut report = RunReport::new(Command::Chern.name(), cfg);
    report.chern = Some(chern);
    report.bounds.push(chain);
    Ok((Some(report), failure))
}

fn failure_message(reports: &[BoundReport]) -> Option<String> {
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| r.asserted && !r.passed)
        .map(|r| format!("{:?} (worst margin {:.3e})", r.bound_name, r.worst_margin))
        .collect();
    (!failed.is_empty()).then(|| failed.join(", "))
}

fn bound_file_name(name: BoundName) -> &'static str {
    match name {
        BoundName::LocalCurvature => "bound_local_curvature.csv",
        BoundName::QgtInequality => "bound_qgt_inequality.csv",
        BoundName::PsdRr => "bound_psd_rr.csv",
        BoundName::PsdLl => "bound_psd_ll.csv",
        BoundName::ChernChain => "bound_chern_chain.csv",
        BoundName::OpticalWeight => "bound_optical_weight.csv",
        BoundName::AbsorptivePSD => "bound_absorptive_psd.csv",
        BoundName::AbsorptiveReIm => "bound_absorptive_re_im.csv",
    }
}

fn bound_columns(name: BoundName) -> &'static [&'static str] {
    match name {
        BoundName::LocalCurvature | BoundName::PsdRr | BoundName::PsdLl => &["kx", "ky"],
        BoundName::QgtInequality => &["kx", "ky", "mu", "nu"],
        BoundName::ChernChain => &["link"],
        BoundName::OpticalWeight => &["arg_infimum"],
        BoundName::AbsorptivePSD | BoundName::AbsorptiveReIm => &["omega"],
    }
}

pub fn cmd_bounds(cfg: &RunConfig, lines: &mut Vec<String>) -> Outcome {
    let model = build_model(cfg)?;
    let grid = scan(cfg, &*model)?;
    let tol = cfg.tolerances.rel_tol;
    let mut reports = vec![
        local_curvature_report(&grid, tol),
        qgt_inequality_report(&grid, false, tol),
        psd_report(&grid, Family::RightRight, tol)?,
        psd_report(&grid, Family::LeftLeft, tol)?,
    ];
    let mut report = RunReport::new(Command::Bounds.name(), cfg);
    // the chain needs the local bound; a violation is already reported above
    if reports[0].passed {
        let chern = chern_result(&*model, &grid, cfg.ordering)?;
        reports.push(check_chern_chain(&chern));
        let w = optical_weight_grid(&*model, cfg.grid.nx, cfg.grid.ny, cfg.optical.eta)?;
        reports.push(check_optical_weight_bound(w.bz_trace, chern.chern_plaquette, w.arg_infimum)?);
        report.chern = Some(chern);
        report.optical_weight = Some(w);
    }
    let k = KPoint::new(cfg.bath.k[0], cfg.bath.k[1]);
    let (sys, ops) = commuting_instance(&*model, k, BATH_BROADENING, cfg.bath.inverted)?;
    let samples = commuting_absorptive_spectrum(&sys, &ops, &cfg.omega.points());
    reports.push(check_absorptive_psd(&samples));
    reports.push(absorptive_re_im_report(&samples));
    for r in &reports {
        let status = match (r.asserted, r.passed) {
            (false, _) => "recorded",
            (true, true) => "pass",
            (true, false) => "FAIL",
        };
        lines.push(format!("{:<16} {:<8} worst margin {:+.6e} over {} points", format!("{:?}", r.bound_name), status, r.worst_margin, r.per_point.len()));
        write_file(&cfg.execution.out, bound_file_name(r.bound_name), &bound_csv(r, bound_columns(r.bound_name)).render())?;
    }
    let failure = failure_message(&reports);
    report.bounds = reports;
    Ok((Some(report), failure))
}

pub fn cmd_optical_weight(cfg: &RunConfig, lines: &mut Vec<String>) -> Outcome {
    let grid = (cfg.grid.nx, cfg.grid.ny);
    let quadrature = cfg.optical.quadrature.then_some(cfg.optical.omega_max);
    let rows = match (&cfg.model, cfg.optical.big_gamma_sweep.is_empty()) {
        (ModelSpec::RiceMele(p), _) => {
            let gammas = if cfg.optical.big_gamma_sweep.is_empty() { vec![p.big_gamma] } else { cfg.optical.big_gamma_sweep.clone() };
            gammas
                .iter()
                .map(|&g| {
                    let spec = ModelSpec::RiceMele(crate::models::RmParams { big_gamma: g, ..*p });
                    let model = spec.build(cfg.derivative)?;
                    weight_row(&*model, g, grid, cfg.optical.eta, cfg.ordering, quadrature)
                })
                .collect::<Result<Vec<_>, Error>>()?
        }
        (_, true) => {
            let model = build_model(cfg)?;
            vec![weight_row(&*model, f64::NAN, grid, cfg.optical.eta, cfg.ordering, quadrature)?]
        }
        (_, false) => return Err(ConfigError::Invalid("a Gamma sweep needs the rice-mele family".into()).into()),
    };
    let mut reports = Vec::new();
    for r in &rows {
        let b = check_optical_weight_bound(r.weight_numeric, r.chern, r.arg_infimum)?;
        lines.push(format!(
            "Gamma = {:.4}  C = {}  W/2pi = {:+.6}  bound = {:.6}  margin = {:+.6}  {}",
            r.big_gamma,
            r.chern,
            r.weight_numeric / (2.0 * std::f64::consts::PI),
            r.bound_rhs,
            r.margin,
            if b.passed { "pass" } else { "FAIL" }
        ));
        reports.push(b);
    }
    write_file(&cfg.execution.out, "optical_weight.csv", &sweep_csv(&rows).render())?;
    let failure = failure_message(&reports);
    let mut report = RunReport::new(Command::OpticalWeight.name(), cfg);
    report.bounds = reports;
    report.weight_sweep = rows;
    Ok((Some(report), failure))
}

pub fn cmd_lindblad_check(cfg: &RunConfig, lines: &mut Vec<String>) -> Outcome {
    let model = build_model(cfg)?;
    if model.dim() != 2 {
        return Err(ConfigError::Invalid("lindblad-check needs a two-band model".into()).into());
    }
    let (nx, ny) = (cfg.grid.nx, cfg.grid.ny);
    let mut hams = Vec::with_capacity(nx * ny);
    for idx in 0..nx * ny {
        hams.push(model.hamiltonian(mesh_point(idx / ny, idx % ny, nx, ny))?);
    }
    let dissipative = hams.iter().any(|h| {
        let (_, d) = split_hamiltonian(h);
        d.iter().any(|z| z.norm() > 1e-14 * h.iter().map(|w| w.norm()).fold(1.0, f64::max))
    });
    if !dissipative {
        lines.push("Hermitian; nothing to check".to_string());
        return Ok((None, None));
    }
    let omegas = cfg.omega.points();
    let mut residual: f64 = 0.0;
    let mut failing: Vec<f64> = Vec::new();
    let mut min_real = f64::INFINITY;
    let mut samples = 0;
    for h in &hams {
        let (herm, d) = split_hamiltonian(h);
        let spec = decompose_antihermitian(&d)?;
        let eff = effective_hamiltonian(&herm, &spec);
        let target = h + crate::models::CMat::identity(2, 2) * spec.regularizer;
        residual = residual.max((&eff - &target).iter().map(|z| z.norm()).fold(0.0, f64::max));
        let energies = eigensystem(&eff, BandOrdering::SlowestDecaying)?.energies;
        let scan = positivity_scan(&energies, &omegas, cfg.bath.inverted)?;
        samples += scan.samples;
        min_real = min_real.min(scan.min_real);
        failing.extend(scan.failing_omegas);
    }
    failing.sort_by(f64::total_cmp);
    failing.dedup();
    let k = KPoint::new(cfg.bath.k[0], cfg.bath.k[1]);
    let h0 = model.hamiltonian(k)?;
    let (_, d0) = split_hamiltonian(&h0);
    let spec0 = decompose_antihermitian(&d0)?;
    let keldysh = KeldyshSet::from_target(&h0, cfg.bath.inverted);
    lines.push(format!("jump roundtrip residual = {residual:.3e} over {} k-points", hams.len()));
    lines.push(format!("{} jump(s) at k = ({:.6}, {:.6}), regularizer {:.6}{:+.6}i", spec0.jumps.len(), k.kx, k.ky, spec0.regularizer.re, spec0.regularizer.im));
    lines.push(format!("Sigma^K = {}", matrix_summary(&keldysh.sigma_k)));
    let positivity = crate::lindblad::PositivityScan { samples, min_real, passed: failing.is_empty(), failing_omegas: failing };
    if positivity.passed {
        lines.push(format!("positivity: pass ({samples} samples, min Re h = {min_real:.6e})"));
    } else {
        let list: Vec<String> = positivity.failing_omegas.iter().map(|w| format!("{w:.6}")).collect();
        lines.push(format!("positivity: FAIL at omega = [{}]", list.join(", ")));
    }
    let failure = (!positivity.passed).then(|| format!("h positivity fails at {} frequencies", positivity.failing_omegas.len()));
    let mut report = RunReport::new(Command::LindbladCheck.name(), cfg);
    report.lindblad = Some(LindbladSummary {
        k: cfg.bath.k,
        jumps: spec0,
        sigma_k: (0..2).map(|i| (0..2).map(|j| [keldysh.sigma_k[(i, j)].re, keldysh.sigma_k[(i, j)].im]).collect()).collect(),
        roundtrip_residual: residual,
        positivity,
    });
    Ok((Some(report), failure))
}
