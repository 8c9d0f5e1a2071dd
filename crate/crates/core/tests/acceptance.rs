//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria that cannot be met are printed as FAIL with the measured numbers.
//! The process exits nonzero only when a status differs from `EXPECTED_FAIL`,
//! so a regression and an unexpected recovery are both caught.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nhgeo::bounds::{hermitian_eigenvalues, local_curvature_report, qgt_inequality_report};
use nhgeo::cli::{execute, Command};
use nhgeo::config::{GridSpec, RunConfig};
use nhgeo::geometry::{
    derivatives, divergence_integral, finite_difference_qgt, geometry_record, record_from_eigensystem, scan_geometry,
    GeometryRecord, Tensor2,
};
use nhgeo::lindblad::{
    bubble_h, bubble_h_quadrature, commuting_absorptive_spectrum, decompose_antihermitian, effective_hamiltonian,
    polarization_bubble_commuting, polarization_bubble_quadrature, split_hamiltonian, BubbleSide, CommutingSystem,
    KeldyshSet,
};
use nhgeo::models::{d_dot_sigma, pauli_x, pauli_y, pauli_z, BlochModel, CMat, KPoint, RiceMele, RmParams, ThreeBand, ThreeBandParams};
use nhgeo::response::{conductivity_regular, optical_coefficients, optical_weight_grid, optical_weight_numeric, weight_row, AMPLITUDE_FD_STEP};
use nhgeo::spectra::{eigensystem, BandOrdering};
use nhgeo::topology::{chern_from_curvature, chern_plaquette, plaquette_phase_sum, plaquette_sum_from_vectors, LinkKind};

const ORD: BandOrdering = BandOrdering::DescendingReal;

/// Criteria whose targets are not met by a faithful implementation.
const EXPECTED_FAIL: &[u32] = &[2, 5, 9];

struct Outcome {
    passed: bool,
    detail: String,
}

fn rm(gamma: f64, big_gamma: f64) -> RiceMele {
    RiceMele::new(RmParams { gamma, big_gamma, ..RmParams::default() }).unwrap()
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

fn max_tensor_diff(a: &Tensor2, b: &Tensor2) -> f64 {
    (0..4).map(|c| (a[c / 2][c % 2] - b[c / 2][c % 2]).norm()).fold(0.0, f64::max)
}

fn c1_chern() -> Outcome {
    let start = Instant::now();
    let (c64, c201) = single_thread(|| {
        let m = rm(1.0, 0.0);
        let c = chern_plaquette(&m, 0, ORD, 64, 64).unwrap();
        let grid = scan_geometry(&m, 0, ORD, 201, 201).unwrap();
        (c, chern_from_curvature(&grid))
    });
    let secs = start.elapsed().as_secs_f64();
    let dev = (c201.re - 1.0).abs();
    Outcome {
        passed: c64 == 1 && dev < 0.01 && secs < 30.0,
        detail: format!("plaquette C(64^2) = {c64}, curvature C(201^2) = {:.6} (|dC| = {dev:.2e}), {secs:.1} s on one thread", c201.re),
    }
}

fn c2_local_bound() -> Outcome {
    let grid = scan_geometry(&rm(1.0, 0.0), 0, ORD, 201, 201).unwrap();
    let rep = local_curvature_report(&grid, 1e-9);
    let worst = rep.per_point.iter().map(|p| p.margin).fold(f64::INFINITY, f64::min);
    let ratio = |idx: usize| {
        let p = &rep.per_point[idx];
        if p.lhs > 0.0 { p.rhs / p.lhs } else { f64::INFINITY }
    };
    let edge_max = (0..grid.records.len()).filter(|&i| grid.is_edge(i)).map(ratio).fold(0.0, f64::max);
    let all_max = (0..grid.records.len()).map(ratio).filter(|r| r.is_finite()).fold(0.0, f64::max);
    Outcome {
        passed: worst >= -1e-9 && edge_max >= 1.9,
        detail: format!(
            "worst margin {worst:+.2e} (holds: {}); max rhs/lhs on the BZ edge {edge_max:.6} (target >= 1.9), over the whole BZ {all_max:.6}",
            worst >= -1e-9
        ),
    }
}

fn c3_qgt_inequality() -> Outcome {
    // Two bands saturate the inequality without the norm factor (ratio exactly 1),
    // so the necessity control needs a model with more bands.
    let rm_grid = scan_geometry(&rm(1.0, 0.0), 0, ORD, 101, 101).unwrap();
    let three = ThreeBand { params: ThreeBandParams::default() };
    let mut grids = vec![("RM", rm_grid)];
    for band in 0..3 {
        grids.push(("three-band", scan_geometry(&three, band, ORD, 41, 41).unwrap()));
    }
    let (mut checks, mut worst, mut rm_failing, mut failing) = (0, f64::INFINITY, 0, 0);
    for (name, grid) in &grids {
        let rep = qgt_inequality_report(grid, false, 0.0);
        checks += rep.per_point.len();
        worst = worst.min(rep.per_point.iter().map(|p| p.margin).fold(f64::INFINITY, f64::min));
        let n = qgt_inequality_report(grid, true, 1e-9).violations().count();
        if *name == "RM" {
            rm_failing = n;
        }
        failing += n;
    }
    Outcome {
        passed: worst >= -1e-10 && failing >= 1,
        detail: format!(
            "{checks} (k, mu, nu) checks on RM 101^2 and three bands at 41^2, worst margin {worst:+.2e}; \
             without the norm factor {failing} violations ({rm_failing} on RM, where the two-band bound is saturated)"
        ),
    }
}

fn c4_psd() -> Outcome {
    let mut worst: f64 = f64::INFINITY;
    for gamma in [0.0, 0.5, 1.0, 1.5] {
        let grid = scan_geometry(&rm(gamma, 0.0), 0, ORD, 64, 64).unwrap();
        for r in &grid.records {
            for q in [&r.qgt_rr, &r.qgt_ll] {
                let tr = q[0][0].re + q[1][1].re;
                let min = hermitian_eigenvalues(q)[0];
                worst = worst.min(min / tr.max(f64::MIN_POSITIVE));
            }
        }
    }
    Outcome { passed: worst >= -1e-12, detail: format!("min eigenvalue / trace over 4 x 64^2 points and both families: {worst:+.3e}") }
}

fn c5_optical_weight() -> Outcome {
    let gammas: Vec<f64> = (0..9).map(|i| 0.25 * i as f64).collect();
    let mut lines = Vec::new();
    let (mut bound_ok, mut methods_ok, mut closed_ok, mut eta_ok, mut log_ok) = (true, true, true, true, true);
    for &g in &gammas {
        let r = weight_row(&rm(1.0, g), g, (64, 64), 1e-3, ORD, Some(None)).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
        bound_ok &= r.margin > 0.0;
        methods_ok &= rel(r.weight_quadrature, r.weight_numeric) < 1e-3;
        closed_ok &= rel(r.weight_closed, r.weight_quadrature) < 1e-3;
        eta_ok &= rel(r.weight_numeric_eta10, r.weight_numeric) < 1e-4;
        log_ok &= r.ln_eta_coefficient.abs() < 1e-6;
        lines.push(format!("G={g:.2}: W/2pi={:+.4} rhs={:.4}", r.weight_numeric / (2.0 * PI), r.bound_rhs));
    }
    Outcome {
        passed: bound_ok && methods_ok && closed_ok && eta_ok && log_ok,
        detail: format!(
            "bound margin > 0 for all Gamma: {bound_ok}; per-k closed form vs omega quadrature: {methods_ok}; two-band trace formula vs quadrature: {closed_ok}; eta -> 10 eta: {eta_ok}; ln eta coefficient: {log_ok} [{}]",
            lines.join("; ")
        ),
    }
}

/// Independent Hermitian Kubo formula for one occupied band.
fn kubo(model: &dyn BlochModel, k: KPoint, energy_n: f64, omegas: &[f64]) -> (Vec<Tensor2>, f64) {
    let h = model.hamiltonian(k).unwrap();
    let eig = SymmetricEigen::new(h.clone());
    let n = (0..2).min_by(|&a, &b| (eig.eigenvalues[a] - energy_n).abs().total_cmp(&(eig.eigenvalues[b] - energy_n).abs())).unwrap();
    let m = 1 - n;
    let dh = derivatives(model, k).unwrap();
    let u = &eig.eigenvectors;
    let v = |mu: usize, a: usize, b: usize| u.column(a).dotc(&(&dh[mu] * u.column(b)));
    let delta = eig.eigenvalues[m] - eig.eigenvalues[n];
    let sig = omegas
        .iter()
        .map(|&w| {
            let mut s = [[Complex64::new(0.0, 0.0); 2]; 2];
            for mu in 0..2 {
                for nu in 0..2 {
                    let a = v(mu, n, m) * v(nu, m, n);
                    let b = v(nu, n, m) * v(mu, m, n);
                    s[mu][nu] = Complex64::new(0.0, 1.0 / delta) * (b / (delta + w) - a / (delta - w));
                }
            }
            s
        })
        .collect();
    let weight = PI * (0..2).map(|mu| v(mu, n, m).norm_sqr()).sum::<f64>() / (delta * delta);
    (sig, weight)
}

fn c6_hermitian_limit() -> Outcome {
    let m = rm(0.0, 0.0);
    let grid = scan_geometry(&m, 0, ORD, 32, 32).unwrap();
    let mut qgt_dev: f64 = 0.0;
    let mut anom: f64 = 0.0;
    for r in &grid.records {
        for q in [&r.qgt_ll, &r.qgt_lr, &r.qgt_rl] {
            qgt_dev = qgt_dev.max(max_tensor_diff(&r.qgt_rr, q));
        }
        for a in r.anomalous_r.iter().chain(&r.anomalous_l) {
            anom = anom.max(a.norm());
        }
    }
    let w = optical_weight_grid(&m, 32, 32, 1e-3).unwrap();
    let omegas = [0.05, 0.4, 1.1, 5.0];
    let mut kubo_dev: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..25 {
        let k = KPoint::new(rng.random_range(-PI..PI), rng.random_range(-PI..PI));
        let c = optical_coefficients(&m, k, 0, BandOrdering::SlowestDecaying, AMPLITUDE_FD_STEP).unwrap();
        let (sig, wk) = kubo(&m, k, c.energies[c.band].re, &omegas);
        for (i, &om) in omegas.iter().enumerate() {
            let ours = conductivity_regular(&c, om);
            kubo_dev = kubo_dev.max(max_tensor_diff(&ours, &sig[i]) / (1.0 + sig[i][0][0].norm()));
        }
        let (v, _) = optical_weight_numeric(&c, 1e-3).unwrap();
        kubo_dev = kubo_dev.max((v - wk).abs() / wk.abs().max(1.0));
    }
    Outcome {
        passed: qgt_dev < 1e-10 && anom < 1e-12 && w.arg_infimum == 0.0 && kubo_dev < 1e-8,
        detail: format!(
            "max QGT spread {qgt_dev:.2e}, max |Q^R|,|Q^L| {anom:.2e}, arg infimum {}, conductivity and weight vs Kubo {kubo_dev:.2e}",
            w.arg_infimum
        ),
    }
}

fn fd_error(model: &dyn BlochModel, k: KPoint, band: usize, h: f64) -> f64 {
    let rec = geometry_record(model, k, band, ORD).unwrap();
    let fd = finite_difference_qgt(model, k, band, ORD, h).unwrap();
    let mut err = max_tensor_diff(&rec.qgt_lr, &fd.qgt_lr)
        .max(max_tensor_diff(&rec.qgt_rl, &fd.qgt_rl))
        .max(max_tensor_diff(&rec.qgt_rr, &fd.qgt_rr))
        .max(max_tensor_diff(&rec.qgt_ll, &fd.qgt_ll));
    for mu in 0..2 {
        err = err.max((rec.anomalous_r[mu] - fd.anomalous_r[mu]).norm()).max((rec.anomalous_l[mu] - fd.anomalous_l[mu]).norm());
    }
    err
}

fn c7_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rice = rm(1.0, 0.0);
    let three = ThreeBand { params: ThreeBandParams::default() };
    let mut worst: f64 = 0.0;
    let mut ratios = Vec::new();
    for i in 0..25 {
        let k = KPoint::new(rng.random_range(-PI..PI), rng.random_range(-PI..PI));
        let (model, band): (&dyn BlochModel, usize) = if i % 2 == 0 { (&rice, 0) } else { (&three, i % 3) };
        worst = worst.max(fd_error(model, k, band, 1e-4));
        if i < 5 {
            ratios.push(fd_error(model, k, band, 2e-2) / fd_error(model, k, band, 1e-2));
        }
    }
    let scaling = ratios.iter().all(|r| (3.5..4.5).contains(r));
    Outcome {
        passed: worst < 1e-6 && scaling,
        detail: format!(
            "max deviation at h = 1e-4 over 25 k-points (RM and three-band): {worst:.2e}; error ratio under h -> h/2: [{}]",
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn record_diff(a: &GeometryRecord, b: &GeometryRecord) -> f64 {
    let scale = 1.0 + a.qgt_rr[0][0].norm() + a.qgt_rr[1][1].norm() + a.norm_product;
    let mut d = [(&a.qgt_rr, &b.qgt_rr), (&a.qgt_ll, &b.qgt_ll), (&a.qgt_lr, &b.qgt_lr), (&a.qgt_rl, &b.qgt_rl)]
        .iter()
        .map(|(x, y)| max_tensor_diff(x, y))
        .fold(0.0, f64::max);
    for mu in 0..2 {
        d = d.max((a.anomalous_r[mu] - b.anomalous_r[mu]).norm()).max((a.anomalous_l[mu] - b.anomalous_l[mu]).norm());
    }
    d = d.max((a.curvature - b.curvature).norm()).max((a.norm_product - b.norm_product).abs());
    d / scale
}

fn c8_gauge() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let models: [(Box<dyn BlochModel>, usize); 2] =
        [(Box::new(rm(1.0, 0.5)), 0), (Box::new(ThreeBand { params: ThreeBandParams::default() }), 1)];
    let n = 24;
    let mut worst: f64 = 0.0;
    for trial in 0..10 {
        let (model, band) = &models[trial % 2];
        let dim = model.dim();
        // c_b(k) = exp(a cos(kx + p) + b sin(ky + q) + i (s sin(kx + ky + r) + t))
        let coeffs: Vec<[f64; 7]> = (0..dim).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
        let gauge = |k: KPoint| -> Vec<Complex64> {
            coeffs
                .iter()
                .map(|c| {
                    let re = c[0] * (k.kx + 3.0 * c[1]).cos() + c[2] * (k.ky + 3.0 * c[3]).sin();
                    let im = 3.0 * c[4] * (k.kx + k.ky + 3.0 * c[5]).sin() + 3.0 * c[6];
                    Complex64::new(re, im).exp()
                })
                .collect()
        };
        let mut vecs = Vec::with_capacity(n * n);
        for idx in 0..n * n {
            let k = nhgeo::models::mesh_point(idx / n, idx % n, n, n);
            let es = eigensystem(&model.hamiltonian(k).unwrap(), ORD).unwrap();
            let dh = derivatives(model.as_ref(), k).unwrap();
            let base = record_from_eigensystem(&es, &dh, *band, k).unwrap();
            let moved = es.rescaled(&gauge(k));
            let again = record_from_eigensystem(&moved, &dh, *band, k).unwrap();
            worst = worst.max(record_diff(&base, &again));
            vecs.push((moved.r(*band), moved.l(*band)));
        }
        let reference = plaquette_phase_sum(model.as_ref(), *band, ORD, n, n, LinkKind::LeftRight).unwrap();
        let moved = plaquette_sum_from_vectors(&vecs, n, n, LinkKind::LeftRight).unwrap();
        worst = worst.max((moved - reference).abs() / reference.abs().max(1.0));
    }
    Outcome { passed: worst < 1e-10, detail: format!("10 smooth rescalings on 24^2 meshes: max relative change {worst:.2e}") }
}

fn c9_divergence() -> Outcome {
    let m = rm(1.0, 0.0);
    let vals: Vec<f64> = [64, 128, 256].iter().map(|&n| divergence_integral(&m, 0, ORD, n, 1e-3).unwrap().norm()).collect();
    let monotone = vals.windows(2).all(|w| w[1] < w[0]);
    Outcome {
        passed: monotone && vals[2] < 1e-3,
        detail: format!(
            "|sum of div Q^R| at 64^2, 128^2, 256^2: {:.3e}, {:.3e}, {:.3e} (monotone: {monotone}; all at the rounding floor)",
            vals[0], vals[1], vals[2]
        ),
    }
}

fn c10_lindblad() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut r = || rng.random_range(-2.0..2.0);
        let d = CMat::identity(2, 2) * Complex64::new(r(), 0.0) + d_dot_sigma(&[Complex64::new(r(), 0.0), Complex64::new(r(), 0.0), Complex64::new(r(), 0.0)]);
        let spec = decompose_antihermitian(&d).unwrap();
        let eff = effective_hamiltonian(&CMat::zeros(2, 2), &spec) - CMat::identity(2, 2) * spec.regularizer;
        let target = &d * Complex64::new(0.0, -1.0);
        worst = worst.max((eff - target).iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    let gamma: f64 = 1.0;
    let target = d_dot_sigma(&[Complex64::new(0.4, 0.0), Complex64::new(-0.2, gamma / 2.0), Complex64::new(0.9, 0.0)]);
    let (_, d) = split_hamiltonian(&target);
    let spec = decompose_antihermitian(&d).unwrap();
    let single = spec.jumps.len() == 1
        && (spec.jumps[0][0] - Complex64::new(gamma.sqrt(), 0.0)).norm() < 1e-12
        && (spec.jumps[0][1] - Complex64::new(0.0, gamma.sqrt())).norm() < 1e-12;
    let ks = KeldyshSet::from_target(&target, false);
    let sk_dev = (&ks.sigma_k - pauli_y() * Complex64::new(0.0, gamma)).iter().map(|z| z.norm()).fold(0.0, f64::max);
    Outcome {
        passed: worst < 1e-12 && single && sk_dev < 1e-12,
        detail: format!("100 random targets: max residual {worst:.2e}; RM single jump (sqrt g, i sqrt g): {single}; |Sigma^K - i g sigma^y| = {sk_dev:.1e}"),
    }
}

fn commuting(rates: [f64; 2]) -> (CommutingSystem, [CMat; 2]) {
    let th: f64 = 0.61;
    let i = Complex64::new(0.0, 1.0);
    let u = CMat::from_row_slice(2, 2, &[Complex64::new(th.cos(), 0.0), -i * th.sin(), -i * th.sin(), Complex64::new(th.cos(), 0.0)]);
    let z = Complex64::new(0.0, 0.0);
    let d = CMat::from_row_slice(2, 2, &[Complex64::new(0.9, -rates[0]), z, z, Complex64::new(-0.7, -rates[1])]);
    let h = &u * d * u.adjoint();
    let ops = [pauli_x(), pauli_z() * Complex64::new(0.6, 0.0) + pauli_y() * Complex64::new(0.3, 0.0)];
    (CommutingSystem::new(&h).unwrap(), ops)
}

fn c11_bubble() -> Outcome {
    let omegas: Vec<f64> = (0..50).map(|i| -3.0 + 6.0 * i as f64 / 49.0).collect();
    let (sys, ops) = commuting([0.2, 0.35]);
    let mut rel: f64 = 0.0;
    for &w in &omegas {
        for upper in [true, false] {
            let a = polarization_bubble_commuting(&sys, &ops, w, upper);
            let q = polarization_bubble_quadrature(&sys, &ops, w, upper);
            let scale = (0..4).map(|c| a[c / 2][c % 2].norm()).fold(0.0, f64::max);
            rel = rel.max(max_tensor_diff(&a, &q) / scale);
        }
        for (en, em) in [(sys.energies[0], sys.energies[1]), (sys.energies[1], sys.energies[0])] {
            for side in [BubbleSide::A, BubbleSide::R] {
                let k = Complex64::new(0.0, 2.0 * em.im);
                let h = bubble_h(en, em, k, w, side).unwrap();
                let q = bubble_h_quadrature(en, em, k, w, side).unwrap().value;
                rel = rel.max((h - q).norm() / h.norm());
            }
        }
    }
    let psd = nhgeo::bounds::check_absorptive_psd(&commuting_absorptive_spectrum(&sys, &ops, &omegas));
    let (gain, gops) = commuting([0.2, -0.5]);
    let flipped = nhgeo::bounds::check_absorptive_psd(&commuting_absorptive_spectrum(&gain, &gops, &omegas));
    let negatives = flipped.violations().count();
    Outcome {
        passed: rel < 1e-6 && psd.passed && negatives >= 1,
        detail: format!(
            "closed form vs quadrature over 50 omegas: {rel:.2e}; absorptive PSD worst eigenvalue {:+.3e}; gain-flipped: {negatives} samples with a negative eigenvalue",
            psd.worst_margin
        ),
    }
}

fn c12_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for threads in [1, 4, 8] {
        let mut cfg = RunConfig { grid: GridSpec { nx: 64, ny: 64 }, ..RunConfig::default() };
        cfg.execution.threads = threads;
        cfg.execution.out = dir.path().join(format!("t{threads}"));
        execute(Command::Scan, &cfg, &mut std::io::sink()).unwrap();
        let read = |name: &str| std::fs::read(cfg.execution.out.join(name)).unwrap();
        outputs.push((read("geometry.csv"), read("geometry.json")));
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    Outcome {
        passed: same,
        detail: format!("geometry.csv ({} bytes) and geometry.json identical for 1, 4, 8 threads: {same}", outputs[0].0.len()),
    }
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        (1, "Chern quantization", c1_chern),
        (2, "local curvature bound", c2_local_bound),
        (3, "QGT inequality", c3_qgt_inequality),
        (4, "RR/LL positivity", c4_psd),
        (5, "optical-weight bound", c5_optical_weight),
        (6, "Hermitian limit", c6_hermitian_limit),
        (7, "finite-difference oracle", c7_oracle),
        (8, "gauge invariance", c8_gauge),
        (9, "divergence lemma", c9_divergence),
        (10, "Lindblad roundtrip", c10_lindblad),
        (11, "bubble equivalence", c11_bubble),
        (12, "determinism", c12_determinism),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut out = std::io::stdout().lock();
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let o = run();
        let status = if o.passed { "PASS" } else { "FAIL" };
        writeln!(out, "{status} [{id:>2}] {name}: {}", o.detail).unwrap();
        if o.passed == EXPECTED_FAIL.contains(&id) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        writeln!(out, "criteria with a status different from the recorded expectation: {unexpected:?}").unwrap();
        std::process::exit(1);
    }
}
