use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use nhgeo::bounds::{check_qgt_inequality, hermitian_eigenvalues};
use nhgeo::config::{parse_grid_spec, GridSpec, RunConfig};
use nhgeo::geometry::{derivatives, geometry_record, record_from_eigensystem, GeometryRecord, Tensor2};
use nhgeo::lindblad::{decompose_antihermitian, effective_hamiltonian, m_matrix};
use nhgeo::models::{BlochModel, CMat, KPoint, ModelSpec, RiceMele, RmParams, ThreeBand, ThreeBandParams};
use nhgeo::spectra::{eigensystem, BandOrdering};

const ORD: BandOrdering = BandOrdering::DescendingReal;

fn rm(gamma: f64, big_gamma: f64) -> RiceMele {
    RiceMele::new(RmParams { gamma, big_gamma, ..RmParams::default() }).unwrap()
}

fn three(t: f64, g: f64, gamma: f64) -> ThreeBand {
    ThreeBand { params: ThreeBandParams { t, g, gamma } }
}

fn k_strategy() -> impl Strategy<Value = KPoint> {
    (-3.1f64..3.1, -3.1f64..3.1).prop_map(|(x, y)| KPoint::new(x, y))
}

fn max_dev(a: &Tensor2, b: &Tensor2) -> f64 {
    (0..4).map(|c| (a[c / 2][c % 2] - b[c / 2][c % 2]).norm()).fold(0.0, f64::max)
}

fn scale(r: &GeometryRecord) -> f64 {
    [&r.qgt_rr, &r.qgt_ll, &r.qgt_lr]
        .iter()
        .flat_map(|q| (0..4).map(move |c| q[c / 2][c % 2].norm()))
        .fold(1e-300, f64::max)
}

/// Records away from exceptional points; skipped cases are rejected.
fn record(model: &dyn BlochModel, k: KPoint, band: usize) -> Result<GeometryRecord, TestCaseError> {
    geometry_record(model, k, band, ORD).map_err(|e| TestCaseError::reject(e.to_string()))
}

fn check_record(r: &GeometryRecord) -> Result<(), TestCaseError> {
    let s = scale(r);
    for mu in 0..2 {
        for nu in 0..2 {
            prop_assert!((r.qgt_rl[mu][nu] - r.qgt_lr[nu][mu].conj()).norm() <= 1e-12 * s);
        }
    }
    for q in [&r.qgt_rr, &r.qgt_ll] {
        let tr = q[0][0].re + q[1][1].re;
        prop_assert!(hermitian_eigenvalues(q)[0] >= -1e-10 * tr.max(1e-300));
        prop_assert!((q[0][1] - q[1][0].conj()).norm() <= 1e-10 * s);
    }
    prop_assert!(r.norm_product >= 1.0 - 1e-12);
    for p in check_qgt_inequality(r, false) {
        prop_assert!(p.lhs <= p.rhs * (1.0 + 1e-9) + 1e-300, "{p:?}");
    }
    prop_assert!(r.curvature.norm() <= (r.qgt_rl[0][1].norm() + r.qgt_rl[1][0].norm()) * (1.0 + 1e-12));
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rice_mele_records_satisfy_invariants(k in k_strategy(), gamma in 0.0f64..1.6, big_gamma in 0.0f64..2.0, band in 0usize..2) {
        let r = record(&rm(gamma, big_gamma), k, band)?;
        check_record(&r)?;
    }

    #[test]
    fn three_band_records_satisfy_invariants(k in k_strategy(), t in 0.3f64..1.0, g in -0.8f64..0.8, gamma in 0.0f64..0.8, band in 0usize..3) {
        let r = record(&three(t, g, gamma), k, band)?;
        check_record(&r)?;
    }

    #[test]
    fn records_ignore_eigenvector_rescaling(k in k_strategy(), mags in prop::collection::vec((0.2f64..5.0, -3.2f64..3.2), 3)) {
        let m = three(0.6, 0.5, 0.4);
        let es = eigensystem(&m.hamiltonian(k).unwrap(), ORD).map_err(|e| TestCaseError::reject(e.to_string()))?;
        let dh = derivatives(&m, k).unwrap();
        let c: Vec<Complex64> = mags.iter().map(|&(r, a)| Complex64::from_polar(r, a)).collect();
        let scaled = es.rescaled(&c);
        for n in 0..3 {
            let a = record_from_eigensystem(&es, &dh, n, k).unwrap();
            let b = record_from_eigensystem(&scaled, &dh, n, k).unwrap();
            let s = scale(&a);
            for (x, y) in [(&a.qgt_rr, &b.qgt_rr), (&a.qgt_ll, &b.qgt_ll), (&a.qgt_lr, &b.qgt_lr), (&a.qgt_rl, &b.qgt_rl)] {
                prop_assert!(max_dev(x, y) <= 1e-10 * s);
            }
            prop_assert!((a.norm_product - b.norm_product).abs() <= 1e-10 * a.norm_product);
        }
    }

    #[test]
    fn jump_decomposition_roundtrip(d0 in -3.0f64..3.0, dx in -3.0f64..3.0, dy in -3.0f64..3.0, dz in -3.0f64..3.0) {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let d = DMatrix::from_row_slice(2, 2, &[c(d0 + dz, 0.0), c(dx, -dy), c(dx, dy), c(d0 - dz, 0.0)]);
        let spec = decompose_antihermitian(&d).unwrap();
        let eff = effective_hamiltonian(&CMat::zeros(2, 2), &spec) - CMat::identity(2, 2) * spec.regularizer;
        let residual = (eff - &d * c(0.0, -1.0)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(residual < 1e-12);
        prop_assert!(spec.jumps.len() <= 4);
    }

    #[test]
    fn m_matrix_is_rank_one_psd(ar in -2.0f64..2.0, ai in -2.0f64..2.0, br in -2.0f64..2.0, bi in -2.0f64..2.0) {
        let m = m_matrix(Complex64::new(ar, ai), Complex64::new(br, bi));
        prop_assert!((&m - m.adjoint()).norm() < 1e-14);
        prop_assert!(m.determinant().norm() < 1e-12);
        prop_assert!(m.trace().re >= 0.0);
    }

    #[test]
    fn grid_spec_roundtrip(nx in 1usize..100_000, ny in 1usize..100_000, upper in any::<bool>()) {
        let sep = if upper { 'X' } else { 'x' };
        prop_assert_eq!(parse_grid_spec(&format!("{nx}{sep}{ny}")).unwrap(), GridSpec { nx, ny });
        prop_assert_eq!(parse_grid_spec(&nx.to_string()).unwrap(), GridSpec { nx, ny: nx });
    }

    #[test]
    fn grid_spec_never_panics(s in ".{0,24}") {
        if let Ok(g) = parse_grid_spec(&s) {
            prop_assert!(g.nx > 0 && g.ny > 0);
        }
    }

    #[test]
    fn config_toml_roundtrip(
        gamma in 0.0f64..2.0,
        big_gamma in 0.0f64..2.0,
        nx in 8usize..512,
        ny in 8usize..512,
        band in 0usize..2,
        eta in 1e-6f64..1e-1,
        sweep in prop::collection::vec(0.0f64..3.0, 0..5),
        three_band in any::<bool>(),
        inverted in any::<bool>(),
    ) {
        let model = if three_band {
            ModelSpec::ThreeBand(ThreeBandParams { t: gamma, g: big_gamma, gamma: eta })
        } else {
            ModelSpec::RiceMele(RmParams { gamma, big_gamma, ..RmParams::default() })
        };
        let mut cfg = RunConfig { model, grid: GridSpec { nx, ny }, band, ..RunConfig::default() };
        cfg.optical.eta = eta;
        cfg.optical.big_gamma_sweep = sweep;
        cfg.bath.inverted = inverted;
        let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
