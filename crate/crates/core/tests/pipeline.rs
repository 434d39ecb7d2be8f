//! End-to-end behaviour of the experiment pipeline on small meshes.

use stokes_qopr::analysis::{consistency_probe, eoc, h1_error_with_degree, ERROR_DEGREE};
use stokes_qopr::experiments::{
    locking_diagnostic, manufactured, run, run_level, Discretization, ErrorReport, ExperimentName, ExperimentSpec,
    LevelCache,
};
use stokes_qopr::solver::SolverKind;
use stokes_qopr::spaces::FeFunction;
use stokes_qopr::sparse::norm;
use stokes_qopr::{MeshFamily, StokesError};

fn strip_timing(report: &ErrorReport) -> Vec<String> {
    report.to_csv().lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
}

#[test]
fn reruns_are_bit_identical() {
    for name in ExperimentName::ALL {
        let spec = ExperimentSpec::new(name).levels(0, 3);
        assert_eq!(strip_timing(&run(&spec).unwrap()), strip_timing(&run(&spec).unwrap()), "{name:?}");
    }
}

#[test]
fn direct_and_schur_paths_agree() {
    let mut cache = LevelCache::new();
    for family in [MeshFamily::Crisscross, MeshFamily::Diagonal] {
        let level = cache.get(family, 3).unwrap();
        for disc in [Discretization::New, Discretization::Standard] {
            let mut spec = ExperimentSpec::new(ExperimentName::Locking).family(family).eta(8.0);
            if disc == Discretization::Standard {
                spec = ExperimentSpec::new(ExperimentName::Inhomogeneous).disc(disc);
                if family == MeshFamily::Diagonal {
                    continue;
                }
            }
            let (direct, _) = run_level(&level, &spec).unwrap();
            spec.solver.kind = SolverKind::Schur;
            spec.solver.tol = 1e-12;
            let (schur, _) = run_level(&level, &spec).unwrap();
            let du: Vec<f64> = direct.u.coeffs.iter().zip(&schur.u.coeffs).map(|(a, b)| a - b).collect();
            let dp: Vec<f64> = direct.p.coeffs.iter().zip(&schur.p.coeffs).map(|(a, b)| a - b).collect();
            assert!(norm(&du) <= 1e-9 * norm(&direct.u.coeffs), "{family:?} {disc:?}");
            assert!(norm(&dp) <= 1e-9 * norm(&direct.p.coeffs), "{family:?} {disc:?}");
            assert!((direct.multiplier - schur.multiplier).abs() <= 1e-10);
            assert!(direct.residual_norm <= 1e-10 && schur.residual_norm <= 1e-8);
            assert!(schur.iterations > 1);
        }
    }
}

#[test]
fn error_rule_degree_is_sufficient() {
    let mut cache = LevelCache::new();
    let level = cache.get(MeshFamily::Crisscross, 3).unwrap();
    let spec = ExperimentSpec::new(ExperimentName::Smooth);
    let (sol, row) = run_level(&level, &spec).unwrap();
    let exact = manufactured(ExperimentName::Smooth, 1.0).exact.unwrap();
    let fine = h1_error_with_degree(&sol.u, exact.grad_u.as_ref(), 10);
    assert_eq!(row.h1_u, h1_error_with_degree(&sol.u, exact.grad_u.as_ref(), ERROR_DEGREE));
    assert!((row.h1_u - fine).abs() <= 1e-8 * fine, "{} vs {fine}", row.h1_u);
}

#[test]
fn new_method_errors_decrease_monotonically() {
    let report = run(&ExperimentSpec::new(ExperimentName::Smooth).levels(2, 6)).unwrap();
    for w in report.rows.windows(2) {
        assert!(w[1].h1_u <= w[0].h1_u && w[1].l2_p <= w[0].l2_p);
    }
    let last = report.rows.last().unwrap();
    assert_eq!(last.cells, 4 * 4usize.pow(6));
    assert_eq!(last.dofs_p, last.cells - 1);
}

#[test]
fn standard_method_is_worse_on_smooth_problem() {
    let new = run(&ExperimentSpec::new(ExperimentName::Smooth).levels(2, 2)).unwrap();
    let std = run(&ExperimentSpec::new(ExperimentName::Smooth).disc(Discretization::Standard).levels(2, 2)).unwrap();
    assert!(std.rows[0].l2_p > 0.0);
    assert!(std.rows[0].h1_u > new.rows[0].h1_u);
    assert!(std.rows[0].eta.is_none() && new.rows[0].eta == Some(2.0));
}

#[test]
fn composite_results_do_not_see_the_pressure_amplitude() {
    // on coarser meshes the degree-6 rule error of the pressure gradient is still visible
    let base = ExperimentSpec::new(ExperimentName::Quadrature).levels(3, 4);
    let a = run(&base.clone().alpha(1.0)).unwrap();
    let b = run(&base.alpha(1e3)).unwrap();
    for (x, y) in a.h1().iter().zip(b.h1()) {
        assert!((x - y).abs() <= 1e-6 * x);
    }
    for (x, y) in a.l2().iter().zip(b.l2()) {
        assert!((y / x - 1e3).abs() <= 1e-3 * 1e3);
    }
}

#[test]
fn consistency_probe_behaviour() {
    let mut cache = LevelCache::new();
    let mut probes = Vec::new();
    for n in 2..=4 {
        let level = cache.get(MeshFamily::Crisscross, n).unwrap();
        let (sol, _) = run_level(&level, &ExperimentSpec::new(ExperimentName::Smooth)).unwrap();
        let probe = |eta| consistency_probe(&level.smoother, &level.a_std, &level.b, eta, &sol.u).unwrap();
        let p2 = probe(2.0);
        probes.push(p2);
        // at most linear growth in the penalty
        let (p8, p32) = (probe(8.0), probe(32.0));
        assert!(p8 <= 4.0 * 1.1 * p2 && p32 <= 4.0 * 1.1 * p8, "{p2} {p8} {p32}");
        // zero in, zero out
        let zero = FeFunction::zeros(level.velocity.clone());
        assert_eq!(consistency_probe(&level.smoother, &level.a_std, &level.b, 2.0, &zero).unwrap(), 0.0);
    }
    for w in probes.windows(2) {
        assert!(eoc(w[0], w[1]).unwrap() >= 0.5, "{probes:?}");
    }
    // fields outside the discrete kernel are rejected
    let level = cache.get(MeshFamily::Crisscross, 2).unwrap();
    let v = FeFunction::interpolate(level.velocity.clone(), |x| {
        let b = x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]);
        [b, 0.0]
    });
    assert!(matches!(
        consistency_probe(&level.smoother, &level.a_std, &level.b, 2.0, &v),
        Err(StokesError::NotInKernel { .. })
    ));
}

#[test]
fn locking_table_orders_penalties_on_diagonal_meshes() {
    let mut cache = LevelCache::new();
    let table =
        locking_diagnostic(&[MeshFamily::Diagonal, MeshFamily::Crisscross], 1, 4, &[2.0, 32.0, 512.0], &mut cache)
            .unwrap();
    assert_eq!(table.len(), 6);
    for n in 2..=4 {
        let err =
            |family, eta| table.iter().find(|(f, e, _)| *f == family && *e == eta).unwrap().2.row(n).unwrap().h1_u;
        let d = [err(MeshFamily::Diagonal, 2.0), err(MeshFamily::Diagonal, 32.0), err(MeshFamily::Diagonal, 512.0)];
        assert!(d[0] <= d[1] && d[1] <= d[2], "N={n}: {d:?}");
        let c =
            [err(MeshFamily::Crisscross, 2.0), err(MeshFamily::Crisscross, 32.0), err(MeshFamily::Crisscross, 512.0)];
        let (lo, hi) = (c.iter().cloned().fold(f64::INFINITY, f64::min), c.iter().cloned().fold(0.0, f64::max));
        assert!(hi <= 2.0 * lo, "N={n}: {c:?}");
    }
}

#[test]
fn invalid_specs_fail_before_computing() {
    let spec = ExperimentSpec::new(ExperimentName::Smooth).eta(0.5);
    assert!(matches!(run(&spec), Err(StokesError::InvalidPenalty(_))));
    let spec = ExperimentSpec::new(ExperimentName::Smooth).levels(0, 9);
    assert!(matches!(run(&spec), Err(StokesError::InvalidConfig(_))));
}
