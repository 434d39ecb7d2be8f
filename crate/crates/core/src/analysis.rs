//! Error norms, convergence orders and diagnostics of the augmented form.

use faer::Side;
use rayon::prelude::*;

use crate::assembly::assemble_consistency;
use crate::divfix::SmootherRep;
use crate::error::{Result, StokesError};
use crate::mesh::Point;
use crate::quadrature::{make_rule, CellRule};
use crate::spaces::FeFunction;
use crate::sparse::{norm, CsrMatrix};

/// Exactness degree of the rules used for error norms.
pub const ERROR_DEGREE: usize = 8;

fn cellwise_sum(u_h: &FeFunction, degree: usize, f: impl Fn(usize, Point, Point) -> f64 + Sync) -> f64 {
    let rule = make_rule(degree).expect("supported error rule degree");
    let mesh = u_h.space().mesh();
    (0..mesh.n_cells())
        .into_par_iter()
        .map(|t| {
            let map = mesh.cell_map(t);
            let area = 0.5 * map.det().abs();
            (0..rule.points.len())
                .map(|q| {
                    let xi = rule.reference_point(q);
                    area * rule.weights[q] * f(t, xi, map.map(xi))
                })
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

/// `‖∇u - ∇u_h‖_{L^2}` with a degree-8 rule on every cell.
pub fn h1_error(u_h: &FeFunction, grad_u: &(dyn Fn(Point) -> [[f64; 2]; 2] + Sync)) -> f64 {
    h1_error_with_degree(u_h, grad_u, ERROR_DEGREE)
}

pub fn h1_error_with_degree(u_h: &FeFunction, grad_u: &(dyn Fn(Point) -> [[f64; 2]; 2] + Sync), degree: usize) -> f64 {
    cellwise_sum(u_h, degree, |t, xi, x| {
        let gh = u_h.gradient(t, xi);
        let g = grad_u(x);
        (0..2).flat_map(|c| (0..2).map(move |d| (c, d))).map(|(c, d)| (g[c][d] - gh[c][d]).powi(2)).sum()
    })
    .sqrt()
}

/// `‖p - p_h‖_{L^2}` for a scalar discrete function.
pub fn l2_error(p_h: &FeFunction, p: &(dyn Fn(Point) -> f64 + Sync)) -> f64 {
    cellwise_sum(p_h, ERROR_DEGREE, |t, xi, x| (p(x) - p_h.value(t, xi)[0]).powi(2)).sqrt()
}

/// Experimental order of convergence between successive levels with four times as many cells.
pub fn eoc(e_prev: f64, e_next: f64) -> Result<f64> {
    if !(e_prev > 0.0 && e_next > 0.0) {
        return Err(StokesError::NonPositiveError(e_prev, e_next));
    }
    Ok((e_prev / e_next).ln() / 4f64.ln())
}

/// `‖div E_h u_h‖_{L^2}`, exact up to roundoff via composite quadrature.
pub fn kernel_defect(smoother: &SmootherRep, u_h: &FeFunction) -> f64 {
    let field = smoother.apply(u_h);
    let mesh = smoother.velocity().mesh();
    let points = CellRule::composite(2 * smoother.degree() - 2).expect("supported degree").reference_points();
    (0..mesh.n_cells())
        .into_par_iter()
        .map(|t| mesh.cell_area(t) * points.iter().map(|q| q.weight * field.divergence(t, q.xi).powi(2)).sum::<f64>())
        .collect::<Vec<_>>()
        .iter()
        .sum::<f64>()
        .sqrt()
}

/// Consistency defect of the augmented form on a discretely divergence-free `z_h`:
///
/// `sup_v |∫ ∇z_h : ∇E_h v - a(z_h, v)| / ‖∇v‖`
///
/// taken over the whole discrete velocity space, i.e. the dual norm of the
/// residual functional with respect to the Dirichlet form `a_std`.
pub fn consistency_probe(
    smoother: &SmootherRep,
    a_std: &CsrMatrix,
    b: &CsrMatrix,
    eta: f64,
    z_h: &FeFunction,
) -> Result<f64> {
    let z = &z_h.coeffs;
    let defect = norm(&b.matvec(z));
    let scale = b.max_abs() * norm(z).max(f64::MIN_POSITIVE);
    if defect > 1e-8 * scale {
        return Err(StokesError::NotInKernel { residual: defect });
    }
    let k = assemble_consistency(smoother, eta)?;
    let r = k.matvec(z);
    if r.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let llt = a_std
        .to_faer()?
        .sp_cholesky(Side::Lower)
        .map_err(|e| StokesError::Factorization(format!("sparse Cholesky: {e:?}")))?;
    use faer::linalg::solvers::Solve;
    let rhs = faer::Mat::from_fn(r.len(), 1, |i, _| r[i]);
    let y = llt.solve(&rhs);
    let value: f64 = (0..r.len()).map(|i| r[i] * y[(i, 0)]).sum();
    Ok(value.max(0.0).sqrt())
}
