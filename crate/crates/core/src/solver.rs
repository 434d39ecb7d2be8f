//! Solvers for the zero-mean constrained saddle-point system, and dense
//! spectral probes (inf-sup constant, generalized eigenvalues) for small meshes.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::{Mat, Side};

use crate::assembly::{assemble_mass, assemble_standard, SaddleSystem};
use crate::error::{Result, StokesError};
use crate::spaces::{FeFunction, FeSpace};
use crate::sparse::{dot, norm, CsrMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    /// Sparse LU of the block system with one pressure unknown pinned.
    Direct,
    /// Preconditioned CG on the pressure Schur complement.
    Schur,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Direct => "direct",
            SolverKind::Schur => "schur",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = StokesError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(SolverKind::Direct),
            "schur" => Ok(SolverKind::Schur),
            other => Err(StokesError::InvalidConfig(format!("unknown solver `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub kind: SolverKind,
    /// Relative residual tolerance of the iterative path.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { kind: SolverKind::Direct, tol: 1e-10, max_iterations: 2000 }
    }
}

#[derive(Clone, Debug)]
pub struct StokesSolution {
    pub u: FeFunction,
    pub p: FeFunction,
    pub multiplier: f64,
    /// `‖rhs - K x‖` of the full block system.
    pub residual_norm: f64,
    pub iterations: usize,
}

pub fn solve(system: &SaddleSystem, options: &SolverOptions) -> Result<StokesSolution> {
    let (x, iterations) = match options.kind {
        SolverKind::Direct => (solve_direct(system)?, 1),
        SolverKind::Schur => solve_schur(system, options)?,
    };
    let rhs = system.rhs();
    let residual_norm = norm(&sub(&rhs, &system.apply(&x)));
    let (nu, np) = (system.n_velocity(), system.n_pressure());
    let u = FeFunction::new(system.velocity.clone(), x[..nu].to_vec());
    let p = FeFunction::new(system.pressure.clone(), x[nu..nu + np].to_vec());
    Ok(StokesSolution { u, p, multiplier: x[nu + np], residual_norm, iterations })
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn column(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

fn to_vec(m: &Mat<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

fn factor_lu(m: &CsrMatrix) -> Result<Lu<usize, f64>> {
    m.to_faer()?.sp_lu().map_err(|e| StokesError::Factorization(format!("sparse LU: {e:?}")))
}

fn factor_llt(m: &CsrMatrix) -> Result<Llt<usize, f64>> {
    m.to_faer()?.sp_cholesky(Side::Lower).map_err(|e| StokesError::Factorization(format!("sparse Cholesky: {e:?}")))
}

/// Sparse LU plus two steps of iterative refinement.
///
/// The dense mean row would destroy the fill-reducing ordering, so the
/// multiplier is fixed by compatibility (`1^T B = 0`), the first pressure
/// unknown is pinned, and the pressure is shifted to zero mean afterwards.
fn solve_direct(system: &SaddleSystem) -> Result<Vec<f64>> {
    let (nu, np) = (system.n_velocity(), system.n_pressure());
    let m = &system.mean;
    let total: f64 = m.iter().sum();
    let lambda = -system.g.iter().sum::<f64>() / total;
    let n = nu + np - 1;
    let mut t: Vec<_> = system.a.triplets().collect();
    for (r, c, v) in system.b.triplets().filter(|(r, _, _)| *r > 0) {
        t.push((nu + r - 1, c, v));
        t.push((c, nu + r - 1, v));
    }
    let k = CsrMatrix::from_triplets(n, n, &t);
    let mut rhs = system.f.clone();
    rhs.extend((1..np).map(|i| -system.g[i] - m[i] * lambda));
    let lu = factor_lu(&k)?;
    let mut x = to_vec(&lu.solve(column(&rhs)));
    for _ in 0..2 {
        let r = sub(&rhs, &k.matvec(&x));
        let dx = to_vec(&lu.solve(column(&r)));
        x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StokesError::Factorization("direct solve produced non-finite values".into()));
    }
    let mut p = vec![0.0];
    p.extend_from_slice(&x[nu..]);
    let mean = dot(m, &p) / total;
    x.truncate(nu);
    x.extend(p.iter().map(|v| v - mean));
    x.push(lambda);
    Ok(x)
}

/// CG on `S p = B A^{-1} F + G + m λ` with the pressure mass matrix as preconditioner.
///
/// `S = B A^{-1} B^T` is singular with the constants as kernel; the multiplier
/// is fixed by compatibility and iterates are kept mean-free.
fn solve_schur(system: &SaddleSystem, options: &SolverOptions) -> Result<(Vec<f64>, usize)> {
    let a = factor_llt(&system.a)?;
    let mass = assemble_mass(&system.pressure);
    let mass_llt = factor_llt(&mass)?;
    let a_inv = |v: &[f64]| to_vec(&a.solve(column(v)));
    let precond = |v: &[f64]| to_vec(&mass_llt.solve(column(v)));
    let m = &system.mean;
    let ones = vec![1.0; m.len()];
    let total = dot(&ones, m);
    // the constant pressure mode is orthogonal to range(B) in the Euclidean pairing
    let lambda = -dot(&ones, &system.g) / total;
    let project = |p: &mut Vec<f64>| {
        let mean = dot(m, p) / total;
        p.iter_mut().for_each(|x| *x -= mean);
    };
    let schur = |p: &[f64]| system.b.matvec(&a_inv(&system.b.matvec_transpose(p)));

    let a_inv_f = a_inv(&system.f);
    let mut rhs = system.b.matvec(&a_inv_f);
    for ((r, g), w) in rhs.iter_mut().zip(&system.g).zip(m) {
        *r += g + w * lambda;
    }
    let rhs_norm = norm(&rhs);
    let mut p = vec![0.0; rhs.len()];
    let mut iterations = 0;
    if rhs_norm > 0.0 {
        let mut r = rhs.clone();
        let mut z = precond(&r);
        project(&mut z);
        let mut d = z.clone();
        let mut rz = dot(&r, &z);
        let mut history = Vec::new();
        loop {
            let rn = norm(&r) / rhs_norm;
            history.push(rn);
            if rn <= options.tol {
                break;
            }
            if iterations >= options.max_iterations {
                let tail = history.split_off(history.len().saturating_sub(10));
                return Err(StokesError::NotConverged { iterations, history: tail });
            }
            let sd = schur(&d);
            let alpha = rz / dot(&d, &sd);
            p.iter_mut().zip(&d).for_each(|(x, y)| *x += alpha * y);
            r.iter_mut().zip(&sd).for_each(|(x, y)| *x -= alpha * y);
            z = precond(&r);
            project(&mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            d.iter_mut().zip(&z).for_each(|(x, y)| *x = y + beta * *x);
            iterations += 1;
        }
    }
    project(&mut p);
    let bt_p = system.b.matvec_transpose(&p);
    let u = a_inv(&sub(&system.f, &bt_p));
    Ok((u.into_iter().chain(p).chain(std::iter::once(lambda)).collect(), iterations))
}

/// Eigenvalues of the pencil `(a, m)` for symmetric `a` and symmetric positive definite `m`, ascending.
/// Also returns the eigenvectors in the `m^{1/2}`-transformed coordinates.
pub fn generalized_eigen(a: &Mat<f64>, m: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>, Mat<f64>)> {
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|e| StokesError::Factorization(format!("{e:?}")))?;
    let q = evd.U();
    let s = evd.S().column_vector();
    let n = m.nrows();
    if (0..n).any(|i| s[i] <= 0.0) {
        return Err(StokesError::Factorization("pencil matrix is not positive definite".into()));
    }
    let half_inv = Mat::from_fn(n, n, |i, j| (0..n).map(|k| q[(i, k)] * q[(j, k)] / s[k].sqrt()).sum::<f64>());
    let half = Mat::from_fn(n, n, |i, j| (0..n).map(|k| q[(i, k)] * q[(j, k)] * s[k].sqrt()).sum::<f64>());
    let t = &half_inv * a * &half_inv;
    let sym = Mat::from_fn(n, n, |i, j| 0.5 * (t[(i, j)] + t[(j, i)]));
    let e = sym.self_adjoint_eigen(Side::Lower).map_err(|e| StokesError::Factorization(format!("{e:?}")))?;
    let values = (0..n).map(|i| e.S().column_vector()[i]).collect();
    Ok((values, e.U().to_owned(), half))
}

/// Discrete inf-sup constant `β_h` of a velocity/pressure pair with the Dirichlet form.
///
/// `β_h^2` is the smallest eigenvalue of `B A^{-1} B^T` relative to the
/// pressure mass matrix on mean-free pressures. Dense; meant for small meshes.
pub fn infsup_probe(velocity: &FeSpace, pressure: &FeSpace) -> Result<f64> {
    let a = assemble_standard(velocity);
    let b = crate::assembly::assemble_divergence(velocity, pressure);
    let llt = factor_llt(&a)?;
    let bt = b.transpose().to_dense();
    let y = llt.solve(&bt);
    let s = b.to_dense() * &y;
    let m = assemble_mass(pressure).to_dense();
    let (values, vectors, half) = generalized_eigen(&s, &m)?;
    // drop the eigenvector closest to the constant mode
    let n = m.nrows();
    let c: Vec<f64> = (0..n).map(|i| (0..n).map(|j| half[(i, j)]).sum()).collect();
    let cn = norm(&c);
    let constant = (0..n)
        .max_by(|&i, &j| {
            let ai = (0..n).map(|k| vectors[(k, i)] * c[k]).sum::<f64>().abs();
            let aj = (0..n).map(|k| vectors[(k, j)] * c[k]).sum::<f64>().abs();
            ai.total_cmp(&aj)
        })
        .unwrap();
    let alignment = (0..n).map(|k| vectors[(k, constant)] * c[k]).sum::<f64>().abs() / cn;
    debug_assert!(alignment > 0.99, "constant mode not isolated: {alignment}");
    let min = values.iter().enumerate().filter(|(i, _)| *i != constant).map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
    Ok(min.max(0.0).sqrt())
}
