//! Element kernels and global assembly of the Stokes saddle-point system.
//!
//! Polynomial integrands (stiffness, divergence, mass, correction couplings)
//! use rules of exactly sufficient degree; only load vectors and error norms
//! carry quadrature error. Element matrices depend only on the cell Jacobian
//! and are computed once per shape class.

use std::sync::Arc;

use faer::Mat;
use rayon::prelude::*;

use crate::divfix::{ShapeCorrection, SmootherRep};
use crate::error::{Result, StokesError};
use crate::mesh::{AffineMap, Point};
use crate::quadrature::{make_rule, CellRule, QuadRule, RefPoint};
use crate::spaces::{FeSpace, LagrangeElement, Tabulation};
use crate::sparse::CsrMatrix;

/// Pointwise-evaluable vector field.
pub type VectorField = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;
/// Pointwise-evaluable scalar field.
pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
/// Pointwise-evaluable gradient, `[c][d] = ∂_d u_c`.
pub type GradientField = Arc<dyn Fn(Point) -> [[f64; 2]; 2] + Send + Sync>;

fn rule(degree: usize) -> QuadRule {
    make_rule(degree.max(1)).expect("element kernel degree within supported range")
}

/// Scalar stiffness `∫ ∇φ_i · ∇φ_j` on the image of `map`.
pub fn element_stiffness(el: &LagrangeElement, map: &AffineMap) -> Mat<f64> {
    let r = rule((2 * el.degree()).saturating_sub(2));
    let n = el.n_basis();
    let area = 0.5 * map.det().abs();
    let mut m = Mat::zeros(n, n);
    for q in 0..r.points.len() {
        let g: Vec<[f64; 2]> = el.grads_at(r.reference_point(q)).into_iter().map(|g| map.push_gradient(g)).collect();
        let w = area * r.weights[q];
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += w * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
            }
        }
    }
    m
}

/// Mass matrix `∫ ψ_i ψ_j`.
pub fn element_mass(el: &LagrangeElement, map: &AffineMap) -> Mat<f64> {
    let r = rule(2 * el.degree());
    let n = el.n_basis();
    let area = 0.5 * map.det().abs();
    let mut m = Mat::zeros(n, n);
    for q in 0..r.points.len() {
        let v = el.values_at(r.reference_point(q));
        let w = area * r.weights[q];
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += w * v[i] * v[j];
            }
        }
    }
    m
}

/// `-∫ ψ_k ∂_c φ_j`, rows over the pressure basis, columns `c * n + j` over the vector velocity basis.
pub fn element_divergence(pressure: &LagrangeElement, velocity: &LagrangeElement, map: &AffineMap) -> Mat<f64> {
    let r = rule((pressure.degree() + velocity.degree()).saturating_sub(1));
    let (np, nv) = (pressure.n_basis(), velocity.n_basis());
    let area = 0.5 * map.det().abs();
    let mut m = Mat::zeros(np, 2 * nv);
    for q in 0..r.points.len() {
        let xi = r.reference_point(q);
        let psi = pressure.values_at(xi);
        let g: Vec<[f64; 2]> = velocity.grads_at(xi).into_iter().map(|g| map.push_gradient(g)).collect();
        let w = area * r.weights[q];
        for k in 0..np {
            for c in 0..2 {
                for j in 0..nv {
                    m[(k, c * nv + j)] -= w * psi[k] * g[j][c];
                }
            }
        }
    }
    m
}

/// Block-diagonal vector version of a scalar element matrix.
pub fn vector_block(s: &Mat<f64>) -> Mat<f64> {
    let n = s.nrows();
    Mat::from_fn(2 * n, 2 * n, |i, j| if i / n == j / n { s[(i % n, j % n)] } else { 0.0 })
}

/// Scatters per-cell element matrices into a global sparse matrix. Cells are
/// processed in order, so the result does not depend on thread scheduling.
fn scatter(
    nrows: usize,
    ncols: usize,
    n_cells: usize,
    row_dofs: impl Fn(usize) -> Vec<Option<usize>> + Sync,
    col_dofs: impl Fn(usize) -> Vec<Option<usize>> + Sync,
    mats: &[Mat<f64>],
    class: impl Fn(usize) -> usize + Sync,
) -> CsrMatrix {
    let per_cell: Vec<Vec<(usize, usize, f64)>> = (0..n_cells)
        .into_par_iter()
        .map(|t| {
            let (rd, cd) = (row_dofs(t), col_dofs(t));
            let m = &mats[class(t)];
            let mut out = Vec::with_capacity(rd.len() * cd.len());
            for (a, r) in rd.iter().enumerate() {
                let Some(r) = r else { continue };
                for (b, c) in cd.iter().enumerate() {
                    if let Some(c) = c {
                        out.push((*r, *c, m[(a, b)]));
                    }
                }
            }
            out
        })
        .collect();
    let entries: Vec<_> = per_cell.into_iter().flatten().collect();
    CsrMatrix::from_triplets(nrows, ncols, &entries)
}

/// Element matrices per shape class of the space's mesh.
fn per_class(space: &FeSpace, f: impl Fn(&AffineMap) -> Mat<f64> + Sync) -> (Vec<usize>, Vec<Mat<f64>>) {
    let mesh = space.mesh();
    let (classes, reps) = mesh.shape_classes();
    let mats = reps.par_iter().map(|&t| f(&mesh.cell_map(t))).collect();
    (classes, mats)
}

/// `A_std[i][j] = ∫ ∇φ_i : ∇φ_j` on a vector velocity space.
pub fn assemble_standard(velocity: &FeSpace) -> CsrMatrix {
    let (classes, mats) = per_class(velocity, |m| vector_block(&element_stiffness(velocity.element(), m)));
    let n = velocity.dim();
    scatter(
        n,
        n,
        velocity.mesh().n_cells(),
        |t| velocity.local_dofs(t),
        |t| velocity.local_dofs(t),
        &mats,
        |t| classes[t],
    )
}

/// `B[k][i] = -∫ ψ_k div φ_i`.
pub fn assemble_divergence(velocity: &FeSpace, pressure: &FeSpace) -> CsrMatrix {
    let (classes, mats) = per_class(velocity, |m| element_divergence(pressure.element(), velocity.element(), m));
    scatter(
        pressure.dim(),
        velocity.dim(),
        velocity.mesh().n_cells(),
        |t| pressure.local_dofs(t),
        |t| velocity.local_dofs(t),
        &mats,
        |t| classes[t],
    )
}

/// Pressure mass matrix `∫ ψ_k ψ_l`.
pub fn assemble_mass(space: &FeSpace) -> CsrMatrix {
    let (classes, mats) = per_class(space, |m| element_mass(space.element(), m));
    let n = space.dim();
    scatter(n, n, space.mesh().n_cells(), |t| space.local_dofs(t), |t| space.local_dofs(t), &mats, |t| classes[t])
}

/// Couplings `X[a, s] = ∫_K ∇φ_a : ∇ψ_s` between the element basis and the
/// local Scott–Vogelius velocity basis, exact on every sub-cell.
fn correction_coupling(shape: &ShapeCorrection, el: &LagrangeElement, map: &AffineMap) -> Mat<f64> {
    let sv = &shape.local.space;
    let nloc = el.n_basis();
    let nsv = shape.local.velocity_dim();
    let r = rule(2 * el.degree() - 2);
    let mut x = Mat::zeros(2 * nloc, nsv);
    for k in 0..3 {
        let sub_area = sv.macro_mesh.cell_area(k);
        for q in 0..r.points.len() {
            let sub_xi = r.reference_point(q);
            let xi = sv.sub_ref_map(k).map(sub_xi);
            let g: Vec<[f64; 2]> = el.grads_at(xi).into_iter().map(|g| map.push_gradient(g)).collect();
            let psi = sv.velocity_basis_grads(k, sub_xi, map);
            let w = sub_area * r.weights[q];
            for c in 0..2 {
                for j in 0..nloc {
                    for (s, gs) in psi.iter().enumerate() {
                        x[(c * nloc + j, s)] += w * (g[j][0] * gs[c][0] + g[j][1] * gs[c][1]);
                    }
                }
            }
        }
    }
    x
}

/// Element matrix of the augmented form, `S + X C + (X C)^T + η C^T L C`.
pub fn new_form_element(shape: &ShapeCorrection, el: &LagrangeElement, map: &AffineMap, eta: f64) -> Mat<f64> {
    let s = vector_block(&element_stiffness(el, map));
    let c = &shape.correction;
    let xc = correction_coupling(shape, el, map) * c;
    let ctlc = c.transpose() * &shape.local.stiffness * c;
    let n = s.nrows();
    Mat::from_fn(n, n, |i, j| s[(i, j)] + xc[(i, j)] + xc[(j, i)] + eta * 0.5 * (ctlc[(i, j)] + ctlc[(j, i)]))
}

/// Element matrix of the augmented form in its rewritten shape,
/// `∫ ∇E φ_a : ∇E φ_b + (η - 1) ∫ ∇R φ_a : ∇R φ_b`, evaluated pointwise.
pub fn new_form_element_pointwise(
    shape: &ShapeCorrection,
    el: &LagrangeElement,
    map: &AffineMap,
    eta: f64,
) -> Mat<f64> {
    let sv = &shape.local.space;
    let c = &shape.correction;
    let nloc = el.n_basis();
    let n = 2 * nloc;
    let points = CellRule::composite(2 * el.degree() - 2).expect("supported degree").reference_points();
    let area = 0.5 * map.det().abs();
    let mut m = Mat::zeros(n, n);
    for q in &points {
        let g: Vec<[f64; 2]> = el.grads_at(q.xi).into_iter().map(|g| map.push_gradient(g)).collect();
        let psi = sv.velocity_basis_grads(q.sub, q.sub_xi, map);
        let mut grad_r = vec![[[0.0; 2]; 2]; n];
        let mut grad_e = vec![[[0.0; 2]; 2]; n];
        for a in 0..n {
            for (s, gs) in psi.iter().enumerate() {
                for cc in 0..2 {
                    for d in 0..2 {
                        grad_r[a][cc][d] += c[(s, a)] * gs[cc][d];
                    }
                }
            }
            grad_e[a] = grad_r[a];
            let (comp, j) = (a / nloc, a % nloc);
            grad_e[a][comp][0] += g[j][0];
            grad_e[a][comp][1] += g[j][1];
        }
        let frob = |x: &[[f64; 2]; 2], y: &[[f64; 2]; 2]| {
            x[0][0] * y[0][0] + x[0][1] * y[0][1] + x[1][0] * y[1][0] + x[1][1] * y[1][1]
        };
        let w = area * q.weight;
        for a in 0..n {
            for b in 0..n {
                m[(a, b)] += w * (frob(&grad_e[a], &grad_e[b]) + (eta - 1.0) * frob(&grad_r[a], &grad_r[b]));
            }
        }
    }
    m
}

fn check_eta(eta: f64) -> Result<()> {
    if eta.is_finite() && eta > 1.0 {
        Ok(())
    } else {
        Err(StokesError::InvalidPenalty(eta))
    }
}

fn assemble_new_with(
    smoother: &SmootherRep,
    eta: f64,
    kernel: fn(&ShapeCorrection, &LagrangeElement, &AffineMap, f64) -> Mat<f64>,
) -> Result<CsrMatrix> {
    check_eta(eta)?;
    let velocity = smoother.velocity();
    let mesh = velocity.mesh();
    let mut reps = vec![usize::MAX; smoother.n_shapes()];
    for t in (0..mesh.n_cells()).rev() {
        reps[smoother.shape_of(t)] = t;
    }
    let mats: Vec<Mat<f64>> = reps
        .par_iter()
        .zip(smoother.shapes())
        .map(|(&t, shape)| kernel(shape, velocity.element(), &mesh.cell_map(t), eta))
        .collect();
    let n = velocity.dim();
    Ok(scatter(
        n,
        n,
        mesh.n_cells(),
        |t| velocity.local_dofs(t),
        |t| velocity.local_dofs(t),
        &mats,
        |t| smoother.shape_of(t),
    ))
}

/// Augmented form assembled from the four-term element formula. Rejects `η <= 1`.
pub fn assemble_new(smoother: &SmootherRep, eta: f64) -> Result<CsrMatrix> {
    assemble_new_with(smoother, eta, new_form_element)
}

/// Augmented form assembled pointwise from smoothed and corrected gradients.
pub fn assemble_new_pointwise(smoother: &SmootherRep, eta: f64) -> Result<CsrMatrix> {
    assemble_new_with(smoother, eta, new_form_element_pointwise)
}

/// Matrix of the consistency defect, `K[i][j] = ∫ ∇φ_i : ∇R_h φ_j + η ∫ ∇R_h φ_i : ∇R_h φ_j`.
///
/// For `z_h` in the discrete kernel, `(K z_h)_i` is, up to sign, the difference
/// `∫ ∇z_h : ∇E_h φ_i - a(z_h, φ_i)` of the Dirichlet form tested with
/// smoothed functions and the augmented form.
pub fn assemble_consistency(smoother: &SmootherRep, eta: f64) -> Result<CsrMatrix> {
    assemble_new_with(smoother, eta, |shape, el, map, eta| {
        let c = &shape.correction;
        let xc = correction_coupling(shape, el, map) * c;
        let ctlc = c.transpose() * &shape.local.stiffness * c;
        Mat::from_fn(xc.nrows(), xc.ncols(), |i, j| xc[(i, j)] + eta * ctlc[(i, j)])
    })
}

/// Exact solution of a manufactured problem.
#[derive(Clone)]
pub struct ExactSolution {
    pub u: VectorField,
    pub grad_u: GradientField,
    pub p: ScalarField,
}

/// Data of a Stokes problem: momentum load, optional divergence data and optional exact solution.
#[derive(Clone)]
pub struct LoadSpec {
    pub f: VectorField,
    pub g: Option<ScalarField>,
    pub exact: Option<ExactSolution>,
    /// Pressure amplitude.
    pub alpha: f64,
}

impl std::fmt::Debug for LoadSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LoadSpec")
            .field("has_g", &self.g.is_some())
            .field("has_exact", &self.exact.is_some())
            .field("alpha", &self.alpha)
            .finish()
    }
}

/// How the load is tested.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoadMode {
    /// `∫ f · E_h φ_i`
    Smoothed,
    /// `∫ f · φ_i`
    Plain,
}

/// Per-cell quadrature layout for the load.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadratureLayout {
    /// Degree-6 rule on each barycentric sub-triangle.
    Composite,
    /// Degree-6 rule on the whole cell.
    Standard,
}

impl QuadratureLayout {
    pub fn name(self) -> &'static str {
        match self {
            QuadratureLayout::Composite => "composite",
            QuadratureLayout::Standard => "standard",
        }
    }

    pub fn cell_rule(self) -> CellRule {
        match self {
            QuadratureLayout::Composite => CellRule::composite(LOAD_DEGREE),
            QuadratureLayout::Standard => CellRule::standard(LOAD_DEGREE),
        }
        .expect("load degree is supported")
    }
}

impl std::str::FromStr for QuadratureLayout {
    type Err = StokesError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "composite" => Ok(QuadratureLayout::Composite),
            "standard" => Ok(QuadratureLayout::Standard),
            other => Err(StokesError::InvalidConfig(format!("unknown quadrature layout `{other}`"))),
        }
    }
}

/// Exactness degree of every load and error rule.
pub const LOAD_DEGREE: usize = 6;

/// Values of the (smoothed) local test functions at the rule's points, `[q * n + a]`.
fn test_values(points: &[RefPoint], tab: &Tabulation, shape: Option<&ShapeCorrection>, nloc: usize) -> Vec<[f64; 2]> {
    let n = 2 * nloc;
    let mut out = vec![[0.0; 2]; points.len() * n];
    for (qi, q) in points.iter().enumerate() {
        let phi = tab.values(qi);
        let row = &mut out[qi * n..(qi + 1) * n];
        for j in 0..nloc {
            row[j][0] = phi[j];
            row[nloc + j][1] = phi[j];
        }
        if let Some(shape) = shape {
            let psi = shape.local.space.velocity_basis_values(q.sub, q.sub_xi);
            let c = &shape.correction;
            for (a, r) in row.iter_mut().enumerate() {
                for (s, v) in psi.iter().enumerate() {
                    r[0] += c[(s, a)] * v[0];
                    r[1] += c[(s, a)] * v[1];
                }
            }
        }
    }
    out
}

/// Velocity load vector. `Smoothed` mode requires the smoother.
pub fn assemble_load(
    velocity: &FeSpace,
    smoother: Option<&SmootherRep>,
    f: &(dyn Fn(Point) -> [f64; 2] + Sync),
    mode: LoadMode,
    layout: QuadratureLayout,
) -> Result<Vec<f64>> {
    let smoother = match mode {
        LoadMode::Smoothed => Some(
            smoother.ok_or_else(|| StokesError::InvalidConfig("smoothed load requested without a smoother".into()))?,
        ),
        LoadMode::Plain => None,
    };
    let mesh = velocity.mesh();
    let points = layout.cell_rule().reference_points();
    let el = velocity.element();
    let nloc = el.n_basis();
    let tab = Tabulation::new(el, points.iter().map(|q| q.xi));
    let tables: Vec<Vec<[f64; 2]>> = match smoother {
        Some(s) => s.shapes().par_iter().map(|shape| test_values(&points, &tab, Some(shape), nloc)).collect(),
        None => vec![test_values(&points, &tab, None, nloc)],
    };
    let n = 2 * nloc;
    let local: Vec<Vec<f64>> = (0..mesh.n_cells())
        .into_par_iter()
        .map(|t| {
            let map = mesh.cell_map(t);
            let area = 0.5 * map.det().abs();
            let table = &tables[smoother.map_or(0, |s| s.shape_of(t))];
            let mut v = vec![0.0; n];
            for (qi, q) in points.iter().enumerate() {
                let fx = f(map.map(q.xi));
                let w = area * q.weight;
                for (a, e) in table[qi * n..(qi + 1) * n].iter().enumerate() {
                    v[a] += w * (fx[0] * e[0] + fx[1] * e[1]);
                }
            }
            v
        })
        .collect();
    let mut out = vec![0.0; velocity.dim()];
    for (t, v) in local.iter().enumerate() {
        for (a, d) in velocity.local_dofs(t).iter().enumerate() {
            if let Some(d) = d {
                out[*d] += v[a];
            }
        }
    }
    Ok(out)
}

/// `G[k] = ∫ ψ_k g` with the degree-6 rule on every cell.
pub fn assemble_pressure_load(pressure: &FeSpace, g: &(dyn Fn(Point) -> f64 + Sync)) -> Vec<f64> {
    let mesh = pressure.mesh();
    let r = rule(LOAD_DEGREE);
    let el = pressure.element();
    let tab = Tabulation::new(el, (0..r.points.len()).map(|q| r.reference_point(q)));
    let local: Vec<Vec<f64>> = (0..mesh.n_cells())
        .into_par_iter()
        .map(|t| {
            let map = mesh.cell_map(t);
            let area = 0.5 * map.det().abs();
            let mut v = vec![0.0; el.n_basis()];
            for q in 0..r.points.len() {
                let gx = g(map.map(r.reference_point(q)));
                for (j, psi) in tab.values(q).iter().enumerate() {
                    v[j] += area * r.weights[q] * gx * psi;
                }
            }
            v
        })
        .collect();
    let mut out = vec![0.0; pressure.dim()];
    for (t, v) in local.iter().enumerate() {
        for (a, d) in pressure.local_dofs(t).iter().enumerate() {
            if let Some(d) = d {
                out[*d] += v[a];
            }
        }
    }
    out
}

/// Algebraic saddle-point problem
///
/// ```text
/// [ μA  Bᵀ  0 ] [u]   [ F]
/// [ B   0   m ] [p] = [-G]
/// [ 0   mᵀ  0 ] [λ]   [ 0]
/// ```
///
/// where `m` holds the pressure mean weights.
#[derive(Clone, Debug)]
pub struct SaddleSystem {
    pub velocity: Arc<FeSpace>,
    pub pressure: Arc<FeSpace>,
    /// Velocity block, already scaled by `mu`.
    pub a: CsrMatrix,
    pub b: CsrMatrix,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub mean: Vec<f64>,
    pub mu: f64,
    /// Penalty of the augmented form, `None` for the plain Dirichlet form.
    pub eta: Option<f64>,
}

impl SaddleSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        velocity: Arc<FeSpace>,
        pressure: Arc<FeSpace>,
        a: &CsrMatrix,
        b: CsrMatrix,
        f: Vec<f64>,
        g: Vec<f64>,
        mu: f64,
        eta: Option<f64>,
    ) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(StokesError::InvalidConfig(format!("viscosity must be positive, got {mu}")));
        }
        let mean = pressure
            .mean_constraint()
            .ok_or_else(|| StokesError::InvalidConfig("pressure space needs a zero-mean constraint".into()))?
            .to_vec();
        assert_eq!((a.nrows(), b.nrows(), b.ncols()), (velocity.dim(), pressure.dim(), velocity.dim()));
        assert_eq!((f.len(), g.len()), (velocity.dim(), pressure.dim()));
        Ok(SaddleSystem { velocity, pressure, a: a.scaled(mu), b, f, g, mean, mu, eta })
    }

    pub fn n_velocity(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_pressure(&self) -> usize {
        self.b.nrows()
    }
    /// Size of the full block system including the multiplier.
    pub fn size(&self) -> usize {
        self.n_velocity() + self.n_pressure() + 1
    }

    /// Applies the full block operator to `(u, p, λ)`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (nu, np) = (self.n_velocity(), self.n_pressure());
        let (u, rest) = x.split_at(nu);
        let (p, lambda) = rest.split_at(np);
        let mut top = self.a.matvec(u);
        for (t, v) in top.iter_mut().zip(self.b.matvec_transpose(p)) {
            *t += v;
        }
        let mut mid = self.b.matvec(u);
        for (m, w) in mid.iter_mut().zip(&self.mean) {
            *m += w * lambda[0];
        }
        let last = self.mean.iter().zip(p).map(|(w, v)| w * v).sum::<f64>();
        top.into_iter().chain(mid).chain(std::iter::once(last)).collect()
    }

    /// Right-hand side `(F, -G, 0)` of the block system.
    pub fn rhs(&self) -> Vec<f64> {
        self.f.iter().copied().chain(self.g.iter().map(|g| -g)).chain(std::iter::once(0.0)).collect()
    }

    /// All entries of the block matrix, for direct factorization.
    pub fn block_triplets(&self) -> Vec<(usize, usize, f64)> {
        let nu = self.n_velocity();
        let np = self.n_pressure();
        let mut t: Vec<_> = self.a.triplets().collect();
        for (r, c, v) in self.b.triplets() {
            t.push((nu + r, c, v));
            t.push((c, nu + r, v));
        }
        for (k, w) in self.mean.iter().enumerate() {
            t.push((nu + k, nu + np, *w));
            t.push((nu + np, nu + k, *w));
        }
        t
    }
}
