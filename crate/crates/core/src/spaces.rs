//! Lagrange finite element spaces.
//!
//! Global spaces are either continuous (`H^1`-conforming) or discontinuous
//! piecewise polynomials of degree `k` on a [`Mesh`], scalar or with two
//! components. Vector coefficients are stored component-major: the dof of
//! component `c` attached to scalar dof `s` is `c * n_scalar + s`.
//!
//! [`LocalSvSpace`] is the Scott–Vogelius pair on the barycentric refinement
//! of one cell: continuous `P_ℓ` velocities vanishing on the cell boundary and
//! discontinuous `P_{ℓ-1}` pressures with zero mean.

use std::sync::Arc;

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;

use crate::error::{Result, StokesError};
use crate::mesh::{reference_sub_triangle_of, reference_sub_triangles, AffineMap, Mesh, Point};
use crate::quadrature::make_rule;

/// Topological entity carrying a Lagrange node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeEntity {
    Vertex(usize),
    /// Local edge (opposite vertex `edge`), `index`-th interior node counted
    /// from vertex `edge + 1` towards vertex `edge + 2`, starting at 1.
    Edge {
        edge: usize,
        index: usize,
    },
    Interior(usize),
}

/// Nodal Lagrange basis of degree `k` on the reference triangle, expanded in monomials.
///
/// Node order: the three vertices, the interior nodes of edges 0, 1, 2 and
/// then the cell-interior nodes. Degree 0 has a single node at the centroid.
#[derive(Clone, Debug)]
pub struct LagrangeElement {
    degree: usize,
    nodes: Vec<Point>,
    entities: Vec<NodeEntity>,
    monomials: Vec<(i32, i32)>,
    /// `coeffs[j * n + m]`: coefficient of monomial `m` in basis function `j`.
    coeffs: Vec<f64>,
}

impl LagrangeElement {
    pub fn new(degree: usize) -> Self {
        let k = degree;
        let mut nodes = Vec::new();
        let mut entities = Vec::new();
        if k == 0 {
            nodes.push([1.0 / 3.0, 1.0 / 3.0]);
            entities.push(NodeEntity::Interior(0));
        } else {
            let v = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
            for (i, p) in v.iter().enumerate() {
                nodes.push(*p);
                entities.push(NodeEntity::Vertex(i));
            }
            for e in 0..3 {
                let (a, b) = (v[(e + 1) % 3], v[(e + 2) % 3]);
                for i in 1..k {
                    let t = i as f64 / k as f64;
                    nodes.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                    entities.push(NodeEntity::Edge { edge: e, index: i });
                }
            }
            let mut idx = 0;
            for j in 1..k {
                for i in 1..k {
                    if i + j < k {
                        nodes.push([i as f64 / k as f64, j as f64 / k as f64]);
                        entities.push(NodeEntity::Interior(idx));
                        idx += 1;
                    }
                }
            }
        }

        let mut monomials = Vec::new();
        for total in 0..=k as i32 {
            for b in 0..=total {
                monomials.push((total - b, b));
            }
        }
        let n = monomials.len();
        debug_assert_eq!(n, nodes.len());
        let vandermonde = Mat::<f64>::from_fn(n, n, |i, m| {
            let (a, b) = monomials[m];
            nodes[i][0].powi(a) * nodes[i][1].powi(b)
        });
        // basis coefficients are the columns of V^{-1}
        let inv = vandermonde.full_piv_lu().inverse();
        let mut coeffs = vec![0.0; n * n];
        for j in 0..n {
            for m in 0..n {
                coeffs[j * n + m] = inv[(m, j)];
            }
        }
        LagrangeElement { degree, nodes, entities, monomials, coeffs }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }
    pub fn n_basis(&self) -> usize {
        self.nodes.len()
    }
    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }
    pub fn entity(&self, j: usize) -> NodeEntity {
        self.entities[j]
    }
    pub fn n_interior(&self) -> usize {
        self.entities.iter().filter(|e| matches!(e, NodeEntity::Interior(_))).count()
    }

    pub fn eval(&self, xi: Point, values: &mut [f64]) {
        let n = self.n_basis();
        let mono: Vec<f64> = self.monomials.iter().map(|&(a, b)| xi[0].powi(a) * xi[1].powi(b)).collect();
        for (j, v) in values.iter_mut().enumerate().take(n) {
            *v = (0..n).map(|m| self.coeffs[j * n + m] * mono[m]).sum();
        }
    }

    /// Gradients with respect to reference coordinates.
    pub fn eval_grad(&self, xi: Point, grads: &mut [[f64; 2]]) {
        let n = self.n_basis();
        let pw = |x: f64, e: i32| if e < 0 { 0.0 } else { x.powi(e) };
        let dx: Vec<f64> = self.monomials.iter().map(|&(a, b)| a as f64 * pw(xi[0], a - 1) * pw(xi[1], b)).collect();
        let dy: Vec<f64> = self.monomials.iter().map(|&(a, b)| b as f64 * pw(xi[0], a) * pw(xi[1], b - 1)).collect();
        for (j, g) in grads.iter_mut().enumerate().take(n) {
            let row = &self.coeffs[j * n..(j + 1) * n];
            *g = [row.iter().zip(&dx).map(|(c, d)| c * d).sum(), row.iter().zip(&dy).map(|(c, d)| c * d).sum()];
        }
    }

    pub fn values_at(&self, xi: Point) -> Vec<f64> {
        let mut v = vec![0.0; self.n_basis()];
        self.eval(xi, &mut v);
        v
    }

    pub fn grads_at(&self, xi: Point) -> Vec<[f64; 2]> {
        let mut g = vec![[0.0; 2]; self.n_basis()];
        self.eval_grad(xi, &mut g);
        g
    }
}

/// Basis values and gradients tabulated at a fixed set of reference points.
#[derive(Clone, Debug)]
pub struct Tabulation {
    pub n_basis: usize,
    /// `values[q * n_basis + j]`
    pub values: Vec<f64>,
    /// Reference gradients, same layout.
    pub grads: Vec<[f64; 2]>,
}

impl Tabulation {
    pub fn new(element: &LagrangeElement, points: impl IntoIterator<Item = Point>) -> Self {
        let n = element.n_basis();
        let mut values = Vec::new();
        let mut grads = Vec::new();
        for p in points {
            let start = values.len();
            values.resize(start + n, 0.0);
            grads.resize(start + n, [0.0; 2]);
            element.eval(p, &mut values[start..]);
            element.eval_grad(p, &mut grads[start..]);
        }
        Tabulation { n_basis: n, values, grads }
    }

    pub fn values(&self, q: usize) -> &[f64] {
        &self.values[q * self.n_basis..(q + 1) * self.n_basis]
    }
    pub fn grads(&self, q: usize) -> &[[f64; 2]] {
        &self.grads[q * self.n_basis..(q + 1) * self.n_basis]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceFamily {
    Continuous,
    Discontinuous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Constraint {
    None,
    /// No dofs on boundary Lagrange nodes.
    DirichletZero,
    /// Zero mean, kept as an explicit rank-1 constraint next to the full basis.
    ZeroMean,
}

#[derive(Clone, Debug)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    family: SpaceFamily,
    components: usize,
    constraint: Constraint,
    element: LagrangeElement,
    /// `scalar_dofs[cell * n_loc + j]`; `None` for Dirichlet-constrained nodes.
    scalar_dofs: Vec<Option<usize>>,
    n_scalar: usize,
    mean_weights: Option<Vec<f64>>,
}

/// Builds a Lagrange space on `mesh`.
pub fn build_space(
    mesh: &Arc<Mesh>,
    family: SpaceFamily,
    degree: usize,
    components: usize,
    constraint: Constraint,
) -> Result<Arc<FeSpace>> {
    if family == SpaceFamily::Continuous && degree == 0 {
        return Err(StokesError::InvalidDegree { degree, what: "a continuous Lagrange space" });
    }
    if !(1..=2).contains(&components) {
        return Err(StokesError::InvalidConfig(format!("{components} components requested; only 1 or 2 supported")));
    }
    let element = LagrangeElement::new(degree);
    let n_loc = element.n_basis();
    let n_cells = mesh.n_cells();
    let mut scalar_dofs = vec![None; n_cells * n_loc];
    let n_scalar;

    match family {
        SpaceFamily::Discontinuous => {
            for (i, d) in scalar_dofs.iter_mut().enumerate() {
                *d = Some(i);
            }
            n_scalar = n_cells * n_loc;
        }
        SpaceFamily::Continuous => {
            let k = degree;
            let per_edge = k - 1;
            let n_int = element.n_interior();
            let n_nodes = mesh.n_vertices() + mesh.n_edges() * per_edge + n_cells * n_int;
            // node -> dof, skipping boundary nodes when constrained
            let mut on_boundary = vec![false; n_nodes];
            if constraint == Constraint::DirichletZero {
                for v in 0..mesh.n_vertices() {
                    on_boundary[v] = mesh.is_boundary_vertex(v);
                }
                for e in 0..mesh.n_edges() {
                    if mesh.is_boundary_edge(e) {
                        for i in 0..per_edge {
                            on_boundary[mesh.n_vertices() + e * per_edge + i] = true;
                        }
                    }
                }
            }
            let mut node_dof = vec![None; n_nodes];
            let mut next = 0;
            for (node, slot) in node_dof.iter_mut().enumerate() {
                if !on_boundary[node] {
                    *slot = Some(next);
                    next += 1;
                }
            }
            n_scalar = next;

            for t in 0..n_cells {
                let cell = mesh.cells()[t];
                let edges = mesh.cell_edges(t);
                for j in 0..n_loc {
                    let node = match element.entity(j) {
                        NodeEntity::Vertex(v) => cell[v],
                        NodeEntity::Edge { edge, index } => {
                            let start = cell[(edge + 1) % 3];
                            let end = cell[(edge + 2) % 3];
                            // edge nodes are numbered from the lower global vertex
                            let along = if start < end { index } else { k - index };
                            mesh.n_vertices() + edges[edge] * per_edge + (along - 1)
                        }
                        NodeEntity::Interior(i) => mesh.n_vertices() + mesh.n_edges() * per_edge + t * n_int + i,
                    };
                    scalar_dofs[t * n_loc + j] = node_dof[node];
                }
            }
        }
    }

    let mut space = FeSpace {
        mesh: mesh.clone(),
        family,
        components,
        constraint,
        element,
        scalar_dofs,
        n_scalar,
        mean_weights: None,
    };
    if constraint == Constraint::ZeroMean {
        space.mean_weights = Some(space.basis_integrals());
    }
    Ok(Arc::new(space))
}

impl FeSpace {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }
    pub fn family(&self) -> SpaceFamily {
        self.family
    }
    pub fn degree(&self) -> usize {
        self.element.degree()
    }
    pub fn components(&self) -> usize {
        self.components
    }
    pub fn constraint(&self) -> Constraint {
        self.constraint
    }
    pub fn element(&self) -> &LagrangeElement {
        &self.element
    }
    pub fn n_scalar(&self) -> usize {
        self.n_scalar
    }
    pub fn dim(&self) -> usize {
        self.components * self.n_scalar
    }
    /// Scalar basis functions per cell.
    pub fn n_local_scalar(&self) -> usize {
        self.element.n_basis()
    }
    /// Basis functions per cell, all components.
    pub fn n_local(&self) -> usize {
        self.components * self.element.n_basis()
    }

    pub fn scalar_dofs(&self, cell: usize) -> &[Option<usize>] {
        let n = self.element.n_basis();
        &self.scalar_dofs[cell * n..(cell + 1) * n]
    }

    /// Global dofs of the local (vector) basis functions, component-major.
    pub fn local_dofs(&self, cell: usize) -> Vec<Option<usize>> {
        let s = self.scalar_dofs(cell);
        (0..self.components).flat_map(|c| s.iter().map(move |d| d.map(|d| c * self.n_scalar + d))).collect()
    }

    /// Weights `∫ ψ_k` of the rank-1 zero-mean constraint, if any.
    pub fn mean_constraint(&self) -> Option<&[f64]> {
        self.mean_weights.as_deref()
    }

    /// `∫_Ω ψ_k` for every basis function (first component replicated).
    pub fn basis_integrals(&self) -> Vec<f64> {
        let rule = make_rule(self.degree().max(1)).unwrap();
        let tab = Tabulation::new(&self.element, (0..rule.points.len()).map(|q| rule.reference_point(q)));
        let mut w = vec![0.0; self.dim()];
        for t in 0..self.mesh.n_cells() {
            let area = self.mesh.cell_area(t);
            let dofs = self.local_dofs(t);
            for (a, dof) in dofs.iter().enumerate() {
                let Some(dof) = dof else { continue };
                let j = a % self.element.n_basis();
                let v: f64 = (0..rule.points.len()).map(|q| rule.weights[q] * tab.values(q)[j]).sum();
                w[*dof] += area * v;
            }
        }
        w
    }

    /// Physical position of every local node of `cell`.
    pub fn node_points(&self, cell: usize) -> Vec<Point> {
        let map = self.mesh.cell_map(cell);
        self.element.nodes().iter().map(|&xi| map.map(xi)).collect()
    }
}

/// Scalar basis values and physical gradients on one cell.
#[derive(Clone, Debug)]
pub struct BasisEval {
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
}

/// Evaluates the scalar shape functions of `cell` at reference point `xi`.
/// For vector spaces local basis `c * n + j` is `e_c` times scalar function `j`.
pub fn eval_basis(space: &FeSpace, cell: usize, xi: Point) -> BasisEval {
    let map = space.mesh.cell_map(cell);
    BasisEval {
        values: space.element.values_at(xi),
        grads: space.element.grads_at(xi).into_iter().map(|g| map.push_gradient(g)).collect(),
    }
}

/// Coefficient vector relative to an [`FeSpace`].
#[derive(Clone, Debug)]
pub struct FeFunction {
    space: Arc<FeSpace>,
    pub coeffs: Vec<f64>,
}

impl FeFunction {
    pub fn new(space: Arc<FeSpace>, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), space.dim(), "coefficient length must match the space dimension");
        FeFunction { space, coeffs }
    }

    pub fn zeros(space: Arc<FeSpace>) -> Self {
        let n = space.dim();
        FeFunction { space, coeffs: vec![0.0; n] }
    }

    /// Nodal interpolation; constrained nodes are skipped.
    pub fn interpolate(space: Arc<FeSpace>, f: impl Fn(Point) -> [f64; 2]) -> Self {
        let mut coeffs = vec![0.0; space.dim()];
        let n = space.n_scalar();
        for t in 0..space.mesh.n_cells() {
            for (x, dof) in space.node_points(t).into_iter().zip(space.scalar_dofs(t)) {
                if let Some(s) = dof {
                    let v = f(x);
                    for (c, value) in v.iter().enumerate().take(space.components()) {
                        coeffs[c * n + s] = *value;
                    }
                }
            }
        }
        FeFunction { space, coeffs }
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    /// Local coefficients on `cell`, component-major; constrained dofs read as 0.
    pub fn local_coeffs(&self, cell: usize) -> Vec<f64> {
        self.space.local_dofs(cell).into_iter().map(|d| d.map_or(0.0, |d| self.coeffs[d])).collect()
    }

    pub fn value(&self, cell: usize, xi: Point) -> [f64; 2] {
        let phi = self.space.element.values_at(xi);
        let local = self.local_coeffs(cell);
        let n = phi.len();
        let mut out = [0.0; 2];
        for (c, o) in out.iter_mut().enumerate().take(self.space.components) {
            *o = (0..n).map(|j| local[c * n + j] * phi[j]).sum();
        }
        out
    }

    /// `grad[c][d] = ∂_d u_c`.
    pub fn gradient(&self, cell: usize, xi: Point) -> [[f64; 2]; 2] {
        let b = eval_basis(&self.space, cell, xi);
        let local = self.local_coeffs(cell);
        let n = b.values.len();
        let mut out = [[0.0; 2]; 2];
        for (c, o) in out.iter_mut().enumerate().take(self.space.components) {
            for j in 0..n {
                o[0] += local[c * n + j] * b.grads[j][0];
                o[1] += local[c * n + j] * b.grads[j][1];
            }
        }
        out
    }

    /// `∫_Ω u` per component.
    pub fn integral(&self) -> [f64; 2] {
        let w = self.space.basis_integrals();
        let n = self.space.n_scalar();
        let mut out = [0.0; 2];
        for (c, o) in out.iter_mut().enumerate().take(self.space.components) {
            *o = (0..n).map(|s| w[c * n + s] * self.coeffs[c * n + s]).sum();
        }
        out
    }

    /// Subtracts the mean value (scalar discontinuous spaces).
    pub fn remove_mean(&mut self) {
        let w = self.space.basis_integrals();
        let area: f64 = (0..self.space.mesh.n_cells()).map(|t| self.space.mesh.cell_area(t)).sum();
        let mean = self.integral()[0] / area;
        // every Lagrange basis sums to 1, so shifting all coefficients shifts the function
        let _ = w;
        self.coeffs.iter_mut().for_each(|c| *c -= mean);
    }

    pub fn l2_norm(&self) -> f64 {
        let rule = make_rule((2 * self.space.degree()).max(1)).unwrap();
        let mut s = 0.0;
        for t in 0..self.space.mesh.n_cells() {
            let area = self.space.mesh.cell_area(t);
            for q in 0..rule.points.len() {
                let v = self.value(t, rule.reference_point(q));
                s += area * rule.weights[q] * (v[0] * v[0] + v[1] * v[1]);
            }
        }
        s.sqrt()
    }

    /// `‖∇u‖_{L^2}`.
    pub fn h1_seminorm(&self) -> f64 {
        let rule = make_rule((2 * self.space.degree()).saturating_sub(2).max(1)).unwrap();
        let mut s = 0.0;
        for t in 0..self.space.mesh.n_cells() {
            let area = self.space.mesh.cell_area(t);
            for q in 0..rule.points.len() {
                let g = self.gradient(t, rule.reference_point(q));
                s += area * rule.weights[q] * g.iter().flatten().map(|x| x * x).sum::<f64>();
            }
        }
        s.sqrt()
    }
}

/// Scott–Vogelius pair on the barycentric refinement `M_K` of one cell.
///
/// Sub-cell `k` of the macro mesh is `(a_k, a_{k+1}, b)`, the image of the
/// reference sub-triangle `k` under the cell map, so values can be addressed
/// by reference coordinates of the parent cell.
#[derive(Clone, Debug)]
pub struct LocalSvSpace {
    pub degree: usize,
    pub cell: usize,
    pub map: AffineMap,
    pub macro_mesh: Arc<Mesh>,
    pub velocity: Arc<FeSpace>,
    pub pressure: Arc<FeSpace>,
    sub_ref_maps: [AffineMap; 3],
}

pub fn build_local_sv(mesh: &Mesh, cell: usize, degree: usize) -> Result<LocalSvSpace> {
    if degree < 2 {
        return Err(StokesError::InvalidDegree { degree, what: "the local Scott–Vogelius pair (needs ℓ >= 2)" });
    }
    let p = mesh.cell_points(cell);
    let b = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
    let macro_mesh = Arc::new(Mesh::from_cells(vec![p[0], p[1], p[2], b], vec![[0, 1, 3], [1, 2, 3], [2, 0, 3]])?);
    let velocity = build_space(&macro_mesh, SpaceFamily::Continuous, degree, 2, Constraint::DirichletZero)?;
    let pressure = build_space(&macro_mesh, SpaceFamily::Discontinuous, degree - 1, 1, Constraint::ZeroMean)?;
    Ok(LocalSvSpace {
        degree,
        cell,
        map: mesh.cell_map(cell),
        macro_mesh,
        velocity,
        pressure,
        sub_ref_maps: reference_sub_triangles().map(|t| AffineMap::from_triangle(&t)),
    })
}

impl LocalSvSpace {
    /// Sub-cell and sub-cell reference coordinates of a parent reference point.
    pub fn locate(&self, xi: Point) -> (usize, Point) {
        let k = reference_sub_triangle_of(xi);
        (k, self.sub_ref_maps[k].inverse_map(xi))
    }

    pub fn sub_ref_map(&self, k: usize) -> &AffineMap {
        &self.sub_ref_maps[k]
    }

    /// Local velocity field with coefficients `coeffs` at parent reference point `xi`.
    pub fn velocity_value(&self, coeffs: &[f64], xi: Point) -> [f64; 2] {
        let (k, sxi) = self.locate(xi);
        let phi = self.velocity.element().values_at(sxi);
        let n = self.velocity.n_scalar();
        let mut out = [0.0; 2];
        for (j, d) in self.velocity.scalar_dofs(k).iter().enumerate() {
            if let Some(s) = d {
                out[0] += coeffs[*s] * phi[j];
                out[1] += coeffs[n + s] * phi[j];
            }
        }
        out
    }

    /// Physical gradient `[c][d]` of a local velocity field at parent reference point `xi`,
    /// using the Jacobian `parent` for the parent cell.
    pub fn velocity_gradient(&self, coeffs: &[f64], xi: Point, parent: &AffineMap) -> [[f64; 2]; 2] {
        let (k, sxi) = self.locate(xi);
        let map = parent.compose(&self.sub_ref_maps[k]);
        let grads = self.velocity.element().grads_at(sxi);
        let n = self.velocity.n_scalar();
        let mut out = [[0.0; 2]; 2];
        for (j, d) in self.velocity.scalar_dofs(k).iter().enumerate() {
            if let Some(s) = d {
                let g = map.push_gradient(grads[j]);
                for dd in 0..2 {
                    out[0][dd] += coeffs[*s] * g[dd];
                    out[1][dd] += coeffs[n + s] * g[dd];
                }
            }
        }
        out
    }

    /// Values of every local velocity basis function at `sub_xi` in sub-cell `sub`.
    pub fn velocity_basis_values(&self, sub: usize, sub_xi: Point) -> Vec<[f64; 2]> {
        let phi = self.velocity.element().values_at(sub_xi);
        let n = self.velocity.n_scalar();
        let mut out = vec![[0.0; 2]; self.velocity.dim()];
        for (j, d) in self.velocity.scalar_dofs(sub).iter().enumerate() {
            if let Some(s) = d {
                out[*s][0] = phi[j];
                out[n + s][1] = phi[j];
            }
        }
        out
    }

    /// Physical gradients `[c][d]` of every local velocity basis function at
    /// `sub_xi` in sub-cell `sub`, for a parent cell with map `parent`.
    pub fn velocity_basis_grads(&self, sub: usize, sub_xi: Point, parent: &AffineMap) -> Vec<[[f64; 2]; 2]> {
        let map = parent.compose(&self.sub_ref_maps[sub]);
        let grads = self.velocity.element().grads_at(sub_xi);
        let n = self.velocity.n_scalar();
        let mut out = vec![[[0.0; 2]; 2]; self.velocity.dim()];
        for (j, d) in self.velocity.scalar_dofs(sub).iter().enumerate() {
            if let Some(s) = d {
                let g = map.push_gradient(grads[j]);
                out[*s][0] = g;
                out[n + s][1] = g;
            }
        }
        out
    }

    /// Local pressure field (full, unconstrained coefficients) at parent reference point `xi`.
    pub fn pressure_value(&self, coeffs: &[f64], xi: Point) -> f64 {
        let (k, sxi) = self.locate(xi);
        let phi = self.pressure.element().values_at(sxi);
        self.pressure.scalar_dofs(k).iter().zip(&phi).map(|(d, v)| coeffs[d.unwrap()] * v).sum()
    }
}
