//! Simplicial triangulations of polygonal domains.
//!
//! Provides the two structured families on the unit square (diagonal and
//! crisscross), general face-to-face meshes built from a cell list, the
//! barycentric refinement of individual cells, and a plain-text dump format:
//!
//! ```text
//! V E T
//! x y boundary_flag      (V lines)
//! v0 v1 v2               (T lines)
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Result, StokesError};

pub type Point = [f64; 2];

/// Affine map `x = origin + jac * xi` from the reference triangle
/// `conv{(0,0), (1,0), (0,1)}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    pub origin: Point,
    /// Row-major; columns are the images of the reference edge vectors.
    pub jac: [[f64; 2]; 2],
}

impl AffineMap {
    pub fn from_triangle(tri: &[Point; 3]) -> Self {
        let [a, b, c] = *tri;
        AffineMap { origin: a, jac: [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]] }
    }

    pub fn det(&self) -> f64 {
        self.jac[0][0] * self.jac[1][1] - self.jac[0][1] * self.jac[1][0]
    }

    pub fn map(&self, xi: Point) -> Point {
        [
            self.origin[0] + self.jac[0][0] * xi[0] + self.jac[0][1] * xi[1],
            self.origin[1] + self.jac[1][0] * xi[0] + self.jac[1][1] * xi[1],
        ]
    }

    pub fn inverse_map(&self, x: Point) -> Point {
        let d = self.det();
        let (dx, dy) = (x[0] - self.origin[0], x[1] - self.origin[1]);
        [(self.jac[1][1] * dx - self.jac[0][1] * dy) / d, (-self.jac[1][0] * dx + self.jac[0][0] * dy) / d]
    }

    /// Maps a reference gradient to the physical one, `J^{-T} g`.
    #[inline]
    pub fn push_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        let d = self.det();
        [(self.jac[1][1] * g[0] - self.jac[1][0] * g[1]) / d, (-self.jac[0][1] * g[0] + self.jac[0][0] * g[1]) / d]
    }

    /// Composition `self ∘ inner`.
    pub fn compose(&self, inner: &AffineMap) -> AffineMap {
        let j = &self.jac;
        let k = &inner.jac;
        AffineMap {
            origin: self.map(inner.origin),
            jac: [
                [j[0][0] * k[0][0] + j[0][1] * k[1][0], j[0][0] * k[0][1] + j[0][1] * k[1][1]],
                [j[1][0] * k[0][0] + j[1][1] * k[1][0], j[1][0] * k[0][1] + j[1][1] * k[1][1]],
            ],
        }
    }
}

pub fn signed_area(tri: &[Point; 3]) -> f64 {
    0.5 * AffineMap::from_triangle(tri).det()
}

/// Structured mesh families on the unit square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MeshFamily {
    Diagonal,
    Crisscross,
}

impl MeshFamily {
    pub fn build(self, n: u32) -> Mesh {
        match self {
            MeshFamily::Diagonal => build_diagonal(n),
            MeshFamily::Crisscross => build_crisscross(n),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MeshFamily::Diagonal => "diagonal",
            MeshFamily::Crisscross => "crisscross",
        }
    }
}

impl std::str::FromStr for MeshFamily {
    type Err = StokesError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonal" => Ok(MeshFamily::Diagonal),
            "crisscross" => Ok(MeshFamily::Crisscross),
            other => Err(StokesError::InvalidConfig(format!("unknown mesh family `{other}`"))),
        }
    }
}

/// Face-to-face triangulation with edge topology and boundary flags.
///
/// Cells are stored counterclockwise. Local edge `k` of a cell is the edge
/// opposite its local vertex `k`.
#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    cells: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    edge_cells: Vec<Vec<usize>>,
    cell_edges: Vec<[usize; 3]>,
    boundary_vertex: Vec<bool>,
    boundary_edge: Vec<bool>,
}

impl Mesh {
    /// Builds the topology of a triangulation. Clockwise cells are reoriented;
    /// degenerate cells and edges shared by more than two cells are rejected.
    pub fn from_cells(vertices: Vec<Point>, mut cells: Vec<[usize; 3]>) -> Result<Self> {
        for (t, cell) in cells.iter_mut().enumerate() {
            if cell.iter().any(|&v| v >= vertices.len()) {
                return Err(StokesError::InvalidMesh(format!("cell {t} references a missing vertex")));
            }
            let area = signed_area(&cell.map(|v| vertices[v]));
            if area == 0.0 || !area.is_finite() {
                return Err(StokesError::InvalidMesh(format!("cell {t} is degenerate")));
            }
            if area < 0.0 {
                cell.swap(1, 2);
            }
        }

        let mut index: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_cells: Vec<Vec<usize>> = Vec::new();
        let mut cell_edges = Vec::with_capacity(cells.len());
        for (t, cell) in cells.iter().enumerate() {
            let mut local = [0; 3];
            for (k, slot) in local.iter_mut().enumerate() {
                let (a, b) = (cell[(k + 1) % 3], cell[(k + 2) % 3]);
                let key = [a.min(b), a.max(b)];
                let e = *index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_cells.push(Vec::new());
                    edges.len() - 1
                });
                edge_cells[e].push(t);
                if edge_cells[e].len() > 2 {
                    return Err(StokesError::InvalidMesh(format!("edge {:?} is shared by more than two cells", key)));
                }
                *slot = e;
            }
            cell_edges.push(local);
        }

        let boundary_edge: Vec<bool> = edge_cells.iter().map(|c| c.len() == 1).collect();
        let mut boundary_vertex = vec![false; vertices.len()];
        for (e, &[a, b]) in edges.iter().enumerate() {
            if boundary_edge[e] {
                boundary_vertex[a] = true;
                boundary_vertex[b] = true;
            }
        }

        Ok(Mesh { vertices, cells, edges, edge_cells, cell_edges, boundary_vertex, boundary_edge })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }
    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }
    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }
    pub fn edge_cells(&self, edge: usize) -> &[usize] {
        &self.edge_cells[edge]
    }
    pub fn cell_edges(&self, cell: usize) -> [usize; 3] {
        self.cell_edges[cell]
    }
    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }
    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.boundary_edge[e]
    }

    pub fn cell_points(&self, cell: usize) -> [Point; 3] {
        self.cells[cell].map(|v| self.vertices[v])
    }

    pub fn cell_map(&self, cell: usize) -> AffineMap {
        AffineMap::from_triangle(&self.cell_points(cell))
    }

    pub fn cell_area(&self, cell: usize) -> f64 {
        signed_area(&self.cell_points(cell))
    }

    /// Max over cells of diameter / inradius.
    pub fn shape_parameter(&self) -> f64 {
        (0..self.n_cells())
            .map(|t| {
                let p = self.cell_points(t);
                let len = |a: Point, b: Point| (a[0] - b[0]).hypot(a[1] - b[1]);
                let sides = [len(p[1], p[2]), len(p[2], p[0]), len(p[0], p[1])];
                let diam = sides.iter().cloned().fold(0.0, f64::max);
                let inradius = 2.0 * signed_area(&p) / sides.iter().sum::<f64>();
                diam / inradius
            })
            .fold(0.0, f64::max)
    }

    /// Groups cells whose Jacobians agree up to `1e-14` relative to the
    /// largest Jacobian entry in the mesh. Returns the class of every cell
    /// and one representative cell per class.
    pub fn shape_classes(&self) -> (Vec<usize>, Vec<usize>) {
        let scale = (0..self.n_cells())
            .flat_map(|t| self.cell_map(t).jac.into_iter().flatten())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let quantum = 1e-14 * scale;
        let mut keys: HashMap<[i64; 4], usize> = HashMap::new();
        let mut representatives = Vec::new();
        let classes = (0..self.n_cells())
            .map(|t| {
                let j = self.cell_map(t).jac;
                let key = [j[0][0], j[0][1], j[1][0], j[1][1]].map(|v| (v / quantum).round() as i64);
                *keys.entry(key).or_insert_with(|| {
                    representatives.push(t);
                    representatives.len() - 1
                })
            })
            .collect();
        (classes, representatives)
    }

    /// Finds a cell containing `x` and the corresponding reference coordinates.
    pub fn locate(&self, x: Point) -> Option<(usize, Point)> {
        const TOL: f64 = 1e-12;
        (0..self.n_cells()).find_map(|t| {
            let xi = self.cell_map(t).inverse_map(x);
            (xi[0] >= -TOL && xi[1] >= -TOL && xi[0] + xi[1] <= 1.0 + TOL).then_some((t, xi))
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{} {} {}", self.n_vertices(), self.n_edges(), self.n_cells()).unwrap();
        for (v, p) in self.vertices.iter().enumerate() {
            writeln!(out, "{} {} {}", p[0], p[1], u8::from(self.boundary_vertex[v])).unwrap();
        }
        for c in &self.cells {
            writeln!(out, "{} {} {}", c[0], c[1], c[2]).unwrap();
        }
        out
    }

    /// Parses the text format. Edge count and boundary flags are checked
    /// against the reconstructed topology.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let bad = |line: usize, reason: &str| StokesError::MeshFormat { line: line + 1, reason: reason.into() };
        let (l0, header) = lines.next().ok_or_else(|| bad(0, "empty file"))?;
        let counts: Vec<usize> = header
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad(l0, "expected `V E T`")))
            .collect::<Result<_>>()?;
        let [nv, ne, nt] = counts[..] else { return Err(bad(l0, "expected `V E T`")) };

        let mut vertices = Vec::with_capacity(nv);
        let mut flags = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (l, line) = lines.next().ok_or_else(|| bad(l0, "missing vertex lines"))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad(l, "expected `x y boundary_flag`"));
            }
            let x: f64 = f[0].parse().map_err(|_| bad(l, "bad x"))?;
            let y: f64 = f[1].parse().map_err(|_| bad(l, "bad y"))?;
            let flag: u8 = f[2].parse().map_err(|_| bad(l, "bad boundary flag"))?;
            vertices.push([x, y]);
            flags.push(flag != 0);
        }
        let mut cells = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (l, line) = lines.next().ok_or_else(|| bad(l0, "missing cell lines"))?;
            let v: Vec<usize> = line
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| bad(l, "bad vertex index")))
                .collect::<Result<_>>()?;
            let [a, b, c] = v[..] else { return Err(bad(l, "expected `v0 v1 v2`")) };
            cells.push([a, b, c]);
        }
        let mesh = Mesh::from_cells(vertices, cells)?;
        if mesh.n_edges() != ne {
            return Err(bad(l0, &format!("header declares {ne} edges, topology has {}", mesh.n_edges())));
        }
        if flags != mesh.boundary_vertex {
            return Err(bad(l0, "boundary flags disagree with topology"));
        }
        Ok(mesh)
    }

    pub fn dump(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn grid_vertices(n: usize) -> Vec<Point> {
    let mut v = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            v.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    v
}

/// `2^n x 2^n` squares, each cut along its positive-slope diagonal.
pub fn build_diagonal(n: u32) -> Mesh {
    let m = 1usize << n;
    let vertices = grid_vertices(m);
    let id = |i: usize, j: usize| j * (m + 1) + i;
    let mut cells = Vec::with_capacity(2 * m * m);
    for j in 0..m {
        for i in 0..m {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            cells.push([v00, v10, v11]);
            cells.push([v00, v11, v01]);
        }
    }
    Mesh::from_cells(vertices, cells).expect("structured mesh is valid")
}

/// `2^n x 2^n` squares, each cut along both diagonals.
pub fn build_crisscross(n: u32) -> Mesh {
    let m = 1usize << n;
    let mut vertices = grid_vertices(m);
    let id = |i: usize, j: usize| j * (m + 1) + i;
    let corners = vertices.len();
    for j in 0..m {
        for i in 0..m {
            vertices.push([(i as f64 + 0.5) / m as f64, (j as f64 + 0.5) / m as f64]);
        }
    }
    let mut cells = Vec::with_capacity(4 * m * m);
    for j in 0..m {
        for i in 0..m {
            let c = corners + j * m + i;
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            cells.push([v00, v10, c]);
            cells.push([v10, v11, c]);
            cells.push([v11, v01, c]);
            cells.push([v01, v00, c]);
        }
    }
    Mesh::from_cells(vertices, cells).expect("structured mesh is valid")
}

/// Split of a triangle into three by joining its vertices to the barycenter.
///
/// Sub-triangle `k` is `(a_k, a_{k+1}, b)`; it is the image of the
/// corresponding reference sub-triangle under the parent's affine map.
#[derive(Clone, Debug)]
pub struct RefinedCell {
    pub parent: usize,
    pub barycenter: Point,
    pub sub_triangles: [[Point; 3]; 3],
    pub sub_maps: [AffineMap; 3],
}

/// Reference sub-triangles of the barycentric refinement of the reference triangle.
pub fn reference_sub_triangles() -> [[Point; 3]; 3] {
    let v = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let b = [1.0 / 3.0, 1.0 / 3.0];
    [[v[0], v[1], b], [v[1], v[2], b], [v[2], v[0], b]]
}

/// Index of the reference sub-triangle containing the reference point `xi`.
///
/// Points on an interior edge of the refinement go to the lower index.
pub fn reference_sub_triangle_of(xi: Point) -> usize {
    let lambda = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
    // sub-triangle k lacks vertex k+2, whose coordinate is the smallest there
    (0..3).min_by(|&a, &b| lambda[(a + 2) % 3].partial_cmp(&lambda[(b + 2) % 3]).unwrap()).unwrap()
}

pub fn barycentric_refine(mesh: &Mesh, cell: usize) -> RefinedCell {
    let p = mesh.cell_points(cell);
    let b = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
    let sub_triangles = [[p[0], p[1], b], [p[1], p[2], b], [p[2], p[0], b]];
    RefinedCell {
        parent: cell,
        barycenter: b,
        sub_triangles,
        sub_maps: sub_triangles.map(|t| AffineMap::from_triangle(&t)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euler(mesh: &Mesh) -> i64 {
        mesh.n_vertices() as i64 - mesh.n_edges() as i64 + mesh.n_cells() as i64
    }

    #[test]
    fn diagonal_counts() {
        let m0 = build_diagonal(0);
        assert_eq!((m0.n_cells(), m0.n_vertices()), (2, 4));
        let m2 = build_diagonal(2);
        assert_eq!((m2.n_cells(), m2.n_vertices()), (32, 25));
    }

    #[test]
    fn diagonal_euler_by_enumeration() {
        // independent count of distinct undirected edges from the cell list
        let m = build_diagonal(1);
        let mut set = std::collections::BTreeSet::new();
        for c in m.cells() {
            for k in 0..3 {
                let (a, b) = (c[k], c[(k + 1) % 3]);
                set.insert((a.min(b), a.max(b)));
            }
        }
        assert_eq!((m.n_vertices(), set.len(), m.n_cells()), (9, 16, 8));
        assert_eq!(euler(&m), 1);
    }

    #[test]
    fn crisscross_counts_and_areas() {
        let m0 = build_crisscross(0);
        assert_eq!((m0.n_cells(), m0.n_vertices()), (4, 5));
        let m2 = build_crisscross(2);
        assert_eq!((m2.n_cells(), m2.n_vertices()), (64, 41));
        let m3 = build_crisscross(3);
        for t in 0..m3.n_cells() {
            assert_eq!(m3.cell_area(t), 1.0 / 256.0);
        }
    }

    #[test]
    fn families_have_expected_sizes_and_topology() {
        for n in 0..5 {
            for fam in [MeshFamily::Diagonal, MeshFamily::Crisscross] {
                let m = fam.build(n);
                let per_square = if fam == MeshFamily::Diagonal { 2 } else { 4 };
                assert_eq!(m.n_cells(), per_square << (2 * n));
                if fam == MeshFamily::Crisscross {
                    assert_eq!(m.n_vertices(), ((1 << n) + 1usize).pow(2) + (1 << (2 * n)));
                }
                assert_eq!(euler(&m), 1);
                for t in 0..m.n_cells() {
                    assert!(m.cell_area(t) > 0.0);
                }
                for e in 0..m.n_edges() {
                    let k = m.edge_cells(e).len();
                    assert!(k == 1 || k == 2);
                    if k == 1 {
                        let [a, b] = m.edges()[e];
                        let on_side = |p: Point, q: Point| {
                            (p[0] == q[0] && (p[0] == 0.0 || p[0] == 1.0))
                                || (p[1] == q[1] && (p[1] == 0.0 || p[1] == 1.0))
                        };
                        assert!(on_side(m.vertices()[a], m.vertices()[b]));
                    }
                }
            }
        }
    }

    #[test]
    fn shape_parameter_independent_of_level() {
        for fam in [MeshFamily::Diagonal, MeshFamily::Crisscross] {
            let s0 = fam.build(0).shape_parameter();
            for n in 1..5 {
                assert!((fam.build(n).shape_parameter() - s0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn reference_refinement() {
        let mesh = Mesh::from_cells(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        let r = barycentric_refine(&mesh, 0);
        assert_eq!(r.barycenter, [1.0 / 3.0, 1.0 / 3.0]);
        for t in &r.sub_triangles {
            assert!((signed_area(t) - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn refinement_partitions_every_cell() {
        let mesh = build_crisscross(2);
        for t in 0..mesh.n_cells() {
            let r = barycentric_refine(&mesh, t);
            let total: f64 = r.sub_triangles.iter().map(signed_area).sum();
            assert!(r.sub_triangles.iter().all(|s| signed_area(s) > 0.0));
            assert!((total - mesh.cell_area(t)).abs() <= 1e-14 * mesh.cell_area(t));
            let sub_ref = reference_sub_triangles();
            let map = mesh.cell_map(t);
            for k in 0..3 {
                for i in 0..3 {
                    let p = map.map(sub_ref[k][i]);
                    let q = r.sub_triangles[k][i];
                    assert!((p[0] - q[0]).abs() < 1e-15 && (p[1] - q[1]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let mesh = Mesh::from_cells(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 2, 1]]).unwrap();
        assert!(mesh.cell_area(0) > 0.0);
        assert!(Mesh::from_cells(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], vec![[0, 1, 2]]).is_err());
    }

    #[test]
    fn text_format_round_trip() {
        let mesh = build_crisscross(1);
        let back = Mesh::from_text(&mesh.to_text()).unwrap();
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.cells(), mesh.cells());
        assert_eq!(back.n_edges(), mesh.n_edges());
        assert!(Mesh::from_text("3 3 1\n0 0 1\n1 0 1\n").is_err());
    }

    #[test]
    fn sub_triangle_lookup() {
        let sub = reference_sub_triangles();
        for (k, tri) in sub.iter().enumerate() {
            let c = [(tri[0][0] + tri[1][0] + tri[2][0]) / 3.0, (tri[0][1] + tri[1][1] + tri[2][1]) / 3.0];
            assert_eq!(reference_sub_triangle_of(c), k);
        }
    }

    #[test]
    fn shape_classes_of_structured_meshes() {
        assert_eq!(build_crisscross(3).shape_classes().1.len(), 4);
        assert_eq!(build_diagonal(3).shape_classes().1.len(), 2);
    }
}
