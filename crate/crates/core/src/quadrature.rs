//! Quadrature on the reference triangle `conv{(0,0), (1,0), (0,1)}` and
//! composite rules over its barycentric refinement.
//!
//! Point sets:
//!
//! | degree | points | rule |
//! |--------|--------|------|
//! | 1      | 1      | centroid |
//! | 2      | 3      | interior Strang–Fix rule, `(2/3, 1/6, 1/6)` orbit |
//! | 3, 4   | 6      | Dunavant degree 4 |
//! | 5      | 7      | Radon rule, `(6 ± √15)/21` orbits |
//! | 6      | 12     | Dunavant degree 6 |
//! | 7, 8   | 16     | Dunavant degree 8 |
//! | 9, 10  | 36     | collapsed (Duffy) 6x6 Gauss–Legendre product |
//!
//! All weights are positive and all points are interior. Weights sum to 1;
//! integrals carry the area factor `1/2` of the reference triangle.

use crate::error::{Result, StokesError};
use crate::mesh::{reference_sub_triangle_of, reference_sub_triangles, AffineMap, Mesh, Point};

pub const MAX_DEGREE: usize = 10;

#[derive(Clone, Debug)]
pub struct QuadRule {
    /// Guaranteed exactness degree.
    pub degree: usize,
    /// Barycentric coordinates `(λ0, λ1, λ2)`; the reference point is `(λ1, λ2)`.
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

fn push_s3(points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>, w: f64) {
    points.push([1.0 / 3.0; 3]);
    weights.push(w);
}

fn push_s21(points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>, a: f64, w: f64) {
    let b = 1.0 - 2.0 * a;
    for p in [[b, a, a], [a, b, a], [a, a, b]] {
        points.push(p);
        weights.push(w);
    }
}

fn push_s111(points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>, a: f64, b: f64, w: f64) {
    let c = 1.0 - a - b;
    for p in [[a, b, c], [b, c, a], [c, a, b], [b, a, c], [a, c, b], [c, b, a]] {
        points.push(p);
        weights.push(w);
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes.push(0.5 * (1.0 - x));
        weights.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

fn collapsed_product(n: usize) -> (Vec<[f64; 3]>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let xi1 = x[i];
            let xi2 = (1.0 - x[i]) * x[j];
            points.push([1.0 - xi1 - xi2, xi1, xi2]);
            // reference area 1/2 is divided out
            weights.push(2.0 * w[i] * w[j] * (1.0 - x[i]));
        }
    }
    (points, weights)
}

/// Returns a rule integrating all polynomials of total degree `<= degree` exactly.
pub fn make_rule(degree: usize) -> Result<QuadRule> {
    let mut p = Vec::new();
    let mut w = Vec::new();
    match degree {
        1 => push_s3(&mut p, &mut w, 1.0),
        2 => push_s21(&mut p, &mut w, 1.0 / 6.0, 1.0 / 3.0),
        3 | 4 => {
            push_s21(&mut p, &mut w, 0.445948490915965, 0.223381589678011);
            push_s21(&mut p, &mut w, 0.091576213509771, 0.109951743655322);
        }
        5 => {
            let s = 15f64.sqrt();
            push_s3(&mut p, &mut w, 0.225);
            push_s21(&mut p, &mut w, (6.0 - s) / 21.0, (155.0 - s) / 1200.0);
            push_s21(&mut p, &mut w, (6.0 + s) / 21.0, (155.0 + s) / 1200.0);
        }
        6 => {
            push_s21(&mut p, &mut w, 0.249286745170910, 0.116786275726379);
            push_s21(&mut p, &mut w, 0.063089014491502, 0.050844906370207);
            push_s111(&mut p, &mut w, 0.053145049844817, 0.310352451033784, 0.082851075618374);
        }
        7 | 8 => {
            push_s3(&mut p, &mut w, 0.144315607677787);
            push_s21(&mut p, &mut w, 0.459292588292723, 0.095091634267285);
            push_s21(&mut p, &mut w, 0.170569307751760, 0.103217370534718);
            push_s21(&mut p, &mut w, 0.050547228317031, 0.032458497623198);
            push_s111(&mut p, &mut w, 0.008394777409958, 0.263112829634638, 0.027230314174435);
        }
        9 | 10 => (p, w) = collapsed_product(6),
        d => return Err(StokesError::UnsupportedQuadratureDegree(d)),
    }
    // tabulated weights carry 15 digits; renormalize the sum
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Ok(QuadRule { degree, points: p, weights: w })
}

impl QuadRule {
    pub fn reference_point(&self, i: usize) -> Point {
        [self.points[i][1], self.points[i][2]]
    }

    /// `∫_{K_ref} f`.
    pub fn integrate_reference(&self, f: impl Fn(Point) -> f64) -> f64 {
        0.5 * (0..self.points.len()).map(|i| self.weights[i] * f(self.reference_point(i))).sum::<f64>()
    }
}

/// A base rule replicated on the three sub-triangles of the barycentric refinement.
#[derive(Clone, Debug)]
pub struct CompositeRule {
    pub base: QuadRule,
}

impl CompositeRule {
    pub fn new(degree: usize) -> Result<Self> {
        Ok(CompositeRule { base: make_rule(degree)? })
    }
}

/// A quadrature point on the reference triangle, annotated with the
/// barycentric sub-triangle it belongs to and its coordinates there.
#[derive(Clone, Copy, Debug)]
pub struct RefPoint {
    pub xi: Point,
    /// Weights sum to 1 over the reference triangle.
    pub weight: f64,
    pub sub: usize,
    pub sub_xi: Point,
}

/// Per-cell quadrature layout: one rule on the whole cell, or the composite
/// rule on its barycentric refinement.
#[derive(Clone, Debug)]
pub enum CellRule {
    Standard(QuadRule),
    Composite(CompositeRule),
}

impl CellRule {
    pub fn standard(degree: usize) -> Result<Self> {
        Ok(CellRule::Standard(make_rule(degree)?))
    }

    pub fn composite(degree: usize) -> Result<Self> {
        Ok(CellRule::Composite(CompositeRule::new(degree)?))
    }

    pub fn degree(&self) -> usize {
        match self {
            CellRule::Standard(r) => r.degree,
            CellRule::Composite(c) => c.base.degree,
        }
    }

    pub fn reference_points(&self) -> Vec<RefPoint> {
        let subs = reference_sub_triangles();
        let sub_maps = subs.map(|t| AffineMap::from_triangle(&t));
        match self {
            CellRule::Standard(rule) => (0..rule.points.len())
                .map(|i| {
                    let xi = rule.reference_point(i);
                    let sub = reference_sub_triangle_of(xi);
                    RefPoint { xi, weight: rule.weights[i], sub, sub_xi: sub_maps[sub].inverse_map(xi) }
                })
                .collect(),
            CellRule::Composite(c) => (0..3)
                .flat_map(|k| {
                    let map = sub_maps[k];
                    (0..c.base.points.len()).map(move |i| {
                        let sub_xi = c.base.reference_point(i);
                        RefPoint { xi: map.map(sub_xi), weight: c.base.weights[i] / 3.0, sub: k, sub_xi }
                    })
                })
                .collect(),
        }
    }
}

/// `∫_K f` by the affine image of `rule`.
pub fn integrate_cell(mesh: &Mesh, cell: usize, f: impl Fn(Point) -> f64, rule: &CellRule) -> f64 {
    let map = mesh.cell_map(cell);
    let area = 0.5 * map.det();
    area * rule.reference_points().iter().map(|q| q.weight * f(map.map(q.xi))).sum::<f64>()
}

/// `a! b! / (a + b + 2)!`, the integral of `x^a y^b` over the reference triangle.
pub fn monomial_integral(a: u32, b: u32) -> f64 {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    fact(a) * fact(b) / fact(a + b + 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_crisscross;

    #[test]
    fn exactness_all_degrees() {
        for degree in 1..=MAX_DEGREE {
            let rule = make_rule(degree).unwrap();
            assert!(rule.weights.iter().all(|w| w.is_finite() && *w > 0.0));
            assert!(rule.points.iter().all(|p| p.iter().all(|l| (0.0..=1.0).contains(l))));
            for a in 0..=degree as u32 {
                for b in 0..=(degree as u32 - a) {
                    let got = rule.integrate_reference(|x| x[0].powi(a as i32) * x[1].powi(b as i32));
                    let exact = monomial_integral(a, b);
                    assert!((got - exact).abs() <= 1e-14, "degree {degree}, x^{a} y^{b}: {got} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn unsupported_degrees() {
        assert!(make_rule(0).is_err());
        assert!(make_rule(11).is_err());
    }

    #[test]
    fn basic_integrals() {
        let r6 = make_rule(6).unwrap();
        assert!((r6.integrate_reference(|_| 1.0) - 0.5).abs() < 1e-15);
        assert!((r6.integrate_reference(|x| x[0].powi(2) * x[1].powi(2)) - 1.0 / 180.0).abs() < 1e-15);
        // degree 7 is beyond the rule: not exact
        assert!((r6.integrate_reference(|x| x[0].powi(7)) - monomial_integral(7, 0)).abs() > 1e-8);
    }

    fn reference_mesh() -> Mesh {
        Mesh::from_cells(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn unit_integrand_gives_area() {
        let mesh = build_crisscross(1);
        for rule in [CellRule::standard(6).unwrap(), CellRule::composite(6).unwrap()] {
            for t in 0..mesh.n_cells() {
                let v = integrate_cell(&mesh, t, |_| 1.0, &rule);
                assert!((v - mesh.cell_area(t)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn composite_integrates_sub_triangle_indicator() {
        let mesh = reference_mesh();
        let rule = CellRule::composite(6).unwrap();
        let map = mesh.cell_map(0);
        let pts = rule.reference_points();
        let v: f64 = 0.5 * pts.iter().filter(|q| q.sub == 1).map(|q| q.weight).sum::<f64>();
        assert!((v - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(map.det(), 1.0);
    }

    /// A function that is quadratic on each barycentric sub-triangle and continuous.
    fn piecewise_quadratic(x: Point) -> f64 {
        let lambda = [1.0 - x[0] - x[1], x[0], x[1]];
        let m = lambda.iter().cloned().fold(f64::INFINITY, f64::min);
        (m - 1.0 / 3.0).powi(2) + x[0] * x[1]
    }

    /// Brute-force oracle: a uniform `n x n` grid of triangles, each integrated
    /// with the 3-point edge-midpoint rule.
    fn grid_integral(f: impl Fn(Point) -> f64, n: usize) -> f64 {
        let h = 1.0 / n as f64;
        let tri = |p: [Point; 3]| {
            let mid = |a: Point, b: Point| [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            h * h / 6.0 * (f(mid(p[0], p[1])) + f(mid(p[1], p[2])) + f(mid(p[2], p[0])))
        };
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n - i {
                let (x0, y0) = (i as f64 * h, j as f64 * h);
                s += tri([[x0, y0], [x0 + h, y0], [x0, y0 + h]]);
                if i + j + 1 < n {
                    s += tri([[x0 + h, y0], [x0 + h, y0 + h], [x0, y0 + h]]);
                }
            }
        }
        s
    }

    #[test]
    fn composite_matches_grid_oracle_on_piecewise_quadratic() {
        let mesh = reference_mesh();
        let rule = CellRule::composite(6).unwrap();
        let composite = integrate_cell(&mesh, 0, piecewise_quadratic, &rule);
        // the oracle is exact on grid triangles away from the kinks, so it converges fast
        let coarse = grid_integral(piecewise_quadratic, 50);
        let fine = grid_integral(piecewise_quadratic, 400);
        assert!((composite - coarse).abs() <= 1e-5 * composite.abs(), "{composite} vs {coarse}");
        assert!((composite - fine).abs() <= 1e-6 * composite.abs(), "{composite} vs {fine}");
        assert!((composite - fine).abs() < (composite - coarse).abs());
        // the standard rule cannot see the kinks
        let standard = integrate_cell(&mesh, 0, piecewise_quadratic, &CellRule::standard(6).unwrap());
        assert!((standard - fine).abs() > 10.0 * (composite - fine).abs());
    }

    #[test]
    fn composite_and_standard_agree_on_smooth_function() {
        let mesh = build_crisscross(3);
        let f = |x: Point| (2.0 * std::f64::consts::PI * x[0]).sin() * (2.0 * std::f64::consts::PI * x[1]).sin();
        let g = |x: Point| f(x).powi(2);
        let std6 = CellRule::standard(6).unwrap();
        let comp6 = CellRule::composite(6).unwrap();
        let a: f64 = (0..mesh.n_cells()).map(|t| integrate_cell(&mesh, t, g, &std6)).sum();
        let b: f64 = (0..mesh.n_cells()).map(|t| integrate_cell(&mesh, t, g, &comp6)).sum();
        assert!((a - b).abs() <= 1e-4 * b.abs());
        assert!((b - 0.25).abs() < 1e-6);
    }

    #[test]
    fn sub_coordinates_are_consistent() {
        let subs = reference_sub_triangles().map(|t| AffineMap::from_triangle(&t));
        for rule in [CellRule::standard(6).unwrap(), CellRule::composite(4).unwrap()] {
            for q in rule.reference_points() {
                let back = subs[q.sub].map(q.sub_xi);
                assert!((back[0] - q.xi[0]).abs() < 1e-15 && (back[1] - q.xi[1]).abs() < 1e-15);
                assert!(q.sub_xi[0] >= -1e-14 && q.sub_xi[1] >= -1e-14 && q.sub_xi[0] + q.sub_xi[1] <= 1.0 + 1e-14);
            }
        }
    }
}
