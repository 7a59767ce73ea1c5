//! Continuous Lagrange `P1`/`P2` spaces on the active mesh.

use crate::error::{CutFemError, Result};
use crate::geometry::CutTopology;
use crate::mesh::{BackgroundMesh, Point};
use crate::quadrature::map_to_triangle;

pub const MAX_LOCAL_DOFS: usize = 6;
const NO_DOF: usize = usize::MAX;

pub type Tensor = [[f64; 2]; 2];

/// Affine element map expressed through barycentric coordinates.
#[derive(Debug, Clone, Copy)]
pub struct ElementMap {
    pub vertices: [Point; 3],
    /// Gradients of the three barycentric coordinates (constant per element).
    pub grad_lambda: [Point; 3],
}

impl ElementMap {
    pub fn new(vertices: [Point; 3]) -> Self {
        let [a, b, c] = vertices;
        let (j00, j01, j10, j11) = (b[0] - a[0], c[0] - a[0], b[1] - a[1], c[1] - a[1]);
        let det = j00 * j11 - j01 * j10;
        // Rows of J^{-1}.
        let g1 = [j11 / det, -j01 / det];
        let g2 = [-j10 / det, j00 / det];
        let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
        Self {
            vertices,
            grad_lambda: [g0, g1, g2],
        }
    }

    pub fn barycentric(&self, x: Point) -> [f64; 3] {
        let a = self.vertices[0];
        let d = [x[0] - a[0], x[1] - a[1]];
        let g = &self.grad_lambda;
        let l1 = g[1][0] * d[0] + g[1][1] * d[1];
        let l2 = g[2][0] * d[0] + g[2][1] * d[1];
        [1.0 - l1 - l2, l1, l2]
    }
}

/// Basis functions of one element evaluated at a physical point.
#[derive(Debug, Clone, Copy)]
pub struct BasisEval {
    pub n: usize,
    pub values: [f64; MAX_LOCAL_DOFS],
    pub grads: [Point; MAX_LOCAL_DOFS],
    pub hessians: [Tensor; MAX_LOCAL_DOFS],
}

impl BasisEval {
    fn zeros(n: usize) -> Self {
        Self {
            n,
            values: [0.0; MAX_LOCAL_DOFS],
            grads: [[0.0; 2]; MAX_LOCAL_DOFS],
            hessians: [[[0.0; 2]; 2]; MAX_LOCAL_DOFS],
        }
    }

    /// Directional derivative of order `j` (0, 1 or 2) of basis function `i` along `n`.
    pub fn normal_derivative(&self, i: usize, j: usize, n: Point) -> f64 {
        match j {
            0 => self.values[i],
            1 => self.grads[i][0] * n[0] + self.grads[i][1] * n[1],
            2 => {
                let h = &self.hessians[i];
                n[0] * (h[0][0] * n[0] + h[0][1] * n[1]) + n[1] * (h[1][0] * n[0] + h[1][1] * n[1])
            }
            _ => 0.0,
        }
    }

    /// Gradient of the `j`-th normal derivative of basis function `i` (`j` ≤ 1).
    pub fn grad_of_normal_derivative(&self, i: usize, j: usize, n: Point) -> Point {
        match j {
            0 => self.grads[i],
            1 => {
                let h = &self.hessians[i];
                [h[0][0] * n[0] + h[0][1] * n[1], h[1][0] * n[0] + h[1][1] * n[1]]
            }
            _ => [0.0, 0.0],
        }
    }
}

/// Equal-order continuous finite element space on the active elements.
#[derive(Debug, Clone)]
pub struct FESpace {
    pub order: usize,
    pub n_dofs: usize,
    pub dof_coords: Vec<Point>,
    element_dofs: Vec<[usize; MAX_LOCAL_DOFS]>,
    maps: Vec<ElementMap>,
}

impl FESpace {
    /// Vertex dofs (and for `k = 2` edge-midpoint dofs) of all active elements.
    pub fn build(mesh: &BackgroundMesh, topo: &CutTopology, order: usize) -> Result<Self> {
        if !(1..=2).contains(&order) {
            return Err(CutFemError::UnsupportedOrder(order));
        }
        if topo.active.is_empty() {
            return Err(CutFemError::EmptyDomain);
        }
        let mut vertex_dof = vec![NO_DOF; mesh.n_vertices()];
        for &e in &topo.active {
            for &v in &mesh.triangles[e] {
                vertex_dof[v] = 0;
            }
        }
        let mut dof_coords = Vec::new();
        for (v, slot) in vertex_dof.iter_mut().enumerate() {
            if *slot == 0 {
                *slot = dof_coords.len();
                dof_coords.push(mesh.vertices[v]);
            }
        }
        let mut edge_dof = vec![NO_DOF; if order == 2 { mesh.facets.len() } else { 0 }];
        if order == 2 {
            for &e in &topo.active {
                for &f in &mesh.element_facets[e] {
                    edge_dof[f] = 0;
                }
            }
            for (f, slot) in edge_dof.iter_mut().enumerate() {
                if *slot == 0 {
                    *slot = dof_coords.len();
                    let [a, b] = mesh.facet_endpoints(f);
                    dof_coords.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
                }
            }
        }

        let mut element_dofs = vec![[NO_DOF; MAX_LOCAL_DOFS]; mesh.n_elements()];
        for &e in &topo.active {
            let tri = mesh.triangles[e];
            let dofs = &mut element_dofs[e];
            for i in 0..3 {
                dofs[i] = vertex_dof[tri[i]];
            }
            if order == 2 {
                for i in 0..3 {
                    dofs[3 + i] = edge_dof[mesh.element_facets[e][i]];
                }
            }
        }
        let maps = (0..mesh.n_elements())
            .map(|e| ElementMap::new(mesh.element_vertices(e)))
            .collect();
        Ok(Self {
            order,
            n_dofs: dof_coords.len(),
            dof_coords,
            element_dofs,
            maps,
        })
    }

    /// Number of local basis functions per element.
    pub fn local_dofs(&self) -> usize {
        if self.order == 1 {
            3
        } else {
            6
        }
    }

    pub fn is_active(&self, element: usize) -> bool {
        self.element_dofs[element][0] != NO_DOF
    }

    pub fn element_dofs(&self, element: usize) -> &[usize] {
        &self.element_dofs[element][..self.local_dofs()]
    }

    pub fn element_map(&self, element: usize) -> &ElementMap {
        &self.maps[element]
    }

    /// Values, gradients and Hessians of the element basis at physical point `x`.
    pub fn eval(&self, element: usize, x: Point) -> BasisEval {
        let map = &self.maps[element];
        let l = map.barycentric(x);
        let g = &map.grad_lambda;
        let mut out = BasisEval::zeros(self.local_dofs());
        if self.order == 1 {
            out.values[..3].copy_from_slice(&l);
            out.grads[..3].copy_from_slice(g);
            return out;
        }
        let outer = |a: Point, b: Point| -> Tensor { [[a[0] * b[0], a[0] * b[1]], [a[1] * b[0], a[1] * b[1]]] };
        for i in 0..3 {
            out.values[i] = l[i] * (2.0 * l[i] - 1.0);
            let s = 4.0 * l[i] - 1.0;
            out.grads[i] = [s * g[i][0], s * g[i][1]];
            let h = outer(g[i], g[i]);
            out.hessians[i] = h.map(|row| row.map(|v| 4.0 * v));
        }
        for i in 0..3 {
            let j = (i + 1) % 3;
            let k = 3 + i;
            out.values[k] = 4.0 * l[i] * l[j];
            out.grads[k] = [
                4.0 * (l[i] * g[j][0] + l[j] * g[i][0]),
                4.0 * (l[i] * g[j][1] + l[j] * g[i][1]),
            ];
            let (a, b) = (outer(g[i], g[j]), outer(g[j], g[i]));
            out.hessians[k] = [
                [4.0 * (a[0][0] + b[0][0]), 4.0 * (a[0][1] + b[0][1])],
                [4.0 * (a[1][0] + b[1][0]), 4.0 * (a[1][1] + b[1][1])],
            ];
        }
        out
    }

    /// Basis evaluation at a reference point, keeping derivatives up to `derivative_order`.
    pub fn eval_basis(&self, element: usize, reference: Point, derivative_order: usize) -> BasisEval {
        let x = map_to_triangle(&self.maps[element].vertices, reference);
        let mut out = self.eval(element, x);
        if derivative_order < 2 {
            out.hessians = [[[0.0; 2]; 2]; MAX_LOCAL_DOFS];
        }
        if derivative_order < 1 {
            out.grads = [[0.0; 2]; MAX_LOCAL_DOFS];
        }
        out
    }

    /// Nodal interpolant of a scalar function.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        self.dof_coords.iter().map(|&x| f(x)).collect()
    }

    /// Nodal interpolant of a vector function, components interleaved per dof.
    pub fn interpolate_vector(&self, f: impl Fn(Point) -> [f64; 2]) -> Vec<f64> {
        self.dof_coords.iter().flat_map(|&x| f(x)).collect()
    }

    /// Value and gradient of the scalar field `coeffs[stride * dof + component]`.
    pub fn eval_field(
        &self,
        basis: &BasisEval,
        element: usize,
        coeffs: &[f64],
        stride: usize,
        component: usize,
    ) -> (f64, Point) {
        let mut v = 0.0;
        let mut g = [0.0; 2];
        for (i, &d) in self.element_dofs(element).iter().enumerate() {
            let c = coeffs[stride * d + component];
            v += c * basis.values[i];
            g[0] += c * basis.grads[i][0];
            g[1] += c * basis.grads[i][1];
        }
        (v, g)
    }

    /// Value and gradient of an interleaved 2-vector field.
    pub fn eval_vector(&self, basis: &BasisEval, element: usize, coeffs: &[f64]) -> ([f64; 2], Tensor) {
        let (u0, g0) = self.eval_field(basis, element, coeffs, 2, 0);
        let (u1, g1) = self.eval_field(basis, element, coeffs, 2, 1);
        ([u0, u1], [g0, g1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{classify, LevelSet};
    use crate::mesh::{build_structured_mesh, BoundingBox};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn full_space(n: usize, order: usize) -> (BackgroundMesh, FESpace) {
        let mesh = build_structured_mesh(n, n, BoundingBox::unit_square()).unwrap();
        let topo = classify(&mesh, &LevelSet::constant(-1.0), 0);
        let space = FESpace::build(&mesh, &topo, order).unwrap();
        (mesh, space)
    }

    fn random_point_in(map: &ElementMap, rng: &mut ChaCha8Rng) -> Point {
        let (mut a, mut b): (f64, f64) = (rng.gen(), rng.gen());
        if a + b > 1.0 {
            a = 1.0 - a;
            b = 1.0 - b;
        }
        map_to_triangle(&map.vertices, [a, b])
    }

    #[test]
    fn dof_counts() {
        let (_, p1) = full_space(10, 1);
        assert_eq!(p1.n_dofs, 121);
        assert_eq!(3 * p1.n_dofs, 363);
        let (_, p2) = full_space(1, 2);
        assert_eq!(p2.n_dofs, 9);
        assert_eq!(p2.element_dofs(0).len(), 6);
        let (mesh, _) = full_space(10, 1);
        let topo = classify(&mesh, &LevelSet::circle([0.5, 0.5], 0.45), 0);
        let cut = FESpace::build(&mesh, &topo, 1).unwrap();
        assert!(cut.n_dofs < 121);
    }

    #[test]
    fn single_triangle_p2_has_six_dofs() {
        let vertices = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let triangles = vec![[0, 1, 2]];
        let (facets, element_facets) = crate::mesh::build_facets(&vertices, &triangles).unwrap();
        let mesh = BackgroundMesh {
            vertices,
            triangles,
            facets,
            element_facets,
            h: 1.0,
            bbox: BoundingBox::unit_square(),
            nx: 1,
            ny: 1,
        };
        let topo = classify(&mesh, &LevelSet::constant(-1.0), 0);
        assert_eq!(FESpace::build(&mesh, &topo, 2).unwrap().n_dofs, 6);
    }

    #[test]
    fn rejects_unsupported_order() {
        let mesh = build_structured_mesh(2, 2, BoundingBox::unit_square()).unwrap();
        let topo = classify(&mesh, &LevelSet::constant(-1.0), 0);
        assert!(matches!(FESpace::build(&mesh, &topo, 3), Err(CutFemError::UnsupportedOrder(3))));
        let empty = classify(&mesh, &LevelSet::constant(1.0), 0);
        assert!(matches!(FESpace::build(&mesh, &empty, 1), Err(CutFemError::EmptyDomain)));
    }

    #[test]
    fn p1_barycenter_values() {
        let (_, space) = full_space(3, 1);
        let b = space.eval_basis(4, [1.0 / 3.0, 1.0 / 3.0], 1);
        for i in 0..3 {
            assert!((b.values[i] - 1.0 / 3.0).abs() < 1e-15);
        }
        let other = space.eval_basis(4, [0.1, 0.7], 1);
        assert_eq!(b.grads[..3], other.grads[..3]);
    }

    #[test]
    fn partition_of_unity_and_polynomial_reproduction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for order in 1..=2 {
            let (_, space) = full_space(4, order);
            let quad = |x: Point| 0.3 + 1.2 * x[0] - 0.7 * x[1] + if order == 2 { x[0] * x[0] - 2.0 * x[0] * x[1] + 0.5 * x[1] * x[1] } else { 0.0 };
            let quad_grad = |x: Point| {
                if order == 2 {
                    [1.2 + 2.0 * x[0] - 2.0 * x[1], -0.7 - 2.0 * x[0] + x[1]]
                } else {
                    [1.2, -0.7]
                }
            };
            let coeffs = space.interpolate(quad);
            for e in [0, 7, 19, 31] {
                for _ in 0..200 {
                    let x = random_point_in(space.element_map(e), &mut rng);
                    let b = space.eval(e, x);
                    let sum: f64 = b.values[..b.n].iter().sum();
                    assert!((sum - 1.0).abs() < 1e-13);
                    let (v, g) = space.eval_field(&b, e, &coeffs, 1, 0);
                    assert!((v - quad(x)).abs() < 1e-12);
                    let ge = quad_grad(x);
                    assert!((g[0] - ge[0]).abs() < 1e-12 && (g[1] - ge[1]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn p2_hessians_match_finite_differences() {
        let (_, space) = full_space(3, 2);
        let e = 5;
        let x = map_to_triangle(&space.element_map(e).vertices, [0.2, 0.3]);
        let b = space.eval(e, x);
        let eps = 1e-6;
        for dir in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[dir] += eps;
            xm[dir] -= eps;
            let (bp, bm) = (space.eval(e, xp), space.eval(e, xm));
            for i in 0..6 {
                for c in 0..2 {
                    let fd = (bp.grads[i][c] - bm.grads[i][c]) / (2.0 * eps);
                    assert!((fd - b.hessians[i][c][dir]).abs() < 1e-6);
                }
            }
        }
        let p1 = full_space(3, 1).1.eval(e, x);
        assert!(p1.hessians.iter().flatten().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn interpolation_error_quarters_under_refinement() {
        use std::f64::consts::PI;
        let u = |x: Point| -(2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).sin();
        let err = |n: usize| {
            let (mesh, space) = full_space(n, 1);
            let coeffs = space.interpolate(u);
            let mut sum = 0.0;
            for e in 0..mesh.n_elements() {
                for q in crate::geometry::full_element_rule(&mesh, e, 6) {
                    let b = space.eval(e, q.x);
                    let (v, _) = space.eval_field(&b, e, &coeffs, 1, 0);
                    sum += q.w * (v - u(q.x)).powi(2);
                }
            }
            sum.sqrt()
        };
        let ratio = err(16) / err(32);
        assert!((ratio - 4.0).abs() < 0.3, "ratio {ratio}");
    }
}
