//! Level-set classification of background elements, the active mesh and
//! ghost facets, and quadrature on cut volumes and the embedded interface.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{CutFemError, Result};
use crate::mesh::{signed_area, BackgroundMesh, Point};
use crate::quadrature::{gauss_legendre, gauss_points_for_degree, map_to_triangle, triangle_rule};

pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(Point) -> Point + Send + Sync>;

/// Relative threshold (in units of h) below which level-set samples are snapped to zero.
pub const SNAP_TOLERANCE: f64 = 1e-12;

/// Signed distance-like function, negative inside the fluid domain.
#[derive(Clone)]
pub struct LevelSet {
    func: ScalarFn,
    gradient: Option<GradientFn>,
}

impl std::fmt::Debug for LevelSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LevelSet")
            .field("has_gradient", &self.gradient.is_some())
            .finish()
    }
}

impl LevelSet {
    pub fn new(func: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            func: Arc::new(func),
            gradient: None,
        }
    }

    pub fn with_gradient(mut self, gradient: impl Fn(Point) -> Point + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn circle(center: Point, radius: f64) -> Self {
        Self::new(move |x| (x[0] - center[0]).hypot(x[1] - center[1]) - radius).with_gradient(
            move |x| {
                let d = [x[0] - center[0], x[1] - center[1]];
                let r = d[0].hypot(d[1]);
                if r == 0.0 {
                    [0.0, 0.0]
                } else {
                    [d[0] / r, d[1] / r]
                }
            },
        )
    }

    pub fn constant(value: f64) -> Self {
        Self::new(move |_| value).with_gradient(|_| [0.0, 0.0])
    }

    /// The same level set translated by `offset`.
    pub fn shifted(&self, offset: Point) -> Self {
        let func = self.func.clone();
        let mut shifted = Self::new(move |x| func([x[0] - offset[0], x[1] - offset[1]]));
        if let Some(g) = self.gradient.clone() {
            shifted.gradient = Some(Arc::new(move |x| g([x[0] - offset[0], x[1] - offset[1]])));
        }
        shifted
    }

    pub fn eval(&self, x: Point) -> f64 {
        (self.func)(x)
    }

    pub fn gradient(&self, x: Point) -> Option<Point> {
        self.gradient.as_ref().map(|g| g(x))
    }

    /// Level-set value with the near-zero snap applied.
    pub fn sample(&self, x: Point, h: f64) -> f64 {
        snap(self.eval(x), h)
    }

    /// Snapped values at the mesh vertices (the piecewise-linear interpolant).
    pub fn nodal_values(&self, mesh: &BackgroundMesh) -> Vec<f64> {
        mesh.vertices.iter().map(|&x| self.sample(x, mesh.h)).collect()
    }
}

fn snap(value: f64, h: f64) -> f64 {
    if value.abs() < SNAP_TOLERANCE * h {
        0.0
    } else {
        value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum ElementKind {
    Inside,
    Outside,
    Cut,
}

/// Reference-lattice sub-triangulation of depth `d` (4^d sub-triangles).
#[derive(Debug, Clone)]
pub struct SubLattice {
    pub depth: usize,
    pub points: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
}

impl SubLattice {
    pub fn new(depth: usize) -> Self {
        let m = 1usize << depth;
        let index = |i: usize, j: usize| -> usize {
            // Row-major over j, rows shrink as j grows.
            (0..j).map(|r| m + 1 - r).sum::<usize>() + i
        };
        let mut points = Vec::new();
        for j in 0..=m {
            for i in 0..=(m - j) {
                points.push([i as f64 / m as f64, j as f64 / m as f64]);
            }
        }
        let mut triangles = Vec::with_capacity(m * m);
        for j in 0..m {
            for i in 0..(m - j) {
                triangles.push([index(i, j), index(i + 1, j), index(i, j + 1)]);
                if i + j + 1 < m {
                    triangles.push([index(i + 1, j), index(i + 1, j + 1), index(i, j + 1)]);
                }
            }
        }
        Self {
            depth,
            points,
            triangles,
        }
    }
}

/// Element labels, the active mesh and its facet sets.
#[derive(Debug, Clone)]
pub struct CutTopology {
    pub labels: Vec<ElementKind>,
    /// Elements intersecting the domain (Inside or Cut), ascending.
    pub active: Vec<usize>,
    /// Elements intersecting the interface, ascending.
    pub cut: Vec<usize>,
    /// Facets shared by two active elements.
    pub interior_facets: Vec<usize>,
    /// Interior facets with at least one cut neighbour.
    pub ghost_facets: Vec<usize>,
    pub lattice: SubLattice,
    /// Snapped level-set samples at the lattice points of every element.
    pub samples: Vec<Vec<f64>>,
}

impl CutTopology {
    pub fn is_active(&self, element: usize) -> bool {
        self.labels[element] != ElementKind::Outside
    }

    pub fn is_cut(&self, element: usize) -> bool {
        self.labels[element] == ElementKind::Cut
    }

    pub fn subdivision(&self) -> usize {
        self.lattice.depth
    }
}

/// Labels each element from the signs of the level set sampled on its
/// vertices (`subdivision = 0`) or on a refined lattice of depth `subdivision`.
pub fn classify(mesh: &BackgroundMesh, ls: &LevelSet, subdivision: usize) -> CutTopology {
    let lattice = SubLattice::new(subdivision);
    let samples: Vec<Vec<f64>> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let tri = mesh.element_vertices(e);
            lattice
                .points
                .iter()
                .map(|&xi| {
                    // Lattice corners coincide with mesh vertices exactly.
                    let x = match (xi[0], xi[1]) {
                        (0.0, 0.0) => tri[0],
                        (1.0, _) => tri[1],
                        (_, 1.0) => tri[2],
                        _ => map_to_triangle(&tri, xi),
                    };
                    ls.sample(x, mesh.h)
                })
                .collect()
        })
        .collect();

    let labels: Vec<ElementKind> = samples
        .iter()
        .map(|vals| {
            if vals.iter().all(|&v| v <= 0.0) {
                ElementKind::Inside
            } else if vals.iter().all(|&v| v > 0.0) {
                ElementKind::Outside
            } else {
                ElementKind::Cut
            }
        })
        .collect();

    let active: Vec<usize> = (0..labels.len())
        .filter(|&e| labels[e] != ElementKind::Outside)
        .collect();
    let cut: Vec<usize> = (0..labels.len())
        .filter(|&e| labels[e] == ElementKind::Cut)
        .collect();
    let mut topo = CutTopology {
        labels,
        active,
        cut,
        interior_facets: Vec::new(),
        ghost_facets: Vec::new(),
        lattice,
        samples,
    };
    topo.interior_facets = mesh
        .facets
        .iter()
        .enumerate()
        .filter_map(|(f, facet)| {
            let (p, m) = facet.neighbors()?;
            (topo.is_active(p) && topo.is_active(m)).then_some(f)
        })
        .collect();
    topo.ghost_facets = ghost_facets(mesh, &topo);
    topo
}

/// Interior facets of the active mesh touching at least one cut element.
pub fn ghost_facets(mesh: &BackgroundMesh, topo: &CutTopology) -> Vec<usize> {
    topo.interior_facets
        .iter()
        .copied()
        .filter(|&f| {
            let facet = &mesh.facets[f];
            topo.is_cut(facet.plus) || facet.minus.is_some_and(|m| topo.is_cut(m))
        })
        .collect()
}

/// Straight piece of the reconstructed interface with its outward unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceSegment {
    pub a: Point,
    pub b: Point,
    pub normal: Point,
}

impl InterfaceSegment {
    pub fn length(&self) -> f64 {
        (self.b[0] - self.a[0]).hypot(self.b[1] - self.a[1])
    }
}

/// Result of clipping one triangle against the linear interpolant of the level set.
#[derive(Debug, Clone, PartialEq)]
pub struct CutPiece {
    /// Convex polygon covering `T ∩ {φ ≤ 0}` (counter-clockwise, possibly degenerate).
    pub polygon: Vec<Point>,
    /// `Γ ∩ T`, present only when the triangle reaches outside and the piece has positive length.
    pub segment: Option<InterfaceSegment>,
}

/// Clips a triangle with nodal level-set values `phi` against `{φ ≤ 0}`.
pub fn clip_cut_element(tri: &[Point; 3], phi: [f64; 3]) -> Result<CutPiece> {
    if phi.iter().all(|&v| v > 0.0) || phi.iter().all(|&v| v < 0.0) {
        return Err(CutFemError::InvalidInput(format!(
            "level-set values {phi:?} do not change sign on the element"
        )));
    }
    let mut polygon = Vec::with_capacity(4);
    let mut zeros: Vec<Point> = Vec::with_capacity(2);
    for i in 0..3 {
        let j = (i + 1) % 3;
        let (xi, xj) = (tri[i], tri[j]);
        let (pi, pj) = (phi[i], phi[j]);
        if pi <= 0.0 {
            polygon.push(xi);
        }
        if pi == 0.0 {
            zeros.push(xi);
        }
        if (pi < 0.0 && pj > 0.0) || (pi > 0.0 && pj < 0.0) {
            let t = pi / (pi - pj);
            let x = [xi[0] + t * (xj[0] - xi[0]), xi[1] + t * (xj[1] - xi[1])];
            polygon.push(x);
            zeros.push(x);
        }
    }

    let reaches_outside = phi.iter().any(|&v| v > 0.0);
    let segment = if reaches_outside && zeros.len() == 2 {
        let grad = linear_gradient(tri, phi);
        let norm = grad[0].hypot(grad[1]);
        let seg = InterfaceSegment {
            a: zeros[0],
            b: zeros[1],
            normal: [grad[0] / norm, grad[1] / norm],
        };
        let scale = (tri[1][0] - tri[0][0]).hypot(tri[1][1] - tri[0][1]);
        (seg.length() > 1e-14 * scale && norm > 0.0).then_some(seg)
    } else {
        None
    };
    Ok(CutPiece { polygon, segment })
}

fn linear_gradient(tri: &[Point; 3], phi: [f64; 3]) -> Point {
    let [a, b, c] = tri;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let (d1, d2) = (phi[1] - phi[0], phi[2] - phi[0]);
    [
        (d1 * (c[1] - a[1]) - d2 * (b[1] - a[1])) / det,
        (d2 * (b[0] - a[0]) - d1 * (c[0] - a[0])) / det,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint {
    pub x: Point,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfacePoint {
    pub x: Point,
    pub w: f64,
    pub normal: Point,
}

/// Fan-triangulates a convex polygon and maps a triangle rule exact to `order`.
///
/// Polygons with area below `1e-14 * scale^2` yield an empty rule.
pub fn volume_quadrature(polygon: &[Point], order: usize, scale: f64) -> Vec<QuadPoint> {
    if polygon.len() < 3 || polygon_area(polygon) < 1e-14 * scale * scale {
        return Vec::new();
    }
    let rule = triangle_rule(order);
    let mut points = Vec::with_capacity(rule.len() * (polygon.len() - 2));
    for k in 1..polygon.len() - 1 {
        let tri = [polygon[0], polygon[k], polygon[k + 1]];
        let jac = 2.0 * signed_area(&tri);
        if jac <= 0.0 {
            continue;
        }
        for &(xi, w) in rule {
            points.push(QuadPoint {
                x: map_to_triangle(&tri, xi),
                w: w * jac,
            });
        }
    }
    points
}

/// Gauss–Legendre rule on an interface segment, exact to `order`.
pub fn surface_quadrature(segment: &InterfaceSegment, order: usize) -> Vec<InterfacePoint> {
    let len = segment.length();
    if len == 0.0 {
        return Vec::new();
    }
    gauss_legendre(gauss_points_for_degree(order))
        .into_iter()
        .map(|(t, w)| InterfacePoint {
            x: [
                segment.a[0] + t * (segment.b[0] - segment.a[0]),
                segment.a[1] + t * (segment.b[1] - segment.a[1]),
            ],
            w: w * len,
            normal: segment.normal,
        })
        .collect()
}

pub fn polygon_area(polygon: &[Point]) -> f64 {
    let n = polygon.len();
    0.5 * (0..n)
        .map(|i| {
            let (p, q) = (polygon[i], polygon[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
}

/// The reconstructed geometry of one active element.
#[derive(Debug, Clone, Default)]
pub struct ElementCut {
    pub polygons: Vec<Vec<Point>>,
    pub segments: Vec<InterfaceSegment>,
}

/// Clips every cut element (on its sub-lattice) into inside polygons and interface segments.
pub fn cut_element_geometry(mesh: &BackgroundMesh, topo: &CutTopology, element: usize) -> ElementCut {
    let tri = mesh.element_vertices(element);
    match topo.labels[element] {
        ElementKind::Outside => ElementCut::default(),
        ElementKind::Inside => ElementCut {
            polygons: vec![tri.to_vec()],
            segments: Vec::new(),
        },
        ElementKind::Cut => {
            let lattice = &topo.lattice;
            let vals = &topo.samples[element];
            let mut cut = ElementCut::default();
            for sub in &lattice.triangles {
                let sub_tri = sub.map(|i| map_to_triangle(&tri, lattice.points[i]));
                let phi = sub.map(|i| vals[i]);
                if phi.iter().all(|&v| v <= 0.0) {
                    cut.polygons.push(sub_tri.to_vec());
                } else if phi.iter().all(|&v| v > 0.0) {
                    continue;
                } else if let Ok(piece) = clip_cut_element(&sub_tri, phi) {
                    cut.polygons.push(piece.polygon);
                    cut.segments.extend(piece.segment);
                }
            }
            cut
        }
    }
}

/// Volume and interface quadrature for all active elements.
#[derive(Debug, Clone)]
pub struct CutQuadrature {
    pub order: usize,
    /// Points on `T ∩ Ω`, indexed by background element (empty when outside).
    pub volume: Vec<Vec<QuadPoint>>,
    /// Points on `Γ ∩ T`, indexed by background element.
    pub interface: Vec<Vec<InterfacePoint>>,
}

impl CutQuadrature {
    pub fn build(mesh: &BackgroundMesh, topo: &CutTopology, order: usize) -> Self {
        let per_element: Vec<(Vec<QuadPoint>, Vec<InterfacePoint>)> = (0..mesh.n_elements())
            .into_par_iter()
            .map(|e| {
                let geo = cut_element_geometry(mesh, topo, e);
                let vol = geo
                    .polygons
                    .iter()
                    .flat_map(|p| volume_quadrature(p, order, mesh.h))
                    .collect();
                let surf = geo
                    .segments
                    .iter()
                    .flat_map(|s| surface_quadrature(s, order))
                    .collect();
                (vol, surf)
            })
            .collect();
        let (volume, interface) = per_element.into_iter().unzip();
        Self {
            order,
            volume,
            interface,
        }
    }

    pub fn domain_area(&self) -> f64 {
        self.volume.iter().flatten().map(|q| q.w).sum()
    }

    pub fn interface_length(&self) -> f64 {
        self.interface.iter().flatten().map(|q| q.w).sum()
    }
}

/// Quadrature over a whole background element (used on the fictitious domain).
pub fn full_element_rule(mesh: &BackgroundMesh, element: usize, order: usize) -> Vec<QuadPoint> {
    volume_quadrature(&mesh.element_vertices(element), order, mesh.h)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GeometryReport {
    pub cut_elements: usize,
    /// Largest number of facets crossed on a shortest walk from a cut to an inside element.
    pub max_walk: usize,
    pub unreachable: Vec<usize>,
}

impl GeometryReport {
    pub fn has_unreachable(&self) -> bool {
        !self.unreachable.is_empty()
    }
}

/// Breadth-first walk across active interior facets from every cut element
/// to its nearest uncut inside element.
pub fn check_geometry_assumptions(mesh: &BackgroundMesh, topo: &CutTopology) -> GeometryReport {
    // Multi-source BFS from all inside elements gives each element its distance.
    let mut adjacency = vec![Vec::new(); mesh.n_elements()];
    for &f in &topo.interior_facets {
        let (p, m) = mesh.facets[f].neighbors().expect("interior facet");
        adjacency[p].push(m);
        adjacency[m].push(p);
    }
    let mut dist = vec![usize::MAX; mesh.n_elements()];
    let mut queue = VecDeque::new();
    for &e in &topo.active {
        if topo.labels[e] == ElementKind::Inside {
            dist[e] = 0;
            queue.push_back(e);
        }
    }
    while let Some(e) = queue.pop_front() {
        for &n in &adjacency[e] {
            if dist[n] == usize::MAX {
                dist[n] = dist[e] + 1;
                queue.push_back(n);
            }
        }
    }
    let mut max_walk = 0;
    let mut unreachable = Vec::new();
    for &e in &topo.cut {
        if dist[e] == usize::MAX {
            unreachable.push(e);
        } else {
            max_walk = max_walk.max(dist[e]);
        }
    }
    GeometryReport {
        cut_elements: topo.cut.len(),
        max_walk,
        unreachable,
    }
}

/// Writes cut polygons (VTK_POLYGON) and interface segments (VTK_LINE) for inspection.
pub fn write_cut_vtk(mesh: &BackgroundMesh, topo: &CutTopology, path: impl AsRef<Path>) -> Result<()> {
    let mut points: Vec<Point> = Vec::new();
    let mut cells: Vec<(u8, Vec<usize>)> = Vec::new();
    for &e in &topo.cut {
        let geo = cut_element_geometry(mesh, topo, e);
        for poly in geo.polygons.iter().filter(|p| p.len() >= 3) {
            let start = points.len();
            points.extend_from_slice(poly);
            cells.push((7, (start..points.len()).collect()));
        }
        for seg in &geo.segments {
            let start = points.len();
            points.push(seg.a);
            points.push(seg.b);
            cells.push((3, vec![start, start + 1]));
        }
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "cut geometry")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", points.len())?;
    for p in &points {
        writeln!(out, "{} {} 0", p[0], p[1])?;
    }
    let size: usize = cells.iter().map(|(_, c)| c.len() + 1).sum();
    writeln!(out, "CELLS {} {}", cells.len(), size)?;
    for (_, c) in &cells {
        write!(out, "{}", c.len())?;
        for i in c {
            write!(out, " {i}")?;
        }
        writeln!(out)?;
    }
    writeln!(out, "CELL_TYPES {}", cells.len())?;
    for (t, _) in &cells {
        writeln!(out, "{t}")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_mesh, BoundingBox};

    fn taylor_circle() -> LevelSet {
        LevelSet::circle([0.5, 0.5], 0.45)
    }

    #[test]
    fn circle_labels_on_ten_by_ten() {
        let mesh = build_structured_mesh(10, 10, BoundingBox::unit_square()).unwrap();
        let topo = classify(&mesh, &taylor_circle(), 0);
        // Element 0 has the corner vertex (0, 0).
        assert_eq!(topo.labels[0], ElementKind::Outside);
        // Cell (5, 5) touches the centre.
        assert_eq!(topo.labels[2 * (5 * 10 + 5)], ElementKind::Inside);
        assert!(topo.cut.iter().all(|&e| topo.active.contains(&e)));
        for &f in &topo.ghost_facets {
            assert!(topo.interior_facets.contains(&f));
            let facet = &mesh.facets[f];
            assert!(topo.is_cut(facet.plus) || topo.is_cut(facet.minus.unwrap()));
        }
    }

    #[test]
    fn uncut_domain_has_no_ghost_facets() {
        let mesh = build_structured_mesh(6, 6, BoundingBox::unit_square()).unwrap();
        let topo = classify(&mesh, &LevelSet::constant(-1.0), 0);
        assert!(topo.labels.iter().all(|&l| l == ElementKind::Inside));
        assert!(topo.ghost_facets.is_empty());
        assert_eq!(topo.interior_facets.len(), mesh.interior_facet_count());
        let report = check_geometry_assumptions(&mesh, &topo);
        assert_eq!(report.max_walk, 0);
        assert!(!report.has_unreachable());
    }

    #[test]
    fn single_cut_element_ghost_facets() {
        // A small hole around the centroid of one interior element, resolved by the depth-2 lattice.
        let mesh = build_structured_mesh(5, 5, BoundingBox::unit_square()).unwrap();
        let target = 2 * (2 * 5 + 2);
        let tri = mesh.element_vertices(target);
        let c = [
            (tri[0][0] + tri[1][0] + tri[2][0]) / 3.0,
            (tri[0][1] + tri[1][1] + tri[2][1]) / 3.0,
        ];
        let ls = LevelSet::new(move |x| 0.03 - (x[0] - c[0]).hypot(x[1] - c[1]));
        let topo = classify(&mesh, &ls, 2);
        assert_eq!(topo.cut, vec![target]);
        let mut expected = mesh.element_facets[target].to_vec();
        expected.sort_unstable();
        assert_eq!(topo.ghost_facets, expected);
        let report = check_geometry_assumptions(&mesh, &topo);
        assert_eq!(report.max_walk, 1);
    }

    #[test]
    fn vertex_disc_cuts_its_star() {
        let mesh = build_structured_mesh(5, 5, BoundingBox::unit_square()).unwrap();
        let v0 = [0.4, 0.4];
        let ls = LevelSet::new(move |x: Point| (x[0] - v0[0]).hypot(x[1] - v0[1]) - 0.05);
        let topo = classify(&mesh, &ls, 0);
        // The six triangles around the vertex are cut and only share the six spokes.
        assert_eq!(topo.cut.len(), 6);
        assert_eq!(topo.ghost_facets.len(), 6);
        let report = check_geometry_assumptions(&mesh, &topo);
        assert_eq!(report.unreachable.len(), 6);
    }

    #[test]
    fn clip_half_plane_on_reference_triangle() {
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let phi = tri.map(|x| x[0] - 0.5);
        let piece = clip_cut_element(&tri, phi).unwrap();
        assert!((polygon_area(&piece.polygon) - 0.375).abs() < 1e-15);
        let seg = piece.segment.unwrap();
        assert!((seg.length() - 0.5).abs() < 1e-15);
        let mut ends = [seg.a, seg.b];
        ends.sort_by(|p, q| p[1].total_cmp(&q[1]));
        assert_eq!(ends, [[0.5, 0.0], [0.5, 0.5]]);
        assert!((seg.normal[0] - 1.0).abs() < 1e-15 && seg.normal[1].abs() < 1e-15);

        let quad = volume_quadrature(&piece.polygon, 2, 1.0);
        let total: f64 = quad.iter().map(|q| q.w).sum();
        assert!((total - 0.375).abs() < 1e-13);

        let surf = surface_quadrature(&seg, 1);
        assert_eq!(surf.len(), 1);
        assert!((surf[0].x[0] - 0.5).abs() < 1e-15 && (surf[0].x[1] - 0.25).abs() < 1e-15);
        assert!((surf[0].w - 0.5).abs() < 1e-15);
    }

    #[test]
    fn clip_with_vertex_on_interface() {
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let piece = clip_cut_element(&tri, [0.0, -1.0, -0.5]).unwrap();
        assert!((polygon_area(&piece.polygon) - 0.5).abs() < 1e-15);
        assert!(piece.segment.is_none());

        let edge_on_interface = clip_cut_element(&tri, [0.0, 0.0, 1.0]).unwrap();
        assert!(polygon_area(&edge_on_interface.polygon).abs() < 1e-15);
        let seg = edge_on_interface.segment.unwrap();
        assert!((seg.length() - 1.0).abs() < 1e-15);
        assert!(seg.normal[1] > 0.99);
    }

    #[test]
    fn clip_rejects_same_sign() {
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(clip_cut_element(&tri, [1.0, 2.0, 3.0]).is_err());
        assert!(clip_cut_element(&tri, [-1.0, -2.0, -3.0]).is_err());
    }

    #[test]
    fn degenerate_polygon_gives_empty_rule() {
        let sliver = [[0.0, 0.0], [1.0, 0.0], [0.5, 1e-16]];
        assert!(volume_quadrature(&sliver, 2, 1.0).is_empty());
        let zero = InterfaceSegment {
            a: [0.2, 0.2],
            b: [0.2, 0.2],
            normal: [1.0, 0.0],
        };
        assert!(surface_quadrature(&zero, 3).is_empty());
    }

    #[test]
    fn sub_lattice_covers_reference_triangle() {
        for depth in 0..4 {
            let lattice = SubLattice::new(depth);
            let m = 1usize << depth;
            assert_eq!(lattice.triangles.len(), m * m);
            assert_eq!(lattice.points.len(), (m + 1) * (m + 2) / 2);
            let area: f64 = lattice
                .triangles
                .iter()
                .map(|t| signed_area(&t.map(|i| lattice.points[i])))
                .sum();
            assert!((area - 0.5).abs() < 1e-15);
            assert!(lattice
                .triangles
                .iter()
                .all(|t| signed_area(&t.map(|i| lattice.points[i])) > 0.0));
        }
    }

    #[test]
    fn interface_normals_point_along_level_set_gradient() {
        let mesh = build_structured_mesh(10, 10, BoundingBox::unit_square()).unwrap();
        let ls = taylor_circle();
        let topo = classify(&mesh, &ls, 0);
        let quad = CutQuadrature::build(&mesh, &topo, 2);
        for &e in &topo.cut {
            for q in &quad.interface[e] {
                let g = ls.gradient(q.x).unwrap();
                assert!(g[0] * q.normal[0] + g[1] * q.normal[1] > 0.0);
                assert!((q.normal[0].hypot(q.normal[1]) - 1.0).abs() < 1e-14);
            }
        }
        let report = check_geometry_assumptions(&mesh, &topo);
        assert!(!report.has_unreachable());
        assert!(report.max_walk >= 1 && report.max_walk <= 3);
    }

    #[test]
    fn translated_level_set_shifts_labels_by_one_cell() {
        let mesh = build_structured_mesh(12, 12, BoundingBox::unit_square()).unwrap();
        let ls = LevelSet::circle([0.43, 0.47], 0.3);
        let base = classify(&mesh, &ls, 0);
        let shifted = classify(&mesh, &ls.shifted([1.0 / 12.0, 0.0]), 0);
        for j in 0..12 {
            for i in 0..11 {
                for k in 0..2 {
                    let a = 2 * (j * 12 + i) + k;
                    let b = 2 * (j * 12 + i + 1) + k;
                    assert_eq!(base.labels[a], shifted.labels[b]);
                }
            }
        }
    }

    #[test]
    fn thin_ring_is_flagged_unreachable() {
        let mesh = build_structured_mesh(10, 10, BoundingBox::unit_square()).unwrap();
        let ring = LevelSet::new(|x: Point| ((x[0] - 0.5).hypot(x[1] - 0.5) - 0.3).abs() - 0.01);
        let topo = classify(&mesh, &ring, 0);
        assert!(topo.labels.iter().all(|&l| l != ElementKind::Inside));
        let report = check_geometry_assumptions(&mesh, &topo);
        assert!(report.has_unreachable());
    }
}
