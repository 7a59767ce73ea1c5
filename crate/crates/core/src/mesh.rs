//! Structured background triangulations with facet (edge) topology.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::error::{CutFemError, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct BoundingBox {
    pub min: Point,
    pub max: Point,
}

impl BoundingBox {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    pub fn unit_square() -> Self {
        Self::new([0.0, 0.0], [1.0, 1.0])
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// An edge of the triangulation.
///
/// `plus` is the lower-index adjacent element and `normal` points out of it.
/// Boundary facets have no `minus` element and an outward normal.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub vertices: [usize; 2],
    pub plus: usize,
    pub minus: Option<usize>,
    pub normal: Point,
}

impl Facet {
    pub fn neighbors(&self) -> Option<(usize, usize)> {
        self.minus.map(|m| (self.plus, m))
    }

    pub fn is_interior(&self) -> bool {
        self.minus.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct BackgroundMesh {
    pub vertices: Vec<Point>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub facets: Vec<Facet>,
    /// Local edge `i` of a triangle joins its vertices `i` and `(i + 1) % 3`.
    pub element_facets: Vec<[usize; 3]>,
    pub h: f64,
    pub bbox: BoundingBox,
    pub nx: usize,
    pub ny: usize,
}

impl BackgroundMesh {
    pub fn n_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn element_vertices(&self, element: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[element];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn element_area(&self, element: usize) -> f64 {
        signed_area(&self.element_vertices(element))
    }

    pub fn facet_endpoints(&self, facet: usize) -> [Point; 2] {
        let [a, b] = self.facets[facet].vertices;
        [self.vertices[a], self.vertices[b]]
    }

    pub fn facet_length(&self, facet: usize) -> f64 {
        let [a, b] = self.facet_endpoints(facet);
        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
    }

    pub fn interior_facet_count(&self) -> usize {
        self.facets.iter().filter(|f| f.is_interior()).count()
    }

    /// Writes the triangulation as a legacy VTK ASCII unstructured grid.
    pub fn write_vtk(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_vtk_triangles(&mut out, "background mesh", &self.vertices, &self.triangles)?;
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn write_vtk_triangles(
    out: &mut impl Write,
    title: &str,
    vertices: &[Point],
    triangles: &[[usize; 3]],
) -> std::io::Result<()> {
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{title}")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", vertices.len())?;
    for v in vertices {
        writeln!(out, "{} {} 0", v[0], v[1])?;
    }
    writeln!(out, "CELLS {} {}", triangles.len(), 4 * triangles.len())?;
    for t in triangles {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(out, "CELL_TYPES {}", triangles.len())?;
    for _ in triangles {
        writeln!(out, "5")?;
    }
    Ok(())
}

pub fn signed_area(tri: &[Point; 3]) -> f64 {
    let [a, b, c] = tri;
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Splits each of the `nx * ny` cells of `bbox` into two right-angled
/// triangles along the lower-left to upper-right diagonal.
pub fn build_structured_mesh(nx: usize, ny: usize, bbox: BoundingBox) -> Result<BackgroundMesh> {
    if nx == 0 || ny == 0 {
        return Err(CutFemError::InvalidInput(format!(
            "cell counts must be positive, got {nx}x{ny}"
        )));
    }
    if !(bbox.width() > 0.0 && bbox.height() > 0.0) {
        return Err(CutFemError::InvalidInput(format!(
            "degenerate bounding box {:?}",
            bbox
        )));
    }
    let dx = bbox.width() / nx as f64;
    let dy = bbox.height() / ny as f64;

    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([
                bbox.min[0] + i as f64 * dx,
                bbox.min[1] + j as f64 * dy,
            ]);
        }
    }
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let (facets, element_facets) = build_facets(&vertices, &triangles)?;
    Ok(BackgroundMesh {
        vertices,
        triangles,
        facets,
        element_facets,
        h: dx.max(dy),
        bbox,
        nx,
        ny,
    })
}

/// Builds the edge table of a triangulation.
///
/// Facets are numbered in order of first appearance while walking the
/// triangles. Each interior facet stores its unit normal pointing from the
/// lower-index element into the higher-index one.
pub fn build_facets(
    vertices: &[Point],
    triangles: &[[usize; 3]],
) -> Result<(Vec<Facet>, Vec<[usize; 3]>)> {
    let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 2);
    let mut facets: Vec<Facet> = Vec::with_capacity(triangles.len() * 3 / 2 + 1);
    let mut element_facets = Vec::with_capacity(triangles.len());

    for (e, tri) in triangles.iter().enumerate() {
        let mut local = [0usize; 3];
        for (i, slot) in local.iter_mut().enumerate() {
            let a = tri[i];
            let b = tri[(i + 1) % 3];
            let key = (a.min(b), a.max(b));
            match lookup.get(&key) {
                Some(&f) => {
                    let facet = &mut facets[f];
                    if facet.minus.is_some() {
                        return Err(CutFemError::Topology(format!(
                            "edge ({}, {}) is shared by more than two triangles",
                            key.0, key.1
                        )));
                    }
                    facet.minus = Some(e);
                    *slot = f;
                }
                None => {
                    // Outward normal of the CCW edge a -> b of element e.
                    let (pa, pb) = (vertices[a], vertices[b]);
                    let t = [pb[0] - pa[0], pb[1] - pa[1]];
                    let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
                    let normal = [t[1] / len, -t[0] / len];
                    lookup.insert(key, facets.len());
                    *slot = facets.len();
                    facets.push(Facet {
                        vertices: [key.0, key.1],
                        plus: e,
                        minus: None,
                        normal,
                    });
                }
            }
        }
        element_facets.push(local);
    }
    Ok((facets, element_facets))
}
