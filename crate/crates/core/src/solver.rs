//! Direct sparse LU solves of the assembled system and conditioning diagnostics.

use faer::linalg::solvers::Solve;
use faer::prelude::*;
use faer::sparse::linalg::LuError;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CutFemError, Result};
use crate::forms::{Discretization, LinearSystem};
use crate::mesh::Point;
use crate::sparse::{dot, norm2, CsrMatrix};

/// Relative residual target of every solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
const MAX_REFINEMENTS: usize = 3;
/// Condition estimates above this are treated as numerically singular.
pub const SINGULAR_CONDITION: f64 = 1e14;
const SINGULARITY_PROBE_STEPS: usize = 4;
const CONDITION_STEPS: usize = 50;

fn sequential() {
    // Sequential factorization keeps results bitwise reproducible.
    faer::set_global_parallelism(faer::Par::Seq);
}

/// Sparse LU factorization of a square matrix.
pub struct Factorization {
    lu: Lu<usize, f64>,
    n: usize,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorization").field("n", &self.n).finish_non_exhaustive()
    }
}

impl Factorization {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(CutFemError::InvalidInput(format!("matrix is {}x{}, expected square", a.nrows, a.ncols)));
        }
        if a.values.iter().any(|v| !v.is_finite()) {
            return Err(CutFemError::SingularSystem {
                pivot: None,
                detail: "matrix has non-finite entries".into(),
            });
        }
        sequential();
        let triplets: Vec<Triplet<usize, usize, f64>> = a.triplets().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(a.nrows, a.ncols, &triplets)
            .map_err(|e| CutFemError::InvalidInput(format!("sparse matrix construction failed: {e:?}")))?;
        // faer panics on an exactly zero numerical pivot instead of returning an error.
        let factored = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| mat.sp_lu())).map_err(|_| {
            CutFemError::SingularSystem {
                pivot: None,
                detail: "zero pivot during numerical factorization".into(),
            }
        })?;
        let lu = factored.map_err(|e| match e {
            LuError::SymbolicSingular { index } => CutFemError::SingularSystem {
                pivot: Some(index),
                detail: "structurally singular matrix".into(),
            },
            LuError::Generic(err) => CutFemError::SingularSystem {
                pivot: None,
                detail: format!("factorization failed: {err:?}"),
            },
        })?;
        Ok(Self { lu, n: a.nrows })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = Col::<f64>::from_fn(self.n, |i| b[i]);
        self.lu.solve_in_place(x.as_mat_mut());
        (0..self.n).map(|i| x[i]).collect()
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let mut x = Col::<f64>::from_fn(self.n, |i| b[i]);
        self.lu.solve_transpose_in_place(x.as_mat_mut());
        (0..self.n).map(|i| x[i]).collect()
    }
}

fn start_vector(n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let s = norm2(&v);
    v.into_iter().map(|x| x / s).collect()
}

/// Power iteration for the largest eigenvalue of the symmetric operator `apply`.
fn power_iteration(n: usize, steps: usize, apply: impl Fn(&[f64]) -> Vec<f64>) -> f64 {
    let mut v = start_vector(n);
    let mut lambda = 0.0;
    for _ in 0..steps {
        let w = apply(&v);
        lambda = dot(&v, &w);
        let s = norm2(&w);
        if !(s.is_finite()) {
            return f64::INFINITY;
        }
        if s == 0.0 {
            return 0.0;
        }
        v = w.into_iter().map(|x| x / s).collect();
    }
    lambda
}

fn largest_singular_value(a: &CsrMatrix, steps: usize) -> f64 {
    power_iteration(a.ncols, steps, |v| a.transpose_matvec(&a.matvec(v))).max(0.0).sqrt()
}

/// Estimate of `1/σ_min` through inverse iteration on `AᵀA`.
fn inverse_singular_value(fact: &Factorization, steps: usize) -> f64 {
    power_iteration(fact.n, steps, |v| fact.solve(&fact.solve_transpose(v))).max(0.0).sqrt()
}

/// Spectral condition estimate `σ_max/σ_min` from 50 power and 50 inverse iterations.
pub fn estimate_condition_with(a: &CsrMatrix, fact: &Factorization) -> f64 {
    let cond = largest_singular_value(a, CONDITION_STEPS) * inverse_singular_value(fact, CONDITION_STEPS);
    if cond.is_nan() {
        f64::INFINITY
    } else {
        cond
    }
}

/// Condition estimate; singular matrices report infinity.
pub fn estimate_condition(a: &CsrMatrix) -> f64 {
    match Factorization::new(a) {
        Ok(fact) => estimate_condition_with(a, &fact),
        Err(_) => f64::INFINITY,
    }
}

#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub x: Vec<f64>,
    /// Relative residual `‖b − Ax‖/‖b‖`.
    pub residual: f64,
    pub refinements: usize,
}

fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64], b_norm: f64) -> (Vec<f64>, f64) {
    let ax = a.matvec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    let rel = norm2(&r) / b_norm;
    (r, rel)
}

/// Factorizes `a`, rejects numerically singular matrices, solves and refines.
pub fn solve_linear(a: &CsrMatrix, b: &[f64]) -> Result<LinearSolution> {
    if b.len() != a.nrows {
        return Err(CutFemError::InvalidInput(format!(
            "right-hand side has length {}, expected {}",
            b.len(),
            a.nrows
        )));
    }
    let fact = Factorization::new(a)?;
    let sigma_max = largest_singular_value(a, SINGULARITY_PROBE_STEPS);
    let inv = inverse_singular_value(&fact, SINGULARITY_PROBE_STEPS);
    let cond = sigma_max * inv;
    if !(cond.is_finite() && cond < SINGULAR_CONDITION) {
        return Err(CutFemError::SingularSystem {
            pivot: None,
            detail: format!("numerically singular, condition estimate {cond:.3e}"),
        });
    }
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(LinearSolution {
            x: vec![0.0; a.ncols],
            residual: 0.0,
            refinements: 0,
        });
    }
    let mut x = fact.solve(b);
    let (mut r, mut rel) = relative_residual(a, &x, b, b_norm);
    let mut refinements = 0;
    while !(rel <= RESIDUAL_TOLERANCE) && refinements < MAX_REFINEMENTS {
        let dx = fact.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
        (r, rel) = relative_residual(a, &x, b, b_norm);
        refinements += 1;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CutFemError::SingularSystem {
            pivot: None,
            detail: "solution has non-finite entries".into(),
        });
    }
    if !(rel <= RESIDUAL_TOLERANCE) {
        return Err(CutFemError::Residual { residual: rel });
    }
    Ok(LinearSolution {
        x,
        residual: rel,
        refinements,
    })
}

/// Discrete velocity and pressure with the pressure-mean multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField {
    /// Interleaved velocity coefficients.
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
    pub multiplier: f64,
    pub residual: f64,
}

impl SolutionField {
    pub fn zeros(n_scalar: usize) -> Self {
        Self {
            velocity: vec![0.0; 2 * n_scalar],
            pressure: vec![0.0; n_scalar],
            multiplier: 0.0,
            residual: 0.0,
        }
    }

    /// Splits a mixed coefficient vector `[u, p, λ]`.
    pub fn from_mixed(x: &[f64], n_scalar: usize, residual: f64) -> Self {
        Self {
            velocity: x[..2 * n_scalar].to_vec(),
            pressure: x[2 * n_scalar..3 * n_scalar].to_vec(),
            multiplier: x.get(3 * n_scalar).copied().unwrap_or(0.0),
            residual,
        }
    }

    pub fn to_mixed(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.velocity.len() + self.pressure.len() + 1);
        x.extend_from_slice(&self.velocity);
        x.extend_from_slice(&self.pressure);
        x.push(self.multiplier);
        x
    }

    /// Velocity, velocity gradient, pressure and pressure gradient at `x` in `element`.
    pub fn eval(&self, disc: &Discretization, element: usize, x: Point) -> PointValues {
        let b = disc.space.eval(element, x);
        let (u, grad_u) = disc.space.eval_vector(&b, element, &self.velocity);
        let (p, grad_p) = disc.space.eval_field(&b, element, &self.pressure, 1, 0);
        PointValues { u, grad_u, p, grad_p }
    }

    /// Writes vertex values of velocity and pressure on the background mesh
    /// (zero on inactive vertices) with the element labels as legacy VTK.
    pub fn write_vtk(&self, disc: &Discretization, path: impl AsRef<std::path::Path>) -> Result<()> {
        use std::io::Write;
        let mesh = &disc.mesh;
        let mut velocity = vec![[0.0; 2]; mesh.n_vertices()];
        let mut pressure = vec![0.0; mesh.n_vertices()];
        for &e in &disc.topo.active {
            for &v in &mesh.triangles[e] {
                let vals = self.eval(disc, e, mesh.vertices[v]);
                velocity[v] = vals.u;
                pressure[v] = vals.p;
            }
        }
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        crate::mesh::write_vtk_triangles(&mut out, "cut finite element solution", &mesh.vertices, &mesh.triangles)?;
        writeln!(out, "CELL_DATA {}", mesh.n_elements())?;
        writeln!(out, "SCALARS label int 1")?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for e in 0..mesh.n_elements() {
            let label = if disc.topo.is_cut(e) {
                2
            } else if disc.topo.is_active(e) {
                1
            } else {
                0
            };
            writeln!(out, "{label}")?;
        }
        writeln!(out, "POINT_DATA {}", mesh.n_vertices())?;
        writeln!(out, "VECTORS velocity double")?;
        for u in &velocity {
            writeln!(out, "{:e} {:e} 0", u[0], u[1])?;
        }
        writeln!(out, "SCALARS pressure double 1")?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for p in &pressure {
            writeln!(out, "{p:e}")?;
        }
        out.flush()?;
        Ok(())
    }

    /// `∫_Ω p_h dx` over the cut domain.
    pub fn pressure_mean_integral(&self, disc: &Discretization) -> f64 {
        disc.topo
            .active
            .iter()
            .flat_map(|&e| disc.quad.volume[e].iter().map(move |q| (e, q)))
            .map(|(e, q)| q.w * self.eval(disc, e, q.x).p)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointValues {
    pub u: [f64; 2],
    /// `grad_u[c][d] = ∂_d u_c`.
    pub grad_u: [[f64; 2]; 2],
    pub p: f64,
    pub grad_p: [f64; 2],
}

/// Solves the assembled system with its pressure constraint.
pub fn solve(system: &LinearSystem) -> Result<SolutionField> {
    let sol = solve_linear(&system.matrix, &system.rhs)?;
    Ok(SolutionField::from_mixed(&sol.x, system.n_scalar, sol.residual))
}

/// Extreme Ritz values of a symmetric matrix from `steps` Lanczos iterations
/// with full reorthogonalization.
pub fn ritz_values(a: &CsrMatrix, steps: usize) -> Vec<f64> {
    let n = a.nrows;
    let steps = steps.min(n);
    if steps == 0 {
        return Vec::new();
    }
    let mut basis: Vec<Vec<f64>> = vec![start_vector(n)];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    for k in 0..steps {
        let mut w = a.matvec(&basis[k]);
        alpha.push(dot(&w, &basis[k]));
        for _ in 0..2 {
            for v in &basis {
                let c = dot(&w, v);
                w.iter_mut().zip(v).for_each(|(w, v)| *w -= c * v);
            }
        }
        let b = norm2(&w);
        if k + 1 == steps || b <= 1e-14 * alpha.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(1e-300) {
            break;
        }
        beta.push(b);
        basis.push(w.into_iter().map(|x| x / b).collect());
    }
    let m = alpha.len();
    let t = Mat::<f64>::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j || j + 1 == i {
            beta[i.min(j)]
        } else {
            0.0
        }
    });
    let mut ev = t.self_adjoint_eigenvalues(faer::Side::Lower).unwrap_or_default();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Smallest Ritz value of the symmetric part of `a` (20 Lanczos steps).
pub fn min_ritz_value(a: &CsrMatrix) -> f64 {
    ritz_values(&a.symmetric_part(), 20).first().copied().unwrap_or(0.0)
}
