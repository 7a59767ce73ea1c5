//! Facet jump penalties: continuous interior penalties on all interior facets
//! of the active mesh and ghost penalties on the facets next to the boundary.
//!
//! Every term is a sum of `scale · (⟦L u⟧, ⟦L v⟧)_F` over facet quadrature
//! points for some linear functional `L`, assembled as `scale · w · J Jᵀ`.

use rayon::prelude::*;

use super::{Discretization, ElementDofs, OseenCoefficients, PreparedAdvection, StabParams, StabilizationConfig};
use crate::error::{CutFemError, Result};
use crate::mesh::{BackgroundMesh, Point};
use crate::quadrature::gauss_legendre;
use crate::spaces::BasisEval;
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Gauss rule on a facet with `points` nodes, as physical points and weights.
pub fn facet_rule(mesh: &BackgroundMesh, facet: usize, points: usize) -> Vec<(Point, f64)> {
    let [a, b] = mesh.facet_endpoints(facet);
    let len = mesh.facet_length(facet);
    gauss_legendre(points)
        .into_iter()
        .map(|(t, w)| ([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])], w * len))
        .collect()
}

/// Number of facet Gauss points: exact for polynomials of degree `2k + 1`.
fn facet_points(disc: &Discretization) -> usize {
    disc.order() + 1
}

/// A facet quadrature point with the bases of both neighbours evaluated there.
pub(crate) struct FacetPoint {
    pub plus: usize,
    pub minus: usize,
    pub normal: Point,
    pub dofs: [ElementDofs; 2],
    pub basis: [BasisEval; 2],
}

impl FacetPoint {
    /// Jump of the `c`-th velocity component of `L`, where `value(basis, i)` is `L N_i`.
    fn velocity_jump(&self, c: usize, value: impl Fn(&BasisEval, usize) -> f64) -> Vec<(usize, f64)> {
        let mut jump = Vec::with_capacity(2 * self.dofs[0].n);
        for (side, sign) in [(0, 1.0), (1, -1.0)] {
            let (dofs, b) = (&self.dofs[side], &self.basis[side]);
            for i in 0..dofs.n {
                jump.push((dofs.global[dofs.vel(i, c)], sign * value(b, i)));
            }
        }
        jump
    }

    fn pressure_jump(&self, value: impl Fn(&BasisEval, usize) -> f64) -> Vec<(usize, f64)> {
        let mut jump = Vec::with_capacity(2 * self.dofs[0].n);
        for (side, sign) in [(0, 1.0), (1, -1.0)] {
            let (dofs, b) = (&self.dofs[side], &self.basis[side]);
            for i in 0..dofs.n {
                jump.push((dofs.global[dofs.pres(i)], sign * value(b, i)));
            }
        }
        jump
    }

    /// Jump of a functional coupling both velocity components, `value(basis, i, c)`.
    fn vector_jump(&self, value: impl Fn(&BasisEval, usize, usize) -> f64) -> Vec<(usize, f64)> {
        let mut jump = Vec::with_capacity(4 * self.dofs[0].n);
        for (side, sign) in [(0, 1.0), (1, -1.0)] {
            let (dofs, b) = (&self.dofs[side], &self.basis[side]);
            for i in 0..dofs.n {
                for c in 0..2 {
                    jump.push((dofs.global[dofs.vel(i, c)], sign * value(b, i, c)));
                }
            }
        }
        jump
    }
}

/// Assembles `Σ_F Σ_q scale · w · J Jᵀ` where `terms` lists `(scale, J)` pairs per point.
fn assemble_facet_terms<F>(disc: &Discretization, facets: &[usize], terms: F) -> CsrMatrix
where
    F: Fn(&FacetPoint, &mut Vec<(f64, Vec<(usize, f64)>)>) + Sync,
{
    let n = disc.n_unknowns();
    let npts = facet_points(disc);
    let chunks: Vec<Vec<(usize, usize, f64)>> = facets
        .par_iter()
        .map(|&f| {
            let facet = &disc.mesh.facets[f];
            let Some((plus, minus)) = facet.neighbors() else {
                return Vec::new();
            };
            let dofs = [ElementDofs::new(disc, plus), ElementDofs::new(disc, minus)];
            // Dense accumulation over the union of both neighbours' unknowns.
            let mut globals: Vec<usize> = Vec::with_capacity(2 * dofs[0].size());
            for d in &dofs {
                for &g in &d.global[..d.size()] {
                    if !globals.contains(&g) {
                        globals.push(g);
                    }
                }
            }
            let m = globals.len();
            let local_index = |g: usize| globals.iter().position(|&x| x == g).expect("facet unknown");
            let mut local = vec![0.0; m * m];
            let mut jumps = Vec::new();
            let mut mapped = Vec::new();
            for (x, w) in facet_rule(&disc.mesh, f, npts) {
                let point = FacetPoint {
                    plus,
                    minus,
                    normal: facet.normal,
                    dofs,
                    basis: [disc.space.eval(plus, x), disc.space.eval(minus, x)],
                };
                jumps.clear();
                terms(&point, &mut jumps);
                for (scale, jump) in &jumps {
                    let s = scale * w;
                    if s == 0.0 {
                        continue;
                    }
                    mapped.clear();
                    mapped.extend(jump.iter().filter(|e| e.1 != 0.0).map(|&(g, a)| (local_index(g), a)));
                    for &(r, a) in &mapped {
                        for &(c, b) in &mapped {
                            local[r * m + c] += s * a * b;
                        }
                    }
                }
            }
            let mut triplets = Vec::with_capacity(m * m);
            for r in 0..m {
                for c in 0..m {
                    let v = local[r * m + c];
                    if v != 0.0 {
                        triplets.push((globals[r], globals[c], v));
                    }
                }
            }
            triplets
        })
        .collect();
    let mut builder = TripletBuilder::new(n, n);
    for t in chunks {
        builder.extend(t);
    }
    builder.build()
}

/// Continuous interior penalty matrices on the interior facets of the active mesh.
#[derive(Debug, Clone)]
pub struct CipParts {
    /// `s_β`, or `s̄_β` when the simplified forms are selected.
    pub s_beta: CsrMatrix,
    /// `s_u` (zero when the simplified forms are selected).
    pub s_u: CsrMatrix,
    pub s_p: CsrMatrix,
}

impl CipParts {
    pub fn matrices(&self) -> [&CsrMatrix; 3] {
        [&self.s_beta, &self.s_u, &self.s_p]
    }
}

/// Ghost-penalty matrices on the facets of cut elements.
#[derive(Debug, Clone)]
pub struct GhostParts {
    /// `g_β`, or `ḡ_β` when the simplified forms are selected.
    pub g_beta: CsrMatrix,
    /// `g_u` (zero when the simplified forms are selected).
    pub g_u: CsrMatrix,
    pub g_p: CsrMatrix,
    pub g_sigma: CsrMatrix,
    pub g_mu: CsrMatrix,
}

impl GhostParts {
    pub fn matrices(&self) -> [&CsrMatrix; 5] {
        [&self.g_beta, &self.g_u, &self.g_p, &self.g_sigma, &self.g_mu]
    }
}

/// Facet value of `φ̄_β = ‖β‖²_{∞,F} φ_β` using the larger neighbour maximum.
fn simplified_phi_beta(point: &FacetPoint, beta: &PreparedAdvection, avg: &StabParams) -> f64 {
    let b = beta.element_norm[point.plus].max(beta.element_norm[point.minus]);
    b * b * avg.phi_beta
}

pub fn assemble_cip(
    disc: &Discretization,
    beta: &PreparedAdvection,
    params: &[StabParams],
    stab: &StabilizationConfig,
) -> CipParts {
    let n = disc.n_unknowns();
    let toggles = stab.cip;
    let h = disc.h();
    let facets = &disc.topo.interior_facets;
    let avg = |p: &FacetPoint| StabParams::average(&params[p.plus], &params[p.minus]);
    let s_beta = if !toggles.beta {
        CsrMatrix::zeros(n, n)
    } else if stab.use_simplified_gbeta {
        assemble_facet_terms(disc, facets, |p, out| {
            let scale = stab.gamma_beta * simplified_phi_beta(p, beta, &avg(p)) * h;
            for c in 0..2 {
                out.push((scale, p.velocity_jump(c, |b, i| b.normal_derivative(i, 1, p.normal))));
            }
        })
    } else {
        assemble_facet_terms(disc, facets, |p, out| {
            let scale = stab.gamma_beta * avg(p).phi_beta * h;
            let bx = beta.discrete_at(&disc.space, &p.basis[0], p.plus);
            for c in 0..2 {
                out.push((scale, p.velocity_jump(c, |b, i| bx[0] * b.grads[i][0] + bx[1] * b.grads[i][1])));
            }
        })
    };
    let s_u = if !toggles.u || stab.use_simplified_gbeta {
        CsrMatrix::zeros(n, n)
    } else {
        assemble_facet_terms(disc, facets, |p, out| {
            let scale = stab.gamma_u * avg(p).phi_u * h;
            out.push((scale, p.vector_jump(|b, i, c| b.grads[i][c])));
        })
    };
    let s_p = if !toggles.p {
        CsrMatrix::zeros(n, n)
    } else {
        assemble_facet_terms(disc, facets, |p, out| {
            let scale = stab.gamma_p * avg(p).phi_p * h;
            out.push((scale, p.pressure_jump(|b, i| b.normal_derivative(i, 1, p.normal))));
        })
    };
    CipParts { s_beta, s_u, s_p }
}

pub fn assemble_ghost_penalties(
    disc: &Discretization,
    coeffs: &OseenCoefficients,
    beta: &PreparedAdvection,
    params: &[StabParams],
    stab: &StabilizationConfig,
) -> GhostParts {
    let n = disc.n_unknowns();
    let k = disc.order() as i32;
    let h = disc.h();
    let facets = &disc.topo.ghost_facets;
    let toggles = stab.ghost;
    let avg = |p: &FacetPoint| StabParams::average(&params[p.plus], &params[p.minus]);
    let zeros = || CsrMatrix::zeros(n, n);

    // Σ_{j ∈ orders} weight(j) ⟦∂ⁿʲ u_c⟧ for both velocity components.
    let normal_jumps = |weight: &(dyn Fn(&FacetPoint, i32) -> f64 + Sync), orders: std::ops::RangeInclusive<i32>| {
        assemble_facet_terms(disc, facets, |p, out| {
            for j in orders.clone() {
                let scale = weight(p, j);
                for c in 0..2 {
                    out.push((scale, p.velocity_jump(c, |b, i| b.normal_derivative(i, j as usize, p.normal))));
                }
            }
        })
    };

    let g_beta = if !toggles.beta {
        zeros()
    } else if stab.use_simplified_gbeta {
        normal_jumps(
            &|p, j| stab.gamma_beta * simplified_phi_beta(p, beta, &avg(p)) * h.powi(2 * j - 1),
            1..=k,
        )
    } else {
        assemble_facet_terms(disc, facets, |p, out| {
            let bx = beta.discrete_at(&disc.space, &p.basis[0], p.plus);
            for j in 0..k {
                let scale = stab.gamma_beta * avg(p).phi_beta * h.powi(2 * j + 1);
                for c in 0..2 {
                    out.push((
                        scale,
                        p.velocity_jump(c, |b, i| {
                            let g = b.grad_of_normal_derivative(i, j as usize, p.normal);
                            bx[0] * g[0] + bx[1] * g[1]
                        }),
                    ));
                }
            }
        })
    };
    let g_u = if !toggles.u || stab.use_simplified_gbeta {
        zeros()
    } else {
        assemble_facet_terms(disc, facets, |p, out| {
            for j in 0..k {
                let scale = stab.gamma_u * avg(p).phi_u * h.powi(2 * j + 1);
                out.push((
                    scale,
                    p.vector_jump(|b, i, c| b.grad_of_normal_derivative(i, j as usize, p.normal)[c]),
                ));
            }
        })
    };
    let g_p = if !toggles.p {
        zeros()
    } else {
        assemble_facet_terms(disc, facets, |p, out| {
            for j in 1..=k {
                let scale = stab.gamma_p * avg(p).phi_p * h.powi(2 * j - 1);
                out.push((scale, p.pressure_jump(|b, i| b.normal_derivative(i, j as usize, p.normal))));
            }
        })
    };
    let g_sigma = if !toggles.sigma || coeffs.sigma == 0.0 {
        zeros()
    } else {
        normal_jumps(&|_, j| stab.gamma_sigma * coeffs.sigma * h.powi(2 * j + 1), 1..=k)
    };
    let g_mu = if !toggles.mu {
        zeros()
    } else {
        normal_jumps(&|_, j| stab.gamma_mu * coeffs.mu * h.powi(2 * j - 1), 1..=k)
    };
    GhostParts {
        g_beta,
        g_u,
        g_p,
        g_sigma,
        g_mu,
    }
}

/// Jump `⟦·⟧ = (·)⁺ − (·)⁻` and average of a per-element field at a facet quadrature point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpSample {
    pub x: Point,
    pub w: f64,
    pub jump: f64,
    pub average: f64,
}

/// Jumps of `value(element, basis, normal)` over an interior facet of the active mesh.
pub fn facet_jump_with(
    disc: &Discretization,
    facet: usize,
    value: impl Fn(usize, &BasisEval, Point) -> f64,
) -> Result<Vec<JumpSample>> {
    let f = disc
        .mesh
        .facets
        .get(facet)
        .ok_or_else(|| CutFemError::InvalidInput(format!("facet {facet} does not exist")))?;
    let (plus, minus) = f
        .neighbors()
        .ok_or_else(|| CutFemError::InvalidInput(format!("facet {facet} lies on the mesh boundary")))?;
    if !(disc.space.is_active(plus) && disc.space.is_active(minus)) {
        return Err(CutFemError::InvalidInput(format!("facet {facet} is not interior to the active mesh")));
    }
    Ok(facet_rule(&disc.mesh, facet, facet_points(disc))
        .into_iter()
        .map(|(x, w)| {
            let a = value(plus, &disc.space.eval(plus, x), f.normal);
            let b = value(minus, &disc.space.eval(minus, x), f.normal);
            JumpSample {
                x,
                w,
                jump: a - b,
                average: 0.5 * (a + b),
            }
        })
        .collect())
}

/// Jumps of `∂ⁿʲ` of the discrete field `coeffs[stride * dof + component]`.
pub fn facet_jump(
    disc: &Discretization,
    facet: usize,
    coeffs: &[f64],
    stride: usize,
    component: usize,
    j: usize,
) -> Result<Vec<JumpSample>> {
    facet_jump_with(disc, facet, |e, b, n| {
        disc.space
            .element_dofs(e)
            .iter()
            .enumerate()
            .map(|(i, &d)| coeffs[stride * d + component] * b.normal_derivative(i, j, n))
            .sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{element_parameters, vector_fn, zero_vector_fn, Advection};
    use crate::geometry::LevelSet;
    use crate::mesh::{build_structured_mesh, BoundingBox};

    fn disc(n: usize, order: usize, ls: LevelSet) -> Discretization {
        let mesh = build_structured_mesh(n, n, BoundingBox::unit_square()).unwrap();
        Discretization::new(mesh, ls, order, 0).unwrap()
    }

    fn coeffs() -> OseenCoefficients {
        OseenCoefficients {
            sigma: 1.0,
            mu: 0.1,
            beta: Advection::Analytic(vector_fn(|x| [1.0 + x[1], 0.5 - x[0]])),
            beta_lipschitz: None,
            force: zero_vector_fn(),
            dirichlet: zero_vector_fn(),
        }
    }

    fn parts(d: &Discretization, stab: &StabilizationConfig) -> (CipParts, GhostParts) {
        let c = coeffs();
        let beta = PreparedAdvection::new(d, &c.beta).unwrap();
        let params = element_parameters(d, &c, &beta, stab);
        (assemble_cip(d, &beta, &params, stab), assemble_ghost_penalties(d, &c, &beta, &params, stab))
    }

    fn linear_field(d: &Discretization) -> Vec<f64> {
        let mut x = vec![0.0; d.n_unknowns()];
        for (i, &pt) in d.space.dof_coords.iter().enumerate() {
            x[d.velocity_index(i, 0)] = 1.0 + 2.0 * pt[0] - pt[1];
            x[d.velocity_index(i, 1)] = 0.5 * pt[0] + 3.0 * pt[1];
            x[d.pressure_index(i)] = 0.2 - pt[0] + 4.0 * pt[1];
        }
        x
    }

    #[test]
    fn linear_fields_have_zero_penalties() {
        for order in 1..=2 {
            for simplified in [false, true] {
                let d = disc(6, order, LevelSet::circle([0.5, 0.5], 0.37));
                let stab = StabilizationConfig {
                    use_simplified_gbeta: simplified,
                    ..StabilizationConfig::default()
                };
                let (cip, ghost) = parts(&d, &stab);
                let x = linear_field(&d);
                for m in cip.matrices().into_iter().chain(ghost.matrices()) {
                    let scale = m.max_abs().max(1e-300);
                    assert!(m.quadratic_form(&x).abs() < 1e-12 * scale, "order {order}");
                }
            }
        }
    }

    #[test]
    fn uncut_domain_has_no_ghost_penalty() {
        let d = disc(4, 1, LevelSet::constant(-1.0));
        let (_, ghost) = parts(&d, &StabilizationConfig::default());
        assert!(ghost.matrices().iter().all(|m| m.nnz() == 0));
    }

    #[test]
    fn ghost_beta_equals_cip_beta_on_ghost_facets_for_p1() {
        let d = disc(8, 1, LevelSet::circle([0.5, 0.5], 0.41));
        let stab = StabilizationConfig::default();
        let c = coeffs();
        let beta = PreparedAdvection::new(&d, &c.beta).unwrap();
        let params = element_parameters(&d, &c, &beta, &stab);
        let ghost = assemble_ghost_penalties(&d, &c, &beta, &params, &stab);
        let restricted = Discretization {
            topo: crate::geometry::CutTopology {
                interior_facets: d.topo.ghost_facets.clone(),
                ..d.topo.clone()
            },
            ..d.clone()
        };
        let cip = assemble_cip(&restricted, &beta, &params, &stab);
        assert!(ghost.g_beta.nnz() > 0);
        assert!(ghost.g_beta.max_abs_diff(&cip.s_beta) < 1e-12);
    }

    #[test]
    fn penalty_matrices_are_symmetric() {
        let d = disc(6, 2, LevelSet::circle([0.5, 0.5], 0.37));
        for simplified in [false, true] {
            let stab = StabilizationConfig {
                use_simplified_gbeta: simplified,
                ..StabilizationConfig::default()
            };
            let (cip, ghost) = parts(&d, &stab);
            for m in cip.matrices().into_iter().chain(ghost.matrices()) {
                assert!(m.asymmetry() <= 1e-12 * m.max_abs());
            }
        }
    }

    #[test]
    fn jump_and_average_conventions() {
        let d = disc(3, 1, LevelSet::constant(-1.0));
        let f = d.topo.interior_facets[0];
        let plus = d.mesh.facets[f].plus;
        let samples = facet_jump_with(&d, f, |e, _, _| if e == plus { 1.0 } else { -1.0 }).unwrap();
        assert!(samples.iter().all(|s| s.jump == 2.0 && s.average == 0.0));
        let x = linear_field(&d);
        for j in 0..=1 {
            for s in facet_jump(&d, f, &x, 2, 0, j).unwrap() {
                assert!(s.jump.abs() < 1e-13);
            }
        }
        let boundary = d.mesh.facets.iter().position(|f| f.minus.is_none()).unwrap();
        assert!(matches!(facet_jump(&d, boundary, &x, 2, 0, 0), Err(CutFemError::InvalidInput(_))));
    }

    #[test]
    fn single_facet_pressure_penalty_matches_hand_computation() {
        // P1 hat function at an interior vertex; on the facet the two neighbours
        // have gradients g⁺, g⁻ and the jump of n·∇p is constant along the facet.
        let d = disc(2, 1, LevelSet::constant(-1.0));
        let stab = StabilizationConfig::default();
        let (cip, _) = parts(&d, &stab);
        let c = coeffs();
        let beta = PreparedAdvection::new(&d, &c.beta).unwrap();
        let params = element_parameters(&d, &c, &beta, &stab);
        let centre = d.space.dof_coords.iter().position(|&x| x == [0.5, 0.5]).unwrap();
        let mut p = vec![0.0; d.n_unknowns()];
        p[d.pressure_index(centre)] = 1.0;
        let mut expected = 0.0;
        for &f in &d.topo.interior_facets {
            let facet = &d.mesh.facets[f];
            let (a, b) = facet.neighbors().unwrap();
            let grad = |e: usize| {
                let pos = d.space.element_dofs(e).iter().position(|&x| x == centre);
                pos.map_or([0.0, 0.0], |i| d.space.element_map(e).grad_lambda[i])
            };
            let n = facet.normal;
            let jump = (grad(a)[0] - grad(b)[0]) * n[0] + (grad(a)[1] - grad(b)[1]) * n[1];
            let phi = 0.5 * (params[a].phi_p + params[b].phi_p);
            expected += stab.gamma_p * phi * d.h() * jump * jump * d.mesh.facet_length(f);
        }
        assert!(expected > 0.0);
        assert!((cip.s_p.quadratic_form(&p) - expected).abs() < 1e-14 * expected.max(1.0));
    }
}
