//! Energy norms, coercivity and norm-extension probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ManufacturedCase;
use crate::forms::{
    element_parameters, facet_jump, Discretization, OseenCoefficients, PreparedAdvection, StabParams,
    StabilizationConfig, SystemParts,
};
use crate::geometry::full_element_rule;
use crate::mesh::Point;
use crate::solver::{PointValues, SolutionField};

/// Squared contributions to the energy norms, reported separately.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct NormComponents {
    pub sigma_l2: f64,
    pub mu_h1: f64,
    pub nitsche_mu: f64,
    pub nitsche_normal: f64,
    pub inflow: f64,
    pub s_beta: f64,
    pub s_u: f64,
    pub s_p: f64,
    pub g_beta: f64,
    pub g_u: f64,
    pub g_p: f64,
    pub g_sigma: f64,
    pub g_mu: f64,
    pub divergence: f64,
    pub streamline: f64,
    pub pressure_l2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormReport {
    /// `|||u|||`.
    pub velocity: f64,
    /// `|||u|||_h`.
    pub velocity_h: f64,
    /// `|p|_h`.
    pub pressure_h: f64,
    /// `|U|_h`.
    pub semi: f64,
    /// `|||U|||_h`.
    pub full: f64,
    pub phi_p: f64,
    pub omega_h: f64,
    pub c_p: f64,
    pub components: NormComponents,
}

/// `ω_h = h²|β|₁,∞ / (μ + σh²)`.
pub fn omega_h(h: f64, beta_lipschitz: f64, mu: f64, sigma: f64) -> f64 {
    h * h * beta_lipschitz / (mu + sigma * h * h)
}

/// `Φ_p⁻¹ = σC_P² + ‖β‖C_P + μ + (‖β‖C_P)²/(μ + σC_P²)`.
pub fn phi_p(sigma: f64, mu: f64, beta_inf: f64, c_p: f64) -> f64 {
    let bc = beta_inf * c_p;
    1.0 / (sigma * c_p * c_p + bc + mu + bc * bc / (mu + sigma * c_p * c_p))
}

/// Diameter of the fluid domain from its interface points, or of the mesh box when uncut.
pub fn domain_diameter(disc: &Discretization) -> f64 {
    let pts: Vec<Point> = disc.quad.interface.iter().flatten().map(|q| q.x).collect();
    if pts.is_empty() {
        let b = disc.mesh.bbox;
        return b.width().hypot(b.height());
    }
    let mut d: f64 = 0.0;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            d = d.max((a[0] - b[0]).hypot(a[1] - b[1]));
        }
    }
    d
}

/// `|β|₁,∞` from the coefficients, or the largest element gradient of `β_h`.
pub fn beta_lipschitz(disc: &Discretization, coeffs: &OseenCoefficients, beta: &PreparedAdvection) -> f64 {
    if let Some(l) = coeffs.beta_lipschitz {
        return l;
    }
    disc.topo
        .active
        .iter()
        .map(|&e| {
            let tri = disc.mesh.element_vertices(e);
            let c = [(tri[0][0] + tri[1][0] + tri[2][0]) / 3.0, (tri[0][1] + tri[1][1] + tri[2][1]) / 3.0];
            let b = disc.space.eval(e, c);
            let (_, g) = disc.space.eval_vector(&b, e, &beta.coeffs);
            (g[0][0].powi(2) + g[0][1].powi(2) + g[1][0].powi(2) + g[1][1].powi(2)).sqrt()
        })
        .fold(0.0, f64::max)
}

struct NormContext<'a> {
    disc: &'a Discretization,
    coeffs: &'a OseenCoefficients,
    stab: &'a StabilizationConfig,
    params: Vec<StabParams>,
    beta: PreparedAdvection,
}

impl<'a> NormContext<'a> {
    fn new(disc: &'a Discretization, coeffs: &'a OseenCoefficients, stab: &'a StabilizationConfig) -> crate::Result<Self> {
        let beta = PreparedAdvection::new(disc, &coeffs.beta)?;
        let params = element_parameters(disc, coeffs, &beta, stab);
        Ok(Self {
            disc,
            coeffs,
            stab,
            params,
            beta,
        })
    }

    /// Volume and interface contributions of the field `at`, facet terms from the mixed vector `jumps`.
    fn components(&self, at: impl Fn(usize, Point) -> PointValues, jumps: &[f64], parts: &SystemParts) -> NormComponents {
        let (disc, c) = (self.disc, self.coeffs);
        let h = disc.h();
        let mut n = NormComponents::default();
        for &e in &disc.topo.active {
            let prm = self.params[e];
            for q in &disc.quad.volume[e] {
                let v = at(e, q.x);
                let b = disc.space.eval(e, q.x);
                let beta = self.beta.at(&disc.space, &b, e, q.x);
                let g = v.grad_u;
                n.sigma_l2 += q.w * c.sigma * (v.u[0].powi(2) + v.u[1].powi(2));
                n.mu_h1 += q.w * c.mu * (g[0][0].powi(2) + g[0][1].powi(2) + g[1][0].powi(2) + g[1][1].powi(2));
                n.divergence += q.w * prm.phi_u * (g[0][0] + g[1][1]).powi(2);
                let s0 = beta[0] * g[0][0] + beta[1] * g[0][1] + v.grad_p[0];
                let s1 = beta[0] * g[1][0] + beta[1] * g[1][1] + v.grad_p[1];
                n.streamline += q.w * prm.phi_beta * (s0 * s0 + s1 * s1);
                n.pressure_l2 += q.w * v.p * v.p;
            }
            for q in &disc.quad.interface[e] {
                let v = at(e, q.x);
                let b = disc.space.eval(e, q.x);
                let beta = self.beta.at(&disc.space, &b, e, q.x);
                let un = v.u[0] * q.normal[0] + v.u[1] * q.normal[1];
                let uu = v.u[0].powi(2) + v.u[1].powi(2);
                n.nitsche_mu += q.w * self.stab.gamma * c.mu / h * uu;
                n.nitsche_normal += q.w * self.stab.gamma * prm.phi_u / h * un * un;
                n.inflow += q.w * (beta[0] * q.normal[0] + beta[1] * q.normal[1]).abs() * uu;
            }
        }
        n.s_beta = parts.cip.s_beta.quadratic_form(jumps);
        n.s_u = parts.cip.s_u.quadratic_form(jumps);
        n.s_p = parts.cip.s_p.quadratic_form(jumps);
        n.g_beta = parts.ghost.g_beta.quadratic_form(jumps);
        n.g_u = parts.ghost.g_u.quadratic_form(jumps);
        n.g_p = parts.ghost.g_p.quadratic_form(jumps);
        n.g_sigma = parts.ghost.g_sigma.quadratic_form(jumps);
        n.g_mu = parts.ghost.g_mu.quadratic_form(jumps);
        n
    }

    fn report(&self, n: NormComponents) -> NormReport {
        let disc = self.disc;
        let c = self.coeffs;
        let h = disc.h();
        let c_p = domain_diameter(disc);
        let omega = omega_h(h, beta_lipschitz(disc, c, &self.beta), c.mu, c.sigma);
        let phi_p = phi_p(c.sigma, c.mu, self.beta.max_norm(), c_p);
        let velocity = n.sigma_l2 + n.mu_h1 + n.nitsche_mu + n.s_u + n.inflow + n.nitsche_normal + n.s_beta;
        let velocity_h = velocity + n.g_sigma + n.g_mu + n.g_beta + n.g_u;
        let pressure_h = n.s_p + n.g_p;
        let semi = velocity_h + pressure_h;
        let full = semi + n.divergence + n.streamline / (1.0 + omega) + phi_p * n.pressure_l2;
        NormReport {
            velocity: velocity.sqrt(),
            velocity_h: velocity_h.sqrt(),
            pressure_h: pressure_h.sqrt(),
            semi: semi.sqrt(),
            full: full.sqrt(),
            phi_p,
            omega_h: omega,
            c_p,
            components: n,
        }
    }
}

/// Energy norms of a discrete field.
pub fn energy_norms(
    sol: &SolutionField,
    disc: &Discretization,
    coeffs: &OseenCoefficients,
    stab: &StabilizationConfig,
    parts: &SystemParts,
) -> crate::Result<NormReport> {
    let ctx = NormContext::new(disc, coeffs, stab)?;
    let n = ctx.components(|e, x| sol.eval(disc, e, x), &sol.to_mixed(), parts);
    Ok(ctx.report(n))
}

/// Energy norms of the error `U − U_h`; jumps of the smooth exact solution
/// vanish, so the facet terms reduce to those of `U_h`.
pub fn energy_error(
    sol: &SolutionField,
    case: &ManufacturedCase,
    disc: &Discretization,
    stab: &StabilizationConfig,
    parts: &SystemParts,
) -> crate::Result<NormReport> {
    let coeffs = case.coefficients();
    let ctx = NormContext::new(disc, &coeffs, stab)?;
    let n = ctx.components(
        |e, x| {
            let v = sol.eval(disc, e, x);
            let (u, g, gp) = ((case.velocity)(x), (case.velocity_gradient)(x), (case.pressure_gradient)(x));
            PointValues {
                u: [v.u[0] - u[0], v.u[1] - u[1]],
                grad_u: [
                    [v.grad_u[0][0] - g[0][0], v.grad_u[0][1] - g[0][1]],
                    [v.grad_u[1][0] - g[1][0], v.grad_u[1][1] - g[1][1]],
                ],
                p: v.p - (case.pressure)(x),
                grad_p: [v.grad_p[0] - gp[0], v.grad_p[1] - gp[1]],
            }
        },
        &sol.to_mixed(),
        parts,
    );
    Ok(ctx.report(n))
}

/// Seeded random mixed vectors: odd samples are supported only on the dofs of cut elements.
pub fn random_fields(disc: &Discretization, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut band = vec![false; disc.n_scalar()];
    for &e in &disc.topo.cut {
        for &d in disc.space.element_dofs(e) {
            band[d] = true;
        }
    }
    (0..count)
        .map(|s| {
            let mut x = vec![0.0; disc.n_unknowns()];
            for d in 0..disc.n_scalar() {
                if s % 2 == 1 && !band[d] {
                    continue;
                }
                x[disc.velocity_index(d, 0)] = rng.gen_range(-1.0..1.0);
                x[disc.velocity_index(d, 1)] = rng.gen_range(-1.0..1.0);
                x[disc.pressure_index(d)] = rng.gen_range(-1.0..1.0);
            }
            x
        })
        .collect()
}

/// `(A_h + S_h + G_h)(U,U) / |U|_h²` for each of the given mixed vectors.
pub fn coercivity_ratios(
    disc: &Discretization,
    coeffs: &OseenCoefficients,
    stab: &StabilizationConfig,
    parts: &SystemParts,
    fields: &[Vec<f64>],
) -> crate::Result<Vec<f64>> {
    let ctx = NormContext::new(disc, coeffs, stab)?;
    let op = parts.operator();
    Ok(fields
        .iter()
        .map(|x| {
            let sol = SolutionField::from_mixed(x, disc.n_scalar(), 0.0);
            let n = ctx.components(|e, p| sol.eval(disc, e, p), x, parts);
            let semi = ctx.report(n).semi;
            op.quadratic_form(x) / (semi * semi)
        })
        .collect())
}

/// `‖u‖²_{Ω*_h} / (‖u‖²_Ω + Σ_{F_Γ} Σ_{1≤j≤k} h^{2j+1}‖⟦∂ⁿʲu⟧‖²_F)` for a scalar field.
pub fn norm_extension_ratio(disc: &Discretization, coeffs: &[f64]) -> f64 {
    let space = &disc.space;
    let value = |e: usize, x: Point| {
        let b = space.eval(e, x);
        space.eval_field(&b, e, coeffs, 1, 0).0
    };
    let order = 2 * disc.order() + 2;
    let mut extended = 0.0;
    let mut physical = 0.0;
    for &e in &disc.topo.active {
        for q in full_element_rule(&disc.mesh, e, order) {
            extended += q.w * value(e, q.x).powi(2);
        }
        for q in &disc.quad.volume[e] {
            physical += q.w * value(e, q.x).powi(2);
        }
    }
    let h = disc.h();
    let mut ghost = 0.0;
    for &f in &disc.topo.ghost_facets {
        for j in 1..=disc.order() {
            let samples = facet_jump(disc, f, coeffs, 1, 0, j).expect("ghost facets are interior");
            let sum: f64 = samples.iter().map(|s| s.w * s.jump * s.jump).sum();
            ghost += h.powi(2 * j as i32 + 1) * sum;
        }
    }
    extended / (physical + ghost)
}
