//! Weak imposition of `u = g` on the embedded boundary.

use super::{
    assemble_elements, Discretization, ElementDofs, LocalSystem, OseenCoefficients, PreparedAdvection,
    StabParams, StabilizationConfig,
};
use crate::sparse::CsrMatrix;

/// Adds, per interface quadrature point with outward normal `n`:
/// the inflow term `−(β·n)(u,v)` where `β·n < 0`, the normal penalty
/// `γφ_u/h (u·n)(v·n)`, the symmetric flux terms `−(2με(u)n,v) − (u,2με(v)n)`,
/// the viscous penalty `γμ/h (u,v)`, the pressure coupling `(p,v·n) − (q,u·n)`,
/// and the matching data terms.
pub fn assemble_nitsche(
    disc: &Discretization,
    coeffs: &OseenCoefficients,
    beta: &PreparedAdvection,
    params: &[StabParams],
    stab: &StabilizationConfig,
) -> (CsrMatrix, Vec<f64>) {
    let h = disc.h();
    let mu = coeffs.mu;
    assemble_elements(disc, |e, triplets, rhs| {
        let quad = &disc.quad.interface[e];
        if quad.is_empty() {
            return;
        }
        let dofs = ElementDofs::new(disc, e);
        let nb = dofs.n;
        let mut local = LocalSystem::new(dofs.size());
        let normal_penalty = stab.gamma * params[e].phi_u / h;
        let visc_penalty = stab.gamma * mu / h;
        for q in quad {
            let b = disc.space.eval(e, q.x);
            let n = q.normal;
            let bx = beta.at(&disc.space, &b, e, q.x);
            let bn = bx[0] * n[0] + bx[1] * n[1];
            let inflow = if bn < 0.0 { -bn } else { 0.0 };
            let g = (coeffs.dirichlet)(q.x);
            let gn = g[0] * n[0] + g[1] * n[1];
            let w = q.w;
            for i in 0..nb {
                let (ni, gi) = (b.values[i], b.grads[i]);
                let dn_i = gi[0] * n[0] + gi[1] * n[1];
                let g_dot_grad_i = g[0] * gi[0] + g[1] * gi[1];
                for c in 0..2 {
                    let row = dofs.vel(i, c);
                    local.rhs[row] += w
                        * ((inflow + visc_penalty) * g[c] * ni + normal_penalty * gn * n[c] * ni
                            - mu * (g[c] * dn_i + n[c] * g_dot_grad_i));
                }
                local.rhs[dofs.pres(i)] -= w * gn * ni;
                for j in 0..nb {
                    let (nj, gj) = (b.values[j], b.grads[j]);
                    let dn_j = gj[0] * n[0] + gj[1] * n[1];
                    let mass = ni * nj;
                    for c in 0..2 {
                        let row = dofs.vel(i, c);
                        for d in 0..2 {
                            let mut v = normal_penalty * n[c] * n[d] * mass
                                - mu * n[d] * gj[c] * ni
                                - mu * n[c] * gi[d] * nj;
                            if c == d {
                                v += (inflow + visc_penalty) * mass - mu * (dn_j * ni + dn_i * nj);
                            }
                            local.add(row, dofs.vel(j, d), w * v);
                        }
                        local.add(row, dofs.pres(j), w * n[c] * mass);
                        local.add(dofs.pres(j), row, -w * n[c] * mass);
                    }
                }
            }
        }
        local.emit(&dofs, triplets, rhs);
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{element_parameters, vector_fn, zero_vector_fn, Advection};
    use crate::geometry::LevelSet;
    use crate::mesh::{build_structured_mesh, BoundingBox};

    fn half_plane_disc() -> Discretization {
        // Fluid on x < 0.53; the interface cuts a column of elements.
        let mesh = build_structured_mesh(5, 5, BoundingBox::unit_square()).unwrap();
        Discretization::new(mesh, LevelSet::new(|x| x[0] - 0.53).with_gradient(|_| [1.0, 0.0]), 1, 0).unwrap()
    }

    fn assemble(disc: &Discretization, beta: [f64; 2], stab: &StabilizationConfig) -> (CsrMatrix, Vec<f64>) {
        let coeffs = OseenCoefficients {
            sigma: 0.0,
            mu: 0.2,
            beta: Advection::Analytic(vector_fn(move |_| beta)),
            beta_lipschitz: Some(0.0),
            force: zero_vector_fn(),
            dirichlet: vector_fn(|_| [1.0, 0.0]),
        };
        let prepared = PreparedAdvection::new(disc, &coeffs.beta).unwrap();
        let params = element_parameters(disc, &coeffs, &prepared, stab);
        assemble_nitsche(disc, &coeffs, &prepared, &params, stab)
    }

    fn velocity_block(disc: &Discretization, m: &CsrMatrix) -> CsrMatrix {
        m.leading_block(2 * disc.n_scalar())
    }

    #[test]
    fn velocity_penalty_blocks_are_symmetric_psd() {
        let disc = half_plane_disc();
        let stab = StabilizationConfig::default();
        let (m, _) = assemble(&disc, [0.0, 0.0], &stab);
        let v = velocity_block(&disc, &m);
        assert!(v.asymmetry() < 1e-12 * v.max_abs());
        // Pressure coupling is antisymmetric.
        let full_asym = m.add_scaled(&m.transpose(), 1.0);
        let n = 2 * disc.n_scalar();
        assert!(full_asym.triplets().filter(|&(r, c, _)| r >= n || c >= n).all(|(_, _, v)| v.abs() < 1e-12));
    }

    #[test]
    fn outflow_boundary_has_no_inflow_contribution() {
        let disc = half_plane_disc();
        let stab = StabilizationConfig::default();
        // β·n = 1 > 0 everywhere on Γ (n = e_x), versus β = 0 with the same φ_u.
        let (out, _) = assemble(&disc, [1.0, 0.0], &stab);
        let no_beta = StabilizationConfig { c_u: 0.0, ..stab };
        let (zero, _) = assemble(&disc, [0.0, 0.0], &no_beta);
        let (out_same_phi, _) = assemble(&disc, [1.0, 0.0], &no_beta);
        assert!(out_same_phi.max_abs_diff(&zero) < 1e-13);
        assert!(out.max_abs_diff(&zero) > 0.0);
        // Inflow β·n = −1 adds exactly the boundary mass matrix.
        let (inflow, _) = assemble(&disc, [-1.0, 0.0], &no_beta);
        let diff = inflow.add_scaled(&zero, -1.0);
        let ones: Vec<f64> = (0..disc.n_unknowns()).map(|i| if i < 2 * disc.n_scalar() && i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        assert!((diff.quadratic_form(&ones) - disc.quad.interface_length()).abs() < 1e-12);
    }

    #[test]
    fn rhs_matches_matrix_for_the_data_itself() {
        // With g = (1, 0) and u_h = g, the velocity rows of M u_h equal the data terms.
        let disc = half_plane_disc();
        let stab = StabilizationConfig::default();
        let (m, rhs) = assemble(&disc, [-0.3, 0.4], &stab);
        let mut u = vec![0.0; disc.n_unknowns()];
        for d in 0..disc.n_scalar() {
            u[disc.velocity_index(d, 0)] = 1.0;
        }
        let mu_vec = m.matvec(&u);
        for i in 0..disc.multiplier_index() {
            assert!((mu_vec[i] - rhs[i]).abs() < 1e-12, "row {i}: {} vs {}", mu_vec[i], rhs[i]);
        }
    }
}
