//! Volume terms `(σu,v) + (β·∇u,v) + (2με(u),ε(v)) − (p,∇·v) + (q,∇·u)` and `(f,v)`.

use super::{assemble_elements, Discretization, ElementDofs, LocalSystem, OseenCoefficients, PreparedAdvection};
use crate::sparse::CsrMatrix;

pub fn assemble_galerkin(
    disc: &Discretization,
    coeffs: &OseenCoefficients,
    beta: &PreparedAdvection,
) -> (CsrMatrix, Vec<f64>) {
    let (sigma, mu) = (coeffs.sigma, coeffs.mu);
    assemble_elements(disc, |e, triplets, rhs| {
        let quad = &disc.quad.volume[e];
        if quad.is_empty() {
            return;
        }
        let dofs = ElementDofs::new(disc, e);
        let n = dofs.n;
        let mut local = LocalSystem::new(dofs.size());
        for q in quad {
            let b = disc.space.eval(e, q.x);
            let bx = beta.at(&disc.space, &b, e, q.x);
            let f = (coeffs.force)(q.x);
            let w = q.w;
            for i in 0..n {
                let (ni, gi) = (b.values[i], b.grads[i]);
                for c in 0..2 {
                    local.rhs[dofs.vel(i, c)] += w * f[c] * ni;
                }
                for j in 0..n {
                    let (nj, gj) = (b.values[j], b.grads[j]);
                    let grad_dot = gi[0] * gj[0] + gi[1] * gj[1];
                    let conv = bx[0] * gj[0] + bx[1] * gj[1];
                    let diag = sigma * ni * nj + ni * conv + mu * grad_dot;
                    for c in 0..2 {
                        let row = dofs.vel(i, c);
                        for d in 0..2 {
                            let mut v = mu * gj[c] * gi[d];
                            if c == d {
                                v += diag;
                            }
                            local.add(row, dofs.vel(j, d), w * v);
                        }
                        // −(p, ∇·v) and its antisymmetric counterpart (q, ∇·u).
                        local.add(row, dofs.pres(j), -w * nj * gi[c]);
                        local.add(dofs.pres(j), row, w * nj * gi[c]);
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
    use crate::forms::{vector_fn, zero_vector_fn, Advection};
    use crate::geometry::LevelSet;
    use crate::mesh::{build_structured_mesh, BoundingBox};

    fn full_disc(n: usize, order: usize) -> Discretization {
        let mesh = build_structured_mesh(n, n, BoundingBox::unit_square()).unwrap();
        Discretization::new(mesh, LevelSet::constant(-1.0), order, 0).unwrap()
    }

    fn coeffs(sigma: f64, mu: f64, beta: [f64; 2]) -> OseenCoefficients {
        OseenCoefficients {
            sigma,
            mu,
            beta: Advection::Analytic(vector_fn(move |_| beta)),
            beta_lipschitz: Some(0.0),
            force: zero_vector_fn(),
            dirichlet: zero_vector_fn(),
        }
    }

    fn galerkin(disc: &Discretization, c: &OseenCoefficients) -> CsrMatrix {
        let beta = PreparedAdvection::new(disc, &c.beta).unwrap();
        assemble_galerkin(disc, c, &beta).0
    }

    fn field(disc: &Discretization, u: impl Fn([f64; 2]) -> [f64; 2], p: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        let mut x = vec![0.0; disc.n_unknowns()];
        for (d, &pt) in disc.space.dof_coords.iter().enumerate() {
            let v = u(pt);
            x[disc.velocity_index(d, 0)] = v[0];
            x[disc.velocity_index(d, 1)] = v[1];
            x[disc.pressure_index(d)] = p(pt);
        }
        x
    }

    #[test]
    fn mass_of_constants_is_domain_area() {
        let disc = full_disc(4, 1);
        let m = galerkin(&disc, &coeffs(1.0, 1e-30, [0.0, 0.0]));
        let ex = field(&disc, |_| [1.0, 0.0], |_| 0.0);
        let ey = field(&disc, |_| [0.0, 1.0], |_| 0.0);
        assert!((m.bilinear(&ex, &ex) - 1.0).abs() < 1e-12);
        assert!((m.bilinear(&ey, &ey) - 1.0).abs() < 1e-12);
        assert!(m.bilinear(&ex, &ey).abs() < 1e-12);
    }

    #[test]
    fn convection_of_linear_field_matches_analytic_integral() {
        // β = (1, 2), u = (x + 3y, 0), v = (x y, 0) on k = 2: ∫ (β·∇u_1) v_1 = ∫ 7 x y = 7/4.
        let disc = full_disc(3, 2);
        let m = galerkin(&disc, &coeffs(0.0, 1e-30, [1.0, 2.0]));
        let u = field(&disc, |x| [x[0] + 3.0 * x[1], 0.0], |_| 0.0);
        let v = field(&disc, |x| [x[0] * x[1], 0.0], |_| 0.0);
        assert!((m.bilinear(&v, &u) - 1.75).abs() < 1e-12);
    }

    #[test]
    fn viscous_term_matches_rate_of_deformation() {
        // u = (y, 0): ε(u) has off-diagonals 1/2, so (2με(u), ε(u)) = μ|Ω|.
        let disc = full_disc(3, 1);
        let m = galerkin(&disc, &coeffs(0.0, 0.7, [0.0, 0.0]));
        let u = field(&disc, |x| [x[1], 0.0], |_| 0.0);
        assert!((m.bilinear(&u, &u) - 0.7).abs() < 1e-12);
        // Rigid rotation u = (−y, x) has ε(u) = 0.
        let r = field(&disc, |x| [-x[1], x[0]], |_| 0.0);
        assert!(m.matvec(&r).iter().take(2 * disc.n_scalar()).all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn pressure_coupling_is_antisymmetric_and_vanishes_for_solenoidal_fields() {
        let disc = full_disc(4, 1);
        let m = galerkin(&disc, &coeffs(0.0, 1e-30, [0.0, 0.0]));
        let one = field(&disc, |_| [0.0, 0.0], |_| 1.0);
        let v = field(&disc, |x| [x[1], x[0]], |_| 0.0);
        assert!(m.bilinear(&v, &one).abs() < 1e-12);
        let p = field(&disc, |_| [0.0, 0.0], |x| x[0]);
        let u = field(&disc, |x| [x[0], 0.0], |_| 0.0);
        // −(p, ∇·u) with p = x, ∇·u = 1 gives −1/2.
        assert!((m.bilinear(&u, &p) + 0.5).abs() < 1e-12);
        assert!((m.bilinear(&p, &u) - 0.5).abs() < 1e-12);
    }
}
