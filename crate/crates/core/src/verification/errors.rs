//! Bulk and boundary error norms of a discrete solution.

use serde::Serialize;

use super::ManufacturedCase;
use crate::forms::Discretization;
use crate::solver::SolutionField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorReport {
    pub h: f64,
    pub velocity_l2: f64,
    pub velocity_h1: f64,
    pub pressure_l2: f64,
    pub velocity_l2_boundary: f64,
    pub velocity_h1_boundary: f64,
    pub pressure_l2_boundary: f64,
}

impl ErrorReport {
    pub const COLUMNS: [&'static str; 6] = [
        "u_L2",
        "grad_u_L2",
        "p_L2",
        "u_L2_Gamma",
        "grad_u_L2_Gamma",
        "p_L2_Gamma",
    ];

    pub fn values(&self) -> [f64; 6] {
        [
            self.velocity_l2,
            self.velocity_h1,
            self.pressure_l2,
            self.velocity_l2_boundary,
            self.velocity_h1_boundary,
            self.pressure_l2_boundary,
        ]
    }
}

/// Integrals of squared pointwise differences over `Ω` and `Γ`.
///
/// The pressure is compared after removing the mean of `p_h − p` over `Ω`.
pub fn compute_errors(sol: &SolutionField, case: &ManufacturedCase, disc: &Discretization) -> ErrorReport {
    let volume_points = || {
        disc.topo
            .active
            .iter()
            .flat_map(|&e| disc.quad.volume[e].iter().map(move |q| (e, q.x, q.w)))
    };
    let (mut area, mut p_shift) = (0.0, 0.0);
    for (e, x, w) in volume_points() {
        area += w;
        p_shift += w * (sol.eval(disc, e, x).p - (case.pressure)(x));
    }
    let p_shift = if area > 0.0 { p_shift / area } else { 0.0 };

    let mut bulk = [0.0; 3];
    for (e, x, w) in volume_points() {
        let v = sol.eval(disc, e, x);
        let (du, dg, dp) = differences(&v, case, x, p_shift);
        bulk[0] += w * du;
        bulk[1] += w * dg;
        bulk[2] += w * dp;
    }
    let mut boundary = [0.0; 3];
    for &e in &disc.topo.active {
        for q in &disc.quad.interface[e] {
            let v = sol.eval(disc, e, q.x);
            let (du, dg, dp) = differences(&v, case, q.x, p_shift);
            boundary[0] += q.w * du;
            boundary[1] += q.w * dg;
            boundary[2] += q.w * dp;
        }
    }
    ErrorReport {
        h: disc.h(),
        velocity_l2: bulk[0].sqrt(),
        velocity_h1: bulk[1].sqrt(),
        pressure_l2: bulk[2].sqrt(),
        velocity_l2_boundary: boundary[0].sqrt(),
        velocity_h1_boundary: boundary[1].sqrt(),
        pressure_l2_boundary: boundary[2].sqrt(),
    }
}

fn differences(
    v: &crate::solver::PointValues,
    case: &ManufacturedCase,
    x: crate::mesh::Point,
    p_shift: f64,
) -> (f64, f64, f64) {
    let u = (case.velocity)(x);
    let g = (case.velocity_gradient)(x);
    let du = (v.u[0] - u[0]).powi(2) + (v.u[1] - u[1]).powi(2);
    let dg = (0..2)
        .flat_map(|c| (0..2).map(move |d| (c, d)))
        .map(|(c, d)| (v.grad_u[c][d] - g[c][d]).powi(2))
        .sum();
    let dp = (v.p - (case.pressure)(x) - p_shift).powi(2);
    (du, dg, dp)
}

/// Nodal interpolant of the exact solution as a discrete field (multiplier zero).
pub fn interpolate_solution(case: &ManufacturedCase, disc: &Discretization) -> SolutionField {
    let space = &disc.space;
    SolutionField {
        velocity: space.interpolate_vector(|x| (case.velocity)(x)),
        pressure: space.interpolate(|x| (case.pressure)(x)),
        multiplier: 0.0,
        residual: 0.0,
    }
}

/// Boundary integral of `f` along the reconstructed interface.
pub fn integrate_boundary(disc: &Discretization, f: impl Fn(crate::mesh::Point) -> f64) -> f64 {
    disc.topo
        .active
        .iter()
        .flat_map(|&e| disc.quad.interface[e].iter())
        .map(|q| q.w * f(q.x))
        .sum()
}
