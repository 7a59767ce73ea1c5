//! Manufactured solutions, error and energy norms, convergence studies and
//! cut-position robustness sweeps.

mod cases;
mod convergence;
mod errors;
mod norms;
mod sweep;

pub use cases::{patch_case, taylor_case, taylor_domain, ManufacturedCase, TensorFn};
pub use convergence::{eoc, run_convergence, run_convergence_with, ConvergenceRow, ConvergenceTable};
pub use errors::{compute_errors, integrate_boundary, interpolate_solution, ErrorReport};
pub use norms::{
    beta_lipschitz, coercivity_ratios, domain_diameter, energy_error, energy_norms, norm_extension_ratio, omega_h,
    phi_p, random_fields, NormComponents, NormReport,
};
pub use sweep::{condition_at_offset, cut_sweep, default_offsets, shifted_case, SweepReport, SweepRow};

use crate::error::Result;
use crate::forms::{assemble_system, Discretization, LinearSystem, StabilizationConfig};
use crate::geometry::LevelSet;
use crate::mesh::{build_structured_mesh, BoundingBox};
use crate::solver::{solve, SolutionField};

/// Default sub-triangulation depth of cut elements for order `k`.
pub fn default_subdivision(order: usize) -> usize {
    if order >= 2 {
        2
    } else {
        0
    }
}

/// Structured `N × N` discretization of the unit square cut by `level_set`.
pub fn unit_square_discretization(n: usize, level_set: LevelSet, order: usize, subdivision: usize) -> Result<Discretization> {
    let mesh = build_structured_mesh(n, n, BoundingBox::unit_square())?;
    Discretization::new(mesh, level_set, order, subdivision)
}

/// Result of one manufactured-solution solve.
#[derive(Debug, Clone)]
pub struct CaseRun {
    pub disc: Discretization,
    pub system: LinearSystem,
    pub solution: SolutionField,
    pub errors: ErrorReport,
}

/// Assembles and solves `case` on an `N × N` mesh and measures the errors.
pub fn solve_case(
    case: &ManufacturedCase,
    n: usize,
    order: usize,
    subdivision: usize,
    stab: &StabilizationConfig,
) -> Result<CaseRun> {
    let disc = unit_square_discretization(n, case.level_set.clone(), order, subdivision)?;
    let system = assemble_system(&disc, &case.coefficients(), stab)?;
    let solution = solve(&system)?;
    let errors = compute_errors(&solution, case, &disc);
    Ok(CaseRun {
        disc,
        system,
        solution,
        errors,
    })
}
