use approx::assert_relative_eq;
use cutfem::forms::{assemble_system, StabilizationConfig};
use cutfem::geometry::LevelSet;
use cutfem::solver::{solve_linear, SolutionField};
use cutfem::verification::{
    coercivity_ratios, patch_case, random_fields, run_convergence, solve_case, taylor_case,
    unit_square_discretization,
};
use cutfem::CutFemError;

#[test]
fn patch_test_is_exact_for_shifted_circles() {
    for (centre, order) in [([0.5, 0.5], 1), ([0.503, 0.491], 1), ([0.47, 0.52], 2)] {
        let case = patch_case(0.01, 0.0, [2.0, -1.0], LevelSet::circle(centre, 0.37));
        let sub = if order == 2 { 2 } else { 0 };
        let run = solve_case(&case, 12, order, sub, &StabilizationConfig::for_order(order)).unwrap();
        assert!(run.solution.residual <= 1e-10);
        assert!(run.errors.velocity_l2 <= 1e-10, "{:?}", run.errors);
        assert!(run.errors.pressure_l2 <= 1e-10, "{:?}", run.errors);
    }
}

#[test]
fn interface_length_and_area_approach_the_circle() {
    let r = 0.45;
    for order in [1, 2] {
        let d = unit_square_discretization(40, LevelSet::circle([0.5, 0.5], r), order, 0).unwrap();
        assert_relative_eq!(d.quad.interface_length(), 2.0 * std::f64::consts::PI * r, max_relative = 1e-3);
        assert_relative_eq!(d.quad.domain_area(), std::f64::consts::PI * r * r, max_relative = 1e-3);
    }
}

#[test]
fn system_without_pressure_constraint_is_singular() {
    let case = taylor_case(0.1, 1.0);
    let d = unit_square_discretization(8, case.level_set.clone(), 1, 0).unwrap();
    let system = assemble_system(&d, &case.coefficients(), &StabilizationConfig::default()).unwrap();
    assert!(solve_linear(&system.matrix, &system.rhs).is_ok());
    let (a, b) = system.without_constraint();
    match solve_linear(&a, &b) {
        Err(CutFemError::SingularSystem { .. }) => {}
        other => panic!("expected a singular system, got {other:?}"),
    }
}

#[test]
fn solution_has_zero_pressure_mean() {
    let case = taylor_case(0.1, 1.0);
    let run = solve_case(&case, 10, 1, 0, &StabilizationConfig::default()).unwrap();
    assert!(run.solution.pressure_mean_integral(&run.disc).abs() < 1e-12);
}

#[test]
fn coercivity_over_random_fields_is_positive() {
    let case = taylor_case(0.1, 1.0);
    let stab = StabilizationConfig::default();
    let run = solve_case(&case, 12, 1, 0, &stab).unwrap();
    let fields = random_fields(&run.disc, 20, 11);
    let ratios = coercivity_ratios(&run.disc, &case.coefficients(), &stab, &run.system.parts, &fields).unwrap();
    assert_eq!(ratios.len(), 20);
    assert!(ratios.iter().all(|&r| r > 0.0 && r.is_finite()), "{ratios:?}");
}

#[test]
fn convergence_tables_are_reproducible() {
    let case = taylor_case(0.1, 1.0);
    let stab = StabilizationConfig::default();
    let a = run_convergence(&case, 1, &[6, 12], 0, &stab).unwrap().to_csv();
    let b = run_convergence(&case, 1, &[6, 12], 0, &stab).unwrap().to_csv();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 3);
}

#[test]
fn solution_and_matrix_exports_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let case = taylor_case(0.1, 1.0);
    let run = solve_case(&case, 6, 1, 0, &StabilizationConfig::default()).unwrap();
    let vtk = dir.path().join("fields.vtk");
    run.solution.write_vtk(&run.disc, &vtk).unwrap();
    let text = std::fs::read_to_string(&vtk).unwrap();
    assert!(text.contains("VECTORS velocity double") && text.contains("SCALARS pressure double 1"));
    let mtx = dir.path().join("system.mtx");
    run.system.write_matrix_market(&mtx).unwrap();
    let back = cutfem::sparse::CsrMatrix::read_matrix_market(&mtx).unwrap();
    assert!(back.max_abs_diff(&run.system.matrix) <= 1e-15 * run.system.matrix.max_abs());
    let mixed = run.solution.to_mixed();
    assert_eq!(SolutionField::from_mixed(&mixed, run.disc.n_scalar(), 0.0).to_mixed(), mixed);
}
