//! Transient and stationary incompressible Navier–Stokes on a fixed cut mesh:
//! one-step-θ in time with Picard iterations, each a stabilized Oseen solve.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{CutFemError, Result};
use crate::forms::{assemble_system, vector_fn, Advection, Discretization, OseenCoefficients, StabilizationConfig};
use crate::mesh::Point;
use crate::solver::{solve_linear, SolutionField};
use crate::sparse::{norm2, CsrMatrix, TripletBuilder};

pub type TimeVectorFn = Arc<dyn Fn(Point, f64) -> [f64; 2] + Send + Sync>;

pub fn time_vector_fn(f: impl Fn(Point, f64) -> [f64; 2] + Send + Sync + 'static) -> TimeVectorFn {
    Arc::new(f)
}

/// `½(1 − cos(πt/T₁))` on `[0, T₁]`, one afterwards.
pub fn ramp(t: f64, t1: f64) -> f64 {
    if t >= t1 {
        1.0
    } else if t <= 0.0 {
        0.0
    } else {
        0.5 * (1.0 - (PI * t / t1).cos())
    }
}

/// Viscosity, forcing and boundary data of the flow problem.
#[derive(Clone)]
pub struct FlowData {
    pub mu: f64,
    pub force: TimeVectorFn,
    pub dirichlet: TimeVectorFn,
    /// Ramp duration `T₁` applied to the boundary data; `None` disables it.
    pub ramp_time: Option<f64>,
    /// Scaling of the convective term; zero gives the Stokes problem.
    pub convection: f64,
}

impl std::fmt::Debug for FlowData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlowData")
            .field("mu", &self.mu)
            .field("ramp_time", &self.ramp_time)
            .field("convection", &self.convection)
            .finish_non_exhaustive()
    }
}

impl FlowData {
    pub fn force_at(&self, t: f64) -> crate::forms::VectorFn {
        let f = self.force.clone();
        vector_fn(move |x| f(x, t))
    }

    pub fn dirichlet_at(&self, t: f64) -> crate::forms::VectorFn {
        let g = self.dirichlet.clone();
        let scale = self.ramp_time.map_or(1.0, |t1| ramp(t, t1));
        vector_fn(move |x| {
            let v = g(x, t);
            [scale * v[0], scale * v[1]]
        })
    }

    fn oseen(&self, sigma: f64, beta: &[f64], t: f64) -> OseenCoefficients {
        OseenCoefficients {
            sigma,
            mu: self.mu,
            beta: Advection::Discrete(beta.iter().map(|b| self.convection * b).collect()),
            beta_lipschitz: None,
            force: self.force_at(t),
            dirichlet: self.dirichlet_at(t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardSettings {
    /// Bound on `‖U^{k+1} − U^k‖ / ‖U^{k+1}‖` over the velocity coefficients.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PicardSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 50,
        }
    }
}

/// Time level, discrete solution and stepping parameters.
#[derive(Debug, Clone)]
pub struct TransientState {
    pub time: f64,
    pub solution: SolutionField,
    pub dt: f64,
    pub theta: f64,
    pub picard: PicardSettings,
}

impl TransientState {
    pub fn new(solution: SolutionField, dt: f64, theta: f64, picard: PicardSettings) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(CutFemError::InvalidInput(format!("time step must be positive, got {dt}")));
        }
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(CutFemError::InvalidInput(format!("theta must lie in (0, 1], got {theta}")));
        }
        if !(picard.tolerance > 0.0) || picard.max_iterations == 0 {
            return Err(CutFemError::InvalidInput(
                "Picard tolerance and iteration cap must be positive".into(),
            ));
        }
        Ok(Self {
            time: 0.0,
            solution,
            dt,
            theta,
            picard,
        })
    }
}

/// Diagnostics of one Picard loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardReport {
    pub iterations: usize,
    /// Relative velocity change after each iteration.
    pub history: Vec<f64>,
    /// Largest relative residual of the linear solves.
    pub solver_residual: f64,
    /// `|∮_Γ u_h·n ds| / ‖u_h‖_{L²(Ω)}` of the converged iterate.
    pub mass_imbalance: f64,
}

/// `∫_Ω |u_h|² dx`.
pub fn velocity_l2_squared(disc: &Discretization, velocity: &[f64]) -> f64 {
    disc.topo
        .active
        .iter()
        .flat_map(|&e| disc.quad.volume[e].iter().map(move |q| (e, q)))
        .map(|(e, q)| {
            let b = disc.space.eval(e, q.x);
            let (u, _) = disc.space.eval_vector(&b, e, velocity);
            q.w * (u[0] * u[0] + u[1] * u[1])
        })
        .sum()
}

/// `|∮_Γ u_h·n ds| / ‖u_h‖_{L²(Ω)}`, zero for a vanishing field.
pub fn mass_imbalance(disc: &Discretization, velocity: &[f64]) -> f64 {
    let flux: f64 = disc
        .topo
        .active
        .iter()
        .flat_map(|&e| disc.quad.interface[e].iter().map(move |q| (e, q)))
        .map(|(e, q)| {
            let b = disc.space.eval(e, q.x);
            let (u, _) = disc.space.eval_vector(&b, e, velocity);
            q.w * (u[0] * q.normal[0] + u[1] * q.normal[1])
        })
        .sum();
    let norm = velocity_l2_squared(disc, velocity).sqrt();
    if norm == 0.0 {
        0.0
    } else {
        flux.abs() / norm
    }
}

/// Velocity mass matrix `(u, v)` on `Ω` in the mixed numbering.
pub fn velocity_mass(disc: &Discretization) -> CsrMatrix {
    let n = disc.n_unknowns();
    let mut builder = TripletBuilder::new(n, n);
    for &e in &disc.topo.active {
        let dofs = disc.space.element_dofs(e);
        for q in &disc.quad.volume[e] {
            let b = disc.space.eval(e, q.x);
            for (i, &di) in dofs.iter().enumerate() {
                for (j, &dj) in dofs.iter().enumerate() {
                    let v = q.w * b.values[i] * b.values[j];
                    for c in 0..2 {
                        builder.push(disc.velocity_index(di, c), disc.velocity_index(dj, c), v);
                    }
                }
            }
        }
    }
    builder.build()
}

/// Velocity rows of `σMUⁿ − w(A(Uⁿ)Uⁿ − Fⁿ)` with `w = (1−θ)/θ`, where
/// `A` is the stabilized Oseen operator without the reaction mass, assembled
/// with `β = uⁿ` and the data at `tⁿ`. Pressure and multiplier rows are zero.
pub fn history_vector(
    disc: &Discretization,
    previous: &SolutionField,
    data: &FlowData,
    stab: &StabilizationConfig,
    mass: &CsrMatrix,
    sigma: f64,
    weight: f64,
    t_old: f64,
) -> Result<Vec<f64>> {
    let x = previous.to_mixed();
    let mut out = mass.matvec(&x);
    out.iter_mut().for_each(|v| *v *= sigma);
    if weight != 0.0 {
        let system = assemble_system(disc, &data.oseen(sigma, &previous.velocity, t_old), stab)?;
        let kx = system.matrix.matvec(&x);
        for (i, o) in out.iter_mut().enumerate().take(2 * disc.n_scalar()) {
            // K Uⁿ − σMUⁿ − Fⁿ, with σMUⁿ already stored in `o`.
            *o -= weight * (kx[i] - *o - system.rhs[i]);
        }
    }
    out[2 * disc.n_scalar()..].iter_mut().for_each(|v| *v = 0.0);
    Ok(out)
}

fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let diff: Vec<f64> = new.iter().zip(old).map(|(a, b)| a - b).collect();
    let scale = norm2(new);
    let d = norm2(&diff);
    if scale == 0.0 {
        d
    } else {
        d / scale
    }
}

/// Fixed-point iteration on `β`; `extra` is added to the assembled right-hand side.
fn picard_loop(
    disc: &Discretization,
    data: &FlowData,
    stab: &StabilizationConfig,
    sigma: f64,
    t: f64,
    initial: &SolutionField,
    extra: Option<&[f64]>,
    remove_mass: Option<&CsrMatrix>,
    settings: &PicardSettings,
) -> Result<(SolutionField, PicardReport)> {
    let mut current = initial.clone();
    let mut history = Vec::new();
    let mut solver_residual: f64 = 0.0;
    let linear = data.convection == 0.0;
    for it in 1..=settings.max_iterations {
        let system = assemble_system(disc, &data.oseen(sigma, &current.velocity, t), stab)?;
        let mut rhs = system.rhs.clone();
        if let Some(extra) = extra {
            rhs.iter_mut().zip(extra).for_each(|(r, e)| *r += e);
        }
        let matrix = match remove_mass {
            Some(m) => system.matrix.add_scaled(m, -sigma),
            None => system.matrix,
        };
        let sol = solve_linear(&matrix, &rhs)?;
        solver_residual = solver_residual.max(sol.residual);
        let next = SolutionField::from_mixed(&sol.x, disc.n_scalar(), sol.residual);
        let change = relative_change(&next.velocity, &current.velocity);
        history.push(change);
        current = next;
        if linear || change < settings.tolerance {
            let mass = mass_imbalance(disc, &current.velocity);
            return Ok((
                current,
                PicardReport {
                    iterations: it,
                    history,
                    solver_residual,
                    mass_imbalance: mass,
                },
            ));
        }
    }
    Err(CutFemError::PicardDivergence {
        iterations: settings.max_iterations,
        history,
    })
}

/// Advances one time step: `σ = 1/(θΔt)`, Picard on `β`, history terms from the previous level.
pub fn step(
    disc: &Discretization,
    state: &TransientState,
    data: &FlowData,
    stab: &StabilizationConfig,
) -> Result<(TransientState, PicardReport)> {
    let sigma = 1.0 / (state.theta * state.dt);
    let weight = (1.0 - state.theta) / state.theta;
    let t_new = state.time + state.dt;
    let mass = velocity_mass(disc);
    let history = history_vector(disc, &state.solution, data, stab, &mass, sigma, weight, state.time)?;
    let (solution, report) = picard_loop(
        disc,
        data,
        stab,
        sigma,
        t_new,
        &state.solution,
        Some(&history),
        None,
        &state.picard,
    )?;
    Ok((
        TransientState {
            time: t_new,
            solution,
            ..state.clone()
        },
        report,
    ))
}

/// Steady Navier–Stokes by Picard iteration with `σ = 0`, starting from `β = 0`.
pub fn stationary_picard(
    disc: &Discretization,
    data: &FlowData,
    stab: &StabilizationConfig,
    settings: &PicardSettings,
) -> Result<(SolutionField, PicardReport)> {
    stationary_picard_at(disc, data, stab, settings, 0.0)
}

/// Steady Picard iteration whose stabilization parameters are those of reaction
/// `σ`, with the reaction mass itself removed. Its solution is a fixed point of
/// [`step`] with `θΔt = 1/σ` for time-independent data.
pub fn stationary_picard_at(
    disc: &Discretization,
    data: &FlowData,
    stab: &StabilizationConfig,
    settings: &PicardSettings,
    sigma: f64,
) -> Result<(SolutionField, PicardReport)> {
    let zero = SolutionField::zeros(disc.n_scalar());
    let mass = (sigma != 0.0).then(|| velocity_mass(disc));
    picard_loop(disc, data, stab, sigma, 0.0, &zero, None, mass.as_ref(), settings)
}

/// Per-step diagnostics of a transient run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub picard_iterations: usize,
    pub picard_change: f64,
    pub solver_residual: f64,
    pub mass_imbalance: f64,
    pub kinetic_energy: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TimeSeries {
    pub records: Vec<StepRecord>,
}

impl TimeSeries {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("step,time,picard_iterations,picard_change,solver_residual,mass_imbalance,kinetic_energy\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.6e},{},{:.6e},{:.6e},{:.6e},{:.6e}\n",
                r.step, r.time, r.picard_iterations, r.picard_change, r.solver_residual, r.mass_imbalance, r.kinetic_energy
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::File::create(path)?.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    pub fn max_picard_iterations(&self) -> usize {
        self.records.iter().map(|r| r.picard_iterations).max().unwrap_or(0)
    }
}

/// Runs `steps` time steps from `state`, calling `observer` after each one.
pub fn run_transient(
    disc: &Discretization,
    mut state: TransientState,
    data: &FlowData,
    stab: &StabilizationConfig,
    steps: usize,
    mut observer: impl FnMut(usize, &TransientState) -> Result<()>,
) -> Result<(TransientState, TimeSeries)> {
    let mut series = TimeSeries::default();
    for n in 1..=steps {
        let (next, report) = step(disc, &state, data, stab)?;
        state = next;
        series.records.push(StepRecord {
            step: n,
            time: state.time,
            picard_iterations: report.iterations,
            picard_change: report.history.last().copied().unwrap_or(0.0),
            solver_residual: report.solver_residual,
            mass_imbalance: report.mass_imbalance,
            kinetic_energy: 0.5 * velocity_l2_squared(disc, &state.solution.velocity),
        });
        observer(n, &state)?;
    }
    Ok((state, series))
}

/// Square cavity `max(|x − 0.5|, |y − 0.5|) ≤ 0.41` with a smooth lid profile
/// `16 s²(1 − s)²` along the top wall.
pub fn cut_cavity(mu: f64, ramp_time: Option<f64>) -> (crate::geometry::LevelSet, FlowData) {
    cut_cavity_at([0.5, 0.5], 0.41, mu, ramp_time)
}

/// Square cavity of half side `half` around `center`, driven by the lid profile
/// `16 s²(1 − s)²` on the top wall (`s ∈ [0, 1]` along it).
pub fn cut_cavity_at(
    center: Point,
    half: f64,
    mu: f64,
    ramp_time: Option<f64>,
) -> (crate::geometry::LevelSet, FlowData) {
    let ls = crate::geometry::LevelSet::new(move |x| (x[0] - center[0]).abs().max((x[1] - center[1]).abs()) - half);
    let lid = time_vector_fn(move |x, _| {
        if x[1] < center[1] + 0.5 * half {
            return [0.0, 0.0];
        }
        let s = ((x[0] - center[0] + half) / (2.0 * half)).clamp(0.0, 1.0);
        [16.0 * s * s * (1.0 - s) * (1.0 - s), 0.0]
    });
    let data = FlowData {
        mu,
        force: time_vector_fn(|_, _| [0.0, 0.0]),
        dirichlet: lid,
        ramp_time,
        convection: 1.0,
    };
    (ls, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verification::{compute_errors, taylor_case, unit_square_discretization};

    fn stokes_data(mu: f64) -> FlowData {
        FlowData {
            mu,
            force: time_vector_fn(|x, _| [x[1], -x[0]]),
            dirichlet: time_vector_fn(|x, _| [x[1] - 0.5, 0.5 - x[0]]),
            ramp_time: None,
            convection: 0.0,
        }
    }

    #[test]
    fn ramp_profile() {
        assert_eq!(ramp(0.0, 0.1), 0.0);
        assert!((ramp(0.05, 0.1) - 0.5).abs() < 1e-15);
        assert_eq!(ramp(0.2, 0.1), 1.0);
    }

    #[test]
    fn invalid_state_parameters_are_rejected() {
        let s = SolutionField::zeros(3);
        assert!(TransientState::new(s.clone(), 0.0, 0.5, PicardSettings::default()).is_err());
        assert!(TransientState::new(s.clone(), 0.1, 0.0, PicardSettings::default()).is_err());
        assert!(TransientState::new(s, 0.1, 1.0, PicardSettings::default()).is_ok());
    }

    #[test]
    fn stokes_limit_converges_in_one_iteration() {
        let case = taylor_case(0.1, 0.0);
        let disc = unit_square_discretization(8, case.level_set.clone(), 1, 0).unwrap();
        let stab = StabilizationConfig::default();
        let (_, report) = stationary_picard(&disc, &stokes_data(0.1), &stab, &PicardSettings::default()).unwrap();
        assert_eq!(report.iterations, 1);
        assert!(report.solver_residual <= 1e-10);
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let case = taylor_case(0.1, 0.0);
        let disc = unit_square_discretization(8, case.level_set.clone(), 1, 0).unwrap();
        let data = FlowData {
            mu: 0.1,
            force: time_vector_fn(|_, _| [0.0, 0.0]),
            dirichlet: time_vector_fn(|_, _| [0.0, 0.0]),
            ramp_time: None,
            convection: 1.0,
        };
        let (sol, report) =
            stationary_picard(&disc, &data, &StabilizationConfig::default(), &PicardSettings::default()).unwrap();
        assert_eq!(report.iterations, 1);
        assert!(sol.velocity.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stationary_state_is_a_fixed_point_of_the_step() {
        let case = taylor_case(0.1, 0.0);
        let disc = unit_square_discretization(10, case.level_set.clone(), 1, 0).unwrap();
        let stab = StabilizationConfig::default();
        let data = stokes_data(0.1);
        let data = FlowData {
            convection: 1.0,
            ..data
        };
        let sigma = 100.0;
        let (steady, _) = stationary_picard_at(&disc, &data, &stab, &PicardSettings::default(), sigma).unwrap();
        for theta in [0.5, 1.0] {
            let dt = 1.0 / (theta * sigma);
            let state = TransientState::new(steady.clone(), dt, theta, PicardSettings::default()).unwrap();
            let (next, _) = step(&disc, &state, &data, &stab).unwrap();
            let change = relative_change(&next.solution.velocity, &steady.velocity);
            assert!(change < 1e-8, "theta {theta}: change {change:e}");
        }
    }

    #[test]
    fn backward_euler_stokes_step_is_linear() {
        let case = taylor_case(0.1, 0.0);
        let disc = unit_square_discretization(8, case.level_set.clone(), 1, 0).unwrap();
        let stab = StabilizationConfig::default();
        let data = FlowData {
            force: time_vector_fn(|_, _| [0.0, 0.0]),
            dirichlet: time_vector_fn(|_, _| [0.0, 0.0]),
            ..stokes_data(0.1)
        };
        let mut u = SolutionField::zeros(disc.n_scalar());
        u.velocity = disc.space.interpolate_vector(|x| [(3.0 * x[1]).sin(), x[0] * x[0]]);
        let advance = |s: &SolutionField| {
            let state = TransientState::new(s.clone(), 0.05, 1.0, PicardSettings::default()).unwrap();
            step(&disc, &state, &data, &stab).unwrap().0.solution.velocity
        };
        let base = advance(&u);
        let mut scaled = u.clone();
        scaled.velocity.iter_mut().for_each(|v| *v *= -2.5);
        let out = advance(&scaled);
        let err: f64 = base.iter().zip(&out).map(|(a, b)| (-2.5 * a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10 * norm2(&out).max(1.0), "linearity defect {err:e}");
    }

    #[test]
    fn stationary_taylor_flow_matches_oseen_error_levels() {
        let case = taylor_case(0.1, 0.0);
        let disc = unit_square_discretization(20, case.level_set.clone(), 1, 0).unwrap();
        let stab = StabilizationConfig::default();
        let force = case.force();
        let dirichlet = case.velocity.clone();
        let data = FlowData {
            mu: case.mu,
            force: time_vector_fn(move |x, _| force(x)),
            dirichlet: time_vector_fn(move |x, _| dirichlet(x)),
            ramp_time: None,
            convection: 1.0,
        };
        let (sol, report) = stationary_picard(&disc, &data, &stab, &PicardSettings::default()).unwrap();
        let oseen = crate::verification::solve_case(&case, 20, 1, 0, &stab).unwrap();
        let nse = compute_errors(&sol, &case, &disc);
        assert!(nse.velocity_l2 <= 2.0 * oseen.errors.velocity_l2, "{nse:?} vs {:?}", oseen.errors);
        assert!(nse.pressure_l2 <= 2.0 * oseen.errors.pressure_l2);
        assert!(report.mass_imbalance <= 1e-3, "mass imbalance {}", report.mass_imbalance);
    }

    #[test]
    fn time_series_csv_layout() {
        let series = TimeSeries {
            records: vec![StepRecord {
                step: 1,
                time: 0.01,
                picard_iterations: 4,
                picard_change: 1e-9,
                solver_residual: 1e-15,
                mass_imbalance: 1e-6,
                kinetic_energy: 0.02,
            }],
        };
        let csv = series.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().starts_with("1,1.000000e-2,4,"));
        assert_eq!(series.max_picard_iterations(), 4);
    }
}
