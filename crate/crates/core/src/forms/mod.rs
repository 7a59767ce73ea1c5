//! Assembly of the stabilized Nitsche cut finite element system for the Oseen problem.
//!
//! Unknowns are ordered as interleaved velocity components (`2 * dof + c`),
//! followed by pressure (`2 * n + dof`) and one Lagrange multiplier fixing the
//! pressure mean (`3 * n`).

mod facets;
mod galerkin;
mod nitsche;

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CutFemError, Result};
use crate::geometry::{classify, CutQuadrature, CutTopology, LevelSet};
use crate::mesh::{BackgroundMesh, Point};
use crate::spaces::{BasisEval, FESpace, MAX_LOCAL_DOFS};
use crate::sparse::{CsrMatrix, TripletBuilder};

pub use facets::{assemble_cip, assemble_ghost_penalties, facet_jump, facet_rule, CipParts, GhostParts};
pub use galerkin::assemble_galerkin;
pub use nitsche::assemble_nitsche;

pub type VectorFn = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;

pub fn vector_fn(f: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static) -> VectorFn {
    Arc::new(f)
}

pub fn zero_vector_fn() -> VectorFn {
    Arc::new(|_| [0.0, 0.0])
}

/// The advective field of the Oseen problem.
#[derive(Clone)]
pub enum Advection {
    /// Analytic field; its nodal interpolant is used in the stabilization.
    Analytic(VectorFn),
    /// Discrete field given by interleaved coefficients on the velocity space.
    Discrete(Vec<f64>),
}

/// Data of the Oseen problem `σu + β·∇u − ∇·(2με(u)) + ∇p = f`, `∇·u = 0`, `u = g` on Γ.
#[derive(Clone)]
pub struct OseenCoefficients {
    pub sigma: f64,
    pub mu: f64,
    pub beta: Advection,
    /// Lipschitz bound `|β|₁,∞`; sampled from the nodal interpolant when absent.
    pub beta_lipschitz: Option<f64>,
    pub force: VectorFn,
    pub dirichlet: VectorFn,
}

impl std::fmt::Debug for OseenCoefficients {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OseenCoefficients")
            .field("sigma", &self.sigma)
            .field("mu", &self.mu)
            .field("beta_lipschitz", &self.beta_lipschitz)
            .finish_non_exhaustive()
    }
}

impl OseenCoefficients {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(CutFemError::InvalidInput(format!("viscosity must be positive, got {}", self.mu)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(CutFemError::InvalidInput(format!(
                "reaction coefficient must be nonnegative, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Selects which interior-penalty families enter `S_h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CipToggles {
    pub beta: bool,
    pub u: bool,
    pub p: bool,
}

impl Default for CipToggles {
    fn default() -> Self {
        Self::all()
    }
}

impl CipToggles {
    pub fn all() -> Self {
        Self {
            beta: true,
            u: true,
            p: true,
        }
    }

    pub fn none() -> Self {
        Self {
            beta: false,
            u: false,
            p: false,
        }
    }
}

/// Selects which ghost-penalty families enter `G_h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GhostToggles {
    pub beta: bool,
    pub u: bool,
    pub p: bool,
    pub sigma: bool,
    pub mu: bool,
}

impl Default for GhostToggles {
    fn default() -> Self {
        Self::all()
    }
}

impl GhostToggles {
    pub fn all() -> Self {
        Self {
            beta: true,
            u: true,
            p: true,
            sigma: true,
            mu: true,
        }
    }

    pub fn none() -> Self {
        Self {
            beta: false,
            u: false,
            p: false,
            sigma: false,
            mu: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilizationConfig {
    /// Nitsche penalty.
    pub gamma: f64,
    pub gamma_beta: f64,
    pub gamma_u: f64,
    pub gamma_p: f64,
    pub gamma_mu: f64,
    pub gamma_sigma: f64,
    pub c_u: f64,
    pub c_sigma: f64,
    /// Replace `s_β, s_u, g_β, g_u` by the normal-derivative jump forms `s̄_β, ḡ_β`.
    pub use_simplified_gbeta: bool,
    pub cip: CipToggles,
    pub ghost: GhostToggles,
}

impl Default for StabilizationConfig {
    fn default() -> Self {
        let gamma_beta = 0.05;
        Self {
            gamma: 30.0,
            gamma_beta,
            gamma_u: 0.05 * gamma_beta,
            gamma_p: 0.05,
            gamma_mu: 0.05,
            gamma_sigma: 0.001,
            c_u: 1.0 / 6.0,
            c_sigma: 1.0 / 12.0,
            use_simplified_gbeta: false,
            cip: CipToggles::all(),
            ghost: GhostToggles::all(),
        }
    }
}

impl StabilizationConfig {
    /// Default parameters, with the simplified convection forms switched on for `k = 2`.
    pub fn for_order(order: usize) -> Self {
        Self {
            use_simplified_gbeta: order >= 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("gamma", self.gamma),
            ("gamma_beta", self.gamma_beta),
            ("gamma_u", self.gamma_u),
            ("gamma_p", self.gamma_p),
            ("gamma_mu", self.gamma_mu),
            ("gamma_sigma", self.gamma_sigma),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CutFemError::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("c_u", self.c_u), ("c_sigma", self.c_sigma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CutFemError::InvalidInput(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Element-wise constant stabilization scalings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabParams {
    pub phi_u: f64,
    pub phi_beta: f64,
    pub phi_p: f64,
}

impl StabParams {
    pub fn average(a: &StabParams, b: &StabParams) -> StabParams {
        StabParams {
            phi_u: 0.5 * (a.phi_u + b.phi_u),
            phi_beta: 0.5 * (a.phi_beta + b.phi_beta),
            phi_p: 0.5 * (a.phi_p + b.phi_p),
        }
    }
}

/// `φ_u = μ + c_u‖β‖h + c_σσh²` and `φ_β = φ_p = h²/φ_u`.
pub fn stabilization_parameters(mu: f64, sigma: f64, beta_inf: f64, h: f64, stab: &StabilizationConfig) -> StabParams {
    let phi_u = mu + stab.c_u * beta_inf * h + stab.c_sigma * sigma * h * h;
    let phi_beta = h * h / phi_u;
    StabParams {
        phi_u,
        phi_beta,
        phi_p: phi_beta,
    }
}

/// Mesh, cut topology, quadrature and finite element space of one run.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: BackgroundMesh,
    pub level_set: LevelSet,
    pub topo: CutTopology,
    pub quad: CutQuadrature,
    pub space: FESpace,
}

impl Discretization {
    /// Classifies `mesh` against `level_set` and builds a `P^order` space with
    /// cut quadrature exact to degree `2 * order + 2`.
    pub fn new(mesh: BackgroundMesh, level_set: LevelSet, order: usize, subdivision: usize) -> Result<Self> {
        if !(1..=2).contains(&order) {
            return Err(CutFemError::UnsupportedOrder(order));
        }
        let topo = classify(&mesh, &level_set, subdivision);
        let space = FESpace::build(&mesh, &topo, order)?;
        let quad = CutQuadrature::build(&mesh, &topo, 2 * order + 2);
        Ok(Self {
            mesh,
            level_set,
            topo,
            quad,
            space,
        })
    }

    pub fn order(&self) -> usize {
        self.space.order
    }

    pub fn h(&self) -> f64 {
        self.mesh.h
    }

    pub fn n_scalar(&self) -> usize {
        self.space.n_dofs
    }

    /// Size of the mixed system including the pressure multiplier.
    pub fn n_unknowns(&self) -> usize {
        3 * self.n_scalar() + 1
    }

    pub fn velocity_index(&self, dof: usize, component: usize) -> usize {
        2 * dof + component
    }

    pub fn pressure_index(&self, dof: usize) -> usize {
        2 * self.n_scalar() + dof
    }

    pub fn multiplier_index(&self) -> usize {
        3 * self.n_scalar()
    }
}

/// Nodal interpolant `β_h` with the element maxima `‖β_h‖_{∞,T}`.
#[derive(Clone)]
pub struct PreparedAdvection {
    pub coeffs: Vec<f64>,
    pub element_norm: Vec<f64>,
    analytic: Option<VectorFn>,
}

impl PreparedAdvection {
    pub fn new(disc: &Discretization, beta: &Advection) -> Result<Self> {
        let space = &disc.space;
        let (coeffs, analytic) = match beta {
            Advection::Analytic(f) => (space.interpolate_vector(|x| f(x)), Some(f.clone())),
            Advection::Discrete(c) => {
                if c.len() != 2 * space.n_dofs {
                    return Err(CutFemError::InvalidInput(format!(
                        "discrete advection has {} coefficients, expected {}",
                        c.len(),
                        2 * space.n_dofs
                    )));
                }
                (c.clone(), None)
            }
        };
        let element_norm = (0..disc.mesh.n_elements())
            .map(|e| {
                if !space.is_active(e) {
                    return 0.0;
                }
                space
                    .element_dofs(e)
                    .iter()
                    .map(|&d| coeffs[2 * d].hypot(coeffs[2 * d + 1]))
                    .fold(0.0, f64::max)
            })
            .collect();
        Ok(Self {
            coeffs,
            element_norm,
            analytic,
        })
    }

    /// `β(x)` from the analytic field when available, else from `β_h`.
    pub fn at(&self, space: &FESpace, basis: &BasisEval, element: usize, x: Point) -> [f64; 2] {
        match &self.analytic {
            Some(f) => f(x),
            None => self.discrete_at(space, basis, element),
        }
    }

    /// `β_h(x)` through the element basis.
    pub fn discrete_at(&self, space: &FESpace, basis: &BasisEval, element: usize) -> [f64; 2] {
        space.eval_vector(basis, element, &self.coeffs).0
    }

    pub fn max_norm(&self) -> f64 {
        self.element_norm.iter().copied().fold(0.0, f64::max)
    }
}

/// Per-element stabilization parameters for the given data.
pub fn element_parameters(
    disc: &Discretization,
    coeffs: &OseenCoefficients,
    beta: &PreparedAdvection,
    stab: &StabilizationConfig,
) -> Vec<StabParams> {
    beta.element_norm
        .iter()
        .map(|&b| stabilization_parameters(coeffs.mu, coeffs.sigma, b, disc.h(), stab))
        .collect()
}

/// Global mixed indices of one element's local unknowns.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ElementDofs {
    pub n: usize,
    pub global: [usize; 3 * MAX_LOCAL_DOFS],
}

impl ElementDofs {
    pub fn new(disc: &Discretization, element: usize) -> Self {
        let dofs = disc.space.element_dofs(element);
        let n = dofs.len();
        let mut global = [0; 3 * MAX_LOCAL_DOFS];
        for (i, &d) in dofs.iter().enumerate() {
            global[2 * i] = disc.velocity_index(d, 0);
            global[2 * i + 1] = disc.velocity_index(d, 1);
            global[2 * n + i] = disc.pressure_index(d);
        }
        Self { n, global }
    }

    pub fn size(&self) -> usize {
        3 * self.n
    }

    pub fn vel(&self, i: usize, c: usize) -> usize {
        2 * i + c
    }

    pub fn pres(&self, i: usize) -> usize {
        2 * self.n + i
    }
}

/// Dense local matrix and vector in the element's mixed numbering.
pub(crate) struct LocalSystem {
    pub m: usize,
    pub mat: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl LocalSystem {
    pub fn new(m: usize) -> Self {
        Self {
            m,
            mat: vec![0.0; m * m],
            rhs: vec![0.0; m],
        }
    }

    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        self.mat[r * self.m + c] += v;
    }

    pub fn emit(&self, dofs: &ElementDofs, triplets: &mut Vec<(usize, usize, f64)>, rhs: &mut Vec<(usize, f64)>) {
        for r in 0..self.m {
            for c in 0..self.m {
                let v = self.mat[r * self.m + c];
                if v != 0.0 {
                    triplets.push((dofs.global[r], dofs.global[c], v));
                }
            }
            if self.rhs[r] != 0.0 {
                rhs.push((dofs.global[r], self.rhs[r]));
            }
        }
    }
}

type LocalEntries = (Vec<(usize, usize, f64)>, Vec<(usize, f64)>);

/// Runs `local` over the active elements in parallel and accumulates in element order.
pub(crate) fn assemble_elements<F>(disc: &Discretization, local: F) -> (CsrMatrix, Vec<f64>)
where
    F: Fn(usize, &mut Vec<(usize, usize, f64)>, &mut Vec<(usize, f64)>) + Sync,
{
    let n = disc.n_unknowns();
    let chunks: Vec<LocalEntries> = disc
        .topo
        .active
        .par_iter()
        .map(|&e| {
            let mut t = Vec::new();
            let mut r = Vec::new();
            local(e, &mut t, &mut r);
            (t, r)
        })
        .collect();
    let mut builder = TripletBuilder::new(n, n);
    let mut rhs = vec![0.0; n];
    for (t, r) in chunks {
        builder.extend(t);
        for (i, v) in r {
            rhs[i] += v;
        }
    }
    (builder.build(), rhs)
}

/// Constraint row and column `∫_Ω p_h dx = 0` coupling pressure to the multiplier.
pub fn assemble_pressure_constraint(disc: &Discretization) -> CsrMatrix {
    let n = disc.n_unknowns();
    let lambda = disc.multiplier_index();
    let (m, _) = assemble_elements(disc, |e, t, _| {
        let dofs = disc.space.element_dofs(e);
        let mut local = [0.0; MAX_LOCAL_DOFS];
        for q in &disc.quad.volume[e] {
            let b = disc.space.eval(e, q.x);
            for i in 0..dofs.len() {
                local[i] += q.w * b.values[i];
            }
        }
        for (i, &d) in dofs.iter().enumerate() {
            if local[i] != 0.0 {
                t.push((disc.pressure_index(d), lambda, local[i]));
                t.push((lambda, disc.pressure_index(d), local[i]));
            }
        }
    });
    debug_assert_eq!(m.nrows, n);
    m
}

/// All sub-matrices of the discrete operator, kept separately for diagnostics.
#[derive(Debug, Clone)]
pub struct SystemParts {
    pub galerkin: CsrMatrix,
    pub nitsche: CsrMatrix,
    pub cip: CipParts,
    pub ghost: GhostParts,
    pub constraint: CsrMatrix,
}

impl SystemParts {
    /// `S_h + G_h`.
    pub fn stabilization(&self) -> CsrMatrix {
        let n = self.galerkin.nrows;
        CsrMatrix::sum(n, n, self.cip.matrices().into_iter().chain(self.ghost.matrices()))
    }

    /// `A_h + S_h + G_h` without the pressure constraint.
    pub fn operator(&self) -> CsrMatrix {
        let n = self.galerkin.nrows;
        CsrMatrix::sum(
            n,
            n,
            [&self.galerkin, &self.nitsche]
                .into_iter()
                .chain(self.cip.matrices())
                .chain(self.ghost.matrices()),
        )
    }
}

/// The assembled saddle-point system.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub n_scalar: usize,
    pub parts: SystemParts,
}

impl LinearSystem {
    pub fn size(&self) -> usize {
        self.rhs.len()
    }

    /// The same operator without the pressure-mean multiplier.
    pub fn without_constraint(&self) -> (CsrMatrix, Vec<f64>) {
        let n = 3 * self.n_scalar;
        (self.parts.operator().leading_block(n), self.rhs[..n].to_vec())
    }

    pub fn write_matrix_market(&self, path: impl AsRef<Path>) -> Result<()> {
        self.matrix.write_matrix_market(path)
    }
}

/// Assembles `A_h + S_h + G_h` and `L_h` together with the pressure constraint.
pub fn assemble_system(
    disc: &Discretization,
    coeffs: &OseenCoefficients,
    stab: &StabilizationConfig,
) -> Result<LinearSystem> {
    coeffs.validate()?;
    stab.validate()?;
    if disc.n_scalar() == 0 {
        return Err(CutFemError::EmptyDomain);
    }
    let beta = PreparedAdvection::new(disc, &coeffs.beta)?;
    let params = element_parameters(disc, coeffs, &beta, stab);
    let (galerkin, rhs_g) = assemble_galerkin(disc, coeffs, &beta);
    let (nitsche, rhs_n) = assemble_nitsche(disc, coeffs, &beta, &params, stab);
    let cip = assemble_cip(disc, &beta, &params, stab);
    let ghost = assemble_ghost_penalties(disc, coeffs, &beta, &params, stab);
    let constraint = assemble_pressure_constraint(disc);
    let parts = SystemParts {
        galerkin,
        nitsche,
        cip,
        ghost,
        constraint,
    };
    let n = disc.n_unknowns();
    let matrix = CsrMatrix::sum(
        n,
        n,
        [&parts.galerkin, &parts.nitsche, &parts.constraint]
            .into_iter()
            .chain(parts.cip.matrices())
            .chain(parts.ghost.matrices()),
    );
    let rhs = rhs_g.iter().zip(&rhs_n).map(|(a, b)| a + b).collect();
    Ok(LinearSystem {
        matrix,
        rhs,
        n_scalar: disc.n_scalar(),
        parts,
    })
}
