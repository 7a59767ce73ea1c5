//! Manufactured solutions with analytically derived forcing.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::forms::{vector_fn, Advection, OseenCoefficients, VectorFn};
use crate::geometry::{LevelSet, ScalarFn};
use crate::mesh::Point;

pub type TensorFn = Arc<dyn Fn(Point) -> [[f64; 2]; 2] + Send + Sync>;

/// Exact solution, its derivatives, the problem data and the fluid domain.
#[derive(Clone)]
pub struct ManufacturedCase {
    pub name: String,
    pub sigma: f64,
    pub mu: f64,
    pub velocity: VectorFn,
    /// `grad[c][d] = ∂_d u_c`.
    pub velocity_gradient: TensorFn,
    pub velocity_laplacian: VectorFn,
    pub pressure: ScalarFn,
    pub pressure_gradient: VectorFn,
    pub beta: VectorFn,
    /// `|β|₁,∞`.
    pub beta_lipschitz: f64,
    pub level_set: LevelSet,
}

impl std::fmt::Debug for ManufacturedCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManufacturedCase")
            .field("name", &self.name)
            .field("sigma", &self.sigma)
            .field("mu", &self.mu)
            .finish_non_exhaustive()
    }
}

impl ManufacturedCase {
    /// `f = σu + (∇u)β − μΔu + ∇p`.
    pub fn force(&self) -> VectorFn {
        let (sigma, mu) = (self.sigma, self.mu);
        let (u, grad, lap, gp, beta) = (
            self.velocity.clone(),
            self.velocity_gradient.clone(),
            self.velocity_laplacian.clone(),
            self.pressure_gradient.clone(),
            self.beta.clone(),
        );
        vector_fn(move |x| {
            let (u, g, l, gp, b) = (u(x), grad(x), lap(x), gp(x), beta(x));
            let mut f = [0.0; 2];
            for c in 0..2 {
                f[c] = sigma * u[c] + g[c][0] * b[0] + g[c][1] * b[1] - mu * l[c] + gp[c];
            }
            f
        })
    }

    /// Oseen data with `β` analytic and `g` the trace of the exact velocity.
    pub fn coefficients(&self) -> OseenCoefficients {
        OseenCoefficients {
            sigma: self.sigma,
            mu: self.mu,
            beta: Advection::Analytic(self.beta.clone()),
            beta_lipschitz: Some(self.beta_lipschitz),
            force: self.force(),
            dirichlet: self.velocity.clone(),
        }
    }

    pub fn with_level_set(mut self, level_set: LevelSet) -> Self {
        self.level_set = level_set;
        self
    }
}

/// The circle of the Taylor test, centre `(0.5, 0.5)` and radius `0.45`.
pub fn taylor_domain() -> LevelSet {
    LevelSet::circle([0.5, 0.5], 0.45)
}

/// Taylor vortex `u = (−cos 2πx sin 2πy, sin 2πx cos 2πy)`,
/// `p = −(cos 4πx + cos 4πy)/4`, advected by itself.
pub fn taylor_case(mu: f64, sigma: f64) -> ManufacturedCase {
    let k = 2.0 * PI;
    let velocity = vector_fn(move |x| {
        [-(k * x[0]).cos() * (k * x[1]).sin(), (k * x[0]).sin() * (k * x[1]).cos()]
    });
    let velocity_gradient: TensorFn = Arc::new(move |x| {
        let (sx, cx, sy, cy) = ((k * x[0]).sin(), (k * x[0]).cos(), (k * x[1]).sin(), (k * x[1]).cos());
        [[k * sx * sy, -k * cx * cy], [k * cx * cy, -k * sx * sy]]
    });
    let u = velocity.clone();
    let velocity_laplacian = vector_fn(move |x| {
        let v = u(x);
        [-2.0 * k * k * v[0], -2.0 * k * k * v[1]]
    });
    let pressure: ScalarFn = Arc::new(|x| -0.25 * ((4.0 * PI * x[0]).cos() + (4.0 * PI * x[1]).cos()));
    let pressure_gradient = vector_fn(|x| [PI * (4.0 * PI * x[0]).sin(), PI * (4.0 * PI * x[1]).sin()]);
    ManufacturedCase {
        name: "taylor".into(),
        sigma,
        mu,
        beta: velocity.clone(),
        velocity,
        velocity_gradient,
        velocity_laplacian,
        pressure,
        pressure_gradient,
        beta_lipschitz: k,
        level_set: taylor_domain(),
    }
}

/// Linear solenoidal velocity `u = (0.3 + y, −0.2 + x)`, `p = 0`, constant `β`.
pub fn patch_case(mu: f64, sigma: f64, beta: [f64; 2], level_set: LevelSet) -> ManufacturedCase {
    ManufacturedCase {
        name: "patch".into(),
        sigma,
        mu,
        velocity: vector_fn(|x| [0.3 + x[1], -0.2 + x[0]]),
        velocity_gradient: Arc::new(|_| [[0.0, 1.0], [1.0, 0.0]]),
        velocity_laplacian: vector_fn(|_| [0.0, 0.0]),
        pressure: Arc::new(|_| 0.0),
        pressure_gradient: vector_fn(|_| [0.0, 0.0]),
        beta: vector_fn(move |_| beta),
        beta_lipschitz: 0.0,
        level_set,
    }
}
