use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::fields::{ScalarField, VectorField};
use crate::mesh::{Mesh, Rect};
use crate::momentum_cr::{check_viscosities, BoundaryMode, CrParams};
use crate::momentum_mixed::gamma_warning;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Crouzeix–Raviart velocity with jump penalty.
    Cr,
    /// Vorticity–velocity mixed method, stationary momentum balance.
    Mixed,
    /// Mixed method with the `ϱ̄ ∂_t u` term.
    StokesApprox,
}

impl Scheme {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cr" => Some(Scheme::Cr),
            "mixed" => Some(Scheme::Mixed),
            "stokes_approx" => Some(Scheme::StokesApprox),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Cr => "cr",
            Scheme::Mixed => "mixed",
            Scheme::StokesApprox => "stokes_approx",
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshSpec {
    Structured { nx: usize, ny: usize, rect: Rect },
    File(PathBuf),
}

impl MeshSpec {
    pub fn unit_square(n: usize) -> Self {
        MeshSpec::Structured { nx: n, ny: n, rect: Rect::UNIT }
    }

    pub fn build(&self) -> Result<Mesh> {
        match self {
            MeshSpec::Structured { nx, ny, rect } => Mesh::build_structured(*nx, *ny, *rect),
            MeshSpec::File(p) => Mesh::read(p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeStep {
    /// `Δt = c·h`, rounded down so that an integer number of steps reaches `T`.
    Courant(f64),
    /// Explicit step, rounded down in the same way.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PicardConfig {
    /// Stopping bound on `‖Δϱ‖_∞ + ‖Δu‖_{L²}`.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial relaxation; reduced automatically when iterates oscillate.
    pub theta: f64,
    /// Retry a nonconvergent step as two half steps.
    pub halve_dt: bool,
    pub max_halvings: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200, theta: 1.0, halve_dt: false, max_halvings: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Write fields every this many steps; 0 writes the final state only.
    pub vtk_every: usize,
    pub vtk: bool,
    pub csv: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: None, vtk_every: 0, vtk: true, csv: true }
    }
}

/// Tolerances of the invariants checked after every step.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct InvariantTolerances {
    /// Relative drift of the total mass.
    pub mass: f64,
    /// Slack per step in the energy inequality, in units of the Picard tolerance.
    pub energy_per_step: f64,
}

impl Default for InvariantTolerances {
    fn default() -> Self {
        Self { mass: 1e-13, energy_per_step: 10.0 }
    }
}

/// Complete description of one simulation.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Config {
    pub scheme: Scheme,
    pub bc: BoundaryMode,
    pub mesh: MeshSpec,
    pub t_final: f64,
    pub time_step: TimeStep,
    pub a: f64,
    pub gamma: f64,
    pub mu: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub rho0: ScalarField,
    pub force: VectorField,
    /// Optional mass source in the continuity equation.
    pub source: Option<ScalarField>,
    /// Initial velocity (Stokes approximation only), interpolated into RT0.
    pub u0: VectorField,
    /// Overrides the average initial density in the Stokes approximation.
    pub rho_bar: Option<f64>,
    pub picard: PicardConfig,
    pub linear_tol: f64,
    pub invariants: InvariantTolerances,
    pub output: OutputConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            scheme: Scheme::Cr,
            bc: BoundaryMode::Navier,
            mesh: MeshSpec::unit_square(8),
            t_final: 0.5,
            time_step: TimeStep::Courant(0.5),
            a: 1.0,
            gamma: 1.4,
            mu: 1.0,
            lambda: 0.0,
            epsilon: CrParams::DEFAULT_EPSILON,
            rho0: ScalarField::Constant(1.0),
            force: VectorField::zero(),
            source: None,
            u0: VectorField::zero(),
            rho_bar: None,
            picard: PicardConfig::default(),
            linear_tol: 1e-12,
            invariants: InvariantTolerances::default(),
            output: OutputConfig::default(),
        }
    }
}

/// Number of steps and step length for a mesh of size `h`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TimeGrid {
    /// Requested step (`c·h` or the explicit value).
    pub nominal: f64,
    pub dt: f64,
    pub steps: usize,
}

impl Config {
    /// Checks every invariant that does not need the mesh; returns warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::invalid(format!("a = {} must be positive", self.a)));
        }
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("γ = {} must be at least 1", self.gamma)));
        }
        check_viscosities(self.mu, self.lambda)?;
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid(format!("ε = {} must be positive", self.epsilon)));
        }
        if self.scheme != Scheme::Cr && self.bc != BoundaryMode::Navier {
            return Err(Error::invalid(format!(
                "scheme {} is restricted to the Navier-slip boundary condition",
                self.scheme.name()
            )));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::invalid(format!("final time {} must be positive", self.t_final)));
        }
        match self.time_step {
            TimeStep::Courant(c) | TimeStep::Fixed(c) if !(c > 0.0 && c.is_finite()) => {
                return Err(Error::invalid(format!("time step parameter {c} must be positive")));
            }
            _ => {}
        }
        let p = &self.picard;
        if !(p.tol > 0.0) || p.max_iter == 0 || !(p.theta > 0.0 && p.theta <= 1.0) {
            return Err(Error::invalid("picard needs tol > 0, max_iter ≥ 1 and θ in (0, 1]"));
        }
        if !(self.linear_tol > 0.0 && self.linear_tol < 1.0) {
            return Err(Error::invalid(format!("linear tolerance {} must lie in (0, 1)", self.linear_tol)));
        }
        if let Some(rb) = self.rho_bar {
            if !(rb > 0.0) {
                return Err(Error::invalid(format!("rho_bar = {rb} must be positive")));
            }
        }
        if self.scheme == Scheme::StokesApprox {
            warnings.extend(gamma_warning(self.gamma));
        } else if !self.u0.is_zero() {
            warnings.push("initial velocity is ignored by the stationary momentum schemes".into());
        }
        Ok(warnings)
    }

    pub fn time_grid(&self, h: f64) -> TimeGrid {
        let nominal = match self.time_step {
            TimeStep::Courant(c) => c * h,
            TimeStep::Fixed(dt) => dt,
        };
        let ratio = self.t_final / nominal;
        // Tolerate round-off when T is an exact multiple of the nominal step.
        let steps = ((ratio * (1.0 - 1e-12)).ceil() as usize).max(1);
        TimeGrid { nominal, dt: self.t_final / steps as f64, steps }
    }

    pub fn cr_params(&self) -> CrParams {
        CrParams { mu: self.mu, lambda: self.lambda, epsilon: self.epsilon, boundary: self.bc }
    }
}
