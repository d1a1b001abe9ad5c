//! Time marching with per-step Picard coupling of the momentum and
//! transport solves.
//!
//! Each step `t_{m−1} → t_m` iterates
//!
//! 1. momentum solve with pressure `p(ϱ^{(j)})`, giving `u^{(j+1)}`;
//! 2. transport solve with the fluxes of `u^{(j+1)}`, giving `ϱ̃`;
//! 3. `ϱ^{(j+1)} = θ ϱ̃ + (1 − θ) ϱ^{(j)}`;
//!
//! until `‖ϱ^{(j+1)} − ϱ^{(j)}‖_∞ + ‖u^{(j+1)} − u^{(j)}‖_{L²} ≤ tol`. The
//! relaxation `θ` is reduced whenever two successive density updates point in
//! opposite directions without contracting quickly. A final momentum solve with the converged density
//! makes the momentum equation hold to solver precision.

mod config;

use std::sync::Arc;
use std::time::Instant;

pub use crate::eos::{elastic_energy, pressure, PressureLaw};
pub use config::{Config, InvariantTolerances, MeshSpec, OutputConfig, PicardConfig, Scheme, TimeGrid, TimeStep};

use crate::diagnostics::{effective_viscous_flux, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::fespace::{elementwise_curl, elementwise_div, interpolate_scalar, interpolate_vector, DofMap, FeFunction};
use crate::linalg::{self, norm_inf};
use crate::mesh::{Mesh, Point};
use crate::momentum_cr::{assemble_force_load, CrMomentumSolver};
use crate::momentum_mixed::{assemble_rt_force_load, MixedMomentumSolver, MixedParams, MixedVariant};
use crate::transport::{assemble_transport_system, solve_transport, total_mass, EdgeFluxField};

/// Discrete solution at one time level.
#[derive(Debug, Clone)]
pub struct State {
    pub step: usize,
    pub time: f64,
    pub rho: FeFunction,
    /// CR or RT0 velocity.
    pub velocity: FeFunction,
    /// P1 vorticity of the mixed schemes.
    pub vorticity: Option<FeFunction>,
}

/// States at `t_m = mΔt`, `m = 0..M`, read as piecewise constant in time:
/// the value on `(t_{m−1}, t_m]` is state `m`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<State>,
}

impl Trajectory {
    pub fn at(&self, t: f64) -> &State {
        let m = if t <= 0.0 { 0 } else { (t / self.dt - 1e-12).ceil() as usize };
        &self.states[m.min(self.states.len() - 1)]
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory holds the initial state")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct StepReport {
    pub step: usize,
    /// Picard iterations, summed over half steps.
    pub picard_iterations: usize,
    pub increment: f64,
    /// Smallest relaxation used.
    pub theta: f64,
    /// Largest transport residual in density units.
    pub transport_residual: f64,
    /// Relative residual of the final momentum solve.
    pub momentum_residual: f64,
    /// 1 unless the step was retried with halved time steps.
    pub substeps: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct Timings {
    pub setup: f64,
    pub momentum: f64,
    pub transport: f64,
    pub picard: f64,
    pub total: f64,
}

/// Outcome of a check evaluated over the whole run.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    /// Worst measured value.
    pub value: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: Config,
    pub mesh: Arc<Mesh>,
    pub grid: TimeGrid,
    pub rho_bar: f64,
    pub trajectory: Trajectory,
    pub records: Vec<DiagnosticsRecord>,
    pub reports: Vec<StepReport>,
    pub warnings: Vec<String>,
    pub timings: Timings,
}

impl RunOutput {
    pub fn invariants(&self) -> Vec<InvariantCheck> {
        let tol = self.config.invariants;
        let m0 = self.records[0].mass;
        let drift = self.records.iter().map(|r| ((r.mass - m0) / m0).abs()).fold(0.0, f64::max);
        let rho_min = self.records.iter().map(|r| r.rho_min).fold(f64::INFINITY, f64::min);
        let energy = self.records.iter().map(|r| -r.energy_slack).fold(f64::NEG_INFINITY, f64::max);
        let residual = self.reports.iter().map(|r| r.transport_residual.max(r.momentum_residual)).fold(0.0, f64::max);
        let picard_tol = self.config.picard.tol;
        vec![
            InvariantCheck {
                name: "mass_conservation".into(),
                passed: drift <= tol.mass,
                value: drift,
                tolerance: tol.mass,
            },
            InvariantCheck { name: "positivity".into(), passed: rho_min > 0.0, value: rho_min, tolerance: 0.0 },
            InvariantCheck { name: "energy_inequality".into(), passed: energy <= 0.0, value: energy, tolerance: 0.0 },
            InvariantCheck {
                name: "discrete_residual".into(),
                passed: residual <= 10.0 * picard_tol,
                value: residual,
                tolerance: 10.0 * picard_tol,
            },
        ]
    }
}

/// A run that stopped early; `partial` holds everything computed so far.
#[derive(Debug, thiserror::Error)]
#[error("step {step} failed: {error}")]
pub struct RunFailure {
    pub step: usize,
    #[source]
    pub error: Error,
    pub partial: Option<Box<RunOutput>>,
}

const MIN_THETA: f64 = 1.0 / 64.0;

#[allow(clippy::large_enum_variant)] // one per run
enum Momentum {
    Cr(CrMomentumSolver),
    Mixed(MixedMomentumSolver),
}

struct MomentumSolution {
    u: FeFunction,
    w: Option<FeFunction>,
    residual: f64,
}

impl Momentum {
    fn velocity_dofs(&self) -> &Arc<DofMap> {
        match self {
            Momentum::Cr(s) => s.dofs(),
            Momentum::Mixed(s) => &s.system.rt,
        }
    }

    fn solve(&self, mesh: &Mesh, p: &FeFunction, f: &[Point], u_prev: &FeFunction) -> Result<MomentumSolution> {
        match self {
            Momentum::Cr(s) => {
                let (u, rep) = s.solve(mesh, p, f)?;
                Ok(MomentumSolution { u, w: None, residual: rep.relative_residual })
            }
            Momentum::Mixed(s) => {
                let prev = (s.system.params.variant == MixedVariant::StokesApproximation).then_some(u_prev);
                let sol = s.solve(mesh, p, f, prev)?;
                Ok(MomentumSolution { u: sol.u, w: Some(sol.w), residual: sol.report.relative_residual })
            }
        }
    }

    /// `[μ‖curl u‖², (μ+λ)‖div u‖², J(u,u)]`.
    fn dissipation(
        &self,
        mesh: &Mesh,
        mu: f64,
        lambda: f64,
        u: &FeFunction,
        w: Option<&FeFunction>,
    ) -> Result<[f64; 3]> {
        let div = elementwise_div(mesh, u)?.l2_norm(mesh).powi(2) * (mu + lambda);
        Ok(match self {
            Momentum::Cr(s) => {
                [mu * elementwise_curl(mesh, u)?.l2_norm(mesh).powi(2), div, s.operator.penalty_energy(u)]
            }
            Momentum::Mixed(_) => [mu * w.map_or(0.0, |w| w.l2_norm(mesh).powi(2)), div, 0.0],
        })
    }

    /// `(f_h, u)`.
    fn work(&self, mesh: &Mesh, f: &[Point], u: &FeFunction) -> Result<f64> {
        let dofs = self.velocity_dofs();
        let load = match self {
            Momentum::Cr(_) => assemble_force_load(mesh, dofs, f)?,
            Momentum::Mixed(_) => assemble_rt_force_load(mesh, dofs, f)?,
        };
        Ok(linalg::dot(&load, &u.free_values()))
    }
}

/// Result of advancing by one (possibly subdivided) step.
struct Advance {
    state: State,
    report: StepReport,
    /// Time integrals over the step of the dissipation components.
    dissipation: [f64; 3],
    work: f64,
}

/// A configured simulation that can be stepped or run to completion.
pub struct Simulation {
    config: Config,
    mesh: Arc<Mesh>,
    law: PressureLaw,
    grid: TimeGrid,
    rho_bar: f64,
    rho0: FeFunction,
    /// Momentum solvers keyed by the time step they were built for.
    momentum: Vec<(f64, Momentum)>,
    warnings: Vec<String>,
    timings: Timings,
}

impl Simulation {
    pub fn new(config: Config) -> Result<Self> {
        let start = Instant::now();
        let warnings = config.validate()?;
        for w in &warnings {
            log::warn!("{w}");
        }
        let mesh = Arc::new(config.mesh.build()?);
        let law = PressureLaw::new(config.a, config.gamma)?;
        let grid = config.time_grid(mesh.h_max);
        let rho0 = interpolate_scalar(&mesh, &DofMap::p0(&mesh), |x| config.rho0.eval(0.0, x))?;
        if let Some((t, v)) = rho0.coeffs().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::invalid(format!("initial density {v} on element {t} is not positive")));
        }
        let rho_bar = config.rho_bar.unwrap_or_else(|| total_mass(&mesh, &rho0) / mesh.total_area());
        let mut sim = Self {
            config,
            mesh,
            law,
            grid,
            rho_bar,
            rho0,
            momentum: Vec::new(),
            warnings,
            timings: Timings::default(),
        };
        sim.momentum_index(grid.dt)?;
        sim.timings.setup = start.elapsed().as_secs_f64();
        Ok(sim)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn time_grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn law(&self) -> PressureLaw {
        self.law
    }

    pub fn rho_bar(&self) -> f64 {
        self.rho_bar
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    fn momentum_index(&mut self, dt: f64) -> Result<usize> {
        // Only the Stokes approximation depends on the time step.
        let key = if self.config.scheme == Scheme::StokesApprox { dt } else { 0.0 };
        if let Some(i) = self.momentum.iter().position(|(k, _)| *k == key) {
            return Ok(i);
        }
        let tol = self.config.linear_tol;
        let m = match self.config.scheme {
            Scheme::Cr => Momentum::Cr(CrMomentumSolver::new(&self.mesh, &self.config.cr_params(), tol)?),
            scheme => {
                let variant =
                    if scheme == Scheme::Mixed { MixedVariant::Stationary } else { MixedVariant::StokesApproximation };
                let params =
                    MixedParams { mu: self.config.mu, lambda: self.config.lambda, variant, rho_bar: self.rho_bar, dt };
                Momentum::Mixed(MixedMomentumSolver::new(&self.mesh, &params, tol)?)
            }
        };
        self.momentum.push((key, m));
        Ok(self.momentum.len() - 1)
    }

    pub fn initial_state(&self) -> Result<State> {
        let dofs = self.momentum[0].1.velocity_dofs().clone();
        let velocity = if self.config.scheme == Scheme::StokesApprox {
            interpolate_vector(&self.mesh, &dofs, |x| self.config.u0.eval(0.0, x))?
        } else {
            FeFunction::zeros(dofs)
        };
        let vorticity = match &self.momentum[0].1 {
            Momentum::Mixed(s) => {
                // w⁰ from (w, η) = (u⁰, curl η).
                let rhs = s.system.coupling.transpose().matvec(&velocity.free_values());
                let w = if rhs.is_empty() {
                    Vec::new()
                } else {
                    linalg::solve(&s.system.mass_w, &rhs, linalg::SolveMethod::Direct, self.config.linear_tol)?.0
                };
                Some(FeFunction::from_free(s.system.p1.clone(), &w))
            }
            Momentum::Cr(_) => None,
        };
        Ok(State { step: 0, time: 0.0, rho: self.rho0.clone(), velocity, vorticity })
    }

    /// Force projected onto constants over `(t0, t1]` × element: midpoint in
    /// time, centroid in space.
    pub fn force_on(&self, t0: f64, t1: f64) -> Vec<Point> {
        let tm = 0.5 * (t0 + t1);
        if self.config.force.is_zero() {
            return vec![[0.0, 0.0]; self.mesh.n_triangles()];
        }
        (0..self.mesh.n_triangles()).map(|t| self.config.force.eval(tm, self.mesh.centroid(t))).collect()
    }

    pub fn source_on(&self, t0: f64, t1: f64) -> Option<FeFunction> {
        let g = self.config.source.as_ref()?;
        let tm = 0.5 * (t0 + t1);
        let v = (0..self.mesh.n_triangles()).map(|t| g.eval(tm, self.mesh.centroid(t))).collect();
        Some(FeFunction::new(DofMap::p0(&self.mesh), v).expect("P0 has no constraints"))
    }

    fn pressure_of(&self, rho: &FeFunction) -> FeFunction {
        let p = rho.coeffs().iter().map(|r| self.law.p(*r)).collect();
        FeFunction::new(rho.dofs().clone(), p).expect("same space")
    }

    /// One Picard-coupled step of length `dt` without retries.
    pub fn picard_step(&mut self, prev: &State, dt: f64) -> Result<(State, StepReport)> {
        let adv = self.try_step(prev, dt)?;
        Ok((adv.state, adv.report))
    }

    fn try_step(&mut self, prev: &State, dt: f64) -> Result<Advance> {
        let start = Instant::now();
        let mi = self.momentum_index(dt)?;
        let mesh = self.mesh.clone();
        let pc = self.config.picard;
        let (t0, t1) = (prev.time, prev.time + dt);
        let f = self.force_on(t0, t1);
        let g = self.source_on(t0, t1);
        let momentum = &self.momentum[mi].1;
        let mut timings = self.timings;

        let mut rho = prev.rho.clone();
        let mut u = prev.velocity.clone();
        let mut theta = pc.theta;
        let mut last_delta: Option<Vec<f64>> = None;
        let mut increment = f64::INFINITY;
        let mut iterations = 0;
        while iterations < pc.max_iter {
            iterations += 1;
            let t = Instant::now();
            let sol = momentum.solve(&mesh, &self.pressure_of(&rho), &f, &prev.velocity)?;
            timings.momentum += t.elapsed().as_secs_f64();
            let t = Instant::now();
            let fluxes = EdgeFluxField::from_velocity(&mesh, &sol.u)?;
            let sys = assemble_transport_system(&mesh, &fluxes, dt)?;
            let tilde = solve_transport(&mesh, &sys, &prev.rho, g.as_ref(), self.config.linear_tol)?.rho;
            timings.transport += t.elapsed().as_secs_f64();
            let delta: Vec<f64> = tilde.coeffs().iter().zip(rho.coeffs()).map(|(a, b)| theta * (a - b)).collect();
            let du = sol.u.sub(&u)?.l2_norm(&mesh);
            increment = norm_inf(&delta) + du;
            let next: Vec<f64> = rho.coeffs().iter().zip(&delta).map(|(r, d)| r + d).collect();
            rho = FeFunction::new(rho.dofs().clone(), next)?;
            u = sol.u;
            if increment <= pc.tol {
                break;
            }
            if let Some(last) = &last_delta {
                // An alternating sequence with ratio r under relaxation θ has
                // effective factor 1 − θ(1+k) = −r; θ/(1+r) cancels it.
                let r = norm_inf(&delta) / norm_inf(last);
                if linalg::dot(last, &delta) < 0.0 && r > 0.25 && theta > MIN_THETA {
                    theta = (theta / (1.0 + r)).max(MIN_THETA);
                    log::debug!("picard oscillates at iteration {iterations}; relaxation reduced to {theta}");
                }
            }
            last_delta = Some(delta);
        }
        if increment > pc.tol {
            self.timings = timings;
            return Err(Error::Nonconvergence {
                iterations,
                increment,
                last_density: rho.into_coeffs(),
                last_velocity: u.into_coeffs(),
            });
        }
        if let Some((t, v)) = rho.coeffs().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::InternalBug(format!("density {v} on element {t} after the Picard step")));
        }

        let t = Instant::now();
        let sol = momentum.solve(&mesh, &self.pressure_of(&rho), &f, &prev.velocity)?;
        timings.momentum += t.elapsed().as_secs_f64();
        let fluxes = EdgeFluxField::from_velocity(&mesh, &sol.u)?;
        let sys = assemble_transport_system(&mesh, &fluxes, dt)?;
        let rhs = sys.rhs(&mesh, prev.rho.coeffs(), g.as_ref().map(|g| g.coeffs()));
        let transport_residual = norm_inf(&sys.residual(rho.coeffs(), &rhs));

        let diss = momentum.dissipation(&mesh, self.config.mu, self.config.lambda, &sol.u, sol.w.as_ref())?;
        let work = momentum.work(&mesh, &f, &sol.u)?;
        timings.picard += start.elapsed().as_secs_f64();
        self.timings = timings;
        Ok(Advance {
            state: State { step: prev.step + 1, time: t1, rho, velocity: sol.u, vorticity: sol.w },
            report: StepReport {
                step: prev.step + 1,
                picard_iterations: iterations,
                increment,
                theta,
                transport_residual,
                momentum_residual: sol.residual,
                substeps: 1,
            },
            dissipation: diss.map(|d| d * dt),
            work: work * dt,
        })
    }

    fn advance(&mut self, prev: &State, dt: f64, depth: usize) -> Result<Advance> {
        match self.try_step(prev, dt) {
            Err(Error::Nonconvergence { .. })
                if self.config.picard.halve_dt && depth < self.config.picard.max_halvings =>
            {
                log::info!("step at t = {} did not converge; retrying with Δt = {}", prev.time, dt / 2.0);
                let a = self.advance(prev, 0.5 * dt, depth + 1)?;
                let b = self.advance(&a.state, 0.5 * dt, depth + 1)?;
                let mut state = b.state;
                state.step = prev.step + 1;
                Ok(Advance {
                    state,
                    report: StepReport {
                        step: prev.step + 1,
                        picard_iterations: a.report.picard_iterations + b.report.picard_iterations,
                        increment: a.report.increment.max(b.report.increment),
                        theta: a.report.theta.min(b.report.theta),
                        transport_residual: a.report.transport_residual.max(b.report.transport_residual),
                        momentum_residual: a.report.momentum_residual.max(b.report.momentum_residual),
                        substeps: a.report.substeps + b.report.substeps,
                    },
                    dissipation: std::array::from_fn(|k| a.dissipation[k] + b.dissipation[k]),
                    work: a.work + b.work,
                })
            }
            other => other,
        }
    }

    fn kinetic_energy(&self, u: &FeFunction) -> f64 {
        if self.config.scheme == Scheme::StokesApprox {
            0.5 * self.rho_bar * u.l2_norm(&self.mesh).powi(2)
        } else {
            0.0
        }
    }

    /// `e0` is the initial energy; `None` for the initial state itself.
    fn record(
        &self,
        state: &State,
        prev: Option<&DiagnosticsRecord>,
        adv: Option<&Advance>,
        e0: Option<f64>,
    ) -> Result<DiagnosticsRecord> {
        let mesh = &self.mesh;
        let elastic = crate::transport::elastic_energy(mesh, &state.rho, &self.law);
        let kinetic = self.kinetic_energy(&state.velocity);
        let flux =
            effective_viscous_flux(mesh, &state.rho, &state.velocity, &self.law, self.config.mu, self.config.lambda)?;
        let dt = self.grid.dt;
        let (rates, dissipation, work) = match (prev, adv) {
            (Some(p), Some(a)) => {
                (a.dissipation.map(|d| d / dt), p.dissipation + a.dissipation.iter().sum::<f64>(), p.work + a.work)
            }
            _ => ([0.0; 3], 0.0, 0.0),
        };
        let energy = elastic + kinetic;
        let e0 = e0.unwrap_or(energy);
        let allowance = self.config.invariants.energy_per_step * self.config.picard.tol * state.step as f64;
        Ok(DiagnosticsRecord {
            step: state.step,
            time: state.time,
            mass: total_mass(mesh, &state.rho),
            rho_min: state.rho.min(),
            rho_max: state.rho.max(),
            energy,
            elastic_energy: elastic,
            kinetic_energy: kinetic,
            dissipation_curl: rates[0],
            dissipation_div: rates[1],
            penalty: rates[2],
            dissipation,
            work,
            flux_l1: flux.coeffs().iter().zip(&mesh.areas).map(|(f, a)| f.abs() * a).sum(),
            flux_l2: flux.l2_norm(mesh),
            flux_rho: flux.coeffs().iter().zip(state.rho.coeffs()).zip(&mesh.areas).map(|((f, r), a)| f * r * a).sum(),
            picard_iters: adv.map_or(0, |a| a.report.picard_iterations),
            residual: adv.map_or(0.0, |a| a.report.transport_residual.max(a.report.momentum_residual)),
            energy_slack: e0 + work + allowance - energy - dissipation,
        })
    }

    /// Runs all `M` steps, checking mass, positivity and the energy
    /// inequality after each one.
    pub fn run(mut self) -> std::result::Result<RunOutput, Box<RunFailure>> {
        let start = Instant::now();
        let fail = |sim: &Simulation, step: usize, error: Error, traj: Vec<State>, records, reports| {
            Box::new(RunFailure { step, error, partial: Some(Box::new(sim.output(traj, records, reports, start))) })
        };
        let s0 = match self.initial_state() {
            Ok(s) => s,
            Err(e) => return Err(Box::new(RunFailure { step: 0, error: e, partial: None })),
        };
        let r0 = match self.record(&s0, None, None, None) {
            Ok(r) => r,
            Err(e) => return Err(Box::new(RunFailure { step: 0, error: e, partial: None })),
        };
        let mut states = vec![s0];
        let mut records = vec![r0];
        let mut reports = Vec::new();
        let tol = self.config.invariants;
        for m in 1..=self.grid.steps {
            let prev = states.last().expect("nonempty").clone();
            let adv = match self.advance(&prev, self.grid.dt, 0) {
                Ok(a) => a,
                Err(e) => return Err(fail(&self, m, e, states, records, reports)),
            };
            let rec = match self.record(&adv.state, records.last(), Some(&adv), Some(records[0].energy)) {
                Ok(r) => r,
                Err(e) => return Err(fail(&self, m, e, states, records, reports)),
            };
            let drift = ((rec.mass - records[0].mass) / records[0].mass).abs();
            let violation = if drift > tol.mass {
                Some(format!("relative mass drift {drift:.3e} exceeds {:.1e}", tol.mass))
            } else if rec.energy_slack < 0.0 {
                Some(format!("energy inequality violated by {:.3e}", -rec.energy_slack))
            } else {
                None
            };
            reports.push(adv.report);
            states.push(adv.state);
            records.push(rec);
            if let Some(msg) = violation {
                return Err(fail(&self, m, Error::InternalBug(msg), states, records, reports));
            }
        }
        Ok(self.output(states, records, reports, start))
    }

    fn output(
        &self,
        states: Vec<State>,
        records: Vec<DiagnosticsRecord>,
        reports: Vec<StepReport>,
        start: Instant,
    ) -> RunOutput {
        let mut timings = self.timings;
        timings.total = timings.setup + start.elapsed().as_secs_f64();
        RunOutput {
            config: self.config.clone(),
            mesh: self.mesh.clone(),
            grid: self.grid,
            rho_bar: self.rho_bar,
            trajectory: Trajectory { dt: self.grid.dt, states },
            records,
            reports,
            warnings: self.warnings.clone(),
            timings,
        }
    }
}

/// Builds and runs a simulation.
pub fn run(config: Config) -> std::result::Result<RunOutput, Box<RunFailure>> {
    match Simulation::new(config) {
        Ok(sim) => sim.run(),
        Err(error) => Err(Box::new(RunFailure { step: 0, error, partial: None })),
    }
}
