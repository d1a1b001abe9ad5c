//! Measurements on states and trajectories: conservation and energy
//! bookkeeping, the effective viscous flux, weak-form residuals against
//! smooth test fields, convergence rates and translation estimates.

use std::fmt;

use crate::eos::PressureLaw;
use crate::error::{Error, Result};
use crate::fespace::{elementwise_curl, elementwise_div, hodge_decompose, DofMap, FeFunction, SpaceKind};
use crate::mesh::{Mesh, Point, PointLocator};
use crate::momentum_cr::{assemble_cr_operator, BoundaryMode, CrParams};
use crate::quadrature::{gauss_legendre_unit, TriangleRule};
use crate::solver::{RunOutput, Scheme};

/// Per-step measurements. Rates are evaluated at the step's time level;
/// `dissipation` and `work` accumulate `Δt`-weighted values from the start.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub time: f64,
    pub mass: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// Elastic plus kinetic energy.
    pub energy: f64,
    pub elastic_energy: f64,
    pub kinetic_energy: f64,
    /// `μ‖curl u‖²`.
    pub dissipation_curl: f64,
    /// `(μ+λ)‖div u‖²`.
    pub dissipation_div: f64,
    /// Jump penalty energy (CR only).
    pub penalty: f64,
    pub dissipation: f64,
    pub work: f64,
    pub flux_l1: f64,
    pub flux_l2: f64,
    /// `∫ F ϱ dx` for the effective viscous flux `F`.
    pub flux_rho: f64,
    pub picard_iters: usize,
    pub residual: f64,
    /// `E⁰ + work + allowance − energy − dissipation`; negative means the
    /// energy inequality failed at this step.
    pub energy_slack: f64,
}

/// `F_E = (μ+λ) div u|_E − p(ϱ_E)`.
pub fn effective_viscous_flux(
    mesh: &Mesh,
    rho: &FeFunction,
    u: &FeFunction,
    law: &PressureLaw,
    mu: f64,
    lambda: f64,
) -> Result<FeFunction> {
    rho.dofs().expect(SpaceKind::P0, "effective viscous flux")?;
    let div = elementwise_div(mesh, u)?;
    let v = div.coeffs().iter().zip(rho.coeffs()).map(|(d, r)| (mu + lambda) * d - law.p(*r)).collect();
    FeFunction::new(DofMap::p0(mesh), v)
}

/// Smooth scalar test function with its gradient and time derivative.
pub struct ScalarTest<'a> {
    pub value: &'a (dyn Fn(f64, Point) -> f64 + Sync),
    pub grad: &'a (dyn Fn(f64, Point) -> Point + Sync),
}

/// Smooth vector test field with its scalar curl and divergence.
pub struct VectorTest<'a> {
    pub value: &'a (dyn Fn(f64, Point) -> Point + Sync),
    pub curl: &'a (dyn Fn(f64, Point) -> f64 + Sync),
    pub div: &'a (dyn Fn(f64, Point) -> f64 + Sync),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct WeakResidual {
    pub continuity: f64,
    pub momentum: f64,
}

/// Evaluates the weak forms
///
/// ```text
/// ∫∫ ϱ(φ_t + u·∇φ) + ∫ ϱ⁰ φ(0)
/// ∫∫ μ curl u curl v + [(μ+λ) div u − p(ϱ)] div v − f·v  [− ϱ̄ ∫∫ u·v_t − ϱ̄ ∫ u⁰·v(0)]
/// ```
///
/// on the piecewise-constant-in-time trajectory. Time derivatives integrate
/// exactly over each step; the other terms use Gauss quadrature in time and
/// order-`6` rules in space. The test functions should vanish at the final
/// time and satisfy the boundary conditions of the scheme. For the mixed
/// schemes `curl u` is the discrete vorticity.
pub fn weak_residual(run: &RunOutput, phi: &ScalarTest, v: &VectorTest) -> Result<WeakResidual> {
    let mesh = &*run.mesh;
    let cfg = &run.config;
    let law = PressureLaw::new(cfg.a, cfg.gamma)?;
    let rule = TriangleRule::of_order(6);
    let (tq, tw) = gauss_legendre_unit(3);
    let states = &run.trajectory.states;
    let stokes = cfg.scheme == Scheme::StokesApprox;
    let s0 = &states[0];
    let mut cont = 0.0;
    let mut mom = 0.0;
    for t in 0..mesh.n_triangles() {
        let pts = mesh.triangle_points(t);
        for (x, w) in rule.map(&pts) {
            let w = w * mesh.areas[t];
            cont += w * s0.rho.coeffs()[t] * (phi.value)(0.0, x);
            if stokes {
                let u0 = s0.velocity.eval_vector(mesh, t, x);
                let v0 = (v.value)(0.0, x);
                mom -= w * run.rho_bar * (u0[0] * v0[0] + u0[1] * v0[1]);
            }
        }
    }
    for m in 1..states.len() {
        let (s, prev) = (&states[m], &states[m - 1]);
        let (t0, t1) = (prev.time, s.time);
        let dt = t1 - t0;
        let div = elementwise_div(mesh, &s.velocity)?;
        let curl = match &s.vorticity {
            Some(_) => None,
            None => Some(elementwise_curl(mesh, &s.velocity)?),
        };
        for t in 0..mesh.n_triangles() {
            let pts = mesh.triangle_points(t);
            let rho = s.rho.coeffs()[t];
            let p = law.p(rho);
            for (l, w) in rule.points.iter().zip(&rule.weights) {
                let x = [
                    l[0] * pts[0][0] + l[1] * pts[1][0] + l[2] * pts[2][0],
                    l[0] * pts[0][1] + l[1] * pts[1][1] + l[2] * pts[2][1],
                ];
                let w = w * mesh.areas[t];
                let u = s.velocity.eval_vector(mesh, t, x);
                let cu = match (&s.vorticity, &curl) {
                    (Some(vort), _) => vort.eval_scalar(mesh, t, *l),
                    (None, Some(c)) => c.coeffs()[t],
                    (None, None) => unreachable!(),
                };
                cont += w * rho * ((phi.value)(t1, x) - (phi.value)(t0, x));
                if stokes {
                    let (a, b) = ((v.value)(t1, x), (v.value)(t0, x));
                    mom -= w * run.rho_bar * (u[0] * (a[0] - b[0]) + u[1] * (a[1] - b[1]));
                }
                for (q, qw) in tq.iter().zip(&tw) {
                    let tt = t0 + q * dt;
                    let g = (phi.grad)(tt, x);
                    cont += w * qw * dt * rho * (u[0] * g[0] + u[1] * g[1]);
                    let f = cfg.force.eval(tt, x);
                    let vv = (v.value)(tt, x);
                    mom += w
                        * qw
                        * dt
                        * (cfg.mu * cu * (v.curl)(tt, x)
                            + ((cfg.mu + cfg.lambda) * div.coeffs()[t] - p) * (v.div)(tt, x)
                            - f[0] * vv[0]
                            - f[1] * vv[1]);
                }
            }
        }
    }
    Ok(WeakResidual { continuity: cont.abs(), momentum: mom.abs() })
}

/// Observed convergence rates over a refinement ladder.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RateTable {
    pub h: Vec<f64>,
    pub errors: Vec<f64>,
    /// `rates[k]` compares levels `k` and `k+1`; `None` when undefined.
    pub rates: Vec<Option<f64>>,
}

impl RateTable {
    /// `levels` are `(h, error)` pairs ordered from coarse to fine.
    pub fn new(levels: &[(f64, f64)]) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::invalid("rates need at least two refinement levels"));
        }
        for w in levels.windows(2) {
            if !(w[1].0 < w[0].0 && w[1].0 > 0.0) {
                return Err(Error::invalid("mesh sizes must be positive and strictly decreasing"));
            }
        }
        if levels.iter().any(|(_, e)| !(*e >= 0.0)) {
            return Err(Error::invalid("errors must be nonnegative"));
        }
        let rates = levels
            .windows(2)
            .map(|w| {
                let r = (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln();
                r.is_finite().then_some(r)
            })
            .collect();
        Ok(Self { h: levels.iter().map(|l| l.0).collect(), errors: levels.iter().map(|l| l.1).collect(), rates })
    }

    pub fn monotone(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0])
    }

    pub fn min_rate(&self) -> Option<f64> {
        self.rates.iter().flatten().cloned().reduce(f64::min)
    }
}

impl fmt::Display for RateTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>12} {:>14} {:>8}", "h", "error", "rate")?;
        for k in 0..self.h.len() {
            let rate = match k.checked_sub(1).map(|i| self.rates[i]) {
                None => "-".to_string(),
                Some(None) => "n/a".to_string(),
                Some(Some(r)) => format!("{r:.3}"),
            };
            writeln!(f, "{:>12.5e} {:>14.6e} {:>8}", self.h[k], self.errors[k], rate)?;
        }
        Ok(())
    }
}

/// Runs of a ladder must differ only in the mesh.
pub fn check_ladder(runs: &[&RunOutput]) -> Result<()> {
    let key = |r: &RunOutput| {
        let mut c = r.config.clone();
        c.mesh = crate::solver::MeshSpec::unit_square(1);
        c.output = Default::default();
        serde_json::to_string(&c).unwrap_or_default()
    };
    if let Some(first) = runs.first() {
        let k = key(first);
        if runs.iter().any(|r| key(r) != k || (r.config.t_final - first.config.t_final).abs() > 0.0) {
            return Err(Error::invalid("refinement ladder mixes different configurations"));
        }
    }
    Ok(())
}

/// `‖ϱ_h − Π ϱ*‖_{L²}` with `Π` the element-mean interpolant.
pub fn p0_error(mesh: &Mesh, rho: &FeFunction, exact: impl Fn(Point) -> f64) -> Result<f64> {
    let star = crate::fespace::interpolate_scalar(mesh, &DofMap::p0(mesh), exact)?;
    Ok(rho.sub(&star)?.l2_norm(mesh))
}

/// `‖a − b‖_{L²}` for functions on a mesh and on a coarser mesh it refines;
/// `b` is evaluated at the quadrature points of the fine mesh.
pub fn cross_mesh_difference(fine: &Mesh, a: &FeFunction, coarse: &Mesh, b: &FeFunction) -> Result<f64> {
    let scalar = |k: SpaceKind| matches!(k, SpaceKind::P0 | SpaceKind::P1);
    if scalar(a.kind()) != scalar(b.kind()) {
        return Err(Error::invalid(format!("cannot compare {:?} with {:?}", a.kind(), b.kind())));
    }
    let locator = PointLocator::new(coarse);
    let rule = TriangleRule::of_order(4);
    let mut s = 0.0;
    for t in 0..fine.n_triangles() {
        let pts = fine.triangle_points(t);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let x = [
                l[0] * pts[0][0] + l[1] * pts[1][0] + l[2] * pts[2][0],
                l[0] * pts[0][1] + l[1] * pts[1][1] + l[2] * pts[2][1],
            ];
            let (tc, lc) = locator
                .locate(x)
                .ok_or_else(|| Error::invalid(format!("point {x:?} of the fine mesh lies outside the coarse mesh")))?;
            let d2 = if scalar(a.kind()) {
                (a.eval_scalar(fine, t, *l) - b.eval_scalar(coarse, tc, lc)).powi(2)
            } else {
                let (u, v) = (a.eval_vector(fine, t, x), b.eval_vector(coarse, tc, x));
                (u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2)
            };
            s += w * fine.areas[t] * d2;
        }
    }
    Ok(s.sqrt())
}

/// Which translation estimate to measure.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum TranslationNorm {
    /// `‖v − v(·−ξ)‖ / (|ξ|^{1/2−ε/4} |v|_V)` for CR fields.
    Cr { epsilon: f64 },
    /// `‖v − v(·−ξ)‖ / ((|ξ| + |ξ|²)^{1/2} ‖div v‖)` for the RT0 part orthogonal to curls.
    Rt0Perp,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TranslationReport {
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
}

/// `‖u(·) − u(·−ξ)‖_{L²}` over points whose translate stays in the domain.
pub fn translation_difference(mesh: &Mesh, locator: &PointLocator, u: &FeFunction, xi: Point) -> f64 {
    let rule = TriangleRule::of_order(4);
    let mut s = 0.0;
    for t in 0..mesh.n_triangles() {
        for (x, w) in rule.map(&mesh.triangle_points(t)) {
            let y = [x[0] - xi[0], x[1] - xi[1]];
            let Some((ty, _)) = locator.locate(y) else { continue };
            let (a, b) = (u.eval_vector(mesh, t, x), u.eval_vector(mesh, ty, y));
            s += w * mesh.areas[t] * ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2));
        }
    }
    s.sqrt()
}

/// Measures the constants of the translation estimates for each shift. For
/// `Rt0Perp` the field is first projected onto the orthogonal complement of
/// the discrete curls.
pub fn translation_estimate_check(
    mesh: &Mesh,
    u: &FeFunction,
    shifts: &[Point],
    norm: TranslationNorm,
) -> Result<TranslationReport> {
    let bb = mesh.bounding_box();
    if let Some(xi) = shifts.iter().find(|xi| xi[0].abs() >= bb.width() || xi[1].abs() >= bb.height()) {
        return Err(Error::invalid(format!("shift {xi:?} is not smaller than the domain")));
    }
    let (field, scale) = match norm {
        TranslationNorm::Cr { epsilon } => {
            u.dofs().expect(SpaceKind::Cr, "CR translation estimate")?;
            let boundary = if u.dofs().constraint() == crate::fespace::Constraint::Dirichlet {
                BoundaryMode::Dirichlet
            } else {
                BoundaryMode::Navier
            };
            let params = CrParams { mu: 1.0, lambda: 0.0, epsilon, boundary };
            let op = assemble_cr_operator(mesh, u.dofs(), &params)?;
            let x = u.free_values();
            (u.clone(), op.matrix.bilinear(&x, &x).max(0.0).sqrt())
        }
        TranslationNorm::Rt0Perp => {
            let perp = hodge_decompose(mesh, u)?.perp;
            let d = elementwise_div(mesh, &perp)?.l2_norm(mesh);
            (perp, d)
        }
    };
    let locator = PointLocator::new(mesh);
    let ratios: Vec<f64> = shifts
        .iter()
        .map(|xi| {
            let r = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
            let diff = translation_difference(mesh, &locator, &field, *xi);
            if diff == 0.0 {
                return 0.0;
            }
            let bound = match norm {
                TranslationNorm::Cr { epsilon } => r.powf(0.5 - epsilon / 4.0),
                TranslationNorm::Rt0Perp => (r + r * r).sqrt(),
            } * scale;
            diff / bound
        })
        .collect();
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(TranslationReport { ratios, max_ratio })
}

/// Polynomial bubble field `b(x,y)·(q₁, q₂)` with `b = x(1−x)y(1−y)` and
/// linear `q`; vanishes on the boundary of the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BubbleField {
    /// `q_k = c[k][0] + c[k][1] x + c[k][2] y`.
    pub c: [[f64; 3]; 2],
}

impl BubbleField {
    pub fn value(&self, x: Point) -> Point {
        let b = x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]);
        std::array::from_fn(|k| b * (self.c[k][0] + self.c[k][1] * x[0] + self.c[k][2] * x[1]))
    }

    /// Jacobian `J[k][d] = ∂_d u_k`.
    pub fn jacobian(&self, x: Point) -> [[f64; 2]; 2] {
        let (bx, by) = (x[0] * (1.0 - x[0]), x[1] * (1.0 - x[1]));
        let b = bx * by;
        let db = [(1.0 - 2.0 * x[0]) * by, bx * (1.0 - 2.0 * x[1])];
        std::array::from_fn(|k| {
            let q = self.c[k][0] + self.c[k][1] * x[0] + self.c[k][2] * x[1];
            [db[0] * q + b * self.c[k][1], db[1] * q + b * self.c[k][2]]
        })
    }
}

/// `|∫ Du:Dv − ∫ (curl u curl v + div u div v)|` by a triangle rule of the
/// given order on `mesh`, for fields given by their Jacobians.
pub fn laplace_identity_defect(
    mesh: &Mesh,
    du: impl Fn(Point) -> [[f64; 2]; 2],
    dv: impl Fn(Point) -> [[f64; 2]; 2],
    order: usize,
) -> f64 {
    let rule = TriangleRule::of_order(order);
    let mut full = 0.0;
    let mut split = 0.0;
    for t in 0..mesh.n_triangles() {
        for (x, w) in rule.map(&mesh.triangle_points(t)) {
            let (a, b) = (du(x), dv(x));
            let w = w * mesh.areas[t];
            full += w * (a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]);
            let (ca, cb) = (a[1][0] - a[0][1], b[1][0] - b[0][1]);
            let (da, db) = (a[0][0] + a[1][1], b[0][0] + b[1][1]);
            split += w * (ca * cb + da * db);
        }
    }
    (full - split).abs()
}
