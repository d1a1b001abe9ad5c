//! Property checks on small meshes. Each measurement returns the worst value
//! seen; callers compare it against a tolerance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::vtk::VtkGrid;
use crate::diagnostics::{laplace_identity_defect, translation_estimate_check, BubbleField, TranslationNorm};
use crate::eos::PressureLaw;
use crate::error::Result;
use crate::fespace::{
    curl_of_p1, elementwise_div, hodge_decompose, interpolate_vector, space_dimensions, Constraint, DofMap, FeFunction,
    SpaceKind,
};
use crate::fields::{ScalarField, VectorField};
use crate::linalg::norm_inf;
use crate::mesh::{Mesh, Point, Rect};
use crate::momentum_cr::{BoundaryMode, CrParams};
use crate::momentum_mixed::{assemble_mixed_system, gamma_warning, MixedParams, MixedVariant};
use crate::par::{map_slice, Execution};
use crate::solver::{run, Config, MeshSpec, RunOutput, Scheme, TimeStep};
use crate::transport::{transport_step, EdgeFluxField};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl PropertyResult {
    /// Passes when `value ≤ tolerance`.
    pub fn at_most(name: &str, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed: value <= tolerance, value, tolerance, detail: detail.into() }
    }
}

pub fn unit_square(n: usize) -> Mesh {
    Mesh::build_structured(n, n, Rect::UNIT).expect("positive resolution")
}

fn random_free(dofs: &std::sync::Arc<DofMap>, rng: &mut ChaCha8Rng) -> FeFunction {
    let free: Vec<f64> = (0..dofs.n_free()).map(|_| rng.random_range(-1.0..1.0)).collect();
    FeFunction::from_free(dofs.clone(), &free)
}

/// Largest `‖div curl w‖_∞` over random zero-trace `w`, and whether the
/// dimension identities of the complex hold exactly.
pub fn de_rham(mesh: &Mesh, cases: usize, rng: &mut ChaCha8Rng) -> Result<(f64, bool)> {
    let p1 = DofMap::new(mesh, SpaceKind::P1, Constraint::ZeroTrace)?;
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let w = random_free(&p1, rng);
        let d = elementwise_div(mesh, &curl_of_p1(mesh, &w)?)?;
        worst = worst.max(norm_inf(d.coeffs()));
    }
    Ok((worst, space_dimensions(mesh)?.exact()))
}

/// Worst relative Pythagoras defect and worst `‖div v_⊥ − div v‖_∞` over
/// random Navier RT0 fields.
pub fn hodge(mesh: &Mesh, cases: usize, rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
    let rt = DofMap::new(mesh, SpaceKind::Rt0, Constraint::Navier)?;
    let (mut pyth, mut div) = (0.0f64, 0.0f64);
    for _ in 0..cases {
        let v = random_free(&rt, rng);
        let h = hodge_decompose(mesh, &v)?;
        let n2 = v.l2_norm(mesh).powi(2);
        let parts = h.curl_part.l2_norm(mesh).powi(2) + h.perp.l2_norm(mesh).powi(2);
        pyth = pyth.max((n2 - parts).abs() / n2);
        let (dv, dp) = (elementwise_div(mesh, &v)?, elementwise_div(mesh, &h.perp)?);
        div = div.max(norm_inf(dv.sub(&dp)?.coeffs()));
    }
    Ok((pyth, div))
}

/// Largest excursion of one implicit upwind step outside the initial
/// density bounds, for divergence-free fluxes given by curls of random P1.
pub fn max_principle(mesh: &Mesh, cases: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let p1 = DofMap::new(mesh, SpaceKind::P1, Constraint::ZeroTrace)?;
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let u = curl_of_p1(mesh, &random_free(&p1, rng))?;
        let fluxes = EdgeFluxField::from_velocity(mesh, &u)?;
        let rho: Vec<f64> = (0..mesh.n_triangles()).map(|_| rng.random_range(0.2..3.0)).collect();
        let rho = FeFunction::new(DofMap::p0(mesh), rho)?;
        let dt = rng.random_range(0.01..1.0);
        let next = transport_step(mesh, &rho, &fluxes, dt, None)?;
        worst = worst.max(rho.min() - next.min()).max(next.max() - rho.max());
    }
    Ok(worst)
}

/// Largest defect of the integration-by-parts identity for random pairs of
/// polynomial fields vanishing on the boundary, under an order-8 rule.
pub fn laplace_identity(cases: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mesh = unit_square(2);
    let mut bubble =
        || BubbleField { c: std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))) };
    (0..cases)
        .map(|_| {
            let (u, v) = (bubble(), bubble());
            laplace_identity_defect(&mesh, |x| u.jacobian(x), |x| v.jacobian(x), 8)
        })
        .fold(0.0, f64::max)
}

/// Smooth field tangential to the boundary of the unit square.
pub fn translation_test_field(x: Point) -> Point {
    use std::f64::consts::PI;
    [(PI * x[0]).sin() * (1.0 + x[1]), (PI * x[1]).sin() * (1.0 + x[0] * x[0])]
}

pub const TRANSLATION_SHIFTS: [Point; 4] = [[0.1, 0.0], [0.0, 0.15], [0.1, 0.1], [-0.2, 0.05]];

/// `max/min − 1` of the measured translation constants over the given
/// resolutions, for the CR estimate and the RT0 estimate on `V^{0,⊥}`.
pub fn translation_variation(levels: &[usize], epsilon: f64) -> Result<(f64, f64)> {
    let mut cr = Vec::new();
    let mut rt = Vec::new();
    for &n in levels {
        let m = unit_square(n);
        let d = DofMap::new(&m, SpaceKind::Cr, Constraint::Navier)?;
        let u = interpolate_vector(&m, &d, translation_test_field)?;
        cr.push(translation_estimate_check(&m, &u, &TRANSLATION_SHIFTS, TranslationNorm::Cr { epsilon })?.max_ratio);
        let d = DofMap::new(&m, SpaceKind::Rt0, Constraint::Navier)?;
        let u = interpolate_vector(&m, &d, translation_test_field)?;
        rt.push(translation_estimate_check(&m, &u, &TRANSLATION_SHIFTS, TranslationNorm::Rt0Perp)?.max_ratio);
    }
    let var = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(0.0, f64::max);
        if lo > 0.0 {
            hi / lo - 1.0
        } else {
            f64::INFINITY
        }
    };
    Ok((var(&cr), var(&rt)))
}

/// Largest entrywise difference between the Stokes-approximation matrix
/// at step `dt` and the stationary mixed matrix.
pub fn stokes_limit_defect(mesh: &Mesh, dt: f64) -> Result<f64> {
    let a = assemble_mixed_system(mesh, &MixedParams::stationary(1.0, 0.5))?.matrix;
    let sp = MixedParams {
        variant: MixedVariant::StokesApproximation,
        rho_bar: 1.3,
        dt,
        ..MixedParams::stationary(1.0, 0.5)
    };
    let b = assemble_mixed_system(mesh, &sp)?.matrix;
    Ok(norm_inf(a.add_scaled(-1.0, &b).values()))
}

/// Random smooth, time-dependent force of moderate amplitude.
pub fn random_smooth_force(rng: &mut ChaCha8Rng) -> VectorField {
    use std::f64::consts::PI;
    let amp = rng.random_range(0.5..2.0);
    let k: [f64; 4] = std::array::from_fn(|_| rng.random_range(1..=2) as f64 * PI);
    let ph: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..2.0 * PI));
    VectorField::func(move |t, x| {
        let s = amp * (1.0 + 0.5 * (2.0 * PI * t).sin());
        [
            s * (k[0] * x[0] + ph[0]).sin() * (k[1] * x[1] + ph[1]).cos(),
            s * (k[2] * x[0] + ph[2]).cos() * (k[3] * x[1] + ph[3]).sin(),
        ]
    })
}

/// `1 + 0.9 sin(πx) sin(πy)`.
pub fn bump_density() -> ScalarField {
    ScalarField::func(|_, x| 1.0 + 0.9 * (std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).sin())
}

/// Configuration for the conservation runs: `steps` steps of `Δt = h/2` on
/// an `n×n` unit square.
pub fn conservation_config(
    scheme: Scheme,
    gamma: f64,
    rho0: ScalarField,
    force: VectorField,
    n: usize,
    steps: usize,
) -> Config {
    let h = unit_square(n).h_max;
    let mut c = Config {
        scheme,
        bc: BoundaryMode::Navier,
        mesh: MeshSpec::unit_square(n),
        gamma,
        rho0,
        force,
        t_final: steps as f64 * 0.5 * h,
        time_step: TimeStep::Fixed(0.5 * h),
        ..Config::default()
    };
    c.picard.halve_dt = true;
    c
}

/// Worst values over a set of runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConservationSummary {
    pub runs: usize,
    pub failed_runs: usize,
    pub mass_drift: f64,
    pub rho_min: f64,
    /// Most negative energy slack (≥ 0 means the inequality held everywhere).
    pub energy_slack: f64,
    pub residual: f64,
}

impl ConservationSummary {
    fn new() -> Self {
        Self {
            runs: 0,
            failed_runs: 0,
            mass_drift: 0.0,
            rho_min: f64::INFINITY,
            energy_slack: f64::INFINITY,
            residual: 0.0,
        }
    }

    fn absorb(&mut self, out: &RunOutput) {
        let m0 = out.records[0].mass;
        for r in &out.records {
            self.mass_drift = self.mass_drift.max(((r.mass - m0) / m0).abs());
            self.rho_min = self.rho_min.min(r.rho_min);
            self.energy_slack = self.energy_slack.min(r.energy_slack);
        }
        for r in &out.reports {
            self.residual = self.residual.max(r.transport_residual.max(r.momentum_residual));
        }
    }
}

/// Runs every scheme for each `γ` and each initial density and collects the
/// worst invariant values. Failed runs are counted; their partial output is
/// still measured.
pub fn conservation_runs(gammas: &[f64], n: usize, steps: usize, rng: &mut ChaCha8Rng) -> ConservationSummary {
    let mut cfgs = Vec::new();
    for scheme in [Scheme::Cr, Scheme::Mixed, Scheme::StokesApprox] {
        for &gamma in gammas {
            for bump in [false, true] {
                let rho0 = if bump { bump_density() } else { ScalarField::Constant(1.0) };
                let mut cfg = conservation_config(scheme, gamma, rho0, random_smooth_force(rng), n, steps);
                cfg.invariants.mass = 1e-12;
                cfgs.push(cfg);
            }
        }
    }
    let mut s = ConservationSummary::new();
    for (cfg, result) in cfgs.iter().zip(map_slice(Execution::default(), &cfgs, |c| run(c.clone()))) {
        s.runs += 1;
        match result {
            Ok(out) => s.absorb(&out),
            Err(f) => {
                log::error!("{} γ={}: {f}", cfg.scheme.name(), cfg.gamma);
                s.failed_runs += 1;
                if let Some(p) = &f.partial {
                    s.absorb(p);
                }
            }
        }
    }
    s
}

/// Largest difference of a VTK round trip through text.
pub fn vtk_round_trip(out: &RunOutput) -> Result<f64> {
    let c = &out.config;
    let law = PressureLaw::new(c.a, c.gamma)?;
    let g = VtkGrid::from_state(&out.mesh, out.trajectory.last(), &law, c.mu, c.lambda)?;
    let back = VtkGrid::parse(&g.to_text())?;
    let mut worst = 0.0f64;
    for ((_, a), (_, b)) in g.cell_scalars.iter().zip(&back.cell_scalars) {
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((x - y).abs());
        }
    }
    if back.to_text() != g.to_text() || back.cells != g.cells {
        worst = f64::INFINITY;
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Base resolution of the unit-square meshes.
    pub n: usize,
    pub cases: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { n: 2, cases: 20, steps: 5, seed: 0 }
    }
}

/// The full property suite on small meshes.
pub fn verify_suite(opts: &VerifyOptions) -> Result<Vec<PropertyResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = opts.n.max(1);
    let mut out = Vec::new();

    let s = conservation_runs(&[1.0, 1.4, 2.0], n.max(2), opts.steps, &mut rng);
    let runs = format!("{} runs, {} failed", s.runs, s.failed_runs);
    let fail_penalty = if s.failed_runs > 0 { f64::INFINITY } else { 0.0 };
    out.push(PropertyResult::at_most("mass_conservation", s.mass_drift.max(fail_penalty), 1e-12, runs.clone()));
    out.push(PropertyResult {
        name: "positivity".into(),
        passed: s.rho_min > 0.0,
        value: s.rho_min,
        tolerance: 0.0,
        detail: runs.clone(),
    });
    out.push(PropertyResult {
        name: "energy_inequality".into(),
        passed: s.energy_slack >= 0.0,
        value: s.energy_slack,
        tolerance: 0.0,
        detail: "smallest slack".into(),
    });

    let (mut div_curl, mut exact) = (0.0f64, true);
    for k in 0..3 {
        let (d, e) = de_rham(&unit_square(n << k), opts.cases, &mut rng)?;
        div_curl = div_curl.max(d);
        exact &= e;
    }
    out.push(PropertyResult::at_most("div_curl_vanishes", div_curl, 1e-13, ""));
    out.push(PropertyResult {
        name: "dimension_identities".into(),
        passed: exact,
        value: if exact { 0.0 } else { 1.0 },
        tolerance: 0.0,
        detail: "dim curl W + dim V⊥ = dim V".into(),
    });

    let m = unit_square(n.max(2) * 2);
    let (pyth, div) = hodge(&m, opts.cases, &mut rng)?;
    out.push(PropertyResult::at_most("hodge_pythagoras", pyth, 1e-10, "relative"));
    out.push(PropertyResult::at_most("hodge_divergence", div, 1e-12, ""));
    out.push(PropertyResult::at_most("max_principle", max_principle(&m, opts.cases, &mut rng)?, 1e-12, ""));
    out.push(PropertyResult::at_most("laplace_identity", laplace_identity(opts.cases, &mut rng), 1e-9, "order-8 rule"));

    let base = n.max(4);
    let (cr, rt) = translation_variation(&[base, 2 * base, 4 * base], CrParams::DEFAULT_EPSILON)?;
    out.push(PropertyResult::at_most("translation_cr", cr, 0.5, "max/min − 1"));
    out.push(PropertyResult::at_most("translation_rt0", rt, 0.5, "max/min − 1"));

    out.push(PropertyResult::at_most("stokes_limit", stokes_limit_defect(&m, 1e16)?, 1e-14, "Δt = 1e16"));
    let warns = gamma_warning(1.0).is_some() && gamma_warning(1.4).is_none();
    out.push(PropertyResult {
        name: "gamma_warning".into(),
        passed: warns,
        value: if warns { 0.0 } else { 1.0 },
        tolerance: 0.0,
        detail: "γ ≤ 1 warns".into(),
    });

    let eq = run(conservation_config(Scheme::Mixed, 2.0, bump_density(), VectorField::zero(), n.max(2), 2))
        .map_err(|f| f.error)?;
    out.push(PropertyResult::at_most("vtk_round_trip", vtk_round_trip(&eq)?, 1e-15, ""));
    Ok(out)
}
