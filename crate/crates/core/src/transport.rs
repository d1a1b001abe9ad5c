//! Implicit upwind finite-volume step for the continuity equation.
//!
//! Densities are piecewise constant. Over one step of length `Δt` the scheme
//! solves, for every triangle `E`,
//!
//! ```text
//! |E| (ϱ_E − ϱ_E^prev) / Δt + Σ_{Γ ⊂ ∂E} σ_{E,Γ} |Γ| F(ϱ_−, ϱ_+; U_Γ) = |E| g_E
//! ```
//!
//! with `F` the upwind flux, `U_Γ` the mean normal velocity along the edge
//! normal and `σ_{E,Γ} = ±1` depending on whether the normal leaves `E`.

use crate::eos::PressureLaw;
use crate::error::{Error, Result};
use crate::fespace::{DofMap, FeFunction, SpaceKind};
use crate::linalg::{self, CsrMatrix, LinearSolveReport, SolveMethod};
use crate::mesh::Mesh;

/// `ϱ− max(U, 0) + ϱ+ min(U, 0)`.
pub fn upwind_flux(rho_minus: f64, rho_plus: f64, u: f64) -> f64 {
    rho_minus * u.max(0.0) + rho_plus * u.min(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum FluxSource {
    /// Edge mean of the normal component of a CR velocity.
    CrMean,
    /// RT0 degree of freedom divided by the edge length.
    Rt0,
    /// Supplied directly.
    Given,
}

/// Mean normal velocity per edge, measured along the edge normal.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFluxField {
    values: Vec<f64>,
    source: FluxSource,
}

impl EdgeFluxField {
    /// Fails when the length is wrong, a value is not finite, or a boundary
    /// edge carries a nonzero flux.
    pub fn new(mesh: &Mesh, values: Vec<f64>, source: FluxSource) -> Result<Self> {
        if values.len() != mesh.n_edges() {
            return Err(Error::invalid(format!(
                "flux field needs {} edge values, got {}",
                mesh.n_edges(),
                values.len()
            )));
        }
        for (e, (v, edge)) in values.iter().zip(&mesh.edges).enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid(format!("flux on edge {e} is not finite")));
            }
            if edge.is_boundary() && *v != 0.0 {
                return Err(Error::invalid(format!("boundary edge {e} carries nonzero normal flux {v}")));
            }
        }
        Ok(Self { values, source })
    }

    pub fn zero(mesh: &Mesh) -> Self {
        Self { values: vec![0.0; mesh.n_edges()], source: FluxSource::Given }
    }

    /// Normal fluxes of a CR or RT0 velocity satisfying `u·ν = 0` on the boundary.
    pub fn from_velocity(mesh: &Mesh, u: &FeFunction) -> Result<Self> {
        let c = u.coeffs();
        let (values, source) = match u.kind() {
            SpaceKind::Cr => ((0..mesh.n_edges()).map(|e| c[2 * e]).collect(), FluxSource::CrMean),
            SpaceKind::Rt0 => {
                (mesh.edges.iter().enumerate().map(|(e, edge)| c[e] / edge.length).collect(), FluxSource::Rt0)
            }
            k => return Err(Error::invalid(format!("no normal flux for a {k:?} function"))),
        };
        Self::new(mesh, values, source)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn source(&self) -> FluxSource {
        self.source
    }

    /// Discrete divergence per element: net outflow `Σ σ|Γ|U_Γ` over `|E|`.
    pub fn divergence(&self, mesh: &Mesh) -> Vec<f64> {
        (0..mesh.n_triangles())
            .map(|t| {
                (0..3)
                    .map(|i| {
                        let e = mesh.triangle_edges[t][i];
                        mesh.triangle_edge_signs[t][i] * mesh.edges[e].length * self.values[e]
                    })
                    .sum::<f64>()
                    / mesh.areas[t]
            })
            .collect()
    }
}

/// Backward-Euler upwind matrix together with the mass scaling `|E|/Δt`.
#[derive(Debug, Clone)]
pub struct TransportSystem {
    pub matrix: CsrMatrix,
    pub mass_scaling: Vec<f64>,
}

impl TransportSystem {
    /// `(|E|/Δt) ϱ_prev + |E| g`.
    pub fn rhs(&self, mesh: &Mesh, rho_prev: &[f64], source: Option<&[f64]>) -> Vec<f64> {
        (0..mesh.n_triangles())
            .map(|t| self.mass_scaling[t] * rho_prev[t] + source.map_or(0.0, |g| mesh.areas[t] * g[t]))
            .collect()
    }

    /// Per-element residual in density units: `(Aϱ − b) / (|E|/Δt)`.
    pub fn residual(&self, rho: &[f64], rhs: &[f64]) -> Vec<f64> {
        self.matrix.matvec(rho).iter().zip(rhs).zip(&self.mass_scaling).map(|((a, b), m)| (a - b) / m).collect()
    }
}

pub fn assemble_transport_system(mesh: &Mesh, fluxes: &EdgeFluxField, dt: f64) -> Result<TransportSystem> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step {dt} must be positive")));
    }
    if fluxes.values.len() != mesh.n_edges() {
        return Err(Error::invalid("flux field does not belong to this mesh"));
    }
    let mass_scaling: Vec<f64> = mesh.areas.iter().map(|a| a / dt).collect();
    let mut trip: Vec<(usize, usize, f64)> = mass_scaling.iter().enumerate().map(|(t, m)| (t, t, *m)).collect();
    for (edge, &u) in mesh.edges.iter().zip(&fluxes.values) {
        let Some(p) = edge.plus else { continue };
        let m = edge.minus;
        let (out, inn) = (edge.length * u.max(0.0), edge.length * u.min(0.0));
        trip.extend([(m, m, out), (m, p, inn), (p, m, -out), (p, p, -inn)]);
    }
    let matrix = CsrMatrix::from_triplets(mesh.n_triangles(), mesh.n_triangles(), &trip)?;
    Ok(TransportSystem { matrix, mass_scaling })
}

/// Outcome of one transport solve.
#[derive(Debug, Clone)]
pub struct TransportOutcome {
    pub rho: FeFunction,
    pub report: LinearSolveReport,
}

/// One implicit upwind step. Positivity of the result is checked whenever the
/// previous density is positive and the source nonnegative.
pub fn transport_step(
    mesh: &Mesh,
    rho_prev: &FeFunction,
    fluxes: &EdgeFluxField,
    dt: f64,
    source: Option<&FeFunction>,
) -> Result<FeFunction> {
    let sys = assemble_transport_system(mesh, fluxes, dt)?;
    Ok(solve_transport(mesh, &sys, rho_prev, source, linalg::DEFAULT_TOLERANCE)?.rho)
}

pub fn solve_transport(
    mesh: &Mesh,
    sys: &TransportSystem,
    rho_prev: &FeFunction,
    source: Option<&FeFunction>,
    tol: f64,
) -> Result<TransportOutcome> {
    rho_prev.dofs().expect(SpaceKind::P0, "transport")?;
    if let Some(g) = source {
        g.dofs().expect(SpaceKind::P0, "transport source")?;
    }
    let rhs = sys.rhs(mesh, rho_prev.coeffs(), source.map(|g| g.coeffs()));
    let (rho, report) = linalg::solve(&sys.matrix, &rhs, SolveMethod::Direct, tol)?;
    let positive_data = rho_prev.min() > 0.0 && source.is_none_or(|g| g.min() >= 0.0);
    if positive_data {
        if let Some((t, v)) = rho.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::InternalBug(format!(
                "transport step produced density {v} on element {t} from positive data"
            )));
        }
    }
    Ok(TransportOutcome { rho: FeFunction::new(DofMap::p0(mesh), rho)?, report })
}

pub fn total_mass(mesh: &Mesh, rho: &FeFunction) -> f64 {
    rho.coeffs().iter().zip(&mesh.areas).map(|(r, a)| r * a).sum()
}

/// Elastic energy `Σ |E| P(ϱ_E)`.
pub fn elastic_energy(mesh: &Mesh, rho: &FeFunction, law: &PressureLaw) -> f64 {
    rho.coeffs().iter().zip(&mesh.areas).map(|(r, a)| a * law.energy_density(*r)).sum()
}

/// Defect of the discrete renormalized energy inequality
///
/// ```text
/// E(ϱ) − E(ϱ_prev) + Δt Σ |E| p(ϱ_E) div_E U − Δt Σ |E| P'(ϱ_E) g_E ≤ 0.
/// ```
///
/// The implicit upwind step satisfies it for every convex `P`; a positive
/// return value larger than round-off signals a broken scheme.
pub fn renormalization_defect(
    mesh: &Mesh,
    rho: &FeFunction,
    rho_prev: &FeFunction,
    fluxes: &EdgeFluxField,
    dt: f64,
    law: &PressureLaw,
    source: Option<&FeFunction>,
) -> f64 {
    let div = fluxes.divergence(mesh);
    let r = rho.coeffs();
    let work: f64 = (0..mesh.n_triangles())
        .map(|t| {
            let g = source.map_or(0.0, |g| g.coeffs()[t] * law.energy_derivative(r[t]));
            mesh.areas[t] * (law.p(r[t]) * div[t] - g)
        })
        .sum();
    elastic_energy(mesh, rho, law) - elastic_energy(mesh, rho_prev, law) + dt * work
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::{curl_of_p1, Constraint};
    use crate::mesh::Rect;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize) -> Mesh {
        Mesh::build_structured(n, n, Rect::UNIT).unwrap()
    }

    fn random_fluxes(mesh: &Mesh, rng: &mut ChaCha8Rng) -> EdgeFluxField {
        let v = mesh.edges.iter().map(|e| if e.is_boundary() { 0.0 } else { rng.random_range(-2.0..2.0) }).collect();
        EdgeFluxField::new(mesh, v, FluxSource::Given).unwrap()
    }

    fn divergence_free_fluxes(mesh: &Mesh, rng: &mut ChaCha8Rng) -> EdgeFluxField {
        let p1 = DofMap::new(mesh, SpaceKind::P1, Constraint::ZeroTrace).unwrap();
        let free: Vec<f64> = (0..p1.n_free()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u = curl_of_p1(mesh, &FeFunction::from_free(p1, &free)).unwrap();
        EdgeFluxField::from_velocity(mesh, &u).unwrap()
    }

    fn p0(mesh: &Mesh, v: Vec<f64>) -> FeFunction {
        FeFunction::new(DofMap::p0(mesh), v).unwrap()
    }

    #[test]
    fn upwind_flux_values() {
        assert_eq!(upwind_flux(2.0, 1.0, 3.0), 6.0);
        assert_eq!(upwind_flux(2.0, 1.0, -3.0), -3.0);
        for u in [-4.0, 0.0, 0.5, 7.0] {
            assert_eq!(upwind_flux(5.0, 5.0, u), 5.0 * u);
        }
    }

    #[test]
    fn boundary_flux_is_rejected() {
        let m = unit(1);
        let mut v = vec![0.0; m.n_edges()];
        let b = m.edges.iter().position(|e| e.is_boundary()).unwrap();
        v[b] = 1.0;
        assert!(EdgeFluxField::new(&m, v, FluxSource::Given).is_err());
        assert!(EdgeFluxField::new(&m, vec![0.0; 2], FluxSource::Given).is_err());
        assert!(assemble_transport_system(&m, &EdgeFluxField::zero(&m), 0.0).is_err());
    }

    #[test]
    fn zero_flux_is_pure_mass() {
        let m = unit(2);
        let sys = assemble_transport_system(&m, &EdgeFluxField::zero(&m), 0.25).unwrap();
        for t in 0..m.n_triangles() {
            assert_eq!(sys.matrix.get(t, t), m.areas[t] / 0.25);
        }
        assert!(sys.matrix.triplets().all(|(i, j, v)| i == j || v == 0.0));
        let rho = p0(&m, (0..8).map(|t| 1.0 + t as f64).collect());
        let out = transport_step(&m, &rho, &EdgeFluxField::zero(&m), 0.25, None).unwrap();
        for (a, b) in out.coeffs().iter().zip(rho.coeffs()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn two_triangle_hand_solve() {
        let m = unit(1);
        let d = m.edges.iter().position(|e| !e.is_boundary()).unwrap();
        assert_eq!((m.edges[d].minus, m.edges[d].plus), (0, Some(1)));
        let mut v = vec![0.0; m.n_edges()];
        v[d] = 1.0;
        let fl = EdgeFluxField::new(&m, v, FluxSource::Given).unwrap();
        let sys = assemble_transport_system(&m, &fl, 0.1).unwrap();
        let s2 = 2f64.sqrt();
        let expect = [[5.0 + s2, 0.0], [-s2, 5.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((sys.matrix.get(i, j) - expect[i][j]).abs() < 1e-14);
            }
        }
        let prev = p0(&m, vec![2.0, 1.0]);
        let rho = transport_step(&m, &prev, &fl, 0.1, None).unwrap();
        // Hand solution of the lower-triangular system.
        let r0 = 10.0 / (5.0 + s2);
        let r1 = (5.0 + s2 * r0) / 5.0;
        assert!((rho.coeffs()[0] - r0).abs() < 1e-14 && (rho.coeffs()[1] - r1).abs() < 1e-14);
        assert!((total_mass(&m, &rho) - total_mass(&m, &prev)).abs() < 1e-14);
    }

    #[test]
    fn column_sums_equal_mass_scaling() {
        let m = unit(4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sys = assemble_transport_system(&m, &random_fluxes(&m, &mut rng), 0.05).unwrap();
        let mut sums = vec![0.0; m.n_triangles()];
        for (_, j, v) in sys.matrix.triplets() {
            sums[j] += v;
        }
        for (t, s) in sums.iter().enumerate() {
            assert!((s - m.areas[t] / 0.05).abs() < 1e-12);
        }
        for (i, j, v) in sys.matrix.triplets() {
            assert!(if i == j { v > 0.0 } else { v <= 0.0 });
        }
    }

    #[test]
    fn constant_state_under_divergence_free_flow() {
        let m = unit(4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fl = divergence_free_fluxes(&m, &mut rng);
        assert!(fl.divergence(&m).iter().all(|d| d.abs() < 1e-12));
        let one = p0(&m, vec![1.0; m.n_triangles()]);
        let rho = transport_step(&m, &one, &fl, 0.1, None).unwrap();
        assert!(rho.coeffs().iter().all(|r| (r - 1.0).abs() < 1e-13));
    }

    #[test]
    fn mass_positivity_and_renormalization_for_random_data() {
        let m = unit(4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let law = PressureLaw::new(1.0, 1.4).unwrap();
        for _ in 0..20 {
            let fl = random_fluxes(&m, &mut rng);
            let prev = p0(&m, (0..m.n_triangles()).map(|_| rng.random_range(0.01..3.0)).collect());
            let rho = transport_step(&m, &prev, &fl, 0.2, None).unwrap();
            let (m0, m1) = (total_mass(&m, &prev), total_mass(&m, &rho));
            assert!((m1 - m0).abs() <= 1e-13 * m0);
            assert!(rho.min() > 0.0);
            assert!(renormalization_defect(&m, &rho, &prev, &fl, 0.2, &law, None) <= 1e-12);
        }
    }

    #[test]
    fn max_principle_for_divergence_free_flow() {
        let m = unit(4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let fl = divergence_free_fluxes(&m, &mut rng);
            let prev = p0(&m, (0..m.n_triangles()).map(|_| rng.random_range(0.5..2.0)).collect());
            let rho = transport_step(&m, &prev, &fl, 0.3, None).unwrap();
            assert!(rho.min() >= prev.min() - 1e-12 && rho.max() <= prev.max() + 1e-12);
        }
    }

    #[test]
    fn source_adds_mass() {
        let m = unit(2);
        let prev = p0(&m, vec![1.0; 8]);
        let g = p0(&m, vec![2.0; 8]);
        let rho = transport_step(&m, &prev, &EdgeFluxField::zero(&m), 0.5, Some(&g)).unwrap();
        assert!(rho.coeffs().iter().all(|r| (r - 2.0).abs() < 1e-14));
    }

    #[test]
    fn residual_vanishes_at_solution() {
        let m = unit(3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fl = random_fluxes(&m, &mut rng);
        let prev = p0(&m, vec![1.5; m.n_triangles()]);
        let sys = assemble_transport_system(&m, &fl, 0.1).unwrap();
        let out = solve_transport(&m, &sys, &prev, None, 1e-12).unwrap();
        let r = sys.residual(out.rho.coeffs(), &sys.rhs(&m, prev.coeffs(), None));
        assert!(r.iter().all(|x| x.abs() < 1e-12));
    }
}
