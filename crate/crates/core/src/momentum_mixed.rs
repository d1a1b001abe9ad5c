//! Mixed vorticity–velocity momentum scheme (Navier-slip boundary only).
//!
//! Unknowns are the vorticity `w ∈ P1₀` and the velocity `u ∈ RT0` with
//! `u·ν = 0`. For all test functions `η`, `v`:
//!
//! ```text
//! (w, η) − (u, curl η)                                  = 0
//! μ (curl w, v) + (μ+λ) (div u, div v) [+ ϱ̄/Δt (u, v)]  = (p, div v) + (f, v) [+ ϱ̄/Δt (u_prev, v)]
//! ```
//!
//! The bracketed terms belong to the time-dependent Stokes approximation.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::{
    curl_matrix, p1_mass_matrix, rt0_div_matrix, rt0_mass_matrix, Constraint, DofMap, FeFunction, SpaceKind,
};
use crate::linalg::{self, CsrMatrix, LinearSolveReport, LuFactorization};
use crate::mesh::{Mesh, Point};
use crate::momentum_cr::check_viscosities;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MixedVariant {
    Stationary,
    StokesApproximation,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MixedParams {
    pub mu: f64,
    pub lambda: f64,
    pub variant: MixedVariant,
    /// Average initial density; only used by the Stokes approximation.
    pub rho_bar: f64,
    /// Time step; only used by the Stokes approximation.
    pub dt: f64,
}

impl MixedParams {
    pub fn stationary(mu: f64, lambda: f64) -> Self {
        Self { mu, lambda, variant: MixedVariant::Stationary, rho_bar: 1.0, dt: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        check_viscosities(self.mu, self.lambda)?;
        if self.variant == MixedVariant::StokesApproximation {
            if !(self.dt > 0.0) {
                return Err(Error::invalid(format!("time step {} must be positive", self.dt)));
            }
            if !(self.rho_bar > 0.0 && self.rho_bar.is_finite()) {
                return Err(Error::invalid(format!("average density {} must be positive", self.rho_bar)));
            }
        }
        Ok(())
    }

    /// Coefficient `ϱ̄/Δt` of the velocity mass term, zero when stationary.
    pub fn inertia(&self) -> f64 {
        match self.variant {
            MixedVariant::Stationary => 0.0,
            MixedVariant::StokesApproximation => self.rho_bar / self.dt,
        }
    }
}

/// Warning for exponents outside the range covered by the convergence theory
/// of the Stokes approximation in two dimensions (`γ > 1`).
pub fn gamma_warning(gamma: f64) -> Option<String> {
    (gamma <= 1.0).then(|| {
        format!("γ = {gamma} ≤ N/2 = 1: convergence of the Stokes approximation scheme is not covered by the theory")
    })
}

/// Block system on `(w, u)` free DOFs, with the blocks kept for bookkeeping.
#[derive(Debug, Clone)]
pub struct MixedSystem {
    pub params: MixedParams,
    pub p1: Arc<DofMap>,
    pub rt: Arc<DofMap>,
    pub matrix: CsrMatrix,
    /// P1 mass matrix.
    pub mass_w: CsrMatrix,
    /// RT0 mass matrix.
    pub mass_u: CsrMatrix,
    /// `R[i, j] = (curl η_j, ψ_i)`.
    pub coupling: CsrMatrix,
    /// `(div ψ_i, div ψ_j)`.
    pub div: CsrMatrix,
}

impl MixedSystem {
    pub fn n_w(&self) -> usize {
        self.p1.n_free()
    }

    pub fn n_u(&self) -> usize {
        self.rt.n_free()
    }

    /// Splits a block vector into `(w, u)` functions.
    pub fn split(&self, x: &[f64]) -> (FeFunction, FeFunction) {
        let (w, u) = x.split_at(self.n_w());
        (FeFunction::from_free(self.p1.clone(), w), FeFunction::from_free(self.rt.clone(), u))
    }

    /// `‖M_w w − Rᵀ u‖`: defect of the defining equation of the vorticity.
    pub fn curl_defect(&self, w: &FeFunction, u: &FeFunction) -> f64 {
        let a = self.mass_w.matvec(&w.free_values());
        let b = self.coupling.transpose().matvec(&u.free_values());
        linalg::norm2(&a.iter().zip(&b).map(|(a, b)| a - b).collect::<Vec<_>>())
    }
}

pub fn assemble_mixed_system(mesh: &Mesh, params: &MixedParams) -> Result<MixedSystem> {
    params.validate()?;
    let p1 = DofMap::new(mesh, SpaceKind::P1, Constraint::ZeroTrace)?;
    let rt = DofMap::new(mesh, SpaceKind::Rt0, Constraint::Navier)?;
    let mass_w = p1_mass_matrix(mesh, &p1);
    let mass_u = rt0_mass_matrix(mesh, &rt);
    let coupling = mass_u.mul(&curl_matrix(mesh, &p1, &rt));
    let div = rt0_div_matrix(mesh, &rt);
    let (nw, nu) = (p1.n_free(), rt.n_free());
    let mut trip: Vec<(usize, usize, f64)> = mass_w.triplets().collect();
    trip.extend(coupling.triplets().map(|(i, j, v)| (j, nw + i, -v)));
    trip.extend(coupling.triplets().map(|(i, j, v)| (nw + i, j, params.mu * v)));
    trip.extend(div.triplets().map(|(i, j, v)| (nw + i, nw + j, (params.mu + params.lambda) * v)));
    let inertia = params.inertia();
    if inertia != 0.0 {
        trip.extend(mass_u.triplets().map(|(i, j, v)| (nw + i, nw + j, inertia * v)));
    }
    let matrix = CsrMatrix::from_triplets(nw + nu, nw + nu, &trip)?;
    Ok(MixedSystem { params: *params, p1, rt, matrix, mass_w, mass_u, coupling, div })
}

/// `(p, div ψ_i)` for every free RT0 basis function.
pub fn assemble_rt_pressure_load(mesh: &Mesh, rt: &DofMap, p: &FeFunction) -> Result<Vec<f64>> {
    rt.expect(SpaceKind::Rt0, "pressure load")?;
    p.dofs().expect(SpaceKind::P0, "pressure load")?;
    let mut load = vec![0.0; rt.n_free()];
    for t in 0..mesh.n_triangles() {
        for i in 0..3 {
            if let Some(j) = rt.free_index(mesh.triangle_edges[t][i]) {
                // |E| · p_E · s_i/|E|
                load[j] += p.coeffs()[t] * mesh.triangle_edge_signs[t][i];
            }
        }
    }
    Ok(load)
}

/// `(f, ψ_i)` for a piecewise-constant force.
pub fn assemble_rt_force_load(mesh: &Mesh, rt: &DofMap, f: &[Point]) -> Result<Vec<f64>> {
    rt.expect(SpaceKind::Rt0, "force load")?;
    if f.len() != mesh.n_triangles() {
        return Err(Error::invalid(format!("force needs {} element values, got {}", mesh.n_triangles(), f.len())));
    }
    let mut load = vec![0.0; rt.n_free()];
    for t in 0..mesh.n_triangles() {
        let p = mesh.triangle_points(t);
        let c = mesh.centroid(t);
        for i in 0..3 {
            if let Some(j) = rt.free_index(mesh.triangle_edges[t][i]) {
                let s = mesh.triangle_edge_signs[t][i];
                load[j] += 0.5 * s * (f[t][0] * (c[0] - p[i][0]) + f[t][1] * (c[1] - p[i][1]));
            }
        }
    }
    Ok(load)
}

/// Result of one mixed momentum solve.
#[derive(Debug, Clone)]
pub struct MixedSolution {
    pub w: FeFunction,
    pub u: FeFunction,
    pub report: LinearSolveReport,
}

/// Factorized mixed system, reused across solves with varying loads.
#[derive(Debug, Clone)]
pub struct MixedMomentumSolver {
    pub system: MixedSystem,
    lu: Option<LuFactorization>,
    tol: f64,
}

impl MixedMomentumSolver {
    pub fn new(mesh: &Mesh, params: &MixedParams, tol: f64) -> Result<Self> {
        let system = assemble_mixed_system(mesh, params)?;
        let lu = if system.matrix.nrows() == 0 { None } else { Some(LuFactorization::factor(&system.matrix)?) };
        Ok(Self { system, lu, tol })
    }

    /// Block right-hand side `(0, (p, div v) + (f, v) + ϱ̄/Δt (u_prev, v))`.
    pub fn load(&self, mesh: &Mesh, p: &FeFunction, f: &[Point], u_prev: Option<&FeFunction>) -> Result<Vec<f64>> {
        let sys = &self.system;
        let mut b = vec![0.0; sys.n_w()];
        let mut bu = assemble_rt_pressure_load(mesh, &sys.rt, p)?;
        for (a, g) in bu.iter_mut().zip(assemble_rt_force_load(mesh, &sys.rt, f)?) {
            *a += g;
        }
        match (sys.params.variant, u_prev) {
            (MixedVariant::StokesApproximation, Some(up)) => {
                if up.dofs() != &sys.rt {
                    return Err(Error::invalid("previous velocity must be a Navier RT0 field on this mesh"));
                }
                let inertia = sys.params.inertia();
                for (a, m) in bu.iter_mut().zip(sys.mass_u.matvec(&up.free_values())) {
                    *a += inertia * m;
                }
            }
            (MixedVariant::StokesApproximation, None) => {
                return Err(Error::invalid("the Stokes approximation needs the previous velocity"));
            }
            (MixedVariant::Stationary, Some(_)) => {
                return Err(Error::invalid("the stationary scheme takes no previous velocity"));
            }
            (MixedVariant::Stationary, None) => {}
        }
        b.extend(bu);
        Ok(b)
    }

    pub fn solve(
        &self,
        mesh: &Mesh,
        p: &FeFunction,
        f: &[Point],
        u_prev: Option<&FeFunction>,
    ) -> Result<MixedSolution> {
        let b = self.load(mesh, p, f, u_prev)?;
        let (x, report) = match &self.lu {
            Some(lu) if linalg::norm2(&b) > 0.0 => linalg::solve_factored(&self.system.matrix, lu, &b, self.tol)?,
            _ => (
                vec![0.0; b.len()],
                LinearSolveReport { residual_norm: 0.0, relative_residual: 0.0, iterations: 0, success: true },
            ),
        };
        let (w, u) = self.system.split(&x);
        Ok(MixedSolution { w, u, report })
    }

    /// Relative residual of the block system at a candidate `(w, u)`.
    pub fn residual(
        &self,
        mesh: &Mesh,
        w: &FeFunction,
        u: &FeFunction,
        p: &FeFunction,
        f: &[Point],
        u_prev: Option<&FeFunction>,
    ) -> Result<f64> {
        let b = self.load(mesh, p, f, u_prev)?;
        let mut x = w.free_values();
        x.extend(u.free_values());
        let r: Vec<f64> = self.system.matrix.matvec(&x).iter().zip(&b).map(|(a, b)| a - b).collect();
        let bn = linalg::norm2(&b);
        Ok(if bn > 0.0 { linalg::norm2(&r) / bn } else { linalg::norm2(&r) })
    }
}

pub fn solve_mixed_momentum(
    mesh: &Mesh,
    params: &MixedParams,
    p: &FeFunction,
    f: &[Point],
    u_prev: Option<&FeFunction>,
) -> Result<(FeFunction, FeFunction)> {
    let s = MixedMomentumSolver::new(mesh, params, linalg::DEFAULT_TOLERANCE)?.solve(mesh, p, f, u_prev)?;
    Ok((s.w, s.u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::{curl_of_p1, elementwise_div, hodge_decompose};
    use crate::mesh::Rect;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize) -> Mesh {
        Mesh::build_structured(n, n, Rect::UNIT).unwrap()
    }

    fn constant(mesh: &Mesh, v: f64) -> FeFunction {
        FeFunction::new(DofMap::p0(mesh), vec![v; mesh.n_triangles()]).unwrap()
    }

    fn stokes(dt: f64) -> MixedParams {
        MixedParams { mu: 1.0, lambda: 0.3, variant: MixedVariant::StokesApproximation, rho_bar: 1.7, dt }
    }

    fn random_p0(mesh: &Mesh, rng: &mut ChaCha8Rng) -> FeFunction {
        FeFunction::new(DofMap::p0(mesh), (0..mesh.n_triangles()).map(|_| rng.random_range(0.0..2.0)).collect())
            .unwrap()
    }

    fn random_force(mesh: &Mesh, rng: &mut ChaCha8Rng) -> Vec<Point> {
        (0..mesh.n_triangles()).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect()
    }

    #[test]
    fn smallest_mesh_system() {
        let m = unit(1);
        let p = MixedParams::stationary(1.5, 0.25);
        let sys = assemble_mixed_system(&m, &p).unwrap();
        assert_eq!((sys.n_w(), sys.n_u(), sys.matrix.nrows()), (0, 1, 1));
        // div φ = ±1/|E| on both triangles: (div φ, div φ) = 2 · 0.5 · 4 = 4.
        assert!((sys.matrix.get(0, 0) - 4.0 * 1.75).abs() < 1e-14);
    }

    #[test]
    fn parameter_validation() {
        assert!(MixedParams::stationary(0.0, 0.0).validate().is_err());
        assert!(MixedParams::stationary(1.0, -2.0).validate().is_err());
        assert!(stokes(0.0).validate().is_err());
        let mut p = stokes(0.1);
        p.rho_bar = 0.0;
        assert!(p.validate().is_err());
        assert!(gamma_warning(1.0).is_some() && gamma_warning(0.5).is_some() && gamma_warning(1.4).is_none());
    }

    #[test]
    fn large_time_step_recovers_stationary_matrix() {
        let m = unit(4);
        let a = assemble_mixed_system(&m, &MixedParams::stationary(1.0, 0.3)).unwrap().matrix;
        let b = assemble_mixed_system(&m, &stokes(1e20)).unwrap().matrix;
        let (da, db) = (a.to_dense(), b.to_dense());
        for (ra, rb) in da.iter().zip(&db) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn coupling_matches_local_quadrature() {
        let m = unit(3);
        let sys = assemble_mixed_system(&m, &MixedParams::stationary(1.0, 0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = FeFunction::from_free(
            sys.p1.clone(),
            &(0..sys.n_w()).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>(),
        );
        let v = FeFunction::from_free(
            sys.rt.clone(),
            &(0..sys.n_u()).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>(),
        );
        let cs = curl_of_p1(&m, &s).unwrap();
        // Oracle: ∫ curl s · v by order-2 quadrature of pointwise values.
        let rule = crate::quadrature::TriangleRule::of_order(2);
        let mut direct = 0.0;
        for t in 0..m.n_triangles() {
            for (x, w) in rule.map(&m.triangle_points(t)) {
                let (a, b) = (cs.eval_vector(&m, t, x), v.eval_vector(&m, t, x));
                direct += m.areas[t] * w * (a[0] * b[0] + a[1] * b[1]);
            }
        }
        let via = sys.coupling.bilinear(&v.free_values(), &s.free_values());
        assert!((direct - via).abs() < 1e-13);
    }

    #[test]
    fn vorticity_equation_defines_discrete_curl() {
        let m = unit(4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sys = assemble_mixed_system(&m, &MixedParams::stationary(1.0, 0.0)).unwrap();
        let s: Vec<f64> = (0..sys.n_w()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u = curl_of_p1(&m, &FeFunction::from_free(sys.p1.clone(), &s)).unwrap();
        // First block row at (0, u) is −(curl s, curl η) ≠ 0.
        let mut x = vec![0.0; sys.n_w()];
        x.extend(u.free_values());
        let row = sys.matrix.matvec(&x);
        assert!(linalg::norm2(&row[..sys.n_w()]) > 1e-3);
        // w solves M_w w = Rᵀu; compare with the stiffness matrix oracle (curl η = rot ∇η).
        let rhs = sys.coupling.transpose().matvec(&u.free_values());
        let (w, _) = linalg::solve(&sys.mass_w, &rhs, linalg::SolveMethod::Direct, 1e-13).unwrap();
        let mut trip = Vec::new();
        for t in 0..m.n_triangles() {
            let g = m.barycentric_gradients(t);
            for i in 0..3 {
                for j in 0..3 {
                    let (a, b) = (m.triangles[t][i], m.triangles[t][j]);
                    if let (Some(a), Some(b)) = (sys.p1.free_index(a), sys.p1.free_index(b)) {
                        trip.push((a, b, m.areas[t] * (g[i][0] * g[j][0] + g[i][1] * g[j][1])));
                    }
                }
            }
        }
        let k = CsrMatrix::from_triplets(sys.n_w(), sys.n_w(), &trip).unwrap();
        let lhs = sys.mass_w.matvec(&w);
        for (a, b) in lhs.iter().zip(k.matvec(&s)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_load_gives_zero_solution() {
        let m = unit(4);
        let f0 = vec![[0.0, 0.0]; m.n_triangles()];
        let (w, u) =
            solve_mixed_momentum(&m, &MixedParams::stationary(1.0, 0.5), &constant(&m, 2.0), &f0, None).unwrap();
        assert!(w.coeffs().iter().chain(u.coeffs()).all(|c| c.abs() < 1e-12));
        for dt in [1e-3, 0.1, 10.0] {
            let rt = DofMap::new(&m, SpaceKind::Rt0, Constraint::Navier).unwrap();
            let (w, u) =
                solve_mixed_momentum(&m, &stokes(dt), &constant(&m, 2.0), &f0, Some(&FeFunction::zeros(rt))).unwrap();
            assert!(w.coeffs().iter().chain(u.coeffs()).all(|c| c.abs() < 1e-12));
        }
    }

    #[test]
    fn energy_identity_and_curl_consistency() {
        let m = unit(4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for params in [MixedParams::stationary(1.3, -0.4), stokes(0.05)] {
            let solver = MixedMomentumSolver::new(&m, &params, 1e-12).unwrap();
            let p = random_p0(&m, &mut rng);
            let f = random_force(&m, &mut rng);
            let rt = solver.system.rt.clone();
            let up = FeFunction::from_free(
                rt.clone(),
                &(0..rt.n_free()).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>(),
            );
            let up = (params.variant == MixedVariant::StokesApproximation).then_some(&up);
            let sol = solver.solve(&m, &p, &f, up).unwrap();
            let sys = &solver.system;
            assert!(sys.curl_defect(&sol.w, &sol.u) <= 1e-10 * sol.u.l2_norm(&m));
            let (w, u) = (sol.w.free_values(), sol.u.free_values());
            let mut lhs =
                params.mu * sys.mass_w.bilinear(&w, &w) + (params.mu + params.lambda) * sys.div.bilinear(&u, &u);
            let mut rhs = linalg::dot(&assemble_rt_pressure_load(&m, &rt, &p).unwrap(), &u)
                + linalg::dot(&assemble_rt_force_load(&m, &rt, &f).unwrap(), &u);
            if let Some(up) = up {
                lhs += params.inertia() * sys.mass_u.bilinear(&u, &u);
                rhs += params.inertia() * sys.mass_u.bilinear(&up.free_values(), &u);
            }
            assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs(), "{lhs} vs {rhs}");
            assert!(solver.residual(&m, &sol.w, &sol.u, &p, &f, up).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn divergence_is_carried_by_the_orthogonal_part() {
        let m = unit(4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (_, u) = solve_mixed_momentum(
            &m,
            &MixedParams::stationary(1.0, 0.0),
            &random_p0(&m, &mut rng),
            &random_force(&m, &mut rng),
            None,
        )
        .unwrap();
        let h = hodge_decompose(&m, &u).unwrap();
        let (a, b) = (elementwise_div(&m, &u).unwrap(), elementwise_div(&m, &h.perp).unwrap());
        for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(elementwise_div(&m, &h.curl_part).unwrap().coeffs().iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn force_load_matches_quadrature() {
        let m = unit(2);
        let rt = DofMap::new(&m, SpaceKind::Rt0, Constraint::None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_force(&m, &mut rng);
        let load = assemble_rt_force_load(&m, &rt, &f).unwrap();
        let rule = crate::quadrature::TriangleRule::of_order(1);
        for i in 0..rt.n_free() {
            let mut c = vec![0.0; rt.n_full()];
            c[i] = 1.0;
            let psi = FeFunction::new(rt.clone(), c).unwrap();
            let mut direct = 0.0;
            for t in 0..m.n_triangles() {
                for (x, w) in rule.map(&m.triangle_points(t)) {
                    let v = psi.eval_vector(&m, t, x);
                    direct += m.areas[t] * w * (f[t][0] * v[0] + f[t][1] * v[1]);
                }
            }
            assert!((direct - load[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn previous_velocity_is_checked() {
        let m = unit(2);
        let s = MixedMomentumSolver::new(&m, &stokes(0.1), 1e-10).unwrap();
        let f0 = vec![[0.0, 0.0]; m.n_triangles()];
        assert!(s.solve(&m, &constant(&m, 1.0), &f0, None).is_err());
        let st = MixedMomentumSolver::new(&m, &MixedParams::stationary(1.0, 0.0), 1e-10).unwrap();
        let rt = DofMap::new(&m, SpaceKind::Rt0, Constraint::Navier).unwrap();
        assert!(st.solve(&m, &constant(&m, 1.0), &f0, Some(&FeFunction::zeros(rt))).is_err());
    }
}
