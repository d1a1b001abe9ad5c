//! Crouzeix–Raviart momentum scheme with curl/div splitting and an `h^ε`
//! jump penalty.
//!
//! For a given pressure `p` and piecewise-constant force `f` the velocity
//! `u ∈ V_h` solves, for all `v ∈ V_h`,
//!
//! ```text
//! μ (curl_h u, curl_h v) + (μ+λ) (div_h u, div_h v) + J(u, v) = (p, div_h v) + (f, v)
//! J(u, v) = Σ_Γ h^ε/|Γ| ∫_Γ [u·ν][v·ν] + [u·τ][v·τ]
//! ```
//!
//! where `h` is the global mesh size. On boundary edges the penalty acts on
//! the mean-free part of the trace: both components under Dirichlet
//! conditions, only the normal one under Navier conditions. On the
//! constrained spaces this coincides with the jump against the zero exterior
//! extension.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::{cr_local_basis, div_curl, Constraint, DofMap, FeFunction, SpaceKind};
use crate::linalg::{self, CsrMatrix, LinearSolveReport, LuFactorization};
use crate::mesh::{Mesh, Point};
use crate::par::{map_range, Execution};
use crate::quadrature::EdgeRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    Dirichlet,
    Navier,
}

impl BoundaryMode {
    pub fn cr_constraint(self) -> Constraint {
        match self {
            BoundaryMode::Dirichlet => Constraint::Dirichlet,
            BoundaryMode::Navier => Constraint::Navier,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CrParams {
    pub mu: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub boundary: BoundaryMode,
}

impl CrParams {
    pub const DEFAULT_EPSILON: f64 = 0.05;

    pub fn validate(&self) -> Result<()> {
        check_viscosities(self.mu, self.lambda)?;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!("penalty exponent ε = {} must be positive", self.epsilon)));
        }
        Ok(())
    }
}

pub(crate) fn check_viscosities(mu: f64, lambda: f64) -> Result<()> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!("shear viscosity μ = {mu} must be positive")));
    }
    if !(2.0 * lambda + 2.0 * mu >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("viscosities violate 2λ + 2μ ≥ 0 (μ = {mu}, λ = {lambda})")));
    }
    Ok(())
}

/// Assembled CR operator on the free DOFs. The penalty part is kept
/// separately for energy bookkeeping.
#[derive(Debug, Clone)]
pub struct CrOperator {
    pub dofs: Arc<DofMap>,
    pub params: CrParams,
    pub matrix: CsrMatrix,
    pub penalty: CsrMatrix,
}

impl CrOperator {
    /// Penalty energy `J(u, u)`.
    pub fn penalty_energy(&self, u: &FeFunction) -> f64 {
        let x = u.free_values();
        self.penalty.bilinear(&x, &x)
    }
}

pub fn assemble_cr_operator(mesh: &Mesh, dofs: &Arc<DofMap>, params: &CrParams) -> Result<CrOperator> {
    assemble_cr_operator_with(mesh, dofs, params, Execution::default())
}

pub fn assemble_cr_operator_with(
    mesh: &Mesh,
    dofs: &Arc<DofMap>,
    params: &CrParams,
    exec: Execution,
) -> Result<CrOperator> {
    params.validate()?;
    dofs.expect(SpaceKind::Cr, "CR operator")?;
    let (mu, nu) = (params.mu, params.mu + params.lambda);
    let elements = map_range(exec, mesh.n_triangles(), |t| {
        let basis = cr_local_basis(mesh, t);
        let dc: [(f64, f64); 6] = std::array::from_fn(|k| div_curl(basis[k].1, basis[k].2));
        let area = mesh.areas[t];
        let local: [f64; 36] =
            std::array::from_fn(|k| area * (nu * dc[k / 6].0 * dc[k % 6].0 + mu * dc[k / 6].1 * dc[k % 6].1));
        (basis.map(|b| b.0), local)
    });
    let scale = mesh.h_max.powf(params.epsilon);
    let rule = EdgeRule::with_points(2);
    let edges = map_range(exec, mesh.n_edges(), |e| edge_penalty(mesh, e, &rule, params.boundary, scale));

    let mut pen = crate::fespace::SystemBuilder::new(dofs, dofs);
    for (d, local) in &edges {
        pen.add_local(d, d, local);
    }
    let penalty = pen.finish();
    let mut b = crate::fespace::SystemBuilder::new(dofs, dofs);
    for (d, local) in &elements {
        b.add_local(d, d, local);
    }
    let matrix = b.finish().add_scaled(1.0, &penalty);
    Ok(CrOperator { dofs: dofs.clone(), params: *params, matrix, penalty })
}

/// Local penalty matrix of edge `e` over the CR DOFs of its neighbours.
fn edge_penalty(mesh: &Mesh, e: usize, rule: &EdgeRule, mode: BoundaryMode, scale: f64) -> (Vec<usize>, Vec<f64>) {
    let edge = &mesh.edges[e];
    let sides: Vec<(usize, f64)> = match edge.plus {
        Some(p) => vec![(edge.minus, -1.0), (p, 1.0)],
        None => vec![(edge.minus, -1.0)],
    };
    let normal_only = edge.is_boundary() && mode == BoundaryMode::Navier;
    let mut dofs = Vec::with_capacity(12);
    // jump[k][q] = (normal, tangential) jump of basis k at quadrature point q.
    let mut jump: Vec<Vec<Point>> = Vec::with_capacity(12);
    for &(t, side) in &sides {
        let basis = cr_local_basis(mesh, t);
        let pts: Vec<[f64; 3]> = rule.params.iter().map(|s| mesh.barycentric(t, edge.point_at(mesh, *s))).collect();
        for (k, (dof, dir, _)) in basis.iter().enumerate() {
            let i = k / 2;
            let vals: Vec<Point> = pts
                .iter()
                .map(|l| {
                    let phi = side * (1.0 - 2.0 * l[i]);
                    let v = [phi * dir[0], phi * dir[1]];
                    [dot(v, edge.normal), dot(v, edge.tangent)]
                })
                .collect();
            let mean = vals.iter().zip(&rule.weights).fold([0.0, 0.0], |m, (v, w)| [m[0] + w * v[0], m[1] + w * v[1]]);
            dofs.push(*dof);
            jump.push(vals.iter().map(|v| [v[0] - mean[0], v[1] - mean[1]]).collect());
        }
    }
    let n = dofs.len();
    let mut local = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            let mut s = 0.0;
            for (q, w) in rule.weights.iter().enumerate() {
                let (ja, jb) = (jump[a][q], jump[b][q]);
                s += w * (ja[0] * jb[0] + if normal_only { 0.0 } else { ja[1] * jb[1] });
            }
            // h^ε/|Γ| · ∫_Γ = h^ε · Σ w.
            local[a * n + b] = scale * s;
        }
    }
    (dofs, local)
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `(p, div_h φ)` for every free CR basis function `φ`.
pub fn assemble_pressure_load(mesh: &Mesh, dofs: &DofMap, p: &FeFunction) -> Result<Vec<f64>> {
    dofs.expect(SpaceKind::Cr, "pressure load")?;
    p.dofs().expect(SpaceKind::P0, "pressure load")?;
    let mut load = vec![0.0; dofs.n_free()];
    for t in 0..mesh.n_triangles() {
        let pt = p.coeffs()[t] * mesh.areas[t];
        if pt == 0.0 {
            continue;
        }
        for (dof, dir, grad) in cr_local_basis(mesh, t) {
            if let Some(i) = dofs.free_index(dof) {
                load[i] += pt * div_curl(dir, grad).0;
            }
        }
    }
    Ok(load)
}

/// `(f, φ)` for a piecewise-constant force and every free CR basis function.
pub fn assemble_force_load(mesh: &Mesh, dofs: &DofMap, f: &[Point]) -> Result<Vec<f64>> {
    dofs.expect(SpaceKind::Cr, "force load")?;
    if f.len() != mesh.n_triangles() {
        return Err(Error::invalid(format!("force needs {} element values, got {}", mesh.n_triangles(), f.len())));
    }
    let mut load = vec![0.0; dofs.n_free()];
    for t in 0..mesh.n_triangles() {
        // Each CR basis function integrates to |E|/3 on its element.
        let w = mesh.areas[t] / 3.0;
        for (dof, dir, _) in cr_local_basis(mesh, t) {
            if let Some(i) = dofs.free_index(dof) {
                load[i] += w * dot(f[t], dir);
            }
        }
    }
    Ok(load)
}

/// Factorized CR momentum operator, reused across solves with varying loads.
#[derive(Debug, Clone)]
pub struct CrMomentumSolver {
    pub operator: CrOperator,
    lu: LuFactorization,
    tol: f64,
}

impl CrMomentumSolver {
    pub fn new(mesh: &Mesh, params: &CrParams, tol: f64) -> Result<Self> {
        Self::with_execution(mesh, params, tol, Execution::default())
    }

    pub fn with_execution(mesh: &Mesh, params: &CrParams, tol: f64, exec: Execution) -> Result<Self> {
        let dofs = DofMap::new(mesh, SpaceKind::Cr, params.boundary.cr_constraint())?;
        let operator = assemble_cr_operator_with(mesh, &dofs, params, exec)?;
        let lu = LuFactorization::factor(&operator.matrix)?;
        Ok(Self { operator, lu, tol })
    }

    pub fn dofs(&self) -> &Arc<DofMap> {
        &self.operator.dofs
    }

    /// Right-hand side `(p, div φ) + (f, φ)` on free DOFs.
    pub fn load(&self, mesh: &Mesh, p: &FeFunction, f: &[Point]) -> Result<Vec<f64>> {
        let mut b = assemble_pressure_load(mesh, self.dofs(), p)?;
        for (b, g) in b.iter_mut().zip(assemble_force_load(mesh, self.dofs(), f)?) {
            *b += g;
        }
        Ok(b)
    }

    pub fn solve(&self, mesh: &Mesh, p: &FeFunction, f: &[Point]) -> Result<(FeFunction, LinearSolveReport)> {
        let b = self.load(mesh, p, f)?;
        let (x, rep) = if linalg::norm2(&b) == 0.0 {
            (
                vec![0.0; b.len()],
                LinearSolveReport { residual_norm: 0.0, relative_residual: 0.0, iterations: 0, success: true },
            )
        } else {
            linalg::solve_factored(&self.operator.matrix, &self.lu, &b, self.tol)?
        };
        Ok((FeFunction::from_free(self.dofs().clone(), &x), rep))
    }

    /// Relative residual `‖Au − b‖ / ‖b‖` of a candidate velocity.
    pub fn residual(&self, mesh: &Mesh, u: &FeFunction, p: &FeFunction, f: &[Point]) -> Result<f64> {
        let b = self.load(mesh, p, f)?;
        let r: Vec<f64> = self.operator.matrix.matvec(&u.free_values()).iter().zip(&b).map(|(a, b)| a - b).collect();
        let bn = linalg::norm2(&b);
        Ok(if bn > 0.0 { linalg::norm2(&r) / bn } else { linalg::norm2(&r) })
    }
}

pub fn solve_cr_momentum(mesh: &Mesh, params: &CrParams, p: &FeFunction, f: &[Point]) -> Result<FeFunction> {
    Ok(CrMomentumSolver::new(mesh, params, linalg::DEFAULT_TOLERANCE)?.solve(mesh, p, f)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::{elementwise_curl, elementwise_div, interpolate_scalar, interpolate_vector};
    use crate::mesh::Rect;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn unit(n: usize) -> Mesh {
        Mesh::build_structured(n, n, Rect::UNIT).unwrap()
    }

    fn params(boundary: BoundaryMode) -> CrParams {
        CrParams { mu: 1.0, lambda: 0.5, epsilon: 0.05, boundary }
    }

    fn constant(mesh: &Mesh, v: f64) -> FeFunction {
        FeFunction::new(DofMap::p0(mesh), vec![v; mesh.n_triangles()]).unwrap()
    }

    #[test]
    fn parameter_validation() {
        let mut p = params(BoundaryMode::Navier);
        p.mu = 0.0;
        assert!(p.validate().is_err());
        p.mu = 1.0;
        p.lambda = -1.5;
        assert!(p.validate().is_err());
        p.lambda = -1.0;
        assert!(p.validate().is_ok());
        p.epsilon = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn constants_have_zero_energy_before_constraints() {
        let m = unit(1);
        let full = DofMap::new(&m, SpaceKind::Cr, Constraint::None).unwrap();
        let op = assemble_cr_operator(&m, &full, &params(BoundaryMode::Navier)).unwrap();
        for c in [[1.0, 0.0], [0.3, -2.0]] {
            let v = interpolate_vector(&m, &full, |_| c).unwrap();
            assert!(op.matrix.bilinear(v.coeffs(), v.coeffs()).abs() < 1e-14);
        }
    }

    #[test]
    fn operator_is_symmetric_and_positive_definite() {
        let m = unit(4);
        for mode in [BoundaryMode::Navier, BoundaryMode::Dirichlet] {
            let dofs = DofMap::new(&m, SpaceKind::Cr, mode.cr_constraint()).unwrap();
            let op = assemble_cr_operator(&m, &dofs, &params(mode)).unwrap();
            assert!(op.matrix.asymmetry() <= 1e-14);
        }
        let m = unit(2);
        for mode in [BoundaryMode::Navier, BoundaryMode::Dirichlet] {
            let dofs = DofMap::new(&m, SpaceKind::Cr, mode.cr_constraint()).unwrap();
            let op = assemble_cr_operator(&m, &dofs, &params(mode)).unwrap();
            let n = op.matrix.nrows();
            let dense = op.matrix.to_dense();
            let a = nalgebra::DMatrix::from_fn(n, n, |i, j| dense[i][j]);
            let ev = a.symmetric_eigenvalues();
            assert!(ev.min() > 1e-8, "{mode:?}: {}", ev.min());
        }
    }

    #[test]
    fn sequential_and_parallel_assembly_agree() {
        let m = unit(6);
        let dofs = DofMap::new(&m, SpaceKind::Cr, Constraint::Navier).unwrap();
        let p = params(BoundaryMode::Navier);
        let a = assemble_cr_operator_with(&m, &dofs, &p, Execution::Sequential).unwrap();
        let b = assemble_cr_operator_with(&m, &dofs, &p, Execution::Parallel).unwrap();
        assert_eq!(a.matrix.values(), b.matrix.values());
        assert_eq!(a.matrix.col_idx(), b.matrix.col_idx());
    }

    #[test]
    fn operator_matches_split_energies() {
        let m = unit(3);
        let p = params(BoundaryMode::Dirichlet);
        let dofs = DofMap::new(&m, SpaceKind::Cr, Constraint::Dirichlet).unwrap();
        let op = assemble_cr_operator(&m, &dofs, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..dofs.n_free()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u = FeFunction::from_free(dofs.clone(), &x);
        let c = elementwise_curl(&m, &u).unwrap().l2_norm(&m).powi(2);
        let d = elementwise_div(&m, &u).unwrap().l2_norm(&m).powi(2);
        let total = op.matrix.bilinear(&x, &x);
        let expect = p.mu * c + (p.mu + p.lambda) * d + op.penalty_energy(&u);
        assert!((total - expect).abs() <= 1e-12 * total);
        assert!(op.penalty_energy(&u) > 0.0);
    }

    #[test]
    fn pressure_load_of_constant_pairs_to_zero() {
        let m = unit(3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for mode in [BoundaryMode::Navier, BoundaryMode::Dirichlet] {
            let dofs = DofMap::new(&m, SpaceKind::Cr, mode.cr_constraint()).unwrap();
            let load = assemble_pressure_load(&m, &dofs, &constant(&m, 2.5)).unwrap();
            for _ in 0..5 {
                let v: Vec<f64> = (0..dofs.n_free()).map(|_| rng.random_range(-1.0..1.0)).collect();
                assert!(linalg::dot(&load, &v).abs() < 1e-13);
            }
            // Navier keeps tangential boundary DOFs, so the load vanishes entrywise there too.
            assert!(load.iter().all(|x| x.abs() < 1e-13));
            assert!(assemble_pressure_load(&m, &dofs, &constant(&m, 0.0)).unwrap().iter().all(|x| *x == 0.0));
        }
    }

    #[test]
    fn pressure_load_of_an_indicator() {
        let m = unit(2);
        let dofs = DofMap::new(&m, SpaceKind::Cr, Constraint::None).unwrap();
        let e = 3;
        let mut ind = vec![0.0; m.n_triangles()];
        ind[e] = 1.0;
        let p = FeFunction::new(DofMap::p0(&m), ind).unwrap();
        let load = assemble_pressure_load(&m, &dofs, &p).unwrap();
        // Oracle: divergence of each basis function evaluated on element e.
        for i in 0..dofs.n_free() {
            let mut c = vec![0.0; dofs.n_full()];
            c[dofs.full_index(i)] = 1.0;
            let div = elementwise_div(&m, &FeFunction::new(dofs.clone(), c).unwrap()).unwrap();
            assert!((load[i] - m.areas[e] * div.coeffs()[e]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_load_gives_zero_velocity() {
        let m = unit(4);
        let zero_f = vec![[0.0, 0.0]; m.n_triangles()];
        for mode in [BoundaryMode::Navier, BoundaryMode::Dirichlet] {
            let mut p = params(mode);
            let u = solve_cr_momentum(&m, &p, &constant(&m, 3.0), &zero_f).unwrap();
            assert!(u.coeffs().iter().all(|c| c.abs() < 1e-12));
            p.mu *= 2.0;
            let u = solve_cr_momentum(&m, &p, &constant(&m, 3.0), &zero_f).unwrap();
            assert!(u.coeffs().iter().all(|c| c.abs() < 1e-12));
        }
    }

    #[test]
    fn galerkin_energy_identity() {
        let m = unit(4);
        let p = params(BoundaryMode::Navier);
        let solver = CrMomentumSolver::new(&m, &p, 1e-12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pr = FeFunction::new(DofMap::p0(&m), (0..m.n_triangles()).map(|_| rng.random_range(0.0..2.0)).collect())
            .unwrap();
        let f: Vec<Point> =
            (0..m.n_triangles()).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let (u, rep) = solver.solve(&m, &pr, &f).unwrap();
        assert!(rep.success);
        let x = u.free_values();
        let lhs = solver.operator.matrix.bilinear(&x, &x);
        let rhs = linalg::dot(&solver.load(&m, &pr, &f).unwrap(), &x);
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs());
        assert!(solver.residual(&m, &u, &pr, &f).unwrap() <= 1e-12);
    }

    #[test]
    fn hydrostatic_balance_converges() {
        // f = ∇p(ϱ*) balances the pressure exactly; the discrete velocity is
        // a consistency error that shrinks with h.
        let star = |x: Point| 2.0 + (PI * x[0]).sin() * (PI * x[1]).sin();
        let grad = |x: Point| {
            let r = star(x);
            [2.0 * r * PI * (PI * x[0]).cos() * (PI * x[1]).sin(), 2.0 * r * PI * (PI * x[0]).sin() * (PI * x[1]).cos()]
        };
        let mut norms = Vec::new();
        for n in [4, 8, 16, 32] {
            let m = unit(n);
            let rho = interpolate_scalar(&m, &DofMap::p0(&m), star).unwrap();
            let p = FeFunction::new(DofMap::p0(&m), rho.coeffs().iter().map(|r| r * r).collect()).unwrap();
            let f: Vec<Point> = (0..m.n_triangles()).map(|t| grad(m.centroid(t))).collect();
            let u = solve_cr_momentum(&m, &params(BoundaryMode::Navier), &p, &f).unwrap();
            norms.push(u.l2_norm(&m));
        }
        assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
    }

    #[test]
    fn penalty_of_smooth_harmonic_field_vanishes_with_h() {
        // Interpolation jumps of a smooth zero-trace field are O(h), so the
        // penalty energy decays faster than h.
        let field = |x: Point| [(PI * x[0]).sin() * (PI * x[1]).sin(), x[0] * x[1] * (1.0 - x[0]) * (1.0 - x[1])];
        let mut energies = Vec::new();
        for n in [4, 8, 16] {
            let m = unit(n);
            let dofs = DofMap::new(&m, SpaceKind::Cr, Constraint::Dirichlet).unwrap();
            let op = assemble_cr_operator(&m, &dofs, &params(BoundaryMode::Dirichlet)).unwrap();
            let u = interpolate_vector(&m, &dofs, field).unwrap();
            energies.push(op.penalty_energy(&u) / m.h_max);
        }
        assert!(energies.windows(2).all(|w| w[1] < w[0]), "{energies:?}");
    }

    #[test]
    fn load_rejects_wrong_sizes() {
        let m = unit(2);
        let dofs = DofMap::new(&m, SpaceKind::Cr, Constraint::Navier).unwrap();
        assert!(assemble_force_load(&m, &dofs, &[[0.0, 0.0]]).is_err());
        assert!(assemble_pressure_load(&m, &DofMap::p0(&m), &constant(&m, 1.0)).is_err());
    }
}
