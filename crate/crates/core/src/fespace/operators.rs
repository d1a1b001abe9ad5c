use std::sync::Arc;

use super::{Constraint, DofMap, FeFunction, SpaceKind};
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::mesh::{Mesh, Point};
use crate::quadrature::{EdgeRule, TriangleRule};

/// Collects element contributions on full DOF indices and keeps only the
/// free rows and columns.
pub struct SystemBuilder<'a> {
    rows: &'a DofMap,
    cols: &'a DofMap,
    triplets: Vec<(usize, usize, f64)>,
}

impl<'a> SystemBuilder<'a> {
    pub fn new(rows: &'a DofMap, cols: &'a DofMap) -> Self {
        Self { rows, cols, triplets: Vec::new() }
    }

    /// `local` is row-major with `row_dofs.len() × col_dofs.len()` entries.
    pub fn add_local(&mut self, row_dofs: &[usize], col_dofs: &[usize], local: &[f64]) {
        debug_assert_eq!(local.len(), row_dofs.len() * col_dofs.len());
        for (a, &r) in row_dofs.iter().enumerate() {
            let Some(i) = self.rows.free_index(r) else { continue };
            for (b, &c) in col_dofs.iter().enumerate() {
                if let Some(j) = self.cols.free_index(c) {
                    self.triplets.push((i, j, local[a * col_dofs.len() + b]));
                }
            }
        }
    }

    /// Entry on free indices, bypassing the DOF maps.
    pub fn add_free(&mut self, i: usize, j: usize, v: f64) {
        self.triplets.push((i, j, v));
    }

    pub fn finish(self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.rows.n_free(), self.cols.n_free(), &self.triplets)
            .expect("free indices are in range")
    }
}

/// Interpolates a scalar field: element means (order-4 quadrature) for `P0`,
/// vertex values for `P1`.
pub fn interpolate_scalar(mesh: &Mesh, dofs: &Arc<DofMap>, f: impl Fn(Point) -> f64) -> Result<FeFunction> {
    let coeffs = match dofs.kind() {
        SpaceKind::P0 => {
            let rule = TriangleRule::of_order(4);
            (0..mesh.n_triangles()).map(|t| rule.map(&mesh.triangle_points(t)).map(|(x, w)| w * f(x)).sum()).collect()
        }
        SpaceKind::P1 => mesh.vertices.iter().map(|&v| f(v)).collect(),
        k => return Err(Error::invalid(format!("scalar interpolation into {k:?}"))),
    };
    Ok(FeFunction::constrained(dofs.clone(), coeffs))
}

/// Interpolates a vector field: edge means of `f·ν`, `f·τ` for `Cr`, normal
/// fluxes `∫_Γ f·ν` for `Rt0`. Constrained DOFs are set to zero.
pub fn interpolate_vector(mesh: &Mesh, dofs: &Arc<DofMap>, f: impl Fn(Point) -> Point) -> Result<FeFunction> {
    let rule = EdgeRule::with_points(4);
    let edge_mean = |e: usize| {
        let edge = &mesh.edges[e];
        let mut m = [0.0; 2];
        for (s, w) in rule.params.iter().zip(&rule.weights) {
            let v = f(edge.point_at(mesh, *s));
            m[0] += w * v[0];
            m[1] += w * v[1];
        }
        m
    };
    let coeffs = match dofs.kind() {
        SpaceKind::Cr => (0..mesh.n_edges())
            .flat_map(|e| {
                let m = edge_mean(e);
                let edge = &mesh.edges[e];
                [dot(m, edge.normal), dot(m, edge.tangent)]
            })
            .collect(),
        SpaceKind::Rt0 => {
            (0..mesh.n_edges()).map(|e| mesh.edges[e].length * dot(edge_mean(e), mesh.edges[e].normal)).collect()
        }
        k => return Err(Error::invalid(format!("vector interpolation into {k:?}"))),
    };
    Ok(FeFunction::constrained(dofs.clone(), coeffs))
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Local CR basis on triangle `t`: six (full DOF, direction, gradient of the
/// scalar factor) triples. The basis function is `(1 - 2λ_i) · direction`.
pub(crate) fn cr_local_basis(mesh: &Mesh, t: usize) -> [(usize, Point, Point); 6] {
    let g = mesh.barycentric_gradients(t);
    std::array::from_fn(|k| {
        let (i, c) = (k / 2, k % 2);
        let e = mesh.triangle_edges[t][i];
        let edge = &mesh.edges[e];
        let dir = if c == 0 { edge.normal } else { edge.tangent };
        (2 * e + c, dir, [-2.0 * g[i][0], -2.0 * g[i][1]])
    })
}

/// Divergence and scalar curl of a vector field `φ d` with constant `d`.
pub(crate) fn div_curl(dir: Point, grad: Point) -> (f64, f64) {
    (dot(dir, grad), dir[1] * grad[0] - dir[0] * grad[1])
}

/// Elementwise divergence of a CR or RT0 function.
pub fn elementwise_div(mesh: &Mesh, u: &FeFunction) -> Result<FeFunction> {
    let c = u.coeffs();
    let values: Vec<f64> = match u.kind() {
        SpaceKind::Cr => (0..mesh.n_triangles())
            .map(|t| cr_local_basis(mesh, t).iter().map(|(dof, dir, grad)| c[*dof] * div_curl(*dir, *grad).0).sum())
            .collect(),
        SpaceKind::Rt0 => (0..mesh.n_triangles())
            .map(|t| {
                (0..3).map(|i| mesh.triangle_edge_signs[t][i] * c[mesh.triangle_edges[t][i]]).sum::<f64>()
                    / mesh.areas[t]
            })
            .collect(),
        k => return Err(Error::invalid(format!("elementwise divergence of a {k:?} function"))),
    };
    FeFunction::new(DofMap::p0(mesh), values)
}

/// Elementwise scalar curl `∂x u2 - ∂y u1` of a CR function.
pub fn elementwise_curl(mesh: &Mesh, u: &FeFunction) -> Result<FeFunction> {
    u.dofs().expect(SpaceKind::Cr, "elementwise_curl")?;
    let c = u.coeffs();
    let values = (0..mesh.n_triangles())
        .map(|t| cr_local_basis(mesh, t).iter().map(|(dof, dir, grad)| c[*dof] * div_curl(*dir, *grad).1).sum())
        .collect();
    FeFunction::new(DofMap::p0(mesh), values)
}

/// Sign of `w(b) - w(a)` in the RT0 DOF of `curl w` on edge `e`:
/// the flux of `curl w` through Γ equals the change of `w` along `τ`.
pub(crate) fn curl_orientation(mesh: &Mesh, e: usize) -> f64 {
    let edge = &mesh.edges[e];
    let a = mesh.vertices[edge.vertices[0]];
    let b = mesh.vertices[edge.vertices[1]];
    if dot(edge.tangent, [b[0] - a[0], b[1] - a[1]]) > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Vector curl `(∂y w, -∂x w)` of a P1 function as an RT0 function. Zero-trace
/// input maps into the Navier-constrained RT0 space, unconstrained input into
/// the unconstrained one.
pub fn curl_of_p1(mesh: &Mesh, w: &FeFunction) -> Result<FeFunction> {
    w.dofs().expect(SpaceKind::P1, "curl_of_p1")?;
    let target = match w.dofs().constraint() {
        Constraint::ZeroTrace => Constraint::Navier,
        _ => Constraint::None,
    };
    let rt = DofMap::new(mesh, SpaceKind::Rt0, target)?;
    let c = w.coeffs();
    let coeffs = (0..mesh.n_edges())
        .map(|e| {
            let [a, b] = mesh.edges[e].vertices;
            curl_orientation(mesh, e) * (c[b] - c[a])
        })
        .collect();
    Ok(FeFunction::constrained(rt, coeffs))
}

/// Local RT0 mass matrix on triangle `t` (row-major 3×3, local edge order).
pub(crate) fn rt0_local_mass(mesh: &Mesh, t: usize) -> [f64; 9] {
    let p = mesh.triangle_points(t);
    let area = mesh.areas[t];
    let s = mesh.triangle_edge_signs[t];
    let rule = TriangleRule::of_order(2);
    let mut m = [0.0; 9];
    for (x, w) in rule.map(&p) {
        let d: [Point; 3] = std::array::from_fn(|i| [x[0] - p[i][0], x[1] - p[i][1]]);
        for i in 0..3 {
            for j in 0..3 {
                m[3 * i + j] += w * dot(d[i], d[j]);
            }
        }
    }
    let scale = 1.0 / (4.0 * area);
    for i in 0..3 {
        for j in 0..3 {
            m[3 * i + j] *= s[i] * s[j] * scale;
        }
    }
    m
}

/// RT0 mass matrix `(ψ_i, ψ_j)` on free DOFs.
pub fn rt0_mass_matrix(mesh: &Mesh, rt: &DofMap) -> CsrMatrix {
    let mut b = SystemBuilder::new(rt, rt);
    for t in 0..mesh.n_triangles() {
        b.add_local(&mesh.triangle_edges[t], &mesh.triangle_edges[t], &rt0_local_mass(mesh, t));
    }
    b.finish()
}

/// RT0 divergence form `(div ψ_i, div ψ_j)` on free DOFs.
pub fn rt0_div_matrix(mesh: &Mesh, rt: &DofMap) -> CsrMatrix {
    let mut b = SystemBuilder::new(rt, rt);
    for t in 0..mesh.n_triangles() {
        let s = mesh.triangle_edge_signs[t];
        let local: [f64; 9] = std::array::from_fn(|k| s[k / 3] * s[k % 3] / mesh.areas[t]);
        b.add_local(&mesh.triangle_edges[t], &mesh.triangle_edges[t], &local);
    }
    b.finish()
}

/// P1 mass matrix on free DOFs.
pub fn p1_mass_matrix(mesh: &Mesh, p1: &DofMap) -> CsrMatrix {
    let mut b = SystemBuilder::new(p1, p1);
    for t in 0..mesh.n_triangles() {
        let a = mesh.areas[t];
        let local: [f64; 9] = std::array::from_fn(|k| if k / 3 == k % 3 { a / 6.0 } else { a / 12.0 });
        b.add_local(&mesh.triangles[t], &mesh.triangles[t], &local);
    }
    b.finish()
}
