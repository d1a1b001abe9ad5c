//! The discrete de Rham complex `P1_0 --curl--> RT0_0 --div--> P0` and the
//! Hodge decomposition of RT0 fields.

use std::sync::Arc;

use super::operators::curl_orientation;
use super::{rt0_div_matrix, rt0_mass_matrix, Constraint, DofMap, FeFunction, SpaceKind};
use crate::error::{Error, Result};
use crate::linalg::{self, CsrMatrix, SolveMethod};
use crate::mesh::Mesh;

/// Discrete curl (RT0 free × P1 free), entries ±1.
pub fn curl_matrix(mesh: &Mesh, p1: &DofMap, rt: &DofMap) -> CsrMatrix {
    let mut trip = Vec::new();
    for e in 0..mesh.n_edges() {
        let Some(i) = rt.free_index(e) else { continue };
        let [a, b] = mesh.edges[e].vertices;
        let s = curl_orientation(mesh, e);
        if let Some(j) = p1.free_index(b) {
            trip.push((i, j, s));
        }
        if let Some(j) = p1.free_index(a) {
            trip.push((i, j, -s));
        }
    }
    CsrMatrix::from_triplets(rt.n_free(), p1.n_free(), &trip).expect("in range")
}

/// Area-scaled divergence `|E| div` (P0 × RT0 free), entries ±1.
pub fn divergence_matrix(mesh: &Mesh, rt: &DofMap) -> CsrMatrix {
    let mut trip = Vec::new();
    for t in 0..mesh.n_triangles() {
        for i in 0..3 {
            if let Some(j) = rt.free_index(mesh.triangle_edges[t][i]) {
                trip.push((t, j, mesh.triangle_edge_signs[t][i]));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_triangles(), rt.n_free(), &trip).expect("in range")
}

const PRIME: u64 = 2_147_483_647;

fn pow_mod(mut b: u64, mut e: u64) -> u64 {
    let mut r = 1;
    b %= PRIME;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % PRIME;
        }
        b = b * b % PRIME;
        e >>= 1;
    }
    r
}

/// Exact rank of an integer-valued matrix, computed by Gaussian elimination
/// over GF(2³¹ - 1). The incidence matrices of the complex are totally
/// unimodular, so the modular rank equals the rational rank.
pub fn incidence_rank(m: &CsrMatrix) -> Result<usize> {
    let (nr, nc) = (m.nrows(), m.ncols());
    let mut a = vec![vec![0u64; nc]; nr];
    for (i, j, v) in m.triplets() {
        if v.fract() != 0.0 {
            return Err(Error::invalid("incidence_rank needs integer entries"));
        }
        let vi = v as i64;
        a[i][j] = vi.rem_euclid(PRIME as i64) as u64;
    }
    let mut rank = 0;
    for col in 0..nc {
        let Some(p) = (rank..nr).find(|&r| a[r][col] != 0) else { continue };
        a.swap(rank, p);
        let inv = pow_mod(a[rank][col], PRIME - 2);
        let pivot_row = a[rank].clone();
        for r in 0..nr {
            if r != rank && a[r][col] != 0 {
                let f = a[r][col] * inv % PRIME;
                for c in col..nc {
                    if pivot_row[c] != 0 {
                        a[r][c] = (a[r][c] + PRIME - f * pivot_row[c] % PRIME) % PRIME;
                    }
                }
            }
        }
        rank += 1;
        if rank == nr {
            break;
        }
    }
    Ok(rank)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DimensionReport {
    pub dim_p1_zero: usize,
    pub dim_rt0: usize,
    pub dim_p0: usize,
    pub rank_div: usize,
    pub rank_curl: usize,
    /// `div ∘ curl` is the zero matrix (checked in exact integer arithmetic).
    pub div_curl_vanishes: bool,
    /// `dim curl(W) + dim V^{0,⊥} = dim V`, i.e. `ker div = im curl`.
    pub kernel_matches_image: bool,
    /// `im div` is the mean-zero subspace of P0.
    pub div_onto_mean_zero: bool,
    /// `curl` is injective on zero-trace P1.
    pub curl_injective: bool,
}

impl DimensionReport {
    pub fn exact(&self) -> bool {
        self.div_curl_vanishes && self.kernel_matches_image && self.div_onto_mean_zero && self.curl_injective
    }
}

/// Dimensions and ranks of the Navier-constrained complex.
pub fn space_dimensions(mesh: &Mesh) -> Result<DimensionReport> {
    let p1 = DofMap::new(mesh, SpaceKind::P1, Constraint::ZeroTrace)?;
    let rt = DofMap::new(mesh, SpaceKind::Rt0, Constraint::Navier)?;
    let curl = curl_matrix(mesh, &p1, &rt);
    let div = divergence_matrix(mesh, &rt);
    let rank_curl = incidence_rank(&curl)?;
    let rank_div = incidence_rank(&div)?;
    let product = div.mul(&curl);
    let div_curl_vanishes = product.values().iter().all(|v| *v == 0.0);
    let column_sums_vanish = {
        let ones = vec![1.0; mesh.n_triangles()];
        div.transpose().matvec(&ones).iter().all(|v| *v == 0.0)
    };
    Ok(DimensionReport {
        dim_p1_zero: p1.n_free(),
        dim_rt0: rt.n_free(),
        dim_p0: mesh.n_triangles(),
        rank_div,
        rank_curl,
        div_curl_vanishes,
        kernel_matches_image: rank_curl + rank_div == rt.n_free(),
        div_onto_mean_zero: column_sums_vanish && rank_div + 1 == mesh.n_triangles(),
        curl_injective: rank_curl == p1.n_free(),
    })
}

#[derive(Debug, Clone)]
pub struct HodgeDecomposition {
    /// Stream function in zero-trace P1.
    pub stream: FeFunction,
    /// `curl_of_p1(stream)`.
    pub curl_part: FeFunction,
    /// L²-orthogonal remainder, in `V^{0,⊥}`.
    pub perp: FeFunction,
}

/// Splits a Navier-constrained RT0 field as `v = curl s + v_perp` by solving
/// `(curl s, curl t) = (v, curl t)` for all zero-trace P1 `t`.
pub fn hodge_decompose(mesh: &Mesh, v: &FeFunction) -> Result<HodgeDecomposition> {
    let rt = v.dofs().clone();
    if rt.kind() != SpaceKind::Rt0 || rt.constraint() != Constraint::Navier {
        return Err(Error::invalid("hodge_decompose expects a Navier-constrained RT0 field"));
    }
    let p1 = DofMap::new(mesh, SpaceKind::P1, Constraint::ZeroTrace)?;
    let c = curl_matrix(mesh, &p1, &rt);
    let m = rt0_mass_matrix(mesh, &rt);
    let ct = c.transpose();
    let v_free = v.free_values();
    let s_free = if p1.n_free() == 0 {
        Vec::new()
    } else {
        let k = ct.mul(&m).mul(&c);
        let rhs = ct.matvec(&m.matvec(&v_free));
        linalg::solve(&k, &rhs, SolveMethod::Direct, 1e-13)?.0
    };
    let curl_free = c.matvec(&s_free);
    let perp_free: Vec<f64> = v_free.iter().zip(&curl_free).map(|(a, b)| a - b).collect();
    Ok(HodgeDecomposition {
        stream: FeFunction::from_free(p1, &s_free),
        curl_part: FeFunction::from_free(rt.clone(), &curl_free),
        perp: FeFunction::from_free(rt, &perp_free),
    })
}

/// Smallest positive generalized eigenvalue of `(div v, div v)` against
/// `(v, v)` on Navier RT0. Its eigenvectors span `V^{0,⊥}`, so
/// `‖v‖ ≤ λ^{-1/2} ‖div v‖` there. Dense; meant for coarse meshes.
pub fn poincare_eigenvalue(mesh: &Mesh) -> Result<f64> {
    use nalgebra::DMatrix;
    let rt: Arc<DofMap> = DofMap::new(mesh, SpaceKind::Rt0, Constraint::Navier)?;
    let n = rt.n_free();
    if n == 0 {
        return Err(Error::invalid("mesh has no interior edges"));
    }
    let to_dense = |a: &CsrMatrix| {
        let mut d = DMatrix::<f64>::zeros(n, n);
        for (i, j, v) in a.triplets() {
            d[(i, j)] = v;
        }
        d
    };
    let m = to_dense(&rt0_mass_matrix(mesh, &rt));
    let d = to_dense(&rt0_div_matrix(mesh, &rt));
    let chol = m.cholesky().ok_or_else(|| Error::InternalBug("RT0 mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or_else(|| Error::InternalBug("singular Cholesky factor".into()))?;
    let s = &linv * d * linv.transpose();
    let s = (&s + s.transpose()) * 0.5;
    let eig = s.symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(0.0, f64::max);
    eig.iter()
        .cloned()
        .filter(|&x| x > 1e-9 * max)
        .reduce(f64::min)
        .ok_or_else(|| Error::InternalBug("divergence form vanishes identically".into()))
}
