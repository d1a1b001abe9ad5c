//! Discrete spaces on a triangulation and the operators linking them.
//!
//! * `P0`: piecewise constants (density), one DOF per triangle.
//! * `Cr`: vector Crouzeix–Raviart velocity. Two DOFs per edge holding the
//!   edge means of `v·ν` and `v·τ` in the edge's own frame.
//! * `Rt0`: lowest-order Raviart–Thomas velocity, DOF = `∫_Γ v·ν dS`.
//! * `P1`: continuous piecewise linears (vorticity), one DOF per vertex.
//!
//! In 2D these form the complex `P1 --curl--> RT0 --div--> P0`.

mod exterior;
mod function;
mod operators;

use std::sync::Arc;

pub use exterior::{
    curl_matrix, divergence_matrix, hodge_decompose, incidence_rank, poincare_eigenvalue, space_dimensions,
    DimensionReport, HodgeDecomposition,
};
pub use function::FeFunction;
pub(crate) use operators::{cr_local_basis, div_curl};
pub use operators::{
    curl_of_p1, elementwise_curl, elementwise_div, interpolate_scalar, interpolate_vector, p1_mass_matrix,
    rt0_div_matrix, rt0_mass_matrix, SystemBuilder,
};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum SpaceKind {
    P0,
    Cr,
    Rt0,
    P1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum Constraint {
    None,
    /// Vanishing normal component on boundary edges (CR, RT0).
    Navier,
    /// Vanishing edge means of both components on boundary edges (CR).
    Dirichlet,
    /// Vanishing boundary vertex values (P1).
    ZeroTrace,
}

/// Entity-to-DOF map of one discrete space, with constrained DOFs eliminated.
///
/// Functions always store the full coefficient vector; linear systems are
/// posed on the free DOFs only.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    kind: SpaceKind,
    constraint: Constraint,
    full_to_free: Vec<Option<usize>>,
    free_to_full: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &Mesh, kind: SpaceKind, constraint: Constraint) -> Result<Arc<DofMap>> {
        use Constraint as C;
        use SpaceKind as S;
        let constrained: Vec<bool> = match (kind, constraint) {
            (S::P0, C::None) => vec![false; mesh.n_triangles()],
            (S::Cr, C::None) | (S::Rt0, C::None) | (S::P1, C::None) => vec![false; Self::full_len(mesh, kind)],
            (S::Cr, C::Navier) => mesh.edges.iter().flat_map(|e| [e.is_boundary(), false]).collect(),
            (S::Cr, C::Dirichlet) => mesh.edges.iter().flat_map(|e| [e.is_boundary(), e.is_boundary()]).collect(),
            (S::Rt0, C::Navier) => mesh.edges.iter().map(|e| e.is_boundary()).collect(),
            (S::P1, C::ZeroTrace) => mesh.boundary_vertex.clone(),
            (k, c) => {
                return Err(Error::invalid(format!("constraint {c:?} is not defined for space {k:?}")));
            }
        };
        let mut full_to_free = Vec::with_capacity(constrained.len());
        let mut free_to_full = Vec::new();
        for (i, c) in constrained.iter().enumerate() {
            if *c {
                full_to_free.push(None);
            } else {
                full_to_free.push(Some(free_to_full.len()));
                free_to_full.push(i);
            }
        }
        Ok(Arc::new(DofMap { kind, constraint, full_to_free, free_to_full }))
    }

    fn full_len(mesh: &Mesh, kind: SpaceKind) -> usize {
        match kind {
            SpaceKind::P0 => mesh.n_triangles(),
            SpaceKind::Cr => 2 * mesh.n_edges(),
            SpaceKind::Rt0 => mesh.n_edges(),
            SpaceKind::P1 => mesh.n_vertices(),
        }
    }

    pub fn p0(mesh: &Mesh) -> Arc<DofMap> {
        Self::new(mesh, SpaceKind::P0, Constraint::None).expect("valid")
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn n_full(&self) -> usize {
        self.full_to_free.len()
    }

    pub fn n_free(&self) -> usize {
        self.free_to_full.len()
    }

    pub fn free_index(&self, full: usize) -> Option<usize> {
        self.full_to_free[full]
    }

    pub fn full_index(&self, free: usize) -> usize {
        self.free_to_full[free]
    }

    /// Free-DOF values of a full coefficient vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free_to_full.iter().map(|&i| full[i]).collect()
    }

    /// Full coefficient vector with constrained DOFs set to zero.
    pub fn extend(&self, free: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_full()];
        for (k, &i) in self.free_to_full.iter().enumerate() {
            full[i] = free[k];
        }
        full
    }

    pub(crate) fn expect(&self, kind: SpaceKind, what: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::invalid(format!("{what} expects a {kind:?} function, got {:?}", self.kind)))
        }
    }
}
