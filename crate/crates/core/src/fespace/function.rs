use std::sync::Arc;

use super::{DofMap, SpaceKind};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::quadrature::TriangleRule;

/// Coefficients of a discrete function in one space.
#[derive(Debug, Clone, PartialEq)]
pub struct FeFunction {
    dofs: Arc<DofMap>,
    coeffs: Vec<f64>,
}

impl FeFunction {
    /// Fails when the length is wrong or a constrained coefficient is nonzero.
    pub fn new(dofs: Arc<DofMap>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != dofs.n_full() {
            return Err(Error::invalid(format!(
                "{:?} function needs {} coefficients, got {}",
                dofs.kind(),
                dofs.n_full(),
                coeffs.len()
            )));
        }
        if let Some(i) = (0..coeffs.len()).find(|&i| dofs.free_index(i).is_none() && coeffs[i] != 0.0) {
            return Err(Error::invalid(format!("coefficient {i} violates the {:?} constraint", dofs.constraint())));
        }
        Ok(Self { dofs, coeffs })
    }

    pub fn zeros(dofs: Arc<DofMap>) -> Self {
        let coeffs = vec![0.0; dofs.n_full()];
        Self { dofs, coeffs }
    }

    pub fn from_free(dofs: Arc<DofMap>, free: &[f64]) -> Self {
        let coeffs = dofs.extend(free);
        Self { dofs, coeffs }
    }

    /// Builds a function with constrained coefficients forced to zero.
    pub(crate) fn constrained(dofs: Arc<DofMap>, mut coeffs: Vec<f64>) -> Self {
        for (i, c) in coeffs.iter_mut().enumerate() {
            if dofs.free_index(i).is_none() {
                *c = 0.0;
            }
        }
        Self { dofs, coeffs }
    }

    pub fn dofs(&self) -> &Arc<DofMap> {
        &self.dofs
    }

    pub fn kind(&self) -> SpaceKind {
        self.dofs.kind()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn free_values(&self) -> Vec<f64> {
        self.dofs.restrict(&self.coeffs)
    }

    /// `self - other` for functions of the same space.
    pub fn sub(&self, other: &FeFunction) -> Result<FeFunction> {
        if self.dofs != other.dofs {
            return Err(Error::invalid("cannot subtract functions of different spaces"));
        }
        Ok(Self {
            dofs: self.dofs.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        })
    }

    /// Edge-mean vector of a CR function on edge `e`.
    pub fn cr_edge_mean(&self, mesh: &Mesh, e: usize) -> Point {
        let edge = &mesh.edges[e];
        let (un, ut) = (self.coeffs[2 * e], self.coeffs[2 * e + 1]);
        [un * edge.normal[0] + ut * edge.tangent[0], un * edge.normal[1] + ut * edge.tangent[1]]
    }

    /// Value of a scalar (P0 or P1) function at barycentric point `l` of triangle `t`.
    pub fn eval_scalar(&self, mesh: &Mesh, t: usize, l: [f64; 3]) -> f64 {
        match self.kind() {
            SpaceKind::P0 => self.coeffs[t],
            SpaceKind::P1 => {
                let v = mesh.triangles[t];
                l[0] * self.coeffs[v[0]] + l[1] * self.coeffs[v[1]] + l[2] * self.coeffs[v[2]]
            }
            k => panic!("eval_scalar on a {k:?} function"),
        }
    }

    /// Value of a vector (CR or RT0) function at point `x` of triangle `t`.
    pub fn eval_vector(&self, mesh: &Mesh, t: usize, x: Point) -> Point {
        match self.kind() {
            SpaceKind::Cr => {
                let l = mesh.barycentric(t, x);
                let mut u = [0.0; 2];
                for i in 0..3 {
                    let v = self.cr_edge_mean(mesh, mesh.triangle_edges[t][i]);
                    let phi = 1.0 - 2.0 * l[i];
                    u[0] += phi * v[0];
                    u[1] += phi * v[1];
                }
                u
            }
            SpaceKind::Rt0 => {
                let p = mesh.triangle_points(t);
                let scale = 1.0 / (2.0 * mesh.areas[t]);
                let mut u = [0.0; 2];
                for i in 0..3 {
                    let e = mesh.triangle_edges[t][i];
                    let c = mesh.triangle_edge_signs[t][i] * self.coeffs[e] * scale;
                    u[0] += c * (x[0] - p[i][0]);
                    u[1] += c * (x[1] - p[i][1]);
                }
                u
            }
            k => panic!("eval_vector on a {k:?} function"),
        }
    }

    /// L² norm over the domain (exact for every space).
    pub fn l2_norm(&self, mesh: &Mesh) -> f64 {
        match self.kind() {
            SpaceKind::P0 => mesh.areas.iter().zip(&self.coeffs).map(|(a, c)| a * c * c).sum::<f64>().sqrt(),
            SpaceKind::Cr => {
                // The edge-midpoint rule is exact for quadratics and CR basis
                // functions are nodal at the midpoints.
                (0..mesh.n_triangles())
                    .map(|t| {
                        mesh.areas[t] / 3.0
                            * mesh.triangle_edges[t]
                                .iter()
                                .map(|&e| {
                                    let v = self.cr_edge_mean(mesh, e);
                                    v[0] * v[0] + v[1] * v[1]
                                })
                                .sum::<f64>()
                    })
                    .sum::<f64>()
                    .sqrt()
            }
            SpaceKind::Rt0 => {
                let rule = TriangleRule::of_order(2);
                (0..mesh.n_triangles())
                    .map(|t| {
                        let p = mesh.triangle_points(t);
                        mesh.areas[t]
                            * rule
                                .map(&p)
                                .map(|(x, w)| {
                                    let u = self.eval_vector(mesh, t, x);
                                    w * (u[0] * u[0] + u[1] * u[1])
                                })
                                .sum::<f64>()
                    })
                    .sum::<f64>()
                    .sqrt()
            }
            SpaceKind::P1 => {
                let rule = TriangleRule::of_order(2);
                (0..mesh.n_triangles())
                    .map(|t| {
                        mesh.areas[t]
                            * rule
                                .points
                                .iter()
                                .zip(&rule.weights)
                                .map(|(l, w)| w * self.eval_scalar(mesh, t, *l).powi(2))
                                .sum::<f64>()
                    })
                    .sum::<f64>()
                    .sqrt()
            }
        }
    }

    pub fn min(&self) -> f64 {
        self.coeffs.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.coeffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}
