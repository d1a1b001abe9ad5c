//! Conforming 2D triangulations with globally fixed edge normals.
//!
//! Every edge stores one unit normal `ν`. For interior edges `ν` is the left
//! normal of the edge traversed from its lower to its higher vertex index, and
//! the adjacent triangles are labelled so that `ν` points from `minus` into
//! `plus`. Boundary edges have `ν` pointing out of the domain and no `plus`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };

    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }
}

#[derive(Debug, Clone)]
pub struct Edge {
    /// Endpoints, lower index first.
    pub vertices: [usize; 2],
    pub normal: Point,
    /// `ν` rotated by +90°.
    pub tangent: Point,
    pub minus: usize,
    pub plus: Option<usize>,
    pub length: f64,
    pub midpoint: Point,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.plus.is_none()
    }

    /// Point on the edge at parameter `s ∈ [0,1]` measured from `vertices[0]`.
    pub fn point_at(&self, mesh: &Mesh, s: f64) -> Point {
        let a = mesh.vertices[self.vertices[0]];
        let b = mesh.vertices[self.vertices[1]];
        [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    /// Local edge `i` of a triangle is the one opposite local vertex `i`.
    pub triangle_edges: Vec<[usize; 3]>,
    /// `+1` where the triangle is the `minus` side of the edge (ν outward), else `-1`.
    pub triangle_edge_signs: Vec<[f64; 3]>,
    pub areas: Vec<f64>,
    pub boundary_vertex: Vec<bool>,
    pub h_max: f64,
    pub shape_regularity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MeshStatistics {
    pub h_max: f64,
    pub shape_regularity: f64,
    pub vertices: usize,
    pub edges: usize,
    pub triangles: usize,
    pub interior_vertices: usize,
    pub interior_edges: usize,
    pub area: f64,
}

impl Mesh {
    /// Uniform triangulation of `rect` with `nx × ny` cells, each split along
    /// its lower-left to upper-right diagonal. Within a cell the lower-right
    /// triangle precedes the upper-left one.
    pub fn build_structured(nx: usize, ny: usize, rect: Rect) -> Result<Mesh> {
        if nx == 0 || ny == 0 {
            return Err(Error::invalid("structured mesh needs nx, ny >= 1"));
        }
        if !(rect.width() > 0.0 && rect.height() > 0.0) || !rect.width().is_finite() || !rect.height().is_finite() {
            return Err(Error::invalid(format!("degenerate rectangle {rect:?}")));
        }
        let idx = |i: usize, j: usize| j * (nx + 1) + i;
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([
                    rect.x0 + rect.width() * i as f64 / nx as f64,
                    rect.y0 + rect.height() * j as f64 / ny as f64,
                ]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        Mesh::from_parts(vertices, triangles)
    }

    /// Builds the edge structure and validates the triangulation.
    pub fn from_parts(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Mesh> {
        if triangles.is_empty() {
            return Err(Error::invalid("mesh has no triangles"));
        }
        let mut areas = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::invalid(format!("triangle {t} references a missing vertex")));
            }
            let p = tri.map(|v| vertices[v]);
            let a = signed_area(&p);
            if !(a > 0.0) {
                return Err(Error::invalid(format!(
                    "triangle {t} is not counterclockwise or is degenerate (signed area {a:e})"
                )));
            }
            areas.push(a);
        }

        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut adjacency: Vec<Vec<usize>> = Vec::new();
        let mut endpoints: Vec<[usize; 2]> = Vec::new();
        let mut triangle_edges = vec![[0usize; 3]; triangles.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for i in 0..3 {
                let (a, b) = (tri[(i + 1) % 3], tri[(i + 2) % 3]);
                let key = (a.min(b), a.max(b));
                let e = *lookup.entry(key).or_insert_with(|| {
                    endpoints.push([key.0, key.1]);
                    adjacency.push(Vec::with_capacity(2));
                    endpoints.len() - 1
                });
                adjacency[e].push(t);
                triangle_edges[t][i] = e;
            }
        }

        let centroid = |t: usize| {
            let p = triangles[t].map(|v| vertices[v]);
            [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0]
        };
        let mut edges = Vec::with_capacity(endpoints.len());
        for (e, &[a, b]) in endpoints.iter().enumerate() {
            let (pa, pb) = (vertices[a], vertices[b]);
            let d = [pb[0] - pa[0], pb[1] - pa[1]];
            let length = d[0].hypot(d[1]);
            let mut normal = [-d[1] / length, d[0] / length];
            let midpoint = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            let outward_of = |t: usize, n: Point| {
                let c = centroid(t);
                n[0] * (midpoint[0] - c[0]) + n[1] * (midpoint[1] - c[1]) > 0.0
            };
            let (minus, plus) = match adjacency[e].as_slice() {
                &[t] => {
                    if !outward_of(t, normal) {
                        normal = [-normal[0], -normal[1]];
                    }
                    (t, None)
                }
                &[t0, t1] => {
                    if outward_of(t0, normal) {
                        (t0, Some(t1))
                    } else {
                        (t1, Some(t0))
                    }
                }
                other => return Err(Error::invalid(format!("edge ({a}, {b}) is shared by {} triangles", other.len()))),
            };
            edges.push(Edge {
                vertices: [a, b],
                normal,
                tangent: [-normal[1], normal[0]],
                minus,
                plus,
                length,
                midpoint,
            });
        }

        let triangle_edge_signs = triangle_edges
            .iter()
            .enumerate()
            .map(|(t, te)| te.map(|e| if edges[e].minus == t { 1.0 } else { -1.0 }))
            .collect();

        let mut boundary_vertex = vec![false; vertices.len()];
        for e in edges.iter().filter(|e| e.is_boundary()) {
            boundary_vertex[e.vertices[0]] = true;
            boundary_vertex[e.vertices[1]] = true;
        }

        let mut used = vec![false; vertices.len()];
        triangles.iter().flatten().for_each(|&v| used[v] = true);
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::invalid(format!("vertex {v} belongs to no triangle")));
        }
        let euler = vertices.len() as i64 - edges.len() as i64 + triangles.len() as i64;
        if euler != 1 {
            return Err(Error::invalid(format!("triangulation is not simply connected (V - E + T = {euler})")));
        }

        let mut h_max: f64 = 0.0;
        let mut shape_regularity = f64::INFINITY;
        for (t, tri) in triangles.iter().enumerate() {
            let lengths = triangle_edges[t].map(|e| edges[e].length);
            let diameter = lengths.iter().cloned().fold(0.0, f64::max);
            let inradius = 2.0 * areas[t] / lengths.iter().sum::<f64>();
            h_max = h_max.max(diameter);
            shape_regularity = shape_regularity.min(inradius / diameter);
            let _ = tri;
        }

        Ok(Mesh {
            vertices,
            triangles,
            edges,
            triangle_edges,
            triangle_edge_signs,
            areas,
            boundary_vertex,
            h_max,
            shape_regularity,
        })
    }

    /// Splits every triangle into four congruent children by joining edge
    /// midpoints. Child `4t + k` descends from triangle `t`; the fourth child
    /// is the medial triangle. Old vertices keep their indices and the
    /// midpoint of edge `e` becomes vertex `n_vertices + e`.
    pub fn refine_uniform(&self) -> Mesh {
        let nv = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend(self.edges.iter().map(|e| e.midpoint));
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for (t, tri) in self.triangles.iter().enumerate() {
            let m = self.triangle_edges[t].map(|e| nv + e);
            triangles.push([tri[0], m[2], m[1]]);
            triangles.push([m[2], tri[1], m[0]]);
            triangles.push([m[1], m[0], tri[2]]);
            triangles.push([m[0], m[1], m[2]]);
        }
        Mesh::from_parts(vertices, triangles).expect("refinement of a valid mesh is valid")
    }

    pub fn statistics(&self) -> MeshStatistics {
        MeshStatistics {
            h_max: self.h_max,
            shape_regularity: self.shape_regularity,
            vertices: self.vertices.len(),
            edges: self.edges.len(),
            triangles: self.triangles.len(),
            interior_vertices: self.boundary_vertex.iter().filter(|b| !**b).count(),
            interior_edges: self.edges.iter().filter(|e| !e.is_boundary()).count(),
            area: self.total_area(),
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn centroid(&self, t: usize) -> Point {
        let p = self.triangle_points(t);
        [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0]
    }

    /// Gradients of the three barycentric coordinates on triangle `t`.
    pub fn barycentric_gradients(&self, t: usize) -> [Point; 3] {
        let p = self.triangle_points(t);
        let two_area = 2.0 * self.areas[t];
        std::array::from_fn(|i| {
            let a = p[(i + 1) % 3];
            let b = p[(i + 2) % 3];
            [-(b[1] - a[1]) / two_area, (b[0] - a[0]) / two_area]
        })
    }

    /// Barycentric coordinates of `x` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, x: Point) -> [f64; 3] {
        let p = self.triangle_points(t);
        let g = self.barycentric_gradients(t);
        std::array::from_fn(|i| {
            let a = p[(i + 1) % 3];
            // λ_i vanishes on the opposite edge and is affine.
            g[i][0] * (x[0] - a[0]) + g[i][1] * (x[1] - a[1])
        })
    }

    /// Bounding box of all vertices.
    pub fn bounding_box(&self) -> Rect {
        let mut r = Rect::new(f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            r.x0 = r.x0.min(v[0]);
            r.x1 = r.x1.max(v[0]);
            r.y0 = r.y0.min(v[1]);
            r.y1 = r.y1.max(v[1]);
        }
        r
    }

    pub fn parse_text(text: &str) -> Result<Mesh> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let header = |lines: &mut dyn Iterator<Item = (usize, &str)>, name: &str| -> Result<usize> {
            let (no, l) = lines.next().ok_or_else(|| Error::invalid(format!("mesh file: missing `{name}` header")))?;
            let mut it = l.split_whitespace();
            match (it.next(), it.next().map(str::parse::<usize>), it.next()) {
                (Some(k), Some(Ok(n)), None) if k == name => Ok(n),
                _ => Err(Error::invalid(format!("mesh file line {no}: expected `{name} N`"))),
            }
        };
        let nv = header(&mut lines, "vertices")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (no, l) = lines.next().ok_or_else(|| Error::invalid("mesh file: truncated vertex list"))?;
            let vals: Vec<f64> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::invalid(format!("mesh file line {no}: bad coordinate")))?;
            if vals.len() != 2 {
                return Err(Error::invalid(format!("mesh file line {no}: expected `x y`")));
            }
            vertices.push([vals[0], vals[1]]);
        }
        let nt = header(&mut lines, "triangles")?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (no, l) = lines.next().ok_or_else(|| Error::invalid("mesh file: truncated triangle list"))?;
            let vals: Vec<usize> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::invalid(format!("mesh file line {no}: bad vertex index")))?;
            if vals.len() != 3 {
                return Err(Error::invalid(format!("mesh file line {no}: expected `i j k`")));
            }
            triangles.push([vals[0], vals[1], vals[2]]);
        }
        if let Some((no, _)) = lines.next() {
            return Err(Error::invalid(format!("mesh file line {no}: trailing content")));
        }
        Mesh::from_parts(vertices, triangles)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "vertices {}", self.vertices.len()).unwrap();
        for v in &self.vertices {
            writeln!(s, "{:.17e} {:.17e}", v[0], v[1]).unwrap();
        }
        writeln!(s, "triangles {}", self.triangles.len()).unwrap();
        for t in &self.triangles {
            writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
        }
        s
    }

    pub fn read(path: &Path) -> Result<Mesh> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Mesh::parse_text(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn signed_area(p: &[Point; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

/// Bucket grid for locating the triangle containing a point.
pub struct PointLocator<'a> {
    mesh: &'a Mesh,
    bbox: Rect,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let bbox = mesh.bounding_box();
        let n = ((mesh.n_triangles() as f64 / 2.0).sqrt().ceil() as usize).max(1);
        let (nx, ny) = (n, n);
        let mut buckets = vec![Vec::new(); nx * ny];
        let cell = |x: f64, lo: f64, w: f64, n: usize| (((x - lo) / w * n as f64).floor().max(0.0) as usize).min(n - 1);
        for t in 0..mesh.n_triangles() {
            let p = mesh.triangle_points(t);
            let (mut i0, mut i1, mut j0, mut j1) = (usize::MAX, 0, usize::MAX, 0);
            for q in &p {
                let i = cell(q[0], bbox.x0, bbox.width(), nx);
                let j = cell(q[1], bbox.y0, bbox.height(), ny);
                i0 = i0.min(i);
                i1 = i1.max(i);
                j0 = j0.min(j);
                j1 = j1.max(j);
            }
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(t);
                }
            }
        }
        Self { mesh, bbox, nx, ny, buckets }
    }

    /// Triangle containing `x` and the barycentric coordinates of `x` in it.
    pub fn locate(&self, x: Point) -> Option<(usize, [f64; 3])> {
        let tol = 1e-12;
        if x[0] < self.bbox.x0 - tol
            || x[0] > self.bbox.x1 + tol
            || x[1] < self.bbox.y0 - tol
            || x[1] > self.bbox.y1 + tol
        {
            return None;
        }
        let i =
            (((x[0] - self.bbox.x0) / self.bbox.width() * self.nx as f64).floor().max(0.0) as usize).min(self.nx - 1);
        let j =
            (((x[1] - self.bbox.y0) / self.bbox.height() * self.ny as f64).floor().max(0.0) as usize).min(self.ny - 1);
        self.buckets[j * self.nx + i].iter().find_map(|&t| {
            let l = self.mesh.barycentric(t, x);
            l.iter().all(|&v| v >= -tol).then_some((t, l))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(nx: usize, ny: usize) -> Mesh {
        Mesh::build_structured(nx, ny, Rect::UNIT).unwrap()
    }

    #[test]
    fn smallest_structured_mesh() {
        let m = unit(1, 1);
        let s = m.statistics();
        assert_eq!((s.vertices, s.edges, s.triangles), (4, 5, 2));
        assert_eq!(s.vertices as i64 - s.edges as i64 + s.triangles as i64, 1);
        assert!((s.h_max - 2f64.sqrt()).abs() < 1e-15);
        let expected = (1.0 - 2f64.sqrt() / 2.0) / 2f64.sqrt();
        assert!((s.shape_regularity - expected).abs() < 1e-15);
        assert!((s.shape_regularity - 0.2071).abs() < 1e-4);
    }

    #[test]
    fn counts_follow_the_construction_formula() {
        for (nx, ny) in [(2, 2), (3, 5), (7, 1)] {
            let m = unit(nx, ny);
            let s = m.statistics();
            assert_eq!(s.vertices, (nx + 1) * (ny + 1));
            assert_eq!(s.edges, 3 * nx * ny + nx + ny);
            assert_eq!(s.triangles, 2 * nx * ny);
        }
        let s = unit(2, 2).statistics();
        assert_eq!((s.vertices, s.edges, s.triangles), (9, 16, 8));
    }

    #[test]
    fn degenerate_rectangle_is_rejected() {
        let r = Mesh::build_structured(1, 1, Rect::new(0.0, 0.0, 0.0, 1.0));
        assert!(matches!(r, Err(Error::InvalidInput(_))));
        assert!(Mesh::build_structured(0, 1, Rect::UNIT).is_err());
    }

    #[test]
    fn refinement_halves_h_and_keeps_shape() {
        let m = unit(1, 1);
        let r1 = m.refine_uniform();
        assert_eq!(r1.n_triangles(), 8);
        assert!((r1.h_max - 2f64.sqrt() / 2.0).abs() < 1e-15);
        let r2 = r1.refine_uniform();
        assert_eq!(r2.n_triangles(), 32);
        assert!((r2.h_max - 2f64.sqrt() / 4.0).abs() < 1e-15);
        assert!((r2.shape_regularity - m.shape_regularity).abs() < 1e-12);
        assert!((r2.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_edge_orientation() {
        let m = unit(1, 1);
        let diag = m.edges.iter().find(|e| !e.is_boundary()).unwrap();
        assert_eq!(diag.vertices, [0, 3]);
        // ν points from the lower-right triangle into the upper-left one.
        assert_eq!((diag.minus, diag.plus), (0, Some(1)));
        assert!(diag.normal[0] < 0.0 && diag.normal[1] > 0.0);
    }

    #[test]
    fn text_round_trip_and_cw_rejection() {
        let m = unit(2, 3);
        let back = Mesh::parse_text(&m.to_text()).unwrap();
        assert_eq!(back.triangles, m.triangles);
        assert_eq!(back.vertices, m.vertices);
        let cw = "vertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 2 1\n";
        assert!(Mesh::parse_text(cw).is_err());
        let ccw = "vertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 2\n";
        assert_eq!(Mesh::parse_text(ccw).unwrap().n_edges(), 3);
        assert!(Mesh::parse_text("vertices 1\n0 0\n").is_err());
    }

    #[test]
    fn non_simply_connected_mesh_is_rejected() {
        // A ring of 8 triangles around a square hole.
        let v = vec![[0.0, 0.0], [3.0, 0.0], [3.0, 3.0], [0.0, 3.0], [1.0, 1.0], [2.0, 1.0], [2.0, 2.0], [1.0, 2.0]];
        let t = vec![[0, 1, 5], [0, 5, 4], [1, 2, 6], [1, 6, 5], [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7]];
        assert!(Mesh::from_parts(v, t).is_err());
    }

    #[test]
    fn locator_finds_centroids() {
        let m = unit(5, 4).refine_uniform();
        let loc = PointLocator::new(&m);
        for t in 0..m.n_triangles() {
            let (found, l) = loc.locate(m.centroid(t)).unwrap();
            assert_eq!(found, t);
            assert!(l.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
        }
        assert!(loc.locate([1.5, 0.5]).is_none());
    }

    fn check_invariants(m: &Mesh) {
        for (e, edge) in m.edges.iter().enumerate() {
            let n = edge.normal;
            assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-14);
            let c = m.centroid(edge.minus);
            let out = n[0] * (edge.midpoint[0] - c[0]) + n[1] * (edge.midpoint[1] - c[1]);
            assert!(out > 0.0, "edge {e}: ν not outward of E-");
            if let Some(p) = edge.plus {
                let c = m.centroid(p);
                let inw = n[0] * (edge.midpoint[0] - c[0]) + n[1] * (edge.midpoint[1] - c[1]);
                assert!(inw < 0.0, "edge {e}: ν not inward of E+");
            }
        }
        for t in 0..m.n_triangles() {
            assert!(m.areas[t] > 0.0);
            let mut s = [0.0, 0.0];
            for i in 0..3 {
                let e = &m.edges[m.triangle_edges[t][i]];
                let sg = m.triangle_edge_signs[t][i];
                s[0] += sg * e.length * e.normal[0];
                s[1] += sg * e.length * e.normal[1];
            }
            assert!(s[0].abs() < 1e-14 && s[1].abs() < 1e-14);
        }
        let b = m.edges.iter().filter(|e| e.is_boundary()).count();
        let i = m.n_edges() - b;
        assert_eq!(3 * m.n_triangles(), 2 * i + b);
        assert!(m.shape_regularity > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn structured_and_refined_meshes_satisfy_invariants(
            nx in 1usize..6, ny in 1usize..6,
            x0 in -2.0f64..2.0, w in 0.1f64..3.0, y0 in -2.0f64..2.0, h in 0.1f64..3.0,
        ) {
            let m = Mesh::build_structured(nx, ny, Rect::new(x0, x0 + w, y0, y0 + h)).unwrap();
            check_invariants(&m);
            let r = m.refine_uniform();
            check_invariants(&r);
            prop_assert!((r.total_area() - m.total_area()).abs() <= 1e-12 * m.total_area());
            prop_assert!((r.shape_regularity - m.shape_regularity).abs() < 1e-12);
            prop_assert!((r.h_max - 0.5 * m.h_max).abs() < 1e-12 * m.h_max);
        }
    }
}
