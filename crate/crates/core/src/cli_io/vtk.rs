//! Legacy-VTK ASCII unstructured grids.
//!
//! Velocities are written as cell data (values at centroids) because CR and
//! RT0 fields are not continuous across vertices; the vorticity of the mixed
//! schemes is P1 and goes into point data.

use std::fmt::Write as _;
use std::path::Path;

use crate::diagnostics::effective_viscous_flux;
use crate::eos::PressureLaw;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::solver::State;

const VTK_TRIANGLE: u8 = 5;

/// In-memory content of a legacy-VTK unstructured grid with scalar and
/// vector attributes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VtkGrid {
    pub title: String,
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub cell_types: Vec<u8>,
    pub cell_scalars: Vec<(String, Vec<f64>)>,
    pub cell_vectors: Vec<(String, Vec<[f64; 3]>)>,
    pub point_scalars: Vec<(String, Vec<f64>)>,
}

fn num(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

impl VtkGrid {
    pub fn from_state(mesh: &Mesh, state: &State, law: &PressureLaw, mu: f64, lambda: f64) -> Result<Self> {
        let flux = effective_viscous_flux(mesh, &state.rho, &state.velocity, law, mu, lambda)?;
        let velocity = (0..mesh.n_triangles())
            .map(|t| {
                let u = state.velocity.eval_vector(mesh, t, mesh.centroid(t));
                [u[0], u[1], 0.0]
            })
            .collect();
        let mut point_scalars = Vec::new();
        if let Some(w) = &state.vorticity {
            point_scalars.push(("vorticity".to_string(), w.coeffs().to_vec()));
        }
        Ok(Self {
            title: format!("stokesfem step {} time {:.16e}", state.step, state.time),
            points: mesh.vertices.iter().map(|p| [p[0], p[1], 0.0]).collect(),
            cells: mesh.triangles.iter().map(|t| t.to_vec()).collect(),
            cell_types: vec![VTK_TRIANGLE; mesh.n_triangles()],
            cell_scalars: vec![
                ("rho".to_string(), state.rho.coeffs().to_vec()),
                ("effective_viscous_flux".to_string(), flux.into_coeffs()),
            ],
            cell_vectors: vec![("velocity".to_string(), velocity)],
            point_scalars,
        })
    }

    pub fn cell_scalar(&self, name: &str) -> Option<&[f64]> {
        self.cell_scalars.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# vtk DataFile Version 3.0\n");
        s.push_str(&self.title.replace('\n', " "));
        s.push_str("\nASCII\nDATASET UNSTRUCTURED_GRID\n");
        let _ = writeln!(s, "POINTS {} double", self.points.len());
        for p in &self.points {
            for (k, v) in p.iter().enumerate() {
                if k > 0 {
                    s.push(' ');
                }
                num(&mut s, *v);
            }
            s.push('\n');
        }
        let size: usize = self.cells.iter().map(|c| c.len() + 1).sum();
        let _ = writeln!(s, "CELLS {} {}", self.cells.len(), size);
        for c in &self.cells {
            let _ = write!(s, "{}", c.len());
            for v in c {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "CELL_TYPES {}", self.cell_types.len());
        for t in &self.cell_types {
            let _ = writeln!(s, "{t}");
        }
        if !self.cell_scalars.is_empty() || !self.cell_vectors.is_empty() {
            let _ = writeln!(s, "CELL_DATA {}", self.cells.len());
            for (name, v) in &self.cell_scalars {
                scalars(&mut s, name, v);
            }
            for (name, v) in &self.cell_vectors {
                let _ = writeln!(s, "VECTORS {name} double");
                for x in v {
                    num(&mut s, x[0]);
                    s.push(' ');
                    num(&mut s, x[1]);
                    s.push(' ');
                    num(&mut s, x[2]);
                    s.push('\n');
                }
            }
        }
        if !self.point_scalars.is_empty() {
            let _ = writeln!(s, "POINT_DATA {}", self.points.len());
            for (name, v) in &self.point_scalars {
                scalars(&mut s, name, v);
            }
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses the subset of the format that [`VtkGrid::to_text`] produces.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let bad = |m: &str| Error::invalid(format!("malformed VTK file: {m}"));
        if !lines.next().is_some_and(|l| l.starts_with("# vtk DataFile")) {
            return Err(bad("missing version line"));
        }
        let mut g =
            VtkGrid { title: lines.next().ok_or_else(|| bad("missing title"))?.to_string(), ..Default::default() };
        if lines.next().map(str::trim) != Some("ASCII") {
            return Err(bad("only ASCII files are supported"));
        }
        let mut tokens = lines.flat_map(str::split_whitespace);
        let mut word = || tokens.next().ok_or_else(|| bad("unexpected end of file"));
        fn count(s: &str) -> Result<usize> {
            s.parse().map_err(|_| Error::invalid(format!("malformed VTK file: bad count `{s}`")))
        }
        fn float(s: &str) -> Result<f64> {
            s.parse().map_err(|_| Error::invalid(format!("malformed VTK file: bad number `{s}`")))
        }
        if (word()?, word()?) != ("DATASET", "UNSTRUCTURED_GRID") {
            return Err(bad("expected an unstructured grid"));
        }
        // Which attribute block we are in: true for cell data.
        let mut on_cells = true;
        while let Ok(kw) = word() {
            match kw {
                "POINTS" => {
                    let n = count(word()?)?;
                    word()?;
                    for _ in 0..n {
                        g.points.push([float(word()?)?, float(word()?)?, float(word()?)?]);
                    }
                }
                "CELLS" => {
                    let n = count(word()?)?;
                    word()?;
                    for _ in 0..n {
                        let k = count(word()?)?;
                        let c = (0..k).map(|_| count(word()?)).collect::<Result<Vec<_>>>()?;
                        g.cells.push(c);
                    }
                }
                "CELL_TYPES" => {
                    let n = count(word()?)?;
                    for _ in 0..n {
                        g.cell_types.push(word()?.parse().map_err(|_| bad("bad cell type"))?);
                    }
                }
                "CELL_DATA" | "POINT_DATA" => {
                    on_cells = kw == "CELL_DATA";
                    word()?;
                }
                "SCALARS" => {
                    let name = word()?.to_string();
                    word()?;
                    let mut next = word()?;
                    // Optional component count, then the lookup table line.
                    if next != "LOOKUP_TABLE" {
                        next = word()?;
                    }
                    if next != "LOOKUP_TABLE" {
                        return Err(bad("expected LOOKUP_TABLE"));
                    }
                    word()?;
                    let n = if on_cells { g.cells.len() } else { g.points.len() };
                    let v = (0..n).map(|_| float(word()?)).collect::<Result<Vec<_>>>()?;
                    if on_cells {
                        g.cell_scalars.push((name, v));
                    } else {
                        g.point_scalars.push((name, v));
                    }
                }
                "VECTORS" => {
                    let name = word()?.to_string();
                    word()?;
                    if !on_cells {
                        return Err(bad("point vectors are not supported"));
                    }
                    let v = (0..g.cells.len())
                        .map(|_| Ok([float(word()?)?, float(word()?)?, float(word()?)?]))
                        .collect::<Result<Vec<_>>>()?;
                    g.cell_vectors.push((name, v));
                }
                other => return Err(bad(&format!("unexpected keyword `{other}`"))),
            }
        }
        Ok(g)
    }
}

fn scalars(s: &mut String, name: &str, v: &[f64]) {
    let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
    for x in v {
        num(s, *x);
        s.push('\n');
    }
}

/// Writes the fields of `state` to `path`.
pub fn write_fields(path: &Path, mesh: &Mesh, state: &State, law: &PressureLaw, mu: f64, lambda: f64) -> Result<()> {
    VtkGrid::from_state(mesh, state, law, mu, lambda)?.write(path)
}
