//! `key = value` configuration files with `[section]` headers.
//!
//! ```text
//! [physics]
//! a = 1
//! gamma = 1.4
//! mu = 1
//! lambda = 0
//! rho0 = 1 + 0.9*sin(pi*x)*sin(pi*y)
//! force_x = 0
//! force_y = -1
//!
//! [mesh]
//! n = 8
//!
//! [time]
//! T = 0.5
//! courant = 0.5
//!
//! [scheme]
//! name = cr
//! bc = navier
//! ```
//!
//! `#` and `;` start comments. Errors name the line and key.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::mesh::Rect;
use crate::momentum_cr::BoundaryMode;
use crate::solver::{Config, MeshSpec, Scheme, TimeStep};

const SECTIONS: [&str; 6] = ["physics", "mesh", "time", "scheme", "solver", "output"];

struct Entry {
    line: usize,
    value: String,
}

fn perr(line: usize, key: &str, message: impl Into<String>) -> Error {
    Error::Parse { line, key: key.to_string(), message: message.into() }
}

/// Section-qualified entries in file order.
struct Entries {
    map: HashMap<String, Entry>,
    /// Keys not yet consumed; anything left over is unknown.
    pending: Vec<(usize, String)>,
}

impl Entries {
    fn lex(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        let mut pending = Vec::new();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split(['#', ';']).next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| perr(line, body, "unterminated section header"))?
                    .trim()
                    .to_ascii_lowercase();
                if !SECTIONS.contains(&name.as_str()) {
                    return Err(perr(line, &name, format!("unknown section; expected one of {}", SECTIONS.join(", "))));
                }
                section = Some(name);
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| perr(line, body, "expected `key = value`"))?;
            let key = key.trim();
            let sec = section.as_deref().ok_or_else(|| perr(line, key, "key outside of any section"))?;
            let full = format!("{sec}.{key}");
            if let Some(prev) = map.get(&full) {
                let prev: &Entry = prev;
                return Err(perr(line, &full, format!("duplicate key (first set on line {})", prev.line)));
            }
            pending.push((line, full.clone()));
            map.insert(full, Entry { line, value: value.trim().to_string() });
        }
        Ok(Self { map, pending })
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        let e = self.map.get(key)?;
        self.pending.retain(|(_, k)| k != key);
        Some((e.line, e.value.clone()))
    }

    fn line_of(&self, key: &str) -> usize {
        self.map.get(key).map_or(0, |e| e.line)
    }

    fn has(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Result<Option<(usize, T)>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<T>()
                .map(|x| Some((line, x)))
                .map_err(|_| perr(line, key, format!("expected {what}, found `{v}`"))),
        }
    }

    fn float(&mut self, key: &str) -> Result<Option<(usize, f64)>> {
        match self.parsed::<f64>(key, "a number")? {
            Some((line, v)) if !v.is_finite() => Err(perr(line, key, "value must be finite")),
            other => Ok(other),
        }
    }

    fn uint(&mut self, key: &str) -> Result<Option<(usize, usize)>> {
        self.parsed::<usize>(key, "a nonnegative integer")
    }

    fn boolean(&mut self, key: &str) -> Result<Option<(usize, bool)>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => match v.to_ascii_lowercase().as_str() {
                "true" | "yes" | "on" | "1" => Ok(Some((line, true))),
                "false" | "no" | "off" | "0" => Ok(Some((line, false))),
                _ => Err(perr(line, key, format!("expected true or false, found `{v}`"))),
            },
        }
    }

    fn field(&mut self, key: &str) -> Result<Option<ScalarField>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => ScalarField::parse(&v).map(Some).map_err(|e| perr(line, key, e.to_string())),
        }
    }
}

fn check(ok: bool, line: usize, key: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(perr(line, key, message))
    }
}

/// Parses and validates a configuration. Relative mesh paths are kept as
/// written; see [`parse_config_file`] for resolution against the file.
pub fn parse_config(text: &str) -> Result<Config> {
    parse_with_base(text, None)
}

/// Reads a configuration file; a relative `mesh.file` is resolved against
/// the directory containing it.
pub fn parse_config_file(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_with_base(&text, path.parent())
}

fn parse_with_base(text: &str, base: Option<&Path>) -> Result<Config> {
    let mut e = Entries::lex(text)?;
    let mut c = Config::default();

    // [physics]
    if let Some((l, v)) = e.float("physics.a")? {
        check(v > 0.0, l, "physics.a", "pressure coefficient a must be positive")?;
        c.a = v;
    }
    if let Some((l, v)) = e.float("physics.gamma")? {
        check(v >= 1.0, l, "physics.gamma", "adiabatic exponent must satisfy γ ≥ 1")?;
        c.gamma = v;
    }
    if let Some((l, v)) = e.float("physics.mu")? {
        check(v > 0.0, l, "physics.mu", "shear viscosity μ must be positive")?;
        c.mu = v;
    }
    if let Some((l, v)) = e.float("physics.lambda")? {
        check(2.0 * v + 2.0 * c.mu >= 0.0, l, "physics.lambda", "viscosities must satisfy 2λ + 2μ ≥ 0")?;
        c.lambda = v;
    }
    if let Some((l, v)) = e.float("physics.epsilon")? {
        check(v > 0.0, l, "physics.epsilon", "penalty exponent ε must be positive")?;
        c.epsilon = v;
    }
    if let Some(f) = e.field("physics.rho0")? {
        c.rho0 = f;
    }
    if let Some(f) = e.field("physics.force_x")? {
        c.force.0 = f;
    }
    if let Some(f) = e.field("physics.force_y")? {
        c.force.1 = f;
    }
    c.source = e.field("physics.source")?;
    if let Some(f) = e.field("physics.u0_x")? {
        c.u0.0 = f;
    }
    if let Some(f) = e.field("physics.u0_y")? {
        c.u0.1 = f;
    }
    if let Some((l, v)) = e.float("physics.rho_bar")? {
        check(v > 0.0, l, "physics.rho_bar", "average density must be positive")?;
        c.rho_bar = Some(v);
    }

    // [mesh]
    if let Some((l, path)) = e.take("mesh.file") {
        for k in ["mesh.n", "mesh.nx", "mesh.ny"] {
            if e.has(k) {
                return Err(perr(l, "mesh.file", format!("cannot be combined with `{k}`")));
            }
        }
        let p = PathBuf::from(path);
        c.mesh = MeshSpec::File(match base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p,
        });
    } else {
        let n = e.uint("mesh.n")?.map(|x| x.1).unwrap_or(8);
        let nx = e.uint("mesh.nx")?;
        let ny = e.uint("mesh.ny")?;
        let mut rect = Rect::UNIT;
        for (key, slot) in [("mesh.x0", 0), ("mesh.x1", 1), ("mesh.y0", 2), ("mesh.y1", 3)] {
            if let Some((_, v)) = e.float(key)? {
                match slot {
                    0 => rect.x0 = v,
                    1 => rect.x1 = v,
                    2 => rect.y0 = v,
                    _ => rect.y1 = v,
                }
            }
        }
        let (nx, ny) = (nx.map_or(n, |x| x.1), ny.map_or(n, |x| x.1));
        for (key, v) in [("mesh.nx", nx), ("mesh.ny", ny)] {
            let line = e.line_of(key).max(e.line_of("mesh.n"));
            check(v > 0, line, key, "need at least one cell per direction")?;
        }
        let rect_line = ["mesh.x0", "mesh.x1", "mesh.y0", "mesh.y1"].iter().map(|k| e.line_of(k)).max().unwrap_or(0);
        check(rect.x1 > rect.x0 && rect.y1 > rect.y0, rect_line, "mesh.x1", "domain must have x1 > x0 and y1 > y0")?;
        c.mesh = MeshSpec::Structured { nx, ny, rect };
    }

    // [time]
    let t = match (e.float("time.T")?, e.float("time.t_final")?) {
        (Some(_), Some((l, _))) => return Err(perr(l, "time.t_final", "final time given twice (also as `T`)")),
        (a, b) => a.or(b),
    };
    if let Some((l, v)) = t {
        check(v > 0.0, l, "time.T", "final time must be positive")?;
        c.t_final = v;
    }
    match (e.float("time.courant")?, e.float("time.dt")?) {
        (Some(_), Some((l, _))) => return Err(perr(l, "time.dt", "give either `courant` or `dt`, not both")),
        (Some((l, v)), None) => {
            check(v > 0.0, l, "time.courant", "Courant constant must be positive")?;
            c.time_step = TimeStep::Courant(v);
        }
        (None, Some((l, v))) => {
            check(v > 0.0, l, "time.dt", "time step must be positive")?;
            c.time_step = TimeStep::Fixed(v);
        }
        (None, None) => {}
    }

    // [scheme]
    if let Some((l, v)) = e.take("scheme.name") {
        c.scheme = Scheme::parse(&v.to_ascii_lowercase()).ok_or_else(|| {
            perr(l, "scheme.name", format!("unknown scheme `{v}`; expected cr, mixed or stokes_approx"))
        })?;
    }
    if let Some((l, v)) = e.take("scheme.bc") {
        c.bc = match v.to_ascii_lowercase().as_str() {
            "navier" => BoundaryMode::Navier,
            "dirichlet" => BoundaryMode::Dirichlet,
            _ => {
                return Err(perr(
                    l,
                    "scheme.bc",
                    format!("unknown boundary condition `{v}`; expected navier or dirichlet"),
                ))
            }
        };
    }
    if c.scheme != Scheme::Cr && c.bc == BoundaryMode::Dirichlet {
        let (l, key) = if e.line_of("scheme.bc") >= e.line_of("scheme.name") {
            (e.line_of("scheme.bc"), "scheme.bc")
        } else {
            (e.line_of("scheme.name"), "scheme.name")
        };
        return Err(perr(
            l,
            key,
            format!("scheme {} is restricted to the case of the Navier-slip boundary condition", c.scheme.name()),
        ));
    }

    // [solver]
    if let Some((l, v)) = e.float("solver.picard_tol")? {
        check(v > 0.0, l, "solver.picard_tol", "tolerance must be positive")?;
        c.picard.tol = v;
    }
    if let Some((l, v)) = e.uint("solver.picard_max_iter")? {
        check(v > 0, l, "solver.picard_max_iter", "need at least one iteration")?;
        c.picard.max_iter = v;
    }
    if let Some((l, v)) = e.float("solver.theta")? {
        check(v > 0.0 && v <= 1.0, l, "solver.theta", "relaxation must lie in (0, 1]")?;
        c.picard.theta = v;
    }
    if let Some((_, v)) = e.boolean("solver.halve_dt")? {
        c.picard.halve_dt = v;
    }
    if let Some((_, v)) = e.uint("solver.max_halvings")? {
        c.picard.max_halvings = v;
    }
    if let Some((l, v)) = e.float("solver.linear_tol")? {
        check(v > 0.0 && v < 1.0, l, "solver.linear_tol", "tolerance must lie in (0, 1)")?;
        c.linear_tol = v;
    }
    if let Some((l, v)) = e.float("solver.mass_tol")? {
        check(v >= 0.0, l, "solver.mass_tol", "tolerance must be nonnegative")?;
        c.invariants.mass = v;
    }

    // [output]
    if let Some((_, v)) = e.take("output.dir") {
        c.output.dir = Some(PathBuf::from(v));
    }
    if let Some((_, v)) = e.uint("output.vtk_every")? {
        c.output.vtk_every = v;
    }
    if let Some((_, v)) = e.boolean("output.vtk")? {
        c.output.vtk = v;
    }
    if let Some((_, v)) = e.boolean("output.csv")? {
        c.output.csv = v;
    }

    if let Some((line, key)) = e.pending.first() {
        return Err(perr(*line, key, "unknown key"));
    }
    // Remaining cross-field invariants.
    c.validate().map_err(|err| perr(0, "config", err.to_string()))?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
[physics]
gamma = 1.4
a = 1
mu = 1
lambda = 0

[mesh]
n = 8

[time]
T = 0.5
courant = 0.5

[scheme]
name = cr
bc = navier
";

    fn parse_err(text: &str) -> (usize, String, String) {
        match parse_config(text).unwrap_err() {
            Error::Parse { line, key, message } => (line, key, message),
            e => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn minimal_file() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!((c.gamma, c.a, c.mu, c.lambda, c.t_final), (1.4, 1.0, 1.0, 0.0, 0.5));
        assert_eq!(c.scheme, Scheme::Cr);
        assert_eq!(c.bc, BoundaryMode::Navier);
        let mesh = c.mesh.build().unwrap();
        assert_eq!(mesh.n_triangles(), 128);
        let g = c.time_grid(mesh.h_max);
        assert_eq!(g.nominal, 0.5 * mesh.h_max);
    }

    #[test]
    fn mixed_with_dirichlet_is_rejected() {
        let (line, key, msg) = parse_err("[scheme]\nname = mixed\nbc = dirichlet\n");
        assert_eq!((line, key.as_str()), (3, "scheme.bc"));
        assert!(msg.contains("Navier-slip"), "{msg}");
    }

    #[test]
    fn small_gamma_is_rejected() {
        let (line, key, _) = parse_err("# header\n[physics]\ngamma = 0.9\n");
        assert_eq!((line, key.as_str()), (3, "physics.gamma"));
    }

    #[test]
    fn malformed_inputs_are_diagnosed() {
        assert_eq!(parse_err("[physics]\nfoo = 1\n").1, "physics.foo");
        assert_eq!(parse_err("[physics]\nmu = abc\n").0, 2);
        assert_eq!(parse_err("[bogus]\n").1, "bogus");
        assert_eq!(parse_err("mu = 1\n").1, "mu");
        assert_eq!(parse_err("[physics]\nmu\n").0, 2);
        assert_eq!(parse_err("[physics]\nmu = 1\nmu = 2\n").0, 3);
        assert_eq!(parse_err("[time]\ncourant = 0.5\ndt = 0.1\n").1, "time.dt");
        assert_eq!(parse_err("[physics]\nrho0 = 1 + z\n").1, "physics.rho0");
        assert_eq!(parse_err("[output]\nvtk = maybe\n").1, "output.vtk");
        assert_eq!(parse_err("[mesh]\nn = 0\n").1, "mesh.nx");
        assert_eq!(parse_err("[physics]\nmu = 1\nlambda = -1.5\n").1, "physics.lambda");
    }

    #[test]
    fn expressions_comments_and_paths() {
        let c = parse_config(
            "[physics] ; trailing\nrho0 = 1 + 0.9*sin(pi*x)*sin(pi*y)  # bump\nforce_y = -t\n[time]\ndt = 0.01\n[output]\ncsv = false\n",
        )
        .unwrap();
        assert!((c.rho0.eval(0.0, [0.5, 0.5]) - 1.9).abs() < 1e-15);
        assert_eq!(c.force.eval(2.0, [0.0, 0.0]), [0.0, -2.0]);
        assert_eq!(c.time_step, TimeStep::Fixed(0.01));
        assert!(!c.output.csv);
        let c = parse_with_base("[mesh]\nfile = m.txt\n", Some(Path::new("/data"))).unwrap();
        assert_eq!(c.mesh, MeshSpec::File(PathBuf::from("/data/m.txt")));
    }

    #[test]
    fn arbitrary_text_never_panics() {
        use proptest::prelude::*;
        proptest!(|(s in "[\\[\\]a-z_=#;. 0-9\n-]{0,80}")| {
            let _ = parse_config(&s);
        });
    }
}
