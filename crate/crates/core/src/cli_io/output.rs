use std::path::{Path, PathBuf};

use serde::Serialize;

use super::vtk::write_fields;
use crate::diagnostics::DiagnosticsRecord;
use crate::eos::PressureLaw;
use crate::error::{Error, Result};
use crate::solver::{InvariantCheck, RunOutput, Timings};

pub const CSV_HEADER: [&str; 11] = [
    "step",
    "time",
    "mass",
    "rho_min",
    "rho_max",
    "energy",
    "dissipation",
    "work",
    "flux_l2",
    "picard_iters",
    "residual",
];

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("{}: {other:?}", path.display())),
    }
}

fn g17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes one row per record; floats carry 17 significant digits.
pub fn write_diagnostics(records: &[DiagnosticsRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(CSV_HEADER).map_err(|e| csv_err(path, e))?;
    for r in records {
        let row = [
            r.step.to_string(),
            g17(r.time),
            g17(r.mass),
            g17(r.rho_min),
            g17(r.rho_max),
            g17(r.energy),
            g17(r.dissipation),
            g17(r.work),
            g17(r.flux_l2),
            r.picard_iters.to_string(),
            g17(r.residual),
        ];
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Columns of a diagnostics file, read back as numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl DiagnosticsTable {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let header = r.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let row = rec
                .iter()
                .map(|v| v.parse::<f64>().map_err(|_| Error::invalid(format!("{}: bad number `{v}`", path.display()))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OutputFiles {
    pub diagnostics: Option<PathBuf>,
    pub fields: Vec<PathBuf>,
    pub summary: Option<PathBuf>,
}

/// Machine-readable record of a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub config: serde_json::Value,
    pub steps: usize,
    pub dt: f64,
    pub h_max: f64,
    pub warnings: Vec<String>,
    pub invariants: Vec<InvariantCheck>,
    pub timings: Timings,
    pub files: OutputFiles,
    /// Set when the run stopped early.
    pub error: Option<String>,
}

impl RunSummary {
    pub fn new(out: &RunOutput, files: OutputFiles, error: Option<String>) -> Self {
        Self {
            config: serde_json::to_value(&out.config).unwrap_or(serde_json::Value::Null),
            steps: out.trajectory.states.len().saturating_sub(1),
            dt: out.grid.dt,
            h_max: out.mesh.h_max,
            warnings: out.warnings.clone(),
            invariants: out.invariants(),
            timings: out.timings,
            files,
            error,
        }
    }

    pub fn passed(&self) -> bool {
        self.error.is_none() && self.invariants.iter().all(|c| c.passed)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Writes the CSV, the selected field snapshots and `summary.json` into
/// `dir`, honouring the output settings of the run's configuration.
pub fn write_run(out: &RunOutput, dir: &Path, error: Option<String>) -> Result<RunSummary> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cfg = &out.config;
    let mut files = OutputFiles::default();
    if cfg.output.csv {
        let p = dir.join("diagnostics.csv");
        write_diagnostics(&out.records, &p)?;
        files.diagnostics = Some(p);
    }
    if cfg.output.vtk {
        let law = PressureLaw::new(cfg.a, cfg.gamma)?;
        let states = &out.trajectory.states;
        let last = states.len() - 1;
        for (m, s) in states.iter().enumerate() {
            let every = cfg.output.vtk_every;
            if m == last || (every > 0 && m % every == 0) {
                let p = dir.join(format!("fields_{m:05}.vtk"));
                write_fields(&p, &out.mesh, s, &law, cfg.mu, cfg.lambda)?;
                files.fields.push(p);
            }
        }
    }
    let p = dir.join("summary.json");
    files.summary = Some(p.clone());
    let summary = RunSummary::new(out, files, error);
    summary.write(&p)?;
    Ok(summary)
}
