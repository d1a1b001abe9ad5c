use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::config_file::parse_config_file;
use super::convergence::{ladder_configs, run_ladder, self_convergence};
use super::output::{write_run, RunSummary};
use super::verify::{verify_suite, VerifyOptions};
use crate::error::{Error, Result};
use crate::solver::{run, Config};

#[derive(Debug, Parser)]
#[command(name = "stokesfem", version, about = "Compressible barotropic Stokes flow on triangulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one configuration.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Simulate a refinement ladder and print observed rates.
    Convergence {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Run the property suite on small meshes.
    Verify {
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Base mesh resolution.
        #[arg(long, default_value_t = 2)]
        n: usize,
    },
    /// Print mesh statistics.
    MeshInfo {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

enum Outcome {
    Passed,
    Failed,
}

fn load(config: Option<&Path>) -> Result<Config> {
    match config {
        Some(p) => parse_config_file(p),
        None => Ok(Config::default()),
    }
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::invalid(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn print_summary(out: &mut impl Write, s: &RunSummary) -> std::io::Result<()> {
    writeln!(out, "steps {}  dt {:.6e}  h {:.6e}", s.steps, s.dt, s.h_max)?;
    for w in &s.warnings {
        writeln!(out, "warning: {w}")?;
    }
    for c in &s.invariants {
        let tag = if c.passed { "pass" } else { "FAIL" };
        writeln!(out, "[{tag}] {:<18} {:.3e} (tolerance {:.1e})", c.name, c.value, c.tolerance)?;
    }
    if let Some(e) = &s.error {
        writeln!(out, "error: {e}")?;
    }
    Ok(())
}

fn do_run(config: Option<&Path>, out_dir: Option<&Path>, out: &mut impl Write) -> Result<Outcome> {
    let cfg = load(config)?;
    let dir = out_dir.map(Path::to_path_buf).or_else(|| cfg.output.dir.clone());
    let (output, error) = match run(cfg) {
        Ok(o) => (o, None),
        Err(f) => match f.partial {
            Some(p) => (*p, Some(format!("step {}: {}", f.step, f.error))),
            None => return Err(f.error),
        },
    };
    let summary = match &dir {
        Some(d) => write_run(&output, d, error)?,
        None => RunSummary::new(&output, Default::default(), error),
    };
    print_summary(out, &summary).map_err(|e| Error::io("<stdout>", e))?;
    Ok(if summary.passed() { Outcome::Passed } else { Outcome::Failed })
}

fn do_convergence(
    config: Option<&Path>,
    out_dir: Option<&Path>,
    levels: usize,
    out: &mut impl Write,
) -> Result<Outcome> {
    let mut base = load(config)?;
    if let Some(d) = out_dir {
        base.output.dir = Some(d.to_path_buf());
    }
    let configs = ladder_configs(&base, levels)?;
    let runs = run_ladder(&configs)?;
    let mut passed = true;
    let io = |e| Error::io("<stdout>", e);
    for (k, r) in runs.iter().enumerate() {
        let summary = match &r.config.output.dir {
            Some(d) => write_run(r, d, None)?,
            None => RunSummary::new(r, Default::default(), None),
        };
        passed &= summary.passed();
        writeln!(
            out,
            "level {k}: h = {:.5e}, {} steps, invariants {}",
            r.mesh.h_max,
            r.grid.steps,
            if summary.passed() { "pass" } else { "FAIL" }
        )
        .map_err(io)?;
    }
    let (rho, u) = self_convergence(&runs)?;
    writeln!(out, "density, successive differences\n{rho}velocity, successive differences\n{u}").map_err(io)?;
    if let Some(d) = out_dir {
        write_json(&d.join("rates.json"), &serde_json::json!({ "density": rho, "velocity": u }))?;
    }
    Ok(if passed { Outcome::Passed } else { Outcome::Failed })
}

fn do_verify(out_dir: Option<&Path>, seed: u64, n: usize, out: &mut impl Write) -> Result<Outcome> {
    let results = verify_suite(&VerifyOptions { n, seed, ..VerifyOptions::default() })?;
    let io = |e| Error::io("<stdout>", e);
    for r in &results {
        let tag = if r.passed { "pass" } else { "FAIL" };
        writeln!(out, "[{tag}] {:<22} {:.3e} (tolerance {:.1e}) {}", r.name, r.value, r.tolerance, r.detail)
            .map_err(io)?;
    }
    let ok = results.iter().filter(|r| r.passed).count();
    writeln!(out, "{ok}/{} properties passed", results.len()).map_err(io)?;
    if let Some(d) = out_dir {
        write_json(&d.join("verify.json"), &results)?;
    }
    Ok(if ok == results.len() { Outcome::Passed } else { Outcome::Failed })
}

fn do_mesh_info(config: Option<&Path>, out: &mut impl Write) -> Result<Outcome> {
    let mesh = load(config)?.mesh.build()?;
    let text = serde_json::to_string_pretty(&mesh.statistics()).map_err(|e| Error::invalid(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))?;
    Ok(Outcome::Passed)
}

/// Parses `args` (including the program name), runs the command, and
/// returns the process exit code: 0 on success, 1 when an assertion or the
/// command fails, 2 on usage errors.
pub fn cli<I, T>(args: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match &parsed.command {
        Command::Run { config, out_dir } => do_run(config.as_deref(), out_dir.as_deref(), out),
        Command::Convergence { config, out_dir, levels } => {
            do_convergence(config.as_deref(), out_dir.as_deref(), *levels, out)
        }
        Command::Verify { out_dir, seed, n } => do_verify(out_dir.as_deref(), *seed, *n, out),
        Command::MeshInfo { config } => do_mesh_info(config.as_deref(), out),
    };
    match result {
        Ok(Outcome::Passed) => 0,
        Ok(Outcome::Failed) => 1,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}
