use super::*;
use crate::solver::{run, Config, MeshSpec};

fn small_run() -> crate::solver::RunOutput {
    let cfg = Config { mesh: MeshSpec::unit_square(2), t_final: 0.2, ..Config::default() };
    run(cfg).unwrap_or_else(|f| panic!("{f}"))
}

#[test]
fn constant_state_files() {
    let out = small_run();
    let dir = tempfile::tempdir().unwrap();
    let summary = write_run(&out, dir.path(), None).unwrap();
    assert!(summary.passed());
    let table = DiagnosticsTable::read(summary.files.diagnostics.as_ref().unwrap()).unwrap();
    assert_eq!(table.header, CSV_HEADER);
    let mass = table.column("mass").unwrap();
    assert_eq!(mass.len(), out.grid.steps + 1);
    assert!(mass.iter().all(|m| *m == mass[0]));
    let last = summary.files.fields.last().unwrap();
    let g = VtkGrid::read(last).unwrap();
    let rho = g.cell_scalar("rho").unwrap();
    assert!(rho.iter().all(|r| *r == rho[0]));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    for k in ["config", "invariants", "timings", "files"] {
        assert!(json.get(k).is_some(), "{k}");
    }
    assert_eq!(json["invariants"].as_array().unwrap().len(), 4);
}

#[test]
fn empty_records_give_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    write_diagnostics(&[], &p).unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap(), CSV_HEADER.join(",") + "\n");
}

#[test]
fn csv_numbers_carry_seventeen_digits() {
    let out = small_run();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    write_diagnostics(&out.records, &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let row: Vec<&str> = text.lines().nth(2).unwrap().split(',').collect();
    let mantissa = row[2].split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17);
    let back = DiagnosticsTable::read(&p).unwrap();
    assert_eq!(back.rows[1][2], out.records[1].mass);
}

#[test]
fn vtk_round_trip_is_exact() {
    let cfg = Config {
        scheme: crate::solver::Scheme::Mixed,
        mesh: MeshSpec::unit_square(3),
        rho0: crate::fields::ScalarField::parse("1 + 0.5*x*y").unwrap(),
        t_final: 0.1,
        ..Config::default()
    };
    let out = run(cfg).unwrap_or_else(|f| panic!("{f}"));
    let law = crate::eos::PressureLaw::new(1.0, 1.4).unwrap();
    let g = VtkGrid::from_state(&out.mesh, out.trajectory.last(), &law, 1.0, 0.0).unwrap();
    assert_eq!(g.point_scalars.len(), 1);
    let text = g.to_text();
    let back = VtkGrid::parse(&text).unwrap();
    assert_eq!(back, g);
    assert_eq!(back.to_text(), text);
}

#[test]
fn vtk_parse_errors() {
    assert!(VtkGrid::parse("").is_err());
    assert!(VtkGrid::parse("# vtk DataFile Version 3.0\nt\nBINARY\n").is_err());
    assert!(VtkGrid::parse(
        "# vtk DataFile Version 3.0\nt\nASCII\nDATASET UNSTRUCTURED_GRID\nPOINTS 2 double\n0 0 0\n"
    )
    .is_err());
}

#[test]
fn io_errors_name_the_path() {
    let e = write_diagnostics(&[], std::path::Path::new("/nonexistent/dir/d.csv")).unwrap_err();
    assert!(e.to_string().contains("/nonexistent/dir/d.csv"), "{e}");
}

fn cli_run(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = cli(args.iter().copied(), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn cli_usage_errors() {
    assert_eq!(cli_run(&["stokesfem", "--bogus"]).0, 2);
    assert_eq!(cli_run(&["stokesfem", "frobnicate"]).0, 2);
    assert_eq!(cli_run(&["stokesfem", "run", "--unknown-flag"]).0, 2);
    assert_eq!(cli_run(&["stokesfem", "--help"]).0, 0);
}

#[test]
fn cli_run_and_mesh_info() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("eq.ini");
    std::fs::write(&cfg, "[mesh]\nn = 2\n[time]\nT = 0.2\n[physics]\nrho0 = 1.5\n").unwrap();
    let out_dir = dir.path().join("out");
    let (code, out, err) =
        cli_run(&["stokesfem", "run", "--config", cfg.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(code, 0, "{out}{err}");
    let table = DiagnosticsTable::read(&out_dir.join("diagnostics.csv")).unwrap();
    let m = table.column("mass").unwrap();
    assert!(m.iter().all(|v| ((v - m[0]) / m[0]).abs() <= 1e-13));
    let (code, out, _) = cli_run(&["stokesfem", "mesh-info", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.contains("\"triangles\": 8"), "{out}");
    std::fs::write(&cfg, "[physics]\ngamma = 0.5\n").unwrap();
    let (code, _, err) = cli_run(&["stokesfem", "run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("line 2"), "{err}");
}
