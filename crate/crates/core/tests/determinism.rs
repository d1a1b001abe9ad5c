use stokesfem::cli_io::{ladder_configs, run_ladder_with};
use stokesfem::fespace::{DofMap, SpaceKind};
use stokesfem::fields::{ScalarField, VectorField};
use stokesfem::mesh::{Mesh, Rect};
use stokesfem::momentum_cr::{assemble_cr_operator_with, BoundaryMode, CrParams};
use stokesfem::par::Execution;
use stokesfem::solver::{run, Config, MeshSpec, Scheme};

fn forced(scheme: Scheme) -> Config {
    Config {
        scheme,
        mesh: MeshSpec::unit_square(4),
        t_final: 0.2,
        rho0: ScalarField::parse("1 + 0.8*x*y*(1-x)*(1-y)*16").unwrap(),
        force: VectorField(ScalarField::parse("sin(pi*y)").unwrap(), ScalarField::parse("x - 0.5").unwrap()),
        ..Config::default()
    }
}

#[test]
fn assembly_is_bit_identical_across_modes() {
    let mesh = Mesh::build_structured(12, 7, Rect::new(0.0, 2.0, -1.0, 0.5)).unwrap();
    for boundary in [BoundaryMode::Navier, BoundaryMode::Dirichlet] {
        let params = CrParams { mu: 0.7, lambda: 0.3, epsilon: 0.1, boundary };
        let dofs = DofMap::new(&mesh, SpaceKind::Cr, boundary.cr_constraint()).unwrap();
        let a = assemble_cr_operator_with(&mesh, &dofs, &params, Execution::Sequential).unwrap();
        let b = assemble_cr_operator_with(&mesh, &dofs, &params, Execution::Parallel).unwrap();
        assert_eq!(a.matrix, b.matrix);
        assert_eq!(a.penalty, b.penalty);
    }
}

#[test]
fn repeated_runs_are_bit_identical() {
    for scheme in [Scheme::Cr, Scheme::Mixed, Scheme::StokesApprox] {
        let a = run(forced(scheme)).unwrap_or_else(|f| panic!("{f}"));
        let b = run(forced(scheme)).unwrap_or_else(|f| panic!("{f}"));
        assert_eq!(a.trajectory.last().rho, b.trajectory.last().rho);
        assert_eq!(a.trajectory.last().velocity, b.trajectory.last().velocity);
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.energy.to_bits(), y.energy.to_bits());
            assert_eq!(x.picard_iters, y.picard_iters);
        }
    }
}

#[test]
fn ladder_results_do_not_depend_on_execution() {
    let configs = ladder_configs(&forced(Scheme::Cr), 3).unwrap();
    let seq = run_ladder_with(&configs, Execution::Sequential).unwrap();
    let par = run_ladder_with(&configs, Execution::Parallel).unwrap();
    for (a, b) in seq.iter().zip(&par) {
        assert_eq!(a.trajectory.last().rho, b.trajectory.last().rho);
        assert_eq!(a.records.len(), b.records.len());
    }
}
