use std::f64::consts::PI;

use stokesfem::diagnostics::{weak_residual, ScalarTest, VectorTest};
use stokesfem::fields::{ScalarField, VectorField};
use stokesfem::solver::{run, Config, MeshSpec, RunOutput, Scheme};

const T: f64 = 0.25;

fn chi(t: f64) -> f64 {
    1.0 - t / T
}

fn ok(cfg: Config) -> RunOutput {
    run(cfg).unwrap_or_else(|f| panic!("{f}"))
}

// v = χ(t) (sin πx · y(1−y), 0): tangential on the unit square.
fn v_val(t: f64, x: [f64; 2]) -> [f64; 2] {
    [chi(t) * (PI * x[0]).sin() * x[1] * (1.0 - x[1]), 0.0]
}
fn v_curl(t: f64, x: [f64; 2]) -> f64 {
    -chi(t) * (PI * x[0]).sin() * (1.0 - 2.0 * x[1])
}
fn v_div(t: f64, x: [f64; 2]) -> f64 {
    chi(t) * PI * (PI * x[0]).cos() * x[1] * (1.0 - x[1])
}

fn tests() -> (ScalarTest<'static>, VectorTest<'static>) {
    (
        ScalarTest { value: &|t, _| chi(t), grad: &|_, _| [0.0, 0.0] },
        VectorTest { value: &v_val, curl: &v_curl, div: &v_div },
    )
}

fn base(scheme: Scheme, n: usize) -> Config {
    Config { scheme, mesh: MeshSpec::unit_square(n), t_final: T, gamma: 2.0, ..Config::default() }
}

#[test]
fn time_cutoff_reduces_to_mass_conservation() {
    for scheme in [Scheme::Cr, Scheme::Mixed, Scheme::StokesApprox] {
        let cfg = Config {
            rho0: ScalarField::parse("1 + 0.9*sin(pi*x)*sin(pi*y)").unwrap(),
            force: VectorField(ScalarField::parse("y - 0.5").unwrap(), ScalarField::Constant(0.0)),
            ..base(scheme, 4)
        };
        let out = ok(cfg);
        let (phi, v) = tests();
        let r = weak_residual(&out, &phi, &v).unwrap();
        assert!(r.continuity <= 1e-12, "{scheme:?}: {r:?}");
    }
}

#[test]
fn rest_state_has_zero_momentum_residual() {
    for scheme in [Scheme::Cr, Scheme::Mixed, Scheme::StokesApprox] {
        let out = ok(Config { rho0: ScalarField::Constant(1.7), ..base(scheme, 4) });
        // Polynomial field: ∫ p div v = 0 is reproduced exactly by quadrature.
        let (phi, _) = tests();
        let v = VectorTest {
            value: &|t, x| [chi(t) * x[0] * (1.0 - x[0]) * (1.0 + x[1]), 0.0],
            curl: &|t, x| -chi(t) * x[0] * (1.0 - x[0]),
            div: &|t, x| chi(t) * (1.0 - 2.0 * x[0]) * (1.0 + x[1]),
        };
        let r = weak_residual(&out, &phi, &v).unwrap();
        assert!(r.momentum <= 1e-13 && r.continuity <= 1e-13, "{scheme:?}: {r:?}");
    }
}

fn star(x: [f64; 2]) -> f64 {
    2.0 + (PI * x[0]).sin() * (PI * x[1]).sin()
}

#[test]
fn stationary_solution_residual_decreases_with_h() {
    for scheme in [Scheme::Cr, Scheme::Mixed] {
        let mut res = Vec::new();
        for n in [4, 8, 16] {
            let cfg = Config {
                rho0: ScalarField::func(|_, x| star(x)),
                force: VectorField::func(|_, x| {
                    let r = star(x);
                    [
                        2.0 * r * PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
                        2.0 * r * PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
                    ]
                }),
                ..base(scheme, n)
            };
            let out = ok(cfg);
            let (phi, v) = tests();
            res.push(weak_residual(&out, &phi, &v).unwrap().momentum);
        }
        assert!(res.windows(2).all(|w| w[1] < w[0]), "{scheme:?}: {res:?}");
    }
}
