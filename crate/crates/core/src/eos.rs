//! Barotropic pressure law `p(ϱ) = a ϱ^γ` and its elastic energy density.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PressureLaw {
    pub a: f64,
    pub gamma: f64,
}

impl PressureLaw {
    pub fn new(a: f64, gamma: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::invalid(format!("pressure coefficient a = {a} must be positive")));
        }
        if !(gamma >= 1.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!("adiabatic exponent γ = {gamma} must be at least 1")));
        }
        Ok(Self { a, gamma })
    }

    /// Unchecked evaluation for hot loops; `rho` must be nonnegative.
    pub fn p(&self, rho: f64) -> f64 {
        self.a * rho.powf(self.gamma)
    }

    /// `P` with `ϱP' − P = p`: `aϱ^γ/(γ−1)`, or `aϱ log ϱ` when `γ = 1`.
    pub fn energy_density(&self, rho: f64) -> f64 {
        if self.gamma == 1.0 {
            if rho == 0.0 {
                0.0
            } else {
                self.a * rho * rho.ln()
            }
        } else {
            self.a * rho.powf(self.gamma) / (self.gamma - 1.0)
        }
    }

    /// `P'(ϱ)`; requires `ϱ > 0` when `γ = 1`.
    pub fn energy_derivative(&self, rho: f64) -> f64 {
        if self.gamma == 1.0 {
            self.a * (rho.ln() + 1.0)
        } else {
            self.a * self.gamma * rho.powf(self.gamma - 1.0) / (self.gamma - 1.0)
        }
    }
}

pub fn pressure(rho: f64, a: f64, gamma: f64) -> Result<f64> {
    check_density(rho)?;
    Ok(PressureLaw::new(a, gamma)?.p(rho))
}

pub fn elastic_energy(rho: f64, a: f64, gamma: f64) -> Result<f64> {
    check_density(rho)?;
    Ok(PressureLaw::new(a, gamma)?.energy_density(rho))
}

fn check_density(rho: f64) -> Result<()> {
    if rho >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("density {rho} is negative")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn formula_values() {
        assert_eq!(pressure(3.0, 1.0, 2.0).unwrap(), 9.0);
        assert_eq!(elastic_energy(3.0, 1.0, 2.0).unwrap(), 9.0);
        assert!((pressure(1.0, 2.0, 1.4).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(elastic_energy(1.0, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(elastic_energy(0.0, 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn invalid_arguments() {
        assert!(pressure(-1.0, 1.0, 2.0).is_err());
        assert!(pressure(1.0, 0.0, 2.0).is_err());
        assert!(elastic_energy(1.0, 1.0, 0.9).is_err());
    }

    proptest! {
        #[test]
        fn energy_satisfies_legendre_relation(rho in 0.01f64..10.0, gamma in 1.0f64..3.0) {
            let law = PressureLaw::new(1.3, gamma).unwrap();
            let lhs = rho * law.energy_derivative(rho) - law.energy_density(rho);
            prop_assert!((lhs - law.p(rho)).abs() <= 1e-10 * law.p(rho).max(1.0));
        }

        #[test]
        fn energy_is_convex(x in 0.01f64..5.0, y in 0.01f64..5.0, gamma in 1.0f64..3.0) {
            let law = PressureLaw::new(1.0, gamma).unwrap();
            let mid = law.energy_density(0.5 * (x + y));
            prop_assert!(mid <= 0.5 * (law.energy_density(x) + law.energy_density(y)) + 1e-12);
        }
    }
}
