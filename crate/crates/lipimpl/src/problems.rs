//! Named built-in test problems, addressable from the CLI.

use nalgebra::{DMatrix, DVector};

use crate::dryfriction::{Forcing, OscillatorSpec};
use crate::error::{Error, Result};
use crate::implicit::{ImplicitProblem, SolverConfig};
use crate::perturb::PerturbedFamily;

/// Names accepted by [`implicit_problem`].
pub const IMPLICIT_NAMES: &[&str] = &["affine", "cubic", "trig"];

/// `F(x, y) = y - x` at `(0, 0)`; the solution map is the identity.
pub fn affine(config: &SolverConfig) -> Result<ImplicitProblem> {
    ImplicitProblem::builder(
        |x, y| DVector::from_vec(vec![y[0] - x[0]]),
        DVector::from_vec(vec![0.0]),
        DVector::from_vec(vec![0.0]),
        2.0,
    )
    .jac_y(|_, _| DMatrix::from_element(1, 1, 1.0))
    .jac_x(|_, _| DMatrix::from_element(1, 1, -1.0))
    .build(config)
}

pub fn affine_config() -> SolverConfig {
    SolverConfig::default()
}

/// `F(x, y) = y^3 + y - x` at `(0, 0)`; strictly monotone in `y`, so the
/// solution map is globally single-valued.
pub fn cubic(config: &SolverConfig) -> Result<ImplicitProblem> {
    ImplicitProblem::builder(
        |x, y| DVector::from_vec(vec![y[0] * y[0] * y[0] + y[0] - x[0]]),
        DVector::from_vec(vec![0.0]),
        DVector::from_vec(vec![0.0]),
        2.0,
    )
    .jac_y(|_, y| DMatrix::from_element(1, 1, 3.0 * y[0] * y[0] + 1.0))
    .jac_x(|_, _| DMatrix::from_element(1, 1, -1.0))
    .build(config)
}

pub fn cubic_config() -> SolverConfig {
    SolverConfig {
        alpha: 1.0,
        beta: 2.0,
        ..SolverConfig::default()
    }
}

/// `F(v, t) = v1 cos t + v2 sin t` solved for `t`, anchored at
/// `((1, 0), pi/2)`. The parameter is the two-dimensional `v`.
pub fn trig(config: &SolverConfig) -> Result<ImplicitProblem> {
    ImplicitProblem::builder(
        |v, t| DVector::from_vec(vec![v[0] * t[0].cos() + v[1] * t[0].sin()]),
        DVector::from_vec(vec![1.0, 0.0]),
        DVector::from_vec(vec![std::f64::consts::FRAC_PI_2]),
        1.0,
    )
    .jac_y(|v, t| DMatrix::from_element(1, 1, -v[0] * t[0].sin() + v[1] * t[0].cos()))
    .jac_x(|_, t| DMatrix::from_fn(1, 2, |_, j| if j == 0 { t[0].cos() } else { t[0].sin() }))
    .build(config)
}

pub fn trig_config() -> SolverConfig {
    SolverConfig::default()
}

/// Looks up a built-in implicit problem by name.
pub fn implicit_problem(name: &str, config: &SolverConfig) -> Result<ImplicitProblem> {
    match name {
        "affine" => affine(config),
        "cubic" => cubic(config),
        "trig" => trig(config),
        other => Err(Error::InvalidProblem(format!(
            "unknown built-in problem '{other}' (expected one of {IMPLICIT_NAMES:?})"
        ))),
    }
}

/// Default config paired with a built-in implicit problem.
pub fn implicit_config(name: &str) -> Option<SolverConfig> {
    match name {
        "affine" => Some(affine_config()),
        "cubic" => Some(cubic_config()),
        "trig" => Some(trig_config()),
        _ => None,
    }
}

/// The trigonometric family `F(t, v, eps) = v1 cos t + v2 sin t` (the eps
/// slot is inert) anchored at `(pi/2, (1, 0), 0)`.
pub fn trig_family(config: &SolverConfig) -> Result<PerturbedFamily> {
    trig_family_with_base([1.0, 0.0], config)
}

/// Same family anchored at the zero of `v0_1 cos t + v0_2 sin t` nearest to
/// the principal branch.
pub fn trig_family_with_base(v0: [f64; 2], config: &SolverConfig) -> Result<PerturbedFamily> {
    if v0[0] == 0.0 && v0[1] == 0.0 {
        return Err(Error::InvalidProblem("v0 must be nonzero".into()));
    }
    let mut t0 = v0[1].atan2(v0[0]) + std::f64::consts::FRAC_PI_2;
    while t0 <= 0.0 {
        t0 += std::f64::consts::PI;
    }
    while t0 >= std::f64::consts::TAU {
        t0 -= std::f64::consts::PI;
    }
    PerturbedFamily::builder(
        |t, v, _eps| DVector::from_vec(vec![v[0] * t[0].cos() + v[1] * t[0].sin()]),
        DVector::from_vec(vec![t0]),
        DVector::from_vec(vec![v0[0], v0[1]]),
        DVector::from_vec(vec![0.0]),
        1.0,
    )
    .jac_t(|t, v, _| DMatrix::from_element(1, 1, -v[0] * t[0].sin() + v[1] * t[0].cos()))
    .jac_v(|t, _, _| DMatrix::from_fn(1, 2, |_, j| if j == 0 { t[0].cos() } else { t[0].sin() }))
    .build(config)
}

/// Names accepted by [`family`].
pub const FAMILY_NAMES: &[&str] = &["trig"];

/// Looks up a built-in perturbed family by name.
pub fn family(name: &str, config: &SolverConfig) -> Result<PerturbedFamily> {
    match name {
        "trig" => trig_family(config),
        other => Err(Error::InvalidProblem(format!(
            "unknown built-in family '{other}' (expected one of {FAMILY_NAMES:?})"
        ))),
    }
}

/// The default oscillator: `eps = 0.01`, no forcing, `v0 = (1, 0)`, bracket
/// centered on the switching time `pi/2`.
pub fn default_oscillator() -> OscillatorSpec {
    OscillatorSpec::new(0.01, Forcing::Zero, [1.0, 0.0]).expect("default oscillator is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_lookup_round_trips() {
        for &name in IMPLICIT_NAMES {
            let config = implicit_config(name).unwrap();
            implicit_problem(name, &config).unwrap();
        }
        assert!(implicit_problem("nope", &SolverConfig::default()).is_err());
        assert!(implicit_config("nope").is_none());
    }

    #[test]
    fn default_oscillator_is_valid() {
        let spec = default_oscillator();
        assert!(spec.validate().is_ok());
        assert_eq!(spec.v0, [1.0, 0.0]);
    }

    #[test]
    fn trig_family_base_is_the_principal_zero() {
        let config = trig_config();
        let family = trig_family(&config).unwrap();
        assert!((family.t0()[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-14);
    }
}
