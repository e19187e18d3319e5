//! Numerical machinery for implicit functions under Lipschitz perturbations.
//!
//! The crate is organised in three layers:
//!
//! * [`implicit`]: solve `F(x, y) = 0` for `y` near a base point by the
//!   frozen-Jacobian (chord) fixed-point iteration, with runtime contraction
//!   certificates, a contraction-factor scan, and the classical implicit
//!   derivative formula.
//! * [`perturb`]: track the root `t = theta(v, eps)` of a perturbed family
//!   `F(t, v, eps) = 0`, compute the theoretical Lipschitz modulus of the root
//!   map, measure empirical Lipschitz quotients, and estimate the structural
//!   constants the tracking argument relies on.
//! * [`dryfriction`]: the end-to-end application: event-driven integration of
//!   the sign-nonlinearity oscillator, construction of its switching-time
//!   family, and certification of the region where the family does not vanish.
//!
//! [`problems`] holds small named test problems addressable from the CLI.

pub mod dryfriction;
pub mod error;
pub mod implicit;
pub mod perturb;
pub mod problems;
pub mod sample;

pub(crate) mod diff;
pub(crate) mod stepper;

pub use dryfriction::{
    exclusion_region_check, integrate_system, rotate, unrotate, verify_assumption_f, Forcing,
    OscillatorSpec, SwitchReport, Trajectory,
};
pub use error::{Error, Result};
pub use implicit::{
    alpha_search, contraction_scan, frozen_jacobian, implicit_derivative, solve_implicit,
    AlphaSearch, ContractionCertificate, FrozenJacobian, ImplicitProblem, SolverConfig,
};
pub use perturb::{
    delta_ladder_scan, empirical_lipschitz_quotient, estimate_assumption_constants, solve_theta,
    solve_theta_certified, theoretical_modulus, AssumptionEstimates, DeltaScan, PerturbedFamily,
    SampleSpec, ThetaResult,
};

pub use nalgebra;
