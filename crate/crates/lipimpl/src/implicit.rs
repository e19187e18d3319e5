//! Frozen-Jacobian (chord) iteration for implicit equations `F(x, y) = 0`.
//!
//! The solver fixes the Jacobian `J = F'_y(x0, y0)` at the base point and
//! iterates the map `A_x(y) = y - J^{-1} F(x, y)`. A fixed point of `A_x` is a
//! solution of the equation, and every solve returns a
//! [`ContractionCertificate`] recording the observed contraction factor, the
//! initial displacement `||A_x(y0) - y0||`, and whether the invariant-ball
//! inequality held at runtime. There is deliberately no Newton refresh: the
//! certificate is a statement about the frozen map, so the iteration must be
//! the frozen map.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::diff::{central_jacobian, scaled_step};
use crate::error::{Error, Result};
use crate::sample::{rng_from_seed, subseed, uniform_in_ball};

/// Condition-estimate ceiling above which a Jacobian is treated as singular.
pub const COND_LIMIT: f64 = 1e12;

/// Evaluable map `(x, y) -> F(x, y)`.
pub type MapFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;
/// Evaluable Jacobian callback `(x, y) -> matrix`.
pub type JacFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// Solver tolerances, iteration caps, and ball radii.
///
/// `alpha` bounds the admissible parameter offset `||x - x0||`, `beta` the
/// solution ball around `y0`; both must fit inside the problem radius `r`.
/// `q_target` is the contraction factor a certified run must not exceed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub residual_tol: f64,
    pub step_tol: f64,
    pub max_iter: usize,
    pub alpha: f64,
    pub beta: f64,
    pub q_target: f64,
    pub fd_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            residual_tol: 1e-10,
            step_tol: 1e-12,
            max_iter: 100,
            alpha: 0.5,
            beta: 0.5,
            q_target: 0.5,
            fd_step: 1e-6,
        }
    }
}

impl SolverConfig {
    /// Config with both ball radii set to 90% of a domain radius `r`.
    pub fn for_radius(r: f64) -> Self {
        Self {
            alpha: 0.9 * r,
            beta: 0.9 * r,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("residual_tol", self.residual_tol),
            ("step_tol", self.step_tol),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("fd_step", self.fd_step),
        ];
        for (name, value) in positive {
            if value <= 0.0 || !value.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        let q_in_range = self.q_target > 0.0 && self.q_target < 1.0;
        if !q_in_range {
            return Err(Error::InvalidConfig(format!(
                "q_target must lie in (0, 1), got {}",
                self.q_target
            )));
        }
        Ok(())
    }

    /// Validation against a problem's common ball radius.
    pub fn validate_for(&self, r: f64) -> Result<()> {
        self.validate()?;
        if self.alpha > r * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "alpha {} exceeds problem radius {r}",
                self.alpha
            )));
        }
        if self.beta > r * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "beta {} exceeds problem radius {r}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// An implicit equation `F(x, y) = 0` anchored at a base point `(x0, y0)`
/// with `F(x0, y0) = 0` and an invertible frozen Jacobian `F'_y(x0, y0)`.
///
/// Both conditions are checked at construction; `r` is the common radius of
/// the x- and y-domains. Analytic Jacobian callbacks are optional; central
/// differences are used where they are absent. Problems are immutable after
/// construction and safe to share across threads provided the supplied `F`
/// is reentrant.
#[derive(Clone)]
pub struct ImplicitProblem {
    f: Arc<MapFn>,
    jac_x: Option<Arc<JacFn>>,
    jac_y: Option<Arc<JacFn>>,
    x0: DVector<f64>,
    y0: DVector<f64>,
    r: f64,
}

impl std::fmt::Debug for ImplicitProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImplicitProblem")
            .field("x0", &self.x0)
            .field("y0", &self.y0)
            .field("r", &self.r)
            .field("analytic_jac_x", &self.jac_x.is_some())
            .field("analytic_jac_y", &self.jac_y.is_some())
            .finish()
    }
}

pub struct ImplicitProblemBuilder {
    f: Arc<MapFn>,
    jac_x: Option<Arc<JacFn>>,
    jac_y: Option<Arc<JacFn>>,
    x0: DVector<f64>,
    y0: DVector<f64>,
    r: f64,
}

impl ImplicitProblemBuilder {
    pub fn jac_x(
        mut self,
        jac: impl Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jac_x = Some(Arc::new(jac));
        self
    }

    pub fn jac_y(
        mut self,
        jac: impl Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jac_y = Some(Arc::new(jac));
        self
    }

    /// Validates the base point and frozen Jacobian and returns the problem.
    pub fn build(self, config: &SolverConfig) -> Result<ImplicitProblem> {
        let problem = ImplicitProblem {
            f: self.f,
            jac_x: self.jac_x,
            jac_y: self.jac_y,
            x0: self.x0,
            y0: self.y0,
            r: self.r,
        };
        if problem.x0.is_empty() || problem.y0.is_empty() {
            return Err(Error::InvalidProblem(
                "zero-dimensional x or y is not supported".into(),
            ));
        }
        if problem.r <= 0.0 || !problem.r.is_finite() {
            return Err(Error::InvalidProblem(format!(
                "radius must be positive, got {}",
                problem.r
            )));
        }
        config.validate_for(problem.r)?;
        let base = (problem.f)(&problem.x0, &problem.y0);
        if base.len() != problem.y0.len() {
            return Err(Error::InvalidProblem(format!(
                "F maps into dimension {}, expected {}",
                base.len(),
                problem.y0.len()
            )));
        }
        let residual = base.norm();
        if residual > config.residual_tol || residual.is_nan() {
            return Err(Error::InvalidProblem(format!(
                "F(x0, y0) has residual {residual:.3e}, above tolerance {:.3e}",
                config.residual_tol
            )));
        }
        frozen_jacobian(&problem, config)?;
        Ok(problem)
    }
}

impl ImplicitProblem {
    pub fn builder(
        f: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        x0: DVector<f64>,
        y0: DVector<f64>,
        r: f64,
    ) -> ImplicitProblemBuilder {
        ImplicitProblemBuilder {
            f: Arc::new(f),
            jac_x: None,
            jac_y: None,
            x0,
            y0,
            r,
        }
    }

    pub fn eval(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        (self.f)(x, y)
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    pub fn y0(&self) -> &DVector<f64> {
        &self.y0
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    fn jac_y_at(&self, x: &DVector<f64>, y: &DVector<f64>, fd_step: f64) -> DMatrix<f64> {
        match &self.jac_y {
            Some(jac) => jac(x, y),
            None => {
                let base_norm = (x.norm_squared() + y.norm_squared()).sqrt();
                let step = scaled_step(fd_step, base_norm);
                let f = &self.f;
                central_jacobian(|yy| f(x, yy), y, step)
            }
        }
    }

    fn jac_x_at(&self, x: &DVector<f64>, y: &DVector<f64>, fd_step: f64) -> DMatrix<f64> {
        match &self.jac_x {
            Some(jac) => jac(x, y),
            None => {
                let base_norm = (x.norm_squared() + y.norm_squared()).sqrt();
                let step = scaled_step(fd_step, base_norm);
                let f = &self.f;
                central_jacobian(|xx| f(xx, y), x, step)
            }
        }
    }
}

/// Factorization-backed application of the frozen Jacobian and its inverse.
pub struct FrozenJacobian {
    matrix: DMatrix<f64>,
    lu: LU<f64, Dyn, Dyn>,
    cond_estimate: f64,
}

impl FrozenJacobian {
    /// Factorizes a square matrix, rejecting rank deficiency and condition
    /// estimates above [`COND_LIMIT`].
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::InvalidProblem(format!(
                "frozen Jacobian is {}x{}, expected square",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let svd = matrix.clone().svd(false, false);
        let sigma_max = svd.singular_values.max();
        let sigma_min = svd.singular_values.min();
        let cond_estimate = if sigma_min > 0.0 {
            sigma_max / sigma_min
        } else {
            f64::INFINITY
        };
        let lu = matrix.clone().lu();
        if !cond_estimate.is_finite() || cond_estimate > COND_LIMIT || !lu.is_invertible() {
            return Err(Error::SingularJacobian {
                cond: cond_estimate,
            });
        }
        Ok(Self {
            matrix,
            lu,
            cond_estimate,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn cond_estimate(&self) -> f64 {
        self.cond_estimate
    }

    /// Solves `J d = rhs` through the stored factorization.
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        self.lu.solve(rhs).ok_or(Error::SingularJacobian {
            cond: self.cond_estimate,
        })
    }

    /// Explicit inverse, for diagnostics such as `||J J^{-1} - I||`.
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        self.lu.try_inverse().ok_or(Error::SingularJacobian {
            cond: self.cond_estimate,
        })
    }
}

/// Computes the frozen Jacobian `F'_y(x0, y0)` and its factorization.
pub fn frozen_jacobian(problem: &ImplicitProblem, config: &SolverConfig) -> Result<FrozenJacobian> {
    config.validate()?;
    let matrix = problem.jac_y_at(&problem.x0, &problem.y0, config.fd_step);
    FrozenJacobian::from_matrix(matrix)
}

/// Runtime evidence gathered along a chord solve.
///
/// `q_measured` is the largest observed step ratio
/// `||y_{k+1} - y_k|| / ||y_k - y_{k-1}||`; `ball_ok` records whether
/// `||A_x(y0) - y0|| <= beta (1 - q_measured)`, the inequality that keeps
/// every iterate inside the beta ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionCertificate {
    pub q_measured: f64,
    pub initial_displacement: f64,
    pub ball_ok: bool,
    pub iterations: usize,
    pub residual: f64,
    /// Norms of the applied steps, in order.
    pub step_norms: Vec<f64>,
}

/// Solves `F(x, y) = 0` for `y` near `y0` by the frozen-Jacobian iteration.
///
/// Requires `||x - x0|| <= alpha`; a parameter outside the alpha ball is an
/// error rather than a silent extrapolation. Iterates until both the step
/// norm and the residual fall below their tolerances.
pub fn solve_implicit(
    problem: &ImplicitProblem,
    config: &SolverConfig,
    x: &DVector<f64>,
) -> Result<(DVector<f64>, ContractionCertificate)> {
    config.validate_for(problem.r)?;
    if x.len() != problem.x0.len() {
        return Err(Error::InvalidProblem(format!(
            "x has dimension {}, expected {}",
            x.len(),
            problem.x0.len()
        )));
    }
    let dist = (x - &problem.x0).norm();
    if dist > config.alpha * (1.0 + 1e-12) {
        return Err(Error::OutsideAlphaBall {
            dist,
            alpha: config.alpha,
        });
    }
    let frozen = frozen_jacobian(problem, config)?;

    let mut y = problem.y0.clone();
    let mut step_norms: Vec<f64> = Vec::new();
    let mut q_measured: f64 = 0.0;
    let mut expanding_streak = 0usize;
    let mut initial_displacement = 0.0;
    let mut last_residual = f64::INFINITY;

    for iteration in 0..=config.max_iter {
        let f_val = problem.eval(x, &y);
        let residual = f_val.norm();
        last_residual = residual;
        let direction = frozen.solve(&f_val)?;
        let step = direction.norm();
        if iteration == 0 {
            initial_displacement = step;
        }

        if step <= config.step_tol && residual <= config.residual_tol {
            let ball_ok =
                q_measured < 1.0 && initial_displacement <= config.beta * (1.0 - q_measured);
            let cert = ContractionCertificate {
                q_measured,
                initial_displacement,
                ball_ok,
                iterations: iteration,
                residual,
                step_norms,
            };
            return Ok((y, cert));
        }
        if iteration == config.max_iter {
            break;
        }

        y -= &direction;
        let dist_from_base = (&y - &problem.y0).norm();
        if dist_from_base > config.beta * (1.0 + 1e-12) {
            return Err(Error::LeftBall {
                iteration: iteration + 1,
                dist: dist_from_base,
                beta: config.beta,
            });
        }
        if let Some(&previous) = step_norms.last() {
            if previous > 0.0 {
                let ratio = step / previous;
                q_measured = q_measured.max(ratio);
                if ratio >= 1.0 {
                    expanding_streak += 1;
                    if expanding_streak >= 3 {
                        return Err(Error::NoContraction { ratio });
                    }
                } else {
                    expanding_streak = 0;
                }
            }
        }
        step_norms.push(step);
    }

    Err(Error::MaxIterExceeded {
        max_iter: config.max_iter,
        residual: last_residual,
    })
}

/// Derivative of the solution map `x -> f(x)` at a solved point `(x, y)`:
/// `-[F'_y(x, y)]^{-1} F'_x(x, y)`, with both Jacobians evaluated at `(x, y)`
/// rather than frozen at the base point.
pub fn implicit_derivative(
    problem: &ImplicitProblem,
    x: &DVector<f64>,
    y: &DVector<f64>,
    config: &SolverConfig,
) -> Result<DMatrix<f64>> {
    config.validate()?;
    let residual = problem.eval(x, y).norm();
    if residual > config.residual_tol || residual.is_nan() {
        return Err(Error::NotAtSolution { residual });
    }
    let jac_y = FrozenJacobian::from_matrix(problem.jac_y_at(x, y, config.fd_step))?;
    let jac_x = problem.jac_x_at(x, y, config.fd_step);

    let m = jac_y.matrix().nrows();
    let n = jac_x.ncols();
    let mut derivative = DMatrix::zeros(m, n);
    for j in 0..n {
        let rhs: DVector<f64> = jac_x.column(j).into();
        let column = jac_y.solve(&rhs)?;
        for i in 0..m {
            derivative[(i, j)] = -column[i];
        }
    }
    Ok(derivative)
}

fn check_inside(
    samples: &[DVector<f64>],
    center: &DVector<f64>,
    radius: f64,
    ball: &'static str,
) -> Result<()> {
    for s in samples {
        let dist = (s - center).norm();
        if dist > radius * (1.0 + 1e-9) {
            return Err(Error::SampleOutsideBall { ball, dist, radius });
        }
    }
    Ok(())
}

/// Largest sampled Lipschitz quotient of the frozen map `A_x` over the beta
/// ball: `max ||A_x(y_i) - A_x(y_j)|| / ||y_i - y_j||` across all sample
/// pairs (the base point is included as a sample) and all sampled `x`.
/// A certified run requires the returned `q_hat <= q_target`.
pub fn contraction_scan(
    problem: &ImplicitProblem,
    config: &SolverConfig,
    x_samples: &[DVector<f64>],
    y_samples: &[DVector<f64>],
) -> Result<f64> {
    config.validate_for(problem.r)?;
    if x_samples.is_empty() || y_samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    check_inside(x_samples, &problem.x0, config.alpha, "alpha")?;
    check_inside(y_samples, &problem.y0, config.beta, "beta")?;

    let frozen = frozen_jacobian(problem, config)?;
    let mut points: Vec<DVector<f64>> = Vec::with_capacity(y_samples.len() + 1);
    points.push(problem.y0.clone());
    points.extend_from_slice(y_samples);

    let mut q_hat: Option<f64> = None;
    for x in x_samples {
        let images: Vec<DVector<f64>> = points
            .iter()
            .map(|y| Ok(y - frozen.solve(&problem.eval(x, y))?))
            .collect::<Result<_>>()?;
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                let gap = (&points[i] - &points[j]).norm();
                if gap < 1e-12 {
                    continue;
                }
                let quotient = (&images[i] - &images[j]).norm() / gap;
                q_hat = Some(q_hat.map_or(quotient, |q: f64| q.max(quotient)));
            }
        }
    }
    q_hat.ok_or(Error::EmptySamples)
}

/// Outcome of [`alpha_search`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSearch {
    pub alpha: f64,
    pub q_hat: f64,
    pub max_initial_displacement: f64,
}

/// Shrinks the parameter radius geometrically (factor 1/2 starting from the
/// problem radius) until the sampled contraction factor satisfies
/// `q_hat <= q_target` and every sampled `x` keeps the initial displacement
/// within `beta (1 - q_hat)`. The user supplies `beta` through the config;
/// this search only selects `alpha`.
pub fn alpha_search(
    problem: &ImplicitProblem,
    config: &SolverConfig,
    n_samples: usize,
    seed: u64,
) -> Result<AlphaSearch> {
    config.validate_for(problem.r)?;
    let frozen = frozen_jacobian(problem, config)?;

    let y_samples = ball_samples(&problem.y0, config.beta, n_samples, subseed(seed, 1));
    let min_alpha = problem.r * 2f64.powi(-40);
    let mut alpha = problem.r;
    let mut level = 0u64;

    while alpha >= min_alpha {
        let x_samples = ball_samples(&problem.x0, alpha, n_samples, subseed(seed, 2 + level));
        let scan_config = SolverConfig {
            alpha,
            ..config.clone()
        };
        let q_hat = contraction_scan(problem, &scan_config, &x_samples, &y_samples)?;

        let mut max_disp: f64 = 0.0;
        for x in &x_samples {
            let displacement = frozen.solve(&problem.eval(x, &problem.y0))?.norm();
            max_disp = max_disp.max(displacement);
        }

        if q_hat <= config.q_target && max_disp <= config.beta * (1.0 - q_hat) {
            return Ok(AlphaSearch {
                alpha,
                q_hat,
                max_initial_displacement: max_disp,
            });
        }
        alpha *= 0.5;
        level += 1;
    }
    Err(Error::AlphaSearchFailed { min_alpha })
}

/// Axis-boundary points plus seeded interior samples of a ball.
fn ball_samples(center: &DVector<f64>, radius: f64, n: usize, seed: u64) -> Vec<DVector<f64>> {
    let dim = center.len();
    let mut samples = Vec::with_capacity(2 * dim + n);
    for i in 0..dim {
        let mut hi = center.clone();
        hi[i] += radius;
        let mut lo = center.clone();
        lo[i] -= radius;
        samples.push(hi);
        samples.push(lo);
    }
    let mut rng = rng_from_seed(seed);
    for _ in 0..n {
        samples.push(uniform_in_ball(&mut rng, center, radius));
    }
    samples
}
