//! Root tracking for perturbed families `F(t, v, eps) = 0`.
//!
//! A [`PerturbedFamily`] is reduced to an [`ImplicitProblem`](crate::implicit::ImplicitProblem)
//! with the parameter pair `x = (v, eps)` stacked and `t` as the unknown, so
//! the chord solver and its certificates carry over unchanged. On top of that
//! reduction this module computes the theoretical Lipschitz modulus
//! `R = ||[F'_t]^{-1} F'_v||` of the root map at the base point, measures
//! empirical Lipschitz quotients of `theta(v, eps)` over sampled pairs, and
//! estimates the structural constants (mixed-difference moduli, a global
//! Lipschitz constant) that the tracking argument assumes.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diff::{central_jacobian, scaled_step};
use crate::error::{Error, Result};
use crate::implicit::{
    solve_implicit, ContractionCertificate, FrozenJacobian, ImplicitProblem, SolverConfig,
};
use crate::sample::{rng_from_seed, subseed, uniform_in_ball, uniform_in_interval};

/// Evaluable family `(t, v, eps) -> F(t, v, eps)`.
pub type FamilyFn =
    dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;
/// Jacobian callback for one slot of the family.
pub type FamilyJacFn =
    dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// A family `F(t, v, eps)` anchored at a base point where `F` vanishes and
/// `F'_t` is invertible. `r` is the common ball radius of all three slots.
#[derive(Clone)]
pub struct PerturbedFamily {
    f: Arc<FamilyFn>,
    jac_t: Option<Arc<FamilyJacFn>>,
    jac_v: Option<Arc<FamilyJacFn>>,
    t0: DVector<f64>,
    v0: DVector<f64>,
    eps0: DVector<f64>,
    r: f64,
}

impl std::fmt::Debug for PerturbedFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PerturbedFamily")
            .field("t0", &self.t0)
            .field("v0", &self.v0)
            .field("eps0", &self.eps0)
            .field("r", &self.r)
            .finish()
    }
}

pub struct PerturbedFamilyBuilder {
    f: Arc<FamilyFn>,
    jac_t: Option<Arc<FamilyJacFn>>,
    jac_v: Option<Arc<FamilyJacFn>>,
    t0: DVector<f64>,
    v0: DVector<f64>,
    eps0: DVector<f64>,
    r: f64,
}

impl PerturbedFamilyBuilder {
    pub fn jac_t(
        mut self,
        jac: impl Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DMatrix<f64>
            + Send
            + Sync
            + 'static,
    ) -> Self {
        self.jac_t = Some(Arc::new(jac));
        self
    }

    pub fn jac_v(
        mut self,
        jac: impl Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DMatrix<f64>
            + Send
            + Sync
            + 'static,
    ) -> Self {
        self.jac_v = Some(Arc::new(jac));
        self
    }

    pub fn build(self, config: &SolverConfig) -> Result<PerturbedFamily> {
        let family = PerturbedFamily {
            f: self.f,
            jac_t: self.jac_t,
            jac_v: self.jac_v,
            t0: self.t0,
            v0: self.v0,
            eps0: self.eps0,
            r: self.r,
        };
        if family.t0.is_empty() || family.v0.is_empty() || family.eps0.is_empty() {
            return Err(Error::InvalidProblem(
                "zero-dimensional t, v, or eps is not supported".into(),
            ));
        }
        if family.r <= 0.0 || !family.r.is_finite() {
            return Err(Error::InvalidProblem(format!(
                "radius must be positive, got {}",
                family.r
            )));
        }
        config.validate()?;
        let residual = family.eval(&family.t0, &family.v0, &family.eps0).norm();
        if residual > config.residual_tol || residual.is_nan() {
            return Err(Error::InvalidProblem(format!(
                "F(t0, v0, eps0) has residual {residual:.3e}, above tolerance {:.3e}",
                config.residual_tol
            )));
        }
        FrozenJacobian::from_matrix(family.jac_t_at(
            &family.t0,
            &family.v0,
            &family.eps0,
            config.fd_step,
        ))?;
        Ok(family)
    }
}

impl PerturbedFamily {
    pub fn builder(
        f: impl Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        t0: DVector<f64>,
        v0: DVector<f64>,
        eps0: DVector<f64>,
        r: f64,
    ) -> PerturbedFamilyBuilder {
        PerturbedFamilyBuilder {
            f: Arc::new(f),
            jac_t: None,
            jac_v: None,
            t0,
            v0,
            eps0,
            r,
        }
    }

    pub fn eval(&self, t: &DVector<f64>, v: &DVector<f64>, eps: &DVector<f64>) -> DVector<f64> {
        (self.f)(t, v, eps)
    }

    pub fn t0(&self) -> &DVector<f64> {
        &self.t0
    }

    pub fn v0(&self) -> &DVector<f64> {
        &self.v0
    }

    pub fn eps0(&self) -> &DVector<f64> {
        &self.eps0
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    /// Whether both Jacobian slots have analytic callbacks. When this is
    /// false the derivatives come from central differences, and smoothness
    /// at the base eps is assumed rather than verified.
    pub fn has_analytic_jacobians(&self) -> bool {
        self.jac_t.is_some() && self.jac_v.is_some()
    }

    fn stacked_norm(t: &DVector<f64>, v: &DVector<f64>, eps: &DVector<f64>) -> f64 {
        (t.norm_squared() + v.norm_squared() + eps.norm_squared()).sqrt()
    }

    pub(crate) fn jac_t_at(
        &self,
        t: &DVector<f64>,
        v: &DVector<f64>,
        eps: &DVector<f64>,
        fd_step: f64,
    ) -> DMatrix<f64> {
        match &self.jac_t {
            Some(jac) => jac(t, v, eps),
            None => {
                let step = scaled_step(fd_step, Self::stacked_norm(t, v, eps));
                let f = &self.f;
                central_jacobian(|tt| f(tt, v, eps), t, step)
            }
        }
    }

    pub(crate) fn jac_v_at(
        &self,
        t: &DVector<f64>,
        v: &DVector<f64>,
        eps: &DVector<f64>,
        fd_step: f64,
    ) -> DMatrix<f64> {
        match &self.jac_v {
            Some(jac) => jac(t, v, eps),
            None => {
                let step = scaled_step(fd_step, Self::stacked_norm(t, v, eps));
                let f = &self.f;
                central_jacobian(|vv| f(t, vv, eps), v, step)
            }
        }
    }

    /// The reduction used by the solver: `x = (v, eps)` stacked as the
    /// parameter and `t` as the unknown.
    pub fn reduced_problem(&self, config: &SolverConfig) -> Result<ImplicitProblem> {
        let k = self.v0.len();
        let e = self.eps0.len();
        let f = self.f.clone();
        let x0 = stack(&self.v0, &self.eps0);
        let mut builder = ImplicitProblem::builder(
            move |x, t| {
                let (v, eps) = split(x, k, e);
                f(t, &v, &eps)
            },
            x0,
            self.t0.clone(),
            self.r,
        );
        if let Some(jac_t) = self.jac_t.clone() {
            builder = builder.jac_y(move |x, t| {
                let (v, eps) = split(x, k, e);
                jac_t(t, &v, &eps)
            });
        }
        builder.build(config)
    }
}

fn stack(v: &DVector<f64>, eps: &DVector<f64>) -> DVector<f64> {
    let k = v.len();
    DVector::from_fn(k + eps.len(), |i, _| if i < k { v[i] } else { eps[i - k] })
}

fn split(x: &DVector<f64>, k: usize, e: usize) -> (DVector<f64>, DVector<f64>) {
    (x.rows(0, k).into_owned(), x.rows(k, e).into_owned())
}

/// Root of `F(., v, eps) = 0` near `t0`, with the contraction certificate.
///
/// Errors only on solver failures; inspect the certificate for `ball_ok`.
pub fn solve_theta_certified(
    family: &PerturbedFamily,
    v: &DVector<f64>,
    eps: &DVector<f64>,
    config: &SolverConfig,
) -> Result<(DVector<f64>, ContractionCertificate)> {
    let problem = family.reduced_problem(config)?;
    solve_implicit(&problem, config, &stack(v, eps))
}

/// Root of `F(., v, eps) = 0` near `t0`. Fails with
/// [`Error::NoRootInBall`] when the run's contraction certificate does not
/// hold, so a returned value is always a certified root.
pub fn solve_theta(
    family: &PerturbedFamily,
    v: &DVector<f64>,
    eps: &DVector<f64>,
    config: &SolverConfig,
) -> Result<DVector<f64>> {
    let (theta, cert) = solve_theta_certified(family, v, eps, config)?;
    if !cert.ball_ok {
        return Err(Error::NoRootInBall);
    }
    Ok(theta)
}

/// Theoretical modulus `R = ||[F'_t(base)]^{-1} F'_v(base)||` in the induced
/// 2-norm. This is the Lipschitz constant the root map approaches as the
/// sampling ball shrinks.
pub fn theoretical_modulus(family: &PerturbedFamily, config: &SolverConfig) -> Result<f64> {
    config.validate()?;
    let jac_t = family.jac_t_at(&family.t0, &family.v0, &family.eps0, config.fd_step);
    let frozen = FrozenJacobian::from_matrix(jac_t)?;
    let jac_v = family.jac_v_at(&family.t0, &family.v0, &family.eps0, config.fd_step);

    let p = family.t0.len();
    let k = family.v0.len();
    let mut sensitivity = DMatrix::zeros(p, k);
    for j in 0..k {
        let rhs: DVector<f64> = jac_v.column(j).into();
        let column = frozen.solve(&rhs)?;
        sensitivity.set_column(j, &column);
    }
    Ok(sensitivity.svd(false, false).singular_values.max())
}

/// Result of an empirical Lipschitz-quotient measurement.
///
/// `quotient_sup` is the largest observed
/// `||theta(v1, eps) - theta(v2, eps)|| / ||v1 - v2||` over the sampled
/// pairs; `ine_ok` compares it against `modulus + margin` for the ball
/// radius `delta` used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaResult {
    pub theta: DVector<f64>,
    pub modulus: f64,
    pub quotient_sup: f64,
    pub delta: f64,
    pub margin: f64,
    pub ine_ok: bool,
    pub pairs_used: usize,
}

/// Samples `n_pairs` pairs in the `delta`-ball around `v0` (deterministically
/// from `seed`) and measures the Lipschitz quotient of `theta(., eps)`.
/// Pairs closer than 1e-12 are skipped and never contribute.
pub fn empirical_lipschitz_quotient(
    family: &PerturbedFamily,
    eps: &DVector<f64>,
    delta: f64,
    n_pairs: usize,
    seed: u64,
    margin: f64,
    config: &SolverConfig,
) -> Result<ThetaResult> {
    config.validate()?;
    if n_pairs == 0 {
        return Err(Error::EmptySamples);
    }
    if delta <= 0.0 || delta.is_nan() || delta > config.alpha * (1.0 + 1e-12) {
        return Err(Error::InvalidConfig(format!(
            "delta must lie in (0, alpha], got {delta} with alpha {}",
            config.alpha
        )));
    }
    if margin <= 0.0 || margin.is_nan() {
        return Err(Error::InvalidConfig(format!(
            "margin must be positive, got {margin}"
        )));
    }

    let theta = solve_theta(family, &family.v0, eps, config)?;
    let modulus = theoretical_modulus(family, config)?;

    let mut rng = rng_from_seed(seed);
    let mut quotient_sup: f64 = 0.0;
    let mut pairs_used = 0usize;
    for _ in 0..n_pairs {
        let v1 = uniform_in_ball(&mut rng, &family.v0, delta);
        let v2 = uniform_in_ball(&mut rng, &family.v0, delta);
        let gap = (&v1 - &v2).norm();
        if gap < 1e-12 {
            continue;
        }
        let theta1 = solve_theta(family, &v1, eps, config)?;
        let theta2 = solve_theta(family, &v2, eps, config)?;
        quotient_sup = quotient_sup.max((theta1 - theta2).norm() / gap);
        pairs_used += 1;
    }
    if pairs_used == 0 {
        return Err(Error::AllPairsDegenerate);
    }

    Ok(ThetaResult {
        theta,
        modulus,
        quotient_sup,
        delta,
        margin,
        ine_ok: quotient_sup <= modulus + margin,
        pairs_used,
    })
}

/// One rung of a delta ladder scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaScanRow {
    pub delta: f64,
    pub quotient_sup: f64,
    pub ine_ok: bool,
}

/// Outcome of [`delta_ladder_scan`]: per-delta quotients and the largest
/// delta at which the `modulus + margin` bound held.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaScan {
    pub modulus: f64,
    pub margin: f64,
    pub rows: Vec<DeltaScanRow>,
    pub best: Option<f64>,
}

/// Scans a decreasing ladder of ball radii and reports the largest radius at
/// which the measured quotient stays within `modulus + margin`. For each
/// rung, quotients are taken over the base eps and every entry of
/// `eps_samples` that fits inside the rung's ball.
pub fn delta_ladder_scan(
    family: &PerturbedFamily,
    eps_samples: &[DVector<f64>],
    ladder: &[f64],
    margin: f64,
    n_pairs: usize,
    seed: u64,
    config: &SolverConfig,
) -> Result<DeltaScan> {
    if ladder.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut deltas: Vec<f64> = ladder.to_vec();
    deltas.sort_by(|a, b| b.partial_cmp(a).expect("finite deltas"));

    let modulus = theoretical_modulus(family, config)?;
    let mut rows = Vec::with_capacity(deltas.len());
    for (i, &delta) in deltas.iter().enumerate() {
        let mut eps_list: Vec<DVector<f64>> = vec![family.eps0.clone()];
        for eps in eps_samples {
            if (eps - &family.eps0).norm() <= delta * (1.0 + 1e-12) && eps != &family.eps0 {
                eps_list.push(eps.clone());
            }
        }
        let mut quotient_sup: f64 = 0.0;
        for (j, eps) in eps_list.iter().enumerate() {
            let sub = subseed(seed, (i * 1009 + j) as u64);
            let result =
                empirical_lipschitz_quotient(family, eps, delta, n_pairs, sub, margin, config)?;
            quotient_sup = quotient_sup.max(result.quotient_sup);
        }
        rows.push(DeltaScanRow {
            delta,
            quotient_sup,
            ine_ok: quotient_sup <= modulus + margin,
        });
    }
    let best = rows
        .iter()
        .filter(|row| row.ine_ok)
        .map(|row| row.delta)
        .fold(None, |acc: Option<f64>, d| {
            Some(acc.map_or(d, |a| a.max(d)))
        });
    Ok(DeltaScan {
        modulus,
        margin,
        rows,
        best,
    })
}

/// Sampling plan for [`estimate_assumption_constants`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub n_t_pairs: usize,
    pub n_param_points: usize,
    pub t_radius: f64,
    pub v_radius: f64,
    pub eps_radius: f64,
    /// Restrict eps samples to nonnegative coordinates (one-sided families).
    pub eps_nonneg: bool,
}

impl SampleSpec {
    pub fn for_radius(r: f64) -> Self {
        Self {
            n_t_pairs: 64,
            n_param_points: 16,
            t_radius: 0.9 * r,
            v_radius: 0.9 * r,
            eps_radius: 0.9 * r,
            eps_nonneg: false,
        }
    }
}

/// A mixed-difference modulus estimate at one sampled `(eps, v)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedSample {
    pub eps: DVector<f64>,
    pub v: DVector<f64>,
    pub value: f64,
}

/// An intercept estimate at one sampled `eps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsSample {
    pub eps: DVector<f64>,
    pub value: f64,
}

/// Sampled estimates of the structural constants of a family.
///
/// `l_eps_v` estimates, per sampled `(eps, v)`, the modulus of
/// `F(t1, v, eps) - F(t2, v, eps) - F(t1, v0, eps0) + F(t2, v0, eps0)`
/// relative to `||t1 - t2||`. `l_eps` and `k_slope` come from a least-squares
/// fit of the v-direction mixed difference
/// `||F(t1, v2, eps) - F(t1, v1, eps) - F(t2, v2, eps0) + F(t2, v1, eps0)||
/// / ||v1 - v2||` against `||t1 - t2||`: the intercept per eps and the
/// slope. (Both v-arguments vary and the subtracted pair sits at the base
/// eps; a cancelling same-argument form of this difference is sometimes
/// written, but it bounds nothing.) `lipschitz_f` is the largest sampled
/// difference quotient of `F` over all arguments jointly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionEstimates {
    pub l_eps_v: Vec<MixedSample>,
    pub l_eps: Vec<EpsSample>,
    pub k_slope: f64,
    pub lipschitz_f: f64,
}

impl AssumptionEstimates {
    pub fn max_l_eps_v(&self) -> f64 {
        self.l_eps_v.iter().map(|s| s.value).fold(0.0, f64::max)
    }

    pub fn max_l_eps(&self) -> f64 {
        self.l_eps.iter().map(|s| s.value).fold(0.0, f64::max)
    }
}

fn sample_eps(
    rng: &mut rand_chacha::ChaCha8Rng,
    center: &DVector<f64>,
    radius: f64,
    nonneg: bool,
) -> DVector<f64> {
    if nonneg {
        DVector::from_fn(center.len(), |i, _| {
            let lo = (center[i] - radius).max(0.0);
            let hi = center[i] + radius;
            uniform_in_interval(rng, lo, hi)
        })
    } else {
        uniform_in_ball(rng, center, radius)
    }
}

/// Least-squares fit `z ~ intercept + slope * d`, both clipped at zero.
fn fit_line(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    if points.is_empty() {
        return (0.0, 0.0);
    }
    let sum_d: f64 = points.iter().map(|p| p.0).sum();
    let sum_z: f64 = points.iter().map(|p| p.1).sum();
    let sum_dd: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sum_dz: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sum_dd - sum_d * sum_d;
    if denom.abs() < 1e-30 {
        return ((sum_z / n).max(0.0), 0.0);
    }
    let slope = (n * sum_dz - sum_d * sum_z) / denom;
    let intercept = (sum_z - slope * sum_d) / n;
    (intercept.max(0.0), slope.max(0.0))
}

/// Estimates the assumption constants by sampling difference quotients.
///
/// Sampling is an empirical surrogate for suprema over balls: counts and
/// radii are part of the plan, and the estimates converge from below as the
/// plan grows.
pub fn estimate_assumption_constants(
    family: &PerturbedFamily,
    plan: &SampleSpec,
    seed: u64,
) -> Result<AssumptionEstimates> {
    if plan.n_t_pairs == 0 || plan.n_param_points == 0 {
        return Err(Error::EmptySamples);
    }
    let mut rng = rng_from_seed(seed);

    let t_pairs: Vec<(DVector<f64>, DVector<f64>)> = (0..plan.n_t_pairs)
        .map(|_| {
            (
                uniform_in_ball(&mut rng, &family.t0, plan.t_radius),
                uniform_in_ball(&mut rng, &family.t0, plan.t_radius),
            )
        })
        .collect();

    let param_points: Vec<(DVector<f64>, DVector<f64>)> = (0..plan.n_param_points)
        .map(|_| {
            let eps = sample_eps(&mut rng, &family.eps0, plan.eps_radius, plan.eps_nonneg);
            let v = uniform_in_ball(&mut rng, &family.v0, plan.v_radius);
            (eps, v)
        })
        .collect();

    let base_at = |t: &DVector<f64>| family.eval(t, &family.v0, &family.eps0);

    let mut l_eps_v = Vec::with_capacity(param_points.len());
    for (eps, v) in &param_points {
        let mut worst: f64 = 0.0;
        for (t1, t2) in &t_pairs {
            let gap = (t1 - t2).norm();
            if gap < 1e-12 {
                continue;
            }
            let mixed =
                family.eval(t1, v, eps) - family.eval(t2, v, eps) - base_at(t1) + base_at(t2);
            worst = worst.max(mixed.norm() / gap);
        }
        l_eps_v.push(MixedSample {
            eps: eps.clone(),
            v: v.clone(),
            value: worst,
        });
    }

    let mut l_eps = Vec::with_capacity(param_points.len());
    let mut k_slope: f64 = 0.0;
    for (eps, _) in &param_points {
        let mut points = Vec::with_capacity(t_pairs.len());
        for (t1, t2) in &t_pairs {
            let v1 = uniform_in_ball(&mut rng, &family.v0, plan.v_radius);
            let v2 = uniform_in_ball(&mut rng, &family.v0, plan.v_radius);
            let v_gap = (&v1 - &v2).norm();
            if v_gap < 1e-12 {
                continue;
            }
            let mixed = family.eval(t1, &v2, eps)
                - family.eval(t1, &v1, eps)
                - family.eval(t2, &v2, &family.eps0)
                + family.eval(t2, &v1, &family.eps0);
            points.push(((t1 - t2).norm(), mixed.norm() / v_gap));
        }
        let (intercept, slope) = fit_line(&points);
        k_slope = k_slope.max(slope);
        l_eps.push(EpsSample {
            eps: eps.clone(),
            value: intercept,
        });
    }

    let mut lipschitz_f: f64 = 0.0;
    let n_lip = plan.n_t_pairs + plan.n_param_points;
    for _ in 0..n_lip {
        let t1 = uniform_in_ball(&mut rng, &family.t0, plan.t_radius);
        let t2 = uniform_in_ball(&mut rng, &family.t0, plan.t_radius);
        let v1 = uniform_in_ball(&mut rng, &family.v0, plan.v_radius);
        let v2 = uniform_in_ball(&mut rng, &family.v0, plan.v_radius);
        let e1 = sample_eps(&mut rng, &family.eps0, plan.eps_radius, plan.eps_nonneg);
        let e2 = sample_eps(&mut rng, &family.eps0, plan.eps_radius, plan.eps_nonneg);
        let gap =
            ((&t1 - &t2).norm_squared() + (&v1 - &v2).norm_squared() + (&e1 - &e2).norm_squared())
                .sqrt();
        if gap < 1e-12 {
            continue;
        }
        let diff = (family.eval(&t1, &v1, &e1) - family.eval(&t2, &v2, &e2)).norm();
        lipschitz_f = lipschitz_f.max(diff / gap);
    }

    Ok(AssumptionEstimates {
        l_eps_v,
        l_eps,
        k_slope,
        lipschitz_f,
    })
}
