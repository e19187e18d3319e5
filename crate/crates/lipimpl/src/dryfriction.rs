//! The sign-nonlinearity oscillator `u'' + u = -eps sign(u) + eps g(t, u, u')`
//! and its switching-time family.
//!
//! In rotated coordinates `x = R(-t) (u, u')` the system becomes
//!
//! ```text
//! x1' =  eps sin(t) sign(u) + smooth terms,   u = x1 cos t + x2 sin t,
//! x2' = -eps cos(t) sign(u) + smooth terms,
//! ```
//!
//! so for `eps = 0` the state is constant and in general `x(t) = v + O(eps)`.
//! [`integrate_system`] integrates the smooth pieces with an adaptive
//! embedded RK 5(4) stepper, locates sign switches of `u` on the dense output
//! by bisection, and restarts with the sign flipped. [`OscillatorSpec::family`]
//! packages the dense output as an evaluable family `F(t, v, eps) =
//! x1(t) cos t + x2(t) sin t`, whose root in the bracket is the switching
//! time. [`exclusion_region_check`] certifies the region where that family
//! provably does not vanish.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::implicit::SolverConfig;
use crate::perturb::{solve_theta, theoretical_modulus, DeltaScan, PerturbedFamily};
use crate::stepper::{integrate_dense, DenseSegment, SegmentAction, StepControl};

/// Relative tolerance of the smooth-piece integrator.
const RTOL: f64 = 1e-10;
const ATOL: f64 = 1e-12;
/// Step cap; keeps the dense-output error well below the event refinement
/// tolerance.
const MAX_STEP: f64 = 0.02;
/// Time tolerance of the event bisection.
const EVENT_TIME_TOL: f64 = 1e-12;
const EVENT_BISECT_MAX: usize = 50;
/// Dense samples scanned per accepted step when hunting for sign changes.
const EVENT_SCAN_POINTS: usize = 16;
/// |u| level at which event detection arms after a restart on the surface.
const ARM_TOL: f64 = 1e-10;
/// Resolution of the validating sign scan over the bracket.
const BRACKET_SCAN_POINTS: usize = 10_000;
/// Containment slack when checking refined slice zeros against the
/// exclusion interval.
const EXCLUSION_SLACK: f64 = 1e-8;

/// Smooth forcing term `g(t, u, u')`, 2*pi-periodic in `t`.
#[derive(Clone, Default)]
pub enum Forcing {
    #[default]
    Zero,
    /// `g = cos t`.
    CosT,
    Custom(Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>),
}

impl Forcing {
    pub fn eval(&self, t: f64, u: f64, u_dot: f64) -> f64 {
        match self {
            Forcing::Zero => 0.0,
            Forcing::CosT => t.cos(),
            Forcing::Custom(g) => g(t, u, u_dot),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Forcing::Zero => "zero",
            Forcing::CosT => "cos",
            Forcing::Custom(_) => "custom",
        }
    }

    pub fn by_name(name: &str) -> Option<Forcing> {
        match name {
            "zero" => Some(Forcing::Zero),
            "cos" => Some(Forcing::CosT),
            _ => None,
        }
    }
}

impl std::fmt::Debug for Forcing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Forcing {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Forcing::Custom(_) => Err(serde::ser::Error::custom(
                "custom forcing terms cannot be serialized; use a named forcing",
            )),
            named => serializer.serialize_str(named.name()),
        }
    }
}

impl<'de> Deserialize<'de> for Forcing {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        Forcing::by_name(&name).ok_or_else(|| {
            serde::de::Error::custom(format!(
                "unknown forcing '{name}' (expected 'zero' or 'cos')"
            ))
        })
    }
}

/// Parameters of one oscillator run: perturbation size, forcing, integration
/// horizon, the switching-time bracket `[a, b]`, the base initial condition
/// in rotated coordinates, and output resolution.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "OscillatorSpecInput")]
pub struct OscillatorSpec {
    pub eps: f64,
    pub g: Forcing,
    pub horizon: f64,
    pub a: f64,
    pub b: f64,
    pub v0: [f64; 2],
    pub t_grid: usize,
    /// Velocity level below which an event is checked for sticking.
    pub stick_tol: f64,
    pub max_events: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OscillatorSpecInput {
    eps: f64,
    #[serde(default)]
    g: Forcing,
    #[serde(default = "default_horizon")]
    horizon: f64,
    #[serde(default)]
    a: Option<f64>,
    #[serde(default)]
    b: Option<f64>,
    #[serde(default = "default_v0")]
    v0: [f64; 2],
    #[serde(default = "default_t_grid")]
    t_grid: usize,
    #[serde(default = "default_stick_tol")]
    stick_tol: f64,
    #[serde(default = "default_max_events")]
    max_events: usize,
}

fn default_horizon() -> f64 {
    std::f64::consts::TAU
}

fn default_v0() -> [f64; 2] {
    [1.0, 0.0]
}

fn default_t_grid() -> usize {
    400
}

fn default_stick_tol() -> f64 {
    1e-3
}

fn default_max_events() -> usize {
    10_000
}

impl TryFrom<OscillatorSpecInput> for OscillatorSpec {
    type Error = String;

    fn try_from(input: OscillatorSpecInput) -> std::result::Result<Self, String> {
        let (a, b) = match (input.a, input.b) {
            (Some(a), Some(b)) => (a, b),
            (None, None) => default_bracket(input.v0).map_err(|e| e.to_string())?,
            _ => return Err("fields 'a' and 'b' must be given together".into()),
        };
        let spec = OscillatorSpec {
            eps: input.eps,
            g: input.g,
            horizon: input.horizon,
            a,
            b,
            v0: input.v0,
            t_grid: input.t_grid,
            stick_tol: input.stick_tol,
            max_events: input.max_events,
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

/// Bracket `[t0 - 1/2, t0 + 1/2]` around the smallest admissible zero of
/// `v0_1 cos t + v0_2 sin t` in `(0, 2 pi)`.
pub fn default_bracket(v0: [f64; 2]) -> Result<(f64, f64)> {
    const MARGIN: f64 = 0.5;
    if v0[0] == 0.0 && v0[1] == 0.0 {
        return Err(Error::InvalidProblem(
            "v0 must be nonzero to derive a bracket".into(),
        ));
    }
    let base = v0[1].atan2(v0[0]) + std::f64::consts::FRAC_PI_2;
    let k_first = ((MARGIN - base) / std::f64::consts::PI).ceil() as i64 - 1;
    for k in k_first..k_first + 6 {
        let t0 = base + k as f64 * std::f64::consts::PI;
        if t0 > MARGIN && t0 < std::f64::consts::TAU - MARGIN {
            return Ok((t0 - MARGIN, t0 + MARGIN));
        }
    }
    Err(Error::InvalidProblem(
        "no switching time with margin 1/2 inside (0, 2 pi)".into(),
    ))
}

impl OscillatorSpec {
    /// Spec with the bracket derived from `v0` and all defaults filled in.
    pub fn new(eps: f64, g: Forcing, v0: [f64; 2]) -> Result<Self> {
        let (a, b) = default_bracket(v0)?;
        let spec = OscillatorSpec {
            eps,
            g,
            horizon: default_horizon(),
            a,
            b,
            v0,
            t_grid: default_t_grid(),
            stick_tol: default_stick_tol(),
            max_events: default_max_events(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps < 0.0 || !self.eps.is_finite() {
            return Err(Error::InvalidProblem(format!(
                "eps must be nonnegative, got {}",
                self.eps
            )));
        }
        let bracket_ordered = self.a > 0.0 && self.a < self.b && self.b < std::f64::consts::TAU;
        if !bracket_ordered {
            return Err(Error::InvalidProblem(format!(
                "bracket must satisfy 0 < a < b < 2 pi, got [{}, {}]",
                self.a, self.b
            )));
        }
        if self.horizon < self.b || !self.horizon.is_finite() {
            return Err(Error::InvalidProblem(format!(
                "horizon {} must reach past the bracket end {}",
                self.horizon, self.b
            )));
        }
        if self.t_grid == 0 {
            return Err(Error::InvalidProblem("t_grid must be at least 1".into()));
        }
        if !self.v0.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidProblem("v0 must be finite".into()));
        }
        if self.stick_tol <= 0.0 || self.stick_tol.is_nan() {
            return Err(Error::InvalidProblem("stick_tol must be positive".into()));
        }
        if self.max_events == 0 {
            return Err(Error::InvalidProblem(
                "max_events must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn with_eps(&self, eps: f64) -> OscillatorSpec {
        OscillatorSpec {
            eps,
            ..self.clone()
        }
    }

    /// The unique zero of `t -> v0_1 cos t + v0_2 sin t` in the bracket,
    /// computed from the arctangent form and validated by a sign scan at
    /// resolution 10^4.
    pub fn base_switch_time(&self) -> Result<f64> {
        self.validate()?;
        let slice = |t: f64| self.v0[0] * t.cos() + self.v0[1] * t.sin();

        let mut scan_changes = 0usize;
        let mut prev = slice(self.a);
        for i in 1..=BRACKET_SCAN_POINTS {
            let t = self.a + (self.b - self.a) * i as f64 / BRACKET_SCAN_POINTS as f64;
            let value = slice(t);
            if prev != 0.0 && value != 0.0 && prev.signum() != value.signum() {
                scan_changes += 1;
            }
            if value != 0.0 {
                prev = value;
            }
        }

        let base = self.v0[1].atan2(self.v0[0]) + std::f64::consts::FRAC_PI_2;
        let mut zeros = Vec::new();
        let k_min = ((self.a - base) / std::f64::consts::PI).floor() as i64;
        for k in k_min..=(k_min + 3) {
            let t0 = base + k as f64 * std::f64::consts::PI;
            if t0 > self.a && t0 < self.b {
                zeros.push(t0);
            }
        }

        let count = scan_changes.max(zeros.len());
        if count > 1 {
            return Err(Error::MultipleZerosInBracket { count });
        }
        let Some(&t0) = zeros.first() else {
            return Err(Error::NoZeroInBracket);
        };
        let derivative = -self.v0[0] * t0.sin() + self.v0[1] * t0.cos();
        if derivative == 0.0 {
            return Err(Error::InvalidProblem(
                "slice derivative vanishes at the base switching time".into(),
            ));
        }
        Ok(t0)
    }

    /// The switching-time family `F(t, v, eps) = x1(t, v, eps) cos t +
    /// x2(t, v, eps) sin t` with base point `(t0, v0, 0)`.
    ///
    /// Trajectories are integrated lazily per `(v, eps)` and memoized, so
    /// repeated evaluations at different `t` are cheap. Evaluations panic if
    /// an underlying integration fails (e.g. sticking contact); call
    /// [`integrate_system`] directly to observe such failures as errors.
    pub fn family(&self) -> Result<PerturbedFamily> {
        let t0 = self.base_switch_time()?;
        let r = (t0 - self.a).min(self.b - t0);
        let spec = Arc::new(self.clone());
        let cache: TrajectoryCache = Arc::new(Mutex::new(HashMap::new()));

        let eval_spec = spec.clone();
        let eval_cache = cache.clone();
        let f = move |t: &DVector<f64>, v: &DVector<f64>, eps: &DVector<f64>| {
            let traj = cached_trajectory(&eval_spec, &eval_cache, [v[0], v[1]], eps[0]);
            let tt = t[0].clamp(0.0, eval_spec.horizon);
            let x = traj.eval(tt);
            DVector::from_vec(vec![x[0] * tt.cos() + x[1] * tt.sin()])
        };

        let jac_spec = spec.clone();
        let jac_cache = cache.clone();
        let jac_t = move |t: &DVector<f64>, v: &DVector<f64>, eps: &DVector<f64>| {
            let traj = cached_trajectory(&jac_spec, &jac_cache, [v[0], v[1]], eps[0]);
            let tt = t[0].clamp(0.0, jac_spec.horizon);
            let x = traj.eval(tt);
            let (u, u_dot) = unrotate(tt, x[0], x[1]);
            let sigma = if u == 0.0 { 1.0 } else { u.signum() };
            let w = eps[0] * (jac_spec.g.eval(tt, u, u_dot) - sigma);
            let x1_dot = -tt.sin() * w;
            let x2_dot = tt.cos() * w;
            let value = x1_dot * tt.cos() - x[0] * tt.sin() + x2_dot * tt.sin() + x[1] * tt.cos();
            DMatrix::from_element(1, 1, value)
        };

        // At eps = 0 the state is constant, so the v-Jacobian of the slice is
        // (cos t, sin t) in closed form; away from zero it falls back to
        // central differences over the memoized trajectories.
        let jv_spec = spec.clone();
        let jv_cache = cache.clone();
        let jac_v = move |t: &DVector<f64>, v: &DVector<f64>, eps: &DVector<f64>| {
            let tt = t[0].clamp(0.0, jv_spec.horizon);
            if eps[0] == 0.0 {
                return DMatrix::from_fn(1, 2, |_, j| if j == 0 { tt.cos() } else { tt.sin() });
            }
            let norm = (tt * tt + v.norm_squared() + eps[0] * eps[0]).sqrt();
            let step = 1e-6 * norm.max(1.0);
            let slice = |vv: [f64; 2]| {
                let traj = cached_trajectory(&jv_spec, &jv_cache, vv, eps[0]);
                let x = traj.eval(tt);
                x[0] * tt.cos() + x[1] * tt.sin()
            };
            DMatrix::from_fn(1, 2, |_, j| {
                let mut plus = [v[0], v[1]];
                let mut minus = [v[0], v[1]];
                plus[j] += step;
                minus[j] -= step;
                (slice(plus) - slice(minus)) / (2.0 * step)
            })
        };

        PerturbedFamily::builder(
            f,
            DVector::from_vec(vec![t0]),
            DVector::from_vec(vec![self.v0[0], self.v0[1]]),
            DVector::from_vec(vec![0.0]),
            r,
        )
        .jac_t(jac_t)
        .jac_v(jac_v)
        .build(&SolverConfig::for_radius(r))
    }
}

type TrajectoryCache = Arc<Mutex<HashMap<[u64; 3], Arc<Trajectory>>>>;

fn cached_trajectory(
    spec: &Arc<OscillatorSpec>,
    cache: &TrajectoryCache,
    v: [f64; 2],
    eps: f64,
) -> Arc<Trajectory> {
    let key = [v[0].to_bits(), v[1].to_bits(), eps.to_bits()];
    if let Some(found) = cache.lock().expect("cache lock").get(&key) {
        return found.clone();
    }
    let traj = integrate_system(&spec.with_eps(eps), v)
        .unwrap_or_else(|e| panic!("switching-family evaluation failed: {e}"));
    let traj = Arc::new(traj);
    cache.lock().expect("cache lock").insert(key, traj.clone());
    traj
}

/// Physical state to rotated coordinates: `x = R(-t) (u, u')`.
pub fn rotate(t: f64, u: f64, u_dot: f64) -> (f64, f64) {
    (u * t.cos() - u_dot * t.sin(), u * t.sin() + u_dot * t.cos())
}

/// Rotated coordinates back to the physical state: `(u, u') = R(t) x`.
pub fn unrotate(t: f64, x1: f64, x2: f64) -> (f64, f64) {
    (x1 * t.cos() + x2 * t.sin(), -x1 * t.sin() + x2 * t.cos())
}

/// An integrated trajectory in rotated coordinates, with the detected sign
/// switches of `u` and, for `eps > 0`, the scaled deviation field
/// `y = (x - v) / eps` on the output grid.
#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub eps: f64,
    pub v: [f64; 2],
    pub times: Vec<f64>,
    pub states: Vec<[f64; 2]>,
    pub events: Vec<f64>,
    pub y_field: Option<Vec<[f64; 2]>>,
    #[serde(skip)]
    segments: Vec<DenseSegment>,
}

impl Trajectory {
    /// State at any time in `[0, horizon]` from the stepper's dense output.
    pub fn eval(&self, t: f64) -> [f64; 2] {
        let x = eval_segments(&self.segments, t);
        [x[0], x[1]]
    }

    /// `u(t) = x1 cos t + x2 sin t` from the dense output.
    pub fn eval_u(&self, t: f64) -> f64 {
        let x = self.eval(t);
        x[0] * t.cos() + x[1] * t.sin()
    }

    /// Reconstructed physical state `(u, u')` at `t`.
    pub fn eval_physical(&self, t: f64) -> (f64, f64) {
        let x = self.eval(t);
        unrotate(t, x[0], x[1])
    }
}

fn eval_segments(segments: &[DenseSegment], t: f64) -> Vector2<f64> {
    let first = segments
        .first()
        .expect("trajectory has at least one segment");
    let last = segments
        .last()
        .expect("trajectory has at least one segment");
    let t = t.clamp(first.t_start, last.t_end);
    let idx = segments
        .partition_point(|s| s.t_end < t)
        .min(segments.len() - 1);
    segments[idx].eval(t)
}

fn u_on(segment: &DenseSegment, t: f64) -> f64 {
    let x = segment.eval(t);
    x[0] * t.cos() + x[1] * t.sin()
}

/// Sign driving the current smooth piece, resolved at a surface point via
/// the one-sided accelerations.
fn initial_sign(spec: &OscillatorSpec, t: f64, u: f64, u_dot: f64) -> Result<f64> {
    if u != 0.0 {
        return Ok(u.signum());
    }
    if u_dot.abs() > spec.stick_tol {
        return Ok(u_dot.signum());
    }
    let g = spec.g.eval(t, u, u_dot);
    let acc_above = -u - spec.eps + spec.eps * g;
    let acc_below = -u + spec.eps + spec.eps * g;
    if acc_above < 0.0 && acc_below > 0.0 {
        return Err(Error::StickDetected { t });
    }
    Ok(if acc_above >= 0.0 { 1.0 } else { -1.0 })
}

/// Scans one accepted step for a sign change of `u` away from the piece sign
/// and returns the bisected crossing time.
fn scan_segment(segment: &DenseSegment, sigma: f64, armed: &mut bool) -> Option<f64> {
    let span = segment.t_end - segment.t_start;
    if span <= 0.0 {
        return None;
    }
    let mut prev_t = segment.t_start;
    let mut prev_psi = sigma * u_on(segment, prev_t);
    if !*armed && prev_psi >= ARM_TOL {
        *armed = true;
    }
    for i in 1..=EVENT_SCAN_POINTS {
        let t = segment.t_start + span * i as f64 / EVENT_SCAN_POINTS as f64;
        let psi = sigma * u_on(segment, t);
        if *armed && prev_psi >= 0.0 && psi < 0.0 {
            return Some(bisect_crossing(segment, sigma, prev_t, t));
        }
        if !*armed && psi >= ARM_TOL {
            *armed = true;
        }
        prev_t = t;
        prev_psi = psi;
    }
    None
}

fn bisect_crossing(segment: &DenseSegment, sigma: f64, mut lo: f64, mut hi: f64) -> f64 {
    // Invariant: sigma * u(lo) >= 0 > sigma * u(hi).
    for _ in 0..EVENT_BISECT_MAX {
        if hi - lo <= EVENT_TIME_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if sigma * u_on(segment, mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Event-driven integration of the rotated system from `x(0) = v`.
///
/// Smooth pieces are integrated with the embedded RK 5(4) stepper at
/// relative tolerance 1e-10; sign switches of `u` are located on the dense
/// output and refined by bisection to time tolerance 1e-12, and the
/// integration restarts there with the sign flipped. Fails with
/// [`Error::StickDetected`] when a switch is non-transversal and both
/// one-sided fields push toward the surface.
pub fn integrate_system(spec: &OscillatorSpec, v: [f64; 2]) -> Result<Trajectory> {
    spec.validate()?;
    let ctrl = StepControl {
        rtol: RTOL,
        atol: ATOL,
        h_max: MAX_STEP,
        max_steps: 2_000_000,
    };

    let mut segments: Vec<DenseSegment> = Vec::new();
    let mut events: Vec<f64> = Vec::new();
    let mut t = 0.0;
    let mut state = Vector2::new(v[0], v[1]);

    let (u0, u_dot0) = unrotate(0.0, state[0], state[1]);
    let mut sigma = initial_sign(spec, 0.0, u0, u_dot0)?;

    while t < spec.horizon {
        let eps = spec.eps;
        let g = spec.g.clone();
        let piece_sign = sigma;
        let rhs = move |tt: f64, x: &Vector2<f64>| {
            let (u, u_dot) = unrotate(tt, x[0], x[1]);
            let w = eps * (g.eval(tt, u, u_dot) - piece_sign);
            Vector2::new(-tt.sin() * w, tt.cos() * w)
        };

        let mut armed = false;
        let mut crossing: Option<f64> = None;
        let (t_stop, x_stop) =
            integrate_dense(
                rhs,
                t,
                spec.horizon,
                state,
                &ctrl,
                |seg| match scan_segment(seg, piece_sign, &mut armed) {
                    Some(tau) => {
                        segments.push(seg.truncated(tau));
                        crossing = Some(tau);
                        SegmentAction::Halt(tau)
                    }
                    None => {
                        segments.push(seg.clone());
                        SegmentAction::Continue
                    }
                },
            )
            .map_err(Error::Integrator)?;

        t = t_stop;
        state = x_stop;

        match crossing {
            None => break,
            Some(t_event) => {
                let (u_e, u_dot_e) = unrotate(t_event, state[0], state[1]);
                if u_dot_e.abs() <= spec.stick_tol {
                    let g_e = spec.g.eval(t_event, u_e, u_dot_e);
                    let acc_above = -u_e - spec.eps + spec.eps * g_e;
                    let acc_below = -u_e + spec.eps + spec.eps * g_e;
                    if acc_above < 0.0 && acc_below > 0.0 {
                        return Err(Error::StickDetected { t: t_event });
                    }
                }
                if events.len() >= spec.max_events {
                    return Err(Error::MaxEventsExceeded {
                        cap: spec.max_events,
                    });
                }
                events.push(t_event);
                sigma = -sigma;
            }
        }
    }

    let n = spec.t_grid;
    let times: Vec<f64> = (0..=n)
        .map(|i| spec.horizon * i as f64 / n as f64)
        .collect();
    let states: Vec<[f64; 2]> = times
        .iter()
        .map(|&tt| {
            let x = eval_segments(&segments, tt);
            [x[0], x[1]]
        })
        .collect();
    let y_field = (spec.eps > 0.0).then(|| {
        states
            .iter()
            .map(|x| [(x[0] - v[0]) / spec.eps, (x[1] - v[1]) / spec.eps])
            .collect()
    });

    Ok(Trajectory {
        eps: spec.eps,
        v,
        times,
        states,
        events,
        y_field,
        segments,
    })
}

/// Per-eps row of an assumption-(F) verification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionFRow {
    pub eps: f64,
    pub sup_y: f64,
    pub lip_quotient: f64,
}

/// Report of [`verify_assumption_f`]: the scaled deviation field must stay
/// bounded and keep a stable Lipschitz quotient as `eps` shrinks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionFReport {
    pub rows: Vec<AssumptionFRow>,
    pub sup_spread: f64,
    pub lip_spread: f64,
    pub passed: bool,
}

fn relative_spread(values: impl Iterator<Item = f64>) -> f64 {
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for v in values {
        max = max.max(v);
        min = min.min(v);
    }
    if max <= 0.0 {
        0.0
    } else {
        (max - min) / max
    }
}

/// Measures `y(t, v, eps) = (x(t, v, eps) - v) / eps` on a sample grid for
/// each rung of the eps ladder: the sup norm of `y` and its sampled
/// Lipschitz quotient in `(t, v)` jointly. Passes when both stay within a
/// 20% spread across the ladder.
pub fn verify_assumption_f(
    spec: &OscillatorSpec,
    eps_ladder: &[f64],
    v_samples: &[[f64; 2]],
    t_samples: &[f64],
) -> Result<AssumptionFReport> {
    if eps_ladder.is_empty() || v_samples.is_empty() || t_samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !eps_ladder.iter().all(|&e| e > 0.0) {
        return Err(Error::InvalidProblem(
            "eps ladder entries must be positive".into(),
        ));
    }
    if !t_samples.iter().all(|&t| (0.0..=spec.horizon).contains(&t)) {
        return Err(Error::InvalidProblem(
            "t samples must lie in [0, horizon]".into(),
        ));
    }

    let mut rows = Vec::with_capacity(eps_ladder.len());
    for &eps in eps_ladder {
        let mut points: Vec<(f64, [f64; 2], Vector2<f64>)> = Vec::new();
        for &v in v_samples {
            let traj = integrate_system(&spec.with_eps(eps), v)?;
            for &t in t_samples {
                let x = traj.eval(t);
                let y = Vector2::new((x[0] - v[0]) / eps, (x[1] - v[1]) / eps);
                points.push((t, v, y));
            }
        }

        let sup_y = points.iter().map(|p| p.2.norm()).fold(0.0, f64::max);
        let mut lip_quotient: f64 = 0.0;
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                let (t_i, v_i, y_i) = &points[i];
                let (t_j, v_j, y_j) = &points[j];
                let gap =
                    ((t_i - t_j).powi(2) + (v_i[0] - v_j[0]).powi(2) + (v_i[1] - v_j[1]).powi(2))
                        .sqrt();
                if gap < 1e-12 {
                    continue;
                }
                lip_quotient = lip_quotient.max((y_i - y_j).norm() / gap);
            }
        }
        rows.push(AssumptionFRow {
            eps,
            sup_y,
            lip_quotient,
        });
    }

    let sup_spread = relative_spread(rows.iter().map(|r| r.sup_y));
    let lip_spread = relative_spread(rows.iter().map(|r| r.lip_quotient));
    let passed = sup_spread <= 0.20 && lip_spread <= 0.20;
    Ok(AssumptionFReport {
        rows,
        sup_spread,
        lip_spread,
        passed,
    })
}

/// Certified exclusion region around a switching time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchReport {
    pub theta: f64,
    pub modulus: f64,
    pub exclusion_interval: [f64; 2],
    pub nv_ok: bool,
    pub min_abs_f: f64,
    pub margin: f64,
    pub eps: f64,
    pub v1: [f64; 2],
    pub v2: [f64; 2],
    pub delta: f64,
}

/// Checks that the switching family does not vanish outside the exclusion
/// interval of width `(modulus + margin) ||v1 - v2||` around `theta(v1, eps)`.
///
/// Requires a prior delta ladder scan certifying the ball the arguments live
/// in ([`Error::DeltaBallUnknown`] otherwise). Samples `|F|` on a
/// `grid.0 x grid.1` grid over the bracket (minus the exclusion interval)
/// times the segment `[v1, v2]`, and additionally requires every slice
/// `F(., v, eps)` to have exactly one sign change on the bracket, located
/// inside the exclusion interval.
#[allow(clippy::too_many_arguments)]
pub fn exclusion_region_check(
    spec: &OscillatorSpec,
    family: &PerturbedFamily,
    v1: [f64; 2],
    v2: [f64; 2],
    eps: f64,
    margin: f64,
    grid: (usize, usize),
    delta_cert: Option<&DeltaScan>,
    config: &SolverConfig,
) -> Result<SwitchReport> {
    let scan = delta_cert.ok_or(Error::DeltaBallUnknown)?;
    let delta = scan.best.ok_or(Error::DeltaBallUnknown)?;
    if margin <= 0.0 || margin.is_nan() {
        return Err(Error::InvalidConfig(format!(
            "margin must be positive, got {margin}"
        )));
    }
    if grid.0 < 2 || grid.1 < 1 {
        return Err(Error::InvalidConfig(
            "grid must have at least 2 x 1 points".into(),
        ));
    }

    let v0 = family.v0();
    for v in [v1, v2] {
        let dist = ((v[0] - v0[0]).powi(2) + (v[1] - v0[1]).powi(2)).sqrt();
        if dist > delta * (1.0 + 1e-9) {
            return Err(Error::OutsideDeltaBall { dist, delta });
        }
    }
    let eps_dist = (eps - family.eps0()[0]).abs();
    if eps_dist > delta * (1.0 + 1e-9) {
        return Err(Error::OutsideDeltaBall {
            dist: eps_dist,
            delta,
        });
    }

    let eps_vec = DVector::from_vec(vec![eps]);
    let theta = solve_theta(
        family,
        &DVector::from_vec(vec![v1[0], v1[1]]),
        &eps_vec,
        config,
    )?[0];
    let modulus = theoretical_modulus(family, config)?;
    let seg_gap = ((v1[0] - v2[0]).powi(2) + (v1[1] - v2[1]).powi(2)).sqrt();
    let width = (modulus + margin) * seg_gap;
    let (lo, hi) = (theta - width, theta + width);

    let (n_t, n_v) = grid;
    let t_at = |i: usize| spec.a + (spec.b - spec.a) * i as f64 / (n_t - 1) as f64;

    let mut min_abs_f = f64::INFINITY;
    let mut outside_samples = 0usize;
    let mut slices_ok = true;

    for j in 0..n_v {
        let s = if n_v == 1 {
            0.0
        } else {
            j as f64 / (n_v - 1) as f64
        };
        let v = DVector::from_vec(vec![
            v1[0] + s * (v2[0] - v1[0]),
            v1[1] + s * (v2[1] - v1[1]),
        ]);
        let slice = |t: f64| family.eval(&DVector::from_vec(vec![t]), &v, &eps_vec)[0];

        let values: Vec<(f64, f64)> = (0..n_t).map(|i| (t_at(i), slice(t_at(i)))).collect();
        for &(t, f) in &values {
            if t < lo || t > hi {
                min_abs_f = min_abs_f.min(f.abs());
                outside_samples += 1;
            }
        }

        let mut brackets: Vec<(f64, f64)> = Vec::new();
        for window in values.windows(2) {
            let (t_a, f_a) = window[0];
            let (t_b, f_b) = window[1];
            if f_a == 0.0 {
                brackets.push((t_a, t_a));
            } else if f_b != 0.0 && f_a.signum() != f_b.signum() {
                brackets.push((t_a, t_b));
            }
        }
        if let Some(&(t_last, f_last)) = values.last() {
            if f_last == 0.0 {
                brackets.push((t_last, t_last));
            }
        }

        if brackets.len() != 1 {
            slices_ok = false;
            continue;
        }
        let (mut b_lo, mut b_hi) = brackets[0];
        while b_hi - b_lo > EVENT_TIME_TOL {
            let mid = 0.5 * (b_lo + b_hi);
            if slice(mid).signum() == slice(b_lo).signum() {
                b_lo = mid;
            } else {
                b_hi = mid;
            }
        }
        let zero = 0.5 * (b_lo + b_hi);
        if zero < lo - EXCLUSION_SLACK || zero > hi + EXCLUSION_SLACK {
            slices_ok = false;
        }
    }

    if outside_samples == 0 {
        return Err(Error::InvalidConfig(
            "exclusion interval covers the whole bracket; nothing to verify".into(),
        ));
    }

    Ok(SwitchReport {
        theta,
        modulus,
        exclusion_interval: [lo, hi],
        nv_ok: slices_ok && min_abs_f > 0.0,
        min_abs_f,
        margin,
        eps,
        v1,
        v2,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::delta_ladder_scan;
    use approx::assert_abs_diff_eq;
    use lipimpl_oracles::PiecewiseOscillator;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    fn base_spec(eps: f64) -> OscillatorSpec {
        OscillatorSpec::new(eps, Forcing::Zero, [1.0, 0.0]).unwrap()
    }

    #[test]
    fn rotation_is_identity_at_time_zero() {
        assert_eq!(rotate(0.0, 0.3, -0.7), (0.3, -0.7));
        assert_eq!(unrotate(0.0, 0.3, -0.7), (0.3, -0.7));
    }

    #[test]
    fn unrotate_matches_matrix_at_quarter_turn() {
        let (u, u_dot) = unrotate(FRAC_PI_2, 1.0, 0.0);
        assert_abs_diff_eq!(u, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u_dot, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_eps_states_are_bitwise_constant() {
        let spec = base_spec(0.0);
        let traj = integrate_system(&spec, [1.0, 0.0]).unwrap();
        assert!(traj.states.iter().all(|s| s[0] == 1.0 && s[1] == 0.0));
        assert!(traj.y_field.is_none());
        // Events are still the zeros of cos t.
        assert_eq!(traj.events.len(), 2);
        assert_abs_diff_eq!(traj.events[0], FRAC_PI_2, epsilon = 1e-11);
        assert_abs_diff_eq!(traj.events[1], 1.5 * PI, epsilon = 1e-11);
    }

    #[test]
    fn trajectory_matches_closed_form_oracle() {
        let eps = 0.01;
        let spec = base_spec(eps);
        let traj = integrate_system(&spec, [1.0, 0.0]).unwrap();
        let oracle = PiecewiseOscillator::new(eps, [1.0, 0.0], TAU);

        assert_eq!(traj.events.len(), oracle.events().len());
        for (&got, &want) in traj.events.iter().zip(oracle.events()) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-10);
        }
        let mut worst: f64 = 0.0;
        for i in 0..=400 {
            let t = TAU * i as f64 / 400.0;
            let x = traj.eval(t);
            let want = oracle.x(t);
            worst = worst.max((x[0] - want[0]).abs().max((x[1] - want[1]).abs()));
        }
        assert!(worst <= 1e-8, "sup-norm gap {worst}");
    }

    #[test]
    fn first_event_matches_oracle_to_tight_tolerance() {
        for eps in [1e-3, 1e-2, 1e-1] {
            let traj = integrate_system(&base_spec(eps), [1.0, 0.0]).unwrap();
            let oracle = PiecewiseOscillator::new(eps, [1.0, 0.0], TAU);
            assert_abs_diff_eq!(
                traj.events[0],
                oracle.first_event().unwrap(),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn states_start_exactly_at_v() {
        let traj = integrate_system(&base_spec(0.05), [0.9, -0.2]).unwrap();
        assert_eq!(traj.states[0], [0.9, -0.2]);
        assert_eq!(traj.eval(0.0), [0.9, -0.2]);
        let y0 = traj.y_field.as_ref().unwrap()[0];
        assert_eq!(y0, [0.0, 0.0]);
    }

    #[test]
    fn rotation_round_trip_on_trajectory_states() {
        let traj = integrate_system(&base_spec(0.1), [1.0, 0.0]).unwrap();
        for (&t, s) in traj.times.iter().zip(&traj.states) {
            let (u, u_dot) = unrotate(t, s[0], s[1]);
            let (x1, x2) = rotate(t, u, u_dot);
            assert_abs_diff_eq!(x1, s[0], epsilon = 1e-14);
            assert_abs_diff_eq!(x2, s[1], epsilon = 1e-14);
        }
    }

    #[test]
    fn reconstructed_state_satisfies_the_equation() {
        // Second difference of the reconstructed u against the one-sided
        // field, away from events; tolerance is set by the h^2 truncation of
        // the finite difference, not by the integrator.
        let eps = 0.1;
        let traj = integrate_system(&base_spec(eps), [1.0, 0.0]).unwrap();
        let h = 3e-3;
        let mut worst: f64 = 0.0;
        for i in 1..200 {
            let t = TAU * i as f64 / 200.0;
            if traj.events.iter().any(|&e| (t - e).abs() < 3.0 * h) || t + h > TAU {
                continue;
            }
            let (u, _) = traj.eval_physical(t);
            let (u_prev, _) = traj.eval_physical(t - h);
            let (u_next, _) = traj.eval_physical(t + h);
            let u_dd = (u_next - 2.0 * u + u_prev) / (h * h);
            let residual = u_dd + u + eps * u.signum();
            worst = worst.max(residual.abs());
        }
        assert!(worst <= 1e-5, "equation residual {worst}");
    }

    #[test]
    fn cos_forcing_satisfies_its_equation() {
        let eps = 0.05;
        let spec = OscillatorSpec::new(eps, Forcing::CosT, [1.0, 0.0]).unwrap();
        let traj = integrate_system(&spec, [1.0, 0.0]).unwrap();
        assert!(!traj.events.is_empty());
        let h = 3e-3;
        let mut worst: f64 = 0.0;
        for i in 1..200 {
            let t = TAU * i as f64 / 200.0;
            if traj.events.iter().any(|&e| (t - e).abs() < 3.0 * h) || t + h > TAU {
                continue;
            }
            let (u, _) = traj.eval_physical(t);
            let (u_prev, _) = traj.eval_physical(t - h);
            let (u_next, _) = traj.eval_physical(t + h);
            let u_dd = (u_next - 2.0 * u + u_prev) / (h * h);
            let residual = u_dd + u + eps * u.signum() - eps * t.cos();
            worst = worst.max(residual.abs());
        }
        assert!(worst <= 1e-5, "equation residual {worst}");
    }

    #[test]
    fn base_switch_time_known_cases() {
        let mk = |v0: [f64; 2], a: f64, b: f64| OscillatorSpec {
            eps: 0.0,
            g: Forcing::Zero,
            horizon: TAU,
            a,
            b,
            v0,
            t_grid: 16,
            stick_tol: 1e-3,
            max_events: 100,
        };
        assert_abs_diff_eq!(
            mk([1.0, 0.0], 1.0, 2.0).base_switch_time().unwrap(),
            FRAC_PI_2,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            mk([1.0, 1.0], 2.0, 3.0).base_switch_time().unwrap(),
            0.75 * PI,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            mk([0.0, 1.0], 3.0, 3.5).base_switch_time().unwrap(),
            PI,
            epsilon = 1e-14
        );
        assert!(matches!(
            mk([1.0, 0.0], 2.0, 3.0).base_switch_time(),
            Err(Error::NoZeroInBracket)
        ));
        assert!(matches!(
            mk([1.0, 0.0], 1.0, 5.0).base_switch_time(),
            Err(Error::MultipleZerosInBracket { .. })
        ));
    }

    #[test]
    fn sticking_contact_is_detected() {
        let spec = OscillatorSpec::new(0.1, Forcing::Zero, [1.0, 0.0]).unwrap();
        let err = integrate_system(&spec, [1e-6, 0.0]).unwrap_err();
        assert!(matches!(err, Error::StickDetected { .. }), "{err:?}");
    }

    #[test]
    fn family_solves_switch_times_against_oracle() {
        let spec = base_spec(0.01);
        let family = spec.family().unwrap();
        let config = SolverConfig::for_radius(family.radius());
        let theta = solve_theta(
            &family,
            &DVector::from_vec(vec![1.0, 0.0]),
            &DVector::from_vec(vec![0.01]),
            &config,
        )
        .unwrap();
        let oracle = PiecewiseOscillator::new(0.01, [1.0, 0.0], TAU);
        assert_abs_diff_eq!(theta[0], oracle.first_event().unwrap(), epsilon = 1e-8);
    }

    #[test]
    fn family_modulus_is_exactly_one_at_the_base() {
        let spec = base_spec(0.01);
        let family = spec.family().unwrap();
        let config = SolverConfig::for_radius(family.radius());
        assert_eq!(theoretical_modulus(&family, &config).unwrap(), 1.0);
    }

    #[test]
    fn unique_zero_bracket_scan_in_the_delta_ball() {
        let spec = base_spec(0.01);
        let family = spec.family().unwrap();
        let eps_vec = DVector::from_vec(vec![0.01]);
        let mut rng = crate::sample::rng_from_seed(13);
        for _ in 0..4 {
            let v = crate::sample::uniform_in_ball(&mut rng, family.v0(), 1e-2);
            let slice = |t: f64| family.eval(&DVector::from_vec(vec![t]), &v, &eps_vec)[0];
            let mut changes = 0;
            let mut prev = slice(spec.a);
            for i in 1..=10_000 {
                let t = spec.a + (spec.b - spec.a) * i as f64 / 10_000.0;
                let value = slice(t);
                if prev != 0.0 && value != 0.0 && prev.signum() != value.signum() {
                    changes += 1;
                }
                if value != 0.0 {
                    prev = value;
                }
            }
            assert_eq!(changes, 1);
        }
    }

    #[test]
    fn verify_assumption_f_on_the_ladder() {
        let spec = base_spec(0.01);
        let v_samples: Vec<[f64; 2]> = (0..8)
            .map(|i| {
                let angle = TAU * i as f64 / 8.0;
                [1.0 + 0.02 * angle.cos(), 0.02 * angle.sin()]
            })
            .chain([[1.0, 0.0]])
            .collect();
        let t_samples: Vec<f64> = (0..=32).map(|i| TAU * i as f64 / 32.0).collect();
        let report =
            verify_assumption_f(&spec, &[1e-1, 1e-2, 1e-3], &v_samples, &t_samples).unwrap();
        assert!(report.passed, "report: {report:?}");
        for row in &report.rows {
            assert!(row.sup_y <= 2.0_f64.sqrt() * TAU, "sup_y {}", row.sup_y);
        }
        // y(0, v, eps) = 0 exactly, so the sup is attained later in the run.
        assert!(report.rows.iter().all(|r| r.sup_y > 0.0));
    }

    #[test]
    fn exclusion_check_degenerate_segment() {
        let spec = base_spec(0.0);
        let family = spec.family().unwrap();
        let config = SolverConfig::for_radius(family.radius());
        let scan = delta_ladder_scan(&family, &[], &[1e-1, 1e-2], 0.1, 16, 5, &config).unwrap();
        let report = exclusion_region_check(
            &spec,
            &family,
            [1.0, 0.0],
            [1.0, 0.0],
            0.0,
            0.1,
            (200, 5),
            Some(&scan),
            &config,
        )
        .unwrap();
        assert_eq!(report.theta, FRAC_PI_2);
        assert_eq!(report.modulus, 1.0);
        assert!(report.nv_ok);
        assert!(report.min_abs_f > 0.0);
    }

    #[test]
    fn exclusion_check_requires_a_delta_scan() {
        let spec = base_spec(0.01);
        let family = spec.family().unwrap();
        let config = SolverConfig::for_radius(family.radius());
        let err = exclusion_region_check(
            &spec,
            &family,
            [1.0, 0.0],
            [1.01, 0.0],
            0.01,
            0.1,
            (100, 5),
            None,
            &config,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DeltaBallUnknown));
    }

    #[test]
    fn oscillator_spec_deserializes_with_derived_bracket() {
        let spec: OscillatorSpec =
            serde_json::from_str(r#"{"eps": 0.01, "g": "zero", "v0": [1.0, 0.0]}"#).unwrap();
        assert_abs_diff_eq!(spec.a, FRAC_PI_2 - 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(spec.b, FRAC_PI_2 + 0.5, epsilon = 1e-14);
        assert_eq!(spec.t_grid, 400);

        let err = serde_json::from_str::<OscillatorSpec>(r#"{"eps": 0.01, "bogus": 1}"#);
        assert!(err.is_err());

        let err = serde_json::from_str::<OscillatorSpec>(r#"{"eps": 0.01, "a": 1.0}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("together"), "{err}");
    }

    #[test]
    fn event_cap_is_enforced() {
        let spec = OscillatorSpec {
            max_events: 1,
            ..base_spec(0.0)
        };
        let err = integrate_system(&spec, [1.0, 0.0]).unwrap_err();
        assert!(
            matches!(err, Error::MaxEventsExceeded { cap: 1 }),
            "{err:?}"
        );
    }
}
