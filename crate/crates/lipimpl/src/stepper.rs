//! Embedded Dormand-Prince 5(4) stepper with continuous (dense) output.
//!
//! Coefficients follow Hairer, Nørsett & Wanner, "Solving Ordinary
//! Differential Equations I", including the standard 4th-order interpolant.
//! The stepper is specialised to the two-dimensional systems integrated in
//! this crate and hands every accepted step to a visitor as a
//! [`DenseSegment`], so callers can watch for events on the interpolant and
//! halt mid-step.

use nalgebra::Vector2;

type V2 = Vector2<f64>;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const MIN_SCALE: f64 = 0.2;
const MAX_SCALE: f64 = 10.0;

/// Tolerances and caps for one integration run.
#[derive(Clone, Debug)]
pub(crate) struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

/// One accepted step with its interpolating polynomial.
///
/// The polynomial is parameterised over the full step `[t_start, t_start + h]`;
/// `t_end` marks the validity range and shrinks when a segment is truncated
/// at an event.
#[derive(Clone, Debug)]
pub(crate) struct DenseSegment {
    pub t_start: f64,
    pub h: f64,
    pub t_end: f64,
    coeffs: [V2; 5],
}

impl DenseSegment {
    pub fn eval(&self, t: f64) -> V2 {
        let s = (t - self.t_start) / self.h;
        let [c1, c2, c3, c4, c5] = self.coeffs;
        c1 + (c2 + (c3 + (c4 + c5 * (1.0 - s)) * s) * (1.0 - s)) * s
    }

    pub fn truncated(&self, t_end: f64) -> DenseSegment {
        DenseSegment {
            t_end,
            ..self.clone()
        }
    }
}

/// What the visitor wants after inspecting an accepted step.
pub(crate) enum SegmentAction {
    Continue,
    /// Stop the run at the given time inside the segment.
    Halt(f64),
}

/// Integrates `y' = rhs(t, y)` over `[t0, tf]`, presenting each accepted step
/// to `visit`. Returns the final `(t, y)`, which is `(tf, y(tf))` unless the
/// visitor halted earlier.
pub(crate) fn integrate_dense<F, V>(
    rhs: F,
    t0: f64,
    tf: f64,
    y0: V2,
    ctrl: &StepControl,
    mut visit: V,
) -> Result<(f64, V2), String>
where
    F: Fn(f64, &V2) -> V2,
    V: FnMut(&DenseSegment) -> SegmentAction,
{
    if tf <= t0 || tf.is_nan() || t0.is_nan() {
        return Ok((t0, y0));
    }
    let mut t = t0;
    let mut y = y0;
    let mut k1 = rhs(t, &y);
    let mut h = (ctrl.h_max.min(tf - t0) * 0.1).max(1e-12);
    let mut steps = 0usize;

    while t < tf {
        steps += 1;
        if steps > ctrl.max_steps {
            return Err(format!("step cap {} exceeded", ctrl.max_steps));
        }
        h = h.min(ctrl.h_max).min(tf - t);
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(format!("step size underflow at t = {t}"));
        }

        let k2 = rhs(t + C2 * h, &(y + k1 * (A21 * h)));
        let k3 = rhs(t + C3 * h, &(y + (k1 * A31 + k2 * A32) * h));
        let k4 = rhs(t + C4 * h, &(y + (k1 * A41 + k2 * A42 + k3 * A43) * h));
        let k5 = rhs(
            t + C5 * h,
            &(y + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * h),
        );
        let k6 = rhs(
            t + h,
            &(y + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * h),
        );
        let y_new = y + (k1 * A71 + k3 * A73 + k4 * A74 + k5 * A75 + k6 * A76) * h;
        let k7 = rhs(t + h, &y_new);

        let err = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * h;
        let mut err_norm: f64 = 0.0;
        for i in 0..2 {
            let scale = ctrl.atol + ctrl.rtol * y[i].abs().max(y_new[i].abs());
            err_norm = err_norm.max((err[i] / scale).abs());
        }

        if err_norm <= 1.0 {
            let y_diff = y_new - y;
            let segment = DenseSegment {
                t_start: t,
                h,
                t_end: if tf - (t + h) < 1e-13 * tf.abs().max(1.0) {
                    tf
                } else {
                    t + h
                },
                coeffs: [
                    y,
                    y_diff,
                    k1 * h - y_diff,
                    y_diff * 2.0 - (k1 + k7) * h,
                    (k1 * D1 + k3 * D3 + k4 * D4 + k5 * D5 + k6 * D6 + k7 * D7) * h,
                ],
            };
            if let SegmentAction::Halt(tau) = visit(&segment) {
                return Ok((tau, segment.eval(tau)));
            }
            t = segment.t_end;
            y = y_new;
            k1 = k7;
            let scale = if err_norm == 0.0 {
                MAX_SCALE
            } else {
                (SAFETY * err_norm.powf(-0.2)).clamp(MIN_SCALE, MAX_SCALE)
            };
            h *= scale;
        } else {
            h *= (SAFETY * err_norm.powf(-0.2)).clamp(MIN_SCALE, 1.0);
        }
    }
    Ok((t, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::TAU;

    fn control() -> StepControl {
        StepControl {
            rtol: 1e-10,
            atol: 1e-12,
            h_max: 0.05,
            max_steps: 1_000_000,
        }
    }

    #[test]
    fn harmonic_oscillator_over_one_period() {
        let rhs = |_t: f64, y: &V2| Vector2::new(y[1], -y[0]);
        let (t, y) = integrate_dense(rhs, 0.0, TAU, Vector2::new(1.0, 0.0), &control(), |_| {
            SegmentAction::Continue
        })
        .unwrap();
        assert_eq!(t, TAU);
        assert_abs_diff_eq!(y[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(y[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn dense_output_tracks_the_true_solution() {
        let rhs = |_t: f64, y: &V2| Vector2::new(y[1], -y[0]);
        let mut worst: f64 = 0.0;
        integrate_dense(rhs, 0.0, TAU, Vector2::new(1.0, 0.0), &control(), |seg| {
            for i in 0..=8 {
                let tau = seg.t_start + (seg.t_end - seg.t_start) * i as f64 / 8.0;
                let approx_val = seg.eval(tau);
                worst = worst.max((approx_val[0] - tau.cos()).abs());
                worst = worst.max((approx_val[1] + tau.sin()).abs());
            }
            SegmentAction::Continue
        })
        .unwrap();
        assert!(worst < 1e-9, "dense output error {worst}");
    }

    #[test]
    fn zero_field_takes_exact_giant_strides() {
        let rhs = |_t: f64, _y: &V2| Vector2::new(0.0, 0.0);
        let start = Vector2::new(0.25, -1.5);
        let (_, y) = integrate_dense(rhs, 0.0, TAU, start, &control(), |seg| {
            assert_eq!(seg.eval(0.5 * (seg.t_start + seg.t_end)), start);
            SegmentAction::Continue
        })
        .unwrap();
        assert_eq!(y, start);
    }

    #[test]
    fn visitor_can_halt_mid_step() {
        let rhs = |_t: f64, _y: &V2| Vector2::new(1.0, 0.0);
        let (t, y) = integrate_dense(rhs, 0.0, 1.0, Vector2::zeros(), &control(), |seg| {
            if seg.t_end >= 0.25 {
                SegmentAction::Halt(0.25)
            } else {
                SegmentAction::Continue
            }
        })
        .unwrap();
        assert_abs_diff_eq!(t, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(y[0], 0.25, epsilon = 1e-12);
    }
}
