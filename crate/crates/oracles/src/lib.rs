//! Reference solutions computed by routes independent of the main library.
//!
//! Nothing here touches the solver code paths under test: roots come from
//! bisection, oscillator trajectories from per-piece closed forms, and
//! switching times from explicit trigonometry. The crate is a dev-dependency
//! only and is never part of the production build.

/// Bisection root finder on a bracket with a sign change.
///
/// Returns `None` when `[a, b]` does not bracket a sign change. The returned
/// abscissa is within `tol` of a zero of `f`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Option<f64> {
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Some(lo);
    }
    if f_hi == 0.0 {
        return Some(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol {
            return Some(mid);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Some(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Zero of `v1 cos t + v2 sin t` closest to `near`.
///
/// The zeros are `atan2(v2, v1) + pi/2 + k pi`.
pub fn trig_switch_time(v: [f64; 2], near: f64) -> f64 {
    let phase = v[1].atan2(v[0]);
    let base = phase + std::f64::consts::FRAC_PI_2;
    let k = ((near - base) / std::f64::consts::PI).round();
    base + k * std::f64::consts::PI
}

/// One smooth arc of the piecewise solution: on `[start, end]` the
/// displacement is `u(t) = -eps * sigma + a cos t + b sin t`.
#[derive(Clone, Debug)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub sigma: f64,
    pub a: f64,
    pub b: f64,
    pub eps: f64,
}

impl Piece {
    pub fn u(&self, t: f64) -> f64 {
        -self.eps * self.sigma + self.a * t.cos() + self.b * t.sin()
    }

    pub fn u_dot(&self, t: f64) -> f64 {
        -self.a * t.sin() + self.b * t.cos()
    }
}

/// Closed-form trajectory of `u'' + u = -eps * sign(u)` pieced together at
/// the sign switches of `u`.
#[derive(Clone, Debug)]
pub struct PiecewiseOscillator {
    pieces: Vec<Piece>,
    events: Vec<f64>,
    horizon: f64,
}

impl PiecewiseOscillator {
    /// Builds the solution for the initial state `u(0) = v[0]`, `u'(0) = v[1]`
    /// over `[0, horizon]`. (At `t = 0` the rotated and physical coordinates
    /// coincide.)
    pub fn new(eps: f64, v: [f64; 2], horizon: f64) -> Self {
        let mut pieces = Vec::new();
        let mut events = Vec::new();

        let mut t = 0.0;
        let mut u = v[0];
        let mut u_dot = v[1];
        let mut sigma = if u != 0.0 { u.signum() } else { u_dot.signum() };

        while t < horizon {
            let a = (u + eps * sigma) * t.cos() - u_dot * t.sin();
            let b = (u + eps * sigma) * t.sin() + u_dot * t.cos();
            let piece = Piece {
                start: t,
                end: horizon,
                sigma,
                a,
                b,
                eps,
            };

            match next_zero(&piece, t + 1e-9) {
                Some(t_event) if t_event <= horizon => {
                    let mut closed = piece.clone();
                    closed.end = t_event;
                    let u_dot_event = closed.u_dot(t_event);
                    pieces.push(closed);
                    events.push(t_event);
                    t = t_event;
                    u = 0.0;
                    u_dot = u_dot_event;
                    sigma = -sigma;
                }
                _ => {
                    pieces.push(piece);
                    break;
                }
            }
        }

        Self {
            pieces,
            events,
            horizon,
        }
    }

    pub fn events(&self) -> &[f64] {
        &self.events
    }

    fn piece_at(&self, t: f64) -> &Piece {
        self.pieces
            .iter()
            .find(|p| t <= p.end)
            .unwrap_or_else(|| self.pieces.last().expect("at least one piece"))
    }

    pub fn u(&self, t: f64) -> f64 {
        assert!(t >= 0.0 && t <= self.horizon + 1e-12, "t out of range");
        self.piece_at(t).u(t)
    }

    pub fn u_dot(&self, t: f64) -> f64 {
        self.piece_at(t).u_dot(t)
    }

    /// State in rotated coordinates, `x = R(-t) (u, u')`.
    pub fn x(&self, t: f64) -> [f64; 2] {
        let u = self.u(t);
        let u_dot = self.u_dot(t);
        [u * t.cos() - u_dot * t.sin(), u * t.sin() + u_dot * t.cos()]
    }

    /// First switching time, if any.
    pub fn first_event(&self) -> Option<f64> {
        self.events.first().copied()
    }
}

/// Smallest zero of the piece displacement strictly after `after`.
///
/// Solves `m cos(t - phase) = eps * sigma` with `m = hypot(a, b)`.
fn next_zero(piece: &Piece, after: f64) -> Option<f64> {
    let m = piece.a.hypot(piece.b);
    let target = piece.eps * piece.sigma;
    if m == 0.0 || (target / m).abs() > 1.0 {
        return None;
    }
    let phase = piece.b.atan2(piece.a);
    let delta = (target / m).acos();

    let mut best: Option<f64> = None;
    let k_min = ((after - phase - delta) / std::f64::consts::TAU).floor() as i64 - 1;
    for k in k_min..(k_min + 4) {
        for root in [
            phase + delta + std::f64::consts::TAU * k as f64,
            phase - delta + std::f64::consts::TAU * k as f64,
        ] {
            if root > after && best.is_none_or(|b| root < b) {
                best = Some(root);
            }
        }
    }
    best
}
