//! Error type shared by the solver, tracking, and oscillator layers.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong across the solver stack.
///
/// Variants carry the quantities a caller needs to diagnose the failure;
/// the CLI maps them onto its exit-status contract.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("jacobian singular or ill-conditioned (condition estimate {cond:.3e})")]
    SingularJacobian { cond: f64 },

    #[error("no contraction: step ratio {ratio:.3e} >= 1 for 3 consecutive steps")]
    NoContraction { ratio: f64 },

    #[error("max iterations ({max_iter}) exceeded with residual {residual:.3e}")]
    MaxIterExceeded { max_iter: usize, residual: f64 },

    #[error("iterate {iteration} left the beta ball (distance {dist:.3e} > beta {beta:.3e})")]
    LeftBall {
        iteration: usize,
        dist: f64,
        beta: f64,
    },

    #[error("x outside the alpha ball (distance {dist:.3e} > alpha {alpha:.3e})")]
    OutsideAlphaBall { dist: f64, alpha: f64 },

    #[error("(x, y) is not a solution: residual {residual:.3e} above tolerance")]
    NotAtSolution { residual: f64 },

    #[error("sample point outside the {ball} ball (distance {dist:.3e} > {radius:.3e})")]
    SampleOutsideBall {
        ball: &'static str,
        dist: f64,
        radius: f64,
    },

    #[error("empty sample set")]
    EmptySamples,

    #[error("all sampled pairs degenerate (closer than 1e-12)")]
    AllPairsDegenerate,

    #[error("alpha search exhausted: no radius above {min_alpha:.3e} certifies contraction")]
    AlphaSearchFailed { min_alpha: f64 },

    #[error("root found but the contraction certificate failed")]
    NoRootInBall,

    #[error("no sign change of the base slice inside the bracket")]
    NoZeroInBracket,

    #[error("{count} sign changes of the base slice inside the bracket, expected exactly 1")]
    MultipleZerosInBracket { count: usize },

    #[error("sticking contact at t = {t:.12e}: both one-sided fields push toward the surface")]
    StickDetected { t: f64 },

    #[error("event cap {cap} exceeded during integration")]
    MaxEventsExceeded { cap: usize },

    #[error("no delta certificate available: run a delta ladder scan first")]
    DeltaBallUnknown,

    #[error("point outside the certified delta ball (distance {dist:.3e} > delta {delta:.3e})")]
    OutsideDeltaBall { dist: f64, delta: f64 },

    #[error("integrator failure: {0}")]
    Integrator(String),
}
