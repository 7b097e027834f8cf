//! Error taxonomy for the simulator.
//!
//! Numerical failures carry enough context (step index, residual norms,
//! offending samples, best iterate) to be actionable from the command line
//! without re-running under a debugger. Variants map onto distinct process
//! exit codes in the CLI so scripted callers can branch on the failure class.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Error)]
pub enum SimError {
    /// Adaptive quadrature exhausted its subdivision depth before reaching
    /// the requested absolute tolerance.
    #[error("quadrature failed on [{a:.6e}, {b:.6e}]: best error estimate {err:.3e} > tolerance {tol:.3e}")]
    QuadratureFailure { a: f64, b: f64, tol: f64, err: f64 },

    /// A sampled coefficient value escapes its declared bounds.
    #[error("coefficient bound violation: {0}")]
    BoundViolation(String),

    /// A coercivity pair came out non-positive for the requested splitting.
    #[error("coercivity pair not positive: L1 = {l1:.6e}, L2 = {l2:.6e} (epsilon = {epsilon:.6e})")]
    NotCoercive { l1: f64, l2: f64, epsilon: f64 },

    /// Domain or boundary-tag combination the mesh builder does not support.
    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    /// Dense eigenvalue solve failed or produced an unusable spectrum.
    #[error("eigenvalue solve failed: {0}")]
    EigenSolveFailure(String),

    /// A smallness condition fails already at zero truncation, so no
    /// truncation level can satisfy it.
    #[error("condition {0} fails already at zero truncation")]
    NeverHolds(String),

    /// Structural problem with a mesh/domain request (zero measure, bad
    /// resolution, conflicting boundary tags).
    #[error("invalid domain or mesh request: {0}")]
    InvalidSpec(String),

    /// A weight handed to a weighted bilinear-form assembly was ≤ 0 at a
    /// quadrature point where positivity is required.
    #[error("nonpositive assembly weight: {0}")]
    NonpositiveWeight(String),

    /// Direct linear solve hit a (numerically) singular matrix.
    #[error("singular linear system: {0}")]
    SingularSystem(String),

    /// Newton iteration for a single nonlinear solve stopped making progress.
    #[error("Newton did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    /// The frozen-coefficient temperature operator lost coercivity for the
    /// supplied frozen arguments.
    #[error("frozen-coefficient operator not coercive: {0}")]
    NonCoercive(String),

    /// The per-step fixed-point iteration ran out of iterations. Carries the
    /// best iterate so callers can inspect or serialize it.
    #[error("fixed-point iteration did not converge after {iterations} iterations (last increment {increment:.3e})")]
    NonConvergence {
        iterations: usize,
        increment: f64,
        best: Box<crate::elliptic::StepSolution>,
    },

    /// A smallness condition required by the selected scheme fails and the
    /// run was not forced.
    #[error("smallness condition violated: {0}")]
    SmallnessViolated(String),

    /// Scheme-B step-size restriction τ ≤ a_lo / b_hi is not met.
    #[error("time step too large for scheme B: tau = {tau:.6e} > {tau_max:.6e}")]
    StepTooLarge { tau: f64, tau_max: f64 },

    /// A discrete energy inequality failed outside its slack budget.
    #[error("estimate '{name}' violated: lhs = {lhs:.12e} > rhs = {rhs:.12e} + slack {slack:.3e} ({detail})")]
    EstimateViolated {
        name: String,
        lhs: f64,
        rhs: f64,
        slack: f64,
        detail: String,
    },

    /// A sampled structural property (monotonicity, ordering chain) failed;
    /// the message contains the counterexample.
    #[error("property violated: {0}")]
    PropertyViolated(String),

    /// Time value outside the grid on which an interpolant is defined.
    #[error("time {t:.6e} outside interpolant range [0, {t_max:.6e}]")]
    OutOfRange { t: f64, t_max: f64 },

    /// Unknown scenario name.
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),

    /// Unparseable expression, number, or mesh-size string.
    #[error("parse error: {0}")]
    ParseError(String),

    /// Config file violates the schema (missing keys, wrong version,
    /// out-of-range values, inconsistent boundary data).
    #[error("config schema error: {0}")]
    SchemaError(String),

    /// A time step failed; carries the failing index, the underlying error,
    /// and the partial trajectory computed so far (for serialization).
    #[error("time step {m} failed: {source}")]
    StepFailed {
        m: usize,
        #[source]
        source: Box<SimError>,
        partial: Box<crate::rothe::Trajectory>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl SimError {
    /// Process exit code for scripted callers. Groups variants by failure
    /// class rather than one code per variant.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::ParseError(_)
            | SimError::SchemaError(_)
            | SimError::UnknownScenario(_)
            | SimError::InvalidSpec(_)
            | SimError::UnsupportedDomain(_) => 2,
            SimError::SmallnessViolated(_)
            | SimError::NotCoercive { .. }
            | SimError::StepTooLarge { .. }
            | SimError::NeverHolds(_) => 3,
            SimError::NewtonDiverged { .. }
            | SimError::NonConvergence { .. }
            | SimError::NonCoercive(_)
            | SimError::SingularSystem(_)
            | SimError::StepFailed { .. }
            | SimError::EigenSolveFailure(_)
            | SimError::QuadratureFailure { .. } => 4,
            SimError::EstimateViolated { .. }
            | SimError::PropertyViolated(_)
            | SimError::BoundViolation(_)
            | SimError::NonpositiveWeight(_) => 5,
            SimError::Io(_) | SimError::Csv(_) => 6,
            SimError::OutOfRange { .. } => 1,
        }
    }
}
