//! Material laws and their declared bounds.
//!
//! All physical inputs of the model live here:
//!
//! - b = ρ·c_v  volumetric heat capacity            (> 0)
//! - k          thermal conductivity                 (> 0)
//! - σ          electrical conductivity              (> 0)
//! - α_S        Seebeck coefficient                  (|α_S| ≤ alpha_hi)
//! - Π          Peltier coefficient                  (|Π| ≤ pi_hi)
//! - γ          radiative boundary coefficient       (> 0)
//!
//! plus the boundary data h (power-law source on Γ, time dependent) and g
//! (normal current flux on Γ_N), the boundary exponent ℓ ≥ 2, and the
//! truncation level 𝓜 used to tame the quadratic coupling terms.
//!
//! Derived composites:
//!
//!   T_𝓜(z)      = max(−𝓜, min(𝓜, z))                    (truncation)
//!   a(x, e, d)  = k(x,e) + T_𝓜(d)·α_S(x,e)·σ(x,e)        (effective diffusion)
//!   F(x, e, d)  = Π(x,e) + T_𝓜(d)                         (effective drift)
//!   B(x, v)     = ∫₀ᵛ b(x,z) dz                           (enthalpy-like)
//!   Ψ(x, s)     = B(s)·s − ∫₀ˢ B(r) dr = ∫₀ˢ z·b(x,z) dz  (energy density)
//!
//! The Fubini collapse in the last line turns the double integral into a
//! single one, so Ψ costs the same as B. Every lower/upper bound declared on
//! a coefficient feeds the constants engine;
//! [`CoefficientBundle::audit_bounds`] cross-checks declarations by sampling.

use std::fmt;
use std::sync::Arc;

use crate::error::{Result, SimError};
use crate::expr::{EvalCtx, Expression};
use crate::quadrature::adaptive_simpson;

/// Absolute tolerance for the adaptive quadrature behind B and Ψ. These
/// integrals sit inside every Newton residual, so they must beat solver
/// tolerances by a wide margin.
pub const PROFILE_QUAD_TOL: f64 = 1e-12;

/// 𝓜-truncation: clamp z to [−m, m]. Total, 1-Lipschitz, idempotent.
pub fn truncate(m: f64, z: f64) -> f64 {
    z.clamp(-m, m)
}

/// How a scalar material law depends on position x and state e.
#[derive(Clone)]
pub enum Profile {
    /// Constant in both x and e.
    Constant(f64),
    /// Expression over (x, y, e).
    Expr(Expression),
    /// Piecewise-linear lookup table in e (position-independent); values are
    /// clamped to the end entries outside the tabulated range, so declared
    /// bounds extend to all of ℝ.
    Table(Vec<(f64, f64)>),
    /// Arbitrary native function, used by presets and tests for laws outside
    /// the expression grammar. Not serializable.
    Native(Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Constant(c) => write!(f, "Constant({c})"),
            Profile::Expr(e) => write!(f, "Expr({e})"),
            Profile::Table(t) => write!(f, "Table({} entries)", t.len()),
            Profile::Native(_) => write!(f, "Native(<fn>)"),
        }
    }
}

/// A scalar material law together with its declared bounds. For sign-valued
/// laws (Seebeck, Peltier) the convention is `lo = −hi` with hi a bound on
/// the absolute value.
#[derive(Clone, Debug)]
pub struct ScalarCoefficient {
    pub profile: Profile,
    pub lo: f64,
    pub hi: f64,
}

impl ScalarCoefficient {
    /// Constant law; declared bounds collapse onto the value.
    pub fn constant(v: f64) -> Self {
        ScalarCoefficient { profile: Profile::Constant(v), lo: v, hi: v }
    }

    /// Law with explicit declared bounds.
    pub fn with_bounds(profile: Profile, lo: f64, hi: f64) -> Self {
        ScalarCoefficient { profile, lo, hi }
    }

    /// Magnitude-bounded law (Seebeck / Peltier): |value| ≤ hi.
    pub fn signed_magnitude(profile: Profile, hi: f64) -> Self {
        ScalarCoefficient { profile, lo: -hi, hi }
    }

    /// Evaluate at position x and state e.
    pub fn eval(&self, x: [f64; 2], e: f64) -> f64 {
        match &self.profile {
            Profile::Constant(c) => *c,
            Profile::Expr(ex) => ex.eval(&EvalCtx { x: x[0], y: x[1], e, t: 0.0 }),
            Profile::Table(tab) => eval_table(tab, e),
            Profile::Native(f) => f(x, e),
        }
    }

    /// Largest jump between adjacent samples on a uniform e-grid; a cheap
    /// continuity probe (halving the spacing should roughly halve the jump
    /// for continuous laws).
    pub fn max_adjacent_jump(&self, x: [f64; 2], e_lo: f64, e_hi: f64, n: usize) -> f64 {
        let mut worst: f64 = 0.0;
        let mut prev = self.eval(x, e_lo);
        for i in 1..=n {
            let e = e_lo + (e_hi - e_lo) * i as f64 / n as f64;
            let v = self.eval(x, e);
            worst = worst.max((v - prev).abs());
            prev = v;
        }
        worst
    }
}

fn eval_table(tab: &[(f64, f64)], e: f64) -> f64 {
    debug_assert!(!tab.is_empty());
    if e <= tab[0].0 {
        return tab[0].1;
    }
    if e >= tab[tab.len() - 1].0 {
        return tab[tab.len() - 1].1;
    }
    // partition_point: first index with key > e, so seg ∈ [1, len-1].
    let seg = tab.partition_point(|&(k, _)| k <= e);
    let (e0, v0) = tab[seg - 1];
    let (e1, v1) = tab[seg];
    let s = (e - e0) / (e1 - e0);
    v0 + s * (v1 - v0)
}

/// Time-dependent boundary datum h(x, t) on the radiative part Γ.
#[derive(Clone)]
pub struct TimeBoundaryFn(pub Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>);

impl TimeBoundaryFn {
    pub fn constant(v: f64) -> Self {
        TimeBoundaryFn(Arc::new(move |_, _| v))
    }
    pub fn eval(&self, x: [f64; 2], t: f64) -> f64 {
        (self.0)(x, t)
    }
}

impl fmt::Debug for TimeBoundaryFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TimeBoundaryFn(<fn>)")
    }
}

/// Time-independent spatial function, e.g. the flux datum g on Γ_N or a
/// frozen-in-time slice of h.
#[derive(Clone)]
pub struct SpatialFn(pub Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>);

impl SpatialFn {
    pub fn constant(v: f64) -> Self {
        SpatialFn(Arc::new(move |_| v))
    }
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        (self.0)(x)
    }
}

impl fmt::Debug for SpatialFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpatialFn(<fn>)")
    }
}

/// Declared (or observed) extrema of every material law, plus the derived
/// composite bounds used throughout the constants engine:
///
///   a_lo = k_lo − 𝓜·alpha_hi·sigma_hi,
///   a_hi = k_hi + 𝓜·alpha_hi·sigma_hi,
///   f_hi = pi_hi + 𝓜.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct BoundsReport {
    pub b_lo: f64,
    pub b_hi: f64,
    pub k_lo: f64,
    pub k_hi: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub alpha_hi: f64,
    pub pi_hi: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub truncation: f64,
    pub ell: f64,
    pub a_lo: f64,
    pub a_hi: f64,
    pub f_hi: f64,
}

impl BoundsReport {
    /// Fill in the derived composite bounds from the primitive ones.
    #[allow(clippy::too_many_arguments)]
    pub fn derive(
        b_lo: f64,
        b_hi: f64,
        k_lo: f64,
        k_hi: f64,
        sigma_lo: f64,
        sigma_hi: f64,
        alpha_hi: f64,
        pi_hi: f64,
        gamma_lo: f64,
        gamma_hi: f64,
        truncation: f64,
        ell: f64,
    ) -> Self {
        let slack = truncation * alpha_hi * sigma_hi;
        BoundsReport {
            b_lo,
            b_hi,
            k_lo,
            k_hi,
            sigma_lo,
            sigma_hi,
            alpha_hi,
            pi_hi,
            gamma_lo,
            gamma_hi,
            truncation,
            ell,
            a_lo: k_lo - slack,
            a_hi: k_hi + slack,
            f_hi: pi_hi + truncation,
        }
    }

    /// Hölder conjugate ℓ' = ℓ/(ℓ−1).
    pub fn ell_conj(&self) -> f64 {
        self.ell / (self.ell - 1.0)
    }
}

/// Cartesian sampling grid for bound audits: every position × every state.
#[derive(Clone, Debug)]
pub struct SampleGrid {
    pub xs: Vec<[f64; 2]>,
    pub es: Vec<f64>,
}

impl SampleGrid {
    /// Uniform grid on [0, lx] × [0, ly] (pass ly = 0 with ny = 0 for an
    /// interval) times a uniform state range.
    pub fn cartesian(lx: f64, ly: f64, nx: usize, ny: usize, e_range: (f64, f64), ne: usize) -> Self {
        let mut xs = Vec::new();
        for i in 0..=nx {
            let x = lx * i as f64 / nx.max(1) as f64;
            if ny == 0 {
                xs.push([x, 0.0]);
            } else {
                for j in 0..=ny {
                    xs.push([x, ly * j as f64 / ny as f64]);
                }
            }
        }
        let es = (0..=ne)
            .map(|i| e_range.0 + (e_range.1 - e_range.0) * i as f64 / ne.max(1) as f64)
            .collect();
        SampleGrid { xs, es }
    }
}

/// The full set of material laws and data defining one problem instance.
#[derive(Clone, Debug)]
pub struct CoefficientBundle {
    pub b: ScalarCoefficient,
    pub k: ScalarCoefficient,
    pub sigma: ScalarCoefficient,
    pub alpha_s: ScalarCoefficient,
    pub pi: ScalarCoefficient,
    pub gamma: ScalarCoefficient,
    /// Boundary power-law datum on Γ, pointwise in time.
    pub h: TimeBoundaryFn,
    /// Normal current flux on Γ_N.
    pub g: SpatialFn,
    /// Boundary exponent ℓ ≥ 2.
    pub ell: f64,
    /// Truncation level 𝓜 ≥ 0 for the coupling terms.
    pub truncation: f64,
}

impl CoefficientBundle {
    /// Structural validation of declared bounds and exponents.
    pub fn validate(&self) -> Result<()> {
        if !(self.ell >= 2.0) {
            return Err(SimError::SchemaError(format!(
                "boundary exponent ell must be ≥ 2, got {}",
                self.ell
            )));
        }
        if !(self.truncation >= 0.0) {
            return Err(SimError::SchemaError(format!(
                "truncation level must be ≥ 0, got {}",
                self.truncation
            )));
        }
        for (name, c, positive) in [
            ("b", &self.b, true),
            ("k", &self.k, true),
            ("sigma", &self.sigma, true),
            ("gamma", &self.gamma, true),
            ("alpha_s", &self.alpha_s, false),
            ("pi", &self.pi, false),
        ] {
            if c.lo > c.hi {
                return Err(SimError::SchemaError(format!(
                    "coefficient {name}: declared lower bound {} exceeds upper bound {}",
                    c.lo, c.hi
                )));
            }
            if positive && !(c.lo > 0.0) {
                return Err(SimError::SchemaError(format!(
                    "coefficient {name}: strictly positive lower bound required, got {}",
                    c.lo
                )));
            }
            if !positive && c.hi < 0.0 {
                return Err(SimError::SchemaError(format!(
                    "coefficient {name}: magnitude bound must be ≥ 0, got {}",
                    c.hi
                )));
            }
        }
        Ok(())
    }

    /// Declared bounds, with derived composites.
    pub fn bounds(&self) -> BoundsReport {
        BoundsReport::derive(
            self.b.lo,
            self.b.hi,
            self.k.lo,
            self.k.hi,
            self.sigma.lo,
            self.sigma.hi,
            self.alpha_s.hi.abs(),
            self.pi.hi.abs(),
            self.gamma.lo,
            self.gamma.hi,
            self.truncation,
            self.ell,
        )
    }

    /// Effective diffusion a(x, e, d) = k(x,e) + T_𝓜(d)·α_S(x,e)·σ(x,e).
    /// Errors if the value undercuts the derived lower bound (which signals
    /// inconsistent declared bounds rather than a math failure).
    pub fn derived_a(&self, x: [f64; 2], e: f64, d: f64) -> Result<f64> {
        let v = self.k.eval(x, e)
            + truncate(self.truncation, d) * self.alpha_s.eval(x, e) * self.sigma.eval(x, e);
        let a_lo = self.bounds().a_lo;
        if v < a_lo - 1e-12 * (1.0 + a_lo.abs()) {
            return Err(SimError::BoundViolation(format!(
                "a(x={x:?}, e={e}, d={d}) = {v} < declared a_lo = {a_lo}; declared k/alpha_s/sigma bounds are inconsistent"
            )));
        }
        Ok(v)
    }

    /// Effective drift F(x, e, d) = Π(x,e) + T_𝓜(d). Total.
    pub fn derived_f(&self, x: [f64; 2], e: f64, d: f64) -> f64 {
        self.pi.eval(x, e) + truncate(self.truncation, d)
    }

    /// B(x, v) = ∫₀ᵛ b(x, z) dz. Closed form for constant b, adaptive
    /// quadrature (abs tol 1e−12) otherwise.
    pub fn integrate_b(&self, x: [f64; 2], v: f64) -> Result<f64> {
        match &self.b.profile {
            Profile::Constant(c) => Ok(c * v),
            _ => adaptive_simpson(&|z| self.b.eval(x, z), 0.0, v, PROFILE_QUAD_TOL),
        }
    }

    /// Ψ(x, s) = ∫₀ˢ z·b(x, z) dz ≥ 0 (the Fubini collapse of
    /// B(s)·s − ∫₀ˢ B). Closed form b·s²/2 for constant b.
    pub fn psi(&self, x: [f64; 2], s: f64) -> Result<f64> {
        match &self.b.profile {
            Profile::Constant(c) => Ok(0.5 * c * s * s),
            _ => adaptive_simpson(&|z| z * self.b.eval(x, z), 0.0, s, PROFILE_QUAD_TOL),
        }
    }

    /// Sample every law on the grid. Returns the *observed* extrema (the
    /// declared ones live on the coefficients); errors with the offending
    /// samples if any observation escapes its declaration.
    pub fn audit_bounds(&self, grid: &SampleGrid) -> Result<BoundsReport> {
        if grid.xs.is_empty() || grid.es.is_empty() {
            return Err(SimError::InvalidSpec("audit grid must be nonempty".into()));
        }
        let mut violations: Vec<String> = Vec::new();
        let mut total = 0usize;
        let mut observe = |name: &str, c: &ScalarCoefficient, magnitude: bool| -> (f64, f64) {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &x in &grid.xs {
                for &e in &grid.es {
                    let v = c.eval(x, e);
                    let bad = if !v.is_finite() {
                        true
                    } else if magnitude {
                        v.abs() > c.hi
                    } else {
                        v < c.lo || v > c.hi
                    };
                    if bad {
                        total += 1;
                        if violations.len() < 5 {
                            violations.push(format!(
                                "{name}(x={:?}, e={e}) = {v} outside [{}, {}]",
                                x, c.lo, c.hi
                            ));
                        }
                    }
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            (lo, hi)
        };
        let (b_lo, b_hi) = observe("b", &self.b, false);
        let (k_lo, k_hi) = observe("k", &self.k, false);
        let (s_lo, s_hi) = observe("sigma", &self.sigma, false);
        let (a_lo_obs, a_hi_obs) = observe("alpha_s", &self.alpha_s, true);
        let (p_lo_obs, p_hi_obs) = observe("pi", &self.pi, true);
        let (g_lo, g_hi) = observe("gamma", &self.gamma, false);
        if total > 0 {
            return Err(SimError::BoundViolation(format!(
                "{total} sample(s) violate declared bounds; first few: {}",
                violations.join("; ")
            )));
        }
        Ok(BoundsReport::derive(
            b_lo,
            b_hi,
            k_lo,
            k_hi,
            s_lo,
            s_hi,
            a_lo_obs.abs().max(a_hi_obs.abs()),
            p_lo_obs.abs().max(p_hi_obs.abs()),
            g_lo,
            g_hi,
            self.truncation,
            self.ell,
        ))
    }
}

/// Optional Peltier construction from the first Kelvin relation
/// Π(x, e) = e·α_S(x, e), with the state clamped to ±`clamp` so the declared
/// magnitude bound `clamp·alpha_hi` holds on all of ℝ.
pub fn kelvin_pi(alpha_s: &ScalarCoefficient, clamp: f64) -> ScalarCoefficient {
    let alpha = alpha_s.clone();
    let hi = clamp * alpha_s.hi.abs();
    ScalarCoefficient::signed_magnitude(
        Profile::Native(Arc::new(move |x, e| truncate(clamp, e) * alpha.eval(x, e))),
        hi,
    )
}
