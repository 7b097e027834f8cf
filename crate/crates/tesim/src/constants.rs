//! Quantitative constants: embedding constants, coercivity pairs, smallness
//! conditions with margins, the per-step right-hand-side functional 𝓡, and
//! invariant-ball radii for both fixed-point schemes.
//!
//! Notation used throughout (matching the solver's material bounds):
//!
//!   a_lo, a_hi   bounds of the effective diffusion a = k + T_𝓜(·)·α_S·σ
//!   f_hi         bound of the effective drift F = Π + T_𝓜(·)
//!   P₂           Poincaré constant: ‖v‖₂ ≤ P₂‖∇v‖₂ on mean-zero v
//!   K₂           trace constant: ‖v‖₂,∂ ≤ K₂·(‖v‖₂² + ‖∇v‖₂²)^{1/2}
//!
//! The smallness conditions gate the two solution strategies:
//!
//!   (akM)   k_lo > 𝓜·α_hi·σ_hi                        a stays elliptic
//!   (sss1)  4·a_lo·σ_lo > σ_hi²·(F_hi + α_hi)²          coupled coercivity
//!   (sss2)  4·a_lo > σ_hi·(F_hi + α_hi)²                variant splitting
//!   (sss3)  k_lo > σ_hi·α_hi·(2·Π_hi + 3·𝓜)            potential-lag bound
//!   (afg)   ∃ε: a_lo > ε·σ_hi(F_hi+α_hi)/2  ∧  ε·σ_lo > σ_hi(F_hi+α_hi)/2
//!   (sfg)   ∃ε: a_lo > ε·√σ_hi(F_hi+α_hi)/2 ∧  ε > √σ_hi(F_hi+α_hi)/2
//!   (asfg)  a_lo > 2·σ_hi·α_hi·F_hi                     scheme-B contraction
//!
//! When ε is not supplied, both ε-conditions are evaluated at the margin
//! equalizer of their two constraints, which maximizes the minimum margin.
//! Every verdict carries (lhs, rhs, margin = lhs − rhs); margin > 0 ⟺ holds.

use nalgebra::{DMatrix, DVector};

use crate::assemble::{boundary_mass, weighted_mass, weighted_stiffness};
use crate::coefficients::BoundsReport;
use crate::error::{Result, SimError};
use crate::linalg::{generalized_symmetric_eigs, Csr};
use crate::mesh::{BoundarySelector, DomainSpec, Mesh};
use crate::space::{Constraint, FunctionSpace, MeanZeroMode};
use std::sync::Arc;

/// Where a domain constant came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum ConstantSource {
    AnalyticBound,
    DiscreteEigenvalue,
    UserSupplied,
}

/// Poincaré and trace constants for one mesh, with their product
/// K₂·(P₂ + 1), the combination the boundary-data estimates use.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct DomainConstants {
    pub p2: f64,
    pub k2: f64,
    pub product: f64,
    pub source: ConstantSource,
}

impl DomainConstants {
    /// Discrete eigenvalue computation on the given mesh. P₂ is taken for
    /// the volume-mean-zero space; K₂ over the whole boundary, which bounds
    /// the trace on either part.
    pub fn from_mesh(mesh: &Arc<Mesh>) -> Result<Self> {
        let p2 = poincare_discrete(mesh, MeanZeroMode::Volume)?;
        let k2 = trace_constant(mesh, BoundarySelector::All)?;
        Ok(DomainConstants { p2, k2, product: k2 * (p2 + 1.0), source: ConstantSource::DiscreteEigenvalue })
    }

    /// Explicit user override.
    pub fn user_supplied(p2: f64, k2: f64) -> Result<Self> {
        if !(p2 > 0.0 && k2 > 0.0) {
            return Err(SimError::SchemaError(format!(
                "domain constants must be positive, got P2 = {p2}, K2 = {k2}"
            )));
        }
        Ok(DomainConstants { p2, k2, product: k2 * (p2 + 1.0), source: ConstantSource::UserSupplied })
    }
}

/// Analytic Poincaré upper bound diam(Ω)/π, valid for convex domains.
pub fn poincare_analytic(domain: &DomainSpec) -> f64 {
    domain.diameter() / std::f64::consts::PI
}

/// Discrete (sharp-for-this-mesh) Poincaré constant 1/√λ_min, where λ_min is
/// the smallest Rayleigh quotient ‖∇v‖²/‖v‖² over the constrained subspace:
/// ∫_Ω v dx = 0 (volume mode) or ∫_∂Ω v ds = 0 (boundary mode).
pub fn poincare_discrete(mesh: &Arc<Mesh>, mode: MeanZeroMode) -> Result<f64> {
    let space = FunctionSpace::new(mesh.clone(), Constraint::None);
    let k = weighted_stiffness(&space, &|_| 1.0)?;
    let m = weighted_mass(&space, &|_| 1.0)?;
    let c = match mode {
        MeanZeroMode::Volume => mesh.lumped.clone(),
        MeanZeroMode::Boundary => FunctionSpace::new(mesh.clone(), Constraint::MeanZeroBoundary)
            .constraint_vector()
            .expect("boundary constraint vector"),
    };
    let eigs = deflated_eigs(&k, &m, &c)?;
    let lambda = eigs
        .first()
        .copied()
        .filter(|l| *l > 0.0)
        .ok_or_else(|| SimError::EigenSolveFailure("no positive Poincaré eigenvalue".into()))?;
    Ok(1.0 / lambda.sqrt())
}

/// Discrete trace constant: the largest μ with ∫_part v² ds = μ·(‖v‖² + ‖∇v‖²)
/// over the whole P1 space gives K₂ = √μ. Sharp for the discrete space, hence
/// consistent with the discrete energy ledgers.
pub fn trace_constant(mesh: &Arc<Mesh>, sel: BoundarySelector) -> Result<f64> {
    if mesh.boundary_measure(sel) <= 0.0 {
        return Err(SimError::EigenSolveFailure(
            "trace constant requested on an empty boundary part".into(),
        ));
    }
    let space = FunctionSpace::new(mesh.clone(), Constraint::None);
    let b = boundary_mass(&space, &|_| 1.0, sel)?;
    let k = weighted_stiffness(&space, &|_| 1.0)?;
    let m = weighted_mass(&space, &|_| 1.0)?;
    let a = m.to_dense() + k.to_dense();
    let eigs = generalized_symmetric_eigs(&b.to_dense(), &a)?;
    let mu = *eigs.last().ok_or_else(|| SimError::EigenSolveFailure("empty spectrum".into()))?;
    if !(mu > 0.0) {
        return Err(SimError::EigenSolveFailure(format!("nonpositive trace eigenvalue {mu}")));
    }
    Ok(mu.sqrt())
}

/// Eigenvalues (ascending) of K v = λ M v restricted to {v : cᵀv = 0},
/// eliminating one unknown against the constraint.
fn deflated_eigs(k: &Csr, m: &Csr, c: &DVector<f64>) -> Result<Vec<f64>> {
    let n = k.n;
    if n < 2 {
        return Err(SimError::EigenSolveFailure("need at least two unknowns".into()));
    }
    // Pivot on the largest constraint entry for stability.
    let p = (0..n)
        .max_by(|&i, &j| c[i].abs().partial_cmp(&c[j].abs()).unwrap())
        .unwrap();
    if c[p] == 0.0 {
        return Err(SimError::EigenSolveFailure("zero constraint functional".into()));
    }
    // v = Z w with w the unknowns at indices ≠ p and v_p = −Σ c_i w_i / c_p.
    let mut z = DMatrix::zeros(n, n - 1);
    let mut col = 0;
    for i in 0..n {
        if i == p {
            continue;
        }
        z[(i, col)] = 1.0;
        z[(p, col)] = -c[i] / c[p];
        col += 1;
    }
    let kd = k.to_dense();
    let md = m.to_dense();
    let kz = &kd * &z;
    let mz = &md * &z;
    let s = z.transpose() * kz;
    let a = z.transpose() * mz;
    generalized_symmetric_eigs(&s, &a)
}

/// Which ε-splitting produced a coercivity pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum CoercivityVariant {
    /// L1 = a_lo − ε·σ_hi(F_hi+α_hi)/2, L2 = σ_lo − σ_hi(F_hi+α_hi)/(2ε).
    SplitA,
    /// L1 = a_lo − ε·√σ_hi(F_hi+α_hi)/2, L2 = σ_lo·(1 − √σ_hi(F_hi+α_hi)/(2ε)).
    SplitB,
    /// Potential-lag scheme: L1 = a_lo, L2 = a_lo·σ_lo/(2·F_hi·σ_hi).
    SchemeB,
}

/// A positive pair (L1, L2) multiplying ‖∇θ‖² and ‖∇φ‖² in the step estimate.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct CoercivityPair {
    pub l1: f64,
    pub l2: f64,
    pub variant: CoercivityVariant,
    pub epsilon: f64,
}

/// Compute the coercivity pair for the chosen splitting; errors when either
/// entry fails to be strictly positive. For [`CoercivityVariant::SchemeB`]
/// with F_hi = 0 the pair degenerates to L2 = +∞ (there is no potential
/// feedback term to absorb), which downstream formulas treat as a vanishing
/// g-contribution.
pub fn coercivity_constants(
    bounds: &BoundsReport,
    epsilon: f64,
    variant: CoercivityVariant,
) -> Result<CoercivityPair> {
    if !(epsilon > 0.0) {
        return Err(SimError::NotCoercive { l1: f64::NAN, l2: f64::NAN, epsilon });
    }
    let coupling = bounds.f_hi + bounds.alpha_hi;
    let (l1, l2) = match variant {
        CoercivityVariant::SplitA => (
            bounds.a_lo - epsilon * bounds.sigma_hi * coupling / 2.0,
            bounds.sigma_lo - bounds.sigma_hi * coupling / (2.0 * epsilon),
        ),
        CoercivityVariant::SplitB => {
            let root = bounds.sigma_hi.sqrt();
            (
                bounds.a_lo - epsilon * root * coupling / 2.0,
                bounds.sigma_lo * (1.0 - root * coupling / (2.0 * epsilon)),
            )
        }
        CoercivityVariant::SchemeB => {
            let l2 = if bounds.f_hi == 0.0 {
                f64::INFINITY
            } else {
                bounds.a_lo * bounds.sigma_lo / (2.0 * bounds.f_hi * bounds.sigma_hi)
            };
            (bounds.a_lo, l2)
        }
    };
    if !(l1 > 0.0 && l2 > 0.0) {
        return Err(SimError::NotCoercive { l1, l2, epsilon });
    }
    Ok(CoercivityPair { l1, l2, variant, epsilon })
}

/// One inequality verdict: margin = lhs − rhs, holds ⟺ margin > 0. For the
/// ε-conditions the reported (lhs, rhs) belong to the binding constraint.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct ConditionCheck {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

impl ConditionCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        let margin = lhs - rhs;
        ConditionCheck { holds: margin > 0.0, lhs, rhs, margin }
    }

    fn binding(a: ConditionCheck, b: ConditionCheck) -> Self {
        if a.margin <= b.margin {
            a
        } else {
            b
        }
    }
}

/// All seven smallness verdicts. `epsilon_used` applies to (afg) and
/// `epsilon_sfg` to (sfg): both equal the caller's ε when one was supplied,
/// otherwise each condition's own margin equalizer.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct SmallnessVerdict {
    pub akm: ConditionCheck,
    pub sss1: ConditionCheck,
    pub sss2: ConditionCheck,
    pub sss3: ConditionCheck,
    pub afg: ConditionCheck,
    pub sfg: ConditionCheck,
    pub asfg: ConditionCheck,
    pub epsilon_used: f64,
    pub epsilon_sfg: f64,
}

/// Margin-equalizing ε for (afg): a_lo − εc/2 = εσ_lo − c/2 with
/// c = σ_hi(F_hi+α_hi).
pub fn optimal_epsilon_afg(bounds: &BoundsReport) -> f64 {
    let c = bounds.sigma_hi * (bounds.f_hi + bounds.alpha_hi);
    (bounds.a_lo + c / 2.0) / (bounds.sigma_lo + c / 2.0)
}

/// Margin-equalizing ε for (sfg): a_lo − εs/2 = ε − s/2 with
/// s = √σ_hi(F_hi+α_hi).
pub fn optimal_epsilon_sfg(bounds: &BoundsReport) -> f64 {
    let s = bounds.sigma_hi.sqrt() * (bounds.f_hi + bounds.alpha_hi);
    (bounds.a_lo + s / 2.0) / (1.0 + s / 2.0)
}

/// Evaluate all smallness conditions with margins.
pub fn check_smallness(bounds: &BoundsReport, epsilon: Option<f64>) -> SmallnessVerdict {
    let coupling = bounds.f_hi + bounds.alpha_hi;
    let akm = ConditionCheck::new(bounds.k_lo, bounds.truncation * bounds.alpha_hi * bounds.sigma_hi);
    let sss1 = ConditionCheck::new(
        4.0 * bounds.a_lo * bounds.sigma_lo,
        bounds.sigma_hi * bounds.sigma_hi * coupling * coupling,
    );
    let sss2 = ConditionCheck::new(4.0 * bounds.a_lo, bounds.sigma_hi * coupling * coupling);
    let sss3 = ConditionCheck::new(
        bounds.k_lo,
        bounds.sigma_hi * bounds.alpha_hi * (2.0 * bounds.pi_hi + 3.0 * bounds.truncation),
    );
    let asfg = ConditionCheck::new(bounds.a_lo, 2.0 * bounds.sigma_hi * bounds.alpha_hi * bounds.f_hi);

    let eps_afg = epsilon.unwrap_or_else(|| optimal_epsilon_afg(bounds));
    let c = bounds.sigma_hi * coupling;
    let afg = ConditionCheck::binding(
        ConditionCheck::new(bounds.a_lo, eps_afg * c / 2.0),
        ConditionCheck::new(eps_afg * bounds.sigma_lo, c / 2.0),
    );

    let eps_sfg = epsilon.unwrap_or_else(|| optimal_epsilon_sfg(bounds));
    let s = bounds.sigma_hi.sqrt() * coupling;
    let sfg = ConditionCheck::binding(
        ConditionCheck::new(bounds.a_lo, eps_sfg * s / 2.0),
        ConditionCheck::new(eps_sfg, s / 2.0),
    );

    SmallnessVerdict {
        akm,
        sss1,
        sss2,
        sss3,
        afg,
        sfg,
        asfg,
        epsilon_used: eps_afg,
        epsilon_sfg: eps_sfg,
    }
}

/// Per-step right-hand-side functional
///
///   𝓡 = ‖f‖²/(2τ·b_lo) + ‖H‖^{ℓ'}/(ℓ'·γ_lo^{1/(ℓ−1)})
///       + K₂²(P₂+1)²·‖g‖²_{Γ_N}/(2·L2).
#[allow(clippy::too_many_arguments)]
pub fn rhs_functional(
    f_norm_sq: f64,
    h_norm_pow: f64,
    g_norm_sq: f64,
    bounds: &BoundsReport,
    dc: &DomainConstants,
    l2: f64,
    tau: f64,
    ell: f64,
) -> f64 {
    debug_assert!(tau > 0.0 && l2 > 0.0);
    let ell_conj = ell / (ell - 1.0);
    let f_term = f_norm_sq / (2.0 * tau * bounds.b_lo);
    let h_term = h_norm_pow / (ell_conj * bounds.gamma_lo.powf(1.0 / (ell - 1.0)));
    let g_term = dc.product * dc.product * g_norm_sq / (2.0 * l2);
    f_term + h_term + g_term
}

/// Invariant-ball radii for the coupled frozen-coefficient scheme:
///
///   R1 = √(2𝓡 / min{L1, L2/2}) + 1,
///   R2 = √((2/min{L1, L2/2} + ℓ'/γ_lo)·𝓡),
///   R_ball = max(R1, R2).
pub fn ball_radii(script_r: f64, l1: f64, l2: f64, gamma_lo: f64, ell: f64) -> (f64, f64, f64) {
    debug_assert!(l1 > 0.0 && l2 > 0.0);
    let base = l1.min(l2 / 2.0);
    let ell_conj = ell / (ell - 1.0);
    let r1 = (2.0 * script_r / base).sqrt() + 1.0;
    let r2 = ((2.0 / base + ell_conj / gamma_lo) * script_r).sqrt();
    (r1, r2, r1.max(r2))
}

/// Data norms entering the scheme-B radius.
#[derive(Clone, Copy, Debug)]
pub struct SchemeBNorms {
    pub f_norm_sq: f64,
    pub h_norm_pow: f64,
    pub g_norm: f64,
}

/// Invariant-ball radius for the potential-lag scheme: the R solving
///
///   R·(√a_lo − 2F_hi σ_hi α_hi/√a_lo)
///       = √(‖f‖²/(τ b_lo) + 2‖H‖^{ℓ'}/(ℓ' γ_lo^{1/(ℓ−1)}))
///         + 2F_hi K₂(P₂+1)·√(σ_hi/(a_lo σ_lo))·‖g‖.
pub fn radius_scheme_b(
    norms: &SchemeBNorms,
    bounds: &BoundsReport,
    dc: &DomainConstants,
    tau: f64,
    ell: f64,
) -> Result<f64> {
    let tau_max = bounds.a_lo / bounds.b_hi;
    if tau > tau_max {
        return Err(SimError::StepTooLarge { tau, tau_max });
    }
    let root_a = bounds.a_lo.sqrt();
    let factor = root_a - 2.0 * bounds.f_hi * bounds.sigma_hi * bounds.alpha_hi / root_a;
    if !(factor > 0.0) {
        return Err(SimError::SmallnessViolated(format!(
            "a_lo = {} does not dominate 2·F_hi·σ_hi·α_hi = {}",
            bounds.a_lo,
            2.0 * bounds.f_hi * bounds.sigma_hi * bounds.alpha_hi
        )));
    }
    let ell_conj = ell / (ell - 1.0);
    let interior = norms.f_norm_sq / (tau * bounds.b_lo)
        + 2.0 * norms.h_norm_pow / (ell_conj * bounds.gamma_lo.powf(1.0 / (ell - 1.0)));
    let boundary = 2.0
        * bounds.f_hi
        * dc.product
        * (bounds.sigma_hi / (bounds.a_lo * bounds.sigma_lo)).sqrt()
        * norms.g_norm;
    Ok((interior.sqrt() + boundary) / factor)
}

/// The full radius picture for one (bounds, constants, τ, data) setup.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct RadiusReport {
    pub r_script: f64,
    pub r1: f64,
    pub r2: f64,
    pub r_ball: f64,
    pub r_scheme_b: Option<f64>,
    pub tau_max: f64,
}

/// Smallness condition selector for truncation-level inversion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmallnessCondition {
    Sss1,
    Sss2,
    Sss3,
}

impl SmallnessCondition {
    pub fn name(&self) -> &'static str {
        match self {
            SmallnessCondition::Sss1 => "sss1",
            SmallnessCondition::Sss2 => "sss2",
            SmallnessCondition::Sss3 => "sss3",
        }
    }
}

/// Supremum of the truncation level 𝓜 keeping both the selected condition
/// and (akM) satisfied, by bisection to absolute tolerance 1e−9. Returns
/// +∞ when no finite level breaks the condition (e.g. α_hi = 0). The
/// `truncation` field of `bounds` is ignored — it is the unknown here.
pub fn max_truncation(bounds: &BoundsReport, condition: SmallnessCondition) -> Result<f64> {
    let eval = |m: f64| -> bool {
        let trial = BoundsReport::derive(
            bounds.b_lo,
            bounds.b_hi,
            bounds.k_lo,
            bounds.k_hi,
            bounds.sigma_lo,
            bounds.sigma_hi,
            bounds.alpha_hi,
            bounds.pi_hi,
            bounds.gamma_lo,
            bounds.gamma_hi,
            m,
            bounds.ell,
        );
        let verdict = check_smallness(&trial, None);
        let cond = match condition {
            SmallnessCondition::Sss1 => verdict.sss1,
            SmallnessCondition::Sss2 => verdict.sss2,
            SmallnessCondition::Sss3 => verdict.sss3,
        };
        cond.holds && verdict.akm.holds
    };
    if !eval(0.0) {
        return Err(SimError::NeverHolds(condition.name().to_string()));
    }
    // Bracket a failing level; if none exists the condition never breaks.
    let mut hi = 1.0;
    let mut bracketed = false;
    for _ in 0..80 {
        if !eval(hi) {
            bracketed = true;
            break;
        }
        hi *= 2.0;
    }
    if !bracketed {
        return Ok(f64::INFINITY);
    }
    let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if eval(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
