//! Run configuration: a small versioned TOML schema and its translation
//! into meshes, coefficient bundles and time grids.
//!
//! The schema is deliberately flat and strict: unknown keys are rejected,
//! every material law carries its declared envelope, and structural
//! mistakes (power exponent below 2, mesh arity mismatched to the domain,
//! boundary current without a current boundary, a lagged-scheme step above
//! a_#/b^#) are caught at load time rather than mid-run. Smallness-condition
//! failures are advisory by default — the solver may still converge outside
//! the guaranteed regime — and escalate to errors under `strict`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coefficients::{
    CoefficientBundle, Profile, ScalarCoefficient, SpatialFn, TimeBoundaryFn,
};
use crate::constants::{
    check_smallness, coercivity_constants, optimal_epsilon_afg, optimal_epsilon_sfg,
    CoercivityPair, CoercivityVariant, DomainConstants, SmallnessVerdict,
};
use crate::elliptic::FixedPointConfig;
use crate::error::{Result, SimError};
use crate::expr::{EvalCtx, Expression, Var};
use crate::mesh::{build_mesh, DomainSpec, Side};
use crate::rothe::{HSampling, RotheConfig, RotheProblem, Scheme, TimeGrid};
use crate::space::{Constraint, DiscreteField, FunctionSpace};

/// The only schema this build reads.
pub const SCHEMA_VERSION: u32 = 1;

/// Top-level run description (one TOML document).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Optional human label carried into reports.
    #[serde(default)]
    pub name: Option<String>,
    pub domain: DomainConfig,
    pub coefficients: CoefficientsConfig,
    pub initial: FieldLaw,
    pub time: TimeConfig,
    #[serde(default)]
    pub scheme: SchemeChoice,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub verification: VerificationConfig,
    #[serde(default)]
    pub seed: u64,
}

/// Geometry, resolution and boundary-part designation.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// "interval" or "rectangle".
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ly: Option<f64>,
    /// Cells per direction: one entry for intervals, two for rectangles.
    pub cells: Vec<usize>,
    /// Sides carrying the electric boundary current (the complement is the
    /// radiative part). Names: left, right, bottom, top.
    #[serde(default)]
    pub neumann: Vec<String>,
}

/// One material law with its declared envelope. Exactly one of `value`,
/// `law`, `table` must be present; expressions see x, y and the state e.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientLaw {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

/// A data field of space (and, for the radiative datum, time).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldLaw {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<String>,
}

/// Material laws plus the structure exponents.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    /// Boundary power exponent ℓ ≥ 2.
    pub ell: f64,
    /// Truncation level 𝓜 ≥ 0 for the potential argument.
    #[serde(default)]
    pub truncation: f64,
    pub b: CoefficientLaw,
    pub k: CoefficientLaw,
    pub sigma: CoefficientLaw,
    #[serde(default)]
    pub alpha_s: CoefficientLaw,
    #[serde(default)]
    pub pi: CoefficientLaw,
    pub gamma: CoefficientLaw,
    /// Radiative boundary datum H(x, t); defaults to zero.
    #[serde(default)]
    pub h: FieldLaw,
    /// Electric boundary current g(x); defaults to zero.
    #[serde(default)]
    pub g: FieldLaw,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final: f64,
    pub steps: usize,
}

/// Per-step strategy: "a" couples both fields in the frozen-coefficient
/// solve, "b" lags the potential one level behind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeChoice {
    #[default]
    A,
    B,
}

impl From<SchemeChoice> for Scheme {
    fn from(c: SchemeChoice) -> Scheme {
        match c {
            SchemeChoice::A => Scheme::A,
            SchemeChoice::B => Scheme::B,
        }
    }
}

/// Outer fixed-point and inner Newton controls (all optional).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub relaxation: f64,
    pub newton_rel_tol: f64,
    pub newton_abs_tol: f64,
    pub newton_max_iter: usize,
    /// "right-endpoint" or "interval-average" sampling of H per step.
    pub h_sampling: String,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let fp = FixedPointConfig::default();
        SolverConfig {
            tol: fp.tol,
            max_iter: fp.max_iter,
            relaxation: fp.relaxation,
            newton_rel_tol: fp.newton.rel_tol,
            newton_abs_tol: fp.newton.abs_tol,
            newton_max_iter: fp.newton.max_iter,
            h_sampling: "right-endpoint".into(),
        }
    }
}

/// Which checks a run performs after marching.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerificationConfig {
    /// Recompute and gate the global ledger and every per-step estimate.
    pub estimates: bool,
    /// Probe the translation pairing over dyadic lags.
    pub translation: bool,
    /// Sample count for the capacity-pairing inequalities (0 skips).
    pub lemma_samples: usize,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        VerificationConfig { estimates: true, translation: true, lemma_samples: 0 }
    }
}

/// Everything needed to march and verify one run.
pub struct BuiltRun {
    pub problem: RotheProblem,
    pub rothe: RotheConfig,
    pub verdict: SmallnessVerdict,
    /// Non-fatal findings (smallness failures outside strict mode).
    pub warnings: Vec<String>,
}

/// Read and validate a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// Parse and validate a config document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig =
        toml::from_str(text).map_err(|e| SimError::ParseError(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    /// Structural validation: everything checkable without building a mesh.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SimError::SchemaError(format!(
                "schema_version {} not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.coefficients.ell >= 2.0) {
            return Err(SimError::SchemaError(format!(
                "boundary exponent ell = {} must be at least 2",
                self.coefficients.ell
            )));
        }
        if !(self.coefficients.truncation >= 0.0) {
            return Err(SimError::SchemaError("truncation level must be nonnegative".into()));
        }
        if !(self.time.t_final > 0.0) || self.time.steps == 0 {
            return Err(SimError::SchemaError(
                "time section needs t_final > 0 and steps ≥ 1".into(),
            ));
        }
        self.domain.validate()?;
        if !self.coefficients.g.is_zero_spec() && self.domain.neumann.is_empty() {
            return Err(SimError::SchemaError(
                "a boundary current g is configured but no side is designated to carry it".into(),
            ));
        }
        match self.solver.h_sampling.as_str() {
            "right-endpoint" | "interval-average" => {}
            other => {
                return Err(SimError::SchemaError(format!(
                    "unknown h_sampling '{other}' (use right-endpoint or interval-average)"
                )))
            }
        }
        // Materialize every law once so malformed expressions, bad variable
        // slots and inconsistent envelopes surface at load time.
        self.coefficients.build()?;
        self.initial.spatial("initial")?;
        Ok(())
    }
}

impl DomainConfig {
    fn validate(&self) -> Result<()> {
        let dim = match self.kind.as_str() {
            "interval" => 1,
            "rectangle" => 2,
            other => {
                return Err(SimError::UnsupportedDomain(format!(
                    "unknown domain kind '{other}'"
                )))
            }
        };
        if self.cells.len() != dim {
            return Err(SimError::SchemaError(format!(
                "domain '{}' needs {dim} cell count(s), got {}",
                self.kind,
                self.cells.len()
            )));
        }
        if self.cells.iter().any(|&c| c == 0) {
            return Err(SimError::SchemaError("cell counts must be positive".into()));
        }
        for side in &self.neumann {
            parse_side(side)?;
        }
        if dim == 1 && self.length.unwrap_or(1.0) <= 0.0 {
            return Err(SimError::SchemaError("interval length must be positive".into()));
        }
        if dim == 2 && (self.lx.unwrap_or(1.0) <= 0.0 || self.ly.unwrap_or(1.0) <= 0.0) {
            return Err(SimError::SchemaError("rectangle extents must be positive".into()));
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<DomainSpec> {
        match self.kind.as_str() {
            "interval" => Ok(DomainSpec::Interval { length: self.length.unwrap_or(1.0) }),
            "rectangle" => Ok(DomainSpec::Rectangle {
                lx: self.lx.unwrap_or(1.0),
                ly: self.ly.unwrap_or(1.0),
            }),
            other => Err(SimError::UnsupportedDomain(format!("unknown domain kind '{other}'"))),
        }
    }
}

fn parse_side(name: &str) -> Result<Side> {
    match name {
        "left" => Ok(Side::Left),
        "right" => Ok(Side::Right),
        "bottom" => Ok(Side::Bottom),
        "top" => Ok(Side::Top),
        other => Err(SimError::SchemaError(format!(
            "unknown boundary side '{other}' (use left/right/bottom/top)"
        ))),
    }
}

/// Reject expression variables outside the slot's contract.
fn check_vars(expr: &Expression, allowed: &[Var], slot: &str) -> Result<()> {
    for v in expr.vars() {
        if !allowed.contains(&v) {
            return Err(SimError::SchemaError(format!(
                "expression for {slot} uses variable not available in that slot: {expr:?}"
            )));
        }
    }
    Ok(())
}

impl CoefficientLaw {
    fn profile(&self, slot: &str) -> Result<Profile> {
        let picks =
            self.value.is_some() as u8 + self.law.is_some() as u8 + self.table.is_some() as u8;
        if picks != 1 {
            return Err(SimError::SchemaError(format!(
                "coefficient {slot} needs exactly one of value/law/table"
            )));
        }
        if let Some(v) = self.value {
            return Ok(Profile::Constant(v));
        }
        if let Some(src) = &self.law {
            let expr = Expression::parse(src)?;
            check_vars(&expr, &[Var::X, Var::Y, Var::E], slot)?;
            return Ok(Profile::Expr(expr));
        }
        let table = self.table.as_ref().expect("one pick remains");
        if table.len() < 2 {
            return Err(SimError::SchemaError(format!(
                "coefficient {slot}: a table needs at least two entries"
            )));
        }
        Ok(Profile::Table(table.iter().map(|&[e, v]| (e, v)).collect()))
    }

    /// Build a positive law: constants may omit the envelope, everything
    /// else must declare it.
    fn build_positive(&self, slot: &str) -> Result<ScalarCoefficient> {
        let profile = self.profile(slot)?;
        match (self.value, self.lo, self.hi) {
            (Some(v), lo, hi) => Ok(ScalarCoefficient {
                profile,
                lo: lo.unwrap_or(v),
                hi: hi.unwrap_or(v),
            }),
            (None, Some(lo), Some(hi)) => Ok(ScalarCoefficient { profile, lo, hi }),
            _ => Err(SimError::SchemaError(format!(
                "coefficient {slot}: non-constant laws must declare lo and hi"
            ))),
        }
    }

    /// Build a sign-valued law (envelope symmetric about zero).
    fn build_signed(&self, slot: &str) -> Result<ScalarCoefficient> {
        if self.value.is_none() && self.law.is_none() && self.table.is_none() {
            return Ok(ScalarCoefficient::signed_magnitude(Profile::Constant(0.0), 0.0));
        }
        let profile = self.profile(slot)?;
        let hi = match (self.value, self.hi) {
            (_, Some(hi)) => hi,
            (Some(v), None) => v.abs(),
            (None, None) => {
                return Err(SimError::SchemaError(format!(
                    "coefficient {slot}: sign-valued laws must declare hi (magnitude bound)"
                )))
            }
        };
        if let Some(lo) = self.lo {
            if lo != -hi {
                return Err(SimError::SchemaError(format!(
                    "coefficient {slot}: lo must equal −hi for sign-valued laws"
                )));
            }
        }
        Ok(ScalarCoefficient::signed_magnitude(profile, hi))
    }
}

impl FieldLaw {
    fn is_zero_spec(&self) -> bool {
        self.law.is_none() && self.value.unwrap_or(0.0) == 0.0
    }

    fn spatial(&self, slot: &str) -> Result<SpatialFn> {
        if let Some(src) = &self.law {
            let expr = Expression::parse(src)?;
            check_vars(&expr, &[Var::X, Var::Y], slot)?;
            return Ok(SpatialFn(Arc::new(move |x: [f64; 2]| {
                expr.eval(&EvalCtx { x: x[0], y: x[1], e: 0.0, t: 0.0 })
            })));
        }
        Ok(SpatialFn::constant(self.value.unwrap_or(0.0)))
    }

    fn time_boundary(&self, slot: &str) -> Result<TimeBoundaryFn> {
        if let Some(src) = &self.law {
            let expr = Expression::parse(src)?;
            check_vars(&expr, &[Var::X, Var::Y, Var::T], slot)?;
            return Ok(TimeBoundaryFn(Arc::new(move |x: [f64; 2], t: f64| {
                expr.eval(&EvalCtx { x: x[0], y: x[1], e: 0.0, t })
            })));
        }
        Ok(TimeBoundaryFn::constant(self.value.unwrap_or(0.0)))
    }
}

impl CoefficientsConfig {
    pub fn build(&self) -> Result<CoefficientBundle> {
        let bundle = CoefficientBundle {
            b: self.b.build_positive("b")?,
            k: self.k.build_positive("k")?,
            sigma: self.sigma.build_positive("sigma")?,
            alpha_s: self.alpha_s.build_signed("alpha_s")?,
            pi: self.pi.build_signed("pi")?,
            gamma: self.gamma.build_positive("gamma")?,
            h: self.h.time_boundary("h")?,
            g: self.g.spatial("g")?,
            ell: self.ell,
            truncation: self.truncation,
        };
        bundle.validate()?;
        Ok(bundle)
    }
}

/// Pick the coercivity pair for a scheme: the coupled scheme prefers the
/// (a, F+α)-split and falls back to the √σ-split; the lagged scheme uses its
/// dedicated pair.
pub fn select_pair(
    bounds: &crate::coefficients::BoundsReport,
    scheme: Scheme,
) -> Result<CoercivityPair> {
    match scheme {
        Scheme::A => {
            coercivity_constants(bounds, optimal_epsilon_afg(bounds), CoercivityVariant::SplitA)
                .or_else(|_| {
                    coercivity_constants(
                        bounds,
                        optimal_epsilon_sfg(bounds),
                        CoercivityVariant::SplitB,
                    )
                })
        }
        Scheme::B => coercivity_constants(bounds, 1.0, CoercivityVariant::SchemeB),
    }
}

/// Advisory conditions for a scheme: failures leave the run structurally
/// possible (a positive coercivity pair still exists) but void part of its
/// guarantee — uniqueness of the limit for the coupled scheme, the invariant
/// ball for the lagged one. Structural failures (no positive pair, step
/// above a_#/b^#) are hard errors elsewhere regardless of strictness.
fn advisory_failures(v: &SmallnessVerdict, scheme: Scheme) -> Vec<String> {
    let mut failing = Vec::new();
    let mut note = |name: &str, check: crate::constants::ConditionCheck| {
        if !check.holds {
            failing.push(format!("{name} ({:.6e} vs {:.6e})", check.lhs, check.rhs));
        }
    };
    match scheme {
        Scheme::A => note("uniqueness condition k_# > σ^#α^#(2Π^#+3𝓜)", v.sss3),
        Scheme::B => note("lag-drift condition a_# > 2σ^#α^#F^#", v.asfg),
    }
    failing
}

/// Turn a validated config into a runnable problem. `strict` escalates
/// smallness failures from warnings to errors.
pub fn build_run(cfg: &RunConfig, strict: bool) -> Result<BuiltRun> {
    cfg.validate()?;
    let bundle = cfg.coefficients.build()?;
    let bounds = bundle.bounds();
    let scheme: Scheme = cfg.scheme.into();

    let grid = TimeGrid::new(cfg.time.t_final, cfg.time.steps)?;
    if scheme == Scheme::B {
        let tau_max = bounds.a_lo / bounds.b_hi;
        if grid.tau > tau_max {
            return Err(SimError::StepTooLarge { tau: grid.tau, tau_max });
        }
    }

    let verdict = check_smallness(&bounds, None);
    let mut warnings = Vec::new();
    let failing = advisory_failures(&verdict, scheme);
    if !failing.is_empty() {
        let msg = format!(
            "smallness conditions outside the guaranteed regime: {}",
            failing.join(", ")
        );
        if strict {
            return Err(SimError::SmallnessViolated(msg));
        }
        warnings.push(msg);
    }

    let sides: Vec<Side> =
        cfg.domain.neumann.iter().map(|s| parse_side(s)).collect::<Result<_>>()?;
    let mesh = build_mesh(&cfg.domain.spec()?, &cfg.domain.cells, &sides)?;
    let theta_space = FunctionSpace::new(mesh.clone(), Constraint::None);
    let phi_space = FunctionSpace::new(mesh.clone(), Constraint::MeanZeroVolume);

    let theta0 = {
        let f = cfg.initial.spatial("initial")?;
        DiscreteField::from_fn(theta_space.clone(), move |x| f.eval(x))
    };
    let constants = DomainConstants::from_mesh(&mesh)?;
    let pair = select_pair(&bounds, scheme)?;

    let fixed_point = FixedPointConfig {
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        relaxation: cfg.solver.relaxation,
        newton: crate::elliptic::NewtonConfig {
            rel_tol: cfg.solver.newton_rel_tol,
            abs_tol: cfg.solver.newton_abs_tol,
            max_iter: cfg.solver.newton_max_iter,
        },
        ..FixedPointConfig::default()
    };
    let h_sampling = match cfg.solver.h_sampling.as_str() {
        "interval-average" => HSampling::IntervalAverage,
        _ => HSampling::RightEndpoint,
    };

    Ok(BuiltRun {
        problem: RotheProblem {
            bundle,
            theta0,
            grid,
            theta_space,
            phi_space,
            constants,
            pair,
        },
        rothe: RotheConfig { scheme, h_sampling, fixed_point },
        verdict,
        warnings,
    })
}
