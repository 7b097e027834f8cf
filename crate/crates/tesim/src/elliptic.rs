//! Per-time-step solvers for the coupled thermoelectric system.
//!
//! One implicit step solves, for given f = B(·, θ_prev), boundary data H on Γ
//! and g on Γ_N:
//!
//!   (1/τ)·(B(·,θ) − f, v)_lumped + ∫ a(·,u,d)∇θ·∇v + ∫ σ(·,u)F(·,u,d)∇φ·∇v
//!        + ∫_Γ γ(·,u)|θ|^{ℓ−2}θ v  =  ∫_Γ H v,
//!   ∫ σ(·,u)∇φ·∇w + ∫ σ(·,u)α_S(·,u)∇θ·∇w = ∫_{Γ_N} g w,     φ mean-zero,
//!
//! with the coefficient arguments (u, d) frozen at a previous iterate. Two
//! outer strategies close the loop:
//!
//!   Scheme A: damped Picard on the pair (u, d) ← (θ, φ), each inner problem
//!             solved monolithically by Newton over [θ; φ; multiplier].
//!   Scheme B: φ is computed once from θ_prev (lagged potential), then a
//!             Picard loop runs over the scalar argument u of the θ-problem.
//!
//! The mass-like term is lumped and uses the nodal primitive B(·,θᵢ), which
//! makes the time-stepping a discrete gradient flow for the energy density
//! Ψ and lets every printed energy inequality hold exactly at the discrete
//! level (up to solver residuals). Newton's Jacobian for that term is the
//! diagonal (1/τ)·mᵢ·b(·,θᵢ).
//!
//! Iteration counts, residuals, per-term energy ledgers and invariant-ball
//! norms are recorded on every returned [`StepSolution`].

use nalgebra::{DMatrix, DVector};

use crate::assemble::{
    boundary_function_power, boundary_load, boundary_power, weighted_stiffness,
    weighted_stiffness_signed, CellPoint, FacetPoint,
};
use crate::coefficients::{CoefficientBundle, SpatialFn};
use crate::constants::{radius_scheme_b, rhs_functional, CoercivityPair, DomainConstants, SchemeBNorms};
use crate::error::{Result, SimError};
use crate::linalg::{solve_dense, Csr};
use crate::mesh::BoundarySelector;
use crate::space::{DiscreteField, FunctionSpace};

/// Everything one implicit time step needs. The current datum g lives on the
/// bundle; only the radiative datum needs a per-step time freeze.
#[derive(Clone)]
pub struct StepProblem {
    /// Nodal values of B(·, θ_prev) on the θ-space.
    pub f: DiscreteField,
    /// Radiative datum on Γ: the bundle's h sampled at this step's time node.
    pub h: SpatialFn,
    pub tau: f64,
    pub bundle: CoefficientBundle,
    pub theta_space: FunctionSpace,
    pub phi_space: FunctionSpace,
    /// Poincaré/trace constants entering the energy right-hand sides.
    pub constants: DomainConstants,
    /// Coercivity pair (L1, L2) used to compose the step estimate.
    pub pair: CoercivityPair,
}

/// Newton controls for the monotone inner problems.
#[derive(Clone, Copy, Debug)]
pub struct NewtonConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { rel_tol: 1e-10, abs_tol: 1e-12, max_iter: 50 }
    }
}

/// Norm used for the outer fixed-point increment test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IncrementNorm {
    H1,
    L2,
}

/// Outer fixed-point controls.
#[derive(Clone, Copy, Debug)]
pub struct FixedPointConfig {
    /// Increment-norm threshold.
    pub tol: f64,
    pub max_iter: usize,
    /// Damping ω ∈ (0, 1]; halved adaptively when increments grow.
    pub relaxation: f64,
    pub norm: IncrementNorm,
    pub newton: NewtonConfig,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            tol: 1e-9,
            max_iter: 200,
            relaxation: 1.0,
            norm: IncrementNorm::H1,
            newton: NewtonConfig::default(),
        }
    }
}

/// Raw norms and composed sides of the per-step energy inequality. All
/// quantities use assembly-consistent quadrature: lumped sums for the
/// mass-like terms, cell quadrature for gradients, facet quadrature for
/// boundary terms — the combination under which the inequality is exact.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct EnergyTerms {
    /// Σ mᵢ θᵢ² at the new time level.
    pub theta_lumped_sq: f64,
    pub grad_theta_sq: f64,
    pub grad_phi_sq: f64,
    /// ∫ σ |∇φ|² with σ at the step's frozen temperature argument.
    pub sigma_grad_phi_sq: f64,
    /// ‖θ‖^ℓ over the radiative boundary Γ.
    pub boundary_power: f64,
    /// Σ mᵢ fᵢ² for f = B(·, θ_prev).
    pub f_lumped_sq: f64,
    /// ∫_Γ |H|^{ℓ'}.
    pub h_power: f64,
    /// ∫_{Γ_N} g².
    pub g_sq: f64,
    /// ‖∇u‖² for the temperature argument of the potential estimate
    /// (u = θ for the coupled scheme, u = θ_prev for the lagged one).
    pub grad_coupling_sq: f64,
    /// Composed left side of the step estimate.
    pub lhs: f64,
    /// Composed right side of the step estimate.
    pub rhs: f64,
    /// ‖√σ ∇φ‖, left side of the potential estimate.
    pub phi_lhs: f64,
    /// √σ_hi·α_hi·‖∇u‖ + K₂(P₂+1)‖g‖/√σ_lo, its right side.
    pub phi_rhs: f64,
}

/// Converged output of one time step.
#[derive(Clone, Debug)]
pub struct StepSolution {
    pub theta: DiscreteField,
    pub phi: DiscreteField,
    pub outer_iterations: usize,
    pub newton_iterations_total: usize,
    /// Self-consistency residual of the θ-equation at the returned state
    /// (coefficient arguments evaluated at the solution itself).
    pub residual_theta: f64,
    /// Self-consistency residual of the φ-equation, multiplier direction
    /// projected out.
    pub residual_phi: f64,
    pub energy: EnergyTerms,
    /// Invariant-ball norm: ‖∇φ‖+‖∇θ‖+‖θ‖_{ℓ,Γ} for the coupled scheme,
    /// max over iterates of (‖θ‖² + ‖∇θ‖²)^{1/2} for the lagged one.
    pub ball_norm: f64,
    /// Ball membership vs. the supplied/derived radius, when available.
    pub in_ball: Option<bool>,
}

/// Frozen-coefficient operators for one outer iterate.
struct FrozenOps {
    a: Csr,
    sigma: Csr,
    sigma_f: Csr,
    sigma_alpha: Csr,
}

/// Assemble all four gradient-gradient blocks with coefficients frozen at
/// (u1, u2). Audits a(·, u1, u2) ≥ a_lo at every quadrature point first, so
/// inconsistent declared bounds surface as errors rather than bad solves.
fn assemble_frozen(problem: &StepProblem, u1: &DiscreteField, u2: &DiscreteField) -> Result<FrozenOps> {
    let space = &problem.theta_space;
    let mesh = &space.mesh;
    let bundle = &problem.bundle;
    for c in 0..mesh.n_cells() {
        let nodes = mesh.cell_nodes(c);
        let (qps, nq) = mesh.cell_quad_points(c);
        for q in &qps[..nq] {
            let shapes = &q.shapes[..nodes.len()];
            let e = u1.value_at(nodes, shapes);
            let d = u2.value_at(nodes, shapes);
            bundle.derived_a(q.x, e, d)?;
        }
    }
    let a = weighted_stiffness(space, &|p: &CellPoint| {
        let e = p.value(u1);
        let d = p.value(u2);
        bundle.derived_a(p.x, e, d).expect("audited above")
    })?;
    let sigma = weighted_stiffness(space, &|p: &CellPoint| {
        let e = p.value(u1);
        bundle.sigma.eval(p.x, e)
    })?;
    let sigma_f = weighted_stiffness_signed(space, &|p: &CellPoint| {
        let e = p.value(u1);
        let d = p.value(u2);
        bundle.sigma.eval(p.x, e) * bundle.derived_f(p.x, e, d)
    })?;
    let sigma_alpha = weighted_stiffness_signed(space, &|p: &CellPoint| {
        let e = p.value(u1);
        bundle.sigma.eval(p.x, e) * bundle.alpha_s.eval(p.x, e)
    })?;
    Ok(FrozenOps { a, sigma, sigma_f, sigma_alpha })
}

/// Nodal primitive B(·, θᵢ) at every vertex.
pub(crate) fn nodal_b(
    bundle: &CoefficientBundle,
    space: &FunctionSpace,
    theta: &DVector<f64>,
) -> Result<DVector<f64>> {
    let mesh = &space.mesh;
    let mut out = DVector::zeros(theta.len());
    for i in 0..theta.len() {
        out[i] = bundle.integrate_b(mesh.vertices[i], theta[i])?;
    }
    Ok(out)
}

/// Residual of the θ-equation at nodal state `theta`, with coefficient
/// arguments frozen at (u1, d_arg) and the potential entering the drift term
/// equal to `d_arg` as well (that is how both schemes use it).
fn theta_residual(
    problem: &StepProblem,
    u1: &DiscreteField,
    d_arg: &DiscreteField,
    theta: &DVector<f64>,
) -> Result<DVector<f64>> {
    let space = &problem.theta_space;
    let bundle = &problem.bundle;
    let ops = assemble_frozen(problem, u1, d_arg)?;
    let lh = boundary_load(space, &problem.h, BoundarySelector::Gamma);
    let field = DiscreteField { space: space.clone(), values: theta.clone() };
    let gamma_w = |p: &FacetPoint| bundle.gamma.eval(p.x, p.value(u1));
    let (bp, _) = boundary_power(space, &gamma_w, &field, bundle.ell)?;
    let b = nodal_b(bundle, space, theta)?;
    let m = &space.mesh.lumped;
    let inv_tau = 1.0 / problem.tau;
    let mut r = ops.a.matvec(theta) + ops.sigma_f.matvec(&d_arg.values) - lh + bp;
    for i in 0..r.len() {
        r[i] += inv_tau * m[i] * (b[i] - problem.f.values[i]);
    }
    Ok(r)
}

/// Residual of the φ-equation at (u, φ) with the multiplier direction
/// projected out (the mean-zero constraint absorbs that component).
pub(crate) fn phi_residual(problem: &StepProblem, u: &DiscreteField, phi: &DiscreteField) -> Result<f64> {
    let ops = assemble_frozen(problem, u, phi)?;
    let lg = boundary_load(&problem.phi_space, &problem.bundle.g, BoundarySelector::GammaN);
    let mut r = ops.sigma.matvec(&phi.values) + ops.sigma_alpha.matvec(&u.values) - lg;
    if let Some(c) = problem.phi_space.constraint_vector() {
        let cn = c.norm();
        if cn > 0.0 {
            let chat = c / cn;
            let along = r.dot(&chat);
            r -= chat * along;
        }
    }
    Ok(r.norm())
}

/// Convergence scale for Newton tolerances: 1 + norm of the state-independent
/// load parts.
fn load_scale(problem: &StepProblem) -> f64 {
    let lh = boundary_load(&problem.theta_space, &problem.h, BoundarySelector::Gamma);
    let lg = boundary_load(&problem.phi_space, &problem.bundle.g, BoundarySelector::GammaN);
    let m = &problem.theta_space.mesh.lumped;
    let mut fa = 0.0;
    for i in 0..m.len() {
        let v = m[i] * problem.f.values[i] / problem.tau;
        fa += v * v;
    }
    1.0 + fa.sqrt() + lh.norm() + lg.norm()
}

/// Solve the potential equation for a given temperature field (lagged form):
/// find mean-zero φ with ∫σ(·,u)∇φ·∇w = −∫σ(·,u)α_S(·,u)∇u·∇w + ∫_{Γ_N} g w.
pub fn solve_phi_given(
    u: &DiscreteField,
    bundle: &CoefficientBundle,
    phi_space: &FunctionSpace,
) -> Result<DiscreteField> {
    let a_sigma = weighted_stiffness(phi_space, &|p: &CellPoint| bundle.sigma.eval(p.x, p.value(u)))?;
    let sigma_alpha = weighted_stiffness_signed(phi_space, &|p: &CellPoint| {
        let e = p.value(u);
        bundle.sigma.eval(p.x, e) * bundle.alpha_s.eval(p.x, e)
    })?;
    let rhs =
        boundary_load(phi_space, &bundle.g, BoundarySelector::GammaN) - sigma_alpha.matvec(&u.values);
    let n = phi_space.dof_count();
    match phi_space.constraint_vector() {
        Some(c) => {
            let mut sys = DMatrix::zeros(n + 1, n + 1);
            a_sigma.add_to_dense(&mut sys, 0, 0, 1.0);
            for i in 0..n {
                sys[(i, n)] = c[i];
                sys[(n, i)] = c[i];
            }
            let mut full_rhs = DVector::zeros(n + 1);
            full_rhs.rows_mut(0, n).copy_from(&rhs);
            let sol = solve_dense(sys, &full_rhs)?;
            Ok(DiscreteField { space: phi_space.clone(), values: sol.rows(0, n).into_owned() })
        }
        None => {
            let sol = solve_dense(a_sigma.to_dense(), &rhs)?;
            Ok(DiscreteField { space: phi_space.clone(), values: sol })
        }
    }
}

/// Result of one nonlinear θ-solve (coefficients frozen).
pub struct ThetaSolve {
    pub theta: DiscreteField,
    pub newton_iterations: usize,
    pub residual: f64,
}

/// Solve the θ-equation with coefficient arguments frozen at (u, phi) and the
/// potential fixed, by Newton with backtracking on the residual norm. The
/// boundary radiation term is monotone, so damped Newton is globally safe.
pub fn solve_theta_given(
    u: &DiscreteField,
    phi: &DiscreteField,
    problem: &StepProblem,
    cfg: &NewtonConfig,
) -> Result<ThetaSolve> {
    let space = &problem.theta_space;
    let bundle = &problem.bundle;
    let ops = assemble_frozen(problem, u, phi)?;
    let cross = ops.sigma_f.matvec(&phi.values);
    let lh = boundary_load(space, &problem.h, BoundarySelector::Gamma);
    let m = &space.mesh.lumped;
    let inv_tau = 1.0 / problem.tau;
    let gamma_w = |p: &FacetPoint| bundle.gamma.eval(p.x, p.value(u));
    let n = space.dof_count();

    let residual_of = |th: &DVector<f64>| -> Result<DVector<f64>> {
        let field = DiscreteField { space: space.clone(), values: th.clone() };
        let (bp, _) = boundary_power(space, &gamma_w, &field, bundle.ell)?;
        let b = nodal_b(bundle, space, th)?;
        let mut r = ops.a.matvec(th) + &cross - &lh + bp;
        for i in 0..n {
            r[i] += inv_tau * m[i] * (b[i] - problem.f.values[i]);
        }
        Ok(r)
    };

    let scale = load_scale(problem);
    let tol = cfg.abs_tol.max(cfg.rel_tol * scale);
    let mut theta = u.values.clone();
    let mut r = residual_of(&theta)?;
    let mut rnorm = r.norm();
    let mut iterations = 0;
    while rnorm > tol {
        if iterations >= cfg.max_iter {
            return Err(SimError::NewtonDiverged { iterations, residual: rnorm });
        }
        let field = DiscreteField { space: space.clone(), values: theta.clone() };
        let (_, bp_jac) = boundary_power(space, &gamma_w, &field, bundle.ell)?;
        let mut jac = ops.a.to_dense();
        bp_jac.add_to_dense(&mut jac, 0, 0, 1.0);
        for i in 0..n {
            jac[(i, i)] += inv_tau * m[i] * bundle.b.eval(space.mesh.vertices[i], theta[i]);
        }
        let delta = solve_dense(jac, &(-&r))?;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = &theta + &delta * step;
            let rt = residual_of(&trial)?;
            let rtn = rt.norm();
            if rtn < rnorm || rtn <= tol {
                theta = trial;
                r = rt;
                rnorm = rtn;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            return Err(SimError::NewtonDiverged { iterations, residual: rnorm });
        }
    }
    Ok(ThetaSolve {
        theta: DiscreteField { space: space.clone(), values: theta },
        newton_iterations: iterations,
        residual: rnorm,
    })
}

/// Result of one frozen-coefficient coupled solve.
pub struct CoupledSolve {
    pub theta: DiscreteField,
    pub phi: DiscreteField,
    pub newton_iterations: usize,
    pub residual_theta: f64,
    pub residual_phi: f64,
}

/// Solve the coupled block system with coefficients frozen at (u1, u2),
/// monolithically over [θ; φ; multiplier] by damped Newton. Only the
/// radiation term and the lumped B-term are nonlinear; all gradient blocks
/// are assembled once.
pub fn solve_coupled_frozen(
    u1: &DiscreteField,
    u2: &DiscreteField,
    problem: &StepProblem,
    cfg: &NewtonConfig,
) -> Result<CoupledSolve> {
    let space = &problem.theta_space;
    let bundle = &problem.bundle;
    let ops = assemble_frozen(problem, u1, u2)?;
    let lh = boundary_load(space, &problem.h, BoundarySelector::Gamma);
    let lg = boundary_load(&problem.phi_space, &problem.bundle.g, BoundarySelector::GammaN);
    let c = problem
        .phi_space
        .constraint_vector()
        .ok_or_else(|| SimError::InvalidSpec("potential space must carry a mean-zero constraint".into()))?;
    let m = &space.mesh.lumped;
    let inv_tau = 1.0 / problem.tau;
    let gamma_w = |p: &FacetPoint| bundle.gamma.eval(p.x, p.value(u1));
    let n = space.dof_count();
    let big = 2 * n + 1;

    // State layout: [θ (0..n); φ (n..2n); λ (2n)].
    let residual_of = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let theta = x.rows(0, n).into_owned();
        let phi = x.rows(n, n).into_owned();
        let lambda = x[2 * n];
        let field = DiscreteField { space: space.clone(), values: theta.clone() };
        let (bp, _) = boundary_power(space, &gamma_w, &field, bundle.ell)?;
        let b = nodal_b(bundle, space, &theta)?;
        let mut out = DVector::zeros(big);
        let r_theta = ops.a.matvec(&theta) + ops.sigma_f.matvec(&phi) - &lh + bp;
        let r_phi = ops.sigma.matvec(&phi) + ops.sigma_alpha.matvec(&theta) - &lg;
        for i in 0..n {
            out[i] = r_theta[i] + inv_tau * m[i] * (b[i] - problem.f.values[i]);
            out[n + i] = r_phi[i] + lambda * c[i];
        }
        out[2 * n] = c.dot(&phi);
        Ok(out)
    };

    // Constant part of the Jacobian: everything except the lumped-B diagonal
    // and the radiation block.
    let mut jac_const = DMatrix::zeros(big, big);
    ops.a.add_to_dense(&mut jac_const, 0, 0, 1.0);
    ops.sigma_f.add_to_dense(&mut jac_const, 0, n, 1.0);
    ops.sigma_alpha.add_to_dense(&mut jac_const, n, 0, 1.0);
    ops.sigma.add_to_dense(&mut jac_const, n, n, 1.0);
    for i in 0..n {
        jac_const[(n + i, 2 * n)] = c[i];
        jac_const[(2 * n, n + i)] = c[i];
    }

    let scale = load_scale(problem);
    let tol = cfg.abs_tol.max(cfg.rel_tol * scale);
    let mut x = DVector::zeros(big);
    x.rows_mut(0, n).copy_from(&u1.values);
    x.rows_mut(n, n).copy_from(&u2.values);
    let mut r = residual_of(&x)?;
    let mut rnorm = r.norm();
    let mut iterations = 0;
    while rnorm > tol {
        if iterations >= cfg.max_iter {
            return Err(SimError::NewtonDiverged { iterations, residual: rnorm });
        }
        let theta = x.rows(0, n).into_owned();
        let field = DiscreteField { space: space.clone(), values: theta.clone() };
        let (_, bp_jac) = boundary_power(space, &gamma_w, &field, bundle.ell)?;
        let mut jac = jac_const.clone();
        bp_jac.add_to_dense(&mut jac, 0, 0, 1.0);
        for i in 0..n {
            jac[(i, i)] += inv_tau * m[i] * bundle.b.eval(space.mesh.vertices[i], theta[i]);
        }
        let delta = solve_dense(jac, &(-&r))?;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = &x + &delta * step;
            let rt = residual_of(&trial)?;
            let rtn = rt.norm();
            if rtn < rnorm || rtn <= tol {
                x = trial;
                r = rt;
                rnorm = rtn;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            return Err(SimError::NewtonDiverged { iterations, residual: rnorm });
        }
    }
    let residual_theta = r.rows(0, n).norm();
    let residual_phi = r.rows(n, n + 1).norm();
    Ok(CoupledSolve {
        theta: DiscreteField { space: space.clone(), values: x.rows(0, n).into_owned() },
        phi: DiscreteField { space: problem.phi_space.clone(), values: x.rows(n, n).into_owned() },
        newton_iterations: iterations,
        residual_theta,
        residual_phi,
    })
}

/// Which outer strategy composed a step estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum SchemeKind {
    Coupled,
    Lagged,
}

/// Compose the per-term energy ledger for a converged step.
fn energy_terms(
    problem: &StepProblem,
    theta: &DiscreteField,
    phi: &DiscreteField,
    u_for_phi: &DiscreteField,
    kind: SchemeKind,
) -> Result<EnergyTerms> {
    let bounds = problem.bundle.bounds();
    let ell = bounds.ell;
    let ell_conj = bounds.ell_conj();
    let theta_lumped_sq = {
        let v = theta.lumped_l2();
        v * v
    };
    let grad_theta = theta.h1_semi();
    let grad_phi = phi.h1_semi();
    let sigma_mat = weighted_stiffness(&problem.phi_space, &|p: &CellPoint| {
        problem.bundle.sigma.eval(p.x, p.value(u_for_phi))
    })?;
    let sigma_grad_phi_sq = sigma_mat.bilinear(&phi.values, &phi.values);
    let boundary_power = theta
        .l_ell_boundary(ell, BoundarySelector::Gamma)
        .powf(ell);
    let f_lumped_sq = {
        let v = problem.f.lumped_l2();
        v * v
    };
    let h_power = boundary_function_power(&problem.theta_space, &problem.h, ell_conj, BoundarySelector::Gamma);
    let g_sq = boundary_function_power(&problem.phi_space, &problem.bundle.g, 2.0, BoundarySelector::GammaN);
    let grad_coupling = u_for_phi.h1_semi();
    let dc = &problem.constants;
    let phi_lhs = sigma_grad_phi_sq.sqrt();
    let phi_rhs = bounds.sigma_hi.sqrt() * bounds.alpha_hi * grad_coupling
        + dc.product * g_sq.sqrt() / bounds.sigma_lo.sqrt();
    let (lhs, rhs) = match kind {
        SchemeKind::Coupled => {
            let lhs = bounds.b_lo / (2.0 * problem.tau) * theta_lumped_sq
                + problem.pair.l1 * grad_theta * grad_theta
                + problem.pair.l2 / 2.0 * grad_phi * grad_phi
                + bounds.gamma_lo / ell_conj * boundary_power;
            let rhs = rhs_functional(
                f_lumped_sq,
                h_power,
                g_sq,
                &bounds,
                dc,
                problem.pair.l2,
                problem.tau,
                ell,
            );
            (lhs, rhs)
        }
        SchemeKind::Lagged => {
            let lhs = bounds.b_lo / (2.0 * problem.tau) * theta_lumped_sq
                + bounds.a_lo / 2.0 * grad_theta * grad_theta
                + bounds.gamma_lo / ell_conj * boundary_power;
            let drift = bounds.f_hi * bounds.sigma_hi;
            let rhs = f_lumped_sq / (2.0 * problem.tau * bounds.b_lo)
                + h_power / (ell_conj * bounds.gamma_lo.powf(1.0 / (ell - 1.0)))
                + drift * drift / (2.0 * bounds.a_lo * bounds.sigma_lo) * phi_rhs * phi_rhs;
            (lhs, rhs)
        }
    };
    Ok(EnergyTerms {
        theta_lumped_sq,
        grad_theta_sq: grad_theta * grad_theta,
        grad_phi_sq: grad_phi * grad_phi,
        sigma_grad_phi_sq,
        boundary_power,
        f_lumped_sq,
        h_power,
        g_sq,
        grad_coupling_sq: grad_coupling * grad_coupling,
        lhs,
        rhs,
        phi_lhs,
        phi_rhs,
    })
}

fn relax(old: &DiscreteField, new: &DiscreteField, omega: f64) -> DiscreteField {
    DiscreteField {
        space: old.space.clone(),
        values: &old.values * (1.0 - omega) + &new.values * omega,
    }
}

fn increment_norm(norm: IncrementNorm, d1: &DiscreteField, d2: &DiscreteField) -> f64 {
    let l2 = d1.l2().powi(2) + d2.l2().powi(2);
    match norm {
        IncrementNorm::L2 => l2.sqrt(),
        IncrementNorm::H1 => (l2 + d1.h1_semi().powi(2) + d2.h1_semi().powi(2)).sqrt(),
    }
}

/// Outer fixed point for the coupled scheme: damped Picard on the frozen
/// coefficient pair, each iterate produced by [`solve_coupled_frozen`].
/// Terminates when the self-consistency residual (the full nonlinear system
/// re-assembled at the new iterate) falls below 10× the Newton tolerance, or
/// the increment drops below `cfg.tol`. `radius` is an optional invariant-ball
/// radius; membership is recorded, not enforced.
pub fn fixed_point_scheme_a(
    problem: &StepProblem,
    init: (&DiscreteField, &DiscreteField),
    cfg: &FixedPointConfig,
    radius: Option<f64>,
) -> Result<StepSolution> {
    let scale = load_scale(problem);
    let res_target = 10.0 * cfg.newton.abs_tol.max(cfg.newton.rel_tol * scale);
    let mut u1 = init.0.clone();
    let mut u2 = init.1.clone();
    let mut omega = cfg.relaxation;
    let mut prev_inc = f64::INFINITY;
    let mut newton_total = 0;
    let mut best: Option<(f64, StepSolution)> = None;
    let mut last_inc = f64::INFINITY;

    let build = |theta: DiscreteField,
                 phi: DiscreteField,
                 outer: usize,
                 newton_total: usize,
                 rt: f64,
                 rp: f64|
     -> Result<StepSolution> {
        let energy = energy_terms(problem, &theta, &phi, &theta, SchemeKind::Coupled)?;
        let ball_norm = phi.h1_semi()
            + theta.h1_semi()
            + theta.l_ell_boundary(problem.bundle.ell, BoundarySelector::Gamma);
        let in_ball = radius.map(|r| ball_norm <= r * (1.0 + 1e-9));
        Ok(StepSolution {
            theta,
            phi,
            outer_iterations: outer,
            newton_iterations_total: newton_total,
            residual_theta: rt,
            residual_phi: rp,
            energy,
            ball_norm,
            in_ball,
        })
    };

    for k in 1..=cfg.max_iter.max(1) {
        let sol = solve_coupled_frozen(&u1, &u2, problem, &cfg.newton)?;
        newton_total += sol.newton_iterations;
        let theta_new = relax(&u1, &sol.theta, omega);
        let phi_new = relax(&u2, &sol.phi, omega);
        let inc = increment_norm(cfg.norm, &theta_new.sub(&u1), &phi_new.sub(&u2));
        let rt = theta_residual(problem, &theta_new, &phi_new, &theta_new.values)?.norm();
        let rp = phi_residual(problem, &theta_new, &phi_new)?;
        let self_res = rt.hypot(rp);
        if self_res <= res_target || inc <= cfg.tol {
            return build(theta_new, phi_new, k, newton_total, rt, rp);
        }
        if best.as_ref().map_or(true, |(b, _)| self_res < *b) {
            best = Some((self_res, build(theta_new.clone(), phi_new.clone(), k, newton_total, rt, rp)?));
        }
        if inc > prev_inc && omega > 0.05 {
            omega *= 0.5;
        }
        prev_inc = inc;
        last_inc = inc;
        u1 = theta_new;
        u2 = phi_new;
    }
    let best_sol = best.expect("at least one iterate recorded").1;
    Err(SimError::NonConvergence {
        iterations: cfg.max_iter,
        increment: last_inc,
        best: Box::new(best_sol),
    })
}

/// Outer fixed point for the lagged-potential scheme: φ is solved once from
/// `theta_prev`, then Picard runs over the frozen temperature argument of the
/// θ-problem. Enforces the step-size restriction τ ≤ a_lo/b_hi and the drift
/// smallness through the invariant-ball radius computation; every iterate's
/// H¹-type ball norm is recorded and the maximum compared against that radius.
pub fn fixed_point_scheme_b(
    theta_prev: &DiscreteField,
    problem: &StepProblem,
    cfg: &FixedPointConfig,
) -> Result<StepSolution> {
    let bounds = problem.bundle.bounds();
    let f_norm_sq = {
        let v = problem.f.lumped_l2();
        v * v
    };
    let h_norm_pow =
        boundary_function_power(&problem.theta_space, &problem.h, bounds.ell_conj(), BoundarySelector::Gamma);
    let g_norm =
        boundary_function_power(&problem.phi_space, &problem.bundle.g, 2.0, BoundarySelector::GammaN)
            .sqrt();
    let radius = radius_scheme_b(
        &SchemeBNorms { f_norm_sq, h_norm_pow, g_norm },
        &bounds,
        &problem.constants,
        problem.tau,
        bounds.ell,
    )?;

    let phi = solve_phi_given(theta_prev, &problem.bundle, &problem.phi_space)?;
    let rp = phi_residual(problem, theta_prev, &phi)?;

    let scale = load_scale(problem);
    let res_target = 10.0 * cfg.newton.abs_tol.max(cfg.newton.rel_tol * scale);
    let ball_of = |f: &DiscreteField| (f.l2().powi(2) + f.h1_semi().powi(2)).sqrt();
    let mut u = theta_prev.clone();
    let mut omega = cfg.relaxation;
    let mut prev_inc = f64::INFINITY;
    let mut newton_total = 0;
    let mut max_ball: f64 = 0.0;
    let mut best: Option<(f64, DiscreteField, usize, f64)> = None;
    let mut last_inc = f64::INFINITY;

    let finish = |theta: DiscreteField,
                  outer: usize,
                  newton_total: usize,
                  rt: f64,
                  max_ball: f64|
     -> Result<StepSolution> {
        let energy = energy_terms(problem, &theta, &phi, theta_prev, SchemeKind::Lagged)?;
        let ball_norm = max_ball.max(ball_of(&theta));
        Ok(StepSolution {
            theta,
            phi: phi.clone(),
            outer_iterations: outer,
            newton_iterations_total: newton_total,
            residual_theta: rt,
            residual_phi: rp,
            energy,
            ball_norm,
            in_ball: Some(ball_norm <= radius * (1.0 + 1e-9)),
        })
    };

    for k in 1..=cfg.max_iter.max(1) {
        let ts = solve_theta_given(&u, &phi, problem, &cfg.newton)?;
        newton_total += ts.newton_iterations;
        let theta_new = relax(&u, &ts.theta, omega);
        max_ball = max_ball.max(ball_of(&theta_new));
        let d = theta_new.sub(&u);
        let inc = match cfg.norm {
            IncrementNorm::L2 => d.l2(),
            IncrementNorm::H1 => (d.l2().powi(2) + d.h1_semi().powi(2)).sqrt(),
        };
        let rt = theta_residual(problem, &theta_new, &phi, &theta_new.values)?.norm();
        if rt <= res_target || inc <= cfg.tol {
            return finish(theta_new, k, newton_total, rt, max_ball);
        }
        if best.as_ref().map_or(true, |(b, ..)| rt < *b) {
            best = Some((rt, theta_new.clone(), k, rt));
        }
        if inc > prev_inc && omega > 0.05 {
            omega *= 0.5;
        }
        prev_inc = inc;
        last_inc = inc;
        u = theta_new;
    }
    let (_, theta_best, outer, rt) = best.expect("at least one iterate recorded");
    let best_sol = finish(theta_best, outer, newton_total, rt, max_ball)?;
    Err(SimError::NonConvergence {
        iterations: cfg.max_iter,
        increment: last_inc,
        best: Box::new(best_sol),
    })
}
