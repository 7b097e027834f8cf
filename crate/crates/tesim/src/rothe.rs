//! Time discretization by the method of horizontal lines.
//!
//! The time interval [0, T] is split into M equal steps of length τ = T/M
//! with nodes t_m = m·τ. Each step solves one coupled elliptic problem (see
//! [`crate::elliptic`]) producing the chain θ⁰, θ¹, …, θ^M and φ¹, …, φ^M.
//! From the chain, four interpolants reconstruct functions of time:
//!
//!   θ_M, φ_M — piecewise constant, right-sampled: value θ^m on (t_{m−1}, t_m];
//!   Θ_M      — piecewise linear through the nodal values θ^m;
//!   B̃        — piecewise linear through the nodal primitives B(·, θ^m);
//!   Z_M      — piecewise constant difference quotient (B(θ^m) − B(θ^{m−1}))/τ,
//!
//! linked by the exact identity ∫₀ᵗ Z_M ds = B̃(t) − B(·, θ⁰) at every t.
//!
//! The boundary datum H(·, t) enters each step either sampled at the right
//! endpoint t_m or averaged over (t_{m−1}, t_m); both choices keep every
//! energy ledger valid, and they coincide for time-independent data.
//!
//! Post-processing reconstructs the heat flux, the electric current and the
//! combined energy flux cell-by-cell from the converged fields.

use nalgebra::DVector;

use crate::assemble::boundary_function_power;
use crate::coefficients::{CoefficientBundle, SpatialFn, TimeBoundaryFn};
use crate::constants::{
    ball_radii, radius_scheme_b, rhs_functional, CoercivityPair, DomainConstants, SchemeBNorms,
};
use crate::elliptic::{
    fixed_point_scheme_a, fixed_point_scheme_b, nodal_b, EnergyTerms, FixedPointConfig, StepProblem,
};
use crate::error::{Result, SimError};
use crate::mesh::BoundarySelector;
use crate::quadrature::GAUSS_4;
use crate::space::{DiscreteField, FunctionSpace};

/// Uniform time grid on [0, T].
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct TimeGrid {
    pub t_final: f64,
    pub steps: usize,
    pub tau: f64,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(SimError::InvalidSpec(format!(
                "final time must be positive and finite, got {t_final}"
            )));
        }
        if steps == 0 {
            return Err(SimError::InvalidSpec("need at least one time step".into()));
        }
        Ok(TimeGrid { t_final, steps, tau: t_final / steps as f64 })
    }

    /// Node t_m = m·T/M.
    pub fn node(&self, m: usize) -> f64 {
        self.t_final * m as f64 / self.steps as f64
    }

    /// Index m with t ∈ (t_{m−1}, t_m], and m = 0 exactly at t = 0.
    fn right_index(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.t_final * (1.0 + 1e-12)).contains(&t) {
            return Err(SimError::OutOfRange { t, t_max: self.t_final });
        }
        if t <= 0.0 {
            return Ok(0);
        }
        let m = (t / self.tau - 1e-12).ceil() as usize;
        Ok(m.clamp(1, self.steps))
    }
}

/// Outer strategy selection for every step of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Scheme {
    /// Coupled frozen-coefficient fixed point (both fields updated together).
    A,
    /// Lagged potential: φ from the previous temperature, then a θ-only loop.
    B,
}

/// Temporal treatment of the radiative boundary datum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum HSampling {
    /// H_m(x) = H(x, t_m).
    RightEndpoint,
    /// H_m(x) = (1/τ) ∫_{t_{m−1}}^{t_m} H(x, s) ds, by Gauss quadrature.
    IntervalAverage,
}

/// Freeze the time dependence of the boundary datum for step m.
pub fn sample_h(h: &TimeBoundaryFn, grid: &TimeGrid, m: usize, mode: HSampling) -> SpatialFn {
    let t0 = grid.node(m - 1);
    let t1 = grid.node(m);
    let h = h.clone();
    match mode {
        HSampling::RightEndpoint => SpatialFn(std::sync::Arc::new(move |x: [f64; 2]| h.eval(x, t1))),
        HSampling::IntervalAverage => SpatialFn(std::sync::Arc::new(move |x: [f64; 2]| {
            let mid = 0.5 * (t0 + t1);
            let half = 0.5 * (t1 - t0);
            let mut acc = 0.0;
            for (node, weight) in GAUSS_4 {
                acc += weight * h.eval(x, mid + half * node);
            }
            acc * 0.5
        })),
    }
}

/// Per-step convergence and energy diagnostics kept with a trajectory.
#[derive(Clone, Debug, serde::Serialize)]
pub struct StepRecord {
    pub m: usize,
    pub t: f64,
    pub outer_iterations: usize,
    pub newton_iterations_total: usize,
    pub residual_theta: f64,
    pub residual_phi: f64,
    pub energy: EnergyTerms,
    pub ball_norm: f64,
    pub ball_radius: Option<f64>,
    pub in_ball: Option<bool>,
}

/// Full run definition: data (carried by the bundle), spaces, grid and
/// analysis constants.
#[derive(Clone)]
pub struct RotheProblem {
    pub bundle: CoefficientBundle,
    pub theta0: DiscreteField,
    pub grid: TimeGrid,
    pub theta_space: FunctionSpace,
    pub phi_space: FunctionSpace,
    pub constants: DomainConstants,
    pub pair: CoercivityPair,
}

/// Controls shared by every step of a run.
#[derive(Clone, Copy, Debug)]
pub struct RotheConfig {
    pub scheme: Scheme,
    pub h_sampling: HSampling,
    pub fixed_point: FixedPointConfig,
}

impl Default for RotheConfig {
    fn default() -> Self {
        RotheConfig {
            scheme: Scheme::A,
            h_sampling: HSampling::RightEndpoint,
            fixed_point: FixedPointConfig::default(),
        }
    }
}

/// The computed chain of time-level solutions plus everything needed to
/// re-derive the energy ledgers offline.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub scheme: Scheme,
    /// How the boundary datum was sampled per step; recorded so offline
    /// ledger recomputation reproduces the loads exactly.
    pub h_sampling: HSampling,
    /// θ⁰ … θ^M (M+1 entries).
    pub theta: Vec<DiscreteField>,
    /// φ¹ … φ^M (M entries; φ has no initial value).
    pub phi: Vec<DiscreteField>,
    pub steps: Vec<StepRecord>,
    pub constants: DomainConstants,
    pub pair: CoercivityPair,
}

impl Trajectory {
    pub fn theta_at(&self, m: usize) -> &DiscreteField {
        &self.theta[m]
    }

    /// φ at step m ∈ {1, …, M}.
    pub fn phi_at(&self, m: usize) -> &DiscreteField {
        &self.phi[m - 1]
    }
}

/// March the chain from θ⁰ to θ^M. A failing step returns the partial chain
/// computed so far inside the error payload.
pub fn run_rothe(problem: &RotheProblem, cfg: &RotheConfig) -> Result<Trajectory> {
    problem.bundle.validate()?;
    let bounds = problem.bundle.bounds();
    if problem.theta0.values.len() != problem.theta_space.dof_count() {
        return Err(SimError::InvalidSpec(
            "initial temperature does not match the discrete space".into(),
        ));
    }
    if cfg.scheme == Scheme::B {
        let tau_max = bounds.a_lo / bounds.b_hi;
        if problem.grid.tau >= tau_max {
            return Err(SimError::StepTooLarge { tau: problem.grid.tau, tau_max });
        }
    }

    let mut traj = Trajectory {
        grid: problem.grid,
        scheme: cfg.scheme,
        h_sampling: cfg.h_sampling,
        theta: vec![problem.theta0.clone()],
        phi: Vec::new(),
        steps: Vec::new(),
        constants: problem.constants,
        pair: problem.pair,
    };
    let ell = bounds.ell;
    let mut phi_warm = DiscreteField::zeros(problem.phi_space.clone());

    for m in 1..=problem.grid.steps {
        let theta_prev = traj.theta[m - 1].clone();
        let f_values = match nodal_b(&problem.bundle, &problem.theta_space, &theta_prev.values) {
            Ok(v) => v,
            Err(e) => {
                return Err(SimError::StepFailed { m, source: Box::new(e), partial: Box::new(traj) })
            }
        };
        let f = DiscreteField { space: problem.theta_space.clone(), values: f_values };
        let h_m = sample_h(&problem.bundle.h, &problem.grid, m, cfg.h_sampling);
        let step_problem = StepProblem {
            f,
            h: h_m,
            tau: problem.grid.tau,
            bundle: problem.bundle.clone(),
            theta_space: problem.theta_space.clone(),
            phi_space: problem.phi_space.clone(),
            constants: problem.constants,
            pair: problem.pair,
        };

        let (solved, radius) = match cfg.scheme {
            Scheme::A => {
                // Invariant-ball radius for this step's data.
                let f_sq = step_problem.f.lumped_l2().powi(2);
                let h_pow = boundary_function_power(
                    &problem.theta_space,
                    &step_problem.h,
                    bounds.ell_conj(),
                    BoundarySelector::Gamma,
                );
                let g_sq = boundary_function_power(
                    &problem.phi_space,
                    &problem.bundle.g,
                    2.0,
                    BoundarySelector::GammaN,
                );
                let script_r = rhs_functional(
                    f_sq,
                    h_pow,
                    g_sq,
                    &bounds,
                    &problem.constants,
                    problem.pair.l2,
                    problem.grid.tau,
                    ell,
                );
                let (_, _, r_ball) =
                    ball_radii(script_r, problem.pair.l1, problem.pair.l2, bounds.gamma_lo, ell);
                let res = fixed_point_scheme_a(
                    &step_problem,
                    (&theta_prev, &phi_warm),
                    &cfg.fixed_point,
                    Some(r_ball),
                );
                (res, Some(r_ball))
            }
            Scheme::B => {
                // Same radius the lagged fixed point enforces internally,
                // recomputed here so the step record carries it.
                let f_sq = step_problem.f.lumped_l2().powi(2);
                let h_pow = boundary_function_power(
                    &problem.theta_space,
                    &step_problem.h,
                    bounds.ell_conj(),
                    BoundarySelector::Gamma,
                );
                let g_norm = boundary_function_power(
                    &problem.phi_space,
                    &problem.bundle.g,
                    2.0,
                    BoundarySelector::GammaN,
                )
                .sqrt();
                let radius = radius_scheme_b(
                    &SchemeBNorms { f_norm_sq: f_sq, h_norm_pow: h_pow, g_norm },
                    &bounds,
                    &problem.constants,
                    problem.grid.tau,
                    ell,
                )
                .ok();
                let res = fixed_point_scheme_b(&theta_prev, &step_problem, &cfg.fixed_point);
                (res, radius)
            }
        };
        let sol = match solved {
            Ok(s) => s,
            Err(e) => {
                return Err(SimError::StepFailed { m, source: Box::new(e), partial: Box::new(traj) })
            }
        };
        traj.steps.push(StepRecord {
            m,
            t: problem.grid.node(m),
            outer_iterations: sol.outer_iterations,
            newton_iterations_total: sol.newton_iterations_total,
            residual_theta: sol.residual_theta,
            residual_phi: sol.residual_phi,
            energy: sol.energy,
            ball_norm: sol.ball_norm,
            ball_radius: radius,
            in_ball: sol.in_ball,
        });
        phi_warm = sol.phi.clone();
        traj.theta.push(sol.theta);
        traj.phi.push(sol.phi);
    }
    Ok(traj)
}

/// Time reconstructions of a computed chain. Nodal primitives B(·, θ^m) are
/// cached once at construction.
pub struct Interpolants<'a> {
    traj: &'a Trajectory,
    b_nodes: Vec<DVector<f64>>,
}

impl<'a> Interpolants<'a> {
    pub fn new(traj: &'a Trajectory, bundle: &CoefficientBundle) -> Result<Self> {
        let space = &traj.theta[0].space;
        let mut b_nodes = Vec::with_capacity(traj.theta.len());
        for th in &traj.theta {
            b_nodes.push(nodal_b(bundle, space, &th.values)?);
        }
        Ok(Interpolants { traj, b_nodes })
    }

    fn space(&self) -> &FunctionSpace {
        &self.traj.theta[0].space
    }

    pub fn trajectory(&self) -> &Trajectory {
        self.traj
    }

    /// Cached nodal primitive B(·, θ^m).
    pub fn b_node(&self, m: usize) -> &DVector<f64> {
        &self.b_nodes[m]
    }

    /// Right-sampled piecewise-constant temperature θ_M.
    pub fn theta_pc(&self, t: f64) -> Result<DiscreteField> {
        let m = self.traj.grid.right_index(t)?;
        Ok(self.traj.theta[m].clone())
    }

    /// Right-sampled piecewise-constant potential φ_M (value φ¹ at t = 0).
    pub fn phi_pc(&self, t: f64) -> Result<DiscreteField> {
        let m = self.traj.grid.right_index(t)?.max(1);
        Ok(self.traj.phi[m - 1].clone())
    }

    /// Piecewise-linear temperature Θ_M.
    pub fn theta_affine(&self, t: f64) -> Result<DiscreteField> {
        let m = self.traj.grid.right_index(t)?;
        if m == 0 {
            return Ok(self.traj.theta[0].clone());
        }
        let grid = &self.traj.grid;
        let w = (t - grid.node(m - 1)) / grid.tau;
        Ok(DiscreteField {
            space: self.space().clone(),
            values: &self.traj.theta[m - 1].values * (1.0 - w) + &self.traj.theta[m].values * w,
        })
    }

    /// Piecewise-linear interpolant B̃ of the nodal primitives.
    pub fn b_affine(&self, t: f64) -> Result<DiscreteField> {
        let m = self.traj.grid.right_index(t)?;
        if m == 0 {
            return Ok(DiscreteField { space: self.space().clone(), values: self.b_nodes[0].clone() });
        }
        let grid = &self.traj.grid;
        let w = (t - grid.node(m - 1)) / grid.tau;
        Ok(DiscreteField {
            space: self.space().clone(),
            values: &self.b_nodes[m - 1] * (1.0 - w) + &self.b_nodes[m] * w,
        })
    }

    /// Piecewise-constant difference quotient Z_M = (B(θ^m) − B(θ^{m−1}))/τ
    /// on (t_{m−1}, t_m] (value of the first interval at t = 0).
    pub fn z_pc(&self, t: f64) -> Result<DiscreteField> {
        let m = self.traj.grid.right_index(t)?.max(1);
        let tau = self.traj.grid.tau;
        Ok(DiscreteField {
            space: self.space().clone(),
            values: (&self.b_nodes[m] - &self.b_nodes[m - 1]) / tau,
        })
    }

    /// ∫₀ᵗ Z_M ds, evaluated exactly from the piecewise-constant structure.
    /// Equals B̃(t) − B(·, θ⁰) identically; exposed so the identity can be
    /// checked rather than assumed.
    pub fn z_integral(&self, t: f64) -> Result<DiscreteField> {
        let m = self.traj.grid.right_index(t)?;
        let grid = &self.traj.grid;
        let mut acc = DVector::zeros(self.b_nodes[0].len());
        if m > 0 {
            // Full intervals up to m−1, partial over (t_{m−1}, t].
            acc += &self.b_nodes[m - 1] - &self.b_nodes[0];
            let w = (t - grid.node(m - 1)) / grid.tau;
            acc += (&self.b_nodes[m] - &self.b_nodes[m - 1]) * w;
        }
        Ok(DiscreteField { space: self.space().clone(), values: acc })
    }
}

/// Cell-centroid flux reconstruction: the conductive/drift heat flux, the
/// electric current, and the combined energy flux q + φ·j.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct CellFluxes {
    pub cell: usize,
    pub centroid: [f64; 2],
    /// −a(·,θ,φ)∇θ − σF(·,θ,φ)∇φ, matching the discrete divergence form.
    pub heat: [f64; 2],
    /// −σα_S∇θ − σ∇φ.
    pub current: [f64; 2],
    /// heat + φ·current.
    pub energy: [f64; 2],
}

/// Reconstruct fluxes from one time level's fields.
pub fn compute_fluxes(
    theta: &DiscreteField,
    phi: &DiscreteField,
    bundle: &CoefficientBundle,
) -> Result<Vec<CellFluxes>> {
    let mesh = theta.mesh().clone();
    let mut out = Vec::with_capacity(mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let nodes = mesh.cell_nodes(c);
        let k = nodes.len();
        let centroid = {
            let mut acc = [0.0, 0.0];
            for &n in nodes {
                acc[0] += mesh.vertices[n][0] / k as f64;
                acc[1] += mesh.vertices[n][1] / k as f64;
            }
            acc
        };
        let shapes = vec![1.0 / k as f64; k];
        let th = theta.value_at(nodes, &shapes);
        let ph = phi.value_at(nodes, &shapes);
        let gt = theta.grad_on_cell(c);
        let gp = phi.grad_on_cell(c);
        let a = bundle.derived_a(centroid, th, ph)?;
        let sf = bundle.sigma.eval(centroid, th) * bundle.derived_f(centroid, th, ph);
        let s = bundle.sigma.eval(centroid, th);
        let sa = s * bundle.alpha_s.eval(centroid, th);
        let heat = [-a * gt[0] - sf * gp[0], -a * gt[1] - sf * gp[1]];
        let current = [-sa * gt[0] - s * gp[0], -sa * gt[1] - s * gp[1]];
        out.push(CellFluxes {
            cell: c,
            centroid,
            heat,
            current,
            energy: [heat[0] + ph * current[0], heat[1] + ph * current[1]],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{Profile, ScalarCoefficient};
    use crate::constants::{coercivity_constants, optimal_epsilon_afg, CoercivityVariant};
    use crate::mesh::{build_mesh, DomainSpec, Side};
    use crate::space::Constraint;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn interval_problem(
        mut bundle: CoefficientBundle,
        cells: usize,
        t_final: f64,
        steps: usize,
        theta0: impl Fn([f64; 2]) -> f64,
        h: TimeBoundaryFn,
        g: SpatialFn,
    ) -> RotheProblem {
        bundle.h = h;
        bundle.g = g;
        let mesh = build_mesh(&DomainSpec::Interval { length: 1.0 }, &[cells], &[Side::Left]).unwrap();
        let ts = FunctionSpace::new(mesh.clone(), Constraint::None);
        let ps = FunctionSpace::new(mesh.clone(), Constraint::MeanZeroVolume);
        let bounds = bundle.bounds();
        let pair =
            coercivity_constants(&bounds, optimal_epsilon_afg(&bounds), CoercivityVariant::SplitA)
                .unwrap();
        RotheProblem {
            bundle,
            theta0: DiscreteField::from_fn(ts.clone(), theta0),
            grid: TimeGrid::new(t_final, steps).unwrap(),
            theta_space: ts,
            phi_space: ps,
            constants: DomainConstants::user_supplied(1.0, 1.5).unwrap(),
            pair,
        }
    }

    fn plain_bundle(ell: f64) -> CoefficientBundle {
        CoefficientBundle {
            b: ScalarCoefficient::constant(1.0),
            k: ScalarCoefficient::constant(1.0),
            sigma: ScalarCoefficient::constant(1.0),
            alpha_s: ScalarCoefficient::signed_magnitude(Profile::Constant(0.0), 0.0),
            pi: ScalarCoefficient::signed_magnitude(Profile::Constant(0.1), 0.1),
            gamma: ScalarCoefficient::constant(1.0),
            h: TimeBoundaryFn::constant(0.0),
            g: SpatialFn::constant(0.0),
            ell,
            truncation: 0.0,
        }
    }

    #[test]
    fn h_sampling_right_endpoint_and_average() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let h = TimeBoundaryFn(Arc::new(|_x: [f64; 2], t: f64| t));
        let right = sample_h(&h, &grid, 2, HSampling::RightEndpoint);
        assert_abs_diff_eq!(right.eval([0.0, 0.0]), 0.5, epsilon = 1e-15);
        let avg = sample_h(&h, &grid, 2, HSampling::IntervalAverage);
        assert_abs_diff_eq!(avg.eval([0.0, 0.0]), 0.375, epsilon = 1e-12);
        // Time-independent data: both modes coincide.
        let hc = TimeBoundaryFn::constant(0.7);
        let a = sample_h(&hc, &grid, 3, HSampling::RightEndpoint);
        let b = sample_h(&hc, &grid, 3, HSampling::IntervalAverage);
        assert_abs_diff_eq!(a.eval([0.3, 0.0]), b.eval([0.3, 0.0]), epsilon = 1e-13);
    }

    #[test]
    fn single_step_trajectory_shape() {
        let problem = interval_problem(
            plain_bundle(2.0),
            4,
            0.5,
            1,
            |_| 0.3,
            TimeBoundaryFn::constant(0.2),
            SpatialFn::constant(0.1),
        );
        let traj = run_rothe(&problem, &RotheConfig::default()).unwrap();
        assert_eq!(traj.theta.len(), 2);
        assert_eq!(traj.phi.len(), 1);
        assert_eq!(traj.steps.len(), 1);
        assert_eq!(traj.steps[0].m, 1);
        assert_abs_diff_eq!(traj.steps[0].t, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn stationary_data_reproduce_the_steady_state() {
        // θ⁰ ≡ c with H = γ·c^{ℓ−1} and g = 0 is a fixed point of the step
        // map: every level must return the same constant.
        let ell = 3.0;
        let c: f64 = 0.8;
        let gamma = 1.2;
        let mut bundle = plain_bundle(ell);
        bundle.gamma = ScalarCoefficient::constant(gamma);
        let problem = interval_problem(
            bundle,
            6,
            1.0,
            5,
            move |_| c,
            TimeBoundaryFn::constant(gamma * c.powf(ell - 1.0)),
            SpatialFn::constant(0.0),
        );
        for scheme in [Scheme::A, Scheme::B] {
            let cfg = RotheConfig { scheme, ..RotheConfig::default() };
            let traj = run_rothe(&problem, &cfg).unwrap();
            for th in &traj.theta {
                for i in 0..th.values.len() {
                    assert_abs_diff_eq!(th.values[i], c, epsilon = 1e-8);
                }
            }
            for ph in &traj.phi {
                assert!(ph.values.norm() < 1e-9);
            }
        }
    }

    #[test]
    fn doubling_steps_is_causal() {
        // The first half of a 2M-step run does not depend on the later steps:
        // rerunning with T/2 and M steps reproduces it bit for bit.
        let bundle = plain_bundle(4.0);
        let h = TimeBoundaryFn(Arc::new(|x: [f64; 2], t: f64| 0.4 + 0.2 * t + 0.1 * x[0]));
        let full = interval_problem(
            bundle.clone(),
            6,
            1.0,
            4,
            |x| 0.5 + 0.2 * x[0],
            h.clone(),
            SpatialFn::constant(0.05),
        );
        let half = interval_problem(
            bundle,
            6,
            0.5,
            2,
            |x| 0.5 + 0.2 * x[0],
            h,
            SpatialFn::constant(0.05),
        );
        let cfg = RotheConfig::default();
        let t_full = run_rothe(&full, &cfg).unwrap();
        let t_half = run_rothe(&half, &cfg).unwrap();
        for m in 0..=2 {
            assert_eq!(t_full.theta[m].values, t_half.theta[m].values);
        }
    }

    #[test]
    fn interpolants_agree_at_nodes_and_integrate_z_exactly() {
        let bundle = CoefficientBundle {
            b: ScalarCoefficient::with_bounds(
                Profile::Native(Arc::new(|_x: [f64; 2], e: f64| 1.0 + e * e)),
                1.0,
                5.0,
            ),
            ..plain_bundle(3.0)
        };
        let problem = interval_problem(
            bundle.clone(),
            5,
            0.8,
            4,
            |x| 0.4 + 0.3 * (2.0 * x[0]).sin(),
            TimeBoundaryFn(Arc::new(|_x, t| 0.5 + t)),
            SpatialFn::constant(0.1),
        );
        let traj = run_rothe(&problem, &RotheConfig::default()).unwrap();
        let interp = Interpolants::new(&traj, &bundle).unwrap();
        let grid = traj.grid;

        for m in 0..=grid.steps {
            let t = grid.node(m);
            let pc = interp.theta_pc(t).unwrap();
            let aff = interp.theta_affine(t).unwrap();
            assert!((&pc.values - &traj.theta[m].values).norm() < 1e-13);
            assert!((&aff.values - &traj.theta[m].values).norm() < 1e-12);
        }
        // Off-node: pc is right-sampled, affine is the convex combination.
        let t = grid.node(1) + 0.25 * grid.tau;
        let pc = interp.theta_pc(t).unwrap();
        assert!((&pc.values - &traj.theta[2].values).norm() < 1e-13);
        let aff = interp.theta_affine(t).unwrap();
        let blend = &traj.theta[1].values * 0.75 + &traj.theta[2].values * 0.25;
        assert!((&aff.values - &blend).norm() < 1e-12);

        // ∫₀ᵗ Z_M = B̃(t) − B(θ⁰) at nodes and off nodes.
        let b0 = interp.b_affine(0.0).unwrap();
        for &t in &[0.0, 0.3 * grid.tau, grid.node(2), grid.node(3) + 0.6 * grid.tau, grid.t_final] {
            let zi = interp.z_integral(t).unwrap();
            let bt = interp.b_affine(t).unwrap();
            let identity = &bt.values - &b0.values;
            assert!((&zi.values - &identity).norm() < 1e-12, "identity fails at t = {t}");
        }
        // Out-of-range queries are rejected.
        assert!(matches!(interp.theta_pc(-0.1), Err(SimError::OutOfRange { .. })));
        assert!(matches!(interp.theta_pc(grid.t_final + 0.1), Err(SimError::OutOfRange { .. })));
    }

    #[test]
    fn constant_b_makes_b_affine_proportional_to_theta_affine() {
        let mut bundle = plain_bundle(2.0);
        bundle.b = ScalarCoefficient::constant(1.7);
        let problem = interval_problem(
            bundle.clone(),
            4,
            0.6,
            3,
            |x| 0.2 + 0.5 * x[0],
            TimeBoundaryFn(Arc::new(|_x, t| 0.3 * (1.0 + t))),
            SpatialFn::constant(0.0),
        );
        let traj = run_rothe(&problem, &RotheConfig::default()).unwrap();
        let interp = Interpolants::new(&traj, &bundle).unwrap();
        for &t in &[0.1, 0.25, 0.44, 0.6] {
            let b = interp.b_affine(t).unwrap();
            let a = interp.theta_affine(t).unwrap();
            assert!((&b.values - &a.values * 1.7).norm() < 1e-12);
        }
    }

    #[test]
    fn fluxes_match_hand_values_on_linear_fields() {
        // θ = x, φ = −x on one interval cell with constant coefficients:
        // ∇θ = 1, ∇φ = −1, a = k (𝓜 = 0), F = Π, heat = −k + σΠ,
        // current = −σα + σ, energy = heat + φ·current at the centroid.
        let mesh = build_mesh(&DomainSpec::Interval { length: 1.0 }, &[2], &[Side::Left]).unwrap();
        let ts = FunctionSpace::new(mesh.clone(), Constraint::None);
        let theta = DiscreteField::from_fn(ts.clone(), |x| x[0]);
        let phi = DiscreteField::from_fn(ts, |x| -x[0]);
        let mut bundle = plain_bundle(2.0);
        bundle.k = ScalarCoefficient::constant(2.0);
        bundle.sigma = ScalarCoefficient::constant(1.5);
        bundle.alpha_s = ScalarCoefficient::signed_magnitude(Profile::Constant(0.2), 0.2);
        bundle.pi = ScalarCoefficient::signed_magnitude(Profile::Constant(0.3), 0.3);
        let fluxes = compute_fluxes(&theta, &phi, &bundle).unwrap();
        assert_eq!(fluxes.len(), 2);
        for f in &fluxes {
            // heat = −2·1 − 1.5·0.3·(−1) = −1.55
            assert_abs_diff_eq!(f.heat[0], -1.55, epsilon = 1e-13);
            // current = −1.5·0.2·1 − 1.5·(−1) = 1.2
            assert_abs_diff_eq!(f.current[0], 1.2, epsilon = 1e-13);
            let ph = -f.centroid[0];
            assert_abs_diff_eq!(f.energy[0], -1.55 + ph * 1.2, epsilon = 1e-13);
        }
    }

    #[test]
    fn oversized_lagged_step_fails_before_any_solve() {
        let problem = interval_problem(
            plain_bundle(2.0),
            4,
            2.0,
            1,
            |_| 0.1,
            TimeBoundaryFn::constant(0.0),
            SpatialFn::constant(0.0),
        );
        let cfg = RotheConfig { scheme: Scheme::B, ..RotheConfig::default() };
        match run_rothe(&problem, &cfg) {
            Err(SimError::StepTooLarge { .. }) => {}
            other => panic!("expected StepTooLarge, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn failing_step_reports_partial_chain() {
        // Strong coupling violates the lagged scheme's drift-smallness check
        // inside step 1; the error must wrap the index and the partial chain.
        let bundle = CoefficientBundle {
            b: ScalarCoefficient::constant(1.0),
            k: ScalarCoefficient::constant(1.0),
            sigma: ScalarCoefficient::constant(1.0),
            alpha_s: ScalarCoefficient::signed_magnitude(Profile::Constant(0.9), 0.9),
            pi: ScalarCoefficient::signed_magnitude(Profile::Constant(1.0), 1.0),
            gamma: ScalarCoefficient::constant(1.0),
            h: TimeBoundaryFn::constant(0.1),
            g: SpatialFn::constant(0.0),
            ell: 2.0,
            truncation: 1.0,
        };
        let mesh = build_mesh(&DomainSpec::Interval { length: 1.0 }, &[4], &[Side::Left]).unwrap();
        let ts = FunctionSpace::new(mesh.clone(), Constraint::None);
        let ps = FunctionSpace::new(mesh.clone(), Constraint::MeanZeroVolume);
        let problem = RotheProblem {
            bundle,
            theta0: DiscreteField::constant(ts.clone(), 0.2),
            grid: TimeGrid::new(0.05, 1).unwrap(),
            theta_space: ts,
            phi_space: ps,
            constants: DomainConstants::user_supplied(1.0, 1.5).unwrap(),
            pair: CoercivityPair {
                l1: 0.1,
                l2: 0.1,
                variant: CoercivityVariant::SchemeB,
                epsilon: 1.0,
            },
        };
        let cfg = RotheConfig { scheme: Scheme::B, ..RotheConfig::default() };
        match run_rothe(&problem, &cfg) {
            Err(SimError::StepFailed { m, source, partial }) => {
                assert_eq!(m, 1);
                assert!(matches!(*source, SimError::SmallnessViolated(_)));
                assert_eq!(partial.theta.len(), 1);
                assert_eq!(partial.phi.len(), 0);
            }
            other => panic!("expected StepFailed, got {:?}", other.map(|_| ())),
        }
    }
}
