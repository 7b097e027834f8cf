//! Randomized structural properties: the algebraic facts the solver and
//! constants engine rely on, checked over generated coefficients, states
//! and loads rather than hand-picked examples.

use std::sync::Arc;

use proptest::prelude::*;

use tesim::coefficients::{
    truncate, CoefficientBundle, Profile, ScalarCoefficient, SpatialFn, TimeBoundaryFn,
};
use tesim::constants::{
    ball_radii, coercivity_constants, check_smallness, max_truncation, optimal_epsilon_afg,
    radius_scheme_b, rhs_functional, CoercivityVariant, DomainConstants, SchemeBNorms,
    SmallnessCondition,
};
use tesim::expr::{EvalCtx, Expression};
use tesim::mesh::{build_mesh, DomainSpec, Side};
use tesim::rothe::{run_rothe, RotheConfig, RotheProblem, TimeGrid};
use tesim::space::{Constraint, DiscreteField, FunctionSpace};

/// State-dependent capacity b(e) = base + amp/(1+e²) with exact envelope
/// [base, base+amp]; every other law is constant.
fn bundle_with_capacity(base: f64, amp: f64) -> CoefficientBundle {
    CoefficientBundle {
        b: ScalarCoefficient {
            profile: Profile::Native(Arc::new(move |_x, e| base + amp / (1.0 + e * e))),
            lo: base,
            hi: base + amp,
        },
        k: ScalarCoefficient::constant(1.0),
        sigma: ScalarCoefficient::constant(1.0),
        alpha_s: ScalarCoefficient::signed_magnitude(Profile::Constant(0.0), 0.0),
        pi: ScalarCoefficient::signed_magnitude(Profile::Constant(0.0), 0.0),
        gamma: ScalarCoefficient::constant(1.0),
        h: TimeBoundaryFn::constant(0.0),
        g: SpatialFn::constant(0.0),
        ell: 2.0,
        truncation: 0.0,
    }
}

fn all_constant_bundle(
    b: f64,
    sigma: f64,
    alpha: f64,
    pi: f64,
    truncation: f64,
) -> CoefficientBundle {
    CoefficientBundle {
        b: ScalarCoefficient::constant(b),
        k: ScalarCoefficient::constant(1.0),
        sigma: ScalarCoefficient::constant(sigma),
        alpha_s: ScalarCoefficient::signed_magnitude(Profile::Constant(alpha), alpha),
        pi: ScalarCoefficient::signed_magnitude(Profile::Constant(pi), pi),
        gamma: ScalarCoefficient::constant(1.0),
        h: TimeBoundaryFn::constant(0.0),
        g: SpatialFn::constant(0.0),
        ell: 2.0,
        truncation,
    }
}

proptest! {
    /// Clamping to [−𝓜, 𝓜] is total, 1-Lipschitz and idempotent, and the
    /// output magnitude never exceeds the level.
    #[test]
    fn truncation_is_lipschitz_idempotent_and_bounded(
        m in 0.0f64..10.0,
        z1 in -100.0f64..100.0,
        z2 in -100.0f64..100.0,
    ) {
        let t1 = truncate(m, z1);
        let t2 = truncate(m, z2);
        prop_assert!((t1 - t2).abs() <= (z1 - z2).abs() + 1e-15);
        prop_assert_eq!(truncate(m, t1), t1);
        prop_assert!(t1.abs() <= m);
    }

    /// The primitive pairing is strongly monotone with the declared floor:
    /// (B(u) − B(v))(u − v) ≥ b_lo (u − v)².
    #[test]
    fn capacity_pairing_is_strongly_monotone_pointwise(
        base in 0.3f64..3.0,
        amp in 0.0f64..2.0,
        u in -8.0f64..8.0,
        v in -8.0f64..8.0,
    ) {
        let bundle = bundle_with_capacity(base, amp);
        let x = [0.25, 0.0];
        let bu = bundle.integrate_b(x, u).unwrap();
        let bv = bundle.integrate_b(x, v).unwrap();
        let lhs = (bu - bv) * (u - v);
        let floor = base * (u - v) * (u - v);
        prop_assert!(lhs >= floor - 1e-8 * (1.0 + floor.abs()),
            "pairing {lhs} under floor {floor}");
    }

    /// Stored-energy chain at a point: (b_lo/2)s² ≤ Ψ(s) ≤ B(s)·s ≤ b_hi s².
    #[test]
    fn stored_energy_chain_holds_pointwise(
        base in 0.3f64..3.0,
        amp in 0.0f64..2.0,
        s in -8.0f64..8.0,
    ) {
        let bundle = bundle_with_capacity(base, amp);
        let x = [0.7, 0.0];
        let psi = bundle.psi(x, s).unwrap();
        let bs = bundle.integrate_b(x, s).unwrap() * s;
        let tol = 1e-8 * (1.0 + s * s * (base + amp));
        prop_assert!(psi >= 0.5 * base * s * s - tol);
        prop_assert!(psi <= bs + tol);
        prop_assert!(bs <= (base + amp) * s * s + tol);
    }

    /// The per-step load functional is positively homogeneous in the data
    /// norms and monotone in each of them.
    #[test]
    fn load_functional_scales_and_grows_with_the_data(
        f_sq in 0.0f64..50.0,
        h_pow in 0.0f64..50.0,
        g_sq in 0.0f64..50.0,
        scale in 0.1f64..10.0,
        bump in 0.0f64..5.0,
    ) {
        let bundle = all_constant_bundle(1.0, 1.0, 0.1, 0.1, 0.2);
        let bounds = bundle.bounds();
        let dc = DomainConstants::user_supplied(0.5, 1.5).unwrap();
        let r = |f: f64, h: f64, g: f64| rhs_functional(f, h, g, &bounds, &dc, 0.8, 0.05, 2.0);
        let base_val = r(f_sq, h_pow, g_sq);
        let scaled = r(scale * f_sq, scale * h_pow, scale * g_sq);
        prop_assert!((scaled - scale * base_val).abs() <= 1e-12 * (1.0 + scaled.abs()));
        prop_assert!(r(f_sq + bump, h_pow, g_sq) >= base_val);
        prop_assert!(r(f_sq, h_pow + bump, g_sq) >= base_val);
        prop_assert!(r(f_sq, h_pow, g_sq + bump) >= base_val);
    }

    /// Ball radii grow with the load functional and shrink with stronger
    /// dissipation weights.
    #[test]
    fn ball_radii_are_monotone_in_load_and_weights(
        r_small in 0.0f64..20.0,
        extra in 0.0f64..20.0,
        l1 in 0.05f64..2.0,
        l2 in 0.05f64..2.0,
        boost in 0.0f64..1.0,
    ) {
        let (a1, a2, a3) = ball_radii(r_small, l1, l2, 1.0, 2.0);
        let (b1, b2, b3) = ball_radii(r_small + extra, l1, l2, 1.0, 2.0);
        prop_assert!(b1 >= a1 && b2 >= a2 && b3 >= a3);
        let (c1, c2, c3) = ball_radii(r_small, l1 + boost, l2 + boost, 1.0, 2.0);
        prop_assert!(c1 <= a1 + 1e-12 && c2 <= a2 + 1e-12 && c3 <= a3 + 1e-12);
    }

    /// Stronger coupling can only lower the coercivity pair: raising the
    /// Seebeck magnitude (respecting the smallness regime) does not raise
    /// L₁ at the optimized split.
    #[test]
    fn coercivity_weights_shrink_as_coupling_grows(
        alpha in 0.0f64..0.15,
        boost in 0.0f64..0.1,
        sigma in 0.5f64..1.5,
        truncation in 0.0f64..0.5,
    ) {
        let weaker = all_constant_bundle(1.0, sigma, alpha, 0.1, truncation).bounds();
        let stronger = all_constant_bundle(1.0, sigma, alpha + boost, 0.1, truncation).bounds();
        let p_weak = coercivity_constants(&weaker, optimal_epsilon_afg(&weaker), CoercivityVariant::SplitA).unwrap();
        let p_strong = coercivity_constants(&stronger, optimal_epsilon_afg(&stronger), CoercivityVariant::SplitA).unwrap();
        prop_assert!(p_strong.l1 <= p_weak.l1 + 1e-12 * (1.0 + p_weak.l1));
    }

    /// The lagged-scheme radius shrinks as the step grows (the mass load
    /// enters as ‖f‖²/τ) while both steps stay under the admissible bound.
    #[test]
    fn lagged_radius_shrinks_with_the_step(
        tau in 0.01f64..0.2,
        stretch in 1.0f64..3.0,
        f_sq in 0.1f64..10.0,
        h_pow in 0.0f64..5.0,
    ) {
        let bundle = all_constant_bundle(1.5, 1.0, 0.1, 0.1, 0.3);
        let bounds = bundle.bounds();
        let dc = DomainConstants::user_supplied(0.5, 1.5).unwrap();
        let norms = SchemeBNorms { f_norm_sq: f_sq, h_norm_pow: h_pow, g_norm: 0.4 };
        let tau2 = (tau * stretch).min(bounds.a_lo / bounds.b_hi);
        let r_fine = radius_scheme_b(&norms, &bounds, &dc, tau, 2.0).unwrap();
        let r_coarse = radius_scheme_b(&norms, &bounds, &dc, tau2, 2.0).unwrap();
        prop_assert!(r_coarse <= r_fine + 1e-12 * (1.0 + r_fine));
    }

    /// The truncation supremum returned by bisection matches the closed
    /// form of the uniqueness condition it inverts.
    #[test]
    fn truncation_supremum_matches_the_closed_form(
        sigma in 0.5f64..2.0,
        alpha in 0.05f64..0.5,
        pi in 0.0f64..1.0,
        headroom in 1.05f64..4.0,
    ) {
        // Ensure the condition holds at level zero, then invert
        // k = σ·α·(2Π + 3𝓜) for 𝓜.
        let k = 2.0 * pi * sigma * alpha * headroom + 0.05;
        let bounds = tesim::coefficients::BoundsReport::derive(
            1.0, 1.0, k, k, sigma, sigma, alpha, pi, 1.0, 1.0, 0.0, 2.0,
        );
        let closed = (k / (sigma * alpha) - 2.0 * pi) / 3.0;
        let found = max_truncation(&bounds, SmallnessCondition::Sss3).unwrap();
        prop_assert!(found.is_finite());
        prop_assert!((found - closed).abs() <= 1e-8 * (1.0 + closed.abs()),
            "bisection {found} vs closed form {closed}");
    }

    /// Grid nodes are uniform, increasing, and end exactly at the horizon.
    #[test]
    fn time_grid_nodes_are_uniform_and_anchored(
        t_final in 0.001f64..100.0,
        steps in 1usize..2000,
    ) {
        let grid = TimeGrid::new(t_final, steps).unwrap();
        prop_assert_eq!(grid.node(0), 0.0);
        prop_assert!((grid.node(steps) - t_final).abs() <= 1e-12 * t_final);
        for m in 1..=steps.min(64) {
            prop_assert!(grid.node(m) > grid.node(m - 1));
            let expected = m as f64 * grid.tau;
            prop_assert!((grid.node(m) - expected).abs() <= 4e-16 * (1.0 + expected.abs()));
        }
    }

    /// Parsed expressions evaluate like the functions they denote and
    /// survive a print/reparse cycle exactly.
    #[test]
    fn expressions_round_trip_through_their_source(
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        c in -3.0f64..3.0,
        x in -2.0f64..2.0,
        e in -2.0f64..2.0,
    ) {
        let src = format!("{a} + {b}*x + {c}*e^2");
        let expr = Expression::parse(&src).unwrap();
        let ctx = EvalCtx { x, y: 0.0, e, t: 0.0 };
        let direct = a + b * x + c * e * e;
        prop_assert!((expr.eval(&ctx) - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        let again = Expression::parse(expr.src()).unwrap();
        prop_assert_eq!(again.eval(&ctx).to_bits(), expr.eval(&ctx).to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Marching the same problem twice gives bitwise-identical chains:
    /// no hidden nondeterminism in assembly, solves or reductions.
    #[test]
    fn marching_is_deterministic(
        b in 0.5f64..2.0,
        sigma in 0.5f64..1.5,
        alpha in 0.0f64..0.2,
        pi in 0.0f64..0.1,
        truncation in 0.0f64..0.5,
        amplitude in 0.2f64..1.0,
    ) {
        let bundle = all_constant_bundle(b, sigma, alpha, pi, truncation);
        let bounds = bundle.bounds();
        let pair = coercivity_constants(
            &bounds,
            optimal_epsilon_afg(&bounds),
            CoercivityVariant::SplitA,
        ).unwrap();
        let mesh = build_mesh(&DomainSpec::Interval { length: 1.0 }, &[8], &[Side::Left]).unwrap();
        let theta_space = FunctionSpace::new(mesh.clone(), Constraint::None);
        let phi_space = FunctionSpace::new(mesh, Constraint::MeanZeroVolume);
        let problem = RotheProblem {
            bundle,
            theta0: DiscreteField::from_fn(theta_space.clone(), move |p| {
                amplitude * (std::f64::consts::PI * p[0]).sin()
            }),
            grid: TimeGrid::new(0.3, 3).unwrap(),
            theta_space,
            phi_space,
            constants: DomainConstants::user_supplied(1.0, 1.5).unwrap(),
            pair,
        };
        let cfg = RotheConfig::default();
        let first = run_rothe(&problem, &cfg).unwrap();
        let second = run_rothe(&problem, &cfg).unwrap();
        for (t1, t2) in first.theta.iter().zip(&second.theta) {
            for (a, b) in t1.values.iter().zip(t2.values.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        for (p1, p2) in first.phi.iter().zip(&second.phi) {
            for (a, b) in p1.values.iter().zip(p2.values.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        for (r1, r2) in first.steps.iter().zip(&second.steps) {
            prop_assert_eq!(r1.energy.lhs.to_bits(), r2.energy.lhs.to_bits());
            prop_assert_eq!(r1.energy.rhs.to_bits(), r2.energy.rhs.to_bits());
        }
    }

    /// A verdict is internally consistent: condition checks carry the very
    /// margins their sides imply, and the optimized split really does make
    /// both gradient inequalities hold whenever the product condition does.
    #[test]
    fn verdict_margins_match_their_sides(
        sigma in 0.5f64..2.0,
        alpha in 0.0f64..0.3,
        pi in 0.0f64..0.3,
        truncation in 0.0f64..0.6,
    ) {
        let bundle = all_constant_bundle(1.0, sigma, alpha, pi, truncation);
        let bounds = bundle.bounds();
        let v = check_smallness(&bounds, None);
        for check in [v.akm, v.sss1, v.sss2, v.sss3, v.afg, v.sfg, v.asfg] {
            prop_assert!((check.margin - (check.lhs - check.rhs)).abs()
                <= 1e-12 * (1.0 + check.lhs.abs() + check.rhs.abs()));
            prop_assert_eq!(check.holds, check.margin > 0.0);
        }
        if v.sss1.holds {
            prop_assert!(v.afg.holds, "product condition holds but optimized split fails");
        }
        if v.sss2.holds {
            prop_assert!(v.sfg.holds);
        }
    }
}
