//! Named scenario presets: ready-to-run configurations spanning the regimes
//! the solver and verifier are built for.
//!
//! Each preset returns a plain [`RunConfig`] — the same structure a TOML
//! file produces — so the command line treats `--scenario NAME` and
//! `--config FILE` identically downstream. Physical presets are stated in
//! nondimensional form: temperatures are scaled by a reference level θ_ref,
//! lengths by the sample size L, and conductivities by the thermal
//! conductivity k, so the radiation coefficient appearing below is the
//! dimensionless group σ_rad·ε·θ_ref³·L/k (a radiative Biot number) and the
//! Newton-cooling coefficient is the classical Biot number h_c·L/k.
//!
//! All presets sit inside the guaranteed smallness regime: loading any of
//! them under `strict` succeeds with no warnings, for either per-step
//! scheme.

use crate::config::{
    CoefficientLaw, CoefficientsConfig, DomainConfig, FieldLaw, RunConfig, SchemeChoice,
    SolverConfig, TimeConfig, VerificationConfig,
};
use crate::error::{Result, SimError};

/// Names accepted by [`scenario`], in presentation order.
pub const SCENARIO_NAMES: [&str; 5] =
    ["stationary", "stefan-boltzmann", "newton-cooling", "decoupled-heat", "coupled-mild"];

fn value(v: f64) -> CoefficientLaw {
    CoefficientLaw { value: Some(v), ..CoefficientLaw::default() }
}

fn law(src: &str, lo: f64, hi: f64) -> CoefficientLaw {
    CoefficientLaw {
        law: Some(src.to_string()),
        lo: Some(lo),
        hi: Some(hi),
        ..CoefficientLaw::default()
    }
}

fn signed_law(src: &str, hi: f64) -> CoefficientLaw {
    CoefficientLaw { law: Some(src.to_string()), hi: Some(hi), ..CoefficientLaw::default() }
}

fn field(src: &str) -> FieldLaw {
    FieldLaw { value: None, law: Some(src.to_string()) }
}

fn interval(cells: usize, neumann: &[&str]) -> DomainConfig {
    DomainConfig {
        kind: "interval".into(),
        length: Some(1.0),
        lx: None,
        ly: None,
        cells: vec![cells],
        neumann: neumann.iter().map(|s| s.to_string()).collect(),
    }
}

fn base(name: &str, domain: DomainConfig, coefficients: CoefficientsConfig) -> RunConfig {
    RunConfig {
        schema_version: 1,
        name: Some(name.to_string()),
        domain,
        coefficients,
        initial: FieldLaw { value: Some(0.0), law: None },
        time: TimeConfig { t_final: 1.0, steps: 16 },
        scheme: SchemeChoice::A,
        solver: SolverConfig::default(),
        verification: VerificationConfig::default(),
        seed: 0,
    }
}

fn coefficients_off() -> CoefficientsConfig {
    CoefficientsConfig {
        ell: 2.0,
        truncation: 0.0,
        b: value(1.0),
        k: value(1.0),
        sigma: value(1.0),
        alpha_s: CoefficientLaw::default(),
        pi: CoefficientLaw::default(),
        gamma: value(1.0),
        h: FieldLaw::default(),
        g: FieldLaw::default(),
    }
}

/// Exact steady state: constant temperature 0.8 with the radiative outflow
/// γ·0.8^{ℓ−1} balanced nodewise by the boundary datum, zero current, and no
/// thermoelectric feedback (α_S ≡ 0 keeps the potential identically zero).
/// The capacity still varies with temperature, so the nonlinear mass term is
/// genuinely exercised — every step must reproduce θ ≡ 0.8 to roundoff.
pub fn stationary() -> RunConfig {
    let c: f64 = 0.8;
    let gamma = 1.2;
    let ell = 5.0;
    let mut coeffs = coefficients_off();
    coeffs.ell = ell;
    coeffs.truncation = 0.5;
    coeffs.b = law("1 + 0.25/(1+e^2)", 1.0, 1.25);
    coeffs.pi = signed_law("0.1", 0.1);
    coeffs.gamma = value(gamma);
    coeffs.h = FieldLaw { value: Some(gamma * c.powf(ell - 1.0)), law: None };
    let mut cfg = base("stationary", interval(64, &[]), coeffs);
    cfg.initial = FieldLaw { value: Some(c), law: None };
    cfg.time = TimeConfig { t_final: 1.0, steps: 32 };
    cfg
}

/// Fourth-power radiation on the lateral faces of a square cross-section,
/// with a balanced electric current driven through the left/right faces.
/// Scaling: θ_ref = 300 K, L = 1 cm, k = 1.5 W/(m·K), emissivity 0.8 and
/// radiation constant 5.670374419e−8 W/(m²·K⁴) give the radiative Biot
/// number γ̂ = σ_rad·ε·θ_ref³·L/k ≈ 8.165e−3; the surroundings sit at θ_ref,
/// so the boundary datum equals γ̂·1⁴. The sample starts 20% hot in the
/// middle and relaxes by radiation while the current heats it ohmically.
pub fn stefan_boltzmann() -> RunConfig {
    let gamma_hat = 5.670374419e-8 * 0.8 * 300.0_f64.powi(3) * 0.01 / 1.5;
    let mut coeffs = coefficients_off();
    coeffs.ell = 5.0;
    coeffs.truncation = 0.3;
    coeffs.b = law("1 + 0.1/(1+e^2)", 1.0, 1.1);
    coeffs.alpha_s = signed_law("0.05", 0.05);
    coeffs.pi = signed_law("0.1", 0.1);
    coeffs.gamma = value(gamma_hat);
    coeffs.h = FieldLaw { value: Some(gamma_hat), law: None };
    coeffs.g = field("0.05*(1-2*x)");
    let domain = DomainConfig {
        kind: "rectangle".into(),
        length: None,
        lx: Some(1.0),
        ly: Some(1.0),
        cells: vec![12, 12],
        neumann: vec!["left".into(), "right".into()],
    };
    let mut cfg = base("stefan-boltzmann", domain, coeffs);
    cfg.initial = field("1 + 0.2*sin(pi*x)*sin(pi*y)");
    cfg.time = TimeConfig { t_final: 0.3, steps: 12 };
    cfg
}

/// Linear convective cooling (ℓ = 2): the boundary flux is the Newton law
/// Bi·(θ − θ_amb) with Biot number h_c·L/k = 75·0.01/1.5 = 0.5 and ambient
/// temperature 0.75·θ_ref, written as γθ − h with h = γ·0.75. Mild
/// thermoelectric coupling keeps the potential active without leaving the
/// guaranteed regime.
pub fn newton_cooling() -> RunConfig {
    let biot = 75.0 * 0.01 / 1.5;
    let mut coeffs = coefficients_off();
    coeffs.ell = 2.0;
    coeffs.truncation = 0.25;
    coeffs.alpha_s = signed_law("0.04", 0.04);
    coeffs.pi = signed_law("0.05", 0.05);
    coeffs.gamma = value(biot);
    coeffs.h = FieldLaw { value: Some(biot * 0.75), law: None };
    let mut cfg = base("newton-cooling", interval(64, &["right"]), coeffs);
    cfg.initial = field("1 + 0.1*sin(pi*x)");
    cfg.time = TimeConfig { t_final: 1.0, steps: 16 };
    cfg
}

/// Pure heat conduction with every thermoelectric term switched off
/// (α_S = Π = 0 and truncation level zero): the potential decouples and
/// stays zero, leaving the linear heat equation with a unit Robin boundary.
/// Useful as a convergence baseline with a separable exact solution.
pub fn decoupled_heat() -> RunConfig {
    let mut cfg = base("decoupled-heat", interval(128, &[]), coefficients_off());
    cfg.initial = field("sin(pi*x)");
    cfg.time = TimeConfig { t_final: 0.25, steps: 32 };
    cfg
}

/// Both fields genuinely coupled but well inside the smallness regime:
/// state-dependent conductivity and capacity, Seebeck and Peltier terms
/// active, no boundary data. The two per-step schemes converge to the same
/// limit at first order in the step, which makes this the reference preset
/// for scheme-comparison studies.
pub fn coupled_mild() -> RunConfig {
    let mut coeffs = coefficients_off();
    coeffs.ell = 3.0;
    coeffs.truncation = 0.5;
    coeffs.b = law("1 + 0.5/(1+e^2)", 1.0, 1.5);
    coeffs.sigma = law("1 + 0.1*e/(1+abs(e))", 0.9, 1.1);
    coeffs.alpha_s = signed_law("0.1", 0.1);
    coeffs.pi = signed_law("0.2", 0.2);
    let mut cfg = base("coupled-mild", interval(32, &["left"]), coeffs);
    cfg.initial = field("0.8*sin(pi*x)");
    cfg.time = TimeConfig { t_final: 0.25, steps: 8 };
    cfg
}

/// Look up a preset by name.
pub fn scenario(name: &str) -> Result<RunConfig> {
    match name {
        "stationary" => Ok(stationary()),
        "stefan-boltzmann" => Ok(stefan_boltzmann()),
        "newton-cooling" => Ok(newton_cooling()),
        "decoupled-heat" => Ok(decoupled_heat()),
        "coupled-mild" => Ok(coupled_mild()),
        other => Err(SimError::UnknownScenario(format!(
            "unknown scenario '{other}' (available: {})",
            SCENARIO_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::build_run;
    use crate::rothe::run_rothe;

    #[test]
    fn every_preset_loads_strictly_under_both_schemes() {
        for name in SCENARIO_NAMES {
            let mut cfg = scenario(name).unwrap();
            cfg.validate().unwrap();
            for scheme in [SchemeChoice::A, SchemeChoice::B] {
                cfg.scheme = scheme;
                let built = build_run(&cfg, true)
                    .unwrap_or_else(|e| panic!("{name} under {scheme:?}: {e}"));
                assert!(built.warnings.is_empty(), "{name} warned: {:?}", built.warnings);
                assert!(built.verdict.akm.holds);
                assert!(built.verdict.sss1.holds, "{name} gradient condition");
                assert!(built.verdict.sss3.holds, "{name} uniqueness condition");
                assert!(built.verdict.asfg.holds, "{name} lag-drift condition");
            }
        }
    }

    #[test]
    fn presets_round_trip_through_toml() {
        for name in SCENARIO_NAMES {
            let cfg = scenario(name).unwrap();
            let text = toml::to_string(&cfg).unwrap();
            let again = crate::config::parse_config(&text)
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(again.time.steps, cfg.time.steps);
        }
    }

    #[test]
    fn unknown_scenario_is_reported_with_the_catalog() {
        match scenario("warp-drive") {
            Err(SimError::UnknownScenario(msg)) => {
                assert!(msg.contains("warp-drive"));
                assert!(msg.contains("stationary"));
            }
            _ => panic!("expected unknown-scenario error"),
        }
    }

    #[test]
    fn radiating_square_marches_a_couple_of_steps() {
        let mut cfg = stefan_boltzmann();
        cfg.time.steps = 2;
        cfg.time.t_final = 0.05;
        let built = build_run(&cfg, true).unwrap();
        let traj = run_rothe(&built.problem, &built.rothe).unwrap();
        assert_eq!(traj.theta.len(), 3);
        let last = traj.theta.last().unwrap();
        assert!(last.values.iter().all(|v| v.is_finite() && *v > 0.5 && *v < 1.3));
    }
}
