//! Batch command line: config ingestion, scenario presets, run
//! orchestration and deterministic artifact emission.
//!
//! One invocation is one job — a single march, a constants report, or a
//! refinement study — and everything it writes goes through the hashed
//! manifest in [`crate::report`], so reruns with the same config and seed
//! are byte-identical. Failures map to exit codes by class: usage and
//! schema problems exit 2, violated analytic preconditions 3, solver
//! breakdowns 4, violated estimates and properties 5, I/O trouble 6.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::assemble::boundary_function_power;
use crate::coefficients::CoefficientBundle;
use crate::config::{build_run, load_config, BuiltRun, RunConfig, SchemeChoice};
use crate::constants::{
    ball_radii, radius_scheme_b, rhs_functional, RadiusReport, SchemeBNorms,
};
use crate::elliptic::nodal_b;
use crate::error::{Result, SimError};
use crate::mesh::BoundarySelector;
use crate::report::{self, Artifacts};
use crate::rothe::{run_rothe, sample_h, Interpolants, RotheProblem, Scheme, Trajectory};
use crate::scenario::scenario;
use crate::space::DiscreteField;
use crate::verifier::{
    convergence_study, global_ledger, step_checks, verify_global_estimate,
    verify_monotonicity_lemma, verify_step_estimates, verify_translation_estimate,
    EnergyLedger, LemmaReport, StepCheck, TranslationReport,
};

#[derive(Parser, Debug)]
#[command(
    name = "tesim",
    version,
    about = "Coupled thermoelectric simulator with verified energy estimates"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Emit the constants, smallness and radius report without marching.
    Constants(RunArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum SchemeArg {
    A,
    B,
}

#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// Path to a TOML run configuration.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Named preset: stationary, stefan-boltzmann, newton-cooling,
    /// decoupled-heat or coupled-mild.
    #[arg(long, value_name = "NAME")]
    pub scenario: Option<String>,

    /// Override the per-step scheme: a (coupled) or b (lagged potential).
    #[arg(long)]
    pub scheme: Option<SchemeArg>,

    /// Override the number of time steps.
    #[arg(long = "M", value_name = "N")]
    pub steps: Option<usize>,

    /// Override the mesh resolution: N for intervals, NxN for rectangles.
    #[arg(long, value_name = "N[xN]")]
    pub mesh: Option<String>,

    /// Recompute and gate every energy estimate after the march.
    #[arg(long)]
    pub check_estimates: bool,

    /// Run a step-doubling refinement study over these step counts.
    #[arg(long, value_name = "M1,M2,...", value_delimiter = ',')]
    pub convergence_study: Option<Vec<usize>>,

    /// Stop after the constants report (same as the constants subcommand).
    #[arg(long)]
    pub constants_only: bool,

    /// Escalate smallness warnings to errors.
    #[arg(long)]
    pub strict: bool,

    /// Directory for CSV artifacts and the hashed manifest.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Override the sampling seed recorded in the config.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,

    /// Worker threads for study mode (0 = all cores).
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub workers: usize,
}

/// Entry point: parse nothing, just dispatch an already-parsed command line.
/// Returns normally on success; the caller maps errors to exit codes.
pub fn run_cli(cli: Cli) -> Result<()> {
    match cli.command {
        Some(Command::Constants(args)) => constants_command(&args),
        None if cli.run.constants_only => constants_command(&cli.run),
        None => run_command(&cli.run),
    }
}

fn parse_mesh(text: &str) -> Result<Vec<usize>> {
    text.split('x')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| SimError::InvalidSpec(format!("bad mesh spec '{text}'")))
        })
        .collect()
}

/// Resolve --config/--scenario plus overrides into one validated config.
pub fn resolve_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match (&args.config, &args.scenario) {
        (Some(path), None) => load_config(path)?,
        (None, Some(name)) => scenario(name)?,
        (Some(_), Some(_)) => {
            return Err(SimError::InvalidSpec(
                "--config and --scenario are mutually exclusive".into(),
            ))
        }
        (None, None) => {
            return Err(SimError::InvalidSpec(
                "one of --config or --scenario is required".into(),
            ))
        }
    };
    if let Some(scheme) = args.scheme {
        cfg.scheme = match scheme {
            SchemeArg::A => SchemeChoice::A,
            SchemeArg::B => SchemeChoice::B,
        };
    }
    if let Some(steps) = args.steps {
        cfg.time.steps = steps;
    }
    if let Some(mesh) = &args.mesh {
        cfg.domain.cells = parse_mesh(mesh)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Radii for the first implicit step: the mass load uses B(·, θ⁰), the
/// boundary loads their step-1 samples. Later steps only move the mass
/// term, so this is the natural load-time radius picture.
fn first_step_radii(built: &BuiltRun) -> Result<RadiusReport> {
    let problem = &built.problem;
    let bundle = &problem.bundle;
    let bounds = bundle.bounds();
    let tau = problem.grid.tau;

    let f = DiscreteField {
        space: problem.theta_space.clone(),
        values: nodal_b(bundle, &problem.theta_space, &problem.theta0.values)?,
    };
    let f_sq = f.lumped_l2().powi(2);
    let h1 = sample_h(&bundle.h, &problem.grid, 1, built.rothe.h_sampling);
    let h_pow =
        boundary_function_power(&problem.theta_space, &h1, bounds.ell_conj(), BoundarySelector::Gamma);
    let g_sq = boundary_function_power(&problem.phi_space, &bundle.g, 2.0, BoundarySelector::GammaN);

    let r_script = rhs_functional(
        f_sq,
        h_pow,
        g_sq,
        &bounds,
        &problem.constants,
        problem.pair.l2,
        tau,
        bounds.ell,
    );
    let (r1, r2, r_ball) =
        ball_radii(r_script, problem.pair.l1, problem.pair.l2, bounds.gamma_lo, bounds.ell);
    let norms = SchemeBNorms { f_norm_sq: f_sq, h_norm_pow: h_pow, g_norm: g_sq.sqrt() };
    let r_scheme_b = radius_scheme_b(&norms, &bounds, &problem.constants, tau, bounds.ell).ok();
    Ok(RadiusReport {
        r_script,
        r1,
        r2,
        r_ball,
        r_scheme_b,
        tau_max: bounds.a_lo / bounds.b_hi,
    })
}

fn print_warnings(built: &BuiltRun) {
    for w in &built.warnings {
        eprintln!("warning: {w}");
    }
}

fn constants_command(args: &RunArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let built = build_run(&cfg, args.strict)?;
    print_warnings(&built);
    let bounds = built.problem.bundle.bounds();
    let radii = first_step_radii(&built)?;
    let rows = report::constants_rows(
        &bounds,
        &built.problem.constants,
        &built.problem.pair,
        &built.verdict,
        Some(&radii),
    );
    print!("{}", report::constants_text(&rows));
    if let Some(dir) = &args.out {
        let mut artifacts = Artifacts::new();
        artifacts.insert("constants.csv", report::constants_csv(&rows)?);
        let config_text = config_text(&cfg)?;
        let written = artifacts.write_all(dir, &config_text)?;
        println!("wrote {} files to {}", written.len(), dir.display());
    }
    Ok(())
}

fn config_text(cfg: &RunConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| SimError::ParseError(e.to_string()))
}

/// Dyadic lags τ·{1,2,4,8} that fit inside the chain (k ≤ M−1).
fn translation_lags(traj: &Trajectory) -> Vec<f64> {
    [1usize, 2, 4, 8]
        .iter()
        .filter(|&&k| k < traj.grid.steps)
        .map(|&k| k as f64 * traj.grid.tau)
        .collect()
}

#[derive(serde::Serialize)]
struct VerificationSummary {
    scheme: Scheme,
    steps: usize,
    estimates_gated: bool,
    ledger_pass: bool,
    ledger_min_margin: f64,
    step_checks_pass: bool,
    translation: Option<TranslationReport>,
    lemma: Option<LemmaReport>,
}

struct RunOutput {
    ledger: EnergyLedger,
    checks: Vec<StepCheck>,
    summary: VerificationSummary,
}

fn march_and_verify(
    problem: &RotheProblem,
    rothe: &crate::rothe::RotheConfig,
    bundle: &CoefficientBundle,
    cfg: &RunConfig,
    gate: bool,
) -> Result<(Trajectory, RunOutput)> {
    let traj = run_rothe(problem, rothe)?;
    let constants = &problem.constants;
    let pair = &problem.pair;

    let ledger = if gate {
        verify_global_estimate(&traj, bundle, constants, pair)?
    } else {
        global_ledger(&traj, bundle, constants, pair)?
    };
    let checks = if gate {
        verify_step_estimates(&traj, bundle, constants, pair)?
    } else {
        step_checks(&traj, bundle, constants, pair)?
    };
    let checks_pass = checks.iter().all(|c| c.pass);

    let translation = if cfg.verification.translation && traj.grid.steps >= 2 {
        let interp = Interpolants::new(&traj, bundle)?;
        Some(verify_translation_estimate(&interp, &translation_lags(&traj))?)
    } else {
        None
    };
    let lemma = if cfg.verification.lemma_samples > 0 {
        Some(verify_monotonicity_lemma(
            bundle,
            &problem.theta_space,
            cfg.verification.lemma_samples,
            cfg.seed,
        )?)
    } else {
        None
    };

    let summary = VerificationSummary {
        scheme: traj.scheme,
        steps: traj.grid.steps,
        estimates_gated: gate,
        ledger_pass: ledger.pass,
        ledger_min_margin: ledger.min_margin,
        step_checks_pass: checks_pass,
        translation,
        lemma,
    };
    Ok((traj, RunOutput { ledger, checks, summary }))
}

fn status(ok: bool) -> &'static str {
    if ok {
        "[PASS]"
    } else {
        "[FAIL]"
    }
}

fn run_command(args: &RunArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let built = build_run(&cfg, args.strict)?;
    print_warnings(&built);

    if let Some(m_values) = &args.convergence_study {
        return study_command(args, &cfg, &built, m_values);
    }

    let gate = args.check_estimates || cfg.verification.estimates;
    let (traj, output) =
        march_and_verify(&built.problem, &built.rothe, &built.problem.bundle, &cfg, gate)?;

    println!(
        "run complete: scheme {:?}, {} steps of {:.6e}, {} nodes",
        traj.scheme,
        traj.grid.steps,
        traj.grid.tau,
        traj.theta[0].values.len()
    );
    println!(
        "{} global energy ledger ({} levels, min margin {:.3e})",
        status(output.ledger.pass),
        output.ledger.rows.len(),
        output.ledger.min_margin
    );
    if let Some(check) = &output.ledger.phi_interpolant {
        println!(
            "{} potential interpolant bound ({:.6e} ≤ {:.6e})",
            status(check.pass),
            check.lhs,
            check.rhs
        );
    }
    println!(
        "{} per-step estimates ({} levels)",
        status(output.summary.step_checks_pass),
        output.checks.len()
    );
    if let Some(t) = &output.summary.translation {
        println!(
            "{} translation pairing ratio {:.3} over {} lags",
            status(t.pass),
            t.ratio,
            t.rows.len()
        );
    }
    if let Some(l) = &output.summary.lemma {
        println!(
            "[PASS] capacity pairing over {} samples (min margin {:.3e})",
            l.samples, l.min_difference_margin
        );
    }

    if let Some(dir) = &args.out {
        let bounds = built.problem.bundle.bounds();
        let radii = first_step_radii(&built)?;
        let rows = report::constants_rows(
            &bounds,
            &built.problem.constants,
            &built.problem.pair,
            &built.verdict,
            Some(&radii),
        );
        let mut artifacts = Artifacts::new();
        artifacts.insert("trajectory.csv", report::trajectory_csv(&traj)?);
        artifacts.insert("steps.csv", report::steps_csv(&traj)?);
        artifacts.insert("energy_ledger.csv", report::energy_ledger_csv(&output.ledger)?);
        artifacts.insert("step_checks.csv", report::step_checks_csv(&output.checks)?);
        artifacts.insert("constants.csv", report::constants_csv(&rows)?);
        artifacts.insert_json("verification.json", &output.summary)?;
        let written = artifacts.write_all(dir, &config_text(&cfg)?)?;
        println!("wrote {} files to {}", written.len(), dir.display());
    }
    Ok(())
}

fn study_command(
    args: &RunArgs,
    cfg: &RunConfig,
    built: &BuiltRun,
    m_values: &[usize],
) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers)
        .build()
        .map_err(|e| SimError::InvalidSpec(format!("worker pool: {e}")))?;
    let study =
        pool.install(|| convergence_study(&built.problem, m_values, &built.rothe))?;

    println!(
        "refinement study: scheme {:?}, steps {:?}",
        study.scheme, study.m_values
    );
    for (i, row) in study.rows.iter().enumerate() {
        let rate = if i > 0 {
            format!(
                ", rates {:.3}/{:.3}",
                study.b_rates[i - 1],
                study.theta_rates[i - 1]
            )
        } else {
            String::new()
        };
        println!(
            "  M {:>5} vs {:>5}: mass-difference {:.6e}, field-difference {:.6e}{rate}",
            row.m_coarse, row.m_fine, row.b_diff_l1, row.theta_diff_l2
        );
    }
    match study.observed_order {
        Some(order) => println!(
            "{} observed temporal order {order:.3} ({})",
            status(study.monotone),
            if study.monotone { "differences decrease" } else { "NOT monotone" }
        ),
        None => println!("observed order: not enough rungs"),
    }

    if let Some(dir) = &args.out {
        let mut artifacts = Artifacts::new();
        artifacts.insert("study.csv", report::study_csv(&study)?);
        artifacts.insert_json("study.json", &study)?;
        let written = artifacts.write_all(dir, &config_text(cfg)?)?;
        println!("wrote {} files to {}", written.len(), dir.display());
    }
    Ok(())
}

/// Convenience for tests: run the CLI from an argument vector.
pub fn execute<I, S>(argv: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)
        .map_err(|e| SimError::InvalidSpec(e.to_string()))?;
    run_cli(cli)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(extra: &[&str]) -> Vec<String> {
        let mut v = vec!["tesim".to_string()];
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    }

    #[test]
    fn stationary_scenario_passes_all_gates() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        execute(args(&[
            "--scenario",
            "stationary",
            "--check-estimates",
            "--strict",
            "--out",
            out.to_str().unwrap(),
        ]))
        .unwrap();
        for name in [
            "trajectory.csv",
            "steps.csv",
            "energy_ledger.csv",
            "step_checks.csv",
            "constants.csv",
            "verification.json",
            "manifest.json",
        ] {
            assert!(out.join(name).is_file(), "{name} missing");
        }
    }

    #[test]
    fn reruns_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        for out in [&a, &b] {
            execute(args(&[
                "--scenario",
                "coupled-mild",
                "--M",
                "4",
                "--check-estimates",
                "--out",
                out.to_str().unwrap(),
            ]))
            .unwrap();
        }
        for name in ["trajectory.csv", "energy_ledger.csv", "manifest.json"] {
            let left = std::fs::read(a.join(name)).unwrap();
            let right = std::fs::read(b.join(name)).unwrap();
            assert_eq!(left, right, "{name} differs between reruns");
        }
    }

    #[test]
    fn constants_subcommand_writes_report() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("c");
        execute(args(&[
            "constants",
            "--scenario",
            "newton-cooling",
            "--out",
            out.to_str().unwrap(),
        ]))
        .unwrap();
        assert!(out.join("constants.csv").is_file());
        assert!(out.join("manifest.json").is_file());
    }

    #[test]
    fn constants_only_flag_matches_subcommand_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("sub"), dir.path().join("flag"));
        execute(args(&["constants", "--scenario", "stationary", "--out", a.to_str().unwrap()]))
            .unwrap();
        execute(args(&[
            "--scenario",
            "stationary",
            "--constants-only",
            "--out",
            b.to_str().unwrap(),
        ]))
        .unwrap();
        assert_eq!(
            std::fs::read(a.join("constants.csv")).unwrap(),
            std::fs::read(b.join("constants.csv")).unwrap()
        );
    }

    #[test]
    fn study_mode_emits_doubling_table() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("study");
        execute(args(&[
            "--scenario",
            "decoupled-heat",
            "--mesh",
            "32",
            "--convergence-study",
            "4,8,16",
            "--workers",
            "2",
            "--out",
            out.to_str().unwrap(),
        ]))
        .unwrap();
        let text = std::fs::read_to_string(out.join("study.csv")).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("m_coarse,m_fine,"));
    }

    #[test]
    fn config_and_scenario_are_mutually_exclusive() {
        let err = execute(args(&["--scenario", "stationary", "--config", "/tmp/x.toml"]))
            .unwrap_err();
        assert!(matches!(err, SimError::InvalidSpec(_)));
        let err = execute(args(&[])).unwrap_err();
        assert!(matches!(err, SimError::InvalidSpec(_)));
    }

    #[test]
    fn unknown_scenario_surfaces_with_its_exit_class() {
        let err = execute(args(&["--scenario", "nope"])).unwrap_err();
        assert!(matches!(err, SimError::UnknownScenario(_)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn mesh_override_rejects_garbage() {
        let err = execute(args(&["--scenario", "stationary", "--mesh", "8yo"])).unwrap_err();
        assert!(matches!(err, SimError::InvalidSpec(_)));
    }

    #[test]
    fn scheme_override_switches_the_marcher() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("b");
        execute(args(&[
            "--scenario",
            "coupled-mild",
            "--scheme",
            "b",
            "--M",
            "4",
            "--check-estimates",
            "--out",
            out.to_str().unwrap(),
        ]))
        .unwrap();
        let text = std::fs::read_to_string(out.join("verification.json")).unwrap();
        assert!(text.contains("\"B\""));
    }
}
