//! Deterministic run artifacts: CSV tables, JSON summaries and a hashed
//! manifest.
//!
//! Every file is assembled in memory first, then written in one pass, and
//! the manifest records a SHA-256 content hash for each of them plus the
//! hash of the originating config. Nothing here depends on wall-clock time,
//! process identity or map iteration order, so reruns with the same config
//! and seed produce byte-identical artifacts. Floating-point cells use
//! shortest round-trip decimal formatting: re-parsing a CSV reproduces the
//! in-memory values bit for bit.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constants::{DomainConstants, RadiusReport, SmallnessVerdict};
use crate::error::{Result, SimError};
use crate::rothe::Trajectory;
use crate::verifier::{ConvergenceStudy, EnergyLedger, SchemeComparison, StepCheck};

/// One nodal sample of the chain: both fields at one vertex and time level.
/// The potential column is empty at m = 0 (it has no initial value).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub m: usize,
    pub t: f64,
    pub node: usize,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub phi: Option<f64>,
}

/// Flat per-step solver diagnostics (the energy terms live in the ledger).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StepRow {
    pub m: usize,
    pub t: f64,
    pub outer_iterations: usize,
    pub newton_iterations_total: usize,
    pub residual_theta: f64,
    pub residual_phi: f64,
    pub energy_lhs: f64,
    pub energy_rhs: f64,
    pub potential_lhs: f64,
    pub potential_rhs: f64,
    pub ball_norm: f64,
    pub ball_radius: Option<f64>,
    pub in_ball: Option<bool>,
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| SimError::ParseError(e.to_string()))
}

fn csv_rows<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(bytes);
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Serialize the full chain, one row per (time level, vertex).
pub fn trajectory_csv(traj: &Trajectory) -> Result<Vec<u8>> {
    let mesh = &traj.theta[0].space.mesh;
    let mut rows = Vec::with_capacity(traj.theta.len() * mesh.n_vertices());
    for (m, theta) in traj.theta.iter().enumerate() {
        for (node, &[x, y]) in mesh.vertices.iter().enumerate() {
            rows.push(TrajectoryRow {
                m,
                t: traj.grid.node(m),
                node,
                x,
                y,
                theta: theta.values[node],
                phi: (m > 0).then(|| traj.phi_at(m).values[node]),
            });
        }
    }
    csv_bytes(rows)
}

/// Re-read a chain table; values round-trip exactly.
pub fn parse_trajectory_csv(bytes: &[u8]) -> Result<Vec<TrajectoryRow>> {
    csv_rows(bytes)
}

/// Per-step solver diagnostics table.
pub fn steps_csv(traj: &Trajectory) -> Result<Vec<u8>> {
    let rows = traj.steps.iter().map(|s| StepRow {
        m: s.m,
        t: s.t,
        outer_iterations: s.outer_iterations,
        newton_iterations_total: s.newton_iterations_total,
        residual_theta: s.residual_theta,
        residual_phi: s.residual_phi,
        energy_lhs: s.energy.lhs,
        energy_rhs: s.energy.rhs,
        potential_lhs: s.energy.phi_lhs,
        potential_rhs: s.energy.phi_rhs,
        ball_norm: s.ball_norm,
        ball_radius: s.ball_radius,
        in_ball: s.in_ball,
    });
    csv_bytes(rows)
}

/// The recomputed global ledger, one row per time level.
pub fn energy_ledger_csv(ledger: &EnergyLedger) -> Result<Vec<u8>> {
    csv_bytes(ledger.rows.iter().copied())
}

/// Per-step estimate checks, one row per time level.
pub fn step_checks_csv(checks: &[StepCheck]) -> Result<Vec<u8>> {
    csv_bytes(checks.iter().copied())
}

/// Refinement-study rows with the observed per-doubling rates.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StudyRowOut {
    pub m_coarse: usize,
    pub m_fine: usize,
    pub b_diff_l1: f64,
    pub theta_diff_l2: f64,
    pub b_rate: Option<f64>,
    pub theta_rate: Option<f64>,
}

pub fn study_csv(study: &ConvergenceStudy) -> Result<Vec<u8>> {
    let rows = study.rows.iter().enumerate().map(|(i, r)| StudyRowOut {
        m_coarse: r.m_coarse,
        m_fine: r.m_fine,
        b_diff_l1: r.b_diff_l1,
        theta_diff_l2: r.theta_diff_l2,
        b_rate: (i > 0).then(|| study.b_rates[i - 1]),
        theta_rate: (i > 0).then(|| study.theta_rates[i - 1]),
    });
    csv_bytes(rows)
}

/// Scheme-gap rows from a comparison study.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SchemeGapRow {
    pub steps: usize,
    pub sup_l2_gap: f64,
    pub factor: Option<f64>,
}

pub fn scheme_comparison_csv(cmp: &SchemeComparison) -> Result<Vec<u8>> {
    let rows = cmp.rows.iter().enumerate().map(|(i, r)| SchemeGapRow {
        steps: r.steps,
        sup_l2_gap: r.sup_l2,
        factor: (i > 0).then(|| cmp.factors[i - 1]),
    });
    csv_bytes(rows)
}

/// One line of the constants report: plain values carry only `value`,
/// condition verdicts carry the inequality sides and margin.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstantsRow {
    pub kind: String,
    pub name: String,
    pub value: Option<f64>,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub margin: Option<f64>,
    pub holds: Option<bool>,
}

fn value_row(kind: &str, name: &str, value: f64) -> ConstantsRow {
    ConstantsRow {
        kind: kind.into(),
        name: name.into(),
        value: Some(value),
        lhs: None,
        rhs: None,
        margin: None,
        holds: None,
    }
}

fn condition_row(name: &str, c: crate::constants::ConditionCheck) -> ConstantsRow {
    ConstantsRow {
        kind: "condition".into(),
        name: name.into(),
        value: None,
        lhs: Some(c.lhs),
        rhs: Some(c.rhs),
        margin: Some(c.margin),
        holds: Some(c.holds),
    }
}

/// Assemble the constants/verdict/radii rows for one configured problem.
pub fn constants_rows(
    bounds: &crate::coefficients::BoundsReport,
    constants: &DomainConstants,
    pair: &crate::constants::CoercivityPair,
    verdict: &SmallnessVerdict,
    radii: Option<&RadiusReport>,
) -> Vec<ConstantsRow> {
    let mut rows = vec![
        value_row("bound", "b_lo", bounds.b_lo),
        value_row("bound", "b_hi", bounds.b_hi),
        value_row("bound", "k_lo", bounds.k_lo),
        value_row("bound", "k_hi", bounds.k_hi),
        value_row("bound", "sigma_lo", bounds.sigma_lo),
        value_row("bound", "sigma_hi", bounds.sigma_hi),
        value_row("bound", "alpha_hi", bounds.alpha_hi),
        value_row("bound", "pi_hi", bounds.pi_hi),
        value_row("bound", "f_hi", bounds.f_hi),
        value_row("bound", "a_lo", bounds.a_lo),
        value_row("bound", "a_hi", bounds.a_hi),
        value_row("bound", "gamma_lo", bounds.gamma_lo),
        value_row("bound", "gamma_hi", bounds.gamma_hi),
        value_row("bound", "ell", bounds.ell),
        value_row("bound", "truncation", bounds.truncation),
        value_row("embedding", "poincare_p2", constants.p2),
        value_row("embedding", "trace_k2", constants.k2),
        value_row("embedding", "k2_times_p2_plus_1", constants.product),
        value_row("coercivity", "l1", pair.l1),
        value_row("coercivity", "l2", pair.l2),
        value_row("coercivity", "epsilon", pair.epsilon),
        condition_row("akm", verdict.akm),
        condition_row("sss1", verdict.sss1),
        condition_row("sss2", verdict.sss2),
        condition_row("sss3", verdict.sss3),
        condition_row("afg", verdict.afg),
        condition_row("sfg", verdict.sfg),
        condition_row("asfg", verdict.asfg),
        value_row("epsilon", "epsilon_afg", verdict.epsilon_used),
        value_row("epsilon", "epsilon_sfg", verdict.epsilon_sfg),
    ];
    if let Some(r) = radii {
        rows.push(value_row("radius", "rhs_functional", r.r_script));
        rows.push(value_row("radius", "r1", r.r1));
        rows.push(value_row("radius", "r2", r.r2));
        rows.push(value_row("radius", "r_ball", r.r_ball));
        if let Some(rb) = r.r_scheme_b {
            rows.push(value_row("radius", "r_lagged", rb));
        }
        rows.push(value_row("radius", "tau_max_lagged", r.tau_max));
    }
    rows
}

pub fn constants_csv(rows: &[ConstantsRow]) -> Result<Vec<u8>> {
    csv_bytes(rows.iter().cloned())
}

/// Human-oriented rendering of the same rows (fixed layout, no hashes).
pub fn constants_text(rows: &[ConstantsRow]) -> String {
    let mut out = String::new();
    let mut last_kind = "";
    for row in rows {
        if row.kind != last_kind {
            out.push_str(&format!("[{}]\n", row.kind));
            last_kind = &row.kind;
        }
        match (row.value, row.lhs, row.rhs, row.margin, row.holds) {
            (Some(v), ..) => out.push_str(&format!("  {:<22} {v}\n", row.name)),
            (None, Some(l), Some(r), Some(m), Some(h)) => out.push_str(&format!(
                "  {:<22} {}  ({l} vs {r}, margin {m})\n",
                row.name,
                if h { "holds" } else { "FAILS" },
            )),
            _ => out.push_str(&format!("  {:<22} (empty)\n", row.name)),
        }
    }
    out
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// In-memory artifact set; files are emitted together with a manifest.
#[derive(Default)]
pub struct Artifacts {
    files: BTreeMap<String, Vec<u8>>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    config_sha256: String,
    files: BTreeMap<String, String>,
}

impl Artifacts {
    pub fn new() -> Self {
        Artifacts::default()
    }

    pub fn insert(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.insert(name.to_string(), bytes);
    }

    pub fn insert_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| SimError::ParseError(e.to_string()))?;
        text.push('\n');
        self.insert(name, text.into_bytes());
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.get(name).map(Vec::as_slice)
    }

    /// The manifest content: config hash plus one content hash per file.
    pub fn manifest_json(&self, config_text: &str) -> Vec<u8> {
        let manifest = Manifest {
            schema_version: 1,
            config_sha256: sha256_hex(config_text.as_bytes()),
            files: self
                .files
                .iter()
                .map(|(name, bytes)| (name.clone(), sha256_hex(bytes)))
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("static schema");
        text.push('\n');
        text.into_bytes()
    }

    /// Write every file plus `manifest.json` under `dir` (created if absent).
    pub fn write_all(&self, dir: &Path, config_text: &str) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes)?;
            written.push(path);
        }
        let manifest_path = dir.join("manifest.json");
        std::fs::write(&manifest_path, self.manifest_json(config_text))?;
        written.push(manifest_path);
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{CoefficientBundle, Profile, ScalarCoefficient, SpatialFn, TimeBoundaryFn};
    use crate::constants::{coercivity_constants, optimal_epsilon_afg, CoercivityVariant, DomainConstants};
    use crate::mesh::{build_mesh, DomainSpec, Side};
    use crate::rothe::{run_rothe, RotheConfig, RotheProblem, TimeGrid};
    use crate::space::{Constraint, DiscreteField, FunctionSpace};

    fn small_run() -> Trajectory {
        let bundle = CoefficientBundle {
            b: ScalarCoefficient::constant(1.0),
            k: ScalarCoefficient::constant(1.0),
            sigma: ScalarCoefficient::constant(1.0),
            alpha_s: ScalarCoefficient::signed_magnitude(Profile::Constant(0.0), 0.0),
            pi: ScalarCoefficient::signed_magnitude(Profile::Constant(0.0), 0.0),
            gamma: ScalarCoefficient::constant(1.0),
            h: TimeBoundaryFn::constant(0.0),
            g: SpatialFn::constant(0.0),
            ell: 2.0,
            truncation: 0.0,
        };
        let mesh = build_mesh(&DomainSpec::Interval { length: 1.0 }, &[8], &[Side::Left]).unwrap();
        let theta_space = FunctionSpace::new(mesh.clone(), Constraint::None);
        let phi_space = FunctionSpace::new(mesh, Constraint::MeanZeroVolume);
        let bounds = bundle.bounds();
        let pair =
            coercivity_constants(&bounds, optimal_epsilon_afg(&bounds), CoercivityVariant::SplitA)
                .unwrap();
        let problem = RotheProblem {
            bundle,
            theta0: DiscreteField::from_fn(theta_space.clone(), |x| (3.1 * x[0]).sin() / 3.0),
            grid: TimeGrid::new(0.5, 4).unwrap(),
            theta_space,
            phi_space,
            constants: DomainConstants::user_supplied(1.0, 1.5).unwrap(),
            pair,
        };
        run_rothe(&problem, &RotheConfig::default()).unwrap()
    }

    #[test]
    fn trajectory_csv_round_trips_bitwise() {
        let traj = small_run();
        let bytes = trajectory_csv(&traj).unwrap();
        let rows = parse_trajectory_csv(&bytes).unwrap();
        assert_eq!(rows.len(), 5 * 9);
        for row in &rows {
            let theta = traj.theta[row.m].values[row.node];
            assert_eq!(row.theta.to_bits(), theta.to_bits(), "theta at {}/{}", row.m, row.node);
            match row.phi {
                None => assert_eq!(row.m, 0),
                Some(p) => {
                    assert_eq!(p.to_bits(), traj.phi_at(row.m).values[row.node].to_bits())
                }
            }
        }
    }

    #[test]
    fn awkward_floats_survive_the_csv_cycle() {
        #[derive(Serialize, Deserialize)]
        struct Row {
            v: f64,
        }
        let values = [
            std::f64::consts::PI,
            1.0 / 3.0,
            f64::MIN_POSITIVE,
            f64::MIN_POSITIVE / 8.0,
            1.7976931348623157e308,
            -2.2250738585072014e-308,
            0.1 + 0.2,
            1e-300,
        ];
        let bytes = csv_bytes(values.iter().map(|&v| Row { v })).unwrap();
        let back: Vec<Row> = csv_rows(&bytes).unwrap();
        for (a, b) in values.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.v.to_bits());
        }
    }

    #[test]
    fn artifacts_are_deterministic_and_fully_hashed() {
        let traj = small_run();
        let mut a = Artifacts::new();
        a.insert("trajectory.csv", trajectory_csv(&traj).unwrap());
        a.insert("steps.csv", steps_csv(&traj).unwrap());
        let m1 = a.manifest_json("config text");
        let m2 = a.manifest_json("config text");
        assert_eq!(m1, m2);
        let manifest: Manifest = serde_json::from_slice(&m1).unwrap();
        assert_eq!(manifest.files.len(), 2);
        assert!(manifest.files.contains_key("trajectory.csv"));
        assert_eq!(manifest.config_sha256.len(), 64);
        for hash in manifest.files.values() {
            assert_eq!(hash.len(), 64);
        }
    }

    #[test]
    fn write_all_persists_files_and_manifest() {
        let traj = small_run();
        let mut a = Artifacts::new();
        a.insert("steps.csv", steps_csv(&traj).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let written = a.write_all(dir.path(), "cfg").unwrap();
        assert_eq!(written.len(), 2);
        let manifest: Manifest =
            serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        let disk = std::fs::read(dir.path().join("steps.csv")).unwrap();
        assert_eq!(manifest.files["steps.csv"], sha256_hex(&disk));
    }

    #[test]
    fn constants_report_covers_bounds_verdicts_and_pair() {
        let traj = small_run();
        let bundle_bounds = {
            let b = CoefficientBundle {
                b: ScalarCoefficient::constant(1.0),
                k: ScalarCoefficient::constant(1.0),
                sigma: ScalarCoefficient::constant(1.0),
                alpha_s: ScalarCoefficient::signed_magnitude(Profile::Constant(0.0), 0.0),
                pi: ScalarCoefficient::signed_magnitude(Profile::Constant(0.0), 0.0),
                gamma: ScalarCoefficient::constant(1.0),
                h: TimeBoundaryFn::constant(0.0),
                g: SpatialFn::constant(0.0),
                ell: 2.0,
                truncation: 0.0,
            };
            b.bounds()
        };
        let verdict = crate::constants::check_smallness(&bundle_bounds, None);
        let rows = constants_rows(&bundle_bounds, &traj.constants, &traj.pair, &verdict, None);
        assert!(rows.iter().any(|r| r.name == "a_lo" && r.value == Some(1.0)));
        assert!(rows.iter().any(|r| r.name == "sss1" && r.holds == Some(true)));
        let csv = constants_csv(&rows).unwrap();
        let back: Vec<ConstantsRow> = csv_rows(&csv).unwrap();
        assert_eq!(back.len(), rows.len());
        let text = constants_text(&rows);
        assert!(text.contains("[condition]"));
        assert!(text.contains("holds"));
    }
}
