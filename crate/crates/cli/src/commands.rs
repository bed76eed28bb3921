//! Subcommand implementations shared by the binary and the test suites.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use helflow::analytic::{AnalyticSurface, IdentityReport, Integrand};
use helflow::diagnostics::{
    blowup_analysis, blowup_from_snapshots, monotonicity_audit, AuditOptions, AuditReport, BlowupReport,
    DescentStats, Trajectory, Violation,
};
use helflow::energy::{first_variation_check, first_variation_check_sphere, FlowParams};
use helflow::flow::{run, Termination};
use helflow::geometry::{gauss_curvature, integrate, mean_curvature, signed_volume};
use helflow::mesh::ScalarField;
use helflow::oracle::{smallness_constants, theorem_bound, SphereTrajectory};
use serde::Serialize;

use crate::artifacts::{
    read_snapshots, read_trajectory, write_snapshots, write_trajectory, REPORT_FILE, SNAPSHOT_DIR, TRAJECTORY_FILE,
};
use crate::config::ExperimentConfig;

/// Process exit codes.
pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_DEGENERATE: i32 = 2;

/// Violations listed verbatim in reports; the rest are only counted.
const REPORTED_VIOLATIONS: usize = 20;

#[derive(Debug, Clone, Serialize)]
pub struct OracleComparison {
    pub rho0: f64,
    pub predicted_extinction: f64,
    pub relative_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoremBoundCheck {
    pub initial_energy: f64,
    pub bound: f64,
    /// Extinction time, or the final time when the run stopped earlier.
    pub observed_time: f64,
    pub extinct: bool,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmallnessCheck {
    pub initial_energy: f64,
    pub epsilon2: f64,
    pub threshold: f64,
    /// Cap on ε₂ implied by `λ₁, λ₂` alone.
    pub lambda2_cap: Option<f64>,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditSummary {
    pub theorem_mode: bool,
    pub records: usize,
    pub clean: bool,
    pub energy_violations: usize,
    pub tracefree_violations: usize,
    pub gauss_bonnet_violations: usize,
    pub li_yau_violations: usize,
    pub remesh_intervals: usize,
    pub violations: Vec<Violation>,
}

impl AuditSummary {
    fn from_report(r: AuditReport, theorem_mode: bool) -> Self {
        Self {
            theorem_mode,
            records: r.records,
            clean: r.clean(),
            energy_violations: r.energy_violations,
            tracefree_violations: r.tracefree_violations,
            gauss_bonnet_violations: r.gauss_bonnet_violations,
            li_yau_violations: r.li_yau_violations,
            remesh_intervals: r.remesh_intervals,
            violations: r.violations.into_iter().take(REPORTED_VIOLATIONS).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RemeshSummary {
    pub events: usize,
    pub within_budget: bool,
    pub max_area_drift: f64,
    pub max_willmore_drift: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Artifacts {
    pub trajectory: PathBuf,
    pub report: PathBuf,
    pub snapshots: Vec<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub name: String,
    pub params: FlowParams,
    pub termination: Termination,
    pub steps: usize,
    pub final_time: f64,
    pub extinction_time: Option<f64>,
    pub oracle: Option<OracleComparison>,
    pub theorem_bound: Option<TheoremBoundCheck>,
    pub smallness: Option<SmallnessCheck>,
    /// Per-step energy descent outside remeshing steps.
    pub descent: DescentStats,
    pub audit: AuditSummary,
    pub remesh: RemeshSummary,
    pub initial_int_ao2: f64,
    pub final_int_ao2: f64,
    pub final_roundness: f64,
    pub blowup: Option<BlowupReport>,
    pub artifacts: Artifacts,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        match self.termination {
            Termination::Degeneration { .. } => EXIT_DEGENERATE,
            _ => EXIT_SUCCESS,
        }
    }
}

pub struct SimulationOutcome {
    pub report: RunReport,
    pub trajectory: Trajectory,
}

/// Validates the config, runs the flow and writes every artifact under
/// `out_dir`. A degenerated run still produces its report.
pub fn simulate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SimulationOutcome> {
    cfg.validate().context("invalid config")?;
    let initial = cfg.build_surface()?;
    let traj = run(initial, cfg.params, &cfg.policy, &cfg.stop, &cfg.record).context("run could not start")?;

    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let csv = out_dir.join(TRAJECTORY_FILE);
    write_trajectory(&csv, &cfg.record.radii, &traj.records)?;
    let snapshots = write_snapshots(&out_dir.join(SNAPSHOT_DIR), &traj.snapshots)?;
    std::fs::write(out_dir.join("config.json"), cfg.to_json())?;

    let p = cfg.params;
    let initial_energy = traj.initial_energy.total;
    let last = traj.records.last().context("run produced no records")?;
    let first = traj.records.first().context("run produced no records")?;
    let termination = traj.termination.clone().context("run did not terminate")?;

    let predicted = cfg
        .sphere_radius()
        .and_then(|rho0| SphereTrajectory::new(rho0, p.lambda1, p.lambda2).ok());
    let oracle = predicted.map(|o| OracleComparison {
        rho0: o.rho0,
        predicted_extinction: o.extinction_time,
        relative_error: traj.extinction_time.map(|t| (t - o.extinction_time).abs() / o.extinction_time),
    });

    let theorem = match theorem_bound(initial_energy, p.lambda1) {
        Ok(bound) if p.theorem_mode => {
            let observed_time = traj.extinction_time.unwrap_or(last.time);
            Some(TheoremBoundCheck {
                initial_energy,
                bound,
                observed_time,
                extinct: traj.extinction_time.is_some(),
                satisfied: observed_time < bound,
            })
        }
        _ => None,
    };

    let smallness = if p.theorem_mode {
        let caps = smallness_constants(p.lambda1, p.lambda2, None)?;
        let threshold = 4.0 * PI + cfg.epsilon2;
        let satisfied = initial_energy < threshold;
        if !satisfied {
            log::warn!(
                "{}: initial energy {initial_energy:.6} is not below 4π + ε₂ = {threshold:.6}; the smallness hypothesis is advisory",
                cfg.name
            );
        }
        Some(SmallnessCheck {
            initial_energy,
            epsilon2: cfg.epsilon2,
            threshold,
            lambda2_cap: caps.lambda2_cap,
            satisfied,
        })
    } else {
        None
    };

    let opts = AuditOptions {
        theorem_mode: p.theorem_mode,
        ..AuditOptions::default()
    };
    let audit = AuditSummary::from_report(traj.audit(&opts), p.theorem_mode);
    let remesh = RemeshSummary {
        events: traj.remesh_events.len(),
        within_budget: traj.remesh_within_budget(),
        max_area_drift: traj.remesh_events.iter().map(|e| e.area_drift).fold(0.0, f64::max),
        max_willmore_drift: traj.remesh_events.iter().map(|e| e.willmore_drift).fold(0.0, f64::max),
    };
    let blowup = match blowup_analysis(&traj, cfg.blowup_snapshots) {
        Ok(b) => Some(b),
        Err(e) => {
            log::info!("{}: no blowup report: {e}", cfg.name);
            None
        }
    };

    let report_path = out_dir.join(REPORT_FILE);
    let report = RunReport {
        name: cfg.name.clone(),
        params: p,
        termination,
        steps: traj.steps,
        final_time: last.time,
        extinction_time: traj.extinction_time,
        oracle,
        theorem_bound: theorem,
        smallness,
        descent: traj.descent.clone(),
        audit,
        remesh,
        initial_int_ao2: first.int_ao2,
        final_int_ao2: last.int_ao2,
        final_roundness: last.roundness,
        blowup,
        artifacts: Artifacts {
            trajectory: csv,
            report: report_path.clone(),
            snapshots,
        },
    };
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("writing {}", report_path.display()))?;
    Ok(SimulationOutcome {
        report,
        trajectory: traj,
    })
}

/// Runs independent configs on up to `jobs` worker threads. Results keep
/// the input order.
pub fn simulate_many(configs: &[(ExperimentConfig, PathBuf)], jobs: usize) -> Vec<Result<RunReport>> {
    let mut dirs: Vec<&PathBuf> = configs.iter().map(|(_, d)| d).collect();
    dirs.sort();
    if let Some(w) = dirs.windows(2).find(|w| w[0] == w[1]) {
        let msg = format!("two configs share the output directory {}", w[0].display());
        return configs.iter().map(|_| Err(anyhow::anyhow!(msg.clone()))).collect();
    }
    let jobs = jobs.clamp(1, configs.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<Result<RunReport>>>> =
        configs.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some((cfg, dir)) = configs.get(i) else { break };
                let r = simulate(cfg, dir).map(|o| o.report);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every config ran"))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelReport {
    pub level: usize,
    pub vertices: usize,
    pub mean_edge: f64,
    pub h_max_rel_error: f64,
    pub k_max_rel_error: f64,
    pub area_rel_error: f64,
    pub volume_rel_error: f64,
    pub gauss_bonnet_error: f64,
    /// `λ₁ = λ₂ = 1`, `φ ≡ 1`: discrete difference quotient against `½∫φW`.
    pub first_variation_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct OperatorReport {
    pub levels: Vec<LevelReport>,
    /// Observed orders `log(e_i/e_{i+1})/log(h_i/h_{i+1})` per quantity.
    pub orders: Vec<(String, Vec<f64>)>,
    pub analytic_first_variation_residual: f64,
    pub torus_identity: IdentityReport,
    pub torus_sqrt2_willmore: f64,
    pub torus_sqrt2_rel_error: f64,
    pub sphere_identity: IdentityReport,
    pub perturbed_identity: IdentityReport,
    pub checks: Vec<Check>,
}

impl OperatorReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn sci(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn level_report(level: usize) -> Result<LevelReport> {
    let s = AnalyticSurface::sphere(1.0).sample_mesh(level)?;
    let h = mean_curvature(&s)?;
    let k = gauss_curvature(&s)?;
    let max_rel = |f: &ScalarField, exact: f64| f.values().iter().map(|x| (x - exact).abs() / exact).fold(0.0, f64::max);
    let fv = first_variation_check(&s, &FlowParams::willmore(1.0, 1.0), &ScalarField::constant(&s, 1.0))?;
    Ok(LevelReport {
        level,
        vertices: s.vertex_count(),
        mean_edge: s.mean_edge_length(),
        h_max_rel_error: max_rel(&h, 2.0),
        k_max_rel_error: max_rel(&k, 1.0),
        area_rel_error: (s.total_area() / (4.0 * PI) - 1.0).abs(),
        volume_rel_error: (signed_volume(&s) / (4.0 * PI / 3.0) - 1.0).abs(),
        gauss_bonnet_error: (integrate(&s, &k)? - 4.0 * PI).abs(),
        first_variation_residual: fv.best_residual(),
    })
}

/// Refinement study on the unit icosphere plus the quadrature identity
/// checks on the torus, the sphere and the perturbed sphere.
pub fn validate_operators(levels: &[usize]) -> Result<OperatorReport> {
    ensure!(!levels.is_empty(), "at least one level is required");
    ensure!(levels.windows(2).all(|w| w[0] < w[1]), "levels must be strictly increasing");
    let reports: Vec<LevelReport> = levels.iter().map(|&l| level_report(l)).collect::<Result<_>>()?;

    type Pick = fn(&LevelReport) -> f64;
    let quantities: [(&str, Pick); 5] = [
        ("H", |r| r.h_max_rel_error),
        ("K", |r| r.k_max_rel_error),
        ("area", |r| r.area_rel_error),
        ("volume", |r| r.volume_rel_error),
        ("first_variation", |r| r.first_variation_residual),
    ];
    let orders = quantities
        .iter()
        .map(|(name, pick)| {
            let o = reports
                .windows(2)
                .map(|w| (pick(&w[0]) / pick(&w[1])).ln() / (w[0].mean_edge / w[1].mean_edge).ln())
                .collect();
            (name.to_string(), o)
        })
        .collect();

    let mut checks = Vec::new();
    let mut check = |name: &str, passed: bool, detail: String| {
        checks.push(Check {
            name: name.into(),
            passed,
            detail,
        })
    };
    let finest = reports.last().expect("non-empty");
    for (name, pick) in &quantities[..4] {
        let values: Vec<f64> = reports.iter().map(pick).collect();
        check(
            &format!("{name}_error_decreasing"),
            values.windows(2).all(|w| w[1] < w[0]),
            sci(&values),
        );
        check(
            &format!("{name}_error_final_below_1pct"),
            pick(finest) <= 1e-2,
            format!("{:.3e} at level {}", pick(finest), finest.level),
        );
    }
    let gb = reports.iter().map(|r| r.gauss_bonnet_error).fold(0.0, f64::max);
    check("gauss_bonnet_exact", gb <= 1e-10, format!("max {gb:.3e}"));
    let fv: Vec<f64> = reports.iter().map(|r| r.first_variation_residual).collect();
    check(
        "first_variation_decreasing",
        fv.windows(2).all(|w| w[1] < w[0]),
        sci(&fv),
    );
    if finest.level >= 4 {
        check(
            "first_variation_below_2pct",
            finest.first_variation_residual <= 2e-2,
            format!("{:.3e} at level {}", finest.first_variation_residual, finest.level),
        );
    }

    let p = FlowParams::willmore(1.0, 1.0);
    let analytic = first_variation_check_sphere(&AnalyticSurface::sphere(1.0), &p, 1.0)?;
    let exact = -8.0 * PI - 4.0 * PI;
    let analytic_residual = (analytic.predicted - exact).abs() / exact.abs();
    check(
        "analytic_first_variation",
        analytic_residual <= 1e-8 && analytic.best_residual() <= 1e-6,
        format!("predicted {:.12} vs {exact:.12}", analytic.predicted),
    );

    let torus = AnalyticSurface::torus(2.0, 1.0).identity_suite()?;
    check(
        "torus_identity",
        torus.relative_residual <= 1e-4,
        format!("relative residual {:.3e}", torus.relative_residual),
    );
    let sphere = AnalyticSurface::sphere(1.0).identity_suite()?;
    let perturbed = AnalyticSurface::perturbed_sphere(1.0, 0.1).identity_suite()?;
    for (name, r) in [("torus", &torus), ("sphere", &sphere), ("perturbed_sphere", &perturbed)] {
        let worst = r.sobolev.iter().map(|c| c.lhs / c.rhs).fold(0.0, f64::max);
        check(
            &format!("michael_simon_{name}"),
            r.sobolev_holds(),
            format!("{} test functions, max lhs/rhs {worst:.3e}", r.sobolev.len()),
        );
    }
    let w = 0.25 * AnalyticSurface::torus(2f64.sqrt(), 1.0).quadrature_integrate(Integrand::H2)?;
    let torus_err = (w / (2.0 * PI * PI) - 1.0).abs();
    check("torus_sqrt2_willmore", torus_err <= 1e-4, format!("{w:.12} vs 2π²"));

    Ok(OperatorReport {
        levels: reports,
        orders,
        analytic_first_variation_residual: analytic_residual,
        torus_identity: torus,
        torus_sqrt2_willmore: w,
        torus_sqrt2_rel_error: torus_err,
        sphere_identity: sphere,
        perturbed_identity: perturbed,
        checks,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    pub t: f64,
    pub rho: f64,
    pub area: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleTable {
    pub rho0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub extinction_time: f64,
    /// Energy of the exact initial sphere and the resulting extinction bound.
    pub initial_energy: f64,
    pub theorem_bound: f64,
    pub rows: Vec<OracleRow>,
}

pub fn oracle_table(rho0: f64, lambda1: f64, lambda2: f64, rows: usize) -> Result<OracleTable> {
    if !(lambda1 > 0.0) {
        bail!("the oracle requires lambda1 > 0, got {lambda1}");
    }
    ensure!(rows >= 1, "at least one row is required");
    let traj = SphereTrajectory::new(rho0, lambda1, lambda2)?;
    let energy = helflow::energy::sphere_energy(rho0, &FlowParams::willmore(lambda1, lambda2));
    let bound = theorem_bound(energy, lambda1)?;
    let t_end = traj.extinction_time;
    let rows = (0..=rows)
        .map(|i| {
            let t = t_end * i as f64 / rows as f64;
            let rho = if i == rows { 0.0 } else { traj.radius(t)? };
            Ok(OracleRow {
                t,
                rho,
                area: 4.0 * PI * rho * rho,
            })
        })
        .collect::<Result<_>>()?;
    Ok(OracleTable {
        rho0,
        lambda1,
        lambda2,
        extinction_time: t_end,
        initial_energy: energy,
        theorem_bound: bound,
        rows,
    })
}

impl OracleTable {
    pub fn render(&self) -> String {
        let mut out = format!(
            "rho0 = {}  lambda1 = {}  lambda2 = {}\nT = {:.9}\nW(f0) = {:.9}\nbound = {:.9}\n\n{:>14} {:>14} {:>14}\n",
            self.rho0, self.lambda1, self.lambda2, self.extinction_time, self.initial_energy, self.theorem_bound, "t", "rho", "area"
        );
        for r in &self.rows {
            out.push_str(&format!("{:>14.9} {:>14.9} {:>14.9}\n", r.t, r.rho, r.area));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub trajectory: PathBuf,
    pub records: usize,
    pub radii: Vec<f64>,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub final_roundness: f64,
    pub audit: AuditSummary,
    pub blowup: Option<BlowupReport>,
}

impl AnalysisReport {
    pub fn passed(&self) -> bool {
        self.audit.clean
    }
}

/// Audits a trajectory CSV and optionally rescales the snapshots in
/// `blowup_dir`, using the last `late` of them.
pub fn analyze(csv: &Path, blowup_dir: Option<&Path>, theorem_mode: bool, late: usize) -> Result<AnalysisReport> {
    let table = read_trajectory(csv)?;
    let first = table.records.first().context("trajectory has no rows")?;
    let last = table.records.last().expect("non-empty");
    let opts = AuditOptions {
        theorem_mode,
        ..AuditOptions::default()
    };
    let audit = AuditSummary::from_report(monotonicity_audit(&table.records, &opts), theorem_mode);
    let blowup = match blowup_dir {
        Some(dir) => {
            let snaps = read_snapshots(dir)?;
            let start = snaps.len().saturating_sub(late.max(3));
            Some(blowup_from_snapshots(&snaps[start..], first.int_ao2)?)
        }
        None => None,
    };
    Ok(AnalysisReport {
        trajectory: csv.to_path_buf(),
        records: table.records.len(),
        radii: table.radii.clone(),
        initial_energy: first.energy_total,
        final_energy: last.energy_total,
        final_roundness: last.roundness,
        audit,
        blowup,
    })
}
