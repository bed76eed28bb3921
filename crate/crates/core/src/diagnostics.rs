//! Observables along a flow: energies, curvature concentration, roundness,
//! blowup rescalings and monotonicity audits.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{energy_from_ops, euler_lagrange_from_ops, helfrich_energy, EnergyBreakdown, EnergyError, FlowParams};
use crate::flow::Termination;
use crate::geometry::{signed_volume, GeometryError, Operators};
use crate::mesh::{TriangleSurface, Vec3};
use crate::remesh::{MeshQuality, RemeshOutcome};

/// Drift allowed across a single remesh.
pub const REMESH_AREA_BUDGET: f64 = 1e-3;
pub const REMESH_WILLMORE_BUDGET: f64 = 5e-3;

/// Relative tolerance for "non-increasing" comparisons.
pub const DESCENT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("sphere fit is degenerate (near-planar or too few points)")]
    DegenerateFit,
    #[error("need at least {needed} snapshots, got {got}")]
    InsufficientSnapshots { needed: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub time: f64,
    pub area: f64,
    pub volume: f64,
    /// `¼∫H²`.
    pub willmore: f64,
    pub energy_total: f64,
    pub int_ao2: f64,
    pub int_a2: f64,
    /// `¼∫H² < 8π`.
    pub li_yau: bool,
    /// Concentration `η(ρ)` for each configured radius.
    pub eta: Vec<f64>,
    pub roundness: f64,
    pub isoperimetric: f64,
    pub min_edge: f64,
    pub max_w: f64,
    /// Empty, or `;`-separated event labels.
    pub event: String,
}

pub fn record(
    s: &TriangleSurface,
    p: &FlowParams,
    radii: &[f64],
    time: f64,
    step: usize,
    event: &str,
) -> Result<DiagnosticsRecord, GeometryError> {
    let ops = Operators::new(s)?;
    let h = ops.mean_curvature();
    let k = ops.gauss_curvature();
    let areas = ops.vertex_areas();
    let energy = energy_from_ops(&ops, &h, p);
    let w = euler_lagrange_from_ops(s, &ops, &h, p);
    let mut willmore = 0.0;
    let mut int_ao2 = 0.0;
    let mut a2 = Vec::with_capacity(h.len());
    for v in 0..h.len() {
        let ao2 = (0.5 * h[v] * h[v] - 2.0 * k[v]).max(0.0);
        willmore += 0.25 * h[v] * h[v] * areas[v];
        int_ao2 += ao2 * areas[v];
        a2.push(0.5 * h[v] * h[v] + ao2);
    }
    let int_a2 = a2.iter().zip(areas).map(|(a, w)| a * w).sum();
    let masses: Vec<f64> = a2.iter().zip(areas).map(|(a, w)| a * w).collect();
    let grid = ConcentrationIndex::new(s.positions());
    let eta = radii.iter().map(|&r| grid.eta(&masses, r).0).collect();
    let roundness = fit_sphere(s.positions()).map(|f| f.residual).unwrap_or(f64::NAN);
    let area = ops.total_area();
    let volume = energy.volume;
    let pos = s.positions();
    let min_edge = s
        .topology()
        .edges()
        .iter()
        .map(|&[a, b]| (pos[a] - pos[b]).norm())
        .fold(f64::INFINITY, f64::min);
    Ok(DiagnosticsRecord {
        step,
        time,
        area,
        volume,
        willmore,
        energy_total: energy.total,
        int_ao2,
        int_a2,
        li_yau: willmore < 8.0 * PI,
        eta,
        roundness,
        isoperimetric: 36.0 * PI * volume * volume / area.powi(3),
        min_edge,
        max_w: w.iter().fold(0.0, |m: f64, x| m.max(x.abs())),
        event: event.to_string(),
    })
}

/// `|A|²·μ` per vertex.
pub fn curvature_masses(s: &TriangleSurface) -> Result<Vec<f64>, GeometryError> {
    let b = Operators::new(s)?.curvature_bundle();
    Ok(b.a2().iter().zip(b.vertex_areas.values()).map(|(a, w)| a * w).collect())
}

/// Uniform-grid lookup of the vertices inside extrinsic balls.
struct ConcentrationIndex<'a> {
    points: &'a [Vec3],
}

impl<'a> ConcentrationIndex<'a> {
    fn new(points: &'a [Vec3]) -> Self {
        Self { points }
    }

    fn eta(&self, masses: &[f64], rho: f64) -> (f64, usize) {
        let cell = |x: &Vec3| -> (i64, i64, i64) {
            (
                (x.x / rho).floor() as i64,
                (x.y / rho).floor() as i64,
                (x.z / rho).floor() as i64,
            )
        };
        let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, x) in self.points.iter().enumerate() {
            grid.entry(cell(x)).or_default().push(i);
        }
        let r2 = rho * rho;
        let mut best = (f64::NEG_INFINITY, 0);
        let mut hits = Vec::new();
        for (c, xc) in self.points.iter().enumerate() {
            let (i, j, k) = cell(xc);
            hits.clear();
            for di in -1..=1 {
                for dj in -1..=1 {
                    for dk in -1..=1 {
                        if let Some(vs) = grid.get(&(i + di, j + dj, k + dk)) {
                            hits.extend(vs.iter().copied().filter(|&v| (self.points[v] - xc).norm_squared() <= r2));
                        }
                    }
                }
            }
            // Summing in index order reproduces the brute-force value bit for bit.
            hits.sort_unstable();
            let m: f64 = hits.iter().map(|&v| masses[v]).sum();
            if m > best.0 {
                best = (m, c);
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Concentration {
    pub eta: f64,
    pub center: Vec3,
    pub center_vertex: usize,
}

/// `sup_x ∫_{B_ρ(x)} |A|² dμ` over vertex-centred balls.
pub fn concentration(s: &TriangleSurface, rho: f64) -> Result<Concentration, DiagnosticsError> {
    if !(rho > 0.0) {
        return Err(DiagnosticsError::InvalidArgument(format!("ball radius {rho} must be positive")));
    }
    let masses = curvature_masses(s)?;
    let (eta, c) = ConcentrationIndex::new(s.positions()).eta(&masses, rho);
    Ok(Concentration {
        eta,
        center: s.position(c),
        center_vertex: c,
    })
}

/// Quadratic-time reference for [`concentration`].
pub fn concentration_brute_force(s: &TriangleSurface, rho: f64) -> Result<Concentration, DiagnosticsError> {
    let masses = curvature_masses(s)?;
    let p = s.positions();
    let r2 = rho * rho;
    let mut best = (f64::NEG_INFINITY, 0);
    for (c, xc) in p.iter().enumerate() {
        let m: f64 = (0..p.len())
            .filter(|&v| (p[v] - xc).norm_squared() <= r2)
            .map(|v| masses[v])
            .sum();
        if m > best.0 {
            best = (m, c);
        }
    }
    Ok(Concentration {
        eta: best.0,
        center: p[best.1],
        center_vertex: best.1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SphereFit {
    pub center: Vec3,
    pub radius: f64,
    /// RMS radial deviation over the fitted radius.
    pub residual: f64,
}

/// Algebraic least-squares sphere refined by Gauss–Newton on the radial
/// distances.
pub fn fit_sphere(points: &[Vec3]) -> Result<SphereFit, DiagnosticsError> {
    if points.len() < 4 {
        return Err(DiagnosticsError::DegenerateFit);
    }
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vec3>() / n;
    let scale = (points.iter().map(|p| (p - mean).norm_squared()).sum::<f64>() / n).sqrt();
    if !(scale > 0.0) {
        return Err(DiagnosticsError::DegenerateFit);
    }
    let q: Vec<Vec3> = points.iter().map(|p| (p - mean) / scale).collect();
    // |x|² = 2c·x + d.
    let mut m = Matrix4::zeros();
    let mut rhs = Vector4::zeros();
    for x in &q {
        let row = Vector4::new(2.0 * x.x, 2.0 * x.y, 2.0 * x.z, 1.0);
        m += row * row.transpose();
        rhs += row * x.norm_squared();
    }
    let eig = m.symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if !(lo > 1e-10 * hi) {
        return Err(DiagnosticsError::DegenerateFit);
    }
    let sol = m.cholesky().ok_or(DiagnosticsError::DegenerateFit)?.solve(&rhs);
    let mut c = Vec3::new(sol[0], sol[1], sol[2]);
    let mut r = (sol[3] + c.norm_squared()).sqrt();
    if !r.is_finite() {
        return Err(DiagnosticsError::DegenerateFit);
    }
    for _ in 0..10 {
        // Residuals |x − c| − r with Jacobian [−u, −1], u the unit radial.
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for x in &q {
            let d = x - c;
            let len = d.norm();
            if len == 0.0 {
                continue;
            }
            let u = d / len;
            let row = Vector4::new(-u.x, -u.y, -u.z, -1.0);
            jtj += row * row.transpose();
            jtr += row * (len - r);
        }
        let Some(ch) = jtj.cholesky() else { break };
        let delta = ch.solve(&(-jtr));
        c += Vec3::new(delta[0], delta[1], delta[2]);
        r += delta[3];
        if delta.norm() < 1e-15 {
            break;
        }
    }
    let rms = (q.iter().map(|x| ((x - c).norm() - r).powi(2)).sum::<f64>() / n).sqrt();
    Ok(SphereFit {
        center: mean + c * scale,
        radius: r * scale,
        residual: rms / r,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Roundness {
    pub residual: f64,
    pub center: Vec3,
    pub radius: f64,
    /// Scale-invariant roundness defect `∫|A°|²`.
    pub int_ao2: f64,
}

pub fn roundness(s: &TriangleSurface) -> Result<Roundness, DiagnosticsError> {
    let fit = fit_sphere(s.positions())?;
    Ok(Roundness {
        residual: fit.residual,
        center: fit.center,
        radius: fit.radius,
        int_ao2: int_ao2(s)?,
    })
}

pub fn int_ao2(s: &TriangleSurface) -> Result<f64, GeometryError> {
    let b = Operators::new(s)?.curvature_bundle();
    Ok(b.integrate(b.ao2.values()))
}

/// `x ↦ (x − center)/r`.
pub fn rescale_blowup(s: &TriangleSurface, center: Vec3, r: f64) -> Result<TriangleSurface, DiagnosticsError> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(DiagnosticsError::InvalidArgument(format!("rescaling radius {r} must be positive")));
    }
    let pos = s.positions().iter().map(|x| (x - center) / r).collect();
    s.with_positions(pos)
        .map_err(|e| DiagnosticsError::InvalidArgument(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub surface: TriangleSurface,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlowupEntry {
    pub step: usize,
    pub time: f64,
    pub area: f64,
    /// `√(area/4π)`.
    pub scale: f64,
    pub residual: f64,
    pub int_ao2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupReport {
    pub entries: Vec<BlowupEntry>,
    pub final_residual: f64,
    pub residual_decreasing: bool,
    pub ao2_decreasing: bool,
    /// Final `∫|A°|²` over the reference (initial) value.
    pub ao2_ratio: f64,
}

pub const BLOWUP_MIN_SNAPSHOTS: usize = 3;

/// Area-normalised rescalings about the barycentre of the given snapshots.
/// `reference_ao2` is the initial `∫|A°|²` of the run.
pub fn blowup_from_snapshots(snapshots: &[Snapshot], reference_ao2: f64) -> Result<BlowupReport, DiagnosticsError> {
    if snapshots.len() < BLOWUP_MIN_SNAPSHOTS {
        return Err(DiagnosticsError::InsufficientSnapshots {
            needed: BLOWUP_MIN_SNAPSHOTS,
            got: snapshots.len(),
        });
    }
    let mut entries = Vec::with_capacity(snapshots.len());
    for snap in snapshots {
        let s = &snap.surface;
        let area = s.total_area();
        let scale = (area / (4.0 * PI)).sqrt();
        let rescaled = rescale_blowup(s, s.centroid(), scale)?;
        let r = roundness(&rescaled)?;
        entries.push(BlowupEntry {
            step: snap.step,
            time: snap.time,
            area,
            scale,
            residual: r.residual,
            int_ao2: r.int_ao2,
        });
    }
    let first = entries[0];
    let last = *entries.last().expect("non-empty");
    Ok(BlowupReport {
        final_residual: last.residual,
        residual_decreasing: last.residual < first.residual,
        ao2_decreasing: last.int_ao2 < first.int_ao2,
        ao2_ratio: last.int_ao2 / reference_ao2,
        entries,
    })
}

/// Blowup analysis over the last `late` snapshots of a trajectory.
pub fn blowup_analysis(traj: &Trajectory, late: usize) -> Result<BlowupReport, DiagnosticsError> {
    let late = late.max(BLOWUP_MIN_SNAPSHOTS);
    let n = traj.snapshots.len();
    let reference = traj.records.first().map(|r| r.int_ao2).unwrap_or(f64::NAN);
    blowup_from_snapshots(&traj.snapshots[n.saturating_sub(late)..], reference)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    EnergyIncrease,
    TracefreeIncrease,
    GaussBonnet,
    LiYau,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Index into the record list.
    pub record: usize,
    pub step: usize,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    /// Check `∫|A°|²` monotonicity and the Li–Yau flag.
    pub theorem_mode: bool,
    /// Absolute part of the tolerance on `|¼∫H² − ½∫|A°|² − 2πχ|`.
    pub gauss_bonnet_tol: f64,
    /// Mesh-dependent part, in units of `4π·h_min²/A`.
    pub gauss_bonnet_mesh_factor: f64,
    pub euler_characteristic: i64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            theorem_mode: false,
            gauss_bonnet_tol: 1e-6,
            gauss_bonnet_mesh_factor: 10.0,
            euler_characteristic: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub records: usize,
    pub violations: Vec<Violation>,
    pub energy_violations: usize,
    pub tracefree_violations: usize,
    pub gauss_bonnet_violations: usize,
    pub li_yau_violations: usize,
    /// Intervals skipped because they contain a remesh.
    pub remesh_intervals: usize,
}

impl AuditReport {
    pub fn clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn increased(before: f64, after: f64) -> bool {
    after > before + DESCENT_TOLERANCE * before.abs()
}

/// Discretization scale of the Gauss–Bonnet defect, `4π·h_min²/A`.
pub fn gauss_bonnet_scale(r: &DiagnosticsRecord) -> f64 {
    4.0 * PI * r.min_edge * r.min_edge / r.area
}

pub fn monotonicity_audit(records: &[DiagnosticsRecord], opts: &AuditOptions) -> AuditReport {
    let mut violations = Vec::new();
    let mut remesh_intervals = 0;
    let gb_target = 2.0 * PI * opts.euler_characteristic as f64;
    for (i, r) in records.iter().enumerate() {
        let gb = r.willmore - 0.5 * r.int_ao2;
        let tol = opts.gauss_bonnet_tol + opts.gauss_bonnet_mesh_factor * gauss_bonnet_scale(r);
        if (gb - gb_target).abs() > tol {
            violations.push(Violation {
                kind: ViolationKind::GaussBonnet,
                record: i,
                step: r.step,
                before: gb_target,
                after: gb,
            });
        }
        if opts.theorem_mode && !r.li_yau {
            violations.push(Violation {
                kind: ViolationKind::LiYau,
                record: i,
                step: r.step,
                before: 8.0 * PI,
                after: r.willmore,
            });
        }
        if i == 0 {
            continue;
        }
        let prev = &records[i - 1];
        if r.event.split(';').any(|e| e == "remesh") {
            remesh_intervals += 1;
            continue;
        }
        if increased(prev.energy_total, r.energy_total) {
            violations.push(Violation {
                kind: ViolationKind::EnergyIncrease,
                record: i,
                step: r.step,
                before: prev.energy_total,
                after: r.energy_total,
            });
        }
        if opts.theorem_mode && increased(prev.int_ao2, r.int_ao2) {
            violations.push(Violation {
                kind: ViolationKind::TracefreeIncrease,
                record: i,
                step: r.step,
                before: prev.int_ao2,
                after: r.int_ao2,
            });
        }
    }
    let count = |k| violations.iter().filter(|v: &&Violation| v.kind == k).count();
    AuditReport {
        records: records.len(),
        energy_violations: count(ViolationKind::EnergyIncrease),
        tracefree_violations: count(ViolationKind::TracefreeIncrease),
        gauss_bonnet_violations: count(ViolationKind::GaussBonnet),
        li_yau_violations: count(ViolationKind::LiYau),
        violations,
        remesh_intervals,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DescentViolation {
    pub step: usize,
    pub before: f64,
    pub after: f64,
}

/// Step-by-step energy descent bookkeeping.
#[derive(Debug, Clone, Default, Serialize)]
pub struct DescentStats {
    pub checked: usize,
    /// Steps excluded because they contained a remesh.
    pub skipped: usize,
    pub violations: Vec<DescentViolation>,
    pub max_relative_increase: f64,
}

impl DescentStats {
    pub fn check(&mut self, step: usize, before: f64, after: f64) {
        self.checked += 1;
        let rel = (after - before) / before.abs().max(f64::MIN_POSITIVE);
        self.max_relative_increase = self.max_relative_increase.max(rel);
        if increased(before, after) {
            self.violations.push(DescentViolation { step, before, after });
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RemeshEvent {
    pub step: usize,
    pub time: f64,
    pub flips: usize,
    pub smoothed_vertices: usize,
    pub area_drift: f64,
    pub willmore_drift: f64,
    pub energy_before: f64,
    pub energy_after: f64,
    pub quality_before: MeshQuality,
    pub quality_after: MeshQuality,
    pub max_normal_offset: f64,
}

impl RemeshEvent {
    pub fn measure(
        step: usize,
        time: f64,
        before: &TriangleSurface,
        after: &TriangleSurface,
        p: &FlowParams,
        outcome: &RemeshOutcome,
    ) -> Result<Self, EnergyError> {
        let e0 = helfrich_energy(before, p)?;
        let e1 = helfrich_energy(after, p)?;
        let w = |s: &TriangleSurface| -> Result<f64, EnergyError> {
            Ok(helfrich_energy(s, &FlowParams::willmore(0.0, 0.0))?.willmore)
        };
        let (w0, w1) = (w(before)?, w(after)?);
        Ok(Self {
            step,
            time,
            flips: outcome.flips,
            smoothed_vertices: outcome.smoothed_vertices,
            area_drift: (e1.area - e0.area).abs() / e0.area,
            willmore_drift: (w1 - w0).abs() / w0,
            energy_before: e0.total,
            energy_after: e1.total,
            quality_before: outcome.before,
            quality_after: outcome.after,
            max_normal_offset: outcome.max_normal_offset,
        })
    }

    pub fn within_budget(&self) -> bool {
        self.area_drift <= REMESH_AREA_BUDGET && self.willmore_drift <= REMESH_WILLMORE_BUDGET
    }
}

/// Output of a flow run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: FlowParams,
    pub radii: Vec<f64>,
    pub records: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<Snapshot>,
    pub remesh_events: Vec<RemeshEvent>,
    pub descent: DescentStats,
    pub termination: Option<Termination>,
    /// Interpolated time at which the area crossed the floor.
    pub extinction_time: Option<f64>,
    pub initial_energy: EnergyBreakdown,
    pub floor_area: f64,
    pub steps: usize,
}

impl Trajectory {
    pub fn new(params: FlowParams, initial_energy: EnergyBreakdown, radii: Vec<f64>, floor_area: f64) -> Self {
        Self {
            params,
            radii,
            records: Vec::new(),
            snapshots: Vec::new(),
            remesh_events: Vec::new(),
            descent: DescentStats::default(),
            termination: None,
            extinction_time: None,
            initial_energy,
            floor_area,
            steps: 0,
        }
    }

    pub fn audit(&self, opts: &AuditOptions) -> AuditReport {
        monotonicity_audit(&self.records, opts)
    }

    pub fn remesh_within_budget(&self) -> bool {
        self.remesh_events.iter().all(RemeshEvent::within_budget)
    }
}

/// `36πV²/A³`, equal to one for round spheres.
pub fn isoperimetric_ratio(s: &TriangleSurface) -> f64 {
    let v = signed_volume(s);
    36.0 * PI * v * v / s.total_area().powi(3)
}
