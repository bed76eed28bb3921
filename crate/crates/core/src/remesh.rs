//! Local mesh repair: Delaunay edge flips and tangential smoothing.
//!
//! Runs only where the mesh falls below the quality floor; a mesh that
//! already meets it is returned unchanged.

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{min_angle, GeometryError, Operators};
use crate::mesh::{MeshError, TriangleSurface, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RemeshError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid quality spec: {0}")]
    InvalidSpec(String),
    #[error("mesh quality below floor after repair: min angle {min_angle_deg:.3} deg")]
    QualityFloor { min_angle_deg: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualitySpec {
    /// Faces with a smaller interior angle trigger repair (degrees).
    pub min_angle_deg: f64,
    /// Longest over shortest edge above which repair is triggered.
    pub max_edge_ratio: f64,
    pub smoothing_iterations: usize,
    /// Minimum angle that still counts as a usable mesh after repair.
    pub degenerate_angle_deg: f64,
}

impl Default for QualitySpec {
    fn default() -> Self {
        Self {
            min_angle_deg: 15.0,
            max_edge_ratio: 4.0,
            smoothing_iterations: 5,
            degenerate_angle_deg: 1.0,
        }
    }
}

impl QualitySpec {
    pub fn validate(&self) -> Result<(), RemeshError> {
        if !(self.min_angle_deg > 0.0 && self.min_angle_deg < 60.0) {
            return Err(RemeshError::InvalidSpec(format!("min angle {} outside (0, 60)", self.min_angle_deg)));
        }
        if !(self.max_edge_ratio > 1.0) {
            return Err(RemeshError::InvalidSpec(format!("edge ratio {} must exceed 1", self.max_edge_ratio)));
        }
        if !(self.degenerate_angle_deg > 0.0 && self.degenerate_angle_deg <= self.min_angle_deg) {
            return Err(RemeshError::InvalidSpec("degenerate angle must lie in (0, min_angle_deg]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeshQuality {
    pub min_angle_deg: f64,
    pub edge_ratio: f64,
}

impl MeshQuality {
    pub fn of(s: &TriangleSurface) -> Self {
        let (lo, hi) = (0..s.edge_count())
            .map(|e| s.edge_length(e))
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), l| (lo.min(l), hi.max(l)));
        Self {
            min_angle_deg: min_angle(s).to_degrees(),
            edge_ratio: hi / lo,
        }
    }

    pub fn meets(&self, q: &QualitySpec) -> bool {
        self.min_angle_deg >= q.min_angle_deg && self.edge_ratio <= q.max_edge_ratio
    }
}

#[derive(Debug, Clone)]
pub struct RemeshOutcome {
    pub surface: TriangleSurface,
    pub skipped: bool,
    pub flips: usize,
    pub smoothed_vertices: usize,
    pub max_displacement: f64,
    /// Largest normal component of a vertex displacement.
    pub max_normal_offset: f64,
    pub before: MeshQuality,
    pub after: MeshQuality,
}

pub fn remesh(s: &TriangleSurface, q: &QualitySpec) -> Result<RemeshOutcome, RemeshError> {
    q.validate()?;
    let before = MeshQuality::of(s);
    if before.meets(q) {
        return Ok(RemeshOutcome {
            surface: s.clone(),
            skipped: true,
            flips: 0,
            smoothed_vertices: 0,
            max_displacement: 0.0,
            max_normal_offset: 0.0,
            before,
            after: before,
        });
    }

    let region = repair_region(s, q);
    let mut in_region = vec![false; s.vertex_count()];
    for &v in &region {
        in_region[v] = true;
    }
    let (mut surface, mut flips) = flip_pass(s, &in_region)?;
    let mut quality = MeshQuality::of(&surface);
    // Alternate smoothing and flips while the worst angle keeps improving.
    for _ in 0..q.smoothing_iterations {
        let smoothed = smooth_once(&surface, &region)?;
        let (candidate, n) = flip_pass(&smoothed, &in_region)?;
        let cq = MeshQuality::of(&candidate);
        if cq.min_angle_deg < quality.min_angle_deg {
            break;
        }
        surface = candidate;
        quality = cq;
        flips += n;
    }
    let original = s.positions();

    let ops = Operators::new(s)?;
    let (mut max_displacement, mut max_normal_offset) = (0.0f64, 0.0f64);
    for (v, (p, p0)) in surface.positions().iter().zip(original).enumerate() {
        let d = p - p0;
        max_displacement = max_displacement.max(d.norm());
        max_normal_offset = max_normal_offset.max(d.dot(&ops.normals()[v]).abs());
    }
    let after = quality;
    if after.min_angle_deg < q.degenerate_angle_deg {
        return Err(RemeshError::QualityFloor {
            min_angle_deg: after.min_angle_deg,
        });
    }
    Ok(RemeshOutcome {
        surface,
        skipped: false,
        flips,
        smoothed_vertices: region.len(),
        max_displacement,
        max_normal_offset,
        before,
        after,
    })
}

fn corner_angle(p: &[Vec3], at: usize, a: usize, b: usize) -> f64 {
    let u = p[a] - p[at];
    let v = p[b] - p[at];
    u.cross(&v).norm().atan2(u.dot(&v))
}

fn face_normal(p: &[Vec3], f: [usize; 3]) -> Vec3 {
    (p[f[1]] - p[f[0]]).cross(&(p[f[2]] - p[f[0]]))
}

/// The corner of `face` after the directed edge `a → b`, if present.
fn opposite(face: [usize; 3], a: usize, b: usize) -> Option<usize> {
    (0..3).find_map(|i| (face[i] == a && face[(i + 1) % 3] == b).then(|| face[(i + 2) % 3]))
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn flip_pass(s: &TriangleSurface, in_region: &[bool]) -> Result<(TriangleSurface, usize), RemeshError> {
    let mut faces = s.faces().to_vec();
    let n = delaunay_flips(s.positions(), &mut faces, in_region);
    if n == 0 {
        return Ok((s.clone(), 0));
    }
    Ok((TriangleSurface::new(s.positions().to_vec(), faces)?, n))
}

/// Flips edges whose opposite angles sum past π. Only edges with both
/// endpoints in the repair region are considered, so good regions keep
/// their connectivity.
fn delaunay_flips(p: &[Vec3], faces: &mut [[usize; 3]], in_region: &[bool]) -> usize {
    let mut valence = vec![0usize; p.len()];
    let mut edges: HashSet<(usize, usize)> = HashSet::new();
    for f in faces.iter() {
        for i in 0..3 {
            if edges.insert(key(f[i], f[(i + 1) % 3])) {
                valence[f[i]] += 1;
                valence[f[(i + 1) % 3]] += 1;
            }
        }
    }
    let mut total = 0;
    for _ in 0..20 {
        let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (fi, f) in faces.iter().enumerate() {
            for i in 0..3 {
                by_edge.entry(key(f[i], f[(i + 1) % 3])).or_default().push(fi);
            }
        }
        let mut pairs: Vec<_> = by_edge.into_iter().filter(|(_, fs)| fs.len() == 2).collect();
        pairs.sort_unstable();
        let mut touched = vec![false; faces.len()];
        let mut flips = 0;
        for ((a, b), fs) in pairs {
            let (f1, f2) = (fs[0], fs[1]);
            if touched[f1] || touched[f2] {
                continue;
            }
            if !in_region[a] || !in_region[b] {
                continue;
            }
            let (a, b, f1, f2) = if opposite(faces[f1], a, b).is_some() { (a, b, f1, f2) } else { (b, a, f1, f2) };
            let (Some(c), Some(d)) = (opposite(faces[f1], a, b), opposite(faces[f2], b, a)) else {
                continue;
            };
            if corner_angle(p, c, a, b) + corner_angle(p, d, b, a) <= PI + 1e-9 {
                continue;
            }
            if c == d || edges.contains(&key(c, d)) || valence[a] <= 3 || valence[b] <= 3 {
                continue;
            }
            let n_old = face_normal(p, faces[f1]) + face_normal(p, faces[f2]);
            let (t1, t2) = ([c, a, d], [d, b, c]);
            if face_normal(p, t1).dot(&n_old) <= 0.0 || face_normal(p, t2).dot(&n_old) <= 0.0 {
                continue;
            }
            faces[f1] = t1;
            faces[f2] = t2;
            edges.remove(&key(a, b));
            edges.insert(key(c, d));
            valence[a] -= 1;
            valence[b] -= 1;
            valence[c] += 1;
            valence[d] += 1;
            touched[f1] = true;
            touched[f2] = true;
            flips += 1;
        }
        total += flips;
        if flips == 0 {
            break;
        }
    }
    total
}

/// Vertices of bad faces or bad edges together with their one-rings.
fn repair_region(s: &TriangleSurface, q: &QualitySpec) -> Vec<usize> {
    let p = s.positions();
    let floor = q.min_angle_deg.to_radians();
    let mean = s.mean_edge_length();
    let band = q.max_edge_ratio.sqrt();
    let mut seed = vec![false; s.vertex_count()];
    for &[i, j, k] in s.faces() {
        let m = corner_angle(p, i, j, k).min(corner_angle(p, j, k, i)).min(corner_angle(p, k, i, j));
        if m < floor {
            seed[i] = true;
            seed[j] = true;
            seed[k] = true;
        }
    }
    for (e, &[a, b]) in s.topology().edges().iter().enumerate() {
        let l = s.edge_length(e);
        if l < mean / band || l > mean * band {
            seed[a] = true;
            seed[b] = true;
        }
    }
    let topo = s.topology();
    let mut region = seed.clone();
    for v in (0..seed.len()).filter(|&v| seed[v]) {
        for &u in topo.one_ring(v) {
            region[u] = true;
        }
    }
    (0..region.len()).filter(|&v| region[v]).collect()
}

/// One Jacobi pass moving region vertices halfway to the area-weighted
/// centroid of their incident faces within the tangent plane, then back
/// onto the osculating sphere.
fn smooth_once(s: &TriangleSurface, region: &[usize]) -> Result<TriangleSurface, RemeshError> {
    let ops = Operators::new(s)?;
    let h = ops.mean_curvature();
    let topo = s.topology();
    let p = s.positions();
    let faces = s.faces();
    let mut next = p.to_vec();
    for &v in region {
        let (mut c, mut w) = (Vec3::zeros(), 0.0);
        for &f in topo.vertex_faces(v) {
            let [i, j, k] = faces[f];
            let a = s.face_area(f);
            c += (p[i] + p[j] + p[k]) * (a / 3.0);
            w += a;
        }
        let n = ops.normals()[v];
        let d = 0.5 * (c / w - p[v]);
        let dt = d - n * d.dot(&n);
        let kappa = 0.5 * h[v];
        next[v] = p[v] + dt - n * (0.5 * kappa * dt.norm_squared());
    }
    Ok(s.with_positions(next)?)
}
