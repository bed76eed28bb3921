//! Discrete differential operators on triangle surfaces.
//!
//! Cotangent Laplace–Beltrami with mixed (Voronoi, obtuse-safe) vertex areas,
//! angle-defect Gauss curvature and the mean curvature obtained from the
//! cotangent Laplacian of the position. Normals are stored outward; `H` is
//! signed so that round spheres have `H = 2/ρ > 0`.

use std::f64::consts::PI;

use thiserror::Error;

use crate::mesh::{ScalarField, TriangleSurface, Vec3, VectorField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("face {0} is degenerate: cotangent weights are undefined")]
    DegenerateFace(usize),
    #[error("vertex {0} has a zero-length normal average")]
    ZeroNormal(usize),
    #[error("vertex {0} has zero mixed area")]
    ZeroArea(usize),
}

/// Relative threshold on `|e1 × e2|` (twice the face area, normalised by the
/// squared longest edge) below which a face is considered degenerate.
const SLIVER_TOLERANCE: f64 = 1e-12;

/// One-pass evaluation of the per-face and per-vertex quantities the
/// curvature operators share.
#[derive(Debug, Clone)]
pub struct Operators {
    /// Half-cotangent weight of the edge opposite each face corner.
    half_cot: Vec<[f64; 3]>,
    vertex_area: Vec<f64>,
    angle_sum: Vec<f64>,
    normal: Vec<Vec3>,
    /// Cotangent Laplacian of the position (not area-normalised).
    position_laplacian: Vec<Vec3>,
    face_area_total: f64,
    volume: f64,
    min_edge_sq: f64,
}

impl Operators {
    pub fn new(s: &TriangleSurface) -> Result<Self, GeometryError> {
        let n = s.vertex_count();
        let pos = s.positions();
        let faces = s.faces();
        let mut half_cot = Vec::with_capacity(faces.len());
        let mut vertex_area = vec![0.0; n];
        let mut angle_sum = vec![0.0; n];
        let mut normal = vec![Vec3::zeros(); n];
        let mut lap = vec![Vec3::zeros(); n];
        let mut total = 0.0;
        let mut volume = 0.0;
        let mut min_edge_sq = f64::INFINITY;

        for (fi, &[i, j, k]) in faces.iter().enumerate() {
            let (pi, pj, pk) = (pos[i], pos[j], pos[k]);
            let eij = pj - pi;
            let ejk = pk - pj;
            let eki = pi - pk;
            let cross = eij.cross(&(-eki));
            let dbl = cross.norm();
            let lij = eij.norm_squared();
            let ljk = ejk.norm_squared();
            let lki = eki.norm_squared();
            if !(dbl > SLIVER_TOLERANCE * lij.max(ljk).max(lki)) {
                return Err(GeometryError::DegenerateFace(fi));
            }
            min_edge_sq = min_edge_sq.min(lij.min(ljk).min(lki));
            volume += pi.dot(&pj.cross(&pk));
            let inv = 1.0 / dbl;
            // Corner dot products (adjacent edges pointing away from the corner).
            let di = -eij.dot(&eki);
            let dj = -ejk.dot(&eij);
            let dk = -eki.dot(&ejk);
            let (ci, cj, ck) = (di * inv, dj * inv, dk * inv);
            let (ai, aj) = (angle_from(dbl, di), angle_from(dbl, dj));
            let ak = PI - ai - aj;
            let area = 0.5 * dbl;
            total += area;

            angle_sum[i] += ai;
            angle_sum[j] += aj;
            angle_sum[k] += ak;
            let un = cross * inv;
            normal[i] += un * ai;
            normal[j] += un * aj;
            normal[k] += un * ak;

            // Mixed areas.
            if di < 0.0 {
                vertex_area[i] += 0.5 * area;
                vertex_area[j] += 0.25 * area;
                vertex_area[k] += 0.25 * area;
            } else if dj < 0.0 {
                vertex_area[j] += 0.5 * area;
                vertex_area[i] += 0.25 * area;
                vertex_area[k] += 0.25 * area;
            } else if dk < 0.0 {
                vertex_area[k] += 0.5 * area;
                vertex_area[i] += 0.25 * area;
                vertex_area[j] += 0.25 * area;
            } else {
                vertex_area[i] += 0.125 * (lij * ck + lki * cj);
                vertex_area[j] += 0.125 * (lij * ck + ljk * ci);
                vertex_area[k] += 0.125 * (ljk * ci + lki * cj);
            }

            let (wi, wj, wk) = (0.5 * ci, 0.5 * cj, 0.5 * ck);
            // Edge jk opposite i, ki opposite j, ij opposite k.
            lap[j] += ejk * wi;
            lap[k] -= ejk * wi;
            lap[k] += eki * wj;
            lap[i] -= eki * wj;
            lap[i] += eij * wk;
            lap[j] -= eij * wk;
            half_cot.push([wi, wj, wk]);
        }

        for v in 0..n {
            let len = normal[v].norm();
            if !(len > 0.0) || !len.is_finite() {
                return Err(GeometryError::ZeroNormal(v));
            }
            normal[v] /= len;
            if !(vertex_area[v] > 0.0) {
                return Err(GeometryError::ZeroArea(v));
            }
        }

        Ok(Self {
            half_cot,
            vertex_area,
            angle_sum,
            normal,
            position_laplacian: lap,
            face_area_total: total,
            volume: volume / 6.0,
            min_edge_sq,
        })
    }

    pub fn vertex_areas(&self) -> &[f64] {
        &self.vertex_area
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normal
    }

    pub fn total_area(&self) -> f64 {
        self.face_area_total
    }

    /// Signed enclosed volume, as [`signed_volume`].
    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn min_edge_length(&self) -> f64 {
        self.min_edge_sq.sqrt()
    }

    /// Mean curvature vector `Δf` at each vertex.
    pub fn mean_curvature_vector(&self, v: usize) -> Vec3 {
        self.position_laplacian[v] / self.vertex_area[v]
    }

    pub fn mean_curvature(&self) -> Vec<f64> {
        (0..self.normal.len())
            .map(|v| -self.position_laplacian[v].dot(&self.normal[v]) / self.vertex_area[v])
            .collect()
    }

    pub fn gauss_curvature(&self) -> Vec<f64> {
        self.angle_sum
            .iter()
            .zip(&self.vertex_area)
            .map(|(s, a)| (2.0 * PI - s) / a)
            .collect()
    }

    pub fn angle_defects(&self) -> Vec<f64> {
        self.angle_sum.iter().map(|s| 2.0 * PI - s).collect()
    }

    /// Cotangent Laplace–Beltrami of a scalar sample, area-normalised.
    pub fn laplacian(&self, s: &TriangleSurface, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.laplacian_into(s, u, &mut out);
        out
    }

    pub(crate) fn laplacian_into(&self, s: &TriangleSurface, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (&[i, j, k], &[wi, wj, wk]) in s.faces().iter().zip(&self.half_cot) {
            let djk = wi * (u[k] - u[j]);
            let dki = wj * (u[i] - u[k]);
            let dij = wk * (u[j] - u[i]);
            out[j] += djk;
            out[k] -= djk;
            out[k] += dki;
            out[i] -= dki;
            out[i] += dij;
            out[j] -= dij;
        }
        for (o, a) in out.iter_mut().zip(&self.vertex_area) {
            *o /= a;
        }
    }

    /// Symmetric stiffness weights per undirected edge, keyed like
    /// `Topology::edges`.
    pub fn edge_weights(&self, s: &TriangleSurface) -> Vec<f64> {
        let topo = s.topology();
        topo.edges()
            .iter()
            .zip(topo.edge_faces())
            .map(|(&[a, b], fs)| {
                fs.iter()
                    .map(|&f| {
                        let face = topo.faces()[f];
                        let c = (0..3)
                            .find(|&c| face[c] != a && face[c] != b)
                            .expect("face contains its edge");
                        self.half_cot[f][c]
                    })
                    .sum()
            })
            .collect()
    }

    pub fn curvature_bundle(&self) -> CurvatureBundle {
        let h = self.mean_curvature();
        let k = self.gauss_curvature();
        let ao2 = tracefree_values(&h, &k);
        CurvatureBundle {
            nu: VectorField::from_vec(self.normal.clone()),
            h: ScalarField::from_vec(h),
            k: ScalarField::from_vec(k),
            ao2: ScalarField::from_vec(ao2),
            vertex_areas: ScalarField::from_vec(self.vertex_area.clone()),
        }
    }
}

/// Discrete curvature sample of a surface.
#[derive(Debug, Clone)]
pub struct CurvatureBundle {
    /// Unit outward normals. The flow applies the inward convention itself.
    pub nu: VectorField,
    pub h: ScalarField,
    pub k: ScalarField,
    /// `|A°|²`, clamped at zero.
    pub ao2: ScalarField,
    pub vertex_areas: ScalarField,
}

impl CurvatureBundle {
    pub fn inward_normal(&self, v: usize) -> Vec3 {
        -self.nu[v]
    }

    /// `|A|² = H²/2 + |A°|²`.
    pub fn a2(&self) -> Vec<f64> {
        self.h
            .values()
            .iter()
            .zip(self.ao2.values())
            .map(|(h, a)| 0.5 * h * h + a)
            .collect()
    }

    pub fn integrate(&self, u: &[f64]) -> f64 {
        u.iter().zip(self.vertex_areas.values()).map(|(u, a)| u * a).sum()
    }
}

pub fn curvature_bundle(s: &TriangleSurface) -> Result<CurvatureBundle, GeometryError> {
    Ok(Operators::new(s)?.curvature_bundle())
}

pub fn vertex_normals(s: &TriangleSurface) -> Result<VectorField, GeometryError> {
    Ok(VectorField::from_vec(Operators::new(s)?.normal))
}

pub fn mean_curvature(s: &TriangleSurface) -> Result<ScalarField, GeometryError> {
    Ok(ScalarField::from_vec(Operators::new(s)?.mean_curvature()))
}

pub fn gauss_curvature(s: &TriangleSurface) -> Result<ScalarField, GeometryError> {
    Ok(ScalarField::from_vec(Operators::new(s)?.gauss_curvature()))
}

pub fn vertex_areas(s: &TriangleSurface) -> Result<ScalarField, GeometryError> {
    Ok(ScalarField::from_vec(Operators::new(s)?.vertex_area))
}

fn tracefree_values(h: &[f64], k: &[f64]) -> Vec<f64> {
    h.iter()
        .zip(k)
        .map(|(h, k)| (0.5 * h * h - 2.0 * k).max(0.0))
        .collect()
}

/// `|A°|² = max(H²/2 − 2K, 0)`.
pub fn tracefree_norm_sq(h: &ScalarField, k: &ScalarField) -> ScalarField {
    assert_eq!(h.len(), k.len(), "H and K must come from the same surface");
    ScalarField::from_vec(tracefree_values(h.values(), k.values()))
}

pub fn laplace_beltrami(s: &TriangleSurface, u: &ScalarField) -> Result<ScalarField, GeometryError> {
    assert_eq!(u.len(), s.vertex_count());
    let ops = Operators::new(s)?;
    Ok(ScalarField::from_vec(ops.laplacian(s, u.values())))
}

/// `atan2(s, c)` for `s > 0`, via a rational arctangent accurate to a few
/// ulps; the libm call dominates the operator pass otherwise.
#[inline]
pub(crate) fn angle_from(s: f64, c: f64) -> f64 {
    if c > 0.0 {
        atan_pos(s / c)
    } else if c < 0.0 {
        PI - atan_pos(s / -c)
    } else {
        0.5 * PI
    }
}

/// Arctangent of a non-negative argument (Cephes reduction and minimax
/// rational approximation).
#[inline]
fn atan_pos(x: f64) -> f64 {
    const MOREBITS: f64 = 6.123233995736765886130e-17;
    const T3P8: f64 = 2.414_213_562_373_095_048_80;
    let (base, x, extra) = if x > T3P8 {
        (0.5 * PI, -1.0 / x, MOREBITS)
    } else if x <= 0.66 {
        (0.0, x, 0.0)
    } else {
        (0.25 * PI, (x - 1.0) / (x + 1.0), 0.5 * MOREBITS)
    };
    let z = x * x;
    let p = (((-8.750608600031904122785e-1 * z - 1.615753718733365076637e1) * z - 7.500855792314704667340e1) * z
        - 1.228866684490136173410e2)
        * z
        - 6.485021904942025371773e1;
    let q = ((((z + 2.485846490142306297962e1) * z + 1.650270098316988542046e2) * z + 4.328810604912902668951e2) * z
        + 4.853903996359136964868e2)
        * z
        + 1.945506571482613964425e2;
    base + (x * (z * p / q) + x + extra)
}

/// `∫ u dμ ≈ Σ u(v)·A(v)` with mixed vertex areas.
pub fn integrate(s: &TriangleSurface, u: &ScalarField) -> Result<f64, GeometryError> {
    let ops = Operators::new(s)?;
    Ok(u.values().iter().zip(&ops.vertex_area).map(|(u, a)| u * a).sum())
}

/// Signed enclosed volume `(1/6) Σ det(p₁, p₂, p₃)`.
pub fn signed_volume(s: &TriangleSurface) -> f64 {
    let p = s.positions();
    s.faces()
        .iter()
        .map(|&[a, b, c]| p[a].dot(&p[b].cross(&p[c])))
        .sum::<f64>()
        / 6.0
}

/// Smallest interior angle over all faces (radians).
pub fn min_angle(s: &TriangleSurface) -> f64 {
    let p = s.positions();
    let mut m = PI;
    for &[i, j, k] in s.faces() {
        for (a, b, c) in [(i, j, k), (j, k, i), (k, i, j)] {
            let u = p[b] - p[a];
            let v = p[c] - p[a];
            m = m.min(u.cross(&v).norm().atan2(u.dot(&v)));
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosahedron;

    fn icosphere(level: usize) -> TriangleSurface {
        let mut s = icosahedron(1.0);
        for _ in 0..level {
            let t = s.subdivided();
            let p = t.positions().iter().map(|p| p.normalize()).collect();
            s = t.with_positions(p).unwrap();
        }
        s
    }

    #[test]
    fn gauss_bonnet_icosahedron_exact() {
        let s = icosahedron(1.0);
        let total: f64 = Operators::new(&s).unwrap().angle_defects().iter().sum();
        assert!((total - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn vertex_areas_partition_surface() {
        for level in 0..4 {
            let s = icosphere(level);
            let ops = Operators::new(&s).unwrap();
            let sum: f64 = ops.vertex_areas().iter().sum();
            assert!((sum - s.total_area()).abs() <= 1e-10 * sum);
        }
    }

    #[test]
    fn obtuse_triangles_keep_area_partition() {
        // Squash a sphere to create many obtuse faces.
        let s = icosphere(2);
        let p = s.positions().iter().map(|p| Vec3::new(p.x, p.y, 0.15 * p.z)).collect();
        let s = s.with_positions(p).unwrap();
        let ops = Operators::new(&s).unwrap();
        let sum: f64 = ops.vertex_areas().iter().sum();
        assert!((sum - s.total_area()).abs() <= 1e-10 * sum);
    }

    #[test]
    fn normals_unit_and_radial() {
        let s = icosphere(3);
        let nu = vertex_normals(&s).unwrap();
        for (v, n) in nu.values().iter().enumerate() {
            assert!((n.norm() - 1.0).abs() < 1e-10);
            assert!(n.dot(&s.position(v).normalize()) > 0.99);
        }
        let flipped = vertex_normals(&s.flipped()).unwrap();
        for (a, b) in nu.values().iter().zip(flipped.values()) {
            assert!((a + b).norm() < 1e-12);
        }
    }

    #[test]
    fn planar_patch_normal() {
        // Octahedron-like closed surface whose top four faces share a flat
        // vertex neighbourhood around the apex (0,0,0) of a square pyramid
        // pushed flat: the interior vertex of a planar fan.
        let positions = vec![
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(1.0, 0.0, 1.0),
            Vec3::new(0.0, 1.0, 1.0),
            Vec3::new(-1.0, 0.0, 1.0),
            Vec3::new(0.0, -1.0, 1.0),
            Vec3::new(0.0, 0.0, -1.0),
        ];
        let faces = vec![
            [0, 1, 2],
            [0, 2, 3],
            [0, 3, 4],
            [0, 4, 1],
            [5, 2, 1],
            [5, 3, 2],
            [5, 4, 3],
            [5, 1, 4],
        ];
        let s = TriangleSurface::new(positions, faces).unwrap();
        let nu = vertex_normals(&s).unwrap();
        assert!((nu[0] - Vec3::z()).norm() < 1e-14);
    }

    #[test]
    fn tracefree_clamps_negative_noise() {
        let s = icosahedron(1.0);
        let h = ScalarField::constant(&s, 2.0);
        let k = ScalarField::constant(&s, 1.0 + 0.25e-9);
        let ao2 = tracefree_norm_sq(&h, &k);
        assert!(ao2.values().iter().all(|&a| a == 0.0));
        let k = ScalarField::constant(&s, 0.0);
        assert!(tracefree_norm_sq(&h, &k).values().iter().all(|&a| a == 2.0));
    }

    #[test]
    fn laplacian_kills_constants_exactly() {
        let s = icosphere(3);
        let u = ScalarField::constant(&s, 3.7);
        let lu = laplace_beltrami(&s, &u).unwrap();
        assert!(lu.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn edge_weights_are_symmetric_form() {
        // u^T L v == v^T L u for the unnormalised stiffness.
        let s = icosphere(2);
        let ops = Operators::new(&s).unwrap();
        let u: Vec<f64> = s.positions().iter().map(|p| p.x * p.y + p.z).collect();
        let v: Vec<f64> = s.positions().iter().map(|p| (2.0 * p.x).sin()).collect();
        let a = ops.vertex_areas();
        let lu = ops.laplacian(&s, &u);
        let lv = ops.laplacian(&s, &v);
        let vlu: f64 = (0..u.len()).map(|i| v[i] * lu[i] * a[i]).sum();
        let ulv: f64 = (0..u.len()).map(|i| u[i] * lv[i] * a[i]).sum();
        assert!((vlu - ulv).abs() < 1e-12 * vlu.abs().max(1.0));
        let w = ops.edge_weights(&s);
        let quad: f64 = s
            .topology()
            .edges()
            .iter()
            .zip(&w)
            .map(|(&[i, j], w)| w * (u[j] - u[i]) * (v[j] - v[i]))
            .sum();
        assert!((quad + vlu).abs() < 1e-12 * vlu.abs().max(1.0));
    }

    #[test]
    fn signed_volume_flip_and_translate() {
        let s = icosphere(2);
        let v = signed_volume(&s);
        assert!((signed_volume(&s.flipped()) + v).abs() < 1e-14);
        let t = s.transformed(&nalgebra::Matrix3::identity(), 1.0, Vec3::new(3.0, -2.0, 7.0));
        assert!((signed_volume(&t) - v).abs() < 1e-12 * v);
    }

    #[test]
    fn rational_arctangent_matches_libm() {
        let mut worst: f64 = 0.0;
        for i in 0..20001 {
            let t = i as f64 / 20000.0 * PI;
            for scale in [1e-6, 1.0, 3e5] {
                let (s, c) = (t.sin().abs().max(1e-300) * scale, t.cos() * scale);
                worst = worst.max((angle_from(s, c) - s.atan2(c)).abs());
            }
        }
        for x in [1e-300, 1e-8, 0.414, 0.66, 0.6600001, 2.414, 2.4143, 1e8] {
            worst = worst.max((angle_from(x, 1.0) - x.atan2(1.0)).abs());
        }
        assert!(worst < 1e-15, "{worst}");
    }

    #[test]
    fn degenerate_face_is_reported() {
        let s = icosahedron(1.0);
        let mut p = s.positions().to_vec();
        let [a, b, c] = s.faces()[0];
        p[c] = 0.5 * (p[a] + p[b]);
        let s = s.with_positions_unchecked(p);
        assert!(matches!(Operators::new(&s), Err(GeometryError::DegenerateFace(_))));
    }
}
