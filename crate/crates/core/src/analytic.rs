//! Closed-form reference surfaces.
//!
//! Each [`AnalyticSurface`] carries an exact parametric chart with position
//! and first/second partial derivatives. Curvature fields follow exactly from
//! the fundamental forms; derivative quantities such as `|∇H|²` and `|∇A°|²`
//! use 6th-order centred differences of the exact fields together with the
//! Christoffel symbols of the exact induced metric.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Rotation3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{icosahedron_data, midpoint_subdivision, MeshError, TriangleSurface, Vec3};

/// Michael–Simon constant `4³/√ω₂` with `ω₂ = π`.
pub fn michael_simon_constant() -> f64 {
    64.0 / PI.sqrt()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("invalid surface parameters: {0}")]
    InvalidParameters(String),
    #[error("resolution {0} is too small for a manifold sample")]
    ResolutionTooSmall(usize),
    #[error("quadrature did not converge: estimated relative error {achieved:e} at {nodes} nodes")]
    NotConverged { achieved: f64, nodes: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticKind {
    Sphere { radius: f64 },
    /// Axisymmetric spheroid `(a cos φ sin θ, a sin φ sin θ, c cos θ)`.
    Spheroid { a: f64, c: f64 },
    Torus { major: f64, minor: f64 },
    /// `ρ(n) = radius·(1 + ε·Y(n))` with `Y = (3z² − 1)/2 + (x² − y²)/2`.
    PerturbedSphere { radius: f64, epsilon: f64 },
}

/// Quadrature refinement controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Nodes in the first chart direction on the coarsest grid.
    pub base_nodes: usize,
    pub max_doublings: usize,
    pub rel_tol: f64,
    /// Absolute floor for integrals that vanish identically.
    pub abs_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            base_nodes: 24,
            max_doublings: 5,
            rel_tol: 1e-6,
            abs_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticSurface {
    pub kind: AnalyticKind,
    pub quadrature: QuadratureSpec,
}

/// Named integrands supported by [`AnalyticSurface::quadrature_integrate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrand {
    One,
    H2,
    K,
    Ao2,
    Ao4,
    H2Ao2,
    GradH2,
    GradAo2,
}

impl Integrand {
    pub const ALL: [Integrand; 8] = [
        Integrand::One,
        Integrand::H2,
        Integrand::K,
        Integrand::Ao2,
        Integrand::Ao4,
        Integrand::H2Ao2,
        Integrand::GradH2,
        Integrand::GradAo2,
    ];

    fn needs_derivatives(self) -> bool {
        matches!(self, Integrand::GradH2 | Integrand::GradAo2)
    }
}

/// Position and partial derivatives of a chart at one parameter point.
#[derive(Debug, Clone, Copy)]
pub struct Jet {
    pub f: Vec3,
    pub fu: Vec3,
    pub fv: Vec3,
    pub fuu: Vec3,
    pub fuv: Vec3,
    pub fvv: Vec3,
}

/// Exact pointwise geometry derived from a [`Jet`].
#[derive(Debug, Clone, Copy)]
pub struct PointGeometry {
    pub position: Vec3,
    /// Inward unit normal (round spheres have positive `A`).
    pub nu: Vec3,
    pub metric: Matrix2<f64>,
    pub metric_inv: Matrix2<f64>,
    pub area_element: f64,
    /// Second fundamental form `A_ij = ⟨∂²_ij f, ν⟩`.
    pub sff: Matrix2<f64>,
    pub h: f64,
    pub k: f64,
    pub a2: f64,
    pub ao2: f64,
}

impl PointGeometry {
    fn from_jet(j: &Jet) -> Self {
        let guu = j.fu.dot(&j.fu);
        let guv = j.fu.dot(&j.fv);
        let gvv = j.fv.dot(&j.fv);
        let metric = Matrix2::new(guu, guv, guv, gvv);
        let det = guu * gvv - guv * guv;
        let metric_inv = Matrix2::new(gvv, -guv, -guv, guu) / det;
        let cross = j.fu.cross(&j.fv);
        let nu = -cross / cross.norm();
        let sff = Matrix2::new(
            j.fuu.dot(&nu),
            j.fuv.dot(&nu),
            j.fuv.dot(&nu),
            j.fvv.dot(&nu),
        );
        let shape = metric_inv * sff;
        let h = shape.trace();
        let k = sff.determinant() / det;
        let a2 = (shape * shape).trace();
        Self {
            position: j.f,
            nu,
            metric,
            metric_inv,
            area_element: det.sqrt(),
            sff,
            h,
            k,
            a2,
            ao2: a2 - 0.5 * h * h,
        }
    }

    pub fn tracefree(&self) -> Matrix2<f64> {
        self.sff - self.metric * (0.5 * self.h)
    }
}

/// Geometry plus derivative quantities at one point.
#[derive(Debug, Clone, Copy)]
pub struct DerivativeSample {
    pub geometry: PointGeometry,
    pub grad_h2: f64,
    pub grad_ao2: f64,
    pub grad_a2: f64,
}

/// Scalar test function on R³ used in the Michael–Simon battery.
#[derive(Clone, Copy)]
pub struct TestFunction {
    pub name: &'static str,
    pub value: fn(Vec3) -> f64,
    pub gradient: fn(Vec3) -> Vec3,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("TestFunction").field(&self.name).finish()
    }
}

pub fn test_battery() -> Vec<TestFunction> {
    vec![
        TestFunction {
            name: "one",
            value: |_| 1.0,
            gradient: |_| Vec3::zeros(),
        },
        TestFunction {
            name: "x",
            value: |p| p.x,
            gradient: |_| Vec3::x(),
        },
        TestFunction {
            name: "z+0.5",
            value: |p| p.z + 0.5,
            gradient: |_| Vec3::z(),
        },
        TestFunction {
            name: "x^2-y^2",
            value: |p| p.x * p.x - p.y * p.y,
            gradient: |p| Vec3::new(2.0 * p.x, -2.0 * p.y, 0.0),
        },
        TestFunction {
            name: "exp(-|p|^2)",
            value: |p| (-p.norm_squared()).exp(),
            gradient: |p| -2.0 * p * (-p.norm_squared()).exp(),
        },
        TestFunction {
            name: "sin(3x)cos(2z)",
            value: |p| (3.0 * p.x).sin() * (2.0 * p.z).cos(),
            gradient: |p| {
                Vec3::new(
                    3.0 * (3.0 * p.x).cos() * (2.0 * p.z).cos(),
                    0.0,
                    -2.0 * (3.0 * p.x).sin() * (2.0 * p.z).sin(),
                )
            },
        },
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct SobolevCheck {
    pub function: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub grad_ao2: f64,
    pub half_h2_ao2: f64,
    pub half_grad_h2: f64,
    pub ao4: f64,
    /// `∫|∇A°|² + ½∫H²|A°|² − ½∫|∇H|² − ∫|A°|⁴`.
    pub residual: f64,
    /// Residual over the largest of the four terms (zero when all vanish).
    pub relative_residual: f64,
    /// Largest pointwise `|∇H|²/|∇A°|²` on the quadrature grid.
    pub max_grad_ratio: f64,
    /// Largest pointwise `(|∇A|² − 3|∇A°|²)/|∇A°|²`; non-positive when the
    /// bound holds.
    pub max_codazzi_excess: f64,
    pub sobolev: Vec<SobolevCheck>,
    pub nodes: usize,
}

impl IdentityReport {
    pub fn sobolev_holds(&self) -> bool {
        self.sobolev.iter().all(|c| c.holds)
    }
}

const FD_STEP: f64 = 1e-3;

impl AnalyticSurface {
    pub fn new(kind: AnalyticKind) -> Result<Self, AnalyticError> {
        let bad = |m: &str| Err(AnalyticError::InvalidParameters(m.to_string()));
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match kind {
            AnalyticKind::Sphere { radius } if !(finite(&[radius]) && radius > 0.0) => {
                return bad("sphere radius must be positive")
            }
            AnalyticKind::Spheroid { a, c } if !(finite(&[a, c]) && a > 0.0 && c > 0.0) => {
                return bad("spheroid semi-axes must be positive")
            }
            AnalyticKind::Torus { major, minor }
                if !(finite(&[major, minor]) && minor > 0.0 && major > minor) =>
            {
                return bad("torus requires R > r > 0")
            }
            AnalyticKind::PerturbedSphere { radius, epsilon }
                if !(finite(&[radius, epsilon]) && radius > 0.0 && epsilon.abs() < 0.5) =>
            {
                return bad("perturbed sphere requires radius > 0 and |ε| < 0.5")
            }
            _ => {}
        }
        Ok(Self {
            kind,
            quadrature: QuadratureSpec::default(),
        })
    }

    pub fn sphere(radius: f64) -> Self {
        Self::new(AnalyticKind::Sphere { radius }).expect("valid sphere")
    }

    pub fn spheroid(a: f64, c: f64) -> Self {
        Self::new(AnalyticKind::Spheroid { a, c }).expect("valid spheroid")
    }

    pub fn torus(major: f64, minor: f64) -> Self {
        Self::new(AnalyticKind::Torus { major, minor }).expect("valid torus")
    }

    pub fn perturbed_sphere(radius: f64, epsilon: f64) -> Self {
        Self::new(AnalyticKind::PerturbedSphere { radius, epsilon }).expect("valid perturbed sphere")
    }

    pub fn with_quadrature(mut self, q: QuadratureSpec) -> Self {
        self.quadrature = q;
        self
    }

    fn is_torus(&self) -> bool {
        matches!(self.kind, AnalyticKind::Torus { .. })
    }

    /// Chart jet. Sphere-like kinds use `(θ, φ) ∈ (0, π) × [0, 2π)`, the
    /// torus uses (major angle, minor angle) on `[0, 2π)²`.
    pub fn jet(&self, u: f64, v: f64) -> Jet {
        match self.kind {
            AnalyticKind::Sphere { radius } => spheroid_jet(radius, radius, u, v),
            AnalyticKind::Spheroid { a, c } => spheroid_jet(a, c, u, v),
            AnalyticKind::Torus { major, minor } => torus_jet(major, minor, u, v),
            AnalyticKind::PerturbedSphere { radius, epsilon } => perturbed_jet(radius, epsilon, u, v),
        }
    }

    pub fn geometry(&self, u: f64, v: f64) -> PointGeometry {
        PointGeometry::from_jet(&self.jet(u, v))
    }

    /// Exact position for a unit direction; only for sphere-like kinds.
    fn position_for_direction(&self, n: Vec3) -> Vec3 {
        match self.kind {
            AnalyticKind::Sphere { radius } => n * radius,
            AnalyticKind::Spheroid { a, c } => Vec3::new(a * n.x, a * n.y, c * n.z),
            AnalyticKind::PerturbedSphere { radius, epsilon } => {
                n * (radius * (1.0 + epsilon * harmonic_y(n)))
            }
            AnalyticKind::Torus { .. } => unreachable!("torus has no direction chart"),
        }
    }

    /// Chart parameters of a mesh-sampled direction (sphere-like kinds).
    pub fn parameters_for_direction(n: Vec3) -> (f64, f64) {
        let n = n.normalize();
        (n.z.clamp(-1.0, 1.0).acos(), n.y.atan2(n.x).rem_euclid(2.0 * PI))
    }

    /// Triangulated sample. For sphere-like kinds `resolution` is the
    /// icosphere subdivision level (poles at ±z are vertices); for the torus
    /// it is the number of minor-circle segments, with twice as many along
    /// the major circle.
    pub fn sample_mesh(&self, resolution: usize) -> Result<TriangleSurface, AnalyticError> {
        if self.is_torus() {
            if resolution < 3 {
                return Err(AnalyticError::ResolutionTooSmall(resolution));
            }
            let (nu, nv) = (2 * resolution, resolution);
            let mut positions = Vec::with_capacity(nu * nv);
            for i in 0..nu {
                for j in 0..nv {
                    let u = 2.0 * PI * i as f64 / nu as f64;
                    let v = 2.0 * PI * j as f64 / nv as f64;
                    positions.push(self.jet(u, v).f);
                }
            }
            let id = |i: usize, j: usize| (i % nu) * nv + (j % nv);
            let mut faces = Vec::with_capacity(2 * nu * nv);
            for i in 0..nu {
                for j in 0..nv {
                    let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                    faces.push([a, b, c]);
                    faces.push([a, c, d]);
                }
            }
            return Ok(TriangleSurface::new(positions, faces)?);
        }
        if resolution > 8 {
            return Err(AnalyticError::InvalidParameters(format!(
                "icosphere level {resolution} is too large"
            )));
        }
        let directions = icosphere_directions(resolution);
        let (dirs, faces) = directions;
        let positions = dirs.iter().map(|&n| self.position_for_direction(n)).collect();
        Ok(TriangleSurface::new(positions, faces)?)
    }

    /// Exact mean curvature at the surface point in direction `n`.
    pub fn geometry_at_direction(&self, n: Vec3) -> PointGeometry {
        let (t, p) = Self::parameters_for_direction(n);
        self.geometry(t, p)
    }

    fn derivative_sample(&self, u: f64, v: f64) -> DerivativeSample {
        let g0 = self.geometry(u, v);
        let hu = if self.is_torus() {
            FD_STEP
        } else {
            FD_STEP.min(0.25 * u.min(PI - u))
        };
        let hv = FD_STEP;
        const C: [f64; 3] = [45.0, -9.0, 1.0];
        let mut dh = [0.0; 2];
        let mut dao = [Matrix2::zeros(); 2];
        let mut da = [Matrix2::zeros(); 2];
        for (dir, h) in [(0usize, hu), (1, hv)] {
            for (m, c) in C.iter().enumerate() {
                let s = (m + 1) as f64 * h;
                let (gp, gm) = if dir == 0 {
                    (self.geometry(u + s, v), self.geometry(u - s, v))
                } else {
                    (self.geometry(u, v + s), self.geometry(u, v - s))
                };
                dh[dir] += c * (gp.h - gm.h);
                dao[dir] += (gp.tracefree() - gm.tracefree()) * *c;
                da[dir] += (gp.sff - gm.sff) * *c;
            }
            dh[dir] /= 60.0 * h;
            dao[dir] /= 60.0 * h;
            da[dir] /= 60.0 * h;
        }
        let gi = g0.metric_inv;
        let grad_h2 = (0..2)
            .map(|i| (0..2).map(|j| gi[(i, j)] * dh[i] * dh[j]).sum::<f64>())
            .sum::<f64>();

        // Christoffel symbols Γ^l_{ij} = g^{lm} ⟨∂_ij f, ∂_m f⟩.
        let jet = self.jet(u, v);
        let second = [[jet.fuu, jet.fuv], [jet.fuv, jet.fvv]];
        let first = [jet.fu, jet.fv];
        let mut gamma = [[[0.0; 2]; 2]; 2];
        for l in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    gamma[l][i][j] = (0..2).map(|m| gi[(l, m)] * second[i][j].dot(&first[m])).sum();
                }
            }
        }
        let covariant = |t: &Matrix2<f64>, dt: &[Matrix2<f64>; 2]| -> f64 {
            let mut nab = [[[0.0; 2]; 2]; 2];
            for k in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        let mut val = dt[k][(i, j)];
                        for l in 0..2 {
                            val -= gamma[l][k][i] * t[(l, j)] + gamma[l][k][j] * t[(i, l)];
                        }
                        nab[k][i][j] = val;
                    }
                }
            }
            let mut sum = 0.0;
            for k in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        for a in 0..2 {
                            for b in 0..2 {
                                for c in 0..2 {
                                    sum += gi[(k, a)] * gi[(i, b)] * gi[(j, c)] * nab[k][i][j] * nab[a][b][c];
                                }
                            }
                        }
                    }
                }
            }
            sum
        };
        let grad_ao2 = covariant(&g0.tracefree(), &dao);
        let grad_a2 = covariant(&g0.sff, &da);
        DerivativeSample {
            geometry: g0,
            grad_h2,
            grad_ao2,
            grad_a2,
        }
    }

    /// Visits every node of the tensor grid at refinement `n` with its
    /// quadrature weight (area element included).
    fn for_each_node(&self, n: usize, mut visit: impl FnMut(f64, f64, f64)) {
        let nv = 2 * n;
        let dv = 2.0 * PI / nv as f64;
        if self.is_torus() {
            let du = 2.0 * PI / n as f64;
            for i in 0..n {
                for j in 0..nv {
                    visit(i as f64 * du, j as f64 * dv, du * dv);
                }
            }
        } else {
            let (x, w) = gauss_legendre(n);
            for (xi, wi) in x.iter().zip(&w) {
                let theta = 0.5 * PI * (xi + 1.0);
                for j in 0..nv {
                    visit(theta, j as f64 * dv, 0.5 * PI * wi * dv);
                }
            }
        }
    }

    fn integrate_at(&self, n: usize, f: &impl Fn(f64, f64) -> f64) -> f64 {
        let mut sum = 0.0;
        self.for_each_node(n, |u, v, w| sum += w * f(u, v));
        sum
    }

    /// Doubles the grid until successive estimates agree to the configured
    /// tolerance. `f` must include the area element.
    fn refine(&self, f: impl Fn(f64, f64) -> f64) -> Result<(f64, usize), AnalyticError> {
        let q = self.quadrature;
        let mut n = q.base_nodes.max(4);
        let mut prev = self.integrate_at(n, &f);
        for _ in 0..q.max_doublings {
            n *= 2;
            let cur = self.integrate_at(n, &f);
            let err = (cur - prev).abs();
            if err <= q.rel_tol * cur.abs() + q.abs_tol {
                return Ok((cur, n));
            }
            prev = cur;
        }
        let cur = self.integrate_at(2 * n, &f);
        Err(AnalyticError::NotConverged {
            achieved: (cur - prev).abs() / cur.abs().max(f64::MIN_POSITIVE),
            nodes: n,
        })
    }

    pub fn quadrature_integrate(&self, expr: Integrand) -> Result<f64, AnalyticError> {
        let eval = |u: f64, v: f64| -> f64 {
            if expr.needs_derivatives() {
                let d = self.derivative_sample(u, v);
                let val = if expr == Integrand::GradH2 { d.grad_h2 } else { d.grad_ao2 };
                return val * d.geometry.area_element;
            }
            let g = self.geometry(u, v);
            let val = match expr {
                Integrand::One => 1.0,
                Integrand::H2 => g.h * g.h,
                Integrand::K => g.k,
                Integrand::Ao2 => g.ao2,
                Integrand::Ao4 => g.ao2 * g.ao2,
                Integrand::H2Ao2 => g.h * g.h * g.ao2,
                Integrand::GradH2 | Integrand::GradAo2 => unreachable!(),
            };
            val * g.area_element
        };
        self.refine(eval).map(|(v, _)| v)
    }

    /// Integral of a user function of chart geometry; same refinement rule.
    pub fn integrate_with(&self, f: impl Fn(&PointGeometry) -> f64) -> Result<f64, AnalyticError> {
        self.refine(|u, v| {
            let g = self.geometry(u, v);
            f(&g) * g.area_element
        })
        .map(|(v, _)| v)
    }

    /// Both sides of the Simons-type integral identity, pointwise Codazzi
    /// bounds, and the Michael–Simon battery.
    pub fn identity_suite(&self) -> Result<IdentityReport, AnalyticError> {
        let grad_ao2 = self.quadrature_integrate(Integrand::GradAo2)?;
        let half_h2_ao2 = 0.5 * self.quadrature_integrate(Integrand::H2Ao2)?;
        let half_grad_h2 = 0.5 * self.quadrature_integrate(Integrand::GradH2)?;
        let ao4 = self.quadrature_integrate(Integrand::Ao4)?;
        let residual = grad_ao2 + half_h2_ao2 - half_grad_h2 - ao4;
        let scale = [grad_ao2, half_h2_ao2, half_grad_h2, ao4]
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        let relative_residual = if scale > self.quadrature.abs_tol {
            residual.abs() / scale
        } else {
            0.0
        };

        // Pointwise bounds on the base grid.
        let n = self.quadrature.base_nodes.max(8);
        let mut max_grad_ratio = 0.0f64;
        let mut max_codazzi_excess = f64::NEG_INFINITY;
        let mut floor = 0.0f64;
        self.for_each_node(n, |u, v, _| {
            floor = floor.max(self.derivative_sample(u, v).grad_ao2);
        });
        let floor = 1e-8 * floor;
        self.for_each_node(n, |u, v, _| {
            let d = self.derivative_sample(u, v);
            if d.grad_ao2 > floor {
                max_grad_ratio = max_grad_ratio.max(d.grad_h2 / d.grad_ao2);
                max_codazzi_excess = max_codazzi_excess.max((d.grad_a2 - 3.0 * d.grad_ao2) / d.grad_ao2);
            }
        });
        if max_codazzi_excess == f64::NEG_INFINITY {
            max_codazzi_excess = 0.0;
        }

        let cs = michael_simon_constant();
        // Kinks in |u|, |∇u| and |H| limit these sums to second order.
        let loose = self.with_quadrature(QuadratureSpec {
            rel_tol: 1e-3,
            ..self.quadrature
        });
        let mut sobolev = Vec::new();
        for t in test_battery() {
            let l2 = loose.integrate_with(|g| (t.value)(g.position).powi(2))?;
            let grad = loose.refine(|u, v| {
                let jet = self.jet(u, v);
                let g = PointGeometry::from_jet(&jet);
                let gr = (t.gradient)(g.position);
                let du = [gr.dot(&jet.fu), gr.dot(&jet.fv)];
                let q: f64 = (0..2)
                    .map(|i| (0..2).map(|j| g.metric_inv[(i, j)] * du[i] * du[j]).sum::<f64>())
                    .sum();
                q.max(0.0).sqrt() * g.area_element
            })?;
            let hu = loose.integrate_with(|g| g.h.abs() * (t.value)(g.position).abs())?;
            let lhs = l2.max(0.0).sqrt();
            let rhs = cs * (grad.0 + hu);
            sobolev.push(SobolevCheck {
                function: t.name.to_string(),
                lhs,
                rhs,
                holds: lhs <= rhs,
            });
        }

        Ok(IdentityReport {
            grad_ao2,
            half_h2_ao2,
            half_grad_h2,
            ao4,
            residual,
            relative_residual,
            max_grad_ratio,
            max_codazzi_excess,
            sobolev,
            nodes: n,
        })
    }
}

/// `Y(n) = (3z² − 1)/2 + (x² − y²)/2` on unit vectors.
pub fn harmonic_y(n: Vec3) -> f64 {
    0.5 * (3.0 * n.z * n.z - 1.0) + 0.5 * (n.x * n.x - n.y * n.y)
}

fn spheroid_jet(a: f64, c: f64, t: f64, p: f64) -> Jet {
    let (st, ct) = t.sin_cos();
    let (sp, cp) = p.sin_cos();
    Jet {
        f: Vec3::new(a * st * cp, a * st * sp, c * ct),
        fu: Vec3::new(a * ct * cp, a * ct * sp, -c * st),
        fv: Vec3::new(-a * st * sp, a * st * cp, 0.0),
        fuu: Vec3::new(-a * st * cp, -a * st * sp, -c * ct),
        fuv: Vec3::new(-a * ct * sp, a * ct * cp, 0.0),
        fvv: Vec3::new(-a * st * cp, -a * st * sp, 0.0),
    }
}

fn torus_jet(big: f64, r: f64, u: f64, v: f64) -> Jet {
    let (su, cu) = u.sin_cos();
    let (sv, cv) = v.sin_cos();
    let w = big + r * cv;
    Jet {
        f: Vec3::new(w * cu, w * su, r * sv),
        fu: Vec3::new(-w * su, w * cu, 0.0),
        fv: Vec3::new(-r * sv * cu, -r * sv * su, r * cv),
        fuu: Vec3::new(-w * cu, -w * su, 0.0),
        fuv: Vec3::new(r * sv * su, -r * sv * cu, 0.0),
        fvv: Vec3::new(-r * cv * cu, -r * cv * su, -r * sv),
    }
}

fn perturbed_jet(radius: f64, eps: f64, t: f64, p: f64) -> Jet {
    let (s, c) = t.sin_cos();
    let (sp, cp) = p.sin_cos();
    let (s2p, c2p) = (2.0 * p).sin_cos();
    let y = 0.5 * (3.0 * c * c - 1.0) + 0.5 * s * s * c2p;
    let yt = s * c * (c2p - 3.0);
    let ytt = (c * c - s * s) * (c2p - 3.0);
    let yp = -s * s * s2p;
    let ytp = -2.0 * s * c * s2p;
    let ypp = -2.0 * s * s * c2p;
    let k = radius * eps;
    let (r, rt, rp, rtt, rtp, rpp) = (radius + k * y, k * yt, k * yp, k * ytt, k * ytp, k * ypp);

    let n = Vec3::new(s * cp, s * sp, c);
    let nt = Vec3::new(c * cp, c * sp, -s);
    let np = Vec3::new(-s * sp, s * cp, 0.0);
    let ntt = -n;
    let ntp = Vec3::new(-c * sp, c * cp, 0.0);
    let npp = Vec3::new(-s * cp, -s * sp, 0.0);
    Jet {
        f: n * r,
        fu: n * rt + nt * r,
        fv: n * rp + np * r,
        fuu: n * rtt + nt * (2.0 * rt) + ntt * r,
        fuv: n * rtp + np * rt + nt * rp + ntp * r,
        fvv: n * rpp + np * (2.0 * rp) + npp * r,
    }
}

/// Unit-sphere icosphere with a vertex at each pole.
pub fn icosphere_directions(level: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let (mut p, mut f) = icosahedron_data(1.0);
    let rot = Rotation3::rotation_between(&p[5], &Vec3::z()).expect("not antiparallel");
    for x in p.iter_mut() {
        *x = rot * *x;
    }
    for _ in 0..level {
        let (q, g) = midpoint_subdivision(&p, &f);
        p = q.into_iter().map(|x| x.normalize()).collect();
        f = g;
    }
    (p, f)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton on `P_n`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}
