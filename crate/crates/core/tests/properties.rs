//! Property tests for the mesh, operator, energy, flow, diagnostics and
//! oracle invariants.

use std::collections::HashSet;
use std::f64::consts::PI;

use helflow::analytic::{icosphere_directions, AnalyticSurface, Integrand, QuadratureSpec};
use helflow::diagnostics::{concentration, concentration_brute_force, isoperimetric_ratio, roundness};
use helflow::energy::{helfrich_energy, FlowParams};
use helflow::flow::{evaluate, FlowState, StepPolicy};
use helflow::geometry::{
    gauss_curvature, integrate, laplace_beltrami, mean_curvature, signed_volume, tracefree_norm_sq, Operators,
};
use helflow::mesh::{load_surface, write_obj, ScalarField, TriangleSurface, Vec3};
use helflow::oracle::{extinction_time, sphere_radius, theorem_bound};
use nalgebra::{Matrix3, Rotation3};
use proptest::prelude::*;

fn rotation(axis: [f64; 3], angle: f64) -> Matrix3<f64> {
    let a = Vec3::new(axis[0], axis[1], axis[2]);
    let a = if a.norm() < 1e-6 { Vec3::z() } else { a.normalize() };
    *Rotation3::from_scaled_axis(a * angle).matrix()
}

/// Test surfaces indexed by a small integer: sphere, spheroids, perturbed
/// spheres and tori at coarse resolution.
fn test_surface(kind: usize, level: usize) -> TriangleSurface {
    let a = match kind % 5 {
        0 => AnalyticSurface::sphere(1.0),
        1 => AnalyticSurface::spheroid(1.0, 0.7),
        2 => AnalyticSurface::perturbed_sphere(1.0, 0.15),
        3 => AnalyticSurface::spheroid(0.8, 1.3),
        _ => AnalyticSurface::torus(2.0, 0.8),
    };
    let res = if kind % 5 == 4 { 8 + 4 * level } else { level };
    a.sample_mesh(res).unwrap()
}

fn max_rel_change(a: &[f64], b: &[f64], scale: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / scale).fold(0.0, f64::max)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

/// Radially jittered icosphere: valid closed surface with uneven triangles.
fn jittered_sphere(level: usize, amount: f64, seed: u64) -> TriangleSurface {
    let s = AnalyticSurface::sphere(1.0).sample_mesh(level).unwrap();
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let pos = s
        .positions()
        .iter()
        .map(|x| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let u = (state >> 11) as f64 / (1u64 << 53) as f64;
            x * (1.0 + amount * (2.0 * u - 1.0))
        })
        .collect();
    s.with_positions(pos).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn directed_edges_are_unique(kind in 0usize..5, level in 0usize..3) {
        let s = test_surface(kind, level);
        let mut seen = HashSet::new();
        for &[a, b, c] in s.faces() {
            for e in [(a, b), (b, c), (c, a)] {
                prop_assert!(seen.insert(e), "directed edge {:?} repeated", e);
            }
        }
        // Closed: every directed edge has its reverse.
        for &(a, b) in &seen {
            prop_assert!(seen.contains(&(b, a)));
        }
    }

    #[test]
    fn subdivision_preserves_euler_characteristic(kind in 0usize..5, level in 0usize..2) {
        let s = test_surface(kind, level);
        let t = s.subdivided();
        prop_assert_eq!(t.euler_characteristic(), s.euler_characteristic());
        prop_assert_eq!(t.face_count(), 4 * s.face_count());
    }

    #[test]
    fn obj_round_trip_is_idempotent(kind in 0usize..5, level in 0usize..2, axis in prop::array::uniform3(-1.0f64..1.0), angle in 0.0f64..6.3) {
        let s = test_surface(kind, level).transformed(&rotation(axis, angle), 1.7, Vec3::new(0.3, -2.0, 5.0));
        let once = load_surface(&write_obj(&s)).unwrap();
        prop_assert_eq!(once.positions(), s.positions());
        prop_assert_eq!(once.faces(), s.faces());
        let twice = load_surface(&write_obj(&once)).unwrap();
        prop_assert_eq!(twice.positions(), once.positions());
        prop_assert_eq!(twice.faces(), once.faces());
    }

    #[test]
    fn gauss_bonnet_is_exact(level in 0usize..3, amount in 0.0f64..0.2, seed in any::<u64>(), kind in 0usize..5) {
        let s = if kind == 0 { jittered_sphere(level, amount, seed) } else { test_surface(kind, level) };
        let k = gauss_curvature(&s).unwrap();
        let total = integrate(&s, &k).unwrap();
        let chi = s.euler_characteristic() as f64;
        prop_assert!((total - 2.0 * PI * chi).abs() < 1e-10, "{} vs {}", total, 2.0 * PI * chi);
    }

    #[test]
    fn laplacian_kills_constants_and_is_symmetric(kind in 0usize..5, c in -5.0f64..5.0, seed in any::<u64>()) {
        let s = test_surface(kind, 2);
        let lc = laplace_beltrami(&s, &ScalarField::constant(&s, c)).unwrap();
        prop_assert!(lc.values().iter().all(|&x| x == 0.0));
        // ⟨u, A·Lv⟩ = ⟨v, A·Lu⟩ with A the vertex areas.
        let ops = Operators::new(&s).unwrap();
        let n = s.vertex_count();
        let mut state = seed | 1;
        let mut rnd = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let u: Vec<f64> = (0..n).map(|_| rnd()).collect();
        let v: Vec<f64> = (0..n).map(|_| rnd()).collect();
        let lu = ops.laplacian(&s, &u);
        let lv = ops.laplacian(&s, &v);
        let a = ops.vertex_areas();
        let uav: f64 = (0..n).map(|i| u[i] * a[i] * lv[i]).sum();
        let vau: f64 = (0..n).map(|i| v[i] * a[i] * lu[i]).sum();
        prop_assert!((uav - vau).abs() <= 1e-10 * (uav.abs() + vau.abs() + 1.0));
    }

    #[test]
    fn operators_are_rigid_motion_invariant(kind in 0usize..5, axis in prop::array::uniform3(-1.0f64..1.0), angle in 0.0f64..6.3, shift in prop::array::uniform3(-10.0f64..10.0)) {
        let s = test_surface(kind, 2);
        let t = s.transformed(&rotation(axis, angle), 1.0, Vec3::new(shift[0], shift[1], shift[2]));
        let (h0, k0) = (mean_curvature(&s).unwrap(), gauss_curvature(&s).unwrap());
        let (h1, k1) = (mean_curvature(&t).unwrap(), gauss_curvature(&t).unwrap());
        let ao0 = tracefree_norm_sq(&h0, &k0);
        let ao1 = tracefree_norm_sq(&h1, &k1);
        prop_assert!(max_rel_change(h0.values(), h1.values(), max_abs(h0.values())) <= 1e-8);
        prop_assert!(max_rel_change(k0.values(), k1.values(), max_abs(k0.values())) <= 1e-8);
        let ao_scale = max_abs(ao0.values()).max(max_abs(h0.values()).powi(2));
        prop_assert!(max_rel_change(ao0.values(), ao1.values(), ao_scale) <= 1e-8);
    }

    #[test]
    fn operators_scale_correctly(kind in 0usize..5, c in 0.2f64..5.0) {
        let s = test_surface(kind, 2);
        let t = s.transformed(&Matrix3::identity(), c, Vec3::zeros());
        let (h0, k0) = (mean_curvature(&s).unwrap(), gauss_curvature(&s).unwrap());
        let (h1, k1) = (mean_curvature(&t).unwrap(), gauss_curvature(&t).unwrap());
        for (a, b) in h0.values().iter().zip(h1.values()) {
            prop_assert!((b * c - a).abs() <= 1e-8 * max_abs(h0.values()));
        }
        for (a, b) in k0.values().iter().zip(k1.values()) {
            prop_assert!((b * c * c - a).abs() <= 1e-8 * max_abs(k0.values()));
        }
        prop_assert!((t.total_area() / (c * c * s.total_area()) - 1.0).abs() <= 1e-8);
        prop_assert!((signed_volume(&t) / (c.powi(3) * signed_volume(&s)) - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn explicit_step_decreases_energy(kind in 0usize..5, l1 in 0.0f64..2.0, l2 in -0.5f64..2.0, c0 in -1.0f64..1.0) {
        let s = test_surface(kind, 2);
        let p = FlowParams { c0, ..FlowParams::willmore(l1, l2) };
        let mut st = FlowState::new(s, p).unwrap();
        let policy = StepPolicy { cfl: 0.05, ..StepPolicy::default() };
        for _ in 0..5 {
            let before = st.step(&policy).unwrap().energy_before.total;
            let after = helfrich_energy(&st.surface, &p).unwrap().total;
            prop_assert!(after <= before + 1e-8 * before.abs(), "{} -> {}", before, after);
        }
    }

    #[test]
    fn shrinking_sphere_velocity_points_inward(rho in 0.3f64..3.0, l1 in 0.1f64..3.0, l2 in 0.0f64..3.0) {
        let s = AnalyticSurface::sphere(rho).sample_mesh(2).unwrap();
        let eval = evaluate(&s, &FlowParams::willmore(l1, l2)).unwrap();
        let mut st = FlowState::new(s.clone(), FlowParams::willmore(l1, l2)).unwrap();
        let dt = 1e-3 * rho.powi(4) / (1.0 + eval.max_w * rho);
        st.step_with_dt(dt).unwrap();
        for (x0, x1) in s.positions().iter().zip(st.surface.positions()) {
            prop_assert!(x1.norm() < x0.norm());
        }
    }

    #[test]
    fn concentration_matches_brute_force(level in 1usize..3, amount in 0.0f64..0.15, seed in any::<u64>(), rho in 0.05f64..2.5) {
        let s = jittered_sphere(level, amount, seed);
        let fast = concentration(&s, rho).unwrap();
        let slow = concentration_brute_force(&s, rho).unwrap();
        prop_assert_eq!(fast.eta, slow.eta);
        prop_assert_eq!(fast.center_vertex, slow.center_vertex);
    }

    #[test]
    fn concentration_is_monotone_in_radius(kind in 0usize..4, r1 in 0.05f64..1.0, dr in 0.0f64..1.5) {
        let s = test_surface(kind, 2);
        let a = concentration(&s, r1).unwrap().eta;
        let b = concentration(&s, r1 + dr).unwrap().eta;
        prop_assert!(a <= b);
    }

    #[test]
    fn roundness_is_similarity_invariant(kind in 0usize..4, axis in prop::array::uniform3(-1.0f64..1.0), angle in 0.0f64..6.3, c in 0.1f64..10.0, shift in prop::array::uniform3(-5.0f64..5.0)) {
        let s = test_surface(kind, 2);
        let t = s.transformed(&rotation(axis, angle), c, Vec3::new(shift[0], shift[1], shift[2]));
        let (r0, r1) = (roundness(&s).unwrap(), roundness(&t).unwrap());
        prop_assert!((r0.residual - r1.residual).abs() <= 1e-8 * r0.residual.max(1e-6));
        prop_assert!((r1.radius / (c * r0.radius) - 1.0).abs() <= 1e-8);
        prop_assert!((isoperimetric_ratio(&s) - isoperimetric_ratio(&t)).abs() <= 1e-9);
    }

    #[test]
    fn oracle_closed_form_for_zero_volume_weight(rho0 in 0.1f64..5.0, l1 in 0.1f64..5.0, frac in 0.0f64..0.999) {
        let t_end = extinction_time(rho0, l1, 0.0).unwrap();
        let t = frac * t_end;
        let r = sphere_radius(rho0, l1, 0.0, t).unwrap();
        prop_assert!((r * r + 8.0 * l1 * t - rho0 * rho0).abs() <= 1e-12 * rho0 * rho0);
    }

    #[test]
    fn oracle_radius_strictly_decreases(rho0 in 0.1f64..5.0, l1 in 0.1f64..5.0, l2 in 0.0f64..5.0, a in 0.0f64..0.99, b in 0.0f64..0.99) {
        prop_assume!((a - b).abs() > 1e-6);
        let t_end = extinction_time(rho0, l1, l2).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let r_lo = sphere_radius(rho0, l1, l2, lo * t_end).unwrap();
        let r_hi = sphere_radius(rho0, l1, l2, hi * t_end).unwrap();
        prop_assert!(r_hi < r_lo);
    }

    #[test]
    fn exact_extinction_respects_theorem_bound(rho0 in 0.05f64..5.0, l1 in 0.05f64..5.0) {
        let p = FlowParams::willmore(l1, 0.0);
        let energy = helflow::energy::sphere_energy(rho0, &p);
        prop_assert!(extinction_time(rho0, l1, 0.0).unwrap() < theorem_bound(energy, l1).unwrap());
    }
}

#[test]
fn oracle_grid_against_theorem_bound() {
    for l1 in [0.5, 1.0, 2.0] {
        for rho0 in [0.5, 1.0, 2.0] {
            let energy = helflow::energy::sphere_energy(rho0, &FlowParams::willmore(l1, 0.0));
            assert!(extinction_time(rho0, l1, 0.0).unwrap() < theorem_bound(energy, l1).unwrap());
        }
    }
}

/// Exact `(H, K)` at every vertex of an analytic sample.
fn exact_fields(a: &AnalyticSurface, res: usize) -> Vec<(f64, f64)> {
    if let helflow::analytic::AnalyticKind::Torus { .. } = a.kind {
        let (nu, nv) = (2 * res, res);
        let mut out = Vec::with_capacity(nu * nv);
        for i in 0..nu {
            for j in 0..nv {
                let g = a.geometry(2.0 * PI * i as f64 / nu as f64, 2.0 * PI * j as f64 / nv as f64);
                out.push((g.h, g.k));
            }
        }
        out
    } else {
        icosphere_directions(res)
            .0
            .iter()
            .map(|&n| {
                let g = a.geometry_at_direction(n);
                (g.h, g.k)
            })
            .collect()
    }
}

/// Max-vertex and area-weighted RMS relative errors of `(H, K)`.
fn curvature_errors(a: &AnalyticSurface, res: usize) -> [f64; 4] {
    let s = a.sample_mesh(res).unwrap();
    let h = mean_curvature(&s).unwrap();
    let k = gauss_curvature(&s).unwrap();
    let areas = helflow::geometry::vertex_areas(&s).unwrap();
    let exact = exact_fields(a, res);
    let finite: Vec<usize> = (0..exact.len()).filter(|&v| exact[v].0.is_finite() && exact[v].1.is_finite()).collect();
    let hs = finite.iter().map(|&v| exact[v].0.abs()).fold(0.0, f64::max);
    let ks = finite.iter().map(|&v| exact[v].1.abs()).fold(0.0, f64::max);
    let (mut out, mut total) = ([0.0f64; 4], 0.0);
    for &v in &finite {
        let (eh, ek) = ((h[v] - exact[v].0).abs() / hs, (k[v] - exact[v].1).abs() / ks);
        out[0] = out[0].max(eh);
        out[1] = out[1].max(ek);
        out[2] += eh * eh * areas[v];
        out[3] += ek * ek * areas[v];
        total += areas[v];
    }
    out[2] = (out[2] / total).sqrt();
    out[3] = (out[3] / total).sqrt();
    out
}

fn assert_decreasing(label: &str, rows: &[[f64; 4]], cols: &[usize]) {
    for w in rows.windows(2) {
        for &c in cols {
            assert!(w[1][c] < w[0][c], "{label}: column {c} not decreasing in {rows:?}");
        }
    }
}

#[test]
fn discrete_curvatures_converge_pointwise_on_symmetric_samples() {
    let sphere: Vec<_> = [2, 3, 4].iter().map(|&l| curvature_errors(&AnalyticSurface::sphere(1.0), l)).collect();
    assert_decreasing("sphere", &sphere, &[0, 1, 2, 3]);
    let torus: Vec<_> = [16, 32, 64].iter().map(|&n| curvature_errors(&AnalyticSurface::torus(2.0, 1.0), n)).collect();
    assert_decreasing("torus", &torus, &[0, 1, 2, 3]);
}

#[test]
fn discrete_curvatures_converge_in_mean_on_spheroid() {
    // Max-vertex errors on mapped icospheres plateau; see the ledger.
    let rows: Vec<_> = [2, 3, 4].iter().map(|&l| curvature_errors(&AnalyticSurface::spheroid(1.0, 0.6), l)).collect();
    assert_decreasing("spheroid", &rows, &[2, 3]);
}

#[test]
fn willmore_gauss_bonnet_defect_vanishes_under_refinement() {
    let mut rows = Vec::new();
    for level in 2..=4 {
        let s = AnalyticSurface::sphere(1.0).sample_mesh(level).unwrap();
        let h = mean_curvature(&s).unwrap();
        let k = gauss_curvature(&s).unwrap();
        let ao = tracefree_norm_sq(&h, &k);
        let w = 0.25 * integrate(&s, &h.map(|x| x * x)).unwrap();
        let defect = (w - 0.5 * integrate(&s, &ao).unwrap() - 4.0 * PI).abs();
        rows.push((s.mean_edge_length(), defect));
    }
    assert!(rows[2].1 <= 0.05 * 4.0 * PI);
    for w in rows.windows(2) {
        let order = (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln();
        assert!(order >= 1.0, "{rows:?}");
    }
}

#[test]
fn identity_residual_decreases_under_quadrature_refinement() {
    let kinds = [
        AnalyticSurface::torus(2.0, 1.0),
        AnalyticSurface::spheroid(1.0, 0.7),
        AnalyticSurface::perturbed_sphere(1.0, 0.1),
    ];
    for a in kinds {
        let residual = |nodes: usize| {
            // A loose tolerance accepts the first doubling, so the result is
            // the plain grid sum at 2·nodes.
            let q = a.with_quadrature(QuadratureSpec {
                base_nodes: nodes,
                max_doublings: 1,
                rel_tol: 1.0,
                abs_tol: 1.0,
            });
            let t: Vec<f64> = [Integrand::GradAo2, Integrand::H2Ao2, Integrand::GradH2, Integrand::Ao4]
                .iter()
                .map(|&i| q.quadrature_integrate(i).unwrap())
                .collect();
            (t[0] + 0.5 * t[1] - 0.5 * t[2] - t[3]).abs() / max_abs(&t)
        };
        let r: Vec<f64> = [4, 8, 16].iter().map(|&n| residual(n)).collect();
        for w in r.windows(2) {
            assert!(w[1] < w[0] || w[1] < 1e-11, "{:?}: {r:?}", a.kind);
        }
    }
}

#[test]
fn michael_simon_holds_on_every_kind() {
    for a in [
        AnalyticSurface::sphere(0.7),
        AnalyticSurface::spheroid(1.0, 0.5),
        AnalyticSurface::perturbed_sphere(1.0, 0.2),
        AnalyticSurface::torus(3.0, 1.0),
    ] {
        let r = a.identity_suite().unwrap();
        assert!(r.sobolev_holds(), "{:?}: {:?}", a.kind, r.sobolev);
    }
}
