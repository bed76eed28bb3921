//! Helfrich / constrained Willmore functionals and their Euler–Lagrange
//! operator on discrete surfaces.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::AnalyticSurface;
use crate::geometry::{GeometryError, Operators};
use crate::mesh::{MeshError, ScalarField, TriangleSurface};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("invalid flow parameters: {0}")]
    InvalidParams(String),
    #[error("energy is not finite")]
    NonFinite,
}

/// Spontaneous curvature and the area / volume weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    #[serde(default)]
    pub c0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Require the hypotheses of the finite-time round-point result
    /// (`c₀ = 0`, `λ₁ > 0`, `λ₂ ≥ 0`).
    #[serde(default)]
    pub theorem_mode: bool,
}

impl FlowParams {
    pub fn willmore(lambda1: f64, lambda2: f64) -> Self {
        Self {
            c0: 0.0,
            lambda1,
            lambda2,
            theorem_mode: false,
        }
    }

    pub fn theorem(lambda1: f64, lambda2: f64) -> Self {
        Self {
            theorem_mode: true,
            ..Self::willmore(lambda1, lambda2)
        }
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        if ![self.c0, self.lambda1, self.lambda2].iter().all(|x| x.is_finite()) {
            return Err(EnergyError::InvalidParams("parameters must be finite".into()));
        }
        if self.theorem_mode {
            if self.c0 != 0.0 {
                return Err(EnergyError::InvalidParams("theorem mode requires c0 = 0".into()));
            }
            if !(self.lambda1 > 0.0) {
                return Err(EnergyError::InvalidParams("theorem mode requires lambda1 > 0".into()));
            }
            if self.lambda2 < 0.0 {
                return Err(EnergyError::InvalidParams("theorem mode requires lambda2 >= 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// `¼∫(H − c₀)²`.
    pub willmore: f64,
    pub area: f64,
    pub volume: f64,
    pub area_term: f64,
    pub volume_term: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    fn assemble(willmore: f64, area: f64, volume: f64, p: &FlowParams) -> Self {
        let area_term = p.lambda1 * area;
        let volume_term = p.lambda2 * volume;
        Self {
            willmore,
            area,
            volume,
            area_term,
            volume_term,
            total: willmore + area_term + volume_term,
        }
    }
}

pub(crate) fn energy_from_ops(ops: &Operators, h: &[f64], p: &FlowParams) -> EnergyBreakdown {
    let willmore = 0.25
        * h.iter()
            .zip(ops.vertex_areas())
            .map(|(h, a)| (h - p.c0).powi(2) * a)
            .sum::<f64>();
    EnergyBreakdown::assemble(willmore, ops.total_area(), ops.volume(), p)
}

pub fn helfrich_energy(s: &TriangleSurface, p: &FlowParams) -> Result<EnergyBreakdown, EnergyError> {
    let ops = Operators::new(s)?;
    let h = ops.mean_curvature();
    let e = energy_from_ops(&ops, &h, p);
    if !e.total.is_finite() {
        return Err(EnergyError::NonFinite);
    }
    Ok(e)
}

/// `W = ΔH + H|A°|² + 2c₀K − (2λ₁ + c₀²/2)H − 2λ₂` from precomputed operators.
pub(crate) fn euler_lagrange_from_ops(
    s: &TriangleSurface,
    ops: &Operators,
    h: &[f64],
    p: &FlowParams,
) -> Vec<f64> {
    let k = ops.gauss_curvature();
    let mut w = ops.laplacian(s, h);
    let lin = 2.0 * p.lambda1 + 0.5 * p.c0 * p.c0;
    for (i, wi) in w.iter_mut().enumerate() {
        let ao2 = (0.5 * h[i] * h[i] - 2.0 * k[i]).max(0.0);
        *wi += h[i] * ao2 + 2.0 * p.c0 * k[i] - lin * h[i] - 2.0 * p.lambda2;
    }
    w
}

pub fn euler_lagrange(s: &TriangleSurface, p: &FlowParams) -> Result<ScalarField, EnergyError> {
    let ops = Operators::new(s)?;
    let h = ops.mean_curvature();
    Ok(ScalarField::from_vec(euler_lagrange_from_ops(s, &ops, &h, p)))
}

/// Sphere value `W(S_ρ) = 2c₀/ρ² − (2λ₁ + c₀²/2)(2/ρ) − 2λ₂`.
pub fn sphere_euler_lagrange(radius: f64, p: &FlowParams) -> f64 {
    let h = 2.0 / radius;
    let k = 1.0 / (radius * radius);
    2.0 * p.c0 * k - (2.0 * p.lambda1 + 0.5 * p.c0 * p.c0) * h - 2.0 * p.lambda2
}

/// Exact `H^{c₀}_{λ₁,λ₂}` of a round sphere.
pub fn sphere_energy(radius: f64, p: &FlowParams) -> f64 {
    PI * (2.0 - p.c0 * radius).powi(2)
        + p.lambda1 * 4.0 * PI * radius * radius
        + p.lambda2 * 4.0 / 3.0 * PI * radius.powi(3)
}

#[derive(Debug, Clone, Serialize)]
pub struct VariationSample {
    pub step: f64,
    pub finite_difference: f64,
    pub relative_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FirstVariationReport {
    /// `½∫φ·W dμ`.
    pub predicted: f64,
    pub samples: Vec<VariationSample>,
}

impl FirstVariationReport {
    pub fn best_residual(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.relative_residual)
            .fold(f64::INFINITY, f64::min)
    }
}

pub const VARIATION_STEPS: [f64; 2] = [1e-3, 1e-4];

fn relative(fd: f64, predicted: f64) -> f64 {
    if predicted == 0.0 && fd == 0.0 {
        0.0
    } else {
        (fd - predicted).abs() / predicted.abs().max(fd.abs())
    }
}

/// Compares the centred difference of the energy along `f + s·φ·ν` (inward
/// `ν`) with `½∫φ·W dμ`.
pub fn first_variation_check(
    s: &TriangleSurface,
    p: &FlowParams,
    phi: &ScalarField,
) -> Result<FirstVariationReport, EnergyError> {
    let ops = Operators::new(s)?;
    let h = ops.mean_curvature();
    let w = euler_lagrange_from_ops(s, &ops, &h, p);
    let predicted = 0.5
        * phi
            .values()
            .iter()
            .zip(&w)
            .zip(ops.vertex_areas())
            .map(|((f, w), a)| f * w * a)
            .sum::<f64>();
    let inward: Vec<_> = ops.normals().iter().map(|n| -n).collect();
    let displaced = |step: f64| -> Result<f64, EnergyError> {
        let pos = s
            .positions()
            .iter()
            .zip(&inward)
            .zip(phi.values())
            .map(|((x, n), f)| x + n * (step * f))
            .collect();
        let e = helfrich_energy(&s.with_positions(pos)?, p)?;
        Ok(e.total)
    };
    let mut samples = Vec::new();
    for &step in &VARIATION_STEPS {
        let fd = (displaced(step)? - displaced(-step)?) / (2.0 * step);
        if !fd.is_finite() {
            return Err(EnergyError::NonFinite);
        }
        samples.push(VariationSample {
            step,
            finite_difference: fd,
            relative_residual: relative(fd, predicted),
        });
    }
    Ok(FirstVariationReport { predicted, samples })
}

/// Analytic counterpart on a round sphere with constant normal speed `φ`:
/// the displaced surface is the sphere of radius `ρ − sφ`, and the predicted
/// side is computed by quadrature of the exact `W`.
pub fn first_variation_check_sphere(
    sphere: &AnalyticSurface,
    p: &FlowParams,
    phi: f64,
) -> Result<FirstVariationReport, EnergyError> {
    let radius = match sphere.kind {
        crate::analytic::AnalyticKind::Sphere { radius } => radius,
        other => {
            return Err(EnergyError::InvalidParams(format!(
                "analytic first variation needs a round sphere, got {other:?}"
            )))
        }
    };
    let w = sphere
        .integrate_with(|g| {
            // ΔH = 0 on the exact chart; |A°|² is zero up to rounding.
            g.h * g.ao2 + 2.0 * p.c0 * g.k - (2.0 * p.lambda1 + 0.5 * p.c0 * p.c0) * g.h - 2.0 * p.lambda2
        })
        .map_err(|e| EnergyError::InvalidParams(e.to_string()))?;
    let predicted = 0.5 * phi * w;
    let samples = VARIATION_STEPS
        .iter()
        .map(|&step| {
            let fd = (sphere_energy(radius - step * phi, p) - sphere_energy(radius + step * phi, p)) / (2.0 * step);
            VariationSample {
                step,
                finite_difference: fd,
                relative_residual: relative(fd, predicted),
            }
        })
        .collect();
    Ok(FirstVariationReport { predicted, samples })
}
