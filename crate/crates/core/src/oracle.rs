//! Exact round-sphere dynamics and the constants attached to the
//! round-point extinction result.

use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::analytic::michael_simon_constant;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid oracle parameters: {0}")]
    InvalidParameters(String),
    #[error("sphere does not shrink to a point for lambda1 = {lambda1}, lambda2 = {lambda2}, rho0 = {rho0}")]
    NoExtinction { rho0: f64, lambda1: f64, lambda2: f64 },
    #[error("time {t} is not before the extinction time {extinction}")]
    PastExtinction { t: f64, extinction: f64 },
}

/// Radius law `dρ/dt = −(4λ₁/ρ + 2λ₂)` of a round sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SphereTrajectory {
    pub rho0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub extinction_time: f64,
}

impl SphereTrajectory {
    pub fn new(rho0: f64, lambda1: f64, lambda2: f64) -> Result<Self, OracleError> {
        let extinction_time = extinction_time(rho0, lambda1, lambda2)?;
        Ok(Self {
            rho0,
            lambda1,
            lambda2,
            extinction_time,
        })
    }

    pub fn rate(&self, rho: f64) -> f64 {
        -(4.0 * self.lambda1 / rho + 2.0 * self.lambda2)
    }

    /// Time needed to shrink from radius `r` to a point.
    fn time_to_extinction(&self, r: f64) -> f64 {
        let (l1, l2) = (self.lambda1, self.lambda2);
        if l2 == 0.0 {
            return r * r / (8.0 * l1);
        }
        if l1 == 0.0 {
            return r / (2.0 * l2);
        }
        // ∫₀^r s ds/(4λ₁ + 2λ₂s) = r/(2λ₂) − (λ₁/λ₂²)·ln(1 + λ₂r/(2λ₁)).
        let x = l2 * r / (2.0 * l1);
        if x.abs() < 1e-3 {
            // Series in x avoids the cancellation between the two terms.
            let mut sum = 0.0;
            let mut term = -x;
            for n in 2..12 {
                term *= -x;
                sum += term / n as f64;
            }
            // sum = x − ln(1 + x).
            l1 / (l2 * l2) * sum
        } else {
            r / (2.0 * l2) - l1 / (l2 * l2) * x.ln_1p()
        }
    }

    /// `ρ(t)` by bisection on the exact time-to-extinction relation.
    pub fn radius(&self, t: f64) -> Result<f64, OracleError> {
        if !(t >= 0.0) {
            return Err(OracleError::InvalidParameters(format!("negative time {t}")));
        }
        if t >= self.extinction_time {
            return Err(OracleError::PastExtinction {
                t,
                extinction: self.extinction_time,
            });
        }
        if t == 0.0 {
            return Ok(self.rho0);
        }
        if self.lambda2 == 0.0 {
            return Ok((self.rho0 * self.rho0 - 8.0 * self.lambda1 * t).sqrt());
        }
        let remaining = self.extinction_time - t;
        let (mut lo, mut hi) = (0.0, self.rho0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.time_to_extinction(mid) < remaining {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * self.rho0 {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Independent route: adaptive-free classical RK4 in time with `steps`
    /// uniform steps (used to cross-check [`Self::radius`]).
    pub fn radius_rk4(&self, t: f64, steps: usize) -> f64 {
        let h = t / steps as f64;
        let mut rho = self.rho0;
        for _ in 0..steps {
            let k1 = self.rate(rho);
            let k2 = self.rate(rho + 0.5 * h * k1);
            let k3 = self.rate(rho + 0.5 * h * k2);
            let k4 = self.rate(rho + h * k3);
            rho += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        rho
    }

    pub fn area(&self, t: f64) -> Result<f64, OracleError> {
        self.radius(t).map(|r| 4.0 * PI * r * r)
    }
}

pub fn sphere_radius(rho0: f64, lambda1: f64, lambda2: f64, t: f64) -> Result<f64, OracleError> {
    SphereTrajectory::new(rho0, lambda1, lambda2)?.radius(t)
}

pub fn extinction_time(rho0: f64, lambda1: f64, lambda2: f64) -> Result<f64, OracleError> {
    if ![rho0, lambda1, lambda2].iter().all(|x| x.is_finite()) || !(rho0 > 0.0) {
        return Err(OracleError::InvalidParameters(format!(
            "need finite parameters and rho0 > 0 (rho0 = {rho0}, lambda1 = {lambda1}, lambda2 = {lambda2})"
        )));
    }
    let no_extinction = OracleError::NoExtinction { rho0, lambda1, lambda2 };
    if lambda1 < 0.0 || (lambda1 == 0.0 && lambda2 <= 0.0) {
        return Err(no_extinction);
    }
    // λ₂ < 0 only shrinks when the sphere starts inside the stationary radius.
    if lambda2 < 0.0 && rho0 >= -2.0 * lambda1 / lambda2 {
        return Err(no_extinction);
    }
    let probe = SphereTrajectory {
        rho0,
        lambda1,
        lambda2,
        extinction_time: 0.0,
    };
    Ok(probe.time_to_extinction(rho0))
}

pub fn theorem_bound(energy_f0: f64, lambda1: f64) -> Result<f64, OracleError> {
    if !(lambda1 > 0.0) {
        return Err(OracleError::InvalidParameters(format!("theorem bound needs lambda1 > 0, got {lambda1}")));
    }
    if !(energy_f0 >= 0.0) {
        return Err(OracleError::InvalidParameters(format!("energy must be non-negative, got {energy_f0}")));
    }
    Ok(energy_f0 / (4.0 * lambda1 * lambda1 * PI) + 1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct SmallnessReport {
    pub sobolev_constant: f64,
    /// `λ₁³/(4λ₂²)`; `None` when `λ₂ = 0`.
    pub lambda2_cap: Option<f64>,
    /// `(1/(32C_S²))·min{1, 1/(2c₃)}`; `None` without a supplied `c₃`.
    pub c3_cap: Option<f64>,
    pub c3: Option<f64>,
}

impl SmallnessReport {
    pub fn effective_cap(&self) -> Option<f64> {
        match (self.lambda2_cap, self.c3_cap) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

pub fn smallness_constants(lambda1: f64, lambda2: f64, c3_override: Option<f64>) -> Result<SmallnessReport, OracleError> {
    if !(lambda1 > 0.0) || !lambda2.is_finite() {
        return Err(OracleError::InvalidParameters(format!(
            "smallness constants need lambda1 > 0 and finite lambda2 (got {lambda1}, {lambda2})"
        )));
    }
    if let Some(c3) = c3_override {
        if !(c3 > 0.0) || !c3.is_finite() {
            return Err(OracleError::InvalidParameters(format!("c3 must be positive, got {c3}")));
        }
    }
    let cs = michael_simon_constant();
    Ok(SmallnessReport {
        sobolev_constant: cs,
        lambda2_cap: (lambda2 != 0.0).then(|| lambda1.powi(3) / (4.0 * lambda2 * lambda2)),
        c3_cap: c3_override.map(|c3| (1.0 / (32.0 * cs * cs)) * 1f64.min(1.0 / (2.0 * c3))),
        c3: c3_override,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_radius() {
        let r = sphere_radius(1.0, 1.0, 0.0, 0.0625).unwrap();
        assert!((r - 0.5f64.sqrt()).abs() < 1e-14);
        assert_eq!(sphere_radius(1.0, 1.0, 1.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn extinction_values() {
        assert!((extinction_time(1.0, 0.5, 0.0).unwrap() - 0.25).abs() < 1e-15);
        assert!((extinction_time(2.0, 1.0, 0.0).unwrap() - 0.5).abs() < 1e-15);
        let t = extinction_time(1.0, 1.0, 1.0).unwrap();
        assert!((t - (0.5 - 1.5f64.ln())).abs() < 1e-15);
        assert!((t - 0.0945349).abs() < 1e-7);
        assert!((extinction_time(1.0, 0.0, 2.0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn extinction_by_quadrature() {
        // Composite Simpson on ∫₀^ρ₀ r dr/(4λ₁ + 2λ₂ r).
        for (r0, l1, l2) in [(1.0, 1.0, 1.0), (2.0, 0.5, 1.0), (0.5, 2.0, 1e-4), (1.0, 1.0, -1.0)] {
            let n = 2000;
            let h = r0 / n as f64;
            let f = |r: f64| r / (4.0 * l1 + 2.0 * l2 * r);
            let mut s = f(0.0) + f(r0);
            for i in 1..n {
                s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            let q = s * h / 3.0;
            let t = extinction_time(r0, l1, l2).unwrap();
            assert!((t - q).abs() < 1e-12 * q, "{r0} {l1} {l2}: {t} vs {q}");
        }
    }

    #[test]
    fn series_branch_is_continuous() {
        let l1 = 1.0;
        for x in [0.9e-3, 1.1e-3] {
            let l2 = 2.0 * l1 * x;
            let t = extinction_time(1.0, l1, l2).unwrap();
            let n = 4000;
            let h = 1.0 / n as f64;
            let f = |r: f64| r / (4.0 * l1 + 2.0 * l2 * r);
            let mut s = f(0.0) + f(1.0);
            for i in 1..n {
                s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            assert!((t - s * h / 3.0).abs() < 1e-13);
        }
    }

    #[test]
    fn no_extinction_errors() {
        assert!(matches!(extinction_time(1.0, 0.0, 0.0), Err(OracleError::NoExtinction { .. })));
        assert!(matches!(extinction_time(1.0, -1.0, -1.0), Err(OracleError::NoExtinction { .. })));
        assert!(matches!(extinction_time(1.0, 1.0, -2.0), Err(OracleError::NoExtinction { .. })));
        assert!(extinction_time(0.0, 1.0, 0.0).is_err());
        let s = SphereTrajectory::new(1.0, 1.0, 0.0).unwrap();
        assert!(matches!(s.radius(0.125), Err(OracleError::PastExtinction { .. })));
    }

    #[test]
    fn bisection_matches_rk4_on_grid() {
        for l1 in [0.5, 1.0, 2.0] {
            for l2 in [0.0, 1.0] {
                for r0 in [0.5, 1.0, 2.0] {
                    let s = SphereTrajectory::new(r0, l1, l2).unwrap();
                    let mut prev = f64::INFINITY;
                    for frac in [0.0, 0.2, 0.4, 0.6, 0.8] {
                        let t = frac * s.extinction_time;
                        let r = s.radius(t).unwrap();
                        assert!(r < prev);
                        prev = r;
                        let rk = s.radius_rk4(t, 4000);
                        assert!((r - rk).abs() < 1e-8, "{l1} {l2} {r0} t={t}: {r} vs {rk}");
                        if l2 == 0.0 {
                            assert!((r * r + 8.0 * l1 * t - r0 * r0).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn bounds() {
        assert!((theorem_bound(8.0 * PI, 1.0).unwrap() - 3.0).abs() < 1e-15);
        assert!((theorem_bound(20.0 * PI, 2.0).unwrap() - 2.25).abs() < 1e-15);
        assert_eq!(theorem_bound(0.0, 1.0).unwrap(), 1.0);
        assert!(theorem_bound(1.0, 0.0).is_err());
        for l1 in [0.5, 1.0, 2.0] {
            for r0 in [0.5, 1.0, 2.0] {
                let e = 4.0 * PI + 4.0 * PI * l1 * r0 * r0;
                assert!(extinction_time(r0, l1, 0.0).unwrap() < theorem_bound(e, l1).unwrap());
            }
        }
    }

    #[test]
    fn smallness() {
        let r = smallness_constants(1.0, 2.0, None).unwrap();
        assert!((r.sobolev_constant - 36.108).abs() < 1e-3);
        assert!((r.lambda2_cap.unwrap() - 1.0 / 16.0).abs() < 1e-15);
        assert!(r.c3_cap.is_none());
        assert_eq!(smallness_constants(1.0, 0.0, None).unwrap().lambda2_cap, None);
        let r = smallness_constants(1.0, 0.0, Some(2.0)).unwrap();
        let cs = 64.0 / PI.sqrt();
        assert!((r.c3_cap.unwrap() - 0.25 / (32.0 * cs * cs)).abs() < 1e-18);
        assert!(smallness_constants(0.0, 0.0, None).is_err());
    }
}
