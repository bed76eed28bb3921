//! Experiment configuration: JSON schema, validation and initial-surface
//! construction.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use helflow::analytic::{AnalyticKind, AnalyticSurface};
use helflow::energy::FlowParams;
use helflow::flow::{RecordSpec, StepPolicy, StopSpec};
use helflow::geometry::vertex_normals;
use helflow::mesh::{load_surface, TriangleSurface};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Environment variable that relocates every run directory.
pub const OUTPUT_ROOT_ENV: &str = "HELFLOW_OUTPUT_ROOT";

/// Largest icosphere level accepted for analytic sphere-like surfaces.
pub const MAX_ICOSPHERE_LEVEL: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSurface {
    /// `resolution` is the icosphere level for sphere-like kinds and the
    /// number of minor-circle segments for the torus.
    Analytic { surface: AnalyticKind, resolution: usize },
    Obj { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub initial: InitialSurface,
    /// Normal jitter of the initial vertices, as a fraction of the mean edge
    /// length, drawn from `seed`.
    #[serde(default)]
    pub perturbation: f64,
    #[serde(default)]
    pub seed: u64,
    pub params: FlowParams,
    #[serde(default)]
    pub policy: StepPolicy,
    #[serde(default)]
    pub stop: StopSpec,
    /// Diagnostics cadence, snapshot cadence and concentration radii.
    #[serde(default)]
    pub record: RecordSpec,
    /// Run directory; relative paths resolve against the output root.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Threshold in the advisory check `W(f₀) < 4π + ε₂`.
    #[serde(default = "default_epsilon2")]
    pub epsilon2: f64,
    /// Number of trailing snapshots used for the blowup report.
    #[serde(default = "default_blowup_snapshots")]
    pub blowup_snapshots: usize,
}

fn default_epsilon2() -> f64 {
    0.1 * 4.0 * PI
}

fn default_blowup_snapshots() -> usize {
    4
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Reads a config file; relative OBJ paths are resolved against the
    /// config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let InitialSurface::Obj { path: obj } = &mut cfg.initial {
            if obj.is_relative() {
                if let Some(dir) = path.parent() {
                    *obj = dir.join(&*obj);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            !self.name.is_empty() && !self.name.contains(['/', '\\']),
            "name must be a non-empty file name, got {:?}",
            self.name
        );
        match &self.initial {
            InitialSurface::Analytic { surface, resolution } => {
                AnalyticSurface::new(*surface)?;
                let torus = matches!(surface, AnalyticKind::Torus { .. });
                if torus {
                    ensure!(*resolution >= 3, "torus resolution must be at least 3");
                } else {
                    ensure!(
                        *resolution <= MAX_ICOSPHERE_LEVEL,
                        "icosphere level {resolution} exceeds {MAX_ICOSPHERE_LEVEL}"
                    );
                }
            }
            InitialSurface::Obj { path } => {
                ensure!(path.is_file(), "initial OBJ {} does not exist", path.display());
            }
        }
        ensure!(
            self.perturbation.is_finite() && (0.0..0.5).contains(&self.perturbation),
            "perturbation {} outside [0, 0.5)",
            self.perturbation
        );
        self.params.validate()?;
        self.policy.validate()?;
        let stop = &self.stop;
        ensure!(
            stop.area_floor > 0.0 && stop.area_floor < 1.0,
            "area_floor {} outside (0, 1)",
            stop.area_floor
        );
        ensure!(stop.t_max > 0.0, "t_max must be positive");
        ensure!(stop.max_steps > 0, "max_steps must be positive");
        ensure!(self.record.every > 0, "record.every must be positive");
        ensure!(
            !self.record.radii.is_empty() && self.record.radii.iter().all(|r| r.is_finite() && *r > 0.0),
            "concentration radii must be positive"
        );
        ensure!(self.epsilon2.is_finite() && self.epsilon2 > 0.0, "epsilon2 must be positive");
        ensure!(self.blowup_snapshots >= 3, "blowup_snapshots must be at least 3");
        Ok(())
    }

    /// Run directory: `$HELFLOW_OUTPUT_ROOT/<output_dir or name>` when the
    /// variable is set (absolute `output_dir` collapses to `name`), otherwise
    /// `output_dir` or `runs/<name>`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir_under(std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).as_deref())
    }

    pub fn output_dir_under(&self, root: Option<&Path>) -> PathBuf {
        match (root, &self.output_dir) {
            (Some(root), Some(dir)) if dir.is_relative() => root.join(dir),
            (Some(root), _) => root.join(&self.name),
            (None, Some(dir)) => dir.clone(),
            (None, None) => Path::new("runs").join(&self.name),
        }
    }

    pub fn build_surface(&self) -> Result<TriangleSurface> {
        let surface = match &self.initial {
            InitialSurface::Analytic { surface, resolution } => {
                AnalyticSurface::new(*surface)?.sample_mesh(*resolution)?
            }
            InitialSurface::Obj { path } => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                load_surface(&text)?
            }
        };
        if self.perturbation == 0.0 {
            return Ok(surface);
        }
        let normals = vertex_normals(&surface)?;
        let amp = self.perturbation * surface.mean_edge_length();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let pos = surface
            .positions()
            .iter()
            .zip(normals.values())
            .map(|(x, n)| x + n * (amp * rng.gen_range(-1.0..=1.0)))
            .collect();
        match surface.with_positions(pos) {
            Ok(s) => Ok(s),
            Err(e) => bail!("perturbed initial surface is invalid: {e}"),
        }
    }

    /// Exact initial radius when the initial surface is an unperturbed
    /// analytic sphere.
    pub fn sphere_radius(&self) -> Option<f64> {
        match self.initial {
            InitialSurface::Analytic {
                surface: AnalyticKind::Sphere { radius },
                ..
            } if self.perturbation == 0.0 => Some(radius),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_config() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
                "name": "unit",
                "initial": {"source": "analytic", "surface": {"kind": "sphere", "radius": 1.0}, "resolution": 2},
                "params": {"lambda1": 1.0, "lambda2": 0.0, "theorem_mode": true}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = sphere_config();
        cfg.validate().unwrap();
        assert_eq!(cfg.policy, StepPolicy::default());
        assert_eq!(cfg.stop, StopSpec::default());
        assert_eq!(cfg.sphere_radius(), Some(1.0));
        assert!((cfg.epsilon2 - 0.4 * PI).abs() < 1e-15);
    }

    #[test]
    fn negative_lambda1_in_theorem_mode_is_rejected() {
        let mut cfg = sphere_config();
        cfg.params.lambda1 = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn missing_obj_is_rejected() {
        let mut cfg = sphere_config();
        cfg.initial = InitialSurface::Obj {
            path: "/nonexistent/surface.obj".into(),
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = sphere_config().to_json().replacen("\"name\"", "\"nmae\": 1, \"name\"", 1);
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn output_root_override() {
        let mut cfg = sphere_config();
        assert_eq!(cfg.output_dir_under(None), Path::new("runs/unit"));
        assert_eq!(cfg.output_dir_under(Some(Path::new("/tmp/x"))), Path::new("/tmp/x/unit"));
        cfg.output_dir = Some("a/b".into());
        assert_eq!(cfg.output_dir_under(Some(Path::new("/r"))), Path::new("/r/a/b"));
        cfg.output_dir = Some("/abs".into());
        assert_eq!(cfg.output_dir_under(None), Path::new("/abs"));
        assert_eq!(cfg.output_dir_under(Some(Path::new("/r"))), Path::new("/r/unit"));
    }

    #[test]
    fn perturbation_is_seeded() {
        let mut cfg = sphere_config();
        cfg.perturbation = 0.1;
        let a = cfg.build_surface().unwrap();
        let b = cfg.build_surface().unwrap();
        assert_eq!(a.positions(), b.positions());
        cfg.seed = 1;
        assert_ne!(cfg.build_surface().unwrap().positions(), a.positions());
        assert_eq!(cfg.sphere_radius(), None);
    }
}
