//! Run configuration: one TOML file per experiment. Unknown keys are
//! rejected so a typo never silently falls back to a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ulamot::systems::DoubleGyreParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub domain: BoxGrid,
    pub controls: BoxGrid,
    pub horizon: usize,
    /// `"quadratic"` for `|x|^2 + |u|^2`, or `"zero"`.
    #[serde(default = "default_cost")]
    pub cost: String,
    #[serde(default)]
    pub cost_scaling: CostScalingConfig,
    /// Quadrature points per axis and cell.
    #[serde(default = "default_quadrature")]
    pub quadrature: usize,
    pub initial: MeasureSpec,
    pub target: MeasureSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    /// Output directory, relative to the config file.
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub rollout: RolloutConfig,
}

fn default_cost() -> String {
    "quadratic".into()
}

fn default_quadrature() -> usize {
    8
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Translation {
        #[serde(default = "yes")]
        clamp: bool,
    },
    DoubleIntegrator {
        #[serde(default = "yes")]
        clamp: bool,
    },
    GyreUnicycle {
        #[serde(default = "yes")]
        clamp: bool,
        #[serde(default)]
        params: DoubleGyreParams,
    },
}

fn yes() -> bool {
    true
}

/// Axis-aligned box with a per-axis count (cells for the domain, grid
/// points for the controls).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxGrid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostScalingConfig {
    #[default]
    Integral,
    Average,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    Dirac {
        point: Vec<f64>,
    },
    Uniform {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    GaussianMixture {
        centers: Vec<Vec<f64>>,
        weights: Vec<f64>,
        sigmas: Vec<f64>,
        /// Density is cut to zero beyond this many standard deviations of
        /// each component. Omit for untruncated densities.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        truncation: Option<f64>,
    },
    /// Per-cell weights, inline or from a `cell,weight` CSV file relative
    /// to the config file.
    Explicit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        file: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Cells with less mass than this carry no feedback law.
    pub eps_mass: f64,
    /// Support threshold of the reachability check.
    pub support: f64,
    /// Pivot and infeasibility tolerance of the LP backend.
    pub lp: f64,
    /// Maximum 1-norm gap between propagated and LP measures, per step.
    pub propagate: f64,
    /// Maximum gap between the propagated cost and the LP objective.
    pub cost: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eps_mass: 1e-12,
            support: 1e-12,
            lp: 1e-9,
            propagate: 1e-9,
            cost: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutConfig {
    pub agents: usize,
    pub sampler: SamplerConfig,
    /// Start point for the `point` sampler.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    /// Number of full agent paths written next to the histogram.
    pub keep_paths: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            agents: 100_000,
            sampler: SamplerConfig::CellUniform,
            point: None,
            keep_paths: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerConfig {
    /// Initial cell drawn from the initial measure, position uniform in it.
    #[default]
    CellUniform,
    Point,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Checks that can be made without building any grid.
    pub fn validate(&self) -> Result<(), String> {
        if self.horizon == 0 {
            return Err("horizon must be at least 1".into());
        }
        if self.quadrature == 0 {
            return Err("quadrature must be at least 1".into());
        }
        match self.cost.as_str() {
            "quadratic" | "zero" => {}
            other => return Err(format!("unknown cost function {other:?} (expected \"quadratic\" or \"zero\")")),
        }
        if let SystemConfig::GyreUnicycle { params, .. } = &self.system {
            params.validate().map_err(|e| e.to_string())?;
        }
        for (name, v) in [
            ("eps_mass", self.tolerances.eps_mass),
            ("support", self.tolerances.support),
            ("lp", self.tolerances.lp),
            ("propagate", self.tolerances.propagate),
            ("cost", self.tolerances.cost),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(format!("tolerance {name} must be a nonnegative number, got {v}"));
            }
        }
        if self.rollout.agents == 0 {
            return Err("rollout.agents must be at least 1".into());
        }
        if self.rollout.sampler == SamplerConfig::Point && self.rollout.point.is_none() {
            return Err("rollout.sampler = \"point\" needs rollout.point".into());
        }
        Ok(())
    }

    /// Canonical text form; hashing it identifies the effective run.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
