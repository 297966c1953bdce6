//! The TOML run configuration. Unknown keys are rejected everywhere.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use skewmem::analysis::{QuadratureConfig, TestFunction};
use skewmem::weights::{AnalyticFamily, BuiltinDensity, DensityModel, Membrane, MembraneSet, WeightFamily, WeightField};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "three")]
    pub dim: usize,
    pub membranes: MembraneSpec,
    #[serde(default = "constant_density")]
    pub density: BuiltinDensity,
    #[serde(default)]
    pub simulation: Simulation,
    #[serde(default)]
    pub tests: Tests,
    #[serde(default)]
    pub analysis: Analysis,
}

fn three() -> usize {
    3
}

fn constant_density() -> BuiltinDensity {
    BuiltinDensity::Constant { value: 1.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MembraneSpec {
    Explicit {
        m0: f64,
        #[serde(default)]
        inner: Vec<Membrane>,
        gamma_top: f64,
        #[serde(default)]
        outer: Vec<Membrane>,
        gammabar_bottom: f64,
        #[serde(default)]
        tolerance: f64,
    },
    Analytic {
        m0: f64,
        inner: WeightFamily,
        outer: WeightFamily,
        #[serde(default = "k_max")]
        k_max: i64,
        #[serde(default = "radius_ratio")]
        radius_ratio: f64,
        tolerance: f64,
    },
}

fn k_max() -> i64 {
    60
}

fn radius_ratio() -> f64 {
    2.0
}

/// Which simulator `simulate` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    #[default]
    Full,
    Radial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Simulation {
    pub geometry: Geometry,
    pub horizon: f64,
    pub step: f64,
    pub paths: usize,
    pub seed: u64,
    /// Start point; a single radius for the radial geometry.
    pub start: Vec<f64>,
    pub shell_eps: f64,
    pub record_every: usize,
    pub workers: Option<usize>,
    /// Extra local-time levels besides the active membranes.
    pub track_levels: Vec<f64>,
    pub occupation_bands: Vec<(f64, f64)>,
}

impl Default for Simulation {
    fn default() -> Self {
        Self {
            geometry: Geometry::Full,
            horizon: 1.0,
            step: 1e-3,
            paths: 100,
            seed: 1,
            start: vec![],
            shell_eps: 0.02,
            record_every: 10,
            workers: None,
            track_levels: vec![],
            occupation_bands: vec![],
        }
    }
}

/// Parameters of the statistical tests. Seeds come from `simulation.seed`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tests {
    pub crossing: CrossingParams,
    pub radial: RadialParams,
    pub reversibility: ReversibilityParams,
    pub occupation: OccupationParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossingParams {
    /// Membrane radius; the first active membrane when absent.
    pub membrane: Option<f64>,
    pub eps: f64,
    pub step: f64,
    pub horizon: f64,
    pub paths: usize,
    pub k: f64,
}

impl Default for CrossingParams {
    fn default() -> Self {
        Self {
            membrane: None,
            eps: 0.05,
            step: 1e-5,
            horizon: 1.0,
            paths: 10_000,
            k: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadialParams {
    pub start: Vec<f64>,
    pub step: f64,
    pub horizon: f64,
    pub paths: usize,
    pub p_threshold: f64,
}

impl Default for RadialParams {
    fn default() -> Self {
        Self {
            start: vec![],
            step: 1e-3,
            horizon: 1.0,
            paths: 2_000,
            p_threshold: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReversibilityParams {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub bandwidth: Option<f64>,
    pub step: f64,
    pub horizon: f64,
    pub paths: usize,
    pub tol: f64,
}

impl Default for ReversibilityParams {
    fn default() -> Self {
        Self {
            x: vec![],
            y: vec![],
            bandwidth: None,
            step: 1e-2,
            horizon: 0.5,
            paths: 50_000,
            tol: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OccupationParams {
    pub inner_band: (f64, f64),
    pub outer_band: (f64, f64),
    pub start: Vec<f64>,
    pub step: f64,
    pub horizon: f64,
    pub paths: usize,
    pub tol: f64,
}

impl Default for OccupationParams {
    fn default() -> Self {
        Self {
            inner_band: (0.0, 1.0),
            outer_band: (1.0, 2.0),
            start: vec![],
            step: 1e-2,
            horizon: 100.0,
            paths: 200,
            tol: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Analysis {
    pub quadrature: QuadratureConfig,
    /// Pairs (f, g) for the integration by parts check.
    pub pairs: Vec<(TestFunction, TestFunction)>,
    /// Functions and ball radii for the trace inequality.
    pub trace: Vec<(TestFunction, f64)>,
    pub growth_r_max: f64,
    pub growth_per_decade: usize,
    /// Radii for the weight lower bound in `validate`.
    pub probe_radii: Vec<f64>,
    /// Balls (center, radius) for the sampled A2 ratio in `validate`.
    pub a2_balls: Vec<(Vec<f64>, f64)>,
}

impl Default for Analysis {
    fn default() -> Self {
        Self {
            quadrature: QuadratureConfig::default(),
            pairs: vec![],
            trace: vec![],
            growth_r_max: 1e3,
            growth_per_decade: 10,
            probe_radii: vec![0.5, 1.0, 2.0, 10.0],
            a2_balls: vec![],
        }
    }
}

/// Command-line values that replace config entries before hashing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub step: Option<f64>,
    pub horizon: Option<f64>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Structural checks that serde cannot express, then the model constructors.
    fn check(&self) -> Result<(), CliError> {
        let s = &self.simulation;
        if !s.start.is_empty() && s.geometry == Geometry::Full && s.start.len() != self.dim {
            return Err(CliError::Validation(format!(
                "simulation.start has {} coordinates, dim is {}",
                s.start.len(),
                self.dim
            )));
        }
        self.weight_field()?;
        self.canonical()?;
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) {
        let s = &mut self.simulation;
        let t = &mut self.tests;
        if let Some(v) = o.seed {
            s.seed = v;
        }
        if let Some(v) = o.paths {
            s.paths = v;
            t.crossing.paths = v;
            t.radial.paths = v;
            t.reversibility.paths = v;
            t.occupation.paths = v;
        }
        if let Some(v) = o.step {
            s.step = v;
            t.crossing.step = v;
            t.radial.step = v;
            t.reversibility.step = v;
            t.occupation.step = v;
        }
        if let Some(v) = o.horizon {
            s.horizon = v;
            t.crossing.horizon = v;
            t.radial.horizon = v;
            t.reversibility.horizon = v;
            t.occupation.horizon = v;
        }
    }

    pub fn membranes(&self) -> Result<MembraneSet, CliError> {
        let ms = match self.membranes.clone() {
            MembraneSpec::Explicit {
                m0,
                inner,
                gamma_top,
                outer,
                gammabar_bottom,
                tolerance,
            } => MembraneSet::explicit(m0, inner, gamma_top, outer, gammabar_bottom, tolerance)?,
            MembraneSpec::Analytic {
                m0,
                inner,
                outer,
                k_max,
                radius_ratio,
                tolerance,
            } => AnalyticFamily {
                m0,
                inner,
                outer,
                k_max,
                radius_ratio,
            }
            .build(tolerance)?,
        };
        Ok(ms)
    }

    pub fn weight_field(&self) -> Result<WeightField, CliError> {
        let density = DensityModel::builtin(self.dim, self.density)?;
        Ok(WeightField::new(self.membranes()?, density))
    }

    /// Canonical TOML text: the parsed config serialized with every default filled in.
    pub fn canonical(&self) -> Result<String, CliError> {
        if self.simulation.seed > i64::MAX as u64 {
            return Err(CliError::Validation(format!(
                "seed {} does not fit in a TOML integer",
                self.simulation.seed
            )));
        }
        toml::to_string(self).map_err(|e| CliError::Validation(format!("config cannot be serialized: {e}")))
    }

    /// Lowercase hex SHA-256 of the canonical text.
    pub fn hash(&self) -> Result<String, CliError> {
        Ok(hex::encode(Sha256::digest(self.canonical()?.as_bytes())))
    }

    /// Default start point: on the first axis at half the first membrane radius.
    pub fn default_start(&self) -> Vec<f64> {
        let r = match &self.membranes {
            MembraneSpec::Explicit { m0, .. } | MembraneSpec::Analytic { m0, .. } => *m0,
        };
        let mut x = vec![0.0; self.dim];
        x[0] = 0.5 * r;
        x
    }
}
