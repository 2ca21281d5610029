//! Scene configuration files.
//!
//! The format is TOML: tables for the layer stack, incidence, FMM, quadrature,
//! GMRES and output settings, and an array of `[[scatterers]]` tables.
//! Incidence is either a point source (manufactured-solution mode), explicit
//! wavevector components `kx`, `ky`, or an angle `angle` from the downward
//! normal with `(kx, ky) = k0 (sin angle, cos angle)`. The incident wave is
//! `exp(i(kx x - ky y))`. When both the angle and the components are given
//! the components are used.

use std::fmt;
use std::path::Path;

use helmlayer::discretization::Excitation;
use helmlayer::fmm::FmmConfig;
use helmlayer::geometry::{make_polygon, make_star, BoundaryCurve};
use helmlayer::layered_media::{LayerStack, PlaneWaveField};
use helmlayer::solver::{GmresConfig, Scene};
use helmlayer::sommerfeld::RuleConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub stack: StackConfig,
    #[serde(default)]
    pub scatterers: Vec<ScattererConfig>,
    pub incidence: IncidenceConfig,
    #[serde(default)]
    pub fmm: FmmSection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub gmres: GmresSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackConfig {
    /// Interface depths; interface `m` sits at `y = -depths[m]`.
    pub depths: Vec<f64>,
    pub k: Vec<f64>,
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum ScattererConfig {
    /// `r(t) = b + a sin(lobes (t - theta0))` about `center`.
    Star { center: [f64; 2], a: f64, b: f64, lobes: f64, #[serde(default)] theta0: f64, panels: usize },
    Polygon { vertices: Vec<[f64; 2]>, panels: usize },
}

impl ScattererConfig {
    pub fn panels(&self) -> usize {
        match self {
            ScattererConfig::Star { panels, .. } | ScattererConfig::Polygon { panels, .. } => *panels,
        }
    }

    pub fn set_panels(&mut self, n: usize) {
        match self {
            ScattererConfig::Star { panels, .. } | ScattererConfig::Polygon { panels, .. } => *panels = n,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncidenceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ky: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_source: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FmmSection {
    pub p: usize,
    pub leaf_size: usize,
    pub theta: f64,
    pub deterministic: bool,
}

impl Default for FmmSection {
    fn default() -> Self {
        let d = FmmConfig::default();
        FmmSection { p: d.p, leaf_size: d.leaf_size, theta: d.theta, deterministic: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSection {
    pub tol: f64,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        QuadratureSection { tol: RuleConfig::default().tol }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GmresSection {
    pub tol: f64,
    pub max_iter: usize,
    /// 0 runs without restarts.
    pub restart: usize,
    pub precondition: bool,
}

impl Default for GmresSection {
    fn default() -> Self {
        let d = GmresConfig::default();
        GmresSection { tol: d.tol, max_iter: d.max_iter, restart: 0, precondition: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// `[xmin, xmax]` of the field grid.
    pub x: [f64; 2],
    pub y: [f64; 2],
    /// Grid points along x and y; 0 skips the field.
    pub nx: usize,
    pub ny: usize,
    pub report: String,
    pub field: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            x: [-4.0, 4.0],
            y: [-4.0, 4.0],
            nx: 0,
            ny: 0,
            report: "report.json".into(),
            field: "field.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io(String),
    Parse(String),
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "cannot read config: {e}"),
            ConfigError::Parse(e) => write!(f, "cannot parse config: {e}"),
            ConfigError::Invalid(e) => write!(f, "invalid config: {e}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn layer_stack(&self) -> Result<LayerStack, ConfigError> {
        let s = &self.stack;
        LayerStack::new(s.depths.clone(), s.k.clone(), s.eta.clone()).map_err(|e| ConfigError::Invalid(format!("layer stack: {e}")))
    }

    pub fn rule_config(&self) -> RuleConfig {
        RuleConfig { tol: self.quadrature.tol, ..RuleConfig::default() }
    }

    pub fn fmm_config(&self) -> FmmConfig {
        FmmConfig { p: self.fmm.p, leaf_size: self.fmm.leaf_size, theta: self.fmm.theta, ..FmmConfig::default() }
    }

    pub fn gmres_config(&self) -> GmresConfig {
        let g = &self.gmres;
        GmresConfig { tol: g.tol, max_iter: g.max_iter, restart: (g.restart > 0).then_some(g.restart) }
    }

    pub fn curves(&self) -> Result<Vec<BoundaryCurve>, ConfigError> {
        self.scatterers
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let c = match s {
                    ScattererConfig::Star { center, a, b, lobes, theta0, .. } => make_star(*center, *a, *b, *lobes, *theta0),
                    ScattererConfig::Polygon { vertices, .. } => make_polygon(vertices.clone()),
                };
                c.map_err(|e| ConfigError::Invalid(format!("scatterer {i}: {e}")))
            })
            .collect()
    }

    pub fn excitation(&self, stack: &LayerStack) -> Result<Excitation, ConfigError> {
        let inc = &self.incidence;
        let wave = inc.angle.is_some() || inc.kx.is_some() || inc.ky.is_some();
        if let Some(src) = inc.point_source {
            if wave {
                return invalid("incidence: point_source excludes a plane wave");
            }
            return Ok(Excitation::PointSource(src));
        }
        let field = match (inc.kx, inc.ky, inc.angle) {
            (Some(kx), Some(ky), _) => PlaneWaveField::new(stack, kx, ky),
            (None, None, Some(a)) => PlaneWaveField::from_angle(stack, a),
            (None, None, None) => return invalid("incidence: give angle, kx and ky, or point_source"),
            _ => return invalid("incidence: kx and ky go together"),
        };
        field.map(Excitation::PlaneWave).map_err(|e| ConfigError::Invalid(format!("incidence: {e}")))
    }

    /// Checks that do not need the numerics.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.fmm.p == 0 || self.fmm.leaf_size == 0 {
            return invalid("fmm: p and leaf_size must be positive");
        }
        if !(self.gmres.tol > 0.0) || self.gmres.max_iter == 0 {
            return invalid("gmres: tol and max_iter must be positive");
        }
        if !(self.quadrature.tol > 0.0) {
            return invalid("quadrature: tol must be positive");
        }
        if self.scatterers.iter().any(|s| s.panels() < 3) {
            return invalid("scatterers: at least 3 panels each");
        }
        let o = &self.output;
        if (o.nx > 0 || o.ny > 0) && (o.nx < 2 || o.ny < 2 || !(o.x[1] > o.x[0]) || !(o.y[1] > o.y[0])) {
            return invalid("output: grid needs nx, ny >= 2 and increasing bounds");
        }
        Ok(())
    }

    pub fn scene(&self) -> Result<Scene, ConfigError> {
        self.validate()?;
        let stack = self.layer_stack()?;
        Ok(Scene {
            excitation: self.excitation(&stack)?,
            curves: self.curves()?,
            panels: self.scatterers.iter().map(|s| s.panels()).collect(),
            rule: self.rule_config(),
            fmm: self.fmm_config(),
            gmres: self.gmres_config(),
            precondition: self.gmres.precondition,
            stack,
        })
    }

    /// Copy with about `n` panels in total, split evenly over the scatterers.
    pub fn with_total_panels(&self, n: usize) -> Config {
        let mut c = self.clone();
        let m = c.scatterers.len().max(1);
        for s in c.scatterers.iter_mut() {
            s.set_panels((n / m).max(3));
        }
        c
    }
}
