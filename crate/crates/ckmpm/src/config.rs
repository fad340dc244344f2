//! TOML scene description.
//!
//! ```toml
//! name = "jelly-cube"
//!
//! [domain]
//! resolution = [128, 128, 128]
//! dx = 0.0078125
//! walls = { kind = "sticky", cells = 4 }   # optional box of domain walls
//!
//! [time]
//! fps = 24
//! frames = 48
//! cfl = 0.5
//!
//! [solver]
//! transfer = "apic"       # pic | apic | mls
//! kernel = "compact"      # compact | quadratic
//! gravity = [0, -9.8, 0]
//!
//! [[materials]]
//! name = "jelly"
//! model = "fixed_corotated"
//! youngs = 1e5
//! poisson = 0.4
//! density = 1000
//!
//! [[shapes]]
//! material = "jelly"
//! ppc = 8
//! geometry = { type = "box", min = [0.46, 0.16, 0.46], max = [0.54, 0.23, 0.54] }
//! velocity = { type = "uniform", value = [0, 0, 0] }
//!
//! [[boundaries]]
//! kind = "sticky"
//! region = { type = "half_space", point = [0, 0.03, 0], normal = [0, 1, 0] }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

type V3 = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default)]
    pub name: String,
    pub domain: DomainConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub materials: Vec<MaterialConfig>,
    pub shapes: Vec<ShapeConfig>,
    #[serde(default)]
    pub boundaries: Vec<BoundaryConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub resolution: [usize; 3],
    pub dx: f64,
    /// Six axis-aligned walls `cells` cells inside each domain face.
    #[serde(default)]
    pub walls: Option<WallConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallConfig {
    pub kind: BoundaryKindName,
    #[serde(default = "default_wall_cells")]
    pub cells: f64,
}

fn default_wall_cells() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub fps: f64,
    pub frames: u64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default)]
    pub max_dt: Option<f64>,
}

fn default_cfl() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TransferName {
    Pic,
    #[default]
    Apic,
    Mls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum KernelName {
    #[default]
    Compact,
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub transfer: TransferName,
    #[serde(default)]
    pub kernel: KernelName,
    #[serde(default)]
    pub gravity: V3,
    #[serde(default = "yes")]
    pub deterministic: bool,
}

fn yes() -> bool {
    true
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { transfer: TransferName::default(), kernel: KernelName::default(), gravity: [0.0; 3], deterministic: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialConfig {
    pub name: String,
    pub density: f64,
    #[serde(default)]
    pub clamp_singular_values: bool,
    #[serde(flatten)]
    pub model: ModelConfig,
}

/// Constitutive model, selected by the `model` key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelConfig {
    FixedCorotated {
        youngs: f64,
        poisson: f64,
    },
    JFluid {
        bulk: f64,
        gamma: f64,
        #[serde(default)]
        viscosity: f64,
    },
    DruckerPrager {
        youngs: f64,
        poisson: f64,
        friction_angle: f64,
    },
    /// Reserved: parses, then fails validation.
    Nacc {
        #[serde(flatten)]
        params: BTreeMap<String, toml::Value>,
    },
    /// Reserved: parses, then fails validation.
    VonMises {
        #[serde(flatten)]
        params: BTreeMap<String, toml::Value>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeConfig {
    pub geometry: GeometryConfig,
    pub material: String,
    #[serde(default = "default_ppc")]
    pub ppc: usize,
    /// Overrides the material's density for the sampled mass.
    #[serde(default)]
    pub density: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub velocity: VelocityConfig,
}

fn default_ppc() -> usize {
    8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisName {
    X,
    Y,
    Z,
}

impl AxisName {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryConfig {
    Box {
        min: V3,
        max: V3,
    },
    Sphere {
        center: V3,
        radius: f64,
    },
    /// `length` is the full extent along `axis`; `inner_radius > 0` makes it hollow.
    Cylinder {
        center: V3,
        axis: AxisName,
        radius: f64,
        #[serde(default)]
        inner_radius: f64,
        length: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocityConfig {
    Uniform { value: V3 },
    Spin { angular: V3, center: V3 },
    /// x-velocity `tip_speed · Δy / half_length` about `center`.
    Rod { center: V3, half_length: f64, tip_speed: f64 },
}

impl Default for VelocityConfig {
    fn default() -> Self {
        VelocityConfig::Uniform { value: [0.0; 3] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKindName {
    Sticky,
    Slip,
    Separate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub kind: BoundaryKindName,
    pub region: RegionConfig,
    #[serde(default)]
    pub motion: Option<MotionConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionConfig {
    HalfSpace {
        point: V3,
        normal: V3,
    },
    Box {
        min: V3,
        max: V3,
        #[serde(default)]
        normal: Option<V3>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionConfig {
    #[serde(default)]
    pub linear: V3,
    #[serde(default)]
    pub angular: V3,
    #[serde(default)]
    pub center: V3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotMode {
    #[default]
    Text,
    Binary,
    Both,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub snapshots: SnapshotMode,
    /// Write a snapshot every this many frames.
    #[serde(default = "one")]
    pub every: u64,
}

fn one() -> u64 {
    1
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { snapshots: SnapshotMode::Text, every: 1 }
    }
}

impl SceneConfig {
    /// Parses and validates.
    pub fn parse(text: &str) -> AppResult<Self> {
        let cfg: SceneConfig = toml::from_str(text).map_err(|e| AppError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            AppError::Config(m) => AppError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene configs always serialize")
    }

    /// Checks everything that does not need particles. Messages name the
    /// offending key.
    pub fn validate(&self) -> AppResult<()> {
        let bad = |key: String, why: &str| Err(AppError::config(format!("{key}: {why}")));
        if !(self.domain.dx > 0.0 && self.domain.dx.is_finite()) {
            return bad("domain.dx".into(), "must be positive");
        }
        if self.domain.resolution.iter().any(|&n| n < 8) {
            return bad("domain.resolution".into(), "every axis needs at least 8 cells");
        }
        if let Some(w) = &self.domain.walls {
            if !(w.cells >= 0.0) {
                return bad("domain.walls.cells".into(), "must be non-negative");
            }
        }
        if !(self.time.fps > 0.0 && self.time.fps.is_finite()) {
            return bad("time.fps".into(), "must be positive");
        }
        if !(self.time.cfl > 0.0 && self.time.cfl <= 1.0) {
            return bad("time.cfl".into(), "must lie in (0, 1]");
        }
        if let Some(dt) = self.time.max_dt {
            if !(dt > 0.0) {
                return bad("time.max_dt".into(), "must be positive");
            }
        }
        if !self.solver.gravity.iter().all(|g| g.is_finite()) {
            return bad("solver.gravity".into(), "must be finite");
        }
        if self.output.every == 0 {
            return bad("output.every".into(), "must be at least 1");
        }
        if self.materials.is_empty() {
            return bad("materials".into(), "at least one material is required");
        }
        for (i, m) in self.materials.iter().enumerate() {
            let key = format!("materials[{i}]");
            if self.materials[..i].iter().any(|o| o.name == m.name) {
                return bad(format!("{key}.name"), "duplicate material name");
            }
            crate::scene::material(m).map_err(|e| match e {
                AppError::Config(msg) => AppError::Config(format!("{key}.{msg}")),
                other => other,
            })?;
        }
        if self.shapes.is_empty() {
            return bad("shapes".into(), "at least one shape is required");
        }
        for (i, s) in self.shapes.iter().enumerate() {
            let key = format!("shapes[{i}]");
            if !self.materials.iter().any(|m| m.name == s.material) {
                return bad(format!("{key}.material"), "unknown material name");
            }
            if !matches!(s.ppc, 8 | 16 | 27) {
                return bad(format!("{key}.ppc"), "must be 8, 16 or 27");
            }
            if let Some(d) = s.density {
                if !(d > 0.0 && d.is_finite()) {
                    return bad(format!("{key}.density"), "must be positive");
                }
            }
            crate::scene::shape(&s.geometry)
                .validate()
                .map_err(|e| AppError::config(format!("{key}.geometry: {e}")))?;
        }
        for (i, b) in self.boundaries.iter().enumerate() {
            crate::scene::boundary(b)
                .validate()
                .map_err(|e| AppError::config(format!("boundaries[{i}]: {e}")))?;
        }
        Ok(())
    }
}
