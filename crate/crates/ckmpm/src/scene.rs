//! Turning a [`SceneConfig`] into a ready-to-step [`Simulation`].

use ckmpm_core::dualgrid::{BoundaryCondition, BoundaryKind, Region, RigidMotion};
use ckmpm_core::kernel::{GridGeometry, TrigMode};
use ckmpm_core::materials::{Constitutive, Material};
use ckmpm_core::sim::{sample_shape, Shape, SimSettings, Simulation, VelocityField};
use ckmpm_core::transfer::{KernelKind, TransferScheme, TransferSettings};
use ckmpm_core::{Error, Vector3};

use crate::config::{
    BoundaryConfig, BoundaryKindName, GeometryConfig, KernelName, MaterialConfig, ModelConfig, RegionConfig,
    SceneConfig, TransferName, VelocityConfig,
};
use crate::error::{AppError, AppResult};

fn v3(a: [f64; 3]) -> Vector3 {
    Vector3::new(a[0], a[1], a[2])
}

/// Command-line adjustments applied on top of a config.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub kernel: Option<KernelName>,
    pub transfer: Option<TransferName>,
    pub deterministic: Option<bool>,
    /// Test hook for the approximate-sine ablation.
    pub trig: Option<TrigMode>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut SceneConfig) {
        if let Some(k) = self.kernel {
            cfg.solver.kernel = k;
        }
        if let Some(t) = self.transfer {
            cfg.solver.transfer = t;
        }
        if let Some(d) = self.deterministic {
            cfg.solver.deterministic = d;
        }
    }
}

pub fn kernel(name: KernelName) -> KernelKind {
    match name {
        KernelName::Compact => KernelKind::Compact,
        KernelName::Quadratic => KernelKind::Quadratic,
    }
}

pub fn scheme(name: TransferName) -> TransferScheme {
    match name {
        TransferName::Pic => TransferScheme::Pic,
        TransferName::Apic => TransferScheme::Apic,
        TransferName::Mls => TransferScheme::Mls,
    }
}

/// Errors carry the failing key relative to the material entry.
pub fn material(cfg: &MaterialConfig) -> AppResult<Material> {
    let model = match cfg.model {
        ModelConfig::FixedCorotated { youngs, poisson } => Constitutive::FixedCorotated { youngs, poisson },
        ModelConfig::JFluid { bulk, gamma, viscosity } => Constitutive::JFluid { bulk, gamma, viscosity },
        ModelConfig::DruckerPrager { youngs, poisson, friction_angle } => {
            Constitutive::DruckerPrager { youngs, poisson, friction_angle }
        }
        ModelConfig::Nacc { .. } => return Err(AppError::config("model: `nacc` is not implemented")),
        ModelConfig::VonMises { .. } => return Err(AppError::config("model: `von_mises` is not implemented")),
    };
    let mut m = Material::new(model, cfg.density).map_err(field_error)?;
    m.clamp_singular_values = cfg.clamp_singular_values;
    Ok(m)
}

fn field_error(e: Error) -> AppError {
    match e {
        Error::InvalidParameter { field, reason } => AppError::Config(format!("{field}: {reason}")),
        other => AppError::Config(other.to_string()),
    }
}

pub fn shape(cfg: &GeometryConfig) -> Shape {
    match *cfg {
        GeometryConfig::Box { min, max } => Shape::Box { min: v3(min), max: v3(max) },
        GeometryConfig::Sphere { center, radius } => Shape::Sphere { center: v3(center), radius },
        GeometryConfig::Cylinder { center, axis, radius, inner_radius, length } => Shape::Cylinder {
            center: v3(center),
            axis: axis.index(),
            radius,
            inner_radius,
            half_length: 0.5 * length,
        },
    }
}

pub fn velocity(cfg: &VelocityConfig) -> VelocityField {
    match *cfg {
        VelocityConfig::Uniform { value } => VelocityField::Uniform(v3(value)),
        VelocityConfig::Spin { angular, center } => VelocityField::Spin { angular: v3(angular), center: v3(center) },
        VelocityConfig::Rod { center, half_length, tip_speed } => {
            VelocityField::Rod { center: v3(center), half_length, tip_speed }
        }
    }
}

fn boundary_kind(k: BoundaryKindName) -> BoundaryKind {
    match k {
        BoundaryKindName::Sticky => BoundaryKind::Sticky,
        BoundaryKindName::Slip => BoundaryKind::Slip,
        BoundaryKindName::Separate => BoundaryKind::Separate,
    }
}

pub fn boundary(cfg: &BoundaryConfig) -> BoundaryCondition {
    let region = match cfg.region {
        RegionConfig::HalfSpace { point, normal } => Region::HalfSpace { point: v3(point), normal: v3(normal) },
        RegionConfig::Box { min, max, normal } => Region::Box { min: v3(min), max: v3(max), normal: normal.map(v3) },
    };
    let mut bc = BoundaryCondition::new(boundary_kind(cfg.kind), region);
    if let Some(m) = &cfg.motion {
        bc.motion = RigidMotion { linear: v3(m.linear), angular: v3(m.angular), center: v3(m.center) };
    }
    bc
}

/// Six half-space walls `cells` cells inside the domain faces.
pub fn domain_walls(geometry: &GridGeometry, kind: BoundaryKind, cells: f64) -> Vec<BoundaryCondition> {
    let mut out = Vec::with_capacity(6);
    for a in 0..3 {
        let mut n = Vector3::zeros();
        n[a] = 1.0;
        let mut lo = Vector3::zeros();
        lo[a] = cells * geometry.dx;
        let mut hi = Vector3::zeros();
        hi[a] = (geometry.resolution[a] as f64 - cells) * geometry.dx;
        out.push(BoundaryCondition::new(kind, Region::HalfSpace { point: lo, normal: n }));
        out.push(BoundaryCondition::new(kind, Region::HalfSpace { point: hi, normal: -n }));
    }
    out
}

pub fn settings(cfg: &SceneConfig, overrides: &Overrides) -> SimSettings {
    let mut cfg = cfg.clone();
    overrides.apply(&mut cfg);
    SimSettings {
        gravity: v3(cfg.solver.gravity),
        cfl: cfg.time.cfl,
        fps: cfg.time.fps,
        max_dt: cfg.time.max_dt,
        transfer: TransferSettings {
            scheme: scheme(cfg.solver.transfer),
            kernel: kernel(cfg.solver.kernel),
            trig: overrides.trig.unwrap_or(TrigMode::Exact),
            mass_epsilon: 0.0,
            deterministic: cfg.solver.deterministic,
        },
    }
}

/// Samples every shape and assembles the simulation.
pub fn build(cfg: &SceneConfig, overrides: &Overrides) -> AppResult<Simulation> {
    cfg.validate()?;
    let geometry = GridGeometry::new(cfg.domain.dx, cfg.domain.resolution).map_err(field_error)?;
    let materials: Vec<Material> = cfg.materials.iter().map(material).collect::<AppResult<_>>()?;
    let mut particles = Vec::new();
    for (i, s) in cfg.shapes.iter().enumerate() {
        let index = cfg.materials.iter().position(|m| m.name == s.material).expect("validated");
        let density = s.density.unwrap_or(materials[index].density);
        let field = velocity(&s.velocity);
        let sampled = sample_shape(&shape(&s.geometry), &geometry, s.ppc, density, s.seed)
            .map_err(|e| AppError::config(format!("shapes[{i}]: {e}")))?;
        if sampled.is_empty() {
            return Err(AppError::config(format!("shapes[{i}]: geometry contains no particles")));
        }
        particles.extend(sampled.into_iter().map(|mut p| {
            p.material = index as u16;
            p.v = field.at(&p.x);
            p
        }));
    }
    let mut boundaries: Vec<BoundaryCondition> = cfg.boundaries.iter().map(boundary).collect();
    if let Some(w) = &cfg.domain.walls {
        boundaries.extend(domain_walls(&geometry, boundary_kind(w.kind), w.cells));
    }
    Simulation::new(geometry, particles, materials, boundaries, settings(cfg, overrides)).map_err(|e| match e {
        Error::InvalidParameter { field, reason } => AppError::Config(format!("{field}: {reason}")),
        other => AppError::Config(other.to_string()),
    })
}
