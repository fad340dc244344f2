//! Scene sampling, time stepping and diagnostics.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dualgrid::{BlockSparseGrid, BoundaryCondition};
use crate::error::{invalid, Error, Result};
use crate::kernel::GridGeometry;
use crate::materials::Material;
use crate::transfer::{self, Particle, ScatterParts, TransferCounters, TransferSettings};
use crate::{math, Vector3};

/// Analytic solid used for sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Box { min: Vector3, max: Vector3 },
    Sphere { center: Vector3, radius: f64 },
    /// Finite (optionally hollow) cylinder along coordinate axis `axis`.
    Cylinder { center: Vector3, axis: usize, radius: f64, inner_radius: f64, half_length: f64 },
}

impl Shape {
    pub fn contains(&self, x: &Vector3) -> bool {
        match *self {
            Shape::Box { min, max } => (0..3).all(|a| x[a] >= min[a] && x[a] <= max[a]),
            Shape::Sphere { center, radius } => (x - center).norm_squared() <= radius * radius,
            Shape::Cylinder { center, axis, radius, inner_radius, half_length } => {
                let d = x - center;
                if d[axis].abs() > half_length {
                    return false;
                }
                let r2 = d.norm_squared() - d[axis] * d[axis];
                r2 <= radius * radius && r2 >= inner_radius * inner_radius
            }
        }
    }

    pub fn bounds(&self) -> (Vector3, Vector3) {
        match *self {
            Shape::Box { min, max } => (min, max),
            Shape::Sphere { center, radius } => (center.add_scalar(-radius), center.add_scalar(radius)),
            Shape::Cylinder { center, axis, radius, half_length, .. } => {
                let mut ext = Vector3::repeat(radius);
                ext[axis] = half_length;
                (center - ext, center + ext)
            }
        }
    }

    pub fn volume(&self) -> f64 {
        use core::f64::consts::PI;
        match *self {
            Shape::Box { min, max } => (max - min).product(),
            Shape::Sphere { radius, .. } => 4.0 / 3.0 * PI * radius * radius * radius,
            Shape::Cylinder { radius, inner_radius, half_length, .. } => {
                PI * (radius * radius - inner_radius * inner_radius) * 2.0 * half_length
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Shape::Box { min, max } => (0..3).all(|a| min[a] < max[a]),
            Shape::Sphere { radius, .. } => radius > 0.0,
            Shape::Cylinder { axis, radius, inner_radius, half_length, .. } => {
                axis < 3 && radius > 0.0 && inner_radius >= 0.0 && inner_radius < radius && half_length > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(invalid("shape", "degenerate geometry"))
        }
    }
}

/// Initial velocity assigned to sampled particles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VelocityField {
    Uniform(Vector3),
    /// Rigid rotation `ω × (x − center)`.
    Spin { angular: Vector3, center: Vector3 },
    /// Rotating-rod start: x-velocity linear in the y-offset from `center`.
    Rod { center: Vector3, half_length: f64, tip_speed: f64 },
}

impl VelocityField {
    pub fn at(&self, x: &Vector3) -> Vector3 {
        match *self {
            VelocityField::Uniform(v) => v,
            VelocityField::Spin { angular, center } => angular.cross(&(x - center)),
            VelocityField::Rod { center, half_length, tip_speed } => {
                rod_velocity_profile(x, &center, half_length, tip_speed)
            }
        }
    }
}

/// `(tip · Δr / half_length, 0, 0)` with `Δr` the signed y-offset from the
/// rod center, so the ends move at `±tip` in x.
pub fn rod_velocity_profile(x: &Vector3, center: &Vector3, half_length: f64, tip_speed: f64) -> Vector3 {
    Vector3::new(tip_speed * (x.y - center.y) / half_length, 0.0, 0.0)
}

/// In-cell sample offsets (in cells) for a lattice sampler.
fn lattice(ppc: usize) -> Option<&'static [f64]> {
    match ppc {
        8 => Some(&[0.25, 0.75]),
        27 => Some(&[1.0 / 6.0, 0.5, 5.0 / 6.0]),
        _ => None,
    }
}

/// Particles filling `shape` at `ppc` per cell (8 and 27: regular
/// sub-lattice; 16: one jittered sample in each of 2×2×4 strata).
///
/// Velocity is zero and the material index 0; callers assign both.
pub fn sample_shape(
    shape: &Shape,
    geometry: &GridGeometry,
    ppc: usize,
    density: f64,
    seed: u64,
) -> Result<Vec<Particle>> {
    shape.validate()?;
    if !matches!(ppc, 8 | 16 | 27) {
        return Err(invalid("ppc", "must be 8, 16 or 27"));
    }
    if !(density > 0.0) {
        return Err(invalid("density", "must be positive"));
    }
    let dx = geometry.dx;
    let cell_volume = dx * dx * dx;
    let volume = cell_volume / ppc as f64;
    let mass = density * volume;
    let (lo, hi) = shape.bounds();
    let lo: [i64; 3] = core::array::from_fn(|a| math::floor(lo[a] / dx) as i64);
    let hi: [i64; 3] = core::array::from_fn(|a| math::floor(hi[a] / dx) as i64);
    let mut out = Vec::new();
    let mut push = |x: Vector3| -> Result<()> {
        if shape.contains(&x) {
            if !geometry.is_inset(&x, 2.0) {
                return Err(Error::ParticleOutOfDomain {
                    particle: out.len(),
                    position: [x[0], x[1], x[2]],
                    inset: 2,
                });
            }
            out.push(Particle::new(x, Vector3::zeros(), mass, volume, 0));
        }
        Ok(())
    };
    for i in lo[0]..=hi[0] {
        for j in lo[1]..=hi[1] {
            for k in lo[2]..=hi[2] {
                let corner = Vector3::new(i as f64, j as f64, k as f64);
                if let Some(offs) = lattice(ppc) {
                    for &a in offs {
                        for &b in offs {
                            for &c in offs {
                                push((corner + Vector3::new(a, b, c)) * dx)?;
                            }
                        }
                    }
                } else {
                    let cell_seed = seed
                        ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
                        ^ (j as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
                        ^ (k as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
                    let mut rng = ChaCha8Rng::seed_from_u64(cell_seed);
                    for a in 0..2 {
                        for b in 0..2 {
                            for c in 0..4 {
                                let u = Vector3::new(
                                    (a as f64 + rng.gen::<f64>()) / 2.0,
                                    (b as f64 + rng.gen::<f64>()) / 2.0,
                                    (c as f64 + rng.gen::<f64>()) / 4.0,
                                );
                                push((corner + u) * dx)?;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Largest stable step: `cfl · Δx / max(v_max, c_max)`, clipped to
/// `remainder`. Wave speeds are taken over materials present in `particles`;
/// fluids are evaluated at their most compressed particle.
pub fn cfl_dt(particles: &[Particle], materials: &[Material], dx: f64, cfl: f64, remainder: f64) -> f64 {
    let mut v2_max: f64 = 0.0;
    // Smallest volume ratio per material index; 0 marks "unused".
    let mut j_min = alloc::vec![0.0f64; materials.len()];
    for p in particles {
        v2_max = v2_max.max(p.v.norm_squared());
        if let Some(slot) = j_min.get_mut(p.material as usize) {
            *slot = if *slot == 0.0 { p.j } else { slot.min(p.j) };
        }
    }
    let c_max = materials
        .iter()
        .zip(&j_min)
        .filter(|(_, &j)| j != 0.0)
        .map(|(m, &j)| m.wave_speed_at(j))
        .fold(0.0, f64::max);
    let speed = math::sqrt(v2_max).max(c_max);
    if speed > 0.0 {
        (cfl * dx / speed).min(remainder)
    } else {
        remainder
    }
}

/// Physical and mass-free momentum totals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Momentum {
    /// `Σ m v`.
    pub linear: Vector3,
    /// `Σ m x × v` about the origin.
    pub angular: Vector3,
    /// `Σ v`.
    pub linear_massfree: Vector3,
    /// `Σ x × v`.
    pub angular_massfree: Vector3,
    /// `Σ m (x × v + ε:Bᵀ)`, the quantity APIC transfers conserve exactly.
    pub angular_apic: Vector3,
}

pub fn total_momentum(particles: &[Particle]) -> Momentum {
    let mut m = Momentum::default();
    for p in particles {
        let l = p.x.cross(&p.v);
        m.linear += p.v * p.mass;
        m.angular += l * p.mass;
        m.linear_massfree += p.v;
        m.angular_massfree += l;
        let b = &p.b;
        let spin = Vector3::new(b[(2, 1)] - b[(1, 2)], b[(0, 2)] - b[(2, 0)], b[(1, 0)] - b[(0, 1)]);
        m.angular_apic += (l + spin) * p.mass;
    }
    m
}

/// One row of per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    pub step: u64,
    pub time: f64,
    pub momentum: Momentum,
    pub kinetic_energy: f64,
    pub vmax: f64,
    /// Worst relative deviation of any grid's total mass from the particle
    /// total, measured after the last scatter.
    pub grid_mass_error: f64,
}

/// Integrator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    pub gravity: Vector3,
    pub cfl: f64,
    pub fps: f64,
    pub transfer: TransferSettings,
    /// Optional upper bound on the substep.
    pub max_dt: Option<f64>,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            gravity: Vector3::zeros(),
            cfl: 0.5,
            fps: 24.0,
            transfer: TransferSettings::default(),
            max_dt: None,
        }
    }
}

impl SimSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(invalid("cfl", "must lie in (0, 1]"));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(invalid("fps", "must be positive"));
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return Err(invalid("gravity", "must be finite"));
        }
        if let Some(dt) = self.max_dt {
            if !(dt > 0.0) {
                return Err(invalid("max_dt", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Complete simulation state plus the grid workspace.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub particles: Vec<Particle>,
    pub materials: Vec<Material>,
    pub boundaries: Vec<BoundaryCondition>,
    pub settings: SimSettings,
    pub time: f64,
    pub step_count: u64,
    pub frame: u64,
    pub counters: TransferCounters,
    grid: BlockSparseGrid,
    grid_mass_error: f64,
}

impl Simulation {
    pub fn new(
        geometry: GridGeometry,
        particles: Vec<Particle>,
        materials: Vec<Material>,
        boundaries: Vec<BoundaryCondition>,
        mut settings: SimSettings,
    ) -> Result<Self> {
        settings.validate()?;
        for m in &materials {
            m.validate()?;
        }
        for bc in &boundaries {
            bc.validate()?;
        }
        for (i, p) in particles.iter().enumerate() {
            if !(p.mass > 0.0 && p.volume > 0.0) {
                return Err(invalid("particle", "mass and volume must be positive"));
            }
            let Some(mat) = materials.get(p.material as usize) else {
                return Err(invalid("material", "particle references unknown material"));
            };
            let ratio = p.volume_ratio(mat.is_fluid());
            if !(ratio > 0.0) {
                return Err(Error::InvertedElement { particle: Some(i), det: ratio });
            }
            if !geometry.is_inset(&p.x, 2.0) {
                return Err(Error::ParticleOutOfDomain {
                    particle: i,
                    position: [p.x[0], p.x[1], p.x[2]],
                    inset: 2,
                });
            }
        }
        if settings.transfer.mass_epsilon == 0.0 && !particles.is_empty() {
            settings.transfer.mass_epsilon = 1e-12 * median_mass(&particles);
        }
        let grid = BlockSparseGrid::new(geometry, settings.transfer.kernel.layout());
        Ok(Self {
            particles,
            materials,
            boundaries,
            settings,
            time: 0.0,
            step_count: 0,
            frame: 0,
            counters: TransferCounters::default(),
            grid,
            grid_mass_error: 0.0,
        })
    }

    pub fn geometry(&self) -> &GridGeometry {
        self.grid.geometry()
    }

    pub fn grid(&self) -> &BlockSparseGrid {
        &self.grid
    }

    pub fn frame_duration(&self) -> f64 {
        1.0 / self.settings.fps
    }

    /// Substep size for the current state, ending no later than `until`.
    pub fn next_dt(&self, until: f64) -> f64 {
        let mut dt = cfl_dt(
            &self.particles,
            &self.materials,
            self.geometry().dx,
            self.settings.cfl,
            until - self.time,
        );
        if let Some(max) = self.settings.max_dt {
            dt = dt.min(max);
        }
        dt
    }

    /// Activation and clearing.
    pub fn phase_activate(&mut self) -> Result<()> {
        self.grid.activate(self.particles.iter().map(|p| &p.x))?;
        Ok(())
    }

    /// Mass, momentum and force scatter; records per-grid mass error.
    pub fn phase_p2g(&mut self, dt: f64) -> Result<()> {
        let parts = ScatterParts::all(self.settings.transfer.scheme, dt);
        transfer::scatter(
            &self.particles,
            &self.materials,
            &mut self.grid,
            &self.settings.transfer,
            &parts,
            &mut self.counters,
        )?;
        let total: f64 = self.particles.iter().map(|p| p.mass).sum();
        self.grid_mass_error = (0..self.grid.layers())
            .map(|l| {
                let m = self.grid.layer_mass(l);
                if total > 0.0 {
                    (m - total).abs() / total
                } else {
                    m.abs()
                }
            })
            .fold(0.0, f64::max);
        Ok(())
    }

    pub fn phase_grid_update(&mut self, dt: f64) {
        transfer::grid_update(
            &mut self.grid,
            dt,
            &self.settings.gravity,
            &self.boundaries,
            self.settings.transfer.mass_epsilon,
        );
    }

    /// Gather, deformation update, return map and advection.
    pub fn phase_g2p(&mut self, dt: f64) -> Result<()> {
        transfer::update_particles(
            &mut self.particles,
            &self.materials,
            &self.grid,
            &self.settings.transfer,
            dt,
            &mut self.counters,
        )
    }

    /// One explicit step of size `dt`.
    pub fn step(&mut self, dt: f64) -> Result<Diagnostics> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", "must be positive"));
        }
        self.phase_activate()?;
        self.phase_p2g(dt)?;
        self.phase_grid_update(dt);
        self.phase_g2p(dt)?;
        self.time += dt;
        self.step_count += 1;
        Ok(self.diagnostics())
    }

    /// Steps until the next frame boundary; `on_step` sees every substep.
    pub fn advance_frame<F: FnMut(&Diagnostics)>(&mut self, mut on_step: F) -> Result<()> {
        let end = (self.frame + 1) as f64 * self.frame_duration();
        while self.time < end {
            let dt = self.next_dt(end);
            let last = self.time + dt >= end;
            let d = self.step(dt)?;
            if last {
                self.time = end;
            }
            on_step(&Diagnostics { time: self.time, ..d });
            if last {
                break;
            }
        }
        self.frame += 1;
        Ok(())
    }

    /// Runs until `t_end` (not aligned to frames).
    pub fn run_until<F: FnMut(&Diagnostics)>(&mut self, t_end: f64, mut on_step: F) -> Result<()> {
        while self.time < t_end {
            let dt = self.next_dt(t_end);
            let last = self.time + dt >= t_end;
            let d = self.step(dt)?;
            if last {
                self.time = t_end;
            }
            on_step(&Diagnostics { time: self.time, ..d });
        }
        Ok(())
    }

    pub fn diagnostics(&self) -> Diagnostics {
        let mut ke = 0.0;
        let mut vmax: f64 = 0.0;
        for p in &self.particles {
            let v2 = p.v.norm_squared();
            ke += 0.5 * p.mass * v2;
            vmax = vmax.max(v2);
        }
        Diagnostics {
            step: self.step_count,
            time: self.time,
            momentum: total_momentum(&self.particles),
            kinetic_energy: ke,
            vmax: math::sqrt(vmax),
            grid_mass_error: self.grid_mass_error,
        }
    }
}

fn median_mass(particles: &[Particle]) -> f64 {
    let mut m: Vec<f64> = particles.iter().map(|p| p.mass).collect();
    m.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    m[m.len() / 2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::Constitutive;

    fn jelly() -> Material {
        Material::new(Constitutive::FixedCorotated { youngs: 1e6, poisson: 0.4 }, 1e3).unwrap()
    }

    #[test]
    fn ten_cell_sphere_count() {
        let dx = 1.0 / 256.0;
        let g = GridGeometry::new(dx, [256; 3]).unwrap();
        let shape = Shape::Sphere { center: Vector3::repeat(32.0 * dx), radius: 10.0 * dx };
        let ps = sample_shape(&shape, &g, 8, 1e3, 0).unwrap();
        assert_eq!(ps.len(), 33_552);
        let mass: f64 = ps.iter().map(|p| p.mass).sum();
        let exact = 1e3 * shape.volume();
        assert!((mass - exact).abs() / exact < 0.02);
    }

    #[test]
    fn unit_box_count() {
        let g = GridGeometry::new(0.5, [8; 3]).unwrap();
        let shape = Shape::Box { min: Vector3::repeat(1.0), max: Vector3::repeat(2.0) };
        let ps = sample_shape(&shape, &g, 8, 1.0, 0).unwrap();
        assert_eq!(ps.len(), 64);
        assert!(ps.iter().all(|p| p.mass == 0.125 * 0.125 && p.volume == 0.125 / 8.0));
    }

    #[test]
    fn jittered_sampling_is_stratified_and_seeded() {
        let g = GridGeometry::new(1.0, [16; 3]).unwrap();
        let shape = Shape::Box { min: Vector3::repeat(4.0), max: Vector3::repeat(6.0) };
        let a = sample_shape(&shape, &g, 16, 1.0, 7).unwrap();
        let b = sample_shape(&shape, &g, 16, 1.0, 7).unwrap();
        let c = sample_shape(&shape, &g, 16, 1.0, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 8 * 16);
    }

    #[test]
    fn sampling_rejects_boundary_shapes() {
        let g = GridGeometry::new(1.0, [16; 3]).unwrap();
        let shape = Shape::Sphere { center: Vector3::repeat(2.0), radius: 1.5 };
        assert!(matches!(sample_shape(&shape, &g, 8, 1.0, 0), Err(Error::ParticleOutOfDomain { .. })));
        assert!(sample_shape(&shape, &g, 9, 1.0, 0).is_err());
    }

    #[test]
    fn rod_profile_examples() {
        let c = Vector3::repeat(0.5);
        let h = 20.0 / 256.0;
        assert_eq!(rod_velocity_profile(&c, &c, h, 1.0), Vector3::zeros());
        let tip = rod_velocity_profile(&(c + Vector3::new(0.0, h, 0.0)), &c, h, 1.0);
        assert!((tip - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        let half = rod_velocity_profile(&(c + Vector3::new(0.0, h / 2.0, 0.0)), &c, h, 1.0);
        assert!((half - Vector3::new(0.5, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn cfl_examples() {
        let soft = Material::new(Constitutive::FixedCorotated { youngs: 1e-3, poisson: 0.3 }, 1e3).unwrap();
        let mut p = Particle::new(Vector3::repeat(0.5), Vector3::zeros(), 1.0, 1.0, 0);
        assert_eq!(cfl_dt(&[p], &[soft], 1.0 / 256.0, 0.5, 0.04), 0.04);
        p.v = Vector3::new(1.0, 0.0, 0.0);
        assert_eq!(cfl_dt(&[p], &[soft], 1.0 / 256.0, 0.5, 0.04), 0.5 / 256.0);
        let tungsten = Material::new(Constitutive::FixedCorotated { youngs: 4.5e11, poisson: 0.27 }, 19.3e3).unwrap();
        let c = tungsten.wave_speed();
        assert!(c > 1e3 && c < 1e4 * 2.0);
        let dt = cfl_dt(&[p], &[tungsten], 1.0 / 1024.0, 0.5, 1.0);
        assert!(dt > 9.03e-9 && dt < 9.03e-7, "{dt}");
    }

    #[test]
    fn momentum_examples() {
        let p = Particle::new(Vector3::new(1.0, 2.0, 3.0), Vector3::new(1.0, 0.0, 0.0), 2.0, 1.0, 0);
        assert_eq!(total_momentum(&[p]).linear, Vector3::new(2.0, 0.0, 0.0));
        let q = Particle { v: -p.v, ..p };
        let m = total_momentum(&[p, q]);
        assert_eq!(m.linear, Vector3::zeros());
        assert_eq!(m.angular, Vector3::zeros());
    }

    #[test]
    fn rest_state_is_stationary() {
        let g = GridGeometry::new(0.1, [16; 3]).unwrap();
        let shape = Shape::Box { min: Vector3::repeat(0.5), max: Vector3::repeat(0.8) };
        let ps = sample_shape(&shape, &g, 8, 1e3, 0).unwrap();
        let mut sim = Simulation::new(g, ps.clone(), vec![jelly()], vec![], SimSettings::default()).unwrap();
        sim.step(1e-4).unwrap();
        for (a, b) in sim.particles.iter().zip(&ps) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.v, Vector3::zeros());
            assert_eq!(a.f, Matrix3::identity());
        }
    }

    #[test]
    fn free_fall_step() {
        let g = GridGeometry::new(0.1, [16; 3]).unwrap();
        let shape = Shape::Box { min: Vector3::repeat(0.5), max: Vector3::repeat(0.8) };
        let ps = sample_shape(&shape, &g, 8, 1e3, 0).unwrap();
        let settings = SimSettings { gravity: Vector3::new(0.0, -9.8, 0.0), ..Default::default() };
        let mut sim = Simulation::new(g, ps.clone(), vec![jelly()], vec![], settings).unwrap();
        let dt = 1e-3;
        sim.step(dt).unwrap();
        for (a, b) in sim.particles.iter().zip(&ps) {
            assert!((a.v - Vector3::new(0.0, -9.8e-3, 0.0)).norm() < 1e-14);
            assert!((a.x - (b.x + a.v * dt)).norm() < 1e-15);
        }
    }

    #[test]
    fn frames_land_on_boundaries() {
        let g = GridGeometry::new(0.1, [16; 3]).unwrap();
        let shape = Shape::Box { min: Vector3::repeat(0.5), max: Vector3::repeat(0.8) };
        let ps = sample_shape(&shape, &g, 8, 1e3, 0).unwrap();
        let settings = SimSettings { fps: 100.0, ..Default::default() };
        let mut sim = Simulation::new(g, ps, vec![jelly()], vec![], settings).unwrap();
        let mut steps = 0;
        sim.advance_frame(|_| steps += 1).unwrap();
        assert_eq!(sim.time, 0.01);
        assert!(steps >= 1);
        sim.advance_frame(|_| {}).unwrap();
        assert_eq!(sim.frame, 2);
        assert!((sim.time - 0.02).abs() < 1e-17);
    }

    use crate::Matrix3;
    use alloc::vec;
}
