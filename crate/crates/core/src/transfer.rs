//! Particle↔grid transfers on the dual grid.
//!
//! Scatter (P2G) deposits mass, momentum (with the APIC affine term) and the
//! stress force on every grid independently. Gather (G2P) averages velocity,
//! the APIC matrix `B` and the velocity gradient over both grids. The same
//! code drives the quadratic B-spline baseline on a single grid, where the
//! average degenerates to the plain sum.

use crate::dualgrid::{BlockSparseGrid, BoundaryCondition, GridIndex, GridLayout};
use crate::error::{Error, Result};
use crate::kernel::{compact_axes_pair, quad_axes, GridGeometry, TrigMode, NODE_OFFSETS_27, NODE_OFFSETS_8};
use crate::materials::Material;
use crate::{Matrix3, Matrix4, Vector3};

/// Condition-number bound for `D` and the MLS moment matrix.
pub const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransferScheme {
    #[default]
    Pic,
    Apic,
    Mls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelKind {
    /// `𝒦₁` on the two staggered grids, 16 nodes per particle.
    #[default]
    Compact,
    /// Quadratic B-spline on one collocated grid, 27 nodes per particle.
    Quadratic,
}

impl KernelKind {
    pub fn layout(self) -> GridLayout {
        match self {
            KernelKind::Compact => GridLayout::Dual,
            KernelKind::Quadratic => GridLayout::Single,
        }
    }

    pub fn nodes_per_particle(self) -> usize {
        match self {
            KernelKind::Compact => 16,
            KernelKind::Quadratic => 27,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferSettings {
    pub scheme: TransferScheme,
    pub kernel: KernelKind,
    pub trig: TrigMode,
    /// Nodes at or below this mass get zero velocity.
    pub mass_epsilon: f64,
    /// Serial scatter in particle order (bit-reproducible).
    pub deterministic: bool,
}

impl Default for TransferSettings {
    fn default() -> Self {
        Self {
            scheme: TransferScheme::Pic,
            kernel: KernelKind::Compact,
            trig: TrigMode::Exact,
            mass_epsilon: 0.0,
            deterministic: true,
        }
    }
}

/// Lagrangian material point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub x: Vector3,
    pub v: Vector3,
    pub mass: f64,
    /// Rest volume `V₀`.
    pub volume: f64,
    /// Elastic deformation gradient (identity for fluids).
    pub f: Matrix3,
    /// Volume ratio; tracked for fluids, `det F` is used for solids.
    pub j: f64,
    /// APIC affine matrix `B` (m²/s).
    pub b: Matrix3,
    /// Velocity gradient from the last gather.
    pub grad_v: Matrix3,
    /// Index into the scene's material table.
    pub material: u16,
}

impl Particle {
    pub fn new(x: Vector3, v: Vector3, mass: f64, volume: f64, material: u16) -> Self {
        Self {
            x,
            v,
            mass,
            volume,
            f: Matrix3::identity(),
            j: 1.0,
            b: Matrix3::zeros(),
            grad_v: Matrix3::zeros(),
            material,
        }
    }

    /// `J` for fluids, `det F` for solids.
    pub fn volume_ratio(&self, fluid: bool) -> f64 {
        if fluid {
            self.j
        } else {
            self.f.determinant()
        }
    }
}

/// Most nodes any kernel touches per particle.
pub const MAX_NODES: usize = 27;

/// All transfer nodes of one particle, flattened over grids.
///
/// Hot loops keep one of these per worker and refill it with
/// [`ParticleStencil::fill`] to avoid moving it around.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleStencil {
    len: usize,
    scale: f64,
    pub layer: [u8; MAX_NODES],
    pub node: [[i32; 3]; MAX_NODES],
    pub weight: [f64; MAX_NODES],
    /// `∇w` with respect to the particle position (1/m).
    pub grad: [Vector3; MAX_NODES],
    /// `x_i − x_p`, from the fractional coordinate.
    pub offset: [Vector3; MAX_NODES],
}

impl Default for ParticleStencil {
    fn default() -> Self {
        Self {
            len: 0,
            scale: 1.0,
            layer: [0; MAX_NODES],
            node: [[0; 3]; MAX_NODES],
            weight: [0.0; MAX_NODES],
            grad: [Vector3::zeros(); MAX_NODES],
            offset: [Vector3::zeros(); MAX_NODES],
        }
    }
}

impl ParticleStencil {
    pub fn new(x: &Vector3, kind: KernelKind, geometry: &GridGeometry, trig: TrigMode) -> Result<Self> {
        let mut s = Self::default();
        s.fill(x, kind, geometry, trig)?;
        Ok(s)
    }

    /// Recomputes the stencil in place for a particle at `x`.
    #[inline]
    pub fn fill(&mut self, x: &Vector3, kind: KernelKind, geometry: &GridGeometry, trig: TrigMode) -> Result<()> {
        let dx = geometry.dx;
        let inv_dx = 1.0 / dx;
        match kind {
            KernelKind::Compact => {
                self.len = 16;
                self.scale = 0.5;
                for (g, c) in compact_axes_pair(x, geometry, trig)?.iter().enumerate() {
                    let [ax, ay, az] = c.axes;
                    let layer = c.grid.layer() as u8;
                    for (n, o) in NODE_OFFSETS_8.iter().enumerate() {
                        let k = g * 8 + n;
                        let (i, j, l) = (o[0] as usize, o[1] as usize, o[2] as usize);
                        let (wx, wy, wz) = (ax.w[i], ay.w[j], az.w[l]);
                        self.layer[k] = layer;
                        self.node[k] = [c.base[0] + o[0], c.base[1] + o[1], c.base[2] + o[2]];
                        self.weight[k] = wx * wy * wz;
                        self.grad[k] = Vector3::new(
                            ax.dw[i] * wy * wz * inv_dx,
                            wx * ay.dw[j] * wz * inv_dx,
                            wx * wy * az.dw[l] * inv_dx,
                        );
                        self.offset[k] = Vector3::new(
                            (o[0] as f64 - c.frac[0]) * dx,
                            (o[1] as f64 - c.frac[1]) * dx,
                            (o[2] as f64 - c.frac[2]) * dx,
                        );
                    }
                }
            }
            KernelKind::Quadratic => {
                self.len = 27;
                self.scale = 1.0;
                let q = quad_axes(x, geometry)?;
                for (k, o) in NODE_OFFSETS_27.iter().enumerate() {
                    let (i, j, l) = (o[0] as usize, o[1] as usize, o[2] as usize);
                    let (wx, wy, wz) = (q.w[0][i], q.w[1][j], q.w[2][l]);
                    self.layer[k] = 0;
                    self.node[k] = [q.base[0] + o[0], q.base[1] + o[1], q.base[2] + o[2]];
                    self.weight[k] = wx * wy * wz;
                    self.grad[k] = Vector3::new(
                        q.dw[0][i] * wy * wz * inv_dx,
                        wx * q.dw[1][j] * wz * inv_dx,
                        wx * wy * q.dw[2][l] * inv_dx,
                    );
                    self.offset[k] = Vector3::new(
                        (o[0] as f64 - q.frac[0]) * dx,
                        (o[1] as f64 - q.frac[1]) * dx,
                        (o[2] as f64 - q.frac[2]) * dx,
                    );
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Averaging factor over grids: `1/2` for the dual grid, `1` otherwise.
    #[inline]
    pub fn gather_scale(&self) -> f64 {
        self.scale
    }

    /// Calls `f(layer, node, weight, ∇w, x_i − x_p)` for every node.
    #[inline]
    pub fn for_each<F>(&self, mut f: F)
    where
        F: FnMut(usize, [i32; 3], f64, &Vector3, &Vector3),
    {
        for n in 0..self.len {
            f(self.layer[n] as usize, self.node[n], self.weight[n], &self.grad[n], &self.offset[n]);
        }
    }
}

/// APIC inertia-like matrix `D = s Σ w (x_i − x_p)(x_i − x_p)ᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApicD {
    pub d: Matrix3,
    dx: f64,
}

impl ApicD {
    #[inline]
    pub fn from_stencil(st: &ParticleStencil, dx: f64) -> Self {
        let mut d = Matrix3::zeros();
        st.for_each(|_, _, w, _, off| d += off * off.transpose() * w);
        Self { d: d * st.gather_scale(), dx }
    }

    /// `D⁻¹`, refusing matrices whose condition number exceeds
    /// [`MAX_CONDITION`] (measured in cell units).
    pub fn inverse(&self) -> Result<Matrix3> {
        let h2 = self.dx * self.dx;
        let scaled = self.d / h2;
        let inv = scaled.try_inverse().ok_or(Error::SingularMatrix {
            particle: None,
            what: "APIC D",
            condition: f64::INFINITY,
        })?;
        let condition = scaled.norm() * inv.norm();
        if !(condition <= MAX_CONDITION) {
            return Err(Error::SingularMatrix { particle: None, what: "APIC D", condition });
        }
        Ok(inv / h2)
    }
}

/// `D` for a particle at `x`.
pub fn compute_apic_d(x: &Vector3, kind: KernelKind, geometry: &GridGeometry) -> Result<ApicD> {
    let st = ParticleStencil::new(x, kind, geometry, TrigMode::Exact)?;
    Ok(ApicD::from_stencil(&st, geometry.dx))
}

#[inline]
fn basis(off: &Vector3) -> nalgebra::Vector4<f64> {
    nalgebra::Vector4::new(1.0, off.x, off.y, off.z)
}

/// MLS moment matrix `M = s Σ w P(x_i − x_p) P(x_i − x_p)ᵀ`, `P(ξ) = (1, ξ)`.
pub fn mls_moment_from(st: &ParticleStencil) -> Matrix4 {
    let mut m = Matrix4::zeros();
    st.for_each(|_, _, w, _, off| {
        let p = basis(off);
        m += p * p.transpose() * w;
    });
    m * st.gather_scale()
}

/// [`mls_moment_from`] for a particle at `x`.
pub fn mls_moment(x: &Vector3, kind: KernelKind, geometry: &GridGeometry) -> Result<Matrix4> {
    let st = ParticleStencil::new(x, kind, geometry, TrigMode::Exact)?;
    Ok(mls_moment_from(&st))
}

/// Inverse moment matrix of the MLS fit around one particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlsFrame {
    pub x: Vector3,
    /// `M⁻¹` in cell units: `S M⁻¹ S` with `S = diag(1, Δx, Δx, Δx)`.
    m_inv_cells: Matrix4,
    dx: f64,
}

impl MlsFrame {
    pub fn from_stencil(x: &Vector3, stencil: &ParticleStencil, dx: f64) -> Result<Self> {
        let inv_dx = 1.0 / dx;
        let mut m = Matrix4::zeros();
        stencil.for_each(|_, _, w, _, off| {
            let p = basis(&(off * inv_dx));
            m += p * p.transpose() * w;
        });
        m *= stencil.gather_scale();
        let m_inv_cells = m.try_inverse().ok_or(Error::SingularMatrix {
            particle: None,
            what: "MLS moment",
            condition: f64::INFINITY,
        })?;
        let condition = m.norm() * m_inv_cells.norm();
        if !(condition <= MAX_CONDITION) {
            return Err(Error::SingularMatrix { particle: None, what: "MLS moment", condition });
        }
        Ok(Self { x: *x, m_inv_cells, dx })
    }

    /// `M⁻¹` in world units.
    pub fn m_inverse(&self) -> Matrix4 {
        let h = 1.0 / self.dx;
        let s = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, h, h, h));
        s * self.m_inv_cells * s
    }

    /// `M⁻¹ P(x_i − x_p)` for a node offset.
    #[inline]
    pub fn coefficients(&self, off: &Vector3) -> nalgebra::Vector4<f64> {
        let inv_dx = 1.0 / self.dx;
        let c = self.m_inv_cells * basis(&(off * inv_dx));
        nalgebra::Vector4::new(c[0], c[1] * inv_dx, c[2] * inv_dx, c[3] * inv_dx)
    }

    /// Shape gradient `∇_z Φ_i = w · (M⁻¹ P(x_i − x_p))[1..4]`, independent of `z`.
    #[inline]
    pub fn shape_gradient(&self, w: f64, off: &Vector3) -> Vector3 {
        let c = self.coefficients(off);
        Vector3::new(c[1], c[2], c[3]) * w
    }

    /// `Φ_i(z)` and `∇_z Φ_i` for node `node` of `layer`; zero off-stencil.
    pub fn shape(&self, stencil: &ParticleStencil, layer: usize, node: [i32; 3], z: &Vector3) -> (f64, Vector3) {
        let mut out = (0.0, Vector3::zeros());
        stencil.for_each(|l, n, w, _, off| {
            if l == layer && n == node {
                let c = self.coefficients(off);
                out = (w * basis(&(z - self.x)).dot(&c), Vector3::new(c[1], c[2], c[3]) * w);
            }
        });
        out
    }
}

/// Nodal shape function `Φ_{i,𝒢ₖ}(z)` and its gradient for a particle at `x`.
pub fn mls_shape(
    x: &Vector3,
    layer: usize,
    node: [i32; 3],
    z: &Vector3,
    kind: KernelKind,
    geometry: &GridGeometry,
) -> Result<(f64, Vector3)> {
    let st = ParticleStencil::new(x, kind, geometry, TrigMode::Exact)?;
    let frame = MlsFrame::from_stencil(x, &st, geometry.dx)?;
    Ok(frame.shape(&st, layer, node, z))
}

/// Node visits per transfer phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TransferCounters {
    pub p2g_particles: u64,
    pub p2g_node_visits: u64,
    pub g2p_particles: u64,
    pub g2p_node_visits: u64,
}

impl TransferCounters {
    pub fn p2g_visits_per_particle(&self) -> f64 {
        self.p2g_node_visits as f64 / self.p2g_particles.max(1) as f64
    }

    pub fn g2p_visits_per_particle(&self) -> f64 {
        self.g2p_node_visits as f64 / self.g2p_particles.max(1) as f64
    }
}

/// What a scatter pass deposits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterParts {
    pub mass: bool,
    pub momentum: bool,
    /// Use `B D⁻¹` in the momentum (APIC and MLS).
    pub affine: bool,
    /// Add `Δt f` with this `Δt`.
    pub force_dt: Option<f64>,
}

impl ScatterParts {
    /// Mass, momentum and force in one pass.
    pub fn all(scheme: TransferScheme, dt: f64) -> Self {
        Self { mass: true, momentum: true, affine: scheme != TransferScheme::Pic, force_dt: Some(dt) }
    }
}

/// Kirchhoff stress of a particle.
pub fn particle_kirchhoff(p: &Particle, material: &Material) -> Result<Matrix3> {
    if material.is_fluid() {
        material.kirchhoff_fluid(p.j, &p.grad_v)
    } else {
        material.kirchhoff_solid(&p.f)
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn scatter_one(
    p: &Particle,
    materials: &[Material],
    settings: &TransferSettings,
    parts: &ScatterParts,
    geometry: &GridGeometry,
    index: &GridIndex<'_>,
    st: &mut ParticleStencil,
    mass: &mut [f64],
    momentum: &mut [Vector3],
) -> Result<usize> {
    let dx = geometry.dx;
    st.fill(&p.x, settings.kernel, geometry, settings.trig)?;

    let affine = if parts.affine && parts.momentum && p.b != Matrix3::zeros() {
        p.b * ApicD::from_stencil(st, dx).inverse()?
    } else {
        Matrix3::zeros()
    };

    let mut stress = Matrix3::zeros();
    let mut mls = None;
    if let Some(dt) = parts.force_dt {
        let material = materials
            .get(p.material as usize)
            .ok_or_else(|| crate::error::invalid("material", "particle references unknown material"))?;
        stress = particle_kirchhoff(p, material)? * (-dt * p.volume);
        if settings.scheme == TransferScheme::Mls && stress != Matrix3::zeros() {
            mls = Some(MlsFrame::from_stencil(&p.x, st, dx)?);
        }
    }
    let has_force = stress != Matrix3::zeros();
    let mv = p.v * p.mass;
    let m_affine = affine * p.mass;

    for n in 0..st.len() {
        let i = index.node_index_checked(st.layer[n] as usize, st.node[n])?;
        let w = st.weight[n];
        if parts.mass {
            mass[i] += w * p.mass;
        }
        let mut dp = Vector3::zeros();
        if parts.momentum {
            dp = (mv + m_affine * st.offset[n]) * w;
        }
        if has_force {
            let g = match &mls {
                Some(frame) => frame.shape_gradient(w, &st.offset[n]),
                None => st.grad[n],
            };
            dp += stress * g;
        }
        momentum[i] += dp;
    }
    Ok(st.len())
}

/// Scatters the requested parts of every particle onto the active grid.
///
/// The grid must be activated for these particles; nodal data accumulates
/// onto what is already there.
pub fn scatter(
    particles: &[Particle],
    materials: &[Material],
    grid: &mut BlockSparseGrid,
    settings: &TransferSettings,
    parts: &ScatterParts,
    counters: &mut TransferCounters,
) -> Result<()> {
    let geometry = *grid.geometry();
    #[cfg(feature = "parallel")]
    if !settings.deterministic && rayon::current_num_threads() > 1 && particles.len() > 1024 {
        let visits = parallel::scatter(particles, materials, grid, settings, parts, &geometry)?;
        counters.p2g_particles += particles.len() as u64;
        counters.p2g_node_visits += visits;
        return Ok(());
    }
    let (index, field) = grid.split_mut();
    let mut visits = 0u64;
    let mut st = ParticleStencil::default();
    for (pi, p) in particles.iter().enumerate() {
        visits += scatter_one(
            p,
            materials,
            settings,
            parts,
            &geometry,
            &index,
            &mut st,
            &mut field.mass,
            &mut field.momentum,
        )
        .map_err(|e| e.at_particle(pi))? as u64;
    }
    counters.p2g_particles += particles.len() as u64;
    counters.p2g_node_visits += visits;
    Ok(())
}

/// Mass and momentum without the affine term.
pub fn p2g_pic(
    particles: &[Particle],
    grid: &mut BlockSparseGrid,
    settings: &TransferSettings,
) -> Result<()> {
    let parts = ScatterParts { mass: true, momentum: true, affine: false, force_dt: None };
    scatter(particles, &[], grid, settings, &parts, &mut TransferCounters::default())
}

/// Mass and momentum with the affine term `m_p B_p D_p⁻¹ (x_i − x_p)`.
pub fn p2g_apic(
    particles: &[Particle],
    grid: &mut BlockSparseGrid,
    settings: &TransferSettings,
) -> Result<()> {
    let parts = ScatterParts { mass: true, momentum: true, affine: true, force_dt: None };
    scatter(particles, &[], grid, settings, &parts, &mut TransferCounters::default())
}

/// Adds `Δt f_i` with `f_i = −Σ_p V₀ τ_p ∇w_ip` on every grid independently.
pub fn p2g_force(
    particles: &[Particle],
    materials: &[Material],
    grid: &mut BlockSparseGrid,
    settings: &TransferSettings,
    dt: f64,
) -> Result<()> {
    let parts = ScatterParts { mass: false, momentum: false, affine: false, force_dt: Some(dt) };
    scatter(particles, materials, grid, settings, &parts, &mut TransferCounters::default())
}

/// Momentum → velocity, gravity, boundary conditions.
pub fn grid_update(
    grid: &mut BlockSparseGrid,
    dt: f64,
    gravity: &Vector3,
    bcs: &[BoundaryCondition],
    mass_epsilon: f64,
) {
    grid.grid_velocities(dt, gravity, bcs, mass_epsilon);
}

/// Quantities gathered for one particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gathered {
    pub v: Vector3,
    /// APIC `B = s Σ w ṽ (x_i − x_p)ᵀ`; zero under PIC.
    pub b: Matrix3,
    /// `s Σ ṽ ∇wᵀ` (MLS: `∇Φ` in place of `∇w`).
    pub grad_v: Matrix3,
}

#[inline]
fn gather_one(
    x: &Vector3,
    settings: &TransferSettings,
    geometry: &GridGeometry,
    grid: &BlockSparseGrid,
    st: &mut ParticleStencil,
) -> Result<Gathered> {
    let dx = geometry.dx;
    st.fill(x, settings.kernel, geometry, settings.trig)?;
    let mls = match settings.scheme {
        TransferScheme::Mls => Some(MlsFrame::from_stencil(x, st, dx)?),
        _ => None,
    };
    let want_b = settings.scheme != TransferScheme::Pic;
    let index = grid.index();
    let field = &grid.field;
    let mut v = Vector3::zeros();
    let mut b = Matrix3::zeros();
    let mut gv = Matrix3::zeros();
    let mut massive = false;
    for n in 0..st.len() {
        let i = index.node_index_checked(st.layer[n] as usize, st.node[n])?;
        let w = st.weight[n];
        if w > 0.0 && field.mass[i] > settings.mass_epsilon {
            massive = true;
        }
        let vi = field.momentum[i];
        v += vi * w;
        if want_b {
            b += (vi * w) * st.offset[n].transpose();
        }
        let g = match &mls {
            Some(frame) => frame.shape_gradient(w, &st.offset[n]),
            None => st.grad[n],
        };
        gv += vi * g.transpose();
    }
    if !massive {
        return Err(Error::ZeroGatheredMass { particle: None });
    }
    let s = st.gather_scale();
    Ok(Gathered { v: v * s, b: b * s, grad_v: gv * s })
}

/// Velocity, `B` and `∇v` of a particle at `x` from finalized grid velocities.
pub fn gather(x: &Vector3, grid: &BlockSparseGrid, settings: &TransferSettings) -> Result<Gathered> {
    gather_one(x, settings, grid.geometry(), grid, &mut ParticleStencil::default())
}

/// `v_p = s Σ_k Σ_i w ṽ_i`.
pub fn g2p_pic(x: &Vector3, grid: &BlockSparseGrid, settings: &TransferSettings) -> Result<Vector3> {
    Ok(gather(x, grid, settings)?.v)
}

/// `B = s Σ_k Σ_i w ṽ_i (x_i − x_p)ᵀ`.
pub fn g2p_apic_b(x: &Vector3, grid: &BlockSparseGrid, settings: &TransferSettings) -> Result<Matrix3> {
    let s = TransferSettings { scheme: TransferScheme::Apic, ..*settings };
    Ok(gather(x, grid, &s)?.b)
}

/// `∇v = s Σ_k Σ_i ṽ_i ∇w_iᵀ`.
pub fn velocity_gradient(x: &Vector3, grid: &BlockSparseGrid, settings: &TransferSettings) -> Result<Matrix3> {
    Ok(gather(x, grid, settings)?.grad_v)
}

/// The literal mass-weighted gather `(1/2m_p) Σ_k Σ_i w m_i ṽ_i`.
///
/// Kept for comparison only: it does not reproduce a single particle's
/// velocity after a P2G/G2P round trip, so the pipeline uses the plain
/// weighted average instead.
pub fn g2p_velocity_mass_weighted(
    x: &Vector3,
    particle_mass: f64,
    grid: &BlockSparseGrid,
    settings: &TransferSettings,
) -> Result<Vector3> {
    let geometry = grid.geometry();
    let st = ParticleStencil::new(x, settings.kernel, geometry, settings.trig)?;
    let index = grid.index();
    let mut v = Vector3::zeros();
    for n in 0..st.len() {
        let i = index.node_index_checked(st.layer[n] as usize, st.node[n])?;
        v += grid.field.momentum[i] * (st.weight[n] * grid.field.mass[i]);
    }
    Ok(v * (st.gather_scale() / particle_mass))
}

/// `F ← (I + Δt ∇v) F`.
#[inline]
pub fn update_f(f: &Matrix3, grad_v: &Matrix3, dt: f64) -> Matrix3 {
    (Matrix3::identity() + grad_v * dt) * f
}

#[inline]
fn update_one(
    p: &mut Particle,
    materials: &[Material],
    settings: &TransferSettings,
    geometry: &GridGeometry,
    grid: &BlockSparseGrid,
    dt: f64,
    st: &mut ParticleStencil,
) -> Result<()> {
    let g = gather_one(&p.x, settings, geometry, grid, st)?;
    let material = materials
        .get(p.material as usize)
        .ok_or_else(|| crate::error::invalid("material", "particle references unknown material"))?;
    p.v = g.v;
    if settings.scheme != TransferScheme::Pic {
        p.b = g.b;
    }
    p.grad_v = g.grad_v;
    if material.is_fluid() {
        let j = p.j * (1.0 + dt * g.grad_v.trace());
        if !(j > 0.0) {
            return Err(Error::InvertedElement { particle: None, det: j });
        }
        p.j = j;
    } else {
        p.f = material.project(&update_f(&p.f, &g.grad_v, dt))?;
    }
    p.x += p.v * dt;
    if !(p.x.iter().all(|c| c.is_finite()) && p.v.iter().all(|c| c.is_finite())) {
        return Err(Error::NonFinite { particle: None, what: "particle state" });
    }
    Ok(())
}

/// Gather, deformation update, plastic projection and advection for every
/// particle. The grid is read-only here, so the result does not depend on
/// the number of workers.
pub fn update_particles(
    particles: &mut [Particle],
    materials: &[Material],
    grid: &BlockSparseGrid,
    settings: &TransferSettings,
    dt: f64,
    counters: &mut TransferCounters,
) -> Result<()> {
    let geometry = *grid.geometry();
    let per = settings.kernel.nodes_per_particle() as u64;
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if rayon::current_num_threads() > 1 {
            particles.par_iter_mut().enumerate().try_for_each_init(ParticleStencil::default, |st, (pi, p)| {
                update_one(p, materials, settings, &geometry, grid, dt, st).map_err(|e| e.at_particle(pi))
            })?;
            counters.g2p_particles += particles.len() as u64;
            counters.g2p_node_visits += per * particles.len() as u64;
            return Ok(());
        }
    }
    let mut st = ParticleStencil::default();
    for (pi, p) in particles.iter_mut().enumerate() {
        update_one(p, materials, settings, &geometry, grid, dt, &mut st).map_err(|e| e.at_particle(pi))?;
    }
    counters.g2p_particles += particles.len() as u64;
    counters.g2p_node_visits += per * particles.len() as u64;
    Ok(())
}

#[cfg(feature = "parallel")]
mod parallel {
    use super::*;
    use alloc::vec::Vec;
    use rayon::prelude::*;

    /// Per-worker nodal mass, momentum and visit count.
    type Partial = (Vec<f64>, Vec<Vector3>, u64);

    /// Each worker scatters a contiguous particle range into a private copy
    /// of the node arrays; the copies are summed in range order.
    pub(super) fn scatter(
        particles: &[Particle],
        materials: &[Material],
        grid: &mut BlockSparseGrid,
        settings: &TransferSettings,
        parts: &ScatterParts,
        geometry: &GridGeometry,
    ) -> Result<u64> {
        let chunks = rayon::current_num_threads();
        let chunk_len = particles.len().div_ceil(chunks);
        let n = grid.field.mass.len();
        let (index, field) = grid.split_mut();
        let partials: Vec<Result<Partial>> = particles
            .par_chunks(chunk_len)
            .enumerate()
            .map(|(c, chunk)| {
                let mut mass = alloc::vec![0.0; n];
                let mut momentum = alloc::vec![Vector3::zeros(); n];
                let mut visits = 0u64;
                let mut st = ParticleStencil::default();
                for (k, p) in chunk.iter().enumerate() {
                    visits += scatter_one(p, materials, settings, parts, geometry, &index, &mut st, &mut mass, &mut momentum)
                        .map_err(|e| e.at_particle(c * chunk_len + k))? as u64;
                }
                Ok((mass, momentum, visits))
            })
            .collect();
        let mut visits = 0;
        for part in partials {
            let (mass, momentum, v) = part?;
            visits += v;
            field.mass.par_iter_mut().zip(mass.par_iter()).for_each(|(a, b)| *a += b);
            field.momentum.par_iter_mut().zip(momentum.par_iter()).for_each(|(a, b)| *a += b);
        }
        Ok(visits)
    }
}
