//! Transfer kernels: the compact C² kernel on the staggered dual grid and the
//! quadratic B-spline baseline on a single collocated grid.
//!
//! Node `i` of grid `G_k` (`k = ±1`) sits at `i·Δx + k·Δx/4` on every axis.
//! A particle at `x` is mapped into grid `G_k` by `x - k·Δx/4`, and its stencil
//! on that grid is the 2×2×2 corner set of the cell it falls in.

use core::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::math;
use crate::Vector3;

/// `𝒦₁(u) = 1 − |u| + sin(2π|u|)/(2π)` on `|u| < 1`, zero elsewhere.
#[inline]
pub fn ck_weight_1d(u: f64) -> f64 {
    let a = u.abs();
    if a >= 1.0 {
        0.0
    } else {
        1.0 - a + math::sin(TAU * a) / TAU
    }
}

/// Derivative of [`ck_weight_1d`]: `sgn(u)(cos(2πu) − 1)` inside the support.
#[inline]
pub fn ck_grad_1d(u: f64) -> f64 {
    let a = u.abs();
    if a >= 1.0 || a == 0.0 {
        0.0
    } else {
        u.signum() * (math::cos(TAU * a) - 1.0)
    }
}

/// `𝒦₁(u) + 𝒦₁(1 − u)`, which is identically one on `[0, 1]`.
pub fn partition_pair_1d(u: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::OutsideUnitInterval { value: u });
    }
    Ok(ck_weight_1d(u) + ck_weight_1d(1.0 - u))
}

/// Quadratic B-spline `N(u)`, support `|u| < 3/2`.
#[inline]
pub fn quad_weight_1d(u: f64) -> f64 {
    let a = u.abs();
    if a < 0.5 {
        0.75 - a * a
    } else if a < 1.5 {
        0.5 * (1.5 - a) * (1.5 - a)
    } else {
        0.0
    }
}

/// Derivative of [`quad_weight_1d`].
#[inline]
pub fn quad_grad_1d(u: f64) -> f64 {
    let a = u.abs();
    if a < 0.5 {
        -2.0 * u
    } else if a < 1.5 {
        -u.signum() * (1.5 - a)
    } else {
        0.0
    }
}

/// One of the two staggered grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GridTag {
    /// `G₋`, nodes at `i·Δx − Δx/4`.
    Minus,
    /// `G₊`, nodes at `i·Δx + Δx/4`.
    Plus,
}

impl GridTag {
    pub const BOTH: [GridTag; 2] = [GridTag::Minus, GridTag::Plus];

    /// `k ∈ {−1, +1}`.
    #[inline]
    pub fn sign(self) -> i32 {
        match self {
            GridTag::Minus => -1,
            GridTag::Plus => 1,
        }
    }

    /// Node offset from the integer lattice, in cells.
    #[inline]
    pub fn offset_cells(self) -> f64 {
        0.25 * self.sign() as f64
    }

    /// Storage layer of this grid in a dual-layout [`crate::dualgrid::BlockSparseGrid`].
    #[inline]
    pub fn layer(self) -> usize {
        match self {
            GridTag::Minus => 0,
            GridTag::Plus => 1,
        }
    }
}

/// Uniform grid geometry: cell size and number of cells per axis.
///
/// Valid node indices run over `0..=resolution[a]` on every axis and on every
/// grid layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub dx: f64,
    pub resolution: [usize; 3],
}

impl GridGeometry {
    pub fn new(dx: f64, resolution: [usize; 3]) -> Result<Self> {
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(crate::error::invalid("dx", "must be positive and finite"));
        }
        if resolution.iter().any(|&n| n < 4) {
            return Err(crate::error::invalid("resolution", "every axis needs at least 4 cells"));
        }
        Ok(Self { dx, resolution })
    }

    /// Domain extent in world units.
    pub fn extent(&self) -> Vector3 {
        Vector3::new(
            self.resolution[0] as f64 * self.dx,
            self.resolution[1] as f64 * self.dx,
            self.resolution[2] as f64 * self.dx,
        )
    }

    /// True if `x` lies at least `cells` cells inside every domain face.
    pub fn is_inset(&self, x: &Vector3, cells: f64) -> bool {
        (0..3).all(|a| {
            let g = x[a] / self.dx;
            g >= cells && g <= self.resolution[a] as f64 - cells
        })
    }

    #[inline]
    pub(crate) fn check_nodes(&self, lo: [i32; 3], hi: [i32; 3]) -> Result<()> {
        for a in 0..3 {
            if lo[a] < 0 {
                return Err(Error::DomainExit { particle: None, node: lo });
            }
            if hi[a] > self.resolution[a] as i32 {
                return Err(Error::DomainExit { particle: None, node: hi });
            }
        }
        Ok(())
    }
}

/// How the trigonometric part of the compact kernel is evaluated.
///
/// Only [`TrigMode::Exact`] preserves momentum to round-off; the other modes
/// exist for benchmarking and for demonstrating that loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrigMode {
    /// Double precision with the platform's correctly rounded sine/cosine.
    #[default]
    Exact,
    /// Single precision sine/cosine, results widened to `f64`.
    Single,
    /// Single precision parabolic sine approximation, each node evaluated
    /// independently. Test hook only.
    FastApprox,
}

/// Offsets `(s, t, u)` of the eight nodes of a compact stencil, x-major.
pub const NODE_OFFSETS_8: [[i32; 3]; 8] = [
    [0, 0, 0],
    [0, 0, 1],
    [0, 1, 0],
    [0, 1, 1],
    [1, 0, 0],
    [1, 0, 1],
    [1, 1, 0],
    [1, 1, 1],
];

/// Offsets of the 27 nodes of a quadratic stencil, x-major.
pub const NODE_OFFSETS_27: [[i32; 3]; 27] = {
    let mut out = [[0i32; 3]; 27];
    let mut n = 0;
    while n < 27 {
        out[n] = [(n / 9) as i32, ((n / 3) % 3) as i32, (n % 3) as i32];
        n += 1;
    }
    out
};

/// Compact-kernel weights of one particle on one grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelStencil {
    /// Minimal-corner node index on this grid.
    pub base: [i32; 3],
    /// Fractional cell coordinate of the particle on this grid, each in `[0, 1)`.
    pub frac: [f64; 3],
    /// Weights of the nodes in [`NODE_OFFSETS_8`] order.
    pub weights: [f64; 8],
    /// Weight gradients with respect to the particle position (1/m).
    pub grads: [Vector3; 8],
    pub grid: GridTag,
}

impl KernelStencil {
    /// Global index of stencil node `n`.
    #[inline]
    pub fn node(&self, n: usize) -> [i32; 3] {
        let o = NODE_OFFSETS_8[n];
        [self.base[0] + o[0], self.base[1] + o[1], self.base[2] + o[2]]
    }

    /// `x_i − x_p` for stencil node `n`, computed from the fractional
    /// coordinate so that it does not suffer cancellation far from the origin.
    #[inline]
    pub fn node_offset(&self, n: usize, dx: f64) -> Vector3 {
        let o = NODE_OFFSETS_8[n];
        Vector3::new(
            (o[0] as f64 - self.frac[0]) * dx,
            (o[1] as f64 - self.frac[1]) * dx,
            (o[2] as f64 - self.frac[2]) * dx,
        )
    }
}

/// Per-axis weights and derivatives (in `1/cell` units) of the two nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub w: [f64; 2],
    pub dw: [f64; 2],
}

#[inline]
fn axis_exact(f: f64) -> Axis {
    let (s, c) = math::sin_cos(TAU * f);
    let s = s / TAU;
    // Node 1 sits at u = f − 1, where sin(2π|u|) = −sin(2πf) and cos matches.
    Axis { w: [1.0 - f + s, f - s], dw: [c - 1.0, 1.0 - c] }
}

#[inline]
fn axis_single(f: f64) -> Axis {
    let fs = f as f32;
    let (s, c) = math::sin_cos_f32(core::f32::consts::TAU * fs);
    let s = s / core::f32::consts::TAU;
    Axis {
        w: [(1.0 - fs + s) as f64, (fs - s) as f64],
        dw: [(c - 1.0) as f64, (1.0 - c) as f64],
    }
}

/// Parabolic sine with one refinement step, about 1e-3 absolute error.
#[inline]
fn fast_sin(x: f32) -> f32 {
    use core::f32::consts::{PI, TAU};
    let mut t = x - TAU * math::floor_f32((x + PI) / TAU);
    t = t.clamp(-PI, PI);
    let y = (4.0 / PI) * t - (4.0 / (PI * PI)) * t * t.abs();
    0.225 * (y * y.abs() - y) + y
}

#[inline]
fn axis_fast(f: f64) -> Axis {
    use core::f32::consts::{FRAC_PI_2, TAU};
    let fs = f as f32;
    let mut out = Axis { w: [0.0; 2], dw: [0.0; 2] };
    for node in 0..2 {
        let u = fs - node as f32;
        let a = u.abs();
        let s = fast_sin(TAU * a);
        let c = fast_sin(TAU * a + FRAC_PI_2);
        out.w[node] = (1.0 - a + s / TAU) as f64;
        out.dw[node] = if a == 0.0 { 0.0 } else { (u.signum() * (c - 1.0)) as f64 };
    }
    out
}

#[inline]
fn axis_eval(f: f64, mode: TrigMode) -> Axis {
    match mode {
        TrigMode::Exact => axis_exact(f),
        TrigMode::Single => axis_single(f),
        TrigMode::FastApprox => axis_fast(f),
    }
}

/// Lower stencil node and fractional coordinate of grid coordinate `g`.
#[inline]
fn split_cell(g: f64) -> Result<(i32, f64)> {
    if !g.is_finite() {
        return Err(Error::NonFinite { particle: None, what: "position" });
    }
    let b = math::floor_i32(g);
    Ok((b, g - b as f64))
}

/// Separable factors of a compact stencil: the node weight of offset
/// `(s, t, u)` is `w[0][s]·w[1][t]·w[2][u]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompactAxes {
    pub base: [i32; 3],
    pub frac: [f64; 3],
    pub axes: [Axis; 3],
    pub grid: GridTag,
}

/// Per-axis compact-kernel factors of a particle at `x` on grid `grid`.
#[inline]
pub fn compact_axes(
    x: &Vector3,
    grid: GridTag,
    geometry: &GridGeometry,
    mode: TrigMode,
) -> Result<CompactAxes> {
    let inv_dx = 1.0 / geometry.dx;
    let shift = grid.offset_cells();
    let mut base = [0i32; 3];
    let mut frac = [0.0; 3];
    let mut axes = [Axis { w: [0.0; 2], dw: [0.0; 2] }; 3];
    for a in 0..3 {
        let (b, f) = split_cell(x[a] * inv_dx - shift)?;
        base[a] = b;
        frac[a] = f;
        axes[a] = axis_eval(f, mode);
    }
    geometry.check_nodes(base, [base[0] + 1, base[1] + 1, base[2] + 1])?;
    Ok(CompactAxes { base, frac, axes, grid })
}

/// [`compact_axes`] on both grids, in [`GridTag::BOTH`] order.
///
/// The grids' fractional coordinates differ by half a cell, so in exact
/// mode one `sin`/`cos` per axis serves both (with flipped sign).
#[inline]
pub fn compact_axes_pair(x: &Vector3, geometry: &GridGeometry, mode: TrigMode) -> Result<[CompactAxes; 2]> {
    if mode != TrigMode::Exact {
        return Ok([
            compact_axes(x, GridTag::BOTH[0], geometry, mode)?,
            compact_axes(x, GridTag::BOTH[1], geometry, mode)?,
        ]);
    }
    let inv_dx = 1.0 / geometry.dx;
    let mut out = [CompactAxes {
        base: [0; 3],
        frac: [0.0; 3],
        axes: [Axis { w: [0.0; 2], dw: [0.0; 2] }; 3],
        grid: GridTag::BOTH[0],
    }; 2];
    out[1].grid = GridTag::BOTH[1];
    for a in 0..3 {
        let g = x[a] * inv_dx;
        let (b0, f0) = split_cell(g - GridTag::BOTH[0].offset_cells())?;
        let (b1, f1) = split_cell(g - GridTag::BOTH[1].offset_cells())?;
        let (s, c) = math::sin_cos(TAU * f0);
        let s = s / TAU;
        out[0].base[a] = b0;
        out[0].frac[a] = f0;
        out[0].axes[a] = Axis { w: [1.0 - f0 + s, f0 - s], dw: [c - 1.0, 1.0 - c] };
        out[1].base[a] = b1;
        out[1].frac[a] = f1;
        out[1].axes[a] = Axis { w: [1.0 - f1 - s, f1 + s], dw: [-c - 1.0, 1.0 + c] };
    }
    for c in &out {
        geometry.check_nodes(c.base, [c.base[0] + 1, c.base[1] + 1, c.base[2] + 1])?;
    }
    Ok(out)
}

/// Compact stencil of a particle at `x` on grid `grid`.
pub fn stencil(x: &Vector3, grid: GridTag, geometry: &GridGeometry) -> Result<KernelStencil> {
    stencil_with(x, grid, geometry, TrigMode::Exact)
}

/// [`stencil`] with an explicit trigonometric evaluation mode.
pub fn stencil_with(
    x: &Vector3,
    grid: GridTag,
    geometry: &GridGeometry,
    mode: TrigMode,
) -> Result<KernelStencil> {
    let inv_dx = 1.0 / geometry.dx;
    let c = compact_axes(x, grid, geometry, mode)?;
    let mut weights = [0.0; 8];
    let mut grads = [Vector3::zeros(); 8];
    for (n, o) in NODE_OFFSETS_8.iter().enumerate() {
        let (ax, ay, az) = (&c.axes[0], &c.axes[1], &c.axes[2]);
        let (i, j, k) = (o[0] as usize, o[1] as usize, o[2] as usize);
        let (wx, wy, wz) = (ax.w[i], ay.w[j], az.w[k]);
        weights[n] = wx * wy * wz;
        grads[n] = Vector3::new(
            ax.dw[i] * wy * wz * inv_dx,
            wx * ay.dw[j] * wz * inv_dx,
            wx * wy * az.dw[k] * inv_dx,
        );
    }
    Ok(KernelStencil { base: c.base, frac: c.frac, weights, grads, grid })
}

/// Quadratic B-spline weights of one particle on the collocated grid
/// (nodes at `i·Δx`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadStencil {
    pub base: [i32; 3],
    /// Particle coordinate relative to `base`, in cells; each in `[0.5, 1.5)`.
    pub frac: [f64; 3],
    pub weights: [f64; 27],
    pub grads: [Vector3; 27],
}

impl QuadStencil {
    #[inline]
    pub fn node(&self, n: usize) -> [i32; 3] {
        let o = NODE_OFFSETS_27[n];
        [self.base[0] + o[0], self.base[1] + o[1], self.base[2] + o[2]]
    }

    #[inline]
    pub fn node_offset(&self, n: usize, dx: f64) -> Vector3 {
        let o = NODE_OFFSETS_27[n];
        Vector3::new(
            (o[0] as f64 - self.frac[0]) * dx,
            (o[1] as f64 - self.frac[1]) * dx,
            (o[2] as f64 - self.frac[2]) * dx,
        )
    }
}

/// Separable factors of a quadratic stencil (derivatives in `1/cell`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadAxes {
    pub base: [i32; 3],
    pub frac: [f64; 3],
    pub w: [[f64; 3]; 3],
    pub dw: [[f64; 3]; 3],
}

/// Per-axis quadratic B-spline factors of a particle at `x`.
#[inline]
pub fn quad_axes(x: &Vector3, geometry: &GridGeometry) -> Result<QuadAxes> {
    let inv_dx = 1.0 / geometry.dx;
    let mut base = [0i32; 3];
    let mut frac = [0.0; 3];
    let mut w = [[0.0; 3]; 3];
    let mut dw = [[0.0; 3]; 3];
    for a in 0..3 {
        let g = x[a] * inv_dx;
        let (b, _) = split_cell(g - 0.5)?;
        let f = g - b as f64;
        base[a] = b;
        frac[a] = f;
        let (d0, d1, d2) = (1.5 - f, f - 1.0, f - 0.5);
        w[a] = [0.5 * d0 * d0, 0.75 - d1 * d1, 0.5 * d2 * d2];
        dw[a] = [-d0, -2.0 * d1, d2];
    }
    geometry.check_nodes(base, [base[0] + 2, base[1] + 2, base[2] + 2])?;
    Ok(QuadAxes { base, frac, w, dw })
}

/// Quadratic B-spline stencil of a particle at `x`.
pub fn quad_bspline_stencil(x: &Vector3, geometry: &GridGeometry) -> Result<QuadStencil> {
    let inv_dx = 1.0 / geometry.dx;
    let q = quad_axes(x, geometry)?;
    let mut weights = [0.0; 27];
    let mut grads = [Vector3::zeros(); 27];
    for (n, o) in NODE_OFFSETS_27.iter().enumerate() {
        let (i, j, k) = (o[0] as usize, o[1] as usize, o[2] as usize);
        let (wx, wy, wz) = (q.w[0][i], q.w[1][j], q.w[2][k]);
        weights[n] = wx * wy * wz;
        grads[n] = Vector3::new(
            q.dw[0][i] * wy * wz * inv_dx,
            wx * q.dw[1][j] * wz * inv_dx,
            wx * wy * q.dw[2][k] * inv_dx,
        );
    }
    Ok(QuadStencil { base: q.base, frac: q.frac, weights, grads })
}

/// Dual-grid position reconstruction `(1/|K|) Σ_{k∈K} Σ_i w_i x_i` over the
/// grids in `grids`. With both grids this returns `x`; with one grid alone it
/// does not (ablation hook).
pub fn reconstruct_position(x: &Vector3, geometry: &GridGeometry, grids: &[GridTag]) -> Result<Vector3> {
    let dx = geometry.dx;
    let mut sum = Vector3::zeros();
    for &g in grids {
        let st = stencil(x, g, geometry)?;
        for n in 0..8 {
            let node = st.node(n);
            let xi = Vector3::new(node[0] as f64, node[1] as f64, node[2] as f64)
                .add_scalar(g.offset_cells())
                * dx;
            sum += xi * st.weights[n];
        }
    }
    Ok(sum / grids.len().max(1) as f64)
}
