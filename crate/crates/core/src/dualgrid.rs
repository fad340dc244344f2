//! Block-sparse storage for the staggered grids.
//!
//! The domain is tiled by 4×4×4-node blocks. A dense table maps each block
//! coordinate to a storage slot, and each slot owns contiguous node arrays for
//! every grid layer of that block: the `G₋` and `G₊` blocks sharing a block
//! index form one paired entity, indexed block → layer → attribute → node.
//! Only blocks touched by some particle stencil (plus a one-block halo in the
//! positive directions) are active.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::kernel::{GridGeometry, GridTag};
use crate::math;
use crate::Vector3;

/// Cells (and nodes) per block edge.
pub const BLOCK: i32 = 4;
/// Nodes per block per layer.
pub const BLOCK_NODES: usize = 64;

const NO_SLOT: u32 = u32::MAX;

/// Which grids are stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridLayout {
    /// The compact kernel's `G₋` (layer 0) and `G₊` (layer 1).
    Dual,
    /// A single collocated grid with nodes at `i·Δx` (quadratic baseline).
    Single,
}

impl GridLayout {
    pub fn layers(self) -> usize {
        match self {
            GridLayout::Dual => 2,
            GridLayout::Single => 1,
        }
    }

    /// Node offset of `layer` from the integer lattice, in cells.
    #[inline]
    pub fn layer_offset(self, layer: usize) -> f64 {
        match self {
            GridLayout::Dual => GridTag::BOTH[layer].offset_cells(),
            GridLayout::Single => 0.0,
        }
    }

    /// Range of node indices (relative to the lower one) a particle's
    /// stencil spans on one layer, and the grid-space shift of that layer's
    /// stencil base.
    fn stencil_span(self) -> (i32, f64) {
        match self {
            GridLayout::Dual => (2, 0.0),
            GridLayout::Single => (3, 0.5),
        }
    }
}

/// Per-node fields of every active node, structure-of-arrays.
///
/// `momentum` holds momentum during scatter and velocity after
/// [`BlockSparseGrid::grid_velocities`]. Node `n` of `layer` in slot `s`
/// lives at `(s * layers + layer) * 64 + n`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeField {
    pub mass: Vec<f64>,
    pub momentum: Vec<Vector3>,
    /// Nonzero where a boundary condition acted during the last grid update.
    pub flags: Vec<u8>,
}

impl NodeField {
    fn resize(&mut self, n: usize) {
        self.mass.clear();
        self.mass.resize(n, 0.0);
        self.momentum.clear();
        self.momentum.resize(n, Vector3::zeros());
        self.flags.clear();
        self.flags.resize(n, 0);
    }

    fn clear(&mut self) {
        self.mass.iter_mut().for_each(|m| *m = 0.0);
        self.momentum.iter_mut().for_each(|p| *p = Vector3::zeros());
        self.flags.iter_mut().for_each(|f| *f = 0);
    }
}

/// Boundary treatment of the grid velocity inside a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// Velocity set to the wall velocity.
    Sticky,
    /// Normal component (relative to the wall) removed.
    Slip,
    /// Normal component removed only when moving into the wall.
    Separate,
}

/// Region of space a boundary condition acts on, in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    /// Points with `(x − point)·normal ≤ 0`; `normal` is the unit wall normal
    /// pointing into the free domain.
    HalfSpace { point: Vector3, normal: Vector3 },
    /// Axis-aligned box; slip and separate need an explicit wall normal.
    Box { min: Vector3, max: Vector3, normal: Option<Vector3> },
}

impl Region {
    #[inline]
    pub fn contains(&self, x: &Vector3) -> bool {
        match self {
            Region::HalfSpace { point, normal } => (x - point).dot(normal) <= 0.0,
            Region::Box { min, max, .. } => (0..3).all(|a| x[a] >= min[a] && x[a] <= max[a]),
        }
    }

    pub fn normal(&self) -> Option<Vector3> {
        match self {
            Region::HalfSpace { normal, .. } => Some(*normal),
            Region::Box { normal, .. } => *normal,
        }
    }
}

/// Rigid velocity field `v(x) = linear + angular × (x − center)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion {
    pub linear: Vector3,
    pub angular: Vector3,
    pub center: Vector3,
}

impl Default for RigidMotion {
    fn default() -> Self {
        Self { linear: Vector3::zeros(), angular: Vector3::zeros(), center: Vector3::zeros() }
    }
}

impl RigidMotion {
    #[inline]
    pub fn velocity_at(&self, x: &Vector3) -> Vector3 {
        self.linear + self.angular.cross(&(x - self.center))
    }

    fn is_static(&self) -> bool {
        self.linear == Vector3::zeros() && self.angular == Vector3::zeros()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCondition {
    pub kind: BoundaryKind,
    pub region: Region,
    /// Wall motion; zero for static walls.
    pub motion: RigidMotion,
}

impl BoundaryCondition {
    pub fn new(kind: BoundaryKind, region: Region) -> Self {
        Self { kind, region, motion: RigidMotion::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != BoundaryKind::Sticky {
            match self.region.normal() {
                None => return Err(invalid("boundary.normal", "slip/separate need a wall normal")),
                Some(n) if (n.norm() - 1.0).abs() > 1e-9 => {
                    return Err(invalid("boundary.normal", "must be a unit vector"))
                }
                _ => {}
            }
        }
        if let Region::Box { min, max, .. } = self.region {
            if (0..3).any(|a| min[a] > max[a]) {
                return Err(invalid("boundary.region", "box min exceeds max"));
            }
        }
        Ok(())
    }

    /// Velocity of a node at `x` after this condition, if the node lies in
    /// the region.
    #[inline]
    pub fn apply(&self, x: &Vector3, v: Vector3) -> Option<Vector3> {
        if !self.region.contains(x) {
            return None;
        }
        Some(apply_boundary_velocity(self.kind, self.region.normal(), &self.motion, x, v))
    }
}

/// Boundary projection of a single nodal velocity.
///
/// Sticky: `v ← v_wall`. Slip: `v ← v − (v·n)n`. Separate:
/// `v ← v − min(v·n, 0)n`. Slip and separate act on the velocity relative to
/// the wall.
pub fn apply_boundary_velocity(
    kind: BoundaryKind,
    normal: Option<Vector3>,
    motion: &RigidMotion,
    x: &Vector3,
    v: Vector3,
) -> Vector3 {
    let wall = if motion.is_static() { Vector3::zeros() } else { motion.velocity_at(x) };
    match kind {
        BoundaryKind::Sticky => wall,
        BoundaryKind::Slip | BoundaryKind::Separate => {
            let Some(n) = normal else { return v };
            let rel = v - wall;
            let vn = rel.dot(&n);
            let remove = if kind == BoundaryKind::Slip { vn } else { vn.min(0.0) };
            wall + rel - n * remove
        }
    }
}

/// Node lookup detached from the node field, so a scatter can hold the
/// lookup while writing nodal data.
#[derive(Debug, Clone, Copy)]
pub struct GridIndex<'a> {
    slots: &'a [u32],
    dims: [i32; 3],
    layers: usize,
}

impl GridIndex<'_> {
    #[inline]
    pub fn node_index(&self, layer: usize, node: [i32; 3]) -> Option<usize> {
        let b = [node[0] >> 2, node[1] >> 2, node[2] >> 2];
        let d = self.dims;
        if (0..3).any(|a| b[a] < 0 || b[a] >= d[a]) {
            return None;
        }
        let slot = self.slots[((b[0] * d[1] + b[1]) * d[2] + b[2]) as usize];
        if slot == NO_SLOT {
            return None;
        }
        let local = (((node[0] & 3) << 4) | ((node[1] & 3) << 2) | (node[2] & 3)) as usize;
        Some((slot as usize * self.layers + layer) * BLOCK_NODES + local)
    }

    #[inline]
    pub fn node_index_checked(&self, layer: usize, node: [i32; 3]) -> Result<usize> {
        self.node_index(layer, node).ok_or(Error::InactiveNode { particle: None, node })
    }
}

/// Summary row of the debug dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSummary {
    pub block: [i32; 3],
    pub grid_tag: i32,
    pub mass_total: f64,
}

/// Sparse block-structured node storage for one or two staggered grids.
#[derive(Debug, Clone)]
pub struct BlockSparseGrid {
    geometry: GridGeometry,
    layout: GridLayout,
    block_dims: [i32; 3],
    slots: Vec<u32>,
    blocks: Vec<[i32; 3]>,
    pub field: NodeField,
    touched: Vec<bool>,
}

impl BlockSparseGrid {
    pub fn new(geometry: GridGeometry, layout: GridLayout) -> Self {
        // Nodes 0..=n on every axis, plus one halo block.
        let block_dims = geometry.resolution.map(|n| (n as i32 + 1 + BLOCK - 1) / BLOCK + 1);
        let total = block_dims.iter().product::<i32>() as usize;
        Self {
            geometry,
            layout,
            block_dims,
            slots: vec![NO_SLOT; total],
            blocks: Vec::new(),
            field: NodeField::default(),
            touched: vec![false; total],
        }
    }

    #[inline]
    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    #[inline]
    pub fn layout(&self) -> GridLayout {
        self.layout
    }

    #[inline]
    pub fn layers(&self) -> usize {
        self.layout.layers()
    }

    /// Active block coordinates in slot order (lexicographic).
    pub fn active_blocks(&self) -> &[[i32; 3]] {
        &self.blocks
    }

    pub fn active_block_count(&self) -> usize {
        self.blocks.len()
    }

    #[inline]
    fn table_index(&self, b: [i32; 3]) -> Option<usize> {
        let d = self.block_dims;
        if (0..3).any(|a| b[a] < 0 || b[a] >= d[a]) {
            return None;
        }
        Some(((b[0] * d[1] + b[1]) * d[2] + b[2]) as usize)
    }

    /// Activates every block reached by any particle stencil on any layer,
    /// plus the halo, and releases all others. Nodal data is zeroed.
    ///
    /// Particles must lie at least two cells inside every domain face.
    pub fn activate<'a, I>(&mut self, positions: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a Vector3>,
    {
        self.touched.iter_mut().for_each(|t| *t = false);
        let inv_dx = 1.0 / self.geometry.dx;
        let (span, shift) = self.layout.stencil_span();
        let mut last = None;
        for (p, x) in positions.into_iter().enumerate() {
            if !self.geometry.is_inset(x, 2.0) {
                return Err(Error::ParticleOutOfDomain {
                    particle: p,
                    position: [x[0], x[1], x[2]],
                    inset: 2,
                });
            }
            let mut lo = [0i32; 3];
            let mut hi = [0i32; 3];
            for a in 0..3 {
                let g = x[a] * inv_dx - shift;
                let mut l = i32::MAX;
                let mut h = i32::MIN;
                for layer in 0..self.layers() {
                    let b = math::floor_i32(g - self.layout.layer_offset(layer));
                    l = l.min(b);
                    h = h.max(b + span - 1);
                }
                lo[a] = l.div_euclid(BLOCK);
                hi[a] = h.div_euclid(BLOCK);
            }
            // Neighbouring particles usually share their block range.
            if last == Some((lo, hi)) {
                continue;
            }
            last = Some((lo, hi));
            for bx in lo[0]..=hi[0] + 1 {
                for by in lo[1]..=hi[1] + 1 {
                    for bz in lo[2]..=hi[2] + 1 {
                        if let Some(t) = self.table_index([bx, by, bz]) {
                            self.touched[t] = true;
                        }
                    }
                }
            }
        }
        self.rebuild();
        Ok(())
    }

    fn rebuild(&mut self) {
        self.blocks.clear();
        let d = self.block_dims;
        let mut t = 0usize;
        for bx in 0..d[0] {
            for by in 0..d[1] {
                for bz in 0..d[2] {
                    if self.touched[t] {
                        self.slots[t] = self.blocks.len() as u32;
                        self.blocks.push([bx, by, bz]);
                    } else {
                        self.slots[t] = NO_SLOT;
                    }
                    t += 1;
                }
            }
        }
        self.field.resize(self.blocks.len() * self.layers() * BLOCK_NODES);
    }

    /// Zeroes all nodal data, keeping the activation.
    pub fn clear(&mut self) {
        self.field.clear();
    }

    /// Storage index of node `node` on `layer`, if its block is active.
    #[inline]
    pub fn node_index(&self, layer: usize, node: [i32; 3]) -> Option<usize> {
        self.index().node_index(layer, node)
    }

    /// Read-only lookup view.
    #[inline]
    pub fn index(&self) -> GridIndex<'_> {
        GridIndex { slots: &self.slots, dims: self.block_dims, layers: self.layers() }
    }

    /// Lookup view plus mutable access to the node field, for scatters.
    #[inline]
    pub fn split_mut(&mut self) -> (GridIndex<'_>, &mut NodeField) {
        let layers = self.layers();
        (GridIndex { slots: &self.slots, dims: self.block_dims, layers }, &mut self.field)
    }

    /// Like [`Self::node_index`] but reports the miss as an error.
    #[inline]
    pub fn node_index_checked(&self, layer: usize, node: [i32; 3]) -> Result<usize> {
        self.node_index(layer, node).ok_or(Error::InactiveNode { particle: None, node })
    }

    /// World position of a node given its global index.
    #[inline]
    pub fn node_position(&self, layer: usize, node: [i32; 3]) -> Vector3 {
        let off = self.layout.layer_offset(layer);
        let dx = self.geometry.dx;
        Vector3::new(
            (node[0] as f64 + off) * dx,
            (node[1] as f64 + off) * dx,
            (node[2] as f64 + off) * dx,
        )
    }

    /// World position of local node `cell` of `block` on grid `tag`:
    /// `i·Δx + k·Δx/4` with `i = 4·block + cell`.
    pub fn node_world_position(
        &self,
        block: [i32; 3],
        tag: GridTag,
        cell: [i32; 3],
    ) -> Result<Vector3> {
        if self.table_index(block).is_none() || cell.iter().any(|&c| !(0..BLOCK).contains(&c)) {
            return Err(Error::IndexOutOfBounds { index: cell });
        }
        let layer = match self.layout {
            GridLayout::Dual => tag.layer(),
            GridLayout::Single => 0,
        };
        let node = [
            block[0] * BLOCK + cell[0],
            block[1] * BLOCK + cell[1],
            block[2] * BLOCK + cell[2],
        ];
        Ok(self.node_position(layer, node))
    }

    /// Global node index and layer of storage index `idx`.
    #[inline]
    pub fn node_of_index(&self, idx: usize) -> (usize, [i32; 3]) {
        let local = idx % BLOCK_NODES;
        let rest = idx / BLOCK_NODES;
        let layer = rest % self.layers();
        let b = self.blocks[rest / self.layers()];
        let l = local as i32;
        (layer, [b[0] * BLOCK + (l >> 4), b[1] * BLOCK + ((l >> 2) & 3), b[2] * BLOCK + (l & 3)])
    }

    /// Total nodal mass on one layer.
    pub fn layer_mass(&self, layer: usize) -> f64 {
        self.layer_chunks(layer).map(|r| self.field.mass[r].iter().sum::<f64>()).sum()
    }

    /// Total nodal momentum (or mass-weighted velocity after the grid update)
    /// on one layer.
    pub fn layer_momentum(&self, layer: usize) -> Vector3 {
        self.layer_chunks(layer)
            .map(|r| self.field.momentum[r].iter().fold(Vector3::zeros(), |a, p| a + p))
            .fold(Vector3::zeros(), |a, p| a + p)
    }

    /// Σ mᵢ vᵢ on one layer once the momentum field holds velocities.
    pub fn layer_velocity_momentum(&self, layer: usize) -> Vector3 {
        self.layer_chunks(layer)
            .map(|r| {
                r.fold(Vector3::zeros(), |a, i| a + self.field.momentum[i] * self.field.mass[i])
            })
            .fold(Vector3::zeros(), |a, p| a + p)
    }

    fn layer_chunks(&self, layer: usize) -> impl Iterator<Item = core::ops::Range<usize>> + '_ {
        let layers = self.layers();
        (0..self.blocks.len()).map(move |s| {
            let start = (s * layers + layer) * BLOCK_NODES;
            start..start + BLOCK_NODES
        })
    }

    /// Converts momentum to velocity, adds `dt·gravity`, and applies the
    /// boundary conditions. Nodes at or below `mass_epsilon` get zero
    /// velocity.
    pub fn grid_velocities(
        &mut self,
        dt: f64,
        gravity: &Vector3,
        bcs: &[BoundaryCondition],
        mass_epsilon: f64,
    ) {
        let dv = gravity * dt;
        for idx in 0..self.field.mass.len() {
            let m = self.field.mass[idx];
            if m <= mass_epsilon {
                self.field.momentum[idx] = Vector3::zeros();
                continue;
            }
            let mut v = self.field.momentum[idx] / m + dv;
            if !bcs.is_empty() {
                let (layer, node) = self.node_of_index(idx);
                let x = self.node_position(layer, node);
                for bc in bcs {
                    if let Some(nv) = bc.apply(&x, v) {
                        v = nv;
                        self.field.flags[idx] = 1;
                    }
                }
            }
            self.field.momentum[idx] = v;
        }
    }

    /// Applies boundary conditions to a field that already holds velocities.
    pub fn apply_boundary(&mut self, bcs: &[BoundaryCondition]) {
        for idx in 0..self.field.mass.len() {
            if self.field.mass[idx] <= 0.0 {
                continue;
            }
            let (layer, node) = self.node_of_index(idx);
            let x = self.node_position(layer, node);
            for bc in bcs {
                if let Some(v) = bc.apply(&x, self.field.momentum[idx]) {
                    self.field.momentum[idx] = v;
                    self.field.flags[idx] = 1;
                }
            }
        }
    }

    /// Per-block, per-layer nodal mass totals for debugging.
    pub fn block_summaries(&self) -> Vec<BlockSummary> {
        let layers = self.layers();
        let mut out = Vec::with_capacity(self.blocks.len() * layers);
        for (s, b) in self.blocks.iter().enumerate() {
            for layer in 0..layers {
                let start = (s * layers + layer) * BLOCK_NODES;
                let mass_total = self.field.mass[start..start + BLOCK_NODES].iter().sum();
                let grid_tag = match self.layout {
                    GridLayout::Dual => GridTag::BOTH[layer].sign(),
                    GridLayout::Single => 0,
                };
                out.push(BlockSummary { block: *b, grid_tag, mass_total });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(layout: GridLayout) -> BlockSparseGrid {
        BlockSparseGrid::new(GridGeometry::new(1.0, [32, 32, 32]).unwrap(), layout)
    }

    /// Blocks hit by the stencil nodes of `x`, enumerated node by node.
    fn enumerate_blocks(x: &Vector3, layout: GridLayout) -> alloc::collections::BTreeSet<[i32; 3]> {
        let mut set = alloc::collections::BTreeSet::new();
        for layer in 0..layout.layers() {
            let (span, shift) = layout.stencil_span();
            let off = layout.layer_offset(layer);
            let base: [i32; 3] =
                core::array::from_fn(|a| (x[a] - shift - off).floor() as i32);
            for i in 0..span {
                for j in 0..span {
                    for k in 0..span {
                        set.insert([
                            (base[0] + i).div_euclid(4),
                            (base[1] + j).div_euclid(4),
                            (base[2] + k).div_euclid(4),
                        ]);
                    }
                }
            }
        }
        set
    }

    fn with_halo(set: &alloc::collections::BTreeSet<[i32; 3]>) -> alloc::collections::BTreeSet<[i32; 3]> {
        let mut out = alloc::collections::BTreeSet::new();
        for b in set {
            for d in crate::kernel::NODE_OFFSETS_8 {
                out.insert([b[0] + d[0], b[1] + d[1], b[2] + d[2]]);
            }
        }
        out
    }

    #[test]
    fn empty_activation() {
        let mut g = grid(GridLayout::Dual);
        g.activate(core::iter::empty()).unwrap();
        assert_eq!(g.active_block_count(), 0);
    }

    #[test]
    fn single_interior_particle() {
        let mut g = grid(GridLayout::Dual);
        let x = Vector3::new(9.5, 9.5, 9.5);
        let touched = enumerate_blocks(&x, GridLayout::Dual);
        assert_eq!(touched.len(), 1);
        g.activate([x].iter()).unwrap();
        let active: alloc::collections::BTreeSet<_> = g.active_blocks().iter().copied().collect();
        assert_eq!(active, with_halo(&touched));
        assert_eq!(g.active_block_count(), 8);
    }

    #[test]
    fn particle_near_block_face() {
        let mut g = grid(GridLayout::Dual);
        // G₊ base is floor(11.9 - 0.25) = 11, so nodes 11 and 12 straddle blocks 2 and 3.
        let x = Vector3::new(11.9, 9.5, 9.5);
        let touched = enumerate_blocks(&x, GridLayout::Dual);
        assert!(touched.len() >= 2);
        g.activate([x].iter()).unwrap();
        let active: alloc::collections::BTreeSet<_> = g.active_blocks().iter().copied().collect();
        assert_eq!(active, with_halo(&touched));
    }

    #[test]
    fn activation_releases_old_blocks() {
        let mut g = grid(GridLayout::Dual);
        g.activate([Vector3::new(5.0, 5.0, 5.0)].iter()).unwrap();
        g.activate([Vector3::new(25.0, 25.0, 25.0)].iter()).unwrap();
        assert!(g.node_index(0, [5, 5, 5]).is_none());
        assert!(g.node_index(0, [25, 25, 25]).is_some());
    }

    #[test]
    fn activation_rejects_boundary_particles() {
        let mut g = grid(GridLayout::Dual);
        let xs = [Vector3::new(10.0, 10.0, 10.0), Vector3::new(1.5, 10.0, 10.0)];
        match g.activate(xs.iter()) {
            Err(Error::ParticleOutOfDomain { particle, .. }) => assert_eq!(particle, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn clear_semantics() {
        let mut g = grid(GridLayout::Dual);
        g.activate([Vector3::new(9.0, 9.0, 9.0)].iter()).unwrap();
        let idx = g.node_index(1, [9, 9, 9]).unwrap();
        g.field.mass[idx] = 2.0;
        g.field.momentum[idx] = Vector3::new(1.0, 2.0, 3.0);
        let n = g.active_block_count();
        g.clear();
        assert_eq!(g.layer_mass(1), 0.0);
        g.clear();
        assert_eq!(g.layer_mass(0) + g.layer_mass(1), 0.0);
        assert_eq!(g.layer_momentum(1), Vector3::zeros());
        assert_eq!(g.active_block_count(), n);
    }

    #[test]
    fn node_positions() {
        let g = grid(GridLayout::Dual);
        let p = g.node_world_position([0, 0, 0], GridTag::Plus, [0, 0, 0]).unwrap();
        assert_eq!(p, Vector3::repeat(0.25));
        let m = g.node_world_position([0, 0, 0], GridTag::Minus, [0, 0, 0]).unwrap();
        assert_eq!(m, Vector3::repeat(-0.25));
        let p = g.node_world_position([2, 1, 3], GridTag::Plus, [1, 2, 3]).unwrap();
        let m = g.node_world_position([2, 1, 3], GridTag::Minus, [1, 2, 3]).unwrap();
        assert_eq!(p - m, Vector3::repeat(0.5));
        assert!(g.node_world_position([0, 0, 0], GridTag::Plus, [4, 0, 0]).is_err());
        assert!(g.node_world_position([-1, 0, 0], GridTag::Plus, [0, 0, 0]).is_err());
    }

    #[test]
    fn index_roundtrip() {
        let mut g = grid(GridLayout::Dual);
        g.activate([Vector3::new(9.0, 17.0, 13.0)].iter()).unwrap();
        for idx in 0..g.field.mass.len() {
            let (layer, node) = g.node_of_index(idx);
            assert_eq!(g.node_index(layer, node), Some(idx));
        }
    }

    #[test]
    fn boundary_examples() {
        let v = Vector3::new(1.0, 2.0, 3.0);
        let n = Some(Vector3::new(0.0, 1.0, 0.0));
        let still = RigidMotion::default();
        let x = Vector3::zeros();
        assert_eq!(apply_boundary_velocity(BoundaryKind::Sticky, None, &still, &x, v), Vector3::zeros());
        let w = Vector3::new(1.0, -2.0, 3.0);
        assert_eq!(
            apply_boundary_velocity(BoundaryKind::Slip, n, &still, &x, w),
            Vector3::new(1.0, 0.0, 3.0)
        );
        assert_eq!(
            apply_boundary_velocity(BoundaryKind::Separate, n, &still, &x, w),
            Vector3::new(1.0, 0.0, 3.0)
        );
        assert_eq!(apply_boundary_velocity(BoundaryKind::Separate, n, &still, &x, v), v);
    }

    #[test]
    fn moving_sticky_wall() {
        let motion = RigidMotion {
            linear: Vector3::zeros(),
            angular: Vector3::new(0.0, 2.0, 0.0),
            center: Vector3::new(1.0, 0.0, 1.0),
        };
        let x = Vector3::new(2.0, 0.5, 1.0);
        let v = apply_boundary_velocity(BoundaryKind::Sticky, None, &motion, &x, Vector3::repeat(9.0));
        assert_eq!(v, Vector3::new(0.0, 0.0, -2.0));
    }

    #[test]
    fn grid_velocities_apply_gravity_and_floor() {
        let mut g = grid(GridLayout::Dual);
        g.activate([Vector3::new(9.0, 9.0, 9.0)].iter()).unwrap();
        let a = g.node_index(0, [9, 9, 9]).unwrap();
        let b = g.node_index(1, [9, 9, 9]).unwrap();
        g.field.mass[a] = 2.0;
        g.field.momentum[a] = Vector3::new(2.0, 4.0, 6.0);
        g.field.mass[b] = 1e-20;
        g.field.momentum[b] = Vector3::new(5.0, 5.0, 5.0);
        let floor = BoundaryCondition::new(
            BoundaryKind::Sticky,
            Region::HalfSpace { point: Vector3::new(0.0, 9.1, 0.0), normal: Vector3::y() },
        );
        g.grid_velocities(0.1, &Vector3::new(0.0, -10.0, 0.0), &[], 1e-12);
        assert_eq!(g.field.momentum[a], Vector3::new(1.0, 1.0, 3.0));
        assert_eq!(g.field.momentum[b], Vector3::zeros());
        g.field.momentum[a] = Vector3::new(1.0, 1.0, 3.0) * 2.0;
        g.grid_velocities(0.1, &Vector3::zeros(), &[floor], 1e-12);
        // Node (9,9,9) on G₋ sits at y = 8.75, below the floor plane.
        assert_eq!(g.field.momentum[a], Vector3::zeros());
        assert_eq!(g.field.flags[a], 1);
    }

    #[test]
    fn boundary_validation() {
        let bad = BoundaryCondition::new(
            BoundaryKind::Slip,
            Region::Box { min: Vector3::zeros(), max: Vector3::repeat(1.0), normal: None },
        );
        assert!(bad.validate().is_err());
        let ok = BoundaryCondition::new(
            BoundaryKind::Sticky,
            Region::Box { min: Vector3::zeros(), max: Vector3::repeat(1.0), normal: None },
        );
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn single_layout_uses_collocated_nodes() {
        let mut g = grid(GridLayout::Single);
        g.activate([Vector3::new(9.5, 9.5, 9.5)].iter()).unwrap();
        assert_eq!(g.layers(), 1);
        assert_eq!(g.node_position(0, [3, 4, 5]), Vector3::new(3.0, 4.0, 5.0));
        let touched = enumerate_blocks(&Vector3::new(9.5, 9.5, 9.5), GridLayout::Single);
        assert_eq!(g.active_block_count(), with_halo(&touched).len());
    }
}
