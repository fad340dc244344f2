//! Slow, obviously-correct reference for one explicit MPM step.
//!
//! Every particle visits every node of every dense grid; kernels are
//! evaluated from their closed forms, matrices are formed by direct
//! summation and inverted in world units, and the corotated stress uses a
//! Newton polar decomposition instead of an SVD. Nothing here shares code
//! with `ckmpm-core`, which is the point.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Pic,
    Apic,
    Mls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// `1 − |u| + sin(2π|u|)/2π` on grids shifted by `±Δx/4`.
    Compact,
    /// Quadratic B-spline on the unshifted grid.
    Quadratic,
}

impl Kernel {
    /// Grid shifts in cells.
    pub fn shifts(self) -> &'static [f64] {
        match self {
            Kernel::Compact => &[-0.25, 0.25],
            Kernel::Quadratic => &[0.0],
        }
    }

    pub fn weight(self, u: f64) -> f64 {
        let a = u.abs();
        match self {
            Kernel::Compact if a < 1.0 => 1.0 - a + (TAU * a).sin() / TAU,
            Kernel::Quadratic if a < 0.5 => 0.75 - a * a,
            Kernel::Quadratic if a < 1.5 => 0.5 * (1.5 - a) * (1.5 - a),
            _ => 0.0,
        }
    }

    pub fn derivative(self, u: f64) -> f64 {
        let a = u.abs();
        let s = if u < 0.0 { -1.0 } else { 1.0 };
        match self {
            Kernel::Compact if a < 1.0 => s * ((TAU * a).cos() - 1.0),
            Kernel::Quadratic if a < 0.5 => -2.0 * u,
            Kernel::Quadratic if a < 1.5 => -s * (1.5 - a),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub x: Vector3<f64>,
    pub v: Vector3<f64>,
    pub mass: f64,
    pub volume: f64,
    pub f: Matrix3<f64>,
    pub b: Matrix3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setup {
    pub dx: f64,
    /// Cells per axis; nodes `-2..=resolution+2` are stored.
    pub resolution: usize,
    pub dt: f64,
    pub gravity: Vector3<f64>,
    pub youngs: f64,
    pub poisson: f64,
    pub scheme: Scheme,
    pub kernel: Kernel,
    pub mass_epsilon: f64,
}

/// All nodes of every grid, dense.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrid {
    pub lo: i32,
    pub n: usize,
    pub shifts: Vec<f64>,
    pub mass: Vec<Vec<f64>>,
    /// Momentum after P2G.
    pub momentum: Vec<Vec<Vector3<f64>>>,
    /// Velocity after the grid update.
    pub velocity: Vec<Vec<Vector3<f64>>>,
}

impl DenseGrid {
    fn new(setup: &Setup) -> Self {
        let lo = -2;
        let n = setup.resolution + 5;
        let shifts = setup.kernel.shifts().to_vec();
        let total = n * n * n;
        let g = shifts.len();
        Self {
            lo,
            n,
            shifts,
            mass: vec![vec![0.0; total]; g],
            momentum: vec![vec![Vector3::zeros(); total]; g],
            velocity: vec![vec![Vector3::zeros(); total]; g],
        }
    }

    pub fn grids(&self) -> usize {
        self.shifts.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (usize, [i32; 3])> + '_ {
        let n = self.n as i32;
        let lo = self.lo;
        (0..self.n * self.n * self.n).map(move |k| {
            let k = k as i32;
            (k as usize, [lo + k / (n * n), lo + (k / n) % n, lo + k % n])
        })
    }

    pub fn flat(&self, node: [i32; 3]) -> Option<usize> {
        let n = self.n as i32;
        let r = [node[0] - self.lo, node[1] - self.lo, node[2] - self.lo];
        if r.iter().any(|&c| c < 0 || c >= n) {
            return None;
        }
        Some(((r[0] * n + r[1]) * n + r[2]) as usize)
    }

    pub fn position(&self, grid: usize, node: [i32; 3], dx: f64) -> Vector3<f64> {
        let s = self.shifts[grid];
        Vector3::new(node[0] as f64 + s, node[1] as f64 + s, node[2] as f64 + s) * dx
    }
}

/// Weight and world-space gradient of node position `xi` seen from `xp`.
pub fn weight_and_gradient(kernel: Kernel, xp: &Vector3<f64>, xi: &Vector3<f64>, dx: f64) -> (f64, Vector3<f64>) {
    let u = (xp - xi) / dx;
    let w = [kernel.weight(u.x), kernel.weight(u.y), kernel.weight(u.z)];
    let d = [kernel.derivative(u.x), kernel.derivative(u.y), kernel.derivative(u.z)];
    let grad = Vector3::new(d[0] * w[1] * w[2], w[0] * d[1] * w[2], w[0] * w[1] * d[2]) / dx;
    (w[0] * w[1] * w[2], grad)
}

/// Averaging factor over grids.
fn scale(grid: &DenseGrid) -> f64 {
    1.0 / grid.grids() as f64
}

/// `D = s Σ_k Σ_i w (x_i − x_p)(x_i − x_p)ᵀ`.
pub fn apic_d(setup: &Setup, xp: &Vector3<f64>) -> Matrix3<f64> {
    let grid = DenseGrid::new(setup);
    let mut d = Matrix3::zeros();
    for g in 0..grid.grids() {
        for (_, node) in grid.nodes() {
            let xi = grid.position(g, node, setup.dx);
            let (w, _) = weight_and_gradient(setup.kernel, xp, &xi, setup.dx);
            let off = xi - xp;
            d += off * off.transpose() * w;
        }
    }
    d * scale(&grid)
}

/// `M = s Σ_k Σ_i w P Pᵀ`, `P = (1, x_i − x_p)`.
pub fn mls_moment(setup: &Setup, xp: &Vector3<f64>) -> Matrix4<f64> {
    let grid = DenseGrid::new(setup);
    let mut m = Matrix4::zeros();
    for g in 0..grid.grids() {
        for (_, node) in grid.nodes() {
            let xi = grid.position(g, node, setup.dx);
            let (w, _) = weight_and_gradient(setup.kernel, xp, &xi, setup.dx);
            let p = Vector4::new(1.0, xi.x - xp.x, xi.y - xp.y, xi.z - xp.z);
            m += p * p.transpose() * w;
        }
    }
    m * scale(&grid)
}

/// Rotation factor of `F` by Newton iteration `R ← (R + R⁻ᵀ)/2`.
pub fn polar_rotation(f: &Matrix3<f64>) -> Matrix3<f64> {
    let mut r = *f;
    for _ in 0..200 {
        let next = (r + r.try_inverse().expect("singular F").transpose()) * 0.5;
        let done = (next - r).norm() <= 1e-15 * next.norm();
        r = next;
        if done {
            break;
        }
    }
    r
}

/// Kirchhoff stress `P Fᵀ` of the fixed-corotated model.
pub fn corotated_kirchhoff(f: &Matrix3<f64>, youngs: f64, poisson: f64) -> Matrix3<f64> {
    let mu = youngs / (2.0 * (1.0 + poisson));
    let lambda = youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    let j = f.determinant();
    let r = polar_rotation(f);
    let p = (f - r) * (2.0 * mu) + f.try_inverse().unwrap().transpose() * (lambda * (j - 1.0) * j);
    p * f.transpose()
}

/// One full step: P2G, grid update, G2P, `F` update, advection.
pub fn step(setup: &Setup, particles: &[Particle]) -> (Vec<Particle>, DenseGrid) {
    let dx = setup.dx;
    let mut grid = DenseGrid::new(setup);
    let s = scale(&grid);

    let d_inv: Vec<Matrix3<f64>> = particles
        .iter()
        .map(|p| match setup.scheme {
            Scheme::Pic => Matrix3::zeros(),
            _ => apic_d(setup, &p.x).try_inverse().expect("singular D"),
        })
        .collect();
    let m_inv: Vec<Matrix4<f64>> = particles
        .iter()
        .map(|p| match setup.scheme {
            Scheme::Mls => mls_moment(setup, &p.x).try_inverse().expect("singular M"),
            _ => Matrix4::zeros(),
        })
        .collect();
    let force_gradient = |pi: usize, w: f64, grad: Vector3<f64>, off: Vector3<f64>| match setup.scheme {
        Scheme::Mls => {
            let c = m_inv[pi] * Vector4::new(1.0, off.x, off.y, off.z);
            Vector3::new(c[1], c[2], c[3]) * w
        }
        _ => grad,
    };
    let tau: Vec<Matrix3<f64>> = particles.iter().map(|p| corotated_kirchhoff(&p.f, setup.youngs, setup.poisson)).collect();

    let nodes: Vec<(usize, [i32; 3])> = grid.nodes().collect();
    for g in 0..grid.grids() {
        for &(k, node) in &nodes {
            let xi = grid.position(g, node, dx);
            let mut m = 0.0;
            let mut mv = Vector3::zeros();
            let mut force = Vector3::zeros();
            for (pi, p) in particles.iter().enumerate() {
                let (w, grad) = weight_and_gradient(setup.kernel, &p.x, &xi, dx);
                if w == 0.0 && grad == Vector3::zeros() {
                    continue;
                }
                let off = xi - p.x;
                m += w * p.mass;
                mv += (p.v + p.b * d_inv[pi] * off) * (w * p.mass);
                force -= tau[pi] * force_gradient(pi, w, grad, off) * p.volume;
            }
            grid.mass[g][k] = m;
            grid.momentum[g][k] = mv + force * setup.dt;
            grid.velocity[g][k] = if m > setup.mass_epsilon {
                grid.momentum[g][k] / m + setup.gravity * setup.dt
            } else {
                Vector3::zeros()
            };
        }
    }

    let out = particles
        .iter()
        .enumerate()
        .map(|(pi, p)| {
            let mut v = Vector3::zeros();
            let mut b = Matrix3::zeros();
            let mut gv = Matrix3::zeros();
            for g in 0..grid.grids() {
                for (k, node) in grid.nodes() {
                    let xi = grid.position(g, node, dx);
                    let (w, grad) = weight_and_gradient(setup.kernel, &p.x, &xi, dx);
                    let off = xi - p.x;
                    let vi = grid.velocity[g][k];
                    v += vi * w;
                    b += vi * off.transpose() * w;
                    gv += vi * force_gradient(pi, w, grad, off).transpose();
                }
            }
            let v = v * s;
            let b = if setup.scheme == Scheme::Pic { p.b } else { b * s };
            let f = (Matrix3::identity() + gv * (s * setup.dt)) * p.f;
            Particle { x: p.x + v * setup.dt, v, mass: p.mass, volume: p.volume, f, b }
        })
        .collect();
    (out, grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_partition_unity() {
        for &u in &[0.0, 0.13, 0.5, 0.77] {
            let c = Kernel::Compact.weight(u) + Kernel::Compact.weight(u - 1.0);
            assert!((c - 1.0).abs() < 1e-15);
            let q: f64 = (-2..=2).map(|i| Kernel::Quadratic.weight(u - i as f64)).sum();
            assert!((q - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let h = 1e-6;
        for kernel in [Kernel::Compact, Kernel::Quadratic] {
            for &u in &[-1.2, -0.6, -0.3, 0.2, 0.45, 0.9, 1.3] {
                let fd = (kernel.weight(u + h) - kernel.weight(u - h)) / (2.0 * h);
                assert!((fd - kernel.derivative(u)).abs() < 1e-8, "{kernel:?} {u}");
            }
        }
    }

    #[test]
    fn polar_rotation_is_orthogonal() {
        let f = Matrix3::new(1.1, 0.2, -0.1, 0.05, 0.9, 0.3, -0.2, 0.1, 1.2);
        let r = polar_rotation(&f);
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-13);
        assert!((r.determinant() - 1.0).abs() < 1e-13);
        let s = r.transpose() * f;
        assert!((s - s.transpose()).norm() < 1e-13);
    }

    #[test]
    fn rest_state_is_stationary() {
        let setup = Setup {
            dx: 0.125,
            resolution: 8,
            dt: 1e-3,
            gravity: Vector3::zeros(),
            youngs: 1e3,
            poisson: 0.3,
            scheme: Scheme::Apic,
            kernel: Kernel::Compact,
            mass_epsilon: 0.0,
        };
        let p = Particle {
            x: Vector3::new(0.51, 0.47, 0.5),
            v: Vector3::zeros(),
            mass: 1.0,
            volume: 1.0,
            f: Matrix3::identity(),
            b: Matrix3::zeros(),
        };
        let (out, grid) = step(&setup, &[p]);
        assert!(out[0].v.norm() < 1e-15);
        for g in 0..grid.grids() {
            let m: f64 = grid.mass[g].iter().sum();
            assert!((m - 1.0).abs() < 1e-14);
        }
    }
}
