//! Self-checks shared by `ckmpm validate` and the acceptance tests.
//!
//! Each probe returns the measured error so callers can apply their own
//! tolerance; [`cmd_validate`] applies the standard ones.

use std::time::Instant;

use ckmpm_core::kernel::{
    ck_grad_1d, ck_weight_1d, quad_bspline_stencil, reconstruct_position, stencil, GridGeometry, GridTag, TrigMode,
};
use ckmpm_core::materials::{Constitutive, Material};
use ckmpm_core::sim::{sample_shape, total_momentum, Shape, SimSettings, Simulation, VelocityField};
use ckmpm_core::transfer::{
    mls_moment, KernelKind, MlsFrame, Particle, ParticleStencil, TransferScheme, TransferSettings,
};
use ckmpm_core::{Matrix3, Vector3};
use ckmpm_oracle as oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Ablation hooks; both default to off.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ValidateOptions {
    /// Run the conservation scenes with the approximate sine.
    pub fast_sine: bool,
    /// Reconstruct positions from the minus grid only.
    pub single_grid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

/// Exact landmark values `K(0) = 1`, `K(±1) = 0`, `K(±½) = ½`.
pub fn kernel_landmarks_exact() -> bool {
    ck_weight_1d(0.0) == 1.0
        && ck_weight_1d(1.0) == 0.0
        && ck_weight_1d(-1.0) == 0.0
        && ck_weight_1d(0.5) == 0.5
        && ck_weight_1d(-0.5) == 0.5
        && ck_grad_1d(0.0) == 0.0
}

/// Richardson-extrapolated second derivative (eliminating `h` then `h²`).
/// `side`: 0 central, ±1 one-sided.
pub fn second_derivative(f: impl Fn(f64) -> f64, u: f64, h: f64, side: i32) -> f64 {
    let d = |h: f64| match side {
        0 => (f(u + h) - 2.0 * f(u) + f(u - h)) / (h * h),
        s => {
            let s = s as f64;
            (f(u + 2.0 * s * h) - 2.0 * f(u + s * h) + f(u)) / (h * h)
        }
    };
    let mut t = [d(h), d(h / 2.0), d(h / 4.0)];
    for level in 0..2 {
        let k = (2u64 << level) as f64;
        for i in 0..2 - level {
            t[i] = (k * t[i + 1] - t[i]) / (k - 1.0);
        }
    }
    t[0]
}

/// Largest `|K''|` over the knots `{-1, 0, 1}`, all three stencils.
pub fn knot_curvature() -> f64 {
    let mut worst: f64 = 0.0;
    for u in [-1.0, 0.0, 1.0] {
        for side in [-1, 0, 1] {
            worst = worst.max(second_derivative(ck_weight_1d, u, 1e-3, side).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityReport {
    /// Worst `|Σ w − 1|` over both grids and the quadratic baseline.
    pub partition: f64,
    /// Worst `‖Σ w x_i − x‖∞ / Δx` over the requested grids.
    pub reconstruction: f64,
}

/// Partition of unity and position reconstruction at `n` random interior
/// points of a 64³ grid.
pub fn kernel_identities(n: usize, seed: u64, tags: &[GridTag]) -> IdentityReport {
    let dx = 1.0 / 64.0;
    let g = GridGeometry::new(dx, [64; 3]).expect("valid geometry");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = IdentityReport { partition: 0.0, reconstruction: 0.0 };
    for _ in 0..n {
        let x = Vector3::from_fn(|_, _| rng.gen_range(2.0 * dx..1.0 - 2.0 * dx));
        for tag in GridTag::BOTH {
            let s = stencil(&x, tag, &g).expect("interior point");
            report.partition = report.partition.max((s.weights.iter().sum::<f64>() - 1.0).abs());
        }
        let q = quad_bspline_stencil(&x, &g).expect("interior point");
        report.partition = report.partition.max((q.weights.iter().sum::<f64>() - 1.0).abs());
        let r = reconstruct_position(&x, &g, tags).expect("interior point");
        report.reconstruction = report.reconstruction.max((r - x).amax() / dx);
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlsReport {
    /// `|M₀₀ − 1|`.
    pub m00: f64,
    /// Largest centered first moment, in cells.
    pub first_moments: f64,
    /// Reproduction error of an affine field: value, gradient.
    pub value: f64,
    pub gradient: f64,
}

pub fn mls_reproduction(n: usize, seed: u64) -> MlsReport {
    let dx = 1.0 / 64.0;
    let g = GridGeometry::new(dx, [64; 3]).expect("valid geometry");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = MlsReport { m00: 0.0, first_moments: 0.0, value: 0.0, gradient: 0.0 };
    for _ in 0..n {
        let x = Vector3::from_fn(|_, _| rng.gen_range(2.0 * dx..1.0 - 2.0 * dx));
        let m = mls_moment(&x, KernelKind::Compact, &g).expect("interior point");
        r.m00 = r.m00.max((m[(0, 0)] - 1.0).abs());
        for a in 1..4 {
            r.first_moments = r.first_moments.max(m[(0, a)].abs().max(m[(a, 0)].abs()) / dx);
        }
        let st = ParticleStencil::new(&x, KernelKind::Compact, &g, TrigMode::Exact).expect("interior point");
        let frame = MlsFrame::from_stencil(&x, &st, dx).expect("well conditioned");
        let a = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let c: f64 = rng.gen_range(-1.0..1.0);
        let z = x + Vector3::from_fn(|_, _| rng.gen_range(-0.5 * dx..0.5 * dx));
        let (mut value, mut grad) = (0.0, Vector3::zeros());
        st.for_each(|layer, node, _, _, off| {
            let u = a.dot(&(x + off)) + c;
            let (phi, dphi) = frame.shape(&st, layer, node, &z);
            value += phi * u * st.gather_scale();
            grad += dphi * u * st.gather_scale();
        });
        r.value = r.value.max((value - (a.dot(&z) + c)).abs());
        r.gradient = r.gradient.max((grad - a).amax());
    }
    r
}

fn oracle_particles(seed: u64, with_b: bool) -> Vec<Particle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..5)
        .map(|_| {
            let x = Vector3::from_fn(|_, _| rng.gen_range(0.3..0.7));
            let v = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let mut p = Particle::new(x, v, rng.gen_range(0.5e-3..2e-3), 1e-6, 0);
            p.f = Matrix3::identity() + Matrix3::from_fn(|_, _| rng.gen_range(-0.1..0.1));
            if with_b {
                p.b = Matrix3::from_fn(|_, _| rng.gen_range(-0.02..0.02));
            }
            p
        })
        .collect()
}

/// `max |a − b| / max(1, max |b|)` over a field.
fn field_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

/// Worst relative field error of one engine step against the dense
/// brute-force reference on a 5-particle, 8³ instance. Fields: particle x,
/// v, F, B; grid mass and momentum (normalized by total mass).
pub fn oracle_step_error(scheme: TransferScheme, kernel: KernelKind, seed: u64) -> Result<f64, String> {
    const YOUNGS: f64 = 1e4;
    const POISSON: f64 = 0.3;
    const DT: f64 = 1e-3;
    let geometry = GridGeometry::new(0.125, [8; 3]).map_err(|e| e.to_string())?;
    let initial = oracle_particles(seed, scheme != TransferScheme::Pic);
    let material = Material::new(Constitutive::FixedCorotated { youngs: YOUNGS, poisson: POISSON }, 1e3)
        .map_err(|e| e.to_string())?;
    let settings = SimSettings {
        gravity: Vector3::new(0.0, -9.8, 0.0),
        transfer: TransferSettings { scheme, kernel, ..Default::default() },
        ..Default::default()
    };
    let mut sim =
        Simulation::new(geometry, initial.clone(), vec![material], vec![], settings).map_err(|e| e.to_string())?;
    sim.step(DT).map_err(|e| e.to_string())?;

    let setup = oracle::Setup {
        dx: 0.125,
        resolution: 8,
        dt: DT,
        gravity: settings.gravity,
        youngs: YOUNGS,
        poisson: POISSON,
        scheme: match scheme {
            TransferScheme::Pic => oracle::Scheme::Pic,
            TransferScheme::Apic => oracle::Scheme::Apic,
            TransferScheme::Mls => oracle::Scheme::Mls,
        },
        kernel: match kernel {
            KernelKind::Compact => oracle::Kernel::Compact,
            KernelKind::Quadratic => oracle::Kernel::Quadratic,
        },
        mass_epsilon: sim.settings.transfer.mass_epsilon,
    };
    let reference: Vec<oracle::Particle> = initial
        .iter()
        .map(|p| oracle::Particle { x: p.x, v: p.v, mass: p.mass, volume: p.volume, f: p.f, b: p.b })
        .collect();
    let (expected, dense) = oracle::step(&setup, &reference);

    let mut worst: f64 = 0.0;
    let ours = |f: fn(&Particle) -> &[f64]| sim.particles.iter().flat_map(|p| f(p).to_vec()).collect::<Vec<_>>();
    let theirs =
        |f: fn(&oracle::Particle) -> &[f64]| expected.iter().flat_map(|p| f(p).to_vec()).collect::<Vec<_>>();
    worst = worst.max(field_error(&ours(|p| p.x.as_slice()), &theirs(|p| p.x.as_slice())));
    worst = worst.max(field_error(&ours(|p| p.v.as_slice()), &theirs(|p| p.v.as_slice())));
    worst = worst.max(field_error(&ours(|p| p.f.as_slice()), &theirs(|p| p.f.as_slice())));
    worst = worst.max(field_error(&ours(|p| p.b.as_slice()), &theirs(|p| p.b.as_slice())));

    let total: f64 = initial.iter().map(|p| p.mass).sum();
    let grid = sim.grid();
    let (mut got_m, mut want_m, mut got_p, mut want_p) = (vec![], vec![], vec![], vec![]);
    for g in 0..dense.grids() {
        for (k, node) in dense.nodes() {
            let m = dense.mass[g][k];
            match grid.node_index(g, node) {
                Some(i) => {
                    got_m.push(grid.field.mass[i] / total);
                    want_m.push(m / total);
                    got_p.extend((grid.field.momentum[i] * grid.field.mass[i] / total).iter());
                    want_p.extend((dense.velocity[g][k] * m / total).iter());
                }
                None if m != 0.0 => return Err(format!("reference mass on inactive node {node:?}")),
                None => {}
            }
        }
    }
    worst = worst.max(field_error(&got_m, &want_m));
    worst = worst.max(field_error(&got_p, &want_p));
    Ok(worst)
}

/// Node visits per particle for (scatter, gather) after two PIC steps.
pub fn node_visits(kernel: KernelKind) -> (f64, f64) {
    let dx = 1.0 / 32.0;
    let g = GridGeometry::new(dx, [32; 3]).expect("valid geometry");
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let ps: Vec<Particle> = (0..64)
        .map(|_| {
            let x = Vector3::from_fn(|_, _| rng.gen_range(0.3..0.7));
            Particle::new(x, Vector3::zeros(), 1e-3, 1e-6, 0)
        })
        .collect();
    let mat = Material::new(Constitutive::FixedCorotated { youngs: 1e4, poisson: 0.3 }, 1e3).expect("valid");
    let settings = SimSettings {
        transfer: TransferSettings { scheme: TransferScheme::Pic, kernel, ..Default::default() },
        ..Default::default()
    };
    let mut sim = Simulation::new(g, ps, vec![mat], vec![], settings).expect("valid scene");
    for _ in 0..2 {
        sim.step(1e-5).expect("stable step");
    }
    (sim.counters.p2g_visits_per_particle(), sim.counters.g2p_visits_per_particle())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationReport {
    /// Largest single-step change of `Σ m v`, relative to `|Σ m v|₀`.
    pub linear_step: f64,
    /// Largest deviation from the initial `Σ m v`, relative.
    pub linear_drift: f64,
    /// Largest deviation of `Σ m (x × v + ε:Bᵀ)`, relative.
    pub angular_drift: f64,
    pub grid_mass: f64,
}

/// Two spinning, drifting jelly cubes that collide; no gravity, no walls.
pub fn conservation_scene(scheme: TransferScheme, kernel: KernelKind, trig: TrigMode) -> Simulation {
    let dx = 1.0 / 32.0;
    let g = GridGeometry::new(dx, [32; 3]).expect("valid geometry");
    let mut particles = Vec::new();
    for (c, vx) in [(0.36, 0.06), (0.64, -0.04)] {
        let center = Vector3::new(c, 0.5 + (c - 0.5) * 0.3, 0.5);
        let half = Vector3::repeat(2.0 * dx);
        let shape = Shape::Box { min: center - half, max: center + half };
        let spin = VelocityField::Spin { angular: Vector3::new(0.3, -0.5, 1.0), center };
        for mut p in sample_shape(&shape, &g, 8, 1e3, 0).expect("inside domain") {
            p.v = Vector3::new(vx, 0.01, -0.02) + spin.at(&p.x);
            particles.push(p);
        }
    }
    let jelly = Material::new(Constitutive::FixedCorotated { youngs: 1e4, poisson: 0.3 }, 1e3).expect("valid");
    let settings = SimSettings {
        transfer: TransferSettings { scheme, kernel, trig, ..Default::default() },
        ..Default::default()
    };
    Simulation::new(g, particles, vec![jelly], vec![], settings).expect("valid scene")
}

pub fn conservation(sim: &mut Simulation, steps: usize, dt: f64) -> Result<ConservationReport, String> {
    let start = total_momentum(&sim.particles);
    let (p0, l0) = (start.linear.norm(), start.angular_apic.norm());
    let mut prev = start.linear;
    let mut r = ConservationReport { linear_step: 0.0, linear_drift: 0.0, angular_drift: 0.0, grid_mass: 0.0 };
    for _ in 0..steps {
        let d = sim.step(dt).map_err(|e| e.to_string())?;
        let m = d.momentum;
        r.linear_step = r.linear_step.max((m.linear - prev).norm() / p0);
        r.linear_drift = r.linear_drift.max((m.linear - start.linear).norm() / p0);
        r.angular_drift = r.angular_drift.max((m.angular_apic - start.angular_apic).norm() / l0);
        r.grid_mass = r.grid_mass.max(d.grid_mass_error);
        prev = m.linear;
    }
    Ok(r)
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> SuiteResult {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    SuiteResult { name, passed, detail, seconds: start.elapsed().as_secs_f64() }
}

fn check(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Runs every suite at desk scale.
pub fn cmd_validate(opts: &ValidateOptions) -> Vec<SuiteResult> {
    let trig = if opts.fast_sine { TrigMode::FastApprox } else { TrigMode::Exact };
    let tags: &[GridTag] = if opts.single_grid { &[GridTag::Minus] } else { &GridTag::BOTH };
    let mut out = vec![
        timed("kernel-landmarks", || check(kernel_landmarks_exact(), "K(0)=1, K(±1)=0, K(±0.5)=0.5".into())),
        timed("kernel-smoothness", || {
            let k2 = knot_curvature();
            check(k2 <= 1e-6, format!("max |K''| at knots {k2:.1e} (tol 1e-6)"))
        }),
    ];
    let ids = kernel_identities(10_000, 1, tags);
    out.push(timed("partition-of-unity", || {
        check(ids.partition <= 1e-12, format!("max |Σw − 1| {:.1e} (tol 1e-12)", ids.partition))
    }));
    out.push(timed("reconstruction-identity", || {
        check(ids.reconstruction <= 1e-12, format!("max |Σw xᵢ − x|/Δx {:.1e} (tol 1e-12)", ids.reconstruction))
    }));
    out.push(timed("linear-momentum", || {
        let mut detail = Vec::new();
        let mut ok = true;
        for scheme in [TransferScheme::Pic, TransferScheme::Apic, TransferScheme::Mls] {
            let mut sim = conservation_scene(scheme, KernelKind::Compact, trig);
            let r = conservation(&mut sim, 200, 2e-3)?;
            ok &= r.linear_step <= 1e-10 && r.linear_drift <= 1e-8 && r.grid_mass <= 1e-10;
            detail.push(format!("{scheme:?} step {:.1e} drift {:.1e}", r.linear_step, r.linear_drift));
        }
        check(ok, detail.join(", "))
    }));
    out.push(timed("angular-momentum", || {
        let mut sim = conservation_scene(TransferScheme::Apic, KernelKind::Compact, trig);
        let r = conservation(&mut sim, 200, 2e-3)?;
        check(r.angular_drift <= 1e-6, format!("APIC drift {:.1e} (tol 1e-6)", r.angular_drift))
    }));
    out.push(timed("mls-reproduction", || {
        let r = mls_reproduction(10_000, 12);
        check(
            r.m00 <= 1e-12 && r.first_moments <= 1e-12 && r.value <= 1e-10 && r.gradient <= 1e-8,
            format!("M00 {:.1e}, rows {:.1e}, value {:.1e}, gradient {:.1e}", r.m00, r.first_moments, r.value, r.gradient),
        )
    }));
    out.push(timed("oracle-equivalence", || {
        let mut worst = Vec::new();
        let mut ok = true;
        for (scheme, tol) in [(TransferScheme::Pic, 1e-12), (TransferScheme::Apic, 1e-12), (TransferScheme::Mls, 1e-10)] {
            let e = (0..3).map(|s| oracle_step_error(scheme, KernelKind::Compact, s)).try_fold(0.0f64, |m, e| e.map(|e| m.max(e)))?;
            ok &= e <= tol;
            worst.push(format!("{scheme:?} {e:.1e}"));
        }
        check(ok, worst.join(", "))
    }));
    out.push(timed("node-visits", || {
        let (c, q) = (node_visits(KernelKind::Compact), node_visits(KernelKind::Quadratic));
        check(
            c == (16.0, 16.0) && q == (27.0, 27.0),
            format!("compact {}/{}, quadratic {}/{} (scatter/gather)", c.0, c.1, q.0, q.1),
        )
    }));
    out
}

pub fn print_table(results: &[SuiteResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for r in results {
        s.push_str(&format!(
            "{:<4}  {:<width$}  {:>7.2}s  {}\n",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.seconds,
            r.detail
        ));
    }
    s
}
