//! One full step of the engine against the dense brute-force reference.

use ckmpm_core::kernel::GridGeometry;
use ckmpm_core::materials::{Constitutive, Material};
use ckmpm_core::sim::{SimSettings, Simulation};
use ckmpm_core::transfer::{KernelKind, Particle, TransferScheme, TransferSettings};
use ckmpm_core::{Matrix3, Vector3};
use ckmpm_oracle as oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const YOUNGS: f64 = 1e4;
const POISSON: f64 = 0.3;
const DT: f64 = 1e-3;

fn random_matrix(rng: &mut ChaCha8Rng, scale: f64) -> Matrix3 {
    Matrix3::from_fn(|_, _| rng.gen_range(-scale..scale))
}

fn particles(seed: u64, with_b: bool) -> Vec<Particle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..5)
        .map(|_| {
            let x = Vector3::from_fn(|_, _| rng.gen_range(0.3..0.7));
            let v = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let mut p = Particle::new(x, v, rng.gen_range(0.5e-3..2e-3), 1e-6, 0);
            p.f = Matrix3::identity() + random_matrix(&mut rng, 0.1);
            if with_b {
                p.b = random_matrix(&mut rng, 0.02);
            }
            p
        })
        .collect()
}

fn to_oracle(p: &Particle) -> oracle::Particle {
    oracle::Particle { x: p.x, v: p.v, mass: p.mass, volume: p.volume, f: p.f, b: p.b }
}

fn max_abs<'a, I: IntoIterator<Item = &'a f64>>(it: I) -> f64 {
    it.into_iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// `‖a − b‖∞ ≤ tol · max(1, ‖b‖∞)` entrywise over a whole field.
fn assert_field(name: &str, a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    let scale = max_abs(b).max(1.0);
    let err = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(err <= tol * scale, "{name}: error {err:e} exceeds {tol:e} x {scale:e}");
}

fn run(scheme: TransferScheme, kernel: KernelKind, tol: f64, seed: u64) {
    let geometry = GridGeometry::new(0.125, [8; 3]).unwrap();
    let initial = particles(seed, scheme != TransferScheme::Pic);
    let material = Material::new(Constitutive::FixedCorotated { youngs: YOUNGS, poisson: POISSON }, 1e3).unwrap();
    let settings = SimSettings {
        gravity: Vector3::new(0.0, -9.8, 0.0),
        transfer: TransferSettings { scheme, kernel, ..Default::default() },
        ..Default::default()
    };
    let mut sim = Simulation::new(geometry, initial.clone(), vec![material], vec![], settings).unwrap();
    let eps = sim.settings.transfer.mass_epsilon;
    sim.step(DT).unwrap();

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
        mass_epsilon: eps,
    };
    let reference: Vec<oracle::Particle> = initial.iter().map(to_oracle).collect();
    let (expected, dense) = oracle::step(&setup, &reference);

    let flat = |f: &dyn Fn(&Particle) -> Vec<f64>| sim.particles.iter().flat_map(f).collect::<Vec<f64>>();
    let flat_o = |f: &dyn Fn(&oracle::Particle) -> Vec<f64>| expected.iter().flat_map(f).collect::<Vec<f64>>();
    assert_field("x", &flat(&|p| p.x.as_slice().to_vec()), &flat_o(&|p| p.x.as_slice().to_vec()), tol);
    assert_field("v", &flat(&|p| p.v.as_slice().to_vec()), &flat_o(&|p| p.v.as_slice().to_vec()), tol);
    assert_field("F", &flat(&|p| p.f.as_slice().to_vec()), &flat_o(&|p| p.f.as_slice().to_vec()), tol);
    assert_field("B", &flat(&|p| p.b.as_slice().to_vec()), &flat_o(&|p| p.b.as_slice().to_vec()), tol);

    // Grid fields: every node the reference touched must be active with the
    // same mass and updated momentum `m v`; everything else stays empty.
    // (Velocities themselves are ill-conditioned at fringe nodes of tiny mass.)
    let grid = sim.grid();
    let mut got_m = Vec::new();
    let mut want_m = Vec::new();
    let mut got_v = Vec::new();
    let mut want_v = Vec::new();
    for g in 0..dense.grids() {
        for (k, node) in dense.nodes() {
            let m = dense.mass[g][k];
            match grid.node_index(g, node) {
                Some(i) => {
                    got_m.push(grid.field.mass[i]);
                    want_m.push(m);
                    got_v.extend_from_slice((grid.field.momentum[i] * grid.field.mass[i]).as_slice());
                    want_v.extend_from_slice((dense.velocity[g][k] * m).as_slice());
                }
                None => assert_eq!(m, 0.0, "mass on inactive node {node:?} of grid {g}"),
            }
        }
    }
    let total: f64 = initial.iter().map(|p| p.mass).sum();
    assert_field("grid mass", &got_m.iter().map(|m| m / total).collect::<Vec<_>>(), &want_m.iter().map(|m| m / total).collect::<Vec<_>>(), tol);
    let per_mass = |v: &[f64]| v.iter().map(|c| c / total).collect::<Vec<_>>();
    assert_field("grid momentum", &per_mass(&got_v), &per_mass(&want_v), tol);
}

#[test]
fn pic_step_matches_reference() {
    for seed in 0..3 {
        run(TransferScheme::Pic, KernelKind::Compact, 1e-12, seed);
    }
}

#[test]
fn apic_step_matches_reference() {
    for seed in 0..3 {
        run(TransferScheme::Apic, KernelKind::Compact, 1e-12, seed);
    }
}

#[test]
fn mls_step_matches_reference() {
    for seed in 0..3 {
        run(TransferScheme::Mls, KernelKind::Compact, 1e-10, seed);
    }
}

#[test]
fn quadratic_baseline_matches_reference() {
    for scheme in [TransferScheme::Pic, TransferScheme::Apic, TransferScheme::Mls] {
        run(scheme, KernelKind::Quadratic, 1e-10, 7);
    }
}

#[test]
fn apic_d_and_mls_moment_match_direct_sums() {
    use ckmpm_core::transfer::{compute_apic_d, mls_moment};
    let geometry = GridGeometry::new(0.125, [8; 3]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for kernel in [KernelKind::Compact, KernelKind::Quadratic] {
        let setup = oracle::Setup {
            dx: 0.125,
            resolution: 8,
            dt: DT,
            gravity: Vector3::zeros(),
            youngs: YOUNGS,
            poisson: POISSON,
            scheme: oracle::Scheme::Apic,
            kernel: if kernel == KernelKind::Compact { oracle::Kernel::Compact } else { oracle::Kernel::Quadratic },
            mass_epsilon: 0.0,
        };
        for _ in 0..20 {
            let x = Vector3::from_fn(|_, _| rng.gen_range(0.3..0.7));
            let d = compute_apic_d(&x, kernel, &geometry).unwrap().d;
            let d_ref = oracle::apic_d(&setup, &x);
            assert!((d - d_ref).norm() <= 1e-14, "{kernel:?} D at {x:?}");
            let m = mls_moment(&x, kernel, &geometry).unwrap();
            let m_ref = oracle::mls_moment(&setup, &x);
            assert!((m - m_ref).norm() <= 1e-14, "{kernel:?} M at {x:?}");
        }
    }
}
