use ckmpm_core::materials::{
    drucker_prager_yield, energy_fixed_corotated, kirchhoff_fixed_corotated, return_map_drucker_prager,
    stress_fixed_corotated, stress_j_fluid, svd3,
};
use ckmpm_core::{Matrix3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rotation(axis: Vector3, angle: f64) -> Matrix3 {
    *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).matrix()
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3 {
    let axis = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    rotation(axis + Vector3::repeat(1e-3), rng.gen_range(-3.0..3.0))
}

/// `F = R₁ diag(σ) R₂` with `σ ∈ [lo, hi]`, so `det F ≥ lo³`.
fn random_f(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Matrix3 {
    let s = Vector3::from_fn(|_, _| rng.gen_range(lo..hi));
    random_rotation(rng) * Matrix3::from_diagonal(&s) * random_rotation(rng)
}

fn fd_gradient(f: &Matrix3, energy: impl Fn(&Matrix3) -> f64, h: f64) -> Matrix3 {
    Matrix3::from_fn(|i, j| {
        let mut a = *f;
        let mut b = *f;
        a[(i, j)] += h;
        b[(i, j)] -= h;
        (energy(&a) - energy(&b)) / (2.0 * h)
    })
}

#[test]
fn corotated_stress_is_energy_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mu, lambda) = (3.0, 2.0);
    let mut checked = 0;
    while checked < 20 {
        let f = random_f(&mut rng, 0.5, 1.6);
        if f.determinant() <= 0.1 {
            continue;
        }
        let p = stress_fixed_corotated(&f, mu, lambda).unwrap();
        let fd = fd_gradient(&f, |g| energy_fixed_corotated(g, mu, lambda), 1e-6);
        let rel = (p - fd).norm() / p.norm().max(1e-12);
        assert!(rel <= 1e-5, "relative error {rel:e}");
        checked += 1;
    }
}

#[test]
fn corotated_stretch_example() {
    let f = Matrix3::from_diagonal(&Vector3::new(1.1, 1.0, 1.0));
    let p = stress_fixed_corotated(&f, 1.0, 1.0).unwrap();
    let fd = fd_gradient(&f, |g| energy_fixed_corotated(g, 1.0, 1.0), 1e-6);
    assert!((p - fd).amax() <= 1e-6);
    // 2μ(σ−1) + λ(J−1)J/σ on the stretched axis.
    assert!((p[(0, 0)] - (0.2 + 0.1 * 1.1 / 1.1)).abs() < 1e-12);
}

#[test]
fn rotations_carry_no_stress() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let r = random_rotation(&mut rng);
        assert!(stress_fixed_corotated(&r, 1e6, 1e6).unwrap().amax() <= 1e-6);
    }
    assert_eq!(stress_fixed_corotated(&Matrix3::identity(), 1.0, 1.0).unwrap(), Matrix3::zeros());
}

#[test]
fn corotated_is_frame_indifferent_and_isotropic() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let f = random_f(&mut rng, 0.6, 1.5);
        let r = random_rotation(&mut rng);
        let p = stress_fixed_corotated(&f, 2.0, 3.0).unwrap();
        let left = stress_fixed_corotated(&(r * f), 2.0, 3.0).unwrap();
        assert!((left - r * p).amax() <= 1e-10);
        let iso = stress_fixed_corotated(&(r * f * r.transpose()), 2.0, 3.0).unwrap();
        assert!((iso - r * p * r.transpose()).amax() <= 1e-10);
    }
}

#[test]
fn corotated_matches_newton_polar_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let f = random_f(&mut rng, 0.3, 2.0);
        let (mu, lambda) = (357_142.857, 1_428_571.43);
        let youngs = mu * (3.0 * lambda + 2.0 * mu) / (lambda + mu);
        let poisson = lambda / (2.0 * (lambda + mu));
        let tau = kirchhoff_fixed_corotated(&f, mu, lambda).unwrap();
        let tau_ref = ckmpm_oracle::corotated_kirchhoff(&f, youngs, poisson);
        assert!((tau - tau_ref).amax() <= 1e-9 * tau_ref.amax().max(1.0));
    }
}

#[test]
fn inverted_elements_are_rejected() {
    let f = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -0.5));
    assert!(stress_fixed_corotated(&f, 1.0, 1.0).is_err());
    assert!(kirchhoff_fixed_corotated(&f, 1.0, 1.0).is_err());
    assert!(stress_fixed_corotated(&Matrix3::zeros(), 1.0, 1.0).is_err());
}

#[test]
fn fluid_pressure_examples() {
    assert_eq!(stress_j_fluid(1.0, 10.0, 7.15).unwrap().pressure, 0.0);
    let p = stress_j_fluid(0.9, 10.0, 7.15).unwrap().pressure;
    assert!((p - 10.0 * (0.9f64.powf(-7.15) - 1.0)).abs() < 1e-12);
    assert!((p - 11.24).abs() < 5e-3);
    let far = stress_j_fluid(1e6, 10.0, 7.15).unwrap().pressure;
    assert!((far + 10.0).abs() < 1e-9);
    assert!(stress_j_fluid(0.0, 10.0, 7.15).is_err());
    assert!(stress_j_fluid(-1.0, 10.0, 7.15).is_err());
    let s = stress_j_fluid(0.8, 10.0, 7.15).unwrap();
    assert_eq!(s.kirchhoff, Matrix3::identity() * (-0.8 * s.pressure));
}

#[test]
fn drucker_prager_examples() {
    let (mu, lambda) = (1e4, 1e4);
    let inside = Matrix3::from_diagonal(&Vector3::new(0.99, 0.98, 0.985));
    assert_eq!(return_map_drucker_prager(&inside, 30.0, mu, lambda).unwrap(), inside);
    let expand = Matrix3::from_diagonal(&Vector3::repeat(1.2));
    let tip = return_map_drucker_prager(&expand, 30.0, mu, lambda).unwrap();
    assert!((tip - Matrix3::identity()).amax() <= 1e-14);
}

#[test]
fn drucker_prager_projection_lands_on_cone_and_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mu, lambda) = (2e4, 3e4);
    for _ in 0..500 {
        let f = random_f(&mut rng, 0.6, 1.3);
        let angle = rng.gen_range(10.0..45.0);
        let once = return_map_drucker_prager(&f, angle, mu, lambda).unwrap();
        assert!(drucker_prager_yield(&once, angle, mu, lambda) <= 1e-10);
        let twice = return_map_drucker_prager(&once, angle, mu, lambda).unwrap();
        assert!((twice - once).amax() <= 1e-12, "not idempotent: {:e}", (twice - once).amax());
    }
}

proptest! {
    #[test]
    fn svd_reassembles_with_proper_rotations(entries in proptest::array::uniform9(-2.0f64..2.0)) {
        let f = Matrix3::from_row_slice(&entries);
        let s = svd3(&f);
        prop_assert!((s.recompose() - f).norm() <= 1e-10 * f.norm().max(1e-300));
        prop_assert!((s.u.transpose() * s.u - Matrix3::identity()).amax() <= 1e-12);
        prop_assert!((s.v.transpose() * s.v - Matrix3::identity()).amax() <= 1e-12);
        prop_assert!((s.u.determinant() - 1.0).abs() <= 1e-12);
        prop_assert!((s.v.determinant() - 1.0).abs() <= 1e-12);
        prop_assert!(s.sigma[0] >= s.sigma[1] && s.sigma[1] >= s.sigma[2].abs());
        prop_assert!(s.sigma[0] >= 0.0 && s.sigma[1] >= 0.0);
    }

    #[test]
    fn fluid_pressure_decreases_in_j(a in 0.05f64..5.0, b in 0.05f64..5.0) {
        prop_assume!((a - b).abs() > 1e-6);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let p_lo = stress_j_fluid(lo, 10.0, 7.15).unwrap().pressure;
        let p_hi = stress_j_fluid(hi, 10.0, 7.15).unwrap().pressure;
        prop_assert!(p_lo > p_hi);
    }
}
