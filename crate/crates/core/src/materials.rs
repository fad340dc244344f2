//! Constitutive models and elastoplastic return mapping.
//!
//! The pipeline consumes Kirchhoff stress `τ = P Fᵀ`, which avoids forming
//! `F⁻ᵀ`; [`stress_fixed_corotated`] returns the first Piola–Kirchhoff stress
//! for callers that want it.

use crate::error::{invalid, Error, Result};
use crate::math;
use crate::{Matrix3, Vector3};

/// Lamé parameters `(μ, λ)` from Young's modulus and Poisson's ratio.
pub fn lame_from_e_nu(youngs: f64, poisson: f64) -> Result<(f64, f64)> {
    if !(poisson < 0.5) || !poisson.is_finite() {
        return Err(invalid("poisson", "must be below 0.5"));
    }
    if !youngs.is_finite() || youngs < 0.0 {
        return Err(invalid("youngs", "must be non-negative and finite"));
    }
    let mu = youngs / (2.0 * (1.0 + poisson));
    let lambda = youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    Ok((mu, lambda))
}

/// Constitutive law and its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constitutive {
    FixedCorotated { youngs: f64, poisson: f64 },
    /// Weakly compressible fluid, `p = B(J^−γ − 1)`, with Newtonian
    /// viscosity `μ_v` (Pa·s).
    JFluid { bulk: f64, gamma: f64, viscosity: f64 },
    /// Friction angle in degrees.
    DruckerPrager { youngs: f64, poisson: f64, friction_angle: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub model: Constitutive,
    /// Rest density, kg/m³.
    pub density: f64,
    /// Clamp singular values of `F` to at least [`CLAMP_SIGMA`] instead of
    /// failing on inverted or degenerate elements.
    pub clamp_singular_values: bool,
}

/// Lower singular-value bound used when clamping is enabled.
pub const CLAMP_SIGMA: f64 = 0.05;

impl Material {
    pub fn new(model: Constitutive, density: f64) -> Result<Self> {
        let m = Self { model, density, clamp_singular_values: false };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(invalid("density", "must be positive"));
        }
        match self.model {
            Constitutive::FixedCorotated { youngs, poisson } => check_elastic(youngs, poisson),
            Constitutive::JFluid { bulk, gamma, viscosity } => {
                if !(bulk > 0.0 && bulk.is_finite()) {
                    return Err(invalid("bulk", "must be positive"));
                }
                if !(gamma > 1.0 && gamma.is_finite()) {
                    return Err(invalid("gamma", "must exceed 1"));
                }
                if !(viscosity >= 0.0 && viscosity.is_finite()) {
                    return Err(invalid("viscosity", "must be non-negative"));
                }
                Ok(())
            }
            Constitutive::DruckerPrager { youngs, poisson, friction_angle } => {
                check_elastic(youngs, poisson)?;
                if !(friction_angle > 0.0 && friction_angle < 90.0) {
                    return Err(invalid("friction_angle", "must lie in (0, 90) degrees"));
                }
                Ok(())
            }
        }
    }

    /// True if particles of this material track only `J`.
    pub fn is_fluid(&self) -> bool {
        matches!(self.model, Constitutive::JFluid { .. })
    }

    /// `(μ, λ)` for elastic models, `(0, 0)` for fluids.
    pub fn lame(&self) -> (f64, f64) {
        match self.model {
            Constitutive::FixedCorotated { youngs, poisson }
            | Constitutive::DruckerPrager { youngs, poisson, .. } => {
                lame_from_e_nu(youngs, poisson).unwrap_or((0.0, 0.0))
            }
            Constitutive::JFluid { .. } => (0.0, 0.0),
        }
    }

    /// Small-strain signal speed: `√((λ+2μ)/ρ)` for solids, `√(Bγ/ρ)` for
    /// the fluid equation of state.
    pub fn wave_speed(&self) -> f64 {
        match self.model {
            Constitutive::JFluid { bulk, gamma, .. } => math::sqrt(bulk * gamma / self.density),
            _ => {
                let (mu, lambda) = self.lame();
                math::sqrt((lambda + 2.0 * mu) / self.density)
            }
        }
    }

    /// Signal speed at volume ratio `j`. Fluids stiffen under compression:
    /// `c² = γ B J^(1−γ) / ρ`, which reduces to [`Self::wave_speed`] at
    /// `J = 1`. Solids use the small-strain value.
    pub fn wave_speed_at(&self, j: f64) -> f64 {
        match self.model {
            Constitutive::JFluid { bulk, gamma, .. } if j > 0.0 && j < 1.0 => {
                math::sqrt(bulk * gamma * math::powf(j, 1.0 - gamma) / self.density)
            }
            _ => self.wave_speed(),
        }
    }

    /// Kirchhoff stress `τ = P Fᵀ` of a solid with elastic deformation `f`.
    pub fn kirchhoff_solid(&self, f: &Matrix3) -> Result<Matrix3> {
        let (mu, lambda) = self.lame();
        match self.model {
            Constitutive::FixedCorotated { .. } => kirchhoff_fixed_corotated(f, mu, lambda),
            Constitutive::DruckerPrager { .. } => kirchhoff_hencky(f, mu, lambda),
            Constitutive::JFluid { .. } => Err(invalid("material", "fluid has no F-based stress")),
        }
    }

    /// Kirchhoff stress of a fluid with volume ratio `j` and last velocity
    /// gradient `grad_v`.
    pub fn kirchhoff_fluid(&self, j: f64, grad_v: &Matrix3) -> Result<Matrix3> {
        let Constitutive::JFluid { bulk, gamma, viscosity } = self.model else {
            return Err(invalid("material", "not a fluid"));
        };
        let mut tau = stress_j_fluid(j, bulk, gamma)?.kirchhoff;
        if viscosity > 0.0 {
            tau += viscous_kirchhoff(j, viscosity, grad_v);
        }
        Ok(tau)
    }

    /// Post-update treatment of a solid's deformation gradient: plastic
    /// projection, singular-value clamping, or the inversion check.
    pub fn project(&self, f: &Matrix3) -> Result<Matrix3> {
        let f = if self.clamp_singular_values {
            clamp_singular_values(f, CLAMP_SIGMA)
        } else {
            let det = f.determinant();
            if !(det > 0.0) {
                return Err(Error::InvertedElement { particle: None, det });
            }
            *f
        };
        match self.model {
            Constitutive::DruckerPrager { friction_angle, .. } => {
                let (mu, lambda) = self.lame();
                return_map_drucker_prager(&f, friction_angle, mu, lambda)
            }
            _ => Ok(f),
        }
    }
}

fn check_elastic(youngs: f64, poisson: f64) -> Result<()> {
    if !(youngs > 0.0 && youngs.is_finite()) {
        return Err(invalid("youngs", "must be positive"));
    }
    if !(0.0..0.5).contains(&poisson) {
        return Err(invalid("poisson", "must lie in [0, 0.5)"));
    }
    Ok(())
}

/// Singular value decomposition `F = U diag(σ) Vᵀ` with proper rotations.
///
/// `σ` is sorted descending; a reflection in `F` shows up as a negative last
/// singular value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Svd3 {
    pub u: Matrix3,
    pub sigma: Vector3,
    pub v: Matrix3,
}

impl Svd3 {
    pub fn recompose(&self) -> Matrix3 {
        self.u * Matrix3::from_diagonal(&self.sigma) * self.v.transpose()
    }

    /// Rotation factor `R = U Vᵀ` of the polar decomposition.
    pub fn rotation(&self) -> Matrix3 {
        self.u * self.v.transpose()
    }
}

/// One-sided Jacobi SVD of a 3×3 matrix.
pub fn svd3(f: &Matrix3) -> Svd3 {
    let mut a = *f;
    let mut v = Matrix3::identity();
    for _sweep in 0..40 {
        let mut rotated = false;
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let alpha = a.column(p).norm_squared();
            let beta = a.column(q).norm_squared();
            let gamma = a.column(p).dot(&a.column(q));
            if gamma == 0.0 || gamma.abs() <= 1e-15 * math::sqrt(alpha * beta) {
                continue;
            }
            rotated = true;
            let zeta = (beta - alpha) / (2.0 * gamma);
            let t = zeta.signum() / (zeta.abs() + math::sqrt(1.0 + zeta * zeta));
            let c = 1.0 / math::sqrt(1.0 + t * t);
            let s = c * t;
            for m in [&mut a, &mut v] {
                for r in 0..3 {
                    let (x, y) = (m[(r, p)], m[(r, q)]);
                    m[(r, p)] = c * x - s * y;
                    m[(r, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma = Vector3::new(a.column(0).norm(), a.column(1).norm(), a.column(2).norm());
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap_or(core::cmp::Ordering::Equal));
    let a = Matrix3::from_columns(&[a.column(order[0]), a.column(order[1]), a.column(order[2])]);
    let mut v = Matrix3::from_columns(&[v.column(order[0]), v.column(order[1]), v.column(order[2])]);
    sigma = Vector3::new(sigma[order[0]], sigma[order[1]], sigma[order[2]]);

    // Columns of U from the rotated columns; complete the basis where the
    // singular value vanishes.
    let tiny = 1e-300_f64.max(sigma[0] * 1e-15);
    let mut u = Matrix3::identity();
    let mut rank = 0;
    for i in 0..3 {
        if sigma[i] > tiny {
            u.set_column(i, &(a.column(i) / sigma[i]));
            rank += 1;
        }
    }
    match rank {
        0 => {
            u = Matrix3::identity();
            sigma = Vector3::zeros();
        }
        1 => {
            let u0: Vector3 = u.column(0).into();
            let seed = if u0.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
            let u1 = (seed - u0 * u0.dot(&seed)).normalize();
            u.set_column(1, &u1);
            u.set_column(2, &u0.cross(&u1));
            sigma[1] = 0.0;
            sigma[2] = 0.0;
        }
        2 => {
            let u0: Vector3 = u.column(0).into();
            let u1: Vector3 = u.column(1).into();
            u.set_column(2, &u0.cross(&u1).normalize());
            sigma[2] = 0.0;
        }
        _ => {}
    }

    if v.determinant() < 0.0 {
        let c = -v.column(2);
        v.set_column(2, &c);
        let c = -u.column(2);
        u.set_column(2, &c);
    }
    if u.determinant() < 0.0 {
        let c = -u.column(2);
        u.set_column(2, &c);
        sigma[2] = -sigma[2];
    }
    Svd3 { u, sigma, v }
}

/// Fixed corotated first Piola–Kirchhoff stress
/// `P = 2μ(F − R) + λ(J − 1)J F⁻ᵀ`.
pub fn stress_fixed_corotated(f: &Matrix3, mu: f64, lambda: f64) -> Result<Matrix3> {
    let j = f.determinant();
    if !(j > 0.0) {
        return Err(Error::InvertedElement { particle: None, det: j });
    }
    let r = svd3(f).rotation();
    let f_inv_t = f
        .try_inverse()
        .ok_or(Error::InvertedElement { particle: None, det: j })?
        .transpose();
    Ok((f - r) * (2.0 * mu) + f_inv_t * (lambda * (j - 1.0) * j))
}

/// Fixed corotated Kirchhoff stress `τ = 2μ(F − R)Fᵀ + λ(J − 1)J I`.
pub fn kirchhoff_fixed_corotated(f: &Matrix3, mu: f64, lambda: f64) -> Result<Matrix3> {
    let j = f.determinant();
    if !(j > 0.0) {
        return Err(Error::InvertedElement { particle: None, det: j });
    }
    let r = svd3(f).rotation();
    Ok((f - r) * f.transpose() * (2.0 * mu) + Matrix3::identity() * (lambda * (j - 1.0) * j))
}

/// Fixed corotated energy density `μ Σ(σᵢ − 1)² + λ/2 (J − 1)²`.
pub fn energy_fixed_corotated(f: &Matrix3, mu: f64, lambda: f64) -> f64 {
    let s = svd3(f).sigma;
    let j = s.x * s.y * s.z;
    mu * s.iter().map(|&x| (x - 1.0) * (x - 1.0)).sum::<f64>() + 0.5 * lambda * (j - 1.0) * (j - 1.0)
}

/// Pressure and Kirchhoff stress of the J-based fluid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidStress {
    pub pressure: f64,
    /// `J σ = −J p I`.
    pub kirchhoff: Matrix3,
}

/// Equation-of-state stress `p = B(J^−γ − 1)`.
pub fn stress_j_fluid(j: f64, bulk: f64, gamma: f64) -> Result<FluidStress> {
    if !(j > 0.0) || !j.is_finite() {
        return Err(Error::InvertedElement { particle: None, det: j });
    }
    let pressure = bulk * (math::powf(j, -gamma) - 1.0);
    Ok(FluidStress { pressure, kirchhoff: Matrix3::identity() * (-j * pressure) })
}

/// Newtonian viscous Kirchhoff stress `J · 2μ_v · dev(sym ∇v)`.
pub fn viscous_kirchhoff(j: f64, viscosity: f64, grad_v: &Matrix3) -> Matrix3 {
    let d = (grad_v + grad_v.transpose()) * 0.5;
    let dev = d - Matrix3::identity() * (d.trace() / 3.0);
    dev * (2.0 * viscosity * j)
}

/// Hencky-strain St. Venant–Kirchhoff stress used with Drucker–Prager:
/// `τ = U (2μ ε + λ tr(ε) I) Uᵀ`, `ε = ln Σ`.
pub fn kirchhoff_hencky(f: &Matrix3, mu: f64, lambda: f64) -> Result<Matrix3> {
    let svd = svd3(f);
    if !(svd.sigma[2] > 0.0) {
        return Err(Error::InvertedElement { particle: None, det: f.determinant() });
    }
    let eps = svd.sigma.map(math::ln);
    let tr = eps.sum();
    let d = eps * (2.0 * mu) + Vector3::repeat(lambda * tr);
    Ok(svd.u * Matrix3::from_diagonal(&d) * svd.u.transpose())
}

/// `α = √(2/3) · 2 sin φ / (3 − sin φ)` for friction angle `φ` in degrees.
pub fn drucker_prager_alpha(friction_angle: f64) -> f64 {
    let s = math::sin(friction_angle.to_radians());
    math::sqrt(2.0 / 3.0) * 2.0 * s / (3.0 - s)
}

/// Yield function in Hencky-strain space. Non-positive means admissible;
/// any expansive state (`tr ε > 0`) other than the cone tip is infeasible.
pub fn drucker_prager_yield(f: &Matrix3, friction_angle: f64, mu: f64, lambda: f64) -> f64 {
    let eps = svd3(f).sigma.map(|s| math::ln(s.abs()));
    let tr = eps.sum();
    let dev = eps - Vector3::repeat(tr / 3.0);
    let alpha = drucker_prager_alpha(friction_angle);
    let y = dev.norm() + alpha * (3.0 * lambda + 2.0 * mu) / (2.0 * mu) * tr;
    if tr > 0.0 {
        y.max(tr)
    } else {
        y
    }
}

/// Projects a trial elastic deformation gradient onto the Drucker–Prager
/// cone (sand plasticity without hardening).
pub fn return_map_drucker_prager(
    f: &Matrix3,
    friction_angle: f64,
    mu: f64,
    lambda: f64,
) -> Result<Matrix3> {
    let svd = svd3(f);
    if !(svd.sigma[2] > 0.0) {
        return Err(Error::InvertedElement { particle: None, det: f.determinant() });
    }
    let eps = svd.sigma.map(math::ln);
    let tr = eps.sum();
    if tr > 0.0 {
        return Ok(svd.rotation());
    }
    let dev = eps - Vector3::repeat(tr / 3.0);
    let dev_norm = dev.norm();
    let alpha = drucker_prager_alpha(friction_angle);
    let dgamma = dev_norm + alpha * (3.0 * lambda + 2.0 * mu) / (2.0 * mu) * tr;
    if dgamma <= 0.0 {
        return Ok(*f);
    }
    let eps_new = eps - dev * (dgamma / dev_norm);
    let sigma = eps_new.map(math::exp);
    Ok(svd.u * Matrix3::from_diagonal(&sigma) * svd.v.transpose())
}

/// `U diag(max(σ, floor)) Vᵀ`.
pub fn clamp_singular_values(f: &Matrix3, floor: f64) -> Matrix3 {
    let svd = svd3(f);
    let s = svd.sigma.map(|x| x.max(floor));
    svd.u * Matrix3::from_diagonal(&s) * svd.v.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot(axis: Vector3, angle: f64) -> Matrix3 {
        *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).matrix()
    }

    #[test]
    fn lame_examples() {
        let (mu, lambda) = lame_from_e_nu(1e6, 0.4).unwrap();
        assert!((mu - 357_142.857_142_857_1).abs() < 1e-6);
        assert!((lambda - 1_428_571.428_571_428_6).abs() < 1e-5);
        assert_eq!(lame_from_e_nu(3.0, 0.0).unwrap(), (1.5, 0.0));
        assert_eq!(lame_from_e_nu(0.0, 0.3).unwrap(), (0.0, 0.0));
        assert!(lame_from_e_nu(1.0, 0.5).is_err());
        assert!(lame_from_e_nu(1.0, 0.6).is_err());
    }

    #[test]
    fn svd_examples() {
        let s = svd3(&Matrix3::identity());
        assert_eq!(s.sigma, Vector3::repeat(1.0));
        assert_eq!(s.u, Matrix3::identity());
        assert_eq!(s.v, Matrix3::identity());
        let d = Matrix3::from_diagonal(&Vector3::new(2.0, 1.0, 0.5));
        let s = svd3(&d);
        assert_eq!(s.sigma, Vector3::new(2.0, 1.0, 0.5));
        assert_eq!(s.u, Matrix3::identity());
        assert_eq!(s.v, Matrix3::identity());
    }

    #[test]
    fn svd_unsorted_and_reflected() {
        let d = Matrix3::from_diagonal(&Vector3::new(0.5, -3.0, 1.0));
        let s = svd3(&d);
        assert!((s.sigma - Vector3::new(3.0, 1.0, -0.5)).norm() < 1e-15);
        assert!((s.recompose() - d).norm() < 1e-14);
        assert!((s.u.determinant() - 1.0).abs() < 1e-14);
        assert!((s.v.determinant() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn svd_degenerate() {
        for f in [
            Matrix3::zeros(),
            Matrix3::new(1.0, 2.0, 3.0, 2.0, 4.0, 6.0, -1.0, -2.0, -3.0),
            Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0),
        ] {
            let s = svd3(&f);
            assert!((s.recompose() - f).norm() <= 1e-12 * f.norm().max(1.0));
            assert!((s.u.determinant() - 1.0).abs() < 1e-12);
            assert!((s.v.determinant() - 1.0).abs() < 1e-12);
            assert!(s.sigma[0] >= s.sigma[1] && s.sigma[1] >= s.sigma[2].abs());
        }
    }

    #[test]
    fn corotated_rest_and_rotation() {
        assert_eq!(stress_fixed_corotated(&Matrix3::identity(), 1.0, 1.0).unwrap(), Matrix3::zeros());
        let r = rot(Vector3::new(1.0, 2.0, -0.5), 0.7);
        assert!(stress_fixed_corotated(&r, 3.0, 5.0).unwrap().norm() < 1e-12);
        assert!(matches!(
            stress_fixed_corotated(&Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0)), 1.0, 1.0),
            Err(Error::InvertedElement { .. })
        ));
    }

    #[test]
    fn corotated_matches_energy_derivative() {
        let f = Matrix3::from_diagonal(&Vector3::new(1.1, 1.0, 1.0));
        let p = stress_fixed_corotated(&f, 1.0, 1.0).unwrap();
        // Energy from singular values of the diagonal matrix directly.
        let psi = |g: &Matrix3| {
            let e = g.transpose() * g;
            let ev = e.symmetric_eigenvalues().map(f64::sqrt);
            let j = g.determinant();
            ev.iter().map(|s| (s - 1.0) * (s - 1.0)).sum::<f64>() + 0.5 * (j - 1.0) * (j - 1.0)
        };
        let h = 1e-6;
        for r in 0..3 {
            for c in 0..3 {
                let mut fp = f;
                fp[(r, c)] += h;
                let mut fm = f;
                fm[(r, c)] -= h;
                let fd = (psi(&fp) - psi(&fm)) / (2.0 * h);
                assert!((fd - p[(r, c)]).abs() < 1e-6, "{r}{c}: {fd} vs {}", p[(r, c)]);
            }
        }
    }

    #[test]
    fn kirchhoff_matches_piola() {
        let f = Matrix3::new(1.1, 0.2, 0.0, -0.1, 0.9, 0.05, 0.02, 0.0, 1.2);
        let p = stress_fixed_corotated(&f, 2.0, 3.0).unwrap();
        let tau = kirchhoff_fixed_corotated(&f, 2.0, 3.0).unwrap();
        assert!((p * f.transpose() - tau).norm() < 1e-12);
    }

    #[test]
    fn fluid_examples() {
        assert_eq!(stress_j_fluid(1.0, 10.0, 7.15).unwrap().pressure, 0.0);
        let p = stress_j_fluid(0.9, 10.0, 7.15).unwrap().pressure;
        assert!((p - 10.0 * (0.9f64.powf(-7.15) - 1.0)).abs() < 1e-12);
        assert!((p - 11.24).abs() < 0.01);
        let far = stress_j_fluid(1e12, 10.0, 7.15).unwrap().pressure;
        assert!((far + 10.0).abs() < 1e-9);
        assert!(stress_j_fluid(0.0, 10.0, 7.15).is_err());
        assert!(stress_j_fluid(-0.5, 10.0, 7.15).is_err());
        let s = stress_j_fluid(0.9, 10.0, 7.15).unwrap();
        assert!((s.kirchhoff - Matrix3::identity() * (-0.9 * p)).norm() < 1e-12);
    }

    #[test]
    fn viscous_stress_is_deviatoric() {
        let g = Matrix3::new(1.0, 2.0, 0.0, 0.0, -3.0, 1.0, 0.5, 0.0, 4.0);
        let t = viscous_kirchhoff(1.0, 0.1, &g);
        assert!(t.trace().abs() < 1e-14);
        assert!((t - t.transpose()).norm() < 1e-14);
        // A rigid rotation produces no viscous stress.
        let w = Matrix3::new(0.0, -1.0, 2.0, 1.0, 0.0, -3.0, -2.0, 3.0, 0.0);
        assert!(viscous_kirchhoff(1.0, 0.1, &w).norm() < 1e-14);
    }

    #[test]
    fn drucker_prager_examples() {
        let (mu, lambda) = lame_from_e_nu(3.537e7, 0.3).unwrap();
        let inside = Matrix3::from_diagonal(&Vector3::new(0.99, 0.985, 0.98));
        assert_eq!(return_map_drucker_prager(&inside, 30.0, mu, lambda).unwrap(), inside);
        let expand = Matrix3::identity() * 1.2;
        let tip = return_map_drucker_prager(&expand, 30.0, mu, lambda).unwrap();
        assert!((tip - Matrix3::identity()).norm() < 1e-15);
        let sheared = Matrix3::new(1.0, 0.3, 0.0, 0.0, 0.97, 0.0, 0.0, 0.0, 1.0);
        let proj = return_map_drucker_prager(&sheared, 30.0, mu, lambda).unwrap();
        assert!(drucker_prager_yield(&proj, 30.0, mu, lambda) <= 1e-10);
        let twice = return_map_drucker_prager(&proj, 30.0, mu, lambda).unwrap();
        assert!((twice - proj).norm() < 1e-12);
    }

    #[test]
    fn material_validation() {
        let bad = Material::new(Constitutive::FixedCorotated { youngs: 1e5, poisson: 0.6 }, 1000.0);
        match bad {
            Err(Error::InvalidParameter { field, .. }) => assert_eq!(field, "poisson"),
            other => panic!("{other:?}"),
        }
        assert!(Material::new(Constitutive::JFluid { bulk: 10.0, gamma: 1.0, viscosity: 0.0 }, 1.0).is_err());
        assert!(Material::new(
            Constitutive::DruckerPrager { youngs: 1e5, poisson: 0.3, friction_angle: 90.0 },
            1.0
        )
        .is_err());
    }

    #[test]
    fn wave_speeds() {
        let m = Material::new(Constitutive::FixedCorotated { youngs: 1e6, poisson: 0.4 }, 1000.0).unwrap();
        let (mu, lambda) = m.lame();
        assert!((m.wave_speed() - ((lambda + 2.0 * mu) / 1000.0).sqrt()).abs() < 1e-12);
        let w = Material::new(Constitutive::JFluid { bulk: 10.0, gamma: 7.15, viscosity: 0.1 }, 1000.0).unwrap();
        assert!((w.wave_speed() - (71.5f64 / 1000.0).sqrt()).abs() < 1e-15);
        assert_eq!(w.wave_speed_at(1.0), w.wave_speed());
        let compressed = (71.5 * 0.5f64.powf(-6.15) / 1000.0).sqrt();
        assert!((w.wave_speed_at(0.5) - compressed).abs() < 1e-12);
        assert_eq!(m.wave_speed_at(0.5), m.wave_speed());
    }

    #[test]
    fn clamping_and_inversion() {
        let mut m = Material::new(Constitutive::FixedCorotated { youngs: 1e5, poisson: 0.3 }, 1.0).unwrap();
        let inverted = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -0.5));
        assert!(matches!(m.project(&inverted), Err(Error::InvertedElement { .. })));
        m.clamp_singular_values = true;
        let fixed = m.project(&inverted).unwrap();
        let s = svd3(&fixed).sigma;
        assert!(s.min() >= CLAMP_SIGMA - 1e-15);
        assert!(fixed.determinant() > 0.0);
    }
}
