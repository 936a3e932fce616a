//! Magnetometer-only batch calibration: a least-squares ellipsoid fit that
//! plays the comparative role of the classic batch methods, including their
//! failure mode under low roll/pitch excitation.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{real, Error, Mat3, Real, Vec3};

/// Minimum sample count for the 10-parameter quadric (9 free up to scale,
/// plus residual).
const MIN_SAMPLES: usize = 10;
/// Design-matrix condition limit (largest over second-smallest singular
/// value) before the fit is declared invalid.
const COND_LIMIT: f64 = 1e8;
/// Required separation between the solution direction and the next
/// null-space direction of the design matrix. Under measurement noise a
/// nearly-degenerate geometry shows up here long before the raw condition
/// number reaches its limit.
const NULL_GAP_MIN: f64 = 10.0;
/// The recovered quadric must be positive definite relative to its own
/// largest eigenvalue; near-plane-pair solutions fail this.
const EFFECTIVE_PD_RATIO: f64 = 1e-4;

/// Result of the batch quadric fit.
///
/// The fitted surface is `(m - center)^T quadric (m - center) = scale` with
/// `quadric` the unit-norm symmetric solution; `t_hat` is the symmetric
/// positive-definite soft-iron estimate scaled so calibrated samples have
/// squared norm `field_mag_sq`, and `m_b_hat` the hard-iron estimate.
#[derive(Clone, Debug)]
pub struct EllipsoidFit<S: Real = f64> {
    pub quadric: Mat3<S>,
    pub center: Vec3<S>,
    pub scale: S,
    pub t_hat: Mat3<S>,
    pub m_b_hat: Vec3<S>,
    /// Largest over second-smallest singular value of the design matrix.
    pub condition_number: S,
    /// Second-smallest over smallest singular value: how well the solution
    /// direction is separated from the rest of the near-null space.
    pub null_gap: S,
    pub valid: bool,
}

impl<S: Real> EllipsoidFit<S> {
    fn invalid(quadric: Mat3<S>, condition_number: S, null_gap: S) -> Self {
        Self {
            quadric,
            center: Vec3::zeros(),
            scale: S::zero(),
            t_hat: Mat3::identity(),
            m_b_hat: Vec3::zeros(),
            condition_number,
            null_gap,
            valid: false,
        }
    }
}

/// Fits the general quadric `m^T E m + 2 f^T m + g = 0` to magnetometer
/// samples by the smallest singular vector of the design matrix, then
/// recovers `center = -E^-1 f` and the PDS square-root soft-iron estimate.
///
/// The fit is declared invalid — never emitting complex or NaN parameters —
/// when the recovered `E` is not (effectively) positive definite, when the
/// design matrix is ill-conditioned, or when the null-space direction is not
/// separated from the noise floor.
pub fn fit_ellipsoid<S: Real>(
    samples: &[Vec3<S>],
    field_mag_sq: S,
) -> Result<EllipsoidFit<S>, Error> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    if field_mag_sq <= S::zero() {
        return Err(Error::InvalidConfig("field magnitude^2 must be positive"));
    }

    let two = real::<S>(2.0);
    let design = DMatrix::from_fn(samples.len(), 10, |i, j| {
        let m = samples[i];
        match j {
            0 => m.x * m.x,
            1 => two * m.x * m.y,
            2 => two * m.x * m.z,
            3 => m.y * m.y,
            4 => two * m.y * m.z,
            5 => m.z * m.z,
            6 => two * m.x,
            7 => two * m.y,
            8 => two * m.z,
            _ => S::one(),
        }
    });

    let svd = design.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested right singular vectors");
    let mut sv: Vec<(usize, S)> = svd.singular_values.iter().copied().enumerate().collect();
    sv.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite singular values"));
    let sigma_max = sv[0].1;
    let sigma_9 = sv[8].1;
    let (idx_min, sigma_min) = sv[9];
    if sigma_max == S::zero() || sigma_9 == S::zero() {
        return Err(Error::DegenerateDesign);
    }
    let condition_number = sigma_max / sigma_9;
    let null_gap = if sigma_min > S::zero() {
        sigma_9 / sigma_min
    } else {
        S::max_value().unwrap()
    };

    // Unit-norm parameter vector: the smallest right singular vector.
    let p = v_t.row(idx_min).transpose();
    let mut e = Mat3::new(p[0], p[1], p[2], p[1], p[3], p[4], p[2], p[4], p[5]);
    let mut f = Vec3::new(p[6], p[7], p[8]);
    let mut g = p[9];
    // Fix the sign so the quadric opens upward.
    if e.trace() < S::zero() {
        e = -e;
        f = -f;
        g = -g;
    }

    let eig = SymmetricEigen::new(e);
    let mut lam_min = S::max_value().unwrap();
    let mut lam_max = S::zero();
    for l in eig.eigenvalues.iter() {
        lam_min = lam_min.min(*l);
        lam_max = lam_max.max(*l);
    }

    let well_conditioned = condition_number.to_f64().unwrap_or(f64::INFINITY) <= COND_LIMIT;
    let separated = null_gap.to_f64().unwrap_or(f64::INFINITY) >= NULL_GAP_MIN;
    let effectively_pd = lam_max > S::zero() && lam_min > real::<S>(EFFECTIVE_PD_RATIO) * lam_max;
    if !(well_conditioned && separated && effectively_pd) {
        return Ok(EllipsoidFit::invalid(e, condition_number, null_gap));
    }

    // center = -E^-1 f; (m - c)^T E (m - c) = c^T E c - g
    let e_inv = {
        let mut inv = Mat3::zeros();
        for i in 0..3 {
            let v = eig.eigenvectors.column(i);
            inv += v * v.transpose() / eig.eigenvalues[i];
        }
        inv
    };
    let center = -(e_inv * f);
    let scale = (center.transpose() * e * center)[0] - g;
    if scale <= S::zero() {
        return Ok(EllipsoidFit::invalid(e, condition_number, null_gap));
    }

    // Calibrated samples satisfy ||T^-1 (m - c)||^2 = field_mag_sq, so
    // E / scale = T^-T T^-1 / field_mag_sq and T = sqrt((E/scale)^-1 / field).
    let tt = e_inv * (scale / field_mag_sq);
    let tt_eig = SymmetricEigen::new(tt);
    if tt_eig.eigenvalues.iter().any(|l| *l <= S::zero()) {
        return Ok(EllipsoidFit::invalid(e, condition_number, null_gap));
    }
    let mut t_hat = Mat3::zeros();
    for i in 0..3 {
        let v = tt_eig.eigenvectors.column(i);
        t_hat += v * v.transpose() * tt_eig.eigenvalues[i].sqrt();
    }

    Ok(EllipsoidFit {
        quadric: e,
        center,
        scale,
        t_hat,
        m_b_hat: center,
        condition_number,
        null_gap,
        valid: true,
    })
}

/// Fraction of occupied cells in a fixed 64-cell equal-area partition
/// (8 polar bands uniform in z, 8 azimuth sectors) of the direction sphere
/// of the centered samples.
pub fn sphere_coverage_metric<S: Real>(samples: &[Vec3<S>]) -> Result<S, Error> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("sphere_coverage_metric"));
    }
    let mut center = Vec3::zeros();
    for s in samples {
        center += s;
    }
    center /= real::<S>(samples.len() as f64);

    let mut occupied = [false; 64];
    for s in samples {
        let d = s - center;
        let n = d.norm();
        if n == S::zero() {
            continue;
        }
        let z = (d.z / n).to_f64().unwrap_or(0.0).clamp(-1.0, 1.0);
        let az = d.y.to_f64().unwrap_or(0.0).atan2(d.x.to_f64().unwrap_or(1.0));
        let band = (((z + 1.0) / 2.0 * 8.0) as usize).min(7);
        let sector = (((az + std::f64::consts::PI) / (2.0 * std::f64::consts::PI) * 8.0) as usize)
            .min(7);
        occupied[band * 8 + sector] = true;
    }
    let count = occupied.iter().filter(|c| **c).count();
    Ok(real::<S>(count as f64 / 64.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn rng() -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(5)
    }

    fn unit_dirs(n: usize, rng: &mut impl Rng) -> Vec<Vec3<f64>> {
        (0..n)
            .map(|_| {
                loop {
                    let v = Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    );
                    let n = v.norm();
                    if n > 1e-3 {
                        return v / n;
                    }
                }
            })
            .collect()
    }

    #[test]
    fn unit_sphere_fits_identity() {
        let mut rng = rng();
        let samples = unit_dirs(500, &mut rng);
        let fit = fit_ellipsoid(&samples, 1.0).unwrap();
        assert!(fit.valid);
        assert_relative_eq!(fit.t_hat, Mat3::identity(), epsilon = 1e-10);
        assert!(fit.m_b_hat.norm() < 1e-10);
    }

    #[test]
    fn noise_free_recovery_is_exact() {
        // any PDS T and any m_b with full sphere coverage: error < 1e-8
        let mut rng = rng();
        let t = crate::SoftIronParams::from([1.1, 0.1, 0.03, 0.95, 0.01, 1.2]).pack();
        let m_b = Vec3::new(0.06, -0.07, -0.1);
        let field = 0.49f64;
        let samples: Vec<Vec3<f64>> = unit_dirs(800, &mut rng)
            .into_iter()
            .map(|d| t * (d * field) + m_b)
            .collect();
        let fit = fit_ellipsoid(&samples, field * field).unwrap();
        assert!(fit.valid);
        assert!((fit.t_hat - t).norm() < 1e-8, "T err {}", (fit.t_hat - t).norm());
        assert!((fit.m_b_hat - m_b).norm() < 1e-8);
    }

    #[test]
    fn fit_is_order_invariant() {
        let mut rng = rng();
        let samples: Vec<Vec3<f64>> = unit_dirs(200, &mut rng);
        let fit1 = fit_ellipsoid(&samples, 1.0).unwrap();
        let mut reversed = samples.clone();
        reversed.reverse();
        let fit2 = fit_ellipsoid(&reversed, 1.0).unwrap();
        assert_relative_eq!(fit1.t_hat, fit2.t_hat, epsilon = 1e-9);
        assert_relative_eq!(fit1.m_b_hat, fit2.m_b_hat, epsilon = 1e-9);
    }

    #[test]
    fn band_limited_samples_are_rejected_not_garbage() {
        // a level heading sweep only covers a ring of the sphere; the fit
        // must flag itself instead of emitting a bogus calibration
        let mut rng = rng();
        let t = crate::SoftIronParams::from([1.1, 0.1, 0.03, 0.95, 0.01, 1.2]).pack();
        let m_b = Vec3::new(0.06, -0.07, -0.1);
        let world = Vec3::new(0.19, -0.02, 0.45);
        let samples: Vec<Vec3<f64>> = (0..2000)
            .map(|i| {
                let psi = 2.0 * std::f64::consts::PI * i as f64 / 997.0;
                let m_t = crate::attitude::rot_z(psi).transpose() * world;
                let noise = Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ) * 2e-4;
                t * m_t + m_b + noise
            })
            .collect();
        let fit = fit_ellipsoid(&samples, world.norm_squared()).unwrap();
        assert!(
            !fit.valid || fit.condition_number > 1e8,
            "cond {} gap {} valid {}",
            fit.condition_number,
            fit.null_gap,
            fit.valid
        );
        // outputs stay finite even when invalid
        assert!(fit.quadric.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn insufficient_samples_error() {
        let samples = vec![Vec3::<f64>::new(1.0, 0.0, 0.0); 9];
        assert_eq!(
            fit_ellipsoid(&samples, 1.0).unwrap_err(),
            Error::InsufficientSamples { needed: 10, got: 9 }
        );
    }

    #[test]
    fn coverage_single_direction() {
        // all samples in one direction from the centroid occupy one cell...
        let samples = vec![
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(3.0, 0.0, 0.0),
        ];
        // ...after centering, collinear points split across two opposite cells
        let c = sphere_coverage_metric(&samples).unwrap();
        assert!(c <= 2.0 / 64.0);
    }

    #[test]
    fn coverage_uniform_directions() {
        let mut rng = rng();
        let samples = unit_dirs(10_000, &mut rng);
        let c = sphere_coverage_metric(&samples).unwrap();
        assert!(c > 0.95, "coverage {}", c);
    }

    #[test]
    fn coverage_great_circle_band() {
        // heading sweep only, level: at most a couple of polar bands
        let samples: Vec<Vec3<f64>> = (0..5000)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / 4999.0;
                Vec3::new(a.cos(), a.sin(), 0.3)
            })
            .collect();
        let c = sphere_coverage_metric(&samples).unwrap();
        assert!(c <= 16.0 / 64.0, "coverage {}", c);
    }
}
