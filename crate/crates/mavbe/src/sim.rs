//! Sinusoidal-motion IMU simulator: rotating true field, biased and noisy
//! magnetometer/rate/accelerometer streams, and ground truth for every
//! quantity the estimators recover.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::attitude::{rot_x, rot_y, rot_z, Attitude, NavTrack};
use crate::linalg::SoftIronParams;
use crate::{real, Error, ImuSample, Mat3, Real, Vec3};

const GRAVITY: f64 = 9.81;

/// Accelerometer noise observed on the reference MEMS IMU bench (m/s^2).
const DEFAULT_SIGMA_A: f64 = 0.0075;

/// One simulated experiment: sinusoidal attitude per axis, true sensor
/// biases, noise levels, and the constant world-frame field.
#[derive(Clone, Debug)]
pub struct ScenarioSpec<S: Real = f64> {
    /// Simulated length (s).
    pub duration: S,
    /// Sample rate of the generated streams (Hz).
    pub imu_rate: S,
    /// Sinusoid amplitudes (roll, pitch, heading), degrees.
    pub amplitudes_deg: [S; 3],
    /// Sinusoid frequencies (roll, pitch, heading), Hz.
    pub frequencies_hz: [S; 3],
    pub m_b: Vec3<S>,
    pub t_p: SoftIronParams<S>,
    pub w_b: Vec3<S>,
    /// Magnetometer noise std per axis (gauss).
    pub sigma_m: S,
    /// Rate noise std per axis (rad/s).
    pub sigma_w: S,
    /// Accelerometer noise std per axis (m/s^2).
    pub sigma_a: S,
    /// Constant true field in the NED world frame (gauss).
    pub world_field: Vec3<S>,
    /// Constant instrument-frame velocity; when set, the output carries a
    /// DVL stream and the exact world track.
    pub body_velocity: Option<Vec3<S>>,
    pub rng_seed: u64,
}

/// Per-sample ground truth.
#[derive(Clone, Debug)]
pub struct GroundTruthRecord<S: Real = f64> {
    pub t: S,
    /// Instrument-to-world rotation, orthonormal to 1e-10.
    pub rotation: Mat3<S>,
    /// True body angular velocity (rad/s).
    pub w_t: Vec3<S>,
    /// True field in the instrument frame: `R^T * world_field`.
    pub m_t: Vec3<S>,
    /// Canonical Euler attitude of `rotation` (pitch in [-pi/2, pi/2]).
    pub attitude: Attitude<S>,
}

/// Generated streams plus ground truth.
#[derive(Clone, Debug)]
pub struct SimOutput<S: Real = f64> {
    pub samples: Vec<ImuSample<S>>,
    pub truth: Vec<GroundTruthRecord<S>>,
    /// Noise-free instrument-frame velocity stream, when requested.
    pub dvl: Option<Vec<Vec3<S>>>,
    /// Exact world-frame track of the velocity profile, when requested.
    pub track: Option<NavTrack<S>>,
}

/// Reference sensor parameters: Sim1 sweeps all three axes through +/-180
/// degrees with slow incommensurate sinusoids (peak rates ~0.12 rad/s).
pub fn preset_sim1<S: Real>() -> ScenarioSpec<S> {
    ScenarioSpec {
        duration: real(1200.0),
        imu_rate: real(20.0),
        amplitudes_deg: [real(180.0), real(180.0), real(180.0)],
        frequencies_hz: [real(0.006), real(0.0051), real(0.003)],
        m_b: Vec3::new(real(0.06), real(-0.07), real(-0.10)),
        t_p: SoftIronParams::from([
            real(1.1),
            real(0.1),
            real(0.03),
            real(0.95),
            real(0.01),
            real(1.2),
        ]),
        w_b: Vec3::new(real(-0.002), real(0.003), real(-0.001)),
        sigma_m: real(2e-4),
        sigma_w: real(2.4e-4),
        sigma_a: real(DEFAULT_SIGMA_A),
        world_field: Vec3::new(real(0.19), real(-0.02), real(0.45)),
        body_velocity: None,
        rng_seed: 7,
    }
}

/// Same sensors as Sim1 but modest roll/pitch excitation (under 50 degrees)
/// with a full +/-180 degree heading sweep. The sinusoids run a little
/// faster than Sim1's, yet the small amplitudes keep peak rates near
/// 0.11 rad/s, about half of Sim1's.
pub fn preset_sim2<S: Real>() -> ScenarioSpec<S> {
    ScenarioSpec {
        amplitudes_deg: [real(45.0), real(45.0), real(180.0)],
        frequencies_hz: [real(0.011), real(0.00935), real(0.0055)],
        ..preset_sim1()
    }
}

impl<S: Real> ScenarioSpec<S> {
    pub fn validate(&self) -> Result<(), Error> {
        if self.duration <= S::zero() {
            return Err(Error::InvalidScenario("duration must be positive"));
        }
        if self.imu_rate <= S::zero() {
            return Err(Error::InvalidScenario("imu_rate must be positive"));
        }
        if self.sigma_m < S::zero() || self.sigma_w < S::zero() || self.sigma_a < S::zero() {
            return Err(Error::InvalidScenario("noise levels must be >= 0"));
        }
        if !self.t_p.is_positive_definite() {
            return Err(Error::InvalidScenario(
                "soft-iron matrix must be positive definite",
            ));
        }
        if self.world_field.norm() == S::zero() {
            return Err(Error::InvalidScenario("world field must be nonzero"));
        }
        Ok(())
    }

    /// Squared magnitude of the world field, the filter pseudo-measurement.
    pub fn field_mag_sq(&self) -> S {
        self.world_field.norm_squared()
    }

    /// Declination implied by the world field: subtracting it from magnetic
    /// heading yields the geodetic heading the truth records carry.
    pub fn implied_declination(&self) -> S {
        -self.world_field.y.atan2(self.world_field.x)
    }
}

/// Generates the sampled streams for a scenario.
///
/// Per-axis attitude angles follow `amplitude * sin(2 pi f t)`; the body rate
/// is the exact analytic Euler-rate kinematics of that trajectory, the field
/// is `R^T * world_field`, and the accelerometer sees gravity only. Gaussian
/// noise comes from a seeded generator (noise is drawn in f64 so streams are
/// bit-identical across scalar types).
pub fn generate<S: Real>(spec: &ScenarioSpec<S>) -> Result<SimOutput<S>, Error> {
    spec.validate()?;

    let dt = S::one() / spec.imu_rate;
    let n = (spec.duration * spec.imu_rate)
        .to_f64()
        .map(|x| x.round() as usize)
        .unwrap_or(0)
        + 1;

    let deg = S::pi() / real::<S>(180.0);
    let amp = [
        spec.amplitudes_deg[0] * deg,
        spec.amplitudes_deg[1] * deg,
        spec.amplitudes_deg[2] * deg,
    ];
    let omega = [
        S::two_pi() * spec.frequencies_hz[0],
        S::two_pi() * spec.frequencies_hz[1],
        S::two_pi() * spec.frequencies_hz[2],
    ];

    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let unit = Normal::new(0.0f64, 1.0).expect("unit normal");
    let mut noise3 = |sigma: S| -> Vec3<S> {
        let x = real::<S>(unit.sample(&mut rng));
        let y = real::<S>(unit.sample(&mut rng));
        let z = real::<S>(unit.sample(&mut rng));
        Vec3::new(x, y, z) * sigma
    };

    let t_mat = spec.t_p.pack();
    let gravity = Vec3::new(S::zero(), S::zero(), real::<S>(-GRAVITY));

    let mut samples = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut world_velocities: Vec<Vec3<S>> = Vec::new();
    for k in 0..n {
        let t = dt * real::<S>(k as f64);
        let angles = [
            amp[0] * (omega[0] * t).sin(),
            amp[1] * (omega[1] * t).sin(),
            amp[2] * (omega[2] * t).sin(),
        ];
        let rates = [
            amp[0] * omega[0] * (omega[0] * t).cos(),
            amp[1] * omega[1] * (omega[1] * t).cos(),
            amp[2] * omega[2] * (omega[2] * t).cos(),
        ];
        let (roll, pitch, heading) = (angles[0], angles[1], angles[2]);
        let rotation = rot_z(heading) * rot_y(pitch) * rot_x(roll);

        // Euler-rate kinematics for the Rz*Ry*Rx composition.
        let (sin_r, cos_r) = (roll.sin(), roll.cos());
        let (sin_p, cos_p) = (pitch.sin(), pitch.cos());
        let w_t = Vec3::new(
            rates[0] - rates[2] * sin_p,
            rates[1] * cos_r + rates[2] * cos_p * sin_r,
            -rates[1] * sin_r + rates[2] * cos_p * cos_r,
        );

        let m_t = rotation.transpose() * spec.world_field;
        samples.push(ImuSample {
            t,
            mag: t_mat * m_t + spec.m_b + noise3(spec.sigma_m),
            gyro: w_t + spec.w_b + noise3(spec.sigma_w),
            accel: rotation.transpose() * gravity + noise3(spec.sigma_a),
        });
        truth.push(GroundTruthRecord {
            t,
            rotation,
            w_t,
            m_t,
            attitude: Attitude::from_rotation(&rotation),
        });
        if let Some(v_body) = spec.body_velocity {
            world_velocities.push(rotation * v_body);
        }
    }

    let (dvl, track) = if let Some(v_body) = spec.body_velocity {
        // Exact track: trapezoidal integral of the true world velocity.
        let half = real::<S>(0.5);
        let mut positions = Vec::with_capacity(n);
        let mut p = Vec3::zeros();
        positions.push(p);
        for k in 1..n {
            p += (world_velocities[k - 1] + world_velocities[k]) * half * dt;
            positions.push(p);
        }
        (
            Some(vec![v_body; n]),
            Some(NavTrack {
                times: truth.iter().map(|g| g.t).collect(),
                positions,
            }),
        )
    } else {
        (None, None)
    };

    Ok(SimOutput {
        samples,
        truth,
        dvl,
        track,
    })
}
