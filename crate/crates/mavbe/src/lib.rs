//! Online estimation of 3-axis magnetometer hard-iron/soft-iron biases and
//! angular-rate sensor biases, using only magnetometer and rate signals.
//!
//! The estimator is a 15-state extended Kalman filter over
//! `[m_t; m_b; t_p; w_b]`: the true field vector in the instrument frame, the
//! hard-iron offset, the 6 unique entries of the symmetric soft-iron matrix,
//! and the rate-sensor bias. Measurements are the three magnetometer axes plus
//! the known squared field magnitude as a pseudo-measurement.
//!
//! The crate also ships a magnetometer-only batch baseline (ellipsoid fit), an
//! attitude/heading and Doppler dead-reckoning evaluation layer, and a
//! sinusoidal-motion IMU simulator for end-to-end experiments.
//!
//! All numerics are generic over the scalar type through [`Real`]; the bare
//! type names (`Vec3`, `StateVector`, ...) default to `f64`.

mod attitude;
mod batch;
mod ekf;
mod error;
mod linalg;
mod process;
mod sim;

pub use attitude::{
    dead_reckon, heading, heading_rmse_deg, roll_pitch, track_error, wrap_angle, Attitude,
    NavTrack,
};
pub use batch::{fit_ellipsoid, sphere_coverage_metric, EllipsoidFit};
pub use ekf::{
    compensate, measurement_h, measurement_jacobian, predict, run_filter, update,
    CalibrationResult, FilterConfig, FilterRun, FilterState, InnovationForm, TracePoint,
};
pub use error::Error;
pub use linalg::{expm, kron, skew, soft_iron_stack_jacobian, stack, SoftIronParams};
pub use process::{
    discretize, linearize, observability_gramian, process_f, process_jacobian, pseudo_control,
    Discretization, GramianAnalysis, LinearizedModel, StateVector,
};
pub use sim::{generate, preset_sim1, preset_sim2, GroundTruthRecord, ScenarioSpec, SimOutput};

/// Scalar type the estimator math is generic over (`f32`, `f64`, ...).
pub trait Real:
    nalgebra::RealField + num_traits::FromPrimitive + num_traits::ToPrimitive + Copy
{
}
impl<T> Real for T where
    T: nalgebra::RealField + num_traits::FromPrimitive + num_traits::ToPrimitive + Copy
{
}

/// Converts an `f64` constant into the working scalar type.
pub(crate) fn real<S: Real>(x: f64) -> S {
    S::from_f64(x).expect("constant representable in the scalar type")
}

pub type Vec3<S = f64> = nalgebra::Vector3<S>;
pub type Mat3<S = f64> = nalgebra::Matrix3<S>;

/// Number of filter states: 3 field + 3 hard-iron + 6 soft-iron + 3 rate bias.
pub const STATE_DIM: usize = 15;
/// Measurement dimension: 3 magnetometer axes + squared field magnitude.
pub const MEAS_DIM: usize = 4;

pub type StateVec<S = f64> = nalgebra::SVector<S, STATE_DIM>;
pub type StateMat<S = f64> = nalgebra::SMatrix<S, STATE_DIM, STATE_DIM>;
pub type MeasVec<S = f64> = nalgebra::SVector<S, MEAS_DIM>;
pub type MeasMat<S = f64> = nalgebra::SMatrix<S, MEAS_DIM, MEAS_DIM>;
pub type MeasJacobian<S = f64> = nalgebra::SMatrix<S, MEAS_DIM, STATE_DIM>;

/// One timestamped IMU record: magnetometer (gauss), angular rate (rad/s),
/// acceleration (m/s^2), all in the instrument frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample<S: Real = f64> {
    pub t: S,
    pub mag: Vec3<S>,
    pub gyro: Vec3<S>,
    pub accel: Vec3<S>,
}
