//! The 15-state extended Kalman filter: predict with the discretized
//! linearization, update against the 4-dimensional measurement (three
//! magnetometer axes plus the squared field magnitude), and expose bias
//! estimates and compensated signals.

use std::collections::VecDeque;

use nalgebra::{SMatrix, SVector, SymmetricEigen};

use crate::linalg::{kron, soft_iron_stack_jacobian, SoftIronParams};
use crate::process::{linearize, StateVector, MB, MT, TP};
use crate::{
    real, Error, ImuSample, Mat3, MeasJacobian, MeasMat, MeasVec, Real, StateMat, StateVec, Vec3,
};

/// How the update residual is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InnovationForm {
    /// Standard EKF residual `z - h(phi')`, consistent with the nonlinear
    /// measurement model. The default.
    #[default]
    Residual,
    /// Literal linear residual `z - C * phi'`. For this bilinear/quadratic
    /// measurement `C * phi'` is not `h(phi')` (the field term appears twice);
    /// kept as a switch so the discrepancy can be studied.
    Linearized,
}

/// Filter tuning: step, noise covariances, initial state and covariance, and
/// the known squared field magnitude.
#[derive(Clone, Debug)]
pub struct FilterConfig<S: Real = f64> {
    /// Estimator step (s).
    pub tau: S,
    /// Diagonal of the process noise covariance.
    pub q_diag: StateVec<S>,
    /// Diagonal of the measurement noise covariance (gauss^2 x3, gauss^4).
    pub r_diag: MeasVec<S>,
    /// Initial state. The field block is replaced by the first magnetometer
    /// sample when a run starts.
    pub phi0: StateVector<S>,
    /// Initial covariance (symmetric PSD).
    pub sigma0: StateMat<S>,
    /// Known squared magnitude of the local field (gauss^2); set to 1 to
    /// normalize when the magnitude is unknown.
    pub field_mag_sq: S,
    pub innovation_form: InnovationForm,
    /// Replace the field block of `phi0` with the first magnetometer sample
    /// when a run starts (the cold-start choice paired with an identity
    /// soft-iron guess). Disable when resuming from a previous calibration.
    pub init_field_from_first_sample: bool,
}

impl<S: Real> FilterConfig<S> {
    /// Reference tuning for a 20 Hz MEMS IMU filtered at 10 Hz:
    /// magnetometer noise (2e-4 G)^2 on the field axes and the same order on
    /// the norm pseudo-measurement, slow-random-walk process noise with the
    /// rate-bias states held two decades tighter.
    pub fn new(field_mag_sq: S) -> Self {
        let mut q_diag = StateVec::from_element(real(1e-10));
        for i in 12..15 {
            q_diag[i] = real(1e-12);
        }
        let r_diag = MeasVec::from_element(real(4e-8));
        let mut sigma0_diag = StateVec::from_element(real(1e-2));
        for i in 6..12 {
            sigma0_diag[i] = real(1e-1);
        }
        for i in 12..15 {
            sigma0_diag[i] = real(1e-4);
        }
        Self {
            tau: real(0.1),
            q_diag,
            r_diag,
            phi0: StateVector::new(
                Vec3::zeros(),
                Vec3::zeros(),
                SoftIronParams::identity(),
                Vec3::zeros(),
            ),
            sigma0: StateMat::from_diagonal(&sigma0_diag),
            field_mag_sq,
            innovation_form: InnovationForm::Residual,
            init_field_from_first_sample: true,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.tau <= S::zero() {
            return Err(Error::InvalidConfig("tau must be positive"));
        }
        if self.q_diag.iter().any(|q| *q < S::zero()) {
            return Err(Error::InvalidConfig("process noise diagonal must be >= 0"));
        }
        if self.r_diag.iter().any(|r| *r < S::zero()) {
            return Err(Error::InvalidConfig(
                "measurement noise diagonal must be >= 0",
            ));
        }
        if self.field_mag_sq <= S::zero() {
            return Err(Error::InvalidConfig("field magnitude^2 must be positive"));
        }
        let asym = (self.sigma0 - self.sigma0.transpose()).norm();
        if asym > real::<S>(1e-9) * self.sigma0.norm().max(S::one()) {
            return Err(Error::InvalidConfig("sigma0 must be symmetric"));
        }
        let min_eig = self
            .sigma0
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(S::zero(), |a, b| a.min(b));
        if min_eig < -real::<S>(1e-12) * self.sigma0.norm() {
            return Err(Error::InvalidConfig("sigma0 must be PSD"));
        }
        Ok(())
    }
}

impl<S: Real> Default for FilterConfig<S> {
    fn default() -> Self {
        Self::new(S::one())
    }
}

/// Filter state after a tick: estimate, covariance, tick counter, and the
/// residual of the last accepted update.
#[derive(Clone, Copy, Debug)]
pub struct FilterState<S: Real = f64> {
    pub phi: StateVector<S>,
    pub sigma: StateMat<S>,
    pub tick_count: u64,
    pub last_innovation: MeasVec<S>,
}

impl<S: Real> FilterState<S> {
    pub fn init(cfg: &FilterConfig<S>) -> Self {
        Self {
            phi: cfg.phi0,
            sigma: cfg.sigma0,
            tick_count: 0,
            last_innovation: MeasVec::zeros(),
        }
    }
}

/// Converged bias estimates with final covariance and diagnostics.
#[derive(Clone, Debug)]
pub struct CalibrationResult<S: Real = f64> {
    pub m_b: Vec3<S>,
    pub t_p: SoftIronParams<S>,
    pub w_b: Vec3<S>,
    pub sigma: StateMat<S>,
    pub converged: bool,
    /// Seconds from the start of the stream to convergence.
    pub convergence_time: Option<S>,
    /// Whether the final packed soft-iron matrix is positive definite
    /// (checked here, never enforced during filtering).
    pub soft_iron_pd: bool,
}

impl<S: Real> CalibrationResult<S> {
    pub fn from_state(state: &FilterState<S>, convergence_time: Option<S>) -> Self {
        let t_p = state.phi.t_p();
        Self {
            m_b: state.phi.m_b(),
            t_p,
            w_b: state.phi.w_b(),
            sigma: state.sigma,
            converged: convergence_time.is_some(),
            convergence_time,
            soft_iron_pd: t_p.is_positive_definite(),
        }
    }

    /// Identity calibration: no hard-iron, no soft-iron, no rate bias.
    pub fn identity() -> Self {
        Self {
            m_b: Vec3::zeros(),
            t_p: SoftIronParams::identity(),
            w_b: Vec3::zeros(),
            sigma: StateMat::zeros(),
            converged: false,
            convergence_time: None,
            soft_iron_pd: true,
        }
    }
}

/// Measurement model: `[T m_t + m_b; ||m_t||^2]`.
pub fn measurement_h<S: Real>(phi: &StateVector<S>) -> MeasVec<S> {
    let m_t = phi.m_t();
    let m = phi.t_p().pack() * m_t + phi.m_b();
    MeasVec::new(m.x, m.y, m.z, m_t.norm_squared())
}

/// Measurement Jacobian
/// `[T  I3  (m_t^T (x) I3) D  0; 2 m_t^T  0  0  0]` evaluated at `phi`,
/// where `D` is the stacked-soft-iron selection matrix.
pub fn measurement_jacobian<S: Real>(phi: &StateVector<S>) -> MeasJacobian<S> {
    let m_t = phi.m_t();
    let mut c = MeasJacobian::zeros();
    c.fixed_view_mut::<3, 3>(0, MT).copy_from(&phi.t_p().pack());
    c.fixed_view_mut::<3, 3>(0, MB).copy_from(&Mat3::identity());
    let kron_block = kron(&m_t.transpose(), &Mat3::<S>::identity()) * soft_iron_stack_jacobian::<S>();
    for i in 0..3 {
        for j in 0..6 {
            c[(i, TP + j)] = kron_block[(i, j)];
        }
    }
    let two = real::<S>(2.0);
    c[(3, MT)] = two * m_t.x;
    c[(3, MT + 1)] = two * m_t.y;
    c[(3, MT + 2)] = two * m_t.z;
    c
}

fn symmetrize<S: Real>(m: &mut StateMat<S>) {
    let half = real::<S>(0.5);
    *m = (*m + m.transpose()) * half;
}

/// Propagates the state one `tau` step with the discretized linearization.
/// Bias rows are unchanged by construction; the covariance is re-symmetrized.
pub fn predict<S: Real>(
    state: &FilterState<S>,
    w_m: &Vec3<S>,
    cfg: &FilterConfig<S>,
) -> Result<FilterState<S>, Error> {
    let model = linearize(&state.phi, w_m, cfg.tau)?;
    let next = model.a_bar * state.phi.as_vector() + model.b_bar * model.u;
    let mut sigma =
        model.a_bar * state.sigma * model.a_bar.transpose() + StateMat::from_diagonal(&cfg.q_diag);
    symmetrize(&mut sigma);

    let phi = StateVector::from_vector(next);
    if !phi.is_finite() || sigma.iter().any(|x| !x.is_finite()) {
        return Err(Error::Diverged {
            tick: state.tick_count + 1,
        });
    }
    Ok(FilterState {
        phi,
        sigma,
        tick_count: state.tick_count + 1,
        last_innovation: state.last_innovation,
    })
}

/// Maximum innovation-covariance condition number before the update is
/// refused and the filter continues on prediction alone.
const INNOVATION_COND_LIMIT: f64 = 1e12;

/// Corrects the predicted state against `z = [m_m; field_mag_sq]`.
///
/// The gain uses `K = sigma' C^T (C sigma' C^T + R)^-1`; the covariance is
/// updated in Joseph form and re-symmetrized.
pub fn update<S: Real>(
    state: &FilterState<S>,
    m_m: &Vec3<S>,
    cfg: &FilterConfig<S>,
) -> Result<FilterState<S>, Error> {
    let c = measurement_jacobian(&state.phi);
    let r = MeasMat::from_diagonal(&cfg.r_diag);
    let s: MeasMat<S> = c * state.sigma * c.transpose() + r;

    let eig = s.symmetric_eigenvalues();
    let (mut lo, mut hi) = (S::max_value().unwrap(), S::zero());
    for l in eig.iter() {
        lo = lo.min(*l);
        hi = hi.max(*l);
    }
    let cond = if lo > S::zero() {
        (hi / lo).to_f64().unwrap_or(f64::INFINITY)
    } else {
        f64::INFINITY
    };
    let s_inv = if cond <= INNOVATION_COND_LIMIT {
        s.try_inverse()
    } else {
        None
    };
    let Some(s_inv) = s_inv else {
        return Err(Error::IllConditioned {
            what: "innovation covariance",
            cond,
        });
    };

    let z = MeasVec::new(m_m.x, m_m.y, m_m.z, cfg.field_mag_sq);
    let predicted = match cfg.innovation_form {
        InnovationForm::Residual => measurement_h(&state.phi),
        InnovationForm::Linearized => c * state.phi.as_vector(),
    };
    let innovation = z - predicted;

    let gain: SMatrix<S, 15, 4> = state.sigma * c.transpose() * s_inv;
    let phi = StateVector::from_vector(state.phi.as_vector() + gain * innovation);

    // Joseph form keeps the covariance PSD under roundoff.
    let i_kc = StateMat::identity() - gain * c;
    let mut sigma = i_kc * state.sigma * i_kc.transpose() + gain * r * gain.transpose();
    symmetrize(&mut sigma);

    if !phi.is_finite() || sigma.iter().any(|x| !x.is_finite()) {
        return Err(Error::Diverged {
            tick: state.tick_count,
        });
    }
    Ok(FilterState {
        phi,
        sigma,
        tick_count: state.tick_count,
        last_innovation: innovation,
    })
}

/// Bias estimates moving less than `rel` of their own magnitude (with an
/// absolute floor) over a trailing window mark convergence.
struct ConvergenceDetector<S: Real> {
    window: S,
    rel: S,
    floor: S,
    history: VecDeque<(S, SVector<S, 12>)>,
}

impl<S: Real> ConvergenceDetector<S> {
    fn new(window: S, rel: S, floor: S) -> Self {
        Self {
            window,
            rel,
            floor,
            history: VecDeque::new(),
        }
    }

    /// Records the bias estimates at elapsed time `t`; returns true once the
    /// window is full and every component stayed within tolerance of the
    /// current estimate.
    fn push(&mut self, t: S, biases: SVector<S, 12>) -> bool {
        self.history.push_back((t, biases));
        let cutoff = t - self.window;
        while self
            .history
            .front()
            .is_some_and(|(ft, _)| *ft < cutoff - real::<S>(1e-9))
        {
            self.history.pop_front();
        }
        if t < self.window {
            return false;
        }
        let current = biases;
        for i in 0..12 {
            let tol = (current[i].abs() * self.rel).max(self.floor);
            for (_, past) in &self.history {
                if (past[i] - current[i]).abs() >= tol {
                    return false;
                }
            }
        }
        true
    }
}

/// Window length (s) and movement tolerances for convergence detection.
const CONVERGENCE_WINDOW_S: f64 = 60.0;
const CONVERGENCE_REL: f64 = 0.01;
const CONVERGENCE_FLOOR: f64 = 5e-4;

/// One row of the per-tick state trace.
#[derive(Clone, Copy, Debug)]
pub struct TracePoint<S: Real = f64> {
    /// Sample-clock time of the tick (s).
    pub t: S,
    pub state: StateVector<S>,
    pub sigma_diag: StateVec<S>,
    /// The measured rate held over the step into this tick (the first entry
    /// carries the first sample's rate).
    pub held_rate: Vec3<S>,
}

/// Output of a whole-stream filter run.
#[derive(Clone, Debug)]
pub struct FilterRun<S: Real = f64> {
    pub result: CalibrationResult<S>,
    pub trace: Vec<TracePoint<S>>,
    pub ticks: u64,
    /// Updates refused for ill-conditioned innovation covariance.
    pub skipped_updates: u64,
}

/// Runs the filter over a time-ordered sample stream, ticking every
/// `cfg.tau` seconds.
///
/// Each tick propagates with the rate sample nearest the tick-interval
/// midpoint (held over the step) and corrects with the magnetometer sample
/// nearest the tick. The field estimate is initialized from the first
/// magnetometer sample. Convergence is declared once every bias component
/// moves less than 1% of its magnitude (floor 1e-4) over a trailing 60 s
/// window.
pub fn run_filter<S: Real>(
    samples: &[ImuSample<S>],
    cfg: &FilterConfig<S>,
) -> Result<FilterRun<S>, Error> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyInput("run_filter"));
    }
    for (i, pair) in samples.windows(2).enumerate() {
        if pair[1].t <= pair[0].t {
            return Err(Error::NonMonotonicTime { index: i + 1 });
        }
    }

    let t0 = samples[0].t;
    let t_end = samples[samples.len() - 1].t;
    let half = real::<S>(0.5);

    let mut state = FilterState::init(cfg);
    if cfg.init_field_from_first_sample {
        state.phi.set_m_t(&samples[0].mag);
    }

    let mut detector = ConvergenceDetector::new(
        real(CONVERGENCE_WINDOW_S),
        real(CONVERGENCE_REL),
        real(CONVERGENCE_FLOOR),
    );
    detector.push(S::zero(), state.phi.biases());

    let mut trace = vec![TracePoint {
        t: t0,
        state: state.phi,
        sigma_diag: state.sigma.diagonal(),
        held_rate: samples[0].gyro,
    }];
    let mut convergence_time = None;
    let mut skipped_updates = 0u64;
    let mut rate_idx = 0usize;
    let mut mag_idx = 0usize;

    let mut k = 1u64;
    loop {
        let t_tick = t0 + cfg.tau * real::<S>(k as f64);
        if t_tick > t_end + cfg.tau * real::<S>(1e-9) {
            break;
        }

        // Rate held over the step: most recent sample at or before the
        // interval midpoint (second-order accurate for slowly varying rates).
        let t_mid = t_tick - cfg.tau * half;
        while rate_idx + 1 < samples.len() && samples[rate_idx + 1].t <= t_mid {
            rate_idx += 1;
        }
        let held_rate = samples[rate_idx].gyro;
        state = predict(&state, &held_rate, cfg)?;

        // Magnetometer sample nearest the tick (earlier wins ties).
        while mag_idx + 1 < samples.len()
            && (samples[mag_idx + 1].t - t_tick).abs() < (samples[mag_idx].t - t_tick).abs()
        {
            mag_idx += 1;
        }
        match update(&state, &samples[mag_idx].mag, cfg) {
            Ok(next) => state = next,
            Err(Error::IllConditioned { .. }) => skipped_updates += 1,
            Err(e) => return Err(e),
        }

        let elapsed = t_tick - t0;
        if convergence_time.is_none() && detector.push(elapsed, state.phi.biases()) {
            convergence_time = Some(elapsed);
        }
        trace.push(TracePoint {
            t: t_tick,
            state: state.phi,
            sigma_diag: state.sigma.diagonal(),
            held_rate,
        });
        k += 1;
    }

    Ok(FilterRun {
        result: CalibrationResult::from_state(&state, convergence_time),
        trace,
        ticks: state.tick_count,
        skipped_updates,
    })
}

/// Condition-number limit on the soft-iron matrix before compensation is
/// refused.
const COMPENSATE_COND_LIMIT: f64 = 1e6;

/// Inverts the bias models: `m_t = T^-1 (m_m - m_b)`, `w_t = w_m - w_b`.
pub fn compensate<S: Real>(
    m_m: &Vec3<S>,
    w_m: &Vec3<S>,
    result: &CalibrationResult<S>,
) -> Result<(Vec3<S>, Vec3<S>), Error> {
    let t = result.t_p.pack();
    let eig = SymmetricEigen::new(t);
    let (mut lo, mut hi) = (S::max_value().unwrap(), S::zero());
    for l in eig.eigenvalues.iter() {
        lo = lo.min(l.abs());
        hi = hi.max(l.abs());
    }
    let cond = if lo > S::zero() {
        (hi / lo).to_f64().unwrap_or(f64::INFINITY)
    } else {
        f64::INFINITY
    };
    if cond >= COMPENSATE_COND_LIMIT {
        return Err(Error::IllConditioned {
            what: "soft-iron matrix",
            cond,
        });
    }
    // Inverse through the eigendecomposition stays exactly symmetric.
    let mut t_inv = Mat3::zeros();
    for i in 0..3 {
        let v = eig.eigenvectors.column(i);
        t_inv += v * v.transpose() / eig.eigenvalues[i];
    }
    Ok((t_inv * (m_m - result.m_b), w_m - result.w_b))
}
