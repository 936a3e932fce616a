//! Nonlinear process dynamics of the field/bias state, its analytic
//! linearization, discrete-time transition matrices, and the numerical
//! observability-Gramian check.

use nalgebra::{SMatrix, SVector};

use crate::linalg::{expm, skew, SoftIronParams};
use crate::{real, Error, Real, StateMat, StateVec, Vec3, MEAS_DIM, STATE_DIM};

/// Row offsets of the state blocks `[m_t; m_b; t_p; w_b]`. Every Jacobian
/// block layout in the filter depends on this ordering.
pub(crate) const MT: usize = 0;
pub(crate) const MB: usize = 3;
pub(crate) const TP: usize = 6;
pub(crate) const WB: usize = 12;

/// The 15-dimensional filter state `[m_t; m_b; t_p; w_b]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateVector<S: Real = f64>(StateVec<S>);

impl<S: Real> StateVector<S> {
    pub fn new(m_t: Vec3<S>, m_b: Vec3<S>, t_p: SoftIronParams<S>, w_b: Vec3<S>) -> Self {
        let mut v = StateVec::zeros();
        v.fixed_rows_mut::<3>(MT).copy_from(&m_t);
        v.fixed_rows_mut::<3>(MB).copy_from(&m_b);
        v.fixed_rows_mut::<6>(TP).copy_from(&t_p.as_vector());
        v.fixed_rows_mut::<3>(WB).copy_from(&w_b);
        Self(v)
    }

    pub fn from_vector(v: StateVec<S>) -> Self {
        Self(v)
    }

    pub fn as_vector(&self) -> &StateVec<S> {
        &self.0
    }

    /// True magnetic field estimate in the instrument frame (gauss).
    pub fn m_t(&self) -> Vec3<S> {
        self.0.fixed_rows::<3>(MT).into_owned()
    }

    /// Hard-iron offset (gauss).
    pub fn m_b(&self) -> Vec3<S> {
        self.0.fixed_rows::<3>(MB).into_owned()
    }

    /// Soft-iron parameters.
    pub fn t_p(&self) -> SoftIronParams<S> {
        SoftIronParams::from_vector(&self.0.fixed_rows::<6>(TP).into_owned())
    }

    /// Angular-rate sensor bias (rad/s).
    pub fn w_b(&self) -> Vec3<S> {
        self.0.fixed_rows::<3>(WB).into_owned()
    }

    pub fn set_m_t(&mut self, m_t: &Vec3<S>) {
        self.0.fixed_rows_mut::<3>(MT).copy_from(m_t);
    }

    /// The 12 bias entries `[m_b; t_p; w_b]` that the dynamics hold constant.
    pub fn biases(&self) -> SVector<S, 12> {
        self.0.fixed_rows::<12>(MB).into_owned()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// Continuous-time dynamics: the field vector rotates opposite the
/// bias-compensated rate, every bias is constant.
///
/// Rows 0-2 are `-skew(w_m - w_b) * m_t`; rows 3-14 are zero.
pub fn process_f<S: Real>(phi: &StateVector<S>, w_m: &Vec3<S>) -> StateVec<S> {
    let mut f = StateVec::zeros();
    let rate = w_m - phi.w_b();
    f.fixed_rows_mut::<3>(MT)
        .copy_from(&(-skew(&rate) * phi.m_t()));
    f
}

/// Analytic Jacobian of [`process_f`] with respect to the state.
///
/// Block (m_t, m_t) is `-skew(w_m - w_b)`, block (m_t, w_b) is `-skew(m_t)`;
/// all bias rows are zero.
pub fn process_jacobian<S: Real>(phi: &StateVector<S>, w_m: &Vec3<S>) -> StateMat<S> {
    let mut a = StateMat::zeros();
    let rate = w_m - phi.w_b();
    a.fixed_view_mut::<3, 3>(MT, MT).copy_from(&(-skew(&rate)));
    a.fixed_view_mut::<3, 3>(MT, WB)
        .copy_from(&(-skew(&phi.m_t())));
    a
}

/// Affine remainder of the linearization: `u = f(mu) - A(mu) * mu`, so that
/// `f(mu) == A(mu) * mu + u(mu)` holds exactly at the linearization point.
pub fn pseudo_control<S: Real>(phi: &StateVector<S>, w_m: &Vec3<S>) -> StateVec<S> {
    process_f(phi, w_m) - process_jacobian(phi, w_m) * phi.as_vector()
}

/// Discrete-time transition matrices for one step of length `tau`.
#[derive(Clone, Debug)]
pub struct Discretization<S: Real = f64> {
    /// State transition `exp(A * tau)`.
    pub a_bar: StateMat<S>,
    /// Input matrix `int_0^tau exp(A * (tau - s)) ds`.
    pub b_bar: StateMat<S>,
}

/// Computes `A_bar = exp(A * tau)` and the exact input integral via the
/// augmented-matrix exponential of `[[A, I], [0, 0]] * tau` (top-right block).
/// `B_bar -> tau * I` as `A -> 0`.
pub fn discretize<S: Real>(a: &StateMat<S>, tau: S) -> Result<Discretization<S>, Error> {
    if tau <= S::zero() {
        return Err(Error::NonPositiveStep);
    }
    const D2: usize = 2 * STATE_DIM;
    let mut aug = SMatrix::<S, D2, D2>::zeros();
    aug.fixed_view_mut::<STATE_DIM, STATE_DIM>(0, 0)
        .copy_from(&(a * tau));
    aug.fixed_view_mut::<STATE_DIM, STATE_DIM>(0, STATE_DIM)
        .copy_from(&(StateMat::identity() * tau));
    let e = expm(&aug, S::default_epsilon())?;
    Ok(Discretization {
        a_bar: e.fixed_view::<STATE_DIM, STATE_DIM>(0, 0).into_owned(),
        b_bar: e
            .fixed_view::<STATE_DIM, STATE_DIM>(0, STATE_DIM)
            .into_owned(),
    })
}

/// Linearization of the process model about `phi` together with its
/// discrete-time transition matrices.
#[derive(Clone, Debug)]
pub struct LinearizedModel<S: Real = f64> {
    pub a: StateMat<S>,
    pub u: StateVec<S>,
    pub a_bar: StateMat<S>,
    pub b_bar: StateMat<S>,
}

pub fn linearize<S: Real>(
    phi: &StateVector<S>,
    w_m: &Vec3<S>,
    tau: S,
) -> Result<LinearizedModel<S>, Error> {
    let a = process_jacobian(phi, w_m);
    let u = pseudo_control(phi, w_m);
    let d = discretize(&a, tau)?;
    Ok(LinearizedModel {
        a,
        u,
        a_bar: d.a_bar,
        b_bar: d.b_bar,
    })
}

/// Observability Gramian of the linearized system over a sampled trajectory,
/// with its singular values and numerical rank.
#[derive(Clone, Debug)]
pub struct GramianAnalysis<S: Real = f64> {
    pub gramian: StateMat<S>,
    pub rank: usize,
    /// Singular values sorted in descending order.
    pub singular_values: StateVec<S>,
}

/// Relative singular-value threshold for the numerical rank.
const RANK_THRESHOLD: f64 = 1e-10;

/// Accumulates `M = sum_k H_k^T C_k^T C_k H_k * tau` by the rectangle rule,
/// with the state-transition matrix `H` built as the ordered product of the
/// per-step `A_bar` factors, all linearized along the supplied trajectory.
///
/// Rank counts singular values above `1e-10 * sigma_max`.
pub fn observability_gramian<S: Real>(
    w_m: &[Vec3<S>],
    states: &[StateVector<S>],
    tau: S,
) -> Result<GramianAnalysis<S>, Error> {
    if w_m.len() != states.len() {
        return Err(Error::LengthMismatch {
            what: "observability_gramian",
            left: w_m.len(),
            right: states.len(),
        });
    }
    if states.is_empty() {
        return Err(Error::EmptyInput("observability_gramian"));
    }
    if tau <= S::zero() {
        return Err(Error::NonPositiveStep);
    }

    let mut h = StateMat::<S>::identity();
    let mut m = StateMat::<S>::zeros();
    for (k, (w, phi)) in w_m.iter().zip(states).enumerate() {
        let c = crate::ekf::measurement_jacobian(phi);
        let ch: SMatrix<S, MEAS_DIM, STATE_DIM> = c * h;
        m += ch.transpose() * ch * tau;
        // Advance the transition matrix for the remaining samples.
        if k + 1 < states.len() {
            let d = discretize(&process_jacobian(phi, w), tau)?;
            h = d.a_bar * h;
        }
    }

    let mut sv: Vec<S> = m.svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    let singular_values = StateVec::from_iterator(sv.iter().copied());
    let threshold = real::<S>(RANK_THRESHOLD) * singular_values[0];
    let rank = sv.iter().filter(|s| **s > threshold).count();
    Ok(GramianAnalysis {
        gramian: m,
        rank,
        singular_values,
    })
}
