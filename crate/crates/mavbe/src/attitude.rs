//! Accelerometer-based roll/pitch, calibrated-field heading, heading-RMSE,
//! and Doppler dead reckoning with track-error metrics.
//!
//! Frames: vehicle x forward, y starboard, z down; world frame is NED. The
//! attitude rotation is heading-pitch-roll: `R = Rz(heading) Ry(pitch) Rx(roll)`,
//! the order under which the accelerometer formulas below are exact.

use crate::{real, Error, Mat3, Real, Vec3};

/// Euler attitude, roll and heading in `(-pi, pi]`, pitch in `[-pi/2, pi/2]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Attitude<S: Real = f64> {
    pub roll: S,
    pub pitch: S,
    pub heading: S,
}

impl<S: Real> Attitude<S> {
    pub fn new(roll: S, pitch: S, heading: S) -> Self {
        Self {
            roll,
            pitch,
            heading,
        }
    }

    /// Vehicle-to-world rotation `Rz(heading) * Ry(pitch) * Rx(roll)`.
    pub fn rotation(&self) -> Mat3<S> {
        rot_z(self.heading) * rot_y(self.pitch) * rot_x(self.roll)
    }

    /// Canonical Euler extraction with pitch folded into `[-pi/2, pi/2]`;
    /// inverse of [`Attitude::rotation`] up to the equivalent-triple
    /// ambiguity.
    pub fn from_rotation(r: &Mat3<S>) -> Self {
        let one = S::one();
        let pitch = (-r[(2, 0)]).max(-one).min(one).asin();
        let heading = r[(1, 0)].atan2(r[(0, 0)]);
        let roll = r[(2, 1)].atan2(r[(2, 2)]);
        Self {
            roll,
            pitch,
            heading,
        }
    }
}

pub(crate) fn rot_x<S: Real>(a: S) -> Mat3<S> {
    let (s, c) = (a.sin(), a.cos());
    let (o, z) = (S::one(), S::zero());
    Mat3::new(o, z, z, z, c, -s, z, s, c)
}

pub(crate) fn rot_y<S: Real>(a: S) -> Mat3<S> {
    let (s, c) = (a.sin(), a.cos());
    let (o, z) = (S::one(), S::zero());
    Mat3::new(c, z, s, z, o, z, -s, z, c)
}

pub(crate) fn rot_z<S: Real>(a: S) -> Mat3<S> {
    let (s, c) = (a.sin(), a.cos());
    let (o, z) = (S::one(), S::zero());
    Mat3::new(c, -s, z, s, c, z, z, z, o)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle<S: Real>(a: S) -> S {
    let two_pi = S::two_pi();
    let x = a - two_pi * (a / two_pi).round();
    if x <= -S::pi() {
        x + two_pi
    } else {
        x
    }
}

/// Roll and pitch from the gravity direction in the accelerometer signal:
/// `roll = atan2(-a_y, -a_z)`, `pitch = atan2(a_x, sqrt(a_y^2 + a_z^2))`.
pub fn roll_pitch<S: Real>(accel: &Vec3<S>) -> Result<(S, S), Error> {
    if accel.norm() == S::zero() {
        return Err(Error::ZeroVector("roll_pitch"));
    }
    let roll = (-accel.y).atan2(-accel.z);
    let pitch = accel.x.atan2(accel.y.hypot(accel.z));
    Ok((roll, pitch))
}

/// Magnetic heading from the calibrated field: the field is leveled by
/// `Ry(pitch) * Rx(roll)` and `heading = atan2(-m_y, m_x) - declination`,
/// wrapped to `(-pi, pi]`.
///
/// With this sign convention a level vehicle looking along the horizontal
/// field reads heading 0 (magnetic north) and a body-frame field along +y
/// reads -pi/2 (west).
pub fn heading<S: Real>(
    m_t: &Vec3<S>,
    roll: S,
    pitch: S,
    declination: S,
) -> Result<S, Error> {
    let leveled = rot_y(pitch) * rot_x(roll) * m_t;
    if leveled.x.hypot(leveled.y) < real::<S>(1e-9) {
        return Err(Error::DegenerateHeading);
    }
    Ok(wrap_angle((-leveled.y).atan2(leveled.x) - declination))
}

/// RMSE of wrap-aware heading differences, in degrees.
pub fn heading_rmse_deg<S: Real>(est: &[S], truth: &[S]) -> Result<S, Error> {
    if est.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "heading_rmse",
            left: est.len(),
            right: truth.len(),
        });
    }
    if est.is_empty() {
        return Err(Error::EmptyInput("heading_rmse"));
    }
    let mut acc = S::zero();
    for (e, t) in est.iter().zip(truth) {
        let d = wrap_angle(*e - *t);
        acc += d * d;
    }
    let rmse = (acc / real::<S>(est.len() as f64)).sqrt();
    Ok(rmse * real::<S>(180.0) / S::pi())
}

/// Timestamped world-frame positions (m, NED).
#[derive(Clone, Debug, PartialEq)]
pub struct NavTrack<S: Real = f64> {
    pub times: Vec<S>,
    pub positions: Vec<Vec3<S>>,
}

/// Dead reckoning: rotate each instrument-frame velocity to the world frame
/// through the attitude and the constant instrument-to-vehicle rotation, then
/// integrate by the trapezoidal rule from `p0`.
pub fn dead_reckon<S: Real>(
    velocities: &[Vec3<S>],
    attitudes: &[Attitude<S>],
    r_vi: &Mat3<S>,
    p0: &Vec3<S>,
    times: &[S],
) -> Result<NavTrack<S>, Error> {
    if velocities.len() != attitudes.len() || velocities.len() != times.len() {
        return Err(Error::LengthMismatch {
            what: "dead_reckon",
            left: velocities.len(),
            right: attitudes.len().max(times.len()),
        });
    }
    if times.is_empty() {
        return Err(Error::EmptyInput("dead_reckon"));
    }
    for (i, pair) in times.windows(2).enumerate() {
        if pair[1] <= pair[0] {
            return Err(Error::NonMonotonicTime { index: i + 1 });
        }
    }

    let world: Vec<Vec3<S>> = velocities
        .iter()
        .zip(attitudes)
        .map(|(v, att)| att.rotation() * r_vi * v)
        .collect();

    let mut positions = Vec::with_capacity(times.len());
    let mut p = *p0;
    positions.push(p);
    let half = real::<S>(0.5);
    for i in 1..times.len() {
        let dt = times[i] - times[i - 1];
        p += (world[i - 1] + world[i]) * half * dt;
        positions.push(p);
    }
    Ok(NavTrack {
        times: times.to_vec(),
        positions,
    })
}

/// Horizontal (x, y) two-norm error of `track` against `truth`, with the
/// truth linearly interpolated to the track times. Track times outside the
/// truth range are skipped; returns `(t, error)` pairs.
pub fn track_error<S: Real>(
    track: &NavTrack<S>,
    truth: &NavTrack<S>,
) -> Result<Vec<(S, S)>, Error> {
    if track.times.is_empty() || truth.times.is_empty() {
        return Err(Error::EmptyInput("track_error"));
    }
    if truth.times.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: truth.times.len(),
        });
    }
    let (t_lo, t_hi) = (truth.times[0], truth.times[truth.times.len() - 1]);
    if track.times[track.times.len() - 1] < t_lo || track.times[0] > t_hi {
        return Err(Error::DisjointTimeRanges);
    }

    let mut cursor = 0usize;
    let mut out = Vec::new();
    for (i, &t) in track.times.iter().enumerate() {
        if t < t_lo || t > t_hi {
            continue;
        }
        while cursor + 1 < truth.times.len() - 1 && truth.times[cursor + 1] <= t {
            cursor += 1;
        }
        let (ta, tb) = (truth.times[cursor], truth.times[cursor + 1]);
        let alpha = if tb > ta { (t - ta) / (tb - ta) } else { S::zero() };
        let p_truth =
            truth.positions[cursor] + (truth.positions[cursor + 1] - truth.positions[cursor]) * alpha;
        let d = track.positions[i] - p_truth;
        out.push((t, d.x.hypot(d.y)));
    }
    if out.is_empty() {
        return Err(Error::DisjointTimeRanges);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const G: f64 = 9.81;

    #[test]
    fn roll_pitch_level() {
        let (roll, pitch) = roll_pitch(&Vec3::new(0.0, 0.0, -G)).unwrap();
        assert_eq!((roll, pitch), (0.0, 0.0));
    }

    #[test]
    fn roll_pitch_inverts_gravity_projection() {
        let (roll, pitch) =
            roll_pitch(&Vec3::new(G * 0.1f64.sin(), 0.0, -G * 0.1f64.cos())).unwrap();
        assert_relative_eq!(pitch, 0.1, epsilon = 1e-12);
        assert_relative_eq!(roll, 0.0, epsilon = 1e-12);

        let (roll, pitch) =
            roll_pitch(&Vec3::new(0.0, -G * 0.2f64.sin(), -G * 0.2f64.cos())).unwrap();
        assert_relative_eq!(roll, 0.2, epsilon = 1e-12);
        assert_relative_eq!(pitch, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn roll_pitch_matches_simulated_gravity() {
        // consistency with the attitude convention: accel = R^T [0 0 -g]
        for (r, p, h) in [(0.3, -0.4, 1.0), (-1.0, 0.7, -2.0), (0.0, 1.2, 3.0)] {
            let att = Attitude::new(r, p, h);
            let accel = att.rotation().transpose() * Vec3::new(0.0, 0.0, -G);
            let (roll, pitch) = roll_pitch(&accel).unwrap();
            assert_relative_eq!(roll, r, epsilon = 1e-12);
            assert_relative_eq!(pitch, p, epsilon = 1e-12);
        }
    }

    #[test]
    fn roll_pitch_rejects_zero() {
        assert_eq!(
            roll_pitch(&Vec3::<f64>::zeros()).unwrap_err(),
            Error::ZeroVector("roll_pitch")
        );
    }

    #[test]
    fn heading_level_north() {
        let h = heading(&Vec3::new(0.2, 0.0, 0.4), 0.0, 0.0, 0.0).unwrap();
        assert_eq!(h, 0.0);
    }

    #[test]
    fn heading_body_y_field_reads_west() {
        // field along +y: atan2(-h, 0) = -pi/2
        let h = heading(&Vec3::new(0.0, 0.2, 0.4), 0.0, 0.0, 0.0).unwrap();
        assert_relative_eq!(h, -std::f64::consts::FRAC_PI_2, epsilon = 1e-15);
    }

    #[test]
    fn heading_declination_shifts_exactly() {
        let m = Vec3::new(0.2, -0.1, 0.4);
        let base = heading(&m, 0.1, -0.2, 0.0).unwrap();
        let shifted = heading(&m, 0.1, -0.2, 0.1).unwrap();
        assert_relative_eq!(wrap_angle(shifted - base), -0.1, epsilon = 1e-13);
    }

    #[test]
    fn heading_recovers_attitude_heading() {
        // full loop: world field rotated into the body, then leveled back
        let world = Vec3::new(0.19, 0.0, 0.45);
        for (r, p, h) in [(0.2, 0.3, 0.8), (-0.4, 0.1, -2.5), (0.0, 0.0, 3.0)] {
            let att = Attitude::new(r, p, h);
            let m_t = att.rotation().transpose() * world;
            let est = heading(&m_t, r, p, 0.0).unwrap();
            assert_relative_eq!(wrap_angle(est - h), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn heading_rejects_vertical_field() {
        let err = heading(&Vec3::new(0.0, 0.0, 0.5), 0.0, 0.0, 0.0).unwrap_err();
        assert_eq!(err, Error::DegenerateHeading);
    }

    #[test]
    fn rmse_zero_for_identical() {
        let seq = [0.1, -0.2, 3.0];
        assert_eq!(heading_rmse_deg(&seq, &seq).unwrap(), 0.0);
    }

    #[test]
    fn rmse_wraps_across_pi() {
        let truth = [179.9f64.to_radians(); 10];
        let est = [(-179.9f64).to_radians(); 10];
        let rmse = heading_rmse_deg(&est, &truth).unwrap();
        assert_relative_eq!(rmse, 0.2, epsilon = 1e-9);
    }

    #[test]
    fn rmse_is_symmetric() {
        let a = [0.3, 1.0, -2.0];
        let b = [0.1, -1.0, 2.5];
        assert_relative_eq!(
            heading_rmse_deg(&a, &b).unwrap(),
            heading_rmse_deg(&b, &a).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn dead_reckon_straight_line() {
        let n = 101;
        let times: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        let vel = vec![Vec3::new(1.0, 0.0, 0.0); n];
        let att = vec![Attitude::new(0.0, 0.0, 0.0); n];
        let track = dead_reckon(&vel, &att, &Mat3::identity(), &Vec3::zeros(), &times).unwrap();
        assert_relative_eq!(
            track.positions[n - 1],
            Vec3::new(10.0, 0.0, 0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn dead_reckon_heading_east() {
        // heading pi/2 turns surge into world +y (east in NED)
        let n = 101;
        let times: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        let vel = vec![Vec3::new(1.0, 0.0, 0.0); n];
        let att = vec![Attitude::new(0.0, 0.0, std::f64::consts::FRAC_PI_2); n];
        let track = dead_reckon(&vel, &att, &Mat3::identity(), &Vec3::zeros(), &times).unwrap();
        assert_relative_eq!(
            track.positions[n - 1],
            Vec3::new(0.0, 10.0, 0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn dead_reckon_closed_loop_returns_to_start() {
        // constant-rate full turn at constant surge: the sampled world
        // velocities sum to zero exactly, so the trapezoid closes the loop
        let n = 400;
        let times: Vec<f64> = (0..=n).map(|i| i as f64 * 0.1).collect();
        let vel = vec![Vec3::new(1.0, 0.0, 0.0); n + 1];
        let att: Vec<Attitude<f64>> = (0..=n)
            .map(|i| Attitude::new(0.0, 0.0, 2.0 * std::f64::consts::PI * i as f64 / n as f64))
            .collect();
        let track = dead_reckon(&vel, &att, &Mat3::identity(), &Vec3::zeros(), &times).unwrap();
        let terminal = track.positions[track.positions.len() - 1];
        assert!(terminal.norm() < 1e-9, "terminal {}", terminal.norm());
    }

    #[test]
    fn dead_reckon_is_additive_over_segments() {
        let n = 200;
        let times: Vec<f64> = (0..n).map(|i| i as f64 * 0.05).collect();
        let vel: Vec<Vec3<f64>> = (0..n)
            .map(|i| Vec3::new((i as f64 * 0.01).sin(), 0.2, 0.0))
            .collect();
        let att: Vec<Attitude<f64>> = (0..n)
            .map(|i| Attitude::new(0.0, 0.0, i as f64 * 0.01))
            .collect();
        let whole = dead_reckon(&vel, &att, &Mat3::identity(), &Vec3::zeros(), &times).unwrap();
        let split = 77;
        let first = dead_reckon(
            &vel[..=split],
            &att[..=split],
            &Mat3::identity(),
            &Vec3::zeros(),
            &times[..=split],
        )
        .unwrap();
        let second = dead_reckon(
            &vel[split..],
            &att[split..],
            &Mat3::identity(),
            &first.positions[split],
            &times[split..],
        )
        .unwrap();
        assert_relative_eq!(
            second.positions[n - 1 - split],
            whole.positions[n - 1],
            epsilon = 1e-12
        );
    }

    #[test]
    fn track_error_identical_is_zero() {
        let times: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let positions: Vec<Vec3<f64>> = (0..10).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let track = NavTrack {
            times: times.clone(),
            positions: positions.clone(),
        };
        let truth = NavTrack { times, positions };
        let err = track_error(&track, &truth).unwrap();
        assert!(err.iter().all(|(_, e)| *e == 0.0));
    }

    #[test]
    fn track_error_three_four_five() {
        let times: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let truth_pos: Vec<Vec3<f64>> = (0..10).map(|i| Vec3::new(i as f64, 0.0, 7.0)).collect();
        let track_pos: Vec<Vec3<f64>> = (0..10)
            .map(|i| Vec3::new(i as f64 + 3.0, 4.0, 0.0))
            .collect();
        let track = NavTrack {
            times: times.clone(),
            positions: track_pos,
        };
        let truth = NavTrack {
            times,
            positions: truth_pos,
        };
        // depth offset is ignored: horizontal error only
        for (_, e) in track_error(&track, &truth).unwrap() {
            assert_relative_eq!(e, 5.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn track_error_rejects_disjoint_ranges() {
        let a = NavTrack {
            times: vec![0.0, 1.0],
            positions: vec![Vec3::zeros(); 2],
        };
        let b = NavTrack {
            times: vec![5.0, 6.0],
            positions: vec![Vec3::zeros(); 2],
        };
        assert_eq!(track_error(&a, &b).unwrap_err(), Error::DisjointTimeRanges);
    }

    proptest! {
        #[test]
        fn roll_pitch_is_scale_invariant(
            x in -5.0f64..5.0, y in -5.0f64..5.0, z in -5.0f64..-0.1, k in 0.1f64..100.0
        ) {
            let a = Vec3::new(x, y, z);
            let (r1, p1) = roll_pitch(&a).unwrap();
            let (r2, p2) = roll_pitch(&(a * k)).unwrap();
            prop_assert!((r1 - r2).abs() < 1e-12 && (p1 - p2).abs() < 1e-12);
        }

        #[test]
        fn heading_is_scale_invariant(
            mx in 0.05f64..1.0, my in -1.0f64..1.0, mz in -1.0f64..1.0, k in 0.1f64..100.0
        ) {
            let m = Vec3::new(mx, my, mz);
            let h1 = heading(&m, 0.1, -0.2, 0.0).unwrap();
            let h2 = heading(&(m * k), 0.1, -0.2, 0.0).unwrap();
            prop_assert!(wrap_angle(h1 - h2).abs() < 1e-12);
        }

        #[test]
        fn wrap_angle_lands_in_half_open_interval(a in -100.0f64..100.0) {
            let w = wrap_angle(a);
            prop_assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
            // same angle mod 2 pi
            prop_assert!(((a - w) / (2.0 * std::f64::consts::PI)).round() * 2.0 * std::f64::consts::PI - (a - w) < 1e-9);
        }
    }
}
