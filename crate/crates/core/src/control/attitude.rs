//! Per-quadrotor attitude loop for the full model: the thrust axis is steered
//! onto the ideal force direction with a terminal sliding-mode moment law.

use crate::control::payload::{backward_difference, LowPass};
use crate::error::{Error, Result};
use crate::geom::{
    attitude_errors, e3, hat, signed_power, signed_power_gain, transport_matrix, vee_unchecked, AttitudeErrors,
    Mat3, Vec3,
};

/// Thrust below this norm leaves the desired thrust axis undefined, N.
pub const THRUST_EPS: f64 = 1e-6;

/// Minimum angle between the heading and the thrust axis, rad.
pub const HEADING_MIN_ANGLE: f64 = 1e-3;

/// Floor of `‖s‖` in the smoothed sign of the robust term.
pub const ROBUST_EPS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeGains {
    pub k_r: f64,
    pub l_r: f64,
    pub k_s: f64,
    pub l_s: f64,
    /// Exponent of the fractional terms, in (0, 1).
    pub r: f64,
}

impl AttitudeGains {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gains.k_r", self.k_r),
            ("gains.l_r", self.l_r),
            ("gains.k_s", self.k_s),
            ("gains.l_s", self.l_s),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(name, "must be strictly positive"));
            }
        }
        if !(self.r > 0.0 && self.r < 1.0) {
            return Err(Error::validation("gains.r", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Attitude whose third axis is `-u/‖u‖` and whose first axis is the
/// projection of `heading` onto the plane normal to it.
pub fn desired_attitude(u: &Vec3, heading: &Vec3) -> Result<Mat3> {
    let norm = u.norm();
    if !(norm > THRUST_EPS) {
        return Err(Error::DegenerateThrust(norm));
    }
    let b3 = -u / norm;
    let b3_hat = hat(&b3);
    let side = b3_hat * heading;
    if side.norm() <= heading.norm() * HEADING_MIN_ANGLE.sin() {
        return Err(Error::HeadingCollinear);
    }
    let b1 = -(b3_hat * side);
    Ok(Mat3::from_columns(&[b1.normalize(), side.normalize(), b3]))
}

fn body_rate_from(r: &Mat3, r_dot: &Mat3) -> Vec3 {
    let a = r.transpose() * r_dot;
    vee_unchecked(&(0.5 * (a - a.transpose())))
}

fn rate_at(history: &[Mat3], k: usize, dt: f64) -> Vec3 {
    let r_dot = (3.0 * history[k] - 4.0 * history[k - 1] + history[k - 2]) / (2.0 * dt);
    body_rate_from(&history[k], &r_dot)
}

/// Angular velocity and (unfiltered) angular acceleration of the last sample
/// of a uniformly sampled attitude history.
pub fn desired_rates(history: &[Mat3], dt: f64) -> Result<(Vec3, Vec3)> {
    let len = history.len();
    if len < 3 {
        return Err(Error::InsufficientHistory { needed: 3, have: len });
    }
    let rates: Vec<Vec3> = (2.max(len.saturating_sub(3))..len).map(|k| rate_at(history, k, dt)).collect();
    let accel = backward_difference(&rates, dt).unwrap_or_else(Vec3::zeros);
    Ok((*rates.last().unwrap(), accel))
}

/// Desired attitude with its differentiated rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeCommand {
    pub attitude: Mat3,
    pub body_rate: Vec3,
    pub angular_accel: Vec3,
}

/// Differentiates the stream of desired attitudes of one quadrotor. Start-up
/// samples use lower-order differences.
#[derive(Debug, Clone)]
pub struct AttitudeCommandFilter {
    dt: f64,
    history: Vec<Mat3>,
    rates: Vec<Vec3>,
    accel: LowPass,
}

impl AttitudeCommandFilter {
    pub fn new(dt: f64) -> Self {
        AttitudeCommandFilter {
            dt,
            history: Vec::with_capacity(3),
            rates: Vec::with_capacity(3),
            accel: LowPass::new(),
        }
    }

    pub fn last(&self) -> Option<&Mat3> {
        self.history.last()
    }

    /// Feeds the current thrust request. A degenerate thrust holds the
    /// previous command; it is an error only before any command exists.
    pub fn update(&mut self, u: &Vec3, heading: &Vec3) -> Result<AttitudeCommand> {
        let attitude = match desired_attitude(u, heading) {
            Ok(r) => r,
            Err(e) => *self.history.last().ok_or(e)?,
        };
        if self.history.len() == 3 {
            self.history.remove(0);
        }
        self.history.push(attitude);
        let dt = self.dt;
        let body_rate = match self.history.as_slice() {
            [.., _, _, _] => Some(rate_at(&self.history, self.history.len() - 1, dt)),
            [prev, cur] => Some(body_rate_from(cur, &((cur - prev) / dt))),
            _ => None,
        };
        if let Some(w) = body_rate {
            if self.rates.len() == 3 {
                self.rates.remove(0);
            }
            self.rates.push(w);
        }
        let body_rate = body_rate.unwrap_or_else(Vec3::zeros);
        let raw = backward_difference(&self.rates, dt).unwrap_or_else(Vec3::zeros);
        Ok(AttitudeCommand {
            attitude,
            body_rate,
            angular_accel: self.accel.update(raw),
        })
    }
}

/// Terminal sliding variable `e_Ω + k_R e_R + l_R S(r, e_R)`.
pub fn sliding_surface(e_r: &Vec3, e_omega: &Vec3, gains: &AttitudeGains) -> Result<Vec3> {
    Ok(e_omega + gains.k_r * e_r + gains.l_r * signed_power(gains.r, e_r)?)
}

/// Moment command with its intermediate quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentCommand {
    pub moment: Vec3,
    pub sliding: Vec3,
    pub errors: AttitudeErrors,
}

/// Sliding-mode moment for one quadrotor. `robust_bound`, when given, adds a
/// smoothed switching term of that magnitude against moment disturbances.
pub fn moment_command(
    attitude: &Mat3,
    body_rate: &Vec3,
    command: &AttitudeCommand,
    inertia: &Mat3,
    gains: &AttitudeGains,
    robust_bound: Option<f64>,
) -> Result<MomentCommand> {
    let r_c = &command.attitude;
    let errors = attitude_errors(attitude, r_c, body_rate, &command.body_rate);
    let s = sliding_surface(&errors.e_r, &errors.e_omega, gains)?;
    let e = transport_matrix(attitude, r_c);
    let rel = attitude.transpose() * r_c;
    let weight = gains.k_r * inertia + gains.l_r * gains.r * inertia * signed_power_gain(gains.r, &errors.e_r)?;
    let mut moment = -gains.k_s * s - gains.l_s * signed_power(gains.r, &s)?
        + body_rate.cross(&(inertia * body_rate))
        - weight * e * errors.e_omega
        - inertia * (hat(body_rate) * rel * command.body_rate - rel * command.angular_accel);
    if let Some(bound) = robust_bound {
        moment -= bound * s / s.norm().max(ROBUST_EPS);
    }
    Ok(MomentCommand {
        moment,
        sliding: s,
        errors,
    })
}

/// Thrust magnitude `-u · R e₃`.
pub fn thrust_magnitude(u: &Vec3, attitude: &Mat3) -> f64 {
    -u.dot(&(attitude * e3()))
}

/// Reaching-phase and sliding-phase settling-time bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettlingBounds {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub eps4: f64,
    /// Upper bound on the time to reach `s = 0`.
    pub reach: f64,
}

/// Settling time of `V̇ ≤ -a V - b V^((r+1)/2)` from `V(0) = v0`.
pub fn finite_time_bound(a: f64, b: f64, r: f64, v0: f64) -> f64 {
    let p = (1.0 - r) / 2.0;
    ((a * v0.powf(p) + b) / b).ln() / (a * p)
}

/// Bounds for the reaching phase from the initial `𝒲 = ½ sᵀ J s`.
pub fn reaching_bounds(gains: &AttitudeGains, inertia: &Mat3, w0: f64, psi_bound: f64) -> SettlingBounds {
    let lambda_max = inertia.symmetric_eigenvalues().max();
    let r = gains.r;
    let eps1 = 2.0 * gains.k_s / lambda_max;
    let eps2 = gains.l_s * (2.0 / lambda_max).powf((r + 1.0) / 2.0);
    SettlingBounds {
        eps1,
        eps2,
        eps3: gains.k_r / (2.0 - psi_bound),
        eps4: gains.l_r / (2.0 - psi_bound).powf((r + 1.0) / 2.0),
        reach: finite_time_bound(eps1, eps2, r, w0),
    }
}

impl SettlingBounds {
    /// Bound on the sliding-phase duration from `Ψ` at the reaching instant.
    pub fn sliding(&self, r: f64, psi_reach: f64) -> f64 {
        finite_time_bound(self.eps3, self.eps4, r, psi_reach)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{axis_angle, exp_so3, is_rotation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gains() -> AttitudeGains {
        AttitudeGains { k_r: 1.0, l_r: 1.0, k_s: 20.0, l_s: 2.0, r: 0.5 }
    }

    fn inertia() -> Mat3 {
        Mat3::from_diagonal(&Vec3::new(0.0820, 0.0845, 0.1377))
    }

    #[test]
    fn desired_attitude_cases() {
        let r = desired_attitude(&Vec3::new(0.0, 0.0, -7.0), &Vec3::x()).unwrap();
        assert!((r - Mat3::identity()).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let u = Vec3::from_fn(|_, _| rng.random_range(-10.0..10.0));
            let r = desired_attitude(&u, &Vec3::x()).unwrap();
            assert!(is_rotation(&r, 1e-12));
            assert!((r.column(2) + u.normalize()).norm() < 1e-12);
            let scaled = desired_attitude(&(u * rng.random_range(0.1..10.0)), &Vec3::x()).unwrap();
            assert!((scaled - r).norm() < 1e-12);
        }
        assert_eq!(desired_attitude(&Vec3::new(-3.0, 0.0, 0.0), &Vec3::x()), Err(Error::HeadingCollinear));
        assert!(matches!(desired_attitude(&Vec3::zeros(), &Vec3::x()), Err(Error::DegenerateThrust(_))));
    }

    #[test]
    fn rates_of_constant_and_spinning_commands() {
        let dt = 1e-3;
        let still = vec![axis_angle(&Vec3::y(), 0.4); 5];
        let (w, a) = desired_rates(&still, dt).unwrap();
        assert!(w.norm() < 1e-12 && a.norm() < 1e-9);

        let nu = 1.7;
        let spin: Vec<Mat3> = (0..5).map(|k| axis_angle(&Vec3::z(), nu * k as f64 * dt)).collect();
        let (w, a) = desired_rates(&spin, dt).unwrap();
        assert!((w - nu * Vec3::z()).norm() < 1e-4);
        assert!(a.norm() < 1e-3);

        assert_eq!(
            desired_rates(&spin[..2], dt),
            Err(Error::InsufficientHistory { needed: 3, have: 2 })
        );
    }

    #[test]
    fn filter_tracks_spin() {
        let dt = 1e-3;
        let nu = 0.9;
        let mut f = AttitudeCommandFilter::new(dt);
        let mut cmd = None;
        for k in 0..300 {
            let r = axis_angle(&Vec3::z(), nu * k as f64 * dt) * axis_angle(&Vec3::x(), 0.3);
            let u = -(r * Vec3::z()) * 5.0;
            cmd = Some(f.update(&u, &(r * Vec3::x())).unwrap());
        }
        let cmd = cmd.unwrap();
        let expected = cmd.attitude.transpose() * (nu * Vec3::z());
        assert!((cmd.body_rate - expected).norm() < 1e-5);
        assert!(cmd.angular_accel.norm() < 1e-4);
    }

    #[test]
    fn error_rate_matches_transport_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dt = 1e-6;
        for _ in 0..100 {
            let r_c = axis_angle(&Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)), 1.0);
            let r = axis_angle(&Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)), 0.8);
            let omega = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let e0 = attitude_errors(&r, &r_c, &omega, &Vec3::zeros());
            let e1 = attitude_errors(&(r * exp_so3(&(omega * dt))), &r_c, &omega, &Vec3::zeros());
            let fd = (e1.e_r - e0.e_r) / dt;
            assert!((fd - transport_matrix(&r, &r_c) * e0.e_omega).norm() < 1e-5);
        }
    }

    #[test]
    fn sliding_surface_cases() {
        let g = gains();
        assert_eq!(sliding_surface(&Vec3::zeros(), &Vec3::zeros(), &g).unwrap(), Vec3::zeros());
        let s = sliding_surface(&Vec3::new(0.04, 0.0, 0.0), &Vec3::zeros(), &g).unwrap();
        assert!((s - Vec3::new(0.24, 0.0, 0.0)).norm() < 1e-15);
        let e_r = Vec3::new(0.1, -0.02, 0.3);
        let on = -g.k_r * e_r - g.l_r * signed_power(g.r, &e_r).unwrap();
        assert!(sliding_surface(&e_r, &on, &g).unwrap().norm() < 1e-15);
    }

    #[test]
    fn equilibrium_moment_is_zero() {
        let r = axis_angle(&Vec3::new(1.0, 2.0, 0.5), 0.7);
        let cmd = AttitudeCommand { attitude: r, body_rate: Vec3::zeros(), angular_accel: Vec3::zeros() };
        let m = moment_command(&r, &Vec3::zeros(), &cmd, &inertia(), &gains(), None).unwrap();
        assert!(m.moment.norm() < 1e-14);
        let robust = moment_command(&r, &Vec3::zeros(), &cmd, &inertia(), &gains(), Some(10.0)).unwrap();
        assert!(robust.moment.norm() < 1e-14);
    }

    #[test]
    fn closed_loop_sliding_rate() {
        // J ṡ = -k_s s - l_s S(r, s) for the exact rigid-body rotation rate
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let j = inertia();
        let g = gains();
        for _ in 0..50 {
            let r_c = axis_angle(&Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)), 0.5);
            let r = r_c * axis_angle(&Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)), 0.6);
            let omega = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let cmd = AttitudeCommand { attitude: r_c, body_rate: Vec3::zeros(), angular_accel: Vec3::zeros() };
            let m = moment_command(&r, &omega, &cmd, &j, &g, None).unwrap();
            let omega_dot = j.try_inverse().unwrap() * (m.moment - omega.cross(&(j * omega)));
            let h = 1e-6;
            let r2 = r * exp_so3(&(omega * h));
            let e2 = attitude_errors(&r2, &r_c, &(omega + omega_dot * h), &Vec3::zeros());
            let s2 = sliding_surface(&e2.e_r, &e2.e_omega, &g).unwrap();
            let s_dot = (s2 - m.sliding) / h;
            let expected = -(g.k_s * m.sliding + g.l_s * signed_power(g.r, &m.sliding).unwrap());
            assert!((j * s_dot - expected).norm() < 1e-3 * (1.0 + expected.norm()));
        }
    }

    #[test]
    fn thrust_cases() {
        assert_eq!(thrust_magnitude(&Vec3::new(0.0, 0.0, -10.0), &Mat3::identity()), 10.0);
        let u = Vec3::new(1.0, -2.0, -9.0);
        let r = desired_attitude(&u, &Vec3::x()).unwrap();
        assert!((-thrust_magnitude(&u, &r) * (r * e3()) - u).norm() < 1e-12);
        let side = axis_angle(&Vec3::x(), std::f64::consts::FRAC_PI_2);
        assert!(thrust_magnitude(&Vec3::new(0.0, 0.0, -10.0), &side).abs() < 1e-14);
    }

    #[test]
    fn settling_bound_formula() {
        // V̇ = -a V - b V^p integrates in closed form
        let (a, b, r, v0) = (3.0, 0.5, 0.6, 2.0);
        let t = finite_time_bound(a, b, r, v0);
        let mut v = v0;
        let dt = 1e-6;
        let mut time = 0.0;
        while v > 0.0 {
            v -= dt * (a * v + b * v.max(0.0).powf((r + 1.0) / 2.0));
            time += dt;
        }
        assert!((time - t).abs() < 1e-3, "{time} vs {t}");
    }
}
