//! Desired payload trajectories with analytic derivatives.

use crate::geom::{e1, e3, Mat3, Vec3};

/// Desired payload position/attitude and their derivatives at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayloadReference {
    pub position: Vec3,
    pub velocity: Vec3,
    pub accel: Vec3,
    pub attitude: Mat3,
    /// Body-frame desired angular velocity, `Ṙ_d = R_d hat(Ω_d)`.
    pub body_rate: Vec3,
    pub angular_accel: Vec3,
}

pub trait ReferenceTrajectory {
    fn payload(&self, t: f64) -> PayloadReference;

    /// Desired first body axis of quadrotor `quad`; fixes the yaw left free
    /// by the thrust direction.
    fn heading(&self, _quad: usize, _t: f64) -> Vec3 {
        e1()
    }
}

/// Trajectory presets selectable from a scenario file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trajectory {
    /// Constant position with identity attitude.
    Hover { position: Vec3 },
    /// `[a_x sin(ν_x t), a_y cos(ν_y t), altitude]` with the payload's first
    /// axis tangent to the path and its third axis along gravity.
    FigureEight {
        amplitude: [f64; 2],
        /// Angular frequencies, rad/s.
        frequency: [f64; 2],
        altitude: f64,
    },
}

impl Trajectory {
    pub fn figure_eight() -> Self {
        Trajectory::FigureEight {
            amplitude: [1.2, 4.2],
            frequency: [0.2 * std::f64::consts::PI, 0.1 * std::f64::consts::PI],
            altitude: -0.5,
        }
    }
}

/// Heading `ψ = atan2(ẏ, ẋ)` of a planar curve and its first two derivatives,
/// from the velocity, acceleration, jerk and snap of the curve.
fn heading_rates(v: &Vec3, a: &Vec3, j: &Vec3) -> (f64, f64, f64) {
    let num = v.x * a.y - v.y * a.x;
    let den = v.x * v.x + v.y * v.y;
    let num_dot = v.x * j.y - v.y * j.x;
    let den_dot = 2.0 * (v.x * a.x + v.y * a.y);
    let psi = v.y.atan2(v.x);
    (psi, num / den, (num_dot * den - num * den_dot) / (den * den))
}

impl ReferenceTrajectory for Trajectory {
    fn payload(&self, t: f64) -> PayloadReference {
        match *self {
            Trajectory::Hover { position } => PayloadReference {
                position,
                velocity: Vec3::zeros(),
                accel: Vec3::zeros(),
                attitude: Mat3::identity(),
                body_rate: Vec3::zeros(),
                angular_accel: Vec3::zeros(),
            },
            Trajectory::FigureEight {
                amplitude: [ax, ay],
                frequency: [wx, wy],
                altitude,
            } => {
                let (sx, cx) = (wx * t).sin_cos();
                let (sy, cy) = (wy * t).sin_cos();
                let position = Vec3::new(ax * sx, ay * cy, altitude);
                let velocity = Vec3::new(ax * wx * cx, -ay * wy * sy, 0.0);
                let accel = Vec3::new(-ax * wx * wx * sx, -ay * wy * wy * cy, 0.0);
                let jerk = Vec3::new(-ax * wx.powi(3) * cx, ay * wy.powi(3) * sy, 0.0);
                let (psi, psi_dot, psi_ddot) = heading_rates(&velocity, &accel, &jerk);
                // [ẋ/|ẋ|, e₃ × ẋ/|e₃ × ẋ|, e₃] for horizontal ẋ is a yaw by ψ
                let (s, c) = psi.sin_cos();
                let attitude = Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
                PayloadReference {
                    position,
                    velocity,
                    accel,
                    attitude,
                    body_rate: psi_dot * e3(),
                    angular_accel: psi_ddot * e3(),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{hat, is_rotation};

    #[test]
    fn figure_eight_initial_values() {
        let r = Trajectory::figure_eight().payload(0.0);
        assert!((r.position - Vec3::new(0.0, 4.2, -0.5)).norm() < 1e-15);
        assert!((r.attitude - Mat3::identity()).norm() < 1e-15);
    }

    #[test]
    fn attitude_matches_tangent_construction() {
        let traj = Trajectory::figure_eight();
        for k in 0..200 {
            let t = 0.1 * k as f64;
            let r = traj.payload(t);
            assert!(is_rotation(&r.attitude, 1e-14));
            let b1 = r.velocity.normalize();
            let b2 = e3().cross(&r.velocity).normalize();
            assert!((r.attitude.column(0) - b1).norm() < 1e-13);
            assert!((r.attitude.column(1) - b2).norm() < 1e-13);
            assert!((r.attitude.column(2) - e3()).norm() < 1e-15);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let traj = Trajectory::figure_eight();
        let h = 1e-5;
        for k in 0..100 {
            let t = 0.2 * k as f64 + 0.05;
            let (m, c, p) = (traj.payload(t - h), traj.payload(t), traj.payload(t + h));
            assert!(((p.position - m.position) / (2.0 * h) - c.velocity).norm() < 1e-8);
            assert!(((p.velocity - m.velocity) / (2.0 * h) - c.accel).norm() < 1e-8);
            let r_dot = (p.attitude - m.attitude) / (2.0 * h);
            assert!((r_dot - c.attitude * hat(&c.body_rate)).norm() < 1e-7);
            assert!(((p.body_rate - m.body_rate) / (2.0 * h) - c.angular_accel).norm() < 1e-6);
        }
    }
}
