//! The three-quadrotor box transport along a figure-eight, with default gains.

use crate::adaptive::AdaptiveGains;
use crate::control::{AttitudeGains, PayloadGains};
use crate::geom::{Mat3, Vec3};
use crate::model::{DisturbanceChannel, DisturbanceModel, QuadParams, SystemParams, SystemState, DEFAULT_GRAVITY};

/// Solid-box inertia about the center of mass.
pub fn box_inertia(mass: f64, length: f64, width: f64, height: f64) -> Mat3 {
    let k = mass / 12.0;
    Mat3::from_diagonal(&Vec3::new(
        k * (width * width + height * height),
        k * (length * length + height * height),
        k * (length * length + width * width),
    ))
}

pub fn figure8_params() -> SystemParams {
    let quad = |x: f64, y: f64| QuadParams {
        mass: 0.755,
        inertia: Mat3::from_diagonal(&Vec3::new(0.0820, 0.0845, 0.1377)),
        attachment: Vec3::new(x, y, -0.1),
        link_length: 1.0,
    };
    SystemParams {
        payload_mass: 1.5,
        payload_inertia: box_inertia(1.5, 1.0, 0.8, 0.2),
        quads: vec![quad(0.5, 0.0), quad(-0.5, 0.4), quad(-0.5, -0.4)],
        gravity: DEFAULT_GRAVITY,
    }
}

pub fn figure8_disturbance() -> DisturbanceModel {
    DisturbanceModel {
        payload_force: DisturbanceChannel::constant(Vec3::new(1.0, 3.0, -2.5)),
        payload_moment: DisturbanceChannel::constant(Vec3::new(-0.5, 0.1, -1.5)),
        quad_force: vec![DisturbanceChannel::constant(Vec3::new(0.5, -0.2, 0.3)); 3],
        quad_moment: vec![DisturbanceChannel::constant(Vec3::new(0.2, 0.3, -0.7)); 3],
        bound_phi: 2.0,
        bound_theta: 5.0,
    }
}

/// Payload at rest at `[1, 4.8, 0]`, links hanging, quadrotors level.
pub fn figure8_initial_state() -> SystemState {
    SystemState::at_rest(Vec3::new(1.0, 4.8, 0.0), 3)
}

pub fn default_payload_gains() -> PayloadGains {
    PayloadGains {
        position: 2.0,
        velocity: 3.0,
        attitude: 4.0,
        angular_rate: 1.0,
        link: 24.0,
        link_rate: 8.0,
        cross_position: 0.5,
        cross_attitude: 0.5,
        cross_link: 0.5,
    }
}

pub fn default_adaptive_gains() -> AdaptiveGains {
    AdaptiveGains {
        payload_force: 30.0,
        payload_moment: 30.0,
        quad_force: 30.0,
    }
}

pub fn default_attitude_gains() -> AttitudeGains {
    AttitudeGains {
        k_r: 8.0,
        l_r: 1.0,
        k_s: 20.0,
        l_s: 2.0,
        r: 0.6,
    }
}
