//! Projection-based adaptive estimates of the force and moment disturbances.

use nalgebra::DVector;

use crate::control::payload::PayloadErrors;
use crate::error::{Error, Result};
use crate::geom::{hat, LinkErrors};
use crate::model::{Regressors, SystemParams, SystemState};
use crate::control::PayloadGains;

/// Relative tolerance for deciding that an estimate sits on the ball boundary.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Adaptation gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveGains {
    pub payload_force: f64,
    pub payload_moment: f64,
    pub quad_force: f64,
}

impl AdaptiveGains {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gains.h_x0", self.payload_force),
            ("gains.h_r0", self.payload_moment),
            ("gains.h_xi", self.quad_force),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(name, "must be strictly positive"));
            }
        }
        Ok(())
    }
}

/// Current parameter estimates, each confined to the ball of radius `bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub payload_force: DVector<f64>,
    pub payload_moment: DVector<f64>,
    pub quad_force: Vec<DVector<f64>>,
    pub gains: AdaptiveGains,
    pub bound: f64,
}

impl EstimatorState {
    pub fn zero(params: &SystemParams, n_theta: usize, bound: f64, gains: AdaptiveGains) -> Self {
        EstimatorState {
            payload_force: DVector::zeros(n_theta),
            payload_moment: DVector::zeros(n_theta),
            quad_force: vec![DVector::zeros(n_theta); params.n()],
            gains,
            bound,
        }
    }

    pub fn max_norm(&self) -> f64 {
        self.quad_force
            .iter()
            .map(|v| v.norm())
            .fold(self.payload_force.norm().max(self.payload_moment.norm()), f64::max)
    }
}

/// Projection that keeps the estimate flow inside the ball of radius `bound`.
pub fn project(theta: &DVector<f64>, y: &DVector<f64>, bound: f64) -> Result<DVector<f64>> {
    let norm = theta.norm();
    if norm > bound * (1.0 + BOUNDARY_TOL) {
        return Err(Error::OutOfBall { norm, bound });
    }
    if norm < bound * (1.0 - BOUNDARY_TOL) {
        return Ok(y.clone());
    }
    let radial = theta.dot(y);
    if radial <= 0.0 {
        return Ok(y.clone());
    }
    Ok(y - theta * (radial / (norm * norm)))
}

/// Update directions for every estimate, adaptation gains included.
#[derive(Debug, Clone, PartialEq)]
pub struct Signals {
    pub payload_force: DVector<f64>,
    pub payload_moment: DVector<f64>,
    pub quad_force: Vec<DVector<f64>>,
}

pub fn regressor_signals(
    state: &SystemState,
    payload: &PayloadErrors,
    links: &[LinkErrors],
    gains: &PayloadGains,
    adaptive: &AdaptiveGains,
    params: &SystemParams,
    regressors: &Regressors,
    t: f64,
) -> Signals {
    let m0 = params.payload_mass;
    let r0 = &state.payload.attitude;
    let translational = (payload.velocity + gains.cross_position * payload.position) / m0;
    let rotational = payload.angular_rate + gains.cross_attitude * payload.attitude;

    let payload_force = regressors.payload_force.matrix(t).transpose() * translational * adaptive.payload_force;
    let payload_moment = regressors.payload_moment.matrix(t).transpose() * rotational * adaptive.payload_moment;
    let quad_force = params
        .quads
        .iter()
        .enumerate()
        .map(|(i, quad)| {
            let q = &state.quads[i].link;
            let e = &links[i];
            let along = q * q.dot(&(translational - r0 * hat(&quad.attachment) * rotational));
            let normal = hat(q) * (e.e_omega + gains.cross_link * e.e_q) / (quad.mass * quad.link_length);
            regressors.quad_force[i].matrix(t).transpose() * (along + normal) * adaptive.quad_force
        })
        .collect();
    Signals {
        payload_force,
        payload_moment,
        quad_force,
    }
}

fn advance(theta: &DVector<f64>, y: &DVector<f64>, bound: f64, dt: f64) -> Result<DVector<f64>> {
    let next = theta + project(theta, y, bound)? * dt;
    let norm = next.norm();
    Ok(if norm > bound { next * (bound / norm) } else { next })
}

/// Explicit Euler step of the projected flow followed by a radial clamp.
pub fn step(est: &EstimatorState, signals: &Signals, dt: f64) -> Result<EstimatorState> {
    let b = est.bound;
    Ok(EstimatorState {
        payload_force: advance(&est.payload_force, &signals.payload_force, b, dt)?,
        payload_moment: advance(&est.payload_moment, &signals.payload_moment, b, dt)?,
        quad_force: est
            .quad_force
            .iter()
            .zip(&signals.quad_force)
            .map(|(th, y)| advance(th, y, b, dt))
            .collect::<Result<_>>()?,
        gains: est.gains,
        bound: b,
    })
}
