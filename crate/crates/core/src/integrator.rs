//! Fixed-step Runge–Kutta–Munthe-Kaas integration on the configuration
//! manifold. Rotations and link directions are advanced through exponential
//! coordinates; positions and velocities are Euclidean.

use crate::dynamics::StateDerivative;
use crate::error::{Error, Result};
use crate::geom::{exp_so3, orthonormalize, Mat3, Vec3};
use crate::model::{PayloadState, QuadState, SystemState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub scheme: Scheme,
}

impl IntegratorConfig {
    pub fn rk4(dt: f64) -> Self {
        IntegratorConfig { dt, scheme: Scheme::Rk4 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::validation("sim.dt", "must be positive"));
        }
        Ok(())
    }
}

/// Inverse differential of `exp` on so(3), truncated after the terms that
/// matter for fourth order. Gives `θ̇` for `X = exp(hat(θ)) X₀` driven by the
/// spatial rate `w`; pass `-θ` for `X = X₀ exp(hat(θ))` with a body rate.
fn dexpinv(theta: &Vec3, w: &Vec3) -> Vec3 {
    let tw = theta.cross(w);
    w - 0.5 * tw + theta.cross(&tw) / 12.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct QuadTangent {
    /// Exponential coordinates of `q = exp(hat(φ)) q₀`.
    link: Vec3,
    link_rate: Vec3,
    /// Exponential coordinates of `R = R₀ exp(hat(θ))`.
    attitude: Vec3,
    body_rate: Vec3,
}

/// Offset of a state from a base point, in the coordinates above.
#[derive(Debug, Clone, PartialEq)]
struct Tangent {
    position: Vec3,
    velocity: Vec3,
    attitude: Vec3,
    body_rate: Vec3,
    quads: Vec<QuadTangent>,
}

impl Tangent {
    fn zero(n: usize) -> Self {
        let z = Vec3::zeros();
        Tangent {
            position: z,
            velocity: z,
            attitude: z,
            body_rate: z,
            quads: vec![QuadTangent { link: z, link_rate: z, attitude: z, body_rate: z }; n],
        }
    }

    /// `Σ cᵢ tᵢ`.
    fn combine(terms: &[(f64, &Tangent)]) -> Tangent {
        let n = terms[0].1.quads.len();
        let mut out = Tangent::zero(n);
        for &(c, t) in terms {
            out.position += c * t.position;
            out.velocity += c * t.velocity;
            out.attitude += c * t.attitude;
            out.body_rate += c * t.body_rate;
            for (o, q) in out.quads.iter_mut().zip(&t.quads) {
                o.link += c * q.link;
                o.link_rate += c * q.link_rate;
                o.attitude += c * q.attitude;
                o.body_rate += c * q.body_rate;
            }
        }
        out
    }

    /// Step in exponential coordinates produced by the derivative `d`
    /// evaluated at offset `at`.
    fn lift(d: &StateDerivative, at: &Tangent, dt: f64) -> Tangent {
        Tangent {
            position: dt * d.velocity,
            velocity: dt * d.accel,
            // right-trivialized: Ṙ = R hat(Ω)
            attitude: dt * dexpinv(&-at.attitude, &d.body_rate),
            body_rate: dt * d.angular_accel,
            quads: d
                .quads
                .iter()
                .zip(&at.quads)
                .map(|(qd, a)| QuadTangent {
                    // left-trivialized: q̇ = hat(ω) q
                    link: dt * dexpinv(&a.link, &qd.link_rate),
                    link_rate: dt * qd.link_accel,
                    attitude: dt * dexpinv(&-a.attitude, &qd.body_rate),
                    body_rate: dt * qd.angular_accel,
                })
                .collect(),
        }
    }
}

fn retract(base: &SystemState, d: &Tangent) -> SystemState {
    let p = &base.payload;
    SystemState {
        payload: PayloadState {
            position: p.position + d.position,
            velocity: p.velocity + d.velocity,
            attitude: p.attitude * exp_so3(&d.attitude),
            body_rate: p.body_rate + d.body_rate,
        },
        quads: base
            .quads
            .iter()
            .zip(&d.quads)
            .map(|(q, t)| QuadState {
                link: exp_so3(&t.link) * q.link,
                link_rate: q.link_rate + t.link_rate,
                attitude: q.attitude * exp_so3(&t.attitude),
                body_rate: q.body_rate + t.body_rate,
            })
            .collect(),
    }
}

/// Restores unit links, tangent link rates and orthonormal attitudes.
pub fn repair(state: &mut SystemState) -> Result<()> {
    state.payload.attitude = orthonormalize(&state.payload.attitude)?;
    for q in &mut state.quads {
        q.link = q.link.normalize();
        q.link_rate -= q.link * q.link.dot(&q.link_rate);
        q.attitude = orthonormalize(&q.attitude)?;
    }
    Ok(())
}

/// Advances `state` by one step of `config.dt`. `deriv` is evaluated at the
/// stage states and times; inputs it applies are the caller's business.
pub fn step<F>(state: &SystemState, mut deriv: F, t: f64, config: &IntegratorConfig) -> Result<SystemState>
where
    F: FnMut(&SystemState, f64) -> Result<StateDerivative>,
{
    let dt = config.dt;
    let n = state.quads.len();
    let zero = Tangent::zero(n);
    let total = match config.scheme {
        Scheme::Euler => Tangent::lift(&deriv(state, t)?, &zero, dt),
        Scheme::Rk4 => {
            let k1 = Tangent::lift(&deriv(state, t)?, &zero, dt);
            let th2 = Tangent::combine(&[(0.5, &k1)]);
            let k2 = Tangent::lift(&deriv(&retract(state, &th2), t + 0.5 * dt)?, &th2, dt);
            let th3 = Tangent::combine(&[(0.5, &k2)]);
            let k3 = Tangent::lift(&deriv(&retract(state, &th3), t + 0.5 * dt)?, &th3, dt);
            let k4 = Tangent::lift(&deriv(&retract(state, &k3), t + dt)?, &k3, dt);
            Tangent::combine(&[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)])
        }
    };
    let mut next = retract(state, &total);
    repair(&mut next)?;
    Ok(next)
}

/// One step of a single rigid body `Ṙ = R hat(Ω)`, `J Ω̇ = M − Ω × JΩ` with
/// the moment held over the step.
pub fn step_rigid_body(attitude: &Mat3, body_rate: &Vec3, inertia: &Mat3, moment: &Vec3, config: &IntegratorConfig) -> Result<(Mat3, Vec3)> {
    let dt = config.dt;
    let j_inv = inertia
        .try_inverse()
        .ok_or_else(|| Error::validation("inertia", "must be invertible"))?;
    let accel = |w: &Vec3| j_inv * (moment - w.cross(&(inertia * w)));
    // (θ, Ω) offsets from the base point
    let lift = |theta: &Vec3, w: &Vec3| (dt * dexpinv(&-theta, w), dt * accel(w));
    let (theta, dw) = match config.scheme {
        Scheme::Euler => lift(&Vec3::zeros(), body_rate),
        Scheme::Rk4 => {
            let k1 = lift(&Vec3::zeros(), body_rate);
            let k2 = lift(&(0.5 * k1.0), &(body_rate + 0.5 * k1.1));
            let k3 = lift(&(0.5 * k2.0), &(body_rate + 0.5 * k2.1));
            let k4 = lift(&k3.0, &(body_rate + k3.1));
            (
                (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0) / 6.0,
                (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1) / 6.0,
            )
        }
    };
    Ok((orthonormalize(&(attitude * exp_so3(&theta)))?, body_rate + dw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{eom, QuadInput, StateDerivative};
    use crate::geom::{axis_angle, e3, orthogonality_error};
    use crate::model::{DisturbanceModel, SystemParams};
    use crate::presets;

    #[test]
    fn zero_derivative_keeps_state() {
        let state = presets::figure8_initial_state();
        let next = step(&state, |s, _| Ok(StateDerivative::zeros(s.quads.len())), 0.0, &IntegratorConfig::rk4(1e-3)).unwrap();
        assert_eq!(next, state);
    }

    #[test]
    fn constant_rate_matches_closed_form() {
        let nu = 2.3;
        let dt = 1e-3;
        let mut state = presets::figure8_initial_state();
        state.payload.attitude = axis_angle(&Vec3::new(1.0, 1.0, 0.0), 0.4);
        let start = state.payload.attitude;
        let deriv = |s: &SystemState, _t: f64| {
            let mut d = StateDerivative::zeros(s.quads.len());
            d.body_rate = nu * e3();
            Ok(d)
        };
        for scheme in [Scheme::Rk4, Scheme::Euler] {
            let next = step(&state, deriv, 0.0, &IntegratorConfig { dt, scheme }).unwrap();
            assert!((next.payload.attitude - start * exp_so3(&(nu * dt * e3()))).norm() < 1e-12);
        }
    }

    #[test]
    fn spinning_link_stays_on_sphere() {
        let dt = 1e-3;
        let w = Vec3::new(0.0, 1.5, 0.0);
        let mut state = presets::figure8_initial_state();
        state.quads[0].link_rate = w;
        let deriv = |s: &SystemState, _t: f64| {
            let mut d = StateDerivative::zeros(s.quads.len());
            for (qd, qs) in d.quads.iter_mut().zip(&s.quads) {
                qd.link_rate = qs.link_rate;
                qd.link_velocity = qs.link_rate.cross(&qs.link);
            }
            Ok(d)
        };
        for _ in 0..1000 {
            state = step(&state, deriv, 0.0, &IntegratorConfig::rk4(dt)).unwrap();
        }
        let expected = axis_angle(&Vec3::y(), 1.5) * e3();
        assert!((state.quads[0].link - expected).norm() < 1e-12);
        assert!((state.quads[0].link.norm() - 1.0).abs() < 1e-15);
        assert!(state.quads[0].link.dot(&state.quads[0].link_rate).abs() < 1e-15);
    }

    #[test]
    fn free_rigid_body_conserves_energy_and_momentum() {
        let params = SystemParams {
            payload_mass: 1.5,
            payload_inertia: Mat3::from_diagonal(&Vec3::new(0.085, 0.13, 0.205)),
            quads: Vec::new(),
            gravity: 0.0,
        };
        let dist = DisturbanceModel::none(0);
        let mut state = SystemState::at_rest(Vec3::zeros(), 0);
        state.payload.body_rate = Vec3::new(0.3, 1.1, -0.4);
        let j = params.payload_inertia;
        let energy = |s: &SystemState| 0.5 * s.payload.body_rate.dot(&(j * s.payload.body_rate));
        let momentum = |s: &SystemState| s.payload.attitude * j * s.payload.body_rate;
        let (e0, h0) = (energy(&state), momentum(&state));
        let cfg = IntegratorConfig::rk4(1e-3);
        let inputs: Vec<QuadInput> = Vec::new();
        for k in 0..10_000 {
            state = step(&state, |s, t| eom(s, &inputs, &dist, t, &params), k as f64 * 1e-3, &cfg).unwrap();
        }
        assert!((energy(&state) - e0).abs() < 1e-9);
        assert!((momentum(&state) - h0).norm() < 1e-9);
        assert!(orthogonality_error(&state.payload.attitude) < 1e-12);
    }

    #[test]
    fn rigid_body_step_matches_system_step() {
        // the same free body through the multibody integrator as the payload
        let j = Mat3::from_diagonal(&Vec3::new(0.085, 0.13, 0.205));
        let params = SystemParams { payload_mass: 1.5, payload_inertia: j, quads: Vec::new(), gravity: 0.0 };
        let dist = DisturbanceModel::none(0);
        let mut state = SystemState::at_rest(Vec3::zeros(), 0);
        state.payload.attitude = axis_angle(&Vec3::new(0.2, -1.0, 0.4), 0.9);
        state.payload.body_rate = Vec3::new(0.7, -1.3, 2.1);
        let cfg = IntegratorConfig::rk4(1e-2);
        let (mut r, mut w) = (state.payload.attitude, state.payload.body_rate);
        for k in 0..100 {
            state = step(&state, |s, t| eom(s, &[], &dist, t, &params), k as f64 * 1e-2, &cfg).unwrap();
            (r, w) = step_rigid_body(&r, &w, &j, &Vec3::zeros(), &cfg).unwrap();
        }
        assert!((r - state.payload.attitude).norm() < 1e-12);
        assert!((w - state.payload.body_rate).norm() < 1e-12);
    }

    #[test]
    fn rigid_body_constant_moment_spin() {
        // symmetric body about e₃ under a constant axial moment
        let j = Mat3::from_diagonal(&Vec3::new(0.1, 0.1, 0.2));
        let m = Vec3::new(0.0, 0.0, 0.4);
        let cfg = IntegratorConfig::rk4(1e-3);
        let (mut r, mut w) = (Mat3::identity(), Vec3::zeros());
        for _ in 0..1000 {
            (r, w) = step_rigid_body(&r, &w, &j, &m, &cfg).unwrap();
        }
        // Ω = 2t, angle = t²
        assert!((w - Vec3::new(0.0, 0.0, 2.0)).norm() < 1e-12);
        assert!((r - axis_angle(&e3(), 1.0)).norm() < 1e-10);
    }
}
