//! Coupled equations of motion of the payload, the rigid massless links and
//! the quadrotors, derived by Lagrange–d'Alembert on `R³ × SO(3) × (S² × SO(3))ⁿ`.
//!
//! The payload translational and rotational accelerations are coupled through
//! the links and are obtained from one dense 6 × 6 symmetric positive-definite
//! solve. Link and quadrotor accelerations then follow explicitly.

use nalgebra::{Matrix6, Vector6};

use crate::error::{Error, Result};
use crate::geom::{e3, hat, Mat3, Vec3};
use crate::model::{DisturbanceModel, SystemParams, SystemState};

/// Largest accepted condition estimate of the 6 × 6 system matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Control applied by one quadrotor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadInput {
    /// Simplified model: the inertial thrust vector is commanded directly and
    /// the quadrotor attitude is not driven.
    Force(Vec3),
    /// Full model: thrust magnitude along `-R e₃` and body-frame moment.
    ThrustMoment { thrust: f64, moment: Vec3 },
}

impl QuadInput {
    /// Inertial control force realized by this input at attitude `attitude`.
    pub fn force(&self, attitude: &Mat3) -> Vec3 {
        match *self {
            QuadInput::Force(u) => u,
            QuadInput::ThrustMoment { thrust, .. } => -thrust * attitude * e3(),
        }
    }

    pub fn moment(&self) -> Option<Vec3> {
        match *self {
            QuadInput::Force(_) => None,
            QuadInput::ThrustMoment { moment, .. } => Some(moment),
        }
    }

    pub fn zero_force() -> Self {
        QuadInput::Force(Vec3::zeros())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadDerivative {
    /// Link angular velocity `ω` at which the derivative was evaluated.
    pub link_rate: Vec3,
    /// `q̇ = ω × q`.
    pub link_velocity: Vec3,
    pub link_accel: Vec3,
    /// Body rate driving `Ṙ = R hat(Ω)`.
    pub body_rate: Vec3,
    /// Zero in simplified-model mode.
    pub angular_accel: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub velocity: Vec3,
    pub accel: Vec3,
    pub body_rate: Vec3,
    pub angular_accel: Vec3,
    pub quads: Vec<QuadDerivative>,
}

impl StateDerivative {
    pub fn zeros(n: usize) -> Self {
        let zero = Vec3::zeros();
        StateDerivative {
            velocity: zero,
            accel: zero,
            body_rate: zero,
            angular_accel: zero,
            quads: vec![
                QuadDerivative {
                    link_rate: zero,
                    link_velocity: zero,
                    link_accel: zero,
                    body_rate: zero,
                    angular_accel: zero,
                };
                n
            ],
        }
    }
}

/// Blocks of the payload system matrix
/// `[translational, coupling; couplingᵀ, rotational]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassMatrix {
    /// `m₀ I + Σ mᵢ qᵢqᵢᵀ`.
    pub translational: Mat3,
    /// `-Σ mᵢ qᵢqᵢᵀ R₀ hat(ρᵢ)`.
    pub coupling: Mat3,
    /// `J₀ - Σ mᵢ hat(ρᵢ) R₀ᵀ qᵢqᵢᵀ R₀ hat(ρᵢ)`.
    pub rotational: Mat3,
}

impl MassMatrix {
    pub fn assemble(&self) -> Matrix6<f64> {
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.translational);
        m.fixed_view_mut::<3, 3>(0, 3).copy_from(&self.coupling);
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&self.coupling.transpose());
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.rotational);
        m
    }
}

pub fn mass_matrix(state: &SystemState, params: &SystemParams) -> MassMatrix {
    let r0 = &state.payload.attitude;
    let mut translational = Mat3::identity() * params.payload_mass;
    let mut coupling = Mat3::zeros();
    let mut rotational = params.payload_inertia;
    for (quad, qs) in params.quads.iter().zip(&state.quads) {
        let qqt = qs.link * qs.link.transpose();
        let rho_hat = hat(&quad.attachment);
        translational += quad.mass * qqt;
        coupling -= quad.mass * qqt * r0 * rho_hat;
        rotational -= quad.mass * rho_hat * r0.transpose() * qqt * r0 * rho_hat;
    }
    MassMatrix {
        translational,
        coupling,
        rotational,
    }
}

/// Solves `A z = b` for the symmetric positive-definite payload system.
fn solve_payload(a: &Matrix6<f64>, b: &Vector6<f64>) -> Result<Vector6<f64>> {
    let chol = a.cholesky().ok_or(Error::SingularMass(f64::INFINITY))?;
    let diag = chol.l_dirty().diagonal();
    let cond = (diag.max() / diag.min()).powi(2);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularMass(cond));
    }
    Ok(chol.solve(b))
}

/// State derivative of the coupled system under the given inputs.
///
/// Quadrotors driven by [`QuadInput::Force`] keep a constant body rate; those
/// driven by [`QuadInput::ThrustMoment`] follow the rigid-body Euler equation.
pub fn eom(
    state: &SystemState,
    inputs: &[QuadInput],
    dist: &DisturbanceModel,
    t: f64,
    params: &SystemParams,
) -> Result<StateDerivative> {
    let n = params.n();
    if inputs.len() != n || state.quads.len() != n {
        return Err(Error::validation(
            "inputs",
            format!("expected {n} inputs and link states, got {} and {}", inputs.len(), state.quads.len()),
        ));
    }
    let p = &state.payload;
    let r0 = &p.attitude;
    let w0_hat = hat(&p.body_rate);
    let g = params.gravity;

    let mut rhs_force = dist.payload_force.eval(t);
    let mut rhs_moment =
        dist.payload_moment.eval(t) - w0_hat * params.payload_inertia * p.body_rate;

    let mut forces = Vec::with_capacity(n);
    for (i, (quad, qs)) in params.quads.iter().zip(&state.quads).enumerate() {
        let q = &qs.link;
        let qqt = q * q.transpose();
        let force = inputs[i].force(&qs.attitude) + dist.quad_force[i].eval(t);
        let centripetal = quad.mass * quad.link_length * qs.link_rate.norm_squared() * q
            + quad.mass * qqt * r0 * w0_hat * w0_hat * quad.attachment;
        let along_link = qqt * force - centripetal;
        rhs_force += along_link;
        rhs_moment += hat(&quad.attachment) * r0.transpose() * along_link;
        forces.push(force);
    }

    let a = mass_matrix(state, params).assemble();
    let mut b = Vector6::zeros();
    b.fixed_rows_mut::<3>(0).copy_from(&rhs_force);
    b.fixed_rows_mut::<3>(3).copy_from(&rhs_moment);
    let z = solve_payload(&a, &b)?;
    // z = [ẍ₀ - g e₃; Ω̇₀]
    let rel_accel: Vec3 = z.fixed_rows::<3>(0).into();
    let angular_accel: Vec3 = z.fixed_rows::<3>(3).into();

    let quads = params
        .quads
        .iter()
        .zip(&state.quads)
        .zip(inputs.iter().zip(&forces))
        .enumerate()
        .map(|(i, ((quad, qs), (input, force)))| {
            let q_hat = hat(&qs.link);
            let attach_accel = rel_accel + r0 * w0_hat * w0_hat * quad.attachment
                - r0 * hat(&quad.attachment) * angular_accel;
            let link_accel = q_hat * attach_accel / quad.link_length
                - q_hat * force / (quad.mass * quad.link_length);
            let quad_angular_accel = match input.moment() {
                None => Vec3::zeros(),
                Some(moment) => {
                    let j = &quad.inertia;
                    let torque = moment + dist.quad_moment[i].eval(t)
                        - qs.body_rate.cross(&(j * qs.body_rate));
                    j.cholesky().map(|c| c.solve(&torque)).unwrap_or_else(|| Vec3::repeat(f64::NAN))
                }
            };
            QuadDerivative {
                link_rate: qs.link_rate,
                link_velocity: qs.link_rate.cross(&qs.link),
                link_accel,
                body_rate: qs.body_rate,
                angular_accel: quad_angular_accel,
            }
        })
        .collect();

    Ok(StateDerivative {
        velocity: p.velocity,
        accel: rel_accel + g * e3(),
        body_rate: p.body_rate,
        angular_accel,
        quads,
    })
}

/// Kinetic and gravitational potential energy, in joules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    pub kinetic: f64,
    pub potential: f64,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential
    }
}

/// Inertial positions of the quadrotors, `x₀ + R₀ρᵢ - lᵢqᵢ`.
pub fn quad_positions(state: &SystemState, params: &SystemParams) -> Vec<Vec3> {
    let p = &state.payload;
    params
        .quads
        .iter()
        .zip(&state.quads)
        .map(|(quad, qs)| p.position + p.attitude * quad.attachment - quad.link_length * qs.link)
        .collect()
}

pub fn quad_velocities(state: &SystemState, params: &SystemParams) -> Vec<Vec3> {
    let p = &state.payload;
    let r0_w0 = p.attitude * hat(&p.body_rate);
    params
        .quads
        .iter()
        .zip(&state.quads)
        .map(|(quad, qs)| {
            p.velocity + r0_w0 * quad.attachment - quad.link_length * qs.link_rate.cross(&qs.link)
        })
        .collect()
}

pub fn energy(state: &SystemState, params: &SystemParams) -> Energy {
    let p = &state.payload;
    let g = params.gravity;
    let mut kinetic = 0.5 * params.payload_mass * p.velocity.norm_squared()
        + 0.5 * p.body_rate.dot(&(params.payload_inertia * p.body_rate));
    let mut potential = -params.payload_mass * g * p.position.z;
    let positions = quad_positions(state, params);
    let velocities = quad_velocities(state, params);
    for (((quad, qs), x), v) in params.quads.iter().zip(&state.quads).zip(&positions).zip(&velocities) {
        kinetic += 0.5 * quad.mass * v.norm_squared() + 0.5 * qs.body_rate.dot(&(quad.inertia * qs.body_rate));
        potential -= quad.mass * g * x.z;
    }
    Energy { kinetic, potential }
}

/// Rate of work done on the system by control inputs and disturbances.
/// With no inputs and no disturbances it is zero and `T + U` is conserved.
pub fn input_power(
    state: &SystemState,
    inputs: &[QuadInput],
    dist: &DisturbanceModel,
    t: f64,
    params: &SystemParams,
) -> f64 {
    let p = &state.payload;
    let mut power = dist.payload_force.eval(t).dot(&p.velocity) + dist.payload_moment.eval(t).dot(&p.body_rate);
    let velocities = quad_velocities(state, params);
    for (i, (qs, v)) in state.quads.iter().zip(&velocities).enumerate() {
        let force = inputs[i].force(&qs.attitude) + dist.quad_force[i].eval(t);
        power += force.dot(v);
        if let Some(moment) = inputs[i].moment() {
            power += (moment + dist.quad_moment[i].eval(t)).dot(&qs.body_rate);
        }
    }
    power
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geom::axis_angle;
    use crate::model::DisturbanceChannel;
    use crate::presets;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
        Vec3::new(
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
        )
    }

    fn rand_unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = rand_vec(rng, 1.0);
            if v.norm() > 0.1 {
                return v.normalize();
            }
        }
    }

    pub(crate) fn random_state(rng: &mut ChaCha8Rng, n: usize) -> SystemState {
        let mut s = SystemState::at_rest(rand_vec(rng, 3.0), n);
        s.payload.velocity = rand_vec(rng, 1.0);
        s.payload.attitude = axis_angle(&rand_unit(rng), rng.random_range(0.0..3.0));
        s.payload.body_rate = rand_vec(rng, 1.0);
        for qs in &mut s.quads {
            qs.link = rand_unit(rng);
            let w = rand_vec(rng, 1.0);
            qs.link_rate = w - qs.link * qs.link.dot(&w);
            qs.attitude = axis_angle(&rand_unit(rng), rng.random_range(0.0..3.0));
            qs.body_rate = rand_vec(rng, 1.0);
        }
        s
    }

    #[test]
    fn payload_alone() {
        let mut params = presets::figure8_params();
        params.quads.clear();
        let state = SystemState::at_rest(Vec3::zeros(), 0);
        let m = mass_matrix(&state, &params);
        assert_eq!(m.translational, Mat3::identity() * 1.5);
        assert_eq!(m.rotational, params.payload_inertia);
    }

    #[test]
    fn hanging_mass_matrix() {
        let params = presets::figure8_params();
        let state = SystemState::at_rest(Vec3::zeros(), 3);
        let m = mass_matrix(&state, &params);
        let expected = Mat3::identity() * 1.5 + 3.0 * 0.755 * e3() * e3().transpose();
        assert!((m.translational - expected).norm() < 1e-14);
    }

    #[test]
    fn system_matrix_symmetric_positive_definite() {
        let params = presets::figure8_params();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let state = random_state(&mut rng, 3);
            let m = mass_matrix(&state, &params);
            assert!((m.translational - m.translational.transpose()).norm() < 1e-14);
            let a = m.assemble();
            assert!((a - a.transpose()).norm() < 1e-14);
            let eig = a.symmetric_eigen().eigenvalues;
            assert!(eig.min() > 0.0);
            let tr_eig = m.translational.symmetric_eigen().eigenvalues;
            assert!(tr_eig.min() >= params.payload_mass - 1e-12);
        }
    }

    #[test]
    fn free_fall() {
        let params = presets::figure8_params();
        let state = SystemState::at_rest(Vec3::new(1.0, 2.0, 3.0), 3);
        let inputs = vec![QuadInput::zero_force(); 3];
        let d = eom(&state, &inputs, &DisturbanceModel::none(3), 0.0, &params).unwrap();
        assert!((d.accel - params.gravity * e3()).norm() < 1e-12);
        assert!(d.angular_accel.norm() < 1e-12);
        for qd in &d.quads {
            assert!(qd.link_accel.norm() < 1e-12);
            assert_eq!(qd.angular_accel, Vec3::zeros());
        }
    }

    #[test]
    fn static_equilibrium_from_allocation() {
        // Thrusts that hold the hanging payload: each link carries the share of
        // the payload weight found by the moment balance, plus its own weight.
        let params = presets::figure8_params();
        let g = params.gravity;
        let p = crate::model::build_p(&params);
        let wrench = nalgebra::DVector::from_vec(vec![0.0, 0.0, -params.payload_mass * g, 0.0, 0.0, 0.0]);
        let pinv = p.clone().pseudo_inverse(1e-12).unwrap();
        let mu = pinv * wrench;
        let state = SystemState::at_rest(Vec3::zeros(), 3);
        let inputs: Vec<QuadInput> = params
            .quads
            .iter()
            .enumerate()
            .map(|(i, quad)| {
                let mu_i = Vec3::new(mu[3 * i], mu[3 * i + 1], mu[3 * i + 2]);
                QuadInput::Force(mu_i - quad.mass * g * e3())
            })
            .collect();
        let d = eom(&state, &inputs, &DisturbanceModel::none(3), 0.0, &params).unwrap();
        // the SVD oracle itself is accurate to a few 1e-12
        assert!(d.accel.norm() < 1e-10, "{}", d.accel);
        assert!(d.angular_accel.norm() < 1e-10);
        for qd in &d.quads {
            assert!(qd.link_accel.norm() < 1e-10);
        }
    }

    #[test]
    fn link_accel_is_tangent() {
        let params = presets::figure8_params();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let state = random_state(&mut rng, 3);
            let inputs: Vec<_> = (0..3).map(|_| QuadInput::Force(rand_vec(&mut rng, 20.0))).collect();
            let d = eom(&state, &inputs, &DisturbanceModel::none(3), 0.0, &params).unwrap();
            for (qs, qd) in state.quads.iter().zip(&d.quads) {
                assert!(qs.link.dot(&qd.link_accel).abs() < 1e-12);
                assert!(qs.link.dot(&qd.link_velocity).abs() < 1e-12);
                // q . ω̇ = -q̇ . ω keeps the tangency constraint
                assert!((qs.link.dot(&qd.link_accel) + qd.link_velocity.dot(&qs.link_rate)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn energy_rest_and_translation() {
        let params = presets::figure8_params();
        let g = params.gravity;
        let state = SystemState::at_rest(Vec3::zeros(), 3);
        let e = energy(&state, &params);
        assert_eq!(e.kinetic, 0.0);
        // U = -Σ mᵢ g e₃·(ρᵢ - lᵢ e₃) = -3·0.755·g·(-0.1 - 1)
        let expected = -3.0 * 0.755 * g * (-0.1 - 1.0);
        assert!((e.potential - expected).abs() < 1e-12);

        let mut moving = state.clone();
        moving.payload.velocity = Vec3::new(2.0, 0.0, 0.0);
        let e = energy(&moving, &params);
        assert!((e.kinetic - 0.5 * params.total_mass() * 4.0).abs() < 1e-12);

        let mut lower = state.clone();
        lower.payload.position.z += 0.5;
        assert!(energy(&lower, &params).potential < energy(&state, &params).potential);
    }

    #[test]
    fn power_balance_matches_energy_rate() {
        let params = presets::figure8_params();
        let mut dist = DisturbanceModel::none(3);
        dist.payload_force = DisturbanceChannel::constant(Vec3::new(1.0, 3.0, -2.5));
        dist.payload_moment = DisturbanceChannel::constant(Vec3::new(-0.5, 0.1, -1.5));
        dist.quad_force = vec![DisturbanceChannel::constant(Vec3::new(0.5, -0.2, 0.3)); 3];
        dist.quad_moment = vec![DisturbanceChannel::constant(Vec3::new(0.2, 0.3, -0.7)); 3];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let state = random_state(&mut rng, 3);
            let inputs: Vec<_> = (0..3)
                .map(|_| QuadInput::ThrustMoment {
                    thrust: rng.random_range(0.0..20.0),
                    moment: rand_vec(&mut rng, 0.5),
                })
                .collect();
            let d = eom(&state, &inputs, &dist, 0.0, &params).unwrap();
            // central difference of T + U along the exact local flow
            let h = 1e-6;
            let step = |sign: f64| {
                let mut s = state.clone();
                s.payload.position += sign * h * d.velocity;
                s.payload.velocity += sign * h * d.accel;
                s.payload.attitude *= crate::geom::exp_so3(&(sign * h * d.body_rate));
                s.payload.body_rate += sign * h * d.angular_accel;
                for (qs, qd) in s.quads.iter_mut().zip(&d.quads) {
                    qs.link = crate::geom::exp_so3(&(sign * h * qs.link_rate)) * qs.link;
                    qs.link_rate += sign * h * qd.link_accel;
                    qs.attitude *= crate::geom::exp_so3(&(sign * h * qd.body_rate));
                    qs.body_rate += sign * h * qd.angular_accel;
                }
                energy(&s, &params).total()
            };
            let rate = (step(1.0) - step(-1.0)) / (2.0 * h);
            let power = input_power(&state, &inputs, &dist, 0.0, &params);
            assert!((rate - power).abs() < 1e-5 * (1.0 + power.abs()), "{rate} vs {power}");
        }
    }

    #[test]
    fn quad_positions_cases() {
        let params = presets::figure8_params();
        let state = SystemState::at_rest(Vec3::zeros(), 3);
        for (x, quad) in quad_positions(&state, &params).iter().zip(&params.quads) {
            assert_eq!(*x, quad.attachment - quad.link_length * e3());
        }
        let start = presets::figure8_initial_state();
        let x1 = quad_positions(&start, &params)[0];
        assert!((x1 - (Vec3::new(1.0, 4.8, 0.0) + Vec3::new(0.5, 0.0, -0.1) - e3())).norm() < 1e-15);

        let mut turned = state.clone();
        turned.payload.attitude = axis_angle(&e3(), std::f64::consts::PI);
        for (x, quad) in quad_positions(&turned, &params).iter().zip(&params.quads) {
            let rho = quad.attachment;
            let reflected = Vec3::new(-rho.x, -rho.y, rho.z) - quad.link_length * e3();
            assert!((x - reflected).norm() < 1e-15);
        }
    }

    #[test]
    fn wrong_input_count_rejected() {
        let params = presets::figure8_params();
        let state = SystemState::at_rest(Vec3::zeros(), 3);
        let err = eom(&state, &[QuadInput::zero_force()], &DisturbanceModel::none(3), 0.0, &params);
        assert!(err.is_err());
    }
}
