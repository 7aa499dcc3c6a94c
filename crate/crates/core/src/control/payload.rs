//! Geometric controller for the simplified model, where each quadrotor is
//! treated as a thrust vector that can point anywhere.
//!
//! The thrust splits into a component along the link, which shapes the payload
//! wrench through a minimum-norm tension allocation, and a component normal to
//! the link, which steers the link toward the direction implied by that
//! allocation.

use nalgebra::{DMatrix, DVector, Vector6};

use crate::adaptive::EstimatorState;
use crate::error::{Error, Result};
use crate::geom::{self, attitude_errors, e3, hat, link_errors_unchecked, LinkErrors, Mat3, Vec3};
use crate::model::{build_p, check_rank, Regressors, SystemParams, SystemState};
use crate::trajectory::PayloadReference;

/// Degenerate-tension threshold, N.
pub const TENSION_EPS: f64 = 1e-6;

/// Feedback gains of the payload and link loops, plus the cross-term weights
/// shared with the adaptive laws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayloadGains {
    pub position: f64,
    pub velocity: f64,
    pub attitude: f64,
    pub angular_rate: f64,
    pub link: f64,
    pub link_rate: f64,
    pub cross_position: f64,
    pub cross_attitude: f64,
    pub cross_link: f64,
}

impl PayloadGains {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("gains.position", self.position),
            ("gains.velocity", self.velocity),
            ("gains.attitude", self.attitude),
            ("gains.angular_rate", self.angular_rate),
            ("gains.link", self.link),
            ("gains.link_rate", self.link_rate),
            ("gains.cross_position", self.cross_position),
            ("gains.cross_attitude", self.cross_attitude),
            ("gains.cross_link", self.cross_link),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::validation(name, "must be strictly positive"));
            }
        }
        Ok(())
    }
}

/// Payload tracking errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayloadErrors {
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: Vec3,
    pub angular_rate: Vec3,
    /// `½ tr(I - R_dᵀ R₀)`.
    pub psi: f64,
}

pub fn payload_errors(state: &SystemState, reference: &PayloadReference) -> PayloadErrors {
    let p = &state.payload;
    let att = attitude_errors(&p.attitude, &reference.attitude, &p.body_rate, &reference.body_rate);
    PayloadErrors {
        position: p.position - reference.position,
        velocity: p.velocity - reference.velocity,
        attitude: att.e_r,
        angular_rate: att.e_omega,
        psi: att.psi,
    }
}

/// Resultant force (inertial) and moment (payload body frame) on the payload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub force: Vec3,
    pub moment: Vec3,
}

/// Desired payload wrench with disturbance compensation from the current
/// estimates.
pub fn desired_wrench(
    errors: &PayloadErrors,
    reference: &PayloadReference,
    state: &SystemState,
    estimator: &EstimatorState,
    regressors: &Regressors,
    t: f64,
    gains: &PayloadGains,
    params: &SystemParams,
) -> Wrench {
    let p = &state.payload;
    let r0 = &p.attitude;
    let m0 = params.payload_mass;
    let j0 = &params.payload_inertia;

    let mut force = m0
        * (-gains.position * errors.position - gains.velocity * errors.velocity + reference.accel
            - params.gravity * e3())
        - regressors.payload_force.matrix(t) * &estimator.payload_force;

    let rel = r0.transpose() * reference.attitude;
    let omega_d = rel * reference.body_rate;
    let mut moment = -gains.attitude * errors.attitude - gains.angular_rate * errors.angular_rate
        + omega_d.cross(&(j0 * omega_d))
        + j0 * rel * reference.angular_accel
        - regressors.payload_moment.matrix(t) * &estimator.payload_moment;

    for (i, quad) in params.quads.iter().enumerate() {
        let q = &state.quads[i].link;
        let along = q * q.transpose() * (regressors.quad_force[i].matrix(t) * &estimator.quad_force[i]);
        force -= along;
        moment -= hat(&quad.attachment) * r0.transpose() * along;
    }
    Wrench { force, moment }
}

/// Minimum-norm tension allocation for a fixed attachment geometry.
#[derive(Debug, Clone)]
pub struct Allocator {
    /// `Pᵀ (P Pᵀ)⁻¹`, 3n × 6.
    right_inverse: DMatrix<f64>,
}

impl Allocator {
    pub fn new(params: &SystemParams) -> Result<Self> {
        let p = build_p(params);
        if !check_rank(&p) {
            return Err(Error::RankDeficient);
        }
        let ppt = &p * p.transpose();
        let chol = ppt.cholesky().ok_or(Error::RankDeficient)?;
        let right_inverse = p.transpose() * chol.inverse();
        Ok(Allocator { right_inverse })
    }

    pub fn n(&self) -> usize {
        self.right_inverse.nrows() / 3
    }

    /// Desired link force vectors (inertial frame) whose sum is `wrench.force`
    /// and whose moment about the payload center is `wrench.moment`.
    pub fn allocate(&self, wrench: &Wrench, payload_attitude: &Mat3) -> Vec<Vec3> {
        let mut rhs = Vector6::zeros();
        rhs.fixed_rows_mut::<3>(0).copy_from(&(payload_attitude.transpose() * wrench.force));
        rhs.fixed_rows_mut::<3>(3).copy_from(&wrench.moment);
        let body: DVector<f64> = &self.right_inverse * rhs;
        (0..self.n())
            .map(|i| payload_attitude * Vec3::new(body[3 * i], body[3 * i + 1], body[3 * i + 2]))
            .collect()
    }
}

/// One-shot allocation; see [`Allocator`] for repeated use.
pub fn allocate(wrench: &Wrench, payload_attitude: &Mat3, params: &SystemParams) -> Result<Vec<Vec3>> {
    Ok(Allocator::new(params)?.allocate(wrench, payload_attitude))
}

/// Link direction that realizes the desired tension vector `mu_d`.
pub fn link_direction(mu_d: &Vec3, link: usize) -> Result<Vec3> {
    let norm = mu_d.norm();
    if norm <= TENSION_EPS {
        return Err(Error::DegenerateTension { link, norm });
    }
    Ok(-mu_d / norm)
}

/// Desired link direction with its angular velocity and acceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSetpoint {
    pub direction: Vec3,
    pub rate: Vec3,
    pub rate_dot: Vec3,
}

/// Second-order backward difference of a uniformly sampled signal, falling
/// back to first order with two samples.
pub(crate) fn backward_difference(samples: &[Vec3], dt: f64) -> Option<Vec3> {
    match samples {
        [.., a, b, c] => Some((3.0 * c - 4.0 * b + a) / (2.0 * dt)),
        [.., b, c] => Some((c - b) / dt),
        _ => None,
    }
}

/// First-order low-pass applied to differentiated setpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowPass {
    alpha: f64,
    value: Option<Vec3>,
}

/// Low-pass time constant in controller periods.
pub const FILTER_STEPS: f64 = 5.0;

impl LowPass {
    pub fn new() -> Self {
        LowPass {
            alpha: 1.0 / (FILTER_STEPS + 1.0),
            value: None,
        }
    }

    pub fn update(&mut self, raw: Vec3) -> Vec3 {
        let next = match self.value {
            None => raw,
            Some(v) => v + self.alpha * (raw - v),
        };
        self.value = Some(next);
        next
    }
}

impl Default for LowPass {
    fn default() -> Self {
        Self::new()
    }
}

/// Keeps a short history of the desired link direction and differentiates it.
#[derive(Debug, Clone)]
pub struct LinkSetpointFilter {
    link: usize,
    dt: f64,
    directions: Vec<Vec3>,
    rates: Vec<Vec3>,
    rate_dot: LowPass,
}

impl LinkSetpointFilter {
    pub fn new(link: usize, dt: f64) -> Self {
        LinkSetpointFilter {
            link,
            dt,
            directions: Vec::with_capacity(3),
            rates: Vec::with_capacity(3),
            rate_dot: LowPass::new(),
        }
    }

    fn push(buf: &mut Vec<Vec3>, v: Vec3) {
        if buf.len() == 3 {
            buf.remove(0);
        }
        buf.push(v);
    }

    /// Feeds the current desired tension. A degenerate tension holds the last
    /// direction; it is an error only before any direction is known.
    pub fn update(&mut self, mu_d: &Vec3) -> Result<LinkSetpoint> {
        let direction = match link_direction(mu_d, self.link) {
            Ok(d) => d,
            Err(e) => *self.directions.last().ok_or(e)?,
        };
        Self::push(&mut self.directions, direction);
        // only differenced rates enter the history, so start-up does not
        // see a jump from the zero placeholder
        let rate = match backward_difference(&self.directions, self.dt) {
            Some(d) => {
                let rate = direction.cross(&d);
                Self::push(&mut self.rates, rate);
                rate
            }
            None => Vec3::zeros(),
        };
        let raw_rate_dot = backward_difference(&self.rates, self.dt).unwrap_or_else(Vec3::zeros);
        let rate_dot = self.rate_dot.update(raw_rate_dot);
        Ok(LinkSetpoint {
            direction,
            rate,
            rate_dot,
        })
    }
}

/// Acceleration of attachment point `i` relative to gravity, from payload
/// accelerations `accel` (ẍ₀) and `angular_accel` (Ω̇₀).
pub fn attachment_accel(
    state: &SystemState,
    params: &SystemParams,
    i: usize,
    accel: &Vec3,
    angular_accel: &Vec3,
) -> Vec3 {
    let p = &state.payload;
    let rho = &params.quads[i].attachment;
    let w_hat = hat(&p.body_rate);
    accel - params.gravity * e3() + p.attitude * w_hat * w_hat * rho - p.attitude * hat(rho) * angular_accel
}

/// Thrust component along the link.
pub fn parallel_input(
    link: &Vec3,
    link_rate: &Vec3,
    mu_d: &Vec3,
    attach_accel: &Vec3,
    mass: f64,
    length: f64,
) -> Vec3 {
    let qqt = link * link.transpose();
    qqt * mu_d + mass * length * link_rate.norm_squared() * link + mass * qqt * attach_accel
}

/// Thrust component normal to the link. `disturbance_estimate` is the current
/// estimate `Φ θ̄` of the force disturbance on this quadrotor; only its normal
/// part is compensated here.
pub fn normal_input(
    link: &Vec3,
    errors: &LinkErrors,
    setpoint: &LinkSetpoint,
    link_velocity: &Vec3,
    attach_accel: &Vec3,
    disturbance_estimate: &Vec3,
    mass: f64,
    length: f64,
    gains: &PayloadGains,
) -> Vec3 {
    let q_hat = hat(link);
    let q_hat_sq = q_hat * q_hat;
    let inner = -gains.link * errors.e_q
        - gains.link_rate * errors.e_omega
        - link.dot(&setpoint.rate) * link_velocity
        - q_hat_sq * setpoint.rate_dot;
    mass * length * q_hat * inner - mass * q_hat_sq * attach_accel + q_hat_sq * disturbance_estimate
}

/// Per-link diagnostics of one controller evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkDiagnostics {
    pub mu_desired: Vec3,
    /// Projection of `mu_desired` onto the current link.
    pub mu: Vec3,
    pub setpoint: LinkSetpoint,
    pub errors: LinkErrors,
    pub attach_accel: Vec3,
    pub parallel: Vec3,
    pub normal: Vec3,
}

impl LinkDiagnostics {
    pub fn tension(&self) -> f64 {
        self.mu.norm()
    }
}

/// Output of the simplified-model controller.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplifiedOutput {
    /// Ideal thrust vector per quadrotor.
    pub forces: Vec<Vec3>,
    pub wrench: Wrench,
    pub errors: PayloadErrors,
    pub links: Vec<LinkDiagnostics>,
}

/// Stateful simplified-model controller. State is limited to the setpoint
/// differentiation histories and the lagged payload accelerations.
#[derive(Debug, Clone)]
pub struct PayloadController {
    pub gains: PayloadGains,
    allocator: Allocator,
    filters: Vec<LinkSetpointFilter>,
    accel: Vec3,
    angular_accel: Vec3,
}

impl PayloadController {
    /// `dt` is the controller period used for setpoint differentiation.
    pub fn new(gains: PayloadGains, params: &SystemParams, dt: f64) -> Result<Self> {
        gains.validate()?;
        Ok(PayloadController {
            gains,
            allocator: Allocator::new(params)?,
            filters: (0..params.n()).map(|i| LinkSetpointFilter::new(i, dt)).collect(),
            accel: params.gravity * e3(),
            angular_accel: Vec3::zeros(),
        })
    }

    /// Records the payload accelerations produced by the last applied input;
    /// they stand in for the current ones on the next evaluation.
    pub fn accept_accelerations(&mut self, accel: Vec3, angular_accel: Vec3) {
        self.accel = accel;
        self.angular_accel = angular_accel;
    }

    pub fn lagged_accelerations(&self) -> (Vec3, Vec3) {
        (self.accel, self.angular_accel)
    }

    pub fn compute(
        &mut self,
        state: &SystemState,
        reference: &PayloadReference,
        t: f64,
        estimator: &EstimatorState,
        regressors: &Regressors,
        params: &SystemParams,
    ) -> Result<SimplifiedOutput> {
        let errors = payload_errors(state, reference);
        let wrench = desired_wrench(&errors, reference, state, estimator, regressors, t, &self.gains, params);
        let mu_d = self.allocator.allocate(&wrench, &state.payload.attitude);

        let mut forces = Vec::with_capacity(params.n());
        let mut links = Vec::with_capacity(params.n());
        for (i, quad) in params.quads.iter().enumerate() {
            let qs = &state.quads[i];
            let setpoint = self.filters[i].update(&mu_d[i])?;
            let errors = link_errors_unchecked(&qs.link, &setpoint.direction, &qs.link_rate, &setpoint.rate);
            let attach_accel = attachment_accel(state, params, i, &self.accel, &self.angular_accel);
            let parallel = parallel_input(&qs.link, &qs.link_rate, &mu_d[i], &attach_accel, quad.mass, quad.link_length);
            let estimate = regressors.quad_force[i].matrix(t) * &estimator.quad_force[i];
            let normal = normal_input(
                &qs.link,
                &errors,
                &setpoint,
                &qs.link_rate.cross(&qs.link),
                &attach_accel,
                &estimate,
                quad.mass,
                quad.link_length,
                &self.gains,
            );
            forces.push(parallel + normal);
            links.push(LinkDiagnostics {
                mu_desired: mu_d[i],
                mu: qs.link * qs.link.dot(&mu_d[i]),
                setpoint,
                errors,
                attach_accel,
                parallel,
                normal,
            });
        }
        Ok(SimplifiedOutput {
            forces,
            wrench,
            errors,
            links,
        })
    }
}

/// `-hat(q)² v`, the component of `v` normal to `q`.
pub fn normal_part(q: &Vec3, v: &Vec3) -> Vec3 {
    geom::normal_projector(q) * v
}
