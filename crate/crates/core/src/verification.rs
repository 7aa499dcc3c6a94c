//! Diagnostics for checking closed-loop runs against the stability analysis:
//! the Lyapunov function, its quadratic bounds, the tracking-error dynamics
//! and the gain conditions.

use nalgebra::{DVector, Matrix2, Matrix3};

use crate::adaptive::EstimatorState;
use crate::control::payload::{attachment_accel, SimplifiedOutput};
use crate::control::{PayloadErrors, PayloadGains};
use crate::dynamics::StateDerivative;
use crate::geom::{hat, LinkErrors, Vec3};
use crate::model::{build_p, DisturbanceModel, SystemParams, SystemState};
use crate::trajectory::PayloadReference;

/// Lyapunov function split by subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovBreakdown {
    pub translational: f64,
    pub rotational: f64,
    pub links: Vec<f64>,
    /// Parameter-error term.
    pub estimation: f64,
}

impl LyapunovBreakdown {
    /// Tracking part, without the parameter errors.
    pub fn tracking(&self) -> f64 {
        self.translational + self.rotational + self.links.iter().sum::<f64>()
    }

    pub fn total(&self) -> f64 {
        self.tracking() + self.estimation
    }
}

fn parameter_error(truth: &DVector<f64>, estimate: &DVector<f64>) -> f64 {
    (truth - estimate).norm_squared()
}

pub fn lyapunov_value(
    payload: &PayloadErrors,
    links: &[LinkErrors],
    estimator: &EstimatorState,
    dist: &DisturbanceModel,
    gains: &PayloadGains,
    params: &SystemParams,
) -> LyapunovBreakdown {
    let j0 = &params.payload_inertia;
    let (e, v) = (&payload.position, &payload.velocity);
    let translational =
        0.5 * v.norm_squared() + 0.5 * gains.position * e.norm_squared() + gains.cross_position * e.dot(v);
    let j_ew = j0 * payload.angular_rate;
    let rotational = 0.5 * payload.angular_rate.dot(&j_ew)
        + gains.attitude * payload.psi
        + gains.cross_attitude * payload.attitude.dot(&j_ew);
    let links = links
        .iter()
        .map(|l| 0.5 * l.e_omega.norm_squared() + gains.link * l.psi + gains.cross_link * l.e_q.dot(&l.e_omega))
        .collect();
    let h = &estimator.gains;
    let mut estimation = parameter_error(&dist.payload_force.theta, &estimator.payload_force) / (2.0 * h.payload_force)
        + parameter_error(&dist.payload_moment.theta, &estimator.payload_moment) / (2.0 * h.payload_moment);
    for (c, est) in dist.quad_force.iter().zip(&estimator.quad_force) {
        estimation += parameter_error(&c.theta, est) / (2.0 * h.quad_force);
    }
    LyapunovBreakdown {
        translational,
        rotational,
        links,
        estimation,
    }
}

fn quad_form(p: &Matrix2<f64>, a: f64, b: f64) -> f64 {
    let z = nalgebra::Vector2::new(a, b);
    z.dot(&(p * z))
}

/// Quadratic lower and upper bounds of the tracking part of the Lyapunov
/// function, valid while `Ψ_R0 < psi_r0` and every `Ψ_q < psi_q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticBounds {
    pub lower: f64,
    pub upper: f64,
}

pub fn quadratic_bounds(
    payload: &PayloadErrors,
    links: &[LinkErrors],
    gains: &PayloadGains,
    params: &SystemParams,
    psi_r0: f64,
    psi_q: f64,
) -> QuadraticBounds {
    let eig = params.payload_inertia.symmetric_eigenvalues();
    let (lam_min, lam_max) = (eig.min(), eig.max());
    let (kx, cx) = (gains.position, gains.cross_position);
    let (kr, cr) = (gains.attitude, gains.cross_attitude);
    let (kq, cq) = (gains.link, gains.cross_link);
    let px_lo = 0.5 * Matrix2::new(kx, -cx, -cx, 1.0);
    let px_hi = 0.5 * Matrix2::new(kx, cx, cx, 1.0);
    // ½‖e‖² ≤ Ψ only supports k, not 2k, on the lower diagonal
    let pr_lo = 0.5 * Matrix2::new(kr, -cr * lam_max, -cr * lam_max, lam_min);
    let pr_hi = 0.5 * Matrix2::new(2.0 * kr / (2.0 - psi_r0), cr * lam_max, cr * lam_max, lam_max);
    let pq_lo = 0.5 * Matrix2::new(kq, -cq, -cq, 1.0);
    let pq_hi = 0.5 * Matrix2::new(2.0 * kq / (2.0 - psi_q), cq, cq, 1.0);

    let (ex, ev) = (payload.position.norm(), payload.velocity.norm());
    let (er, ew) = (payload.attitude.norm(), payload.angular_rate.norm());
    let mut lower = quad_form(&px_lo, ex, ev) + quad_form(&pr_lo, er, ew);
    let mut upper = quad_form(&px_hi, ex, ev) + quad_form(&pr_hi, er, ew);
    for l in links {
        let (eq, eo) = (l.e_q.norm(), l.e_omega.norm());
        lower += quad_form(&pq_lo, eq, eo);
        upper += quad_form(&pq_hi, eq, eo);
    }
    QuadraticBounds { lower, upper }
}

/// Everything needed to evaluate the tracking-error dynamics at one instant.
#[derive(Debug, Clone, Copy)]
pub struct ErrorSample<'a> {
    pub t: f64,
    pub state: &'a SystemState,
    pub reference: &'a PayloadReference,
    pub control: &'a SimplifiedOutput,
    /// True state derivative under the applied input.
    pub derivative: &'a StateDerivative,
    pub estimator: &'a EstimatorState,
}

/// Mismatch between the measured tracking-error dynamics and their modeled
/// part, together with the bound the analysis places on it. The bound holds
/// the link-misalignment terms plus the slack from the one-step-lagged
/// attachment accelerations.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorResiduals {
    pub translational: f64,
    pub translational_bound: f64,
    pub rotational: f64,
    pub rotational_bound: f64,
    pub links: Vec<f64>,
    pub link_bounds: Vec<f64>,
}

impl ErrorResiduals {
    /// Largest ratio of a residual to its bound, with `floor` added to every
    /// bound to absorb rounding.
    pub fn worst_ratio(&self, floor: f64) -> f64 {
        let mut worst = (self.translational / (self.translational_bound + floor))
            .max(self.rotational / (self.rotational_bound + floor));
        for (r, b) in self.links.iter().zip(&self.link_bounds) {
            worst = worst.max(r / (b + floor));
        }
        worst
    }
}

pub fn error_residuals(
    sample: &ErrorSample<'_>,
    dist: &DisturbanceModel,
    gains: &PayloadGains,
    params: &SystemParams,
) -> ErrorResiduals {
    let t = sample.t;
    let state = sample.state;
    let p = &state.payload;
    let r0 = &p.attitude;
    let j0 = &params.payload_inertia;
    let m0 = params.payload_mass;
    let est = sample.estimator;
    let reference = sample.reference;
    let ctrl = sample.control;
    let d = sample.derivative;
    let errors = &ctrl.errors;

    let theta_err = |truth: &DVector<f64>, estimate: &DVector<f64>| truth - estimate;
    let phi_x0 = dist.payload_force.regressor.matrix(t);
    let phi_r0 = dist.payload_moment.regressor.matrix(t);

    // measured error accelerations
    let e_x_ddot = d.accel - reference.accel;
    let omega_d = r0.transpose() * reference.attitude * reference.body_rate;
    let e_w_dot = d.angular_accel + p.body_rate.cross(&omega_d)
        - r0.transpose() * reference.attitude * reference.angular_accel;

    let mut force_comp = phi_x0 * theta_err(&dist.payload_force.theta, &est.payload_force);
    let mut moment_comp = phi_r0 * theta_err(&dist.payload_moment.theta, &est.payload_moment);
    let mut lag_force = 0.0;
    let mut lag_moment = 0.0;
    let mut y_x_bound = 0.0;
    let mut y_r_bound = 0.0;
    let mut links = Vec::with_capacity(params.n());
    let mut link_bounds = Vec::with_capacity(params.n());
    for (i, quad) in params.quads.iter().enumerate() {
        let qs = &state.quads[i];
        let q = &qs.link;
        let diag = &ctrl.links[i];
        let phi = dist.quad_force[i].regressor.matrix(t);
        let tilde = phi * theta_err(&dist.quad_force[i].theta, &est.quad_force[i]);
        let along = q * q.dot(&tilde);
        let rho_hat = hat(&quad.attachment);
        force_comp += along;
        moment_comp += rho_hat * r0.transpose() * along;

        let a_true = attachment_accel(state, params, i, &d.accel, &d.angular_accel);
        let lag = (diag.attach_accel - a_true).norm();
        lag_force += quad.mass * lag;
        lag_moment += rho_hat.norm() * quad.mass * lag;
        let mis = diag.mu_desired.norm() * diag.errors.e_q.norm();
        y_x_bound += mis;
        y_r_bound += rho_hat.norm() * mis;

        // −hat(q)² ė_ω written with the link kinematics
        let e = &diag.errors;
        let sp = &diag.setpoint;
        let q_hat = hat(q);
        let measured = d.quads[i].link_accel + q.dot(&sp.rate) * d.quads[i].link_velocity + q_hat * q_hat * sp.rate_dot;
        let modeled = -gains.link * e.e_q - gains.link_rate * e.e_omega
            - q_hat * (-(q_hat * q_hat) * tilde) / (quad.mass * quad.link_length);
        links.push((measured - modeled).norm());
        link_bounds.push(lag / quad.link_length);
    }

    let modeled_x = -gains.position * errors.position - gains.velocity * errors.velocity + force_comp / m0;
    let j_ew = j0 * errors.angular_rate;
    let d_vec = (2.0 * j0 - Matrix3::identity() * j0.trace()) * omega_d;
    let modeled_r = (j_ew + d_vec).cross(&errors.angular_rate) - gains.attitude * errors.attitude
        - gains.angular_rate * errors.angular_rate
        + moment_comp;
    ErrorResiduals {
        translational: (e_x_ddot - modeled_x).norm(),
        translational_bound: (y_x_bound + lag_force) / m0,
        rotational: (j0 * e_w_dot - modeled_r).norm(),
        rotational_bound: y_r_bound + lag_moment,
        links,
        link_bounds,
    }
}

/// Constants the gain conditions depend on. `b` stands for the
/// trajectory-dependent bounds, typically taken from logged maxima.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainConditionBounds {
    pub psi_r0: f64,
    pub psi_q: f64,
    pub e_x_max: f64,
    pub b: f64,
}

/// The 3 × 3 matrices whose positive definiteness makes the Lyapunov rate
/// negative, one per link.
pub fn gain_condition_matrices(
    gains: &PayloadGains,
    params: &SystemParams,
    bounds: &GainConditionBounds,
) -> Vec<Matrix3<f64>> {
    let n = params.n() as f64;
    let m0 = params.payload_mass;
    let p = build_p(params);
    let lam_ppt = (&p * p.transpose()).symmetric_eigenvalues().min();
    let gamma = 1.0 / (m0 * lam_ppt.sqrt());
    let beta = m0 * gamma;
    let lam_max = params.payload_inertia.symmetric_eigenvalues().max();
    let alpha0 = (bounds.psi_r0 * (2.0 - bounds.psi_r0)).sqrt();
    let alpha = (bounds.psi_q * (2.0 - bounds.psi_q)).sqrt();
    let b = bounds.b;
    let g = gains;
    let lam_min2 = |m: Matrix2<f64>| m.symmetric_eigenvalues().min();

    params
        .quads
        .iter()
        .map(|quad| {
            let delta = m0 * hat(&quad.attachment).norm() / lam_ppt.sqrt();
            let sigma = delta / m0;
            let ab = n * alpha * beta;
            let as_ = n * alpha * sigma;
            let wx = Matrix2::new(
                g.cross_position * g.position * (1.0 - ab),
                -0.5 * g.cross_position * g.velocity * (1.0 + ab),
                -0.5 * g.cross_position * g.velocity * (1.0 + ab),
                g.velocity * (1.0 - ab) - g.cross_position,
            ) / n;
            let off_r = -0.5 * g.cross_attitude * (g.angular_rate + b + as_);
            let wr = Matrix2::new(
                g.cross_attitude * g.attitude * (1.0 - as_),
                off_r,
                off_r,
                g.angular_rate * (1.0 - as_) - 2.0 * g.cross_attitude * lam_max,
            ) / n;
            let wq = Matrix2::new(
                g.cross_link * g.link,
                -0.5 * g.cross_link * g.link_rate,
                -0.5 * g.cross_link * g.link_rate,
                g.link_rate - g.cross_link,
            );
            let w_xr = alpha
                * Matrix2::new(
                    gamma * g.cross_position * g.attitude + delta * g.cross_attitude * g.position,
                    gamma * g.cross_position * g.angular_rate + delta * g.position,
                    gamma * g.attitude + delta * g.cross_attitude * g.velocity,
                    gamma * g.angular_rate + delta * g.velocity,
                );
            let w_xq = Matrix2::new(g.cross_position * b, 0.0, beta * g.position * bounds.e_x_max + b, 0.0);
            let w_rq = Matrix2::new(g.cross_attitude * b, 0.0, alpha0 * sigma * g.attitude + b, 0.0);
            let (nxr, nxq, nrq) = (w_xr.norm(), w_xq.norm(), w_rq.norm());
            Matrix3::new(
                lam_min2(wx),
                -0.5 * nxr,
                -0.5 * nxq,
                -0.5 * nxr,
                lam_min2(wr),
                -0.5 * nrq,
                -0.5 * nxq,
                -0.5 * nrq,
                lam_min2(wq),
            )
        })
        .collect()
}

/// Smallest eigenvalue over all gain-condition matrices; positive when the
/// conditions hold.
pub fn gain_condition_margin(gains: &PayloadGains, params: &SystemParams, bounds: &GainConditionBounds) -> f64 {
    gain_condition_matrices(gains, params, bounds)
        .iter()
        .map(|w| w.symmetric_eigenvalues().min())
        .fold(f64::INFINITY, f64::min)
}

/// `‖Y_x‖` for the current links and desired tensions, and its bound.
pub fn link_misalignment_force(
    links: &[Vec3],
    mu_desired: &[Vec3],
    link_errors: &[LinkErrors],
    payload_mass: f64,
) -> (f64, f64) {
    let mut y = Vec3::zeros();
    let mut bound = 0.0;
    for ((q, mu), e) in links.iter().zip(mu_desired).zip(link_errors) {
        y += (q * q.transpose() - Matrix3::identity()) * mu;
        bound += mu.norm() * e.e_q.norm();
    }
    (y.norm() / payload_mass, bound / payload_mass)
}
