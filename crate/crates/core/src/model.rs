//! System parameters, configuration state, disturbance regressors and the
//! attachment-geometry matrix.

use nalgebra::{DMatrix, DVector, Dyn, Matrix6, OMatrix, U3};

use crate::error::{Error, Result};
use crate::geom::{self, hat, Mat3, Vec3};

/// Relative singular-value cutoff used by [`check_rank`].
pub const RANK_TOL: f64 = 1e-9;

pub const DEFAULT_GRAVITY: f64 = 9.81;

/// Mass properties and link geometry of one quadrotor.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadParams {
    pub mass: f64,
    pub inertia: Mat3,
    /// Link attachment point on the payload, payload body frame.
    pub attachment: Vec3,
    pub link_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub payload_mass: f64,
    pub payload_inertia: Mat3,
    pub quads: Vec<QuadParams>,
    pub gravity: f64,
}

impl SystemParams {
    pub fn n(&self) -> usize {
        self.quads.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.payload_mass + self.quads.iter().map(|q| q.mass).sum::<f64>()
    }

    /// Checks every physical invariant, including the rank condition on the
    /// attachment geometry. Error fields use the config-file path.
    pub fn validate(&self) -> Result<()> {
        if !(self.payload_mass > 0.0) {
            return Err(Error::validation("payload.mass", "must be positive"));
        }
        check_inertia(&self.payload_inertia, "payload.inertia")?;
        if !(self.gravity.is_finite() && self.gravity >= 0.0) {
            return Err(Error::validation("sim.gravity", "must be finite and non-negative"));
        }
        for (i, quad) in self.quads.iter().enumerate() {
            let path = format!("quadrotor.{}", i + 1);
            if !(quad.mass > 0.0) {
                return Err(Error::validation(format!("{path}.mass"), "must be positive"));
            }
            check_inertia(&quad.inertia, &format!("{path}.inertia"))?;
            if !(quad.link_length > 0.0) {
                return Err(Error::validation(format!("{path}.link_length"), "must be positive"));
            }
            if !quad.attachment.iter().all(|c| c.is_finite()) {
                return Err(Error::validation(format!("{path}.attachment"), "must be finite"));
            }
        }
        if self.n() < 3 {
            return Err(Error::validation(
                "quadrotor",
                format!(
                    "rank condition on the attachment matrix needs at least 3 quadrotors, got {}",
                    self.n()
                ),
            ));
        }
        if !check_rank(&build_p(self)) {
            return Err(Error::validation(
                "quadrotor.*.attachment",
                "rank condition violated: attachment points cannot generate every payload wrench",
            ));
        }
        Ok(())
    }
}

fn check_inertia(j: &Mat3, field: &str) -> Result<()> {
    if (j - j.transpose()).norm() > 1e-12 * (1.0 + j.norm()) {
        return Err(Error::validation(field, "must be symmetric"));
    }
    if j.cholesky().is_none() {
        return Err(Error::validation(field, "must be positive definite"));
    }
    Ok(())
}

/// Payload configuration and velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct PayloadState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: Mat3,
    /// Body-frame angular velocity.
    pub body_rate: Vec3,
}

/// One link direction plus the attached quadrotor's attitude.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadState {
    /// Unit vector from the quadrotor toward its payload attachment point.
    pub link: Vec3,
    /// Link angular velocity, tangent to `link`.
    pub link_rate: Vec3,
    pub attitude: Mat3,
    pub body_rate: Vec3,
}

impl QuadState {
    pub fn hanging() -> Self {
        QuadState {
            link: geom::e3(),
            link_rate: Vec3::zeros(),
            attitude: Mat3::identity(),
            body_rate: Vec3::zeros(),
        }
    }
}

/// A point on `R³ × SO(3) × (S² × SO(3))ⁿ` together with its velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub payload: PayloadState,
    pub quads: Vec<QuadState>,
}

/// Worst-case constraint residuals over all bodies of a state.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ManifoldResiduals {
    pub orthogonality: f64,
    pub determinant: f64,
    pub unit_norm: f64,
    pub tangency: f64,
}

impl ManifoldResiduals {
    pub fn max(self, other: Self) -> Self {
        ManifoldResiduals {
            orthogonality: self.orthogonality.max(other.orthogonality),
            determinant: self.determinant.max(other.determinant),
            unit_norm: self.unit_norm.max(other.unit_norm),
            tangency: self.tangency.max(other.tangency),
        }
    }
}

impl SystemState {
    /// Payload at `position` with identity attitude and every link hanging
    /// straight down, all at rest.
    pub fn at_rest(position: Vec3, n: usize) -> Self {
        SystemState {
            payload: PayloadState {
                position,
                velocity: Vec3::zeros(),
                attitude: Mat3::identity(),
                body_rate: Vec3::zeros(),
            },
            quads: vec![QuadState::hanging(); n],
        }
    }

    pub fn residuals(&self) -> ManifoldResiduals {
        let mut res = ManifoldResiduals {
            orthogonality: geom::orthogonality_error(&self.payload.attitude),
            determinant: (self.payload.attitude.determinant() - 1.0).abs(),
            ..Default::default()
        };
        for quad in &self.quads {
            res.orthogonality = res.orthogonality.max(geom::orthogonality_error(&quad.attitude));
            res.determinant = res.determinant.max((quad.attitude.determinant() - 1.0).abs());
            res.unit_norm = res.unit_norm.max((quad.link.norm() - 1.0).abs());
            res.tangency = res.tangency.max(quad.link.dot(&quad.link_rate).abs());
        }
        res
    }

    /// Rejects states that are off the configuration manifold.
    pub fn check(&self) -> Result<()> {
        let res = self.residuals();
        if res.orthogonality > 1e-9 || res.determinant > 1e-9 {
            return Err(Error::validation("initial.attitude", "not a rotation matrix"));
        }
        if res.unit_norm > 1e-12 {
            return Err(Error::validation("initial.link", "link directions must be unit vectors"));
        }
        if res.tangency > 1e-9 {
            return Err(Error::ConstraintViolation(res.tangency));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        let p = &self.payload;
        let finite = |v: &[f64]| v.iter().all(|c| c.is_finite());
        finite(p.position.as_slice())
            && finite(p.velocity.as_slice())
            && finite(p.attitude.as_slice())
            && finite(p.body_rate.as_slice())
            && self.quads.iter().all(|q| {
                finite(q.link.as_slice())
                    && finite(q.link_rate.as_slice())
                    && finite(q.attitude.as_slice())
                    && finite(q.body_rate.as_slice())
            })
    }
}

/// `3 × n_θ` regressor matrix.
pub type RegressorMatrix = OMatrix<f64, U3, Dyn>;

/// Named functional forms of the disturbance regressor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regressor {
    /// `Φ = I₃`.
    Constant,
    /// `Φ = [I₃, sin(ν t) I₃]` with `ν` in rad/s.
    TimeHarmonic { frequency: f64 },
}

impl Regressor {
    pub fn arity(&self) -> usize {
        match self {
            Regressor::Constant => 3,
            Regressor::TimeHarmonic { .. } => 6,
        }
    }

    pub fn matrix(&self, t: f64) -> RegressorMatrix {
        let mut phi = RegressorMatrix::zeros(self.arity());
        phi.fixed_view_mut::<3, 3>(0, 0).fill_with_identity();
        if let Regressor::TimeHarmonic { frequency } = *self {
            phi.fixed_view_mut::<3, 3>(0, 3)
                .copy_from(&(Mat3::identity() * (frequency * t).sin()));
        }
        phi
    }
}

/// Regressor plus the true (hidden from the controller) parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceChannel {
    pub regressor: Regressor,
    pub theta: DVector<f64>,
}

impl DisturbanceChannel {
    pub fn constant(value: Vec3) -> Self {
        DisturbanceChannel {
            regressor: Regressor::Constant,
            theta: DVector::from_column_slice(value.as_slice()),
        }
    }

    pub fn zero(regressor: Regressor) -> Self {
        DisturbanceChannel {
            regressor,
            theta: DVector::zeros(regressor.arity()),
        }
    }

    pub fn eval(&self, t: f64) -> Vec3 {
        self.regressor.matrix(t) * &self.theta
    }
}

/// `Φ(t)·θ` for the given regressor form.
pub fn eval_disturbance(regressor: &Regressor, t: f64, theta: &DVector<f64>) -> Result<Vec3> {
    if theta.len() != regressor.arity() {
        return Err(Error::ArityMismatch {
            expected: regressor.arity(),
            got: theta.len(),
        });
    }
    Ok(regressor.matrix(t) * theta)
}

/// Disturbance forces (inertial frame) and moments (body frames) acting on the
/// payload and every quadrotor.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceModel {
    pub payload_force: DisturbanceChannel,
    pub payload_moment: DisturbanceChannel,
    pub quad_force: Vec<DisturbanceChannel>,
    pub quad_moment: Vec<DisturbanceChannel>,
    /// Known bound on every regressor norm.
    pub bound_phi: f64,
    /// Known bound on every parameter norm; also the estimator ball radius.
    pub bound_theta: f64,
}

impl DisturbanceModel {
    pub fn none(n: usize) -> Self {
        let zero = DisturbanceChannel::zero(Regressor::Constant);
        DisturbanceModel {
            payload_force: zero.clone(),
            payload_moment: zero.clone(),
            quad_force: vec![zero.clone(); n],
            quad_moment: vec![zero; n],
            bound_phi: 2.0,
            bound_theta: 5.0,
        }
    }

    /// Number of parameters per channel, shared by all channels.
    pub fn n_theta(&self) -> usize {
        self.payload_force.regressor.arity()
    }

    fn channels(&self) -> impl Iterator<Item = (String, &DisturbanceChannel)> {
        [
            ("disturbance.payload_force".to_string(), &self.payload_force),
            ("disturbance.payload_moment".to_string(), &self.payload_moment),
        ]
        .into_iter()
        .chain(
            self.quad_force
                .iter()
                .enumerate()
                .map(|(i, c)| (format!("quadrotor.{}.disturbance_force", i + 1), c)),
        )
        .chain(
            self.quad_moment
                .iter()
                .enumerate()
                .map(|(i, c)| (format!("quadrotor.{}.disturbance_moment", i + 1), c)),
        )
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.quad_force.len() != n || self.quad_moment.len() != n {
            return Err(Error::validation("disturbance", "one force and one moment channel per quadrotor"));
        }
        if !(self.bound_theta > 0.0) || !(self.bound_phi > 0.0) {
            return Err(Error::validation("disturbance.bound_theta", "bounds must be positive"));
        }
        let n_theta = self.n_theta();
        for (path, channel) in self.channels() {
            if channel.regressor.arity() != n_theta {
                return Err(Error::validation(
                    format!("{path}.regressor"),
                    format!("all channels must share n_theta = {n_theta}"),
                ));
            }
            if channel.theta.len() != n_theta {
                return Err(Error::validation(
                    format!("{path}.theta"),
                    format!("expected {n_theta} parameters, got {}", channel.theta.len()),
                ));
            }
            if channel.theta.norm() >= self.bound_theta {
                return Err(Error::validation(
                    format!("{path}.theta"),
                    format!("norm {:.4} must be below bound_theta {}", channel.theta.norm(), self.bound_theta),
                ));
            }
            // the spectral norm of [I, sI] is sqrt(1 + s^2)
            let phi_norm = match channel.regressor {
                Regressor::Constant => 1.0,
                Regressor::TimeHarmonic { .. } => std::f64::consts::SQRT_2,
            };
            if phi_norm >= self.bound_phi {
                return Err(Error::validation("disturbance.bound_phi", "regressor norm exceeds bound_phi"));
            }
        }
        Ok(())
    }
}

/// The regressor forms known to the controller, without the true parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressors {
    pub payload_force: Regressor,
    pub payload_moment: Regressor,
    pub quad_force: Vec<Regressor>,
}

impl DisturbanceModel {
    pub fn regressors(&self) -> Regressors {
        Regressors {
            payload_force: self.payload_force.regressor,
            payload_moment: self.payload_moment.regressor,
            quad_force: self.quad_force.iter().map(|c| c.regressor).collect(),
        }
    }

    /// Worst-case moment disturbance norm implied by the bounds.
    pub fn moment_bound(&self) -> f64 {
        self.bound_phi * self.bound_theta
    }
}

/// Attachment matrix `[I₃ … I₃; hat(ρ₁) … hat(ρₙ)]`, 6 × 3n.
pub fn build_p(params: &SystemParams) -> DMatrix<f64> {
    let n = params.n();
    let mut p = DMatrix::zeros(6, 3 * n);
    for (i, quad) in params.quads.iter().enumerate() {
        p.fixed_view_mut::<3, 3>(0, 3 * i).fill_with_identity();
        p.fixed_view_mut::<3, 3>(3, 3 * i).copy_from(&hat(&quad.attachment));
    }
    p
}

/// True when `P Pᵀ` is numerically invertible, i.e. its smallest eigenvalue
/// exceeds [`RANK_TOL`] times its largest.
pub fn check_rank(p: &DMatrix<f64>) -> bool {
    if p.nrows() != 6 {
        return false;
    }
    let ppt: Matrix6<f64> = Matrix6::from_iterator((p * p.transpose()).iter().copied());
    let eig = ppt.symmetric_eigen().eigenvalues;
    let max = eig.max();
    max > 0.0 && eig.min() > RANK_TOL * max
}
