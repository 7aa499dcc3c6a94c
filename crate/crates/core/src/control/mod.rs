//! Closed-loop controllers for the simplified and full models.

pub mod attitude;
pub mod payload;

pub use attitude::{AttitudeCommand, AttitudeCommandFilter, AttitudeGains, MomentCommand};
pub use payload::{PayloadController, PayloadErrors, PayloadGains, SimplifiedOutput, Wrench};

use crate::adaptive::EstimatorState;
use crate::dynamics::QuadInput;
use crate::error::Result;
use crate::geom::Vec3;
use crate::model::{Regressors, SystemParams, SystemState};
use crate::trajectory::ReferenceTrajectory;

/// Which dynamic model the controller drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelMode {
    /// Each quadrotor applies its ideal thrust vector directly.
    #[default]
    Simplified,
    /// Thrust follows the quadrotor attitude, which is controlled separately.
    Full,
}

/// Inputs plus diagnostics of one controller evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub inputs: Vec<QuadInput>,
    /// Ideal thrust vector per quadrotor.
    pub ideal: Vec<Vec3>,
    /// Thrust magnitude per quadrotor; for the simplified model the norm of
    /// the ideal thrust.
    pub thrust: Vec<f64>,
    /// Moment per quadrotor; zero for the simplified model.
    pub moment: Vec<Vec3>,
    pub payload: SimplifiedOutput,
    /// Attitude-loop details, full model only.
    pub attitude: Vec<Option<(AttitudeCommand, MomentCommand)>>,
}

/// Payload controller plus one attitude loop per quadrotor.
#[derive(Debug, Clone)]
pub struct Controller {
    pub mode: ModelMode,
    pub payload: PayloadController,
    pub attitude_gains: AttitudeGains,
    /// Magnitude of the optional robust term of the attitude loops.
    pub robust_bound: Option<f64>,
    commands: Vec<AttitudeCommandFilter>,
}

impl Controller {
    pub fn new(
        mode: ModelMode,
        payload_gains: PayloadGains,
        attitude_gains: AttitudeGains,
        robust_bound: Option<f64>,
        params: &SystemParams,
        dt: f64,
    ) -> Result<Self> {
        attitude_gains.validate()?;
        Ok(Controller {
            mode,
            payload: PayloadController::new(payload_gains, params, dt)?,
            attitude_gains,
            robust_bound,
            commands: (0..params.n()).map(|_| AttitudeCommandFilter::new(dt)).collect(),
        })
    }

    pub fn compute(
        &mut self,
        state: &SystemState,
        reference: &dyn ReferenceTrajectory,
        t: f64,
        estimator: &EstimatorState,
        regressors: &Regressors,
        params: &SystemParams,
    ) -> Result<ControlOutput> {
        let payload_ref = reference.payload(t);
        let out = self.payload.compute(state, &payload_ref, t, estimator, regressors, params)?;
        let n = params.n();
        let ideal = out.forces.clone();
        match self.mode {
            ModelMode::Simplified => Ok(ControlOutput {
                inputs: ideal.iter().map(|u| QuadInput::Force(*u)).collect(),
                thrust: ideal.iter().map(|u| u.norm()).collect(),
                moment: vec![Vec3::zeros(); n],
                attitude: vec![None; n],
                ideal,
                payload: out,
            }),
            ModelMode::Full => {
                let mut inputs = Vec::with_capacity(n);
                let mut thrust = Vec::with_capacity(n);
                let mut moment = Vec::with_capacity(n);
                let mut attitude = Vec::with_capacity(n);
                for (i, quad) in params.quads.iter().enumerate() {
                    let qs = &state.quads[i];
                    let cmd = self.commands[i].update(&ideal[i], &reference.heading(i, t))?;
                    let m = attitude::moment_command(
                        &qs.attitude,
                        &qs.body_rate,
                        &cmd,
                        &quad.inertia,
                        &self.attitude_gains,
                        self.robust_bound,
                    )?;
                    let f = attitude::thrust_magnitude(&ideal[i], &qs.attitude);
                    inputs.push(QuadInput::ThrustMoment { thrust: f, moment: m.moment });
                    thrust.push(f);
                    moment.push(m.moment);
                    attitude.push(Some((cmd, m)));
                }
                Ok(ControlOutput {
                    inputs,
                    ideal,
                    thrust,
                    moment,
                    payload: out,
                    attitude,
                })
            }
        }
    }
}
