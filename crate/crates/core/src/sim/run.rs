//! Closed-loop simulation driver.

use crate::adaptive::{self, EstimatorState};
use crate::control::{ControlOutput, Controller, ModelMode};
use crate::dynamics::{eom, QuadInput, StateDerivative};
use crate::error::{Error, Result};
use crate::geom::{e3, Mat3, Vec3};
use crate::integrator;
use crate::model::{ManifoldResiduals, Regressors, SystemState};
use crate::sim::config::Scenario;
use crate::trajectory::{PayloadReference, ReferenceTrajectory};
use crate::verification::{lyapunov_value, LyapunovBreakdown};

/// Logged quantities at one grid time, evaluated before the step is taken.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub position: Vec3,
    pub position_error: Vec3,
    /// `½ tr(I − R_dᵀR)`.
    pub psi0_trace: f64,
    /// `½ ‖R − R_d‖²_F`, twice the trace form.
    pub psi0_frob: f64,
    pub link_psi: Vec<f64>,
    /// Quadrotor attitude errors; zero for the simplified model.
    pub quad_psi: Vec<f64>,
    /// `‖μᵢ‖`.
    pub tension: Vec<f64>,
    pub thrust: Vec<f64>,
    pub moment: Vec<Vec3>,
    /// Norms of the payload force, payload moment and largest quadrotor
    /// force estimates.
    pub estimate_norms: [f64; 3],
    /// Largest `‖−fᵢRᵢe₃ − uᵢ‖` over the quadrotors; zero when simplified.
    pub realization_gap: f64,
    pub lyapunov: f64,
    pub manifold: ManifoldResiduals,
}

/// Everything produced by one call to [`Simulation::step`].
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub record: StepRecord,
    pub reference: PayloadReference,
    /// `None` when feedback is disabled.
    pub control: Option<ControlOutput>,
    /// True derivative at the start of the step under the applied inputs.
    pub derivative: StateDerivative,
    /// Estimates used by the controller during the step.
    pub estimator: EstimatorState,
    pub lyapunov: Option<LyapunovBreakdown>,
    pub state: SystemState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub n: usize,
    pub dt: f64,
    pub records: Vec<StepRecord>,
}

impl RunLog {
    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }

    /// Worst manifold residuals over the whole run.
    pub fn worst_manifold(&self) -> ManifoldResiduals {
        self.records
            .iter()
            .map(|r| r.manifold)
            .fold(ManifoldResiduals::default(), ManifoldResiduals::max)
    }

    /// Records with `t ≥ t_from`.
    pub fn window(&self, t_from: f64) -> &[StepRecord] {
        let start = self.records.partition_point(|r| r.t < t_from - 1e-9);
        &self.records[start..]
    }
}

/// Stepwise closed-loop simulation of a [`Scenario`].
#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: Scenario,
    state: SystemState,
    step: usize,
    controller: Controller,
    estimator: EstimatorState,
    regressors: Regressors,
    held: Option<ControlOutput>,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let control_dt = scenario.integrator.dt * scenario.decimation as f64;
        let controller = Controller::new(
            scenario.mode,
            scenario.payload_gains,
            scenario.attitude_gains,
            scenario.robust_bound(),
            &scenario.params,
            control_dt,
        )?;
        let estimator = EstimatorState::zero(
            &scenario.params,
            scenario.disturbance.n_theta(),
            scenario.disturbance.bound_theta,
            scenario.adaptive_gains,
        );
        Ok(Simulation {
            state: scenario.initial.clone(),
            step: 0,
            controller,
            estimator,
            regressors: scenario.disturbance.regressors(),
            held: None,
            scenario,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn estimator(&self) -> &EstimatorState {
        &self.estimator
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.scenario.integrator.dt
    }

    pub fn finished(&self) -> bool {
        self.step >= self.scenario.steps()
    }

    fn zero_inputs(&self) -> Vec<QuadInput> {
        let n = self.scenario.params.n();
        match self.scenario.mode {
            ModelMode::Simplified => vec![QuadInput::zero_force(); n],
            ModelMode::Full => vec![
                QuadInput::ThrustMoment {
                    thrust: 0.0,
                    moment: Vec3::zeros(),
                };
                n
            ],
        }
    }

    fn numerical(&self, reason: impl Into<String>) -> Error {
        Error::Numerical {
            step: self.step,
            reason: reason.into(),
        }
    }

    /// Advances one integration step and returns what was applied.
    pub fn step(&mut self) -> Result<StepInfo> {
        let sc = &self.scenario;
        let params = &sc.params;
        let dist = &sc.disturbance;
        let t = self.time();
        let reference = sc.reference.payload(t);

        let control = if sc.control {
            if self.step % sc.decimation == 0 || self.held.is_none() {
                let out = self
                    .controller
                    .compute(&self.state, &sc.reference, t, &self.estimator, &self.regressors, params)
                    .map_err(|e| self.numerical(e.to_string()))?;
                self.held = Some(out);
            }
            self.held.clone()
        } else {
            None
        };
        let inputs = control.as_ref().map_or_else(|| self.zero_inputs(), |c| c.inputs.clone());
        let derivative = eom(&self.state, &inputs, dist, t, params)?;

        let lyapunov = control.as_ref().map(|c| {
            let links: Vec<_> = c.payload.links.iter().map(|l| l.errors).collect();
            lyapunov_value(&c.payload.errors, &links, &self.estimator, dist, &sc.payload_gains, params)
        });
        let record = self.record(t, &reference, control.as_ref(), &inputs, lyapunov.as_ref());

        let estimator = self.estimator.clone();
        if let Some(c) = &control {
            self.controller.payload.accept_accelerations(derivative.accel, derivative.angular_accel);
            if sc.adaptation {
                let links: Vec<_> = c.payload.links.iter().map(|l| l.errors).collect();
                let signals = adaptive::regressor_signals(
                    &self.state,
                    &c.payload.errors,
                    &links,
                    &sc.payload_gains,
                    &sc.adaptive_gains,
                    params,
                    &self.regressors,
                    t,
                );
                self.estimator = adaptive::step(&self.estimator, &signals, sc.integrator.dt)?;
            }
        }

        let first = derivative.clone();
        let mut reused = Some(first);
        let next = integrator::step(
            &self.state,
            |s, tau| match reused.take() {
                Some(d) => Ok(d),
                None => eom(s, &inputs, dist, tau, params),
            },
            t,
            &sc.integrator,
        )
        .map_err(|e| self.numerical(e.to_string()))?;
        if !next.is_finite() {
            return Err(self.numerical("non-finite state"));
        }
        let state = std::mem::replace(&mut self.state, next);
        self.step += 1;
        Ok(StepInfo {
            record,
            reference,
            control,
            derivative,
            estimator,
            lyapunov,
            state,
        })
    }

    fn record(
        &self,
        t: f64,
        reference: &PayloadReference,
        control: Option<&ControlOutput>,
        inputs: &[QuadInput],
        lyapunov: Option<&LyapunovBreakdown>,
    ) -> StepRecord {
        let s = &self.state;
        let n = self.scenario.params.n();
        let rel = reference.attitude.transpose() * s.payload.attitude;
        let psi0_trace = 0.5 * (Mat3::identity() - rel).trace();
        let psi0_frob = 0.5 * (s.payload.attitude - reference.attitude).norm_squared();

        let (link_psi, tension, quad_psi, gap) = match control {
            Some(c) => {
                let quad_psi = c
                    .attitude
                    .iter()
                    .map(|a| a.as_ref().map_or(0.0, |(_, m)| m.errors.psi))
                    .collect();
                let gap = match self.scenario.mode {
                    ModelMode::Simplified => 0.0,
                    ModelMode::Full => inputs
                        .iter()
                        .zip(&s.quads)
                        .zip(&c.ideal)
                        .map(|((inp, q), u)| (inp.force(&q.attitude) - u).norm())
                        .fold(0.0, f64::max),
                };
                (
                    c.payload.links.iter().map(|l| l.errors.psi).collect(),
                    c.payload.links.iter().map(|l| l.tension()).collect(),
                    quad_psi,
                    gap,
                )
            }
            None => (
                s.quads.iter().map(|q| 1.0 - q.link.dot(&e3())).collect(),
                vec![0.0; n],
                vec![0.0; n],
                0.0,
            ),
        };
        let (thrust, moment) = match control {
            Some(c) => (c.thrust.clone(), c.moment.clone()),
            None => (vec![0.0; n], vec![Vec3::zeros(); n]),
        };
        let est = &self.estimator;
        StepRecord {
            t,
            position: s.payload.position,
            position_error: s.payload.position - reference.position,
            psi0_trace,
            psi0_frob,
            link_psi,
            quad_psi,
            tension,
            thrust,
            moment,
            estimate_norms: [
                est.payload_force.norm(),
                est.payload_moment.norm(),
                est.quad_force.iter().map(|q| q.norm()).fold(0.0, f64::max),
            ],
            realization_gap: gap,
            lyapunov: lyapunov.map_or(0.0, LyapunovBreakdown::total),
            manifold: s.residuals(),
        }
    }

    /// Runs to `t_final` and records the final state as the last sample.
    pub fn run_to_end(&mut self) -> Result<RunLog> {
        let mut records = Vec::with_capacity(self.scenario.steps() + 1);
        while !self.finished() {
            records.push(self.step()?.record);
        }
        Ok(RunLog {
            n: self.scenario.params.n(),
            dt: self.scenario.integrator.dt,
            records,
        })
    }
}

pub fn run(scenario: &Scenario) -> Result<RunLog> {
    Simulation::new(scenario.clone())?.run_to_end()
}
