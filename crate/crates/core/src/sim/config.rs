//! Scenario files.
//!
//! A scenario is a TOML document with the sections `[sim]`, `[payload]`,
//! `[quadrotor.N]` (N = 1, 2, …), `[disturbance]`, `[gains]` and
//! `[trajectory]`. Inertias are 9-element row-major lists; all units are SI.
//! Missing required keys are reported with their dotted path.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use serde::Deserialize;

use crate::adaptive::AdaptiveGains;
use crate::control::{AttitudeGains, ModelMode, PayloadGains};
use crate::error::{Error, Result};
use crate::geom::{e1, is_rotation, Mat3, Vec3};
use crate::integrator::{IntegratorConfig, Scheme};
use crate::model::{
    DisturbanceChannel, DisturbanceModel, PayloadState, QuadParams, QuadState, Regressor, SystemParams,
    SystemState, DEFAULT_GRAVITY,
};
use crate::presets;
use crate::trajectory::{PayloadReference, ReferenceTrajectory, Trajectory};

/// Largest step accepted for the full model; the sliding-mode attitude loop
/// chatters badly beyond it.
pub const FULL_MODEL_MAX_DT: f64 = 1e-2;

/// Bundled scenario files, by name.
pub const PRESETS: &[(&str, &str)] = &[("figure8", include_str!("../../scenarios/figure8.toml"))];

/// Trajectory plus the heading reference of the quadrotors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub trajectory: Trajectory,
    pub heading: Vec3,
}

impl ReferenceTrajectory for Reference {
    fn payload(&self, t: f64) -> PayloadReference {
        self.trajectory.payload(t)
    }

    fn heading(&self, _quad: usize, _t: f64) -> Vec3 {
        self.heading
    }
}

/// A validated, ready-to-run simulation setup.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: SystemParams,
    pub disturbance: DisturbanceModel,
    pub initial: SystemState,
    pub payload_gains: PayloadGains,
    pub attitude_gains: AttitudeGains,
    pub adaptive_gains: AdaptiveGains,
    pub reference: Reference,
    pub integrator: IntegratorConfig,
    pub t_final: f64,
    pub mode: ModelMode,
    /// Controller runs every `decimation` integration steps.
    pub decimation: usize,
    /// Adds the switching term against quadrotor moment disturbances.
    pub robust_attitude: bool,
    /// Adaptive laws on or off; off keeps the initial estimates.
    pub adaptation: bool,
    /// Feedback on or off; off applies zero thrust and moment (open loop).
    pub control: bool,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.disturbance.validate(self.params.n())?;
        self.payload_gains.validate()?;
        self.attitude_gains.validate()?;
        self.adaptive_gains.validate()?;
        self.integrator.validate()?;
        if self.initial.quads.len() != self.params.n() {
            return Err(Error::validation("quadrotor", "initial state and parameters disagree on n"));
        }
        self.initial.check()?;
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::validation("sim.t_final", "must be positive"));
        }
        if self.decimation == 0 {
            return Err(Error::validation("sim.decimation", "must be at least 1"));
        }
        if self.mode == ModelMode::Full && self.integrator.dt > FULL_MODEL_MAX_DT {
            return Err(Error::validation(
                "sim.dt",
                format!("must not exceed {FULL_MODEL_MAX_DT} s for the full model"),
            ));
        }
        Ok(())
    }

    /// Number of integration steps to reach `t_final`.
    pub fn steps(&self) -> usize {
        (self.t_final / self.integrator.dt).round() as usize
    }

    /// Worst-case quadrotor moment disturbance, the magnitude of the robust
    /// attitude term when enabled.
    pub fn robust_bound(&self) -> Option<f64> {
        self.robust_attitude.then(|| self.disturbance.moment_bound())
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    dt: Option<f64>,
    t_final: Option<f64>,
    model: Option<String>,
    integrator: Option<String>,
    gravity: Option<f64>,
    decimation: Option<usize>,
    robust_attitude: Option<bool>,
    adaptation: Option<bool>,
    control: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPayload {
    mass: Option<f64>,
    inertia: Option<Vec<f64>>,
    position: Option<Vec<f64>>,
    velocity: Option<Vec<f64>>,
    attitude: Option<Vec<f64>>,
    body_rate: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuad {
    mass: Option<f64>,
    inertia: Option<Vec<f64>>,
    attachment: Option<Vec<f64>>,
    link_length: Option<f64>,
    disturbance_force: Option<Vec<f64>>,
    disturbance_moment: Option<Vec<f64>>,
    link: Option<Vec<f64>>,
    link_rate: Option<Vec<f64>>,
    attitude: Option<Vec<f64>>,
    body_rate: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDisturbance {
    regressor: Option<String>,
    frequency: Option<f64>,
    bound_phi: Option<f64>,
    bound_theta: Option<f64>,
    payload_force: Option<Vec<f64>>,
    payload_moment: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGains {
    k_x0: Option<f64>,
    k_v0: Option<f64>,
    k_r0: Option<f64>,
    k_w0: Option<f64>,
    k_q: Option<f64>,
    k_w: Option<f64>,
    c_x: Option<f64>,
    c_r: Option<f64>,
    c_q: Option<f64>,
    h_x0: Option<f64>,
    h_r0: Option<f64>,
    h_xi: Option<f64>,
    k_r: Option<f64>,
    l_r: Option<f64>,
    k_s: Option<f64>,
    l_s: Option<f64>,
    r: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrajectory {
    kind: Option<String>,
    amplitude: Option<Vec<f64>>,
    /// Periods of the two sinusoids, s.
    period: Option<Vec<f64>>,
    altitude: Option<f64>,
    position: Option<Vec<f64>>,
    heading: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    sim: RawSim,
    payload: Option<RawPayload>,
    #[serde(default)]
    quadrotor: BTreeMap<String, RawQuad>,
    #[serde(default)]
    disturbance: RawDisturbance,
    #[serde(default)]
    gains: RawGains,
    #[serde(default)]
    trajectory: RawTrajectory,
}

fn required<T>(value: Option<T>, field: &str) -> Result<T> {
    value.ok_or_else(|| Error::validation(field, "missing required value"))
}

fn vec3(values: &[f64], field: &str) -> Result<Vec3> {
    if values.len() != 3 {
        return Err(Error::validation(field, format!("expected 3 numbers, got {}", values.len())));
    }
    Ok(Vec3::from_column_slice(values))
}

fn opt_vec3(values: &Option<Vec<f64>>, field: &str, default: Vec3) -> Result<Vec3> {
    values.as_deref().map_or(Ok(default), |v| vec3(v, field))
}

fn mat3(values: &[f64], field: &str) -> Result<Mat3> {
    if values.len() != 9 {
        return Err(Error::validation(field, format!("expected 9 numbers, got {}", values.len())));
    }
    Ok(Mat3::from_row_slice(values))
}

fn opt_rotation(values: &Option<Vec<f64>>, field: &str) -> Result<Mat3> {
    match values {
        None => Ok(Mat3::identity()),
        Some(v) => {
            let r = mat3(v, field)?;
            if !is_rotation(&r, 1e-9) {
                return Err(Error::validation(field, "not a rotation matrix"));
            }
            Ok(r)
        }
    }
}

fn positive(value: Option<f64>, field: &str, default: f64) -> Result<f64> {
    let v = value.unwrap_or(default);
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::validation(field, "must be strictly positive"));
    }
    Ok(v)
}

fn channel(values: &Option<Vec<f64>>, regressor: Regressor, field: &str) -> Result<DisturbanceChannel> {
    match values {
        None => Ok(DisturbanceChannel::zero(regressor)),
        Some(v) => {
            if v.len() != regressor.arity() {
                return Err(Error::validation(
                    field,
                    format!("expected {} parameters, got {}", regressor.arity(), v.len()),
                ));
            }
            Ok(DisturbanceChannel {
                regressor,
                theta: DVector::from_column_slice(v),
            })
        }
    }
}

fn parse_mode(s: Option<&str>) -> Result<ModelMode> {
    match s.unwrap_or("simplified") {
        "simplified" => Ok(ModelMode::Simplified),
        "full" => Ok(ModelMode::Full),
        other => Err(Error::validation("sim.model", format!("unknown model `{other}`"))),
    }
}

fn parse_scheme(s: Option<&str>) -> Result<Scheme> {
    match s.unwrap_or("rk4") {
        "rk4" => Ok(Scheme::Rk4),
        "euler" => Ok(Scheme::Euler),
        other => Err(Error::validation("sim.integrator", format!("unknown integrator `{other}`"))),
    }
}

fn build(raw: RawScenario) -> Result<Scenario> {
    let sim = &raw.sim;
    let dt = positive(sim.dt, "sim.dt", 1e-3)?;
    let t_final = positive(sim.t_final, "sim.t_final", 20.0)?;
    let gravity = sim.gravity.unwrap_or(DEFAULT_GRAVITY);

    let payload = required(raw.payload.as_ref(), "payload")?;
    let payload_mass = required(payload.mass, "payload.mass")?;
    let payload_inertia = mat3(required(payload.inertia.as_deref(), "payload.inertia")?, "payload.inertia")?;

    let dist_raw = &raw.disturbance;
    let regressor = match dist_raw.regressor.as_deref().unwrap_or("constant") {
        "constant" => Regressor::Constant,
        "harmonic" => Regressor::TimeHarmonic {
            frequency: required(dist_raw.frequency, "disturbance.frequency")?,
        },
        other => {
            return Err(Error::validation("disturbance.regressor", format!("unknown regressor `{other}`")));
        }
    };

    if raw.quadrotor.is_empty() {
        return Err(Error::validation("quadrotor", "at least one [quadrotor.N] section is required"));
    }
    let mut indexed = Vec::with_capacity(raw.quadrotor.len());
    for (key, quad) in &raw.quadrotor {
        let index: usize = key
            .parse()
            .map_err(|_| Error::validation(format!("quadrotor.{key}"), "section name must be an index 1..n"))?;
        indexed.push((index, quad));
    }
    indexed.sort_by_key(|(i, _)| *i);
    for (expected, (index, _)) in indexed.iter().enumerate() {
        if *index != expected + 1 {
            return Err(Error::validation(
                format!("quadrotor.{}", expected + 1),
                "quadrotor sections must be numbered 1..n without gaps",
            ));
        }
    }

    let mut quads = Vec::with_capacity(indexed.len());
    let mut quad_states = Vec::with_capacity(indexed.len());
    let mut quad_force = Vec::with_capacity(indexed.len());
    let mut quad_moment = Vec::with_capacity(indexed.len());
    for (index, q) in &indexed {
        let path = format!("quadrotor.{index}");
        let field = |name: &str| format!("{path}.{name}");
        quads.push(QuadParams {
            mass: required(q.mass, &field("mass"))?,
            inertia: mat3(required(q.inertia.as_deref(), &field("inertia"))?, &field("inertia"))?,
            attachment: vec3(required(q.attachment.as_deref(), &field("attachment"))?, &field("attachment"))?,
            link_length: required(q.link_length, &field("link_length"))?,
        });
        quad_force.push(channel(&q.disturbance_force, regressor, &field("disturbance_force"))?);
        quad_moment.push(channel(&q.disturbance_moment, regressor, &field("disturbance_moment"))?);
        let link = opt_vec3(&q.link, &field("link"), Vec3::z())?;
        if (link.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::validation(field("link"), "must be a unit vector"));
        }
        quad_states.push(QuadState {
            link,
            link_rate: opt_vec3(&q.link_rate, &field("link_rate"), Vec3::zeros())?,
            attitude: opt_rotation(&q.attitude, &field("attitude"))?,
            body_rate: opt_vec3(&q.body_rate, &field("body_rate"), Vec3::zeros())?,
        });
    }

    let params = SystemParams {
        payload_mass,
        payload_inertia,
        quads,
        gravity,
    };
    let disturbance = DisturbanceModel {
        payload_force: channel(&dist_raw.payload_force, regressor, "disturbance.payload_force")?,
        payload_moment: channel(&dist_raw.payload_moment, regressor, "disturbance.payload_moment")?,
        quad_force,
        quad_moment,
        bound_phi: positive(dist_raw.bound_phi, "disturbance.bound_phi", 2.0)?,
        bound_theta: positive(dist_raw.bound_theta, "disturbance.bound_theta", 5.0)?,
    };
    let initial = SystemState {
        payload: PayloadState {
            position: opt_vec3(&payload.position, "payload.position", Vec3::zeros())?,
            velocity: opt_vec3(&payload.velocity, "payload.velocity", Vec3::zeros())?,
            attitude: opt_rotation(&payload.attitude, "payload.attitude")?,
            body_rate: opt_vec3(&payload.body_rate, "payload.body_rate", Vec3::zeros())?,
        },
        quads: quad_states,
    };

    let g = &raw.gains;
    let dp = presets::default_payload_gains();
    let da = presets::default_attitude_gains();
    let dh = presets::default_adaptive_gains();
    let payload_gains = PayloadGains {
        position: positive(g.k_x0, "gains.k_x0", dp.position)?,
        velocity: positive(g.k_v0, "gains.k_v0", dp.velocity)?,
        attitude: positive(g.k_r0, "gains.k_r0", dp.attitude)?,
        angular_rate: positive(g.k_w0, "gains.k_w0", dp.angular_rate)?,
        link: positive(g.k_q, "gains.k_q", dp.link)?,
        link_rate: positive(g.k_w, "gains.k_w", dp.link_rate)?,
        cross_position: positive(g.c_x, "gains.c_x", dp.cross_position)?,
        cross_attitude: positive(g.c_r, "gains.c_r", dp.cross_attitude)?,
        cross_link: positive(g.c_q, "gains.c_q", dp.cross_link)?,
    };
    let attitude_gains = AttitudeGains {
        k_r: positive(g.k_r, "gains.k_r", da.k_r)?,
        l_r: positive(g.l_r, "gains.l_r", da.l_r)?,
        k_s: positive(g.k_s, "gains.k_s", da.k_s)?,
        l_s: positive(g.l_s, "gains.l_s", da.l_s)?,
        r: g.r.unwrap_or(da.r),
    };
    let adaptive_gains = AdaptiveGains {
        payload_force: positive(g.h_x0, "gains.h_x0", dh.payload_force)?,
        payload_moment: positive(g.h_r0, "gains.h_r0", dh.payload_moment)?,
        quad_force: positive(g.h_xi, "gains.h_xi", dh.quad_force)?,
    };

    let tr = &raw.trajectory;
    let trajectory = match tr.kind.as_deref().unwrap_or("hover") {
        "hover" => Trajectory::Hover {
            position: opt_vec3(&tr.position, "trajectory.position", Vec3::zeros())?,
        },
        "figure8" => {
            let pair = |v: &Option<Vec<f64>>, field: &str, default: [f64; 2]| -> Result<[f64; 2]> {
                match v.as_deref() {
                    None => Ok(default),
                    Some([a, b]) => Ok([*a, *b]),
                    Some(other) => Err(Error::validation(field, format!("expected 2 numbers, got {}", other.len()))),
                }
            };
            let [px, py] = pair(&tr.period, "trajectory.period", [10.0, 20.0])?;
            if !(px > 0.0 && py > 0.0) {
                return Err(Error::validation("trajectory.period", "must be positive"));
            }
            let tau = 2.0 * std::f64::consts::PI;
            Trajectory::FigureEight {
                amplitude: pair(&tr.amplitude, "trajectory.amplitude", [1.2, 4.2])?,
                frequency: [tau / px, tau / py],
                altitude: tr.altitude.unwrap_or(-0.5),
            }
        }
        other => return Err(Error::validation("trajectory.kind", format!("unknown trajectory `{other}`"))),
    };
    let heading = opt_vec3(&tr.heading, "trajectory.heading", e1())?;
    if heading.norm() == 0.0 {
        return Err(Error::validation("trajectory.heading", "must be nonzero"));
    }

    let scenario = Scenario {
        params,
        disturbance,
        initial,
        payload_gains,
        attitude_gains,
        adaptive_gains,
        reference: Reference {
            trajectory,
            heading: heading.normalize(),
        },
        integrator: IntegratorConfig {
            dt,
            scheme: parse_scheme(sim.integrator.as_deref())?,
        },
        t_final,
        mode: parse_mode(sim.model.as_deref())?,
        decimation: sim.decimation.unwrap_or(1),
        robust_attitude: sim.robust_attitude.unwrap_or(false),
        adaptation: sim.adaptation.unwrap_or(true),
        control: sim.control.unwrap_or(true),
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    build(raw)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_scenario(&text)
}

/// A bundled scenario by name.
pub fn preset(name: &str) -> Result<Scenario> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_scenario(text))
        .unwrap_or_else(|| Err(Error::validation("preset", format!("unknown preset `{name}`"))))
}
