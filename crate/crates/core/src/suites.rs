//! Self-checks behind `payload-sim verify`. Each suite derives its own test
//! case from a scenario and reports named checks against fixed limits.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::attitude::{moment_command, reaching_bounds, sliding_surface, AttitudeCommand};
use crate::control::payload::{Allocator, Wrench};
use crate::control::ModelMode;
use crate::dynamics::energy;
use crate::error::{Error, Result};
use crate::geom::{attitude_errors, axis_angle, Mat3, Vec3};
use crate::integrator::{step_rigid_body, IntegratorConfig};
use crate::model::{build_p, DisturbanceModel, ManifoldResiduals};
use crate::sim::{RunLog, Scenario, Simulation};

/// Seed of every randomized suite, so reports are reproducible.
pub const SEED: u64 = 0x5eed;

pub const ENERGY_HORIZON: f64 = 5.0;
pub const ENERGY_TOL: f64 = 1e-5;
pub const ORTHOGONALITY_TOL: f64 = 1e-9;
pub const UNIT_NORM_TOL: f64 = 1e-12;
pub const TANGENCY_TOL: f64 = 1e-9;

pub const ALLOCATION_SAMPLES: usize = 1000;
pub const ALLOCATION_RESIDUAL_TOL: f64 = 1e-10;
pub const ALLOCATION_ORACLE_TOL: f64 = 1e-9;

pub const POSITION_ERROR_TOL: f64 = 0.05;
pub const PAYLOAD_ATTITUDE_TOL: f64 = 0.01;
pub const LINK_TOL: f64 = 0.01;
/// Per-step increase of the Lyapunov function allowed, relative to its
/// initial value.
pub const LYAPUNOV_SLACK: f64 = 1e-6;
/// Transient excluded from the monotonicity check, s.
pub const LYAPUNOV_SKIP: f64 = 1.0;
/// Length of the final averaging window, s.
pub const FINAL_WINDOW: f64 = 2.0;
pub const BALL_SLACK: f64 = 1e-12;

/// The isolated attitude loop is integrated at this step; at 1e-3 s the
/// fractional terms chatter with `‖s‖` around 1e-5.
pub const ATTITUDE_DT: f64 = 1e-4;
pub const ATTITUDE_PSI0: f64 = 0.5;
pub const SLIDING_TOL: f64 = 1e-6;
pub const ATTITUDE_ERROR_TOL: f64 = 1e-6;
pub const REACHING_FRACTION: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Energy,
    Allocation,
    Lyapunov,
    Attitude,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Energy, Suite::Allocation, Suite::Lyapunov, Suite::Attitude];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Energy => "energy",
            Suite::Allocation => "allocation",
            Suite::Lyapunov => "lyapunov",
            Suite::Attitude => "attitude",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::validation("suite", format!("unknown suite `{s}`")))
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One named quantity and the limit it must not exceed.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            value,
            limit,
            passed: value <= limit,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            value,
            limit,
            passed: value >= limit,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {:.6e} (limit {:.3e})", self.name, self.value, self.limit)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "[{}] {c}", self.suite)?;
        }
        Ok(())
    }
}

pub fn run_suite(suite: Suite, scenario: &Scenario) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Energy => energy_suite(scenario)?,
        Suite::Allocation => allocation_suite(scenario)?,
        Suite::Lyapunov => lyapunov_suite(scenario)?,
        Suite::Attitude => attitude_suite(scenario)?,
    };
    Ok(SuiteReport { suite, checks })
}

fn uniform_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
    Vec3::from_fn(|_, _| rng.random_range(-scale..scale))
}

fn manifold_checks(worst: &ManifoldResiduals) -> Vec<Check> {
    vec![
        Check::at_most("orthogonality residual", worst.orthogonality, ORTHOGONALITY_TOL),
        Check::at_most("unit-norm residual", worst.unit_norm, UNIT_NORM_TOL),
        Check::at_most("tangency residual", worst.tangency, TANGENCY_TOL),
    ]
}

/// Open-loop, disturbance-free copy of `scenario` with random bounded
/// velocities.
pub fn conservative_scenario(scenario: &Scenario, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sc = scenario.clone();
    let n = sc.params.n();
    sc.control = false;
    sc.adaptation = false;
    sc.mode = ModelMode::Simplified;
    sc.disturbance = DisturbanceModel::none(n);
    sc.t_final = ENERGY_HORIZON;
    let p = &mut sc.initial.payload;
    p.velocity = uniform_vec(&mut rng, 0.5);
    p.body_rate = uniform_vec(&mut rng, 0.5);
    for q in &mut sc.initial.quads {
        let w = uniform_vec(&mut rng, 1.0);
        q.link_rate = w - q.link * q.link.dot(&w);
    }
    sc
}

/// Largest relative energy drift of an open-loop run, with the worst
/// manifold residuals seen along it.
pub fn energy_drift(scenario: &Scenario) -> Result<(f64, ManifoldResiduals)> {
    let params = scenario.params.clone();
    let mut sim = Simulation::new(scenario.clone())?;
    let e0 = energy(sim.state(), &params).total();
    let mut drift: f64 = 0.0;
    let mut worst = sim.state().residuals();
    while !sim.finished() {
        sim.step()?;
        drift = drift.max((energy(sim.state(), &params).total() - e0).abs() / e0.abs());
        worst = worst.max(sim.state().residuals());
    }
    Ok((drift, worst))
}

fn energy_suite(scenario: &Scenario) -> Result<Vec<Check>> {
    let (drift, worst) = energy_drift(&conservative_scenario(scenario, SEED))?;
    let mut checks = vec![Check::at_most("relative energy drift", drift, ENERGY_TOL)];
    checks.extend(manifold_checks(&worst));
    Ok(checks)
}

fn allocation_suite(scenario: &Scenario) -> Result<Vec<Check>> {
    let params = &scenario.params;
    let alloc = Allocator::new(params)?;
    let svd = build_p(params).svd(true, true);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut residual, mut oracle_gap, mut norm_gap): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..ALLOCATION_SAMPLES {
        let wrench = Wrench {
            force: uniform_vec(&mut rng, 30.0),
            moment: uniform_vec(&mut rng, 5.0),
        };
        let r0 = axis_angle(&uniform_vec(&mut rng, 1.0), rng.random_range(0.0..std::f64::consts::PI));
        let mu = alloc.allocate(&wrench, &r0);

        let force: Vec3 = mu.iter().sum();
        let moment: Vec3 = params
            .quads
            .iter()
            .zip(&mu)
            .map(|(q, m)| q.attachment.cross(&(r0.transpose() * m)))
            .sum();
        let scale = (wrench.force.norm_squared() + wrench.moment.norm_squared()).sqrt();
        let err = ((force - wrench.force).norm_squared() + (moment - wrench.moment).norm_squared()).sqrt();
        residual = residual.max(err / scale);

        let mut rhs = DVector::zeros(6);
        rhs.rows_mut(0, 3).copy_from(&(r0.transpose() * wrench.force));
        rhs.rows_mut(3, 3).copy_from(&wrench.moment);
        let oracle = svd.solve(&rhs, 1e-12).map_err(|e| Error::Numerical { step: 0, reason: e.to_string() })?;
        let body = DVector::from_iterator(3 * mu.len(), mu.iter().flat_map(|m| (r0.transpose() * m).into_iter().copied().collect::<Vec<_>>()));
        oracle_gap = oracle_gap.max((&body - &oracle).norm());
        norm_gap = norm_gap.max((body.norm() - oracle.norm()).abs());
    }
    Ok(vec![
        Check::at_most("relative wrench residual", residual, ALLOCATION_RESIDUAL_TOL),
        Check::at_most("distance to least-norm solution", oracle_gap, ALLOCATION_ORACLE_TOL),
        Check::at_most("stack norm gap to least-norm solution", norm_gap, ALLOCATION_ORACLE_TOL),
    ])
}

/// Largest per-step increase of the logged Lyapunov function after
/// `t_from`, relative to its initial value.
pub fn lyapunov_worst_increase(log: &RunLog, t_from: f64) -> f64 {
    let Some(first) = log.records.first() else {
        return f64::NAN;
    };
    let v0 = first.lyapunov;
    log.window(t_from)
        .windows(2)
        .map(|w| (w[1].lyapunov - w[0].lyapunov) / v0)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Convergence checks on the final window of a closed-loop log.
pub fn convergence_checks(log: &RunLog) -> Vec<Check> {
    let Some(last) = log.last() else {
        return Vec::new();
    };
    let window = log.window(last.t - FINAL_WINDOW);
    let mean = |f: &dyn Fn(&crate::sim::StepRecord) -> f64| window.iter().map(f).sum::<f64>() / window.len() as f64;
    let mut checks = vec![
        Check::at_most("final-window mean position error", mean(&|r| r.position_error.norm()), POSITION_ERROR_TOL),
        Check::at_most("final-window mean payload attitude error", mean(&|r| r.psi0_trace), PAYLOAD_ATTITUDE_TOL),
    ];
    for i in 0..log.n {
        checks.push(Check::at_most(
            format!("final-window mean link {} direction error", i + 1),
            mean(&|r| r.link_psi[i]),
            LINK_TOL,
        ));
    }
    checks
}

fn lyapunov_suite(scenario: &Scenario) -> Result<Vec<Check>> {
    let mut sc = scenario.clone();
    sc.mode = ModelMode::Simplified;
    sc.control = true;
    let log = crate::sim::run(&sc)?;
    let mut checks = vec![Check::at_most(
        "largest relative Lyapunov increase after the transient",
        lyapunov_worst_increase(&log, LYAPUNOV_SKIP),
        LYAPUNOV_SLACK,
    )];
    checks.extend(convergence_checks(&log));
    let ball = log.records.iter().flat_map(|r| r.estimate_norms).fold(0.0, f64::max);
    checks.push(Check::at_most("largest estimate norm", ball, sc.disturbance.bound_theta + BALL_SLACK));
    checks.extend(manifold_checks(&log.worst_manifold()));
    Ok(checks)
}

/// Isolated attitude loop run toward a fixed command.
#[derive(Debug, Clone, PartialEq)]
pub struct AttitudeRun {
    pub dt: f64,
    pub t: Vec<f64>,
    pub psi: Vec<f64>,
    pub sliding_norm: Vec<f64>,
    pub error_norm: Vec<f64>,
    /// `½ sᵀ J s`.
    pub reaching: Vec<f64>,
}

impl AttitudeRun {
    fn first_below(values: &[f64], t: &[f64], tol: f64) -> Option<f64> {
        values.iter().position(|v| *v < tol).map(|k| t[k])
    }

    pub fn sliding_time(&self, tol: f64) -> Option<f64> {
        Self::first_below(&self.sliding_norm, &self.t, tol)
    }

    pub fn error_time(&self, tol: f64) -> Option<f64> {
        Self::first_below(&self.error_norm, &self.t, tol)
    }
}

/// Integrates one quadrotor attitude loop from `attitude` at rest toward
/// the identity, without disturbances.
pub fn isolated_attitude_run(
    attitude: Mat3,
    inertia: &Mat3,
    gains: &crate::control::AttitudeGains,
    dt: f64,
    t_final: f64,
) -> Result<AttitudeRun> {
    let command = AttitudeCommand {
        attitude: Mat3::identity(),
        body_rate: Vec3::zeros(),
        angular_accel: Vec3::zeros(),
    };
    let config = IntegratorConfig::rk4(dt);
    let steps = (t_final / dt).round() as usize;
    let mut run = AttitudeRun {
        dt,
        t: Vec::with_capacity(steps + 1),
        psi: Vec::with_capacity(steps + 1),
        sliding_norm: Vec::with_capacity(steps + 1),
        error_norm: Vec::with_capacity(steps + 1),
        reaching: Vec::with_capacity(steps + 1),
    };
    let (mut r, mut w) = (attitude, Vec3::zeros());
    for k in 0..=steps {
        let m = moment_command(&r, &w, &command, inertia, gains, None)?;
        let s = m.sliding;
        run.t.push(k as f64 * dt);
        run.psi.push(m.errors.psi);
        run.sliding_norm.push(s.norm());
        run.error_norm.push(m.errors.e_r.norm());
        run.reaching.push(0.5 * s.dot(&(inertia * s)));
        if k < steps {
            (r, w) = step_rigid_body(&r, &w, inertia, &m.moment, &config)?;
        }
    }
    Ok(run)
}

/// Rotation about `(1, 1, 0)` whose trace-form error to the identity is `psi`.
pub fn attitude_with_error(psi: f64) -> Mat3 {
    axis_angle(&Vec3::new(1.0, 1.0, 0.0), (1.0 - psi).acos())
}

fn attitude_suite(scenario: &Scenario) -> Result<Vec<Check>> {
    let gains = &scenario.attitude_gains;
    let inertia = &scenario.params.quads[0].inertia;
    let start = attitude_with_error(ATTITUDE_PSI0);
    let e0 = attitude_errors(&start, &Mat3::identity(), &Vec3::zeros(), &Vec3::zeros());
    let s0 = sliding_surface(&e0.e_r, &e0.e_omega, gains)?;
    let w0 = 0.5 * s0.dot(&(inertia * s0));

    // horizon from a first bound with the initial error; refined below
    let rough = reaching_bounds(gains, inertia, w0, ATTITUDE_PSI0);
    let horizon = 2.0 * (rough.reach + rough.sliding(gains.r, 2.0 - 1e-9)).min(20.0) + 0.5;
    let run = isolated_attitude_run(start, inertia, gains, ATTITUDE_DT, horizon)?;

    let t_s = run.sliding_time(SLIDING_TOL).unwrap_or(f64::INFINITY);
    let reach_end = run.t.iter().position(|t| *t >= t_s).unwrap_or(run.t.len() - 1);
    let psi_max = run.psi.iter().copied().fold(0.0, f64::max);
    let bounds = reaching_bounds(gains, inertia, w0, psi_max);
    let psi_reach = run.psi[reach_end];
    let t_r = run.error_time(ATTITUDE_ERROR_TOL).unwrap_or(f64::INFINITY);

    // secant of 𝒲 against the bound at the end of each interval
    let p = (gains.r + 1.0) / 2.0;
    let pairs = run.reaching[..=reach_end].windows(2);
    let total = pairs.len().max(1);
    let held = pairs
        .filter(|w| (w[1] - w[0]) / run.dt <= -bounds.eps1 * w[1] - bounds.eps2 * w[1].powf(p))
        .count();

    Ok(vec![
        Check::at_most("time to reach the sliding surface, s", t_s, bounds.reach),
        Check::at_most(
            "time to attitude convergence, s",
            t_r,
            bounds.reach + bounds.sliding(gains.r, psi_reach),
        ),
        Check::at_least(
            "fraction of reaching steps obeying the rate bound",
            held as f64 / total as f64,
            REACHING_FRACTION,
        ),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::preset;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!(matches!("bogus".parse::<Suite>(), Err(Error::Validation { .. })));
    }

    #[test]
    fn check_verdicts() {
        assert!(Check::at_most("a", 1.0, 1.0).passed);
        assert!(!Check::at_most("a", 1.1, 1.0).passed);
        assert!(!Check::at_most("a", f64::NAN, 1.0).passed);
        assert!(Check::at_least("a", 0.995, 0.99).passed);
        assert!(Check::at_most("x", 2.0, 1.0).to_string().starts_with("FAIL x"));
    }

    #[test]
    fn attitude_start_has_requested_error() {
        for psi in [0.1, 0.5, 1.5] {
            let r = attitude_with_error(psi);
            let e = attitude_errors(&r, &Mat3::identity(), &Vec3::zeros(), &Vec3::zeros());
            assert!((e.psi - psi).abs() < 1e-14);
        }
    }

    #[test]
    fn conservative_scenario_is_tangent_and_open_loop() {
        let sc = conservative_scenario(&preset("figure8").unwrap(), 3);
        assert!(!sc.control);
        assert_eq!(sc.disturbance, DisturbanceModel::none(3));
        for q in &sc.initial.quads {
            assert!(q.link.dot(&q.link_rate).abs() < 1e-15);
            assert!(q.link_rate.norm() > 0.0);
        }
    }

    #[test]
    fn allocation_suite_passes_on_preset() {
        let report = run_suite(Suite::Allocation, &preset("figure8").unwrap()).unwrap();
        assert!(report.passed(), "{report}");
    }
}
