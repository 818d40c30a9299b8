use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use thiserror::Error;

use super::config::{BarrierKind, ConfigError, PlantKind, ReferenceKind, ScenarioConfig};
use super::metrics::{compute_metrics, Metrics};
use crate::cbf::{
    grad_norm_sup, icbf_constraint, ricbf_constraint, standard_cbf_constraint, worst_case_phi, BarrierSpec,
    CbfConstraint, CbfError, ErrorBounds, FilterKind, MricbfFilter,
};
use crate::incmodel::{advance_anchor, sigma_residual, ErrorFn, IncError, IncrementState, SensorModel};
use crate::numerics::{dot, norm2, rk4_step, Mat, NumericsError, OdeState};
use crate::plants::{nominal_pitch_model, siso_gains, BiasSensor, Lpf, PitchPlant, PlantError, SisoPlant};
use crate::qp::{ActiveSetSolver, Allocation, BoxBounds, QpError, QpProblem, QpSolution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("sensor error: {0}")]
    Sensor(#[from] IncError),
    #[error("safety filter infeasible at t = {t:.6}: {detail}")]
    Infeasible { t: f64, detail: String },
    #[error("runtime failure at t = {t:.6}: {detail}")]
    Runtime { t: f64, detail: String },
}

impl SimError {
    /// Configuration problems (including sensor-bound violations) as opposed
    /// to failures while integrating.
    pub fn is_config(&self) -> bool {
        matches!(self, SimError::Config(_) | SimError::Sensor(_))
    }
}

impl From<PlantError> for SimError {
    fn from(e: PlantError) -> Self {
        SimError::Config(ConfigError::new("plant", e.to_string()))
    }
}

impl From<CbfError> for SimError {
    fn from(e: CbfError) -> Self {
        SimError::Config(ConfigError::new("barrier", e.to_string()))
    }
}

fn runtime(t: f64) -> impl Fn(String) -> SimError {
    move |detail| SimError::Runtime { t, detail }
}

/// One simulation step; vectors are in internal (SI, radian) units.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub x: Vec<f64>,
    pub y_true: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub y_dot_hat: Vec<f64>,
    pub r: Vec<f64>,
    pub u_bar: Vec<f64>,
    pub delta_u: Vec<f64>,
    pub u: Vec<f64>,
    pub h: Vec<f64>,
    pub slack: Vec<f64>,
    pub filter_active: bool,
    pub qp_iters: usize,
    pub fixed_point_iters: usize,
    pub fixed_point_fallback: bool,
    pub infeasible: bool,
    pub alloc_slack: f64,
    pub sigma: f64,
    pub anchor_y0: Vec<f64>,
    pub anchor_u0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub dt: f64,
    pub barrier_names: Vec<String>,
    pub records: Vec<StepRecord>,
    pub max_output_error: f64,
    pub max_derivative_error: f64,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

enum Model {
    Siso { plant: SisoPlant, nominal: SisoPlant, k_y: f64, k_r: f64 },
    Pitch { plant: PitchPlant, nominal: PitchPlant, rate_gain: f64 },
}

impl Model {
    fn inputs(&self) -> usize {
        match self {
            Model::Siso { .. } => 1,
            Model::Pitch { plant, .. } => plant.inputs(),
        }
    }

    fn deriv(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        match self {
            Model::Siso { plant, .. } => vec![plant.dynamics(x[0], u[0])],
            Model::Pitch { plant, .. } => vec![plant.dynamics(x[0], u)],
        }
    }

    fn output(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Model::Siso { plant, .. } => vec![plant.output(x[0])],
            Model::Pitch { .. } => vec![x[0]],
        }
    }

    fn output_rate(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        match self {
            Model::Siso { plant, .. } => vec![plant.c * plant.dynamics(x[0], u[0])],
            Model::Pitch { plant, .. } => vec![plant.dynamics(x[0], u)],
        }
    }

    /// Controller-side unforced output dynamics.
    fn nominal_drift(&self, y: &[f64]) -> Vec<f64> {
        match self {
            Model::Siso { nominal, .. } => vec![nominal.output_drift(y[0])],
            Model::Pitch { nominal, .. } => vec![nominal.drift(y[0])],
        }
    }

    /// Output-space input map `g`, the incremental `B₀`.
    fn input_map(&self) -> Mat {
        match self {
            Model::Siso { nominal, .. } => Mat::scalar(nominal.output_gain()),
            Model::Pitch { nominal, .. } => nominal.effectiveness(),
        }
    }

    /// True `∂f/∂y` for the model-error bookkeeping.
    fn true_a0(&self) -> Mat {
        match self {
            Model::Siso { plant, .. } => Mat::scalar(plant.lambda * plant.a),
            Model::Pitch { plant, .. } => Mat::scalar(plant.damping()),
        }
    }
}

struct Reference {
    kind: ReferenceKind,
    amplitude: f64,
    frequency: f64,
    offset: f64,
    step_time: f64,
    noise: f64,
    rng: SplitMix64,
}

impl Reference {
    fn value(&mut self, t: f64) -> f64 {
        let base = match self.kind {
            ReferenceKind::Sine => self.offset + self.amplitude * (self.frequency * t).sin(),
            ReferenceKind::Step => self.offset + if t >= self.step_time { self.amplitude } else { 0.0 },
            ReferenceKind::Constant => self.offset,
        };
        if self.noise > 0.0 {
            base + self.rng.random_range(-self.noise..=self.noise)
        } else {
            base
        }
    }
}

/// Radians per configured angle unit.
pub fn angle_scale(cfg: &ScenarioConfig) -> f64 {
    match cfg.plant {
        PlantKind::Siso => 1.0,
        PlantKind::Pitch => std::f64::consts::PI / 180.0,
    }
}

/// LQR-derived `(k_y, k_r)` for the SISO plant, honouring explicit overrides.
pub fn siso_controller_gains(cfg: &ScenarioConfig) -> Result<(f64, f64), SimError> {
    let s = &cfg.siso;
    let nominal = SisoPlant::new(s.a, s.b, s.c, 1.0)?;
    let g = siso_gains(&nominal, cfg.controller.q, cfg.controller.r)?;
    let k_y = cfg.controller.k_y.unwrap_or(g.k_y);
    let k_r = cfg
        .controller
        .k_r
        .unwrap_or_else(|| -(nominal.a + nominal.b * k_y * nominal.c) / (nominal.c * nominal.b));
    Ok((k_y, k_r))
}

pub fn scenario_bounds(cfg: &ScenarioConfig) -> ErrorBounds {
    let s = angle_scale(cfg);
    ErrorBounds {
        sigma_bar: cfg.bounds.sigma_bar * s,
        eps: cfg.eps() * s,
        theta: cfg.theta() * s,
        kappa: cfg.bounds.kappa.map(|k| k.unwrap_or(0.0)),
    }
}

pub fn scenario_barriers(cfg: &ScenarioConfig) -> Result<Vec<BarrierSpec>, SimError> {
    let s = angle_scale(cfg);
    cfg.barriers
        .iter()
        .map(|b| {
            let spec = match b.kind {
                BarrierKind::Upper => BarrierSpec::upper(0, 1, b.limit * s, b.gamma),
                BarrierKind::Lower => BarrierSpec::lower(0, 1, b.limit * s, b.gamma),
            };
            spec.map_err(SimError::from)
        })
        .collect()
}

fn build_model(cfg: &ScenarioConfig) -> Result<Model, SimError> {
    match cfg.plant {
        PlantKind::Siso => {
            let s = &cfg.siso;
            let plant = SisoPlant::new(s.a, s.b, s.c, s.lambda)?;
            let (k_y, k_r) = siso_controller_gains(cfg)?;
            Ok(Model::Siso { plant, nominal: plant.nominal(), k_y, k_r })
        }
        PlantKind::Pitch => {
            let p = &cfg.pitch;
            let slope = p.cm0_alpha;
            let cmq = p.cmq;
            let plant = PitchPlant {
                iyy: p.iyy,
                qbar: p.qbar,
                s_ref: p.s_ref,
                l_ref: p.l_ref,
                v: p.v,
                mach: p.mach,
                alpha: p.alpha.to_radians(),
                cm0: Arc::new(move |_, alpha| slope * alpha),
                cmq: Arc::new(move |_, _| cmq),
                bp: Mat::row_vector(&p.bp),
                mismatch: p.mismatch,
            };
            plant.validate()?;
            let nominal = nominal_pitch_model(&plant);
            Ok(Model::Pitch { plant, nominal, rate_gain: cfg.controller.rate_gain })
        }
    }
}

fn build_sensor(cfg: &ScenarioConfig) -> Result<SensorModel, SimError> {
    let s = angle_scale(cfg);
    let bias = BiasSensor::new(cfg.sensor.gamma * s, cfg.sensor.xi)?;
    let e: ErrorFn = Arc::new(move |t, y: &[f64]| vec![bias.bias(t); y.len()]);
    // the derivative channel carries the same bias
    Ok(SensorModel::new(e.clone(), e, cfg.eps() * s, cfg.theta() * s)?)
}

struct StepControl {
    u_bar: Vec<f64>,
    delta_u: Vec<f64>,
    u: Vec<f64>,
    slack: Vec<f64>,
    active: bool,
    qp_iters: usize,
    fp_iters: usize,
    fp_fallback: bool,
    infeasible: bool,
    alloc_slack: f64,
}

fn clamp(v: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    v.iter().map(|x| x.clamp(lo, hi)).collect()
}

/// Runs a scenario of either plant kind.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(SimTrace, Metrics), SimError> {
    cfg.validate()?;
    let trace = simulate(cfg)?;
    let metrics = compute_metrics(&trace, cfg)?;
    Ok((trace, metrics))
}

/// Runs the pitch-rate scenario with the allocation-based filter path.
pub fn run_pitch_scenario(cfg: &ScenarioConfig) -> Result<(SimTrace, Metrics), SimError> {
    if cfg.plant != PlantKind::Pitch {
        return Err(SimError::Config(ConfigError::new("plant.kind", "the pitch runner needs plant.kind = pitch")));
    }
    run_scenario(cfg)
}

pub fn simulate(cfg: &ScenarioConfig) -> Result<SimTrace, SimError> {
    let model = build_model(cfg)?;
    let barriers = scenario_barriers(cfg)?;
    let bounds = scenario_bounds(cfg);
    let mut sensor = build_sensor(cfg)?;
    let scale = angle_scale(cfg);
    let (u_min, u_max) = (cfg.u_min * scale, cfg.u_max * scale);
    let dt = cfg.dt;
    let m = model.inputs();
    let kind = cfg.filter.kind;

    // sup‖∇h‖ over a box enclosing every barrier limit
    let span = barriers.len().max(1) as f64;
    let lim = cfg.barriers.iter().map(|b| b.limit.abs() * scale).fold(1.0, f64::max) * span;
    let gns = barriers
        .iter()
        .map(|b| grad_norm_sup(b, &[-2.0 * lim], &[2.0 * lim], 256, cfg.seed))
        .try_fold(0.0f64, |acc, g| g.map(|g| acc.max(g)))?;
    let phi = match kind {
        FilterKind::Ricbf | FilterKind::Mricbf => worst_case_phi(&bounds, gns) + gns * bounds.theta,
        _ => 0.0,
    };

    let mut reference = Reference {
        kind: cfg.reference.kind,
        amplitude: cfg.reference.amplitude * scale,
        frequency: cfg.reference.frequency,
        offset: cfg.reference.offset * scale,
        step_time: cfg.reference.step_time,
        noise: cfg.reference.noise * scale,
        rng: SplitMix64::seed_from_u64(cfg.seed),
    };

    let x0 = match cfg.plant {
        PlantKind::Siso => vec![cfg.siso.x0],
        PlantKind::Pitch => vec![cfg.pitch.q0 * scale],
    };
    let b0 = model.input_map();
    let a0 = model.true_a0();
    let mut state = OdeState::new(0.0, x0);
    let y_init = model.output(&state.x);
    let u_init = vec![0.0; m];
    let y_hat_init = sensor.measure_output(&y_init, 0.0)?;
    let y_dot_init = sensor.measure_derivative(&y_init, &model.output_rate(&state.x, &u_init), 0.0)?;
    let mut anchor = IncrementState::new(y_hat_init, u_init.clone(), y_dot_init, b0.clone(), dt)?;
    let mut u_prev = u_init;
    let mut y_prev: Option<Vec<f64>> = None;

    let mut filters: Option<(Lpf, Lpf, Lpf)> = None;
    let mut mricbf = MricbfFilter::new(cfg.filter.margin);
    let mut solver = ActiveSetSolver::new();

    let n = cfg.steps();
    let mut records = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * dt;
        let fail = runtime(t);
        let y_true = model.output(&state.x);
        let y_hat = sensor.measure_output(&y_true, t)?;
        let y_dot_hat = anchor.y0_dot_meas.clone();

        let (y_use, yd_use, u0_use) = if cfg.sensor.lpf {
            let (fy, fyd, fu) = match filters.as_mut() {
                Some(f) => f,
                None => filters.insert((
                    Lpf::new(cfg.sensor.cutoff, y_hat.clone())?,
                    Lpf::new(cfg.sensor.cutoff, y_dot_hat.clone())?,
                    Lpf::new(cfg.sensor.cutoff, anchor.u0.clone())?,
                )),
            };
            (fy.step(&y_hat, dt)?.to_vec(), fyd.step(&y_dot_hat, dt)?.to_vec(), fu.step(&anchor.u0, dt)?.to_vec())
        } else {
            (y_hat.clone(), y_dot_hat.clone(), anchor.u0.clone())
        };

        let r = vec![reference.value(t)];
        let ctx = StepContext {
            model: &model,
            barriers: &barriers,
            bounds: &bounds,
            y: &y_use,
            y_dot0: &yd_use,
            u0: &u0_use,
            u_prev: &u_prev,
            r: r[0],
            phi,
            b0: &b0,
            u_min,
            u_max,
            slack_weight: cfg.filter.slack_weight,
            kind,
        };
        let c = match control_step(&ctx, &mut solver, &mut mricbf) {
            Ok(c) => c,
            Err(StepFailure::Infeasible(detail)) => {
                if cfg.filter.strict {
                    return Err(SimError::Infeasible { t, detail });
                }
                hold_previous(&ctx)
            }
            Err(StepFailure::Other(detail)) => return Err(fail(detail)),
        };

        let sigma = match &y_prev {
            Some(yp) => {
                let dy: Vec<f64> = y_true.iter().zip(yp).map(|(a, b)| a - b).collect();
                sigma_residual(&a0, &dy, 0.0)?
            }
            None => 0.0,
        };
        let h: Vec<f64> = barriers.iter().map(|b| b.h(&y_true)).collect();

        let y_dot_meas = sensor.measure_derivative(&y_true, &model.output_rate(&state.x, &c.u), t)?;
        let next_anchor = advance_anchor(&anchor, &y_hat, &c.u, &y_dot_meas, &b0)?;

        records.push(StepRecord {
            t,
            x: state.x.clone(),
            y_true: y_true.clone(),
            y_hat: y_hat.clone(),
            y_dot_hat,
            r,
            u_bar: c.u_bar,
            delta_u: c.delta_u,
            u: c.u.clone(),
            h,
            slack: c.slack,
            filter_active: c.active,
            qp_iters: c.qp_iters,
            fixed_point_iters: c.fp_iters,
            fixed_point_fallback: c.fp_fallback,
            infeasible: c.infeasible,
            alloc_slack: c.alloc_slack,
            sigma,
            anchor_y0: anchor.y0.clone(),
            anchor_u0: anchor.u0.clone(),
        });

        state = rk4_step(|x, u| model.deriv(x, u), &state, &c.u, dt).map_err(|e: NumericsError| fail(e.to_string()))?;
        anchor = next_anchor;
        u_prev = c.u;
        y_prev = Some(y_true);
    }

    Ok(SimTrace {
        dt,
        barrier_names: barriers.iter().map(|b| b.name.clone()).collect(),
        records,
        max_output_error: sensor.max_output_error(),
        max_derivative_error: sensor.max_derivative_error(),
    })
}

struct StepContext<'a> {
    model: &'a Model,
    barriers: &'a [BarrierSpec],
    bounds: &'a ErrorBounds,
    y: &'a [f64],
    y_dot0: &'a [f64],
    u0: &'a [f64],
    u_prev: &'a [f64],
    r: f64,
    phi: f64,
    b0: &'a Mat,
    u_min: f64,
    u_max: f64,
    slack_weight: f64,
    kind: FilterKind,
}

enum StepFailure {
    Infeasible(String),
    Other(String),
}

impl From<QpError> for StepFailure {
    fn from(e: QpError) -> Self {
        match e {
            QpError::Infeasible { .. } | QpError::Undefendable { .. } => StepFailure::Infeasible(e.to_string()),
            other => StepFailure::Other(other.to_string()),
        }
    }
}

impl From<CbfError> for StepFailure {
    fn from(e: CbfError) -> Self {
        match e {
            CbfError::Qp(q) => q.into(),
            other => StepFailure::Other(other.to_string()),
        }
    }
}

impl StepContext<'_> {
    fn performance(&self) -> f64 {
        match self.model {
            Model::Siso { k_y, k_r, .. } => k_y * self.y[0] + k_r * self.r,
            Model::Pitch { rate_gain, .. } => rate_gain * (self.r - self.y[0]),
        }
    }

    fn is_pitch(&self) -> bool {
        matches!(self.model, Model::Pitch { .. })
    }

    fn incremental_rows(&self, phi: f64) -> Result<Vec<CbfConstraint>, CbfError> {
        self.barriers
            .iter()
            .map(|b| ricbf_constraint(b, self.y_dot0, self.b0, self.y, phi))
            .collect()
    }

    fn standard_rows(&self) -> Result<Vec<CbfConstraint>, CbfError> {
        let f = self.model.nominal_drift(self.y);
        self.barriers.iter().map(|b| standard_cbf_constraint(b, &f, self.b0, self.y)).collect()
    }

    /// Program in the increment (`total = false`) or in the total input.
    fn problem(&self, reference: Vec<f64>, target: Option<f64>, total: bool) -> QpProblem {
        let offset = if total { vec![0.0; self.u0.len()] } else { self.u0.to_vec() };
        let lo = offset.iter().map(|o| self.u_min - o).collect();
        let hi = offset.iter().map(|o| self.u_max - o).collect();
        let mut p = QpProblem::new(reference).with_bounds(BoxBounds::new(lo, hi));
        if let Some(t) = target {
            p = p.with_alloc(Allocation { effectiveness: self.b0.clone(), target: vec![t], slack_weight: self.slack_weight });
        }
        p
    }
}

fn row_slacks(rows: &[CbfConstraint], v: &[f64]) -> Vec<f64> {
    rows.iter().map(|c| dot(&c.a, v) - c.b).collect()
}

fn has_barrier_row(s: &QpSolution) -> bool {
    s.active_set.iter().any(|id| matches!(id, crate::qp::ConstraintId::Inequality(_)))
}

fn alloc_slack_norm(s: &QpSolution) -> f64 {
    s.slack.as_ref().map_or(0.0, |v| norm2(v))
}

fn control_step(
    ctx: &StepContext<'_>,
    solver: &mut ActiveSetSolver,
    mricbf: &mut MricbfFilter,
) -> Result<StepControl, StepFailure> {
    let perf = ctx.performance();
    let m = ctx.u0.len();
    let pitch = ctx.is_pitch();

    // reference and allocation target of the incremental program
    let (inc_ref, inc_target) = if pitch {
        (vec![0.0; m], Some(perf - ctx.y_dot0[0]))
    } else {
        (vec![perf - ctx.u0[0]], None)
    };
    let finish_incremental = |sol: &QpSolution, rows: &[CbfConstraint]| {
        let u = clamp(&ctx.u0.iter().zip(&sol.delta_u).map(|(a, b)| a + b).collect::<Vec<_>>(), ctx.u_min, ctx.u_max);
        let du: Vec<f64> = u.iter().zip(ctx.u0).map(|(a, b)| a - b).collect();
        (u, row_slacks(rows, &du))
    };

    match ctx.kind {
        FilterKind::None => {
            let rows = ctx.incremental_rows(0.0)?;
            let (u, qp_iters, alloc_slack) = if pitch {
                let sol = solver.solve(&ctx.problem(inc_ref, inc_target, false))?;
                let (u, _) = finish_incremental(&sol, &rows);
                (u, sol.iterations, alloc_slack_norm(&sol))
            } else {
                (vec![perf.clamp(ctx.u_min, ctx.u_max)], 0, 0.0)
            };
            let du: Vec<f64> = u.iter().zip(ctx.u0).map(|(a, b)| a - b).collect();
            Ok(StepControl {
                u_bar: vec![perf],
                slack: row_slacks(&rows, &du),
                delta_u: du,
                u,
                active: false,
                qp_iters,
                fp_iters: 0,
                fp_fallback: false,
                infeasible: false,
                alloc_slack,
            })
        }
        FilterKind::Standard => {
            let rows = ctx.standard_rows()?;
            let (reference, target) = if pitch {
                (vec![0.0; m], Some(perf - ctx.model.nominal_drift(ctx.y)[0]))
            } else {
                (vec![perf], None)
            };
            let mut p = ctx.problem(reference, target, true);
            p.ineq = rows.iter().map(CbfConstraint::to_linear).collect();
            let sol = solver.solve(&p)?;
            let u = clamp(&sol.delta_u, ctx.u_min, ctx.u_max);
            Ok(StepControl {
                u_bar: vec![perf],
                slack: row_slacks(&rows, &u),
                delta_u: u.iter().zip(ctx.u_prev).map(|(a, b)| a - b).collect(),
                u,
                active: has_barrier_row(&sol),
                qp_iters: sol.iterations,
                fp_iters: 0,
                fp_fallback: false,
                infeasible: false,
                alloc_slack: alloc_slack_norm(&sol),
            })
        }
        FilterKind::Icbf | FilterKind::Ricbf => {
            let phi = if ctx.kind == FilterKind::Icbf { 0.0 } else { ctx.phi };
            let rows: Vec<CbfConstraint> = if ctx.kind == FilterKind::Icbf {
                ctx.barriers
                    .iter()
                    .map(|b| icbf_constraint(b, ctx.y_dot0, ctx.b0, ctx.y))
                    .collect::<Result<_, _>>()?
            } else {
                ctx.incremental_rows(phi)?
            };
            let mut p = ctx.problem(inc_ref, inc_target, false);
            p.ineq = rows.iter().map(CbfConstraint::to_linear).collect();
            let sol = solver.solve(&p)?;
            let (u, slack) = finish_incremental(&sol, &rows);
            Ok(StepControl {
                u_bar: vec![perf],
                delta_u: u.iter().zip(ctx.u0).map(|(a, b)| a - b).collect(),
                u,
                slack,
                active: has_barrier_row(&sol),
                qp_iters: sol.iterations,
                fp_iters: 1,
                fp_fallback: false,
                infeasible: false,
                alloc_slack: alloc_slack_norm(&sol),
            })
        }
        FilterKind::Mricbf => {
            let base = ctx.incremental_rows(ctx.phi)?;
            let template = ctx.problem(inc_ref, inc_target, false);
            let bx = template.bounds.clone();
            let mut qp_iters = 0;
            let out = mricbf.solve(&base, ctx.bounds, bx.as_ref(), |rows| {
                let mut p = template.clone();
                p.ineq = rows.iter().map(CbfConstraint::to_linear).collect();
                let s = solver.solve(&p)?;
                qp_iters += s.iterations;
                Ok(s)
            })?;
            let (u, slack) = finish_incremental(&out.solution, &out.constraints);
            Ok(StepControl {
                u_bar: vec![perf],
                delta_u: u.iter().zip(ctx.u0).map(|(a, b)| a - b).collect(),
                u,
                slack,
                active: has_barrier_row(&out.solution),
                qp_iters,
                fp_iters: out.iterations,
                fp_fallback: out.fallback,
                infeasible: false,
                alloc_slack: alloc_slack_norm(&out.solution),
            })
        }
    }
}

/// Conservative fallback after an infeasible program: hold the last input.
fn hold_previous(ctx: &StepContext<'_>) -> StepControl {
    let u = clamp(ctx.u_prev, ctx.u_min, ctx.u_max);
    let du: Vec<f64> = u.iter().zip(ctx.u0).map(|(a, b)| a - b).collect();
    let rows = match ctx.kind {
        FilterKind::Standard => ctx.standard_rows(),
        _ => ctx.incremental_rows(if ctx.kind == FilterKind::Icbf { 0.0 } else { ctx.phi }),
    };
    let probe = if ctx.kind == FilterKind::Standard { &u } else { &du };
    let slack = rows.map(|r| row_slacks(&r, probe)).unwrap_or_else(|_| vec![f64::NAN; ctx.barriers.len()]);
    StepControl {
        u_bar: vec![ctx.performance()],
        delta_u: du,
        u,
        slack,
        active: true,
        qp_iters: 0,
        fp_iters: 0,
        fp_fallback: false,
        infeasible: true,
        alloc_slack: 0.0,
    }
}
