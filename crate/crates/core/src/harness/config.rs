//! Scenario configuration as a flat set of dotted keys.
//!
//! Angles and angular rates are given in degrees for the pitch plant and
//! converted to radians when the scenario is built.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::cbf::{FilterKind, MarginForm};
use crate::qp::DEFAULT_SLACK_WEIGHT;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{key}: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self { key: key.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantKind {
    Siso,
    Pitch,
}

impl FromStr for PlantKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "siso" => Ok(PlantKind::Siso),
            "pitch" => Ok(PlantKind::Pitch),
            _ => Err(format!("unknown plant '{s}' (expected siso|pitch)")),
        }
    }
}

impl fmt::Display for PlantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlantKind::Siso => "siso",
            PlantKind::Pitch => "pitch",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SisoParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub lambda: f64,
    pub x0: f64,
}

/// Pitch plant parameters; `alpha` in degrees, `q0` in degrees per second,
/// `cm0_alpha` per radian.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchParams {
    pub iyy: f64,
    pub qbar: f64,
    pub s_ref: f64,
    pub l_ref: f64,
    pub v: f64,
    pub mach: f64,
    pub alpha: f64,
    pub cm0_alpha: f64,
    pub cmq: f64,
    pub bp: Vec<f64>,
    pub mismatch: f64,
    pub q0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarrierKind {
    Upper,
    Lower,
}

impl FromStr for BarrierKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "upper" | "box-upper" => Ok(BarrierKind::Upper),
            "lower" | "box-lower" => Ok(BarrierKind::Lower),
            _ => Err(format!("unknown barrier kind '{s}' (expected upper|lower)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierConfig {
    pub kind: BarrierKind,
    pub limit: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub kind: FilterKind,
    pub margin: MarginForm,
    pub strict: bool,
    pub slack_weight: f64,
}

/// `eps` and `theta` default to the sensor bias amplitude when unset.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsConfig {
    pub sigma_bar: f64,
    pub eps: Option<f64>,
    pub theta: Option<f64>,
    pub kappa: [Option<f64>; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorConfig {
    pub gamma: f64,
    pub xi: f64,
    pub lpf: bool,
    pub cutoff: f64,
}

/// SISO gains come from LQR on the nominal plant unless given explicitly;
/// `rate_gain` is the pitch-rate error gain.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub q: f64,
    pub r: f64,
    pub k_y: Option<f64>,
    pub k_r: Option<f64>,
    pub rate_gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    Sine,
    Step,
    Constant,
}

impl FromStr for ReferenceKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sine" => Ok(ReferenceKind::Sine),
            "step" => Ok(ReferenceKind::Step),
            "constant" => Ok(ReferenceKind::Constant),
            _ => Err(format!("unknown reference '{s}' (expected sine|step|constant)")),
        }
    }
}

/// `offset + amplitude·sin(frequency·t)`, a step of `amplitude` at
/// `step_time`, or a constant `offset`; plus optional uniform noise of
/// half-width `noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceConfig {
    pub kind: ReferenceKind,
    pub amplitude: f64,
    pub frequency: f64,
    pub offset: f64,
    pub step_time: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub plant: PlantKind,
    pub siso: SisoParams,
    pub pitch: PitchParams,
    pub filter: FilterConfig,
    pub barriers: Vec<BarrierConfig>,
    pub bounds: BoundsConfig,
    pub sensor: SensorConfig,
    pub controller: ControllerConfig,
    pub u_min: f64,
    pub u_max: f64,
    pub dt: f64,
    pub t_end: f64,
    pub transient: f64,
    pub reference: ReferenceConfig,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::defaults_for(PlantKind::Siso)
    }
}

impl ScenarioConfig {
    pub fn defaults_for(plant: PlantKind) -> Self {
        let siso = SisoParams { a: -1.0, b: 1.0, c: 1.0, lambda: 0.6, x0: 0.0 };
        let pitch = PitchParams {
            iyy: 500.0,
            qbar: 5e4,
            s_ref: 1.0,
            l_ref: 2.0,
            v: 2000.0,
            mach: 7.0,
            alpha: 2.0,
            cm0_alpha: -0.005,
            cmq: -0.2,
            bp: vec![-50.0, -50.0, 30.0, 30.0],
            mismatch: 0.3,
            q0: 0.0,
        };
        let filter =
            FilterConfig { kind: FilterKind::None, margin: MarginForm::Additive, strict: false, slack_weight: DEFAULT_SLACK_WEIGHT };
        let bounds = BoundsConfig { sigma_bar: 0.01, eps: None, theta: None, kappa: [None; 4] };
        let sensor = SensorConfig { gamma: 0.1, xi: 10.0, lpf: false, cutoff: 2.0 };
        let controller = ControllerConfig { q: 3.0, r: 0.2, k_y: None, k_r: None, rate_gain: 5.0 };
        match plant {
            PlantKind::Siso => Self {
                name: "siso".into(),
                plant,
                siso,
                pitch,
                filter,
                barriers: vec![
                    BarrierConfig { kind: BarrierKind::Upper, limit: 0.5, gamma: 2.0 },
                    BarrierConfig { kind: BarrierKind::Lower, limit: -0.5, gamma: 2.0 },
                ],
                bounds,
                sensor,
                controller,
                u_min: -0.8,
                u_max: 0.8,
                dt: 1e-3,
                t_end: 30.0,
                transient: 5.0,
                reference: ReferenceConfig {
                    kind: ReferenceKind::Sine,
                    amplitude: 0.7,
                    frequency: 0.2,
                    offset: 0.0,
                    step_time: 0.0,
                    noise: 0.0,
                },
                seed: 0,
            },
            PlantKind::Pitch => Self {
                name: "pitch".into(),
                plant,
                siso,
                pitch,
                filter,
                barriers: vec![
                    BarrierConfig { kind: BarrierKind::Upper, limit: 10.0, gamma: 2.0 },
                    BarrierConfig { kind: BarrierKind::Lower, limit: -10.0, gamma: 2.0 },
                ],
                bounds,
                sensor,
                controller,
                u_min: -30.0,
                u_max: 30.0,
                dt: 1e-3,
                t_end: 10.0,
                transient: 5.0,
                reference: ReferenceConfig {
                    kind: ReferenceKind::Step,
                    amplitude: 15.0,
                    frequency: 0.0,
                    offset: 0.0,
                    step_time: 0.5,
                    noise: 0.0,
                },
                seed: 0,
            },
        }
    }

    /// Builds a configuration from merged key/value entries. `plant.kind`
    /// selects the defaults; any `barrier.N.*` key replaces the default
    /// barrier list.
    pub fn from_entries(entries: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let plant = match entries.get("plant.kind") {
            Some(v) => v.parse().map_err(|e: String| ConfigError::new("plant.kind", e))?,
            None => PlantKind::Siso,
        };
        let mut cfg = Self::defaults_for(plant);
        let mut barrier_keys: BTreeMap<usize, BTreeMap<String, (String, String)>> = BTreeMap::new();
        for (key, value) in entries {
            if let Some(rest) = key.strip_prefix("barrier.") {
                let (idx, field) = rest
                    .split_once('.')
                    .ok_or_else(|| ConfigError::new(key, "expected barrier.N.field"))?;
                let n: usize = idx
                    .parse()
                    .ok()
                    .filter(|n| *n >= 1)
                    .ok_or_else(|| ConfigError::new(key, "barrier index must be an integer ≥ 1"))?;
                barrier_keys.entry(n).or_default().insert(field.to_string(), (key.clone(), value.clone()));
            } else {
                cfg.set(key, value)?;
            }
        }
        if !barrier_keys.is_empty() {
            cfg.barriers = build_barriers(&barrier_keys)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let num = || parse_f64(key, value);
        let opt = || parse_f64(key, value).map(Some);
        match key {
            "name" => self.name = value.to_string(),
            "seed" => self.seed = value.parse().map_err(|_| ConfigError::new(key, "expected an unsigned integer"))?,
            "plant.kind" => {
                let kind: PlantKind = value.parse().map_err(|e: String| ConfigError::new(key, e))?;
                if kind != self.plant {
                    return Err(ConfigError::new(key, "plant kind must be chosen before other keys are applied"));
                }
            }
            "plant.a" => self.siso.a = num()?,
            "plant.b" => self.siso.b = num()?,
            "plant.c" => self.siso.c = num()?,
            "plant.lambda" => self.siso.lambda = num()?,
            "plant.x0" => self.siso.x0 = num()?,
            "plant.iyy" => self.pitch.iyy = num()?,
            "plant.qbar" => self.pitch.qbar = num()?,
            "plant.s_ref" => self.pitch.s_ref = num()?,
            "plant.l_ref" => self.pitch.l_ref = num()?,
            "plant.v" => self.pitch.v = num()?,
            "plant.mach" => self.pitch.mach = num()?,
            "plant.alpha" => self.pitch.alpha = num()?,
            "plant.cm0_alpha" => self.pitch.cm0_alpha = num()?,
            "plant.cmq" => self.pitch.cmq = num()?,
            "plant.bp" => self.pitch.bp = parse_list(key, value)?,
            "plant.mismatch" => self.pitch.mismatch = num()?,
            "plant.q0" => self.pitch.q0 = num()?,
            "filter.kind" => self.filter.kind = value.parse().map_err(|e: String| ConfigError::new(key, e))?,
            "filter.margin" => self.filter.margin = value.parse().map_err(|e: String| ConfigError::new(key, e))?,
            "filter.strict" => self.filter.strict = parse_bool(key, value)?,
            "filter.slack_weight" => self.filter.slack_weight = num()?,
            "bounds.sigma_bar" => self.bounds.sigma_bar = num()?,
            "bounds.eps" => self.bounds.eps = opt()?,
            "bounds.theta" => self.bounds.theta = opt()?,
            "bounds.kappa1" => self.bounds.kappa[0] = opt()?,
            "bounds.kappa2" => self.bounds.kappa[1] = opt()?,
            "bounds.kappa3" => self.bounds.kappa[2] = opt()?,
            "bounds.kappa4" => self.bounds.kappa[3] = opt()?,
            "sensor.gamma" => self.sensor.gamma = num()?,
            "sensor.xi" => self.sensor.xi = num()?,
            "sensor.lpf" => self.sensor.lpf = parse_bool(key, value)?,
            "sensor.cutoff" => self.sensor.cutoff = num()?,
            "controller.q" => self.controller.q = num()?,
            "controller.r" => self.controller.r = num()?,
            "controller.k_y" => self.controller.k_y = opt()?,
            "controller.k_r" => self.controller.k_r = opt()?,
            "controller.rate_gain" => self.controller.rate_gain = num()?,
            "limits.u_min" => self.u_min = num()?,
            "limits.u_max" => self.u_max = num()?,
            "timing.dt" => self.dt = num()?,
            "timing.t_end" => self.t_end = num()?,
            "timing.transient" => self.transient = num()?,
            "reference.kind" => self.reference.kind = value.parse().map_err(|e: String| ConfigError::new(key, e))?,
            "reference.amplitude" => self.reference.amplitude = num()?,
            "reference.frequency" => self.reference.frequency = num()?,
            "reference.offset" => self.reference.offset = num()?,
            "reference.step_time" => self.reference.step_time = num()?,
            "reference.noise" => self.reference.noise = num()?,
            _ => return Err(ConfigError::new(key, "unknown key")),
        }
        Ok(())
    }

    pub fn eps(&self) -> f64 {
        self.bounds.eps.unwrap_or(self.sensor.gamma)
    }

    pub fn theta(&self) -> f64 {
        self.bounds.theta.unwrap_or(self.sensor.gamma)
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::new(key, format!("must be finite and > 0, got {v}")))
            }
        };
        let nonneg = |key: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::new(key, format!("must be finite and ≥ 0, got {v}")))
            }
        };
        positive("timing.dt", self.dt)?;
        if !(self.t_end > self.dt && self.t_end.is_finite()) {
            return Err(ConfigError::new("timing.t_end", format!("must exceed timing.dt, got {}", self.t_end)));
        }
        nonneg("timing.transient", self.transient)?;
        if !(self.u_min < self.u_max && self.u_min.is_finite() && self.u_max.is_finite()) {
            return Err(ConfigError::new(
                "limits.u_min",
                format!("need u_min < u_max, got [{}, {}]", self.u_min, self.u_max),
            ));
        }
        positive("filter.slack_weight", self.filter.slack_weight)?;
        nonneg("bounds.sigma_bar", self.bounds.sigma_bar)?;
        nonneg("bounds.eps", self.eps())?;
        nonneg("bounds.theta", self.theta())?;
        for (i, k) in self.bounds.kappa.iter().enumerate() {
            if let Some(k) = k {
                nonneg(&format!("bounds.kappa{}", i + 1), *k)?;
            }
        }
        if self.filter.kind == FilterKind::Mricbf && self.bounds.kappa.iter().any(Option::is_none) {
            let missing: Vec<String> = self
                .bounds
                .kappa
                .iter()
                .enumerate()
                .filter(|(_, k)| k.is_none())
                .map(|(i, _)| format!("bounds.kappa{}", i + 1))
                .collect();
            return Err(ConfigError::new(
                "bounds.kappa",
                format!("filter.kind = mricbf requires kappa1..kappa4; missing {}", missing.join(", ")),
            ));
        }
        nonneg("sensor.gamma", self.sensor.gamma)?;
        positive("sensor.xi", self.sensor.xi)?;
        positive("sensor.cutoff", self.sensor.cutoff)?;
        positive("controller.q", self.controller.q)?;
        positive("controller.r", self.controller.r)?;
        nonneg("controller.rate_gain", self.controller.rate_gain)?;
        nonneg("reference.noise", self.reference.noise)?;
        for (key, v) in [
            ("reference.amplitude", self.reference.amplitude),
            ("reference.frequency", self.reference.frequency),
            ("reference.offset", self.reference.offset),
            ("reference.step_time", self.reference.step_time),
        ] {
            if !v.is_finite() {
                return Err(ConfigError::new(key, "must be finite"));
            }
        }
        if self.barriers.is_empty() && self.filter.kind != FilterKind::None {
            return Err(ConfigError::new("barrier", "a safety filter needs at least one barrier"));
        }
        for (i, b) in self.barriers.iter().enumerate() {
            positive(&format!("barrier.{}.gamma", i + 1), b.gamma)?;
            if !b.limit.is_finite() {
                return Err(ConfigError::new(format!("barrier.{}.limit", i + 1), "must be finite"));
            }
        }
        match self.plant {
            PlantKind::Siso => {
                let s = &self.siso;
                for (key, v) in [("plant.a", s.a), ("plant.lambda", s.lambda), ("plant.x0", s.x0)] {
                    if !v.is_finite() {
                        return Err(ConfigError::new(key, "must be finite"));
                    }
                }
                for (key, v) in [("plant.b", s.b), ("plant.c", s.c)] {
                    if !(v.is_finite() && v != 0.0) {
                        return Err(ConfigError::new(key, "must be finite and nonzero"));
                    }
                }
            }
            PlantKind::Pitch => {
                let p = &self.pitch;
                positive("plant.iyy", p.iyy)?;
                positive("plant.v", p.v)?;
                if p.bp.len() != 4 {
                    return Err(ConfigError::new("plant.bp", format!("expected 4 entries, got {}", p.bp.len())));
                }
                for (key, v) in [
                    ("plant.qbar", p.qbar),
                    ("plant.s_ref", p.s_ref),
                    ("plant.l_ref", p.l_ref),
                    ("plant.mach", p.mach),
                    ("plant.alpha", p.alpha),
                    ("plant.cm0_alpha", p.cm0_alpha),
                    ("plant.cmq", p.cmq),
                    ("plant.mismatch", p.mismatch),
                    ("plant.q0", p.q0),
                ] {
                    if !v.is_finite() {
                        return Err(ConfigError::new(key, "must be finite"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Every key with its current value, in a stable order.
    pub fn to_entries(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = vec![
            ("name".into(), self.name.clone()),
            ("seed".into(), self.seed.to_string()),
            ("plant.kind".into(), self.plant.to_string()),
        ];
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        match self.plant {
            PlantKind::Siso => {
                push("plant.a", fmt_num(self.siso.a));
                push("plant.b", fmt_num(self.siso.b));
                push("plant.c", fmt_num(self.siso.c));
                push("plant.lambda", fmt_num(self.siso.lambda));
                push("plant.x0", fmt_num(self.siso.x0));
            }
            PlantKind::Pitch => {
                let p = &self.pitch;
                push("plant.iyy", fmt_num(p.iyy));
                push("plant.qbar", fmt_num(p.qbar));
                push("plant.s_ref", fmt_num(p.s_ref));
                push("plant.l_ref", fmt_num(p.l_ref));
                push("plant.v", fmt_num(p.v));
                push("plant.mach", fmt_num(p.mach));
                push("plant.alpha", fmt_num(p.alpha));
                push("plant.cm0_alpha", fmt_num(p.cm0_alpha));
                push("plant.cmq", fmt_num(p.cmq));
                push("plant.bp", p.bp.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>().join(", "));
                push("plant.mismatch", fmt_num(p.mismatch));
                push("plant.q0", fmt_num(p.q0));
            }
        }
        push("filter.kind", self.filter.kind.to_string());
        push("filter.margin", self.filter.margin.to_string());
        push("filter.strict", self.filter.strict.to_string());
        push("filter.slack_weight", fmt_num(self.filter.slack_weight));
        for (i, b) in self.barriers.iter().enumerate() {
            let kind = match b.kind {
                BarrierKind::Upper => "upper",
                BarrierKind::Lower => "lower",
            };
            push(&format!("barrier.{}.kind", i + 1), kind.into());
            push(&format!("barrier.{}.limit", i + 1), fmt_num(b.limit));
            push(&format!("barrier.{}.gamma", i + 1), fmt_num(b.gamma));
        }
        push("bounds.sigma_bar", fmt_num(self.bounds.sigma_bar));
        push("bounds.eps", fmt_num(self.eps()));
        push("bounds.theta", fmt_num(self.theta()));
        for (i, k) in self.bounds.kappa.iter().enumerate() {
            if let Some(k) = k {
                push(&format!("bounds.kappa{}", i + 1), fmt_num(*k));
            }
        }
        push("sensor.gamma", fmt_num(self.sensor.gamma));
        push("sensor.xi", fmt_num(self.sensor.xi));
        push("sensor.lpf", self.sensor.lpf.to_string());
        push("sensor.cutoff", fmt_num(self.sensor.cutoff));
        push("controller.q", fmt_num(self.controller.q));
        push("controller.r", fmt_num(self.controller.r));
        if let Some(k) = self.controller.k_y {
            push("controller.k_y", fmt_num(k));
        }
        if let Some(k) = self.controller.k_r {
            push("controller.k_r", fmt_num(k));
        }
        push("controller.rate_gain", fmt_num(self.controller.rate_gain));
        push("limits.u_min", fmt_num(self.u_min));
        push("limits.u_max", fmt_num(self.u_max));
        push("timing.dt", fmt_num(self.dt));
        push("timing.t_end", fmt_num(self.t_end));
        push("timing.transient", fmt_num(self.transient));
        let kind = match self.reference.kind {
            ReferenceKind::Sine => "sine",
            ReferenceKind::Step => "step",
            ReferenceKind::Constant => "constant",
        };
        push("reference.kind", kind.into());
        push("reference.amplitude", fmt_num(self.reference.amplitude));
        push("reference.frequency", fmt_num(self.reference.frequency));
        push("reference.offset", fmt_num(self.reference.offset));
        push("reference.step_time", fmt_num(self.reference.step_time));
        push("reference.noise", fmt_num(self.reference.noise));
        out
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = value.parse().map_err(|_| ConfigError::new(key, format!("expected a number, got '{value}'")))?;
    if !v.is_finite() {
        return Err(ConfigError::new(key, "must be finite"));
    }
    Ok(v)
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value.split(',').map(|s| parse_f64(key, s.trim())).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::new(key, format!("expected true/false, got '{value}'"))),
    }
}

fn build_barriers(keys: &BTreeMap<usize, BTreeMap<String, (String, String)>>) -> Result<Vec<BarrierConfig>, ConfigError> {
    let mut out = Vec::new();
    for (expected, (n, fields)) in (1..).zip(keys) {
        if *n != expected {
            return Err(ConfigError::new(format!("barrier.{expected}"), "barrier indices must be contiguous from 1"));
        }
        let kind = fields
            .get("kind")
            .ok_or_else(|| ConfigError::new(format!("barrier.{n}.kind"), "missing"))?;
        let kind: BarrierKind = kind.1.parse().map_err(|e: String| ConfigError::new(&kind.0, e))?;
        let limit = fields
            .get("limit")
            .ok_or_else(|| ConfigError::new(format!("barrier.{n}.limit"), "missing"))
            .and_then(|(k, v)| parse_f64(k, v))?;
        let gamma = match fields.get("gamma") {
            Some((k, v)) => parse_f64(k, v)?,
            None => 2.0,
        };
        if let Some(extra) = fields.keys().find(|f| !matches!(f.as_str(), "kind" | "limit" | "gamma")) {
            return Err(ConfigError::new(format!("barrier.{n}.{extra}"), "unknown key"));
        }
        out.push(BarrierConfig { kind, limit, gamma });
    }
    Ok(out)
}
